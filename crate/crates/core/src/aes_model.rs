//! Bit-exact AES-128 with the round intermediates the power models target.
//!
//! The state uses the FIPS-197 column-major layout everywhere: byte `i` of a
//! [`Block`] is row `i % 4`, column `i / 4`. This is an analysis oracle, so
//! table lookups are used freely and nothing here is constant time.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub const SBOX: [u8; 256] = [
    0x63, 0x7c, 0x77, 0x7b, 0xf2, 0x6b, 0x6f, 0xc5, 0x30, 0x01, 0x67, 0x2b, 0xfe, 0xd7, 0xab, 0x76,
    0xca, 0x82, 0xc9, 0x7d, 0xfa, 0x59, 0x47, 0xf0, 0xad, 0xd4, 0xa2, 0xaf, 0x9c, 0xa4, 0x72, 0xc0,
    0xb7, 0xfd, 0x93, 0x26, 0x36, 0x3f, 0xf7, 0xcc, 0x34, 0xa5, 0xe5, 0xf1, 0x71, 0xd8, 0x31, 0x15,
    0x04, 0xc7, 0x23, 0xc3, 0x18, 0x96, 0x05, 0x9a, 0x07, 0x12, 0x80, 0xe2, 0xeb, 0x27, 0xb2, 0x75,
    0x09, 0x83, 0x2c, 0x1a, 0x1b, 0x6e, 0x5a, 0xa0, 0x52, 0x3b, 0xd6, 0xb3, 0x29, 0xe3, 0x2f, 0x84,
    0x53, 0xd1, 0x00, 0xed, 0x20, 0xfc, 0xb1, 0x5b, 0x6a, 0xcb, 0xbe, 0x39, 0x4a, 0x4c, 0x58, 0xcf,
    0xd0, 0xef, 0xaa, 0xfb, 0x43, 0x4d, 0x33, 0x85, 0x45, 0xf9, 0x02, 0x7f, 0x50, 0x3c, 0x9f, 0xa8,
    0x51, 0xa3, 0x40, 0x8f, 0x92, 0x9d, 0x38, 0xf5, 0xbc, 0xb6, 0xda, 0x21, 0x10, 0xff, 0xf3, 0xd2,
    0xcd, 0x0c, 0x13, 0xec, 0x5f, 0x97, 0x44, 0x17, 0xc4, 0xa7, 0x7e, 0x3d, 0x64, 0x5d, 0x19, 0x73,
    0x60, 0x81, 0x4f, 0xdc, 0x22, 0x2a, 0x90, 0x88, 0x46, 0xee, 0xb8, 0x14, 0xde, 0x5e, 0x0b, 0xdb,
    0xe0, 0x32, 0x3a, 0x0a, 0x49, 0x06, 0x24, 0x5c, 0xc2, 0xd3, 0xac, 0x62, 0x91, 0x95, 0xe4, 0x79,
    0xe7, 0xc8, 0x37, 0x6d, 0x8d, 0xd5, 0x4e, 0xa9, 0x6c, 0x56, 0xf4, 0xea, 0x65, 0x7a, 0xae, 0x08,
    0xba, 0x78, 0x25, 0x2e, 0x1c, 0xa6, 0xb4, 0xc6, 0xe8, 0xdd, 0x74, 0x1f, 0x4b, 0xbd, 0x8b, 0x8a,
    0x70, 0x3e, 0xb5, 0x66, 0x48, 0x03, 0xf6, 0x0e, 0x61, 0x35, 0x57, 0xb9, 0x86, 0xc1, 0x1d, 0x9e,
    0xe1, 0xf8, 0x98, 0x11, 0x69, 0xd9, 0x8e, 0x94, 0x9b, 0x1e, 0x87, 0xe9, 0xce, 0x55, 0x28, 0xdf,
    0x8c, 0xa1, 0x89, 0x0d, 0xbf, 0xe6, 0x42, 0x68, 0x41, 0x99, 0x2d, 0x0f, 0xb0, 0x54, 0xbb, 0x16,
];

pub const INV_SBOX: [u8; 256] = invert_sbox();

const fn invert_sbox() -> [u8; 256] {
    let mut inv = [0u8; 256];
    let mut i = 0;
    while i < 256 {
        inv[SBOX[i] as usize] = i as u8;
        i += 1;
    }
    inv
}

/// `SHIFT_ROWS[b]` is the position that state byte `b` occupies after ShiftRows.
///
/// Row `r` rotates left by `r` columns, so `(r, c)` lands on `(r, c - r mod 4)`.
pub const SHIFT_ROWS: [usize; 16] = shift_rows_table();

/// Inverse of [`SHIFT_ROWS`]: the state byte that ends up at position `s`.
pub const INV_SHIFT_ROWS: [usize; 16] = invert_table(SHIFT_ROWS);

const fn shift_rows_table() -> [usize; 16] {
    let mut t = [0usize; 16];
    let mut b = 0;
    while b < 16 {
        let row = b % 4;
        let col = b / 4;
        t[b] = row + 4 * ((col + 4 - row) % 4);
        b += 1;
    }
    t
}

const fn invert_table(t: [usize; 16]) -> [usize; 16] {
    let mut inv = [0usize; 16];
    let mut i = 0;
    while i < 16 {
        inv[t[i]] = i;
        i += 1;
    }
    inv
}

const RCON: [u8; 10] = [0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1b, 0x36];

/// A 16-byte AES block (plaintext, ciphertext, key or state).
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Block(pub [u8; 16]);

impl Block {
    pub const ZERO: Block = Block([0u8; 16]);
    pub const ONES: Block = Block([0xffu8; 16]);

    pub fn bytes(&self) -> &[u8; 16] {
        &self.0
    }

    pub fn xor(&self, other: &Block) -> Block {
        let mut out = [0u8; 16];
        for (o, (a, b)) in out.iter_mut().zip(self.0.iter().zip(other.0.iter())) {
            *o = a ^ b;
        }
        Block(out)
    }

    /// Sum of the Hamming weights of all 16 bytes.
    pub fn hamming_weight(&self) -> u32 {
        self.0.iter().map(|b| b.count_ones()).sum()
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Block, BlockParseError> {
        let cleaned: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let bytes = hex::decode(&cleaned).map_err(|_| BlockParseError::NotHex)?;
        let arr: [u8; 16] = bytes
            .try_into()
            .map_err(|v: Vec<u8>| BlockParseError::WrongLength(v.len()))?;
        Ok(Block(arr))
    }
}

impl From<[u8; 16]> for Block {
    fn from(b: [u8; 16]) -> Self {
        Block(b)
    }
}

impl fmt::Debug for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Block({})", self.to_hex())
    }
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl FromStr for Block {
    type Err = BlockParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Block::from_hex(s)
    }
}

impl Serialize for Block {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Block {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Block::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BlockParseError {
    #[error("block is not valid hex")]
    NotHex,
    #[error("block must be 16 bytes (32 hex characters), got {0} bytes")]
    WrongLength(usize),
}

/// The eleven AES-128 round keys; `keys[0]` is the master key.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct RoundKeys {
    pub keys: [Block; 11],
}

impl RoundKeys {
    pub fn master(&self) -> Block {
        self.keys[0]
    }

    pub fn last(&self) -> Block {
        self.keys[10]
    }
}

/// Every state the power models hypothesize over, recorded during one encryption.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct IntermediateTrace {
    /// `state_after_addroundkey[r]` is the state right after round `r`'s AddRoundKey.
    /// Entry 0 is `plaintext ^ keys[0]`, entry 10 is the ciphertext.
    pub state_after_addroundkey: [Block; 11],
    /// `state_before_subbytes[r]` is the SubBytes input of round `r` (1..=10).
    /// Entry 0 is unused and left zero.
    pub state_before_subbytes: [Block; 11],
    pub ciphertext: Block,
}

fn rot_sub_word(w: [u8; 4]) -> [u8; 4] {
    [
        SBOX[w[1] as usize],
        SBOX[w[2] as usize],
        SBOX[w[3] as usize],
        SBOX[w[0] as usize],
    ]
}

fn next_round_key(prev: &Block, rcon: u8) -> Block {
    let p = &prev.0;
    let mut out = [0u8; 16];
    let t = rot_sub_word([p[12], p[13], p[14], p[15]]);
    out[0] = p[0] ^ t[0] ^ rcon;
    out[1] = p[1] ^ t[1];
    out[2] = p[2] ^ t[2];
    out[3] = p[3] ^ t[3];
    for i in 4..16 {
        out[i] = p[i] ^ out[i - 4];
    }
    Block(out)
}

fn prev_round_key(next: &Block, rcon: u8) -> Block {
    let n = &next.0;
    let mut out = [0u8; 16];
    // words 1..3 of the previous key fall out of the XOR chain directly
    for i in 4..16 {
        out[i] = n[i] ^ n[i - 4];
    }
    let t = rot_sub_word([out[12], out[13], out[14], out[15]]);
    out[0] = n[0] ^ t[0] ^ rcon;
    out[1] = n[1] ^ t[1];
    out[2] = n[2] ^ t[2];
    out[3] = n[3] ^ t[3];
    Block(out)
}

/// Runs the AES-128 key schedule.
pub fn expand_key(master_key: &Block) -> RoundKeys {
    let mut keys = [Block::ZERO; 11];
    keys[0] = *master_key;
    for r in 0..10 {
        keys[r + 1] = next_round_key(&keys[r], RCON[r]);
    }
    RoundKeys { keys }
}

/// Walks the key schedule backwards from the round-10 key to the master key.
pub fn invert_key_schedule(round10_key: &Block) -> Block {
    let mut k = *round10_key;
    for r in (0..10).rev() {
        k = prev_round_key(&k, RCON[r]);
    }
    k
}

fn xtime(b: u8) -> u8 {
    (b << 1) ^ if b & 0x80 != 0 { 0x1b } else { 0 }
}

fn sub_bytes(s: &mut [u8; 16]) {
    for b in s.iter_mut() {
        *b = SBOX[*b as usize];
    }
}

fn shift_rows(s: &mut [u8; 16]) {
    let src = *s;
    for (b, &dst) in SHIFT_ROWS.iter().enumerate() {
        s[dst] = src[b];
    }
}

fn mix_columns(s: &mut [u8; 16]) {
    for col in s.chunks_exact_mut(4) {
        let [a0, a1, a2, a3] = [col[0], col[1], col[2], col[3]];
        let all = a0 ^ a1 ^ a2 ^ a3;
        col[0] = a0 ^ all ^ xtime(a0 ^ a1);
        col[1] = a1 ^ all ^ xtime(a1 ^ a2);
        col[2] = a2 ^ all ^ xtime(a2 ^ a3);
        col[3] = a3 ^ all ^ xtime(a3 ^ a0);
    }
}

fn add_round_key(s: &mut [u8; 16], k: &Block) {
    for (b, kb) in s.iter_mut().zip(k.0.iter()) {
        *b ^= kb;
    }
}

/// Encrypts with an already expanded key schedule.
pub fn encrypt_with_schedule(plaintext: &Block, rk: &RoundKeys) -> (Block, IntermediateTrace) {
    let mut after_ark = [Block::ZERO; 11];
    let mut before_sb = [Block::ZERO; 11];
    let mut s = plaintext.0;
    add_round_key(&mut s, &rk.keys[0]);
    after_ark[0] = Block(s);
    for round in 1..=10 {
        before_sb[round] = Block(s);
        sub_bytes(&mut s);
        shift_rows(&mut s);
        if round != 10 {
            mix_columns(&mut s);
        }
        add_round_key(&mut s, &rk.keys[round]);
        after_ark[round] = Block(s);
    }
    let ct = Block(s);
    (
        ct,
        IntermediateTrace {
            state_after_addroundkey: after_ark,
            state_before_subbytes: before_sb,
            ciphertext: ct,
        },
    )
}

/// FIPS-197 AES-128 encryption returning the ciphertext and all round states.
pub fn encrypt_block(plaintext: &Block, key: &Block) -> (Block, IntermediateTrace) {
    encrypt_with_schedule(plaintext, &expand_key(key))
}

pub fn hamming_weight(v: u8) -> u32 {
    v.count_ones()
}

pub fn hamming_distance(a: u8, b: u8) -> u32 {
    (a ^ b).count_ones()
}
