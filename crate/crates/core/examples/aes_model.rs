//! Encrypts the FIPS-197 example block, prints the intermediate states the
//! leakage models read, and recovers the master key from the last round key.
//!
//! cargo run --example aes_model

use telescp::aes_model::{encrypt_block, expand_key, invert_key_schedule, Block};

fn main() {
    let key = Block::from_hex("2b7e151628aed2a6abf7158809cf4f3c").unwrap();
    let pt = Block::from_hex("3243f6a8885a308d313198a2e0370734").unwrap();
    let (ct, trace) = encrypt_block(&pt, &key);

    println!("plaintext            {pt}");
    println!("key                  {key}");
    println!("round 0 AddRoundKey  {}", trace.state_after_addroundkey[0]);
    println!("round 10 SubBytes in {}", trace.state_before_subbytes[10]);
    println!("ciphertext           {ct}");

    let k10 = expand_key(&key).last();
    println!("round-10 key         {k10}");
    println!("inverted schedule    {}", invert_key_schedule(&k10));
}
