//! Correlation power analysis against AES-128.
//!
//! Every hypothesis for key byte `j` depends on the trace only through one
//! input byte (the plaintext byte for the round-0 model, the ciphertext byte
//! for the round-10 models). Traces are therefore streamed once into 256
//! moment buckets per (key byte, sample); the 4096 correlation accumulators
//! are then assembled by merging those buckets, each tagged with its constant
//! hypothesis value. The result equals streaming every (hypothesis, sample)
//! pair through a [`CorrAccumulator`].
//!
//! Traces are cut into fixed-size chunks and the chunk partials are combined
//! with [`tree_merge`], so reports are bitwise identical for any worker count.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aes_model::{
    expand_key, invert_key_schedule, Block, INV_SBOX, INV_SHIFT_ROWS, SHIFT_ROWS,
};
use crate::stats_core::{pearson, tree_merge, CorrAccumulator, MomentAccumulator, StatsError};
use crate::trace_store::{TraceRecord, TraceSet};

/// Traces per partial accumulation. Fixed so results do not depend on the
/// thread count.
pub const CHUNK_TRACES: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LeakModel {
    /// HW of the round-0 AddRoundKey output; targets the master key.
    #[serde(rename = "rd0-hw")]
    Rd0HW,
    /// HW of the round-10 SubBytes input; targets the round-10 key.
    #[serde(rename = "rd10-hw")]
    Rd10HW,
    /// HD between the round-10 SubBytes input and the ciphertext; targets the round-10 key.
    #[serde(rename = "rd10-hd")]
    Rd10HD,
}

impl LeakModel {
    pub const ALL: [LeakModel; 3] = [Self::Rd0HW, Self::Rd10HW, Self::Rd10HD];

    pub fn name(self) -> &'static str {
        match self {
            Self::Rd0HW => "rd0-hw",
            Self::Rd10HW => "rd10-hw",
            Self::Rd10HD => "rd10-hd",
        }
    }

    pub fn targets_last_round(self) -> bool {
        !matches!(self, Self::Rd0HW)
    }

    /// The key the model's guesses are ranked against.
    pub fn target_key(self, master: &Block) -> Block {
        if self.targets_last_round() {
            expand_key(master).last()
        } else {
            *master
        }
    }

    /// The trace byte that key byte `key_byte` is combined with.
    fn input_byte(self, rec: &TraceRecord, key_byte: usize) -> u8 {
        match self {
            Self::Rd0HW => rec.plaintext.0[key_byte],
            Self::Rd10HW | Self::Rd10HD => rec.ciphertext.0[key_byte],
        }
    }

    /// `table[v * 256 + g]` is the hypothesis for input byte `v` and guess `g`.
    fn table(self) -> Vec<f64> {
        let mut t = vec![0.0; 256 * 256];
        for v in 0..256usize {
            for g in 0..256usize {
                let x = (v ^ g) as u8;
                let h = match self {
                    Self::Rd0HW => x.count_ones(),
                    Self::Rd10HW => INV_SBOX[x as usize].count_ones(),
                    Self::Rd10HD => (INV_SBOX[x as usize] ^ v as u8).count_ones(),
                };
                t[v * 256 + g] = h as f64;
            }
        }
        t
    }
}

impl fmt::Display for LeakModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LeakModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "rd0-hw" | "rd0hw" => Ok(Self::Rd0HW),
            "rd10-hw" | "rd10hw" => Ok(Self::Rd10HW),
            "rd10-hd" | "rd10hd" => Ok(Self::Rd10HD),
            other => Err(format!(
                "unknown model '{other}' (expected rd0-hw, rd10-hw or rd10-hd)"
            )),
        }
    }
}

/// Hypothetical leakage of state byte `byte_index` under key guess `guess`.
///
/// For the round-10 models the state byte lands on ciphertext position
/// `s = SHIFT_ROWS[byte_index]` and `guess` stands for round-10 key byte `s`.
pub fn hypothesis(model: LeakModel, pt: &Block, ct: &Block, byte_index: usize, guess: u8) -> u32 {
    assert!(byte_index < 16, "byte_index out of range");
    match model {
        LeakModel::Rd0HW => (pt.0[byte_index] ^ guess).count_ones(),
        LeakModel::Rd10HW => {
            let c = ct.0[SHIFT_ROWS[byte_index]];
            INV_SBOX[(c ^ guess) as usize].count_ones()
        }
        LeakModel::Rd10HD => {
            let c = ct.0[SHIFT_ROWS[byte_index]];
            (INV_SBOX[(c ^ guess) as usize] ^ c).count_ones()
        }
    }
}

/// State byte whose hypothesis is ranked against key byte `key_byte`.
pub fn state_byte_for_key_byte(model: LeakModel, key_byte: usize) -> usize {
    if model.targets_last_round() {
        INV_SHIFT_ROWS[key_byte]
    } else {
        key_byte
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CpaError {
    #[error("trace set is empty")]
    EmptyTraceSet,
    #[error("rank {0} outside 1..=256")]
    RankOutOfRange(u32),
    #[error("expected 16 ranks, got {0}")]
    WrongRankCount(usize),
    #[error("step must be between 1 and the trace count")]
    InvalidStep,
    #[error("records disagree on samples per trace")]
    SampleCountMismatch,
    #[error("traces carry no samples")]
    NoSamples,
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Guessing entropy as the sum over key bytes of log2(rank); 0 means every
/// byte ranked first.
pub fn compute_ge(ranks: &[u32]) -> Result<f64, CpaError> {
    if ranks.len() != 16 {
        return Err(CpaError::WrongRankCount(ranks.len()));
    }
    ranks.iter().try_fold(0.0, |acc, &r| {
        if !(1..=256).contains(&r) {
            return Err(CpaError::RankOutOfRange(r));
        }
        Ok(acc + (r as f64).log2())
    })
}

/// 1 + guesses with strictly higher score + lower-valued guesses with equal score.
pub fn rank_of(scores: &[f64; 256], true_byte: u8) -> u32 {
    let target = scores[true_byte as usize];
    let mut rank = 1;
    for (g, &s) in scores.iter().enumerate() {
        if s > target || (s == target && g < true_byte as usize) {
            rank += 1;
        }
    }
    rank
}

/// Highest-scoring guess, lowest value on ties.
pub fn best_guess(scores: &[f64; 256]) -> u8 {
    let mut best = 0usize;
    for g in 1..256 {
        if scores[g] > scores[best] {
            best = g;
        }
    }
    best as u8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpaReport {
    pub model: LeakModel,
    pub channel: String,
    /// `corr[j][g]`: max over samples of the signed r for key byte `j`, guess `g`.
    /// Rows follow the targeted key's byte order.
    #[serde(with = "corr_rows")]
    pub corr: Vec<[f64; 256]>,
    /// Rank of the true targeted key byte, when the key is known.
    pub ranks: Option<[u32; 16]>,
    pub guessing_entropy: Option<f64>,
    /// Argmax guess per byte, in the targeted key space.
    pub recovered_key_bytes: Block,
    /// Master key implied by `recovered_key_bytes`.
    pub recovered_master_key: Block,
    pub n_traces_used: usize,
}

impl CpaReport {
    pub fn fully_recovered(&self) -> Option<bool> {
        self.guessing_entropy.map(|ge| ge == 0.0)
    }

    pub fn to_text(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "channel: {}   model: {}   traces: {}",
            self.channel, self.model, self.n_traces_used
        );
        let target = if self.model.targets_last_round() {
            "round-10 key"
        } else {
            "master key"
        };
        let _ = writeln!(
            s,
            "{:>4}  {:>5}  {:>5}  {:>8}",
            "byte", "guess", "rank", "r"
        );
        for j in 0..16 {
            let g = self.recovered_key_bytes.0[j];
            let rank = self
                .ranks
                .map_or_else(|| "-".to_string(), |r| r[j].to_string());
            let _ = writeln!(
                s,
                "{j:>4}  {:>5}  {rank:>5}  {:>8.5}",
                format!("{g:02x}"),
                self.corr[j][g as usize]
            );
        }
        if let Some(ge) = self.guessing_entropy {
            let _ = writeln!(s, "GE: {ge:.1}");
        }
        let _ = writeln!(s, "recovered {target}: {}", self.recovered_key_bytes);
        if self.model.targets_last_round() {
            let _ = writeln!(s, "implied master key: {}", self.recovered_master_key);
        }
        if let Some(ok) = self.fully_recovered() {
            let _ = writeln!(s, "full key recovery: {}", if ok { "yes" } else { "no" });
        }
        s
    }
}

mod corr_rows {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(rows: &[[f64; 256]], s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<&[f64]> = rows.iter().map(|r| &r[..]).collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<[f64; 256]>, D::Error> {
        let v: Vec<Vec<f64>> = Vec::deserialize(d)?;
        v.into_iter()
            .map(|r| {
                r.try_into()
                    .map_err(|_| serde::de::Error::custom("correlation row must have 256 entries"))
            })
            .collect()
    }
}

/// Per (key byte, sample, input byte value) moments of the leakage samples.
#[derive(Clone)]
struct Buckets {
    spt: usize,
    acc: Vec<MomentAccumulator>,
}

impl Buckets {
    fn new(spt: usize) -> Self {
        Self {
            spt,
            acc: vec![MomentAccumulator::new(); 16 * spt * 256],
        }
    }

    fn slot(&self, key_byte: usize, sample: usize) -> &[MomentAccumulator] {
        let base = (key_byte * self.spt + sample) * 256;
        &self.acc[base..base + 256]
    }

    fn add(&mut self, model: LeakModel, rec: &TraceRecord) -> Result<(), StatsError> {
        for j in 0..16 {
            let v = model.input_byte(rec, j) as usize;
            for (k, &s) in rec.samples.iter().enumerate() {
                self.acc[(j * self.spt + k) * 256 + v].push(s)?;
            }
        }
        Ok(())
    }

    fn merge(&self, other: &Self) -> Self {
        Self {
            spt: self.spt,
            acc: self
                .acc
                .iter()
                .zip(&other.acc)
                .map(|(a, b)| a.merge(b))
                .collect(),
        }
    }

    fn n(&self) -> u64 {
        if self.spt == 0 {
            return 0;
        }
        self.slot(0, 0).iter().map(|a| a.n()).sum()
    }
}

fn accumulate(records: &[TraceRecord], model: LeakModel, spt: usize) -> Result<Buckets, CpaError> {
    let parts: Vec<Buckets> = records
        .par_chunks(CHUNK_TRACES)
        .map(|chunk| {
            let mut b = Buckets::new(spt);
            for r in chunk {
                if r.samples.len() != spt {
                    return Err(CpaError::SampleCountMismatch);
                }
                b.add(model, r)?;
            }
            Ok(b)
        })
        .collect::<Result<_, CpaError>>()?;
    Ok(tree_merge(parts, Buckets::merge).unwrap_or_else(|| Buckets::new(spt)))
}

/// Pairwise in-place fold of the 256 bucket accumulators, same order as `tree_merge`.
fn fold_256(buf: &mut [CorrAccumulator; 256]) -> CorrAccumulator {
    let mut len = 256;
    while len > 1 {
        for i in 0..len / 2 {
            buf[i] = buf[2 * i].merge(&buf[2 * i + 1]);
        }
        len /= 2;
    }
    buf[0]
}

fn correlations(buckets: &Buckets, model: LeakModel) -> Vec<[f64; 256]> {
    let table = model.table();
    (0..16)
        .into_par_iter()
        .map(|j| {
            let mut row = [f64::NEG_INFINITY; 256];
            let mut buf = [CorrAccumulator::new(); 256];
            for (g, score) in row.iter_mut().enumerate() {
                for k in 0..buckets.spt {
                    let slot = buckets.slot(j, k);
                    for (v, m) in slot.iter().enumerate() {
                        buf[v] = CorrAccumulator::from_constant_x(table[v * 256 + g], m);
                    }
                    // constant hypotheses and constant traces score 0
                    let r = pearson(&fold_256(&mut buf)).unwrap_or(0.0);
                    if r > *score {
                        *score = r;
                    }
                }
            }
            row
        })
        .collect()
}

fn finish(
    buckets: &Buckets,
    model: LeakModel,
    channel: &str,
    true_key: Option<&Block>,
) -> Result<CpaReport, CpaError> {
    let corr = correlations(buckets, model);
    let mut recovered = [0u8; 16];
    for (j, row) in corr.iter().enumerate() {
        recovered[j] = best_guess(row);
    }
    let recovered = Block(recovered);
    let ranks = true_key.map(|k| {
        let target = model.target_key(k);
        let mut ranks = [0u32; 16];
        for (j, r) in ranks.iter_mut().enumerate() {
            *r = rank_of(&corr[j], target.0[j]);
        }
        ranks
    });
    let guessing_entropy = ranks.map(|r| compute_ge(&r)).transpose()?;
    let recovered_master_key = if model.targets_last_round() {
        invert_key_schedule(&recovered)
    } else {
        recovered
    };
    Ok(CpaReport {
        model,
        channel: channel.to_string(),
        corr,
        ranks,
        guessing_entropy,
        recovered_key_bytes: recovered,
        recovered_master_key,
        n_traces_used: buckets.n() as usize,
    })
}

/// Runs CPA over all traces. `true_key` is the master key; the round-10
/// models rank against its expanded last round key.
pub fn run_cpa(
    ts: &TraceSet,
    model: LeakModel,
    true_key: Option<&Block>,
) -> Result<CpaReport, CpaError> {
    if ts.is_empty() {
        return Err(CpaError::EmptyTraceSet);
    }
    let spt = ts.samples_per_trace();
    if spt == 0 {
        return Err(CpaError::NoSamples);
    }
    let buckets = accumulate(&ts.records, model, spt)?;
    finish(&buckets, model, &ts.channel_name, true_key)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GePoint {
    pub n_traces: usize,
    pub ge: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GeCurve {
    pub points: Vec<GePoint>,
}

impl GeCurve {
    pub fn final_ge(&self) -> Option<f64> {
        self.points.last().map(|p| p.ge)
    }

    /// Smallest trace count from which the curve stays at 0.
    pub fn converged_at(&self) -> Option<usize> {
        let mut at = None;
        for p in &self.points {
            if p.ge == 0.0 {
                at.get_or_insert(p.n_traces);
            } else {
                at = None;
            }
        }
        at
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["n_traces", "ge"])?;
        for p in &self.points {
            out.write_record([p.n_traces.to_string(), format!("{:?}", p.ge)])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// GE after `step`, `2 * step`, ... traces (plus the full set when its length
/// is not a multiple of `step`), from a single pass over the traces.
pub fn ge_curve(
    ts: &TraceSet,
    model: LeakModel,
    true_key: &Block,
    step: usize,
) -> Result<GeCurve, CpaError> {
    if ts.is_empty() {
        return Err(CpaError::EmptyTraceSet);
    }
    if step == 0 || step > ts.len() {
        return Err(CpaError::InvalidStep);
    }
    let spt = ts.samples_per_trace();
    if spt == 0 {
        return Err(CpaError::NoSamples);
    }
    let mut running = Buckets::new(spt);
    let mut points = Vec::new();
    for segment in ts.records.chunks(step) {
        let part = accumulate(segment, model, spt)?;
        running = running.merge(&part);
        let rep = finish(&running, model, &ts.channel_name, Some(true_key))?;
        points.push(GePoint {
            n_traces: rep.n_traces_used,
            ge: rep.guessing_entropy.expect("key supplied"),
        });
    }
    Ok(GeCurve { points })
}
