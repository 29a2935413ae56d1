//! Synthetic power telemetry with Hamming-weight leakage.
//!
//! A sample is
//!
//! ```text
//! quantize(baseline
//!          + replicas * (leak_coeff_rd0  * HW(round-0 AddRoundKey output)
//!                      + leak_coeff_rd10 * HW(round-10 SubBytes input))
//!          + N(0, noise_sigma^2),
//!          quant_step)
//! ```
//!
//! where HW sums over all 16 state bytes and quantization rounds to the
//! nearest multiple of `quant_step`, ties to even.
//!
//! Randomness is ChaCha8 keyed by `(seed, domain)` with the ChaCha stream id set
//! to the trace index, so trace `i` depends only on `(seed, i)` and campaigns
//! come out bit-identical however the work is scheduled.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aes_model::{encrypt_with_schedule, expand_key, Block, IntermediateTrace, RoundKeys};
use crate::trace_store::{PlaintextClass, TraceRecord, TraceSet};

/// Bumped whenever a built-in preset changes.
pub const PRESET_TABLE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("profile field `{0}` is not finite")]
    NonFinite(&'static str),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("invalid mitigation: {0}")]
    InvalidMitigation(String),
    #[error("invalid throttle input: {0}")]
    InvalidThrottle(String),
    #[error("n_traces must be at least 1")]
    NoTraces,
    #[error("profile JSON: {0}")]
    Json(String),
}

/// A simulated telemetry channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelProfile {
    pub name: String,
    /// Power units per Hamming-weight unit of the round-0 AddRoundKey output.
    pub leak_coeff_rd0: f64,
    /// Power units per Hamming-weight unit of the round-10 SubBytes input.
    pub leak_coeff_rd10: f64,
    pub baseline: f64,
    pub noise_sigma: f64,
    /// Reporting resolution.
    pub quant_step: f64,
    pub update_interval_s: f64,
    /// Concurrent victim copies processing the same input.
    pub replicas: u32,
    pub samples_per_trace: u32,
}

impl ChannelProfile {
    pub fn validate(&self) -> Result<(), SimError> {
        for (field, v) in [
            ("leak_coeff_rd0", self.leak_coeff_rd0),
            ("leak_coeff_rd10", self.leak_coeff_rd10),
            ("baseline", self.baseline),
            ("noise_sigma", self.noise_sigma),
            ("quant_step", self.quant_step),
            ("update_interval_s", self.update_interval_s),
        ] {
            if !v.is_finite() {
                return Err(SimError::NonFinite(field));
            }
        }
        if self.noise_sigma < 0.0 {
            return Err(SimError::InvalidProfile("noise_sigma must be >= 0".into()));
        }
        if self.quant_step <= 0.0 {
            return Err(SimError::InvalidProfile("quant_step must be > 0".into()));
        }
        if self.update_interval_s <= 0.0 {
            return Err(SimError::InvalidProfile(
                "update_interval_s must be > 0".into(),
            ));
        }
        if self.replicas < 1 {
            return Err(SimError::InvalidProfile("replicas must be >= 1".into()));
        }
        if self.samples_per_trace < 1 {
            return Err(SimError::InvalidProfile(
                "samples_per_trace must be >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self, SimError> {
        let p: ChannelProfile =
            serde_json::from_str(s).map_err(|e| SimError::Json(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes")
    }

    /// Standard deviation of the data-dependent term under uniformly random
    /// plaintexts (each 128-bit Hamming weight has variance 32).
    pub fn leakage_amplitude(&self) -> f64 {
        let per_copy = (32.0 * (self.leak_coeff_rd0.powi(2) + self.leak_coeff_rd10.powi(2))).sqrt();
        self.replicas as f64 * per_copy
    }

    /// Same channel observed from a single-threaded kernel victim: one replica
    /// and noise scaled by sqrt(2), i.e. half the SNR.
    pub fn kernel_victim(&self) -> ChannelProfile {
        ChannelProfile {
            name: format!("{}-kernel", self.name),
            noise_sigma: self.noise_sigma * std::f64::consts::SQRT_2,
            replicas: 1,
            ..self.clone()
        }
    }

    pub fn with_noise(&self, noise_sigma: f64) -> ChannelProfile {
        ChannelProfile {
            noise_sigma,
            ..self.clone()
        }
    }

    pub fn with_quant_step(&self, quant_step: f64) -> ChannelProfile {
        ChannelProfile {
            quant_step,
            ..self.clone()
        }
    }
}

/// Names accepted by [`preset`].
pub const PRESET_NAMES: [&str; 7] = [
    "phpc-like",
    "pdtr-like",
    "pmvc-like",
    "pstr-like",
    "phps-like",
    "phpc-kernel-like",
    "pcpu-energy-like",
];

/// Built-in channel presets. Values are in watts; `quant_step` 1e-6 is the
/// microwatt-resolution reporting of the strongest channels.
///
/// These are simulation knobs that qualitatively reproduce which channels
/// leak, not measurements of any real sensor.
pub fn preset(name: &str) -> Option<ChannelProfile> {
    let base = |name: &str, c0: f64, c10: f64, baseline: f64, noise: f64, q: f64| ChannelProfile {
        name: name.to_string(),
        leak_coeff_rd0: c0,
        leak_coeff_rd10: c10,
        baseline,
        noise_sigma: noise,
        quant_step: q,
        update_interval_s: 1.0,
        replicas: 3,
        samples_per_trace: 1,
    };
    let p = match name.to_ascii_lowercase().as_str() {
        "phpc-like" => base("PHPC-like", 0.6e-6, 0.3e-6, 1.5, 10e-6, 1e-6),
        "pdtr-like" => base("PDTR-like", 0.2e-6, 0.1e-6, 2.0, 30e-6, 1e-6),
        "pmvc-like" => base("PMVC-like", 0.15e-6, 0.1e-6, 0.8, 30e-6, 1e-6),
        // Small coefficient under coarse reporting: the leak survives as a
        // mean shift but aliases badly per trace.
        "pstr-like" => base("PSTR-like", 0.08e-6, 0.0, 3.0, 4e-6, 25e-6),
        "phps-like" => base("PHPS-like", 0.0, 0.0, 4.2, 10e-6, 1e-6),
        "phpc-kernel-like" => preset("phpc-like")?.kernel_victim(),
        // PHPC-like leakage behind millijoule-per-second (milliwatt) reporting.
        "pcpu-energy-like" => ChannelProfile {
            name: "PCPU-energy-like".into(),
            ..preset("phpc-like")?.with_quant_step(1e-3)
        },
        _ => return None,
    };
    Some(p)
}

/// Rounds to the nearest multiple of `step`, ties to even.
pub fn quantize(value: f64, step: f64) -> f64 {
    (value / step).round_ties_even() * step
}

const DOMAIN_NOISE: u64 = 0x6e6f_6973_6521_0001;
const DOMAIN_PLAINTEXT: u64 = 0x7074_6578_7421_0002;
const DOMAIN_MITIGATION: u64 = 0x6d69_7469_6721_0003;

/// ChaCha8 keyed by `(seed, domain)`, positioned on stream `stream`.
pub fn stream_rng(seed: u64, domain: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

/// Derives an independent seed from `seed` and a small tag, for runs that
/// need several unrelated noise sequences from one user seed.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    const DOMAIN_DERIVE: u64 = 0x6465_7269_7665_0004;
    stream_rng(seed, DOMAIN_DERIVE, tag).random::<u64>()
}

fn gaussian<R: Rng>(rng: &mut R, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let z: f64 = rng.sample(StandardNormal);
    z * sigma
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorTrace {
    pub samples: Vec<f64>,
}

/// Noise-free reading for one encryption, before quantization.
pub fn leakage_mean(it: &IntermediateTrace, profile: &ChannelProfile) -> f64 {
    let hw0 = it.state_after_addroundkey[0].hamming_weight() as f64;
    let hw10 = it.state_before_subbytes[10].hamming_weight() as f64;
    profile.baseline
        + profile.replicas as f64 * (profile.leak_coeff_rd0 * hw0 + profile.leak_coeff_rd10 * hw10)
}

fn sample_with<R: Rng>(it: &IntermediateTrace, profile: &ChannelProfile, rng: &mut R) -> Vec<f64> {
    let mean = leakage_mean(it, profile);
    (0..profile.samples_per_trace)
        .map(|_| {
            quantize(
                mean + gaussian(rng, profile.noise_sigma),
                profile.quant_step,
            )
        })
        .collect()
}

pub fn simulate_trace(
    pt: &Block,
    key: &Block,
    profile: &ChannelProfile,
    seed: u64,
) -> Result<SensorTrace, SimError> {
    profile.validate()?;
    let (_, it) = encrypt_with_schedule(pt, &expand_key(key));
    let mut rng = stream_rng(seed, DOMAIN_NOISE, 0);
    Ok(SensorTrace {
        samples: sample_with(&it, profile, &mut rng),
    })
}

/// Where campaign plaintexts come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlaintextSource {
    AllZeros,
    AllOnes,
    /// A fresh uniformly random plaintext per trace.
    Random(u64),
}

impl PlaintextSource {
    /// The source for `class`; random plaintexts are drawn from `seed`.
    pub fn for_class(class: PlaintextClass, seed: u64) -> Self {
        match class {
            PlaintextClass::AllZeros => Self::AllZeros,
            PlaintextClass::AllOnes => Self::AllOnes,
            PlaintextClass::Random => Self::Random(seed),
        }
    }

    pub fn class(&self) -> PlaintextClass {
        match self {
            Self::AllZeros => PlaintextClass::AllZeros,
            Self::AllOnes => PlaintextClass::AllOnes,
            Self::Random(_) => PlaintextClass::Random,
        }
    }

    pub fn plaintext(&self, index: u64) -> Block {
        match *self {
            Self::AllZeros => Block::ZERO,
            Self::AllOnes => Block::ONES,
            Self::Random(seed) => {
                let mut b = [0u8; 16];
                stream_rng(seed, DOMAIN_PLAINTEXT, index).fill(&mut b);
                Block(b)
            }
        }
    }
}

fn campaign_records<F>(
    source: PlaintextSource,
    rk: &RoundKeys,
    n_traces: usize,
    seed: u64,
    sample: F,
) -> Result<Vec<TraceRecord>, SimError>
where
    F: Fn(&IntermediateTrace, &mut ChaCha8Rng) -> Result<Vec<f64>, SimError> + Sync,
{
    (0..n_traces as u64)
        .into_par_iter()
        .map(|i| {
            let pt = source.plaintext(i);
            let (ct, it) = encrypt_with_schedule(&pt, rk);
            let mut rng = stream_rng(seed, DOMAIN_NOISE, i);
            Ok(TraceRecord {
                plaintext: pt,
                ciphertext: ct,
                samples: sample(&it, &mut rng)?,
            })
        })
        .collect()
}

/// Simulates `n_traces` encryptions under `key`. The returned set carries the
/// key and the plaintext class.
pub fn simulate_campaign(
    source: PlaintextSource,
    key: &Block,
    n_traces: usize,
    profile: &ChannelProfile,
    seed: u64,
) -> Result<TraceSet, SimError> {
    if n_traces == 0 {
        return Err(SimError::NoTraces);
    }
    profile.validate()?;
    let rk = expand_key(key);
    let records = campaign_records(source, &rk, n_traces, seed, |it, rng| {
        Ok(sample_with(it, profile, rng))
    })?;
    Ok(TraceSet {
        channel_name: profile.name.clone(),
        class_label: Some(source.class()),
        true_key: Some(*key),
        records,
    })
}

/// One campaign per class, as used for leakage assessment. Each class gets its
/// own noise seed derived from `seed`, so class groups never share noise draws.
pub fn simulate_class_groups(
    classes: &[PlaintextClass],
    key: &Block,
    n_traces: usize,
    profile: &ChannelProfile,
    seed: u64,
) -> Result<BTreeMap<PlaintextClass, TraceSet>, SimError> {
    classes
        .iter()
        .map(|&c| {
            let source = PlaintextSource::for_class(c, seed);
            let noise_seed = derive_seed(seed, c.code() as u64);
            Ok((
                c,
                simulate_campaign(source, key, n_traces, profile, noise_seed)?,
            ))
        })
        .collect()
}

/// Noise blending and coarser update interval applied after collection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MitigationSpec {
    pub extra_noise_sigma: f64,
    pub interval_multiplier: u32,
}

/// Averages each trace's samples over windows of `interval_multiplier`
/// (dropping a trailing partial window), then adds N(0, extra_noise_sigma^2)
/// to every emitted sample.
pub fn apply_mitigation(
    ts: &TraceSet,
    m: &MitigationSpec,
    seed: u64,
) -> Result<TraceSet, SimError> {
    if m.interval_multiplier < 1 {
        return Err(SimError::InvalidMitigation(
            "interval_multiplier must be >= 1".into(),
        ));
    }
    if !m.extra_noise_sigma.is_finite() || m.extra_noise_sigma < 0.0 {
        return Err(SimError::InvalidMitigation(
            "extra_noise_sigma must be finite and >= 0".into(),
        ));
    }
    let k = m.interval_multiplier as usize;
    let records = ts
        .records
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let mut rng = stream_rng(seed, DOMAIN_MITIGATION, i as u64);
            let samples = r
                .samples
                .chunks_exact(k)
                .map(|w| {
                    let avg = if k == 1 {
                        w[0]
                    } else {
                        w.iter().sum::<f64>() / k as f64
                    };
                    avg + gaussian(&mut rng, m.extra_noise_sigma)
                })
                .collect();
            TraceRecord {
                plaintext: r.plaintext,
                ciphertext: r.ciphertext,
                samples,
            }
        })
        .collect();
    Ok(TraceSet {
        records,
        ..ts.without_records()
    })
}

/// Which reading the power limiter reacts to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThrottleDriver {
    ActualPower,
    IndependentSensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThrottleSpec {
    pub power_limit: f64,
    pub f_max: f64,
    pub work_units: f64,
    pub driver: ThrottleDriver,
}

/// Name of the power/frequency relation used by [`throttle_transform`].
pub const THROTTLE_LAW: &str = "cubic: P proportional to f^3";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThrottleOutcome {
    pub frequency: f64,
    pub elapsed_time: f64,
}

/// Frequency and run time under a reactive power cap.
///
/// Power scales with the cube of frequency, so a driving power `p` above the
/// limit pulls the clock down to `f_max * (limit / p)^(1/3)`. Power exactly at
/// the limit does not throttle.
pub fn throttle_transform(
    demand_power: f64,
    spec: &ThrottleSpec,
    sensor_reading: f64,
) -> Result<ThrottleOutcome, SimError> {
    for (what, v) in [
        ("demand_power", demand_power),
        ("power_limit", spec.power_limit),
        ("f_max", spec.f_max),
        ("work_units", spec.work_units),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(SimError::InvalidThrottle(format!(
                "{what} must be finite and > 0"
            )));
        }
    }
    let driving = match spec.driver {
        ThrottleDriver::ActualPower => demand_power,
        ThrottleDriver::IndependentSensor => {
            if !(sensor_reading.is_finite() && sensor_reading > 0.0) {
                return Err(SimError::InvalidThrottle(
                    "sensor_reading must be finite and > 0".into(),
                ));
            }
            sensor_reading
        }
    };
    let frequency = if driving <= spec.power_limit {
        spec.f_max
    } else {
        spec.f_max * (spec.power_limit / driving).cbrt()
    };
    Ok(ThrottleOutcome {
        frequency,
        elapsed_time: spec.work_units / frequency,
    })
}

/// A campaign whose single sample per trace is the victim's elapsed time under
/// throttling. `power` models the package's actual draw and `sensor` the
/// reading the limiter may rely on instead.
pub fn simulate_timing_campaign(
    source: PlaintextSource,
    key: &Block,
    n_traces: usize,
    power: &ChannelProfile,
    sensor: &ChannelProfile,
    spec: &ThrottleSpec,
    seed: u64,
) -> Result<TraceSet, SimError> {
    if n_traces == 0 {
        return Err(SimError::NoTraces);
    }
    power.validate()?;
    sensor.validate()?;
    let rk = expand_key(key);
    let records = campaign_records(source, &rk, n_traces, seed, |it, rng| {
        let demand = sample_with(it, power, rng)[0];
        let reading = sample_with(it, sensor, rng)[0];
        Ok(vec![
            throttle_transform(demand, spec, reading)?.elapsed_time,
        ])
    })?;
    Ok(TraceSet {
        channel_name: format!("time:{}", sensor.name),
        class_label: Some(source.class()),
        true_key: Some(*key),
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats_core::MomentAccumulator;
    use proptest::prelude::*;

    fn flat_profile() -> ChannelProfile {
        ChannelProfile {
            name: "flat".into(),
            leak_coeff_rd0: 0.0,
            leak_coeff_rd10: 0.0,
            baseline: 5.0,
            noise_sigma: 0.0,
            quant_step: 0.001,
            update_interval_s: 1.0,
            replicas: 1,
            samples_per_trace: 4,
        }
    }

    fn key() -> Block {
        Block::from_hex("2b7e151628aed2a6abf7158809cf4f3c").unwrap()
    }

    #[test]
    fn flat_profile_reads_baseline() {
        let t = simulate_trace(&Block::ZERO, &key(), &flat_profile(), 1).unwrap();
        assert_eq!(t.samples, vec![5.0; 4]);
    }

    #[test]
    fn plaintext_equal_key_has_no_rd0_leak() {
        let p = ChannelProfile {
            leak_coeff_rd0: 1.0,
            baseline: 2.5004,
            ..flat_profile()
        };
        let t = simulate_trace(&key(), &key(), &p, 9).unwrap();
        assert!(t.samples.iter().all(|&s| s == quantize(2.5004, 0.001)));
    }

    #[test]
    fn deterministic_per_seed() {
        let p = preset("phpc-like").unwrap();
        let a = simulate_trace(&Block::ONES, &key(), &p, 42).unwrap();
        let b = simulate_trace(&Block::ONES, &key(), &p, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_profiles() {
        let mut p = flat_profile();
        p.baseline = f64::NAN;
        assert_eq!(
            simulate_trace(&key(), &key(), &p, 0),
            Err(SimError::NonFinite("baseline"))
        );
        let mut p = flat_profile();
        p.quant_step = 0.0;
        assert!(matches!(p.validate(), Err(SimError::InvalidProfile(_))));
        let mut p = flat_profile();
        p.noise_sigma = -1.0;
        assert!(p.validate().is_err());
        let mut p = flat_profile();
        p.replicas = 0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn quantize_ties_to_even() {
        assert_eq!(quantize(2.5, 1.0), 2.0);
        assert_eq!(quantize(3.5, 1.0), 4.0);
        assert_eq!(quantize(-0.5, 1.0), 0.0);
        assert_eq!(quantize(1.26, 0.5), 1.5);
    }

    #[test]
    fn campaign_shapes() {
        let p = preset("phpc-like").unwrap();
        let ts = simulate_campaign(PlaintextSource::Random(3), &key(), 10, &p, 1).unwrap();
        assert_eq!(ts.len(), 10);
        assert_eq!(ts.class_label, Some(PlaintextClass::Random));
        for r in &ts.records {
            assert_eq!(
                crate::aes_model::encrypt_block(&r.plaintext, &key()).0,
                r.ciphertext
            );
        }
        let zeros = simulate_campaign(PlaintextSource::AllZeros, &key(), 5, &p, 1).unwrap();
        assert!(zeros.records.iter().all(|r| r.plaintext == Block::ZERO));
        let again = simulate_campaign(PlaintextSource::Random(3), &key(), 10, &p, 99).unwrap();
        let pts = |t: &TraceSet| t.records.iter().map(|r| r.plaintext).collect::<Vec<_>>();
        assert_eq!(pts(&ts), pts(&again));
        assert_eq!(
            simulate_campaign(PlaintextSource::AllOnes, &key(), 0, &p, 1),
            Err(SimError::NoTraces)
        );
    }

    #[test]
    fn campaign_is_schedule_independent() {
        let p = preset("phpc-like").unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| {
                    simulate_campaign(PlaintextSource::Random(5), &key(), 300, &p, 8).unwrap()
                })
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn replicas_scale_the_data_term() {
        let one = ChannelProfile {
            leak_coeff_rd0: 1.0,
            leak_coeff_rd10: 0.5,
            baseline: 0.0,
            quant_step: 0.5,
            samples_per_trace: 1,
            ..flat_profile()
        };
        let three = ChannelProfile {
            replicas: 3,
            ..one.clone()
        };
        let pt = Block::from_hex("00112233445566778899aabbccddeeff").unwrap();
        let a = simulate_trace(&pt, &key(), &one, 0).unwrap().samples[0];
        let b = simulate_trace(&pt, &key(), &three, 0).unwrap().samples[0];
        assert_eq!(b, 3.0 * a);
    }

    #[test]
    fn mitigation_identity_and_lengths() {
        let p = ChannelProfile {
            samples_per_trace: 10,
            noise_sigma: 0.01,
            ..flat_profile()
        };
        let ts = simulate_campaign(PlaintextSource::Random(1), &key(), 5, &p, 2).unwrap();
        let same = apply_mitigation(
            &ts,
            &MitigationSpec {
                extra_noise_sigma: 0.0,
                interval_multiplier: 1,
            },
            7,
        )
        .unwrap();
        assert_eq!(same, ts);
        let coarse = apply_mitigation(
            &ts,
            &MitigationSpec {
                extra_noise_sigma: 0.0,
                interval_multiplier: 3,
            },
            7,
        )
        .unwrap();
        assert!(coarse.records.iter().all(|r| r.samples.len() == 3));
        let avg = ts.records[0].samples[..3].iter().sum::<f64>() / 3.0;
        assert_eq!(coarse.records[0].samples[0], avg);
        assert!(apply_mitigation(
            &ts,
            &MitigationSpec {
                extra_noise_sigma: 0.0,
                interval_multiplier: 0
            },
            7
        )
        .is_err());
    }

    #[test]
    fn mitigation_noise_variance() {
        // 1000 traces x 100 samples of a constant, sigma = 0.3
        let p = ChannelProfile {
            samples_per_trace: 100,
            ..flat_profile()
        };
        let ts = simulate_campaign(PlaintextSource::AllZeros, &key(), 1000, &p, 0).unwrap();
        let sigma = 0.3;
        let out = apply_mitigation(
            &ts,
            &MitigationSpec {
                extra_noise_sigma: sigma,
                interval_multiplier: 1,
            },
            11,
        )
        .unwrap();
        let mut acc = MomentAccumulator::new();
        for r in &out.records {
            for &s in &r.samples {
                acc.push(s).unwrap();
            }
        }
        assert_eq!(acc.n(), 100_000);
        let v = acc.variance().unwrap();
        assert!((v / (sigma * sigma) - 1.0).abs() < 0.05, "variance {v}");
    }

    fn spec(driver: ThrottleDriver) -> ThrottleSpec {
        ThrottleSpec {
            power_limit: 4.0,
            f_max: 3.5,
            work_units: 7.0,
            driver,
        }
    }

    #[test]
    fn throttle_examples() {
        let s = spec(ThrottleDriver::ActualPower);
        assert_eq!(throttle_transform(2.8, &s, 0.0).unwrap().frequency, 3.5);
        assert_eq!(throttle_transform(4.0, &s, 0.0).unwrap().frequency, 3.5);
        let t = throttle_transform(8.0, &s, 0.0).unwrap();
        assert!((t.frequency - 3.5 * 0.5f64.cbrt()).abs() < 1e-12);
        assert!((t.frequency - 2.778).abs() < 1e-3);
        assert!((t.elapsed_time - 7.0 / t.frequency).abs() < 1e-12);
        let i = spec(ThrottleDriver::IndependentSensor);
        assert_eq!(throttle_transform(9.0, &i, 3.0).unwrap().frequency, 3.5);
        assert!(throttle_transform(1.0, &i, 5.0).unwrap().frequency < 3.5);
        assert!(throttle_transform(0.0, &s, 1.0).is_err());
        assert!(throttle_transform(1.0, &i, -1.0).is_err());
    }

    #[test]
    fn presets_are_valid() {
        for name in PRESET_NAMES {
            let p = preset(name).unwrap();
            p.validate().unwrap();
            assert_eq!(ChannelProfile::from_json(&p.to_json()).unwrap(), p);
        }
        assert!(preset("nope").is_none());
        let k = preset("phpc-kernel-like").unwrap();
        let p = preset("phpc-like").unwrap();
        assert_eq!(k.replicas, 1);
        assert!((k.noise_sigma - p.noise_sigma * 2f64.sqrt()).abs() < 1e-18);
    }

    #[test]
    fn profile_json_rejects_unknown_fields() {
        let mut v: serde_json::Value = serde_json::from_str(&flat_profile().to_json()).unwrap();
        v["bogus"] = 1.into();
        assert!(ChannelProfile::from_json(&v.to_string()).is_err());
    }

    proptest! {
        #[test]
        fn samples_are_multiples_of_step(
            pt in any::<[u8; 16]>(),
            seed in any::<u64>(),
            step_exp in -7i32..0,
        ) {
            let step = 10f64.powi(step_exp) * 3.0;
            let p = ChannelProfile {
                quant_step: step,
                samples_per_trace: 3,
                ..preset("pdtr-like").unwrap()
            };
            let t = simulate_trace(&Block(pt), &key(), &p, seed).unwrap();
            for s in t.samples {
                prop_assert_eq!((s / step).round() * step, s);
            }
        }

        #[test]
        fn leakage_monotone_in_rd0_weight(a in any::<[u8; 16]>(), b in any::<[u8; 16]>()) {
            let p = ChannelProfile {
                leak_coeff_rd0: 0.25,
                quant_step: 0.25,
                samples_per_trace: 1,
                ..flat_profile()
            };
            let (pa, pb) = (Block(a), Block(b));
            let ha = pa.xor(&key()).hamming_weight();
            let hb = pb.xor(&key()).hamming_weight();
            let sa = simulate_trace(&pa, &key(), &p, 0).unwrap().samples[0];
            let sb = simulate_trace(&pb, &key(), &p, 0).unwrap().samples[0];
            prop_assert_eq!(ha.cmp(&hb), sa.partial_cmp(&sb).unwrap());
        }

        #[test]
        fn throttle_monotone(d1 in 0.1f64..20.0, d2 in 0.1f64..20.0) {
            let s = spec(ThrottleDriver::ActualPower);
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            let f_lo = throttle_transform(lo, &s, 0.0).unwrap().frequency;
            let f_hi = throttle_transform(hi, &s, 0.0).unwrap().frequency;
            prop_assert!(f_hi <= f_lo);
            prop_assert_eq!(f_lo == s.f_max, lo <= s.power_limit);
        }
    }
}
