//! Effect of blending noise into reported values and of reporting less often.
//!
//! The victim reports four readings per encryption. Averaging them into one
//! value (interval x4) discards the per-reading detail an attacker can pick
//! from, on top of the added noise.
//!
//! cargo run --release --example mitigation

use telescp::{
    apply_mitigation, preset, run_cpa, simulate_campaign, Block, ChannelProfile, LeakModel,
    MitigationSpec, PlaintextSource,
};

fn main() {
    let key = Block::from_hex("2b7e151628aed2a6abf7158809cf4f3c").unwrap();
    let profile = ChannelProfile {
        samples_per_trace: 4,
        ..preset("phpc-like").unwrap().with_noise(0.0)
    };
    let a = profile.leakage_amplitude();
    let specs = [
        (
            "none",
            MitigationSpec {
                extra_noise_sigma: 0.0,
                interval_multiplier: 1,
            },
        ),
        (
            "noise",
            MitigationSpec {
                extra_noise_sigma: a,
                interval_multiplier: 1,
            },
        ),
        (
            "noise + interval x4",
            MitigationSpec {
                extra_noise_sigma: a,
                interval_multiplier: 4,
            },
        ),
        (
            "4x noise",
            MitigationSpec {
                extra_noise_sigma: 4.0 * a,
                interval_multiplier: 1,
            },
        ),
    ];

    println!(
        "{:<22} {:>8} {:>8} {:>8}",
        "mitigation", "n=250", "n=500", "n=1000"
    );
    for (label, spec) in specs {
        print!("{label:<22}");
        for n in [250, 500, 1000] {
            let mut total = 0.0;
            for seed in 0..10 {
                let ts = simulate_campaign(PlaintextSource::Random(seed), &key, n, &profile, seed)
                    .unwrap();
                let m = apply_mitigation(&ts, &spec, seed).unwrap();
                total += run_cpa(&m, LeakModel::Rd0HW, Some(&key))
                    .unwrap()
                    .guessing_entropy
                    .unwrap();
            }
            print!(" {:>8.2}", total / 10.0);
        }
        println!();
    }
}
