//! Known-plaintext key recovery with each leakage model on a noisy channel.
//!
//! cargo run --release --example cpa_recovery [preset] [traces]

use telescp::{preset, run_cpa, simulate_campaign, Block, LeakModel, PlaintextSource};

fn main() {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "pdtr-like".into());
    let n: usize = args
        .next()
        .map_or(50_000, |s| s.parse().expect("trace count"));
    let profile = preset(&name).unwrap_or_else(|| panic!("unknown preset {name}"));
    let key = Block::from_hex("2b7e151628aed2a6abf7158809cf4f3c").unwrap();

    let ts = simulate_campaign(PlaintextSource::Random(0), &key, n, &profile, 0).unwrap();
    for model in LeakModel::ALL {
        let report = run_cpa(&ts, model, Some(&key)).unwrap();
        println!("{}", report.to_text());
    }
}
