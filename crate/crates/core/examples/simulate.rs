//! Simulates a short campaign on each built-in channel and prints the
//! spread of readings next to the channel's leakage amplitude.
//!
//! cargo run --release --example simulate [traces]

use telescp::leakage_sim::PRESET_NAMES;
use telescp::{preset, simulate_campaign, Block, MomentAccumulator, PlaintextSource};

fn main() {
    let n: usize = std::env::args()
        .nth(1)
        .map_or(5000, |s| s.parse().expect("trace count"));
    let key = Block::from_hex("000102030405060708090a0b0c0d0e0f").unwrap();
    println!(
        "{:<20} {:>12} {:>12} {:>12} {:>10}",
        "channel", "mean (W)", "sd (W)", "amplitude", "distinct"
    );
    for name in PRESET_NAMES {
        let p = preset(name).unwrap();
        let ts = simulate_campaign(PlaintextSource::Random(1), &key, n, &p, 1).unwrap();
        let values: Vec<f64> = ts.records.iter().map(|r| r.samples[0]).collect();
        let acc = MomentAccumulator::from_slice(&values).unwrap();
        let mut distinct = values.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        println!(
            "{:<20} {:>12.6} {:>12.3e} {:>12.3e} {:>10}",
            p.name,
            acc.mean(),
            acc.variance().unwrap().sqrt(),
            p.leakage_amplitude(),
            distinct.len()
        );
    }
}
