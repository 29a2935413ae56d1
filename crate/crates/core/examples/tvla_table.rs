//! Leakage assessment table for every built-in channel: all-zeros, all-ones
//! and random plaintexts, 10k traces per class.
//!
//! cargo run --release --example tvla_table

use telescp::leakage_sim::PRESET_NAMES;
use telescp::{preset, run_tvla, simulate_class_groups, Block, Classification, PlaintextClass};

fn main() {
    let key = Block::from_hex("2b7e151628aed2a6abf7158809cf4f3c").unwrap();
    for name in PRESET_NAMES {
        let p = preset(name).unwrap();
        let groups = simulate_class_groups(&PlaintextClass::ALL, &key, 10_000, &p, 7).unwrap();
        let report = run_tvla(&groups, None).unwrap();
        print!("{}", report.to_table());
        println!(
            "TP {}  FN {}  TN {}  FP {}\n",
            report.count(Classification::TruePositive),
            report.count(Classification::FalseNegative),
            report.count(Classification::TrueNegative),
            report.count(Classification::FalsePositive),
        );
    }
}
