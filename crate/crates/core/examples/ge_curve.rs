//! Guessing entropy against trace count for each model, printed as CSV.
//!
//! cargo run --release --example ge_curve > ge.csv

use telescp::{ge_curve, preset, simulate_campaign, Block, LeakModel, PlaintextSource};

fn main() {
    let key = Block::from_hex("2b7e151628aed2a6abf7158809cf4f3c").unwrap();
    let profile = preset("pdtr-like").unwrap();
    let ts = simulate_campaign(PlaintextSource::Random(2), &key, 100_000, &profile, 2).unwrap();

    let curves: Vec<_> = LeakModel::ALL
        .iter()
        .map(|&m| ge_curve(&ts, m, &key, 5000).unwrap())
        .collect();
    println!("n_traces,{}", LeakModel::ALL.map(|m| m.name()).join(","));
    for i in 0..curves[0].points.len() {
        let ges: Vec<String> = curves
            .iter()
            .map(|c| format!("{:.2}", c.points[i].ge))
            .collect();
        println!("{},{}", curves[0].points[i].n_traces, ges.join(","));
    }
    for (m, c) in LeakModel::ALL.iter().zip(&curves) {
        eprintln!("{m}: converged at {:?}", c.converged_at());
    }
}
