//! Writes a campaign to the binary trace format, reads it back and exports
//! the first rows as CSV.
//!
//! cargo run --example trace_files

use telescp::trace_store::export_csv;
use telescp::{preset, read_traceset, simulate_campaign, write_traceset, Block, PlaintextSource};

fn main() {
    let key = Block::from_hex("000102030405060708090a0b0c0d0e0f").unwrap();
    let mut profile = preset("phpc-like").unwrap();
    profile.samples_per_trace = 2;
    let ts = simulate_campaign(PlaintextSource::Random(3), &key, 1000, &profile, 3).unwrap();

    let mut bytes = Vec::new();
    let size = write_traceset(&ts, &mut bytes).unwrap();
    let back = read_traceset(bytes.as_slice()).unwrap();
    println!(
        "{} traces, {size} bytes, identical after reading back: {}",
        ts.len(),
        back == ts
    );

    let mut head = back.clone();
    head.records.truncate(3);
    export_csv(&head, std::io::stdout().lock()).unwrap();
}
