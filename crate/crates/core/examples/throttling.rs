//! Power limiting turns a power leak into a timing leak, unless the limiter
//! follows a sensor that does not see the victim.
//!
//! cargo run --release --example throttling

use telescp::leakage_sim::{derive_seed, simulate_timing_campaign};
use telescp::{
    preset, run_tvla, throttle_transform, Block, ChannelProfile, PlaintextClass, PlaintextSource,
    ThrottleDriver, ThrottleSpec,
};

fn main() {
    let spec = ThrottleSpec {
        power_limit: 4.0,
        f_max: 3.5,
        work_units: 1.0,
        driver: ThrottleDriver::ActualPower,
    };
    for demand in [2.8, 4.0, 4.5, 8.0] {
        let r = throttle_transform(demand, &spec, demand).unwrap();
        println!(
            "demand {demand:>4} W -> {:.3} GHz, {:.4} s",
            r.frequency, r.elapsed_time
        );
    }
    println!();

    let key = Block::from_hex("2b7e151628aed2a6abf7158809cf4f3c").unwrap();
    let power = ChannelProfile {
        baseline: 4.5,
        ..preset("phpc-like").unwrap()
    };
    let sensor = preset("phps-like").unwrap();
    for driver in [
        ThrottleDriver::ActualPower,
        ThrottleDriver::IndependentSensor,
    ] {
        let spec = ThrottleSpec { driver, ..spec };
        let groups = PlaintextClass::ALL
            .into_iter()
            .map(|c| {
                let src = PlaintextSource::for_class(c, 1);
                let ts = simulate_timing_campaign(
                    src,
                    &key,
                    10_000,
                    &power,
                    &sensor,
                    &spec,
                    derive_seed(1, c.code() as u64),
                )
                .unwrap();
                (c, ts)
            })
            .collect();
        println!("limiter driven by {driver:?}");
        print!("{}", run_tvla(&groups, None).unwrap().to_table());
        println!();
    }
}
