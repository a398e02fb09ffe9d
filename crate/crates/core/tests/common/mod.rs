#![allow(dead_code)]

pub mod oracle;
pub mod props;

use ringdmpc::{AlgorithmSpec, InitialCondition, KinematicState64, RingGeometry, ScenarioConfig64};

pub const RING: f64 = 314.0;

pub fn scenario(name: &str, t: usize, n: usize, v_star: f64, initial: InitialCondition) -> ScenarioConfig64 {
    ScenarioConfig64::new(RING, n, AlgorithmSpec::named(name, t).unwrap(), initial).with_v_star(v_star)
}

/// Fleet with jittered spacing and speeds, positions wrapped into `[0, C)`.
pub fn jittered_fleet(n: usize, offsets: &[f64], speeds: &[f64], accels: &[f64]) -> (RingGeometry<f64>, Vec<KinematicState64>) {
    let ring = RingGeometry::new(RING, n).unwrap();
    let d = RING / n as f64;
    let states = (0..n)
        .map(|i| {
            let x = (i as f64 * d + offsets[i % offsets.len()]).rem_euclid(RING);
            KinematicState64::new(x, speeds[i % speeds.len()], accels[i % accels.len()])
        })
        .collect();
    (ring, states)
}
