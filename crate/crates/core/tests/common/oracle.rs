//! Straight-line re-derivation of the decision problem, sharing no code
//! with the crate's optimizer: explicit rollouts, explicit utility sums and
//! an exhaustive scan of the action grid.

pub struct Params {
    pub v_star: f64,
    pub k1: f64,
    pub k2v: f64,
    pub k20: f64,
    pub kc: f64,
    pub kv: f64,
    pub kd: f64,
    pub w1: f64,
    pub w2: f64,
    pub w3g: f64,
    pub w3c: f64,
    pub length: f64,
    pub dt: f64,
    pub horizon: usize,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            v_star: 10.49,
            k1: 0.7,
            k2v: 10.0,
            k20: 0.25,
            kc: 0.6,
            kv: 0.3,
            kd: 1.0,
            w1: 1.0,
            w2: -1.0,
            w3g: -10.0,
            w3c: -20.0,
            length: 3.9,
            dt: 1.0 / 6.0,
            horizon: 7,
        }
    }
}

#[derive(Clone, Copy)]
pub struct Car {
    pub x: f64,
    pub v: f64,
    pub a: f64,
}

/// Per-step (speed, reach) of a car following `plan`.
fn profile(car: Car, plan: &[f64], dt: f64) -> Vec<(f64, f64)> {
    let (mut x, mut v, mut a) = (car.x, car.v, car.a);
    plan.iter()
        .map(|&u| {
            let nx = x + v * dt;
            let nv = v + a * dt;
            x = nx;
            v = nv;
            a = u;
            (nv + u * dt, nx + nv * dt)
        })
        .collect()
}

fn risk(p: &Params, back: (f64, f64), front: (f64, f64)) -> f64 {
    let gap = front.1 - back.1 - p.length;
    if gap <= 0.0 {
        return 1.0;
    }
    let delta = p.kc + p.kv * back.0.abs() + p.kd * (back.0 - front.0).max(0.0);
    let r = gap / delta;
    (-r * r - r).exp()
}

fn forward(p: &Params, s: f64) -> f64 {
    let z = (s - p.v_star) / (p.k1 * p.v_star);
    (-z * z).exp()
}

fn backward(p: &Params, s: f64) -> f64 {
    (-p.k2v * (s + p.k20)).exp()
}

pub fn cumulative(
    p: &Params,
    ego: Car,
    leader: Car,
    follower: Option<Car>,
    ego_plan: &[f64],
    leader_plan: &[f64],
    follower_plan: &[f64],
) -> f64 {
    let me = profile(ego, ego_plan, p.dt);
    let lead = profile(leader, leader_plan, p.dt);
    let back = follower.map(|f| profile(f, follower_plan, p.dt));
    let mut total = 0.0;
    for h in 0..me.len() {
        total += p.w1 * forward(p, me[h].0) + p.w2 * backward(p, me[h].0) + p.w3c * risk(p, me[h], lead[h]);
        if let Some(b) = &back {
            total += p.w3c * risk(p, b[h], me[h]);
        }
    }
    total
}

pub fn g_transformed(p: &Params, ego: Car, leader: Car, u: f64) -> f64 {
    let n = p.horizon + 1;
    let me = profile(ego, &vec![u; n], p.dt);
    let lead = profile(leader, &vec![0.0; n], p.dt);
    let worst = (0..n).map(|h| risk(p, me[h], lead[h])).fold(0.0, f64::max);
    p.w1 * forward(p, me[0].0) + p.w2 * backward(p, me[0].0) + p.w3g * worst
}

/// Grid of `(u0, u1)` pairs whose expanded plan stays within `[-6, 4]`.
pub fn feasible_pairs(p: &Params, two_d: bool) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for i in 0..41 {
        let u0 = -6.0 + 0.25 * i as f64;
        let slopes: Vec<f64> = if two_d {
            (0..11).map(|k| -1.0 + 0.2 * k as f64).collect()
        } else {
            vec![0.0]
        };
        for u1 in slopes {
            let plan = expand(p, u0, u1);
            if plan.iter().all(|&u| (-6.0 - 1e-9..=4.0 + 1e-9).contains(&u)) {
                out.push((u0, u1));
            }
        }
    }
    out
}

pub fn expand(p: &Params, u0: f64, u1: f64) -> Vec<f64> {
    (0..=p.horizon).map(|h| u0 + u1 * h as f64 * p.dt).collect()
}

/// Best and runner-up utilities with the best pair.
pub struct Scan {
    pub best: (f64, f64),
    pub best_value: f64,
    pub runner_up: f64,
}

pub fn scan(values: impl Iterator<Item = ((f64, f64), f64)>) -> Scan {
    let mut best = ((0.0, 0.0), f64::NEG_INFINITY);
    let mut second = f64::NEG_INFINITY;
    for (pair, v) in values {
        if v > best.1 {
            second = best.1;
            best = (pair, v);
        } else if v > second {
            second = v;
        }
    }
    Scan {
        best: best.0,
        best_value: best.1,
        runner_up: second,
    }
}

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use ringdmpc::optimizer::EgoProblem;
use ringdmpc::{
    DecisionState, GridSpec, KinematicState64, Objective, SearchGrid, UtilityForm, UtilityParams, VehicleParams,
};

#[derive(Debug, Default)]
pub struct Report {
    pub compared: usize,
    /// States whose top-two utility gap was too small to demand agreement.
    pub near_ties: usize,
    pub failures: Vec<String>,
}

#[derive(Clone, Copy, Debug)]
enum Variant {
    Own,
    Centralized,
    GTransformed,
}

/// Draws `count` decision states and checks the crate's Boltzmann plan
/// against an exhaustive argmax of the independent utility.
pub fn compare_random_states(count: usize, seed: u64) -> Report {
    let p = Params::default();
    let vehicle = VehicleParams::default();
    let params = UtilityParams::default();
    let lambda = GridSpec::<f64>::default().lambda;
    let grid2 = SearchGrid::new(GridSpec::default(), 1, &vehicle).unwrap();
    let grid1 = SearchGrid::new(GridSpec::default(), 0, &vehicle).unwrap();
    let pairs2 = feasible_pairs(&p, true);
    let pairs1 = feasible_pairs(&p, false);
    let mut rng = StdRng::seed_from_u64(seed);
    let mut report = Report::default();
    let n = p.horizon + 1;
    for case in 0..count {
        let variant = [Variant::Own, Variant::Centralized, Variant::GTransformed][case % 3];
        let ego = Car {
            x: 0.0,
            v: rng.gen_range(0.0..12.0),
            a: rng.gen_range(-3.0..2.0),
        };
        let leader = Car {
            x: rng.gen_range(4.5..40.0),
            v: rng.gen_range(0.0..12.0),
            a: rng.gen_range(-3.0..2.0),
        };
        let follower = Car {
            x: -rng.gen_range(4.5..40.0),
            v: rng.gen_range(0.0..12.0),
            a: rng.gen_range(-3.0..2.0),
        };
        let (lu0, lu1) = pairs2[rng.gen_range(0..pairs2.len())];
        let (fu0, fu1) = pairs2[rng.gen_range(0..pairs2.len())];
        let leader_plan = expand(&p, lu0, lu1);
        let follower_plan = expand(&p, fu0, fu1);

        let (grid, pairs) = match variant {
            Variant::GTransformed => (&grid1, &pairs1),
            _ => (&grid2, &pairs2),
        };
        let values: Vec<((f64, f64), f64)> = pairs
            .iter()
            .map(|&(u0, u1)| {
                let v = match variant {
                    Variant::Own => cumulative(&p, ego, leader, None, &expand(&p, u0, u1), &leader_plan, &[]),
                    Variant::Centralized => cumulative(
                        &p,
                        ego,
                        leader,
                        Some(follower),
                        &expand(&p, u0, u1),
                        &leader_plan,
                        &follower_plan,
                    ),
                    Variant::GTransformed => g_transformed(&p, ego, leader, u0),
                };
                ((u0, u1), v)
            })
            .collect();
        let scan = scan(values.into_iter());

        let state = DecisionState {
            ego: KinematicState64::new(ego.x, ego.v, ego.a),
            leader: KinematicState64::new(leader.x, leader.v, leader.a),
            follower: matches!(variant, Variant::Centralized).then(|| KinematicState64::new(follower.x, follower.v, follower.a)),
        };
        let (form, objective) = match variant {
            Variant::Own => (UtilityForm::Cumulative, Objective::Own),
            Variant::Centralized => (UtilityForm::Cumulative, Objective::CentralizedLocal),
            Variant::GTransformed => (UtilityForm::GTransformed, Objective::Own),
        };
        let mut problem = EgoProblem::new(grid, state, &params, form, objective, vehicle.length);
        let follower_arg = matches!(variant, Variant::Centralized).then_some(&follower_plan[..]);
        let best = problem.solve(&leader_plan, follower_arg).unwrap();
        if (best.best_utility - scan.best_value).abs() > 1e-9 * (1.0 + scan.best_value.abs()) {
            report.failures.push(format!(
                "case {case} ({variant:?}): best utility {} vs oracle {}",
                best.best_utility, scan.best_value
            ));
            continue;
        }
        if scan.best_value - scan.runner_up <= 5.0 / lambda {
            report.near_ties += 1;
            continue;
        }
        report.compared += 1;
        let plan = &best.plan.actions;
        let u0 = plan[0];
        let u1 = (plan[n - 1] - plan[0]) / ((n - 1) as f64 * p.dt);
        let (b0, b1) = scan.best;
        if (u0 - b0).abs() > 0.25 + 1e-12 || (u1 - b1).abs() > 0.2 + 1e-12 {
            report.failures.push(format!(
                "case {case} ({variant:?}): boltzmann ({u0:.4}, {u1:.4}) vs argmax ({b0}, {b1})"
            ));
        }
    }
    report
}
