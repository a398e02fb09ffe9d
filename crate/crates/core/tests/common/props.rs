//! Invariant checks shared by the property tests and the acceptance run.

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use ringdmpc::model::step_vehicle;
use ringdmpc::optimizer::{boltzmann_average, rollout};
use ringdmpc::simulator::headways;
use ringdmpc::stability::{z_roots, FixedPoint, NeighborSensitivity, PolicyJacobian};
use ringdmpc::{
    AlgorithmSpec, FleetPolicy, GridSpec, InitialCondition, KinematicState64, NoiseSpec, SearchGrid,
    UtilityParams, VehicleParams,
};

use super::{jittered_fleet, scenario, RING};

pub type Outcome = Result<(), String>;

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

pub fn headway_conservation(cases: u32) -> Outcome {
    let strat = (
        2usize..8,
        prop::collection::vec(-1.0f64..1.0, 12),
        // bounded relative motion keeps the order of the fleet
        prop::collection::vec(5.0f64..7.0, 12),
        prop::collection::vec(-1.0f64..1.0, 12 * 20),
        any::<u64>(),
    );
    runner(cases)
        .run(&strat, |(n, offsets, speeds, actions, seed)| {
            let (ring, mut states) = jittered_fleet(n, &offsets, &speeds, &[0.0]);
            let noise = NoiseSpec {
                sigma_x: 0.0,
                sigma_v: 0.05,
                sigma_a: 0.05,
                seed,
            };
            let params = VehicleParams::default();
            let mut prev = vec![0.0; n];
            for step in 0..20 {
                for i in 0..n {
                    let u = actions[step * 12 + i];
                    states[i] = step_vehicle(&states[i], u, prev[i], &params, RING, noise.draw(i, step)).unwrap();
                    prev[i] = u;
                }
                let total: f64 = headways(&states, ring.circumference).iter().sum();
                prop_assert!((total - RING).abs() <= 1e-9 * RING, "headways sum to {total}");
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn seeded_determinism(cases: u32) -> Outcome {
    runner(cases)
        .run(&(any::<u64>(), 3usize..7), |(seed, n)| {
            let mut cfg = scenario("IAS2D_c", 1, n, 8.0, InitialCondition::Kicked).with_duration(2.5);
            cfg.noise = NoiseSpec {
                sigma_x: 0.01,
                sigma_v: 0.02,
                sigma_a: 0.02,
                seed,
            };
            let a = ringdmpc::simulator::run(&cfg).unwrap();
            let b = ringdmpc::simulator::run(&cfg).unwrap();
            prop_assert_eq!(&a, &b);
            cfg.noise.seed = seed.wrapping_add(1);
            let c = ringdmpc::simulator::run(&cfg).unwrap();
            prop_assert_ne!(&a.steps.last().unwrap().states, &c.steps.last().unwrap().states);
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn boltzmann_shift_invariance(cases: u32) -> Outcome {
    let strat = (2usize..40)
        .prop_flat_map(|m| {
            (
                prop::collection::vec(-50.0f64..50.0, m),
                prop::collection::vec(prop::collection::vec(-6.0f64..4.0, 8), m),
                -1e3f64..1e3,
                1.0f64..500.0,
            )
        });
    runner(cases)
        .run(&strat, |(utilities, plans, shift, lambda)| {
            let refs: Vec<&[f64]> = plans.iter().map(|p| &p[..]).collect();
            let shifted: Vec<f64> = utilities.iter().map(|u| u + shift).collect();
            let (a, wa) = boltzmann_average(&utilities, &refs, lambda).unwrap();
            let (b, wb) = boltzmann_average(&shifted, &refs, lambda).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!(close(*x, *y, 1e-9), "{x} vs {y}");
            }
            prop_assert!(close(wa.iter().sum::<f64>(), 1.0, 1e-12));
            for (x, y) in wa.iter().zip(&wb) {
                prop_assert!((x - y).abs() < 1e-9);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn convex_combination_feasibility(cases: u32) -> Outcome {
    let vehicle = VehicleParams::default();
    let grid = SearchGrid::new(GridSpec::default(), 1, &vehicle).unwrap();
    let m = grid.feasible_count();
    let strat = (prop::collection::vec(-30.0f64..5.0, m), 0.1f64..1e3);
    runner(cases)
        .run(&strat, |(utilities, lambda)| {
            let plans: Vec<&[f64]> = (0..m).map(|j| grid.feasible_plan(j)).collect();
            let (avg, _) = boltzmann_average(&utilities, &plans, lambda).unwrap();
            for u in avg {
                prop_assert!((vehicle.u_min - 1e-12..=vehicle.u_max + 1e-12).contains(&u), "{u} leaves the action bounds");
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn translational_equivariance(cases: u32) -> Outcome {
    let strat = (
        0.0f64..RING,
        0usize..6,
        prop::collection::vec(-2.0f64..2.0, 6),
        prop::collection::vec(3.0f64..9.0, 6),
        prop::collection::vec(-1.0f64..1.0, 6),
        prop::bool::ANY,
    );
    runner(cases)
        .run(&strat, |(shift, rot, offsets, speeds, accels, centralized)| {
            let algo = if centralized {
                AlgorithmSpec::cas2d_c(1)
            } else {
                AlgorithmSpec::ias2d_c(1)
            };
            let policy = FleetPolicy::new(algo, UtilityParams::default().with_v_star(8.0), VehicleParams::default(), GridSpec::default()).unwrap();
            let (ring, states) = jittered_fleet(6, &offsets, &speeds, &accels);
            let base = policy.tau_loop(&states, &ring).unwrap().actions;
            let moved: Vec<KinematicState64> = states
                .iter()
                .map(|s| KinematicState64::new((s.x + shift).rem_euclid(RING), s.v, s.a))
                .collect();
            let shifted = policy.tau_loop(&moved, &ring).unwrap().actions;
            for (a, b) in base.iter().zip(&shifted) {
                prop_assert!((a - b).abs() < 1e-8, "translation changed {a} to {b}");
            }
            let rotated: Vec<KinematicState64> = (0..6).map(|i| states[(i + rot) % 6]).collect();
            let relabeled = policy.tau_loop(&rotated, &ring).unwrap().actions;
            for i in 0..6 {
                prop_assert_eq!(relabeled[i], base[(i + rot) % 6]);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn anticipation_superposition(cases: u32) -> Outcome {
    let vehicle = VehicleParams::default();
    let grid = SearchGrid::new(GridSpec::default(), 1, &vehicle).unwrap();
    let m = grid.feasible_count();
    let dt = vehicle.dt;
    let strat = (
        -5.0f64..20.0,
        -6.0f64..4.0,
        prop::collection::vec(-6.0f64..4.0, 8),
        prop::collection::vec(-6.0f64..4.0, 8),
        0..m,
    );
    runner(cases)
        .run(&strat, |(v, a, p1, p2, j)| {
            let s = KinematicState64::new(0.0, v, a);
            let zero = KinematicState64::new(0.0, 0.0, 0.0);
            let sum: Vec<f64> = p1.iter().zip(&p2).map(|(x, y)| x + y).collect();
            let whole = rollout(&s, &sum, dt);
            let left = rollout(&s, &p1, dt);
            let right = rollout(&zero, &p2, dt);
            for h in 0..whole.x.len() {
                prop_assert!(close(whole.x[h], left.x[h] + right.x[h], 1e-12));
                prop_assert!(close(whole.v[h], left.v[h] + right.v[h], 1e-12));
                prop_assert!(close(whole.a[h], left.a[h] + right.a[h], 1e-12));
            }
            let plan = grid.feasible_plan(j);
            let direct = rollout(&s, plan, dt).profile(plan, dt).unwrap();
            let zeros = vec![0.0; plan.len()];
            let free = rollout(&s, &zeros, dt).profile(&zeros, dt).unwrap();
            let mut speed = vec![0.0; plan.len()];
            let mut reach = vec![0.0; plan.len()];
            grid.write_ego_profile(j, &free, &mut speed, &mut reach);
            for h in 0..plan.len() {
                prop_assert!(close(speed[h], direct.speed[h], 1e-12));
                prop_assert!(close(reach[h], direct.reach[h], 1e-12));
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

pub fn conjugate_symmetry(cases: u32) -> Outcome {
    let strat = (
        5usize..40,
        prop::collection::vec((-1.0f64..1.0, -2.0f64..1.0, -0.5f64..0.5), 7),
    );
    runner(cases)
        .run(&strat, |(n, raw)| {
            let betas = raw
                .iter()
                .enumerate()
                .map(|(k, &(x, v, a))| NeighborSensitivity {
                    offset: k as isize - 3,
                    x,
                    v,
                    a,
                })
                .collect();
            let jac = PolicyJacobian {
                fixed_point: FixedPoint {
                    headway: RING / n as f64,
                    velocity: 5.0,
                    residual: 0.0,
                },
                ahead: 3,
                behind: 3,
                betas,
                flagged: vec![],
            };
            let spec = z_roots(&jac, n, 1.0 / 6.0, 0.7f64.sqrt());
            for k in 1..n {
                let mut a: Vec<f64> = spec.modes[k].roots.iter().map(|z| z.norm()).collect();
                let mut b: Vec<f64> = spec.modes[n - k].roots.iter().map(|z| z.norm()).collect();
                a.sort_by(f64::total_cmp);
                b.sort_by(f64::total_cmp);
                for (x, y) in a.iter().zip(&b) {
                    prop_assert!((x - y).abs() < 1e-10, "k={k}: {x} vs {y}");
                }
                prop_assert!((spec.modes[k].b_x - spec.modes[n - k].b_x.conj()).norm() < 1e-12);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

/// Name and check of every invariant suite, with its case budget.
pub fn all() -> Vec<(&'static str, fn(u32) -> Outcome, u32)> {
    vec![
        ("headway conservation", headway_conservation as fn(u32) -> Outcome, 64),
        ("seeded determinism", seeded_determinism, 8),
        ("boltzmann shift invariance", boltzmann_shift_invariance, 128),
        ("convex-combination feasibility", convex_combination_feasibility, 64),
        ("translational equivariance", translational_equivariance, 16),
        ("anticipation superposition", anticipation_superposition, 128),
        ("conjugate spectrum symmetry", conjugate_symmetry, 64),
    ]
}
