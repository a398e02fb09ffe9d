//! Experiment manifests: the TOML schema and the built-in named experiments.

use ringdmpc::stability::NeighborSensitivity;
use ringdmpc::{AlgorithmSpec, InitialCondition, NoiseSpec, ScenarioConfig64, SweepSpec64};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub simulate: Vec<SimulateJob>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<SweepJob>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benefit: Option<BenefitJob>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stability: Vec<StabilityJob>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<BenchmarkJob>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateJob {
    pub label: String,
    /// Write the per-step CSV next to the summary.
    #[serde(default = "yes")]
    pub trajectory: bool,
    pub scenario: ScenarioConfig64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepJob {
    pub label: String,
    pub algorithms: Vec<AlgorithmSpec>,
    pub spec: SweepSpec64,
}

/// v* search for AS1D_g and IAS2D_c followed by the four-arm table.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenefitJob {
    pub label: String,
    pub iterations: usize,
    pub spec: SweepSpec64,
}

fn default_margin() -> f64 {
    ringdmpc::stability::DEFAULT_MARGIN
}

fn default_step() -> f64 {
    1e-4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityJob {
    pub label: String,
    /// Fixed point and jacobian are computed from this scenario...
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioConfig64>,
    /// ...or taken verbatim from here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<JacobianFixture>,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default = "default_step")]
    pub relative_step: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JacobianFixture {
    pub vehicle_count: usize,
    #[serde(default = "fixture_dt")]
    pub dt: f64,
    #[serde(default = "fixture_gamma")]
    pub gamma: f64,
    pub betas: Vec<NeighborSensitivity<f64>>,
}

fn fixture_dt() -> f64 {
    1.0 / 6.0
}

fn fixture_gamma() -> f64 {
    0.7f64.sqrt()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkJob {
    pub steps: usize,
    #[serde(default)]
    pub warmup: usize,
    pub cases: Vec<BenchmarkCase>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkCase {
    pub label: String,
    pub scenario: ScenarioConfig64,
}

const RING: f64 = 314.0;

fn scenario(name: &str, iterations: usize, n: usize, v_star: f64, initial: InitialCondition) -> ScenarioConfig64 {
    ScenarioConfig64::new(RING, n, AlgorithmSpec::named(name, iterations).expect("built-in algorithm"), initial)
        .with_v_star(v_star)
}

fn sim(label: &str, scenario: ScenarioConfig64) -> SimulateJob {
    SimulateJob {
        label: label.to_string(),
        trajectory: true,
        scenario,
    }
}

fn empty(name: &str) -> Manifest {
    Manifest {
        name: name.to_string(),
        simulate: vec![],
        sweep: vec![],
        benefit: None,
        stability: vec![],
        benchmark: None,
    }
}

/// Density band of the benefit and onset figures.
pub fn density_band() -> Vec<usize> {
    (24..=42).step_by(2).collect()
}

pub const NAMES: &[(&str, &str)] = &[
    ("figure2", "AS1D_g kicked at N=24 and N=38: free flow vs stop-and-go"),
    ("figure2-low", "AS1D_g kicked at N=24"),
    ("figure2-high", "AS1D_g kicked at N=38"),
    ("figure4", "v* search and four-arm benefit table over N=24..42"),
    ("figure5", "AS1D_g vs AS2D_g density scan at v*=10.49, uniform and kicked"),
    ("figure6", "AS2D_g vs AS2D_c at N=36, uniform start"),
    ("figure7", "IAS2D_c with T=0,1,2 at N=38, v*=7.5, kicked"),
    ("figure8", "CAS2D_c with T=0,1,2 at N=38, v*=7.5, kicked"),
    ("figure9", "action sequences of IAS2D_c and CAS2D_c at T=0 and T=2, first 60 s"),
    ("figure10", "AS1D_g at v*=3.5 vs IAS2D_c at v*=9.0, N=38, kicked"),
    ("figure11", "ego and leader under AS2D_c and IAS2D_c, N=38, v*=7.5, kicked"),
    ("zroots", "fixed point, jacobian and z-roots of four algorithms at N=36, v*=10.49"),
    ("shallow-waves", "AS2D_c at N=36, v*=10.49, with and without noise"),
    ("benchmark", "per-step wall time of IAS2D_c T=2 at N=30"),
];

pub fn named(name: &str) -> Option<Manifest> {
    use InitialCondition::{Kicked, Uniform};
    let mut m = empty(name);
    match name {
        "figure2" => {
            m.simulate = vec![
                sim("low", scenario("AS1D_g", 0, 24, 10.49, Kicked)),
                sim("high", scenario("AS1D_g", 0, 38, 10.49, Kicked)),
            ];
        }
        "figure2-low" => m.simulate = vec![sim("low", scenario("AS1D_g", 0, 24, 10.49, Kicked))],
        "figure2-high" => m.simulate = vec![sim("high", scenario("AS1D_g", 0, 38, 10.49, Kicked))],
        "figure4" => {
            m.benefit = Some(BenefitJob {
                label: "benefit".into(),
                iterations: 2,
                spec: SweepSpec64::standard(density_band()),
            });
        }
        "figure5" => {
            for (label, initial) in [("uniform", Uniform), ("kicked", Kicked)] {
                let mut spec = SweepSpec64::standard(density_band());
                spec.v_star_min = 10.49;
                spec.v_star_max = 10.49;
                spec.template.initial = initial;
                m.sweep.push(SweepJob {
                    label: label.into(),
                    algorithms: vec![AlgorithmSpec::as1d_g(), AlgorithmSpec::named("AS2D_g", 0).expect("valid")],
                    spec,
                });
            }
        }
        "figure6" => {
            m.simulate = vec![
                sim("as2d_g", scenario("AS2D_g", 0, 36, 10.49, Uniform)),
                sim("as2d_c", scenario("AS2D_c", 0, 36, 10.49, Uniform)),
            ];
        }
        "figure7" | "figure8" => {
            let algo = if name == "figure7" { "IAS2D_c" } else { "CAS2D_c" };
            m.simulate = (0..=2)
                .map(|t| sim(&format!("{}_t{t}", algo.to_lowercase()), scenario(algo, t, 38, 7.5, Kicked)))
                .collect();
        }
        "figure9" => {
            for algo in ["IAS2D_c", "CAS2D_c"] {
                for t in [0, 2] {
                    let s = scenario(algo, t, 38, 7.5, Kicked).with_duration(60.0);
                    m.simulate.push(sim(&format!("{}_t{t}", algo.to_lowercase()), s));
                }
            }
        }
        "figure10" => {
            m.simulate = vec![
                sim("as1d_g", scenario("AS1D_g", 0, 38, 3.5, Kicked)),
                sim("ias2d_c", scenario("IAS2D_c", 2, 38, 9.0, Kicked)),
            ];
        }
        "figure11" => {
            m.simulate = vec![
                sim("as2d_c", scenario("AS2D_c", 0, 38, 7.5, Kicked)),
                sim("ias2d_c", scenario("IAS2D_c", 2, 38, 7.5, Kicked)),
            ];
        }
        "zroots" => {
            m.stability = [("AS1D_c", 0), ("AS2D_c", 0), ("IAS1D_c", 2), ("IAS2D_c", 2)]
                .into_iter()
                .map(|(algo, t)| StabilityJob {
                    label: algo.to_lowercase(),
                    scenario: Some(scenario(algo, t, 36, 10.49, Uniform)),
                    fixture: None,
                    margin: default_margin(),
                    relative_step: default_step(),
                })
                .collect();
        }
        "shallow-waves" => {
            let quiet = scenario("AS2D_c", 0, 36, 10.49, Uniform);
            let mut noisy = quiet.clone();
            noisy.noise = NoiseSpec {
                sigma_x: 0.0,
                sigma_v: 0.01,
                sigma_a: 0.01,
                seed: 0,
            };
            m.simulate = vec![sim("noiseless", quiet), sim("noisy", noisy)];
        }
        "benchmark" => {
            let case = |label: &str, n: usize, t: usize| BenchmarkCase {
                label: label.into(),
                scenario: scenario("IAS2D_c", t, n, 10.49, Kicked),
            };
            m.benchmark = Some(BenchmarkJob {
                steps: 1000,
                warmup: 20,
                cases: vec![case("n30_t2", 30, 2), case("n30_t0", 30, 0), case("n2_t2", 2, 2)],
            });
        }
        _ => return None,
    }
    Some(m)
}
