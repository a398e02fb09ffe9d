//! Offline search for the density-dependent ideal speed.
//!
//! For each density the scenario is run at every `v*` of a grid; the chosen
//! `v*` maximizes the mean velocity among points whose amplitude stays
//! within `bound + tolerance`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coordination::AlgorithmSpec;
use crate::scalar::Scalar;
use crate::simulator::{run_order_parameters, InitialCondition, OrderParameters, ScenarioConfig};
use crate::{Error, Result};

/// Baseline ideal speed of non-intervened driving (m/s).
pub const BASELINE_V_STAR: f64 = 10.49;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Scalar + serde::de::DeserializeOwned"))]
pub struct SweepSpec<T> {
    /// Fleet sizes; density is `N / C` of the template ring.
    pub vehicle_counts: Vec<usize>,
    pub v_star_min: T,
    pub v_star_max: T,
    pub v_star_step: T,
    /// Amplitude bound Λ̄ (m/s).
    pub amplitude_bound: T,
    /// Slack ε_A added to the bound (m/s).
    pub amplitude_tolerance: T,
    /// Per-point scenario; ring size, algorithm and `v*` are overwritten.
    pub template: ScenarioConfig<T>,
}

impl<T: Scalar> SweepSpec<T> {
    /// `v*` ∈ [2, 12] in 0.5 steps, Λ̄ = 0, ε_A = 0.1, kicked 600 s runs on C = 314.
    pub fn standard(vehicle_counts: Vec<usize>) -> Self {
        Self {
            vehicle_counts,
            v_star_min: T::lit(2.0),
            v_star_max: T::lit(12.0),
            v_star_step: T::lit(0.5),
            amplitude_bound: T::zero(),
            amplitude_tolerance: T::lit(0.1),
            template: ScenarioConfig::new(T::lit(314.0), 1, AlgorithmSpec::as1d_g(), InitialCondition::Kicked),
        }
    }

    pub fn v_star_grid(&self) -> Vec<T> {
        let span = (self.v_star_max - self.v_star_min) / self.v_star_step;
        let count = (span + T::lit(1e-9)).floor().to_usize().unwrap_or(0) + 1;
        (0..count)
            .map(|k| self.v_star_min + T::from_usize_lossy(k) * self.v_star_step)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.vehicle_counts.is_empty() {
            return Err(Error::invalid("sweep needs at least one vehicle count"));
        }
        if !(self.v_star_step > T::zero()) || !(self.v_star_max >= self.v_star_min) || !(self.v_star_min > T::zero()) {
            return Err(Error::invalid("v* grid must be non-empty, positive and ascending"));
        }
        if !(self.amplitude_tolerance > T::zero()) || self.amplitude_bound < T::zero() {
            return Err(Error::invalid("amplitude tolerance must be positive and bound non-negative"));
        }
        Ok(())
    }

    /// Scenario for one grid point.
    pub fn scenario(&self, algorithm: AlgorithmSpec, vehicle_count: usize, v_star: T) -> ScenarioConfig<T> {
        let mut cfg = self.template.clone();
        cfg.ring.vehicle_count = vehicle_count;
        cfg.algorithm = algorithm;
        cfg.kick.vehicle = None;
        cfg.with_v_star(v_star)
    }

    fn threshold(&self) -> T {
        self.amplitude_bound + self.amplitude_tolerance
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint<T> {
    pub vehicle_count: usize,
    pub density: T,
    pub v_star: T,
    pub mean_velocity: T,
    pub amplitude: T,
    /// No vehicle passed through its leader during the run.
    pub ordering_intact: bool,
    /// Ordering intact and amplitude within the bound.
    pub feasible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityOptimum<T> {
    pub vehicle_count: usize,
    pub density: T,
    /// `None` when no `v*` was feasible.
    pub v_star_opt: Option<T>,
    pub mean_velocity: Option<T>,
    pub amplitude: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult<T> {
    pub algorithm: String,
    /// Sorted by `(N, v*)`.
    pub points: Vec<SweepPoint<T>>,
    /// One entry per vehicle count, ascending.
    pub optima: Vec<DensityOptimum<T>>,
}

impl<T: Scalar> SweepResult<T> {
    pub fn optimum(&self, vehicle_count: usize) -> Option<&DensityOptimum<T>> {
        self.optima.iter().find(|o| o.vehicle_count == vehicle_count)
    }

    /// Densities with no feasible `v*`.
    pub fn infeasible(&self) -> Vec<usize> {
        self.optima
            .iter()
            .filter(|o| o.v_star_opt.is_none())
            .map(|o| o.vehicle_count)
            .collect()
    }

    /// Grid points that are infeasible while a larger `v*` at the same
    /// density is feasible.
    pub fn feasibility_violations(&self) -> Vec<(usize, T)> {
        let mut out = Vec::new();
        for (k, p) in self.points.iter().enumerate() {
            if p.feasible {
                continue;
            }
            let later = self.points[k + 1..]
                .iter()
                .any(|q| q.vehicle_count == p.vehicle_count && q.feasible);
            if later {
                out.push((p.vehicle_count, p.v_star));
            }
        }
        out
    }

    /// `algorithm,rho,v_star,V,A,feasible`
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["algorithm", "rho", "v_star", "V", "A", "feasible"])?;
        for p in &self.points {
            w.write_record([
                self.algorithm.clone(),
                p.density.to_string(),
                p.v_star.to_string(),
                p.mean_velocity.to_string(),
                p.amplitude.to_string(),
                p.feasible.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs every grid point with [`run_order_parameters`].
pub fn optimize_v_star<T: Scalar>(spec: &SweepSpec<T>, algorithm: AlgorithmSpec) -> Result<SweepResult<T>> {
    optimize_v_star_with(spec, algorithm, |cfg| run_order_parameters(cfg))
}

/// Same as [`optimize_v_star`] with a caller-supplied point evaluator.
pub fn optimize_v_star_with<T, F>(spec: &SweepSpec<T>, algorithm: AlgorithmSpec, eval: F) -> Result<SweepResult<T>>
where
    T: Scalar,
    F: Fn(&ScenarioConfig<T>) -> Result<OrderParameters<T>> + Sync,
{
    spec.validate()?;
    algorithm.validate()?;
    let grid = spec.v_star_grid();
    let mut jobs: Vec<(usize, T)> = Vec::new();
    for &n in &spec.vehicle_counts {
        for &v in &grid {
            jobs.push((n, v));
        }
    }
    let threshold = spec.threshold();
    let circumference = spec.template.ring.circumference;
    let mut points = jobs
        .par_iter()
        .map(|&(n, v)| {
            let cfg = spec.scenario(algorithm, n, v);
            let op = eval(&cfg)?;
            Ok(SweepPoint {
                vehicle_count: n,
                density: T::from_usize_lossy(n) / circumference,
                v_star: v,
                mean_velocity: op.mean_velocity,
                amplitude: op.amplitude,
                ordering_intact: op.ordering_intact,
                feasible: op.ordering_intact && op.amplitude <= threshold,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    points.sort_by(|a, b| {
        a.vehicle_count
            .cmp(&b.vehicle_count)
            .then(a.v_star.partial_cmp(&b.v_star).expect("finite v*"))
    });
    let mut counts = spec.vehicle_counts.clone();
    counts.sort_unstable();
    counts.dedup();
    let optima = counts
        .into_iter()
        .map(|n| {
            let best = points
                .iter()
                .filter(|p| p.vehicle_count == n && p.feasible)
                // ties keep the smaller v*
                .fold(None::<&SweepPoint<T>>, |acc, p| match acc {
                    Some(b) if b.mean_velocity >= p.mean_velocity => Some(b),
                    _ => Some(p),
                });
            DensityOptimum {
                vehicle_count: n,
                density: T::from_usize_lossy(n) / circumference,
                v_star_opt: best.map(|p| p.v_star),
                mean_velocity: best.map(|p| p.mean_velocity),
                amplitude: best.map(|p| p.amplitude),
            }
        })
        .collect();
    Ok(SweepResult {
        algorithm: algorithm.name(),
        points,
        optima,
    })
}

/// One run of the benefit table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenefitEntry<T> {
    pub v_star: T,
    pub mean_velocity: T,
    pub amplitude: T,
    pub ordering_intact: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenefitRow<T> {
    pub vehicle_count: usize,
    pub density: T,
    /// AS1D_g at the baseline ideal speed.
    pub baseline: BenefitEntry<T>,
    /// AS1D_g at its own optimum.
    pub vsa: Option<BenefitEntry<T>>,
    pub ias: Option<BenefitEntry<T>>,
    pub cas: Option<BenefitEntry<T>>,
}

/// Optimal ideal speeds feeding one row of the benefit table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenefitInputs<T> {
    pub vehicle_count: usize,
    pub vsa_v_star: Option<T>,
    /// Shared by the IAS2D_c and CAS2D_c arms.
    pub coordinated_v_star: Option<T>,
}

/// Four-curve table: baseline, VSA, IAS2D_c and CAS2D_c.
pub fn benefit_curve<T: Scalar>(
    template: &ScenarioConfig<T>,
    inputs: &[BenefitInputs<T>],
    iterations: usize,
) -> Result<Vec<BenefitRow<T>>> {
    benefit_curve_with(template, inputs, iterations, |cfg| run_order_parameters(cfg))
}

pub fn benefit_curve_with<T, F>(
    template: &ScenarioConfig<T>,
    inputs: &[BenefitInputs<T>],
    iterations: usize,
    eval: F,
) -> Result<Vec<BenefitRow<T>>>
where
    T: Scalar,
    F: Fn(&ScenarioConfig<T>) -> Result<OrderParameters<T>> + Sync,
{
    let spec = SweepSpec {
        template: template.clone(),
        ..SweepSpec::standard(vec![1])
    };
    let arm = |algorithm: AlgorithmSpec, n: usize, v: Option<T>| -> Result<Option<BenefitEntry<T>>> {
        v.map(|v| {
            let op = eval(&spec.scenario(algorithm, n, v))?;
            Ok(BenefitEntry {
                v_star: v,
                mean_velocity: op.mean_velocity,
                amplitude: op.amplitude,
                ordering_intact: op.ordering_intact,
            })
        })
        .transpose()
    };
    inputs
        .par_iter()
        .map(|row| {
            let n = row.vehicle_count;
            let baseline = arm(AlgorithmSpec::as1d_g(), n, Some(T::lit(BASELINE_V_STAR)))?.expect("baseline arm");
            Ok(BenefitRow {
                vehicle_count: n,
                density: T::from_usize_lossy(n) / template.ring.circumference,
                baseline,
                vsa: arm(AlgorithmSpec::as1d_g(), n, row.vsa_v_star)?,
                ias: arm(AlgorithmSpec::ias2d_c(iterations), n, row.coordinated_v_star)?,
                cas: arm(AlgorithmSpec::cas2d_c(iterations), n, row.coordinated_v_star)?,
            })
        })
        .collect()
}

/// `rho,arm,v_star,V,A`
pub fn write_benefit_csv<T: Scalar, W: Write>(rows: &[BenefitRow<T>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rho", "arm", "v_star", "V", "A"])?;
    for r in rows {
        let arms = [
            ("baseline", Some(r.baseline)),
            ("vsa", r.vsa),
            ("ias2d_c", r.ias),
            ("cas2d_c", r.cas),
        ];
        for (name, e) in arms {
            if let Some(e) = e {
                w.write_record([
                    r.density.to_string(),
                    name.to_string(),
                    e.v_star.to_string(),
                    e.mean_velocity.to_string(),
                    e.amplitude.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
