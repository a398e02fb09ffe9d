//! Executes manifests and writes artifacts.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use ringdmpc::mechanism::{self, BenefitInputs};
use ringdmpc::simulator::{self, RunSummary, Simulation};
use ringdmpc::stability::{self, FixedPointOptions, JacobianOptions, PolicyJacobian};
use ringdmpc::{AlgorithmSpec, Verdict};
use serde::Serialize;
use serde_json::json;

use crate::manifest::{BenchmarkJob, Manifest, StabilityJob};

/// Failure classes mapped to exit codes by `main`.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let (kind, err) = match self {
            Failure::Config(e) => ("config", e),
            Failure::Runtime(e) => ("runtime", e),
        };
        json!({ "error": { "kind": kind, "message": format!("{err:#}") } })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Sweep,
    Stability,
    Benchmark,
}

/// Rejects manifests that cannot run under `command` before anything starts.
pub fn validate(manifest: &Manifest, command: Command) -> Result<()> {
    let present = match command {
        Command::Simulate => !manifest.simulate.is_empty(),
        Command::Sweep => !manifest.sweep.is_empty() || manifest.benefit.is_some(),
        Command::Stability => !manifest.stability.is_empty(),
        Command::Benchmark => manifest.benchmark.is_some(),
    };
    if !present {
        bail!("manifest `{}` has no jobs for {command:?}", manifest.name);
    }
    let mut labels = std::collections::BTreeSet::new();
    let mut unique = |label: &str| -> Result<()> {
        if label.is_empty() || label.contains(['/', '\\']) {
            bail!("invalid label `{label}`");
        }
        if !labels.insert(label.to_string()) {
            bail!("duplicate label `{label}`");
        }
        Ok(())
    };
    for job in &manifest.simulate {
        unique(&job.label)?;
        job.scenario.validate().with_context(|| format!("simulate `{}`", job.label))?;
    }
    for job in &manifest.sweep {
        unique(&job.label)?;
        job.spec.validate().with_context(|| format!("sweep `{}`", job.label))?;
        if job.algorithms.is_empty() {
            bail!("sweep `{}` lists no algorithms", job.label);
        }
        for &n in &job.spec.vehicle_counts {
            for a in &job.algorithms {
                job.spec.scenario(*a, n, job.spec.v_star_min).validate().with_context(|| format!("sweep `{}`", job.label))?;
            }
        }
    }
    if let Some(job) = &manifest.benefit {
        unique(&job.label)?;
        job.spec.validate().with_context(|| format!("benefit `{}`", job.label))?;
        for &n in &job.spec.vehicle_counts {
            let cfg = job.spec.scenario(AlgorithmSpec::cas2d_c(job.iterations), n, job.spec.v_star_min);
            cfg.validate().with_context(|| format!("benefit `{}`", job.label))?;
        }
    }
    for job in &manifest.stability {
        unique(&job.label)?;
        match (&job.scenario, &job.fixture) {
            (Some(s), None) => s.validate().with_context(|| format!("stability `{}`", job.label))?,
            (None, Some(f)) => {
                if f.vehicle_count == 0 || f.betas.is_empty() {
                    bail!("stability `{}`: fixture needs vehicles and betas", job.label);
                }
            }
            _ => bail!("stability `{}` needs exactly one of scenario or fixture", job.label),
        }
        if !(job.margin >= 0.0 && job.relative_step > 0.0) {
            bail!("stability `{}`: margin must be >= 0 and relative_step > 0", job.label);
        }
    }
    if let Some(b) = &manifest.benchmark {
        if b.steps == 0 || b.cases.is_empty() {
            bail!("benchmark needs steps > 0 and at least one case");
        }
        for c in &b.cases {
            unique(&c.label)?;
            c.scenario.validate().with_context(|| format!("benchmark `{}`", c.label))?;
        }
    }
    Ok(())
}

struct Artifacts {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Artifacts {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        self.written.push(path);
        Ok(BufWriter::new(file))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut w = self.create(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }
}

/// Runs the jobs of `command` and returns the written paths.
pub fn execute(manifest: &Manifest, command: Command, out_root: &Path) -> Result<Vec<PathBuf>> {
    let dir = out_root.join(&manifest.name);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut art = Artifacts { dir, written: vec![] };
    match command {
        Command::Simulate => simulate(manifest, &mut art)?,
        Command::Sweep => sweep(manifest, &mut art)?,
        Command::Stability => {
            for job in &manifest.stability {
                stability_job(job, &mut art)?;
            }
        }
        Command::Benchmark => benchmark(manifest.benchmark.as_ref().expect("validated"), &mut art)?,
    }
    Ok(art.written)
}

fn simulate(manifest: &Manifest, art: &mut Artifacts) -> Result<()> {
    for job in &manifest.simulate {
        let traj = simulator::run(&job.scenario).with_context(|| format!("simulate `{}`", job.label))?;
        if job.trajectory {
            let mut w = art.create(&format!("{}.csv", job.label))?;
            simulator::write_trajectory_csv(&traj, &mut w)?;
            w.flush()?;
        }
        let summary = RunSummary::new(&job.scenario, &traj)?;
        art.json(&format!("{}.summary.json", job.label), &summary)?;
        eprintln!(
            "{}: V={:.4} A={:.4} min gap={:.3} safety events={}",
            job.label,
            summary.order_parameters.mean_velocity,
            summary.order_parameters.amplitude,
            summary.min_bumper_gap,
            summary.safety_events
        );
        if !summary.order_parameters.ordering_intact {
            eprintln!("{}: a vehicle passed through its leader; V and A are not meaningful", job.label);
        }
    }
    Ok(())
}

fn sweep(manifest: &Manifest, art: &mut Artifacts) -> Result<()> {
    for job in &manifest.sweep {
        for algo in &job.algorithms {
            let res = mechanism::optimize_v_star(&job.spec, *algo)?;
            let stem = format!("{}.{}", job.label, algo.name().to_lowercase());
            let mut w = art.create(&format!("{stem}.csv"))?;
            res.write_csv(&mut w)?;
            w.flush()?;
            art.json(&format!("{stem}.json"), &res)?;
            for n in res.infeasible() {
                eprintln!("{stem}: no feasible v* at N={n}");
            }
        }
    }
    if let Some(job) = &manifest.benefit {
        let vsa = mechanism::optimize_v_star(&job.spec, AlgorithmSpec::as1d_g())?;
        let ias = mechanism::optimize_v_star(&job.spec, AlgorithmSpec::ias2d_c(job.iterations))?;
        for (tag, res) in [("as1d_g", &vsa), ("ias2d_c", &ias)] {
            let mut w = art.create(&format!("{}.vstar.{tag}.csv", job.label))?;
            res.write_csv(&mut w)?;
            w.flush()?;
        }
        let inputs: Vec<BenefitInputs<f64>> = vsa
            .optima
            .iter()
            .map(|o| BenefitInputs {
                vehicle_count: o.vehicle_count,
                vsa_v_star: o.v_star_opt,
                coordinated_v_star: ias.optimum(o.vehicle_count).and_then(|i| i.v_star_opt),
            })
            .collect();
        let rows = mechanism::benefit_curve(&job.spec.template, &inputs, job.iterations)?;
        let mut w = art.create(&format!("{}.csv", job.label))?;
        mechanism::write_benefit_csv(&rows, &mut w)?;
        w.flush()?;
        art.json(
            &format!("{}.json", job.label),
            &json!({ "v_star_opt": { "AS1D_g": vsa.optima, "IAS2D_c": ias.optima }, "rows": rows }),
        )?;
    }
    Ok(())
}

fn jacobian_for(job: &StabilityJob) -> Result<(PolicyJacobian<f64>, usize, f64, f64, Option<String>)> {
    if let Some(f) = &job.fixture {
        let jac = PolicyJacobian {
            fixed_point: stability::FixedPoint {
                headway: 0.0,
                velocity: 0.0,
                residual: 0.0,
            },
            ahead: f.betas.iter().map(|b| b.offset.max(0) as usize).max().unwrap_or(0),
            behind: f.betas.iter().map(|b| (-b.offset).max(0) as usize).max().unwrap_or(0),
            betas: f.betas.clone(),
            flagged: vec![],
        };
        return Ok((jac, f.vehicle_count, f.dt, f.gamma, None));
    }
    let cfg = job.scenario.as_ref().expect("validated");
    let policy = cfg.policy()?;
    let fp = stability::find_fixed_point(&policy, &cfg.ring, FixedPointOptions::default())?;
    let jac = stability::policy_jacobian(
        &policy,
        &cfg.ring,
        fp,
        JacobianOptions {
            relative_step: job.relative_step,
            ..JacobianOptions::default()
        },
    )?;
    Ok((jac, cfg.ring.vehicle_count, cfg.vehicle.dt, cfg.vehicle.gamma, Some(cfg.algorithm.name())))
}

fn stability_job(job: &StabilityJob, art: &mut Artifacts) -> Result<()> {
    let (jac, n, dt, gamma, algorithm) = jacobian_for(job).with_context(|| format!("stability `{}`", job.label))?;
    let spectrum = stability::z_roots(&jac, n, dt, gamma);
    let verdict: Verdict = stability::classify(&spectrum, job.margin);
    let mut w = art.create(&format!("{}.zroots.csv", job.label))?;
    {
        let mut c = csv::Writer::from_writer(&mut w);
        c.write_record([
            "k", "re_bx", "im_bx", "re_bv", "im_bv", "re_z1", "im_z1", "re_z2", "im_z2", "max_abs_z",
        ])?;
        for m in &spectrum.modes {
            c.write_record([
                m.k.to_string(),
                m.b_x.re.to_string(),
                m.b_x.im.to_string(),
                m.b_v.re.to_string(),
                m.b_v.im.to_string(),
                m.roots[0].re.to_string(),
                m.roots[0].im.to_string(),
                m.roots[1].re.to_string(),
                m.roots[1].im.to_string(),
                m.max_modulus().to_string(),
            ])?;
        }
        c.flush()?;
    }
    w.flush()?;
    let b_a: Vec<[f64; 3]> = spectrum.modes.iter().map(|m| [m.k as f64, m.b_a.re, m.b_a.im]).collect();
    art.json(
        &format!("{}.verdict.json", job.label),
        &json!({
            "label": job.label,
            "algorithm": algorithm,
            "verdict": verdict,
            "margin": job.margin,
            "max_abs_z": spectrum.max_modulus_excluding_translation(),
            "sum_beta_x": jac.sum_x(),
            "jacobian": jac,
            "b_a": b_a,
        }),
    )?;
    eprintln!(
        "{}: {:?} (max |z| = {:.6})",
        job.label,
        verdict,
        spectrum.max_modulus_excluding_translation()
    );
    Ok(())
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

fn benchmark(job: &BenchmarkJob, art: &mut Artifacts) -> Result<()> {
    let mut cases = Vec::new();
    for case in &job.cases {
        let mut cfg = case.scenario.clone();
        let needed = (job.warmup + job.steps) as f64 * cfg.vehicle.dt;
        cfg.duration = cfg.duration.max(needed + 1.0);
        let mut sim = Simulation::new(cfg)?;
        for _ in 0..job.warmup {
            sim.advance()?;
        }
        let mut times = Vec::with_capacity(job.steps);
        for _ in 0..job.steps {
            let start = Instant::now();
            sim.advance()?;
            times.push(start.elapsed().as_secs_f64() * 1e3);
        }
        let mean = times.iter().sum::<f64>() / times.len() as f64;
        times.sort_by(f64::total_cmp);
        eprintln!("{}: mean {:.3} ms/step, p50 {:.3}, p99 {:.3}", case.label, mean, percentile(&times, 0.5), percentile(&times, 0.99));
        cases.push(json!({
            "label": case.label,
            "vehicle_count": case.scenario.ring.vehicle_count,
            "algorithm": case.scenario.algorithm.name(),
            "iterations": case.scenario.algorithm.iterations,
            "steps": job.steps,
            "mean_ms": mean,
            "p50_ms": percentile(&times, 0.5),
            "p90_ms": percentile(&times, 0.9),
            "p99_ms": percentile(&times, 0.99),
            "max_ms": times[times.len() - 1],
        }));
    }
    art.json(
        "benchmark.json",
        &json!({ "threads": rayon::current_num_threads(), "target_ms": 10.0, "cases": cases }),
    )
}
