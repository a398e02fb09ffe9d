//! Closed-loop fleet simulation on the ring and the order parameters
//! `V` (mean speed) and `A` (mean instantaneous speed spread).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::coordination::{AlgorithmSpec, FleetPolicy};
use crate::model::{step_vehicle, KinematicState, NoiseSpec, RingGeometry, VehicleParams};
use crate::optimizer::GridSpec;
use crate::scalar::Scalar;
use crate::utility::UtilityParams;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialCondition {
    /// Equal spacing, common speed, zero acceleration.
    Uniform,
    /// Uniform start followed by a braking kick on one vehicle.
    Kicked,
}

/// Constant braking applied to one vehicle at the start of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Scalar + serde::de::DeserializeOwned"))]
pub struct KickSpec<T> {
    /// Overriding action (m/s²).
    pub magnitude: T,
    /// Length of the kick window (s).
    pub duration: T,
    /// Kicked vehicle; the last vehicle when absent.
    pub vehicle: Option<usize>,
}

impl<T: Scalar> Default for KickSpec<T> {
    fn default() -> Self {
        Self {
            magnitude: T::lit(-1.0),
            duration: T::lit(6.0),
            vehicle: None,
        }
    }
}

/// Action override for the kicked vehicle at `elapsed` seconds into the
/// run, while it is still moving forward.
pub fn apply_kick<T: Scalar>(kick: &KickSpec<T>, elapsed: T, velocity: T) -> Option<T> {
    (elapsed < kick.duration && velocity > T::zero()).then_some(kick.magnitude)
}

/// Everything needed to reproduce one closed-loop run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Scalar + serde::de::DeserializeOwned"))]
pub struct ScenarioConfig<T> {
    pub ring: RingGeometry<T>,
    pub algorithm: AlgorithmSpec,
    #[serde(default)]
    pub utility: UtilityParams<T>,
    #[serde(default)]
    pub vehicle: VehicleParams<T>,
    #[serde(default)]
    pub grid: GridSpec<T>,
    #[serde(default)]
    pub noise: NoiseSpec,
    /// Simulated time (s).
    pub duration: T,
    /// Leading time excluded from the order parameters (s); half the
    /// duration when absent.
    #[serde(default)]
    pub transient_skip: Option<T>,
    pub initial: InitialCondition,
    /// Common initial speed; `v_star - 1` when absent.
    #[serde(default)]
    pub initial_speed: Option<T>,
    #[serde(default)]
    pub kick: KickSpec<T>,
}

impl<T: Scalar> ScenarioConfig<T> {
    /// 600 s run with the standard parameter set.
    pub fn new(circumference: T, vehicle_count: usize, algorithm: AlgorithmSpec, initial: InitialCondition) -> Self {
        Self {
            ring: RingGeometry {
                circumference,
                vehicle_count,
            },
            algorithm,
            utility: UtilityParams::default(),
            vehicle: VehicleParams::default(),
            grid: GridSpec::default(),
            noise: NoiseSpec::default(),
            duration: T::lit(600.0),
            transient_skip: None,
            initial,
            initial_speed: None,
            kick: KickSpec::default(),
        }
    }

    pub fn with_v_star(mut self, v_star: T) -> Self {
        self.utility.v_star = v_star;
        self
    }

    pub fn with_duration(mut self, duration: T) -> Self {
        self.duration = duration;
        self
    }

    pub fn step_count(&self) -> usize {
        (self.duration / self.vehicle.dt).round().to_usize().unwrap_or(0)
    }

    pub fn skip(&self) -> T {
        self.transient_skip.unwrap_or(self.duration / T::lit(2.0))
    }

    pub fn skip_steps(&self) -> usize {
        (self.skip() / self.vehicle.dt).round().to_usize().unwrap_or(0)
    }

    pub fn kicked_vehicle(&self) -> usize {
        self.kick.vehicle.unwrap_or(self.ring.vehicle_count - 1)
    }

    pub fn validate(&self) -> Result<()> {
        self.ring.validate()?;
        self.algorithm.validate()?;
        self.utility.validate()?;
        self.vehicle.validate()?;
        self.grid.validate()?;
        self.noise.validate()?;
        let skip = self.skip();
        if !(self.duration > skip && skip >= T::zero()) {
            return Err(Error::invalid("duration must exceed transient_skip >= 0"));
        }
        if self.kicked_vehicle() >= self.ring.vehicle_count {
            return Err(Error::invalid("kicked vehicle index out of range"));
        }
        if T::from_usize_lossy(self.ring.vehicle_count) * self.vehicle.length > self.ring.circumference {
            return Err(Error::VehiclesDoNotFit {
                count: self.ring.vehicle_count,
                length: self.vehicle.length.as_f64(),
                circumference: self.ring.circumference.as_f64(),
            });
        }
        Ok(())
    }

    pub fn policy(&self) -> Result<FleetPolicy<T>> {
        FleetPolicy::new(self.algorithm, self.utility, self.vehicle, self.grid.clone())
    }
}

/// Equally spaced fleet at the configured initial speed.
pub fn init_fleet<T: Scalar>(config: &ScenarioConfig<T>) -> Result<Vec<KinematicState<T>>> {
    config.validate()?;
    let spacing = config.ring.equal_spacing();
    let v0 = config
        .initial_speed
        .unwrap_or(config.utility.v_star - T::one());
    Ok((0..config.ring.vehicle_count)
        .map(|i| KinematicState::new(T::from_usize_lossy(i) * spacing, v0, T::zero()))
        .collect())
}

/// Bumper-to-bumper overlap observed during a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyEvent {
    pub step: usize,
    pub agent: usize,
    pub bumper_gap: f64,
}

/// State of the whole fleet at one step, with the actions executed from it.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord<T> {
    pub states: Vec<KinematicState<T>>,
    pub actions: Vec<T>,
    pub headways: Vec<T>,
    /// Largest plan change per τ-round.
    pub round_deltas: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FleetTrajectory<T> {
    pub dt: T,
    pub circumference: T,
    pub steps: Vec<StepRecord<T>>,
    pub events: Vec<SafetyEvent>,
    pub min_bumper_gap: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderParameters<T> {
    /// Mean speed over vehicles and post-transient steps (m/s).
    pub mean_velocity: T,
    /// Mean over post-transient steps of the max-min speed spread (m/s).
    pub amplitude: T,
    /// False once any vehicle has passed through its leader at any step of
    /// the run; `V` and `A` then describe a fleet whose order wound around
    /// the ring more than once.
    #[serde(default = "intact")]
    pub ordering_intact: bool,
}

fn intact() -> bool {
    true
}

/// Number of times the fleet order winds around the ring: 1 while no vehicle
/// has passed its leader.
pub fn winding<T: Scalar>(headways: &[T], circumference: T) -> usize {
    let total: f64 = headways.iter().map(|d| d.as_f64()).sum();
    (total / circumference.as_f64()).round() as usize
}

/// Headway of every vehicle to its leader.
pub fn headways<T: Scalar>(states: &[KinematicState<T>], circumference: T) -> Vec<T> {
    let n = states.len();
    (0..n)
        .map(|i| crate::model::wrap_unchecked(states[(i + 1) % n].x - states[i].x, circumference))
        .collect()
}

fn speed_spread<T: Scalar>(states: &[KinematicState<T>]) -> T {
    let (lo, hi) = states
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), s| (lo.min(s.v), hi.max(s.v)));
    hi - lo
}

/// Running accumulator for `V` and `A`.
#[derive(Debug, Clone, Copy, Default)]
pub struct OrderAccumulator {
    speed_sum: f64,
    speed_count: usize,
    spread_sum: f64,
    steps: usize,
    passed: bool,
}

impl OrderAccumulator {
    pub fn push<T: Scalar>(&mut self, states: &[KinematicState<T>]) {
        for s in states {
            self.speed_sum += s.v.as_f64();
        }
        self.speed_count += states.len();
        self.spread_sum += speed_spread(states).as_f64();
        self.steps += 1;
    }

    /// Records whether the order is still intact; call on every step,
    /// including the transient.
    pub fn watch<T: Scalar>(&mut self, headways: &[T], circumference: T) {
        self.passed |= winding(headways, circumference) > 1;
    }

    pub fn finish<T: Scalar>(&self) -> Option<OrderParameters<T>> {
        (self.steps > 0).then(|| OrderParameters {
            mean_velocity: T::lit(self.speed_sum / self.speed_count as f64),
            amplitude: T::lit(self.spread_sum / self.steps as f64),
            ordering_intact: !self.passed,
        })
    }
}

/// `V` and `A` over the steps at or after `skip_steps`.
pub fn order_parameters<T: Scalar>(trajectory: &FleetTrajectory<T>, skip_steps: usize) -> Result<OrderParameters<T>> {
    let mut acc = OrderAccumulator::default();
    for (step, rec) in trajectory.steps.iter().enumerate() {
        acc.watch(&rec.headways, trajectory.circumference);
        if step >= skip_steps {
            acc.push(&rec.states);
        }
    }
    acc.finish().ok_or(Error::EmptyWindow {
        skip: skip_steps,
        total: trajectory.steps.len(),
    })
}

/// First time (s) after which the fleet speed spread stays below
/// `threshold` for the rest of the trajectory.
pub fn settling_time<T: Scalar>(trajectory: &FleetTrajectory<T>, threshold: T) -> Option<T> {
    let last_bad = trajectory
        .steps
        .iter()
        .rposition(|r| speed_spread(&r.states) >= threshold);
    match last_bad {
        None => Some(T::zero()),
        Some(k) if k + 1 < trajectory.steps.len() => Some(T::from_usize_lossy(k + 1) * trajectory.dt),
        Some(_) => None,
    }
}

/// Stepwise closed-loop simulation.
#[derive(Debug, Clone)]
pub struct Simulation<T> {
    config: ScenarioConfig<T>,
    policy: FleetPolicy<T>,
    states: Vec<KinematicState<T>>,
    previous_actions: Vec<T>,
    step: usize,
}

impl<T: Scalar> Simulation<T> {
    pub fn new(config: ScenarioConfig<T>) -> Result<Self> {
        let states = init_fleet(&config)?;
        let policy = config.policy()?;
        let n = config.ring.vehicle_count;
        Ok(Self {
            config,
            policy,
            states,
            previous_actions: vec![T::zero(); n],
            step: 0,
        })
    }

    /// Starts from an arbitrary fleet state instead of the configured one.
    pub fn from_states(config: ScenarioConfig<T>, states: Vec<KinematicState<T>>) -> Result<Self> {
        let mut sim = Self::new(config)?;
        if states.len() != sim.states.len() {
            return Err(Error::LengthMismatch {
                what: "initial fleet",
                expected: sim.states.len(),
                got: states.len(),
            });
        }
        sim.states = states;
        Ok(sim)
    }

    pub fn states(&self) -> &[KinematicState<T>] {
        &self.states
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn config(&self) -> &ScenarioConfig<T> {
        &self.config
    }

    /// Advances one step and returns the record of the state it started from.
    pub fn advance(&mut self) -> Result<StepRecord<T>> {
        let ring = self.config.ring;
        let step = self.step;
        let wrap = |source: Error, agent: usize| Error::Step {
            step,
            agent,
            source: Box::new(source),
        };
        let outcome = self.policy.tau_loop(&self.states, &ring).map_err(|e| {
            let agent = match &e {
                Error::NonFiniteUtility { agent, .. } => *agent,
                _ => 0,
            };
            wrap(e, agent)
        })?;
        let mut actions = outcome.actions;
        if self.config.initial == InitialCondition::Kicked {
            let k = self.config.kicked_vehicle();
            let elapsed = T::from_usize_lossy(step) * self.config.vehicle.dt;
            if let Some(u) = apply_kick(&self.config.kick, elapsed, self.states[k].v) {
                actions[k] = u;
            }
        }
        let c = ring.circumference;
        let next = self
            .states
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let noise = self.config.noise.draw(i, step);
                step_vehicle(s, actions[i], self.previous_actions[i], &self.config.vehicle, c, noise)
                    .map_err(|e| wrap(e, i))
            })
            .collect::<Result<Vec<_>>>()?;
        let record = StepRecord {
            headways: headways(&self.states, c),
            states: std::mem::replace(&mut self.states, next),
            actions: actions.clone(),
            round_deltas: outcome.round_deltas,
        };
        self.previous_actions = actions;
        self.step += 1;
        Ok(record)
    }
}

/// Runs the configured scenario and records every step.
pub fn run<T: Scalar>(config: &ScenarioConfig<T>) -> Result<FleetTrajectory<T>> {
    let mut sim = Simulation::new(config.clone())?;
    let n = config.step_count();
    let length = config.vehicle.length;
    let mut steps = Vec::with_capacity(n);
    let mut events = Vec::new();
    let mut min_gap = T::infinity();
    for step in 0..n {
        let rec = sim.advance()?;
        for (agent, &d) in rec.headways.iter().enumerate() {
            let gap = d - length;
            min_gap = min_gap.min(gap);
            if gap < T::zero() {
                events.push(SafetyEvent {
                    step,
                    agent,
                    bumper_gap: gap.as_f64(),
                });
            }
        }
        steps.push(rec);
    }
    Ok(FleetTrajectory {
        dt: config.vehicle.dt,
        circumference: config.ring.circumference,
        steps,
        events,
        min_bumper_gap: min_gap,
    })
}

/// Runs the scenario keeping only the order parameters.
pub fn run_order_parameters<T: Scalar>(config: &ScenarioConfig<T>) -> Result<OrderParameters<T>> {
    let mut sim = Simulation::new(config.clone())?;
    let skip = config.skip_steps();
    let n = config.step_count();
    let mut acc = OrderAccumulator::default();
    for step in 0..n {
        let rec = sim.advance()?;
        acc.watch(&rec.headways, config.ring.circumference);
        if step >= skip {
            acc.push(&rec.states);
        }
    }
    acc.finish().ok_or(Error::EmptyWindow { skip, total: n })
}

/// Summary of one run, echoed next to the trajectory CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Scalar + serde::de::DeserializeOwned"))]
pub struct RunSummary<T> {
    pub config: ScenarioConfig<T>,
    pub order_parameters: OrderParameters<T>,
    pub steps: usize,
    pub min_bumper_gap: T,
    pub safety_events: usize,
    /// Largest last-round plan change seen over the run.
    pub max_final_round_delta: T,
    /// Mean plan change per τ-round, averaged over steps.
    pub mean_round_deltas: Vec<T>,
}

impl<T: Scalar> RunSummary<T> {
    pub fn new(config: &ScenarioConfig<T>, trajectory: &FleetTrajectory<T>) -> Result<Self> {
        let order_parameters = order_parameters(trajectory, config.skip_steps())?;
        let rounds = config.algorithm.iterations + 1;
        let mut sums = vec![0.0f64; rounds];
        let mut max_final = T::zero();
        for rec in &trajectory.steps {
            for (s, d) in sums.iter_mut().zip(&rec.round_deltas) {
                *s += d.as_f64();
            }
            if let Some(&last) = rec.round_deltas.last() {
                max_final = max_final.max(last);
            }
        }
        let n = trajectory.steps.len().max(1) as f64;
        Ok(Self {
            config: config.clone(),
            order_parameters,
            steps: trajectory.steps.len(),
            min_bumper_gap: trajectory.min_bumper_gap,
            safety_events: trajectory.events.len(),
            max_final_round_delta: max_final,
            mean_round_deltas: sums.into_iter().map(|s| T::lit(s / n)).collect(),
        })
    }
}

/// Writes one row per `(step, vehicle)`: `t,i,x,v,a,u,d`.
///
/// Floats use Rust's shortest round-trip formatting.
pub fn write_trajectory_csv<T: Scalar, W: Write>(trajectory: &FleetTrajectory<T>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "i", "x", "v", "a", "u", "d"])?;
    for (step, rec) in trajectory.steps.iter().enumerate() {
        let t = (T::from_usize_lossy(step) * trajectory.dt).to_string();
        for (i, s) in rec.states.iter().enumerate() {
            w.write_record([
                t.clone(),
                i.to_string(),
                s.x.to_string(),
                s.v.to_string(),
                s.a.to_string(),
                rec.actions[i].to_string(),
                rec.headways[i].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
