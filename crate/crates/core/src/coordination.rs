//! Iterated best-response dynamics over the whole fleet (the τ-loop), the
//! algorithm catalog and the plan-sharing board.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{KinematicState, RingGeometry, VehicleParams};
use crate::optimizer::{DecisionState, EgoProblem, GridSpec, HorizonPlan, SearchGrid};
use crate::scalar::Scalar;
use crate::utility::{Objective, UtilityForm, UtilityParams};
use crate::{Error, Result};

/// Coordination mechanism of an algorithm family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mechanism {
    /// `AS`: each agent reacts to perceived states only (no τ iterations).
    AdaptiveSeek,
    /// `IAS`: iterated best responses approximating a Nash equilibrium.
    Iterated,
    /// `CAS`: iterated best responses on the centralized-local objective.
    Centralized,
}

/// One entry of the algorithm catalog, e.g. `IAS2D_c` with `T = 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "AlgorithmEntry", into = "AlgorithmEntry")]
pub struct AlgorithmSpec {
    pub mechanism: Mechanism,
    /// Action-curve order: 0 for 1-D search, 1 for 2-D search.
    pub order: usize,
    pub form: UtilityForm,
    /// Depth `T` of the τ-loop; `T + 1` best-response rounds per step.
    pub iterations: usize,
}

impl AlgorithmSpec {
    pub fn new(mechanism: Mechanism, order: usize, form: UtilityForm, iterations: usize) -> Result<Self> {
        let spec = Self {
            mechanism,
            order,
            form,
            iterations,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Parses a catalog name such as `AS1D_g` or `CAS2D_c` and attaches `T`.
    pub fn named(name: &str, iterations: usize) -> Result<Self> {
        let base: AlgorithmSpec = name.parse()?;
        Self::new(base.mechanism, base.order, base.form, iterations)
    }

    pub fn as1d_g() -> Self {
        Self::named("AS1D_g", 0).expect("catalog entry")
    }

    pub fn ias2d_c(iterations: usize) -> Self {
        Self::named("IAS2D_c", iterations).expect("catalog entry")
    }

    pub fn cas2d_c(iterations: usize) -> Self {
        Self::named("CAS2D_c", iterations).expect("catalog entry")
    }

    pub fn validate(&self) -> Result<()> {
        if self.order > 1 {
            return Err(Error::invalid("action curves are constant (1D) or linear (2D)"));
        }
        if self.mechanism == Mechanism::AdaptiveSeek && self.iterations != 0 {
            return Err(Error::invalid("AS algorithms do not iterate (T must be 0)"));
        }
        if self.form == UtilityForm::GTransformed && self.mechanism != Mechanism::AdaptiveSeek {
            return Err(Error::invalid(
                "the g-transformed utility is only used by non-iterated AS algorithms",
            ));
        }
        Ok(())
    }

    pub fn objective(&self) -> Objective {
        match self.mechanism {
            Mechanism::Centralized => Objective::CentralizedLocal,
            _ => Objective::Own,
        }
    }

    /// Number of vehicles `(ahead, behind)` whose plans the ego reads in
    /// round `tau`; grows by one per round up to `T + 1`.
    pub fn attention_set(&self, tau: usize) -> (usize, usize) {
        let reach = tau.min(self.iterations) + 1;
        match self.objective() {
            Objective::Own => (reach, 0),
            Objective::CentralizedLocal => (reach, reach),
        }
    }

    pub fn name(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for AlgorithmSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.mechanism {
            Mechanism::AdaptiveSeek => "AS",
            Mechanism::Iterated => "IAS",
            Mechanism::Centralized => "CAS",
        };
        let suffix = match self.form {
            UtilityForm::GTransformed => "g",
            UtilityForm::Cumulative => "c",
        };
        write!(f, "{prefix}{}D_{suffix}", self.order + 1)
    }
}

impl FromStr for AlgorithmSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("unknown algorithm name `{s}`"));
        let (head, suffix) = s.split_once('_').ok_or_else(bad)?;
        let form = match suffix {
            "g" => UtilityForm::GTransformed,
            "c" => UtilityForm::Cumulative,
            _ => return Err(bad()),
        };
        let (mechanism, dims) = if let Some(rest) = head.strip_prefix("IAS") {
            (Mechanism::Iterated, rest)
        } else if let Some(rest) = head.strip_prefix("CAS") {
            (Mechanism::Centralized, rest)
        } else if let Some(rest) = head.strip_prefix("AS") {
            (Mechanism::AdaptiveSeek, rest)
        } else {
            return Err(bad());
        };
        let order = match dims {
            "1D" => 0,
            "2D" => 1,
            _ => return Err(bad()),
        };
        Ok(Self {
            mechanism,
            order,
            form,
            iterations: 0,
        })
    }
}

/// Serialized form of [`AlgorithmSpec`]: `{ name = "IAS2D_c", iterations = 2 }`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmEntry {
    pub name: String,
    #[serde(default)]
    pub iterations: usize,
}

impl TryFrom<AlgorithmEntry> for AlgorithmSpec {
    type Error = Error;

    fn try_from(entry: AlgorithmEntry) -> Result<Self> {
        AlgorithmSpec::named(&entry.name, entry.iterations)
    }
}

impl From<AlgorithmSpec> for AlgorithmEntry {
    fn from(spec: AlgorithmSpec) -> Self {
        Self {
            name: spec.to_string(),
            iterations: spec.iterations,
        }
    }
}

/// Intended plans of every agent at one τ iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanBoard<T> {
    pub plans: Vec<HorizonPlan<T>>,
    pub tau: usize,
}

impl<T: Scalar> PlanBoard<T> {
    /// The τ = 0 board: every plan identically zero.
    pub fn zeros(vehicle_count: usize, horizon: usize) -> Self {
        Self {
            plans: vec![HorizonPlan::zeros(horizon); vehicle_count],
            tau: 0,
        }
    }

    pub fn max_change(&self, other: &Self) -> T {
        self.plans
            .iter()
            .zip(&other.plans)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(T::zero(), T::max)
    }
}

/// Plans an agent reads from the board: nearest first in each direction.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborView<'a, T> {
    pub ahead: Vec<&'a HorizonPlan<T>>,
    pub behind: Vec<&'a HorizonPlan<T>>,
}

impl<'a, T> NeighborView<'a, T> {
    pub fn leader(&self) -> Option<&'a HorizonPlan<T>> {
        self.ahead.first().copied()
    }

    pub fn follower(&self) -> Option<&'a HorizonPlan<T>> {
        self.behind.first().copied()
    }
}

/// Plans of the vehicles inside agent `i`'s attention set.
pub fn share_plans<'a, T: Scalar>(
    board: &'a PlanBoard<T>,
    i: usize,
    ring: &RingGeometry<T>,
    attention: (usize, usize),
) -> NeighborView<'a, T> {
    let (ahead, behind) = attention;
    NeighborView {
        ahead: (1..=ahead)
            .map(|l| &board.plans[ring.neighbor(i, l as isize)])
            .collect(),
        behind: (1..=behind)
            .map(|l| &board.plans[ring.neighbor(i, -(l as isize))])
            .collect(),
    }
}

/// Outcome of one τ-loop.
#[derive(Debug, Clone, PartialEq)]
pub struct TauOutcome<T> {
    /// First element of each agent's final plan.
    pub actions: Vec<T>,
    pub board: PlanBoard<T>,
    /// Largest plan change across agents in each round (`T + 1` entries).
    pub round_deltas: Vec<T>,
}

/// Closed-loop controller shared by every vehicle of a run.
#[derive(Debug, Clone)]
pub struct FleetPolicy<T> {
    pub algorithm: AlgorithmSpec,
    pub utility: UtilityParams<T>,
    pub vehicle: VehicleParams<T>,
    pub grid: SearchGrid<T>,
}

impl<T: Scalar> FleetPolicy<T> {
    pub fn new(
        algorithm: AlgorithmSpec,
        utility: UtilityParams<T>,
        vehicle: VehicleParams<T>,
        grid: GridSpec<T>,
    ) -> Result<Self> {
        algorithm.validate()?;
        utility.validate()?;
        vehicle.validate()?;
        let grid = SearchGrid::new(grid, algorithm.order, &vehicle)?;
        Ok(Self {
            algorithm,
            utility,
            vehicle,
            grid,
        })
    }

    pub fn with_v_star(&self, v_star: T) -> Self {
        let mut p = self.clone();
        p.utility.v_star = v_star;
        p
    }

    fn problems<'g>(
        &'g self,
        states: &[KinematicState<T>],
        ring: &RingGeometry<T>,
    ) -> Vec<EgoProblem<'g, T>> {
        let with_follower = self.algorithm.objective() == Objective::CentralizedLocal;
        (0..states.len())
            .into_par_iter()
            .with_min_len(4)
            .map(|i| {
                EgoProblem::new(
                    &self.grid,
                    DecisionState::from_ring(states, i, ring, with_follower),
                    &self.utility,
                    self.algorithm.form,
                    self.algorithm.objective(),
                    self.vehicle.length,
                )
            })
            .collect()
    }

    /// Runs `T + 1` synchronous best-response rounds starting from the zero
    /// board and returns each agent's executed action.
    pub fn tau_loop(&self, states: &[KinematicState<T>], ring: &RingGeometry<T>) -> Result<TauOutcome<T>> {
        if states.len() != ring.vehicle_count {
            return Err(Error::LengthMismatch {
                what: "fleet states",
                expected: ring.vehicle_count,
                got: states.len(),
            });
        }
        let mut problems = self.problems(states, ring);
        let mut board = PlanBoard::zeros(states.len(), self.grid.horizon());
        let mut round_deltas = Vec::with_capacity(self.algorithm.iterations + 1);
        for round in 0..=self.algorithm.iterations {
            let attention = self.algorithm.attention_set(board.tau);
            let current = &board;
            let next: Vec<HorizonPlan<T>> = problems
                .par_iter_mut()
                .with_min_len(4)
                .enumerate()
                .map(|(i, problem)| {
                    let view = share_plans(current, i, ring, attention);
                    let leader = view.leader().expect("leader always attended");
                    let follower = view.follower().map(|p| &p.actions[..]);
                    let br = problem
                        .solve(&leader.actions, follower)
                        .map_err(|e| match e {
                            Error::NonFinite { .. } => Error::NonFiniteUtility { agent: i, round },
                            other => other,
                        })?;
                    Ok(br.plan)
                })
                .collect::<Result<_>>()?;
            let next = PlanBoard {
                plans: next,
                tau: board.tau + 1,
            };
            round_deltas.push(next.max_change(&board));
            board = next;
        }
        Ok(TauOutcome {
            actions: board.plans.iter().map(HorizonPlan::first).collect(),
            board,
            round_deltas,
        })
    }

    /// Executed action of agent `i` only (still runs the full τ-loop when
    /// `T > 0`, since the answer depends on neighbors' plans).
    pub fn executed_action(&self, states: &[KinematicState<T>], ring: &RingGeometry<T>, i: usize) -> Result<T> {
        if self.algorithm.iterations == 0 {
            let with_follower = self.algorithm.objective() == Objective::CentralizedLocal;
            let mut problem = EgoProblem::new(
                &self.grid,
                DecisionState::from_ring(states, i, ring, with_follower),
                &self.utility,
                self.algorithm.form,
                self.algorithm.objective(),
                self.vehicle.length,
            );
            let zeros = vec![T::zero(); self.grid.horizon_len()];
            let follower = with_follower.then_some(&zeros[..]);
            return Ok(problem.solve(&zeros, follower)?.plan.first());
        }
        Ok(self.tau_loop(states, ring)?.actions[i])
    }
}
