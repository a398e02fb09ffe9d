//! Single-agent best response: action-curve expansion, feasibility mask,
//! anticipation rollouts and the Boltzmann-averaged grid search.

use serde::{Deserialize, Serialize};

use crate::model::{KinematicState, RingGeometry, VehicleParams};
use crate::scalar::Scalar;
use crate::utility::{
    u1_forward, u2_backward, u3_collision, AnticipatedState, HorizonProfile,
    Objective, UtilityForm, UtilityParams,
};
use crate::{Error, Result};

/// Polynomial action curve `u(h) = c0 + c1·(hΔt) + c2·(hΔt)² + …`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionCurve<T> {
    pub coefficients: Vec<T>,
}

impl<T: Scalar> ActionCurve<T> {
    pub fn constant(u0: T) -> Self {
        Self {
            coefficients: vec![u0],
        }
    }

    pub fn linear(u0: T, u1: T) -> Self {
        Self {
            coefficients: vec![u0, u1],
        }
    }

    /// Polynomial order `p`.
    pub fn order(&self) -> usize {
        self.coefficients.len().saturating_sub(1)
    }
}

/// Action sequence `u[0..=H]` over the planning horizon.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HorizonPlan<T> {
    pub actions: Vec<T>,
}

impl<T: Scalar> HorizonPlan<T> {
    pub fn zeros(horizon: usize) -> Self {
        Self {
            actions: vec![T::zero(); horizon + 1],
        }
    }

    pub fn constant(horizon: usize, u: T) -> Self {
        Self {
            actions: vec![u; horizon + 1],
        }
    }

    /// Last horizon index `H`.
    pub fn horizon(&self) -> usize {
        self.actions.len().saturating_sub(1)
    }

    /// Executed part of the plan.
    pub fn first(&self) -> T {
        self.actions[0]
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.actions
            .iter()
            .zip(&other.actions)
            .map(|(a, b)| (*a - *b).abs())
            .fold(T::zero(), T::max)
    }
}

/// Expands a polynomial curve into `H + 1` actions spaced `dt` apart.
pub fn expand_curve<T: Scalar>(curve: &ActionCurve<T>, horizon: usize, dt: T) -> HorizonPlan<T> {
    let actions = (0..=horizon)
        .map(|h| {
            let tau = T::from_usize_lossy(h) * dt;
            // Horner
            curve
                .coefficients
                .iter()
                .rev()
                .fold(T::zero(), |acc, c| acc * tau + *c)
        })
        .collect();
    HorizonPlan { actions }
}

/// Grid axes and inverse temperature of the softmax search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec<T> {
    /// Last horizon index `H`; plans have `H + 1` actions.
    pub horizon: usize,
    pub lambda: T,
    pub u0_min: T,
    pub u0_max: T,
    pub u0_count: usize,
    pub u1_min: T,
    pub u1_max: T,
    pub u1_count: usize,
}

impl<T: Scalar> Default for GridSpec<T> {
    fn default() -> Self {
        Self {
            horizon: 7,
            lambda: T::lit(200.0),
            u0_min: T::lit(-6.0),
            u0_max: T::lit(4.0),
            u0_count: 41,
            u1_min: T::lit(-1.0),
            u1_max: T::lit(1.0),
            u1_count: 11,
        }
    }
}

impl<T: Scalar> GridSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if self.u0_count < 1 || self.u1_count < 1 {
            return Err(Error::invalid("grid axes need at least one point"));
        }
        if !(self.u0_min <= self.u0_max && self.u1_min <= self.u1_max) {
            return Err(Error::invalid("grid axis bounds are reversed"));
        }
        if !(self.lambda > T::zero() && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda must be positive"));
        }
        Ok(())
    }

    pub fn u0_step(&self) -> T {
        axis_step(self.u0_min, self.u0_max, self.u0_count)
    }

    pub fn u1_step(&self) -> T {
        axis_step(self.u1_min, self.u1_max, self.u1_count)
    }
}

fn axis_step<T: Scalar>(lo: T, hi: T, n: usize) -> T {
    if n < 2 {
        T::zero()
    } else {
        (hi - lo) / T::from_usize_lossy(n - 1)
    }
}

/// Evenly spaced points over `[lo, hi]`, endpoints included.
pub fn linspace<T: Scalar>(lo: T, hi: T, n: usize) -> Vec<T> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let last = T::from_usize_lossy(n - 1);
            (0..n)
                .map(|k| {
                    if k == n - 1 {
                        hi
                    } else {
                        lo + (hi - lo) * T::from_usize_lossy(k) / last
                    }
                })
                .collect()
        }
    }
}

/// `true` for every curve whose expansion stays inside `[u_min, u_max]`
/// at all horizon steps.
pub fn feasibility_mask<T: Scalar>(
    curves: &[ActionCurve<T>],
    u_min: T,
    u_max: T,
    horizon: usize,
    dt: T,
) -> Vec<bool> {
    // a tolerance of a few ulps keeps grid endpoints such as u0 = 4 in
    let slack = T::epsilon() * T::lit(16.0) * (u_min.abs().max(u_max.abs()).max(T::one()));
    curves
        .iter()
        .map(|c| {
            let inside = |u: T| u >= u_min - slack && u <= u_max + slack;
            if c.order() <= 1 {
                // a linear function attains its extremes at the ends
                let plan = expand_curve(c, horizon, dt);
                inside(plan.actions[0]) && inside(plan.actions[horizon])
            } else {
                expand_curve(c, horizon, dt).actions.into_iter().all(inside)
            }
        })
        .collect()
}

/// Masked search grid with the plan-dependent parts of the ego rollout
/// precomputed for every feasible point.
#[derive(Debug, Clone)]
pub struct SearchGrid<T> {
    pub spec: GridSpec<T>,
    /// Curve order: 0 (1-D search) or 1 (2-D search).
    pub order: usize,
    pub curves: Vec<ActionCurve<T>>,
    pub mask: Vec<bool>,
    dt: T,
    /// Indices of masked-in curves.
    feasible: Vec<usize>,
    /// Row-major `[feasible point][h]` tables.
    plans: Vec<T>,
    speed_shift: Vec<T>,
    reach_shift: Vec<T>,
}

impl<T: Scalar> SearchGrid<T> {
    pub fn new(spec: GridSpec<T>, order: usize, vehicle: &VehicleParams<T>) -> Result<Self> {
        spec.validate()?;
        if order > 1 {
            return Err(Error::invalid("only constant and linear action curves are supported"));
        }
        let u0 = linspace(spec.u0_min, spec.u0_max, spec.u0_count);
        let curves: Vec<ActionCurve<T>> = if order == 0 {
            u0.iter().map(|&c| ActionCurve::constant(c)).collect()
        } else {
            let u1 = linspace(spec.u1_min, spec.u1_max, spec.u1_count);
            u0.iter()
                .flat_map(|&c0| u1.iter().map(move |&c1| ActionCurve::linear(c0, c1)))
                .collect()
        };
        let h = spec.horizon;
        let dt = vehicle.dt;
        let mask = feasibility_mask(&curves, vehicle.u_min, vehicle.u_max, h, dt);
        let feasible: Vec<usize> = (0..curves.len()).filter(|&k| mask[k]).collect();
        if feasible.is_empty() {
            return Err(Error::invalid("every grid point violates the action bounds"));
        }
        let len = h + 1;
        let mut plans = Vec::with_capacity(feasible.len() * len);
        let mut speed_shift = Vec::with_capacity(feasible.len() * len);
        let mut reach_shift = Vec::with_capacity(feasible.len() * len);
        for &k in &feasible {
            let plan = expand_curve(&curves[k], h, dt);
            let roll = rollout(&KinematicState::default(), &plan.actions, dt);
            let prof = roll.profile(&plan.actions, dt)?;
            plans.extend_from_slice(&plan.actions);
            speed_shift.extend_from_slice(&prof.speed);
            reach_shift.extend_from_slice(&prof.reach);
        }
        Ok(Self {
            spec,
            order,
            curves,
            mask,
            dt,
            feasible,
            plans,
            speed_shift,
            reach_shift,
        })
    }

    pub fn horizon(&self) -> usize {
        self.spec.horizon
    }

    pub fn horizon_len(&self) -> usize {
        self.spec.horizon + 1
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn feasible_count(&self) -> usize {
        self.feasible.len()
    }

    /// Curve behind the `j`-th feasible point.
    pub fn feasible_curve(&self, j: usize) -> &ActionCurve<T> {
        &self.curves[self.feasible[j]]
    }

    /// Expanded plan of the `j`-th feasible point.
    pub fn feasible_plan(&self, j: usize) -> &[T] {
        let n = self.horizon_len();
        &self.plans[j * n..(j + 1) * n]
    }

    /// Ego profile for feasible point `j`, given the profile of the
    /// zero-action rollout from the current state (superposition).
    pub fn write_ego_profile(&self, j: usize, free: &HorizonProfile<T>, speed: &mut [T], reach: &mut [T]) {
        let n = self.horizon_len();
        let ss = &self.speed_shift[j * n..(j + 1) * n];
        let rs = &self.reach_shift[j * n..(j + 1) * n];
        for h in 0..n {
            speed[h] = free.speed[h] + ss[h];
            reach[h] = free.reach[h] + rs[h];
        }
    }
}

/// Noise-free anticipation of one vehicle under `plan`:
/// `x[h+1] = x[h] + v[h]Δt`, `v[h+1] = v[h] + a[h]Δt`, `a[h+1] = u[h]`.
pub fn rollout<T: Scalar>(init: &KinematicState<T>, plan: &[T], dt: T) -> AnticipatedState<T> {
    let n = plan.len() + 1;
    let mut x = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    let mut a = Vec::with_capacity(n);
    x.push(init.x);
    v.push(init.v);
    a.push(init.a);
    for (h, &u) in plan.iter().enumerate() {
        x.push(x[h] + v[h] * dt);
        v.push(v[h] + a[h] * dt);
        a.push(u);
    }
    AnticipatedState { x, v, a }
}

/// What the ego perceives: its own state and its immediate neighbors',
/// with positions expressed relative to the ego (ego at 0, leader at its
/// headway, follower at minus the follower's headway).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionState<T> {
    pub ego: KinematicState<T>,
    pub leader: KinematicState<T>,
    pub follower: Option<KinematicState<T>>,
}

impl<T: Scalar> DecisionState<T> {
    /// Builds agent `i`'s view of the ring. Gaps are forward distances
    /// modulo the circumference.
    pub fn from_ring(
        states: &[KinematicState<T>],
        i: usize,
        ring: &RingGeometry<T>,
        with_follower: bool,
    ) -> Self {
        let c = ring.circumference;
        let me = states[i];
        let lead = states[ring.leader_of(i)];
        let ego = KinematicState::new(T::zero(), me.v, me.a);
        let leader = KinematicState::new(
            crate::model::wrap_unchecked(lead.x - me.x, c),
            lead.v,
            lead.a,
        );
        let follower = with_follower.then(|| {
            let f = states[ring.follower_of(i)];
            KinematicState::new(-crate::model::wrap_unchecked(me.x - f.x, c), f.v, f.a)
        });
        Self {
            ego,
            leader,
            follower,
        }
    }
}

/// Anticipated trajectories of the ego and its neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct Anticipation<T> {
    pub ego: AnticipatedState<T>,
    pub leader: AnticipatedState<T>,
    pub follower: Option<AnticipatedState<T>>,
}

/// Rolls out every vehicle in the decision state under its plan.
pub fn anticipate<T: Scalar>(
    state: &DecisionState<T>,
    ego_plan: &HorizonPlan<T>,
    leader_plan: &HorizonPlan<T>,
    follower_plan: Option<&HorizonPlan<T>>,
    dt: T,
) -> Result<Anticipation<T>> {
    let n = ego_plan.actions.len();
    let check = |what: &'static str, p: &HorizonPlan<T>| {
        if p.actions.len() == n {
            Ok(())
        } else {
            Err(Error::LengthMismatch {
                what,
                expected: n,
                got: p.actions.len(),
            })
        }
    };
    check("leader plan", leader_plan)?;
    if let Some(p) = follower_plan {
        check("follower plan", p)?;
    }
    let zeros;
    let follower = match state.follower {
        Some(f) => {
            let plan = match follower_plan {
                Some(p) => &p.actions,
                None => {
                    zeros = vec![T::zero(); n];
                    &zeros
                }
            };
            Some(rollout(&f, plan, dt))
        }
        None => None,
    };
    Ok(Anticipation {
        ego: rollout(&state.ego, &ego_plan.actions, dt),
        leader: rollout(&state.leader, &leader_plan.actions, dt),
        follower,
    })
}

/// Boltzmann average of `plans` under weights `exp(lambda * utility)`.
///
/// Exponents are shifted by the largest utility before exponentiation.
/// Returns the averaged plan and the normalized weights.
pub fn boltzmann_average<T: Scalar>(
    utilities: &[T],
    plans: &[&[T]],
    lambda: T,
) -> Result<(Vec<T>, Vec<T>)> {
    if utilities.is_empty() || utilities.len() != plans.len() {
        return Err(Error::LengthMismatch {
            what: "utilities vs plans",
            expected: plans.len(),
            got: utilities.len(),
        });
    }
    let top = utilities.iter().copied().fold(T::neg_infinity(), T::max);
    if !top.is_finite() {
        return Err(Error::NonFinite { what: "utility" });
    }
    let mut weights: Vec<T> = utilities.iter().map(|&u| (lambda * (u - top)).exp()).collect();
    let z: T = weights.iter().copied().sum();
    for w in &mut weights {
        *w = *w / z;
    }
    let len = plans[0].len();
    let mut avg = vec![T::zero(); len];
    for (w, plan) in weights.iter().zip(plans) {
        for (acc, &u) in avg.iter_mut().zip(plan.iter()) {
            *acc = *acc + *w * u;
        }
    }
    Ok((avg, weights))
}

/// Fixed inputs of one agent's decision within a time step.
///
/// The forward/backward part of the utility depends only on the ego's own
/// state, so it is evaluated once per grid point and reused by every
/// τ-round of the same step.
#[derive(Debug, Clone)]
pub struct EgoProblem<'g, T> {
    grid: &'g SearchGrid<T>,
    params: UtilityParams<T>,
    form: UtilityForm,
    objective: Objective,
    length: T,
    state: DecisionState<T>,
    ego_free: HorizonProfile<T>,
    base: Vec<T>,
    ego_speed: Vec<T>,
    ego_reach: Vec<T>,
}

/// Result of one best-response evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct BestResponse<T> {
    pub plan: HorizonPlan<T>,
    /// Largest effective utility over the masked grid.
    pub best_utility: T,
}

impl<'g, T: Scalar> EgoProblem<'g, T> {
    pub fn new(
        grid: &'g SearchGrid<T>,
        state: DecisionState<T>,
        params: &UtilityParams<T>,
        form: UtilityForm,
        objective: Objective,
        length: T,
    ) -> Self {
        let n = grid.horizon_len();
        let dt = grid.dt();
        let zeros = vec![T::zero(); n];
        let ego_free = rollout(&state.ego, &zeros, dt)
            .profile(&zeros, dt)
            .expect("rollout length matches plan");
        let m = grid.feasible_count();
        let mut base = Vec::with_capacity(m);
        let mut speed = vec![T::zero(); n];
        let mut reach = vec![T::zero(); n];
        for j in 0..m {
            grid.write_ego_profile(j, &ego_free, &mut speed, &mut reach);
            let value = match form {
                UtilityForm::Cumulative => speed.iter().fold(T::zero(), |acc, &s| {
                    acc + params.w_forward * u1_forward(s, params)
                        + params.w_backward * u2_backward(s, params)
                }),
                UtilityForm::GTransformed => {
                    params.w_forward * u1_forward(speed[0], params)
                        + params.w_backward * u2_backward(speed[0], params)
                }
            };
            base.push(value);
        }
        Self {
            grid,
            params: *params,
            form,
            objective,
            length,
            state,
            ego_free,
            base,
            ego_speed: speed,
            ego_reach: reach,
        }
    }

    pub fn state(&self) -> &DecisionState<T> {
        &self.state
    }

    /// Effective utility of every feasible grid point given the neighbors'
    /// plans. The g-transformed form always anticipates neighbors with zero
    /// actions and ignores the follower.
    pub fn utilities(
        &mut self,
        leader_plan: &[T],
        follower_plan: Option<&[T]>,
    ) -> Result<Vec<T>> {
        let n = self.grid.horizon_len();
        let dt = self.grid.dt();
        if leader_plan.len() != n {
            return Err(Error::LengthMismatch {
                what: "leader plan",
                expected: n,
                got: leader_plan.len(),
            });
        }
        let zeros = vec![T::zero(); n];
        let (leader_plan, follower_plan) = match self.form {
            UtilityForm::GTransformed => (&zeros[..], None),
            UtilityForm::Cumulative => (leader_plan, follower_plan),
        };
        let leader = rollout(&self.state.leader, leader_plan, dt).profile(leader_plan, dt)?;
        let follower = match (self.objective, self.form, self.state.follower) {
            (Objective::CentralizedLocal, UtilityForm::Cumulative, Some(f)) => {
                let plan = follower_plan.unwrap_or(&zeros);
                if plan.len() != n {
                    return Err(Error::LengthMismatch {
                        what: "follower plan",
                        expected: n,
                        got: plan.len(),
                    });
                }
                Some(rollout(&f, plan, dt).profile(plan, dt)?)
            }
            _ => None,
        };
        let p = self.params;
        let len = self.length;
        let m = self.grid.feasible_count();
        let mut out = Vec::with_capacity(m);
        for j in 0..m {
            self.grid
                .write_ego_profile(j, &self.ego_free, &mut self.ego_speed, &mut self.ego_reach);
            let speed = &self.ego_speed;
            let reach = &self.ego_reach;
            let value = match self.form {
                UtilityForm::Cumulative => {
                    let mut risk = T::zero();
                    for h in 0..n {
                        risk = risk
                            + u3_collision(
                                leader.reach[h] - reach[h] - len,
                                speed[h],
                                leader.speed[h],
                                &p,
                            );
                    }
                    if let Some(f) = &follower {
                        for h in 0..n {
                            risk = risk
                                + u3_collision(reach[h] - f.reach[h] - len, f.speed[h], speed[h], &p);
                        }
                    }
                    self.base[j] + p.w_collision_c * risk
                }
                UtilityForm::GTransformed => {
                    let mut worst = T::zero();
                    for h in 0..n {
                        worst = worst.max(u3_collision(
                            leader.reach[h] - reach[h] - len,
                            speed[h],
                            leader.speed[h],
                            &p,
                        ));
                    }
                    self.base[j] + p.w_collision_g * worst
                }
            };
            out.push(value);
        }
        Ok(out)
    }

    /// Boltzmann-averaged plan over the masked grid.
    pub fn solve(
        &mut self,
        leader_plan: &[T],
        follower_plan: Option<&[T]>,
    ) -> Result<BestResponse<T>> {
        let utilities = self.utilities(leader_plan, follower_plan)?;
        let grid = self.grid;
        let top = utilities.iter().copied().fold(T::neg_infinity(), T::max);
        if !top.is_finite() {
            return Err(Error::NonFinite { what: "utility" });
        }
        let lambda = grid.spec.lambda;
        let n = grid.horizon_len();
        let mut z = T::zero();
        let mut acc = vec![T::zero(); n];
        for (j, &u) in utilities.iter().enumerate() {
            let w = (lambda * (u - top)).exp();
            z = z + w;
            for (a, &x) in acc.iter_mut().zip(grid.feasible_plan(j)) {
                *a = *a + w * x;
            }
        }
        for a in &mut acc {
            *a = *a / z;
        }
        Ok(BestResponse {
            plan: HorizonPlan { actions: acc },
            best_utility: top,
        })
    }

    /// Exhaustive argmax over the masked grid. Ties go to the smaller
    /// `|u0|`, then the smaller `|u1|`.
    pub fn argmax(
        &mut self,
        leader_plan: &[T],
        follower_plan: Option<&[T]>,
    ) -> Result<(ActionCurve<T>, T)> {
        let utilities = self.utilities(leader_plan, follower_plan)?;
        let grid = self.grid;
        let key = |j: usize| {
            let c = &grid.feasible_curve(j).coefficients;
            (c[0].abs(), c.get(1).map(|x| x.abs()).unwrap_or_else(T::zero))
        };
        let mut best = 0;
        for j in 1..utilities.len() {
            let better = utilities[j] > utilities[best]
                || (utilities[j] == utilities[best] && key(j) < key(best));
            if better {
                best = j;
            }
        }
        Ok((grid.feasible_curve(best).clone(), utilities[best]))
    }
}

/// One-shot best response of an agent against fixed neighbor plans.
#[allow(clippy::too_many_arguments)]
pub fn best_response<T: Scalar>(
    state: &DecisionState<T>,
    leader_plan: &HorizonPlan<T>,
    follower_plan: Option<&HorizonPlan<T>>,
    grid: &SearchGrid<T>,
    params: &UtilityParams<T>,
    form: UtilityForm,
    objective: Objective,
    length: T,
) -> Result<BestResponse<T>> {
    let mut problem = EgoProblem::new(grid, *state, params, form, objective, length);
    problem.solve(&leader_plan.actions, follower_plan.map(|p| &p.actions[..]))
}
