//! Per-period utility components and their assembly into effective
//! utilities (cumulative, g-transformed and centralized-local).
//!
//! Every component is evaluated on a [`HorizonProfile`], the pair of
//! look-ahead quantities the components actually consume at each horizon
//! step `h`:
//!
//! * `speed[h] = v̂[h+1] + u[h]·Δt` (next-step speed including the action), and
//! * `reach[h] = x̂[h+1] + v̂[h+1]·Δt` (one-step look-ahead front position).

use serde::{Deserialize, Serialize};

use crate::model::KinematicState;
use crate::scalar::Scalar;
use crate::{Error, Result};

/// Utility preferences shared by all drivers of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilityParams<T> {
    /// Ideal speed (m/s).
    pub v_star: T,
    /// Width of the forward reward, relative to `v_star`.
    pub kappa_forward: T,
    /// Steepness of the backward penalty (s/m).
    pub kappa_backward_v: T,
    /// Offset of the backward penalty (m/s).
    pub kappa_backward_0: T,
    /// Constant part of the collision length scale (m).
    pub kappa_collision_c: T,
    /// Speed part of the collision length scale (s).
    pub kappa_collision_v: T,
    /// Closing-speed part of the collision length scale (s).
    pub kappa_collision_d: T,
    pub w_forward: T,
    pub w_backward: T,
    /// Collision weight for the g-transformed utility.
    pub w_collision_g: T,
    /// Collision weight for the cumulative utility.
    pub w_collision_c: T,
}

impl<T: Scalar> Default for UtilityParams<T> {
    fn default() -> Self {
        Self {
            v_star: T::lit(10.49),
            kappa_forward: T::lit(0.7),
            kappa_backward_v: T::lit(10.0),
            kappa_backward_0: T::lit(0.25),
            kappa_collision_c: T::lit(0.6),
            kappa_collision_v: T::lit(0.3),
            kappa_collision_d: T::lit(1.0),
            w_forward: T::lit(1.0),
            w_backward: T::lit(-1.0),
            w_collision_g: T::lit(-10.0),
            w_collision_c: T::lit(-20.0),
        }
    }
}

impl<T: Scalar> UtilityParams<T> {
    pub fn with_v_star(mut self, v_star: T) -> Self {
        self.v_star = v_star;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            (self.v_star, "v_star"),
            (self.kappa_forward, "kappa_forward"),
            (self.kappa_backward_v, "kappa_backward_v"),
            (self.kappa_backward_0, "kappa_backward_0"),
            (self.kappa_collision_c, "kappa_collision_c"),
            (self.kappa_collision_v, "kappa_collision_v"),
            (self.kappa_collision_d, "kappa_collision_d"),
            (self.w_forward, "w_forward"),
        ];
        for (value, name) in positive {
            if !(value > T::zero() && value.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        for (value, name) in [
            (self.w_backward, "w_backward"),
            (self.w_collision_g, "w_collision_g"),
            (self.w_collision_c, "w_collision_c"),
        ] {
            if !(value < T::zero() && value.is_finite()) {
                return Err(Error::invalid(format!("{name} must be negative")));
            }
        }
        Ok(())
    }
}

/// How per-period utilities are collapsed over the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UtilityForm {
    /// Forward and backward terms at `h = 0`, worst collision risk over the horizon.
    GTransformed,
    /// Sum of weighted per-period utilities over the horizon.
    Cumulative,
}

/// Whose utility the ego maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    Own,
    /// Own utility plus the follower's collision term, the only part of the
    /// fleet-wide sum that also depends on the ego's actions.
    CentralizedLocal,
}

/// Deterministic anticipated trajectory of one vehicle: `H + 2` entries of
/// position, velocity and acceleration. Positions are not wrapped.
#[derive(Debug, Clone, PartialEq)]
pub struct AnticipatedState<T> {
    pub x: Vec<T>,
    pub v: Vec<T>,
    pub a: Vec<T>,
}

impl<T: Scalar> AnticipatedState<T> {
    /// Number of horizon steps `H + 1` this rollout covers.
    pub fn horizon_len(&self) -> usize {
        self.x.len().saturating_sub(1)
    }

    /// Anticipated position at step `h`, reduced modulo `circumference`.
    pub fn wrapped_x(&self, h: usize, circumference: T) -> T {
        crate::model::wrap_unchecked(self.x[h], circumference)
    }

    pub fn initial(&self) -> KinematicState<T> {
        KinematicState::new(self.x[0], self.v[0], self.a[0])
    }

    /// Look-ahead quantities consumed by the utility components, given the
    /// plan that generated this rollout.
    pub fn profile(&self, plan: &[T], dt: T) -> Result<HorizonProfile<T>> {
        let len = self.horizon_len();
        if plan.len() != len {
            return Err(Error::LengthMismatch {
                what: "plan vs anticipated state",
                expected: len,
                got: plan.len(),
            });
        }
        let speed = (0..len).map(|h| self.v[h + 1] + plan[h] * dt).collect();
        let reach = (0..len).map(|h| self.x[h + 1] + self.v[h + 1] * dt).collect();
        Ok(HorizonProfile { speed, reach })
    }
}

/// Per-horizon-step `speed` and `reach` of one vehicle (see module docs).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HorizonProfile<T> {
    pub speed: Vec<T>,
    pub reach: Vec<T>,
}

impl<T: Scalar> HorizonProfile<T> {
    pub fn len(&self) -> usize {
        self.speed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.speed.is_empty()
    }
}

/// `F(x) = exp(-x² - x)`.
#[inline]
pub fn collision_shape<T: Scalar>(x: T) -> T {
    (-(x * x) - x).exp()
}

/// Reward for moving forward at `speed = v̂[h+1] + u[h]·Δt`.
#[inline]
pub fn u1_forward<T: Scalar>(speed: T, params: &UtilityParams<T>) -> T {
    let z = (speed - params.v_star) / (params.kappa_forward * params.v_star);
    (-(z * z)).exp()
}

/// Penalty magnitude for moving backward at `speed = v̂[h+1] + u[h]·Δt`.
#[inline]
pub fn u2_backward<T: Scalar>(speed: T, params: &UtilityParams<T>) -> T {
    (-params.kappa_backward_v * (speed + params.kappa_backward_0)).exp()
}

/// Perceived risk of collision between a vehicle and the one directly ahead.
///
/// `gap` is the look-ahead bumper-to-bumper distance
/// `reach_lead - reach_follow - (L_follow + L_lead)/2`; speeds are the
/// `speed[h]` entries of each vehicle's profile.
#[inline]
pub fn u3_collision<T: Scalar>(gap: T, follow_speed: T, lead_speed: T, params: &UtilityParams<T>) -> T {
    if gap <= T::zero() {
        return T::one();
    }
    let closing = (follow_speed - lead_speed).max(T::zero());
    let scale = params.kappa_collision_c
        + params.kappa_collision_v * follow_speed.abs()
        + params.kappa_collision_d * closing;
    debug_assert!(scale > T::zero());
    collision_shape(gap / scale)
}

/// Collision term at horizon step `h` for a follower/leader pair of profiles.
#[inline]
pub fn pair_risk<T: Scalar>(
    follow: &HorizonProfile<T>,
    lead: &HorizonProfile<T>,
    h: usize,
    length: T,
    params: &UtilityParams<T>,
) -> T {
    let gap = lead.reach[h] - follow.reach[h] - length;
    u3_collision(gap, follow.speed[h], lead.speed[h], params)
}

/// Horizon profiles of the vehicles entering the ego's utility.
#[derive(Debug, Clone, Copy)]
pub struct UtilityInputs<'a, T> {
    pub ego: &'a HorizonProfile<T>,
    pub leader: &'a HorizonProfile<T>,
    pub follower: Option<&'a HorizonProfile<T>>,
    pub length: T,
}

impl<T: Scalar> UtilityInputs<'_, T> {
    fn check(&self) -> Result<usize> {
        let n = self.ego.len();
        let mut lens = vec![
            ("ego speed", self.ego.speed.len()),
            ("ego reach", self.ego.reach.len()),
            ("leader speed", self.leader.speed.len()),
            ("leader reach", self.leader.reach.len()),
        ];
        if let Some(f) = self.follower {
            lens.push(("follower speed", f.speed.len()));
            lens.push(("follower reach", f.reach.len()));
        }
        for (what, got) in lens {
            if got != n {
                return Err(Error::LengthMismatch {
                    what,
                    expected: n,
                    got,
                });
            }
        }
        if n == 0 {
            return Err(Error::invalid("empty horizon"));
        }
        Ok(n)
    }
}

/// Weighted per-period utilities summed over the horizon.
pub fn effective_cumulative<T: Scalar>(
    inputs: UtilityInputs<'_, T>,
    params: &UtilityParams<T>,
    objective: Objective,
) -> Result<T> {
    let n = inputs.check()?;
    let mut total = T::zero();
    for h in 0..n {
        let speed = inputs.ego.speed[h];
        total = total
            + params.w_forward * u1_forward(speed, params)
            + params.w_backward * u2_backward(speed, params)
            + params.w_collision_c * pair_risk(inputs.ego, inputs.leader, h, inputs.length, params);
    }
    if objective == Objective::CentralizedLocal {
        if let Some(follower) = inputs.follower {
            for h in 0..n {
                total = total
                    + params.w_collision_c * pair_risk(follower, inputs.ego, h, inputs.length, params);
            }
        }
    }
    Ok(total)
}

/// Bounded-rationality utility: forward/backward terms at `h = 0`, the
/// largest collision risk over the horizon.
pub fn effective_g_transformed<T: Scalar>(
    inputs: UtilityInputs<'_, T>,
    params: &UtilityParams<T>,
) -> Result<T> {
    let n = inputs.check()?;
    let speed = inputs.ego.speed[0];
    let worst = (0..n)
        .map(|h| pair_risk(inputs.ego, inputs.leader, h, inputs.length, params))
        .fold(T::zero(), T::max);
    Ok(params.w_forward * u1_forward(speed, params)
        + params.w_backward * u2_backward(speed, params)
        + params.w_collision_g * worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> UtilityParams<f64> {
        UtilityParams::default()
    }

    fn flat(speed: f64, reach0: f64, n: usize, dt: f64) -> HorizonProfile<f64> {
        HorizonProfile {
            speed: vec![speed; n],
            reach: (0..n).map(|h| reach0 + speed * dt * h as f64).collect(),
        }
    }

    #[test]
    fn forward_reward_values() {
        let p = p();
        assert_eq!(u1_forward(p.v_star, &p), 1.0);
        // hand evaluation: exp(-(1/0.7)^2)
        assert!((u1_forward(0.0, &p) - 0.129_923).abs() < 1e-5);
        let d = 1.7;
        assert!((u1_forward(p.v_star + d, &p) - u1_forward(p.v_star - d, &p)).abs() < 1e-15);
    }

    #[test]
    fn backward_penalty_values() {
        let p = p();
        assert_eq!(u2_backward(-0.25, &p), 1.0);
        // exp(-2.5)
        assert!((u2_backward(0.0, &p) - 0.082_085).abs() < 1e-5);
        assert!(u2_backward(0.1, &p) < u2_backward(0.0, &p));
    }

    #[test]
    fn collision_branches() {
        let p = p();
        assert_eq!(u3_collision(-0.5, 3.0, 1.0, &p), 1.0);
        assert_eq!(u3_collision(0.0, 3.0, 1.0, &p), 1.0);
        assert!((u3_collision(1e-12, 3.0, 1.0, &p) - 1.0).abs() < 1e-9);
        // gap equals scale: F(1) = e^-2
        let scale = 0.6 + 0.3 * 3.0 + 1.0 * 2.0;
        assert!((u3_collision(scale, 3.0, 1.0, &p) - (-2.0f64).exp()).abs() < 1e-15);
        // receding leader drops the closing term
        let scale = 0.6 + 0.3 * 3.0;
        assert!((u3_collision(scale, 3.0, 5.0, &p) - (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn single_period_cumulative_is_weighted_sum() {
        let p = p();
        let ego = flat(9.0, 0.0, 1, 1.0 / 6.0);
        let lead = flat(9.0, 9.0, 1, 1.0 / 6.0);
        let inputs = UtilityInputs {
            ego: &ego,
            leader: &lead,
            follower: None,
            length: 3.9,
        };
        let got = effective_cumulative(inputs, &p, Objective::Own).unwrap();
        let gap = 9.0 - 3.9;
        let want = u1_forward(9.0, &p) - u2_backward(9.0, &p)
            - 20.0 * collision_shape(gap / (0.6 + 0.3 * 9.0));
        assert!((got - want).abs() < 1e-14);
    }

    #[test]
    fn distant_follower_adds_nothing() {
        let p = p();
        let dt = 1.0 / 6.0;
        let ego = flat(8.0, 0.0, 8, dt);
        let lead = flat(8.0, 8.0, 8, dt);
        let far = flat(8.0, -1e9, 8, dt);
        let own = effective_cumulative(
            UtilityInputs {
                ego: &ego,
                leader: &lead,
                follower: Some(&far),
                length: 3.9,
            },
            &p,
            Objective::Own,
        )
        .unwrap();
        let central = effective_cumulative(
            UtilityInputs {
                ego: &ego,
                leader: &lead,
                follower: Some(&far),
                length: 3.9,
            },
            &p,
            Objective::CentralizedLocal,
        )
        .unwrap();
        assert_eq!(own, central);
    }

    #[test]
    fn g_transform_of_constant_risk_matches_single_period() {
        let p = p();
        let ego = flat(7.0, 0.0, 8, 1.0 / 6.0);
        let lead = flat(7.0, 10.0, 8, 1.0 / 6.0);
        let inputs = UtilityInputs {
            ego: &ego,
            leader: &lead,
            follower: None,
            length: 3.9,
        };
        let g = effective_g_transformed(inputs, &p).unwrap();
        let ego1 = HorizonProfile {
            speed: vec![7.0],
            reach: vec![0.0],
        };
        let lead1 = HorizonProfile {
            speed: vec![7.0],
            reach: vec![10.0],
        };
        let mut pg = p;
        pg.w_collision_c = pg.w_collision_g;
        let single = effective_cumulative(
            UtilityInputs {
                ego: &ego1,
                leader: &lead1,
                follower: None,
                length: 3.9,
            },
            &pg,
            Objective::Own,
        )
        .unwrap();
        assert!((g - single).abs() < 1e-14);
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let p = p();
        let ego = flat(7.0, 0.0, 8, 1.0 / 6.0);
        let lead = flat(7.0, 10.0, 7, 1.0 / 6.0);
        let inputs = UtilityInputs {
            ego: &ego,
            leader: &lead,
            follower: None,
            length: 3.9,
        };
        assert!(matches!(
            effective_cumulative(inputs, &p, Objective::Own),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn defaults_validate() {
        assert!(p().validate().is_ok());
        let mut bad = p();
        bad.w_collision_c = 1.0;
        assert!(bad.validate().is_err());
    }
}
