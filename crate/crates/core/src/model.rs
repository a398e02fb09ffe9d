//! Ring geometry, vehicle state and the physical (noisy, AR(1)-sticky)
//! longitudinal dynamics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::scalar::{ensure_finite, Scalar};
use crate::{Error, Result};

/// Single-lane circular road carrying `vehicle_count` vehicles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingGeometry<T> {
    pub circumference: T,
    pub vehicle_count: usize,
}

impl<T: Scalar> RingGeometry<T> {
    pub fn new(circumference: T, vehicle_count: usize) -> Result<Self> {
        let ring = Self {
            circumference,
            vehicle_count,
        };
        ring.validate()?;
        Ok(ring)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.circumference.is_finite() && self.circumference > T::zero()) {
            return Err(Error::invalid("circumference must be positive and finite"));
        }
        if self.vehicle_count < 2 {
            return Err(Error::invalid("a ring needs at least two vehicles"));
        }
        Ok(())
    }

    /// Vehicles per meter.
    pub fn density(&self) -> T {
        T::from_usize_lossy(self.vehicle_count) / self.circumference
    }

    /// Spacing of the homogeneous configuration, `C / N`.
    pub fn equal_spacing(&self) -> T {
        self.circumference / T::from_usize_lossy(self.vehicle_count)
    }

    /// Index of the vehicle directly ahead of `i` (vehicle `N-1` is followed by `0`).
    #[inline]
    pub fn leader_of(&self, i: usize) -> usize {
        (i + 1) % self.vehicle_count
    }

    #[inline]
    pub fn follower_of(&self, i: usize) -> usize {
        (i + self.vehicle_count - 1) % self.vehicle_count
    }

    /// Index `offset` places ahead of `i` (negative offsets go backwards).
    #[inline]
    pub fn neighbor(&self, i: usize, offset: isize) -> usize {
        let n = self.vehicle_count as isize;
        (i as isize + offset).rem_euclid(n) as usize
    }
}

/// Position, velocity and acceleration of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KinematicState<T> {
    pub x: T,
    pub v: T,
    pub a: T,
}

impl<T: Scalar> KinematicState<T> {
    pub fn new(x: T, v: T, a: T) -> Self {
        Self { x, v, a }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.v.is_finite() && self.a.is_finite()
    }
}

/// Physical constants shared by every vehicle in a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleParams<T> {
    /// Vehicle length in meters.
    pub length: T,
    /// AR(1) stickiness of the realized acceleration.
    pub gamma: T,
    /// Time step in seconds.
    pub dt: T,
    pub u_min: T,
    pub u_max: T,
}

impl<T: Scalar> Default for VehicleParams<T> {
    fn default() -> Self {
        Self {
            length: T::lit(3.9),
            gamma: T::lit(0.7f64.sqrt()),
            dt: T::lit(1.0 / 6.0),
            u_min: T::lit(-6.0),
            u_max: T::lit(4.0),
        }
    }
}

impl<T: Scalar> VehicleParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > T::zero() && self.gamma < T::one()) {
            return Err(Error::invalid("gamma must lie in (0, 1)"));
        }
        if !(self.u_min < self.u_max) {
            return Err(Error::invalid("u_min must be below u_max"));
        }
        if !(self.dt > T::zero() && self.dt.is_finite()) {
            return Err(Error::invalid("dt must be positive"));
        }
        if !(self.length >= T::zero() && self.length.is_finite()) {
            return Err(Error::invalid("vehicle length must be non-negative"));
        }
        Ok(())
    }

    pub fn clamp_action(&self, u: T) -> T {
        u.max(self.u_min).min(self.u_max)
    }
}

/// Standard deviations of the IID normal disturbances added by the physical map.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    pub sigma_x: f64,
    pub sigma_v: f64,
    pub sigma_a: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn silent(&self) -> bool {
        self.sigma_x == 0.0 && self.sigma_v == 0.0 && self.sigma_a == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        for (s, name) in [
            (self.sigma_x, "sigma_x"),
            (self.sigma_v, "sigma_v"),
            (self.sigma_a, "sigma_a"),
        ] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::invalid(format!("{name} must be a non-negative number")));
            }
        }
        Ok(())
    }

    /// Disturbance for `vehicle` entering step `step + 1`.
    ///
    /// Each draw has its own generator keyed by `(seed, vehicle, step)`, so the
    /// result does not depend on the order vehicles are evaluated in.
    pub fn draw<T: Scalar>(&self, vehicle: usize, step: usize) -> NoiseDraw<T> {
        if self.silent() {
            return NoiseDraw::default();
        }
        let key = splitmix64(
            splitmix64(self.seed ^ 0x5eed_0f_a11_cafe) ^ splitmix64(vehicle as u64).rotate_left(21)
                ^ splitmix64(step as u64 ^ 0xa5a5_a5a5),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let mut normal = |sigma: f64| -> T {
            let z: f64 = StandardNormal.sample(&mut rng);
            T::lit(sigma * z)
        };
        NoiseDraw {
            x: normal(self.sigma_x),
            v: normal(self.sigma_v),
            a: normal(self.sigma_a),
        }
    }
}

/// One realization of the state disturbance `(eps_x, eps_v, eps_a)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseDraw<T> {
    pub x: T,
    pub v: T,
    pub a: T,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Maps `x` into `[0, C)`.
pub fn wrap_position<T: Scalar>(x: T, circumference: T) -> Result<T> {
    ensure_finite(x, "position")?;
    if !(circumference > T::zero() && circumference.is_finite()) {
        return Err(Error::invalid("circumference must be positive and finite"));
    }
    Ok(wrap_unchecked(x, circumference))
}

#[inline]
pub(crate) fn wrap_unchecked<T: Scalar>(x: T, c: T) -> T {
    let r = x - c * (x / c).floor();
    // floor rounding can land exactly on C for tiny negative inputs
    if r >= c || r < T::zero() {
        T::zero()
    } else {
        r
    }
}

/// Forward distance from `x_i` to `x_lead` around the ring, in `[0, C)`.
pub fn headway<T: Scalar>(x_i: T, x_lead: T, circumference: T) -> Result<T> {
    ensure_finite(x_i, "position")?;
    ensure_finite(x_lead, "leader position")?;
    wrap_position(x_lead - x_i, circumference)
}

/// Advances one vehicle by one step of the physical map.
///
/// `u` is the action executed now, `u_prev` the one executed in the
/// previous step.
pub fn step_vehicle<T: Scalar>(
    state: &KinematicState<T>,
    u: T,
    u_prev: T,
    params: &VehicleParams<T>,
    circumference: T,
    noise: NoiseDraw<T>,
) -> Result<KinematicState<T>> {
    if !state.is_finite() {
        return Err(Error::NonFinite {
            what: "vehicle state",
        });
    }
    ensure_finite(u, "action")?;
    ensure_finite(u_prev, "previous action")?;
    let dt = params.dt;
    let x = wrap_position(state.x + state.v * dt + noise.x, circumference)?;
    let v = state.v + state.a * dt + noise.v;
    let a = params.gamma * state.a + (u - params.gamma * u_prev) + noise.a;
    let next = KinematicState { x, v, a };
    if !next.is_finite() {
        return Err(Error::NonFinite {
            what: "vehicle state",
        });
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> VehicleParams<f64> {
        VehicleParams::default()
    }

    #[test]
    fn wraps_positions() {
        assert_eq!(wrap_position(315.0, 314.0).unwrap(), 1.0);
        assert_eq!(wrap_position(0.0, 314.0).unwrap(), 0.0);
        assert_eq!(wrap_position(-1.0, 314.0).unwrap(), 313.0);
        assert!(wrap_position(f64::NAN, 314.0).is_err());
        assert!(wrap_position(1.0, 0.0).is_err());
        let tiny = wrap_position(-1e-300, 314.0).unwrap();
        assert!((0.0..314.0).contains(&tiny));
    }

    #[test]
    fn headway_examples() {
        assert_eq!(headway(10.0, 20.0, 314.0).unwrap(), 10.0);
        assert_eq!(headway(300.0, 6.0, 314.0).unwrap(), 20.0);
        assert_eq!(headway(42.0, 42.0, 314.0).unwrap(), 0.0);
    }

    #[test]
    fn zero_state_is_fixed() {
        let s = KinematicState::new(0.0, 0.0, 0.0);
        let n = step_vehicle(&s, 0.0, 0.0, &params(), 314.0, NoiseDraw::default()).unwrap();
        assert_eq!(n, s);
    }

    #[test]
    fn acceleration_decays_by_gamma() {
        let s = KinematicState::new(0.0, 0.0, 1.0);
        let n = step_vehicle(&s, 0.0, 0.0, &params(), 314.0, NoiseDraw::default()).unwrap();
        assert!((n.a - 0.7f64.sqrt()).abs() < 1e-15);
        assert!((n.a - 0.8367).abs() < 1e-4);
    }

    #[test]
    fn position_wraps_during_step() {
        let s = KinematicState::new(313.0, 12.0, 0.0);
        let n = step_vehicle(&s, 0.0, 0.0, &params(), 314.0, NoiseDraw::default()).unwrap();
        assert!((n.x - 1.0).abs() < 1e-12);
    }

    #[test]
    fn steady_control_converges_geometrically() {
        let p = params();
        let u: f64 = 1.5;
        let mut s = KinematicState::new(0.0, 0.0, -2.0);
        let e0 = (s.a - u).abs();
        for t in 1..=20 {
            s = step_vehicle(&s, u, u, &p, 314.0, NoiseDraw::default()).unwrap();
            let expected = p.gamma.powi(t) * e0;
            assert!(((s.a - u).abs() - expected).abs() < 1e-12);
            assert!((0.0..314.0).contains(&s.x));
        }
    }

    #[test]
    fn rejects_non_finite_state() {
        let s = KinematicState::new(0.0, f64::INFINITY, 0.0);
        assert!(step_vehicle(&s, 0.0, 0.0, &params(), 314.0, NoiseDraw::default()).is_err());
    }

    #[test]
    fn noise_is_keyed_not_sequential() {
        let spec = NoiseSpec {
            sigma_x: 0.0,
            sigma_v: 0.1,
            sigma_a: 0.01,
            seed: 7,
        };
        let a: NoiseDraw<f64> = spec.draw(3, 11);
        let _ = spec.draw::<f64>(4, 11);
        let b: NoiseDraw<f64> = spec.draw(3, 11);
        assert_eq!(a, b);
        assert_eq!(a.x, 0.0);
        assert_ne!(a.a, spec.draw::<f64>(3, 12).a);
        let silent = NoiseSpec::default();
        assert_eq!(silent.draw::<f64>(0, 0), NoiseDraw::default());
    }

    #[test]
    fn ring_indexing() {
        let ring = RingGeometry::<f64>::new(314.0, 36).unwrap();
        assert_eq!(ring.leader_of(35), 0);
        assert_eq!(ring.follower_of(0), 35);
        assert_eq!(ring.neighbor(1, -3), 34);
        assert!((ring.equal_spacing() - 8.722_222).abs() < 1e-5);
        assert!(RingGeometry::new(314.0, 1).is_err());
    }
}
