//! Linear stability of the homogeneous free-flow fixed point.
//!
//! The executed policy is linearized numerically around the fixed point,
//! the neighbor sensitivities are Fourier-transformed per ring mode `k`,
//! and the roots `z` of
//!
//! ```text
//! (γ - z) z [ (1 - z)(1 - z + Δt(B_k^v - Δt B_k^x)) - Δt² B_k^x ] = 0
//! ```
//!
//! decide stability: all roots strictly inside the unit circle (apart
//! from the translational `z = 1` of mode 0) means linearly stable.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::coordination::FleetPolicy;
use crate::model::{KinematicState, RingGeometry};
use crate::scalar::Scalar;
use crate::utility::Objective;
use crate::{Error, Result};

/// Homogeneous state: equal headways, common speed, zero acceleration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint<T> {
    pub headway: T,
    pub velocity: T,
    /// Executed action at the fixed point (≈ 0).
    pub residual: T,
}

impl<T: Scalar> FixedPoint<T> {
    pub fn states(&self, ring: &RingGeometry<T>) -> Vec<KinematicState<T>> {
        (0..ring.vehicle_count)
            .map(|i| KinematicState::new(T::from_usize_lossy(i) * self.headway, self.velocity, T::zero()))
            .collect()
    }
}

/// Root-finder settings for [`find_fixed_point`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointOptions<T> {
    /// Required `|ū|` at the returned point (m/s²).
    pub action_tolerance: T,
    /// Lower end of the velocity bracket; the upper end is `v_star`.
    pub min_velocity: T,
    pub max_iterations: usize,
}

impl<T: Scalar> Default for FixedPointOptions<T> {
    fn default() -> Self {
        Self {
            action_tolerance: T::lit(1e-6),
            min_velocity: T::lit(1e-3),
            max_iterations: 200,
        }
    }
}

fn homogeneous<T: Scalar>(ring: &RingGeometry<T>, velocity: T) -> Vec<KinematicState<T>> {
    FixedPoint {
        headway: ring.equal_spacing(),
        velocity,
        residual: T::zero(),
    }
    .states(ring)
}

/// Executed action of a vehicle in the homogeneous state at `velocity`.
pub fn homogeneous_action<T: Scalar>(policy: &FleetPolicy<T>, ring: &RingGeometry<T>, velocity: T) -> Result<T> {
    policy.executed_action(&homogeneous(ring, velocity), ring, 0)
}

/// Bisects the common velocity in `(0, v*]` at which the executed action of
/// the homogeneous state vanishes.
pub fn find_fixed_point<T: Scalar>(
    policy: &FleetPolicy<T>,
    ring: &RingGeometry<T>,
    options: FixedPointOptions<T>,
) -> Result<FixedPoint<T>> {
    let f = |v: T| homogeneous_action(policy, ring, v);
    let mut lo = options.min_velocity;
    let mut hi = policy.utility.v_star;
    let mut f_lo = f(lo)?;
    let f_hi = f(hi)?;
    let done = |v: T, u: T| FixedPoint {
        headway: ring.equal_spacing(),
        velocity: v,
        residual: u,
    };
    if f_lo.abs() < options.action_tolerance {
        return Ok(done(lo, f_lo));
    }
    if f_hi.abs() < options.action_tolerance {
        return Ok(done(hi, f_hi));
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::NoSignChange {
            low: lo.as_f64(),
            high: hi.as_f64(),
        });
    }
    let mut best = if f_lo.abs() < f_hi.abs() { (lo, f_lo) } else { (hi, f_hi) };
    for _ in 0..options.max_iterations {
        let mid = (lo + hi) / T::lit(2.0);
        let f_mid = f(mid)?;
        if f_mid.abs() < best.1.abs() {
            best = (mid, f_mid);
        }
        if f_mid.abs() < options.action_tolerance || mid == lo || mid == hi {
            break;
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(done(best.0, best.1))
}

/// Sensitivities of one neighbor's state on the ego's executed action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborSensitivity<T> {
    /// Offset from the ego: `+1` leader, `-1` follower, `0` ego.
    pub offset: isize,
    pub x: T,
    pub v: T,
    pub a: T,
}

/// `∂ū/∂(x, v, a)` of every neighbor inside (and one beyond) the attention set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyJacobian<T> {
    pub fixed_point: FixedPoint<T>,
    pub ahead: usize,
    pub behind: usize,
    /// Ordered by offset, from `-(behind + 1)` to `ahead + 1`.
    pub betas: Vec<NeighborSensitivity<T>>,
    /// Offsets whose step-`h` and step-`h/2` estimates disagree by more
    /// than the configured relative tolerance.
    pub flagged: Vec<isize>,
}

impl<T: Scalar> PolicyJacobian<T> {
    pub fn sum_x(&self) -> T {
        self.betas.iter().map(|b| b.x).sum()
    }

    pub fn get(&self, offset: isize) -> Option<&NeighborSensitivity<T>> {
        self.betas.iter().find(|b| b.offset == offset)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobianOptions<T> {
    /// Step as a fraction of each variable's natural scale.
    pub relative_step: T,
    /// Relative disagreement between steps `h` and `h/2` that gets flagged.
    pub agreement: T,
}

impl<T: Scalar> Default for JacobianOptions<T> {
    fn default() -> Self {
        Self {
            relative_step: T::lit(1e-4),
            agreement: T::lit(1e-3),
        }
    }
}

/// Central differences of the executed action of vehicle 0 at the fixed
/// point, refined by one Richardson step.
pub fn policy_jacobian<T: Scalar>(
    policy: &FleetPolicy<T>,
    ring: &RingGeometry<T>,
    fixed_point: FixedPoint<T>,
    options: JacobianOptions<T>,
) -> Result<PolicyJacobian<T>> {
    let reach = policy.algorithm.iterations + 1;
    let ahead = reach;
    let behind = match policy.algorithm.objective() {
        Objective::Own => 0,
        Objective::CentralizedLocal => reach,
    };
    if ahead + behind + 3 > ring.vehicle_count {
        return Err(Error::invalid("ring too small for the attention range"));
    }
    let base = fixed_point.states(ring);
    let scales = [
        fixed_point.headway,
        fixed_point.velocity.abs().max(T::one()),
        T::one(),
    ];
    let eval = |vehicle: usize, var: usize, delta: T| -> Result<T> {
        let mut states = base.clone();
        let s = &mut states[vehicle];
        match var {
            0 => s.x = crate::model::wrap_unchecked(s.x + delta, ring.circumference),
            1 => s.v = s.v + delta,
            _ => s.a = s.a + delta,
        }
        policy.executed_action(&states, ring, 0)
    };
    let central = |vehicle: usize, var: usize, h: T| -> Result<T> {
        Ok((eval(vehicle, var, h)? - eval(vehicle, var, -h)?) / (T::lit(2.0) * h))
    };
    let mut betas = Vec::new();
    let mut flagged = Vec::new();
    for offset in -(behind as isize + 1)..=(ahead as isize + 1) {
        let vehicle = ring.neighbor(0, offset);
        let mut d = [T::zero(); 3];
        for (var, slot) in d.iter_mut().enumerate() {
            let h = options.relative_step * scales[var];
            let coarse = central(vehicle, var, h)?;
            let fine = central(vehicle, var, h / T::lit(2.0))?;
            let spread = (coarse - fine).abs();
            let size = coarse.abs().max(fine.abs());
            if spread > options.agreement * size && spread > T::lit(1e-9) && !flagged.contains(&offset) {
                flagged.push(offset);
            }
            *slot = (T::lit(4.0) * fine - coarse) / T::lit(3.0);
        }
        betas.push(NeighborSensitivity {
            offset,
            x: d[0],
            v: d[1],
            a: d[2],
        });
    }
    Ok(PolicyJacobian {
        fixed_point,
        ahead,
        behind,
        betas,
        flagged,
    })
}

/// Roots of one ring mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeRoots<T> {
    pub k: usize,
    pub b_x: Complex<T>,
    pub b_v: Complex<T>,
    pub b_a: Complex<T>,
    /// Roots of the quadratic bracket.
    pub roots: [Complex<T>; 2],
}

impl<T: Scalar> ModeRoots<T> {
    pub fn max_modulus(&self) -> T {
        self.roots[0].norm().max(self.roots[1].norm())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSpectrum<T> {
    pub gamma: T,
    pub modes: Vec<ModeRoots<T>>,
}

impl<T: Scalar> ModeSpectrum<T> {
    /// Every root including the fixed factors `z = 0` and `z = γ`.
    pub fn all_roots(&self) -> Vec<(usize, Complex<T>)> {
        let mut out = Vec::with_capacity(self.modes.len() * 4);
        for m in &self.modes {
            out.push((m.k, Complex::new(T::zero(), T::zero())));
            out.push((m.k, Complex::new(self.gamma, T::zero())));
            out.push((m.k, m.roots[0]));
            out.push((m.k, m.roots[1]));
        }
        out
    }

    /// Largest root modulus, leaving out the translational root of mode 0
    /// (the one nearest `z = 1`).
    pub fn max_modulus_excluding_translation(&self) -> T {
        let one = Complex::new(T::one(), T::zero());
        let mut worst = self.gamma.abs();
        for m in &self.modes {
            let skip = if m.k == 0 {
                let d0 = (m.roots[0] - one).norm();
                let d1 = (m.roots[1] - one).norm();
                Some(if d0 <= d1 { 0 } else { 1 })
            } else {
                None
            };
            for (idx, r) in m.roots.iter().enumerate() {
                if skip != Some(idx) {
                    worst = worst.max(r.norm());
                }
            }
        }
        worst
    }
}

/// `Σ_l exp(i 2π k l / N) β_l` for each of x, v and a.
pub fn mode_sums<T: Scalar>(jacobian: &PolicyJacobian<T>, k: usize, vehicle_count: usize) -> [Complex<T>; 3] {
    let mut out = [Complex::new(T::zero(), T::zero()); 3];
    let two_pi = T::PI() + T::PI();
    for b in &jacobian.betas {
        let phase = two_pi * T::from_usize_lossy(k) * T::from_isize(b.offset).expect("offset fits")
            / T::from_usize_lossy(vehicle_count);
        let alpha = Complex::from_polar(T::one(), phase);
        out[0] = out[0] + alpha * b.x;
        out[1] = out[1] + alpha * b.v;
        out[2] = out[2] + alpha * b.a;
    }
    out
}

/// Roots of `y² + c y - Δt² B^x = 0` with `y = 1 - z`, `c = Δt(B^v - Δt B^x)`,
/// computed without cancellation.
pub fn bracket_roots<T: Scalar>(b_x: Complex<T>, b_v: Complex<T>, dt: T) -> [Complex<T>; 2] {
    let c = (b_v - b_x * dt) * dt;
    let k = -(b_x * (dt * dt));
    let disc = (c * c - k * T::lit(4.0)).sqrt();
    // pick the sign that adds magnitudes
    let s = if (c.conj() * disc).re >= T::zero() { disc } else { -disc };
    let q = -(c + s) / T::lit(2.0);
    let one = Complex::new(T::one(), T::zero());
    if q.norm() == T::zero() {
        return [one, one];
    }
    let y1 = q;
    let y2 = k / q;
    [one - y1, one - y2]
}

/// Mode-by-mode roots of the characteristic equation.
pub fn z_roots<T: Scalar>(jacobian: &PolicyJacobian<T>, vehicle_count: usize, dt: T, gamma: T) -> ModeSpectrum<T> {
    let modes = (0..vehicle_count)
        .map(|k| {
            let [b_x, b_v, b_a] = mode_sums(jacobian, k, vehicle_count);
            ModeRoots {
                k,
                b_x,
                b_v,
                b_a,
                roots: bracket_roots(b_x, b_v, dt),
            }
        })
        .collect();
    ModeSpectrum { gamma, modes }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Stable,
    Marginal,
    Unstable,
}

/// Stable below `1 - margin`, unstable above `1 + margin`, marginal between.
pub fn classify<T: Scalar>(spectrum: &ModeSpectrum<T>, margin: T) -> Verdict {
    let worst = spectrum.max_modulus_excluding_translation();
    if worst < T::one() - margin {
        Verdict::Stable
    } else if worst > T::one() + margin {
        Verdict::Unstable
    } else {
        Verdict::Marginal
    }
}

/// Default marginal band half-width.
pub const DEFAULT_MARGIN: f64 = 1e-3;
