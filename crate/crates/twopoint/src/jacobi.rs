//! Jacobi fields along a segment in closed form, plus a difference-scheme
//! oracle that solves the same two-point problems without trigonometry.
//!
//! In the adapted frame every Jacobi component decouples into the scalar
//! problem w'' + κ s² w = 0 on [−1, 1], where s is the segment speed. The
//! building-block profile
//!
//!   v(σ) = sin(√κ s σ) / sin(2 √κ s)        (σ/2 when κ = 0)
//!
//! satisfies v(0) = 0 and v(2) = 1, so w(t) = a·v(1−t) + b·v(1+t) matches
//! boundary data w(−1) = a, w(+1) = b. Conjugate points are excluded while
//! 2√κ s < π, which segment construction already guarantees under the
//! distance bound.

use crate::error::{Error, Result};
use crate::geodesic::Frame;
use crate::linalg::thomas_solve;
use crate::manifold::TangentVec;

/// Below this value of √κ·s the sine quotient switches to its series form.
pub const SERIES_THRESHOLD: f64 = 1e-4;

/// Scalar Jacobi profile for one frame direction.
#[derive(Debug, Clone, Copy)]
pub struct VProfile {
    /// ψ = √κ · s; zero marks the flat branch.
    psi: f64,
}

fn sin_quotient_series(z2: f64) -> f64 {
    // sin(z)/z = 1 − z²/6 + z⁴/120 − z⁶/5040 + z⁸/362880.
    1.0 + z2 * (-1.0 / 6.0 + z2 * (1.0 / 120.0 + z2 * (-1.0 / 5040.0 + z2 / 362880.0)))
}

fn cos_series(z2: f64) -> f64 {
    1.0 + z2 * (-0.5 + z2 * (1.0 / 24.0 + z2 * (-1.0 / 720.0 + z2 / 40320.0)))
}

impl VProfile {
    pub fn new(kappa: f64, speed: f64) -> Result<VProfile> {
        if kappa < 0.0 {
            return Err(Error::DomainViolation("negative curvature eigenvalue".into()));
        }
        let psi = kappa.sqrt() * speed;
        if 2.0 * psi >= std::f64::consts::PI {
            return Err(Error::DomainViolation(format!(
                "segment reaches a conjugate point: 2 psi = {} >= pi",
                2.0 * psi
            )));
        }
        Ok(VProfile { psi })
    }

    /// v(σ) for σ ∈ [0, 2].
    pub fn v(&self, sigma: f64) -> f64 {
        let psi = self.psi;
        if psi == 0.0 {
            sigma / 2.0
        } else if psi < SERIES_THRESHOLD {
            let num = sigma * sin_quotient_series((psi * sigma) * (psi * sigma));
            let den = 2.0 * sin_quotient_series((2.0 * psi) * (2.0 * psi));
            num / den
        } else {
            (psi * sigma).sin() / (2.0 * psi).sin()
        }
    }

    /// dv/dσ.
    pub fn vdot(&self, sigma: f64) -> f64 {
        let psi = self.psi;
        if psi == 0.0 {
            0.5
        } else if psi < SERIES_THRESHOLD {
            cos_series((psi * sigma) * (psi * sigma))
                / (2.0 * sin_quotient_series((2.0 * psi) * (2.0 * psi)))
        } else {
            psi * (psi * sigma).cos() / (2.0 * psi).sin()
        }
    }
}

/// One profile per frame direction, in frame order.
pub fn profiles_for(frame: &Frame) -> Result<Vec<VProfile>> {
    frame.kappas().iter().map(|&k| VProfile::new(k, frame.speed())).collect()
}

/// Diagonal of the midpoint transfer map: 1 / (2 v_α(1)) per direction.
///
/// The entries collapse to cos(√κ_α s), so each lies in (0, 1].
pub fn transfer_diagonal(frame: &Frame) -> Result<Vec<f64>> {
    Ok(profiles_for(frame)?.iter().map(|p| 1.0 / (2.0 * p.v(1.0))).collect())
}

/// A Jacobi field with prescribed endpoint values, in closed form.
#[derive(Debug, Clone)]
pub struct JacobiField<'a> {
    frame: &'a Frame,
    profiles: Vec<VProfile>,
    /// Frame components of the field at t = −1.
    a: Vec<f64>,
    /// Frame components of the field at t = +1.
    b: Vec<f64>,
}

impl<'a> JacobiField<'a> {
    pub fn from_boundary(
        frame: &'a Frame,
        at_minus: &TangentVec,
        at_plus: &TangentVec,
    ) -> Result<Self> {
        let a = frame.components(at_minus, -1.0)?;
        let b = frame.components(at_plus, 1.0)?;
        Ok(JacobiField { frame, profiles: profiles_for(frame)?, a, b })
    }

    /// The field moving the left endpoint along E_α, right endpoint fixed.
    pub fn coordinate_x(frame: &'a Frame, alpha: usize) -> Result<Self> {
        let n = frame.n();
        let mut a = vec![0.0; n];
        a[alpha] = 1.0;
        Ok(JacobiField { frame, profiles: profiles_for(frame)?, a, b: vec![0.0; n] })
    }

    /// The field moving the right endpoint along E_α, left endpoint fixed.
    pub fn coordinate_y(frame: &'a Frame, alpha: usize) -> Result<Self> {
        let n = frame.n();
        let mut b = vec![0.0; n];
        b[alpha] = 1.0;
        Ok(JacobiField { frame, profiles: profiles_for(frame)?, a: vec![0.0; n], b })
    }

    pub fn component(&self, alpha: usize, t: f64) -> f64 {
        let p = &self.profiles[alpha];
        self.a[alpha] * p.v(1.0 - t) + self.b[alpha] * p.v(1.0 + t)
    }

    /// Frame component of the covariant derivative along the segment.
    pub fn deriv_component(&self, alpha: usize, t: f64) -> f64 {
        let p = &self.profiles[alpha];
        -self.a[alpha] * p.vdot(1.0 - t) + self.b[alpha] * p.vdot(1.0 + t)
    }

    pub fn value_at(&self, t: f64) -> TangentVec {
        let comps: Vec<f64> = (0..self.frame.n()).map(|al| self.component(al, t)).collect();
        self.frame.combine(&comps, t)
    }

    pub fn frame(&self) -> &Frame {
        self.frame
    }
}

/// Difference-scheme oracle for w'' + κ s² w = 0 with w(±1) given.
///
/// Returns the node abscissas and values on a uniform grid with `n` cells,
/// boundary nodes included.
pub fn bvp_oracle(
    kappa: f64,
    speed: f64,
    w_minus: f64,
    w_plus: f64,
    n: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    assert!(n >= 2);
    let h = 2.0 / n as f64;
    let ks2 = kappa * speed * speed;
    let m = n - 1;
    // −w_{i−1} + (2 − κ s² h²) w_i − w_{i+1} = boundary load.
    let diag = vec![2.0 - ks2 * h * h; m];
    let sub = vec![-1.0; m - 1];
    let sup = vec![-1.0; m - 1];
    let mut rhs = vec![0.0; m];
    rhs[0] += w_minus;
    rhs[m - 1] += w_plus;
    let interior = thomas_solve(&sub, &diag, &sup, &rhs)?;
    let mut ts = Vec::with_capacity(n + 1);
    let mut ws = Vec::with_capacity(n + 1);
    ts.push(-1.0);
    ws.push(w_minus);
    for (i, w) in interior.into_iter().enumerate() {
        ts.push(-1.0 + (i as f64 + 1.0) * h);
        ws.push(w);
    }
    ts.push(1.0);
    ws.push(w_plus);
    Ok((ts, ws))
}

/// Oracle sharpened by solving at n and 2n cells and extrapolating the
/// leading h² error away on the coarse nodes.
pub fn bvp_oracle_extrapolated(
    kappa: f64,
    speed: f64,
    w_minus: f64,
    w_plus: f64,
    n: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (ts, coarse) = bvp_oracle(kappa, speed, w_minus, w_plus, n)?;
    let (_, fine) = bvp_oracle(kappa, speed, w_minus, w_plus, 2 * n)?;
    let vals = coarse
        .iter()
        .enumerate()
        .map(|(i, &c)| (4.0 * fine[2 * i] - c) / 3.0)
        .collect();
    Ok((ts, vals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesic::GeodesicSegment;
    use crate::manifold::{Factor, ManifoldModel};

    #[test]
    fn profile_endpoint_normalization() {
        for &(kappa, speed) in &[(0.0, 0.7), (1.0, 0.9), (4.0, 0.55), (2.3, 0.31)] {
            let p = VProfile::new(kappa, speed).unwrap();
            assert!(p.v(0.0).abs() < 1e-15);
            assert!((p.v(2.0) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn flat_profile_is_linear() {
        let p = VProfile::new(0.0, 1.3).unwrap();
        for &s in &[0.0, 0.4, 1.1, 2.0] {
            assert_eq!(p.v(s), s / 2.0);
            assert_eq!(p.vdot(s), 0.5);
        }
    }

    #[test]
    fn series_branch_agrees_with_direct_formula() {
        // Just under the threshold the series must match the trigonometric
        // quotient to near machine accuracy.
        for &psi in &[1e-6, 5e-5, 9.99e-5] {
            let p = VProfile { psi };
            for &s in &[0.3, 1.0, 1.7] {
                let direct = (psi * s).sin() / (2.0 * psi).sin();
                assert!((p.v(s) - direct).abs() < 1e-14);
                let ddirect = psi * (psi * s).cos() / (2.0 * psi).sin();
                assert!((p.vdot(s) - ddirect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn conjugate_point_rejected() {
        match VProfile::new(4.0, 0.79) {
            Err(Error::DomainViolation(_)) => {}
            other => panic!("expected domain violation, got {other:?}"),
        }
    }

    #[test]
    fn transfer_diagonal_is_cosine_and_contractive() {
        let model = ManifoldModel::new(vec![
            Factor::Sphere { dim: 2, kappa: 1.0 },
            Factor::Euclidean { dim: 1 },
        ])
        .unwrap();
        let x = model.point(vec![vec![1.0, 0.0, 0.0], vec![0.0]]).unwrap();
        let y = model.point(vec![vec![0.3, 0.8, (1.0f64 - 0.73).sqrt()], vec![0.6]]).unwrap();
        let seg = GeodesicSegment::connect(&model, &x, &y).unwrap();
        let frame = seg.frame().unwrap();
        let diag = transfer_diagonal(&frame).unwrap();
        for (v, &k) in diag.iter().zip(frame.kappas()) {
            let want = (k.sqrt() * frame.speed()).cos();
            assert!((v - want).abs() < 1e-13);
            assert!(*v > 0.0 && *v <= 1.0 + 1e-15);
        }
        assert!((diag[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn oracle_confirms_closed_form_profiles() {
        let kappa = 1.0;
        let speed = 0.9;
        let p = VProfile::new(kappa, speed).unwrap();
        // Boundary data (1, 0) selects t ↦ v(1 − t).
        let (ts, ws) = bvp_oracle_extrapolated(kappa, speed, 1.0, 0.0, 400).unwrap();
        for (t, w) in ts.iter().zip(&ws) {
            assert!((w - p.v(1.0 - t)).abs() < 1e-10);
        }
        // Mixed boundary data stays a two-profile combination.
        let (ts, ws) = bvp_oracle_extrapolated(kappa, speed, 0.3, -0.8, 400).unwrap();
        for (t, w) in ts.iter().zip(&ws) {
            let want = 0.3 * p.v(1.0 - t) - 0.8 * p.v(1.0 + t);
            assert!((w - want).abs() < 1e-10);
        }
    }

    #[test]
    fn coordinate_fields_hit_their_boundary_values() {
        let model = ManifoldModel::new(vec![
            Factor::Sphere { dim: 2, kappa: 1.0 },
            Factor::Sphere { dim: 2, kappa: 4.0 },
        ])
        .unwrap();
        let x = model.point(vec![vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]]).unwrap();
        let y = model
            .point(vec![vec![0.7f64.cos(), 0.7f64.sin(), 0.0], vec![1.4f64.cos(), 1.4f64.sin(), 0.0]])
            .unwrap();
        let seg = GeodesicSegment::connect(&model, &x, &y).unwrap();
        let frame = seg.frame().unwrap();
        for alpha in 0..frame.n() {
            let jx = JacobiField::coordinate_x(&frame, alpha).unwrap();
            let e_start = frame.vector_at(alpha, -1.0);
            let diff = jx.value_at(-1.0).sub(&e_start);
            assert!(model.norm(&diff) < 1e-12);
            assert!(model.norm(&jx.value_at(1.0)) < 1e-12);

            let jy = JacobiField::coordinate_y(&frame, alpha).unwrap();
            assert!(model.norm(&jy.value_at(-1.0)) < 1e-12);
            let diff = jy.value_at(1.0).sub(&frame.vector_at(alpha, 1.0));
            assert!(model.norm(&diff) < 1e-12);
        }
    }

    #[test]
    fn jacobi_equation_holds_pointwise() {
        // Transported second difference plus curvature term vanishes at the
        // scheme's accuracy for a field with mixed boundary data.
        let model = ManifoldModel::new(vec![
            Factor::Sphere { dim: 2, kappa: 1.0 },
            Factor::Euclidean { dim: 1 },
        ])
        .unwrap();
        let x = model.point(vec![vec![1.0, 0.0, 0.0], vec![-0.2]]).unwrap();
        let y = model.point(vec![vec![0.4, 0.7, (1.0f64 - 0.65).sqrt()], vec![0.5]]).unwrap();
        let seg = GeodesicSegment::connect(&model, &x, &y).unwrap();
        let frame = seg.frame().unwrap();
        let bv_minus = frame.combine(&[0.2, -0.4, 0.9], -1.0);
        let bv_plus = frame.combine(&[-0.3, 0.5, 0.7], 1.0);
        let j = JacobiField::from_boundary(&frame, &bv_minus, &bv_plus).unwrap();
        let h = 1e-3;
        for &t in &[-0.5, 0.0, 0.6] {
            let here = j.value_at(t);
            let plus = seg.transport(&j.value_at(t + h), t + h, t).unwrap();
            let minus = seg.transport(&j.value_at(t - h), t - h, t).unwrap();
            let second = plus.sub(&here.scale(2.0)).add(&minus).scale(1.0 / (h * h));
            let vel = seg.velocity_at(t);
            let curv = model.curvature_op(&here, &vel, &vel).unwrap();
            let residual = second.add(&curv);
            assert!(model.norm(&residual) < 1e-6, "residual = {}", model.norm(&residual));
        }
    }
}
