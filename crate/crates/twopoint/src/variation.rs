//! Second-variation fields of the endpoint-to-endpoint geodesic family.
//!
//! Differentiating the family in two endpoint directions yields, for every
//! frame pair (α, β), four vector fields along the segment, one per choice
//! of which endpoints the derivatives hit. Each vanishes at t = ±1. In the
//! adapted frame the γ-component of every such field satisfies
//!
//!   k̈ + κ_γ s² k + source(t) = 0,   k(±1) = 0,
//!
//! with a source built from the Jacobi profiles and the coupling tensor.
//! Two independent computations are provided: a tridiagonal solve of the
//! component problems, and a finite-difference estimator that perturbs an
//! endpoint and differences actual Jacobi fields of neighboring segments.
//! The sum-and-difference combinations across the four kinds are symmetric
//! in (α, β), odd in t, and vanish at the midpoint; the checks below verify
//! all of that numerically.

use crate::error::{Error, Result};
use crate::geodesic::{transport_between, CTensor, Frame};
use crate::jacobi::{profiles_for, JacobiField, VProfile};
use crate::linalg::thomas_solve;

/// Default cell count for the component solves; keeps t = ±1 + k/10 on grid.
pub const DEFAULT_ODE_CELLS: usize = 800;
/// Default endpoint-perturbation step for the difference estimator.
pub const DEFAULT_FD_STEP: f64 = 1e-2;

/// Which endpoint each derivative of the geodesic family hits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KKind {
    /// Both derivatives at the left endpoint.
    Xx,
    /// Field direction at the left endpoint, differentiation at the right.
    Xy,
    /// Field direction at the right endpoint, differentiation at the left.
    Yx,
    /// Both derivatives at the right endpoint.
    Yy,
}

/// Frame components of one kind of second-variation field, sampled in t.
///
/// Storage is flat over (α, β, sample, γ).
#[derive(Debug, Clone)]
pub struct KFieldSet {
    pub kind: KKind,
    pub ts: Vec<f64>,
    n: usize,
    data: Vec<f64>,
}

impl KFieldSet {
    fn zeros(kind: KKind, ts: Vec<f64>, n: usize) -> Self {
        let len = n * n * ts.len() * n;
        KFieldSet { kind, ts, n, data: vec![0.0; len] }
    }

    fn idx(&self, a: usize, b: usize, it: usize, g: usize) -> usize {
        debug_assert!(a < self.n && b < self.n && g < self.n && it < self.ts.len());
        ((a * self.n + b) * self.ts.len() + it) * self.n + g
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn at(&self, a: usize, b: usize, it: usize, g: usize) -> f64 {
        self.data[self.idx(a, b, it, g)]
    }

    fn set(&mut self, a: usize, b: usize, it: usize, g: usize, v: f64) {
        let i = self.idx(a, b, it, g);
        self.data[i] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Sum and difference combinations over the four kinds, same storage layout.
#[derive(Debug, Clone)]
pub struct KComboSet {
    pub ts: Vec<f64>,
    n: usize,
    plus: Vec<f64>,
    minus: Vec<f64>,
}

impl KComboSet {
    fn idx(&self, a: usize, b: usize, it: usize, g: usize) -> usize {
        ((a * self.n + b) * self.ts.len() + it) * self.n + g
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn plus_at(&self, a: usize, b: usize, it: usize, g: usize) -> f64 {
        self.plus[self.idx(a, b, it, g)]
    }

    pub fn minus_at(&self, a: usize, b: usize, it: usize, g: usize) -> f64 {
        self.minus[self.idx(a, b, it, g)]
    }

    /// Largest combination component at the t = 0 sample, (sum, difference).
    pub fn midpoint_max(&self) -> Result<(f64, f64)> {
        let it = self
            .ts
            .iter()
            .position(|t| t.abs() < 1e-12)
            .ok_or_else(|| Error::GridMismatch("no midpoint sample".into()))?;
        let mut mp = 0.0f64;
        let mut mm = 0.0f64;
        for a in 0..self.n {
            for b in 0..self.n {
                for g in 0..self.n {
                    mp = mp.max(self.plus_at(a, b, it, g).abs());
                    mm = mm.max(self.minus_at(a, b, it, g).abs());
                }
            }
        }
        Ok((mp, mm))
    }

    /// Largest violation of component oddness k(−t) = −k(t) over the grid.
    pub fn oddness_max(&self) -> Result<f64> {
        let nt = self.ts.len();
        for i in 0..nt {
            if (self.ts[i] + self.ts[nt - 1 - i]).abs() > 1e-12 {
                return Err(Error::GridMismatch("samples not symmetric about 0".into()));
            }
        }
        let mut worst = 0.0f64;
        for a in 0..self.n {
            for b in 0..self.n {
                for it in 0..nt {
                    let jt = nt - 1 - it;
                    for g in 0..self.n {
                        worst = worst
                            .max((self.plus_at(a, b, it, g) + self.plus_at(a, b, jt, g)).abs());
                        worst = worst
                            .max((self.minus_at(a, b, it, g) + self.minus_at(a, b, jt, g)).abs());
                    }
                }
            }
        }
        Ok(worst)
    }
}

/// Source term of the γ-component problem for one kind and pair.
fn source(kind: KKind, prof: &[VProfile], c: &CTensor, a: usize, b: usize, g: usize, t: f64) -> f64 {
    let c_abg = c.get(a, b, g);
    let c_bag = c.get(b, a, g);
    if c_abg == 0.0 && c_bag == 0.0 {
        return 0.0;
    }
    let va_m = prof[a].v(1.0 - t);
    let va_p = prof[a].v(1.0 + t);
    let vb_m = prof[b].v(1.0 - t);
    let vb_p = prof[b].v(1.0 + t);
    let da_m = prof[a].vdot(1.0 - t);
    let da_p = prof[a].vdot(1.0 + t);
    let db_m = prof[b].vdot(1.0 - t);
    let db_p = prof[b].vdot(1.0 + t);
    match kind {
        KKind::Xx => -2.0 * c_abg * va_m * db_m - 2.0 * c_bag * vb_m * da_m,
        KKind::Xy => 2.0 * c_abg * va_m * db_p - 2.0 * c_bag * vb_p * da_m,
        KKind::Yx => -2.0 * c_abg * va_p * db_m + 2.0 * c_bag * vb_m * da_p,
        KKind::Yy => 2.0 * c_abg * va_p * db_p + 2.0 * c_bag * vb_p * da_p,
    }
}

/// Solve k̈ + ks2·k + load = 0 with k(±1) = 0 on a uniform grid.
fn scalar_bvp(ks2: f64, loads: &[f64], n_cells: usize) -> Result<Vec<f64>> {
    let h = 2.0 / n_cells as f64;
    let m = n_cells - 1;
    let diag = vec![2.0 - ks2 * h * h; m];
    let sub = vec![-1.0; m - 1];
    let sup = vec![-1.0; m - 1];
    let rhs: Vec<f64> = (1..n_cells).map(|i| h * h * loads[i]).collect();
    let interior = thomas_solve(&sub, &diag, &sup, &rhs)?;
    let mut out = Vec::with_capacity(n_cells + 1);
    out.push(0.0);
    out.extend(interior);
    out.push(0.0);
    Ok(out)
}

fn scalar_bvp_extrapolated(
    ks2: f64,
    load: impl Fn(f64) -> f64,
    n_cells: usize,
) -> Result<Vec<f64>> {
    let sample = |n: usize| -> Vec<f64> {
        (0..=n).map(|i| load(-1.0 + 2.0 * i as f64 / n as f64)).collect()
    };
    let coarse = scalar_bvp(ks2, &sample(n_cells), n_cells)?;
    let fine = scalar_bvp(ks2, &sample(2 * n_cells), 2 * n_cells)?;
    Ok(coarse.iter().enumerate().map(|(i, &c)| (4.0 * fine[2 * i] - c) / 3.0).collect())
}

/// Component solve of all pairs of one kind on a uniform grid of `n_cells`
/// cells, sharpened by one extrapolation step.
pub fn k_fields_ode(frame: &Frame, kind: KKind, n_cells: usize) -> Result<KFieldSet> {
    assert!(n_cells >= 4, "need at least four cells");
    let n = frame.n();
    let prof = profiles_for(frame)?;
    let s2 = frame.speed() * frame.speed();
    let ts: Vec<f64> = (0..=n_cells).map(|i| -1.0 + 2.0 * i as f64 / n_cells as f64).collect();
    let mut out = KFieldSet::zeros(kind, ts, n);
    for a in 0..n {
        for b in 0..n {
            for g in 0..n {
                let ks2 = frame.kappas()[g] * s2;
                let k =
                    scalar_bvp_extrapolated(ks2, |t| source(kind, &prof, frame.c(), a, b, g, t), n_cells)?;
                for (it, &kv) in k.iter().enumerate() {
                    out.set(a, b, it, g, kv);
                }
            }
        }
    }
    Ok(out)
}

/// Difference estimator: perturb the endpoint the β-derivative hits by
/// ±h E_β, solve the neighboring segments' Jacobi fields with matching
/// boundary data, carry the samples back to the base segment, and take the
/// centered quotient. Entirely independent of the component solve above.
pub fn k_fields_fd(frame: &Frame, kind: KKind, h: f64, ts: &[f64]) -> Result<KFieldSet> {
    let seg = frame.segment();
    let model = seg.model().clone();
    let n = frame.n();
    let (move_right, alpha_on_left) = match kind {
        KKind::Xx => (false, true),
        KKind::Xy => (true, true),
        KKind::Yx => (false, false),
        KKind::Yy => (true, false),
    };
    let move_t = if move_right { 1.0 } else { -1.0 };
    let alpha_t = if alpha_on_left { -1.0 } else { 1.0 };
    let moving_end = seg.point_at(move_t);

    let mut out = KFieldSet::zeros(kind, ts.to_vec(), n);
    for b in 0..n {
        let e_b = frame.vector_at(b, move_t);
        // Per sign: sampled values of every α-field on the perturbed segment,
        // already transported back to the base segment.
        let mut carried: [Vec<Vec<Vec<f64>>>; 2] = [Vec::new(), Vec::new()];
        for (si, sign) in [1.0f64, -1.0].iter().enumerate() {
            let moved = model.exp_map(&e_b.scale(sign * h))?;
            let (px, py) = if move_right {
                (seg.x().clone(), moved.clone())
            } else {
                (moved.clone(), seg.y().clone())
            };
            let pseg = crate::geodesic::GeodesicSegment::connect(&model, &px, &py)?;
            let pframe = pseg.frame()?;
            let mut per_alpha = Vec::with_capacity(n);
            for a in 0..n {
                let e_a = frame.vector_at(a, alpha_t);
                // Boundary value at the α-end: exact when that end did not
                // move, otherwise the short-transport proxy whose even error
                // cancels in the centered quotient.
                let bv = if (move_right && !alpha_on_left) || (!move_right && alpha_on_left) {
                    transport_between(&model, &moving_end, &moved, &e_a)?
                } else {
                    e_a
                };
                let (bv_l, bv_r) = if alpha_on_left {
                    (bv, model.zero_tangent(pseg.y()))
                } else {
                    (model.zero_tangent(pseg.x()), bv)
                };
                let j = JacobiField::from_boundary(&pframe, &bv_l, &bv_r)?;
                let mut samples = Vec::with_capacity(ts.len());
                for &t in ts {
                    let v = j.value_at(t);
                    let back = transport_between(&model, &pseg.point_at(t), &seg.point_at(t), &v)?;
                    samples.push(frame.components(&back, t)?);
                }
                per_alpha.push(samples);
            }
            carried[si] = per_alpha;
        }
        for a in 0..n {
            for it in 0..ts.len() {
                for g in 0..n {
                    let k = (carried[0][a][it][g] - carried[1][a][it][g]) / (2.0 * h);
                    out.set(a, b, it, g, k);
                }
            }
        }
    }
    Ok(out)
}

/// Difference estimator sharpened by steps h and h/2.
pub fn k_fields_fd_extrapolated(
    frame: &Frame,
    kind: KKind,
    h: f64,
    ts: &[f64],
) -> Result<KFieldSet> {
    let coarse = k_fields_fd(frame, kind, h, ts)?;
    let fine = k_fields_fd(frame, kind, h / 2.0, ts)?;
    let mut out = KFieldSet::zeros(kind, ts.to_vec(), coarse.n);
    for a in 0..coarse.n {
        for b in 0..coarse.n {
            for it in 0..ts.len() {
                for g in 0..coarse.n {
                    let v = (4.0 * fine.at(a, b, it, g) - coarse.at(a, b, it, g)) / 3.0;
                    out.set(a, b, it, g, v);
                }
            }
        }
    }
    Ok(out)
}

/// Combine the four kinds into the sum (+) and difference (−) families.
pub fn k_combos(
    xx: &KFieldSet,
    xy: &KFieldSet,
    yx: &KFieldSet,
    yy: &KFieldSet,
) -> Result<KComboSet> {
    let kinds = [xx.kind, xy.kind, yx.kind, yy.kind];
    if kinds != [KKind::Xx, KKind::Xy, KKind::Yx, KKind::Yy] {
        return Err(Error::ConfigError(format!("combo inputs out of order: {kinds:?}")));
    }
    for other in [xy, yx, yy] {
        if other.n != xx.n || other.ts != xx.ts {
            return Err(Error::GridMismatch("combo inputs sampled differently".into()));
        }
    }
    let len = xx.data.len();
    let mut plus = vec![0.0; len];
    let mut minus = vec![0.0; len];
    for i in 0..len {
        let cross = xy.data[i] + yx.data[i];
        let straight = xx.data[i] + yy.data[i];
        plus[i] = straight + cross;
        minus[i] = straight - cross;
    }
    Ok(KComboSet { ts: xx.ts.clone(), n: xx.n, plus, minus })
}

/// All four kinds via the component solve, combined.
pub fn k_combos_ode(frame: &Frame, n_cells: usize) -> Result<KComboSet> {
    let xx = k_fields_ode(frame, KKind::Xx, n_cells)?;
    let xy = k_fields_ode(frame, KKind::Xy, n_cells)?;
    let yx = k_fields_ode(frame, KKind::Yx, n_cells)?;
    let yy = k_fields_ode(frame, KKind::Yy, n_cells)?;
    k_combos(&xx, &xy, &yx, &yy)
}

/// Closed-form right side of the combined-component identity.
fn combo_rhs(
    plus: bool,
    prof: &[VProfile],
    c: &CTensor,
    a: usize,
    b: usize,
    g: usize,
    t: f64,
) -> f64 {
    let c_abg = c.get(a, b, g);
    let c_bag = c.get(b, a, g);
    let va_m = prof[a].v(1.0 - t);
    let va_p = prof[a].v(1.0 + t);
    let vb_m = prof[b].v(1.0 - t);
    let vb_p = prof[b].v(1.0 + t);
    let da_m = prof[a].vdot(1.0 - t);
    let da_p = prof[a].vdot(1.0 + t);
    let db_m = prof[b].vdot(1.0 - t);
    let db_p = prof[b].vdot(1.0 + t);
    if plus {
        -2.0 * c_abg * (va_m + va_p) * (-db_m + db_p) - 2.0 * c_bag * (vb_m + vb_p) * (-da_m + da_p)
    } else {
        2.0 * c_abg * (va_m - va_p) * (db_m + db_p) + 2.0 * c_bag * (vb_m - vb_p) * (da_m + da_p)
    }
}

/// Check that the combined components satisfy their inhomogeneous equation:
/// a five-point second difference plus the κ_γ s² term must reproduce the
/// closed-form right side. Returns the worst residual for (sum, difference).
pub fn fundamental_identity_residual(frame: &Frame, combos: &KComboSet) -> Result<(f64, f64)> {
    let nt = combos.ts.len();
    if nt < 5 {
        return Err(Error::GridMismatch("need at least five samples".into()));
    }
    let h = combos.ts[1] - combos.ts[0];
    for i in 1..nt {
        if ((combos.ts[i] - combos.ts[i - 1]) - h).abs() > 1e-12 {
            return Err(Error::GridMismatch("identity check needs a uniform grid".into()));
        }
    }
    let prof = profiles_for(frame)?;
    let s2 = frame.speed() * frame.speed();
    let n = combos.n;
    let mut worst = (0.0f64, 0.0f64);
    for a in 0..n {
        for b in 0..n {
            for g in 0..n {
                let ks2 = frame.kappas()[g] * s2;
                for it in 2..nt - 2 {
                    let t = combos.ts[it];
                    for plus in [true, false] {
                        let read = |j: usize| {
                            if plus {
                                combos.plus_at(a, b, j, g)
                            } else {
                                combos.minus_at(a, b, j, g)
                            }
                        };
                        let second = (-read(it - 2) + 16.0 * read(it - 1) - 30.0 * read(it)
                            + 16.0 * read(it + 1)
                            - read(it + 2))
                            / (12.0 * h * h);
                        let lhs = second + ks2 * read(it);
                        let rhs = combo_rhs(plus, &prof, frame.c(), a, b, g, t);
                        let r = (lhs - rhs).abs();
                        if plus {
                            worst.0 = worst.0.max(r);
                        } else {
                            worst.1 = worst.1.max(r);
                        }
                    }
                }
            }
        }
    }
    Ok(worst)
}

/// Largest violation of oddness of the scalar forcing functions that drive
/// the midpoint argument, sampled symmetrically. Pure closed-form check.
pub fn eta_oddness_max(frame: &Frame, n_samples: usize) -> Result<f64> {
    let prof = profiles_for(frame)?;
    let s = frame.speed();
    let n = frame.n();
    let c = frame.c();
    let mut worst = 0.0f64;
    for i in 0..=n_samples {
        let t = i as f64 / n_samples as f64;
        for a in 0..n {
            for b in 0..n {
                for g in 0..n {
                    // Sum case: prefactor c·s on each term.
                    let eta_plus = |tt: f64| {
                        c.get(a, b, g)
                            * s
                            * (prof[a].v(1.0 - tt) + prof[a].v(1.0 + tt))
                            * (-prof[b].vdot(1.0 - tt) + prof[b].vdot(1.0 + tt))
                            + c.get(b, a, g)
                                * s
                                * (prof[b].v(1.0 - tt) + prof[b].v(1.0 + tt))
                                * (-prof[a].vdot(1.0 - tt) + prof[a].vdot(1.0 + tt))
                    };
                    let eta_minus = |tt: f64| combo_rhs(false, &prof, c, a, b, g, tt);
                    worst = worst.max((eta_plus(t) + eta_plus(-t)).abs());
                    worst = worst.max((eta_minus(t) + eta_minus(-t)).abs());
                }
            }
        }
    }
    Ok(worst)
}
