//! Geodesic segments, parallel frames, and the curvature coupling tensor.
//!
//! A segment joins two points over the parameter interval [−1, 1], so the
//! constant geometric speed is half the endpoint distance. Per factor the
//! track is a straight line or a great-circle arc, both in closed form, and
//! parallel transport decomposes into a rotating in-plane part plus a fixed
//! normal part. The adapted frame puts the unit tangent first and fills the
//! normal space with eigenvectors of the tangent-curvature operator, sorted
//! by ascending eigenvalue.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::manifold::{points_close, Factor, ManifoldModel, Point, TangentVec, BASE_MATCH_TOL};

/// Segments shorter than this are rejected as degenerate.
pub const DEGENERATE_TOL: f64 = 1e-12;
/// Curvature eigenvalues below this (relative to speed²) are clamped to zero.
pub const KAPPA_CLAMP: f64 = 1e-10;

#[derive(Debug, Clone)]
enum FactorTrack {
    /// pos(t) = start + (1 + t) · vel_dt.
    Line { start: DVector<f64>, vel_dt: DVector<f64> },
    /// pos(t) = cos(φ) · base + sin(φ) · dir with φ = ω(1 + t)/2.
    Arc { base: DVector<f64>, dir: DVector<f64>, omega: f64 },
}

/// The unique minimizing geodesic from `x` (t = −1) to `y` (t = +1).
#[derive(Debug, Clone)]
pub struct GeodesicSegment {
    model: ManifoldModel,
    x: Point,
    y: Point,
    tracks: Vec<FactorTrack>,
    speed: f64,
}

impl GeodesicSegment {
    pub fn connect(model: &ManifoldModel, x: &Point, y: &Point) -> Result<Self> {
        let d = model.distance(x, y);
        if d <= DEGENERATE_TOL {
            return Err(Error::DegenerateSegment);
        }
        let log = model.log_map(x, y)?;
        let mut tracks = Vec::with_capacity(model.factors().len());
        for ((f, xb), lb) in model.factors().iter().zip(x.blocks()).zip(log.blocks()) {
            match f {
                Factor::Euclidean { .. } => {
                    tracks.push(FactorTrack::Line { start: xb.clone(), vel_dt: lb / 2.0 })
                }
                Factor::Sphere { .. } => {
                    let omega = lb.norm();
                    let dir =
                        if omega < 1e-15 { DVector::zeros(xb.len()) } else { lb / omega };
                    tracks.push(FactorTrack::Arc { base: xb.clone(), dir, omega })
                }
            }
        }
        Ok(GeodesicSegment { model: model.clone(), x: x.clone(), y: y.clone(), tracks, speed: d / 2.0 })
    }

    pub fn model(&self) -> &ManifoldModel {
        &self.model
    }

    pub fn x(&self) -> &Point {
        &self.x
    }

    pub fn y(&self) -> &Point {
        &self.y
    }

    /// Constant geometric speed |Γ̇|, equal to d(x, y)/2.
    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn point_at(&self, t: f64) -> Point {
        let blocks = self
            .tracks
            .iter()
            .map(|tr| match tr {
                FactorTrack::Line { start, vel_dt } => start + vel_dt * (1.0 + t),
                FactorTrack::Arc { base, dir, omega } => {
                    if *omega == 0.0 {
                        base.clone()
                    } else {
                        let phi = omega * (1.0 + t) / 2.0;
                        let mut q = base * phi.cos() + dir * phi.sin();
                        q /= q.norm();
                        q
                    }
                }
            })
            .collect();
        Point { blocks }
    }

    pub fn velocity_at(&self, t: f64) -> TangentVec {
        let base = self.point_at(t);
        let blocks = self
            .tracks
            .iter()
            .map(|tr| match tr {
                FactorTrack::Line { vel_dt, .. } => vel_dt.clone(),
                FactorTrack::Arc { base, dir, omega } => {
                    if *omega == 0.0 {
                        DVector::zeros(base.len())
                    } else {
                        let phi = omega * (1.0 + t) / 2.0;
                        (dir * phi.cos() - base * phi.sin()) * (omega / 2.0)
                    }
                }
            })
            .collect();
        TangentVec { base, blocks }
    }

    /// Parallel transport of `v` from Γ(t0) to Γ(t1).
    ///
    /// Per sphere factor the component along the moving tangent direction is
    /// carried, the complement of the great-circle plane is fixed; stationary
    /// factors and Euclidean factors transport by identity.
    pub fn transport(&self, v: &TangentVec, t0: f64, t1: f64) -> Result<TangentVec> {
        if !points_close(v.base(), &self.point_at(t0), BASE_MATCH_TOL) {
            return Err(Error::BaseMismatch("transport source".into()));
        }
        let target = self.point_at(t1);
        let blocks = self
            .tracks
            .iter()
            .zip(v.blocks())
            .map(|(tr, vb)| match tr {
                FactorTrack::Line { .. } => vb.clone(),
                FactorTrack::Arc { base, dir, omega } => {
                    if *omega == 0.0 {
                        vb.clone()
                    } else {
                        let tang = |t: f64| {
                            let phi = omega * (1.0 + t) / 2.0;
                            dir * phi.cos() - base * phi.sin()
                        };
                        let t_from = tang(t0);
                        let t_to = tang(t1);
                        let along = vb.dot(&t_from);
                        let perp = vb - &t_from * along;
                        perp + t_to * along
                    }
                }
            })
            .collect();
        Ok(TangentVec { base: target, blocks })
    }

    pub fn frame(&self) -> Result<Frame> {
        Frame::build(self)
    }
}

/// Transport `v` from `from` to `to` along the connecting geodesic.
pub fn transport_between(
    model: &ManifoldModel,
    from: &Point,
    to: &Point,
    v: &TangentVec,
) -> Result<TangentVec> {
    if points_close(from, to, DEGENERATE_TOL) {
        return Ok(TangentVec { base: to.clone(), blocks: v.blocks().to_vec() });
    }
    let seg = GeodesicSegment::connect(model, from, to)?;
    seg.transport(v, -1.0, 1.0)
}

/// Constant coupling coefficients c[α][β][γ] = ⟨R(E_α, Γ̇)E_β, E_γ⟩.
///
/// Indices are zero-based, so index 0 is the tangent direction.
#[derive(Debug, Clone)]
pub struct CTensor {
    n: usize,
    data: Vec<f64>,
}

impl CTensor {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, a: usize, b: usize, g: usize) -> f64 {
        assert!(a < self.n && b < self.n && g < self.n, "coupling index out of range");
        self.data[(a * self.n + b) * self.n + g]
    }
}

/// Parallel orthonormal frame adapted to a segment.
///
/// Entry 0 is Γ̇/|Γ̇|; the rest diagonalize X ↦ R(X, Γ̇)Γ̇ on the normal
/// space with eigenvalues κ_α |Γ̇|², κ ascending. All vectors are parallel,
/// so values anywhere on the segment come from closed-form transport of the
/// stored values at t = −1.
#[derive(Debug, Clone)]
pub struct Frame {
    seg: GeodesicSegment,
    at_start: Vec<TangentVec>,
    kappas: Vec<f64>,
    c: CTensor,
}

impl Frame {
    pub fn build(seg: &GeodesicSegment) -> Result<Frame> {
        let model = seg.model().clone();
        let n = model.dim();
        let speed = seg.speed();
        let vel = seg.velocity_at(-1.0);
        let e1 = vel.scale(1.0 / speed);

        // Metric Gram-Schmidt of the canonical basis against E_1.
        let mut kept: Vec<TangentVec> = vec![e1];
        for cand in model.orthonormal_basis(seg.x()) {
            if kept.len() == n {
                break;
            }
            let mut v = cand;
            for u in &kept {
                let coef = model.metric_inner(&v, u)?;
                v = v.sub(&u.scale(coef));
            }
            let nv = model.norm(&v);
            if nv > 1e-6 {
                v = v.scale(1.0 / nv);
                kept.push(v);
            }
        }
        if kept.len() != n {
            return Err(Error::DegenerateSpan);
        }

        // Normal-space curvature block B[a][b] = ⟨R(f_a, Γ̇)Γ̇, f_b⟩.
        let m = n - 1;
        let mut at_start = vec![kept[0].clone()];
        let mut kappas = vec![0.0];
        if m > 0 {
            let mut b = DMatrix::zeros(m, m);
            for a in 0..m {
                let r = model.curvature_op(&kept[a + 1], &vel, &vel)?;
                for bb in 0..m {
                    b[(a, bb)] = model.metric_inner(&r, &kept[bb + 1])?;
                }
            }
            let b = (&b + b.transpose()) / 2.0;
            let eig = b.symmetric_eigen();
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
            for &j in &order {
                let mut v = model.zero_tangent(seg.x());
                for a in 0..m {
                    v = v.add(&kept[a + 1].scale(eig.eigenvectors[(a, j)]));
                }
                let lam = eig.eigenvalues[j];
                let kappa = if lam.abs() < KAPPA_CLAMP * speed.powi(2).max(1.0) {
                    0.0
                } else {
                    lam / (speed * speed)
                };
                at_start.push(v);
                kappas.push(kappa);
            }
        }

        // Coupling tensor at t = −1; parallelism makes it t-independent.
        let mut data = vec![0.0; n * n * n];
        for a in 0..n {
            for bb in 0..n {
                let r = model.curvature_op(&at_start[a], &vel, &at_start[bb])?;
                for g in 0..n {
                    data[(a * n + bb) * n + g] = model.metric_inner(&r, &at_start[g])?;
                }
            }
        }

        Ok(Frame { seg: seg.clone(), at_start, kappas, c: CTensor { n, data } })
    }

    pub fn n(&self) -> usize {
        self.kappas.len()
    }

    pub fn segment(&self) -> &GeodesicSegment {
        &self.seg
    }

    pub fn speed(&self) -> f64 {
        self.seg.speed()
    }

    /// Curvature eigenvalues κ_α normalized by speed², ascending, κ[0] = 0.
    pub fn kappas(&self) -> &[f64] {
        &self.kappas
    }

    pub fn c(&self) -> &CTensor {
        &self.c
    }

    pub fn vector_at(&self, alpha: usize, t: f64) -> TangentVec {
        self.seg.transport(&self.at_start[alpha], -1.0, t).expect("frame vector transport")
    }

    /// Frame components ⟨v, E_α(t)⟩ of a vector based at Γ(t).
    pub fn components(&self, v: &TangentVec, t: f64) -> Result<Vec<f64>> {
        let model = self.seg.model();
        (0..self.n()).map(|a| model.metric_inner(v, &self.vector_at(a, t))).collect()
    }

    /// Rebuild Σ comps[α] E_α(t) as a tangent vector at Γ(t).
    pub fn combine(&self, comps: &[f64], t: f64) -> TangentVec {
        assert_eq!(comps.len(), self.n());
        let model = self.seg.model();
        let mut v = model.zero_tangent(&self.seg.point_at(t));
        for (a, &c) in comps.iter().enumerate() {
            if c != 0.0 {
                v = v.add(&self.vector_at(a, t).scale(c));
            }
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn product_model() -> ManifoldModel {
        ManifoldModel::new(vec![
            Factor::Sphere { dim: 2, kappa: 1.0 },
            Factor::Sphere { dim: 2, kappa: 4.0 },
        ])
        .unwrap()
    }

    /// Equal-energy diagonal segment on the two-sphere product: each factor
    /// runs an arc of equal geometric length.
    fn diagonal_segment(model: &ManifoldModel) -> GeodesicSegment {
        let x = model.point(vec![vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]]).unwrap();
        // Factor distances: θ1 = 0.7, θ2/2 = 0.7 so both contribute 0.7.
        let t1 = 0.7f64;
        let t2 = 1.4f64;
        let y = model
            .point(vec![
                vec![t1.cos(), t1.sin(), 0.0],
                vec![t2.cos(), t2.sin(), 0.0],
            ])
            .unwrap();
        GeodesicSegment::connect(model, &x, &y).unwrap()
    }

    #[test]
    fn endpoints_and_constant_speed() {
        let model = product_model();
        let seg = diagonal_segment(&model);
        assert!(points_close(&seg.point_at(-1.0), seg.x(), 1e-14));
        assert!(points_close(&seg.point_at(1.0), seg.y(), 1e-12));
        let d = model.distance(seg.x(), seg.y());
        for &t in &[-1.0, -0.35, 0.0, 0.8, 1.0] {
            let v = seg.velocity_at(t);
            assert!((model.norm(&v) - d / 2.0).abs() < 1e-13);
        }
    }

    #[test]
    fn velocity_matches_position_derivative() {
        let model = product_model();
        let seg = diagonal_segment(&model);
        let h = 1e-6;
        for &t in &[-0.6, 0.1, 0.9] {
            let plus = seg.point_at(t + h);
            let minus = seg.point_at(t - h);
            let v = seg.velocity_at(t);
            for (i, vb) in v.blocks().iter().enumerate() {
                let fd = (&plus.blocks()[i] - &minus.blocks()[i]) / (2.0 * h);
                assert!((fd - vb).amax() < 1e-8);
            }
        }
    }

    #[test]
    fn midpoint_is_equidistant() {
        let model = product_model();
        let seg = diagonal_segment(&model);
        let mid = seg.point_at(0.0);
        let dx = model.distance(seg.x(), &mid);
        let dy = model.distance(&mid, seg.y());
        assert!((dx - dy).abs() < 1e-13);
        assert!((dx + dy - model.distance(seg.x(), seg.y())).abs() < 1e-13);
    }

    #[test]
    fn transport_is_isometric_and_invertible() {
        let model = product_model();
        let seg = diagonal_segment(&model);
        let basis = model.orthonormal_basis(seg.x());
        for v in &basis {
            let w = seg.transport(v, -1.0, 0.65).unwrap();
            assert!((model.norm(&w) - 1.0).abs() < 1e-13);
            let back = seg.transport(&w, 0.65, -1.0).unwrap();
            let diff = back.sub(v);
            assert!(model.norm(&diff) < 1e-12);
        }
        // Velocity is parallel along the track.
        let v0 = seg.velocity_at(-1.0);
        let moved = seg.transport(&v0, -1.0, 0.4).unwrap();
        let diff = moved.sub(&seg.velocity_at(0.4));
        assert!(model.norm(&diff) < 1e-12);
    }

    #[test]
    fn degenerate_segment_rejected() {
        let model = ManifoldModel::euclidean(2);
        let p = model.point(vec![vec![0.4, -0.1]]).unwrap();
        match GeodesicSegment::connect(&model, &p, &p) {
            Err(Error::DegenerateSegment) => {}
            other => panic!("expected degenerate segment, got {other:?}"),
        }
    }

    #[test]
    fn frame_is_parallel_orthonormal_and_adapted() {
        let model = product_model();
        let seg = diagonal_segment(&model);
        let frame = seg.frame().unwrap();
        assert_eq!(frame.n(), 4);
        // First vector is the unit tangent.
        for &t in &[-1.0, 0.3] {
            let e1 = frame.vector_at(0, t);
            let want = seg.velocity_at(t).scale(1.0 / seg.speed());
            assert!(model.norm(&e1.sub(&want)) < 1e-12);
            for a in 0..4 {
                for b in 0..4 {
                    let g = model
                        .metric_inner(&frame.vector_at(a, t), &frame.vector_at(b, t))
                        .unwrap();
                    let id = if a == b { 1.0 } else { 0.0 };
                    assert!((g - id).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn frame_diagonalizes_tangent_curvature() {
        let model = product_model();
        let seg = diagonal_segment(&model);
        let frame = seg.frame().unwrap();
        let s2 = seg.speed() * seg.speed();
        // Equal energy split: eigenvalues κ_i |Γ̇_i|² give κ/2 after the
        // speed² normalization, and two flat directions remain.
        let want = [0.0, 0.0, 0.5, 2.0];
        for (k, w) in frame.kappas().iter().zip(want) {
            assert!((k - w).abs() < 1e-10, "kappas = {:?}", frame.kappas());
        }
        let t = 0.25;
        let vel = seg.velocity_at(t);
        for a in 0..4 {
            let e = frame.vector_at(a, t);
            let r = model.curvature_op(&e, &vel, &vel).unwrap();
            let diff = r.sub(&e.scale(frame.kappas()[a] * s2));
            assert!(model.norm(&diff) < 1e-10);
        }
    }

    #[test]
    fn coupling_tensor_structure() {
        let model = product_model();
        let seg = diagonal_segment(&model);
        let frame = seg.frame().unwrap();
        let c = frame.c();
        let s = seg.speed();
        let n = frame.n();
        for a in 0..n {
            for b in 0..n {
                for g in 0..n {
                    // Skew in the last two slots, zero when the first slot is
                    // the tangent direction.
                    assert!((c.get(a, b, g) + c.get(a, g, b)).abs() < 1e-12);
                    if a == 0 {
                        assert!(c.get(a, b, g).abs() < 1e-12);
                    }
                }
            }
            // Slot-two tangent insertion reproduces the eigenvalue row.
            for g in 0..n {
                let want = if g == a { frame.kappas()[a] * s } else { 0.0 };
                assert!((c.get(a, 0, g) - want).abs() < 1e-10);
            }
        }
        // Genuine normal-normal coupling exists on the unequal product: the
        // factor-one normal pairs with the mixed flat direction.
        let witness = c.get(2, 2, 1).abs();
        assert!((witness - 0.5 * s).abs() < 1e-10, "witness = {witness}");
    }

    #[test]
    fn single_sphere_coupling_vanishes_off_tangent() {
        let model = ManifoldModel::sphere(3, 1.0);
        let x = model.point(vec![vec![1.0, 0.0, 0.0, 0.0]]).unwrap();
        let y = model.point(vec![vec![0.2, 0.6, 0.5, (1.0f64 - 0.65).sqrt()]]).unwrap();
        let seg = GeodesicSegment::connect(&model, &x, &y).unwrap();
        let frame = seg.frame().unwrap();
        assert_eq!(frame.n(), 3);
        let c = frame.c();
        for a in 1..3 {
            for b in 1..3 {
                for g in 1..3 {
                    assert!(c.get(a, b, g).abs() < 1e-12);
                }
            }
            // The only nonzero rows insert the tangent in slot two.
            assert!((c.get(a, 0, a) - frame.kappas()[a] * seg.speed()).abs() < 1e-12);
        }
    }
}
