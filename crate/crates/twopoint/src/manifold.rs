//! Closed-form geometry of product model spaces.
//!
//! A model space is a finite product of Euclidean factors and round spheres.
//! Sphere factors of curvature κ are represented by unit vectors in ambient
//! R^{d+1}; the factor metric is the ambient dot product scaled by 1/κ, so a
//! stored tangent block of Euclidean length L has geometric length L/√κ.
//! Every operation below (exponential, logarithm, curvature) is exact up to
//! floating point: nothing on these spaces needs an integrator.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for unit-norm validation of sphere-factor point blocks.
pub const UNIT_NORM_TOL: f64 = 1e-12;
/// Tolerance for tangency (orthogonality to the base) of sphere-factor blocks.
pub const TANGENCY_TOL: f64 = 1e-9;
/// Two points within this distance are treated as the same base point.
pub const BASE_MATCH_TOL: f64 = 1e-10;
/// Sphere-factor points with inner product below −1 + this are antipodal.
pub const ANTIPODAL_TOL: f64 = 1e-12;

/// One factor of the product.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Factor {
    Euclidean { dim: usize },
    Sphere { dim: usize, kappa: f64 },
}

impl Factor {
    /// Length of a stored point block: ambient dimension for spheres.
    pub fn block_len(&self) -> usize {
        match *self {
            Factor::Euclidean { dim } => dim,
            Factor::Sphere { dim, .. } => dim + 1,
        }
    }

    /// Intrinsic dimension contributed to the product.
    pub fn dim(&self) -> usize {
        match *self {
            Factor::Euclidean { dim } | Factor::Sphere { dim, .. } => dim,
        }
    }

    pub fn kappa(&self) -> f64 {
        match *self {
            Factor::Euclidean { .. } => 0.0,
            Factor::Sphere { kappa, .. } => kappa,
        }
    }
}

/// A finite product of model factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldModel {
    factors: Vec<Factor>,
    total_dim: usize,
    curvature_bound: f64,
}

/// A point of the product, stored as one block per factor.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub(crate) blocks: Vec<DVector<f64>>,
}

/// A tangent vector anchored at a base point.
#[derive(Debug, Clone)]
pub struct TangentVec {
    pub(crate) base: Point,
    pub(crate) blocks: Vec<DVector<f64>>,
}

impl ManifoldModel {
    pub fn new(factors: Vec<Factor>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::ConfigError("manifold needs at least one factor".into()));
        }
        let mut total_dim = 0;
        let mut bound = 0.0f64;
        for f in &factors {
            match *f {
                Factor::Euclidean { dim } => {
                    if dim == 0 {
                        return Err(Error::ConfigError("euclidean factor needs dim >= 1".into()));
                    }
                    total_dim += dim;
                }
                Factor::Sphere { dim, kappa } => {
                    if dim == 0 {
                        return Err(Error::ConfigError("sphere factor needs dim >= 1".into()));
                    }
                    if !(kappa > 0.0) || !kappa.is_finite() {
                        return Err(Error::ConfigError("sphere factor needs kappa > 0".into()));
                    }
                    total_dim += dim;
                    bound = bound.max(kappa);
                }
            }
        }
        Ok(ManifoldModel { factors, total_dim, curvature_bound: bound })
    }

    pub fn euclidean(dim: usize) -> Self {
        ManifoldModel::new(vec![Factor::Euclidean { dim }]).expect("valid factor")
    }

    pub fn sphere(dim: usize, kappa: f64) -> Self {
        ManifoldModel::new(vec![Factor::Sphere { dim, kappa }]).expect("valid factor")
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn dim(&self) -> usize {
        self.total_dim
    }

    /// Upper sectional-curvature bound A = max over sphere factors of κ.
    pub fn curvature_bound(&self) -> f64 {
        self.curvature_bound
    }

    /// Diameter bound π/√A excluding conjugate points; infinite when flat.
    pub fn distance_bound(&self) -> f64 {
        if self.curvature_bound > 0.0 {
            std::f64::consts::PI / self.curvature_bound.sqrt()
        } else {
            f64::INFINITY
        }
    }

    /// Build a point from per-factor blocks, validating sphere blocks to unit
    /// norm within `UNIT_NORM_TOL` (then renormalizing exactly).
    pub fn point(&self, blocks: Vec<Vec<f64>>) -> Result<Point> {
        if blocks.len() != self.factors.len() {
            return Err(Error::ConfigError(format!(
                "point has {} blocks, manifold has {} factors",
                blocks.len(),
                self.factors.len()
            )));
        }
        let mut out = Vec::with_capacity(blocks.len());
        for (f, b) in self.factors.iter().zip(blocks) {
            if b.len() != f.block_len() {
                return Err(Error::ConfigError(format!(
                    "factor block length {} != expected {}",
                    b.len(),
                    f.block_len()
                )));
            }
            let mut v = DVector::from_vec(b);
            if let Factor::Sphere { .. } = f {
                let n = v.norm();
                if (n - 1.0).abs() > UNIT_NORM_TOL {
                    return Err(Error::DomainViolation(format!(
                        "sphere point block norm {n} deviates from 1 beyond {UNIT_NORM_TOL}"
                    )));
                }
                v /= n;
            }
            out.push(v);
        }
        Ok(Point { blocks: out })
    }

    /// Build a tangent vector at `base`, validating sphere-block tangency
    /// within `TANGENCY_TOL` (then projecting exactly).
    pub fn tangent(&self, base: &Point, blocks: Vec<Vec<f64>>) -> Result<TangentVec> {
        if blocks.len() != self.factors.len() {
            return Err(Error::ConfigError("tangent block count mismatch".into()));
        }
        let mut out = Vec::with_capacity(blocks.len());
        for ((f, b), p) in self.factors.iter().zip(blocks).zip(&base.blocks) {
            if b.len() != f.block_len() {
                return Err(Error::ConfigError("tangent block length mismatch".into()));
            }
            let mut v = DVector::from_vec(b);
            if let Factor::Sphere { .. } = f {
                let along = v.dot(p);
                if along.abs() > TANGENCY_TOL * (1.0 + v.norm()) {
                    return Err(Error::DomainViolation(format!(
                        "sphere tangent block has radial component {along}"
                    )));
                }
                v -= p * along;
            }
            out.push(v);
        }
        Ok(TangentVec { base: base.clone(), blocks: out })
    }

    pub fn zero_tangent(&self, base: &Point) -> TangentVec {
        let blocks = self.factors.iter().map(|f| DVector::zeros(f.block_len())).collect();
        TangentVec { base: base.clone(), blocks }
    }

    fn check_same_base(&self, a: &TangentVec, b: &TangentVec, what: &str) -> Result<()> {
        if !points_close(&a.base, &b.base, BASE_MATCH_TOL) {
            return Err(Error::BaseMismatch(what.into()));
        }
        Ok(())
    }

    /// Riemannian inner product; sphere blocks contribute ambient dot / κ.
    pub fn metric_inner(&self, a: &TangentVec, b: &TangentVec) -> Result<f64> {
        self.check_same_base(a, b, "metric_inner")?;
        let mut acc = 0.0;
        for ((f, x), y) in self.factors.iter().zip(&a.blocks).zip(&b.blocks) {
            let d = x.dot(y);
            acc += match f {
                Factor::Euclidean { .. } => d,
                Factor::Sphere { kappa, .. } => d / kappa,
            };
        }
        Ok(acc)
    }

    pub fn norm(&self, v: &TangentVec) -> f64 {
        self.metric_inner(v, v).expect("same base").max(0.0).sqrt()
    }

    /// Exponential map. Euclidean blocks translate; sphere blocks rotate along
    /// the great circle through the base in the direction of the block.
    pub fn exp_map(&self, v: &TangentVec) -> Result<Point> {
        let mut blocks = Vec::with_capacity(self.factors.len());
        for ((f, p), x) in self.factors.iter().zip(&v.base.blocks).zip(&v.blocks) {
            match f {
                Factor::Euclidean { .. } => blocks.push(p + x),
                Factor::Sphere { .. } => {
                    let omega = x.norm();
                    if omega < 1e-300 {
                        blocks.push(p.clone());
                    } else {
                        let dir = x / omega;
                        let mut q = p * omega.cos() + dir * omega.sin();
                        q /= q.norm();
                        blocks.push(q);
                    }
                }
            }
        }
        Ok(Point { blocks })
    }

    /// Logarithm map: the tangent vector at `p` whose exponential is `q`.
    ///
    /// Errors with `DomainViolation` when d(p, q) reaches the conjugate-point
    /// bound π/√A or when some sphere factor pair is antipodal.
    pub fn log_map(&self, p: &Point, q: &Point) -> Result<TangentVec> {
        let d = self.distance(p, q);
        if d >= self.distance_bound() {
            return Err(Error::DomainViolation(format!(
                "distance {d} reaches the bound {}",
                self.distance_bound()
            )));
        }
        let mut blocks = Vec::with_capacity(self.factors.len());
        for ((f, pb), qb) in self.factors.iter().zip(&p.blocks).zip(&q.blocks) {
            match f {
                Factor::Euclidean { .. } => blocks.push(qb - pb),
                Factor::Sphere { .. } => {
                    let c = pb.dot(qb).clamp(-1.0, 1.0);
                    if c <= -1.0 + ANTIPODAL_TOL {
                        return Err(Error::DomainViolation(
                            "antipodal sphere factor points".into(),
                        ));
                    }
                    let theta = c.acos();
                    if theta < 1e-15 {
                        blocks.push(DVector::zeros(pb.len()));
                    } else {
                        let mut w = qb - pb * c;
                        let n = w.norm();
                        w /= n;
                        blocks.push(w * theta);
                    }
                }
            }
        }
        Ok(TangentVec { base: p.clone(), blocks })
    }

    /// Product distance: Euclidean norm of the per-factor distances.
    pub fn distance(&self, p: &Point, q: &Point) -> f64 {
        let mut acc = 0.0;
        for ((f, pb), qb) in self.factors.iter().zip(&p.blocks).zip(&q.blocks) {
            let di = match f {
                Factor::Euclidean { .. } => (pb - qb).norm(),
                Factor::Sphere { kappa, .. } => {
                    let c = pb.dot(qb).clamp(-1.0, 1.0);
                    c.acos() / kappa.sqrt()
                }
            };
            acc += di * di;
        }
        acc.sqrt()
    }

    /// Curvature operator R(X, Y)Z with the sign convention that makes
    /// sectional curvature ⟨R(X, Y)Y, X⟩ / |X∧Y|² equal κ on a κ-sphere.
    /// Acts blockwise; Euclidean blocks contribute zero.
    pub fn curvature_op(
        &self,
        x: &TangentVec,
        y: &TangentVec,
        z: &TangentVec,
    ) -> Result<TangentVec> {
        self.check_same_base(x, y, "curvature_op")?;
        self.check_same_base(x, z, "curvature_op")?;
        let mut blocks = Vec::with_capacity(self.factors.len());
        for (i, f) in self.factors.iter().enumerate() {
            match f {
                Factor::Euclidean { dim } => blocks.push(DVector::zeros(*dim)),
                Factor::Sphere { .. } => {
                    // κ(⟨Y,Z⟩_g X − ⟨X,Z⟩_g Y): the κ and the 1/κ of the
                    // factor metric cancel into plain ambient dot products.
                    let xb = &x.blocks[i];
                    let yb = &y.blocks[i];
                    let zb = &z.blocks[i];
                    blocks.push(xb * yb.dot(zb) - yb * xb.dot(zb));
                }
            }
        }
        Ok(TangentVec { base: x.base.clone(), blocks })
    }

    /// Sectional curvature of the plane spanned by `x`, `y`.
    pub fn sectional_curvature(&self, x: &TangentVec, y: &TangentVec) -> Result<f64> {
        let xx = self.metric_inner(x, x)?;
        let yy = self.metric_inner(y, y)?;
        let xy = self.metric_inner(x, y)?;
        let gram = xx * yy - xy * xy;
        if gram <= 1e-12 * xx.max(1e-300) * yy.max(1e-300) {
            return Err(Error::DegenerateSpan);
        }
        let rxyy = self.curvature_op(x, y, y)?;
        Ok(self.metric_inner(&rxyy, x)? / gram)
    }

    /// Deterministic orthonormal basis of the tangent space at `p`, assembled
    /// factor by factor from the canonical ambient axes.
    pub fn orthonormal_basis(&self, p: &Point) -> Vec<TangentVec> {
        let mut out = Vec::with_capacity(self.total_dim);
        for (i, f) in self.factors.iter().enumerate() {
            match f {
                Factor::Euclidean { dim } => {
                    for k in 0..*dim {
                        let mut blocks: Vec<DVector<f64>> =
                            self.factors.iter().map(|g| DVector::zeros(g.block_len())).collect();
                        blocks[i][k] = 1.0;
                        out.push(TangentVec { base: p.clone(), blocks });
                    }
                }
                Factor::Sphere { dim, kappa } => {
                    // Gram-Schmidt the ambient axes against the base direction;
                    // scale so the factor metric sees unit vectors.
                    let pb = &p.blocks[i];
                    let mut kept: Vec<DVector<f64>> = Vec::with_capacity(*dim);
                    for k in 0..=*dim {
                        let mut v = DVector::zeros(pb.len());
                        v[k] = 1.0;
                        v -= pb * pb.dot(&v);
                        for u in &kept {
                            let coef = u.dot(&v);
                            v -= u * coef;
                        }
                        let n = v.norm();
                        if n > 1e-8 {
                            kept.push(v / n);
                            if kept.len() == *dim {
                                break;
                            }
                        }
                    }
                    debug_assert_eq!(kept.len(), *dim);
                    for v in kept {
                        let mut blocks: Vec<DVector<f64>> =
                            self.factors.iter().map(|g| DVector::zeros(g.block_len())).collect();
                        blocks[i] = v * kappa.sqrt();
                        out.push(TangentVec { base: p.clone(), blocks });
                    }
                }
            }
        }
        out
    }
}

impl Point {
    pub fn blocks(&self) -> &[DVector<f64>] {
        &self.blocks
    }

    /// Flat copy of all coordinates, for reports and hashing.
    pub fn flat(&self) -> Vec<f64> {
        self.blocks.iter().flat_map(|b| b.iter().copied()).collect()
    }
}

impl TangentVec {
    pub fn base(&self) -> &Point {
        &self.base
    }

    pub fn blocks(&self) -> &[DVector<f64>] {
        &self.blocks
    }

    /// Sum of tangent vectors at the same base (panics on structural misuse).
    pub fn add(&self, other: &TangentVec) -> TangentVec {
        assert!(points_close(&self.base, &other.base, BASE_MATCH_TOL), "tangent add across bases");
        let blocks = self.blocks.iter().zip(&other.blocks).map(|(a, b)| a + b).collect();
        TangentVec { base: self.base.clone(), blocks }
    }

    pub fn sub(&self, other: &TangentVec) -> TangentVec {
        assert!(points_close(&self.base, &other.base, BASE_MATCH_TOL), "tangent sub across bases");
        let blocks = self.blocks.iter().zip(&other.blocks).map(|(a, b)| a - b).collect();
        TangentVec { base: self.base.clone(), blocks }
    }

    pub fn scale(&self, s: f64) -> TangentVec {
        TangentVec { base: self.base.clone(), blocks: self.blocks.iter().map(|b| b * s).collect() }
    }
}

/// Componentwise closeness of two points (chordal, per block).
pub fn points_close(p: &Point, q: &Point, tol: f64) -> bool {
    p.blocks.len() == q.blocks.len()
        && p.blocks.iter().zip(&q.blocks).all(|(a, b)| (a - b).amax() <= tol)
}
