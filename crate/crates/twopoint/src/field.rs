//! Scalar fields on gridded domains and their covariant derivatives.
//!
//! A field stores node values over a chart grid; queries interpolate. The
//! gradient and Hessian come from chart partials corrected by the
//! Christoffel symbols, expressed against the orthonormal chart frame
//! e_i = (coordinate direction)/sqrt(g_ii). Inside a small collar around a
//! polar chart origin the angular metric degenerates, so derivative queries
//! switch to symmetric difference stencils along geodesics, which never see
//! chart coordinates and stay uniformly accurate.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::domain::{AxisRole, DomainSpec, Grid};
use crate::error::{Error, Result};
use crate::interp;
use crate::manifold::{Point, TangentVec};

/// Radial width, in grid steps, of the collar where derivative queries use
/// geodesic stencils instead of chart partials.
pub const POLE_COLLAR_STEPS: f64 = 2.0;
/// Largest spread tolerated across a stored polar-origin node row.
pub const POLE_ROW_TOL: f64 = 1e-10;
/// Largest Hessian asymmetry tolerated before symmetrizing.
pub const HESSIAN_ASYM_TOL: f64 = 1e-12;

/// Which equation produced a solved field, recorded so downstream audits
/// can refuse mismatched nonlinearity selections.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldProvenance {
    pub equation: String,
    pub b_key: String,
    pub f_key: String,
}

/// Pointwise map applied to stored values at query time. Derivative queries
/// push the map through by the chain rule instead of re-differencing
/// transformed node values, which would compound interpolation error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PostMap {
    NegLog,
    Log,
}

impl PostMap {
    fn value(&self, u: f64) -> f64 {
        match self {
            PostMap::NegLog => -u.ln(),
            PostMap::Log => u.ln(),
        }
    }

    /// First and second derivatives of the map at u.
    fn derivs(&self, u: f64) -> (f64, f64) {
        match self {
            PostMap::NegLog => (-1.0 / u, 1.0 / (u * u)),
            PostMap::Log => (1.0 / u, -1.0 / (u * u)),
        }
    }
}

/// Node values of a scalar function over a domain grid.
#[derive(Debug, Clone)]
pub struct ScalarField {
    domain: Arc<DomainSpec>,
    grid: Arc<Grid>,
    values: Vec<f64>,
    provenance: Option<FieldProvenance>,
    post: Option<PostMap>,
}

/// Gradient and Hessian of a field at one point, with the orthonormal frame
/// the matrix refers to.
#[derive(Debug, Clone)]
pub struct FieldJet {
    pub value: f64,
    pub gradient: TangentVec,
    pub hessian: DMatrix<f64>,
    pub frame: Vec<TangentVec>,
}

impl ScalarField {
    pub fn from_values(
        domain: Arc<DomainSpec>,
        grid: Arc<Grid>,
        values: Vec<f64>,
    ) -> Result<ScalarField> {
        if values.len() != grid.n_nodes() {
            return Err(Error::GridMismatch(format!(
                "{} values for {} nodes",
                values.len(),
                grid.n_nodes()
            )));
        }
        let f = ScalarField { domain, grid, values, provenance: None, post: None };
        f.check_pole_rows()?;
        Ok(f)
    }

    /// Evaluate `f` at every node's chart coordinates. Polar-origin rows are
    /// filled from the angular index zero so the row is exactly constant.
    pub fn from_fn(
        domain: Arc<DomainSpec>,
        grid: Arc<Grid>,
        f: impl Fn(&[f64]) -> f64,
    ) -> ScalarField {
        let mut values = vec![0.0; grid.n_nodes()];
        for lin in 0..grid.n_nodes() {
            values[lin] = f(&grid.chart_of(&grid.unlin(lin)));
        }
        let mut field = ScalarField { domain, grid, values, provenance: None, post: None };
        field.normalize_pole_rows();
        field
    }

    fn radial_axes(&self) -> Vec<usize> {
        self.domain
            .axes()
            .iter()
            .enumerate()
            .filter(|(_, a)| a.role == AxisRole::Radial)
            .map(|(i, _)| i)
            .collect()
    }

    fn for_each_pole_row(&self, mut visit: impl FnMut(&[usize], usize)) {
        for ir in self.radial_axes() {
            // Iterate all multi-indices with the radial slot pinned to zero.
            let dims: Vec<usize> = (0..self.grid.dim()).filter(|&d| d != ir).collect();
            let sizes = self.grid.sizes().to_vec();
            let mut counters = vec![0usize; dims.len()];
            let mut idx = vec![0usize; self.grid.dim()];
            'rows: loop {
                for (slot, &d) in dims.iter().enumerate() {
                    idx[d] = counters[slot];
                }
                idx[ir] = 0;
                visit(&idx, ir);
                let mut k = dims.len();
                loop {
                    if k == 0 {
                        break 'rows;
                    }
                    k -= 1;
                    counters[k] += 1;
                    if counters[k] < sizes[dims[k]] {
                        break;
                    }
                    counters[k] = 0;
                }
            }
        }
    }

    fn check_pole_rows(&self) -> Result<()> {
        let mut worst = 0.0f64;
        let radial = self.radial_axes();
        for ir in radial {
            let angular = self
                .domain
                .axes()
                .iter()
                .position(|a| a.partner == Some(ir))
                .expect("radial axis has an angular partner");
            let mut idx = vec![0usize; self.grid.dim()];
            idx[ir] = 0;
            // Spread across the angular direction at the origin row, at the
            // zero position of every other axis; off-zero rows are covered
            // by the same replication rule used in normalize_pole_rows.
            let mut row = Vec::new();
            for j in 0..self.grid.sizes()[angular] {
                idx[angular] = j;
                row.push(self.values[self.grid.lin(&idx)]);
            }
            let lo = row.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            worst = worst.max(hi - lo);
        }
        if worst > POLE_ROW_TOL {
            return Err(Error::GridMismatch(format!(
                "polar-origin row varies by {worst} across the angular axis"
            )));
        }
        Ok(())
    }

    fn normalize_pole_rows(&mut self) {
        let grid = self.grid.clone();
        let mut writes: Vec<(usize, f64)> = Vec::new();
        self.for_each_pole_row(|idx, ir| {
            let angular = self
                .domain
                .axes()
                .iter()
                .position(|a| a.partner == Some(ir))
                .expect("radial axis has an angular partner");
            let mut ref_idx = idx.to_vec();
            ref_idx[angular] = 0;
            let v = self.values[grid.lin(&ref_idx)];
            writes.push((grid.lin(idx), v));
        });
        for (lin, v) in writes {
            self.values[lin] = v;
        }
    }

    pub fn domain(&self) -> &Arc<DomainSpec> {
        &self.domain
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn with_provenance(mut self, p: FieldProvenance) -> ScalarField {
        self.provenance = Some(p);
        self
    }

    pub fn provenance(&self) -> Option<&FieldProvenance> {
        self.provenance.as_ref()
    }

    /// Attach a pointwise map applied at query time. Requires strictly
    /// positive node values so the logarithm is defined on the closure.
    pub fn with_post_map(mut self, map: PostMap) -> Result<ScalarField> {
        if self.post.is_some() {
            return Err(Error::ConfigError(
                "field already carries a pointwise map".into(),
            ));
        }
        if let Some(&bad) = self.values.iter().find(|v| **v <= 0.0) {
            return Err(Error::DomainViolation(format!(
                "log transform of a field with nonpositive node value {bad}"
            )));
        }
        self.post = Some(map);
        Ok(self)
    }

    pub fn post_map(&self) -> Option<PostMap> {
        self.post
    }

    fn apply_post(&self, raw: f64) -> Result<f64> {
        match self.post {
            None => Ok(raw),
            Some(m) => {
                if raw <= 0.0 {
                    return Err(Error::DomainViolation(format!(
                        "log transform queried where the field is {raw}"
                    )));
                }
                Ok(m.value(raw))
            }
        }
    }

    pub fn eval(&self, q: &[f64]) -> f64 {
        let raw = interp::value(&self.grid, &self.values, q);
        match self.post {
            None => raw,
            Some(m) => m.value(raw),
        }
    }

    pub fn eval_point(&self, p: &Point) -> f64 {
        self.eval(&self.domain.point_to_chart(p))
    }

    fn eval_wide_point(&self, p: &Point) -> f64 {
        let raw =
            interp::value_wide(&self.grid, &self.values, &self.domain.point_to_chart(p));
        match self.post {
            None => raw,
            Some(m) => m.value(raw),
        }
    }

    /// Whether q falls in the collar around a polar origin where chart
    /// derivatives degenerate.
    fn in_pole_collar(&self, q: &[f64]) -> bool {
        self.radial_axes()
            .into_iter()
            .any(|ir| q[ir] < POLE_COLLAR_STEPS * self.grid.spacing()[ir] + 1e-15)
    }

    fn stencil_step(&self) -> f64 {
        self.radial_axes()
            .into_iter()
            .map(|ir| self.grid.spacing()[ir])
            .fold(0.0f64, f64::max)
    }

    /// Value, gradient, Hessian and frame at chart coordinates.
    pub fn jet(&self, q: &[f64]) -> Result<FieldJet> {
        if self.in_pole_collar(q) {
            return self.jet_geodesic(q);
        }
        let (value, grad_chart, hess_chart) =
            interp::value_grad_hess(&self.grid, &self.values, q);
        let g = self.domain.metric_diag(q);
        let basis = self.domain.chart_basis(q)?;
        let dim = self.grid.dim();

        let mut gradient = self.domain.model().zero_tangent(basis[0].base());
        for i in 0..dim {
            gradient = gradient.add(&basis[i].scale(grad_chart[i] / g[i]));
        }

        let mut hess = hess_chart;
        for (k, i, j, gamma) in self.domain.christoffels(q) {
            hess[(i, j)] -= gamma * grad_chart[k];
        }
        let mut frame = Vec::with_capacity(dim);
        for i in 0..dim {
            let si = g[i].sqrt();
            for j in 0..dim {
                hess[(i, j)] /= si;
                hess[(j, i)] /= si;
            }
            frame.push(basis[i].scale(1.0 / si));
        }
        let asym = (&hess - hess.transpose()).amax();
        if asym > HESSIAN_ASYM_TOL {
            return Err(Error::SolverFailure(format!("hessian asymmetry {asym}")));
        }
        let hessian = 0.5 * (&hess + hess.transpose());
        let Some(m) = self.post else {
            return Ok(FieldJet { value, gradient, hessian, frame });
        };
        // Chain rule on the raw jet; re-differencing mapped node values
        // would lose the fourth-order accuracy of the raw stencils.
        if value <= 0.0 {
            return Err(Error::DomainViolation(format!(
                "log transform queried where the field is {value}"
            )));
        }
        let (tp, tpp) = m.derivs(value);
        let comps: Vec<f64> =
            (0..dim).map(|a| grad_chart[a] / g[a].sqrt()).collect();
        let mut mapped_hess = hessian * tp;
        for a in 0..dim {
            for b in 0..dim {
                mapped_hess[(a, b)] += tpp * comps[a] * comps[b];
            }
        }
        Ok(FieldJet {
            value: m.value(value),
            gradient: gradient.scale(tp),
            hessian: mapped_hess,
            frame,
        })
    }

    /// Jet through symmetric five-point stencils along geodesics: exact in
    /// the covariant sense, fourth order in the step.
    fn jet_geodesic(&self, q: &[f64]) -> Result<FieldJet> {
        let p = self.domain.chart_to_point(q)?;
        let model = self.domain.model();
        let frame = model.orthonormal_basis(&p);
        let dim = frame.len();
        let delta = self.stencil_step();
        let center = self.apply_post(interp::value_wide(&self.grid, &self.values, q))?;

        // Stencils act on mapped samples here: pointwise exact values make
        // the composite as accurate as chaining through the raw jet.
        let probe = |dir: &TangentVec, t: f64| -> Result<f64> {
            let moved = model.exp_map(&dir.scale(t))?;
            let raw = interp::value_wide(
                &self.grid,
                &self.values,
                &self.domain.point_to_chart(&moved),
            );
            self.apply_post(raw)
        };
        let second_along = |dir: &TangentVec| -> Result<f64> {
            let f1p = probe(dir, delta)?;
            let f1m = probe(dir, -delta)?;
            let f2p = probe(dir, 2.0 * delta)?;
            let f2m = probe(dir, -2.0 * delta)?;
            Ok((-f2p + 16.0 * f1p - 30.0 * center + 16.0 * f1m - f2m)
                / (12.0 * delta * delta))
        };

        let mut gradient = model.zero_tangent(&p);
        let mut hessian = DMatrix::zeros(dim, dim);
        for a in 0..dim {
            let f1p = probe(&frame[a], delta)?;
            let f1m = probe(&frame[a], -delta)?;
            let f2p = probe(&frame[a], 2.0 * delta)?;
            let f2m = probe(&frame[a], -2.0 * delta)?;
            let slope = (f2m - 8.0 * f1m + 8.0 * f1p - f2p) / (12.0 * delta);
            gradient = gradient.add(&frame[a].scale(slope));
            hessian[(a, a)] =
                (-f2p + 16.0 * f1p - 30.0 * center + 16.0 * f1m - f2m)
                    / (12.0 * delta * delta);
        }
        for a in 0..dim {
            for b in a + 1..dim {
                let qp = second_along(&frame[a].add(&frame[b]))?;
                let qm = second_along(&frame[a].sub(&frame[b]))?;
                let hab = 0.25 * (qp - qm);
                hessian[(a, b)] = hab;
                hessian[(b, a)] = hab;
            }
        }
        Ok(FieldJet { value: center, gradient, hessian, frame })
    }

    pub fn gradient_vec(&self, q: &[f64]) -> Result<TangentVec> {
        Ok(self.jet(q)?.gradient)
    }

    /// Trace of the covariant Hessian.
    pub fn laplace_beltrami(&self, q: &[f64]) -> Result<f64> {
        Ok(self.jet(q)?.hessian.trace())
    }

    /// Symmetric second difference of the field along the geodesic through
    /// the tangent vector; an operator-free probe of the Hessian form.
    pub fn geodesic_second_difference(&self, dir: &TangentVec, h: f64) -> Result<f64> {
        let model = self.domain.model();
        let plus = model.exp_map(&dir.scale(h))?;
        let minus = model.exp_map(&dir.scale(-h))?;
        let mid = self.eval_wide_point(dir.base());
        Ok((self.eval_wide_point(&plus) - 2.0 * mid + self.eval_wide_point(&minus)) / (h * h))
    }
}

/// Snapshots of a field at increasing times, sharing one grid.
#[derive(Debug, Clone)]
pub struct TimeSeriesField {
    domain: Arc<DomainSpec>,
    grid: Arc<Grid>,
    times: Vec<f64>,
    frames: Vec<Vec<f64>>,
    provenance: Option<FieldProvenance>,
}

impl TimeSeriesField {
    pub fn new(
        domain: Arc<DomainSpec>,
        grid: Arc<Grid>,
        times: Vec<f64>,
        frames: Vec<Vec<f64>>,
    ) -> Result<TimeSeriesField> {
        if times.len() != frames.len() {
            return Err(Error::GridMismatch(format!(
                "{} times for {} frames",
                times.len(),
                frames.len()
            )));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::GridMismatch("times must increase".into()));
        }
        for f in &frames {
            if f.len() != grid.n_nodes() {
                return Err(Error::GridMismatch("frame size mismatch".into()));
            }
        }
        Ok(TimeSeriesField { domain, grid, times, frames, provenance: None })
    }

    pub fn with_provenance(mut self, p: FieldProvenance) -> TimeSeriesField {
        self.provenance = Some(p);
        self
    }

    pub fn provenance(&self) -> Option<&FieldProvenance> {
        self.provenance.as_ref()
    }

    pub fn domain(&self) -> &Arc<DomainSpec> {
        &self.domain
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.frames[i]
    }

    pub fn snapshot(&self, i: usize) -> Result<ScalarField> {
        let f =
            ScalarField::from_values(self.domain.clone(), self.grid.clone(), self.frames[i].clone())?;
        Ok(match &self.provenance {
            Some(p) => f.with_provenance(p.clone()),
            None => f,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DomainBlock;

    fn unit_cap(cells_r: usize, cells_th: usize) -> (Arc<DomainSpec>, Arc<Grid>) {
        let d = Arc::new(
            DomainSpec::new(vec![DomainBlock::Cap {
                radius: 1.2,
                kappa: 1.0,
                theta_offset: 0.0,
            }])
            .unwrap(),
        );
        let g = Arc::new(Grid::new(&d, &[cells_r, cells_th]).unwrap());
        (d, g)
    }

    #[test]
    fn radial_gradient_on_the_cap() {
        let (d, g) = unit_cap(96, 64);
        let f = ScalarField::from_fn(d.clone(), g, |q| q[0].cos());
        let q = [0.5, 1.3];
        let grad = f.gradient_vec(&q).unwrap();
        let norm = d.model().norm(&grad);
        assert!((norm - 0.5f64.sin()).abs() < 1e-6, "norm {norm}");
        // Points inward: negative component against the radial frame vector.
        let basis = d.chart_basis(&q).unwrap();
        let radial = d.model().metric_inner(&grad, &basis[0]).unwrap();
        assert!((radial + 0.5f64.sin()).abs() < 1e-6);
    }

    #[test]
    fn cap_hessian_of_cos_distance_is_isotropic() {
        let (d, g) = unit_cap(96, 64);
        let f = ScalarField::from_fn(d, g, |q| q[0].cos());
        let jet = f.jet(&[0.5, 2.0]).unwrap();
        let want = -(0.5f64.cos());
        for i in 0..2 {
            for j in 0..2 {
                let target = if i == j { want } else { 0.0 };
                assert!(
                    (jet.hessian[(i, j)] - target).abs() < 1e-5,
                    "H[{i}{j}] = {}",
                    jet.hessian[(i, j)]
                );
            }
        }
    }

    #[test]
    fn laplacian_is_additive_and_converges() {
        let mut errs = Vec::new();
        for cells in [24usize, 48] {
            let (d, g) = unit_cap(cells, cells);
            let f = ScalarField::from_fn(d, g, |q| q[0].cos());
            let q = [0.55, 0.9];
            let exact = -2.0 * 0.55f64.cos();
            errs.push((f.laplace_beltrami(&q).unwrap() - exact).abs());
        }
        let order = (errs[0] / errs[1]).log2();
        assert!(order > 1.9, "observed order {order}, errors {errs:?}");

        let (d, g) = unit_cap(48, 48);
        let f1 = ScalarField::from_fn(d.clone(), g.clone(), |q| q[0].cos());
        let f2 = ScalarField::from_fn(d.clone(), g.clone(), |q| q[0].sin() * q[1].cos());
        let sum = ScalarField::from_fn(d, g, |q| q[0].cos() + q[0].sin() * q[1].cos());
        let q = [0.62, 2.6];
        let lhs = sum.laplace_beltrami(&q).unwrap();
        let rhs = f1.laplace_beltrami(&q).unwrap() + f2.laplace_beltrami(&q).unwrap();
        assert!((lhs - rhs).abs() < 1e-6);
    }

    #[test]
    fn hessian_matches_geodesic_second_difference() {
        let (d, g) = unit_cap(96, 96);
        let f = ScalarField::from_fn(d.clone(), g, |q| q[0].sin() * q[1].cos());
        let q = [0.7, 1.1];
        let jet = f.jet(&q).unwrap();
        // Probe along a mixed direction expressed in the jet frame.
        let dir = jet.frame[0].scale(0.8).add(&jet.frame[1].scale(0.6));
        let quad = 0.8 * 0.8 * jet.hessian[(0, 0)]
            + 2.0 * 0.8 * 0.6 * jet.hessian[(0, 1)]
            + 0.6 * 0.6 * jet.hessian[(1, 1)];
        let fd = f.geodesic_second_difference(&dir, 2e-3).unwrap();
        assert!((fd - quad).abs() < 1e-4, "fd {fd} vs quad {quad}");
    }

    #[test]
    fn rotated_charts_agree_on_vector_quantities() {
        let mk = |offset: f64| {
            let d = Arc::new(
                DomainSpec::new(vec![DomainBlock::Cap {
                    radius: 1.2,
                    kappa: 1.0,
                    theta_offset: offset,
                }])
                .unwrap(),
            );
            let g = Arc::new(Grid::new(&d, &[96, 96]).unwrap());
            // Ambient first coordinate of the cap block, defined through the
            // point so both charts sample the same function.
            let dc = d.clone();
            let f = ScalarField::from_fn(d.clone(), g, move |q| {
                dc.chart_to_point(q).unwrap().blocks()[0][0]
            });
            (d, f)
        };
        let (d0, f0) = mk(0.0);
        let (d1, f1) = mk(0.9);
        let q0 = [0.6, 1.4];
        let p = d0.chart_to_point(&q0).unwrap();
        let q1 = d1.point_to_chart(&p);
        let j0 = f0.jet(&q0).unwrap();
        let j1 = f1.jet(&q1).unwrap();
        assert!((j0.value - j1.value).abs() < 1e-9);
        let model = d0.model();
        let gdiff = model.norm(&j0.gradient.sub(&j1.gradient));
        assert!(gdiff < 1e-6, "gradient mismatch {gdiff}");
        // Compare Hessian quadratic forms on a shared direction.
        let x = model
            .tangent(&p, vec![vec![0.3, -0.2, {
                let b = p.blocks()[0].clone();
                (-0.3 * b[0] + 0.2 * b[1]) / b[2]
            }]])
            .unwrap();
        let form = |jet: &FieldJet| {
            let mut s = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    s += jet.hessian[(a, b)]
                        * model.metric_inner(&x, &jet.frame[a]).unwrap()
                        * model.metric_inner(&x, &jet.frame[b]).unwrap();
                }
            }
            s
        };
        assert!((form(&j0) - form(&j1)).abs() < 1e-6);
    }

    #[test]
    fn pole_collar_jet_matches_ambient_linear_function() {
        let (d, g) = unit_cap(60, 60);
        let dc = d.clone();
        let f = ScalarField::from_fn(d.clone(), g.clone(), move |q| {
            dc.chart_to_point(q).unwrap().blocks()[0][0]
        });
        let q = [0.5 * g.spacing()[0], 0.8];
        assert!(f.in_pole_collar(&q));
        let jet = f.jet(&q).unwrap();
        let model = d.model();
        // An ambient linear function on the unit sphere has unit-norm
        // gradient at its zero set and Hessian -u times the metric.
        let gn = model.norm(&jet.gradient);
        let u = jet.value;
        assert!((gn - (1.0 - u * u).sqrt()).abs() < 1e-6, "norm {gn}");
        for a in 0..2 {
            for b in 0..2 {
                let target = if a == b { -u } else { 0.0 };
                assert!((jet.hessian[(a, b)] - target).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn pole_row_consistency_is_enforced() {
        let (d, g) = unit_cap(8, 8);
        let mut vals = vec![0.0; g.n_nodes()];
        // Vary the origin row across the angular axis.
        vals[g.lin(&[0, 3])] = 1.0;
        match ScalarField::from_values(d, g, vals) {
            Err(Error::GridMismatch(_)) => {}
            other => panic!("expected grid mismatch, got {other:?}"),
        }
    }

    #[test]
    fn post_map_jet_is_the_chain_rule_of_the_raw_jet() {
        let (d, g) = unit_cap(72, 64);
        let raw = ScalarField::from_fn(d.clone(), g, |q| 2.0 + q[0].cos());
        let mapped = raw.clone().with_post_map(PostMap::NegLog).unwrap();
        let q = [0.55, 2.2];
        let ju = raw.jet(&q).unwrap();
        let jv = mapped.jet(&q).unwrap();
        assert!((jv.value + ju.value.ln()).abs() < 1e-12);
        let model = d.model();
        let want_grad = ju.gradient.scale(-1.0 / ju.value);
        assert!(model.norm(&jv.gradient.sub(&want_grad)) < 1e-12);
        for a in 0..2 {
            for b in 0..2 {
                let ga = model.metric_inner(&ju.gradient, &ju.frame[a]).unwrap();
                let gb = model.metric_inner(&ju.gradient, &ju.frame[b]).unwrap();
                let want = -ju.hessian[(a, b)] / ju.value + ga * gb / (ju.value * ju.value);
                assert!((jv.hessian[(a, b)] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn post_map_rejects_nonpositive_fields() {
        let (d, g) = unit_cap(8, 8);
        let f = ScalarField::from_fn(d, g, |q| q[0] - 0.5);
        match f.with_post_map(PostMap::Log) {
            Err(Error::DomainViolation(_)) => {}
            other => panic!("expected domain violation, got {other:?}"),
        }
    }

    #[test]
    fn time_series_validates_and_snapshots() {
        let (d, g) = unit_cap(8, 8);
        let frame = vec![1.0; g.n_nodes()];
        let ts = TimeSeriesField::new(
            d.clone(),
            g.clone(),
            vec![0.0, 0.1],
            vec![frame.clone(), frame.clone()],
        )
        .unwrap();
        assert_eq!(ts.len(), 2);
        let s = ts.snapshot(1).unwrap();
        assert!((s.eval(&[0.3, 0.3]) - 1.0).abs() < 1e-14);
        assert!(TimeSeriesField::new(d, g, vec![0.1, 0.0], vec![frame.clone(), frame]).is_err());
    }
}
