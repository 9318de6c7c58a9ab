//! Chart descriptions of the computational domains.
//!
//! A domain is a product of blocks, each carried by one manifold factor:
//! intervals and rectangles on Euclidean factors, polar disks on flat
//! two-dimensional factors, and polar caps around a pole of a round sphere.
//! Every block has a diagonal chart metric, so the Laplace operator is a
//! weighted divergence with per-axis coefficients, and the only nonzero
//! Christoffel symbols are the radial-angular ones of the polar blocks.
//!
//! The polar chart is singular at r = 0; the geometry is not. Grids store
//! genuine node rows at r = 0 (one shared value replicated across the
//! angular axis) and evaluation code treats them like any other node.

use nalgebra::DVector;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geodesic::GeodesicSegment;
use crate::manifold::{Factor, ManifoldModel, Point, TangentVec};

/// Margin used when classifying chart coordinates against axis ranges.
pub const CHART_EDGE_TOL: f64 = 1e-9;
/// Pairs sampled by the convexity certificate.
pub const CONVEXITY_SAMPLES: usize = 200;

/// One factor-supported piece of the product domain.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DomainBlock {
    /// [−half_length, half_length] on a one-dimensional Euclidean factor.
    Interval { half_length: f64 },
    /// [−half_x, half_x] × [−half_y, half_y] on a Euclidean plane.
    Rectangle { half_x: f64, half_y: f64 },
    /// Polar chart of a flat disk of the given radius.
    Disk { radius: f64 },
    /// Polar cap of geodesic radius `radius` around a pole of a sphere of
    /// curvature `kappa`; `theta_offset` rotates the chart for
    /// chart-independence checks.
    Cap { radius: f64, kappa: f64, theta_offset: f64 },
}

/// Geometric meaning of one chart axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisRole {
    Cartesian,
    Radial,
    Angular,
}

#[derive(Debug, Clone, Serialize)]
pub struct AxisSpec {
    pub label: String,
    pub min: f64,
    pub max: f64,
    pub periodic: bool,
    pub lower_boundary: bool,
    pub upper_boundary: bool,
    pub role: AxisRole,
    /// Owning block.
    pub block: usize,
    /// For angular axes, the index of the radial partner axis.
    pub partner: Option<usize>,
}

/// A validated product domain with its ambient model space.
#[derive(Debug, Clone, Serialize)]
pub struct DomainSpec {
    blocks: Vec<DomainBlock>,
    axes: Vec<AxisSpec>,
    model: ManifoldModel,
    diameter: f64,
}

/// Stretch factor S(r) of the angular axis and its derivative.
fn polar_stretch(block: &DomainBlock, r: f64) -> (f64, f64) {
    match block {
        DomainBlock::Disk { .. } => (r, 1.0),
        DomainBlock::Cap { kappa, .. } => {
            let a = kappa.sqrt();
            ((a * r).sin() / a, (a * r).cos())
        }
        _ => unreachable!("no angular axis on flat blocks"),
    }
}

impl DomainSpec {
    pub fn new(blocks: Vec<DomainBlock>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::ConfigError("domain needs at least one block".into()));
        }
        let mut factors = Vec::new();
        let mut axes = Vec::new();
        let mut diam2 = 0.0;
        for (bi, b) in blocks.iter().enumerate() {
            match *b {
                DomainBlock::Interval { half_length } => {
                    if !(half_length > 0.0) {
                        return Err(Error::ConfigError("interval needs positive length".into()));
                    }
                    factors.push(Factor::Euclidean { dim: 1 });
                    axes.push(AxisSpec {
                        label: format!("x{bi}"),
                        min: -half_length,
                        max: half_length,
                        periodic: false,
                        lower_boundary: true,
                        upper_boundary: true,
                        role: AxisRole::Cartesian,
                        block: bi,
                        partner: None,
                    });
                    diam2 += (2.0 * half_length).powi(2);
                }
                DomainBlock::Rectangle { half_x, half_y } => {
                    if !(half_x > 0.0 && half_y > 0.0) {
                        return Err(Error::ConfigError("rectangle needs positive sides".into()));
                    }
                    factors.push(Factor::Euclidean { dim: 2 });
                    for (k, half) in [half_x, half_y].into_iter().enumerate() {
                        axes.push(AxisSpec {
                            label: format!("{}{bi}", if k == 0 { "x" } else { "y" }),
                            min: -half,
                            max: half,
                            periodic: false,
                            lower_boundary: true,
                            upper_boundary: true,
                            role: AxisRole::Cartesian,
                            block: bi,
                            partner: None,
                        });
                    }
                    diam2 += 4.0 * (half_x * half_x + half_y * half_y);
                }
                DomainBlock::Disk { radius } => {
                    if !(radius > 0.0) {
                        return Err(Error::ConfigError("disk needs positive radius".into()));
                    }
                    factors.push(Factor::Euclidean { dim: 2 });
                    let ir = axes.len();
                    axes.push(AxisSpec {
                        label: format!("r{bi}"),
                        min: 0.0,
                        max: radius,
                        periodic: false,
                        lower_boundary: false,
                        upper_boundary: true,
                        role: AxisRole::Radial,
                        block: bi,
                        partner: None,
                    });
                    axes.push(AxisSpec {
                        label: format!("th{bi}"),
                        min: 0.0,
                        max: std::f64::consts::TAU,
                        periodic: true,
                        lower_boundary: false,
                        upper_boundary: false,
                        role: AxisRole::Angular,
                        block: bi,
                        partner: Some(ir),
                    });
                    diam2 += (2.0 * radius).powi(2);
                }
                DomainBlock::Cap { radius, kappa, .. } => {
                    if !(radius > 0.0) || !(kappa > 0.0) {
                        return Err(Error::ConfigError("cap needs positive radius and kappa".into()));
                    }
                    // Convexity of the cap requires staying inside the open
                    // hemisphere.
                    let limit = std::f64::consts::FRAC_PI_2 / kappa.sqrt();
                    if radius >= limit {
                        return Err(Error::DomainViolation(format!(
                            "cap radius {radius} reaches the convexity bound {limit}"
                        )));
                    }
                    factors.push(Factor::Sphere { dim: 2, kappa });
                    let ir = axes.len();
                    axes.push(AxisSpec {
                        label: format!("r{bi}"),
                        min: 0.0,
                        max: radius,
                        periodic: false,
                        lower_boundary: false,
                        upper_boundary: true,
                        role: AxisRole::Radial,
                        block: bi,
                        partner: None,
                    });
                    axes.push(AxisSpec {
                        label: format!("th{bi}"),
                        min: 0.0,
                        max: std::f64::consts::TAU,
                        periodic: true,
                        lower_boundary: false,
                        upper_boundary: false,
                        role: AxisRole::Angular,
                        block: bi,
                        partner: Some(ir),
                    });
                    diam2 += (2.0 * radius).powi(2);
                }
            }
        }
        let model = ManifoldModel::new(factors)?;
        let diameter = diam2.sqrt();
        if diameter >= model.distance_bound() {
            return Err(Error::DomainViolation(format!(
                "domain diameter {diameter} reaches the distance bound {}",
                model.distance_bound()
            )));
        }
        Ok(DomainSpec { blocks, axes, model, diameter })
    }

    pub fn blocks(&self) -> &[DomainBlock] {
        &self.blocks
    }

    pub fn axes(&self) -> &[AxisSpec] {
        &self.axes
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn model(&self) -> &ManifoldModel {
        &self.model
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    fn block_axis_range(&self, bi: usize) -> std::ops::Range<usize> {
        let start = self.axes.iter().position(|a| a.block == bi).unwrap();
        let end = start + self.axes.iter().filter(|a| a.block == bi).count();
        start..end
    }

    /// Map chart coordinates to a point of the model space.
    pub fn chart_to_point(&self, q: &[f64]) -> Result<Point> {
        assert_eq!(q.len(), self.dim());
        let mut blocks_out = Vec::with_capacity(self.blocks.len());
        for (bi, b) in self.blocks.iter().enumerate() {
            let r = self.block_axis_range(bi);
            let qs = &q[r];
            match *b {
                DomainBlock::Interval { .. } => blocks_out.push(vec![qs[0]]),
                DomainBlock::Rectangle { .. } => blocks_out.push(vec![qs[0], qs[1]]),
                DomainBlock::Disk { .. } => {
                    blocks_out.push(vec![qs[0] * qs[1].cos(), qs[0] * qs[1].sin()])
                }
                DomainBlock::Cap { kappa, theta_offset, .. } => {
                    let a = kappa.sqrt();
                    let (rr, th) = (qs[0], qs[1] + theta_offset);
                    let (s, c) = (a * rr).sin_cos();
                    blocks_out.push(vec![s * th.cos(), s * th.sin(), c]);
                }
            }
        }
        self.model.point(blocks_out)
    }

    /// Inverse chart. The angular coordinate of a pole point is zero.
    pub fn point_to_chart(&self, p: &Point) -> Vec<f64> {
        let mut q = Vec::with_capacity(self.dim());
        for (bi, b) in self.blocks.iter().enumerate() {
            let pb = &p.blocks()[bi];
            match *b {
                DomainBlock::Interval { .. } => q.push(pb[0]),
                DomainBlock::Rectangle { .. } => {
                    q.push(pb[0]);
                    q.push(pb[1]);
                }
                DomainBlock::Disk { .. } => {
                    let r = (pb[0] * pb[0] + pb[1] * pb[1]).sqrt();
                    let th = if r < 1e-300 { 0.0 } else { pb[1].atan2(pb[0]) };
                    q.push(r);
                    q.push(th.rem_euclid(std::f64::consts::TAU));
                }
                DomainBlock::Cap { kappa, theta_offset, .. } => {
                    let a = kappa.sqrt();
                    let r = pb[2].clamp(-1.0, 1.0).acos() / a;
                    let planar = (pb[0] * pb[0] + pb[1] * pb[1]).sqrt();
                    let th = if planar < 1e-300 {
                        0.0
                    } else {
                        (pb[1].atan2(pb[0]) - theta_offset).rem_euclid(std::f64::consts::TAU)
                    };
                    q.push(r);
                    q.push(th);
                }
            }
        }
        q
    }

    /// Coordinate pushforwards ∂/∂q_i as tangent vectors at the chart point.
    pub fn chart_basis(&self, q: &[f64]) -> Result<Vec<TangentVec>> {
        let p = self.chart_to_point(q)?;
        let mut out = Vec::with_capacity(self.dim());
        for (ai, axis) in self.axes.iter().enumerate() {
            let mut blocks: Vec<DVector<f64>> =
                self.model.factors().iter().map(|f| DVector::zeros(f.block_len())).collect();
            let bi = axis.block;
            let local = ai - self.block_axis_range(bi).start;
            match self.blocks[bi] {
                DomainBlock::Interval { .. } => blocks[bi][0] = 1.0,
                DomainBlock::Rectangle { .. } => blocks[bi][local] = 1.0,
                DomainBlock::Disk { .. } => {
                    let r0 = self.block_axis_range(bi).start;
                    let (r, th) = (q[r0], q[r0 + 1]);
                    if local == 0 {
                        blocks[bi][0] = th.cos();
                        blocks[bi][1] = th.sin();
                    } else {
                        blocks[bi][0] = -r * th.sin();
                        blocks[bi][1] = r * th.cos();
                    }
                }
                DomainBlock::Cap { kappa, theta_offset, .. } => {
                    let a = kappa.sqrt();
                    let r0 = self.block_axis_range(bi).start;
                    let (r, th) = (q[r0], q[r0 + 1] + theta_offset);
                    let (s, c) = (a * r).sin_cos();
                    if local == 0 {
                        blocks[bi][0] = a * c * th.cos();
                        blocks[bi][1] = a * c * th.sin();
                        blocks[bi][2] = -a * s;
                    } else {
                        blocks[bi][0] = -s * th.sin();
                        blocks[bi][1] = s * th.cos();
                    }
                }
            }
            out.push(TangentVec { base: p.clone(), blocks });
        }
        Ok(out)
    }

    /// Diagonal of the chart metric at q.
    pub fn metric_diag(&self, q: &[f64]) -> Vec<f64> {
        self.axes
            .iter()
            .map(|axis| match axis.role {
                AxisRole::Cartesian | AxisRole::Radial => 1.0,
                AxisRole::Angular => {
                    let r = q[axis.partner.unwrap()];
                    let (s, _) = polar_stretch(&self.blocks[axis.block], r);
                    s * s
                }
            })
            .collect()
    }

    /// Nonzero Christoffel symbols Γ^k_{ij} at q as (k, i, j, value); only
    /// the polar blocks contribute. Not valid on the pole row.
    pub fn christoffels(&self, q: &[f64]) -> Vec<(usize, usize, usize, f64)> {
        let mut out = Vec::new();
        for (ai, axis) in self.axes.iter().enumerate() {
            if axis.role == AxisRole::Angular {
                let ir = axis.partner.unwrap();
                let r = q[ir];
                let (s, sd) = polar_stretch(&self.blocks[axis.block], r);
                out.push((ir, ai, ai, -s * sd));
                out.push((ai, ir, ai, sd / s));
                out.push((ai, ai, ir, sd / s));
            }
        }
        out
    }

    /// Whether chart coordinates lie within the closed domain.
    pub fn contains(&self, q: &[f64]) -> bool {
        self.axes.iter().enumerate().all(|(i, a)| {
            a.periodic || (q[i] >= a.min - CHART_EDGE_TOL && q[i] <= a.max + CHART_EDGE_TOL)
        })
    }

    /// Whether chart coordinates touch the boundary of the domain.
    pub fn is_boundary(&self, q: &[f64]) -> bool {
        self.axes.iter().enumerate().any(|(i, a)| {
            (a.lower_boundary && (q[i] - a.min).abs() <= CHART_EDGE_TOL)
                || (a.upper_boundary && (q[i] - a.max).abs() <= CHART_EDGE_TOL)
        })
    }

    /// Distance from the chart point to the domain boundary, measured in the
    /// chart (exact for these product blocks).
    pub fn boundary_distance(&self, q: &[f64]) -> f64 {
        let mut d = f64::INFINITY;
        for (i, a) in self.axes.iter().enumerate() {
            if a.lower_boundary {
                d = d.min(q[i] - a.min);
            }
            if a.upper_boundary {
                d = d.min(a.max - q[i]);
            }
        }
        d
    }

    /// Uniform random chart coordinates in the closed domain.
    pub fn random_chart<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.axes
            .iter()
            .map(|a| a.min + rng.gen::<f64>() * (a.max - a.min))
            .collect()
    }

    /// Random chart coordinates on the boundary.
    pub fn random_boundary_chart<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let mut q = self.random_chart(rng);
        let candidates: Vec<usize> = self
            .axes
            .iter()
            .enumerate()
            .filter(|(_, a)| a.lower_boundary || a.upper_boundary)
            .map(|(i, _)| i)
            .collect();
        assert!(!candidates.is_empty(), "domain has no boundary");
        let pick = candidates[rng.gen_range(0..candidates.len())];
        let a = &self.axes[pick];
        q[pick] = if a.lower_boundary && (!a.upper_boundary || rng.gen::<bool>()) {
            a.min
        } else {
            a.max
        };
        q
    }

    /// Sampled convexity certificate: midpoints of random boundary-to-
    /// boundary geodesics must stay in the closure. Returns the worst
    /// boundary-distance margin seen (negative would have errored).
    pub fn certify_convexity<R: Rng>(&self, rng: &mut R, n_pairs: usize) -> Result<f64> {
        let mut worst = f64::INFINITY;
        let mut done = 0;
        while done < n_pairs {
            let qa = self.random_boundary_chart(rng);
            let qb = self.random_boundary_chart(rng);
            let pa = self.chart_to_point(&qa)?;
            let pb = self.chart_to_point(&qb)?;
            let seg = match GeodesicSegment::connect(&self.model, &pa, &pb) {
                Ok(seg) => seg,
                Err(Error::DegenerateSegment) => continue,
                Err(e) => return Err(e),
            };
            let mid = self.point_to_chart(&seg.point_at(0.0));
            if !self.contains(&mid) {
                return Err(Error::DomainViolation(format!(
                    "boundary-pair midpoint left the domain at {mid:?}"
                )));
            }
            worst = worst.min(self.boundary_distance(&mid));
            done += 1;
        }
        Ok(worst)
    }
}

/// A tensor-product grid over the domain's chart, uniform per axis.
///
/// Non-periodic axes store c+1 node columns for c cells; periodic axes
/// store c columns and wrap.
#[derive(Debug, Clone, Serialize)]
pub struct Grid {
    cells: Vec<usize>,
    sizes: Vec<usize>,
    spacing: Vec<f64>,
    mins: Vec<f64>,
    periodic: Vec<bool>,
}

impl Grid {
    pub fn new(domain: &DomainSpec, cells: &[usize]) -> Result<Grid> {
        if cells.len() != domain.dim() {
            return Err(Error::GridMismatch(format!(
                "{} cell counts for {} axes",
                cells.len(),
                domain.dim()
            )));
        }
        let mut sizes = Vec::new();
        let mut spacing = Vec::new();
        let mut mins = Vec::new();
        let mut periodic = Vec::new();
        for (a, &c) in domain.axes().iter().zip(cells) {
            if c < 4 {
                return Err(Error::GridMismatch("need at least four cells per axis".into()));
            }
            sizes.push(if a.periodic { c } else { c + 1 });
            spacing.push((a.max - a.min) / c as f64);
            mins.push(a.min);
            periodic.push(a.periodic);
        }
        Ok(Grid { cells: cells.to_vec(), sizes, spacing, mins, periodic })
    }

    pub fn dim(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    /// Node columns per axis.
    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn periodic(&self) -> &[bool] {
        &self.periodic
    }

    pub fn n_nodes(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn node_coord(&self, axis: usize, i: usize) -> f64 {
        self.mins[axis] + i as f64 * self.spacing[axis]
    }

    /// Chart coordinate in node units along one axis.
    pub fn local(&self, axis: usize, q: f64) -> f64 {
        (q - self.mins[axis]) / self.spacing[axis]
    }

    /// Row-major linear index of a multi-index.
    pub fn lin(&self, idx: &[usize]) -> usize {
        let mut out = 0;
        for (d, &i) in idx.iter().enumerate() {
            debug_assert!(i < self.sizes[d]);
            out = out * self.sizes[d] + i;
        }
        out
    }

    pub fn unlin(&self, mut lin: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for d in (0..self.dim()).rev() {
            idx[d] = lin % self.sizes[d];
            lin /= self.sizes[d];
        }
        idx
    }

    pub fn chart_of(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().enumerate().map(|(d, &i)| self.node_coord(d, i)).collect()
    }

    /// Largest geometric node spacing over the grid (angular spacing scaled
    /// by the outermost stretch factor).
    pub fn characteristic_spacing(&self, domain: &DomainSpec) -> f64 {
        let mut h = 0.0f64;
        for (ai, axis) in domain.axes().iter().enumerate() {
            match axis.role {
                AxisRole::Cartesian | AxisRole::Radial => h = h.max(self.spacing[ai]),
                AxisRole::Angular => {
                    let ir = axis.partner.unwrap();
                    let rmax = domain.axes()[ir].max;
                    let (s, _) = polar_stretch(&domain.blocks()[axis.block], rmax);
                    h = h.max(self.spacing[ai] * s);
                }
            }
        }
        h
    }
}
