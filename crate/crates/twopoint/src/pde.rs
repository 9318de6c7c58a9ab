//! Finite-volume solvers for the model elliptic and parabolic problems.
//!
//! Every chart in the domain module carries a diagonal metric, so the
//! Laplace operator is assembled once, in conservative form, from per-edge
//! flux weights: the stiffness entry of an edge is the metric coefficient
//! at the face center times the transverse cell measure. Assembling from
//! edges keeps the matrix symmetric by construction and gives the polar
//! origin its exact flux balance once the duplicated r = 0 nodes are
//! identified into a single unknown.
//!
//! Solvers are sequential and deterministic; run independent instances in
//! parallel from the caller if throughput matters. Returned fields are
//! plain value arrays, immutable after construction.

use std::sync::Arc;

use crate::domain::{AxisRole, DomainBlock, DomainSpec, Grid};
use crate::error::{Error, Result};
use crate::field::{FieldProvenance, PostMap, ScalarField, TimeSeriesField};
use crate::hypotheses::SemilinearB;
use crate::linalg::{cg_solve, thomas_solve, CsrBuilder, CsrMatrix};

/// Dirichlet depth B of the blow-up truncation: the boundary condition of
/// the truncated problem is u = -B.
pub const DEFAULT_BOUNDARY_DEPTH: f64 = 15.0;
/// Width of the trust collar around the boundary, in units of the largest
/// bounded-axis spacing. Inside the collar the truncated solution is not
/// trusted to approximate the blow-up problem.
pub const TRUST_COLLAR_STEPS: f64 = 5.0;
/// Newton stops once the accepted update has sup norm below this.
pub const NEWTON_UPDATE_TOL: f64 = 1e-10;
/// Cap on step halvings inside one Newton line search.
pub const NEWTON_MAX_HALVINGS: usize = 50;
/// Cap on outer Newton iterations.
pub const NEWTON_MAX_OUTER: usize = 200;
/// Acceptable relative sup residual of a completed linear solve.
pub const LINEAR_RESIDUAL_TOL: f64 = 1e-10;
/// Tolerance for the parabolic positivity and bound checks.
pub const HEAT_BOUND_TOL: f64 = 1e-10;
/// Cells stripped from each bounded side when building the comparison
/// subdomain of the perturbed problem.
pub const DEFAULT_COLLAR_CELLS: usize = 4;
/// Relative tolerance of inner conjugate-gradient solves.
const CG_TOL: f64 = 1e-13;

/// The discretized Laplace operator on one grid: stiffness over interior
/// unknowns, boundary couplings kept separate so Dirichlet data can vary
/// per problem, and dual-cell volumes for load and mass terms.
pub struct Assembly {
    grid: Arc<Grid>,
    /// Per grid node, the unknown it contributes to; None on Dirichlet rows.
    unknown_of: Vec<Option<usize>>,
    /// Representative grid node of each unknown.
    rep: Vec<usize>,
    stiffness: CsrMatrix,
    /// Dual-cell volume summed over the nodes merged into each unknown.
    volume: Vec<f64>,
    /// Per grid node dual volume (zero only for degenerate clipping).
    node_volume: Vec<f64>,
    /// (unknown row, boundary node, edge weight) triples.
    bc_edges: Vec<(usize, usize, f64)>,
}

/// Exact antiderivative of the angular stretch factor over [a, b].
fn stretch_integral(block: &DomainBlock, a: f64, b: f64) -> f64 {
    match *block {
        DomainBlock::Disk { .. } => 0.5 * (b * b - a * a),
        DomainBlock::Cap { kappa, .. } => {
            let s = kappa.sqrt();
            ((s * a).cos() - (s * b).cos()) / kappa
        }
        _ => unreachable!("only polar blocks have a stretch factor"),
    }
}

/// Merge the duplicated polar-origin nodes: at r = 0 the angular index is
/// meaningless, so it is pinned to zero.
fn canonical_index(domain: &DomainSpec, idx: &[usize]) -> Vec<usize> {
    let mut out = idx.to_vec();
    for (ai, axis) in domain.axes().iter().enumerate() {
        if axis.role == AxisRole::Angular {
            let ir = axis.partner.expect("angular axis has a radial partner");
            if out[ir] == 0 {
                out[ai] = 0;
            }
        }
    }
    out
}

fn index_on_boundary(domain: &DomainSpec, grid: &Grid, idx: &[usize]) -> bool {
    domain.axes().iter().enumerate().any(|(ai, axis)| {
        (axis.lower_boundary && idx[ai] == 0)
            || (axis.upper_boundary && idx[ai] == grid.sizes()[ai] - 1)
    })
}

pub fn assemble(domain: &Arc<DomainSpec>, grid: &Arc<Grid>) -> Result<Assembly> {
    let dim = grid.dim();
    let n_nodes = grid.n_nodes();
    let spacing = grid.spacing().to_vec();

    let mut unknown_of: Vec<Option<usize>> = vec![None; n_nodes];
    let mut rep = Vec::new();
    for lin in 0..n_nodes {
        let idx = grid.unlin(lin);
        if index_on_boundary(domain, grid, &idx) {
            continue;
        }
        let canon = canonical_index(domain, &idx);
        let canon_lin = grid.lin(&canon);
        if canon_lin == lin {
            unknown_of[lin] = Some(rep.len());
            rep.push(lin);
        }
    }
    for lin in 0..n_nodes {
        if unknown_of[lin].is_some() {
            continue;
        }
        let idx = grid.unlin(lin);
        if index_on_boundary(domain, grid, &idx) {
            continue;
        }
        let canon_lin = grid.lin(&canonical_index(domain, &idx));
        unknown_of[lin] = unknown_of[canon_lin];
    }
    let n_unknowns = rep.len();

    // Dual-cell volumes. The angular coordinate always contributes its full
    // spacing (the axis is periodic); bounded axes clip at the ends; the
    // radial measure uses the exact stretch antiderivative so polar origin
    // cells get their true small volume.
    let mut node_volume = vec![0.0; n_nodes];
    for lin in 0..n_nodes {
        let idx = grid.unlin(lin);
        let mut vol = 1.0;
        for (ai, axis) in domain.axes().iter().enumerate() {
            let h = spacing[ai];
            let q = grid.node_coord(ai, idx[ai]);
            vol *= match axis.role {
                AxisRole::Cartesian => {
                    (q + 0.5 * h).min(axis.max) - (q - 0.5 * h).max(axis.min)
                }
                AxisRole::Angular => h,
                AxisRole::Radial => {
                    let lo = (q - 0.5 * h).max(axis.min);
                    let hi = (q + 0.5 * h).min(axis.max);
                    stretch_integral(&domain.blocks()[axis.block], lo, hi)
                }
            };
        }
        node_volume[lin] = vol;
    }
    let mut volume = vec![0.0; n_unknowns];
    for lin in 0..n_nodes {
        if let Some(u) = unknown_of[lin] {
            volume[u] += node_volume[lin];
        }
    }

    // Edge loop. The flux weight of an edge along axis d is
    // sqrt(det g) / g_dd at the face center times the product of the
    // transverse spacings over the axis spacing.
    let mut builder = CsrBuilder::new(n_unknowns);
    let mut bc_edges = Vec::new();
    for lin in 0..n_nodes {
        let idx = grid.unlin(lin);
        for d in 0..dim {
            let last = grid.sizes()[d] - 1;
            let neighbor = if grid.periodic()[d] {
                let mut nb = idx.clone();
                nb[d] = (idx[d] + 1) % grid.sizes()[d];
                nb
            } else if idx[d] < last {
                let mut nb = idx.clone();
                nb[d] += 1;
                nb
            } else {
                continue;
            };
            let lin_nb = grid.lin(&neighbor);
            let a = unknown_of[lin];
            let b = unknown_of[lin_nb];
            if a.is_none() && b.is_none() {
                continue;
            }
            if a == b {
                // Duplicated origin nodes share the unknown; the face lies
                // inside the merged cell and carries no net flux.
                continue;
            }
            let mut q_mid = grid.chart_of(&idx);
            q_mid[d] += 0.5 * spacing[d];
            let g = domain.metric_diag(&q_mid);
            let sqrt_det: f64 = g.iter().map(|gi| gi.sqrt()).product();
            let mut weight = sqrt_det / g[d] / spacing[d];
            for (dp, h) in spacing.iter().enumerate() {
                if dp != d {
                    weight *= h;
                }
            }
            match (a, b) {
                (Some(ua), Some(ub)) => {
                    builder.add(ua, ua, weight);
                    builder.add(ub, ub, weight);
                    builder.add(ua, ub, -weight);
                    builder.add(ub, ua, -weight);
                }
                (Some(ua), None) => {
                    builder.add(ua, ua, weight);
                    bc_edges.push((ua, lin_nb, weight));
                }
                (None, Some(ub)) => {
                    builder.add(ub, ub, weight);
                    bc_edges.push((ub, lin, weight));
                }
                (None, None) => unreachable!(),
            }
        }
    }

    Ok(Assembly {
        grid: grid.clone(),
        unknown_of,
        rep,
        stiffness: builder.build(),
        volume,
        node_volume,
        bc_edges,
    })
}

impl Assembly {
    pub fn n_unknowns(&self) -> usize {
        self.rep.len()
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volume
    }

    /// Load vector of a source term: the dual volume times the node value,
    /// accumulated over merged nodes.
    pub fn load_vector(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        let mut load = vec![0.0; self.n_unknowns()];
        for lin in 0..self.grid.n_nodes() {
            if let Some(u) = self.unknown_of[lin] {
                let q = self.grid.chart_of(&self.grid.unlin(lin));
                load[u] += self.node_volume[lin] * f(&q);
            }
        }
        load
    }

    /// Right-side contribution of Dirichlet values through the eliminated
    /// boundary couplings.
    pub fn bc_vector(&self, boundary: impl Fn(usize) -> f64) -> Vec<f64> {
        let mut v = vec![0.0; self.n_unknowns()];
        for &(row, blin, w) in &self.bc_edges {
            v[row] += w * boundary(blin);
        }
        v
    }

    /// Expand interior unknowns and Dirichlet data into a full node vector.
    pub fn full_values(
        &self,
        interior: &[f64],
        boundary: impl Fn(usize) -> f64,
    ) -> Vec<f64> {
        assert_eq!(interior.len(), self.n_unknowns());
        let mut vals = vec![0.0; self.grid.n_nodes()];
        for lin in 0..self.grid.n_nodes() {
            match self.unknown_of[lin] {
                Some(u) => vals[lin] = interior[u],
                None => vals[lin] = boundary(lin),
            }
        }
        vals
    }

    /// Interior unknowns of a full node vector.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        assert_eq!(full.len(), self.grid.n_nodes());
        self.rep.iter().map(|&lin| full[lin]).collect()
    }

    /// Tridiagonal bands of stiffness plus a diagonal shift, available only
    /// in one dimension where unknowns are consecutive.
    fn tridiagonal(&self, shift: &[f64]) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        if self.grid.dim() != 1 {
            return None;
        }
        let n = self.n_unknowns();
        let mut sub = vec![0.0; n.saturating_sub(1)];
        let mut sup = vec![0.0; n.saturating_sub(1)];
        let mut diag = vec![0.0; n];
        for i in 0..n {
            diag[i] = shift[i];
            for (j, v) in self.stiffness.row_entries(i) {
                if j == i {
                    diag[i] += v;
                } else if j + 1 == i {
                    sub[j] = v;
                } else if j == i + 1 {
                    sup[i] = v;
                } else {
                    return None;
                }
            }
        }
        Some((sub, diag, sup))
    }

    fn solve_spd(
        &self,
        diag_shift: Option<&[f64]>,
        rhs: &[f64],
        x0: Option<&[f64]>,
    ) -> Result<Vec<f64>> {
        let zero = vec![0.0; self.n_unknowns()];
        let shift = diag_shift.unwrap_or(&zero);
        if let Some((sub, diag, sup)) = self.tridiagonal(shift) {
            return thomas_solve(&sub, &diag, &sup, rhs);
        }
        let mut a = self.stiffness.clone();
        a.add_to_diagonal(shift);
        cg_solve(&a, rhs, CG_TOL, x0)
    }

    fn check_linear_residual(&self, shift: Option<&[f64]>, x: &[f64], rhs: &[f64]) -> Result<()> {
        let mut kx = vec![0.0; x.len()];
        self.stiffness.mul_vec(x, &mut kx);
        if let Some(s) = shift {
            for i in 0..x.len() {
                kx[i] += s[i] * x[i];
            }
        }
        let scale = rhs.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let worst = kx
            .iter()
            .zip(rhs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        if worst > LINEAR_RESIDUAL_TOL * scale {
            return Err(Error::SolverFailure(format!(
                "discrete residual {worst} exceeds {LINEAR_RESIDUAL_TOL} x {scale}"
            )));
        }
        Ok(())
    }
}

/// Solve the torsion problem: the Laplacian balances a unit source and the
/// solution vanishes on the boundary.
pub fn solve_torsion(domain: &Arc<DomainSpec>, grid: &Arc<Grid>) -> Result<ScalarField> {
    let asm = assemble(domain, grid)?;
    let mut rhs = asm.load_vector(|_| 1.0);
    let bc = asm.bc_vector(|_| 0.0);
    for (r, b) in rhs.iter_mut().zip(&bc) {
        *r += b;
    }
    let u = asm.solve_spd(None, &rhs, None)?;
    asm.check_linear_residual(None, &u, &rhs)?;
    let vals = asm.full_values(&u, |_| 0.0);
    Ok(ScalarField::from_values(domain.clone(), grid.clone(), vals)?.with_provenance(
        FieldProvenance {
            equation: "torsion".into(),
            b_key: "constant".into(),
            f_key: "neg_trace".into(),
        },
    ))
}

/// Damped Newton iteration for the semilinear problem: the Laplacian
/// balances b(u) with Dirichlet data on the boundary.
fn solve_semilinear(
    asm: &Assembly,
    b: &dyn SemilinearB,
    extra_linear: f64,
    boundary: &dyn Fn(usize) -> f64,
    init: Vec<f64>,
) -> Result<Vec<f64>> {
    if b.metadata().depends_on_gradient {
        return Err(Error::ConfigError(format!(
            "entry {} depends on the gradient; the Newton solver handles \
             solution-only right sides",
            b.key()
        )));
    }
    let n = asm.n_unknowns();
    let bc = asm.bc_vector(boundary);
    let residual = |u: &[f64]| -> Vec<f64> {
        let mut r = vec![0.0; n];
        asm.stiffness.mul_vec(u, &mut r);
        for i in 0..n {
            r[i] -= bc[i] + asm.volume[i] * (b.eval(u[i], 0.0) - extra_linear * u[i]);
        }
        r
    };
    let norm2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();

    let mut u = init;
    assert_eq!(u.len(), n);
    for _ in 0..NEWTON_MAX_OUTER {
        let f = residual(&u);
        let fnorm = norm2(&f);
        if fnorm == 0.0 {
            return Ok(u);
        }
        // J = K + diag(vol * (extra - b'(u))), positive definite whenever
        // b is nonincreasing in u.
        let shift: Vec<f64> = (0..n)
            .map(|i| asm.volume[i] * (extra_linear - b.du(u[i], 0.0)))
            .collect();
        let delta = asm.solve_spd(Some(&shift), &f, None)?;
        let full = delta.iter().map(|d| d.abs()).fold(0.0f64, f64::max);
        if full < NEWTON_UPDATE_TOL {
            // Already at the floor; a line search on roundoff noise would
            // stall rather than converge.
            for (ui, di) in u.iter_mut().zip(&delta) {
                *ui -= di;
            }
            return Ok(u);
        }
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..NEWTON_MAX_HALVINGS {
            let trial: Vec<f64> =
                u.iter().zip(&delta).map(|(ui, di)| ui - lambda * di).collect();
            if norm2(&residual(&trial)) < fnorm {
                accepted = Some(trial);
                break;
            }
            lambda *= 0.5;
        }
        let Some(next) = accepted else {
            return Err(Error::SolverFailure(
                "newton line search stalled after 50 halvings".into(),
            ));
        };
        let update = lambda * full;
        u = next;
        if update < NEWTON_UPDATE_TOL {
            return Ok(u);
        }
    }
    Err(Error::SolverFailure("newton iteration cap exhausted".into()))
}

/// Solve the truncated blow-up problem: the Laplacian balances b(u) and the
/// boundary is pinned at depth -B.
pub fn solve_liouville(
    domain: &Arc<DomainSpec>,
    grid: &Arc<Grid>,
    b: &Arc<dyn SemilinearB>,
    boundary_depth: f64,
) -> Result<ScalarField> {
    if !(boundary_depth > 0.0) {
        return Err(Error::ConfigError("boundary depth must be positive".into()));
    }
    let asm = assemble(domain, grid)?;
    let depth = -boundary_depth;
    let init = vec![depth; asm.n_unknowns()];
    let u = solve_semilinear(&asm, b.as_ref(), 0.0, &|_| depth, init)?;
    let vals = asm.full_values(&u, |_| depth);
    Ok(ScalarField::from_values(domain.clone(), grid.clone(), vals)?.with_provenance(
        FieldProvenance {
            equation: "liouville".into(),
            b_key: b.key().into(),
            f_key: "neg_trace".into(),
        },
    ))
}

/// Width of the collar near the boundary where the truncated solution is
/// not trusted, in chart units.
pub fn trust_collar(domain: &DomainSpec, grid: &Grid) -> f64 {
    let mut h = 0.0f64;
    for (ai, axis) in domain.axes().iter().enumerate() {
        if axis.role != AxisRole::Angular {
            h = h.max(grid.spacing()[ai]);
        }
    }
    TRUST_COLLAR_STEPS * h
}

/// Implicit Euler evolution of the heat equation with the initial data's
/// own boundary values held fixed. Checks the discrete bounds every step:
/// values must stay inside the initial range up to a tolerance.
pub fn solve_heat(
    u0: &ScalarField,
    t_end: f64,
    steps: usize,
    record_stride: usize,
) -> Result<TimeSeriesField> {
    if u0.post_map().is_some() {
        return Err(Error::ConfigError(
            "evolve the raw field; transforms apply to snapshots afterwards".into(),
        ));
    }
    if !(t_end > 0.0) || steps == 0 {
        return Err(Error::ConfigError("need a positive horizon and steps".into()));
    }
    let stride = record_stride.max(1);
    let domain = u0.domain().clone();
    let grid = u0.grid().clone();
    let asm = assemble(&domain, &grid)?;
    let dt = t_end / steps as f64;

    let full0 = u0.values().to_vec();
    let lo = full0.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = full0.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let boundary = |lin: usize| full0[lin];

    // (M + dt K) u+ = M u + dt * bc; the system matrix is an M-matrix, so
    // the discrete solution obeys the same bounds as the data.
    let shift: Vec<f64> = asm.volume.iter().map(|v| v / dt).collect();
    let bc = asm.bc_vector(boundary);
    let mut u = asm.restrict(&full0);
    let mut times = vec![0.0];
    let mut frames = vec![full0.clone()];
    for n in 1..=steps {
        let rhs: Vec<f64> =
            (0..asm.n_unknowns()).map(|i| shift[i] * u[i] + bc[i]).collect();
        let next = asm.solve_spd(Some(&shift), &rhs, Some(&u))?;
        let step_lo = next.iter().cloned().fold(f64::INFINITY, f64::min);
        let step_hi = next.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if step_lo < lo - HEAT_BOUND_TOL || step_hi > hi + HEAT_BOUND_TOL {
            return Err(Error::SolverFailure(format!(
                "step {n} left the data range: [{step_lo}, {step_hi}] vs [{lo}, {hi}]"
            )));
        }
        u = next;
        if n % stride == 0 || n == steps {
            times.push(n as f64 * dt);
            frames.push(asm.full_values(&u, boundary));
        }
    }
    Ok(TimeSeriesField::new(domain, grid, times, frames)?.with_provenance(
        FieldProvenance {
            equation: "heat".into(),
            b_key: "constant".into(),
            f_key: "neg_trace".into(),
        },
    ))
}

/// Pointwise logarithmic map of a positive field. Values transform on the
/// grid; derivative queries chain through the raw field's jet.
pub fn log_transform(field: &ScalarField, map: PostMap) -> Result<ScalarField> {
    let tag = field.provenance().cloned();
    let out = field.clone().with_post_map(map)?;
    Ok(match tag {
        Some(p) => {
            let suffix = match map {
                PostMap::NegLog => "neg_log",
                PostMap::Log => "log",
            };
            out.with_provenance(FieldProvenance {
                equation: format!("{}_{}", p.equation, suffix),
                ..p
            })
        }
        None => out,
    })
}

/// Result of re-solving on a shrunken domain with a zeroth-order term.
pub struct PerturbationAudit {
    pub field: ScalarField,
    /// Sup difference against the base solution over the shared nodes.
    pub sup_diff: f64,
}

/// Solve the perturbed problem on a collar-shrunk subdomain: the Laplacian
/// balances b(v) - eps v, with Dirichlet data read off the base field's own
/// nodes, then report how far v drifts from the base.
pub fn perturbed_solve(
    base: &ScalarField,
    b: &Arc<dyn SemilinearB>,
    eps: f64,
    collar_cells: usize,
) -> Result<PerturbationAudit> {
    if eps < 0.0 {
        return Err(Error::ConfigError("perturbation must be nonnegative".into()));
    }
    if base.post_map().is_some() {
        return Err(Error::ConfigError("perturb the raw field".into()));
    }
    let domain = base.domain();
    let grid = base.grid();

    // Shrink every bounded block by whole cells so the sub-grid nodes are a
    // subset of the base nodes and Dirichlet data needs no interpolation.
    let collar = collar_cells as f64;
    let mut blocks = Vec::new();
    let mut axis_cursor = 0usize;
    let mut offsets = Vec::new();
    let mut cells = Vec::new();
    for block in domain.blocks() {
        match *block {
            DomainBlock::Interval { half_length } => {
                let h = grid.spacing()[axis_cursor];
                let c = grid.cells()[axis_cursor];
                if c < 2 * collar_cells + 4 {
                    return Err(Error::ConfigError(
                        "collar leaves too few cells on an interval axis".into(),
                    ));
                }
                blocks.push(DomainBlock::Interval {
                    half_length: half_length - collar * h,
                });
                offsets.push(collar_cells);
                cells.push(c - 2 * collar_cells);
                axis_cursor += 1;
            }
            DomainBlock::Rectangle { half_x, half_y } => {
                let hx = grid.spacing()[axis_cursor];
                let hy = grid.spacing()[axis_cursor + 1];
                let cx = grid.cells()[axis_cursor];
                let cy = grid.cells()[axis_cursor + 1];
                if cx < 2 * collar_cells + 4 || cy < 2 * collar_cells + 4 {
                    return Err(Error::ConfigError(
                        "collar leaves too few cells on a rectangle axis".into(),
                    ));
                }
                blocks.push(DomainBlock::Rectangle {
                    half_x: half_x - collar * hx,
                    half_y: half_y - collar * hy,
                });
                offsets.push(collar_cells);
                offsets.push(collar_cells);
                cells.push(cx - 2 * collar_cells);
                cells.push(cy - 2 * collar_cells);
                axis_cursor += 2;
            }
            DomainBlock::Disk { radius } => {
                let hr = grid.spacing()[axis_cursor];
                let cr = grid.cells()[axis_cursor];
                if cr < collar_cells + 4 {
                    return Err(Error::ConfigError(
                        "collar leaves too few cells on a radial axis".into(),
                    ));
                }
                blocks.push(DomainBlock::Disk { radius: radius - collar * hr });
                offsets.push(0);
                offsets.push(0);
                cells.push(cr - collar_cells);
                cells.push(grid.cells()[axis_cursor + 1]);
                axis_cursor += 2;
            }
            DomainBlock::Cap { radius, kappa, theta_offset } => {
                let hr = grid.spacing()[axis_cursor];
                let cr = grid.cells()[axis_cursor];
                if cr < collar_cells + 4 {
                    return Err(Error::ConfigError(
                        "collar leaves too few cells on a radial axis".into(),
                    ));
                }
                blocks.push(DomainBlock::Cap {
                    radius: radius - collar * hr,
                    kappa,
                    theta_offset,
                });
                offsets.push(0);
                offsets.push(0);
                cells.push(cr - collar_cells);
                cells.push(grid.cells()[axis_cursor + 1]);
                axis_cursor += 2;
            }
        }
    }
    let inner_domain = Arc::new(DomainSpec::new(blocks)?);
    let inner_grid = Arc::new(Grid::new(&inner_domain, &cells)?);

    let base_lin_of = |inner_idx: &[usize]| -> usize {
        let shifted: Vec<usize> =
            inner_idx.iter().zip(&offsets).map(|(&i, &o)| i + o).collect();
        grid.lin(&shifted)
    };

    let asm = assemble(&inner_domain, &inner_grid)?;
    let boundary = |lin: usize| base.values()[base_lin_of(&inner_grid.unlin(lin))];
    let init: Vec<f64> = asm
        .rep
        .iter()
        .map(|&lin| base.values()[base_lin_of(&inner_grid.unlin(lin))])
        .collect();
    let v = solve_semilinear(&asm, b.as_ref(), eps, &boundary, init)?;
    let vals = asm.full_values(&v, boundary);

    let mut sup = 0.0f64;
    for lin in 0..inner_grid.n_nodes() {
        let diff = (vals[lin] - base.values()[base_lin_of(&inner_grid.unlin(lin))]).abs();
        sup = sup.max(diff);
    }
    let field = ScalarField::from_values(inner_domain, inner_grid, vals)?.with_provenance(
        FieldProvenance {
            equation: "perturbed".into(),
            b_key: b.key().into(),
            f_key: "neg_trace".into(),
        },
    );
    Ok(PerturbationAudit { field, sup_diff: sup })
}

/// Multiply each snapshot by exp(-eps t): the standard change of variables
/// that turns a solution of the evolution into a strict supersolution of
/// the shifted one.
pub fn evans_transform(series: &TimeSeriesField, eps: f64) -> Result<TimeSeriesField> {
    if eps < 0.0 {
        return Err(Error::ConfigError("transform rate must be nonnegative".into()));
    }
    let mut frames = Vec::with_capacity(series.len());
    for i in 0..series.len() {
        let t = series.time(i);
        let factor = (-eps * t).exp();
        frames.push(series.frame(i).iter().map(|v| v * factor).collect());
    }
    let out = TimeSeriesField::new(
        series.domain().clone(),
        series.grid().clone(),
        series.times().to_vec(),
        frames,
    )?;
    Ok(match series.provenance() {
        Some(p) => out.with_provenance(FieldProvenance {
            equation: format!("{}_evans", p.equation),
            ..p.clone()
        }),
        None => out,
    })
}

/// Sup of the discrete evolution residual of a series and of its
/// transformed companion at the given interior charts. The transformed
/// residual includes the eps v zeroth-order term its equation carries.
pub fn evans_residual_audit(
    series: &TimeSeriesField,
    transformed: &TimeSeriesField,
    eps: f64,
    charts: &[Vec<f64>],
) -> Result<(f64, f64)> {
    if series.len() != transformed.len() || series.len() < 2 {
        return Err(Error::GridMismatch("need matching series with two snapshots".into()));
    }
    let mut sup_u = 0.0f64;
    let mut sup_v = 0.0f64;
    for n in 1..series.len() {
        let dt = series.time(n) - series.time(n - 1);
        let u_now = series.snapshot(n)?;
        let u_prev = series.snapshot(n - 1)?;
        let v_now = transformed.snapshot(n)?;
        let v_prev = transformed.snapshot(n - 1)?;
        for q in charts {
            let ru = (u_now.eval(q) - u_prev.eval(q)) / dt - u_now.laplace_beltrami(q)?;
            let rv = (v_now.eval(q) - v_prev.eval(q)) / dt - v_now.laplace_beltrami(q)?
                + eps * v_now.eval(q);
            sup_u = sup_u.max(ru.abs());
            sup_v = sup_v.max(rv.abs());
        }
    }
    Ok((sup_u, sup_v))
}

/// Solve on the given cells and on a doubled grid, then combine node values
/// on the coarse grid to cancel the leading quadratic error term.
pub fn richardson_refine(
    domain: &Arc<DomainSpec>,
    cells: &[usize],
    solve: impl Fn(&Arc<DomainSpec>, &Arc<Grid>) -> Result<ScalarField>,
) -> Result<ScalarField> {
    let coarse_grid = Arc::new(Grid::new(domain, cells)?);
    let fine_cells: Vec<usize> = cells.iter().map(|c| c * 2).collect();
    let fine_grid = Arc::new(Grid::new(domain, &fine_cells)?);
    let coarse = solve(domain, &coarse_grid)?;
    let fine = solve(domain, &fine_grid)?;
    let tag = coarse.provenance().cloned();
    let mut vals = vec![0.0; coarse_grid.n_nodes()];
    for lin in 0..coarse_grid.n_nodes() {
        let idx = coarse_grid.unlin(lin);
        let fidx: Vec<usize> = idx.iter().map(|&i| 2 * i).collect();
        let f = fine.values()[fine_grid.lin(&fidx)];
        vals[lin] = (4.0 * f - coarse.values()[lin]) / 3.0;
    }
    let out = ScalarField::from_values(domain.clone(), coarse_grid, vals)?;
    Ok(match tag {
        Some(p) => out.with_provenance(p),
        None => out,
    })
}

/// Torsion profile on an interval of half length L.
pub fn torsion_interval_profile(x: f64, half_length: f64) -> f64 {
    0.5 * (half_length * half_length - x * x)
}

/// Torsion profile on a flat disk.
pub fn torsion_disk_profile(r: f64, radius: f64) -> f64 {
    0.25 * (radius * radius - r * r)
}

/// Torsion profile on a spherical cap of curvature kappa: radially
/// symmetric, vanishing at the rim.
pub fn torsion_cap_profile(r: f64, radius: f64, kappa: f64) -> f64 {
    let a = kappa.sqrt();
    (2.0 / kappa) * ((0.5 * a * r).cos() / (0.5 * a * radius).cos()).ln()
}

/// Interior solution of the one-dimensional blow-up problem on [-L, L]:
/// the second derivative balances the negative exponential and the values
/// dive to minus infinity at the ends.
pub fn liouville_interval_profile(x: f64, half_length: f64) -> f64 {
    let b = std::f64::consts::FRAC_PI_2 / half_length;
    -(2.0 * b * b).ln() + 2.0 * (b * x).cos().ln()
}

/// Shooting oracle for the truncated one-dimensional problem: integrate the
/// symmetric initial value problem with a classical fourth-order stepper
/// and bisect on the center value until the boundary depth matches.
/// Returns node values on the n+1 uniform nodes of [-L, L]; n must be even.
pub fn liouville_shooting_profile(
    half_length: f64,
    boundary_depth: f64,
    n: usize,
) -> Result<Vec<f64>> {
    if n % 2 != 0 || n < 4 {
        return Err(Error::ConfigError("need an even node count".into()));
    }
    let half = n / 2;
    let h = half_length / half as f64;
    let substeps = 8usize;
    let hs = h / substeps as f64;

    // State (u, u') advanced from the symmetric center; returns the values
    // at the right-half nodes.
    let integrate = |center: f64| -> Vec<f64> {
        let mut u = center;
        let mut v = 0.0;
        let mut nodes = Vec::with_capacity(half + 1);
        nodes.push(u);
        let accel = |u: f64| -(-u).exp();
        for _ in 0..half {
            for _ in 0..substeps {
                let k1u = v;
                let k1v = accel(u);
                let k2u = v + 0.5 * hs * k1v;
                let k2v = accel(u + 0.5 * hs * k1u);
                let k3u = v + 0.5 * hs * k2v;
                let k3v = accel(u + 0.5 * hs * k2u);
                let k4u = v + hs * k3v;
                let k4v = accel(u + hs * k3u);
                u += hs / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
                v += hs / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
            }
            nodes.push(u);
        }
        nodes
    };
    let end_value = |center: f64| integrate(center).pop().unwrap();

    // The end value increases with the center value; bracket the target.
    let target = -boundary_depth;
    let mut lo = target;
    let mut hi = 5.0;
    if end_value(lo) > target {
        return Err(Error::SolverFailure("shooting bracket failed below".into()));
    }
    if end_value(hi) < target {
        return Err(Error::SolverFailure("shooting bracket failed above".into()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if end_value(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    let right = integrate(0.5 * (lo + hi));
    let mut all = Vec::with_capacity(n + 1);
    for i in (1..=half).rev() {
        all.push(right[i]);
    }
    all.extend(right);
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypotheses::{b_by_key, BParams};

    fn interval_domain(half: f64) -> Arc<DomainSpec> {
        Arc::new(DomainSpec::new(vec![DomainBlock::Interval { half_length: half }]).unwrap())
    }

    fn cap_domain(radius: f64, kappa: f64) -> Arc<DomainSpec> {
        Arc::new(
            DomainSpec::new(vec![DomainBlock::Cap { radius, kappa, theta_offset: 0.0 }])
                .unwrap(),
        )
    }

    #[test]
    fn interval_torsion_is_discretely_exact() {
        let d = interval_domain(1.0);
        let g = Arc::new(Grid::new(&d, &[64]).unwrap());
        let u = solve_torsion(&d, &g).unwrap();
        let mut worst = 0.0f64;
        for lin in 0..g.n_nodes() {
            let x = g.node_coord(0, lin);
            worst = worst.max((u.values()[lin] - torsion_interval_profile(x, 1.0)).abs());
        }
        assert!(worst < 1e-9, "worst {worst}");
        assert_eq!(u.provenance().unwrap().equation, "torsion");
    }

    #[test]
    fn disk_torsion_is_discretely_exact() {
        let d = Arc::new(DomainSpec::new(vec![DomainBlock::Disk { radius: 1.0 }]).unwrap());
        let g = Arc::new(Grid::new(&d, &[48, 40]).unwrap());
        let u = solve_torsion(&d, &g).unwrap();
        let mut worst = 0.0f64;
        for lin in 0..g.n_nodes() {
            let idx = g.unlin(lin);
            let r = g.node_coord(0, idx[0]);
            worst = worst.max((u.values()[lin] - torsion_disk_profile(r, 1.0)).abs());
        }
        assert!(worst < 1e-9, "worst {worst}");
    }

    #[test]
    fn cap_torsion_converges_and_refines_to_the_profile() {
        let d = cap_domain(1.2, 1.0);
        let mut errs = Vec::new();
        for cells in [24usize, 48] {
            let g = Arc::new(Grid::new(&d, &[cells, 24]).unwrap());
            let u = solve_torsion(&d, &g).unwrap();
            let mut worst = 0.0f64;
            for lin in 0..g.n_nodes() {
                let idx = g.unlin(lin);
                let r = g.node_coord(0, idx[0]);
                worst = worst.max((u.values()[lin] - torsion_cap_profile(r, 1.2, 1.0)).abs());
            }
            errs.push(worst);
        }
        let order = (errs[0] / errs[1]).log2();
        assert!(order > 1.9, "order {order} from errors {errs:?}");

        let refined = richardson_refine(&d, &[64, 24], solve_torsion).unwrap();
        let g = refined.grid().clone();
        let mut worst = 0.0f64;
        for lin in 0..g.n_nodes() {
            let idx = g.unlin(lin);
            let r = g.node_coord(0, idx[0]);
            worst = worst.max((refined.values()[lin] - torsion_cap_profile(r, 1.2, 1.0)).abs());
        }
        assert!(worst < 1e-6, "refined worst {worst}");
        assert_eq!(refined.provenance().unwrap().equation, "torsion");
    }

    #[test]
    fn product_torsion_inherits_the_mirror_symmetry() {
        let d = Arc::new(
            DomainSpec::new(vec![
                DomainBlock::Cap { radius: 1.0, kappa: 1.0, theta_offset: 0.0 },
                DomainBlock::Interval { half_length: 0.5 },
            ])
            .unwrap(),
        );
        let g = Arc::new(Grid::new(&d, &[24, 16, 24]).unwrap());
        let u = solve_torsion(&d, &g).unwrap();
        // The domain and source are even in the interval coordinate, so the
        // discrete solution must be too.
        let nz = g.sizes()[2];
        let mut worst = 0.0f64;
        for lin in 0..g.n_nodes() {
            let idx = g.unlin(lin);
            let mirrored = [idx[0], idx[1], nz - 1 - idx[2]];
            worst = worst.max((u.values()[lin] - u.values()[g.lin(&mirrored)]).abs());
        }
        assert!(worst < 1e-11, "asymmetry {worst}");
        // Positivity inside, zero on the rim.
        let center = u.eval(&[0.0, 0.0, 0.0]);
        assert!(center > 0.1);
    }

    #[test]
    fn liouville_with_zero_coupling_is_flat() {
        let d = interval_domain(0.5);
        let g = Arc::new(Grid::new(&d, &[32]).unwrap());
        let b = b_by_key("liouville", BParams { c: Some(0.0), d: Some(1.0), p: None }).unwrap();
        let u = solve_liouville(&d, &g, &b, 15.0).unwrap();
        for v in u.values() {
            assert!((v + 15.0).abs() < 1e-10);
        }
    }

    #[test]
    fn liouville_interval_matches_the_shooting_oracle() {
        let d = interval_domain(0.5);
        let n = 10_000;
        let b = b_by_key("liouville", BParams { c: Some(1.0), d: Some(1.0), p: None }).unwrap();
        // The steep truncation layer caps the plain scheme near 1e-5, so
        // the refined solve carries the comparison; its fine grid is the
        // 20000-cell one.
        let bb = b.clone();
        let u = richardson_refine(&d, &[n], move |dd, gg| {
            solve_liouville(dd, gg, &bb, 15.0)
        })
        .unwrap();
        let g = u.grid().clone();
        let oracle = liouville_shooting_profile(0.5, 15.0, n).unwrap();
        let mut worst = 0.0f64;
        for i in 0..=n {
            let x = g.node_coord(0, i);
            if x.abs() <= 0.4 {
                worst = worst.max((u.values()[i] - oracle[i]).abs());
            }
        }
        assert!(worst < 1e-6, "inner disagreement {worst}");
        assert_eq!(u.provenance().unwrap().b_key, "liouville");

        // Truncating the blow-up condition at depth B reproduces the exact
        // profile of a slightly stretched interval: near the rim the
        // profile is 2 ln(distance) - ln 2, so depth B sits at distance
        // sqrt(2) exp(-B/2) from the true singularity and every interior
        // value shifts up by 2 ln(1 + delta/L). The centers must follow
        // that law; it calibrates how deep a truncation a target accuracy
        // needs.
        let predicted = |depth: f64| {
            let delta = (2.0f64).sqrt() * (-depth / 2.0).exp();
            2.0 * (1.0 + delta / 0.5).ln()
        };
        for depth in [10.0, 15.0] {
            let bb = b.clone();
            let w = richardson_refine(&d, &[4000], move |dd, gg| {
                solve_liouville(dd, gg, &bb, depth)
            })
            .unwrap();
            let offset = w.eval(&[0.0]) - liouville_interval_profile(0.0, 0.5);
            let want = predicted(depth);
            assert!(
                (offset / want - 1.0).abs() < 0.1,
                "depth {depth}: offset {offset} vs law {want}"
            );
        }
    }

    #[test]
    fn liouville_solves_on_the_cap() {
        let d = cap_domain(1.0, 1.0);
        let g = Arc::new(Grid::new(&d, &[32, 24]).unwrap());
        let b = b_by_key("liouville", BParams { c: Some(1.0), d: Some(1.0), p: None }).unwrap();
        let u = solve_liouville(&d, &g, &b, 10.0).unwrap();
        // Radial symmetry: the rim is uniform and the center is the max.
        let center = u.eval(&[0.0, 0.0]);
        assert!(center > -10.0 && center < 0.0, "center {center}");
        for j in 0..g.sizes()[1] {
            let rim = u.values()[g.lin(&[g.sizes()[0] - 1, j])];
            assert!((rim + 10.0).abs() < 1e-12);
        }
        assert!(trust_collar(&d, &g) > 0.0);
    }

    #[test]
    fn heat_keeps_constants_and_matches_the_series_oracle() {
        let d = interval_domain(1.0);
        let g = Arc::new(Grid::new(&d, &[800]).unwrap());
        let flat = ScalarField::from_fn(d.clone(), g.clone(), |_| 3.0);
        let run = solve_heat(&flat, 0.1, 10, 5).unwrap();
        for i in 0..run.len() {
            for v in run.frame(i) {
                assert!((v - 3.0).abs() < 1e-11);
            }
        }

        let u0 = ScalarField::from_fn(d.clone(), g.clone(), |q| {
            2.0 + (std::f64::consts::FRAC_PI_2 * q[0]).sin()
        });
        let t_end = 0.05;
        let steps = 50_000;
        let run = solve_heat(&u0, t_end, steps, steps).unwrap();
        let last = run.snapshot(run.len() - 1).unwrap();

        // Separated series: steady part 2 + x, decaying modes of the
        // shifted sine basis with Simpson-rule coefficients.
        let modes = 40;
        let quad_n = 2000;
        let hq = 2.0 / quad_n as f64;
        let coeff: Vec<f64> = (1..=modes)
            .map(|k| {
                let mut acc = 0.0;
                for j in 0..=quad_n {
                    let x = -1.0 + j as f64 * hq;
                    let gx = (std::f64::consts::FRAC_PI_2 * x).sin() - x;
                    let phi = (k as f64 * std::f64::consts::FRAC_PI_2 * (x + 1.0)).sin();
                    let w = if j == 0 || j == quad_n {
                        1.0
                    } else if j % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    acc += w * gx * phi;
                }
                acc * hq / 3.0
            })
            .collect();
        let series = |x: f64| {
            let mut s = 2.0 + x;
            for (k, a) in coeff.iter().enumerate() {
                let kk = (k + 1) as f64;
                let lambda = (kk * std::f64::consts::FRAC_PI_2).powi(2);
                s += a
                    * (-lambda * t_end).exp()
                    * (kk * std::f64::consts::FRAC_PI_2 * (x + 1.0)).sin();
            }
            s
        };
        let mut worst = 0.0f64;
        for i in 0..g.n_nodes() {
            let x = g.node_coord(0, i);
            worst = worst.max((last.values()[i] - series(x)).abs());
        }
        assert!(worst < 1e-5, "series disagreement {worst}");
    }

    #[test]
    fn log_transform_keeps_values_and_tags() {
        let d = cap_domain(1.2, 1.0);
        let g = Arc::new(Grid::new(&d, &[48, 32]).unwrap());
        let u = solve_torsion(&d, &g).unwrap();
        let shifted = ScalarField::from_fn(d.clone(), g.clone(), |q| {
            1.0 + torsion_cap_profile(q[0], 1.2, 1.0)
        })
        .with_provenance(u.provenance().unwrap().clone());
        let v = log_transform(&shifted, PostMap::NegLog).unwrap();
        assert_eq!(v.provenance().unwrap().equation, "torsion_neg_log");
        let q = [0.4, 1.0];
        assert!((v.eval(&q) + shifted.eval(&q).ln()).abs() < 1e-12);
        assert!(log_transform(&v, PostMap::Log).is_err());

        // Chain-rule jets agree with differencing a directly transformed
        // node set to the scheme's accuracy.
        let direct = ScalarField::from_fn(d, g, |q| {
            -(1.0 + torsion_cap_profile(q[0], 1.2, 1.0)).ln()
        });
        let jv = v.jet(&q).unwrap();
        let jd = direct.jet(&q).unwrap();
        assert!((jv.value - jd.value).abs() < 1e-9);
        for a in 0..2 {
            for b in 0..2 {
                assert!((jv.hessian[(a, b)] - jd.hessian[(a, b)]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn perturbation_vanishes_at_zero_and_scales_linearly() {
        let d = interval_domain(1.0);
        let g = Arc::new(Grid::new(&d, &[64]).unwrap());
        let u = solve_torsion(&d, &g).unwrap();
        let b = b_by_key("constant", BParams { c: Some(1.0), d: None, p: None }).unwrap();

        let audit = perturbed_solve(&u, &b, 0.0, DEFAULT_COLLAR_CELLS).unwrap();
        assert!(audit.sup_diff < 1e-10, "eps 0 drift {}", audit.sup_diff);

        let mut ratios = Vec::new();
        for eps in [1e-2, 1e-3, 1e-4] {
            let audit = perturbed_solve(&u, &b, eps, DEFAULT_COLLAR_CELLS).unwrap();
            ratios.push(audit.sup_diff / eps);
        }
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(hi / lo < 2.0, "ratios {ratios:?}");
        assert_eq!(audit.field.provenance().unwrap().equation, "perturbed");
    }

    #[test]
    fn perturbation_collar_shrinks_polar_domains() {
        let d = cap_domain(1.0, 1.0);
        let g = Arc::new(Grid::new(&d, &[32, 24]).unwrap());
        let u = solve_torsion(&d, &g).unwrap();
        let b = b_by_key("constant", BParams { c: Some(1.0), d: None, p: None }).unwrap();
        let audit = perturbed_solve(&u, &b, 0.0, 4).unwrap();
        assert!(audit.sup_diff < 1e-10);
        let inner_axes = audit.field.domain().axes();
        let hr = g.spacing()[0];
        assert!((inner_axes[0].max - (1.0 - 4.0 * hr)).abs() < 1e-12);
    }

    #[test]
    fn evans_scaling_and_residual_audit() {
        let d = interval_domain(1.0);
        let g = Arc::new(Grid::new(&d, &[64]).unwrap());
        let u0 = ScalarField::from_fn(d.clone(), g.clone(), |q| {
            2.0 + (std::f64::consts::FRAC_PI_2 * q[0]).sin()
        });
        let run = solve_heat(&u0, 0.1, 10, 1).unwrap();

        let same = evans_transform(&run, 0.0).unwrap();
        for i in 0..run.len() {
            assert_eq!(run.frame(i), same.frame(i));
        }

        let eps = 0.25;
        let moved = evans_transform(&run, eps).unwrap();
        assert_eq!(moved.provenance().unwrap().equation, "heat_evans");
        let i = run.len() - 1;
        let factor = (-eps * run.time(i)).exp();
        for (a, b) in run.frame(i).iter().zip(moved.frame(i)) {
            assert!((a * factor - b).abs() < 1e-14);
        }

        let charts: Vec<Vec<f64>> =
            [-0.6, -0.3, 0.0, 0.3, 0.6].iter().map(|&x| vec![x]).collect();
        let (ru, rv) = evans_residual_audit(&run, &moved, eps, &charts).unwrap();
        assert!(rv <= 5.0 * ru + 1e-12, "transformed {rv} vs raw {ru}");
    }
}
