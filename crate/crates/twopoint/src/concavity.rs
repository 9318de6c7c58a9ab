//! Two-point concavity diagnostics for solved fields: the midpoint gap Z,
//! quasi-random minimum scans with local refinement, boundary-margin checks,
//! first and second order conditions at interior minima, and a pointwise
//! audit of the inequality chain that links the midpoint PDE identity to
//! midpoint concavity of the right-hand side.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::field::{FieldJet, PostMap, ScalarField, TimeSeriesField};
use crate::geodesic::{Frame, GeodesicSegment};
use crate::hypotheses::{evaluate_isotropic_f, IsotropicF, SemilinearB};
use crate::jacobi;
use crate::pde;
use crate::sampling::{seeded_rng, PairSampler};

/// Verdict threshold on the scanned minimum of Z.
pub const DEFAULT_TOL_Z: f64 = 1e-6;
/// Pairs closer than this many characteristic spacings are excluded: Z
/// vanishes quadratically on the diagonal, so near-diagonal values carry no
/// information beyond interpolation noise.
pub const DEFAULT_EXCLUSION_FACTOR: f64 = 2.0;
/// How many of the lowest scanned pairs get local refinement.
pub const DEFAULT_REFINE_TOP: usize = 10;
/// Boundary pairs checked by default when a scan asks for the margin test.
pub const DEFAULT_BOUNDARY_PAIRS: usize = 64;
/// Separations below this are reported as the diagonal, where Z = 0 by
/// convention.
const DIAGONAL_TOL: f64 = 1e-12;
/// Initial coordinate-descent step as a fraction of each axis range.
const REFINE_INITIAL_FRACTION: f64 = 1.0 / 50.0;
/// Step shrink factor after a sweep with no accepted move.
const REFINE_SHRINK: f64 = 0.6;
/// Refinement stops once every step falls below this fraction of its range.
const REFINE_STOP_FRACTION: f64 = 1e-6;
/// Hard cap on refinement sweeps per candidate.
const REFINE_MAX_SWEEPS: usize = 400;
/// Parameter step, in units of t on [-1, 1], of the one-sided stencils used
/// for boundary directional derivatives.
const BC_STENCIL_T: f64 = 1e-3;
/// Margins at or below this are treated as violations of the strict
/// inequality.
const BC_MARGIN_TOL: f64 = 1e-8;
/// A scan that retains fewer evaluated pairs than this is inconclusive.
const MIN_RETAINED: usize = 10;

/// Position of a sampled pair relative to the boundary and the diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PairClass {
    Interior,
    XOnBoundary,
    YOnBoundary,
    BothOnBoundary,
    Diagonal,
}

/// One evaluated pair: endpoint charts, the geodesic midpoint chart, and
/// the midpoint gap Z = u(z) - (u(x) + u(y)) / 2.
#[derive(Debug, Clone, Serialize)]
pub struct TwoPointSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub z_value: f64,
    pub separation: f64,
    pub classification: PairClass,
}

/// Outcome of the boundary margin test.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum BoundaryStatus {
    Satisfied { worst_margin: f64 },
    Violated { worst_margin: f64 },
    NotChecked { reason: String },
}

/// Overall conclusion of a scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    ConcaveCertifiedNumerically,
    ViolationFound,
    Inconclusive,
}

/// Residuals of the first-order minimum conditions: the midpoint gradient
/// must equal both endpoint gradients contracted by the transfer diagonal,
/// once all three are expressed in the parallel frame.
#[derive(Debug, Clone, Serialize)]
pub struct FirstOrderReport {
    pub residual_x: f64,
    pub residual_y: f64,
    pub grad_norm_x: f64,
    pub grad_norm_z: f64,
    pub grad_norm_y: f64,
    /// min(|grad x|, |grad y|) - |grad z|; nonnegative when the contraction
    /// inequality holds.
    pub contraction_slack: f64,
    /// | |grad x| - |grad y| |.
    pub norm_equality_gap: f64,
}

/// Minimum eigenvalues of the two second-order difference forms that are
/// positive semidefinite at an interior minimum of Z.
#[derive(Debug, Clone, Serialize)]
pub struct SecondOrderReport {
    /// Hess u at z minus the V-contracted endpoint average.
    pub d1_min_eig: f64,
    /// Negated sum of the endpoint Hessians.
    pub d2_min_eig: f64,
}

/// One line-to-line step of the inequality chain; slack = rhs - lhs.
#[derive(Debug, Clone, Serialize)]
pub struct ChainStep {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

/// All seven steps of the chain evaluated at one pair.
#[derive(Debug, Clone, Serialize)]
pub struct ChainAudit {
    pub steps: Vec<ChainStep>,
    pub min_slack: f64,
}

/// Per-candidate refinement summary. Carries the refined endpoint charts so
/// downstream audits can revisit the exact pairs the scan settled on.
#[derive(Debug, Clone, Serialize)]
pub struct CandidateTrace {
    pub start_z: f64,
    pub end_z: f64,
    pub sweeps: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// What the local refinement stage did to the scan minimum.
#[derive(Debug, Clone, Serialize)]
pub struct RefinementTrace {
    pub initial_min: f64,
    pub refined_min: f64,
    pub candidates: Vec<CandidateTrace>,
}

/// Scan parameters. Identical configs produce identical reports.
#[derive(Debug, Clone, Serialize)]
pub struct ScanConfig {
    pub n_pairs: usize,
    pub seed: u64,
    pub tol_z: f64,
    pub exclusion_factor: f64,
    pub refine_top: usize,
    /// Keep endpoints and midpoints at least this far from the boundary;
    /// zero scans the closed domain.
    pub interior_margin: f64,
    /// Boundary pairs for the margin test; zero disables it.
    pub boundary_pairs: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            n_pairs: 10_000,
            seed: 0,
            tol_z: DEFAULT_TOL_Z,
            exclusion_factor: DEFAULT_EXCLUSION_FACTOR,
            refine_top: DEFAULT_REFINE_TOP,
            interior_margin: 0.0,
            boundary_pairs: DEFAULT_BOUNDARY_PAIRS,
        }
    }
}

/// Full scan outcome with the diagnostic block evaluated at the argmin.
#[derive(Debug, Clone, Serialize)]
pub struct ConcavityReport {
    pub min_z: f64,
    pub argmin: TwoPointSample,
    /// Pairs evaluated after exclusion.
    pub n_samples: usize,
    /// Pairs dropped by the diagonal exclusion, margin, or failed connects.
    pub n_excluded: usize,
    pub refinement: RefinementTrace,
    pub boundary_condition: BoundaryStatus,
    pub first_order: Option<FirstOrderReport>,
    pub second_order: Option<SecondOrderReport>,
    pub chain: Option<ChainAudit>,
    pub tol_z: f64,
    pub verdict: Verdict,
}

/// One snapshot of a parabolic scan.
#[derive(Debug, Clone, Serialize)]
pub struct ParabolicSnapshot {
    pub time: f64,
    pub report: ConcavityReport,
}

/// Scan of a time series: preservation is claimed only when the initial
/// snapshot is itself certified.
#[derive(Debug, Clone, Serialize)]
pub struct ParabolicReport {
    pub snapshots: Vec<ParabolicSnapshot>,
    pub min_over_time: f64,
    pub initial_certified: bool,
    pub verdict: Verdict,
}

/// Evaluate the midpoint gap at one chart pair. Pairs at or below the
/// diagonal threshold report Z = 0 exactly by convention.
pub fn z_value(field: &ScalarField, x: &[f64], y: &[f64]) -> Result<TwoPointSample> {
    let domain = field.domain();
    let px = domain.chart_to_point(x)?;
    let py = domain.chart_to_point(y)?;
    let model = domain.model();
    let separation = model.distance(&px, &py);
    if separation <= DIAGONAL_TOL {
        return Ok(TwoPointSample {
            x: x.to_vec(),
            y: y.to_vec(),
            z: x.to_vec(),
            z_value: 0.0,
            separation,
            classification: PairClass::Diagonal,
        });
    }
    let seg = GeodesicSegment::connect(model, &px, &py)?;
    let mid = seg.point_at(0.0);
    let z = domain.point_to_chart(&mid);
    let uz = field.eval(&z);
    let ux = field.eval(x);
    let uy = field.eval(y);
    let classification = match (domain.is_boundary(x), domain.is_boundary(y)) {
        (true, true) => PairClass::BothOnBoundary,
        (true, false) => PairClass::XOnBoundary,
        (false, true) => PairClass::YOnBoundary,
        (false, false) => PairClass::Interior,
    };
    Ok(TwoPointSample {
        x: x.to_vec(),
        y: y.to_vec(),
        z,
        z_value: uz - 0.5 * (ux + uy),
        separation,
        classification,
    })
}

/// Shared frame data for the pointwise diagnostics: values, gradient
/// components, and Hessian components of u at x, z, y, all expressed in the
/// parallel frame along the connecting geodesic.
struct PairGeometry {
    vdiag: Vec<f64>,
    /// Values at [x, z, y].
    u: [f64; 3],
    /// Gradient norms at [x, z, y].
    p: [f64; 3],
    /// Gradient components in the frame at [x, z, y].
    grad: [Vec<f64>; 3],
    /// Hessian components in the frame at [x, z, y].
    hess: [DMatrix<f64>; 3],
}

/// Components of one jet in the parallel frame at parameter t.
fn jet_in_frame(
    frame: &Frame,
    jet: &FieldJet,
    t: f64,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let model = frame.segment().model();
    let n = frame.n();
    let grad = frame.components(&jet.gradient, t)?;
    // Rotation from the jet's own orthonormal frame into the parallel frame.
    let mut rot = DMatrix::zeros(n, n);
    for a in 0..n {
        for alpha in 0..n {
            rot[(a, alpha)] = model.metric_inner(&jet.frame[a], &frame.vector_at(alpha, t))?;
        }
    }
    let hess = rot.transpose() * &jet.hessian * &rot;
    Ok((grad, hess))
}

fn pair_geometry(field: &ScalarField, x: &[f64], y: &[f64]) -> Result<PairGeometry> {
    let domain = field.domain();
    let px = domain.chart_to_point(x)?;
    let py = domain.chart_to_point(y)?;
    let seg = GeodesicSegment::connect(domain.model(), &px, &py)?;
    let frame = seg.frame()?;
    let vdiag = jacobi::transfer_diagonal(&frame)?;
    let z = domain.point_to_chart(&seg.point_at(0.0));
    let charts = [x, &z[..], y];
    let ts = [-1.0, 0.0, 1.0];
    let mut u = [0.0; 3];
    let mut p = [0.0; 3];
    let mut grad: [Vec<f64>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut hess: [DMatrix<f64>; 3] =
        [DMatrix::zeros(0, 0), DMatrix::zeros(0, 0), DMatrix::zeros(0, 0)];
    for i in 0..3 {
        let jet = field.jet(charts[i])?;
        let (g, h) = jet_in_frame(&frame, &jet, ts[i])?;
        u[i] = jet.value;
        p[i] = g.iter().map(|c| c * c).sum::<f64>().sqrt();
        grad[i] = g;
        hess[i] = h;
    }
    Ok(PairGeometry { vdiag, u, p, grad, hess })
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    let sym = 0.5 * (m + m.transpose());
    sym.symmetric_eigen().eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// First-order minimum conditions at a pair: residuals of
/// grad u(z) = V grad u(x) = V grad u(y) in the parallel frame, plus the
/// norm contraction and norm equality margins. Meaningful only at interior
/// minima of Z; elsewhere the residuals are just numbers.
pub fn first_order_check(field: &ScalarField, x: &[f64], y: &[f64]) -> Result<FirstOrderReport> {
    let g = pair_geometry(field, x, y)?;
    let n = g.vdiag.len();
    let mut rx = 0.0;
    let mut ry = 0.0;
    for a in 0..n {
        rx += (g.grad[1][a] - g.vdiag[a] * g.grad[0][a]).powi(2);
        ry += (g.grad[1][a] - g.vdiag[a] * g.grad[2][a]).powi(2);
    }
    Ok(FirstOrderReport {
        residual_x: rx.sqrt(),
        residual_y: ry.sqrt(),
        grad_norm_x: g.p[0],
        grad_norm_z: g.p[1],
        grad_norm_y: g.p[2],
        contraction_slack: g.p[0].min(g.p[2]) - g.p[1],
        norm_equality_gap: (g.p[0] - g.p[2]).abs(),
    })
}

/// Second-order minimum conditions at a pair: minimum eigenvalues of
/// D1 = Hess u(z) - (V Hess u(x) V + V Hess u(y) V) / 2 and
/// D2 = -(Hess u(x) + Hess u(y)), both in parallel-frame components.
pub fn second_order_check(field: &ScalarField, x: &[f64], y: &[f64]) -> Result<SecondOrderReport> {
    let g = pair_geometry(field, x, y)?;
    let n = g.vdiag.len();
    let mut d1 = g.hess[1].clone();
    let mut d2 = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            let avg = 0.5 * (g.hess[0][(a, b)] + g.hess[2][(a, b)]);
            d1[(a, b)] -= g.vdiag[a] * g.vdiag[b] * avg;
            d2[(a, b)] = -2.0 * avg;
        }
    }
    Ok(SecondOrderReport { d1_min_eig: min_eig(&d1), d2_min_eig: min_eig(&d2) })
}

const CHAIN_STEP_NAMES: [&str; 7] = [
    "pde_identity_z",
    "second_order_step",
    "f_convex_split",
    "f_monotone_p",
    "pde_identity_xy",
    "b_slot3_monotone",
    "b_midpoint_concave",
];

/// Evaluate the seven-line inequality chain at one pair. Every step's slack
/// (rhs - lhs) should be nonnegative up to tolerance at a minimum of Z; the
/// two identity steps should be near zero. The chain reads, line by line:
/// the PDE at z, the second-order matrix inequality pushed through f, the
/// convex split of f over the endpoint Hessians, monotonicity of f in its
/// scalar slot, the PDE at x and y, monotonicity of b in its gradient slot,
/// and midpoint concavity of b in its value slot.
pub fn chain_audit(
    field: &ScalarField,
    x: &[f64],
    y: &[f64],
    f: &dyn IsotropicF,
    b: &dyn SemilinearB,
) -> Result<ChainAudit> {
    let prov = field.provenance().ok_or_else(|| {
        Error::ConfigError("field carries no solver provenance to audit against".into())
    })?;
    if f.key() != prov.f_key {
        return Err(Error::ConfigError(format!(
            "f selection {} does not match the field's operator {}",
            f.key(),
            prov.f_key
        )));
    }
    if b.key() != prov.b_key {
        return Err(Error::ConfigError(format!(
            "b selection {} does not match the field's right-hand side {}",
            b.key(),
            prov.b_key
        )));
    }
    let meta = b.metadata();
    if !meta.slot3_nonincreasing {
        return Err(Error::ConfigError(format!(
            "b {} does not claim slot-3 monotonicity; the gradient step is unsupported",
            b.key()
        )));
    }
    if !meta.jointly_concave {
        return Err(Error::ConfigError(format!(
            "b {} does not claim joint concavity; the midpoint step is unsupported",
            b.key()
        )));
    }
    let g = pair_geometry(field, x, y)?;
    let (ux, uz, uy) = (g.u[0], g.u[1], g.u[2]);
    let (px, pz, py) = (g.p[0], g.p[1], g.p[2]);
    let neg = |m: &DMatrix<f64>| -m;
    let avg_hess = 0.5 * (&g.hess[0] + &g.hess[2]);
    let f_z = evaluate_isotropic_f(f, pz, &neg(&g.hess[1]))?;
    let f_avg = evaluate_isotropic_f(f, pz, &neg(&avg_hess))?;
    let f_x_pz = evaluate_isotropic_f(f, pz, &neg(&g.hess[0]))?;
    let f_y_pz = evaluate_isotropic_f(f, pz, &neg(&g.hess[2]))?;
    let f_x = evaluate_isotropic_f(f, px, &neg(&g.hess[0]))?;
    let f_y = evaluate_isotropic_f(f, py, &neg(&g.hess[2]))?;
    let values = [
        b.eval(uz, pz),
        f_z,
        f_avg,
        0.5 * (f_x_pz + f_y_pz),
        0.5 * (f_x + f_y),
        0.5 * (b.eval(ux, px) + b.eval(uy, py)),
        0.5 * (b.eval(ux, pz) + b.eval(uy, pz)),
        b.eval(0.5 * (ux + uy), pz),
    ];
    let steps: Vec<ChainStep> = (0..7)
        .map(|i| ChainStep {
            name: CHAIN_STEP_NAMES[i],
            lhs: values[i],
            rhs: values[i + 1],
            slack: values[i + 1] - values[i],
        })
        .collect();
    let min_slack = steps.iter().map(|s| s.slack).fold(f64::INFINITY, f64::min);
    Ok(ChainAudit { steps, min_slack })
}

/// Second difference of Z under simultaneous endpoint perturbations
/// exp_x(s a), exp_y(s b) with a, b given in parallel-frame components at
/// t = -1 and t = 1. Cross-validates the frame assembly: with a = b = V xi
/// the value matches Hess u(z)(xi, xi) minus the V-contracted endpoint
/// average, and with a = -b = xi it matches the pure endpoint term, because
/// the midpoint variation vanishes for those choices.
pub fn hessian_z_fd(
    field: &ScalarField,
    x: &[f64],
    y: &[f64],
    a: &[f64],
    b: &[f64],
    h: f64,
) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::ConfigError("fd step must be positive".into()));
    }
    let domain = field.domain();
    let model = domain.model();
    let px = domain.chart_to_point(x)?;
    let py = domain.chart_to_point(y)?;
    let seg = GeodesicSegment::connect(model, &px, &py)?;
    let frame = seg.frame()?;
    let va = frame.combine(a, -1.0);
    let vb = frame.combine(b, 1.0);
    let phi = |s: f64| -> Result<f64> {
        let qx = domain.point_to_chart(&model.exp_map(&va.scale(s))?);
        let qy = domain.point_to_chart(&model.exp_map(&vb.scale(s))?);
        Ok(z_value(field, &qx, &qy)?.z_value)
    };
    Ok((phi(h)? - 2.0 * phi(0.0)? + phi(-h)?) / (h * h))
}

/// Boundary margin test: for x on the boundary and y anywhere, the
/// directional derivative of u into the domain at x must exceed the outward
/// one at y, both taken along the connecting geodesic with interior-biased
/// one-sided stencils. Fields solved under the blow-up boundary condition
/// skip the test and record the reason.
pub fn boundary_condition_check(
    field: &ScalarField,
    n_pairs: usize,
    seed: u64,
) -> Result<BoundaryStatus> {
    if let Some(p) = field.provenance() {
        if p.equation.starts_with("liouville") {
            return Ok(BoundaryStatus::NotChecked { reason: "growth_condition".into() });
        }
    }
    let domain = field.domain();
    let has_boundary =
        domain.axes().iter().any(|a| a.lower_boundary || a.upper_boundary);
    if !has_boundary {
        return Ok(BoundaryStatus::NotChecked { reason: "no_boundary".into() });
    }
    if n_pairs == 0 {
        return Ok(BoundaryStatus::NotChecked { reason: "disabled".into() });
    }
    let model = domain.model();
    let min_sep = 0.05 * domain.diameter();
    let mut rng = seeded_rng(seed, 1);
    let mut worst = f64::INFINITY;
    for _ in 0..n_pairs {
        let qx = domain.random_boundary_chart(&mut rng);
        let px = domain.chart_to_point(&qx)?;
        let mut attempt = 0;
        let (py, _qy) = loop {
            let qy = domain.random_chart(&mut rng);
            let py = domain.chart_to_point(&qy)?;
            if model.distance(&px, &py) >= min_sep {
                break (py, qy);
            }
            attempt += 1;
            if attempt > 64 {
                return Err(Error::ConfigError(
                    "could not draw boundary pairs with usable separation".into(),
                ));
            }
        };
        let seg = GeodesicSegment::connect(model, &px, &py)?;
        let phi = |t: f64| field.eval_point(&seg.point_at(t));
        let d = BC_STENCIL_T;
        let into_x = (-3.0 * phi(-1.0) + 4.0 * phi(-1.0 + d) - phi(-1.0 + 2.0 * d)) / (2.0 * d);
        let out_y = (3.0 * phi(1.0) - 4.0 * phi(1.0 - d) + phi(1.0 - 2.0 * d)) / (2.0 * d);
        worst = worst.min(into_x - out_y);
    }
    if worst > BC_MARGIN_TOL {
        Ok(BoundaryStatus::Satisfied { worst_margin: worst })
    } else {
        Ok(BoundaryStatus::Violated { worst_margin: worst })
    }
}

/// Wrap periodic coordinates back into their fundamental range.
fn wrap_periodic(domain: &DomainSpec, q: &mut [f64]) {
    for (i, a) in domain.axes().iter().enumerate() {
        if a.periodic {
            q[i] = (q[i] - a.min).rem_euclid(a.max - a.min) + a.min;
        }
    }
}

/// Evaluate one scan pair, applying the exclusion rules.
fn evaluate_scan_pair(
    field: &ScalarField,
    x: &[f64],
    y: &[f64],
    d_min: f64,
    margin: f64,
) -> Option<TwoPointSample> {
    let domain = field.domain();
    if margin > 0.0
        && (domain.boundary_distance(x) < margin || domain.boundary_distance(y) < margin)
    {
        return None;
    }
    let s = z_value(field, x, y).ok()?;
    if s.separation < d_min {
        return None;
    }
    if margin > 0.0 && domain.boundary_distance(&s.z) < margin {
        return None;
    }
    Some(s)
}

/// Coordinate descent on Z over the product chart, one candidate at a time.
/// Moves that leave the domain, cross the exclusion radius, or violate the
/// interior margin are rejected; steps shrink geometrically once a full
/// sweep fails to improve.
fn refine_candidate(
    field: &ScalarField,
    start: TwoPointSample,
    d_min: f64,
    margin: f64,
) -> (TwoPointSample, CandidateTrace) {
    let domain = field.domain().clone();
    let dim = domain.dim();
    let ranges: Vec<f64> = domain.axes().iter().map(|a| a.max - a.min).collect();
    let mut steps: Vec<f64> = ranges
        .iter()
        .cycle()
        .take(2 * dim)
        .map(|r| r * REFINE_INITIAL_FRACTION)
        .collect();
    let start_z = start.z_value;
    let mut best = start;
    let mut sweeps = 0;
    while sweeps < REFINE_MAX_SWEEPS {
        sweeps += 1;
        let mut improved = false;
        for c in 0..2 * dim {
            for sgn in [1.0, -1.0] {
                let mut qx = best.x.clone();
                let mut qy = best.y.clone();
                let target = if c < dim { &mut qx } else { &mut qy };
                let axis = c % dim;
                target[axis] += sgn * steps[c];
                wrap_periodic(&domain, target);
                if !domain.contains(&qx) || !domain.contains(&qy) {
                    continue;
                }
                if let Some(s) = evaluate_scan_pair(field, &qx, &qy, d_min, margin) {
                    if s.z_value < best.z_value {
                        best = s;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            for s in &mut steps {
                *s *= REFINE_SHRINK;
            }
            let widest = steps
                .iter()
                .zip(ranges.iter().cycle())
                .map(|(s, r)| s / r)
                .fold(0.0f64, f64::max);
            if widest < REFINE_STOP_FRACTION {
                break;
            }
        }
    }
    let trace = CandidateTrace {
        start_z,
        end_z: best.z_value,
        sweeps,
        x: best.x.clone(),
        y: best.y.clone(),
    };
    (best, trace)
}

/// Quasi-random minimum scan over pair space with local refinement of the
/// lowest candidates, the boundary margin test, and first and second order
/// diagnostics at the refined argmin. Deterministic in (config, field).
pub fn scan_min(field: &ScalarField, cfg: &ScanConfig) -> Result<ConcavityReport> {
    let domain = field.domain().clone();
    let h_char = field.grid().characteristic_spacing(&domain);
    let d_min = cfg.exclusion_factor * h_char;
    let mut sampler = PairSampler::new(domain.clone(), cfg.seed)?;
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..cfg.n_pairs).map(|_| sampler.next_pair()).collect();
    let evals: Vec<Option<TwoPointSample>> = pairs
        .par_iter()
        .map(|(x, y)| evaluate_scan_pair(field, x, y, d_min, cfg.interior_margin))
        .collect();
    let retained: Vec<TwoPointSample> = evals.into_iter().flatten().collect();
    let n_samples = retained.len();
    let n_excluded = cfg.n_pairs - n_samples;

    let boundary_condition = if cfg.boundary_pairs > 0 {
        boundary_condition_check(field, cfg.boundary_pairs, cfg.seed.wrapping_add(1))?
    } else {
        BoundaryStatus::NotChecked { reason: "disabled".into() }
    };

    if n_samples < MIN_RETAINED {
        // Too sparse to argue anything; report the domain center diagonal as
        // a placeholder argmin.
        let center: Vec<f64> =
            domain.axes().iter().map(|a| 0.5 * (a.min + a.max)).collect();
        let argmin = z_value(field, &center, &center)?;
        return Ok(ConcavityReport {
            min_z: argmin.z_value,
            argmin,
            n_samples,
            n_excluded,
            refinement: RefinementTrace {
                initial_min: f64::INFINITY,
                refined_min: f64::INFINITY,
                candidates: Vec::new(),
            },
            boundary_condition,
            first_order: None,
            second_order: None,
            chain: None,
            tol_z: cfg.tol_z,
            verdict: Verdict::Inconclusive,
        });
    }

    let mut order: Vec<usize> = (0..n_samples).collect();
    order.sort_by(|&i, &j| {
        retained[i].z_value.total_cmp(&retained[j].z_value).then(i.cmp(&j))
    });
    let initial_min = retained[order[0]].z_value;

    let k = cfg.refine_top.min(n_samples);
    let refined: Vec<(TwoPointSample, CandidateTrace)> = order[..k]
        .par_iter()
        .map(|&i| refine_candidate(field, retained[i].clone(), d_min, cfg.interior_margin))
        .collect();

    let mut best = retained[order[0]].clone();
    for (s, _) in &refined {
        if s.z_value < best.z_value {
            best = s.clone();
        }
    }
    let refinement = RefinementTrace {
        initial_min,
        refined_min: best.z_value,
        candidates: refined.into_iter().map(|(_, t)| t).collect(),
    };

    let (first_order, second_order) = if best.classification == PairClass::Interior {
        (
            first_order_check(field, &best.x, &best.y).ok(),
            second_order_check(field, &best.x, &best.y).ok(),
        )
    } else {
        (None, None)
    };

    let min_z = best.z_value;
    let verdict = if min_z < -cfg.tol_z {
        Verdict::ViolationFound
    } else {
        Verdict::ConcaveCertifiedNumerically
    };
    Ok(ConcavityReport {
        min_z,
        argmin: best,
        n_samples,
        n_excluded,
        refinement,
        boundary_condition,
        first_order,
        second_order,
        chain: None,
        tol_z: cfg.tol_z,
        verdict,
    })
}

/// Scan every snapshot of a time series, optionally through a pointwise
/// value map applied first. The preservation verdict is inconclusive unless
/// the initial snapshot is certified on its own.
pub fn parabolic_scan(
    series: &TimeSeriesField,
    cfg: &ScanConfig,
    map: Option<PostMap>,
) -> Result<ParabolicReport> {
    if series.is_empty() {
        return Err(Error::ConfigError("time series has no snapshots".into()));
    }
    let mut snap_cfg = cfg.clone();
    // The elliptic margin display is not the parabolic hypothesis; the
    // boundary data comparison lives with the heat solver instead.
    snap_cfg.boundary_pairs = 0;
    let mut snapshots = Vec::with_capacity(series.len());
    let mut min_over_time = f64::INFINITY;
    for i in 0..series.len() {
        let mut field = series.snapshot(i)?;
        if let Some(m) = map {
            field = pde::log_transform(&field, m)?;
        }
        let mut report = scan_min(&field, &snap_cfg)?;
        report.boundary_condition =
            BoundaryStatus::NotChecked { reason: "parabolic_pipeline".into() };
        min_over_time = min_over_time.min(report.min_z);
        snapshots.push(ParabolicSnapshot { time: series.time(i), report });
    }
    let initial_certified =
        snapshots[0].report.verdict == Verdict::ConcaveCertifiedNumerically;
    let any_inconclusive =
        snapshots.iter().any(|s| s.report.verdict == Verdict::Inconclusive);
    let verdict = if !initial_certified || any_inconclusive {
        Verdict::Inconclusive
    } else if min_over_time < -cfg.tol_z {
        Verdict::ViolationFound
    } else {
        Verdict::ConcaveCertifiedNumerically
    };
    Ok(ParabolicReport { snapshots, min_over_time, initial_certified, verdict })
}

/// Independent concavity witness: the largest geodesic second difference of
/// the field over random interior base points and directions. Concave
/// fields keep it at or below discretization noise.
pub fn jensen_witness(
    field: &ScalarField,
    n_triples: usize,
    seed: u64,
    h: f64,
) -> Result<f64> {
    let domain = field.domain();
    let model = domain.model();
    let mut rng = seeded_rng(seed, 2);
    let mut worst = f64::NEG_INFINITY;
    let mut produced = 0;
    let mut attempts = 0;
    while produced < n_triples {
        attempts += 1;
        if attempts > 100 * n_triples {
            return Err(Error::ConfigError(
                "could not place witness triples inside the domain".into(),
            ));
        }
        let q = domain.random_chart(&mut rng);
        if domain.boundary_distance(&q) < 1.5 * h {
            continue;
        }
        let p = domain.chart_to_point(&q)?;
        let basis = model.orthonormal_basis(&p);
        let mut dir = model.zero_tangent(&p);
        let mut norm2 = 0.0;
        for e in &basis {
            let c = rng.gen::<f64>() * 2.0 - 1.0;
            norm2 += c * c;
            dir = dir.add(&e.scale(c));
        }
        if norm2 < 1e-4 {
            continue;
        }
        let unit = dir.scale(1.0 / norm2.sqrt());
        worst = worst.max(field.geodesic_second_difference(&unit, h)?);
        produced += 1;
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{DomainBlock, DomainSpec, Grid};
    use crate::field::FieldProvenance;
    use crate::hypotheses::{b_by_key, f_by_key, BParams, Cone};
    use crate::pde::{richardson_refine, solve_torsion, torsion_interval_profile};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn rect_domain(hx: f64, hy: f64) -> Arc<DomainSpec> {
        Arc::new(DomainSpec::new(vec![DomainBlock::Rectangle { half_x: hx, half_y: hy }]).unwrap())
    }

    fn rect_field(
        hx: f64,
        hy: f64,
        n: usize,
        f: impl Fn(&[f64]) -> f64,
    ) -> ScalarField {
        let dom = rect_domain(hx, hy);
        let grid = Arc::new(Grid::new(&dom, &[n, n]).unwrap());
        ScalarField::from_fn(dom, grid, f)
    }

    fn cap_domain(r0: f64, kappa: f64) -> Arc<DomainSpec> {
        Arc::new(
            DomainSpec::new(vec![DomainBlock::Cap { radius: r0, kappa, theta_offset: 0.0 }])
                .unwrap(),
        )
    }

    #[test]
    fn midpoint_gap_vanishes_on_diagonal_and_affine_data() {
        let field = rect_field(1.0, 1.0, 32, |q| 0.3 + 2.0 * q[0] - 0.7 * q[1]);
        let d = z_value(&field, &[0.4, -0.2], &[0.4, -0.2]).unwrap();
        assert_eq!(d.z_value, 0.0);
        assert_eq!(d.classification, PairClass::Diagonal);
        let s = z_value(&field, &[-0.8, 0.1], &[0.6, 0.9]).unwrap();
        assert!(s.z_value.abs() < 1e-12, "affine data should give Z = 0, got {}", s.z_value);
        assert_eq!(s.classification, PairClass::Interior);
        let b = z_value(&field, &[1.0, 0.0], &[0.0, 0.5]).unwrap();
        assert_eq!(b.classification, PairClass::XOnBoundary);
        let bb = z_value(&field, &[1.0, 0.0], &[-0.3, -1.0]).unwrap();
        assert_eq!(bb.classification, PairClass::BothOnBoundary);
    }

    #[test]
    fn midpoint_gap_matches_the_flat_quadratic_formula() {
        // For u = -|q|^2 / 2 the gap is |x - y|^2 / 8; cubic interpolation
        // reproduces quadratics exactly, so only roundoff remains.
        let field = rect_field(1.0, 1.0, 24, |q| -0.5 * (q[0] * q[0] + q[1] * q[1]));
        let x = [0.7, -0.3];
        let y = [-0.5, 0.4];
        let s = z_value(&field, &x, &y).unwrap();
        let d2 = (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2);
        assert!((s.z_value - d2 / 8.0).abs() < 1e-12);
        assert!((s.separation - d2.sqrt()).abs() < 1e-12);
        let dzx = (s.z[0] - x[0]).hypot(s.z[1] - x[1]);
        let dzy = (s.z[0] - y[0]).hypot(s.z[1] - y[1]);
        assert!((dzx - dzy).abs() < 1e-10, "midpoint must be equidistant");
        let swapped = z_value(&field, &y, &x).unwrap();
        assert!((s.z_value - swapped.z_value).abs() < 1e-12);
    }

    #[test]
    fn scan_certifies_the_interval_torsion_solution() {
        let dom = Arc::new(
            DomainSpec::new(vec![DomainBlock::Interval { half_length: 1.0 }]).unwrap(),
        );
        let grid = Arc::new(Grid::new(&dom, &[256]).unwrap());
        let field = solve_torsion(&dom, &grid).unwrap();
        let cfg = ScanConfig { n_pairs: 10_000, seed: 11, ..ScanConfig::default() };
        let report = scan_min(&field, &cfg).unwrap();
        assert!(report.min_z >= -1e-8, "torsion scan found min_z = {}", report.min_z);
        assert_eq!(report.verdict, Verdict::ConcaveCertifiedNumerically);
        assert!(matches!(report.boundary_condition, BoundaryStatus::Satisfied { .. }));
        assert!(report.n_samples > 5_000);
        assert!(report.refinement.refined_min <= report.refinement.initial_min);
    }

    #[test]
    fn scan_flags_the_planted_saddle() {
        // u = x1^2 - x2^2 is convex along the first axis, so Z goes negative
        // for pairs separated in that direction.
        let field = rect_field(1.0, 1.0, 48, |q| q[0] * q[0] - q[1] * q[1]);
        let cfg = ScanConfig { n_pairs: 3_000, seed: 5, boundary_pairs: 0, ..ScanConfig::default() };
        let report = scan_min(&field, &cfg).unwrap();
        assert_eq!(report.verdict, Verdict::ViolationFound);
        assert!(report.min_z < -0.3, "saddle min_z = {}", report.min_z);
        // verdict invariant: violation exactly when the refined min clears
        // the tolerance threshold
        assert_eq!(report.verdict == Verdict::ViolationFound, report.min_z < -cfg.tol_z);
    }

    #[test]
    fn scans_are_deterministic() {
        let field = rect_field(1.0, 1.0, 24, |q| -0.5 * (q[0] * q[0] + q[1] * q[1]));
        let cfg = ScanConfig { n_pairs: 500, seed: 9, boundary_pairs: 8, ..ScanConfig::default() };
        let a = scan_min(&field, &cfg).unwrap();
        let b = scan_min(&field, &cfg).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn sparse_scans_come_back_inconclusive() {
        let field = rect_field(1.0, 1.0, 16, |q| -q[0] * q[0]);
        // Exclusion radius beyond the diameter rejects every pair.
        let cfg = ScanConfig {
            n_pairs: 200,
            exclusion_factor: 1e6,
            boundary_pairs: 0,
            ..ScanConfig::default()
        };
        let report = scan_min(&field, &cfg).unwrap();
        assert_eq!(report.verdict, Verdict::Inconclusive);
        assert_eq!(report.n_samples, 0);
        assert_eq!(report.n_excluded, 200);
    }

    #[test]
    fn interior_margin_keeps_endpoints_off_the_boundary() {
        let field = rect_field(1.0, 1.0, 24, |q| -0.5 * (q[0] * q[0] + q[1] * q[1]));
        let cfg = ScanConfig {
            n_pairs: 800,
            interior_margin: 0.25,
            boundary_pairs: 0,
            ..ScanConfig::default()
        };
        let report = scan_min(&field, &cfg).unwrap();
        assert!(report.n_samples > 0);
        let dom = field.domain();
        assert!(dom.boundary_distance(&report.argmin.x) >= 0.25);
        assert!(dom.boundary_distance(&report.argmin.y) >= 0.25);
        assert_eq!(report.argmin.classification, PairClass::Interior);
    }

    /// Interior saddle whose two-point minimum sits away from the boundary:
    /// along the first axis u = t^2 - t^4 pulls symmetric pairs to
    /// t = 1/sqrt(2), where the gap reaches -1/4 and both endpoint
    /// gradients vanish.
    fn quartic_fixture(n: usize) -> ScalarField {
        rect_field(1.0, 1.0, n, |q| {
            q[0] * q[0] - q[0].powi(4) - 0.5 * q[1] * q[1]
        })
    }

    #[test]
    fn diagnostics_hold_at_the_quartic_interior_minimum() {
        let field = quartic_fixture(64);
        let cfg = ScanConfig { n_pairs: 4_000, seed: 2, boundary_pairs: 0, ..ScanConfig::default() };
        let report = scan_min(&field, &cfg).unwrap();
        assert_eq!(report.verdict, Verdict::ViolationFound);
        assert!((report.min_z + 0.25).abs() < 2e-2, "min_z = {}", report.min_z);
        assert_eq!(report.argmin.classification, PairClass::Interior);
        let first = report.first_order.expect("interior argmin has first-order data");
        assert!(first.residual_x < 1e-3, "residual_x = {}", first.residual_x);
        assert!(first.residual_y < 1e-3, "residual_y = {}", first.residual_y);
        assert!(first.norm_equality_gap < 1e-3);
        assert!(first.contraction_slack > -1e-3);
        let second = report.second_order.expect("interior argmin has second-order data");
        // Exact values at the minimum: D1 = diag(6, 0), D2 = diag(8, 2).
        assert!(second.d1_min_eig > -1e-3, "d1 min eig = {}", second.d1_min_eig);
        assert!((second.d2_min_eig - 2.0).abs() < 0.2, "d2 min eig = {}", second.d2_min_eig);
    }

    #[test]
    fn second_order_forms_are_exact_for_the_flat_quadratic() {
        let field = rect_field(1.0, 1.0, 24, |q| -0.5 * (q[0] * q[0] + q[1] * q[1]));
        let s = second_order_check(&field, &[0.3, 0.1], &[-0.5, 0.2]).unwrap();
        // Constant Hessian -I: D1 = 0 and D2 = 2 I exactly.
        assert!(s.d1_min_eig.abs() < 1e-8, "d1 = {}", s.d1_min_eig);
        assert!((s.d2_min_eig - 2.0).abs() < 1e-8, "d2 = {}", s.d2_min_eig);
    }

    #[test]
    fn chain_audit_is_flat_for_affine_data() {
        let field = rect_field(1.0, 1.0, 24, |q| 1.0 + 0.4 * q[0] - 0.9 * q[1])
            .with_provenance(FieldProvenance {
                equation: "synthetic".into(),
                b_key: "constant".into(),
                f_key: "neg_trace".into(),
            });
        let f = f_by_key("neg_trace", None, Cone::All).unwrap();
        let b = b_by_key("constant", BParams { c: Some(0.0), ..BParams::default() }).unwrap();
        let audit = chain_audit(&field, &[0.5, -0.2], &[-0.4, 0.6], f.as_ref(), b.as_ref()).unwrap();
        assert_eq!(audit.steps.len(), 7);
        for step in &audit.steps {
            assert!(step.slack.abs() < 1e-9, "{} slack = {}", step.name, step.slack);
        }
        assert_eq!(audit.steps[0].name, "pde_identity_z");
        assert_eq!(audit.steps[6].name, "b_midpoint_concave");
    }

    #[test]
    fn chain_audit_accepts_interval_torsion_near_minima() {
        let dom = Arc::new(
            DomainSpec::new(vec![DomainBlock::Interval { half_length: 0.8 }]).unwrap(),
        );
        let field = richardson_refine(&dom, &[256], solve_torsion).unwrap();
        let l = 0.8;
        for x in [-0.75, -0.3, 0.1] {
            let y = x + 0.5;
            let exact = |t: f64| torsion_interval_profile(t, l);
            let s = z_value(&field, &[x], &[y]).unwrap();
            let want = exact(0.5 * (x + y)) - 0.5 * (exact(x) + exact(y));
            assert!((s.z_value - want).abs() < 1e-8);
            let f = f_by_key("neg_trace", None, Cone::All).unwrap();
            let b = b_by_key("constant", BParams { c: Some(1.0), ..BParams::default() }).unwrap();
            let audit = chain_audit(&field, &[x], &[y], f.as_ref(), b.as_ref()).unwrap();
            assert!(audit.min_slack > -1e-6, "min slack {} at x = {x}", audit.min_slack);
            // The quadratic solution makes every line an equality.
            for step in &audit.steps {
                assert!(step.slack.abs() < 1e-6, "{} slack = {}", step.name, step.slack);
            }
        }
    }

    #[test]
    fn chain_audit_rejects_mismatched_selections() {
        let dom = Arc::new(
            DomainSpec::new(vec![DomainBlock::Interval { half_length: 0.8 }]).unwrap(),
        );
        let grid = Arc::new(Grid::new(&dom, &[64]).unwrap());
        let field = solve_torsion(&dom, &grid).unwrap();
        let wrong_f = f_by_key("trace_exp", None, Cone::All).unwrap();
        let b = b_by_key("constant", BParams { c: Some(1.0), ..BParams::default() }).unwrap();
        let err = chain_audit(&field, &[-0.2], &[0.3], wrong_f.as_ref(), b.as_ref());
        assert!(matches!(err, Err(Error::ConfigError(_))));

        let f = f_by_key("neg_trace", None, Cone::All).unwrap();
        let wrong_b = b_by_key("liouville", BParams { c: Some(1.0), d: Some(1.0), p: None }).unwrap();
        let err = chain_audit(&field, &[-0.2], &[0.3], f.as_ref(), wrong_b.as_ref());
        assert!(matches!(err, Err(Error::ConfigError(_))));

        let untagged = rect_field(1.0, 1.0, 16, |q| -q[0] * q[0] - q[1] * q[1]);
        let err = chain_audit(&untagged, &[0.1, 0.0], &[0.4, 0.2], f.as_ref(), b.as_ref());
        assert!(matches!(err, Err(Error::ConfigError(_))));

        // A b that does not claim joint concavity is refused even when its
        // key matches the provenance.
        let tagged = untagged.with_provenance(FieldProvenance {
            equation: "synthetic".into(),
            b_key: "liouville".into(),
            f_key: "neg_trace".into(),
        });
        let strict = b_by_key("liouville", BParams { c: Some(1.0), d: Some(1.0), p: None }).unwrap();
        let err = chain_audit(&tagged, &[0.1, 0.0], &[0.4, 0.2], f.as_ref(), strict.as_ref());
        match err {
            Err(Error::ConfigError(msg)) => {
                assert!(msg.contains("joint concavity"), "unexpected message: {msg}")
            }
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn fd_hessian_of_z_matches_the_frame_assembly_flat() {
        // Quadratic data keeps both sides exact up to roundoff over h^2.
        let field = rect_field(1.0, 1.0, 24, |q| -0.5 * (q[0] * q[0] + 2.0 * q[1] * q[1]));
        let x = [0.4, -0.1];
        let y = [-0.3, 0.3];
        let g = pair_geometry(&field, &x, &y).unwrap();
        let xi = [0.6, 0.8];
        // a = b = V xi probes the midpoint form minus the contracted average.
        let a: Vec<f64> = (0..2).map(|i| g.vdiag[i] * xi[i]).collect();
        let fd = hessian_z_fd(&field, &x, &y, &a, &a, 1e-3).unwrap();
        let mut expect = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                expect += g.hess[1][(i, j)] * xi[i] * xi[j]
                    - 0.5 * (g.hess[0][(i, j)] + g.hess[2][(i, j)]) * a[i] * a[j];
            }
        }
        assert!((fd - expect).abs() < 1e-7, "fd {fd} vs assembled {expect}");

        // a = -b = xi kills the midpoint term entirely.
        let minus: Vec<f64> = xi.iter().map(|c| -c).collect();
        let fd2 = hessian_z_fd(&field, &x, &y, &xi, &minus, 1e-3).unwrap();
        let mut expect2 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                expect2 -= 0.5 * (g.hess[0][(i, j)] + g.hess[2][(i, j)]) * xi[i] * xi[j];
            }
        }
        assert!((fd2 - expect2).abs() < 1e-7, "fd {fd2} vs assembled {expect2}");
    }

    #[test]
    fn fd_hessian_of_z_matches_the_frame_assembly_on_the_cap() {
        // u = cos r is the ambient height, with Hessian -cos(r) g, so the
        // assembled forms have closed-form values to sanity-check against.
        let dom = cap_domain(1.2, 1.0);
        let grid = Arc::new(Grid::new(&dom, &[128, 128]).unwrap());
        let field = ScalarField::from_fn(dom.clone(), grid, |q| q[0].cos());
        let x = [0.5, 0.4];
        let y = [0.9, 2.1];
        let g = pair_geometry(&field, &x, &y).unwrap();
        let xi = [1.0, 0.0];
        let a: Vec<f64> = (0..2).map(|i| g.vdiag[i] * xi[i]).collect();
        let fd = hessian_z_fd(&field, &x, &y, &a, &a, 1e-3).unwrap();
        let mut assembled = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                assembled += g.hess[1][(i, j)] * xi[i] * xi[j]
                    - 0.5 * (g.hess[0][(i, j)] + g.hess[2][(i, j)]) * a[i] * a[j];
            }
        }
        assert!((fd - assembled).abs() < 1e-4, "fd {fd} vs assembled {assembled}");

        let seg = GeodesicSegment::connect(
            dom.model(),
            &dom.chart_to_point(&x).unwrap(),
            &dom.chart_to_point(&y).unwrap(),
        )
        .unwrap();
        let rz = dom.point_to_chart(&seg.point_at(0.0))[0];
        let v = g.vdiag[0];
        let analytic = -rz.cos() + 0.5 * (x[0].cos() + y[0].cos()) * v * v;
        assert!((assembled - analytic).abs() < 1e-3, "assembled {assembled} vs analytic {analytic}");

        let minus = [-1.0, 0.0];
        let fd2 = hessian_z_fd(&field, &x, &y, &xi, &minus, 1e-3).unwrap();
        let analytic2 = 0.5 * (x[0].cos() + y[0].cos());
        assert!((fd2 - analytic2).abs() < 1e-3, "fd {fd2} vs analytic {analytic2}");
    }

    #[test]
    fn boundary_margin_splits_torsion_from_constants() {
        let dom = Arc::new(
            DomainSpec::new(vec![DomainBlock::Interval { half_length: 1.0 }]).unwrap(),
        );
        let grid = Arc::new(Grid::new(&dom, &[128]).unwrap());
        let torsion = solve_torsion(&dom, &grid).unwrap();
        // For x = -1 and y -> -1 the two directional derivatives are
        // -u'(-1) and -u'(y), so the margin shrinks like (1+y)^2/2; with the
        // minimum pair separation at 5% of the diameter the worst case is a
        // few 1e-3, well clear of zero but nowhere near order one.
        match boundary_condition_check(&torsion, 32, 0).unwrap() {
            BoundaryStatus::Satisfied { worst_margin } => {
                assert!(worst_margin > 1e-4, "margin {worst_margin}")
            }
            other => panic!("torsion should satisfy the margin test, got {other:?}"),
        }

        let constant = ScalarField::from_fn(dom.clone(), grid.clone(), |_| 1.0);
        match boundary_condition_check(&constant, 32, 0).unwrap() {
            BoundaryStatus::Violated { worst_margin } => assert!(worst_margin.abs() < 1e-6),
            other => panic!("constants have zero margin, got {other:?}"),
        }

        let tagged = ScalarField::from_fn(dom, grid, |q| -q[0] * q[0]).with_provenance(
            FieldProvenance {
                equation: "liouville".into(),
                b_key: "liouville".into(),
                f_key: "neg_trace".into(),
            },
        );
        match boundary_condition_check(&tagged, 8, 0).unwrap() {
            BoundaryStatus::NotChecked { reason } => assert_eq!(reason, "growth_condition"),
            other => panic!("blow-up pipelines skip the margin test, got {other:?}"),
        }
    }

    #[test]
    fn parabolic_scan_gates_on_the_initial_snapshot() {
        let dom = Arc::new(
            DomainSpec::new(vec![DomainBlock::Interval { half_length: 1.0 }]).unwrap(),
        );
        let grid = Arc::new(Grid::new(&dom, &[128]).unwrap());
        let cfg = ScanConfig { n_pairs: 600, seed: 4, ..ScanConfig::default() };

        // -log u0 = beta (1 - x^2) is strictly concave. The amplitude is
        // kept small on purpose: pinned boundary values force
        // (-log u)'' = ((-log u)')^2 >= 0 at the wall for t > 0, a convex
        // collar whose width scales with the boundary slope of -log u. At
        // beta ~ 1e-3 the collar is far thinner than the pair exclusion
        // radius 2h, so every admissible pair averages over the concave
        // bulk; at order-one amplitudes the collar is resolvable and the
        // scan correctly reports a violation near the wall.
        let beta = 1e-3;
        let good = ScalarField::from_fn(dom.clone(), grid.clone(), move |q| {
            (beta * (q[0] * q[0] - 1.0)).exp()
        });
        let series = pde::solve_heat(&good, 0.02, 20, 5).unwrap();
        let report = parabolic_scan(&series, &cfg, Some(PostMap::NegLog)).unwrap();
        assert!(report.initial_certified);
        assert_eq!(report.verdict, Verdict::ConcaveCertifiedNumerically);
        assert!(report.min_over_time >= -1e-6, "min over time {}", report.min_over_time);
        assert!(report.snapshots.len() >= 3);
        for snap in &report.snapshots {
            assert!(matches!(
                snap.report.boundary_condition,
                BoundaryStatus::NotChecked { .. }
            ));
        }

        // -log of exp(-x^2) is x^2: a convexity defect at t = 0, so the
        // preservation claim is withheld.
        let bad = ScalarField::from_fn(dom, grid, |q| (-q[0] * q[0]).exp());
        let series = pde::solve_heat(&bad, 0.02, 10, 5).unwrap();
        let report = parabolic_scan(&series, &cfg, Some(PostMap::NegLog)).unwrap();
        assert!(!report.initial_certified);
        assert_eq!(report.verdict, Verdict::Inconclusive);
        assert_eq!(report.snapshots[0].report.verdict, Verdict::ViolationFound);
    }

    #[test]
    fn jensen_witness_splits_concave_from_saddle_data() {
        let concave = rect_field(1.0, 1.0, 32, |q| -0.5 * (q[0] * q[0] + q[1] * q[1]));
        let w = jensen_witness(&concave, 200, 1, 0.1).unwrap();
        assert!(w <= 1e-8, "concave witness should be nonpositive, got {w}");
        let saddle = rect_field(1.0, 1.0, 32, |q| q[0] * q[0] - q[1] * q[1]);
        let w = jensen_witness(&saddle, 200, 1, 0.1).unwrap();
        assert!(w > 1.0, "saddle witness should be strongly positive, got {w}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn z_is_symmetric_under_swapping_the_pair(
            rx in 0.05f64..1.15,
            tx in 0.0f64..std::f64::consts::TAU,
            ry in 0.05f64..1.15,
            ty in 0.0f64..std::f64::consts::TAU,
        ) {
            let dom = cap_domain(1.2, 1.0);
            let grid = Arc::new(Grid::new(&dom, &[48, 48]).unwrap());
            let field = ScalarField::from_fn(dom, grid, |q| q[0].cos());
            let a = z_value(&field, &[rx, tx], &[ry, ty]).unwrap();
            let b = z_value(&field, &[ry, ty], &[rx, tx]).unwrap();
            prop_assert!((a.z_value - b.z_value).abs() <= 1e-12);
            prop_assert!((a.separation - b.separation).abs() <= 1e-12);
        }
    }
}
