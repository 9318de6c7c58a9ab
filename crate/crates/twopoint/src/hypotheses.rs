//! Registries of admissible nonlinearities and sampled hypothesis checks.
//!
//! The semilinear right-hand sides b and the isotropic curvature functions f
//! live behind trait objects registered by key, so configs select them by
//! name. Every b ships with metadata describing the monotonicity and
//! concavity it claims; check_b_properties verifies the claims by sampling
//! and returns explicit witnesses when a claim fails. The f checks are not
//! metadata-driven: all four structural hypotheses are required, and the
//! deliberately broken registry entries exist to prove the checkers can
//! catch violations.
//!
//! Registry entries are position-independent: b depends on its second and
//! third slots only, so the geodesic-midpoint slot of the joint concavity
//! hypothesis drops out of the sampled check.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Relative tolerance for the isotropy identity.
pub const ISOTROPY_TOL: f64 = 1e-10;
/// Slack tolerance in sampled inequality checks.
pub const CHECK_TOL: f64 = 1e-9;
/// Margin demanded of strict decrease over a unit gap.
pub const STRICT_MARGIN: f64 = 1e-8;
/// Eigenvalues may undershoot a closed cone by this much.
pub const CONE_TOL: f64 = 1e-12;

/// Claimed behavior of b in its solution slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotTrend {
    StrictDecreasing,
    NonIncreasing,
}

/// Machine-checkable claims attached to a b entry.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BMetadata {
    pub slot2: SlotTrend,
    pub slot3_nonincreasing: bool,
    pub jointly_concave: bool,
    pub depends_on_gradient: bool,
}

/// Semilinear right-hand side b(u, |∇u|).
pub trait SemilinearB: Send + Sync {
    fn key(&self) -> &'static str;
    fn eval(&self, u: f64, grad_norm: f64) -> f64;
    /// Partial derivative in u, used by Newton solves.
    fn du(&self, u: f64, grad_norm: f64) -> f64;
    fn metadata(&self) -> BMetadata;
}

struct ConstantB {
    c: f64,
}

impl SemilinearB for ConstantB {
    fn key(&self) -> &'static str {
        "constant"
    }
    fn eval(&self, _u: f64, _q: f64) -> f64 {
        self.c
    }
    fn du(&self, _u: f64, _q: f64) -> f64 {
        0.0
    }
    fn metadata(&self) -> BMetadata {
        BMetadata {
            slot2: SlotTrend::NonIncreasing,
            slot3_nonincreasing: true,
            jointly_concave: true,
            depends_on_gradient: false,
        }
    }
}

struct LiouvilleB {
    c: f64,
    d: f64,
}

impl SemilinearB for LiouvilleB {
    fn key(&self) -> &'static str {
        "liouville"
    }
    fn eval(&self, u: f64, _q: f64) -> f64 {
        self.c * (-self.d * u).exp()
    }
    fn du(&self, u: f64, _q: f64) -> f64 {
        -self.c * self.d * (-self.d * u).exp()
    }
    fn metadata(&self) -> BMetadata {
        let strict = self.c > 0.0 && self.d > 0.0;
        BMetadata {
            slot2: if strict { SlotTrend::StrictDecreasing } else { SlotTrend::NonIncreasing },
            slot3_nonincreasing: true,
            // The exponential is convex in u, so the midpoint concavity
            // claim is deliberately not made.
            jointly_concave: !strict,
            depends_on_gradient: false,
        }
    }
}

struct PowerLogB {
    p: f64,
}

impl SemilinearB for PowerLogB {
    fn key(&self) -> &'static str {
        "power_log"
    }
    fn eval(&self, v: f64, _q: f64) -> f64 {
        -((1.0 - self.p) * v).exp()
    }
    fn du(&self, v: f64, _q: f64) -> f64 {
        -(1.0 - self.p) * ((1.0 - self.p) * v).exp()
    }
    fn metadata(&self) -> BMetadata {
        BMetadata {
            slot2: if self.p < 1.0 { SlotTrend::StrictDecreasing } else { SlotTrend::NonIncreasing },
            slot3_nonincreasing: true,
            jointly_concave: true,
            depends_on_gradient: false,
        }
    }
}

struct GradientCoupledB;

impl SemilinearB for GradientCoupledB {
    fn key(&self) -> &'static str {
        "gradient_coupled"
    }
    fn eval(&self, _u: f64, q: f64) -> f64 {
        -q * q
    }
    fn du(&self, _u: f64, _q: f64) -> f64 {
        0.0
    }
    fn metadata(&self) -> BMetadata {
        BMetadata {
            slot2: SlotTrend::NonIncreasing,
            slot3_nonincreasing: true,
            jointly_concave: true,
            depends_on_gradient: true,
        }
    }
}

/// Increasing in u while claiming strict decrease; exists so the checker's
/// witness machinery can be exercised.
struct PlantedIncreasingB;

impl SemilinearB for PlantedIncreasingB {
    fn key(&self) -> &'static str {
        "planted_increasing"
    }
    fn eval(&self, u: f64, _q: f64) -> f64 {
        u
    }
    fn du(&self, _u: f64, _q: f64) -> f64 {
        1.0
    }
    fn metadata(&self) -> BMetadata {
        BMetadata {
            slot2: SlotTrend::StrictDecreasing,
            slot3_nonincreasing: true,
            jointly_concave: true,
            depends_on_gradient: false,
        }
    }
}

/// Optional scalar parameters for registry construction. Supplying a
/// parameter a key does not use is a configuration error.
#[derive(Debug, Clone, Copy, Default)]
pub struct BParams {
    pub c: Option<f64>,
    pub d: Option<f64>,
    pub p: Option<f64>,
}

pub fn b_keys() -> &'static [&'static str] {
    &["constant", "liouville", "power_log", "gradient_coupled", "planted_increasing"]
}

pub fn b_by_key(key: &str, params: BParams) -> Result<Arc<dyn SemilinearB>> {
    let reject_unused = |used_c: bool, used_d: bool, used_p: bool| -> Result<()> {
        if (params.c.is_some() && !used_c)
            || (params.d.is_some() && !used_d)
            || (params.p.is_some() && !used_p)
        {
            return Err(Error::ConfigError(format!("unused parameter for b key {key}")));
        }
        Ok(())
    };
    match key {
        "constant" => {
            reject_unused(true, false, false)?;
            Ok(Arc::new(ConstantB { c: params.c.unwrap_or(1.0) }))
        }
        "liouville" => {
            reject_unused(true, true, false)?;
            let c = params.c.unwrap_or(1.0);
            let d = params.d.unwrap_or(1.0);
            if c < 0.0 || d < 0.0 {
                return Err(Error::ConfigError("liouville needs c, d >= 0".into()));
            }
            Ok(Arc::new(LiouvilleB { c, d }))
        }
        "power_log" => {
            reject_unused(false, false, true)?;
            let p = params.p.unwrap_or(0.5);
            if p > 1.0 {
                return Err(Error::ConfigError(
                    "power_log needs p <= 1 for a decreasing entry".into(),
                ));
            }
            Ok(Arc::new(PowerLogB { p }))
        }
        "gradient_coupled" => {
            reject_unused(false, false, false)?;
            Ok(Arc::new(GradientCoupledB))
        }
        "planted_increasing" => {
            reject_unused(false, false, false)?;
            Ok(Arc::new(PlantedIncreasingB))
        }
        other => Err(Error::ConfigError(format!("unknown b key {other}"))),
    }
}

/// Eigenvalue cone the matrix slot of f must respect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Cone {
    All,
    Positive,
}

impl Cone {
    pub fn label(&self) -> &'static str {
        match self {
            Cone::All => "all",
            Cone::Positive => "positive",
        }
    }
}

/// Isotropic function of (p, W) through the ascending eigenvalues of W.
pub trait IsotropicF: Send + Sync {
    fn key(&self) -> &'static str;
    fn cone(&self) -> Cone;
    /// f̃(p, w) with w the eigenvalues of the matrix slot in ascending order.
    fn eval_ordered(&self, p: f64, eigs_ascending: &[f64]) -> f64;
}

struct NegTraceF {
    cone: Cone,
}

impl IsotropicF for NegTraceF {
    fn key(&self) -> &'static str {
        "neg_trace"
    }
    fn cone(&self) -> Cone {
        self.cone
    }
    fn eval_ordered(&self, _p: f64, eigs: &[f64]) -> f64 {
        eigs.iter().sum()
    }
}

struct TraceExpF {
    cone: Cone,
}

impl IsotropicF for TraceExpF {
    fn key(&self) -> &'static str {
        "trace_exp"
    }
    fn cone(&self) -> Cone {
        self.cone
    }
    fn eval_ordered(&self, _p: f64, eigs: &[f64]) -> f64 {
        eigs.iter().map(|w| w.exp()).sum()
    }
}

struct WeightedTraceF {
    lambda: Vec<f64>,
    cone: Cone,
}

impl IsotropicF for WeightedTraceF {
    fn key(&self) -> &'static str {
        "weighted_trace"
    }
    fn cone(&self) -> Cone {
        self.cone
    }
    fn eval_ordered(&self, _p: f64, eigs: &[f64]) -> f64 {
        assert_eq!(eigs.len(), self.lambda.len(), "weight count must match dimension");
        self.lambda.iter().zip(eigs).map(|(l, w)| l * w).sum()
    }
}

/// Pairs the weights in reverse, which breaks midpoint convexity; exists so
/// the checker's witness machinery can be exercised.
struct PlantedDescendingF {
    lambda: Vec<f64>,
}

impl IsotropicF for PlantedDescendingF {
    fn key(&self) -> &'static str {
        "planted_descending"
    }
    fn cone(&self) -> Cone {
        Cone::All
    }
    fn eval_ordered(&self, _p: f64, eigs: &[f64]) -> f64 {
        assert_eq!(eigs.len(), self.lambda.len(), "weight count must match dimension");
        self.lambda.iter().rev().zip(eigs).map(|(l, w)| l * w).sum()
    }
}

pub fn f_keys() -> &'static [&'static str] {
    &["neg_trace", "trace_exp", "weighted_trace", "planted_descending"]
}

pub fn f_by_key(
    key: &str,
    lambda: Option<Vec<f64>>,
    cone: Cone,
) -> Result<Arc<dyn IsotropicF>> {
    let need_lambda = matches!(key, "weighted_trace" | "planted_descending");
    if lambda.is_some() != need_lambda {
        return Err(Error::ConfigError(format!(
            "f key {key} {} a weight vector",
            if need_lambda { "requires" } else { "does not take" }
        )));
    }
    if let Some(l) = &lambda {
        if l.is_empty() || l.windows(2).any(|w| w[1] < w[0]) || l[0] < 0.0 {
            return Err(Error::ConfigError(
                "weights must be nonnegative and ascending".into(),
            ));
        }
    }
    match key {
        "neg_trace" => Ok(Arc::new(NegTraceF { cone })),
        "trace_exp" => Ok(Arc::new(TraceExpF { cone })),
        "weighted_trace" => Ok(Arc::new(WeightedTraceF { lambda: lambda.unwrap(), cone })),
        "planted_descending" => {
            if cone != Cone::All {
                return Err(Error::ConfigError("planted_descending uses the full cone".into()));
            }
            Ok(Arc::new(PlantedDescendingF { lambda: lambda.unwrap() }))
        }
        other => Err(Error::ConfigError(format!("unknown f key {other}"))),
    }
}

/// Ascending eigenvalues of a symmetric matrix.
fn ascending_eigs(w: &DMatrix<f64>) -> Result<Vec<f64>> {
    let asym = (w - w.transpose()).amax();
    if asym > 1e-9 * (1.0 + w.amax()) {
        return Err(Error::ConfigError(format!("matrix slot asymmetric by {asym}")));
    }
    let sym = 0.5 * (w + w.transpose());
    let mut eigs: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().cloned().collect();
    eigs.sort_by(f64::total_cmp);
    Ok(eigs)
}

/// Apply f to (p, W): eigendecompose, sort ascending, check the cone, then
/// evaluate the ordered form.
pub fn evaluate_isotropic_f(f: &dyn IsotropicF, p: f64, w: &DMatrix<f64>) -> Result<f64> {
    if p < 0.0 {
        return Err(Error::DomainViolation(format!("first slot {p} must be nonnegative")));
    }
    let eigs = ascending_eigs(w)?;
    if f.cone() == Cone::Positive {
        for &e in &eigs {
            if e < -CONE_TOL {
                return Err(Error::ConeViolation { eigenvalue: e, cone: f.cone().label().into() });
            }
        }
    }
    Ok(f.eval_ordered(p, &eigs))
}

/// One failed sampled check with the data that broke it.
#[derive(Debug, Clone, Serialize)]
pub struct Witness {
    pub check: String,
    pub detail: String,
}

/// Outcome of a hypothesis check run.
#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport {
    pub key: String,
    pub passed: bool,
    pub witnesses: Vec<Witness>,
}

fn random_orthogonal<R: Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
    m.qr().q()
}

fn random_in_cone<R: Rng>(n: usize, cone: Cone, rng: &mut R) -> DMatrix<f64> {
    let lo = match cone {
        Cone::All => -2.0,
        Cone::Positive => 0.0,
    };
    let d = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            lo + rng.gen::<f64>() * (2.0 - lo)
        } else {
            0.0
        }
    });
    let q = random_orthogonal(n, rng);
    let w = q.transpose() * d * &q;
    0.5 * (&w + w.transpose())
}

/// Sampled verification of the four structural hypotheses on f: isotropy,
/// monotonicity in the scalar slot, eigenvalue-wise monotonicity, and
/// midpoint convexity in the matrix slot.
pub fn check_f_properties<R: Rng>(
    f: &dyn IsotropicF,
    dim: usize,
    n_samples: usize,
    rng: &mut R,
) -> Result<HypothesisReport> {
    let mut witnesses = Vec::new();

    'isotropy: for _ in 0..n_samples {
        let w = random_in_cone(dim, f.cone(), rng);
        let q = random_orthogonal(dim, rng);
        let conj = q.transpose() * &w * &q;
        let a = evaluate_isotropic_f(f, 1.0, &w)?;
        let b = evaluate_isotropic_f(f, 1.0, &conj)?;
        if (a - b).abs() > ISOTROPY_TOL * (1.0 + a.abs()) {
            witnesses.push(Witness {
                check: "isotropy".into(),
                detail: format!("f(W) = {a} but f(QtWQ) = {b}"),
            });
            break 'isotropy;
        }
    }

    'mono_p: for _ in 0..n_samples {
        let w = random_in_cone(dim, f.cone(), rng);
        let p1 = rng.gen::<f64>() * 3.0;
        let p2 = p1 + rng.gen::<f64>() * 2.0;
        let a = evaluate_isotropic_f(f, p1, &w)?;
        let b = evaluate_isotropic_f(f, p2, &w)?;
        if a > b + CHECK_TOL {
            witnesses.push(Witness {
                check: "monotone_p".into(),
                detail: format!("f({p1}, W) = {a} exceeds f({p2}, W) = {b}"),
            });
            break 'mono_p;
        }
    }

    let lo = match f.cone() {
        Cone::All => -2.0,
        Cone::Positive => 0.0,
    };
    'mono_eigs: for _ in 0..n_samples {
        let mut k: Vec<f64> = (0..dim).map(|_| lo + rng.gen::<f64>() * (2.0 - lo)).collect();
        k.sort_by(f64::total_cmp);
        let mut l: Vec<f64> = k.iter().map(|&v| v + rng.gen::<f64>()).collect();
        l.sort_by(f64::total_cmp);
        let a = f.eval_ordered(1.0, &k);
        let b = f.eval_ordered(1.0, &l);
        if a > b + CHECK_TOL {
            witnesses.push(Witness {
                check: "monotone_eigs".into(),
                detail: format!("f at {k:?} is {a}, above f at dominating {l:?} = {b}"),
            });
            break 'mono_eigs;
        }
    }

    'convex: for _ in 0..n_samples {
        let a = random_in_cone(dim, f.cone(), rng);
        let b = random_in_cone(dim, f.cone(), rng);
        let mid = 0.5 * (&a + &b);
        let fm = evaluate_isotropic_f(f, 1.0, &mid)?;
        let fa = evaluate_isotropic_f(f, 1.0, &a)?;
        let fb = evaluate_isotropic_f(f, 1.0, &b)?;
        if fm > 0.5 * (fa + fb) + CHECK_TOL {
            witnesses.push(Witness {
                check: "midpoint_convex".into(),
                detail: format!(
                    "f(mid) = {fm} exceeds mean {} for A = {:?}, B = {:?}",
                    0.5 * (fa + fb),
                    a.diagonal().as_slice(),
                    b.diagonal().as_slice()
                ),
            });
            break 'convex;
        }
    }

    Ok(HypothesisReport { key: f.key().into(), passed: witnesses.is_empty(), witnesses })
}

/// Sampled verification that a b entry behaves as its metadata claims.
pub fn check_b_properties<R: Rng>(
    b: &dyn SemilinearB,
    n_samples: usize,
    rng: &mut R,
) -> HypothesisReport {
    let meta = b.metadata();
    let mut witnesses = Vec::new();

    'slot2: for _ in 0..n_samples {
        let u1 = rng.gen::<f64>() * 6.0 - 3.0;
        let gap = 0.1 + rng.gen::<f64>() * 2.0;
        let u2 = u1 + gap;
        let q = rng.gen::<f64>() * 3.0;
        let b1 = b.eval(u1, q);
        let b2 = b.eval(u2, q);
        let bad = match meta.slot2 {
            SlotTrend::StrictDecreasing => b1 - b2 < STRICT_MARGIN * gap,
            SlotTrend::NonIncreasing => b2 > b1 + CHECK_TOL,
        };
        if bad {
            witnesses.push(Witness {
                check: "slot2_trend".into(),
                detail: format!("b({u1}, {q}) = {b1} vs b({u2}, {q}) = {b2}"),
            });
            break 'slot2;
        }
    }

    if meta.slot3_nonincreasing {
        'slot3: for _ in 0..n_samples {
            let u = rng.gen::<f64>() * 6.0 - 3.0;
            let q1 = rng.gen::<f64>() * 3.0;
            let q2 = q1 + 0.1 + rng.gen::<f64>() * 2.0;
            let b1 = b.eval(u, q1);
            let b2 = b.eval(u, q2);
            if b2 > b1 + CHECK_TOL {
                witnesses.push(Witness {
                    check: "slot3_nonincreasing".into(),
                    detail: format!("b({u}, {q1}) = {b1} vs b({u}, {q2}) = {b2}"),
                });
                break 'slot3;
            }
        }
    }

    if meta.jointly_concave {
        'concave: for _ in 0..n_samples {
            let u1 = rng.gen::<f64>() * 6.0 - 3.0;
            let u2 = rng.gen::<f64>() * 6.0 - 3.0;
            let q = rng.gen::<f64>() * 3.0;
            let bm = b.eval(0.5 * (u1 + u2), q);
            let mean = 0.5 * (b.eval(u1, q) + b.eval(u2, q));
            if bm < mean - CHECK_TOL {
                witnesses.push(Witness {
                    check: "midpoint_concave".into(),
                    detail: format!("b(mid) = {bm} under mean {mean} for u1 = {u1}, u2 = {u2}"),
                });
                break 'concave;
            }
        }
    }

    HypothesisReport { key: b.key().into(), passed: witnesses.is_empty(), witnesses }
}
