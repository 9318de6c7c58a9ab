//! Experiment registry: each verb the CLI accepts is a boxed strategy
//! looked up by name, so the dispatch table and the help text stay in one
//! place.

mod chain_audit;
mod check_hypotheses;
mod parabolic_scan;
mod scan;
mod solve;
mod verify_geometry;
mod verify_jacobi;
mod verify_kfields;

use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use rand::Rng;
use twopoint::concavity::{ScanConfig, TwoPointSample};
use twopoint::domain::{DomainSpec, Grid};
use twopoint::field::{PostMap, ScalarField};
use twopoint::hypotheses::{b_by_key, BParams, SemilinearB};
use twopoint::manifold::{Factor, ManifoldModel, Point};
use twopoint::pde;
use twopoint::sampling::PairSampler;

use crate::config::{BConfig, RunConfig, ScanKnobs};
use crate::report::{Check, SampleRow};

pub struct ExperimentOutput {
    pub checks: Vec<Check>,
    pub payload: serde_json::Value,
    pub grid: Vec<usize>,
    pub samples: Option<(usize, Vec<SampleRow>)>,
    pub field: Option<ScalarField>,
}

impl ExperimentOutput {
    pub fn bare(checks: Vec<Check>, payload: serde_json::Value) -> ExperimentOutput {
        ExperimentOutput { checks, payload, grid: Vec::new(), samples: None, field: None }
    }
}

pub trait Experiment: Sync {
    fn name(&self) -> &'static str;
    fn describe(&self) -> &'static str;
    fn run(&self, cfg: &RunConfig) -> Result<ExperimentOutput>;
}

pub fn registry() -> Vec<Box<dyn Experiment>> {
    vec![
        Box::new(verify_geometry::VerifyGeometry),
        Box::new(verify_jacobi::VerifyJacobi),
        Box::new(verify_kfields::VerifyKFields),
        Box::new(solve::Solve),
        Box::new(scan::Scan),
        Box::new(parabolic_scan::ParabolicScan),
        Box::new(chain_audit::ChainAudit),
        Box::new(check_hypotheses::CheckHypotheses),
    ]
}

pub fn by_name(name: &str) -> Result<Box<dyn Experiment>> {
    let mut known = Vec::new();
    for exp in registry() {
        if exp.name() == name {
            return Ok(exp);
        }
        known.push(exp.name());
    }
    Err(anyhow!("unknown experiment {name}; available: {}", known.join(", ")))
}

/// Random point with every factor drawn separately: a box for Euclidean
/// coordinates, rejection-normalized directions for spheres.
pub(crate) fn random_point<R: Rng>(model: &ManifoldModel, rng: &mut R) -> Point {
    let mut blocks = Vec::new();
    for factor in model.factors() {
        match *factor {
            Factor::Euclidean { dim } => {
                blocks.push((0..dim).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect());
            }
            Factor::Sphere { dim, .. } => loop {
                let v: Vec<f64> =
                    (0..=dim).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
                let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
                if n > 0.3 && n < 1.0 {
                    blocks.push(v.into_iter().map(|c| c / n).collect());
                    break;
                }
            },
        }
    }
    model.point(blocks).expect("sampled blocks are on the factors")
}

/// Pair inside the unique-geodesic radius and away from the diagonal.
pub(crate) fn random_pair<R: Rng>(model: &ManifoldModel, rng: &mut R) -> (Point, Point) {
    loop {
        let x = random_point(model, rng);
        let y = random_point(model, rng);
        let d = model.distance(&x, &y);
        if d > 0.05 && d < 0.9 * model.distance_bound() {
            return (x, y);
        }
    }
}

pub(crate) fn b_from_config(
    spec: Option<&BConfig>,
    default_key: &str,
) -> Result<Arc<dyn SemilinearB>> {
    let (key, params) = match spec {
        Some(b) => (b.key.as_str(), BParams { c: b.c, d: b.d, p: b.p }),
        None => (default_key, BParams::default()),
    };
    Ok(b_by_key(key, params)?)
}

/// Build the scalar field a scan-type experiment works on.
pub(crate) fn field_source(cfg: &RunConfig) -> Result<(Arc<DomainSpec>, Arc<Grid>, ScalarField)> {
    let eq = cfg.equation.as_ref().context("this experiment needs an [equation] table")?;
    let domain = cfg.build_domain()?;
    let grid = cfg.build_grid(&domain)?;
    let richardson = cfg.grid.as_ref().map(|g| g.richardson).unwrap_or(false);
    let cells = cfg.grid_cells();
    let field = match eq.key.as_str() {
        "torsion" => {
            if richardson {
                pde::richardson_refine(&domain, &cells, |d, g| pde::solve_torsion(d, g))?
            } else {
                pde::solve_torsion(&domain, &grid)?
            }
        }
        "liouville" => {
            let b = b_from_config(eq.b.as_ref(), "liouville")?;
            let depth = eq.boundary_depth.unwrap_or(15.0);
            if richardson {
                pde::richardson_refine(&domain, &cells, |d, g| {
                    pde::solve_liouville(d, g, &b, depth)
                })?
            } else {
                pde::solve_liouville(&domain, &grid, &b, depth)?
            }
        }
        "saddle" => {
            if domain.dim() != 2 {
                bail!("the saddle fixture needs a two-dimensional domain");
            }
            ScalarField::from_fn(domain.clone(), grid.clone(), |q| q[0] * q[0] - q[1] * q[1])
        }
        "quartic_saddle" => {
            if domain.dim() != 2 {
                bail!("the quartic saddle fixture needs a two-dimensional domain");
            }
            ScalarField::from_fn(domain.clone(), grid.clone(), |q| {
                q[0] * q[0] - q[0].powi(4) - 0.5 * q[1] * q[1]
            })
        }
        "heat" => bail!("heat runs through the solve or parabolic-scan experiments"),
        other => bail!(
            "unknown equation key {other}; available: torsion, liouville, saddle, quartic_saddle"
        ),
    };
    Ok((domain, grid, field))
}

pub(crate) fn scan_config(knobs: &ScanKnobs, seed: u64) -> ScanConfig {
    ScanConfig {
        n_pairs: knobs.n_pairs,
        seed,
        tol_z: knobs.tol_z,
        exclusion_factor: knobs.exclusion_factor,
        refine_top: knobs.refine_top,
        interior_margin: knobs.interior_margin,
        boundary_pairs: knobs.boundary_pairs,
    }
}

pub(crate) fn postmap_of(knobs: &ScanKnobs) -> Option<PostMap> {
    match knobs.postmap.as_deref() {
        Some("neg_log") => Some(PostMap::NegLog),
        Some("log") => Some(PostMap::Log),
        _ => None,
    }
}

pub(crate) fn sample_to_row(s: &TwoPointSample) -> SampleRow {
    SampleRow {
        x: s.x.clone(),
        y: s.y.clone(),
        z: s.z.clone(),
        z_value: s.z_value,
        separation: s.separation,
        classification: format!("{:?}", s.classification).to_lowercase(),
    }
}

/// Deterministic pair dump for plotting: the same quasi-random stream the
/// scanner uses, evaluated without refinement.
pub(crate) fn dump_pairs(
    field: &ScalarField,
    n_pairs: usize,
    seed: u64,
) -> Result<(usize, Vec<SampleRow>)> {
    let domain = field.domain();
    let mut sampler = PairSampler::new(domain.clone(), seed)?;
    let mut rows = Vec::new();
    for _ in 0..n_pairs {
        let (x, y) = sampler.next_pair();
        if let Ok(sample) = twopoint::concavity::z_value(field, &x, &y) {
            rows.push(sample_to_row(&sample));
        }
    }
    Ok((domain.dim(), rows))
}
