//! The solver experiment: runs the configured equation, measures it against
//! whatever independent reference the domain admits, and optionally runs
//! the perturbation ladder and the time-rescaling audit on top.

use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde_json::json;
use twopoint::domain::{DomainBlock, DomainSpec, Grid};
use twopoint::field::{ScalarField, TimeSeriesField};
use twopoint::pde;
use twopoint::sampling::seeded_rng;

use crate::config::{EquationConfig, InitialData, RunConfig};
use crate::report::Check;

use super::{b_from_config, random_point, Experiment, ExperimentOutput};

const CONVERGENCE_ORDER_MIN: f64 = 1.9;
const SHOOTING_TOL: f64 = 1e-6;
const SWEEP_TOL: f64 = 1e-4;
const BOUNDS_TOL: f64 = 1e-10;
const PERTURBATION_SPREAD_MAX: f64 = 2.0;
const EVANS_FACTOR_MAX: f64 = 5.0;
const EVANS_PROBES: usize = 40;

pub struct Solve;

/// Concave bump vanishing on the wall, peak value one, summed over blocks.
pub(crate) fn concave_unit_bump(
    domain: &Arc<DomainSpec>,
) -> Result<impl Fn(&[f64]) -> f64 + Send + Sync + 'static> {
    #[derive(Clone, Copy)]
    enum Piece {
        Interval { axis: usize, half: f64 },
        RectAxis { axis: usize, half: f64 },
        Disk { axis: usize, radius: f64 },
        Cap { axis: usize, radius: f64, kappa: f64 },
    }
    let mut pieces = Vec::new();
    let mut axis = 0usize;
    for block in domain.blocks() {
        match *block {
            DomainBlock::Interval { half_length } => {
                pieces.push(Piece::Interval { axis, half: half_length });
                axis += 1;
            }
            DomainBlock::Rectangle { half_x, half_y } => {
                pieces.push(Piece::RectAxis { axis, half: half_x });
                pieces.push(Piece::RectAxis { axis: axis + 1, half: half_y });
                axis += 2;
            }
            DomainBlock::Disk { radius } => {
                pieces.push(Piece::Disk { axis, radius });
                axis += 2;
            }
            DomainBlock::Cap { radius, kappa, .. } => {
                if radius * kappa.sqrt() > std::f64::consts::FRAC_PI_2 {
                    bail!("the cap bump is concave only up to a quarter circle");
                }
                pieces.push(Piece::Cap { axis, radius, kappa });
                axis += 2;
            }
        }
    }
    let norm = pieces.len() as f64;
    Ok(move |q: &[f64]| {
        let mut acc = 0.0;
        for p in &pieces {
            acc += match *p {
                Piece::Interval { axis, half } | Piece::RectAxis { axis, half } => {
                    1.0 - (q[axis] / half).powi(2)
                }
                Piece::Disk { axis, radius } => 1.0 - (q[axis] / radius).powi(2),
                Piece::Cap { axis, radius, kappa } => {
                    let s = kappa.sqrt();
                    ((s * q[axis]).cos() - (s * radius).cos()) / (1.0 - (s * radius).cos())
                }
            };
        }
        acc / norm
    })
}

pub(crate) fn initial_field(
    domain: &Arc<DomainSpec>,
    grid: &Arc<Grid>,
    data: &InitialData,
) -> Result<ScalarField> {
    Ok(match *data {
        InitialData::Constant { value } => {
            if !(value > 0.0) {
                bail!("constant initial data must be positive");
            }
            ScalarField::from_fn(domain.clone(), grid.clone(), move |_| value)
        }
        InitialData::LogConcave { amplitude } => {
            let bump = concave_unit_bump(domain)?;
            ScalarField::from_fn(domain.clone(), grid.clone(), move |q| {
                (-amplitude * bump(q)).exp()
            })
        }
        InitialData::ConvexDefect { amplitude } => {
            let bump = concave_unit_bump(domain)?;
            ScalarField::from_fn(domain.clone(), grid.clone(), move |q| {
                (amplitude * bump(q)).exp()
            })
        }
    })
}

/// Analytic torsion profile for single-block domains, if one exists.
fn torsion_reference(domain: &DomainSpec) -> Option<Box<dyn Fn(&[f64]) -> f64 + Send + Sync>> {
    let blocks = domain.blocks();
    if blocks.len() != 1 {
        return None;
    }
    match blocks[0] {
        DomainBlock::Interval { half_length } => {
            Some(Box::new(move |q| pde::torsion_interval_profile(q[0], half_length)))
        }
        DomainBlock::Disk { radius } => {
            Some(Box::new(move |q| pde::torsion_disk_profile(q[0], radius)))
        }
        DomainBlock::Cap { radius, kappa, .. } => {
            Some(Box::new(move |q| pde::torsion_cap_profile(q[0], radius, kappa)))
        }
        DomainBlock::Rectangle { .. } => None,
    }
}

fn node_error_sup(field: &ScalarField, exact: &dyn Fn(&[f64]) -> f64) -> f64 {
    let grid = field.grid();
    let mut sup = 0.0f64;
    for lin in 0..grid.n_nodes() {
        let q = grid.chart_of(&grid.unlin(lin));
        sup = sup.max((field.values()[lin] - exact(&q)).abs());
    }
    sup
}

fn run_torsion(
    cfg: &RunConfig,
    eq: &EquationConfig,
    domain: &Arc<DomainSpec>,
    grid: &Arc<Grid>,
    checks: &mut Vec<Check>,
    payload: &mut serde_json::Map<String, serde_json::Value>,
) -> Result<ScalarField> {
    let field = pde::solve_torsion(domain, grid)?;

    let interior_min = {
        let g = field.grid();
        let mut m = f64::INFINITY;
        for lin in 0..g.n_nodes() {
            let q = g.chart_of(&g.unlin(lin));
            if !domain.is_boundary(&q) {
                m = m.min(field.values()[lin]);
            }
        }
        m
    };
    checks.push(Check::ge("interior_positivity_min", interior_min, 0.0));

    // Convergence order against the reference: exact profile when the
    // domain has one, otherwise the doubled grid stands in for it.
    let cells = cfg.grid_cells();
    let coarse_cells: Vec<usize> = cells.iter().map(|c| c / 2).collect();
    let coarse_grid = Arc::new(Grid::new(domain, &coarse_cells)?);
    let coarse = pde::solve_torsion(domain, &coarse_grid)?;
    let order = match torsion_reference(domain) {
        Some(exact) => {
            let e_f = node_error_sup(&field, exact.as_ref());
            let e_c = node_error_sup(&coarse, exact.as_ref());
            payload.insert("analytic_error".into(), json!([e_c, e_f]));
            (e_c / e_f).log2()
        }
        None => {
            let fine_cells: Vec<usize> = cells.iter().map(|c| c * 2).collect();
            let fine_grid = Arc::new(Grid::new(domain, &fine_cells)?);
            let fine = pde::solve_torsion(domain, &fine_grid)?;
            let diff = |a: &ScalarField, b: &ScalarField| -> f64 {
                let ga = a.grid();
                let mut sup = 0.0f64;
                for lin in 0..ga.n_nodes() {
                    let q = ga.chart_of(&ga.unlin(lin));
                    sup = sup.max((a.values()[lin] - b.eval(&q)).abs());
                }
                sup
            };
            let d0 = diff(&coarse, &field);
            let d1 = diff(&field, &fine);
            payload.insert("two_grid_differences".into(), json!([d0, d1]));
            (d0 / d1).log2()
        }
    };
    checks.push(Check::ge("convergence_order", order, CONVERGENCE_ORDER_MIN));

    if let Some(pert) = &eq.perturbation {
        let b = b_from_config(eq.b.as_ref(), "constant")?;
        let mut ratios = Vec::new();
        for &eps in &pert.epsilons {
            let audit = pde::perturbed_solve(&field, &b, eps, pert.collar_cells)?;
            ratios.push(audit.sup_diff / eps);
        }
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        payload.insert("perturbation_ratios".into(), json!(ratios));
        checks.push(Check::le(
            "perturbation_ratio_spread",
            if lo > 0.0 { hi / lo } else { f64::INFINITY },
            PERTURBATION_SPREAD_MAX,
        ));
    }
    Ok(field)
}

fn run_liouville(
    cfg: &RunConfig,
    eq: &EquationConfig,
    domain: &Arc<DomainSpec>,
    grid: &Arc<Grid>,
    checks: &mut Vec<Check>,
    payload: &mut serde_json::Map<String, serde_json::Value>,
) -> Result<ScalarField> {
    let b = b_from_config(eq.b.as_ref(), "liouville")?;
    let depth = eq.boundary_depth.unwrap_or(15.0);
    let richardson = cfg.grid.as_ref().map(|g| g.richardson).unwrap_or(false);
    let cells = cfg.grid_cells();
    let solve_at = |d: &Arc<DomainSpec>, g: &Arc<Grid>, depth: f64| {
        pde::solve_liouville(d, g, &b, depth)
    };
    let field = if richardson {
        pde::richardson_refine(domain, &cells, |d, g| solve_at(d, g, depth))?
    } else {
        solve_at(domain, grid, depth)?
    };

    // A one-dimensional run has the shooting oracle as an independent
    // reference on the inner 80% of the interval.
    if let [DomainBlock::Interval { half_length }] = domain.blocks() {
        let l = *half_length;
        let n = cells[0];
        let oracle = pde::liouville_shooting_profile(l, depth, n)?;
        let g = field.grid();
        let mut worst = 0.0f64;
        for i in 0..=n {
            let x = g.node_coord(0, i);
            if x.abs() <= 0.8 * l {
                worst = worst.max((field.values()[i] - oracle[i]).abs());
            }
        }
        checks.push(Check::le("shooting_oracle_inner_sup", worst, SHOOTING_TOL));
    }

    if let Some(sweep) = &eq.depth_sweep {
        if sweep.len() < 2 {
            bail!("equation.depth_sweep needs at least two depths");
        }
        // Inner region: nodes at least 20% of the diameter from the wall.
        let margin = 0.2 * domain.diameter();
        let mut fields = Vec::new();
        for &b_depth in sweep {
            fields.push(if richardson {
                pde::richardson_refine(domain, &cells, |d, g| solve_at(d, g, b_depth))?
            } else {
                solve_at(domain, grid, b_depth)?
            });
        }
        let g = fields[0].grid().clone();
        let mut drift = 0.0f64;
        for lin in 0..g.n_nodes() {
            let q = g.chart_of(&g.unlin(lin));
            if domain.boundary_distance(&q) >= margin {
                for w in fields.windows(2) {
                    drift = drift.max((w[0].values()[lin] - w[1].values()[lin]).abs());
                }
            }
        }
        payload.insert("depth_sweep".into(), json!(sweep));
        checks.push(Check::le("depth_sweep_inner_drift", drift, SWEEP_TOL));
    }
    Ok(field)
}

fn run_heat(
    eq: &EquationConfig,
    domain: &Arc<DomainSpec>,
    grid: &Arc<Grid>,
    seed: u64,
    checks: &mut Vec<Check>,
    payload: &mut serde_json::Map<String, serde_json::Value>,
) -> Result<(ScalarField, TimeSeriesField)> {
    let heat = eq.heat.as_ref().context("equation.heat table required for key = \"heat\"")?;
    let u0 = initial_field(domain, grid, &heat.initial)?;
    let series = pde::solve_heat(&u0, heat.t_end, heat.steps, heat.record_stride)?;

    let lo0 = u0.values().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi0 = u0.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut drift = 0.0f64;
    for i in 0..series.len() {
        let snap = series.snapshot(i)?;
        for &v in snap.values() {
            drift = drift.max((lo0 - v).max(v - hi0));
        }
    }
    checks.push(Check::le("max_principle_drift", drift.max(0.0), BOUNDS_TOL));
    payload.insert("snapshots".into(), json!(series.times()));

    if let Some(evans) = &eq.evans {
        let transformed = pde::evans_transform(&series, evans.epsilon)?;
        let mut rng = seeded_rng(seed, 9);
        let model = domain.model().clone();
        let mut charts = Vec::new();
        while charts.len() < EVANS_PROBES {
            let p = random_point(&model, &mut rng);
            let q = domain.point_to_chart(&p);
            if domain.contains(&q) && domain.boundary_distance(&q) > 0.1 * domain.diameter() {
                charts.push(q);
            }
        }
        let (raw, rescaled) = pde::evans_residual_audit(&series, &transformed, evans.epsilon, &charts)?;
        payload.insert("evans_residuals".into(), json!([raw, rescaled]));
        checks.push(Check::le(
            "evans_residual_factor",
            if raw > 0.0 { rescaled / raw } else { f64::INFINITY },
            EVANS_FACTOR_MAX,
        ));
    }

    let last = series.snapshot(series.len() - 1)?;
    Ok((last, series))
}

impl Experiment for Solve {
    fn name(&self) -> &'static str {
        "solve"
    }

    fn describe(&self) -> &'static str {
        "run one equation and hold it against its independent references"
    }

    fn run(&self, cfg: &RunConfig) -> Result<ExperimentOutput> {
        let eq = cfg.equation.as_ref().context("the solve experiment needs [equation]")?;
        let domain = cfg.build_domain()?;
        let grid = cfg.build_grid(&domain)?;
        let mut checks = Vec::new();
        let mut payload = serde_json::Map::new();
        payload.insert("equation".into(), json!(eq.key));

        let field = match eq.key.as_str() {
            "torsion" => run_torsion(cfg, eq, &domain, &grid, &mut checks, &mut payload)?,
            "liouville" => run_liouville(cfg, eq, &domain, &grid, &mut checks, &mut payload)?,
            "heat" => run_heat(eq, &domain, &grid, cfg.seed, &mut checks, &mut payload)?.0,
            other => bail!("unknown equation key {other}; available: torsion, liouville, heat"),
        };

        Ok(ExperimentOutput {
            checks,
            payload: serde_json::Value::Object(payload),
            grid: cfg.grid_cells(),
            samples: None,
            field: Some(field),
        })
    }
}
