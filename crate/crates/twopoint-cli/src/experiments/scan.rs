//! The concavity scan: quasi-random pair sweep, refinement, and the full
//! diagnostic block at the scan minimum.

use anyhow::{Context, Result};
use serde_json::json;
use twopoint::concavity::{self, BoundaryStatus, Verdict};
use twopoint::pde;

use crate::config::RunConfig;
use crate::report::Check;

use super::{dump_pairs, field_source, postmap_of, scan_config, Experiment, ExperimentOutput};

pub struct Scan;

impl Experiment for Scan {
    fn name(&self) -> &'static str {
        "scan"
    }

    fn describe(&self) -> &'static str {
        "minimize the midpoint gap over sampled pairs and refine the worst"
    }

    fn run(&self, cfg: &RunConfig) -> Result<ExperimentOutput> {
        let knobs = cfg.scan.clone().unwrap_or_default();
        let (domain, _grid, solved) = field_source(cfg)?;
        let field = match postmap_of(&knobs) {
            Some(map) => pde::log_transform(&solved, map)?,
            None => solved.clone(),
        };

        let mut scan_cfg = scan_config(&knobs, cfg.seed);
        // Truncated blow-up solutions are only trusted away from the wall.
        let is_blowup = field
            .provenance()
            .map(|p| p.equation.starts_with("liouville"))
            .unwrap_or(false);
        if is_blowup {
            let collar = pde::trust_collar(&domain, field.grid());
            scan_cfg.interior_margin = scan_cfg.interior_margin.max(collar);
        }

        let report = concavity::scan_min(&field, &scan_cfg)?;

        let mut checks = vec![Check::ge("scan_min_z", report.min_z, -scan_cfg.tol_z)];
        match report.boundary_condition {
            BoundaryStatus::Satisfied { worst_margin }
            | BoundaryStatus::Violated { worst_margin } => {
                checks.push(Check::ge("boundary_margin", worst_margin, 0.0));
            }
            BoundaryStatus::NotChecked { .. } => {}
        }
        checks.push(Check::flag(
            "verdict_conclusive",
            report.verdict != Verdict::Inconclusive,
        ));

        let samples = dump_pairs(&field, knobs.n_pairs.min(5000), cfg.seed)?;
        let payload = json!({
            "scan_config": {
                "n_pairs": scan_cfg.n_pairs,
                "refine_top": scan_cfg.refine_top,
                "exclusion_factor": scan_cfg.exclusion_factor,
                "interior_margin": scan_cfg.interior_margin,
                "tol_z": scan_cfg.tol_z,
            },
            "report": serde_json::to_value(&report).context("report serializes")?,
        });
        Ok(ExperimentOutput {
            checks,
            payload,
            grid: cfg.grid_cells(),
            samples: Some(samples),
            field: Some(field),
        })
    }
}
