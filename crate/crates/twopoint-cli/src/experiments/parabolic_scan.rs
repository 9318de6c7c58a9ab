//! Per-snapshot concavity scans over a heat evolution, gated on the initial
//! snapshot actually certifying.

use anyhow::{Context, Result};
use serde_json::json;
use twopoint::concavity::{self, Verdict};
use twopoint::field::PostMap;
use twopoint::pde;

use crate::config::RunConfig;
use crate::report::Check;

use super::{dump_pairs, postmap_of, scan_config, Experiment, ExperimentOutput};
use super::solve::initial_field;

pub struct ParabolicScan;

impl Experiment for ParabolicScan {
    fn name(&self) -> &'static str {
        "parabolic-scan"
    }

    fn describe(&self) -> &'static str {
        "scan every evolution snapshot; claim preservation only when t = 0 certifies"
    }

    fn run(&self, cfg: &RunConfig) -> Result<ExperimentOutput> {
        let eq = cfg.equation.as_ref().context("parabolic-scan needs [equation]")?;
        if eq.key != "heat" {
            anyhow::bail!("parabolic-scan runs the heat pipeline; set equation.key = \"heat\"");
        }
        let heat = eq.heat.as_ref().context("equation.heat table required")?;
        let domain = cfg.build_domain()?;
        let grid = cfg.build_grid(&domain)?;
        let knobs = cfg.scan.clone().unwrap_or_default();

        let u0 = initial_field(&domain, &grid, &heat.initial)?;
        let series = pde::solve_heat(&u0, heat.t_end, heat.steps, heat.record_stride)?;

        // The scan watches -log u by default: the preservation claim lives
        // on the transformed field.
        let map = postmap_of(&knobs).or(Some(PostMap::NegLog));
        let scan_cfg = scan_config(&knobs, cfg.seed);
        let report = concavity::parabolic_scan(&series, &scan_cfg, map)?;

        let checks = vec![
            Check::flag("initial_snapshot_certified", report.initial_certified),
            Check::ge("preservation_min_over_time", report.min_over_time, -scan_cfg.tol_z),
            Check::flag(
                "verdict_conclusive",
                report.verdict != Verdict::Inconclusive,
            ),
        ];

        // Dump pairs from the worst snapshot for plotting.
        let worst = report
            .snapshots
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.report.min_z.total_cmp(&b.1.report.min_z))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let snap = series.snapshot(worst)?;
        let scanned = match map {
            Some(m) => pde::log_transform(&snap, m)?,
            None => snap,
        };
        let samples = dump_pairs(&scanned, knobs.n_pairs.min(5000), cfg.seed)?;

        let payload = json!({
            "times": series.times(),
            "worst_snapshot_index": worst,
            "report": serde_json::to_value(&report).context("report serializes")?,
        });
        Ok(ExperimentOutput {
            checks,
            payload,
            grid: cfg.grid_cells(),
            samples: Some(samples),
            field: Some(scanned),
        })
    }
}
