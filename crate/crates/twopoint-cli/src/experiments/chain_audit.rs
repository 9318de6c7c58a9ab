use anyhow::{Context, Result};
use serde_json::json;
use twopoint::concavity::{self, ScanConfig};
use twopoint::hypotheses::{f_by_key, Cone};

use crate::config::RunConfig;
use crate::report::Check;

use super::{b_from_config, field_source, sample_to_row, scan_config, Experiment, ExperimentOutput};

pub struct ChainAudit;

impl Experiment for ChainAudit {
    fn name(&self) -> &'static str {
        "chain-audit"
    }

    fn describe(&self) -> &'static str {
        "step-by-step inequality audit of the two-point chain at the lowest scan pairs"
    }

    fn run(&self, cfg: &RunConfig) -> Result<ExperimentOutput> {
        let audit = cfg.audit.clone().unwrap_or_default();
        let knobs = cfg.scan.clone().unwrap_or_default();
        anyhow::ensure!(
            knobs.postmap.is_none(),
            "chain-audit runs on the solver field itself; post maps are not supported here"
        );
        let (domain, _grid, field) = field_source(cfg)?;
        let eq = cfg.equation.as_ref().context("chain-audit needs an [equation] table")?;

        let prov = field
            .provenance()
            .context("solver field carries no provenance for the audit")?
            .clone();
        let f = f_by_key(&audit.f_key, None, Cone::All)?;
        let b = b_from_config(eq.b.as_ref(), &prov.b_key)?;

        // Let the scan pick and refine the candidates; the audit then runs
        // at exactly the pairs the refinement settled on.
        let mut scan_cfg: ScanConfig = scan_config(&knobs, cfg.seed);
        scan_cfg.refine_top = scan_cfg.refine_top.max(audit.audit_pairs);
        if prov.equation.starts_with("liouville") {
            let collar = twopoint::pde::trust_collar(&domain, field.grid());
            if scan_cfg.interior_margin < collar {
                scan_cfg.interior_margin = collar;
            }
        }
        let scan_report = concavity::scan_min(&field, &scan_cfg)?;

        let mut candidates: Vec<(f64, Vec<f64>, Vec<f64>)> = scan_report
            .refinement
            .candidates
            .iter()
            .map(|c| (c.end_z, c.x.clone(), c.y.clone()))
            .collect();
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
        candidates.truncate(audit.audit_pairs);
        anyhow::ensure!(!candidates.is_empty(), "scan produced no refinable candidates");

        let mut min_slack = f64::INFINITY;
        let mut audits = Vec::with_capacity(candidates.len());
        let mut rows = Vec::with_capacity(candidates.len());
        for (_, x, y) in &candidates {
            let audit_result = concavity::chain_audit(&field, x, y, f.as_ref(), b.as_ref())?;
            min_slack = min_slack.min(audit_result.min_slack);
            let sample = concavity::z_value(&field, x, y)?;
            rows.push(sample_to_row(&sample));
            audits.push(json!({
                "x": x,
                "y": y,
                "z_value": sample.z_value,
                "audit": audit_result,
            }));
        }

        let checks = vec![
            Check::ge("chain_min_slack", min_slack, -audit.tol_slack),
            Check::ge("scan_min_z", scan_report.min_z, -knobs.tol_z),
        ];
        let payload = json!({
            "f_key": audit.f_key,
            "b_key": prov.b_key,
            "equation": prov.equation,
            "audited_pairs": audits,
            "scan_argmin": scan_report.argmin,
        });
        Ok(ExperimentOutput {
            checks,
            payload,
            grid: cfg.grid_cells(),
            samples: Some((domain.dim(), rows)),
            field: Some(field),
        })
    }
}
