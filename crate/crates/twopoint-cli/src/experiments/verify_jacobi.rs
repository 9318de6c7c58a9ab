//! Jacobi fields against an independent difference-scheme oracle, plus the
//! endpoint transfer coefficients they induce.

use anyhow::Result;
use rand::Rng;
use serde_json::json;
use twopoint::geodesic::GeodesicSegment;
use twopoint::jacobi::{bvp_oracle_extrapolated, transfer_diagonal, JacobiField};
use twopoint::sampling::seeded_rng;

use crate::config::RunConfig;
use crate::report::Check;

use super::{random_pair, Experiment, ExperimentOutput};

const ORACLE_TOL: f64 = 1e-8;
const ORACLE_CELLS: usize = 2000;
const TRANSFER_TOL: f64 = 1e-12;
const TRANSFER_FRAMES: usize = 100;

pub struct VerifyJacobi;

impl Experiment for VerifyJacobi {
    fn name(&self) -> &'static str {
        "verify-jacobi"
    }

    fn describe(&self) -> &'static str {
        "closed-form Jacobi fields vs a BVP oracle; endpoint transfer factors"
    }

    fn run(&self, cfg: &RunConfig) -> Result<ExperimentOutput> {
        let model = cfg.build_model()?;
        let knobs = cfg.verify.clone().unwrap_or_default();
        let mut rng = seeded_rng(cfg.seed, 2);

        let mut sup_oracle = 0.0f64;
        for _ in 0..knobs.n_pairs {
            let (x, y) = random_pair(&model, &mut rng);
            let seg = GeodesicSegment::connect(&model, &x, &y)?;
            let frame = seg.frame()?;
            let n = frame.n();
            let minus: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let plus: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let at_minus = frame.combine(&minus, -1.0);
            let at_plus = frame.combine(&plus, 1.0);
            let field = JacobiField::from_boundary(&frame, &at_minus, &at_plus)?;
            for alpha in 0..n {
                let (ts, ws) = bvp_oracle_extrapolated(
                    frame.kappas()[alpha],
                    frame.speed(),
                    minus[alpha],
                    plus[alpha],
                    ORACLE_CELLS,
                )?;
                for (t, w) in ts.iter().zip(&ws) {
                    sup_oracle = sup_oracle.max((field.component(alpha, *t) - w).abs());
                }
            }
        }

        let mut sup_transfer = 0.0f64;
        let mut max_entry = f64::NEG_INFINITY;
        for _ in 0..TRANSFER_FRAMES {
            let (x, y) = random_pair(&model, &mut rng);
            let seg = GeodesicSegment::connect(&model, &x, &y)?;
            let frame = seg.frame()?;
            let diag = transfer_diagonal(&frame)?;
            for (alpha, &v) in diag.iter().enumerate() {
                let want = (frame.kappas()[alpha].sqrt() * frame.speed()).cos();
                sup_transfer = sup_transfer.max((v - want).abs());
                max_entry = max_entry.max(v);
            }
        }

        let checks = vec![
            Check::le("jacobi_vs_bvp_oracle_sup", sup_oracle, ORACLE_TOL),
            Check::le("transfer_vs_cosine_sup", sup_transfer, TRANSFER_TOL),
            Check::le("transfer_entry_max", max_entry, 1.0),
        ];
        let payload = json!({
            "n_pairs": knobs.n_pairs,
            "oracle_cells": ORACLE_CELLS,
            "transfer_frames": TRANSFER_FRAMES,
        });
        Ok(ExperimentOutput::bare(checks, payload))
    }
}
