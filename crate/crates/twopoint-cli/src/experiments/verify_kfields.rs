//! Second-variation field families: midpoint vanishing by two independent
//! methods, oddness, and the frame identity tying the families to the
//! transport coefficients.

use anyhow::Result;
use serde_json::json;
use twopoint::geodesic::GeodesicSegment;
use twopoint::sampling::seeded_rng;
use twopoint::variation::{
    fundamental_identity_residual, k_combos, k_combos_ode, k_fields_fd,
    k_fields_fd_extrapolated, KKind,
};

use crate::config::RunConfig;
use crate::report::Check;

use super::{random_pair, Experiment, ExperimentOutput};

const ODE_MIDPOINT_TOL: f64 = 1e-8;
const ODDNESS_TOL: f64 = 1e-8;
const IDENTITY_TOL: f64 = 1e-6;
const FD_SLOPE_MIN: f64 = 1.9;
const FD_EXTRAPOLATED_TOL: f64 = 1e-6;

pub struct VerifyKFields;

fn fd_midpoint_residual(
    frame: &twopoint::geodesic::Frame,
    h: f64,
) -> Result<f64> {
    let ts = [0.0];
    let xx = k_fields_fd(frame, KKind::Xx, h, &ts)?;
    let xy = k_fields_fd(frame, KKind::Xy, h, &ts)?;
    let yx = k_fields_fd(frame, KKind::Yx, h, &ts)?;
    let yy = k_fields_fd(frame, KKind::Yy, h, &ts)?;
    let combos = k_combos(&xx, &xy, &yx, &yy)?;
    let (p, m) = combos.midpoint_max()?;
    Ok(p.max(m))
}

impl Experiment for VerifyKFields {
    fn name(&self) -> &'static str {
        "verify-kfields"
    }

    fn describe(&self) -> &'static str {
        "midpoint vanishing, oddness, and the transport identity for K-fields"
    }

    fn run(&self, cfg: &RunConfig) -> Result<ExperimentOutput> {
        let model = cfg.build_model()?;
        let knobs = cfg.verify.clone().unwrap_or_default();
        let mut rng = seeded_rng(cfg.seed, 3);

        let mut sup_ode_midpoint = 0.0f64;
        let mut sup_oddness = 0.0f64;
        let mut sup_identity = 0.0f64;
        let mut min_slope = f64::INFINITY;
        let mut sup_extrapolated = 0.0f64;
        let mut ladders = Vec::new();

        for _ in 0..knobs.n_pairs {
            let (x, y) = random_pair(&model, &mut rng);
            let seg = GeodesicSegment::connect(&model, &x, &y)?;
            let frame = seg.frame()?;

            let combos = k_combos_ode(&frame, knobs.ode_cells)?;
            let (p, m) = combos.midpoint_max()?;
            sup_ode_midpoint = sup_ode_midpoint.max(p.max(m));
            sup_oddness = sup_oddness.max(combos.oddness_max()?);
            let (ip, im) = fundamental_identity_residual(&frame, &combos)?;
            sup_identity = sup_identity.max(ip.max(im));

            // The difference estimator's midpoint value is pure error, so
            // its decay along the step ladder is the convergence order.
            let mut residuals = Vec::with_capacity(knobs.fd_steps.len());
            for &h in &knobs.fd_steps {
                residuals.push(fd_midpoint_residual(&frame, h)?);
            }
            for i in 0..residuals.len().saturating_sub(1) {
                let slope = (residuals[i] / residuals[i + 1]).ln()
                    / (knobs.fd_steps[i] / knobs.fd_steps[i + 1]).ln();
                min_slope = min_slope.min(slope);
            }
            ladders.push(residuals.clone());

            let finest = *knobs.fd_steps.last().unwrap();
            let ts = [0.0];
            let xx = k_fields_fd_extrapolated(&frame, KKind::Xx, finest, &ts)?;
            let xy = k_fields_fd_extrapolated(&frame, KKind::Xy, finest, &ts)?;
            let yx = k_fields_fd_extrapolated(&frame, KKind::Yx, finest, &ts)?;
            let yy = k_fields_fd_extrapolated(&frame, KKind::Yy, finest, &ts)?;
            let (ep, em) = k_combos(&xx, &xy, &yx, &yy)?.midpoint_max()?;
            sup_extrapolated = sup_extrapolated.max(ep.max(em));
        }

        let checks = vec![
            Check::le("ode_midpoint_residual_sup", sup_ode_midpoint, ODE_MIDPOINT_TOL),
            Check::ge("fd_midpoint_richardson_slope_min", min_slope, FD_SLOPE_MIN),
            Check::le("fd_midpoint_extrapolated_sup", sup_extrapolated, FD_EXTRAPOLATED_TOL),
            Check::le("oddness_sup", sup_oddness, ODDNESS_TOL),
            Check::le("transport_identity_residual_sup", sup_identity, IDENTITY_TOL),
        ];
        let payload = json!({
            "n_pairs": knobs.n_pairs,
            "fd_steps": knobs.fd_steps,
            "ode_cells": knobs.ode_cells,
            "fd_midpoint_ladders": ladders,
        });
        Ok(ExperimentOutput::bare(checks, payload))
    }
}
