//! Closed-form geometry spot checks on randomly drawn pairs: exp/log
//! consistency, transport isometry, frame quality, and the curvature
//! diagonalization the rest of the pipeline leans on.

use anyhow::Result;
use serde_json::json;
use twopoint::geodesic::GeodesicSegment;
use twopoint::sampling::seeded_rng;

use crate::config::RunConfig;
use crate::report::Check;

use super::{random_pair, Experiment, ExperimentOutput};

const ROUNDTRIP_TOL: f64 = 1e-10;
const ISOMETRY_TOL: f64 = 1e-12;
const FRAME_TOL: f64 = 1e-10;
const DIAGONAL_TOL: f64 = 1e-10;
const SPEED_TOL: f64 = 1e-12;

pub struct VerifyGeometry;

impl Experiment for VerifyGeometry {
    fn name(&self) -> &'static str {
        "verify-geometry"
    }

    fn describe(&self) -> &'static str {
        "exp/log round trips, transport isometry, parallel frames, curvature"
    }

    fn run(&self, cfg: &RunConfig) -> Result<ExperimentOutput> {
        let model = cfg.build_model()?;
        let knobs = cfg.verify.clone().unwrap_or_default();
        let mut rng = seeded_rng(cfg.seed, 1);

        let mut sup_roundtrip = 0.0f64;
        let mut sup_lognorm = 0.0f64;
        let mut sup_isometry = 0.0f64;
        let mut sup_frame = 0.0f64;
        let mut sup_diagonal = 0.0f64;
        let mut sup_speed = 0.0f64;
        let mut kappa_low = f64::INFINITY;
        let mut kappa_high = f64::NEG_INFINITY;

        for _ in 0..knobs.n_pairs {
            let (x, y) = random_pair(&model, &mut rng);
            let v = model.log_map(&x, &y)?;
            let back = model.exp_map(&v)?;
            sup_roundtrip = sup_roundtrip.max(model.distance(&back, &y));
            sup_lognorm = sup_lognorm.max((model.norm(&v) - model.distance(&x, &y)).abs());

            let seg = GeodesicSegment::connect(&model, &x, &y)?;
            sup_speed = sup_speed.max((seg.speed() - 0.5 * model.distance(&x, &y)).abs());

            // Transport a frame's worth of vectors end to end; the Gram
            // matrix must ride along unchanged.
            let basis = model.orthonormal_basis(&x);
            let moved: Vec<_> = basis
                .iter()
                .map(|b| seg.transport(b, -1.0, 1.0))
                .collect::<twopoint::Result<_>>()?;
            for i in 0..basis.len() {
                for j in 0..basis.len() {
                    let before = model.metric_inner(&basis[i], &basis[j])?;
                    let after = model.metric_inner(&moved[i], &moved[j])?;
                    sup_isometry = sup_isometry.max((before - after).abs());
                }
            }

            let frame = seg.frame()?;
            let n = frame.n();
            for &t in &[-1.0, -0.3, 0.0, 0.6, 1.0] {
                for a in 0..n {
                    let ea = frame.vector_at(a, t);
                    for b in 0..n {
                        let eb = frame.vector_at(b, t);
                        let g = model.metric_inner(&ea, &eb)?;
                        let want = if a == b { 1.0 } else { 0.0 };
                        sup_frame = sup_frame.max((g - want).abs());
                    }
                    // R(E_a, v)v against kappa_a s^2 E_a, with v the frame
                    // velocity at this instant.
                    let vel = seg.velocity_at(t);
                    let r = model.curvature_op(&ea, &vel, &vel)?;
                    let scaled = ea.scale(frame.kappas()[a] * seg.speed() * seg.speed());
                    sup_diagonal = sup_diagonal.max(model.norm(&r.sub(&scaled)));
                }
            }
            for &k in frame.kappas() {
                kappa_low = kappa_low.min(k);
                kappa_high = kappa_high.max(k);
            }
        }

        let bound = model.curvature_bound();
        let checks = vec![
            Check::le("exp_log_roundtrip_sup", sup_roundtrip, ROUNDTRIP_TOL),
            Check::le("log_norm_vs_distance_sup", sup_lognorm, ROUNDTRIP_TOL),
            Check::le("transport_gram_drift_sup", sup_isometry, ISOMETRY_TOL),
            Check::le("frame_orthonormality_sup", sup_frame, FRAME_TOL),
            Check::le("curvature_diagonalization_sup", sup_diagonal, DIAGONAL_TOL),
            Check::le("speed_vs_half_distance_sup", sup_speed, SPEED_TOL),
            Check::ge("curvature_eigenvalue_min", kappa_low, 0.0),
            Check::le("curvature_eigenvalue_max", kappa_high, bound + 1e-12),
        ];
        let payload = json!({
            "n_pairs": knobs.n_pairs,
            "curvature_bound": bound,
            "distance_bound": model.distance_bound(),
        });
        Ok(ExperimentOutput::bare(checks, payload))
    }
}
