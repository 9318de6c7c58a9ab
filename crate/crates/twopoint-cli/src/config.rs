//! Strict run configuration: every knob an experiment reads lives here, and
//! unknown keys are rejected so a config file is an exact provenance record.

use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use twopoint::domain::{DomainBlock, DomainSpec, Grid};
use twopoint::manifold::{Factor, ManifoldModel};

const HASH_SEED: u64 = 0xcbf2_9ce4_8422_2325;
const HASH_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Name of the experiment this file drives; must match the CLI verb.
    pub experiment: String,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads for pair scans; zero means available parallelism.
    #[serde(default)]
    pub threads: usize,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub manifold: Option<ManifoldConfig>,
    #[serde(default)]
    pub domain: Option<DomainConfig>,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub equation: Option<EquationConfig>,
    #[serde(default)]
    pub scan: Option<ScanKnobs>,
    #[serde(default)]
    pub verify: Option<VerifyKnobs>,
    #[serde(default)]
    pub audit: Option<AuditKnobs>,
    #[serde(default)]
    pub hypotheses: Option<HypothesesConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Directory for report.json and the CSV companions.
    pub dir: PathBuf,
    /// Also dump the solved field values as field.csv.
    #[serde(default)]
    pub write_field: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out"), write_field: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldConfig {
    pub factors: Vec<FactorConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FactorConfig {
    Euclidean { dim: usize },
    Sphere { dim: usize, kappa: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub blocks: Vec<BlockConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BlockConfig {
    Interval { half_length: f64 },
    Rectangle { half_x: f64, half_y: f64 },
    Disk { radius: f64 },
    Cap { radius: f64, kappa: f64, #[serde(default)] theta_offset: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Cells per chart axis, in domain axis order.
    pub cells: Vec<usize>,
    /// Solve on this grid and its doubling, then extrapolate node values.
    #[serde(default)]
    pub richardson: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquationConfig {
    /// Field source: "torsion", "liouville", "heat", "saddle", or
    /// "quartic_saddle" (the last two are manufactured, solver-free).
    pub key: String,
    #[serde(default)]
    pub b: Option<BConfig>,
    /// Dirichlet depth standing in for blow-up at the wall.
    #[serde(default)]
    pub boundary_depth: Option<f64>,
    /// Re-solve at each depth and compare inner-region values pairwise.
    #[serde(default)]
    pub depth_sweep: Option<Vec<f64>>,
    #[serde(default)]
    pub heat: Option<HeatConfig>,
    #[serde(default)]
    pub perturbation: Option<PerturbationConfig>,
    #[serde(default)]
    pub evans: Option<EvansConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BConfig {
    pub key: String,
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub d: Option<f64>,
    #[serde(default)]
    pub p: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatConfig {
    pub t_end: f64,
    pub steps: usize,
    #[serde(default = "one")]
    pub record_stride: usize,
    pub initial: InitialData,
}

fn one() -> usize {
    1
}

/// Canned initial profiles; each is positive with equal wall values so the
/// flow has a constant steady state.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    Constant { value: f64 },
    /// u0 = exp(-amplitude * w) with w the concave unit bump of the domain,
    /// so -log u0 is concave with peak slope set by the amplitude.
    LogConcave { amplitude: f64 },
    /// The same bump with the sign flipped: -log u0 is convex, a planted
    /// defect for exercising the certification gate.
    ConvexDefect { amplitude: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    pub epsilons: Vec<f64>,
    #[serde(default = "default_collar")]
    pub collar_cells: usize,
}

fn default_collar() -> usize {
    4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvansConfig {
    pub epsilon: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanKnobs {
    #[serde(default = "default_pairs")]
    pub n_pairs: usize,
    #[serde(default = "default_refine")]
    pub refine_top: usize,
    #[serde(default = "default_tol_z")]
    pub tol_z: f64,
    #[serde(default = "default_exclusion")]
    pub exclusion_factor: f64,
    #[serde(default)]
    pub interior_margin: f64,
    #[serde(default = "default_boundary_pairs")]
    pub boundary_pairs: usize,
    /// Pointwise transform applied before scanning: "neg_log" or "log".
    #[serde(default)]
    pub postmap: Option<String>,
}

fn default_pairs() -> usize {
    10_000
}

fn default_refine() -> usize {
    10
}

fn default_tol_z() -> f64 {
    1e-6
}

fn default_exclusion() -> f64 {
    2.0
}

fn default_boundary_pairs() -> usize {
    64
}

impl Default for ScanKnobs {
    fn default() -> Self {
        ScanKnobs {
            n_pairs: default_pairs(),
            refine_top: default_refine(),
            tol_z: default_tol_z(),
            exclusion_factor: default_exclusion(),
            interior_margin: 0.0,
            boundary_pairs: default_boundary_pairs(),
            postmap: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyKnobs {
    #[serde(default = "default_verify_pairs")]
    pub n_pairs: usize,
    /// Step ladder for difference quotients, finest last.
    #[serde(default = "default_fd_steps")]
    pub fd_steps: Vec<f64>,
    #[serde(default = "default_ode_cells")]
    pub ode_cells: usize,
}

fn default_verify_pairs() -> usize {
    20
}

fn default_fd_steps() -> Vec<f64> {
    vec![1e-2, 5e-3, 2.5e-3]
}

fn default_ode_cells() -> usize {
    800
}

impl Default for VerifyKnobs {
    fn default() -> Self {
        VerifyKnobs {
            n_pairs: default_verify_pairs(),
            fd_steps: default_fd_steps(),
            ode_cells: default_ode_cells(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditKnobs {
    /// How many of the lowest-Z sampled pairs to audit.
    #[serde(default = "default_audit_pairs")]
    pub audit_pairs: usize,
    #[serde(default = "default_tol_slack")]
    pub tol_slack: f64,
    #[serde(default = "default_f_key")]
    pub f_key: String,
}

fn default_audit_pairs() -> usize {
    10
}

fn default_tol_slack() -> f64 {
    1e-5
}

fn default_f_key() -> String {
    "neg_trace".into()
}

impl Default for AuditKnobs {
    fn default() -> Self {
        AuditKnobs {
            audit_pairs: default_audit_pairs(),
            tol_slack: default_tol_slack(),
            f_key: default_f_key(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesesConfig {
    #[serde(default)]
    pub f_entries: Vec<FConfig>,
    #[serde(default)]
    pub b_entries: Vec<BConfig>,
    #[serde(default = "default_hyp_dim")]
    pub dim: usize,
    #[serde(default = "default_hyp_samples")]
    pub n_samples: usize,
    /// Keys whose checks are expected to fail with a witness; the run
    /// passes only if every planted violation is actually detected.
    #[serde(default)]
    pub expect_fail: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FConfig {
    pub key: String,
    /// Eigenvalue weights for keys that take them (weighted_trace).
    #[serde(default)]
    pub lambda: Option<Vec<f64>>,
}

fn default_hyp_dim() -> usize {
    3
}

fn default_hyp_samples() -> usize {
    300
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).context("config file rejected")?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if let Some(scan) = &self.scan {
            if !(scan.tol_z > 0.0) {
                bail!("scan.tol_z must be positive");
            }
            if scan.exclusion_factor < 0.0 || scan.interior_margin < 0.0 {
                bail!("scan radii must be nonnegative");
            }
            if let Some(map) = &scan.postmap {
                if map != "neg_log" && map != "log" {
                    bail!("scan.postmap must be neg_log or log, got {map}");
                }
            }
        }
        if let Some(verify) = &self.verify {
            if verify.fd_steps.is_empty() {
                bail!("verify.fd_steps must list at least one step");
            }
            if verify.fd_steps.iter().any(|&h| !(h > 0.0) || h > 0.1) {
                bail!("verify.fd_steps must lie in (0, 0.1]");
            }
        }
        if let Some(grid) = &self.grid {
            if grid.cells.iter().any(|&c| c < 4 || c > 50_000) {
                bail!("grid.cells entries must lie in [4, 50000]");
            }
        }
        if let Some(eq) = &self.equation {
            if let Some(depth) = eq.boundary_depth {
                if !(depth > 0.0) {
                    bail!("equation.boundary_depth must be positive");
                }
            }
            if let Some(heat) = &eq.heat {
                if !(heat.t_end > 0.0) || heat.steps == 0 {
                    bail!("equation.heat needs a positive horizon and steps");
                }
            }
        }
        Ok(())
    }

    /// The model the verify experiments walk; built from [manifold].
    pub fn build_model(&self) -> Result<ManifoldModel> {
        let spec = self
            .manifold
            .as_ref()
            .context("this experiment needs a [manifold] table")?;
        let factors: Vec<Factor> = spec
            .factors
            .iter()
            .map(|f| match *f {
                FactorConfig::Euclidean { dim } => Factor::Euclidean { dim },
                FactorConfig::Sphere { dim, kappa } => Factor::Sphere { dim, kappa },
            })
            .collect();
        Ok(ManifoldModel::new(factors)?)
    }

    /// The chart domain solvers and scans run over; built from [domain].
    pub fn build_domain(&self) -> Result<Arc<DomainSpec>> {
        let spec = self.domain.as_ref().context("this experiment needs a [domain] table")?;
        let blocks: Vec<DomainBlock> = spec
            .blocks
            .iter()
            .map(|b| match *b {
                BlockConfig::Interval { half_length } => DomainBlock::Interval { half_length },
                BlockConfig::Rectangle { half_x, half_y } => {
                    DomainBlock::Rectangle { half_x, half_y }
                }
                BlockConfig::Disk { radius } => DomainBlock::Disk { radius },
                BlockConfig::Cap { radius, kappa, theta_offset } => {
                    DomainBlock::Cap { radius, kappa, theta_offset }
                }
            })
            .collect();
        Ok(Arc::new(DomainSpec::new(blocks)?))
    }

    pub fn build_grid(&self, domain: &Arc<DomainSpec>) -> Result<Arc<Grid>> {
        let spec = self.grid.as_ref().context("this experiment needs a [grid] table")?;
        Ok(Arc::new(Grid::new(domain, &spec.cells)?))
    }

    pub fn grid_cells(&self) -> Vec<usize> {
        self.grid.as_ref().map(|g| g.cells.clone()).unwrap_or_default()
    }

    /// Stable fingerprint of the resolved configuration (seed and output
    /// overrides already applied), for the report's provenance block.
    pub fn fingerprint(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        let mut h = HASH_SEED;
        for byte in canon.as_bytes() {
            h ^= u64::from(*byte);
            h = h.wrapping_mul(HASH_PRIME);
        }
        format!("fnv1a64:{h:016x}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_scan_config_parses_with_defaults() {
        let cfg = RunConfig::from_toml(
            r#"
            experiment = "scan"
            [domain]
            blocks = [{ kind = "interval", half_length = 1.0 }]
            [grid]
            cells = [64]
            [equation]
            key = "torsion"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.experiment, "scan");
        assert_eq!(cfg.seed, 0);
        assert!(cfg.scan.is_none());
        let dom = cfg.build_domain().unwrap();
        assert_eq!(dom.dim(), 1);
    }

    #[test]
    fn unknown_keys_and_bad_kinds_are_rejected() {
        let bad = RunConfig::from_toml("experiment = \"scan\"\nturbo = true\n");
        assert!(bad.is_err());

        let bad = RunConfig::from_toml(
            r#"
            experiment = "verify-geometry"
            [manifold]
            factors = [{ kind = "hyperbolic", dim = 2 }]
            "#,
        );
        assert!(bad.is_err());

        let bad = RunConfig::from_toml(
            r#"
            experiment = "scan"
            [scan]
            tol_z = -1.0
            "#,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn fingerprint_tracks_content_not_formatting() {
        let a = RunConfig::from_toml("experiment = \"scan\"\nseed = 7\n").unwrap();
        let b = RunConfig::from_toml("seed = 7\nexperiment = \"scan\"\n").unwrap();
        let c = RunConfig::from_toml("experiment = \"scan\"\nseed = 8\n").unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
    }
}
