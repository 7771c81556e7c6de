//! Seeded ensembles: build each member's scenario, compute both equilibria,
//! assess, and summarize.

mod preset;
mod report;

pub use preset::{preset, PRESET_NAMES};
pub use report::{emit_report, fmt_sig9, ReportFormat, CSV_HEADER};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{self, ControllerKind, DynamicsConfig, DynamicsError, Trajectory};
use crate::equilibrium::{self, RateAllocation, SolveError, SolveOptions, DEFAULT_MAX_ITER};
use crate::net_model::{build_scenario, NetError, Network, ScenarioSpec, Topology};
use crate::stability::{self, Classification, StabilityConfig, StabilityError, StabilityReport};
use crate::traffic::{TrafficError, TrafficModel};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown preset {0:?} (expected one of internet, datacenter, wireless)")]
    UnknownPreset(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Anything that can fail inside one ensemble member.
#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: DEFAULT_MAX_ITER }
    }
}

/// Fluid-model settings. The rate floor is taken from the stability `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsSettings {
    pub beta: f64,
    /// Convergence threshold on the derivative norm.
    pub tol: f64,
    pub oscillation_cv: f64,
    pub sample_stride: usize,
}

impl Default for DynamicsSettings {
    fn default() -> Self {
        let d = DynamicsConfig::default();
        Self { beta: d.beta, tol: 1e-6, oscillation_cv: d.oscillation_cv, sample_stride: d.sample_stride }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Member `i` is generated with seed `seed + i`.
    pub scenario: Topology,
    pub controller: ControllerKind,
    #[serde(default)]
    pub traffic: TrafficModel,
    #[serde(default)]
    pub stability: StabilityConfig,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub dynamics: DynamicsSettings,
    pub horizon: f64,
    pub dt: f64,
    pub ensemble_size: usize,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |e: &dyn std::fmt::Display| ExperimentError::Config(e.to_string());
        self.scenario.validate().map_err(|e| bad(&e))?;
        self.controller.validate().map_err(|e| bad(&e))?;
        self.traffic.validate().map_err(|e| bad(&e))?;
        self.stability.validate().map_err(|e| bad(&e))?;
        self.dynamics_config().validate().map_err(|e| bad(&e))?;
        if !(self.solver.tol > 0.0) || self.solver.max_iter == 0 {
            return Err(ExperimentError::Config("solver tol and max_iter must be positive".into()));
        }
        if !(self.dynamics.tol > 0.0) {
            return Err(ExperimentError::Config("dynamics tol must be positive".into()));
        }
        crate::traffic::step_count(self.horizon, self.dt).map_err(|e: TrafficError| bad(&e))?;
        if self.ensemble_size == 0 {
            return Err(ExperimentError::Config("ensemble_size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn dynamics_config(&self) -> DynamicsConfig {
        DynamicsConfig {
            beta: self.dynamics.beta,
            floor: self.stability.eps,
            oscillation_cv: self.dynamics.oscillation_cv,
            sample_stride: self.dynamics.sample_stride,
        }
    }

    pub fn member_spec(&self, index: usize) -> ScenarioSpec {
        ScenarioSpec::new(self.scenario.clone(), self.seed.wrapping_add(index as u64))
    }

    fn solve_options(&self, formulation: equilibrium::Formulation, floor: f64) -> SolveOptions {
        let mut o = SolveOptions::new(formulation, floor, self.solver.tol);
        o.max_iter = self.solver.max_iter;
        o
    }

    /// `x*` for a member network.
    pub fn baseline(&self, net: &Network) -> Result<RateAllocation, SolveError> {
        let opts = self.solve_options(equilibrium::Formulation::SinglePath, 0.0);
        Ok(equilibrium::solve(net, &opts)?.allocation)
    }

    /// The configured controller's equilibrium, floored at `eps`.
    pub fn multipath(&self, net: &Network) -> Result<RateAllocation, SolveError> {
        let opts = self.solve_options(self.controller.variant.formulation(), self.stability.eps);
        Ok(equilibrium::solve(net, &opts)?.allocation)
    }

    pub fn trajectory(&self, net: &Network) -> Result<Trajectory, DynamicsError> {
        dynamics::integrate_with(
            self.controller,
            net,
            self.horizon,
            self.dt,
            self.dynamics.tol,
            &self.traffic,
            &self.dynamics_config(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: usize,
    pub seed: u64,
    pub scenario: String,
    pub controller: String,
    pub report: Option<StabilityReport>,
    pub error: Option<String>,
}

impl RunRecord {
    pub fn is_stable(&self) -> bool {
        self.report.as_ref().is_some_and(|r| r.classification == Classification::Stable)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisplacementStats {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl DisplacementStats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
        Some(Self { min: v[0], median, max: v[n - 1] })
    }
}

/// How many members failed each check.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationCounts {
    pub paths: usize,
    pub floor: usize,
    pub capacity: usize,
    pub burden: usize,
    pub displacement: usize,
    pub oscillation: usize,
    pub errors: usize,
}

impl ViolationCounts {
    fn of(runs: &[RunRecord]) -> Self {
        let mut c = Self::default();
        for run in runs {
            let Some(r) = &run.report else {
                c.errors += 1;
                continue;
            };
            let v = r.constraint_verdicts;
            c.paths += usize::from(!v.paths_ok);
            c.floor += usize::from(!v.floor_ok);
            c.capacity += usize::from(!v.capacity_ok);
            c.burden += usize::from(!v.burden_ok);
            c.displacement += usize::from(r.displacement > r.displacement_tol);
            c.oscillation += usize::from(r.oscillation_detected);
        }
        c
    }

    /// Name of the most frequent failure, if any member failed.
    pub fn dominant(&self) -> Option<&'static str> {
        let all = [
            ("paths", self.paths),
            ("floor", self.floor),
            ("capacity", self.capacity),
            ("burden", self.burden),
            ("displacement", self.displacement),
            ("oscillation", self.oscillation),
            ("error", self.errors),
        ];
        all.iter().filter(|(_, n)| *n > 0).max_by_key(|(_, n)| *n).map(|(name, _)| *name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub scenario: String,
    pub controller: String,
    pub traffic: TrafficModel,
    pub runs: Vec<RunRecord>,
    pub fraction_stable: f64,
    pub displacement: Option<DisplacementStats>,
    pub violations: ViolationCounts,
}

impl EnsembleSummary {
    pub fn from_runs(scenario: &str, controller: &str, traffic: TrafficModel, runs: Vec<RunRecord>) -> Self {
        let stable = runs.iter().filter(|r| r.is_stable()).count();
        let fraction_stable = if runs.is_empty() { 0.0 } else { stable as f64 / runs.len() as f64 };
        let d: Vec<f64> = runs.iter().filter_map(|r| r.report.as_ref().map(|r| r.displacement)).collect();
        Self {
            scenario: scenario.to_string(),
            controller: controller.to_string(),
            traffic,
            fraction_stable,
            displacement: DisplacementStats::of(&d),
            violations: ViolationCounts::of(&runs),
            runs,
        }
    }
}

/// One ensemble member: constant traffic compares solver equilibria,
/// time-varying traffic integrates the controller and assesses the trailing
/// window.
pub fn run_member(cfg: &ExperimentConfig, index: usize) -> Result<StabilityReport, RunError> {
    let net = build_scenario(&cfg.member_spec(index))?;
    let x_star = cfg.baseline(&net)?;
    if cfg.traffic.is_constant() {
        let x_new = cfg.multipath(&net)?;
        Ok(stability::assess(&net, &x_star, &x_new, &cfg.stability)?)
    } else {
        let traj = cfg.trajectory(&net)?;
        Ok(stability::assess_time_varying(&net, &x_star, &traj, &cfg.stability)?)
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<EnsembleSummary, ExperimentError> {
    cfg.validate()?;
    let scenario = cfg.scenario.name();
    let controller = cfg.controller.variant.name();
    let runs: Vec<RunRecord> = (0..cfg.ensemble_size)
        .into_par_iter()
        .map(|i| {
            let result = run_member(cfg, i);
            RunRecord {
                run_id: i,
                seed: cfg.member_spec(i).seed,
                scenario: scenario.to_string(),
                controller: controller.to_string(),
                error: result.as_ref().err().map(|e| e.to_string()),
                report: result.ok(),
            }
        })
        .collect();
    Ok(EnsembleSummary::from_runs(scenario, controller, cfg.traffic, runs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut cfg = preset("internet").unwrap();
        cfg.scenario = Topology::Internet {
            n_sources: 4,
            n_links: 6,
            paths_per_source: 2,
            capacity_min: 10.0,
            capacity_max: 50.0,
        };
        cfg.ensemble_size = 3;
        cfg
    }

    #[test]
    fn single_member_summary() {
        let cfg = ExperimentConfig { ensemble_size: 1, ..small() };
        let s = run_experiment(&cfg).unwrap();
        assert_eq!(s.runs.len(), 1);
        assert!(s.fraction_stable == 0.0 || s.fraction_stable == 1.0);
        assert_eq!(s.runs[0].seed, cfg.seed);
    }

    #[test]
    fn members_use_consecutive_seeds_and_keep_order() {
        let cfg = small();
        let s = run_experiment(&cfg).unwrap();
        let ids: Vec<usize> = s.runs.iter().map(|r| r.run_id).collect();
        assert_eq!(ids, vec![0, 1, 2]);
        for r in &s.runs {
            assert_eq!(r.seed, cfg.seed + r.run_id as u64);
        }
        assert_eq!(run_experiment(&cfg).unwrap(), s);
    }

    #[test]
    fn failed_member_is_recorded() {
        // A floor this high is infeasible on every link.
        let mut cfg = small();
        cfg.stability.eps = 1e3;
        let s = run_experiment(&cfg).unwrap();
        assert!(s.runs.iter().all(|r| r.report.is_none() && r.error.is_some()));
        assert_eq!(s.fraction_stable, 0.0);
        assert_eq!(s.violations.errors, 3);
        assert_eq!(s.violations.dominant(), Some("error"));
    }

    #[test]
    fn config_errors() {
        let mut cfg = small();
        cfg.ensemble_size = 0;
        assert!(matches!(run_experiment(&cfg), Err(ExperimentError::Config(_))));
        let mut cfg = small();
        cfg.dt = 0.0;
        assert!(cfg.validate().is_err());
        let json = small().to_json().replace("\"ensemble_size\"", "\"bogus\": 1, \"ensemble_size\"");
        assert!(matches!(ExperimentConfig::from_json(&json), Err(ExperimentError::Config(_))));
    }

    #[test]
    fn config_round_trips() {
        let cfg = small();
        assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn stats() {
        assert_eq!(DisplacementStats::of(&[]), None);
        let s = DisplacementStats::of(&[3.0, 1.0, 2.0, 10.0]).unwrap();
        assert_eq!((s.min, s.median, s.max), (1.0, 2.5, 10.0));
    }
}
