//! Displacement between the single-path and multipath equilibria, the
//! burden footprint, and the constraint verdicts that decide stability.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::Trajectory;
use crate::equilibrium::RateAllocation;
use crate::net_model::Network;

/// Relative slack on capacity and floor checks, absorbing solver rounding.
const CHECK_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilityError {
    #[error("vectors have different dimensions ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("allocation has {got} rates, network has {expected} paths")]
    AllocationMismatch { expected: usize, got: usize },
    #[error("trajectory has no samples")]
    EmptyTrajectory,
    #[error("invalid stability configuration: {0}")]
    InvalidConfig(String),
}

/// A bound given either in Mbit/s or as a fraction of the network's total
/// capacity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Threshold {
    Absolute(f64),
    CapacityFraction(f64),
}

impl Threshold {
    pub fn resolve(&self, net: &Network) -> f64 {
        match *self {
            Threshold::Absolute(v) => v,
            Threshold::CapacityFraction(f) => f * net.total_capacity(),
        }
    }

    fn value(&self) -> f64 {
        match *self {
            Threshold::Absolute(v) | Threshold::CapacityFraction(v) => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    /// Rate floor on active paths.
    pub eps: f64,
    /// `B_max`.
    pub burden_bound: Threshold,
    pub displacement_tol: Threshold,
    /// Trailing duration over which time-varying runs take the supremum.
    pub window: f64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            eps: 0.01,
            burden_bound: Threshold::CapacityFraction(0.5),
            displacement_tol: Threshold::CapacityFraction(0.5),
            window: 1.0,
        }
    }
}

impl StabilityConfig {
    pub fn validate(&self) -> Result<(), StabilityError> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(StabilityError::InvalidConfig(format!("eps must be positive, got {}", self.eps)));
        }
        let b = self.burden_bound.value();
        if !(b > 0.0 && b.is_finite()) {
            return Err(StabilityError::InvalidConfig(format!("burden_bound must be positive, got {b}")));
        }
        let d = self.displacement_tol.value();
        if !(d >= 0.0 && d.is_finite()) {
            return Err(StabilityError::InvalidConfig(format!("displacement_tol must be nonnegative, got {d}")));
        }
        if !(self.window > 0.0 && self.window.is_finite()) {
            return Err(StabilityError::InvalidConfig(format!("window must be positive, got {}", self.window)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Classification {
    Stable,
    Unstable,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Stable => "Stable",
            Classification::Unstable => "Unstable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintVerdicts {
    pub paths_ok: bool,
    pub floor_ok: bool,
    pub capacity_ok: bool,
    pub burden_ok: bool,
}

impl ConstraintVerdicts {
    pub fn all(&self) -> bool {
        self.paths_ok && self.floor_ok && self.capacity_ok && self.burden_ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// Distance between per-source totals.
    pub displacement: f64,
    /// Distance between per-path rates.
    pub path_displacement: f64,
    pub burden_displacement: f64,
    pub constraint_verdicts: ConstraintVerdicts,
    pub classification: Classification,
    /// Resolved `B_max`.
    pub burden_bound: f64,
    /// Resolved displacement tolerance.
    pub displacement_tol: f64,
    /// Only set for time-varying runs.
    pub sup_displacement_over_window: Option<f64>,
    pub oscillation_detected: bool,
}

/// Per-path `r_p * hops(p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BurdenVector(pub Vec<f64>);

impl BurdenVector {
    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64, StabilityError> {
    if a.len() != b.len() {
        return Err(StabilityError::DimensionMismatch(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

pub fn compute_burden(net: &Network, alloc: &RateAllocation) -> BurdenVector {
    BurdenVector(net.paths().iter().map(|p| alloc.rates[p.id.0] * p.hop_count() as f64).collect())
}

fn check(net: &Network, alloc: &RateAllocation) -> Result<(), StabilityError> {
    if alloc.len() != net.paths().len() {
        return Err(StabilityError::AllocationMismatch { expected: net.paths().len(), got: alloc.len() });
    }
    Ok(())
}

/// Every source with traffic on two or more paths is in multipath mode and
/// all of its paths must respect the floor; elsewhere only used paths do.
fn floor_ok(net: &Network, alloc: &RateAllocation, eps: f64) -> bool {
    let min = eps * (1.0 - CHECK_SLACK);
    net.sources().iter().all(|s| {
        let used = s.path_ids.iter().filter(|p| alloc.rate(**p) > 0.0).count();
        s.path_ids.iter().all(|p| {
            let r = alloc.rate(*p);
            (used < 2 && r == 0.0) || r >= min
        })
    })
}

fn capacity_ok(net: &Network, alloc: &RateAllocation) -> bool {
    alloc.link_loads(net).iter().zip(net.links()).all(|(y, l)| *y <= l.capacity * (1.0 + CHECK_SLACK))
}

struct Snapshot {
    displacement: f64,
    path_displacement: f64,
    burden_displacement: f64,
    floor_ok: bool,
    capacity_ok: bool,
}

fn snapshot(net: &Network, x_star: &RateAllocation, b_star: &BurdenVector, x_new: &RateAllocation, eps: f64) -> Snapshot {
    let totals = |a: &RateAllocation| a.source_totals(net);
    let dist = |a: &[f64], b: &[f64]| euclidean_distance(a, b).expect("lengths checked");
    Snapshot {
        displacement: dist(&totals(x_star), &totals(x_new)),
        path_displacement: dist(&x_star.rates, &x_new.rates),
        burden_displacement: dist(&b_star.0, &compute_burden(net, x_new).0),
        floor_ok: floor_ok(net, x_new, eps),
        capacity_ok: capacity_ok(net, x_new),
    }
}

fn report(net: &Network, snap: Snapshot, cfg: &StabilityConfig, sup: Option<f64>, oscillation: bool) -> StabilityReport {
    let burden_bound = cfg.burden_bound.resolve(net);
    let displacement_tol = cfg.displacement_tol.resolve(net);
    let verdicts = ConstraintVerdicts {
        paths_ok: net.is_multipath(),
        floor_ok: snap.floor_ok,
        capacity_ok: snap.capacity_ok,
        burden_ok: snap.burden_displacement <= burden_bound,
    };
    let stable = verdicts.all() && snap.displacement <= displacement_tol && !oscillation;
    StabilityReport {
        displacement: snap.displacement,
        path_displacement: snap.path_displacement,
        burden_displacement: snap.burden_displacement,
        constraint_verdicts: verdicts,
        classification: if stable { Classification::Stable } else { Classification::Unstable },
        burden_bound,
        displacement_tol,
        sup_displacement_over_window: sup,
        oscillation_detected: oscillation,
    }
}

pub fn assess(
    net: &Network,
    x_star: &RateAllocation,
    x_new: &RateAllocation,
    cfg: &StabilityConfig,
) -> Result<StabilityReport, StabilityError> {
    cfg.validate()?;
    check(net, x_star)?;
    check(net, x_new)?;
    let b_star = compute_burden(net, x_star);
    Ok(report(net, snapshot(net, x_star, &b_star, x_new, cfg.eps), cfg, None, false))
}

/// Supremum of every measure over the samples in the trailing window; a
/// verdict fails if it fails at any of them. An oscillating trajectory is
/// always unstable.
pub fn assess_time_varying(
    net: &Network,
    baseline: &RateAllocation,
    traj: &Trajectory,
    cfg: &StabilityConfig,
) -> Result<StabilityReport, StabilityError> {
    cfg.validate()?;
    check(net, baseline)?;
    let last = traj.samples.last().ok_or(StabilityError::EmptyTrajectory)?;
    let from = last.time - cfg.window;
    let b_star = compute_burden(net, baseline);
    let mut agg: Option<Snapshot> = None;
    for s in traj.samples.iter().filter(|s| s.time >= from) {
        check(net, &s.allocation)?;
        let snap = snapshot(net, baseline, &b_star, &s.allocation, cfg.eps);
        agg = Some(match agg {
            None => snap,
            Some(a) => Snapshot {
                displacement: a.displacement.max(snap.displacement),
                path_displacement: a.path_displacement.max(snap.path_displacement),
                burden_displacement: a.burden_displacement.max(snap.burden_displacement),
                floor_ok: a.floor_ok && snap.floor_ok,
                capacity_ok: a.capacity_ok && snap.capacity_ok,
            },
        });
    }
    let snap = agg.expect("last sample lies in its own window");
    let sup = snap.displacement;
    Ok(report(net, snap, cfg, Some(sup), traj.oscillation_detected))
}
