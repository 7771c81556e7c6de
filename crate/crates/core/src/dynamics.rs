//! Fluid-model congestion controllers integrated with fixed-step RK4.
//!
//! Every controller follows `dr_p/dt = kappa * (m(t) U'(arg) - gamma e_p - Lambda_p)`
//! where `Lambda_p` sums link prices along the path, `m(t)` is the traffic
//! multiplier and `arg` depends on the controller. Link prices combine a
//! relative-overload term with a barrier `beta / (c - y)`; past a knee close
//! to capacity the barrier continues linearly so prices stay finite.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equilibrium::{uniform_start, Formulation, RateAllocation};
use crate::net_model::Network;
use crate::traffic::{self, TrafficError, TrafficModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("invalid step: dt = {dt}, horizon = {horizon}")]
    InvalidStep { dt: f64, horizon: f64 },
    #[error("rate must be positive on path {path}, got {rate}")]
    Domain { path: usize, rate: f64 },
    #[error("allocation has {got} rates, network has {expected} paths")]
    AllocationMismatch { expected: usize, got: usize },
    #[error("rate blew up to {rate} at t = {time}")]
    NumericalBlowup { time: f64, rate: f64 },
    #[error("invalid dynamics configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Traffic(#[from] TrafficError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerVariant {
    SinglePath,
    UncoupledMultipath,
    CoupledMultipath,
}

impl ControllerVariant {
    pub const ALL: [ControllerVariant; 3] =
        [ControllerVariant::SinglePath, ControllerVariant::UncoupledMultipath, ControllerVariant::CoupledMultipath];

    pub fn formulation(self) -> Formulation {
        match self {
            ControllerVariant::SinglePath => Formulation::SinglePath,
            ControllerVariant::UncoupledMultipath => Formulation::Uncoupled,
            ControllerVariant::CoupledMultipath => Formulation::Coupled,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ControllerVariant::SinglePath => "single_path",
            ControllerVariant::UncoupledMultipath => "uncoupled_multipath",
            ControllerVariant::CoupledMultipath => "coupled_multipath",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerKind {
    pub variant: ControllerVariant,
    pub gain: f64,
}

impl ControllerKind {
    pub fn new(variant: ControllerVariant, gain: f64) -> Result<Self, DynamicsError> {
        let k = Self { variant, gain };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.gain > 0.0 && self.gain.is_finite()) {
            return Err(DynamicsError::InvalidConfig(format!("gain must be positive, got {}", self.gain)));
        }
        Ok(())
    }
}

/// Barrier weight. A rest point sits roughly `beta / price` below capacity
/// on each loaded link, and the field stiffens like `price^2 / beta`.
pub const DEFAULT_BETA: f64 = 3e-4;
pub const DEFAULT_FLOOR: f64 = 0.01;
pub const DEFAULT_OSCILLATION_CV: f64 = 0.05;
/// Barrier price at which the linear continuation starts.
pub const PRICE_KNEE: f64 = 1e3;
const CONVERGED_STREAK: usize = 100;
const BLOWUP_FACTOR: f64 = 1e3;

/// Numerical knobs of the fluid model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsConfig {
    /// Barrier weight in the link price.
    pub beta: f64,
    /// Active rates are clamped at this floor after each step.
    pub floor: f64,
    /// Per-path coefficient of variation above which the trailing window
    /// counts as oscillating.
    pub oscillation_cv: f64,
    /// Keep every `sample_stride`-th state.
    pub sample_stride: usize,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self { beta: DEFAULT_BETA, floor: DEFAULT_FLOOR, oscillation_cv: DEFAULT_OSCILLATION_CV, sample_stride: 1 }
    }
}

impl DynamicsConfig {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(DynamicsError::InvalidConfig(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.floor > 0.0 && self.floor.is_finite()) {
            return Err(DynamicsError::InvalidConfig(format!("floor must be positive, got {}", self.floor)));
        }
        if !(self.oscillation_cv > 0.0) {
            return Err(DynamicsError::InvalidConfig(format!(
                "oscillation threshold must be positive, got {}",
                self.oscillation_cv
            )));
        }
        if self.sample_stride == 0 {
            return Err(DynamicsError::InvalidConfig("sample_stride must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub time: f64,
    pub allocation: RateAllocation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub samples: Vec<Sample>,
    #[serde(rename = "final")]
    pub final_allocation: RateAllocation,
    pub converged: bool,
    pub oscillation_detected: bool,
    /// Steps actually taken; fewer than the horizon allows after early
    /// convergence.
    pub steps: usize,
    /// Times a rate was lifted back to the floor.
    pub clamp_count: usize,
    /// `dt` times a Gershgorin bound on the Jacobian's spectral radius at
    /// the final state. RK4 is stable on the negative real axis below 2.78;
    /// larger values mean the step is too coarse for this rest point.
    pub step_stiffness: f64,
}

impl Trajectory {
    pub fn final_time(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    /// Writes `time,path_id,rate` rows, one per path per sample.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "path_id", "rate"])?;
        for s in &self.samples {
            for (p, r) in s.allocation.rates.iter().enumerate() {
                w.write_record([format!("{:.9}", s.time), p.to_string(), format!("{r:.9}")])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Price charged by a link carrying `load` against `capacity`.
pub fn link_price(load: f64, capacity: f64, beta: f64) -> f64 {
    let overload = ((load - capacity) / capacity).max(0.0);
    let knee = beta / PRICE_KNEE;
    let slack = capacity - load;
    let barrier = if slack > knee { beta / slack } else { PRICE_KNEE + PRICE_KNEE / knee * (knee - slack) };
    overload + barrier
}

/// Derivative of [`link_price`] with respect to the load.
pub fn link_price_slope(load: f64, capacity: f64, beta: f64) -> f64 {
    let overload = if load > capacity { 1.0 / capacity } else { 0.0 };
    let knee = beta / PRICE_KNEE;
    let slack = capacity - load;
    overload + if slack > knee { beta / (slack * slack) } else { PRICE_KNEE / knee }
}

/// Precomputed structure for repeated vector-field evaluations.
struct Field<'a> {
    net: &'a Network,
    kind: ControllerKind,
    beta: f64,
    active: Vec<bool>,
    energy: Vec<f64>,
    loads: Vec<f64>,
    prices: Vec<f64>,
}

impl<'a> Field<'a> {
    fn new(net: &'a Network, kind: ControllerKind, beta: f64) -> Self {
        let formulation = kind.variant.formulation();
        let active = net.paths().iter().map(|p| formulation.is_active(net, p.id)).collect();
        let energy = net.paths().iter().map(|p| net.source_of(p.id).utility.energy_weight * p.energy_cost).collect();
        Self {
            net,
            kind,
            beta,
            active,
            energy,
            loads: vec![0.0; net.links().len()],
            prices: vec![0.0; net.links().len()],
        }
    }

    /// Largest Gershgorin row sum of the Jacobian at `rates`.
    fn spectral_bound(&mut self, rates: &[f64], multiplier: f64) -> f64 {
        let mut scratch = vec![0.0; rates.len()];
        self.eval(rates, multiplier, &mut scratch);
        let mut sharers = vec![0usize; self.loads.len()];
        for (p, path) in self.net.paths().iter().enumerate() {
            if self.active[p] {
                for l in &path.link_ids {
                    sharers[l.0] += 1;
                }
            }
        }
        let slopes: Vec<f64> = self
            .net
            .links()
            .iter()
            .enumerate()
            .map(|(l, link)| link_price_slope(self.loads[l], link.capacity, self.beta) * sharers[l] as f64)
            .collect();
        let mut bound = 0.0f64;
        for s in self.net.sources() {
            let active: Vec<_> = s.path_ids.iter().filter(|p| self.active[p.0]).collect();
            let total: f64 = active.iter().map(|p| rates[p.0]).sum();
            for &&p in &active {
                let own = match self.kind.variant {
                    ControllerVariant::CoupledMultipath => {
                        s.utility.curvature(total).unwrap_or(f64::INFINITY).abs() * active.len() as f64
                    }
                    _ => s.utility.curvature(rates[p.0]).unwrap_or(f64::INFINITY).abs(),
                };
                let links: f64 = self.net.path(p).link_ids.iter().map(|l| slopes[l.0]).sum();
                bound = bound.max(self.kind.gain * (multiplier * own + links));
            }
        }
        bound
    }

    fn eval(&mut self, rates: &[f64], multiplier: f64, out: &mut [f64]) {
        self.loads.iter_mut().for_each(|y| *y = 0.0);
        for (p, path) in self.net.paths().iter().enumerate() {
            if self.active[p] {
                for l in &path.link_ids {
                    self.loads[l.0] += rates[p];
                }
            }
        }
        for (l, link) in self.net.links().iter().enumerate() {
            self.prices[l] = link_price(self.loads[l], link.capacity, self.beta);
        }
        for s in self.net.sources() {
            let total: f64 = s.path_ids.iter().filter(|p| self.active[p.0]).map(|p| rates[p.0]).sum();
            for &p in &s.path_ids {
                if !self.active[p.0] {
                    out[p.0] = 0.0;
                    continue;
                }
                let arg = match self.kind.variant {
                    ControllerVariant::CoupledMultipath => total,
                    _ => rates[p.0],
                };
                let price: f64 = self.net.path(p).link_ids.iter().map(|l| self.prices[l.0]).sum();
                let marginal = multiplier * s.utility.gradient_unchecked(arg);
                out[p.0] = self.kind.gain * (marginal - self.energy[p.0] - price);
            }
        }
    }
}

/// `dr_p/dt` at `alloc` with unit traffic multiplier.
pub fn controller_vector_field(
    kind: ControllerKind,
    net: &Network,
    alloc: &RateAllocation,
    beta: f64,
) -> Result<Vec<f64>, DynamicsError> {
    check_len(net, alloc)?;
    let formulation = kind.variant.formulation();
    for (p, r) in alloc.rates.iter().enumerate() {
        if formulation.is_active(net, net.paths()[p].id) && !(*r > 0.0) {
            return Err(DynamicsError::Domain { path: p, rate: *r });
        }
    }
    let mut out = vec![0.0; alloc.len()];
    Field::new(net, kind, beta).eval(&alloc.rates, 1.0, &mut out);
    Ok(out)
}

fn check_len(net: &Network, alloc: &RateAllocation) -> Result<(), DynamicsError> {
    if alloc.len() != net.paths().len() {
        return Err(DynamicsError::AllocationMismatch { expected: net.paths().len(), got: alloc.len() });
    }
    Ok(())
}

/// Integrates from the uniform start with constant traffic and default
/// numerics.
pub fn integrate(
    kind: ControllerKind,
    net: &Network,
    horizon: f64,
    dt: f64,
    tol: f64,
) -> Result<Trajectory, DynamicsError> {
    integrate_with(kind, net, horizon, dt, tol, &TrafficModel::Constant, &DynamicsConfig::default())
}

/// Full integrator. With constant traffic the run stops once the projected
/// derivative norm stays below `tol` for 100 consecutive steps. Under
/// time-varying traffic there is no rest point, so the run covers the full
/// horizon and only the oscillation test applies.
pub fn integrate_with(
    kind: ControllerKind,
    net: &Network,
    horizon: f64,
    dt: f64,
    tol: f64,
    traffic: &TrafficModel,
    cfg: &DynamicsConfig,
) -> Result<Trajectory, DynamicsError> {
    kind.validate()?;
    cfg.validate()?;
    traffic.validate()?;
    let schedule = traffic::burst_schedule(traffic, horizon, dt).map_err(|e| match e {
        TrafficError::InvalidStep { dt, horizon } => DynamicsError::InvalidStep { dt, horizon },
        other => other.into(),
    })?;
    let n = net.paths().len();
    let mut field = Field::new(net, kind, cfg.beta);
    let floor = cfg.floor;
    let blowup = BLOWUP_FACTOR * net.total_capacity();

    let mut r = uniform_start(net, kind.variant.formulation(), floor);
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    let mut samples = vec![Sample { time: 0.0, allocation: RateAllocation::new(r.clone()) }];
    let mut streak = 0usize;
    let mut clamp_count = 0usize;
    let mut steps = 0usize;
    let mut converged = false;

    for (step, &m) in schedule.iter().enumerate() {
        field.eval(&r, m, &mut k1);
        if traffic.is_constant() {
            let norm = projected_norm(&r, &k1, &field.active, floor);
            streak = if norm < tol { streak + 1 } else { 0 };
            if streak >= CONVERGED_STREAK {
                converged = true;
                break;
            }
        }
        for p in 0..n {
            tmp[p] = r[p] + 0.5 * dt * k1[p];
        }
        field.eval(&tmp, m, &mut k2);
        for p in 0..n {
            tmp[p] = r[p] + 0.5 * dt * k2[p];
        }
        field.eval(&tmp, m, &mut k3);
        for p in 0..n {
            tmp[p] = r[p] + dt * k3[p];
        }
        field.eval(&tmp, m, &mut k4);
        for p in 0..n {
            if !field.active[p] {
                continue;
            }
            let next = r[p] + dt / 6.0 * (k1[p] + 2.0 * k2[p] + 2.0 * k3[p] + k4[p]);
            if !next.is_finite() || next.abs() > blowup {
                return Err(DynamicsError::NumericalBlowup { time: (step + 1) as f64 * dt, rate: next });
            }
            if next < floor {
                clamp_count += 1;
                r[p] = floor;
            } else {
                r[p] = next;
            }
        }
        steps = step + 1;
        if steps.is_multiple_of(cfg.sample_stride) {
            samples.push(Sample { time: steps as f64 * dt, allocation: RateAllocation::new(r.clone()) });
        }
    }
    if samples.last().map(|s| s.allocation.rates != r).unwrap_or(true) {
        samples.push(Sample { time: steps as f64 * dt, allocation: RateAllocation::new(r.clone()) });
    }

    let oscillation_detected = !converged && oscillates(&samples, &field.active, horizon / 2.0, cfg.oscillation_cv);
    let last_multiplier = schedule.get(steps.saturating_sub(1)).copied().unwrap_or(1.0);
    let step_stiffness = dt * field.spectral_bound(&r, last_multiplier);
    Ok(Trajectory {
        dt,
        samples,
        final_allocation: RateAllocation::new(r),
        converged,
        oscillation_detected,
        steps,
        clamp_count,
        step_stiffness,
    })
}

/// Euclidean norm of the derivative with components pushing a floored rate
/// further down removed.
fn projected_norm(r: &[f64], d: &[f64], active: &[bool], floor: f64) -> f64 {
    r.iter()
        .zip(d)
        .zip(active)
        .filter(|(_, &a)| a)
        .map(|((&r, &d), _)| if r <= floor && d < 0.0 { 0.0 } else { d * d })
        .sum::<f64>()
        .sqrt()
}

fn oscillates(samples: &[Sample], active: &[bool], from: f64, threshold: f64) -> bool {
    let window: Vec<&Sample> = samples.iter().filter(|s| s.time >= from).collect();
    if window.len() < 2 {
        return false;
    }
    let count = window.len() as f64;
    (0..active.len()).filter(|&p| active[p]).any(|p| {
        let mean = window.iter().map(|s| s.allocation.rates[p]).sum::<f64>() / count;
        let var = window.iter().map(|s| (s.allocation.rates[p] - mean).powi(2)).sum::<f64>() / count;
        mean > 0.0 && var.sqrt() / mean > threshold
    })
}
