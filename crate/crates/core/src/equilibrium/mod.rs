//! Network utility maximization: the single-path baseline `x*` and the
//! multipath equilibrium `x^n`.
//!
//! Both are computed by projected gradient ascent over path rates. Each
//! step projects exactly onto `{capacity constraints, r_p >= floor}` and the
//! step length is chosen by backtracking, so every iterate is feasible and
//! the objective never decreases.

mod brute_force;
mod projection;

pub use brute_force::{brute_force_equilibrium, brute_force_refined, BRUTE_FORCE_MAX_PATHS};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net_model::{LinkId, Network, PathId, SourceId};
use projection::{Polytope, Projector};

pub const DEFAULT_MAX_ITER: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("rate floor must be nonnegative, got {0}")]
    InvalidFloor(f64),
    #[error("source {0} has fewer than two paths")]
    NotMultipath(SourceId),
    #[error("floors on link {link} need {required} but capacity is {capacity}")]
    InfeasibleFloor { link: LinkId, required: f64, capacity: f64 },
    #[error("no convergence after {iterations} iterations (KKT residual {kkt_residual:e})")]
    NoConvergence { iterations: usize, kkt_residual: f64 },
    #[error("{paths} paths exceed the brute-force limit of {limit}")]
    TooLarge { paths: usize, limit: usize },
    #[error("grid step must be positive, got {0}")]
    InvalidGrid(f64),
}

/// Which utility-maximization program to solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    /// Each source confined to its primary path: `sum_x U_x(r_primary)`.
    SinglePath,
    /// Utility of the aggregate rate: `sum_x U_x(sum_p r_p)`.
    Coupled,
    /// Every path scored independently: `sum_x sum_p U_x(r_p)`.
    Uncoupled,
}

impl Formulation {
    pub fn is_active(self, net: &Network, path: PathId) -> bool {
        match self {
            Formulation::SinglePath => net.source_of(path).primary_path_id == path,
            _ => true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RateAllocation {
    /// Indexed by `PathId`; Mbit/s.
    pub rates: Vec<f64>,
}

impl RateAllocation {
    pub fn new(rates: Vec<f64>) -> Self {
        Self { rates }
    }

    pub fn zeros(net: &Network) -> Self {
        Self { rates: vec![0.0; net.paths().len()] }
    }

    pub fn rate(&self, path: PathId) -> f64 {
        self.rates[path.0]
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn source_totals(&self, net: &Network) -> Vec<f64> {
        net.source_totals(&self.rates)
    }

    pub fn link_loads(&self, net: &Network) -> Vec<f64> {
        net.link_loads(&self.rates)
    }

    /// Largest `load - capacity` over links; nonpositive when feasible.
    pub fn max_overload(&self, net: &Network) -> f64 {
        self.link_loads(net)
            .iter()
            .zip(net.links())
            .map(|(y, l)| y - l.capacity)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub allocation: RateAllocation,
    pub iterations: usize,
    /// Natural residual `|| r - P(r + grad f(r)) ||_inf`; zero exactly at
    /// KKT points.
    pub kkt_residual: f64,
    pub converged: bool,
    pub objective: f64,
    /// Capacity multipliers plus barrier prices, per link.
    pub link_prices: Vec<f64>,
    /// Objective after each accepted step, when requested.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub formulation: Formulation,
    /// Lower bound on every active path rate.
    pub floor: f64,
    /// Weight of `sum_l log(c_l - y_l)`; keeps loads strictly interior.
    pub barrier: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub record_history: bool,
}

impl SolveOptions {
    pub fn new(formulation: Formulation, floor: f64, tol: f64) -> Self {
        Self { formulation, floor, barrier: None, tol, max_iter: DEFAULT_MAX_ITER, record_history: false }
    }

    pub fn with_barrier(mut self, beta: f64) -> Self {
        self.barrier = Some(beta);
        self
    }
}

/// `x*`: maximizes total utility with every source on its primary path.
pub fn solve_baseline(net: &Network, tol: f64) -> Result<SolverReport, SolveError> {
    solve(net, &SolveOptions::new(Formulation::SinglePath, 0.0, tol))
}

/// `x^n`: maximizes total utility (energy-penalized where configured) over
/// all path rates with `r_p >= eps`.
pub fn solve_multipath(net: &Network, eps: f64, tol: f64) -> Result<SolverReport, SolveError> {
    if let Some(s) = net.sources().iter().find(|s| s.path_count() < 2) {
        return Err(SolveError::NotMultipath(s.id));
    }
    solve(net, &SolveOptions::new(Formulation::Coupled, eps, tol))
}

/// Objective of `formulation` at `rates`, with the optional barrier term.
/// Returns `-inf` outside the objective's domain.
pub fn objective(net: &Network, formulation: Formulation, rates: &[f64], barrier: Option<f64>) -> f64 {
    let mut total = 0.0;
    for s in net.sources() {
        let u = &s.utility;
        match formulation {
            Formulation::SinglePath => {
                let p = s.primary_path_id;
                total += u.value_unchecked(rates[p.0]) - u.energy_weight * net.path(p).energy_cost * rates[p.0];
            }
            Formulation::Coupled => {
                let x: f64 = s.path_ids.iter().map(|p| rates[p.0]).sum();
                total += u.value_unchecked(x);
                total -= energy(net, s.path_ids.iter().copied(), rates) * u.energy_weight;
            }
            Formulation::Uncoupled => {
                for p in &s.path_ids {
                    total += u.value_unchecked(rates[p.0]);
                }
                total -= energy(net, s.path_ids.iter().copied(), rates) * u.energy_weight;
            }
        }
    }
    if let Some(beta) = barrier {
        for (y, l) in net.link_loads(rates).iter().zip(net.links()) {
            let slack = l.capacity - y;
            if slack <= 0.0 {
                return f64::NEG_INFINITY;
            }
            total += beta * slack.ln();
        }
    }
    if total.is_nan() {
        f64::NEG_INFINITY
    } else {
        total
    }
}

fn energy(net: &Network, paths: impl Iterator<Item = PathId>, rates: &[f64]) -> f64 {
    paths.map(|p| net.path(p).energy_cost * rates[p.0]).sum()
}

/// Gradient of [`objective`] with respect to the path rates. Inactive paths
/// get zero.
pub fn objective_gradient(
    net: &Network,
    formulation: Formulation,
    rates: &[f64],
    barrier: Option<f64>,
    out: &mut [f64],
) {
    for s in net.sources() {
        let u = &s.utility;
        let total: f64 = s.path_ids.iter().map(|p| rates[p.0]).sum();
        for &p in &s.path_ids {
            let ec = u.energy_weight * net.path(p).energy_cost;
            out[p.0] = match formulation {
                Formulation::SinglePath if p == s.primary_path_id => u.gradient_unchecked(rates[p.0]) - ec,
                Formulation::SinglePath => 0.0,
                Formulation::Coupled => u.gradient_unchecked(total) - ec,
                Formulation::Uncoupled => u.gradient_unchecked(rates[p.0]) - ec,
            };
        }
    }
    if let Some(beta) = barrier {
        let loads = net.link_loads(rates);
        for (p, path) in net.paths().iter().enumerate() {
            if formulation.is_active(net, path.id) {
                out[p] -= path
                    .link_ids
                    .iter()
                    .map(|l| beta / (net.link(*l).capacity - loads[l.0]))
                    .sum::<f64>();
            }
        }
    }
}

fn polytope(net: &Network, opts: &SolveOptions) -> Result<Polytope, SolveError> {
    let n = net.paths().len();
    let active: Vec<bool> = net.paths().iter().map(|p| opts.formulation.is_active(net, p.id)).collect();
    let lower: Vec<f64> = active.iter().map(|&a| if a { opts.floor } else { 0.0 }).collect();
    let mut link_paths = Vec::with_capacity(net.links().len());
    let mut path_links = vec![Vec::new(); n];
    let mut capacity = Vec::with_capacity(net.links().len());
    for link in net.links() {
        let ps: Vec<usize> = net
            .paths_through_link(link.id)
            .expect("link from this network")
            .iter()
            .map(|p| p.0)
            .filter(|&p| active[p])
            .collect();
        let required: f64 = ps.iter().map(|&p| lower[p]).sum();
        if required > link.capacity {
            return Err(SolveError::InfeasibleFloor { link: link.id, required, capacity: link.capacity });
        }
        for &p in &ps {
            path_links[p].push(link.id.0);
        }
        link_paths.push(ps);
        capacity.push(link.capacity);
    }
    Ok(Polytope { link_paths, path_links, capacity, lower, active })
}

/// Symmetric feasible start: every active path at `floor + m` with the same
/// `m`, at most half of the tightest link's spare capacity per path.
pub fn uniform_start(net: &Network, formulation: Formulation, floor: f64) -> Vec<f64> {
    let active: Vec<bool> = net.paths().iter().map(|p| formulation.is_active(net, p.id)).collect();
    let mut mass = f64::INFINITY;
    for link in net.links() {
        let ps = net.paths_through_link(link.id).expect("link from this network");
        let count = ps.iter().filter(|p| active[p.0]).count();
        if count > 0 {
            let spare = link.capacity - floor * count as f64;
            mass = mass.min(spare / (2.0 * count as f64));
        }
    }
    let mass = if mass.is_finite() { mass.max(0.0) } else { 1.0 };
    active.iter().map(|&a| if a { floor + mass } else { 0.0 }).collect()
}

pub fn solve(net: &Network, opts: &SolveOptions) -> Result<SolverReport, SolveError> {
    if !(opts.tol > 0.0) {
        return Err(SolveError::InvalidTolerance(opts.tol));
    }
    if !(opts.floor >= 0.0 && opts.floor.is_finite()) {
        return Err(SolveError::InvalidFloor(opts.floor));
    }
    let poly = polytope(net, opts)?;
    let n = net.paths().len();
    let f = |r: &[f64]| objective(net, opts.formulation, r, opts.barrier);
    let grad = |r: &[f64], g: &mut [f64]| objective_gradient(net, opts.formulation, r, opts.barrier, g);

    let mut proj = Projector::new(&poly);
    let mut residual_proj = Projector::new(&poly);
    let mut r = uniform_start(net, opts.formulation, opts.floor);
    let mut value = f(&r);
    let mut g = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut candidate = vec![0.0; n];
    let mut g_next = vec![0.0; n];
    let mut step = 1.0;
    let mut history = Vec::new();
    let mut residual = f64::INFINITY;

    let mut iterations = 0;
    while iterations < opts.max_iter {
        grad(&r, &mut g);
        residual = natural_residual(&poly, &mut residual_proj, &r, &g, &mut trial, &mut candidate);
        if residual <= opts.tol {
            break;
        }
        iterations += 1;

        // Backtrack until the quadratic upper model certifies ascent. Near
        // the optimum the gains drop below rounding; there a local Lipschitz
        // test on the gradient decides instead.
        let slack = 1e-14 * (1.0 + value.abs());
        let mut accepted = false;
        while step > 1e-30 {
            for p in 0..n {
                trial[p] = r[p] + step * g[p];
            }
            proj.project(&poly, &trial, &mut candidate);
            let next = f(&candidate);
            if next.is_finite() {
                let (mut lin, mut sq) = (0.0, 0.0);
                for p in 0..n {
                    let d = candidate[p] - r[p];
                    lin += g[p] * d;
                    sq += d * d;
                }
                let ok = if (next - value).abs() > slack {
                    next >= value + lin - sq / (2.0 * step) && next > value
                } else {
                    grad(&candidate, &mut g_next);
                    let moved: f64 = g_next.iter().zip(&g).map(|(a, b)| (a - b).powi(2)).sum();
                    moved * step * step <= sq
                };
                if ok {
                    accepted = true;
                    r.copy_from_slice(&candidate);
                    value = next;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        if opts.record_history {
            history.push(value);
        }
        step *= 2.0;
    }

    grad(&r, &mut g);
    residual = residual.min(natural_residual(&poly, &mut residual_proj, &r, &g, &mut trial, &mut candidate));
    let converged = residual <= opts.tol;
    if !converged {
        return Err(SolveError::NoConvergence { iterations, kkt_residual: residual });
    }

    let loads = net.link_loads(&r);
    let link_prices = net
        .links()
        .iter()
        .zip(&residual_proj.lambda)
        .map(|(l, lambda)| lambda + opts.barrier.map_or(0.0, |b| b / (l.capacity - loads[l.id.0])))
        .collect();
    Ok(SolverReport {
        allocation: RateAllocation::new(r),
        iterations,
        kkt_residual: residual,
        converged,
        objective: value,
        link_prices,
        history,
    })
}

fn natural_residual(
    poly: &Polytope,
    proj: &mut Projector,
    r: &[f64],
    g: &[f64],
    trial: &mut [f64],
    out: &mut [f64],
) -> f64 {
    for p in 0..r.len() {
        trial[p] = r[p] + g[p];
    }
    proj.project(poly, trial, out);
    r.iter().zip(out.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}
