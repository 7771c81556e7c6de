//! Exhaustive grid search for tiny instances. Shares no code with the
//! gradient solver beyond the utility functions themselves.

use super::{Formulation, RateAllocation, SolveError};
use crate::net_model::Network;

pub const BRUTE_FORCE_MAX_PATHS: usize = 4;

/// Best grid point `floor + k * grid_step` (per active path) inside the
/// capacity polytope. Falls back to all zeros when no grid point has a finite
/// objective.
pub fn brute_force_equilibrium(
    net: &Network,
    formulation: Formulation,
    floor: f64,
    grid_step: f64,
) -> Result<RateAllocation, SolveError> {
    let n = net.paths().len();
    if n > BRUTE_FORCE_MAX_PATHS {
        return Err(SolveError::TooLarge { paths: n, limit: BRUTE_FORCE_MAX_PATHS });
    }
    if !(grid_step > 0.0 && grid_step.is_finite()) {
        return Err(SolveError::InvalidGrid(grid_step));
    }
    let mut search = Search::new(net, formulation, floor, grid_step);
    search.descend(0);
    Ok(RateAllocation::new(search.best))
}

/// Repeated exhaustive search: after the first pass, each level divides the
/// step by `ZOOM` and enumerates the box of three old steps around the best
/// point so far. Returns the allocation and the final step.
pub fn brute_force_refined(
    net: &Network,
    formulation: Formulation,
    floor: f64,
    grid_step: f64,
    levels: usize,
) -> Result<(RateAllocation, f64), SolveError> {
    const ZOOM: f64 = 4.0;
    let mut best = brute_force_equilibrium(net, formulation, floor, grid_step)?.rates;
    let mut step = grid_step;
    for _ in 0..levels {
        let mut search = Search::new(net, formulation, floor, step / ZOOM);
        for (p, b) in best.iter().enumerate() {
            search.lower[p] = (b - 3.0 * step).max(floor);
            search.upper[p] = b + 3.0 * step;
        }
        search.descend(0);
        if search.best_value == f64::NEG_INFINITY {
            break;
        }
        best = search.best;
        step /= ZOOM;
    }
    Ok((RateAllocation::new(best), step))
}

struct Search<'a> {
    net: &'a Network,
    formulation: Formulation,
    step: f64,
    active: Vec<bool>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    residual: Vec<f64>,
    current: Vec<f64>,
    best: Vec<f64>,
    best_value: f64,
}

impl<'a> Search<'a> {
    fn new(net: &'a Network, formulation: Formulation, floor: f64, step: f64) -> Self {
        let n = net.paths().len();
        Self {
            net,
            formulation,
            step,
            active: net.paths().iter().map(|p| formulation.is_active(net, p.id)).collect(),
            lower: vec![floor; n],
            upper: vec![f64::INFINITY; n],
            residual: net.links().iter().map(|l| l.capacity).collect(),
            current: vec![0.0; n],
            best: vec![0.0; n],
            best_value: f64::NEG_INFINITY,
        }
    }

    fn descend(&mut self, p: usize) {
        if p == self.current.len() {
            let v = self.evaluate();
            if v > self.best_value {
                self.best_value = v;
                self.best.copy_from_slice(&self.current);
            }
            return;
        }
        if !self.active[p] {
            self.current[p] = 0.0;
            self.descend(p + 1);
            return;
        }
        let links: Vec<usize> = self.net.paths()[p].link_ids.iter().map(|l| l.0).collect();
        let room = links.iter().map(|&l| self.residual[l]).fold(self.upper[p], f64::min);
        let mut k = 0usize;
        let mut boundary_done = !room.is_finite() || room < self.lower[p];
        loop {
            let mut r = self.lower[p] + k as f64 * self.step;
            if r > room + 1e-12 {
                // The saturated point itself, which the grid usually misses.
                if boundary_done || r - self.step >= room - 1e-12 {
                    break;
                }
                r = room;
                boundary_done = true;
            }
            self.current[p] = r;
            for &l in &links {
                self.residual[l] -= r;
            }
            self.descend(p + 1);
            for &l in &links {
                self.residual[l] += r;
            }
            k += 1;
        }
        self.current[p] = 0.0;
    }

    fn evaluate(&self) -> f64 {
        let mut total = 0.0;
        for s in self.net.sources() {
            let u = &s.utility;
            let mut sum = 0.0;
            let mut own = 0.0;
            let mut energy = 0.0;
            for &p in &s.path_ids {
                let r = self.current[p.0];
                if !self.active[p.0] {
                    continue;
                }
                sum += r;
                own += u.value_unchecked(r);
                energy += self.net.path(p).energy_cost * r;
            }
            total += match self.formulation {
                Formulation::SinglePath | Formulation::Coupled => u.value_unchecked(sum),
                Formulation::Uncoupled => own,
            } - u.energy_weight * energy;
        }
        if total.is_nan() {
            f64::NEG_INFINITY
        } else {
            total
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net_model::NetworkBuilder;
    use crate::utility::UtilitySpec;

    #[test]
    fn finds_even_split() {
        let mut b = NetworkBuilder::default();
        let l = b.link(10.0, "l");
        for _ in 0..2 {
            let s = b.source(UtilitySpec::proportional_fair());
            b.path(s, &[l], 0.0);
        }
        let net = b.build().unwrap();
        let a = brute_force_equilibrium(&net, Formulation::SinglePath, 0.0, 0.05).unwrap();
        assert!((a.rates[0] - 5.0).abs() <= 0.05 && (a.rates[1] - 5.0).abs() <= 0.05);
    }

    #[test]
    fn refinement_converges_on_weighted_split() {
        let mut b = NetworkBuilder::default();
        let l = b.link(8.0, "l");
        for w in [1.0, 3.0] {
            let s = b.source(UtilitySpec::proportional_fair().with_weight(w));
            b.path(s, &[l], 0.0);
        }
        let net = b.build().unwrap();
        let (a, step) = brute_force_refined(&net, Formulation::SinglePath, 0.0, 0.3, 5).unwrap();
        assert!(step < 1e-3);
        assert!((a.rates[0] - 2.0).abs() <= 2.0 * step && (a.rates[1] - 6.0).abs() <= 2.0 * step, "{a:?}");
    }

    #[test]
    fn empty_grid_gives_zeros() {
        let mut b = NetworkBuilder::default();
        let l = b.link(1.0, "l");
        let s = b.source(UtilitySpec::proportional_fair());
        b.path(s, &[l], 0.0);
        let net = b.build().unwrap();
        let a = brute_force_equilibrium(&net, Formulation::Coupled, 2.0, 0.1).unwrap();
        assert_eq!(a.rates, vec![0.0]);
    }

    #[test]
    fn guards_against_large_instances() {
        let mut b = NetworkBuilder::default();
        let l = b.link(10.0, "l");
        let s = b.source(UtilitySpec::proportional_fair());
        for _ in 0..5 {
            b.path(s, &[l], 0.0);
        }
        let net = b.build().unwrap();
        let err = brute_force_equilibrium(&net, Formulation::Coupled, 0.0, 0.1).unwrap_err();
        assert_eq!(err, SolveError::TooLarge { paths: 5, limit: 4 });
    }
}
