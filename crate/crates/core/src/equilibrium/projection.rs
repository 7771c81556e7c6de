//! Euclidean projection onto `{ r : r_p >= lb_p, sum_{p in l} r_p <= c_l }`.
//!
//! Solved by cyclic coordinate ascent on the link multipliers (Hildreth's
//! method). Each coordinate step is an exact piecewise-linear root find, so
//! a sweep costs one pass over the link/path incidences.

/// Maximum sweeps per projection before the repair pass takes over.
const MAX_SWEEPS: usize = 20_000;

#[derive(Debug, Clone)]
pub(crate) struct Polytope {
    /// Active paths crossing each constrained link.
    pub link_paths: Vec<Vec<usize>>,
    /// Constrained links on each path.
    pub path_links: Vec<Vec<usize>>,
    pub capacity: Vec<f64>,
    pub lower: Vec<f64>,
    /// Inactive paths are pinned to zero and never move.
    pub active: Vec<bool>,
}

/// Projection workspace. Multipliers persist between calls to warm-start
/// successive, nearby projections.
#[derive(Debug, Clone)]
pub(crate) struct Projector {
    pub lambda: Vec<f64>,
    shadow: Vec<f64>,
    scratch: Vec<(f64, f64)>,
}

impl Projector {
    pub fn new(poly: &Polytope) -> Self {
        Self {
            lambda: vec![0.0; poly.capacity.len()],
            shadow: vec![0.0; poly.lower.len()],
            scratch: Vec::new(),
        }
    }

    /// Writes the projection of `z` into `out`. The result is feasible to
    /// machine precision.
    pub fn project(&mut self, poly: &Polytope, z: &[f64], out: &mut [f64]) {
        let n = z.len();
        for p in 0..n {
            self.shadow[p] = poly.path_links[p].iter().map(|&l| self.lambda[l]).sum();
        }
        for _ in 0..MAX_SWEEPS {
            let mut moved = 0.0f64;
            for l in 0..poly.capacity.len() {
                let old = self.lambda[l];
                let new = self.link_multiplier(poly, z, l, old);
                if new != old {
                    for &p in &poly.link_paths[l] {
                        self.shadow[p] += new - old;
                    }
                    self.lambda[l] = new;
                    moved = moved.max((new - old).abs() / (1.0 + new.abs()));
                }
            }
            if moved <= 1e-15 {
                break;
            }
        }
        for p in 0..n {
            out[p] = if poly.active[p] { (z[p] - self.shadow[p]).max(poly.lower[p]) } else { 0.0 };
        }
        repair(poly, out);
    }

    /// Smallest `lambda >= 0` with `sum_p max(lb_p, g_p - lambda) <= c`,
    /// where `g_p` excludes this link's own multiplier.
    fn link_multiplier(&mut self, poly: &Polytope, z: &[f64], l: usize, current: f64) -> f64 {
        let cap = poly.capacity[l];
        self.scratch.clear();
        let mut floor_sum = 0.0;
        let mut load_at_zero = 0.0;
        for &p in &poly.link_paths[l] {
            let g = z[p] - (self.shadow[p] - current);
            let lb = poly.lower[p];
            load_at_zero += g.max(lb);
            floor_sum += lb;
            self.scratch.push((g - lb, g));
        }
        if load_at_zero <= cap {
            return 0.0;
        }
        // Walk breakpoints from the largest; paths above the current
        // breakpoint contribute `g - lambda`, the rest sit at their floor.
        self.scratch.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut g_sum = 0.0;
        let mut lb_sum = floor_sum;
        for i in 0..self.scratch.len() {
            let (bp, g) = self.scratch[i];
            g_sum += g;
            lb_sum -= g - bp;
            let count = (i + 1) as f64;
            let lambda = (g_sum + lb_sum - cap) / count;
            let next = self.scratch.get(i + 1).map_or(f64::NEG_INFINITY, |x| x.0);
            if lambda >= next {
                return lambda.max(0.0).min(bp.max(0.0));
            }
        }
        // Only reached when the floors alone exceed capacity.
        self.scratch[0].0.max(0.0)
    }
}

/// Scales down the above-floor excess on any overloaded link. Reducing a
/// rate never raises another link's load, so one ordered pass suffices.
pub(crate) fn repair(poly: &Polytope, r: &mut [f64]) {
    for (l, paths) in poly.link_paths.iter().enumerate() {
        let load: f64 = paths.iter().map(|&p| r[p]).sum();
        let cap = poly.capacity[l];
        if load > cap {
            let floors: f64 = paths.iter().map(|&p| poly.lower[p]).sum();
            let excess = load - floors;
            let factor = if excess > 0.0 { ((cap - floors) / excess).clamp(0.0, 1.0) } else { 0.0 };
            for &p in paths {
                r[p] = poly.lower[p] + (r[p] - poly.lower[p]) * factor;
            }
            // Rounding can leave a last-ulp overshoot.
            let after: f64 = paths.iter().map(|&p| r[p]).sum();
            if after > cap {
                let shave = (after - cap) / paths.len() as f64;
                for &p in paths {
                    r[p] = (r[p] - shave).max(poly.lower[p]);
                }
            }
        }
    }
}
