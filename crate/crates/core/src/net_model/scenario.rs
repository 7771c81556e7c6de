use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LinkId, NetError, Network, NetworkBuilder};
use crate::utility::UtilitySpec;

/// Longest random route generated for the Internet family.
const MAX_INTERNET_HOPS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Topology {
    /// Random source/link bipartite assignment; each path is 1 to 3 links.
    Internet {
        n_sources: usize,
        n_links: usize,
        paths_per_source: usize,
        capacity_min: f64,
        capacity_max: f64,
    },
    /// Three-layer k-ary fat-tree; one source per host.
    Datacenter { pods: usize, link_capacity: f64 },
    /// Devices with one single-link path per radio interface. Interface `i`
    /// of every device shares the access link `i`.
    Wireless {
        n_devices: usize,
        interfaces_per_device: usize,
        interface_capacity: f64,
        energy_cost: f64,
        energy_weight: f64,
    },
}

impl Topology {
    pub fn name(&self) -> &'static str {
        match self {
            Topology::Internet { .. } => "internet",
            Topology::Datacenter { .. } => "datacenter",
            Topology::Wireless { .. } => "wireless",
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |m: String| Err(NetError::InvalidSpec(m));
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(NetError::InvalidSpec(format!("{name} must be > 0, got {v}")))
            }
        };
        match *self {
            Topology::Internet { n_sources, n_links, paths_per_source, capacity_min, capacity_max } => {
                if n_sources == 0 || n_links == 0 {
                    return bad("n_sources and n_links must be positive".into());
                }
                if paths_per_source < 2 {
                    return bad(format!("paths_per_source must be >= 2, got {paths_per_source}"));
                }
                if n_links < paths_per_source {
                    return bad(format!(
                        "{paths_per_source} distinct paths per source need at least as many links, got {n_links}"
                    ));
                }
                positive("capacity_min", capacity_min)?;
                positive("capacity_max", capacity_max)?;
                if capacity_min > capacity_max {
                    return bad(format!("capacity_min {capacity_min} exceeds capacity_max {capacity_max}"));
                }
            }
            Topology::Datacenter { pods, link_capacity } => {
                if pods == 0 || pods % 2 != 0 {
                    return bad(format!("fat-tree pods must be a positive even number, got {pods}"));
                }
                if pods < 4 {
                    return bad(format!("fat-tree with {pods} pods gives hosts fewer than 2 paths"));
                }
                positive("link_capacity", link_capacity)?;
            }
            Topology::Wireless { n_devices, interfaces_per_device, interface_capacity, energy_cost, energy_weight } => {
                if n_devices == 0 {
                    return bad("n_devices must be positive".into());
                }
                if interfaces_per_device < 2 {
                    return bad(format!("interfaces_per_device must be >= 2, got {interfaces_per_device}"));
                }
                positive("interface_capacity", interface_capacity)?;
                if !(energy_cost.is_finite() && energy_cost >= 0.0) {
                    return bad(format!("energy_cost must be >= 0, got {energy_cost}"));
                }
                if !(energy_weight.is_finite() && energy_weight >= 0.0) {
                    return bad(format!("energy_weight must be >= 0, got {energy_weight}"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub topology: Topology,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(topology: Topology, seed: u64) -> Self {
        Self { topology, seed }
    }
}

/// Generates the network for `spec`. Output depends only on `spec`.
pub fn build_scenario(spec: &ScenarioSpec) -> Result<Network, NetError> {
    spec.topology.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match spec.topology {
        Topology::Internet { n_sources, n_links, paths_per_source, capacity_min, capacity_max } => {
            internet(&mut rng, n_sources, n_links, paths_per_source, capacity_min, capacity_max)
        }
        Topology::Datacenter { pods, link_capacity } => fat_tree(&mut rng, pods, link_capacity),
        Topology::Wireless { n_devices, interfaces_per_device, interface_capacity, energy_cost, energy_weight } => {
            wireless(&mut rng, n_devices, interfaces_per_device, interface_capacity, energy_cost, energy_weight)
        }
    }
}

fn internet(
    rng: &mut ChaCha8Rng,
    n_sources: usize,
    n_links: usize,
    paths_per_source: usize,
    capacity_min: f64,
    capacity_max: f64,
) -> Result<Network, NetError> {
    let mut b = NetworkBuilder::default();
    let links: Vec<LinkId> = (0..n_links)
        .map(|_| {
            let c = if capacity_min == capacity_max {
                capacity_min
            } else {
                rng.random_range(capacity_min..capacity_max)
            };
            b.link(c, "core")
        })
        .collect();

    for _ in 0..n_sources {
        let s = b.source(UtilitySpec::proportional_fair());
        // Each path owns one anchor link that no sibling path touches, which
        // keeps the routes of one source pairwise distinct.
        let anchors = sample(rng, n_links, paths_per_source).into_vec();
        let others: Vec<usize> = (0..n_links).filter(|l| !anchors.contains(l)).collect();
        for &anchor in &anchors {
            let hops = rng.random_range(1..=MAX_INTERNET_HOPS).min(others.len() + 1);
            let mut route = vec![links[anchor]];
            route.extend(sample(rng, others.len(), hops - 1).into_iter().map(|i| links[others[i]]));
            b.path(s, &route, 0.0);
        }
    }
    b.build()
}

/// Switch inventory of a k-ary fat-tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FatTreeLayout {
    pub k: usize,
}

impl FatTreeLayout {
    pub const LAYERS: [&'static str; 3] = ["edge", "agg", "core"];

    pub fn hosts(&self) -> usize {
        self.k * self.k * self.k / 4
    }

    pub fn edge_switches(&self) -> usize {
        self.k * self.k / 2
    }

    pub fn aggregation_switches(&self) -> usize {
        self.k * self.k / 2
    }

    pub fn core_switches(&self) -> usize {
        self.k * self.k / 4
    }

    /// Directed switch-to-switch links (hosts attach outside the model).
    pub fn fabric_links(&self) -> usize {
        self.k * self.k * self.k
    }

    /// Equal-cost, link-disjoint inter-pod paths per host.
    pub fn paths_per_host(&self) -> usize {
        self.k / 2
    }
}

fn fat_tree(rng: &mut ChaCha8Rng, k: usize, capacity: f64) -> Result<Network, NetError> {
    let half = k / 2;
    let mut b = NetworkBuilder::default();

    // up[pod][edge][agg], down[pod][agg][edge]
    let mut up = vec![vec![vec![LinkId(0); half]; half]; k];
    let mut down = vec![vec![vec![LinkId(0); half]; half]; k];
    for pod in 0..k {
        for e in 0..half {
            for a in 0..half {
                up[pod][e][a] = b.link(capacity, "edge-agg");
                down[pod][a][e] = b.link(capacity, "agg-edge");
            }
        }
    }
    // Aggregation switch `a` of every pod connects to core group `a`.
    // to_core[pod][agg][j], from_core[pod][agg][j]
    let mut to_core = vec![vec![vec![LinkId(0); half]; half]; k];
    let mut from_core = vec![vec![vec![LinkId(0); half]; half]; k];
    for pod in 0..k {
        for a in 0..half {
            for j in 0..half {
                to_core[pod][a][j] = b.link(capacity, "agg-core");
                from_core[pod][a][j] = b.link(capacity, "core-agg");
            }
        }
    }

    let hosts_per_pod = half * half;
    let n_hosts = k * hosts_per_pod;
    for host in 0..n_hosts {
        let (pod, edge) = (host / hosts_per_pod, (host % hosts_per_pod) / half);
        // Uniform destination among hosts of other pods.
        let mut dst = rng.random_range(0..n_hosts - hosts_per_pod);
        if dst >= pod * hosts_per_pod {
            dst += hosts_per_pod;
        }
        let (dst_pod, dst_edge) = (dst / hosts_per_pod, (dst % hosts_per_pod) / half);

        let s = b.source(UtilitySpec::proportional_fair());
        let mut ids = Vec::with_capacity(half);
        for a in 0..half {
            let j = rng.random_range(0..half);
            let route = [
                up[pod][edge][a],
                to_core[pod][a][j],
                from_core[dst_pod][a][j],
                down[dst_pod][a][dst_edge],
            ];
            ids.push(b.path(s, &route, 0.0));
        }
        b.set_primary(s, ids[rng.random_range(0..half)]);
    }
    b.build()
}

fn wireless(
    rng: &mut ChaCha8Rng,
    n_devices: usize,
    interfaces: usize,
    capacity: f64,
    energy_cost: f64,
    energy_weight: f64,
) -> Result<Network, NetError> {
    let mut b = NetworkBuilder::default();
    let cells: Vec<LinkId> = (0..interfaces).map(|i| b.link(capacity, format!("if{i}"))).collect();
    let utility = UtilitySpec::proportional_fair().with_energy_weight(energy_weight);
    for _ in 0..n_devices {
        let s = b.source(utility);
        let ids: Vec<_> = cells.iter().map(|&l| b.path(s, &[l], energy_cost)).collect();
        b.set_primary(s, ids[rng.random_range(0..interfaces)]);
    }
    b.build()
}
