//! Links, paths and sources, plus generators for the three scenario
//! families (see [`scenario`]).
//!
//! Identifiers are dense indices: `LinkId(i)` names `links()[i]`. A
//! [`Network`] is validated once on construction and immutable afterwards,
//! so it can be shared freely between concurrent solver and integrator runs.

mod scenario;

pub use scenario::{build_scenario, FatTreeLayout, ScenarioSpec, Topology};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::utility::UtilitySpec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("invalid scenario spec: {0}")]
    InvalidSpec(String),
    #[error("invalid network: {0}")]
    Invalid(String),
    #[error("unknown link {0}")]
    UnknownLink(LinkId),
}

macro_rules! dense_id {
    ($name:ident, $prefix:literal) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub usize);

        impl $name {
            pub fn index(self) -> usize {
                self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

dense_id!(LinkId, "l");
dense_id!(PathId, "p");
dense_id!(SourceId, "s");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Link {
    pub id: LinkId,
    /// Mbit/s.
    pub capacity: f64,
    pub tag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Path {
    pub id: PathId,
    pub source_id: SourceId,
    pub link_ids: Vec<LinkId>,
    /// Energy per unit rate; only priced when the owning source has a
    /// positive energy weight.
    #[serde(default)]
    pub energy_cost: f64,
}

impl Path {
    pub fn hop_count(&self) -> usize {
        self.link_ids.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Source {
    pub id: SourceId,
    pub path_ids: Vec<PathId>,
    pub primary_path_id: PathId,
    pub utility: UtilitySpec,
}

impl Source {
    pub fn path_count(&self) -> usize {
        self.path_ids.len()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NetworkDef {
    links: Vec<Link>,
    paths: Vec<Path>,
    sources: Vec<Source>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkDef", into = "NetworkDef")]
pub struct Network {
    links: Vec<Link>,
    paths: Vec<Path>,
    sources: Vec<Source>,
    link_paths: Vec<Vec<PathId>>,
}

impl TryFrom<NetworkDef> for Network {
    type Error = NetError;

    fn try_from(def: NetworkDef) -> Result<Self, NetError> {
        Network::new(def.links, def.paths, def.sources)
    }
}

impl From<Network> for NetworkDef {
    fn from(net: Network) -> Self {
        NetworkDef { links: net.links, paths: net.paths, sources: net.sources }
    }
}

impl Network {
    pub fn new(links: Vec<Link>, paths: Vec<Path>, sources: Vec<Source>) -> Result<Self, NetError> {
        let link_paths = validate(&links, &paths, &sources)?;
        Ok(Self { links, paths, sources, link_paths })
    }

    pub fn builder() -> NetworkBuilder {
        NetworkBuilder::default()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn sources(&self) -> &[Source] {
        &self.sources
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.0]
    }

    pub fn path(&self, id: PathId) -> &Path {
        &self.paths[id.0]
    }

    pub fn source(&self, id: SourceId) -> &Source {
        &self.sources[id.0]
    }

    pub fn source_of(&self, path: PathId) -> &Source {
        &self.sources[self.paths[path.0].source_id.0]
    }

    /// Paths whose route contains `link`, in increasing path order.
    pub fn paths_through_link(&self, link: LinkId) -> Result<&[PathId], NetError> {
        self.link_paths.get(link.0).map(Vec::as_slice).ok_or(NetError::UnknownLink(link))
    }

    pub fn total_capacity(&self) -> f64 {
        self.links.iter().map(|l| l.capacity).sum()
    }

    /// Per-link aggregate rate `sum over p through l of rates[p]`.
    pub fn link_loads(&self, rates: &[f64]) -> Vec<f64> {
        debug_assert_eq!(rates.len(), self.paths.len());
        self.link_paths
            .iter()
            .map(|ps| ps.iter().map(|p| rates[p.0]).sum())
            .collect()
    }

    /// Per-source totals `r_x`.
    pub fn source_totals(&self, rates: &[f64]) -> Vec<f64> {
        debug_assert_eq!(rates.len(), self.paths.len());
        self.sources
            .iter()
            .map(|s| s.path_ids.iter().map(|p| rates[p.0]).sum())
            .collect()
    }

    /// Every source carries at least two paths.
    pub fn is_multipath(&self) -> bool {
        self.sources.iter().all(|s| s.path_count() >= 2)
    }

    pub fn with_utility(&self, f: impl Fn(&Source) -> UtilitySpec) -> Result<Self, NetError> {
        let mut sources = self.sources.clone();
        for s in &mut sources {
            s.utility = f(s);
        }
        Network::new(self.links.clone(), self.paths.clone(), sources)
    }

    /// Same structure with every capacity multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, NetError> {
        let mut links = self.links.clone();
        for l in &mut links {
            l.capacity *= factor;
        }
        Network::new(links, self.paths.clone(), self.sources.clone())
    }
}

fn validate(links: &[Link], paths: &[Path], sources: &[Source]) -> Result<Vec<Vec<PathId>>, NetError> {
    let invalid = |msg: String| Err(NetError::Invalid(msg));
    if links.is_empty() {
        return invalid("network has no links".into());
    }
    if sources.is_empty() {
        return invalid("network has no sources".into());
    }
    for (i, l) in links.iter().enumerate() {
        if l.id.0 != i {
            return invalid(format!("link at position {i} has id {}", l.id));
        }
        if !(l.capacity.is_finite() && l.capacity > 0.0) {
            return invalid(format!("link {} capacity must be > 0, got {}", l.id, l.capacity));
        }
    }
    let mut link_paths = vec![Vec::new(); links.len()];
    for (i, p) in paths.iter().enumerate() {
        if p.id.0 != i {
            return invalid(format!("path at position {i} has id {}", p.id));
        }
        if p.link_ids.is_empty() {
            return invalid(format!("path {} has no links", p.id));
        }
        if !(p.energy_cost.is_finite() && p.energy_cost >= 0.0) {
            return invalid(format!("path {} energy cost must be >= 0", p.id));
        }
        if p.source_id.0 >= sources.len() {
            return invalid(format!("path {} references unknown source {}", p.id, p.source_id));
        }
        for (k, l) in p.link_ids.iter().enumerate() {
            if l.0 >= links.len() {
                return invalid(format!("path {} references unknown link {l}", p.id));
            }
            if p.link_ids[..k].contains(l) {
                return invalid(format!("path {} repeats link {l}", p.id));
            }
            link_paths[l.0].push(p.id);
        }
    }
    let mut owner = vec![None; paths.len()];
    for (i, s) in sources.iter().enumerate() {
        if s.id.0 != i {
            return invalid(format!("source at position {i} has id {}", s.id));
        }
        if s.path_ids.is_empty() {
            return invalid(format!("source {} has no paths", s.id));
        }
        if !s.path_ids.contains(&s.primary_path_id) {
            return invalid(format!("source {} primary path {} is not one of its paths", s.id, s.primary_path_id));
        }
        s.utility
            .validate()
            .map_err(|e| NetError::Invalid(format!("source {}: {e}", s.id)))?;
        for p in &s.path_ids {
            let Some(path) = paths.get(p.0) else {
                return invalid(format!("source {} references unknown path {p}", s.id));
            };
            if path.source_id != s.id {
                return invalid(format!("path {p} is listed by source {} but owned by {}", s.id, path.source_id));
            }
            if owner[p.0].replace(s.id).is_some() {
                return invalid(format!("path {p} listed twice"));
            }
        }
    }
    if let Some(i) = owner.iter().position(Option::is_none) {
        return invalid(format!("path p{i} belongs to no source"));
    }
    Ok(link_paths)
}

/// Incremental construction with ids assigned in insertion order.
#[derive(Debug, Default, Clone)]
pub struct NetworkBuilder {
    links: Vec<Link>,
    paths: Vec<Path>,
    sources: Vec<Source>,
}

impl NetworkBuilder {
    pub fn link(&mut self, capacity: f64, tag: impl Into<String>) -> LinkId {
        let id = LinkId(self.links.len());
        self.links.push(Link { id, capacity, tag: tag.into() });
        id
    }

    pub fn source(&mut self, utility: UtilitySpec) -> SourceId {
        let id = SourceId(self.sources.len());
        // Placeholder primary; fixed up by the first `path` call.
        self.sources.push(Source { id, path_ids: Vec::new(), primary_path_id: PathId(usize::MAX), utility });
        id
    }

    /// Adds a path for `source`. The first path added becomes the primary.
    pub fn path(&mut self, source: SourceId, links: &[LinkId], energy_cost: f64) -> PathId {
        let id = PathId(self.paths.len());
        self.paths.push(Path { id, source_id: source, link_ids: links.to_vec(), energy_cost });
        if let Some(s) = self.sources.get_mut(source.0) {
            if s.path_ids.is_empty() {
                s.primary_path_id = id;
            }
            s.path_ids.push(id);
        }
        id
    }

    pub fn set_primary(&mut self, source: SourceId, path: PathId) {
        if let Some(s) = self.sources.get_mut(source.0) {
            s.primary_path_id = path;
        }
    }

    pub fn build(self) -> Result<Network, NetError> {
        Network::new(self.links, self.paths, self.sources)
    }
}
