use super::{DynamicsSettings, ExperimentConfig, ExperimentError, SolverSettings};
use crate::dynamics::{ControllerKind, ControllerVariant};
use crate::net_model::Topology;
use crate::stability::StabilityConfig;
use crate::traffic::TrafficModel;

pub const PRESET_NAMES: [&str; 3] = ["internet", "datacenter", "wireless"];

/// Default configuration for one of the three scenario classes.
///
/// `horizon` and `dt` are sized so the fluid model settles (constant traffic)
/// or reaches its periodic regime before the trailing window (bursty
/// traffic), with the step inside the RK4 stability region.
pub fn preset(name: &str) -> Result<ExperimentConfig, ExperimentError> {
    let coupled = ControllerKind { variant: ControllerVariant::CoupledMultipath, gain: 1.0 };
    let base = ExperimentConfig {
        scenario: Topology::Internet {
            n_sources: 20,
            n_links: 30,
            paths_per_source: 2,
            capacity_min: 10.0,
            capacity_max: 100.0,
        },
        controller: coupled,
        traffic: TrafficModel::Constant,
        stability: StabilityConfig::default(),
        solver: SolverSettings::default(),
        dynamics: DynamicsSettings::default(),
        horizon: 10_000.0,
        dt: 1e-3,
        ensemble_size: 20,
        seed: 1,
    };
    let cfg = match name {
        "internet" => ExperimentConfig { dynamics: DynamicsSettings { sample_stride: 10_000, ..base.dynamics }, ..base },
        "datacenter" => ExperimentConfig {
            scenario: Topology::Datacenter { pods: 4, link_capacity: 10.0 },
            traffic: TrafficModel::OnOff { period: 0.5, duty: 0.2, amplitude: 5.0, quiescent: 0.1 },
            horizon: 40.0,
            dt: 1e-4,
            dynamics: DynamicsSettings { sample_stride: 100, ..base.dynamics },
            ..base
        },
        "wireless" => ExperimentConfig {
            scenario: Topology::Wireless {
                n_devices: 8,
                interfaces_per_device: 2,
                interface_capacity: 20.0,
                energy_cost: 0.05,
                energy_weight: 0.5,
            },
            horizon: 200.0,
            dt: 2e-4,
            dynamics: DynamicsSettings { sample_stride: 1_000, ..base.dynamics },
            ..base
        },
        other => return Err(ExperimentError::UnknownPreset(other.to_string())),
    };
    Ok(cfg)
}
