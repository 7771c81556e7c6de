//! Rate-level demand modulation. An on/off model scales every source's
//! utility weight in phase, so all sources burst together.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrafficError {
    #[error("invalid traffic model: {0}")]
    InvalidModel(String),
    #[error("invalid step: dt = {dt}, horizon = {horizon}")]
    InvalidStep { dt: f64, horizon: f64 },
}

/// Phase boundaries within this distance are snapped, so that tabulating on a
/// grid commensurate with the period gives exact block lengths.
const PHASE_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrafficModel {
    #[default]
    Constant,
    OnOff {
        period: f64,
        duty: f64,
        amplitude: f64,
        quiescent: f64,
    },
}

impl TrafficModel {
    pub fn on_off(period: f64, duty: f64, amplitude: f64, quiescent: f64) -> Result<Self, TrafficError> {
        let m = TrafficModel::OnOff { period, duty, amplitude, quiescent };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), TrafficError> {
        if let TrafficModel::OnOff { period, duty, amplitude, quiescent } = *self {
            if !(period > 0.0 && period.is_finite()) {
                return Err(TrafficError::InvalidModel(format!("period must be positive, got {period}")));
            }
            if !(duty > 0.0 && duty < 1.0) {
                return Err(TrafficError::InvalidModel(format!("duty must lie in (0, 1), got {duty}")));
            }
            if !(amplitude >= 1.0 && amplitude.is_finite()) {
                return Err(TrafficError::InvalidModel(format!("amplitude must be at least 1, got {amplitude}")));
            }
            if !(0.0..1.0).contains(&quiescent) {
                return Err(TrafficError::InvalidModel(format!("quiescent must lie in [0, 1), got {quiescent}")));
            }
        }
        Ok(())
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, TrafficModel::Constant)
    }

    /// Mean multiplier over one period.
    pub fn mean(&self) -> f64 {
        match *self {
            TrafficModel::Constant => 1.0,
            TrafficModel::OnOff { duty, amplitude, quiescent, .. } => duty * amplitude + (1.0 - duty) * quiescent,
        }
    }
}

/// Weight multiplier at model time `t`.
pub fn modulation(model: &TrafficModel, t: f64) -> f64 {
    match *model {
        TrafficModel::Constant => 1.0,
        TrafficModel::OnOff { period, duty, amplitude, quiescent } => {
            let cycles = t / period;
            let phase = (cycles - (cycles + PHASE_SNAP).floor()).max(0.0);
            if phase < duty - PHASE_SNAP {
                amplitude
            } else {
                quiescent
            }
        }
    }
}

/// Number of whole steps of length `dt` in `horizon`.
pub fn step_count(horizon: f64, dt: f64) -> Result<usize, TrafficError> {
    if !(dt > 0.0 && dt.is_finite() && horizon >= dt && horizon.is_finite()) {
        return Err(TrafficError::InvalidStep { dt, horizon });
    }
    Ok((horizon / dt + PHASE_SNAP).floor() as usize)
}

/// Multiplier for each integration step, evaluated at the step's start time.
pub fn burst_schedule(model: &TrafficModel, horizon: f64, dt: f64) -> Result<Vec<f64>, TrafficError> {
    let n = step_count(horizon, dt)?;
    Ok((0..n).map(|k| modulation(model, k as f64 * dt)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bursty() -> TrafficModel {
        TrafficModel::on_off(1.0, 0.3, 4.0, 0.1).unwrap()
    }

    #[test]
    fn piecewise_values() {
        assert_eq!(modulation(&TrafficModel::Constant, 17.3), 1.0);
        assert_eq!(modulation(&bursty(), 0.2), 4.0);
        assert_eq!(modulation(&bursty(), 0.9), 0.1);
        assert_eq!(modulation(&bursty(), 0.0), 4.0);
        assert_eq!(modulation(&bursty(), 1.0), 4.0);
    }

    #[test]
    fn constant_schedule() {
        assert_eq!(burst_schedule(&TrafficModel::Constant, 1.0, 0.1).unwrap(), vec![1.0; 10]);
    }

    #[test]
    fn commensurate_blocks_and_mean() {
        let dt = 0.01;
        let m = TrafficModel::on_off(10.0 * dt, 0.5, 5.0, 0.2).unwrap();
        let s = burst_schedule(&m, 40.0 * dt, dt).unwrap();
        assert_eq!(s.len(), 40);
        for (k, v) in s.iter().enumerate() {
            assert_eq!(*v, if k % 10 < 5 { 5.0 } else { 0.2 }, "step {k}");
        }
        let avg: f64 = s[..10].iter().sum::<f64>() / 10.0;
        assert!((avg - m.mean()).abs() < 1e-12);
    }

    #[test]
    fn invalid_inputs() {
        assert!(TrafficModel::on_off(0.0, 0.5, 2.0, 0.1).is_err());
        assert!(TrafficModel::on_off(1.0, 1.0, 2.0, 0.1).is_err());
        assert!(TrafficModel::on_off(1.0, 0.5, 0.5, 0.1).is_err());
        assert!(TrafficModel::on_off(1.0, 0.5, 2.0, 1.0).is_err());
        assert!(matches!(burst_schedule(&TrafficModel::Constant, 1.0, 0.0), Err(TrafficError::InvalidStep { .. })));
        assert!(burst_schedule(&TrafficModel::Constant, 0.1, 0.2).is_err());
    }

    #[test]
    fn json_shape() {
        let m: TrafficModel =
            serde_json::from_str(r#"{"kind":"on_off","period":0.5,"duty":0.2,"amplitude":5,"quiescent":0.1}"#).unwrap();
        assert_eq!(m, TrafficModel::on_off(0.5, 0.2, 5.0, 0.1).unwrap());
        assert!(serde_json::from_str::<TrafficModel>(r#"{"kind":"on_off","period":1,"duty":0.5,"amplitude":2,"quiescent":0,"x":1}"#).is_err());
    }

    proptest! {
        #[test]
        fn periodic(t in 0.0f64..100.0, k in 1u32..20) {
            let m = bursty();
            let phase = t.fract();
            prop_assume!((phase - 0.3).abs() > 1e-6 && phase > 1e-6 && phase < 1.0 - 1e-6);
            prop_assert_eq!(modulation(&m, t), modulation(&m, t + k as f64));
        }
    }
}
