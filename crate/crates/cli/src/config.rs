//! Run configuration files.
//!
//! JSON with the blocks below; every frequency and rate is in units of the
//! emitter decay rate unless `system.gamma` says otherwise.
//!
//! ```json
//! {
//!   "system":  { "gamma": 1, "target_splitting": 300, "detuning": 200 },
//!   "sensors": [ { "frequency": 150, "linewidth": 5, "bundle_order": 2 },
//!                { "frequency": 0,   "linewidth": 5 } ],
//!   "run":     { "workers": 4, "output": "out/map", "format": "csv" },
//!   "grid":    { "points": 101, "min": -360, "max": 360 },
//!   "tau":     { "first": [1], "min": -1, "max": 1, "points": 101 },
//!   "plane":   { "coefficients": [1, 1, 0], "offset": 0 },
//!   "autocorr": { "order": 2 },
//!   "recommend": { "partition": [1, 2], "branch": "upper", "margin": 3 }
//! }
//! ```

use std::path::PathBuf;

use mollow_core::atlas::Branch;
use mollow_core::correlators::{EvalOptions, Normalization, Plane};
use mollow_core::files::ResultFormat;
use mollow_core::grid::GridTemplate;
use mollow_core::model::{drive_for_target_splitting, SystemParams};
use mollow_core::sweep::AxisSpec;
use mollow_core::{Error, Result};
use serde::{Deserialize, Serialize};

fn one() -> f64 {
    1.0
}

fn one_photon() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemBlock,
    #[serde(default)]
    pub sensors: Vec<SensorBlock>,
    #[serde(default)]
    pub run: RunBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub autocorr: Option<AutocorrBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<TauBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plane: Option<Plane>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recommend: Option<RecommendBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    #[serde(default = "one")]
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rabi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_splitting: Option<f64>,
    #[serde(default)]
    pub detuning: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorBlock {
    pub frequency: f64,
    pub linewidth: f64,
    #[serde(default = "one_photon")]
    pub bundle_order: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check_truncation: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<Normalization>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_interval: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<ResultFormat>,
}

/// Axes of a scan. Without `axes`, every free frequency runs over
/// `[min, max]` with `points` samples; without `template`, the free
/// frequencies are those of the first groups.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axes: Option<Vec<AxisSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<GridTemplate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutocorrBlock {
    pub order: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TauBlock {
    /// Groups detected first at positive delay.
    pub first: Vec<usize>,
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecommendBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<Vec<usize>>,
    pub branch: Branch,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linewidth: Option<f64>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let c: RunConfig = serde_json::from_str(text).map_err(|e| Error::Parameter(format!("config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        match (self.system.rabi, self.system.target_splitting) {
            (Some(_), Some(_)) => {
                return Err(Error::Parameter("config: give either system.rabi or system.target_splitting, not both".into()))
            }
            (None, None) => return Err(Error::Parameter("config: system.rabi or system.target_splitting is required".into())),
            _ => {}
        }
        for (k, s) in self.sensors.iter().enumerate() {
            if !(s.linewidth.is_finite() && s.linewidth > 0.0) || !s.frequency.is_finite() || s.bundle_order == 0 {
                return Err(Error::Parameter(format!("config: sensor {k} is invalid")));
            }
        }
        if self.run.workers == Some(0) || self.run.checkpoint_interval == Some(0) {
            return Err(Error::Parameter("config: workers and checkpoint_interval must be at least 1".into()));
        }
        if let Some(g) = &self.grid {
            if g.points == Some(0) {
                return Err(Error::Parameter("config: grid.points must be at least 1".into()));
            }
        }
        self.params().map(|_| ())
    }

    pub fn params(&self) -> Result<SystemParams> {
        let s = &self.system;
        let rabi = match (s.rabi, s.target_splitting) {
            (Some(r), _) => r,
            (None, Some(t)) => drive_for_target_splitting(t, s.detuning, s.gamma)?,
            (None, None) => return Err(Error::Parameter("config: no drive given".into())),
        };
        SystemParams::new(rabi, s.detuning)?.with_gamma(s.gamma)
    }

    pub fn options(&self) -> EvalOptions {
        let mut o = EvalOptions::default();
        if let Some(t) = self.run.tolerance {
            o.tolerance = t;
        }
        if let Some(f) = self.run.floor {
            o.floor = f;
        }
        if let Some(c) = self.run.check_truncation {
            o.check_truncation = c;
        }
        o
    }

    /// The configuration as echoed into result headers: everything except
    /// where the run is written and how many workers computed it.
    pub fn echo(&self) -> serde_json::Value {
        let mut c = self.clone();
        c.run.workers = None;
        c.run.output = None;
        c.run.checkpoint_interval = None;
        serde_json::to_value(c).expect("configs serialize")
    }
}
