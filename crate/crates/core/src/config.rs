//! TOML run configuration with one section per method.
//!
//! Unknown keys are hard errors. Keys beyond each method's core set live in
//! `[extensions]`, so the core parameter counts stay visible:
//!
//! ```toml
//! [removert]
//! tau_d = 0.1
//!
//! [octomap]
//! resolution = 0.1
//!
//! [octomap.ground]
//! dist_thresh = 0.15
//!
//! [extensions]
//! max_tilt_deg = 15.0
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::erasor::ErasorConfig;
use crate::error::{Error, Result};
use crate::octomap::{FilterConfig, GroundConfig, OctomapConfig, Variant};
use crate::removert::RemovertConfig;
use crate::spatial::OccupancyParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Removert,
    Erasor,
    Octomap,
    OctomapG,
    OctomapGf,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Removert,
        Method::Erasor,
        Method::Octomap,
        Method::OctomapG,
        Method::OctomapGf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Removert => "removert",
            Method::Erasor => "erasor",
            Method::Octomap => "octomap",
            Method::OctomapG => "octomap_g",
            Method::OctomapGf => "octomap_gf",
        }
    }

    /// Offline methods compare scans against the accumulated raw map.
    pub fn needs_raw_map(self) -> bool {
        matches!(self, Method::Removert | Method::Erasor)
    }

    pub fn octomap_variant(self) -> Option<Variant> {
        match self {
            Method::Octomap => Some(Variant::Baseline),
            Method::OctomapG => Some(Variant::G),
            Method::OctomapGf => Some(Variant::GF),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
            Error::Config(format!("unknown method `{s}`; expected one of {}", names.join(", ")))
        })
    }
}

/// The `[octomap]` section: the baseline's five keys plus the G and GF subsections.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OctomapSection {
    pub resolution: f64,
    pub p_hit: f64,
    pub p_miss: f64,
    pub occupancy_threshold: f64,
    pub max_range: f64,
    pub ground: GroundConfig,
    pub filter: FilterConfig,
}

impl Default for OctomapSection {
    fn default() -> Self {
        let g = OccupancyParams::default();
        Self {
            resolution: g.resolution,
            p_hit: g.p_hit,
            p_miss: g.p_miss,
            occupancy_threshold: OctomapConfig::default().occupancy_threshold,
            max_range: g.max_range,
            ground: GroundConfig::default(),
            filter: FilterConfig::default(),
        }
    }
}

/// Knobs outside every method's core parameter set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Extensions {
    /// Log-odds clamp bounds of the occupancy grid.
    pub l_min: f64,
    pub l_max: f64,
    /// Reject RANSAC ground planes tilted more than this, degrees.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_tilt_deg: Option<f64>,
}

impl Default for Extensions {
    fn default() -> Self {
        let g = OccupancyParams::default();
        Self {
            l_min: g.l_min,
            l_max: g.l_max,
            max_tilt_deg: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub removert: RemovertConfig,
    pub erasor: ErasorConfig,
    pub octomap: OctomapSection,
    pub extensions: Extensions,
}

impl Config {
    /// Parses and validates. Missing keys take their defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        self.removert.validate()?;
        self.erasor.validate()?;
        self.octomap_config().validate()
    }

    pub fn octomap_config(&self) -> OctomapConfig {
        let o = &self.octomap;
        OctomapConfig {
            grid: OccupancyParams {
                resolution: o.resolution,
                p_hit: o.p_hit,
                p_miss: o.p_miss,
                l_min: self.extensions.l_min,
                l_max: self.extensions.l_max,
                max_range: o.max_range,
            },
            occupancy_threshold: o.occupancy_threshold,
            ground: o.ground.clone(),
            max_tilt_deg: self.extensions.max_tilt_deg,
            filter: o.filter.clone(),
        }
    }

    /// Number of tunable keys a method reads, extensions excluded.
    pub fn parameter_count(method: Method) -> usize {
        let d = Config::default();
        match method {
            Method::Removert => leaf_keys(&d.removert),
            Method::Erasor => leaf_keys(&d.erasor),
            Method::Octomap => leaf_keys(&d.octomap),
            Method::OctomapG => leaf_keys(&d.octomap) + leaf_keys(&d.octomap.ground),
            Method::OctomapGf => {
                leaf_keys(&d.octomap) + leaf_keys(&d.octomap.ground) + leaf_keys(&d.octomap.filter)
            }
        }
    }
}

/// Top-level non-table keys of a section as it serializes.
fn leaf_keys<T: Serialize>(section: &T) -> usize {
    match toml::Value::try_from(section) {
        Ok(toml::Value::Table(t)) => t.values().filter(|v| !v.is_table()).count(),
        _ => 0,
    }
}
