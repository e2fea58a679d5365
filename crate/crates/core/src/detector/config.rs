use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Head ablation switches. `group_pool` and `orientation_align` select how
/// the classification branch removes the orientation axis; with neither the
/// orientation channels are flattened as they are.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    /// Point sets from vector fields; otherwise a 1×1 conv plus a fixed grid.
    pub vector_field: bool,
    pub group_pool: bool,
    pub orientation_align: bool,
    pub edge_constraint: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Self::full()
    }
}

impl Ablation {
    pub fn full() -> Self {
        Self {
            vector_field: true,
            group_pool: false,
            orientation_align: true,
            edge_constraint: true,
        }
    }

    pub fn orientation_align() -> Self {
        Self {
            edge_constraint: false,
            ..Self::full()
        }
    }

    pub fn vector_field_only() -> Self {
        Self {
            orientation_align: false,
            ..Self::orientation_align()
        }
    }

    pub fn group_pool() -> Self {
        Self {
            group_pool: true,
            ..Self::vector_field_only()
        }
    }

    pub fn none() -> Self {
        Self {
            vector_field: false,
            group_pool: false,
            orientation_align: false,
            edge_constraint: false,
        }
    }

    /// Named presets: `full`, `oa`, `vector-field`, `group-pool`, `none`.
    pub fn preset(name: &str) -> Option<Self> {
        Some(match name {
            "full" => Self::full(),
            "oa" => Self::orientation_align(),
            "vector-field" => Self::vector_field_only(),
            "group-pool" => Self::group_pool(),
            "none" => Self::none(),
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// Group order.
    pub n: usize,
    /// Points per set.
    pub k: usize,
    /// Lifting-layer channels.
    pub stem_channels: usize,
    /// Backbone output and branch channels.
    pub channels: usize,
    /// Classification DCN output channels.
    pub head_channels: usize,
    pub num_classes: usize,
    /// Edge-constraint weight.
    pub lambda_ec: f64,
    pub focal_gamma: f64,
    pub focal_alpha: f64,
    /// Prior probability used to initialise the classification bias.
    pub prior_prob: f64,
    pub score_threshold: f64,
    pub nms_iou: f64,
    /// Magnitude given to initial vectors through the last localisation bias.
    pub init_point_spread: f64,
    pub ablation: Ablation,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            n: 8,
            k: 9,
            stem_channels: 4,
            channels: 4,
            head_channels: 8,
            num_classes: 3,
            lambda_ec: 0.025,
            focal_gamma: 2.0,
            focal_alpha: 0.25,
            prior_prob: 0.01,
            score_threshold: 0.05,
            nms_iou: 0.5,
            init_point_spread: 1.0,
            ablation: Ablation::full(),
        }
    }
}

/// Total stride from image pixels to the feature grid.
pub const FEATURE_STRIDE: usize = 4;

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.k < 3 {
            return bad(format!("k must be at least 3, got {}", self.k));
        }
        if self.n == 0 || (self.ablation.vector_field && self.n < 2) {
            return bad(format!("group order {} unsupported with these switches", self.n));
        }
        if self.ablation.group_pool && self.ablation.orientation_align {
            return bad("group_pool and orientation_align are exclusive".into());
        }
        if self.stem_channels == 0 || self.channels == 0 || self.head_channels == 0 || self.num_classes == 0 {
            return bad("channel counts must be positive".into());
        }
        if !(0.0..1.0).contains(&self.prior_prob) || self.prior_prob == 0.0 {
            return bad(format!("prior_prob {} outside (0, 1)", self.prior_prob));
        }
        Ok(())
    }

    /// The non-equivariant counterpart: trivial group, `n`-times wider
    /// layers, plain offset regression on a fixed grid and no alignment.
    pub fn baseline(&self) -> Self {
        Self {
            n: 1,
            stem_channels: self.stem_channels * self.n,
            channels: self.channels * self.n,
            ablation: Ablation {
                vector_field: false,
                group_pool: false,
                orientation_align: false,
                edge_constraint: self.ablation.edge_constraint,
            },
            ..self.clone()
        }
    }

    /// Channels entering the classification DCN.
    pub fn pre_head_channels(&self) -> usize {
        if self.ablation.group_pool {
            self.channels
        } else {
            self.channels * self.n
        }
    }
}

/// Reads a value from JSON (`.json`) or TOML (anything else).
pub fn load_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, path.extension().is_some_and(|e| e == "json"))
}

pub fn parse_config<T: for<'de> Deserialize<'de>>(text: &str, json: bool) -> Result<T> {
    if json {
        Ok(serde_json::from_str(text)?)
    } else {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}
