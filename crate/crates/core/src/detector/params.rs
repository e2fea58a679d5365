use super::config::DetectorConfig;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// What a parameter tensor does inside its layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Weight,
    Bias,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamInfo {
    /// `layer.role`, e.g. `loc.conv1.weight`.
    pub name: String,
    pub layer: String,
    /// Layer kind: `lift_conv`, `group_conv`, `re_dcn`, `ri_dcn`, `dcn`,
    /// `modulation` or `conv1x1`.
    pub kind: String,
    pub role: Role,
    /// Group order the tensor was built for.
    pub n: usize,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub info: ParamInfo,
    pub value: Tensor,
}

/// Ordered parameter registry.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.params
            .iter()
            .position(|p| p.info.name == name)
            .ok_or_else(|| Error::UnknownLayer(name.to_string()))
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        Ok(&self.params[self.index_of(name)?].value)
    }

    pub fn count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn values(&self) -> Vec<Tensor> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    /// Replaces every value; shapes must match the registry.
    pub fn set_values(&mut self, values: Vec<Tensor>) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::Format {
                what: "parameter list",
                detail: format!("expected {} tensors, got {}", self.params.len(), values.len()),
            });
        }
        for (p, v) in self.params.iter_mut().zip(values) {
            if v.shape() != p.info.shape.as_slice() {
                return Err(Error::Format {
                    what: "parameter list",
                    detail: format!("{}: shape {:?} vs {:?}", p.info.name, v.shape(), p.info.shape),
                });
            }
            p.value = v;
        }
        Ok(())
    }

    pub fn infos(&self) -> Vec<ParamInfo> {
        self.params.iter().map(|p| p.info.clone()).collect()
    }

    fn push(&mut self, layer: &str, kind: &str, role: Role, n: usize, value: Tensor) {
        let suffix = match role {
            Role::Weight => "weight",
            Role::Bias => "bias",
        };
        self.params.push(Param {
            info: ParamInfo {
                name: format!("{layer}.{suffix}"),
                layer: layer.into(),
                kind: kind.into(),
                role,
                n,
                shape: value.shape().to_vec(),
            },
            value,
        });
    }
}

/// Builds and initialises the parameters for `cfg`: He-normal weights,
/// zero biases, the focal prior on the class bias and `init_point_spread`
/// on the last localisation bias.
pub fn init_params<R: Rng>(cfg: &DetectorConfig, rng: &mut R) -> Result<ParamStore> {
    cfg.validate()?;
    let (n, k, c) = (cfg.n, cfg.k, cfg.channels);
    let he = |fan_in: usize| (2.0 / fan_in as f64).sqrt();
    let mut s = ParamStore::default();
    let group = |s: &mut ParamStore, rng: &mut dyn rand::RngCore, name: &str, o: usize, i: usize, std: f64, bias: f64| {
        let w = Tensor::randn(&[o, i, n, 3, 3], std.min(he(i * n * 9)), &mut { rng });
        s.push(name, "group_conv", Role::Weight, n, w);
        s.push(name, "group_conv", Role::Bias, n, Tensor::full(&[o], bias));
    };

    let stem = Tensor::randn(&[cfg.stem_channels, 3, 5, 5], he(3 * 25), rng);
    s.push("backbone.lift", "lift_conv", Role::Weight, n, stem);
    s.push("backbone.lift", "lift_conv", Role::Bias, n, Tensor::zeros(&[cfg.stem_channels]));
    group(&mut s, rng, "backbone.conv", c, cfg.stem_channels, f64::MAX, 0.0);

    group(&mut s, rng, "loc.conv1", c, c, f64::MAX, 0.0);
    group(&mut s, rng, "loc.conv2", c, c, f64::MAX, 0.0);
    let spread = if cfg.ablation.vector_field { cfg.init_point_spread } else { 0.0 };
    group(&mut s, rng, "loc.conv3", k, c, 0.01, spread);
    s.push("loc.refine", "re_dcn", Role::Weight, n, Tensor::randn(&[k, c, k], 0.01, rng));
    if !cfg.ablation.vector_field {
        for layer in ["loc.offset", "loc.refine_offset"] {
            s.push(layer, "conv1x1", Role::Weight, n, Tensor::zeros(&[2 * k, k * n]));
            s.push(layer, "conv1x1", Role::Bias, n, Tensor::zeros(&[2 * k]));
        }
    }

    for i in 1..=3 {
        group(&mut s, rng, &format!("cls.conv{i}"), c, c, f64::MAX, 0.0);
    }
    let cin = cfg.pre_head_channels();
    let kind = if cfg.ablation.orientation_align { "ri_dcn" } else { "dcn" };
    s.push(
        "cls.dcn",
        kind,
        Role::Weight,
        n,
        Tensor::randn(&[cfg.head_channels, cin, k], he(cin * k), rng),
    );
    s.push("cls.modulation", "modulation", Role::Weight, n, Tensor::zeros(&[k, cin]));
    s.push("cls.modulation", "modulation", Role::Bias, n, Tensor::zeros(&[k]));
    let head = Tensor::randn(&[cfg.num_classes, cfg.head_channels], 0.01, rng);
    s.push("cls.head", "conv1x1", Role::Weight, n, head);
    let prior = -((1.0 - cfg.prior_prob) / cfg.prior_prob).ln();
    s.push("cls.head", "conv1x1", Role::Bias, n, Tensor::full(&[cfg.num_classes], prior));
    Ok(s)
}

/// Parameter counts per layer and in total.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub n: usize,
    pub layers: Vec<(String, String, usize)>,
    pub total: usize,
}

impl ModelSummary {
    pub fn of(cfg: &DetectorConfig, params: &ParamStore) -> Self {
        let mut layers: Vec<(String, String, usize)> = Vec::new();
        for p in params.iter() {
            match layers.last_mut() {
                Some(l) if l.0 == p.info.layer => l.2 += p.value.numel(),
                _ => layers.push((p.info.layer.clone(), p.info.kind.clone(), p.value.numel())),
            }
        }
        Self {
            n: cfg.n,
            layers,
            total: params.count(),
        }
    }
}

impl std::fmt::Display for ModelSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{:<20} {:<12} {:>10}", "layer", "kind", "params")?;
        for (name, kind, count) in &self.layers {
            writeln!(f, "{name:<20} {kind:<12} {count:>10}")?;
        }
        write!(f, "{:<20} {:<12} {:>10}", "total", format!("C{}", self.n), self.total)
    }
}
