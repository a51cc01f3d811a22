use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::blob::fnv1a64;
use crate::dataset::store::split_header;
use crate::error::{Error, Result};
use crate::nn::LayerKind;
use crate::rl::Policy;

pub const BUNDLE_MAGIC: &str = "ROTCTL-POLICY 1";

/// Activations the interpreter and the C generator implement.
pub const SUPPORTED_ACTIVATIONS: [&str; 3] = ["relu", "tanh", "identity"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerDesc {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: String,
}

impl LayerDesc {
    /// Weights (`in x out`, row-major) followed by the bias.
    pub fn param_count(&self) -> usize {
        self.in_dim * self.out_dim + self.out_dim
    }
}

/// Deterministic actor flattened for deployment.
///
/// The consumer feeds raw observations and receives physical-unit actions:
/// `u = net((obs - obs_mean) / obs_std)`,
/// `action = low + h + h * tanh(u)` with `h = (high - low) / 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExportBundle {
    pub input_dim: usize,
    pub output_dim: usize,
    pub layers: Vec<LayerDesc>,
    pub obs_mean: Vec<f32>,
    pub obs_std: Vec<f32>,
    pub action_low: Vec<f32>,
    pub action_high: Vec<f32>,
    pub weights: Vec<f32>,
}

impl ExportBundle {
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerDesc::param_count).sum()
    }

    pub fn max_width(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.out_dim.max(l.in_dim))
            .max()
            .unwrap_or(0)
    }

    /// Shape chain, activation names, constant lengths and payload size.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Data(format!("invalid policy bundle: {m}")));
        if self.layers.is_empty() {
            return bad("no layers".into());
        }
        let mut width = self.input_dim;
        for (i, l) in self.layers.iter().enumerate() {
            if l.in_dim != width {
                return bad(format!("layer {i} takes {} inputs but receives {width}", l.in_dim));
            }
            if l.out_dim == 0 {
                return bad(format!("layer {i} has no outputs"));
            }
            if !SUPPORTED_ACTIVATIONS.contains(&l.activation.as_str()) {
                return bad(format!("layer {i} uses unsupported activation `{}`", l.activation));
            }
            width = l.out_dim;
        }
        if width != self.output_dim {
            return bad(format!("last layer yields {width} outputs, manifest says {}", self.output_dim));
        }
        if self.obs_mean.len() != self.input_dim || self.obs_std.len() != self.input_dim {
            return bad("observation normalizer length differs from input_dim".into());
        }
        if self.action_low.len() != self.output_dim || self.action_high.len() != self.output_dim {
            return bad("action bounds length differs from output_dim".into());
        }
        if self.obs_std.iter().any(|s| !(*s > 0.0)) {
            return bad("observation std must be positive".into());
        }
        if self.weights.len() != self.param_count() {
            return bad(format!("payload has {} floats, layers need {}", self.weights.len(), self.param_count()));
        }
        Ok(())
    }

    fn manifest(&self) -> String {
        let join = |v: &[f32]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let mut s = format!(
            "{BUNDLE_MAGIC}\ninput_dim {}\noutput_dim {}\nlayers {}\n",
            self.input_dim,
            self.output_dim,
            self.layers.len()
        );
        for (i, l) in self.layers.iter().enumerate() {
            s.push_str(&format!("layer {i} dense {} {} {}\n", l.in_dim, l.out_dim, l.activation));
        }
        s.push_str("squash tanh\n");
        s.push_str(&format!("obs_mean {}\n", join(&self.obs_mean)));
        s.push_str(&format!("obs_std {}\n", join(&self.obs_std)));
        s.push_str(&format!("action_low {}\n", join(&self.action_low)));
        s.push_str(&format!("action_high {}\n", join(&self.action_high)));
        s.push_str(&format!("payload_f32 {}\nend\n", self.weights.len()));
        s
    }

    /// Manifest text, little-endian f32 payload, FNV-1a-64 of the payload.
    pub fn encode(&self) -> Vec<u8> {
        let mut bytes = self.manifest().into_bytes();
        let start = bytes.len();
        for w in &self.weights {
            bytes.extend_from_slice(&w.to_le_bytes());
        }
        let sum = fnv1a64(&bytes[start..]);
        bytes.extend_from_slice(&sum.to_le_bytes());
        bytes
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let (lines, offset) = split_header(bytes, path, "end")?;
        let mut it = lines.into_iter();
        if it.next() != Some(BUNDLE_MAGIC) {
            return Err(Error::schema(path, "not a policy bundle or unsupported version"));
        }
        let mut field = |key: &str| -> Result<Vec<String>> {
            let line = it.next().ok_or_else(|| Error::schema(path, format!("missing `{key}`")))?;
            let mut parts = line.split(' ');
            if parts.next() != Some(key) {
                return Err(Error::schema(path, format!("expected `{key}`, found `{line}`")));
            }
            Ok(parts.filter(|p| !p.is_empty()).map(str::to_string).collect())
        };
        let one = |v: Vec<String>, key: &str| -> Result<usize> {
            v.first()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::schema(path, format!("bad value for `{key}`")))
        };
        let floats = |v: Vec<String>, key: &str| -> Result<Vec<f32>> {
            v.iter()
                .map(|s| s.parse().map_err(|_| Error::schema(path, format!("bad float in `{key}`"))))
                .collect()
        };
        let input_dim = one(field("input_dim")?, "input_dim")?;
        let output_dim = one(field("output_dim")?, "output_dim")?;
        let n_layers = one(field("layers")?, "layers")?;
        let mut layers = Vec::with_capacity(n_layers);
        for i in 0..n_layers {
            let v = field("layer")?;
            if v.len() != 5 || v[0] != i.to_string() || v[1] != "dense" {
                return Err(Error::schema(path, format!("bad descriptor for layer {i}")));
            }
            let dim = |s: &str| s.parse::<usize>().map_err(|_| Error::schema(path, format!("bad shape for layer {i}")));
            layers.push(LayerDesc {
                in_dim: dim(&v[2])?,
                out_dim: dim(&v[3])?,
                activation: v[4].clone(),
            });
        }
        if field("squash")? != ["tanh"] {
            return Err(Error::schema(path, "unsupported output squashing"));
        }
        let obs_mean = floats(field("obs_mean")?, "obs_mean")?;
        let obs_std = floats(field("obs_std")?, "obs_std")?;
        let action_low = floats(field("action_low")?, "action_low")?;
        let action_high = floats(field("action_high")?, "action_high")?;
        let count = one(field("payload_f32")?, "payload_f32")?;
        let want = count * 4 + 8;
        if bytes.len() - offset != want {
            return Err(Error::Truncated {
                path: path.to_path_buf(),
                expected: want,
                found: bytes.len() - offset,
            });
        }
        let end = bytes.len() - 8;
        let stored = u64::from_le_bytes(bytes[end..].try_into().expect("8 bytes"));
        if stored != fnv1a64(&bytes[offset..end]) {
            return Err(Error::Checksum { path: path.to_path_buf() });
        }
        let weights = bytes[offset..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let b = ExportBundle {
            input_dim,
            output_dim,
            layers,
            obs_mean,
            obs_std,
            action_low,
            action_high,
            weights,
        };
        b.validate().map_err(|e| Error::schema(path, e.to_string()))?;
        Ok(b)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Missing(path.to_path_buf()));
        }
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes, path)
    }
}

/// Flattens the deterministic path of `policy` (actor, normalizer, bounds).
pub fn flatten_policy(policy: &Policy) -> Result<ExportBundle> {
    if !policy.deterministic_eval {
        return Err(Error::Config("only policies with a deterministic path can be exported".into()));
    }
    let p = policy.actor.params.values();
    let mut layers = Vec::new();
    let mut weights = Vec::with_capacity(p.len());
    for l in &policy.actor.layers {
        if l.spec.kind != LayerKind::Dense {
            return Err(Error::Config(format!("cannot export a {:?} layer", l.spec.kind)));
        }
        layers.push(LayerDesc {
            in_dim: l.spec.in_dim,
            out_dim: l.spec.out_dim,
            activation: l.spec.activation.name().to_string(),
        });
        weights.extend(p[l.weight.range()].iter().map(|&v| v as f32));
        weights.extend(p[l.bias.range()].iter().map(|&v| v as f32));
    }
    let f = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<f32>>();
    let b = ExportBundle {
        input_dim: policy.obs_dim(),
        output_dim: policy.action_dim(),
        layers,
        obs_mean: f(&policy.obs_mean),
        obs_std: f(&policy.obs_std),
        action_low: f(&policy.low),
        action_high: f(&policy.high),
        weights,
    };
    b.validate()?;
    Ok(b)
}
