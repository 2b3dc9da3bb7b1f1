use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng as _;

use super::config::{Ablation, ModelConfig};
use crate::error::{Error, Result};
use crate::numerics::{numel, Tape, Tensor, Var};
use crate::rng::{name_hash, stream};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CPMB";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// `U(−1/√fan_in, 1/√fan_in)`
    Uniform {
        fan_in: usize,
    },
    Zeros,
    Ones,
    /// `log(n + 1)` along the state axis, giving `A = −(1, 2, …, N)`.
    StateDecay,
    /// Inverse softplus of a log-uniform draw in `[1e-3, 1e-1]`.
    StepBias,
}

/// One learnable tensor: its key, shape and initializer.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

fn push(specs: &mut Vec<ParamSpec>, name: String, shape: &[usize], init: Init) {
    specs.push(ParamSpec {
        name,
        shape: shape.to_vec(),
        init,
    });
}

fn push_linear(specs: &mut Vec<ParamSpec>, prefix: &str, d_in: usize, d_out: usize, bias: bool) {
    push(
        specs,
        format!("{prefix}/w"),
        &[d_in, d_out],
        Init::Uniform { fan_in: d_in },
    );
    if bias {
        push(specs, format!("{prefix}/b"), &[d_out], Init::Zeros);
    }
}

fn push_conv(specs: &mut Vec<ParamSpec>, prefix: &str, c_in: usize, c_out: usize) {
    push(
        specs,
        format!("{prefix}/w"),
        &[c_out, c_in, 3, 3],
        Init::Uniform { fan_in: 9 * c_in },
    );
    push(specs, format!("{prefix}/b"), &[c_out], Init::Zeros);
}

fn push_norm(specs: &mut Vec<ParamSpec>, prefix: &str, d: usize) {
    push(specs, format!("{prefix}/gamma"), &[d], Init::Ones);
    push(specs, format!("{prefix}/beta"), &[d], Init::Zeros);
}

/// Every learnable tensor of a configuration, in a fixed order.
pub fn param_specs(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let mut s = Vec::new();
    let d = cfg.features();
    let c = cfg.conv_channels;
    let e = cfg.inner();
    let n = cfg.d_state;
    let dm = cfg.d_model;

    if cfg.ablation != Ablation::NoPatch {
        push_linear(&mut s, "patch", cfg.patch_size, cfg.patch_size, true);
    }
    if cfg.ablation != Ablation::NoSe {
        push_conv(&mut s, "se_resnet/conv_in", 2, c);
        for i in 0..cfg.res_blocks {
            let p = format!("se_resnet/block{i}");
            push_conv(&mut s, &format!("{p}/conv1"), c, c);
            push_conv(&mut s, &format!("{p}/conv2"), c, c);
            push_linear(
                &mut s,
                &format!("{p}/se/fc1"),
                c,
                c / cfg.se_reduction,
                true,
            );
            push_linear(
                &mut s,
                &format!("{p}/se/fc2"),
                c / cfg.se_reduction,
                c,
                true,
            );
        }
        push_conv(&mut s, "se_resnet/conv_out", c, 2);
    }
    push_linear(&mut s, "embed", d, dm, true);
    if cfg.ablation == Ablation::AttentionBackbone {
        for i in 0..cfg.mamba_layers {
            let p = format!("attention/layer{i}");
            push_norm(&mut s, &format!("{p}/norm1"), dm);
            for proj in ["q", "k", "v", "o"] {
                push_linear(&mut s, &format!("{p}/{proj}"), dm, dm, true);
            }
            push_norm(&mut s, &format!("{p}/norm2"), dm);
            push_linear(&mut s, &format!("{p}/ff1"), dm, e, true);
            push_linear(&mut s, &format!("{p}/ff2"), e, dm, true);
        }
    } else {
        for i in 0..cfg.mamba_layers {
            let p = format!("mamba/layer{i}");
            push_norm(&mut s, &format!("{p}/norm"), dm);
            push_linear(&mut s, &format!("{p}/in_s"), dm, e, false);
            push_linear(&mut s, &format!("{p}/in_z"), dm, e, false);
            push(
                &mut s,
                format!("{p}/conv/w"),
                &[e, cfg.d_conv],
                Init::Uniform { fan_in: cfg.d_conv },
            );
            push(&mut s, format!("{p}/conv/b"), &[e], Init::Zeros);
            push_linear(&mut s, &format!("{p}/x_b"), e, n, false);
            push_linear(&mut s, &format!("{p}/x_c"), e, n, false);
            push_linear(&mut s, &format!("{p}/x_dt"), e, 1, false);
            push(&mut s, format!("{p}/dt_bias"), &[e], Init::StepBias);
            push(&mut s, format!("{p}/a_log"), &[e, n], Init::StateDecay);
            if cfg.d_skip {
                push(&mut s, format!("{p}/d_skip"), &[e], Init::Zeros);
            }
            push_linear(&mut s, &format!("{p}/out"), e, dm, false);
        }
    }
    push_linear(&mut s, "head/fc_f", dm, d, true);
    push_linear(&mut s, "head/fc_t", cfg.history, cfg.horizon, true);
    s
}

fn initialize(spec: &ParamSpec, seed: u64) -> Tensor {
    let mut rng = stream(seed, name_hash(&spec.name));
    let shape = spec.shape.clone();
    match spec.init {
        Init::Uniform { fan_in } => {
            let bound = 1.0 / (fan_in as f64).sqrt();
            Tensor::from_fn(shape, |_| rng.gen_range(-bound..bound))
        }
        Init::Zeros => Tensor::zeros(shape),
        Init::Ones => Tensor::full(shape, 1.0),
        Init::StateDecay => {
            let n = *shape.last().unwrap_or(&1);
            Tensor::from_fn(shape, |i| ((i % n) as f64 + 1.0).ln())
        }
        Init::StepBias => Tensor::from_fn(shape, |_| {
            let dt = rng.gen_range(1e-3f64.ln()..1e-1f64.ln()).exp();
            dt.exp_m1().ln()
        }),
    }
}

/// Learnable tensors keyed by path, the configuration they belong to and
/// the number of optimizer steps taken.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub config: ModelConfig,
    pub params: BTreeMap<String, Tensor>,
    pub step: u64,
}

impl ModelState {
    /// Fresh parameters. Each key draws from its own stream of `seed`, so
    /// variants of one configuration share the values of common keys.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = param_specs(&config)
            .iter()
            .map(|spec| (spec.name.clone(), initialize(spec, seed)))
            .collect();
        Ok(Self {
            config,
            params,
            step: 0,
        })
    }

    pub fn param(&self, name: &str) -> Result<&Tensor> {
        self.params
            .get(name)
            .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))
    }

    pub fn param_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.params
            .get_mut(name)
            .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))
    }

    pub fn parameter_count(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    /// Checks that the key set and shapes are those `config` prescribes.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let specs = param_specs(&self.config);
        if specs.len() != self.params.len() {
            return Err(Error::Config(format!(
                "expected {} parameters, found {}",
                specs.len(),
                self.params.len()
            )));
        }
        for spec in &specs {
            let t = self.param(&spec.name)?;
            if t.shape() != spec.shape.as_slice() {
                return Err(Error::shape("parameter", &spec.shape, t.shape()));
            }
        }
        Ok(())
    }

    /// Places every parameter on `tape`, as gradient leaves if `trainable`.
    pub fn bind<'t>(&self, tape: &'t Tape, trainable: bool) -> Bound<'t> {
        let vars = self
            .params
            .iter()
            .map(|(k, v)| (k.clone(), tape.leaf(v.clone(), trainable)))
            .collect();
        Bound { vars }
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let json = serde_json::to_vec(&self.config)?;
        buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
        buf.extend_from_slice(&json);
        buf.extend_from_slice(&self.step.to_le_bytes());
        buf.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in &self.params {
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                buf.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        w.write_all(&buf).map_err(|e| Error::io("<checkpoint>", e))
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)
            .map_err(|e| Error::io("<checkpoint>", e))?;
        Self::decode(&buf)
    }

    fn decode(buf: &[u8]) -> Result<Self> {
        if buf.len() < 12 || &buf[..4] != CHECKPOINT_MAGIC {
            return Err(format_err("bad magic"));
        }
        let (body, trailer) = buf.split_at(buf.len() - 4);
        let stored = u32::from_le_bytes(trailer.try_into().unwrap());
        let mut cur = Cursor { buf: body, pos: 4 };
        let version = cur.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(format_err(format!("unsupported version {version}")));
        }
        if crc32fast::hash(body) != stored {
            return Err(format_err("checksum mismatch"));
        }
        let json_len = cur.u32()? as usize;
        let config: ModelConfig = serde_json::from_slice(cur.bytes(json_len)?)?;
        let step = u64::from_le_bytes(cur.bytes(8)?.try_into().unwrap());
        let count = cur.u32()? as usize;
        let mut params = BTreeMap::new();
        for _ in 0..count {
            let len = cur.u32()? as usize;
            let name = std::str::from_utf8(cur.bytes(len)?)
                .map_err(|_| format_err("parameter name is not UTF-8"))?
                .to_string();
            let ndim = cur.u32()? as usize;
            let shape = (0..ndim)
                .map(|_| cur.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let data = cur
                .bytes(numel(&shape) * 8)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            params.insert(name, Tensor::new(shape, data)?);
        }
        if cur.pos != body.len() {
            return Err(format_err("trailing bytes"));
        }
        let state = Self {
            config,
            params,
            step,
        };
        state.validate()?;
        Ok(state)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut BufReader::new(file))
    }

    /// Loads a checkpoint and requires its configuration to equal `expected`.
    pub fn load_expecting(path: &Path, expected: &ModelConfig) -> Result<Self> {
        let state = Self::load(path)?;
        state.ensure_config(expected)?;
        Ok(state)
    }

    /// Names the first field where the stored configuration differs.
    pub fn ensure_config(&self, expected: &ModelConfig) -> Result<()> {
        let have = serde_json::to_value(&self.config)?;
        let want = serde_json::to_value(expected)?;
        if let (Some(h), Some(w)) = (have.as_object(), want.as_object()) {
            for (k, v) in w {
                if h.get(k) != Some(v) {
                    return Err(Error::field(
                        k.clone(),
                        format!(
                            "checkpoint has {}, expected {v}",
                            h.get(k).cloned().unwrap_or_default()
                        ),
                    ));
                }
            }
        }
        Ok(())
    }
}

fn format_err(reason: impl Into<String>) -> Error {
    Error::Format {
        kind: "CPMB",
        reason: reason.into(),
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| format_err("truncated"))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4)?.try_into().unwrap()))
    }
}

/// Parameters placed on one tape.
#[derive(Clone, Debug)]
pub struct Bound<'t> {
    pub vars: BTreeMap<String, Var<'t>>,
}

impl<'t> Bound<'t> {
    pub fn get(&self, name: &str) -> Result<Var<'t>> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))
    }

    pub fn maybe(&self, name: &str) -> Option<Var<'t>> {
        self.vars.get(name).copied()
    }
}
