use num_complex::Complex64;

use super::config::{Ablation, ModelConfig};
use super::state::{Bound, ModelState};
use crate::channel::CsiSequence;
use crate::error::{Error, Result};
use crate::numerics::{self as nx, PoolKind, Tape, Tensor, Var};
use crate::rng::Rng;
use crate::ssm::{mamba_block, MambaWeights, ScanOptions, SsmParams};

/// Lower clamp on the normalization scale.
pub const NORM_EPS: f64 = 1e-8;

/// Whole-tensor mean and population standard deviation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

/// Flattens complex sequences into `[B'·N_t, L, 2K]`, with real parts in the
/// first `K` features and imaginary parts in the last `K`.
pub fn reshape_input(batch: &[CsiSequence]) -> Result<Tensor> {
    let first = batch
        .first()
        .ok_or_else(|| Error::Config("empty batch".into()))?;
    let (l, nt, k) = (first.frames, first.antennas, first.subcarriers);
    let mut data = Vec::with_capacity(batch.len() * nt * l * 2 * k);
    for s in batch {
        if (s.frames, s.antennas, s.subcarriers) != (l, nt, k) {
            return Err(Error::shape(
                "reshape_input",
                &[l, nt, k],
                &[s.frames, s.antennas, s.subcarriers],
            ));
        }
        for a in 0..nt {
            for t in 0..l {
                let row = &s.frame(t)[a * k..(a + 1) * k];
                data.extend(row.iter().map(|c| c.re));
                data.extend(row.iter().map(|c| c.im));
            }
        }
    }
    Tensor::new([batch.len() * nt, l, 2 * k], data)
}

/// Inverse of [`reshape_input`]; `speeds` supplies one entry per sequence.
pub fn restore_output(x: &Tensor, antennas: usize, speeds: &[f64]) -> Result<Vec<CsiSequence>> {
    let sh = x.shape();
    if sh.len() != 3
        || !sh[2].is_multiple_of(2)
        || antennas == 0
        || sh[0] != antennas * speeds.len()
    {
        return Err(Error::shape(
            "restore_output",
            sh,
            &[antennas * speeds.len()],
        ));
    }
    let (l, k) = (sh[1], sh[2] / 2);
    let d = x.data();
    speeds
        .iter()
        .enumerate()
        .map(|(s, &speed)| {
            let mut out = vec![Complex64::new(0.0, 0.0); l * antennas * k];
            for a in 0..antennas {
                for t in 0..l {
                    let row = &d[((s * antennas + a) * l + t) * 2 * k..][..2 * k];
                    for j in 0..k {
                        out[(t * antennas + a) * k + j] = Complex64::new(row[j], row[k + j]);
                    }
                }
            }
            CsiSequence::new(l, antennas, k, speed, out)
        })
        .collect()
}

pub fn normalize(x: &Tensor) -> (Tensor, NormStats) {
    let n = x.numel().max(1) as f64;
    let mean = x.data().iter().sum::<f64>() / n;
    let var = x.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let stats = NormStats {
        mean,
        std: var.sqrt().max(NORM_EPS),
    };
    (x.map(|v| (v - mean) / stats.std), stats)
}

pub fn denormalize(x: &Tensor, stats: NormStats) -> Tensor {
    x.map(|v| v * stats.std + stats.mean)
}

/// Splits the time axis into patches of `n_p` frames, applies the shared map
/// `w[n_p, n_p]`, `b[n_p]` within each patch and restores `[B, L, D]`.
pub fn patch_embed<'t>(x: Var<'t>, w: Var<'t>, b: Var<'t>, n_p: usize) -> Result<Var<'t>> {
    let sh = x.shape();
    if sh.len() != 3 || n_p == 0 {
        return Err(Error::shape("patch_embed", &sh, &[n_p]));
    }
    let (bs, l, d) = (sh[0], sh[1], sh[2]);
    let lp = l.div_ceil(n_p);
    let padded = nx::pad_tail(x, 1, lp * n_p - l)?;
    let patches = nx::permute(nx::reshape(padded, &[bs, lp, n_p, d])?, &[0, 1, 3, 2])?;
    let mapped = nx::linear(patches, w, Some(b))?;
    let back = nx::reshape(nx::permute(mapped, &[0, 1, 3, 2])?, &[bs, lp * n_p, d])?;
    nx::narrow(back, 1, 0, l)
}

/// Shared excitation weights: `fc1[C, C/r]`, `fc2[C/r, C]`.
#[derive(Clone, Copy, Debug)]
pub struct SeWeights<'t> {
    pub fc1_w: Var<'t>,
    pub fc1_b: Var<'t>,
    pub fc2_w: Var<'t>,
    pub fc2_b: Var<'t>,
}

/// Channel attention on `[B, C, H, W]`:
/// `x · σ(FC₂(ReLU(FC₁(avg))) + FC₂(ReLU(FC₁(max))))`.
pub fn se_block<'t>(x: Var<'t>, w: &SeWeights<'t>) -> Result<Var<'t>> {
    let sh = x.shape();
    if sh.len() != 4 {
        return Err(Error::shape("se_block", &sh, &[0, 0, 0, 0]));
    }
    let (b, c) = (sh[0], sh[1]);
    let excite = |pooled: Var<'t>| -> Result<Var<'t>> {
        let v = nx::reshape(pooled, &[b, c])?;
        let h = nx::relu(nx::linear(v, w.fc1_w, Some(w.fc1_b))?);
        nx::linear(h, w.fc2_w, Some(w.fc2_b))
    };
    let avg = excite(nx::pool_global(x, PoolKind::Avg)?)?;
    let max = excite(nx::pool_global(x, PoolKind::Max)?)?;
    let gate = nx::apply_unary(nx::add(avg, max)?, nx::UnaryKind::Sigmoid);
    nx::mul(x, nx::reshape(gate, &[b, c, 1, 1])?)
}

#[derive(Clone, Copy, Debug)]
pub struct ConvWeights<'t> {
    /// `[c_out, c_in, 3, 3]`
    pub w: Var<'t>,
    pub b: Var<'t>,
}

#[derive(Clone, Copy, Debug)]
pub struct ResBlockWeights<'t> {
    pub conv1: ConvWeights<'t>,
    pub conv2: ConvWeights<'t>,
    pub se: SeWeights<'t>,
}

#[derive(Clone, Debug)]
pub struct SeResNetWeights<'t> {
    pub conv_in: ConvWeights<'t>,
    pub blocks: Vec<ResBlockWeights<'t>>,
    pub conv_out: ConvWeights<'t>,
}

/// `[B, 2, L, K] → [B, 2, L, K]`: lift to `C` channels, apply the residual
/// SE blocks and project back to two planes.
pub fn se_resnet<'t>(x: Var<'t>, w: &SeResNetWeights<'t>) -> Result<Var<'t>> {
    let sh = x.shape();
    if sh.len() != 4 || sh[1] != 2 {
        return Err(Error::shape(
            "se_resnet",
            &sh,
            &[sh.first().copied().unwrap_or(0), 2],
        ));
    }
    let mut h = nx::conv2d_3x3(x, w.conv_in.w, w.conv_in.b)?;
    for blk in &w.blocks {
        let y = nx::relu(nx::conv2d_3x3(h, blk.conv1.w, blk.conv1.b)?);
        let y = nx::conv2d_3x3(y, blk.conv2.w, blk.conv2.b)?;
        h = nx::add(h, se_block(y, &blk.se)?)?;
    }
    nx::conv2d_3x3(h, w.conv_out.w, w.conv_out.b)
}

#[derive(Clone, Copy, Debug)]
pub struct NormWeights<'t> {
    pub gamma: Var<'t>,
    pub beta: Var<'t>,
}

#[derive(Clone, Copy, Debug)]
pub struct MambaLayer<'t> {
    pub norm: NormWeights<'t>,
    pub block: MambaWeights<'t>,
}

/// Dropout settings for one forward pass; `rng` is `None` in eval mode.
pub struct DropoutCtx<'r> {
    pub p: f64,
    pub rng: Option<&'r mut Rng>,
}

impl DropoutCtx<'_> {
    pub fn eval() -> Self {
        DropoutCtx { p: 0.0, rng: None }
    }

    fn apply<'t>(&mut self, x: Var<'t>) -> Result<Var<'t>> {
        match self.rng.as_deref_mut() {
            Some(rng) => nx::dropout(x, self.p, true, rng),
            None => Ok(x),
        }
    }
}

/// `X ← X + Dropout(Mamba(LayerNorm(X)))` for every layer.
pub fn rmamba_stack<'t>(
    x: Var<'t>,
    layers: &[MambaLayer<'t>],
    eps: f64,
    options: ScanOptions,
    dropout: &mut DropoutCtx<'_>,
) -> Result<Var<'t>> {
    let mut h = x;
    for layer in layers {
        let n = nx::layer_norm(h, layer.norm.gamma, layer.norm.beta, eps)?;
        let y = dropout.apply(mamba_block(n, &layer.block, options)?)?;
        h = nx::add(h, y)?;
    }
    Ok(h)
}

#[derive(Clone, Copy, Debug)]
pub struct Affine<'t> {
    pub w: Var<'t>,
    pub b: Var<'t>,
}

impl<'t> Affine<'t> {
    fn apply(&self, x: Var<'t>) -> Result<Var<'t>> {
        nx::linear(x, self.w, Some(self.b))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AttentionLayer<'t> {
    pub norm1: NormWeights<'t>,
    pub q: Affine<'t>,
    pub k: Affine<'t>,
    pub v: Affine<'t>,
    pub o: Affine<'t>,
    pub norm2: NormWeights<'t>,
    pub ff1: Affine<'t>,
    pub ff2: Affine<'t>,
}

/// Multi-head scaled dot-product self-attention over `[B, L, d]`.
pub fn self_attention<'t>(x: Var<'t>, w: &AttentionLayer<'t>, heads: usize) -> Result<Var<'t>> {
    let sh = x.shape();
    let (b, l, d) = (sh[0], sh[1], sh[2]);
    if heads == 0 || d % heads != 0 {
        return Err(Error::field("attention_heads", "must divide d_model"));
    }
    let dh = d / heads;
    let split = |v: Var<'t>| -> Result<Var<'t>> {
        nx::permute(nx::reshape(v, &[b, l, heads, dh])?, &[0, 2, 1, 3])
    };
    let q = split(w.q.apply(x)?)?;
    let k = split(w.k.apply(x)?)?;
    let v = split(w.v.apply(x)?)?;
    let scores = nx::scale(
        nx::matmul(q, nx::transpose_last(k)?)?,
        1.0 / (dh as f64).sqrt(),
    );
    let ctx = nx::matmul(nx::softmax(scores), v)?;
    let merged = nx::reshape(nx::permute(ctx, &[0, 2, 1, 3])?, &[b, l, d])?;
    w.o.apply(merged)
}

/// Pre-norm transformer encoder layers with the same interface as
/// [`rmamba_stack`].
pub fn attention_backbone<'t>(
    x: Var<'t>,
    layers: &[AttentionLayer<'t>],
    heads: usize,
    eps: f64,
    dropout: &mut DropoutCtx<'_>,
) -> Result<Var<'t>> {
    let mut h = x;
    for layer in layers {
        let n = nx::layer_norm(h, layer.norm1.gamma, layer.norm1.beta, eps)?;
        h = nx::add(h, dropout.apply(self_attention(n, layer, heads)?)?)?;
        let n = nx::layer_norm(h, layer.norm2.gamma, layer.norm2.beta, eps)?;
        let f = layer.ff2.apply(nx::relu(layer.ff1.apply(n)?))?;
        h = nx::add(h, dropout.apply(f)?)?;
    }
    Ok(h)
}

#[derive(Clone, Copy, Debug)]
pub struct HeadWeights<'t> {
    /// `d_model → D`
    pub fc_f: Affine<'t>,
    /// `L → P` over time
    pub fc_t: Affine<'t>,
}

/// `[B, L, d_model] → [B, P, D]`, then back to the input scale.
pub fn prediction_head<'t>(x: Var<'t>, stats: NormStats, w: &HeadWeights<'t>) -> Result<Var<'t>> {
    let f = w.fc_f.apply(x)?;
    let t = w.fc_t.apply(nx::transpose_last(f)?)?;
    Ok(nx::affine(nx::transpose_last(t)?, stats.std, stats.mean))
}

/// All stage weights of one network, resolved from bound parameters.
#[derive(Clone, Debug)]
pub struct Weights<'t> {
    pub patch: Option<Affine<'t>>,
    pub se_resnet: Option<SeResNetWeights<'t>>,
    pub embed: Affine<'t>,
    pub mamba: Vec<MambaLayer<'t>>,
    pub attention: Vec<AttentionLayer<'t>>,
    pub head: HeadWeights<'t>,
}

impl<'t> Weights<'t> {
    pub fn resolve(p: &Bound<'t>, cfg: &ModelConfig) -> Result<Self> {
        let affine = |prefix: &str| -> Result<Affine<'t>> {
            Ok(Affine {
                w: p.get(&format!("{prefix}/w"))?,
                b: p.get(&format!("{prefix}/b"))?,
            })
        };
        let conv = |prefix: &str| -> Result<ConvWeights<'t>> {
            let a = affine(prefix)?;
            Ok(ConvWeights { w: a.w, b: a.b })
        };
        let norm = |prefix: &str| -> Result<NormWeights<'t>> {
            Ok(NormWeights {
                gamma: p.get(&format!("{prefix}/gamma"))?,
                beta: p.get(&format!("{prefix}/beta"))?,
            })
        };
        let patch = match cfg.ablation {
            Ablation::NoPatch => None,
            _ => Some(affine("patch")?),
        };
        let se_resnet = match cfg.ablation {
            Ablation::NoSe => None,
            _ => {
                let blocks = (0..cfg.res_blocks)
                    .map(|i| {
                        let pre = format!("se_resnet/block{i}");
                        let fc1 = affine(&format!("{pre}/se/fc1"))?;
                        let fc2 = affine(&format!("{pre}/se/fc2"))?;
                        Ok(ResBlockWeights {
                            conv1: conv(&format!("{pre}/conv1"))?,
                            conv2: conv(&format!("{pre}/conv2"))?,
                            se: SeWeights {
                                fc1_w: fc1.w,
                                fc1_b: fc1.b,
                                fc2_w: fc2.w,
                                fc2_b: fc2.b,
                            },
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Some(SeResNetWeights {
                    conv_in: conv("se_resnet/conv_in")?,
                    blocks,
                    conv_out: conv("se_resnet/conv_out")?,
                })
            }
        };
        let mut mamba = Vec::new();
        let mut attention = Vec::new();
        for i in 0..cfg.mamba_layers {
            if cfg.ablation == Ablation::AttentionBackbone {
                let pre = format!("attention/layer{i}");
                attention.push(AttentionLayer {
                    norm1: norm(&format!("{pre}/norm1"))?,
                    q: affine(&format!("{pre}/q"))?,
                    k: affine(&format!("{pre}/k"))?,
                    v: affine(&format!("{pre}/v"))?,
                    o: affine(&format!("{pre}/o"))?,
                    norm2: norm(&format!("{pre}/norm2"))?,
                    ff1: affine(&format!("{pre}/ff1"))?,
                    ff2: affine(&format!("{pre}/ff2"))?,
                });
            } else {
                let pre = format!("mamba/layer{i}");
                let g = |name: &str| p.get(&format!("{pre}/{name}"));
                mamba.push(MambaLayer {
                    norm: norm(&format!("{pre}/norm"))?,
                    block: MambaWeights {
                        in_s: g("in_s/w")?,
                        in_z: g("in_z/w")?,
                        conv_w: g("conv/w")?,
                        conv_b: g("conv/b")?,
                        ssm: SsmParams {
                            a_log: g("a_log")?,
                            dt_bias: g("dt_bias")?,
                            w_b: g("x_b/w")?,
                            w_c: g("x_c/w")?,
                            w_dt: g("x_dt/w")?,
                            d_skip: p.maybe(&format!("{pre}/d_skip")),
                        },
                        out: g("out/w")?,
                    },
                });
            }
        }
        Ok(Self {
            patch,
            se_resnet,
            embed: affine("embed")?,
            mamba,
            attention,
            head: HeadWeights {
                fc_f: affine("head/fc_f")?,
                fc_t: affine("head/fc_t")?,
            },
        })
    }
}

/// The complete network on `x[B, L, D]`, returning `[B, P, D]` in the input
/// scale. Normalization statistics are taken over the whole of `x`.
pub fn forward<'t>(
    tape: &'t Tape,
    weights: &Weights<'t>,
    cfg: &ModelConfig,
    x: &Tensor,
    dropout: &mut DropoutCtx<'_>,
) -> Result<Var<'t>> {
    let sh = x.shape();
    if sh.len() != 3 || sh[1] != cfg.history || sh[2] != cfg.features() {
        return Err(Error::shape(
            "forward",
            sh,
            &[
                sh.first().copied().unwrap_or(0),
                cfg.history,
                cfg.features(),
            ],
        ));
    }
    let (b, l, d) = (sh[0], sh[1], sh[2]);
    let k = cfg.subcarriers;
    let (xn, stats) = normalize(x);
    let mut h = tape.constant(xn);
    if let Some(p) = &weights.patch {
        h = patch_embed(h, p.w, p.b, cfg.patch_size)?;
    }
    if let Some(se) = &weights.se_resnet {
        let planes = nx::permute(nx::reshape(h, &[b, l, 2, k])?, &[0, 2, 1, 3])?;
        let y = se_resnet(planes, se)?;
        h = nx::reshape(nx::permute(y, &[0, 2, 1, 3])?, &[b, l, d])?;
    }
    h = weights.embed.apply(h)?;
    h = match cfg.ablation {
        Ablation::AttentionBackbone => attention_backbone(
            h,
            &weights.attention,
            cfg.attention_heads,
            cfg.layer_norm_eps,
            dropout,
        )?,
        _ => rmamba_stack(h, &weights.mamba, cfg.layer_norm_eps, cfg.scan, dropout)?,
    };
    prediction_head(h, stats, &weights.head)
}

impl ModelState {
    /// Eval-mode prediction for `x[B, L, D]`.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let tape = Tape::new();
        let bound = self.bind(&tape, false);
        let w = Weights::resolve(&bound, &self.config)?;
        let y = forward(&tape, &w, &self.config, x, &mut DropoutCtx::eval())?;
        Ok(y.to_tensor())
    }
}
