//! Forward-pass timing of the two sequence backbones against sequence length.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    attention_backbone, rmamba_stack, Ablation, DropoutCtx, ModelConfig, ModelState, Weights,
};
use crate::numerics::{Tape, Tensor};
use crate::rng::stream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub seq_lens: Vec<usize>,
    pub d_model: usize,
    pub layers: usize,
    /// Timed runs per point; the fastest is kept.
    pub repeats: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            seq_lens: vec![128, 256, 512, 1024],
            d_model: 64,
            layers: 2,
            repeats: 3,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backbone {
    Mamba,
    Attention,
}

impl std::fmt::Display for Backbone {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Backbone::Mamba => "mamba",
            Backbone::Attention => "attention",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub backbone: Backbone,
    pub seq_len: usize,
    pub seconds: f64,
    pub per_token_s: f64,
    /// Per-token time relative to the shortest length of the same backbone.
    pub growth: f64,
}

pub const BENCH_HEADER: [&str; 5] = ["backbone", "seq_len", "seconds", "per_token_s", "growth"];

/// Times an eval-mode forward of each backbone on `[1, L, d_model]` input.
pub fn bench_backbones(cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    if cfg.seq_lens.len() < 2 {
        return Err(Error::field("seq_lens", "need at least two lengths"));
    }
    if cfg.seq_lens.contains(&0) {
        return Err(Error::field("seq_lens", "lengths must be positive"));
    }
    if cfg.repeats == 0 {
        return Err(Error::field("repeats", "must be at least 1"));
    }
    let mut rows = Vec::new();
    for backbone in [Backbone::Mamba, Backbone::Attention] {
        let ablation = match backbone {
            Backbone::Mamba => Ablation::None,
            Backbone::Attention => Ablation::AttentionBackbone,
        };
        let model = ModelConfig {
            d_model: cfg.d_model,
            mamba_layers: cfg.layers,
            ..ModelConfig::desk().with_ablation(ablation)
        };
        let state = ModelState::init(model, cfg.seed)?;
        let mut first = None;
        for &len in &cfg.seq_lens {
            let mut rng = stream(cfg.seed, len as u64);
            let x = Tensor::new(
                [1, len, cfg.d_model],
                (0..len * cfg.d_model)
                    .map(|_| rng.gen_range(-1.0..1.0))
                    .collect(),
            )?;
            let mut best = f64::INFINITY;
            for _ in 0..cfg.repeats {
                best = best.min(time_forward(&state, &x)?);
            }
            let per_token = best / len as f64;
            let base = *first.get_or_insert(per_token);
            rows.push(BenchRow {
                backbone,
                seq_len: len,
                seconds: best,
                per_token_s: per_token,
                growth: per_token / base,
            });
        }
    }
    Ok(rows)
}

fn time_forward(state: &ModelState, x: &Tensor) -> Result<f64> {
    let tape = Tape::new();
    let bound = state.bind(&tape, false);
    let w = Weights::resolve(&bound, &state.config)?;
    let cfg = &state.config;
    let h = tape.constant(x.clone());
    let start = Instant::now();
    let y = match cfg.ablation {
        Ablation::AttentionBackbone => attention_backbone(
            h,
            &w.attention,
            cfg.attention_heads,
            cfg.layer_norm_eps,
            &mut DropoutCtx::eval(),
        )?,
        _ => rmamba_stack(
            h,
            &w.mamba,
            cfg.layer_norm_eps,
            cfg.scan,
            &mut DropoutCtx::eval(),
        )?,
    };
    let elapsed = start.elapsed().as_secs_f64();
    std::hint::black_box(y.numel());
    Ok(elapsed)
}

pub fn write_bench_csv(rows: &[BenchRow], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let err = |e: csv::Error| Error::Format {
        kind: "CSV",
        reason: e.to_string(),
    };
    out.write_record(BENCH_HEADER).map_err(err)?;
    for r in rows {
        out.write_record([
            r.backbone.to_string(),
            r.seq_len.to_string(),
            format!("{:.6e}", r.seconds),
            format!("{:.6e}", r.per_token_s),
            format!("{:.4}", r.growth),
        ])
        .map_err(err)?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))
}

pub fn save_bench_csv(rows: &[BenchRow], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_bench_csv(rows, std::io::BufWriter::new(file))
}

/// Per-token growth of `backbone` at the longest length.
pub fn growth_at_longest(rows: &[BenchRow], backbone: Backbone) -> Option<f64> {
    rows.iter()
        .filter(|r| r.backbone == backbone)
        .max_by_key(|r| r.seq_len)
        .map(|r| r.growth)
}
