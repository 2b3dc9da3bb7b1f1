use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::config::{lr_schedule, TrainConfig};
use super::metrics::nmse_loss;
use super::slicing::slice_mode;
use crate::channel::{add_awgn, CsiDataset, CsiSequence, Snr};
use crate::error::{Error, Result};
use crate::model::{forward, reshape_input, DropoutCtx, ModelState, Weights};
use crate::numerics::{AdamState, Tape, Tensor};
use crate::parallel::par_map;
use crate::rng::{stream, stream_index, Rng};

const TAG_SHUFFLE: u8 = 0x10;
const TAG_NOISE: u8 = 0x11;
const TAG_DROPOUT: u8 = 0x12;
const TAG_VAL: u8 = 0x13;

/// One sample split into its (clean) input history and its target tensor.
#[derive(Clone, Debug)]
pub struct Example {
    pub input: CsiSequence,
    /// `[N_t, P, D]`
    pub target: Tensor,
}

pub fn examples(data: &CsiDataset, cfg: &TrainConfig, history: usize) -> Result<Vec<Example>> {
    data.samples
        .iter()
        .map(|s| {
            let (input, target) = slice_mode(s, cfg.mode, history)?;
            Ok(Example {
                input,
                target: reshape_input(&[target])?,
            })
        })
        .collect()
}

/// Input tensor with AWGN at an SNR drawn from the configured range.
fn noisy_input(ex: &Example, cfg: &TrainConfig, rng: &mut Rng) -> Result<Tensor> {
    if !cfg.inject_noise {
        return reshape_input(std::slice::from_ref(&ex.input));
    }
    let snr = rng.gen_range(cfg.snr_min_db..=cfg.snr_max_db);
    reshape_input(&[add_awgn(&ex.input, Snr::Db(snr), rng)])
}

/// NMSE of one sample and its gradient for every parameter.
pub fn loss_and_grads(
    state: &ModelState,
    x: &Tensor,
    target: &Tensor,
    dropout_rng: Option<&mut Rng>,
) -> Result<(f64, BTreeMap<String, Tensor>)> {
    let tape = Tape::new();
    let bound = state.bind(&tape, true);
    let w = Weights::resolve(&bound, &state.config)?;
    let mut drop = DropoutCtx {
        p: state.config.dropout,
        rng: dropout_rng,
    };
    let pred = forward(&tape, &w, &state.config, x, &mut drop)?;
    let loss = nmse_loss(pred, target)?;
    let grads = tape.backward(loss)?;
    let map = bound
        .vars
        .iter()
        .map(|(k, v)| (k.clone(), grads.get_or_zeros(*v)))
        .collect();
    Ok((loss.item(), map))
}

/// Eval-mode NMSE of one sample.
pub fn sample_nmse(state: &ModelState, x: &Tensor, target: &Tensor) -> Result<f64> {
    let pred = state.predict(x)?;
    super::metrics::nmse_real(pred.data(), target.data())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub grad_norm: f64,
    pub lr: f64,
}

/// Optimizer state plus the step counter that keys the noise streams.
pub struct Trainer {
    pub state: ModelState,
    pub cfg: TrainConfig,
    adam: AdamState,
    steps: usize,
}

impl Trainer {
    pub fn new(state: ModelState, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        state.validate()?;
        if state.config.ablation != cfg.ablation {
            return Err(Error::field(
                "ablation",
                format!(
                    "model is `{}` but training asks for `{}`",
                    state.config.ablation, cfg.ablation
                ),
            ));
        }
        let adam = AdamState::new(cfg.beta1, cfg.beta2, cfg.adam_eps);
        Ok(Self {
            state,
            cfg,
            adam,
            steps: 0,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// One Adam step on the mean loss over `batch`. Per-sample streams are
    /// keyed by `(epoch, position)`, so the result does not depend on the
    /// thread count.
    pub fn step(
        &mut self,
        examples: &[Example],
        batch: &[usize],
        epoch: usize,
        lr: f64,
    ) -> Result<StepStats> {
        let seed = self.cfg.seed;
        let first = self.steps as u64 * self.cfg.batch_size as u64;
        let state = &self.state;
        let cfg = &self.cfg;
        let results = par_map(batch.len(), |j| {
            let ex = &examples[batch[j]];
            let pos = first + j as u64;
            let mut noise = stream(seed, stream_index(TAG_NOISE, epoch as u64, pos));
            let mut drop = stream(seed, stream_index(TAG_DROPOUT, epoch as u64, pos));
            let x = noisy_input(ex, cfg, &mut noise)?;
            loss_and_grads(state, &x, &ex.target, Some(&mut drop))
        });
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        let mut total: BTreeMap<String, Tensor> = BTreeMap::new();
        for r in results {
            let (l, grads) = r?;
            loss += l * scale;
            for (k, g) in grads {
                match total.get_mut(&k) {
                    Some(acc) => {
                        for (a, v) in acc.data_mut().iter_mut().zip(g.data()) {
                            *a += v * scale;
                        }
                    }
                    None => {
                        total.insert(k, g.map(|v| v * scale));
                    }
                }
            }
        }
        let grad_norm = total.values().map(Tensor::sum_sq).sum::<f64>().sqrt();
        if !loss.is_finite() || !grad_norm.is_finite() {
            return Err(Error::Diverged {
                step: self.steps,
                lr,
                grad_norm,
                loss,
            });
        }
        let items = self
            .state
            .params
            .iter_mut()
            .map(|(k, v)| (k.as_str(), v, &total[k]));
        self.adam.step(items, lr)?;
        self.steps += 1;
        self.state.step += 1;
        Ok(StepStats {
            loss,
            grad_norm,
            lr,
        })
    }

    /// One pass over `examples` in a seeded shuffled order.
    pub fn epoch(&mut self, examples: &[Example], epoch: usize) -> Result<f64> {
        let lr = lr_schedule(epoch, &self.cfg)?;
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order.shuffle(&mut stream(
            self.cfg.seed,
            stream_index(TAG_SHUFFLE, epoch as u64, 0),
        ));
        let mut sum = 0.0;
        let mut count = 0;
        for batch in order.chunks(self.cfg.batch_size) {
            let s = self.step(examples, batch, epoch, lr)?;
            sum += s.loss * batch.len() as f64;
            count += batch.len();
        }
        Ok(sum / count.max(1) as f64)
    }
}

/// Mean eval-mode NMSE with fixed per-sample validation noise.
pub fn validation_nmse(state: &ModelState, examples: &[Example], cfg: &TrainConfig) -> Result<f64> {
    let scores = par_map(examples.len(), |i| {
        let mut rng = stream(cfg.seed, stream_index(TAG_VAL, 0, i as u64));
        let x = noisy_input(&examples[i], cfg, &mut rng)?;
        sample_nmse(state, &x, &examples[i].target)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(scores.iter().sum::<f64>() / scores.len().max(1) as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_nmse: f64,
    pub val_nmse: f64,
}

pub const HISTORY_HEADER: [&str; 4] = ["epoch", "lr", "train_nmse", "val_nmse"];

pub fn write_history_csv(history: &[EpochRecord], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let err = |e: csv::Error| Error::Format {
        kind: "CSV",
        reason: e.to_string(),
    };
    out.write_record(HISTORY_HEADER).map_err(err)?;
    for r in history {
        out.write_record([
            r.epoch.to_string(),
            r.lr.to_string(),
            r.train_nmse.to_string(),
            r.val_nmse.to_string(),
        ])
        .map_err(err)?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))
}

pub fn save_history_csv(history: &[EpochRecord], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_history_csv(history, std::io::BufWriter::new(file))
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters at the epoch with the lowest validation NMSE.
    pub best: ModelState,
    pub best_epoch: usize,
    pub last: ModelState,
    pub history: Vec<EpochRecord>,
}

/// Full training run; `on_epoch` sees each record as it is produced.
pub fn train_with(
    state: ModelState,
    train: &CsiDataset,
    val: &CsiDataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    let history_len = state.config.history;
    let expect_k = 2 * state.config.subcarriers;
    for (name, d) in [("train", train), ("val", val)] {
        if d.subcarriers != expect_k || d.frames != history_len + state.config.horizon {
            return Err(Error::Config(format!(
                "{name} data has {} frames × {} subcarriers, model expects {} × {}",
                d.frames,
                d.subcarriers,
                history_len + state.config.horizon,
                expect_k
            )));
        }
        if d.is_empty() {
            return Err(Error::Config(format!("{name} data is empty")));
        }
    }
    let train_ex = examples(train, cfg, history_len)?;
    let val_ex = examples(val, cfg, history_len)?;
    let mut trainer = Trainer::new(state, cfg.clone())?;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best = (f64::INFINITY, 0, trainer.state.clone());
    for epoch in 0..cfg.epochs {
        let train_nmse = trainer.epoch(&train_ex, epoch)?;
        let val_nmse = validation_nmse(&trainer.state, &val_ex, cfg)?;
        let rec = EpochRecord {
            epoch,
            lr: lr_schedule(epoch, cfg)?,
            train_nmse,
            val_nmse,
        };
        on_epoch(&rec);
        history.push(rec);
        if val_nmse < best.0 {
            best = (val_nmse, epoch, trainer.state.clone());
        }
    }
    Ok(TrainOutcome {
        best: best.2,
        best_epoch: best.1,
        last: trainer.state,
        history,
    })
}

pub fn train(
    state: ModelState,
    train: &CsiDataset,
    val: &CsiDataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with(state, train, val, cfg, |_| {})
}

const TAG_GRADCHECK: u8 = 0x14;

/// Compares eval-mode loss gradients against central differences on
/// `samples` parameter entries drawn uniformly from all of them.
pub fn grad_check_model(
    state: &ModelState,
    x: &Tensor,
    target: &Tensor,
    samples: usize,
    seed: u64,
    cfg: crate::numerics::GradCheckConfig,
) -> Result<crate::numerics::GradCheckReport> {
    use crate::numerics::{central_difference, relative_error};

    let (_, grads) = loss_and_grads(state, x, target, None)?;
    let names: Vec<&String> = state.params.keys().collect();
    let sizes: Vec<usize> = state.params.values().map(Tensor::numel).collect();
    let total: usize = sizes.iter().sum();
    let mut rng = stream(seed, stream_index(TAG_GRADCHECK, 0, 0));
    let mut analytic = Vec::with_capacity(samples);
    let mut numeric = Vec::with_capacity(samples);
    for _ in 0..samples {
        let mut flat = rng.gen_range(0..total);
        let mut p = 0;
        while flat >= sizes[p] {
            flat -= sizes[p];
            p += 1;
        }
        let name = names[p];
        analytic.push(grads[name].data()[flat]);
        let n = central_difference(
            |h| {
                let mut probe = state.clone();
                probe.param_mut(name)?.data_mut()[flat] += h;
                sample_nmse(&probe, x, target)
            },
            cfg.step,
        )?;
        numeric.push(n);
    }
    let (worst_index, max_rel_error) = analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| relative_error(a, n, cfg.floor))
        .enumerate()
        .fold((0, 0.0), |acc, (i, e)| if e > acc.1 { (i, e) } else { acc });
    Ok(crate::numerics::GradCheckReport {
        max_rel_error,
        worst_index,
        analytic,
        numeric,
        passed: max_rel_error < cfg.tol,
    })
}
