use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{error_metrics, nmse};
use super::slicing::{baseline_linear, baseline_np, slice_mode, Mode};
use crate::channel::{add_awgn, CsiDataset, CsiSequence, Snr};
use crate::error::{Error, Result};
use crate::model::{reshape_input, restore_output, ModelState};
use crate::parallel::par_map;
use crate::rng::{stream, stream_index};

const TAG_EVAL: u8 = 0x20;

/// Anything that maps an input history to `horizon` future frames.
pub trait Predictor: Sync {
    fn name(&self) -> String;
    fn predict(&self, input: &CsiSequence, horizon: usize) -> Result<CsiSequence>;
}

impl Predictor for ModelState {
    fn name(&self) -> String {
        match self.config.ablation {
            crate::model::Ablation::None => "cpmamba".into(),
            other => format!("cpmamba_{other}"),
        }
    }

    fn predict(&self, input: &CsiSequence, horizon: usize) -> Result<CsiSequence> {
        if horizon != self.config.horizon {
            return Err(Error::field(
                "horizon",
                format!(
                    "model predicts {} frames, {horizon} requested",
                    self.config.horizon
                ),
            ));
        }
        let x = reshape_input(std::slice::from_ref(input))?;
        let y = ModelState::predict(self, &x)?;
        let mut out = restore_output(&y, input.antennas, &[input.speed_kmh])?;
        Ok(out.remove(0))
    }
}

/// Repeats the last observed frame.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoPrediction;

impl Predictor for NoPrediction {
    fn name(&self) -> String {
        "np".into()
    }

    fn predict(&self, input: &CsiSequence, horizon: usize) -> Result<CsiSequence> {
        baseline_np(input, horizon)
    }
}

/// Extrapolates the last two frames linearly.
#[derive(Clone, Copy, Debug, Default)]
pub struct LinearExtrapolation;

impl Predictor for LinearExtrapolation {
    fn name(&self) -> String {
        "linear".into()
    }

    fn predict(&self, input: &CsiSequence, horizon: usize) -> Result<CsiSequence> {
        baseline_linear(input, horizon)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Speed,
    Snr,
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "speed" => Ok(Axis::Speed),
            "snr" => Ok(Axis::Snr),
            other => Err(Error::field("axis", format!("unknown axis `{other}`"))),
        }
    }
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Axis::Speed => "speed",
            Axis::Snr => "snr",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOptions {
    pub axis: Axis,
    /// Conditions to report; `None` means every test speed, or
    /// `0, 5, …, 25` dB on the SNR axis.
    pub grid: Option<Vec<f64>>,
    pub mode: Mode,
    pub history: usize,
    /// Input noise for speed sweeps.
    pub speed_axis_snr: Snr,
    /// Subset evaluated on the SNR axis.
    pub snr_axis_speed_kmh: f64,
    pub seed: u64,
    pub dataset_id: String,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            axis: Axis::Speed,
            grid: None,
            mode: Mode::Tdd,
            history: 16,
            speed_axis_snr: Snr::Db(15.0),
            snr_axis_speed_kmh: 60.0,
            seed: 0,
            dataset_id: String::new(),
        }
    }
}

/// `lo, lo + step, …` up to and including `hi` (with a half-step tolerance).
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [lo, hi, step] = parts.as_slice() else {
        return Err(Error::field(
            "grid",
            format!("expected lo:hi:step, got `{spec}`"),
        ));
    };
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::field("grid", format!("`{s}` is not a number")))
    };
    let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
    if !(step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::field("grid", "need lo <= hi and step > 0"));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| lo + i as f64 * step).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub condition_value: f64,
    /// Mean per-sample NMSE.
    pub nmse: f64,
    /// Over every element of the condition group.
    pub rmse: f64,
    pub mae: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub axis: Axis,
    pub mode: Mode,
    pub method: String,
    pub dataset_id: String,
    pub seed: u64,
    pub rows: Vec<MetricsRow>,
    pub mean_nmse: f64,
    pub mean_rmse: f64,
    pub mean_mae: f64,
}

pub const METRICS_HEADER: [&str; 7] = [
    "condition_axis",
    "condition_value",
    "mode",
    "nmse",
    "rmse",
    "mae",
    "n",
];

impl MetricsReport {
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let err = |e: csv::Error| Error::Format {
            kind: "CSV",
            reason: e.to_string(),
        };
        out.write_record(METRICS_HEADER).map_err(err)?;
        for r in &self.rows {
            out.write_record([
                self.axis.to_string(),
                r.condition_value.to_string(),
                self.mode.to_string(),
                r.nmse.to_string(),
                r.rmse.to_string(),
                r.mae.to_string(),
                r.n.to_string(),
            ])
            .map_err(err)?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Groups of sample indices per condition, with the noise applied to each.
fn conditions(data: &CsiDataset, opts: &EvalOptions) -> Result<Vec<(f64, Snr, Vec<usize>)>> {
    let at_speed = |v: f64| -> Vec<usize> {
        (0..data.len())
            .filter(|&i| (data.samples[i].speed_kmh - v).abs() < 1e-6)
            .collect()
    };
    let groups = match opts.axis {
        Axis::Speed => {
            let grid = opts.grid.clone().unwrap_or_else(|| data.speeds());
            grid.into_iter()
                .map(|v| (v, opts.speed_axis_snr, at_speed(v)))
                .collect::<Vec<_>>()
        }
        Axis::Snr => {
            let grid = opts
                .grid
                .clone()
                .unwrap_or_else(|| parse_grid("0:25:5").unwrap());
            let subset = at_speed(opts.snr_axis_speed_kmh);
            grid.into_iter()
                .map(|v| (v, Snr::Db(v), subset.clone()))
                .collect()
        }
    };
    if groups.is_empty() {
        return Err(Error::field("grid", "no conditions to evaluate"));
    }
    for (v, _, idx) in &groups {
        if idx.is_empty() {
            let what = match opts.axis {
                Axis::Speed => format!("no test samples at {v} km/h"),
                Axis::Snr => format!("no test samples at {} km/h", opts.snr_axis_speed_kmh),
            };
            return Err(Error::field("grid", what));
        }
    }
    Ok(groups)
}

struct SampleScore {
    nmse: f64,
    sq: f64,
    abs: f64,
    n: usize,
}

/// Metrics per condition. Input noise for sample `i` under condition `c`
/// comes from its own stream, so every predictor sees identical inputs.
pub fn evaluate(
    predictor: &dyn Predictor,
    data: &CsiDataset,
    opts: &EvalOptions,
) -> Result<MetricsReport> {
    let groups = conditions(data, opts)?;
    let mut rows = Vec::with_capacity(groups.len());
    for (c, (value, snr, idx)) in groups.iter().enumerate() {
        let scores = par_map(idx.len(), |j| -> Result<SampleScore> {
            let i = idx[j];
            let (input, target) = slice_mode(&data.samples[i], opts.mode, opts.history)?;
            let mut rng = stream(opts.seed, stream_index(TAG_EVAL, c as u64, i as u64));
            let noisy = add_awgn(&input, *snr, &mut rng);
            let pred = predictor.predict(&noisy, target.frames)?;
            let (rmse, mae) = error_metrics(&pred.data, &target.data)?;
            let n = target.data.len();
            Ok(SampleScore {
                nmse: nmse(&pred.data, &target.data)?,
                sq: rmse * rmse * n as f64,
                abs: mae * n as f64,
                n,
            })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let count: usize = scores.iter().map(|s| s.n).sum();
        rows.push(MetricsRow {
            condition_value: *value,
            nmse: scores.iter().map(|s| s.nmse).sum::<f64>() / scores.len() as f64,
            rmse: (scores.iter().map(|s| s.sq).sum::<f64>() / count as f64).sqrt(),
            mae: scores.iter().map(|s| s.abs).sum::<f64>() / count as f64,
            n: scores.len(),
        });
    }
    let mean = |f: fn(&MetricsRow) -> f64| rows.iter().map(f).sum::<f64>() / rows.len() as f64;
    Ok(MetricsReport {
        axis: opts.axis,
        mode: opts.mode,
        method: predictor.name(),
        dataset_id: opts.dataset_id.clone(),
        seed: opts.seed,
        mean_nmse: mean(|r| r.nmse),
        mean_rmse: mean(|r| r.rmse),
        mean_mae: mean(|r| r.mae),
        rows,
    })
}
