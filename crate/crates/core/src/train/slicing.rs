use serde::{Deserialize, Serialize};

use crate::channel::CsiSequence;
use crate::error::{Error, Result};

/// Duplexing mode. The lower half of the subcarriers is the uplink band and
/// the upper half the downlink band.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Downlink history predicts downlink future.
    #[default]
    Tdd,
    /// Uplink history predicts downlink future.
    Fdd,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tdd" => Ok(Mode::Tdd),
            "fdd" => Ok(Mode::Fdd),
            other => Err(Error::field("mode", format!("unknown mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Tdd => "tdd",
            Mode::Fdd => "fdd",
        })
    }
}

/// Splits a sample of `L + P` frames over `2K` subcarriers into the
/// `[L × N_t × K]` input and the `[P × N_t × K]` downlink target.
pub fn slice_mode(
    sample: &CsiSequence,
    mode: Mode,
    history: usize,
) -> Result<(CsiSequence, CsiSequence)> {
    if !sample.subcarriers.is_multiple_of(2) {
        return Err(Error::field(
            "total_subcarriers",
            format!(
                "must be even to split into bands, got {}",
                sample.subcarriers
            ),
        ));
    }
    if history == 0 || history >= sample.frames {
        return Err(Error::field(
            "history",
            format!(
                "must lie in 1..{} for {}-frame samples",
                sample.frames, sample.frames
            ),
        ));
    }
    let k = sample.subcarriers / 2;
    let input_band = match mode {
        Mode::Tdd => k,
        Mode::Fdd => 0,
    };
    let input = sample.window(0, history, input_band, k)?;
    let target = sample.window(history, sample.frames - history, k, k)?;
    Ok((input, target))
}

/// No prediction: the last observed frame repeated for every horizon.
pub fn baseline_np(input: &CsiSequence, horizon: usize) -> Result<CsiSequence> {
    if input.frames == 0 {
        return Err(Error::field("history", "needs at least one frame"));
    }
    let last = input.frame(input.frames - 1);
    let data = (0..horizon).flat_map(|_| last.iter().copied()).collect();
    CsiSequence::new(
        horizon,
        input.antennas,
        input.subcarriers,
        input.speed_kmh,
        data,
    )
}

/// Per-entry linear extrapolation from the last two frames:
/// `ĥ_{L+p} = h_L + p·(h_L − h_{L−1})`.
pub fn baseline_linear(input: &CsiSequence, horizon: usize) -> Result<CsiSequence> {
    if input.frames < 2 {
        return Err(Error::field(
            "history",
            "linear extrapolation needs two frames",
        ));
    }
    let last = input.frame(input.frames - 1);
    let prev = input.frame(input.frames - 2);
    let data = (1..=horizon)
        .flat_map(|p| {
            last.iter()
                .zip(prev)
                .map(move |(l, q)| l + (l - q) * p as f64)
        })
        .collect();
    CsiSequence::new(
        horizon,
        input.antennas,
        input.subcarriers,
        input.speed_kmh,
        data,
    )
}
