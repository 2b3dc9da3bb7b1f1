//! Dataset assembly and the `CSID` file format.
//!
//! Layout (little-endian):
//!
//! ```text
//! b"CSID"  u32 version
//! u32 samples  u32 frames  u32 antennas  u32 subcarriers
//! f64 carrier_hz  f64 sample_interval_s  f64 speed_kmh[samples]
//! per sample: [frame][antenna][subcarrier] as interleaved (re, im) f64
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::config::ChannelConfig;
use super::sequence::{generate_sequence, CsiSequence};
use crate::error::{Error, Result};
use crate::parallel::par_map;
use crate::rng::{stream, stream_index};

pub const CSID_MAGIC: &[u8; 4] = b"CSID";
pub const CSID_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    fn tag(self) -> u8 {
        match self {
            Split::Train => 1,
            Split::Val => 2,
            Split::Test => 3,
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::field("split", format!("unknown split `{other}`"))),
        }
    }
}

/// Everything needed to regenerate a dataset split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub channel: ChannelConfig,
    pub history: usize,
    pub horizon: usize,
    pub train_samples: usize,
    pub val_samples: usize,
    pub test_samples_per_speed: usize,
    pub speed_min_kmh: f64,
    pub speed_max_kmh: f64,
    pub test_speeds: usize,
}

impl DatasetSpec {
    pub fn desk() -> Self {
        Self {
            channel: ChannelConfig::desk(),
            history: 16,
            horizon: 4,
            train_samples: 2048,
            val_samples: 256,
            test_samples_per_speed: 256,
            speed_min_kmh: 10.0,
            speed_max_kmh: 100.0,
            test_speeds: 10,
        }
    }

    pub fn paper() -> Self {
        Self {
            channel: ChannelConfig::paper(),
            train_samples: 8000,
            val_samples: 1000,
            test_samples_per_speed: 1000,
            ..Self::desk()
        }
    }

    pub fn frames(&self) -> usize {
        self.history + self.horizon
    }

    pub fn samples(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train_samples,
            Split::Val => self.val_samples,
            Split::Test => self.test_samples_per_speed * self.test_speeds,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        if self.history == 0 {
            return Err(Error::field("history", "must be at least 1"));
        }
        if self.horizon == 0 {
            return Err(Error::field("horizon", "must be at least 1"));
        }
        if !(self.speed_min_kmh >= 0.0 && self.speed_max_kmh >= self.speed_min_kmh) {
            return Err(Error::field(
                "speed_max_kmh",
                "speed range must satisfy 0 ≤ min ≤ max",
            ));
        }
        if self.test_speeds == 0 {
            return Err(Error::field("test_speeds", "must be at least 1"));
        }
        Ok(())
    }
}

/// `n` equally spaced speeds from `lo` to `hi` inclusive.
pub fn speed_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + i as f64 * (hi - lo) / (n - 1) as f64)
            .collect(),
    }
}

/// A set of equally shaped CSI sequences.
#[derive(Clone, Debug, PartialEq)]
pub struct CsiDataset {
    pub carrier_hz: f64,
    pub sample_interval_s: f64,
    pub frames: usize,
    pub antennas: usize,
    pub subcarriers: usize,
    pub samples: Vec<CsiSequence>,
}

/// Generates one split. Sample `i` uses its own stream of `seed`, so the
/// result does not depend on generation order or thread count.
pub fn build_dataset(spec: &DatasetSpec, split: Split, seed: u64) -> Result<CsiDataset> {
    spec.validate()?;
    let n = spec.samples(split);
    let grid = speed_grid(spec.speed_min_kmh, spec.speed_max_kmh, spec.test_speeds);
    let per_speed = spec.test_samples_per_speed.max(1);
    let samples = par_map(n, |i| {
        let mut rng = stream(seed, stream_index(split.tag(), 0, i as u64));
        let speed_kmh = match split {
            Split::Test => grid[i / per_speed],
            Split::Train | Split::Val => rng.gen_range(spec.speed_min_kmh..=spec.speed_max_kmh),
        };
        let cfg = ChannelConfig {
            speed_kmh,
            ..spec.channel.clone()
        };
        generate_sequence(&cfg, &mut rng, spec.frames())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(CsiDataset {
        carrier_hz: spec.channel.carrier_hz,
        sample_interval_s: spec.channel.sample_interval_s,
        frames: spec.frames(),
        antennas: spec.channel.geometry.antennas(),
        subcarriers: spec.channel.total_subcarriers,
        samples,
    })
}

fn format_err(reason: impl Into<String>) -> Error {
    Error::Format {
        kind: "CSID",
        reason: reason.into(),
    }
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> std::io::Result<f64> {
    let mut b = [0; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

impl CsiDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(CSID_MAGIC)?;
        w.write_all(&CSID_VERSION.to_le_bytes())?;
        for n in [
            self.samples.len(),
            self.frames,
            self.antennas,
            self.subcarriers,
        ] {
            w.write_all(&(n as u32).to_le_bytes())?;
        }
        w.write_all(&self.carrier_hz.to_le_bytes())?;
        w.write_all(&self.sample_interval_s.to_le_bytes())?;
        for s in &self.samples {
            w.write_all(&s.speed_kmh.to_le_bytes())?;
        }
        for s in &self.samples {
            for h in &s.data {
                w.write_all(&h.re.to_le_bytes())?;
                w.write_all(&h.im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let wrap = |e: std::io::Error| format_err(e.to_string());
        let mut magic = [0; 4];
        r.read_exact(&mut magic).map_err(wrap)?;
        if &magic != CSID_MAGIC {
            return Err(format_err("bad magic"));
        }
        let version = read_u32(r).map_err(wrap)?;
        if version != CSID_VERSION {
            return Err(format_err(format!("unsupported version {version}")));
        }
        let mut counts = [0usize; 4];
        for c in &mut counts {
            *c = read_u32(r).map_err(wrap)? as usize;
        }
        let [n, frames, antennas, subcarriers] = counts;
        let carrier_hz = read_f64(r).map_err(wrap)?;
        let sample_interval_s = read_f64(r).map_err(wrap)?;
        let speeds = (0..n)
            .map(|_| read_f64(r))
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(wrap)?;
        let per = frames * antennas * subcarriers;
        let mut samples = Vec::with_capacity(n);
        let mut buf = vec![0u8; per * 16];
        for speed_kmh in speeds {
            r.read_exact(&mut buf).map_err(wrap)?;
            let data = buf
                .chunks_exact(16)
                .map(|c| {
                    Complex64::new(
                        f64::from_le_bytes(c[..8].try_into().unwrap()),
                        f64::from_le_bytes(c[8..].try_into().unwrap()),
                    )
                })
                .collect();
            samples.push(CsiSequence::new(
                frames,
                antennas,
                subcarriers,
                speed_kmh,
                data,
            )?);
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing).map_err(wrap)? != 0 {
            return Err(format_err("trailing bytes after last sample"));
        }
        Ok(Self {
            carrier_hz,
            sample_interval_s,
            frames,
            antennas,
            subcarriers,
            samples,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut BufReader::new(file))
    }

    /// Distinct sample speeds in ascending order.
    pub fn speeds(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.samples.iter().map(|s| s.speed_kmh).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> DatasetSpec {
        DatasetSpec {
            train_samples: 6,
            val_samples: 3,
            test_samples_per_speed: 2,
            test_speeds: 3,
            ..DatasetSpec::desk()
        }
    }

    #[test]
    fn desk_counts() {
        let d = DatasetSpec::desk();
        assert_eq!(d.samples(Split::Train), 2048);
        assert_eq!(d.samples(Split::Val), 256);
        assert_eq!(d.samples(Split::Test), 2560);
        assert_eq!(d.frames(), 20);
    }

    #[test]
    fn ten_point_grid() {
        let g = speed_grid(10.0, 100.0, 10);
        assert_eq!(g, vec![10., 20., 30., 40., 50., 60., 70., 80., 90., 100.]);
    }

    #[test]
    fn same_seed_same_bytes() {
        let spec = tiny();
        let mut a = Vec::new();
        let mut b = Vec::new();
        build_dataset(&spec, Split::Train, 9)
            .unwrap()
            .write_to(&mut a)
            .unwrap();
        build_dataset(&spec, Split::Train, 9)
            .unwrap()
            .write_to(&mut b)
            .unwrap();
        assert_eq!(a, b);
        let mut c = Vec::new();
        build_dataset(&spec, Split::Train, 10)
            .unwrap()
            .write_to(&mut c)
            .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sample_independent_of_split_size() {
        let small = build_dataset(&tiny(), Split::Train, 4).unwrap();
        let big = build_dataset(
            &DatasetSpec {
                train_samples: 12,
                ..tiny()
            },
            Split::Train,
            4,
        )
        .unwrap();
        assert_eq!(small.samples[..], big.samples[..6]);
    }

    #[test]
    fn file_roundtrip() {
        let d = build_dataset(&tiny(), Split::Test, 1).unwrap();
        let mut bytes = Vec::new();
        d.write_to(&mut bytes).unwrap();
        let back = CsiDataset::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.speeds(), vec![10.0, 55.0, 100.0]);

        bytes.truncate(bytes.len() - 3);
        assert!(CsiDataset::read_from(&mut bytes.as_slice()).is_err());
    }

    #[test]
    fn load_reports_path() {
        let err = CsiDataset::load(Path::new("/nonexistent/x.csid")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/x.csid"));
    }
}
