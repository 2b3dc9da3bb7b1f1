use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};

use super::sequence::CsiSequence;
use crate::rng::Rng;

/// Noise level for [`add_awgn`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Snr {
    Db(f64),
    /// No noise at all.
    Infinite,
}

/// Adds circular complex Gaussian noise with power
/// `σ² = mean|h|² / 10^(snr/10)` to every element.
pub fn add_awgn_in_place(values: &mut [Complex64], snr: Snr, rng: &mut Rng) {
    let Snr::Db(db) = snr else { return };
    let power = values.iter().map(|h| h.norm_sqr()).sum::<f64>() / values.len().max(1) as f64;
    let sigma = (power / 10f64.powf(db / 10.0) / 2.0).sqrt();
    for h in values {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        *h += Complex64::new(sigma * re, sigma * im);
    }
}

pub fn add_awgn(seq: &CsiSequence, snr: Snr, rng: &mut Rng) -> CsiSequence {
    let mut out = seq.clone();
    add_awgn_in_place(&mut out.data, snr, rng);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn infinite_snr_is_identity() {
        let mut v = vec![Complex64::new(1.0, -2.0); 10];
        let before = v.clone();
        add_awgn_in_place(&mut v, Snr::Infinite, &mut stream(0, 0));
        assert_eq!(v, before);
    }
}
