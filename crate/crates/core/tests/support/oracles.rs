//! Channel, scan and discretisation oracles reduced to worst-case errors.

use std::f64::consts::PI;

use cpmamba::channel::*;
use cpmamba::numerics::{Tape, Tensor};
use cpmamba::rng::stream;
use cpmamba::ssm::*;
use num_complex::Complex64;

use super::{phi_reference, ScanProblem};

/// Largest deviation of the library steering vector from the direct
/// per-element phase formula.
pub fn steering_error() -> f64 {
    let lambda = ChannelConfig::desk().wavelength();
    let geom = ArrayGeometry {
        n_h: 3,
        n_v: 4,
        spacing_x_m: 0.4 * lambda,
        spacing_z_m: 0.7 * lambda,
    };
    let mut worst = 0.0f64;
    for (theta, phi) in [(0.3, 1.1), (-2.0, 0.2), (PI, PI / 2.0), (0.0, 0.0)] {
        let a = steering_vector(&geom, theta, phi, lambda);
        let k = 2.0 * PI / lambda;
        for h in 0..geom.n_h {
            for v in 0..geom.n_v {
                let phase = k
                    * (h as f64 * geom.spacing_x_m * phi.sin() * theta.cos()
                        + v as f64 * geom.spacing_z_m * phi.sin() * theta.sin());
                worst = worst.max((a[h * geom.n_v + v] - Complex64::from_polar(1.0, phase)).norm());
            }
        }
    }
    worst
}

fn single_path(speed_kmh: f64) -> ChannelConfig {
    ChannelConfig {
        paths: 1,
        speed_kmh,
        ..ChannelConfig::desk()
    }
}

/// `h_{t+sΔt} = e^{j2πνsΔt} h_t` on one path, worst entry over several seeds.
pub fn doppler_rotation_error() -> f64 {
    let mut worst = 0.0f64;
    for (seed, speed) in [(3, 60.0), (4, 100.0), (5, 10.0)] {
        let cfg = single_path(speed);
        let paths = sample_paths(&cfg, &mut stream(seed, 0));
        let nu = paths.paths[0].doppler_hz;
        let dt = cfg.sample_interval_s;
        let h0 = csi_frame(&paths, &cfg, 0.0);
        for step in 1..5 {
            let ht = csi_frame(&paths, &cfg, step as f64 * dt);
            let rot = Complex64::from_polar(1.0, 2.0 * PI * nu * step as f64 * dt);
            for (a, b) in h0.iter().zip(&ht) {
                worst = worst.max((a * rot - b).norm());
            }
        }
    }
    worst
}

/// Adjacent subcarriers differ by `e^{−j2πτΔf}` on one path.
pub fn delay_slope_error() -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..3 {
        let cfg = single_path(30.0);
        let paths = sample_paths(&cfg, &mut stream(seed, 1));
        let tau = paths.paths[0].delay_s;
        let h = csi_frame(&paths, &cfg, 1e-3);
        let slope = Complex64::from_polar(1.0, -2.0 * PI * tau * cfg.subcarrier_spacing_hz);
        for row in h.chunks(cfg.total_subcarriers) {
            for k in 0..cfg.total_subcarriers - 1 {
                worst = worst.max((row[k] * slope - row[k + 1]).norm());
            }
        }
    }
    worst
}

/// Worst |measured − requested| SNR in dB over 2·10⁵ noisy elements per level.
pub fn awgn_snr_error_db() -> f64 {
    let seq = generate_sequence(&ChannelConfig::desk(), &mut stream(12, 0), 2000).unwrap();
    let mut worst = 0.0f64;
    for (i, snr_db) in [0.0, 10.0, 25.0].into_iter().enumerate() {
        let noisy = add_awgn(&seq, Snr::Db(snr_db), &mut stream(13, i as u64));
        let p_noise = noisy
            .data
            .iter()
            .zip(&seq.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            / seq.data.len() as f64;
        let measured = 10.0 * (seq.mean_power() / p_noise).log10();
        worst = worst.max((measured - snr_db).abs());
    }
    worst
}

/// Worst absolute gap between the library scan and [`ScanProblem::naive`]
/// over the shape grid, both discretisations and both input modes.
pub fn scan_oracle_error(seeds: u64) -> f64 {
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let mut rng = stream(seed, 0);
        for e in [1, 2, 4] {
            for n in [1, 2, 4] {
                for len in [1, 2, 16] {
                    let p = ScanProblem::random(2, len, e, n, &mut rng);
                    for discretization in [Discretization::Exact, Discretization::Euler] {
                        for input in [ScanInput::Current, ScanInput::Lagged] {
                            let with_d = seed % 2 == 0;
                            let got = run_scan(
                                &p,
                                ScanOptions {
                                    discretization,
                                    input,
                                },
                                with_d,
                            );
                            let want = p.naive(
                                discretization == Discretization::Exact,
                                input == ScanInput::Lagged,
                                with_d,
                            );
                            for (a, b) in got.iter().zip(&want) {
                                worst = worst.max((a - b).abs());
                            }
                        }
                    }
                }
            }
        }
    }
    worst
}

pub fn run_scan(p: &ScanProblem, options: ScanOptions, with_d: bool) -> Vec<f64> {
    let tape = Tape::new();
    let t3 = |v: &[f64], last: usize| {
        tape.constant(Tensor::new([p.batch, p.len, last], v.to_vec()).unwrap())
    };
    let inputs = ScanInputs {
        x: t3(&p.x, p.e),
        delta: t3(&p.delta, p.e),
        b: t3(&p.b, p.n),
        c: t3(&p.c, p.n),
    };
    let a = tape.constant(Tensor::new([p.e, p.n], p.a.clone()).unwrap());
    let d = with_d.then(|| tape.constant(Tensor::new([p.e], p.d.clone()).unwrap()));
    selective_scan(&inputs, a, d, options)
        .unwrap()
        .to_tensor()
        .into_data()
}

/// Worst relative error of `(Ā, B̄)` against the reference over a grid that
/// straddles the series switchover.
pub fn zoh_error() -> f64 {
    let mut worst = 0.0f64;
    for &a in &[-50.0, -3.0, -1.0, -0.2, -1e-4, -1e-7, -1e-9, -1e-12] {
        for &delta in &[1e-3, 0.05, 0.7, 2.0] {
            for &b in &[-1.3, 0.4, 2.0] {
                let (a_bar, b_bar) = discretize(a, b, delta).unwrap();
                let z = delta * a;
                worst = worst.max((a_bar - z.exp()).abs() / z.exp());
                let want = delta * phi_reference(z) * b;
                worst = worst.max((b_bar - want).abs() / want.abs());
            }
        }
    }
    worst
}

/// Jump of the input gain across the series threshold, plus its distance
/// from the reference there.
pub fn zoh_switchover_gap() -> f64 {
    let t = SERIES_THRESHOLD;
    let mut worst = 0.0f64;
    for z in [-t, t] {
        let eps = t * 1e-6;
        let below = zoh_gain(z.signum() * (t - eps));
        let above = zoh_gain(z.signum() * (t + eps));
        worst = worst
            .max((below - above).abs())
            .max((below - phi_reference(z)).abs());
    }
    worst
}
