//! Independent reference implementations shared by the integration tests
//! and the acceptance runner.
#![allow(dead_code)]

pub mod gradients;
pub mod oracles;

use rand::Rng;

/// `(e^z − 1)/z` from its Taylor series for small |z| and the direct
/// quotient elsewhere. Neither branch shares code with the library.
pub fn phi_reference(z: f64) -> f64 {
    if z.abs() <= 1.0 {
        let (mut term, mut sum) = (1.0, 1.0);
        for k in 1..40 {
            term *= z / (k + 1) as f64;
            sum += term;
        }
        sum
    } else {
        (z.exp() - 1.0) / z
    }
}

/// Inputs of a random selective-scan problem, flat row-major.
pub struct ScanProblem {
    pub batch: usize,
    pub len: usize,
    pub e: usize,
    pub n: usize,
    pub x: Vec<f64>,
    pub delta: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
}

impl ScanProblem {
    pub fn random(batch: usize, len: usize, e: usize, n: usize, rng: &mut impl Rng) -> Self {
        let mut draw = |count: usize, lo: f64, hi: f64| {
            (0..count)
                .map(|_| rng.gen_range(lo..hi))
                .collect::<Vec<_>>()
        };
        Self {
            batch,
            len,
            e,
            n,
            x: draw(batch * len * e, -1.0, 1.0),
            delta: draw(batch * len * e, 0.01, 1.5),
            a: draw(e * n, -4.0, -0.05),
            b: draw(batch * len * n, -1.0, 1.0),
            c: draw(batch * len * n, -1.0, 1.0),
            d: draw(e, -1.0, 1.0),
        }
    }

    /// Direct loop over `h_t = Ā h_{t−1} + B̄ u_t`, `y_t = C h_t + D x_t`.
    pub fn naive(&self, exact: bool, lagged: bool, with_d: bool) -> Vec<f64> {
        let (bs, l, e, n) = (self.batch, self.len, self.e, self.n);
        let mut y = vec![0.0; bs * l * e];
        for bi in 0..bs {
            for ei in 0..e {
                let mut h = vec![0.0; n];
                for t in 0..l {
                    let dlt = self.delta[(bi * l + t) * e + ei];
                    let u = if lagged {
                        if t == 0 {
                            0.0
                        } else {
                            self.x[(bi * l + t - 1) * e + ei]
                        }
                    } else {
                        self.x[(bi * l + t) * e + ei]
                    };
                    let mut out = 0.0;
                    for (ni, hn) in h.iter_mut().enumerate() {
                        let a = self.a[ei * n + ni];
                        let bb = self.b[(bi * l + t) * n + ni];
                        let a_bar = (dlt * a).exp();
                        let b_bar = if exact {
                            (a_bar - 1.0) / a * bb
                        } else {
                            dlt * bb
                        };
                        *hn = a_bar * *hn + b_bar * u;
                        out += self.c[(bi * l + t) * n + ni] * *hn;
                    }
                    if with_d {
                        out += self.d[ei] * self.x[(bi * l + t) * e + ei];
                    }
                    y[(bi * l + t) * e + ei] = out;
                }
            }
        }
        y
    }
}
