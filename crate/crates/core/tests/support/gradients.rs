//! Reverse-mode gradients against central finite differences.

use cpmamba::model::{self, ModelConfig, ModelState};
use cpmamba::numerics::{
    self as nx, grad_check, GradCheckConfig, PoolKind, Tape, Tensor, UnaryKind, Var,
};
use cpmamba::rng::stream;
use cpmamba::ssm::{self, Discretization, ScanInput, ScanInputs, ScanOptions};
use cpmamba::train::{grad_check_model, nmse_loss};
use cpmamba::Result;
use rand::Rng as _;

const SEEDS: u64 = 10;

fn random(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor {
    let mut rng = stream(seed, 1);
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(lo..hi))
}

/// `Σ y ⊙ r` for a fixed random `r`, turning any output into a scalar.
fn project<'t>(y: Var<'t>, seed: u64) -> Result<Var<'t>> {
    let r = random(&y.shape(), seed ^ 0x5eed, -1.0, 1.0);
    Ok(nx::sum(nx::mul(y, y.tape().constant(r))?))
}

fn check<F>(name: &str, x: &Tensor, f: F)
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>>,
{
    let report = grad_check(f, x, GradCheckConfig::default()).unwrap();
    assert!(
        report.passed,
        "{name}: relative error {:e} at {} (analytic {}, numeric {})",
        report.max_rel_error,
        report.worst_index,
        report.analytic[report.worst_index],
        report.numeric[report.worst_index],
    );
}

pub fn elementwise_and_broadcasting() {
    for s in 0..SEEDS {
        let x = random(&[3, 4], s, -2.0, 2.0);
        let other = random(&[4], s + 100, -2.0, 2.0);
        check("add", &x, |t, v| {
            project(nx::add(v, t.constant(other.clone()))?, s)
        });
        check("add rhs", &other, |t, v| {
            project(nx::add(t.constant(x.clone()), v)?, s)
        });
        check("sub rhs", &other, |t, v| {
            project(nx::sub(t.constant(x.clone()), v)?, s)
        });
        check("mul", &x, |t, v| {
            project(nx::mul(v, t.constant(other.clone()))?, s)
        });
        check("mul rhs", &other, |t, v| {
            project(nx::mul(t.constant(x.clone()), v)?, s)
        });
        check("mul self", &x, |_, v| project(nx::mul(v, v)?, s));
        check("affine", &x, |_, v| project(nx::affine(v, -1.5, 0.25), s));
        check("sum", &x, |_, v| Ok(nx::sum(v)));
    }
}

pub fn unary_activations() {
    for s in 0..SEEDS {
        let x = random(&[2, 5], s, -3.0, 3.0);
        for kind in [
            UnaryKind::Silu,
            UnaryKind::Sigmoid,
            UnaryKind::Softplus,
            UnaryKind::Exp,
            UnaryKind::Neg,
        ] {
            check(&format!("{kind:?}"), &x, |_, v| {
                project(nx::apply_unary(v, kind), s)
            });
        }
        // Keep ReLU inputs away from the kink.
        let away = x.map(|v| if v.abs() < 0.05 { v + 0.1 } else { v });
        check("relu", &away, |_, v| project(nx::relu(v), s));
    }
}

pub fn softmax_and_dropout() {
    for s in 0..SEEDS {
        let x = random(&[2, 3, 6], s, -3.0, 3.0);
        check("softmax", &x, |_, v| project(nx::softmax(v), s));
        check("dropout", &x, |_, v| {
            let mut rng = stream(s, 7);
            project(nx::dropout(v, 0.3, true, &mut rng)?, s)
        });
    }
}

pub fn shape_operations() {
    for s in 0..SEEDS {
        let x = random(&[2, 3, 4], s, -1.0, 1.0);
        check("reshape", &x, |_, v| project(nx::reshape(v, &[6, 4])?, s));
        check("permute", &x, |_, v| {
            project(nx::permute(v, &[2, 0, 1])?, s)
        });
        check("transpose_last", &x, |_, v| {
            project(nx::transpose_last(v)?, s)
        });
        check("narrow", &x, |_, v| project(nx::narrow(v, 2, 1, 2)?, s));
        check("pad_tail", &x, |_, v| project(nx::pad_tail(v, 1, 2)?, s));
    }
}

pub fn matrix_products() {
    for s in 0..SEEDS {
        let a = random(&[2, 3, 4], s, -1.0, 1.0);
        let b = random(&[2, 4, 5], s + 1, -1.0, 1.0);
        let shared = random(&[4, 5], s + 2, -1.0, 1.0);
        let bias = random(&[5], s + 3, -1.0, 1.0);
        check("matmul lhs", &a, |t, v| {
            project(nx::matmul(v, t.constant(b.clone()))?, s)
        });
        check("matmul rhs", &b, |t, v| {
            project(nx::matmul(t.constant(a.clone()), v)?, s)
        });
        check("matmul shared", &shared, |t, v| {
            project(nx::matmul(t.constant(a.clone()), v)?, s)
        });
        check("linear x", &a, |t, v| {
            project(
                nx::linear(
                    v,
                    t.constant(shared.clone()),
                    Some(t.constant(bias.clone())),
                )?,
                s,
            )
        });
        check("linear w", &shared, |t, v| {
            project(
                nx::linear(t.constant(a.clone()), v, Some(t.constant(bias.clone())))?,
                s,
            )
        });
        check("linear b", &bias, |t, v| {
            project(
                nx::linear(t.constant(a.clone()), t.constant(shared.clone()), Some(v))?,
                s,
            )
        });
    }
}

pub fn convolutions_and_pooling() {
    for s in 0..SEEDS {
        let x = random(&[2, 3, 4, 5], s, -1.0, 1.0);
        let k = random(&[2, 3, 3, 3], s + 1, -1.0, 1.0);
        let b = random(&[2], s + 2, -1.0, 1.0);
        check("conv2d x", &x, |t, v| {
            project(
                nx::conv2d_3x3(v, t.constant(k.clone()), t.constant(b.clone()))?,
                s,
            )
        });
        check("conv2d k", &k, |t, v| {
            project(
                nx::conv2d_3x3(t.constant(x.clone()), v, t.constant(b.clone()))?,
                s,
            )
        });
        check("conv2d b", &b, |t, v| {
            project(
                nx::conv2d_3x3(t.constant(x.clone()), t.constant(k.clone()), v)?,
                s,
            )
        });
        check("avg pool", &x, |_, v| {
            project(nx::pool_global(v, PoolKind::Avg)?, s)
        });
        check("max pool", &x, |_, v| {
            project(nx::pool_global(v, PoolKind::Max)?, s)
        });

        let seq = random(&[2, 6, 3], s + 3, -1.0, 1.0);
        let taps = random(&[3, 4], s + 4, -1.0, 1.0);
        let cb = random(&[3], s + 5, -1.0, 1.0);
        check("causal x", &seq, |t, v| {
            project(
                nx::causal_conv1d(v, t.constant(taps.clone()), Some(t.constant(cb.clone())))?,
                s,
            )
        });
        check("causal k", &taps, |t, v| {
            project(nx::causal_conv1d(t.constant(seq.clone()), v, None)?, s)
        });
        check("causal b", &cb, |t, v| {
            project(
                nx::causal_conv1d(t.constant(seq.clone()), t.constant(taps.clone()), Some(v))?,
                s,
            )
        });
    }
}

pub fn layer_norm() {
    for s in 0..SEEDS {
        let x = random(&[3, 6], s, -2.0, 2.0);
        let g = random(&[6], s + 1, 0.5, 1.5);
        let b = random(&[6], s + 2, -0.5, 0.5);
        check("layer_norm x", &x, |t, v| {
            project(
                nx::layer_norm(v, t.constant(g.clone()), t.constant(b.clone()), 1e-5)?,
                s,
            )
        });
        check("layer_norm gamma", &g, |t, v| {
            project(
                nx::layer_norm(t.constant(x.clone()), v, t.constant(b.clone()), 1e-5)?,
                s,
            )
        });
        check("layer_norm beta", &b, |t, v| {
            project(
                nx::layer_norm(t.constant(x.clone()), t.constant(g.clone()), v, 1e-5)?,
                s,
            )
        });
    }
}

struct ScanCase {
    x: Tensor,
    delta: Tensor,
    b: Tensor,
    c: Tensor,
    a: Tensor,
    d: Tensor,
}

impl ScanCase {
    fn new(seed: u64) -> Self {
        let (bs, l, e, n) = (2, 5, 3, 2);
        Self {
            x: random(&[bs, l, e], seed, -1.0, 1.0),
            delta: random(&[bs, l, e], seed + 1, 0.05, 1.0),
            b: random(&[bs, l, n], seed + 2, -1.0, 1.0),
            c: random(&[bs, l, n], seed + 3, -1.0, 1.0),
            a: random(&[e, n], seed + 4, -2.0, -0.1),
            d: random(&[e], seed + 5, -1.0, 1.0),
        }
    }

    /// Runs the scan with argument `which` replaced by `v`.
    fn run<'t>(
        &self,
        t: &'t Tape,
        v: Var<'t>,
        which: usize,
        options: ScanOptions,
    ) -> Result<Var<'t>> {
        let pick = |i: usize, tensor: &Tensor| {
            if i == which {
                v
            } else {
                t.constant(tensor.clone())
            }
        };
        let inputs = ScanInputs {
            x: pick(0, &self.x),
            delta: pick(1, &self.delta),
            b: pick(2, &self.b),
            c: pick(3, &self.c),
        };
        ssm::selective_scan(&inputs, pick(4, &self.a), Some(pick(5, &self.d)), options)
    }
}

pub fn selective_scan_all_arguments() {
    for s in 0..SEEDS {
        let case = ScanCase::new(s * 10);
        let tensors = [&case.x, &case.delta, &case.b, &case.c, &case.a, &case.d];
        for discretization in [Discretization::Exact, Discretization::Euler] {
            for input in [ScanInput::Current, ScanInput::Lagged] {
                let options = ScanOptions {
                    discretization,
                    input,
                };
                for (which, tensor) in tensors.iter().enumerate() {
                    check(&format!("scan arg {which} {options:?}"), tensor, |t, v| {
                        project(case.run(t, v, which, options)?, s)
                    });
                }
            }
        }
    }
}

pub fn scan_near_zero_step_uses_series_consistently() {
    // ΔA straddles the series switchover for some entries.
    let mut case = ScanCase::new(3);
    case.delta = Tensor::from_fn(case.delta.shape().to_vec(), |i| 1e-9 * (1.0 + i as f64));
    let options = ScanOptions::default();
    check("scan small delta x", &case.x.clone(), |t, v| {
        project(case.run(t, v, 0, options)?, 1)
    });
}

fn desk_tiny() -> ModelConfig {
    ModelConfig {
        subcarriers: 4,
        conv_channels: 4,
        se_reduction: 2,
        d_model: 8,
        ..ModelConfig::desk()
    }
}

pub fn network_stages() {
    let cfg = desk_tiny();
    for s in 0..SEEDS {
        let state = ModelState::init(cfg.clone(), s).unwrap();
        let planes = random(&[1, 2, 16, 4], s, -1.0, 1.0);
        check("se_resnet input", &planes, |t, v| {
            let bound = state.bind(t, false);
            let w = model::Weights::resolve(&bound, &state.config)?;
            project(model::se_resnet(v, w.se_resnet.as_ref().unwrap())?, s)
        });
        let seq = random(&[1, 16, 8], s + 1, -1.0, 1.0);
        check("mamba stack input", &seq, |t, v| {
            let bound = state.bind(t, false);
            let w = model::Weights::resolve(&bound, &state.config)?;
            project(
                model::rmamba_stack(
                    v,
                    &w.mamba,
                    1e-5,
                    Default::default(),
                    &mut model::DropoutCtx::eval(),
                )?,
                s,
            )
        });
        let attn = ModelState::init(
            cfg.clone()
                .with_ablation(model::Ablation::AttentionBackbone),
            s,
        )
        .unwrap();
        check("attention input", &seq, |t, v| {
            let bound = attn.bind(t, false);
            let w = model::Weights::resolve(&bound, &attn.config)?;
            project(
                model::attention_backbone(
                    v,
                    &w.attention,
                    4,
                    1e-5,
                    &mut model::DropoutCtx::eval(),
                )?,
                s,
            )
        });
        let xs = random(&[1, 16, 8], s + 2, -1.0, 1.0);
        let w = random(&[4, 4], s + 3, -1.0, 1.0);
        let b = random(&[4], s + 4, -1.0, 1.0);
        check("patch weights", &w, |t, v| {
            project(
                model::patch_embed(t.constant(xs.clone()), v, t.constant(b.clone()), 4)?,
                s,
            )
        });
        let target = random(&[2, 3], s + 5, -1.0, 1.0);
        let pred = random(&[2, 3], s + 6, -1.0, 1.0);
        check("nmse loss", &pred, |_, v| nmse_loss(v, &target));
    }
}

pub fn full_desk_model_loss() {
    let cfg = ModelConfig::desk();
    for s in 0..SEEDS {
        let state = ModelState::init(cfg.clone(), s).unwrap();
        let x = random(&[4, 16, 16], s + 20, -1.0, 1.0);
        let y = random(&[4, 4, 16], s + 21, -1.0, 1.0);
        let report = grad_check_model(
            &state,
            &x,
            &y,
            50,
            s,
            // A loss summed over thousands of terms carries more roundoff than
            // one primitive; a slightly larger step balances it against the
            // ReLU and max-pool kinks.
            GradCheckConfig {
                step: 3e-5,
                tol: 1e-4,
                ..GradCheckConfig::default()
            },
        )
        .unwrap();
        assert!(
            report.passed,
            "seed {s}: {:e} at sample {}",
            report.max_rel_error, report.worst_index
        );
    }
}
