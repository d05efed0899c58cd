//! Central finite-difference verification of every graph primitive and of
//! the end-to-end network.
//!
//! Each check builds a scalar loss from randomized inputs, computes analytic
//! gradients with the tape, and compares them entry by entry against
//! `(f(x+h) - f(x-h)) / 2h`. The registry drives both the `gradcheck` CLI
//! command and the acceptance suite.

use crate::autograd::{Tape, Var};
use crate::engine::Engine;
use crate::model::{CtnModel, InitScheme, ModelConfig, Variant};
use crate::params::{ParamId, ParamSet};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central-difference step (double precision).
pub const FD_STEP: f64 = 1e-5;
/// Maximum allowed relative error per gradient entry.
pub const TOLERANCE: f64 = 1e-4;

pub struct CheckOutcome {
    pub name: &'static str,
    pub max_rel_err: f64,
    pub seeds: usize,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.max_rel_err < TOLERANCE
    }
}

fn rel_err(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1.0)
}

/// Checks analytic gradients of `build`'s scalar output w.r.t. all of
/// `inputs`. `probes` limits how many entries per input are probed
/// (None = all). Returns the max relative error; `corrupt` perturbs the
/// first analytic gradient entry to prove the comparison has teeth.
fn fd_check(
    inputs: &[Tensor],
    probes: Option<usize>,
    rng: &mut ChaCha8Rng,
    corrupt: bool,
    build: &dyn Fn(&mut Tape<'_>, &[Var]) -> Var,
) -> f64 {
    let mut set = ParamSet::new();
    let ids: Vec<ParamId> = inputs
        .iter()
        .enumerate()
        .map(|(i, t)| set.add(format!("in{i}"), t.clone()))
        .collect();

    let eval = |set: &ParamSet| -> f64 {
        let mut tape = Tape::new(set);
        let vars: Vec<Var> = ids.iter().map(|id| tape.param(*id)).collect();
        let loss = build(&mut tape, &vars);
        tape.value(&loss).data()[0]
    };

    let mut tape = Tape::new(&set);
    let vars: Vec<Var> = ids.iter().map(|id| tape.param(*id)).collect();
    let loss = build(&mut tape, &vars);
    tape.backward(loss);
    let grads = tape.param_grads();
    let mut analytic: Vec<Tensor> = ids
        .iter()
        .map(|id| {
            grads
                .get(*id)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(set.value(*id).shape().to_vec()))
        })
        .collect();
    drop(tape);
    if corrupt {
        analytic[0].data_mut()[0] += 0.5;
    }

    let mut max_err: f64 = 0.0;
    for (i, id) in ids.iter().enumerate() {
        let n = inputs[i].numel();
        let picks: Vec<usize> = match probes {
            None => (0..n).collect(),
            Some(k) => (0..k.min(n)).map(|_| rng.gen_range(0..n)).collect(),
        };
        for j in picks {
            let base = set.value(*id).clone();
            let mut plus = base.clone();
            plus.data_mut()[j] += FD_STEP;
            let mut minus = base.clone();
            minus.data_mut()[j] -= FD_STEP;

            let mut probe_set = set.clone();
            probe_set.set_value(*id, plus);
            let fp = eval(&probe_set);
            probe_set.set_value(*id, minus);
            let fm = eval(&probe_set);

            let fd = (fp - fm) / (2.0 * FD_STEP);
            max_err = max_err.max(rel_err(analytic[i].data()[j], fd));
        }
    }
    max_err
}

fn randn(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// Random values kept away from zero so ReLU and max-pool kinks sit outside
/// the finite-difference window.
fn randn_off_kink(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let v: f64 = rng.gen_range(-1.0..1.0);
        v + v.signum() * 0.05
    })
}

type CheckFn = Box<dyn Fn(u64, bool) -> f64 + Send + Sync>;

pub struct Check {
    pub name: &'static str,
    run: CheckFn,
}

impl Check {
    pub fn run(&self, seed: u64, corrupt: bool) -> f64 {
        (self.run)(seed, corrupt)
    }
}

fn check(name: &'static str, run: impl Fn(u64, bool) -> f64 + Send + Sync + 'static) -> Check {
    Check {
        name,
        run: Box::new(run),
    }
}

/// Projects a tensor-valued op output to a scalar with fixed random weights
/// so every output entry influences the loss.
fn project<E: Engine>(eng: &mut E, y: &E::V, rng: &mut ChaCha8Rng) -> E::V {
    let shape = eng.value(y).shape().to_vec();
    let proj = eng.leaf(randn(rng, shape));
    let weighted = eng.mul(y, &proj);
    eng.sum_all(&weighted)
}

/// The full primitive registry, one entry per differentiable operation plus
/// the composite attention checks and the end-to-end network.
pub fn all_checks() -> Vec<Check> {
    vec![
        check("matmul", |seed, corrupt| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = randn(&mut rng, vec![3, 4]);
            let b = randn(&mut rng, vec![4, 2]);
            let prng = rng.clone();
            fd_check(&[a, b], None, &mut rng, corrupt, &|tape, vars| {
                let y = tape.matmul(&vars[0], &vars[1]);
                project(tape, &y, &mut prng.clone())
            })
        }),
        check("transpose", |seed, corrupt| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = randn(&mut rng, vec![3, 5]);
            let prng = rng.clone();
            fd_check(&[a], None, &mut rng, corrupt, &|tape, vars| {
                let y = tape.transpose(&vars[0]);
                project(tape, &y, &mut prng.clone())
            })
        }),
        check("softmax_rows", |seed, corrupt| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = randn(&mut rng, vec![4, 6]);
            let prng = rng.clone();
            fd_check(&[x], None, &mut rng, corrupt, &|tape, vars| {
                let y = tape.softmax_rows(&vars[0]);
                project(tape, &y, &mut prng.clone())
            })
        }),
        check("relu", |seed, corrupt| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = randn_off_kink(&mut rng, vec![5, 5]);
            let prng = rng.clone();
            fd_check(&[x], None, &mut rng, corrupt, &|tape, vars| {
                let y = tape.relu(&vars[0]);
                project(tape, &y, &mut prng.clone())
            })
        }),
        check("add", |seed, corrupt| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = randn(&mut rng, vec![3, 3]);
            let b = randn(&mut rng, vec![3, 3]);
            let prng = rng.clone();
            fd_check(&[a, b], None, &mut rng, corrupt, &|tape, vars| {
                let y = tape.add(&vars[0], &vars[1]);
                project(tape, &y, &mut prng.clone())
            })
        }),
        check("mul", |seed, corrupt| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = randn(&mut rng, vec![3, 3]);
            let b = randn(&mut rng, vec![3, 3]);
            let prng = rng.clone();
            fd_check(&[a, b], None, &mut rng, corrupt, &|tape, vars| {
                let y = tape.mul(&vars[0], &vars[1]);
                project(tape, &y, &mut prng.clone())
            })
        }),
        check("scale", |seed, corrupt| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = randn(&mut rng, vec![4]);
            let prng = rng.clone();
            fd_check(&[x], None, &mut rng, corrupt, &|tape, vars| {
                let y = tape.scale(&vars[0], -2.5);
                project(tape, &y, &mut prng.clone())
            })
        }),
        check("sum_all", |seed, corrupt| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = randn(&mut rng, vec![3, 4]);
            fd_check(&[x], None, &mut rng, corrupt, &|tape, vars| {
                tape.sum_all(&vars[0])
            })
        }),
        check("mse", |seed, corrupt| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = randn(&mut rng, vec![4, 4]);
            let b = randn(&mut rng, vec![4, 4]);
            fd_check(&[a, b], None, &mut rng, corrupt, &|tape, vars| {
                tape.mse(&vars[0], &vars[1])
            })
        }),
        check("reshape", |seed, corrupt| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = randn(&mut rng, vec![2, 6]);
            let prng = rng.clone();
            fd_check(&[x], None, &mut rng, corrupt, &|tape, vars| {
                let y = tape.reshape(&vars[0], &[3, 4]);
                project(tape, &y, &mut prng.clone())
            })
        }),
        check("concat", |seed, corrupt| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = randn(&mut rng, vec![2, 3, 3]);
            let b = randn(&mut rng, vec![3, 3, 3]);
            let prng = rng.clone();
            fd_check(&[a, b], None, &mut rng, corrupt, &|tape, vars| {
                let y = tape.concat(0, &[vars[0], vars[1]]);
                project(tape, &y, &mut prng.clone())
            })
        }),
        check("conv2d", |seed, corrupt| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = randn(&mut rng, vec![2, 6, 6]);
            let w = randn(&mut rng, vec![3, 2, 3, 3]);
            let b = randn(&mut rng, vec![3]);
            let prng = rng.clone();
            fd_check(&[x, w, b], None, &mut rng, corrupt, &|tape, vars| {
                let y = tape.conv2d(&vars[0], &vars[1], &vars[2], 1, 1);
                project(tape, &y, &mut prng.clone())
            })
        }),
        check("conv2d_strided", |seed, corrupt| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = randn(&mut rng, vec![2, 7, 7]);
            let w = randn(&mut rng, vec![2, 2, 3, 3]);
            let b = randn(&mut rng, vec![2]);
            let prng = rng.clone();
            fd_check(&[x, w, b], None, &mut rng, corrupt, &|tape, vars| {
                let y = tape.conv2d(&vars[0], &vars[1], &vars[2], 2, 1);
                project(tape, &y, &mut prng.clone())
            })
        }),
        check("conv1d", |seed, corrupt| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = randn(&mut rng, vec![5, 4]);
            let w = randn(&mut rng, vec![3, 4, 3]);
            let b = randn(&mut rng, vec![3]);
            let prng = rng.clone();
            fd_check(&[x, w, b], None, &mut rng, corrupt, &|tape, vars| {
                let y = tape.conv1d(&vars[0], &vars[1], &vars[2]);
                project(tape, &y, &mut prng.clone())
            })
        }),
        check("maxpool2d", |seed, corrupt| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = randn_off_kink(&mut rng, vec![2, 6, 6]);
            let prng = rng.clone();
            fd_check(&[x], None, &mut rng, corrupt, &|tape, vars| {
                let y = tape.maxpool2d(&vars[0]);
                project(tape, &y, &mut prng.clone())
            })
        }),
        check("bilinear_upsample2x", |seed, corrupt| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = randn(&mut rng, vec![2, 3, 4]);
            let prng = rng.clone();
            fd_check(&[x], None, &mut rng, corrupt, &|tape, vars| {
                let y = tape.upsample2x(&vars[0]);
                project(tape, &y, &mut prng.clone())
            })
        }),
        check("attention_head", |seed, corrupt| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q = randn(&mut rng, vec![4, 3]);
            let k = randn(&mut rng, vec![4, 3]);
            let v = randn(&mut rng, vec![4, 3]);
            let prng = rng.clone();
            fd_check(&[q, k, v], None, &mut rng, corrupt, &|tape, vars| {
                let z = crate::attention::attention_head(tape, &vars[0], &vars[1], &vars[2], None);
                project(tape, &z, &mut prng.clone())
            })
        }),
        check("cmha_layer", |seed, corrupt| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let acfg = crate::attention::AttentionConfig {
                width: 6,
                heads: 2,
                context_m: 1,
                scale_scores: false,
            };
            // Build layer parameters as check inputs so their gradients are
            // probed too: q/k/v/out weights and biases for both heads.
            let d_k = acfg.head_width();
            let k = acfg.kernel();
            let mut inputs = vec![randn(&mut rng, vec![5, 6])];
            for _ in 0..acfg.heads {
                for _ in 0..3 {
                    inputs.push(randn(&mut rng, vec![d_k, 6, k]));
                    inputs.push(randn(&mut rng, vec![d_k]));
                }
            }
            inputs.push(randn(&mut rng, vec![6, 6, k]));
            inputs.push(randn(&mut rng, vec![6]));
            let prng = rng.clone();
            fd_check(&inputs, None, &mut rng, corrupt, &|tape, vars| {
                let x = &vars[0];
                let scale = None;
                let mut outs = Vec::new();
                for h in 0..2 {
                    let base = 1 + h * 6;
                    let q = tape.conv1d(x, &vars[base], &vars[base + 1]);
                    let kk = tape.conv1d(x, &vars[base + 2], &vars[base + 3]);
                    let v = tape.conv1d(x, &vars[base + 4], &vars[base + 5]);
                    outs.push(crate::attention::attention_head(tape, &q, &kk, &v, scale));
                }
                let cat = tape.concat(1, &outs);
                let y = tape.conv1d(&cat, &vars[13], &vars[14]);
                project(tape, &y, &mut prng.clone())
            })
        }),
        check("ctn_end_to_end", |seed, corrupt| {
            end_to_end_check(seed, corrupt, 32, 16)
        }),
    ]
}

/// Finite-difference check of the full network at `input x input`, probing
/// `probes_per_seed` randomly chosen parameter entries plus two image pixels.
fn end_to_end_check(seed: u64, corrupt: bool, input: usize, probes_per_seed: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1000));
    let cfg = ModelConfig::new(input, Variant::Full);
    let model = CtnModel::new(cfg, InitScheme::He, &mut rng).expect("valid config");
    let image = Tensor::from_fn(vec![3, input, input], |_| rng.gen_range(-1.0..1.0));
    let target = Tensor::from_fn(vec![1, input, input], |_| rng.gen_range(0.0..1.0));

    let eval = |params: &ParamSet, image: &Tensor| -> f64 {
        let mut eng = crate::engine::Infer::new(params);
        let img = eng.leaf(image.clone());
        let tgt = eng.leaf(target.clone());
        let pred = model.forward(&mut eng, &img);
        let loss = eng.mse(&pred, &tgt);
        loss.data()[0]
    };

    let mut tape = Tape::new(&model.params);
    let img = tape.leaf(image.clone());
    let tgt = tape.leaf(target.clone());
    let pred = model.forward(&mut tape, &img);
    let loss = tape.mse(&pred, &tgt);
    tape.backward(loss);
    let grads = tape.param_grads();
    let image_grad = tape.grad(img).expect("image gradient").clone();
    drop(tape);

    let mut max_err: f64 = 0.0;
    let n_params = model.params.len();
    for p in 0..probes_per_seed {
        let id = ParamId(rng.gen_range(0..n_params));
        let tensor = model.params.value(id);
        let j = rng.gen_range(0..tensor.numel());
        let mut analytic = grads
            .get(id)
            .map(|g| g.data()[j])
            .unwrap_or(0.0);
        if corrupt && p == 0 {
            analytic += 0.5;
        }
        let mut probe = model.params.clone();
        let mut plus = tensor.clone();
        plus.data_mut()[j] += FD_STEP;
        probe.set_value(id, plus);
        let fp = eval(&probe, &image);
        let mut minus = tensor.clone();
        minus.data_mut()[j] -= FD_STEP;
        probe.set_value(id, minus);
        let fm = eval(&probe, &image);
        let fd = (fp - fm) / (2.0 * FD_STEP);
        max_err = max_err.max(rel_err(analytic, fd));
    }
    // Two image-pixel probes exercise the input path as well.
    for _ in 0..2 {
        let j = rng.gen_range(0..image.numel());
        let analytic = image_grad.data()[j];
        let mut plus = image.clone();
        plus.data_mut()[j] += FD_STEP;
        let fp = eval(&model.params, &plus);
        let mut minus = image.clone();
        minus.data_mut()[j] -= FD_STEP;
        let fm = eval(&model.params, &minus);
        let fd = (fp - fm) / (2.0 * FD_STEP);
        max_err = max_err.max(rel_err(analytic, fd));
    }
    max_err
}

/// Runs every registered check across the given seeds. `corrupt` names one
/// check whose analytic gradient is deliberately perturbed; the run must
/// then report a failure for it.
pub fn run_all(seeds: &[u64], corrupt: Option<&str>) -> Vec<CheckOutcome> {
    all_checks()
        .iter()
        .map(|c| {
            let corrupt_this = corrupt == Some(c.name);
            let max_rel_err = seeds
                .iter()
                .map(|&s| c.run(s, corrupt_this))
                .fold(0.0, f64::max);
            CheckOutcome {
                name: c.name,
                max_rel_err,
                seeds: seeds.len(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primitive_gradients_match_finite_differences() {
        for c in all_checks() {
            if c.name == "ctn_end_to_end" {
                continue; // covered by the acceptance suite across 5 seeds
            }
            for seed in [0u64, 1] {
                let err = c.run(seed, false);
                assert!(
                    err < TOLERANCE,
                    "{} seed {}: max rel err {:.3e} exceeds {:.0e}",
                    c.name,
                    seed,
                    err,
                    TOLERANCE
                );
            }
        }
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let c = all_checks();
        let conv = c.iter().find(|c| c.name == "conv2d").unwrap();
        let err = conv.run(0, true);
        assert!(err > TOLERANCE, "corruption must trip the check, got {err:.3e}");
    }

    #[test]
    fn end_to_end_single_seed_smoke() {
        let err = end_to_end_check(0, false, 16, 4);
        assert!(err < TOLERANCE, "end-to-end max rel err {err:.3e}");
    }
}
