//! Acceptance suite: one test per release criterion, each printing a
//! `[PASS]` line on success. Oracles here are coded independently of the
//! library's compute paths (plain nested loops, no shared kernels).
//!
//! Full-scale benchmark numbers are encoded as reference annotations only
//! (see `ctn_core::reference`); nothing here asserts them against trained
//! results, which would require the full datasets and GPU-scale training.

use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ctn_core::attention::{cmha_layer, init_cmha_params, AttentionConfig, CmhaParams};
use ctn_core::commands::{cmd_eval, cmd_train};
use ctn_core::config::RunConfig;
use ctn_core::density::{render_density, DotAnnotations};
use ctn_core::engine::{Engine, Infer};
use ctn_core::fixtures::write_synthetic_pair;
use ctn_core::gradcheck;
use ctn_core::image::normalize;
use ctn_core::metrics::{mae, rmse, EvalRecord};
use ctn_core::model::{CtnModel, InitScheme, ModelConfig, Variant};
use ctn_core::params::ParamSet;
use ctn_core::tensor::Tensor;
use ctn_core::tiling::tile_predict;

/// Serializes the compute-heavy criteria so they do not contend for cores.
static HEAVY: Mutex<()> = Mutex::new(());

fn heavy_guard() -> std::sync::MutexGuard<'static, ()> {
    HEAVY.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

fn pass(line: &str) {
    println!("[PASS] {line}");
}

// ---------------------------------------------------------------------------
// Independent attention oracles (plain loops, no library kernels).
// ---------------------------------------------------------------------------

/// Row-major matrix of owned storage for the oracles.
#[derive(Clone)]
struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    fn zeros(rows: usize, cols: usize) -> Mat {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }
}

fn oracle_matmul(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.cols, b.rows);
    let mut c = Mat::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        for j in 0..b.cols {
            let mut acc = 0.0;
            for p in 0..a.cols {
                acc += a.at(i, p) * b.at(p, j);
            }
            c.set(i, j, acc);
        }
    }
    c
}

fn oracle_softmax_rows(m: &Mat) -> Mat {
    let mut out = Mat::zeros(m.rows, m.cols);
    for i in 0..m.rows {
        let mx = (0..m.cols).map(|j| m.at(i, j)).fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for j in 0..m.cols {
            let e = (m.at(i, j) - mx).exp();
            out.set(i, j, e);
            sum += e;
        }
        for j in 0..m.cols {
            out.set(i, j, out.at(i, j) / sum);
        }
    }
    out
}

/// `softmax(Q K^T) V` evaluated with the oracle helpers.
fn oracle_attention(q: &Mat, k: &Mat, v: &Mat) -> Mat {
    let mut kt = Mat::zeros(k.cols, k.rows);
    for i in 0..k.rows {
        for j in 0..k.cols {
            kt.set(j, i, k.at(i, j));
        }
    }
    let scores = oracle_matmul(q, &kt);
    oracle_matmul(&oracle_softmax_rows(&scores), v)
}

/// Per-head projection weights extracted from a conv1d parameter tensor
/// `w[d_out, d_in, kernel]`, repacked as the `(kernel*d_in) x d_out`
/// window-concat matrix (window position major, feature minor).
fn concat_matrix(w: &Tensor, bias: &Tensor) -> (Mat, Vec<f64>) {
    let (d_out, d_in, kernel) = (w.shape()[0], w.shape()[1], w.shape()[2]);
    let mut mat = Mat::zeros(kernel * d_in, d_out);
    for o in 0..d_out {
        for c in 0..d_in {
            for t in 0..kernel {
                mat.set(t * d_in + c, o, w.data()[(o * d_in + c) * kernel + t]);
            }
        }
    }
    (mat, bias.data().to_vec())
}

/// Window rows `concat(x[i-m], .., x[i+m])` with zero rows off the ends.
fn window_rows(x: &Mat, m: usize) -> Mat {
    let kernel = 2 * m + 1;
    let mut out = Mat::zeros(x.rows, kernel * x.cols);
    for i in 0..x.rows {
        for t in 0..kernel {
            let j = i as isize + t as isize - m as isize;
            if j < 0 || j >= x.rows as isize {
                continue;
            }
            for c in 0..x.cols {
                out.set(i, t * x.cols + c, x.at(j as usize, c));
            }
        }
    }
    out
}

fn add_bias_rows(m: &mut Mat, bias: &[f64]) {
    for i in 0..m.rows {
        for j in 0..m.cols {
            let v = m.at(i, j) + bias[j];
            m.set(i, j, v);
        }
    }
}

/// Independent plain multi-head attention: per-row matrix projections
/// `X W + b` per head, heads concatenated, output matrix projection.
/// Valid against a contextual layer only at m = 0.
fn plain_mha_oracle(x: &Mat, set: &ParamSet, p: &CmhaParams) -> Mat {
    let mut head_outs = Vec::new();
    for hp in &p.heads {
        let (wq, bq) = concat_matrix(set.value(hp.q.w), set.value(hp.q.b));
        let (wk, bk) = concat_matrix(set.value(hp.k.w), set.value(hp.k.b));
        let (wv, bv) = concat_matrix(set.value(hp.v.w), set.value(hp.v.b));
        let mut q = oracle_matmul(x, &wq);
        add_bias_rows(&mut q, &bq);
        let mut k = oracle_matmul(x, &wk);
        add_bias_rows(&mut k, &bk);
        let mut v = oracle_matmul(x, &wv);
        add_bias_rows(&mut v, &bv);
        head_outs.push(oracle_attention(&q, &k, &v));
    }
    let d: usize = head_outs.iter().map(|h| h.cols).sum();
    let mut cat = Mat::zeros(x.rows, d);
    let mut off = 0;
    for h in &head_outs {
        for i in 0..h.rows {
            for j in 0..h.cols {
                cat.set(i, off + j, h.at(i, j));
            }
        }
        off += h.cols;
    }
    let (wo, bo) = concat_matrix(set.value(p.out.w), set.value(p.out.b));
    let mut out = oracle_matmul(&cat, &wo);
    add_bias_rows(&mut out, &bo);
    out
}

/// Independent contextual oracle: every projection is an explicit
/// window-concat followed by a matrix product.
fn concat_cmha_oracle(x: &Mat, set: &ParamSet, p: &CmhaParams, m: usize) -> Mat {
    let windows = window_rows(x, m);
    let mut head_outs = Vec::new();
    for hp in &p.heads {
        let (wq, bq) = concat_matrix(set.value(hp.q.w), set.value(hp.q.b));
        let (wk, bk) = concat_matrix(set.value(hp.k.w), set.value(hp.k.b));
        let (wv, bv) = concat_matrix(set.value(hp.v.w), set.value(hp.v.b));
        let mut q = oracle_matmul(&windows, &wq);
        add_bias_rows(&mut q, &bq);
        let mut k = oracle_matmul(&windows, &wk);
        add_bias_rows(&mut k, &bk);
        let mut v = oracle_matmul(&windows, &wv);
        add_bias_rows(&mut v, &bv);
        head_outs.push(oracle_attention(&q, &k, &v));
    }
    let d: usize = head_outs.iter().map(|h| h.cols).sum();
    let mut cat = Mat::zeros(x.rows, d);
    let mut off = 0;
    for h in &head_outs {
        for i in 0..h.rows {
            for j in 0..h.cols {
                cat.set(i, off + j, h.at(i, j));
            }
        }
        off += h.cols;
    }
    let z_windows = window_rows(&cat, m);
    let (wo, bo) = concat_matrix(set.value(p.out.w), set.value(p.out.b));
    let mut out = oracle_matmul(&z_windows, &wo);
    add_bias_rows(&mut out, &bo);
    out
}

fn random_layer(
    width: usize,
    heads: usize,
    m: usize,
    rng: &mut ChaCha8Rng,
) -> (ParamSet, CmhaParams, AttentionConfig) {
    let cfg = AttentionConfig {
        width,
        heads,
        context_m: m,
        scale_scores: false,
    };
    let mut set = ParamSet::new();
    let sample = |_fan: usize, rng: &mut ChaCha8Rng| rng.gen_range(-0.5..0.5);
    let params = init_cmha_params(&mut set, &cfg, "attn", rng, &sample);
    // Randomize biases too so the oracle covers them.
    let ids: Vec<_> = set.iter().map(|(id, _)| id).collect();
    for id in ids {
        if set.value(id).shape().len() == 1 {
            let shape = set.value(id).shape().to_vec();
            let t = Tensor::from_fn(shape, |_| rng.gen_range(-0.2..0.2));
            set.set_value(id, t);
        }
    }
    (set, params, cfg)
}

fn tensor_from(x: &Mat) -> Tensor {
    Tensor::new(vec![x.rows, x.cols], x.data.clone())
}

fn max_abs_diff(t: &Tensor, m: &Mat) -> f64 {
    assert_eq!(t.shape(), &[m.rows, m.cols]);
    t.data()
        .iter()
        .zip(m.data.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

#[test]
fn full_scale_results_are_reference_annotations_only() {
    use ctn_core::reference as r;
    // The published full-scale numbers are present as annotations...
    assert_eq!((r::UCF_QNRF.mae, r::UCF_QNRF.rmse), (102.6, 177.7));
    assert_eq!((r::UCF_CC.mae, r::UCF_CC.rmse), (219.3, 331.0));
    assert_eq!(
        r::UCF_QNRF_CONTEXT_SWEEP,
        [
            (0, 108.3, 190.8),
            (2, 105.7, 184.5),
            (4, 104.0, 183.0),
            (6, 102.6, 177.7),
            (10, 103.0, 176.0),
        ]
    );
    let ablation: Vec<(f64, f64)> = r::UCF_QNRF_ABLATION.iter().map(|(_, x)| (x.mae, x.rmse)).collect();
    assert_eq!(ablation, [(120.2, 218.4), (123.5, 206.7), (108.3, 190.8), (102.6, 177.7)]);
    assert_eq!((r::SHANGHAITECH[0].mae, r::SHANGHAITECH[0].rmse), (64.3, 107.0));
    assert_eq!((r::SHANGHAITECH[1].mae, r::SHANGHAITECH[1].rmse), (8.6, 14.6));

    // ...and the sweep output marks them as non-reproducible annotations.
    let rows = vec![ctn_core::commands::SweepRow {
        m: 0,
        context: 0,
        mae: 1.0,
        rmse: 2.0,
        reference: ctn_core::reference::context_reference(0),
    }];
    let table = ctn_core::commands::sweep_table(&rows);
    assert!(table.contains("not reproducible"));
    assert!(table.contains("108.3"));
    pass("full-scale results encoded as reference annotations only, never asserted");
}

#[test]
fn gradient_suite_passes_at_1e4_within_two_minutes() {
    let _guard = heavy_guard();
    let start = Instant::now();
    let seeds: Vec<u64> = (0..5).collect();
    let outcomes = gradcheck::run_all(&seeds, None);
    let names: Vec<&str> = outcomes.iter().map(|o| o.name).collect();
    assert!(names.contains(&"ctn_end_to_end"), "suite must cover the end-to-end network");
    for o in &outcomes {
        assert!(
            o.passed(),
            "{}: max rel err {:.3e} exceeds {:.0e}",
            o.name,
            o.max_rel_err,
            gradcheck::TOLERANCE
        );
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 120.0, "gradient suite took {elapsed:.1}s, budget is 120s");
    pass(&format!(
        "gradient suite: {} checks x 5 seeds, all < 1e-4 rel err, {elapsed:.1}s",
        outcomes.len()
    ));
}

#[test]
fn attention_matches_plain_mha_oracle_at_m0() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut worst = 0.0f64;
    for i in 0..20 {
        let n = rng.gen_range(1..=16);
        let (set, params, cfg) = random_layer(24, 4, 0, &mut rng);
        let mut x = Mat::zeros(n, 24);
        for v in x.data.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let mut eng = Infer::new(&set);
        let input = eng.leaf(tensor_from(&x));
        let got = cmha_layer(&mut eng, &input, &params, &cfg);
        let want = plain_mha_oracle(&x, &set, &params);
        let diff = max_abs_diff(&got, &want);
        worst = worst.max(diff);
        assert!(diff < 1e-9, "instance {i} (n={n}): diff {diff:.3e}");
    }
    pass(&format!("m=0 layer == matrix-projection multi-head attention oracle, 20 instances, worst diff {worst:.2e}"));
}

#[test]
fn attention_matches_concat_oracle_at_m1() {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let mut worst = 0.0f64;
    for i in 0..20 {
        let n = rng.gen_range(1..=16);
        let (set, params, cfg) = random_layer(24, 4, 1, &mut rng);
        let mut x = Mat::zeros(n, 24);
        for v in x.data.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let mut eng = Infer::new(&set);
        let input = eng.leaf(tensor_from(&x));
        let got = cmha_layer(&mut eng, &input, &params, &cfg);
        let want = concat_cmha_oracle(&x, &set, &params, 1);
        let diff = max_abs_diff(&got, &want);
        worst = worst.max(diff);
        assert!(diff < 1e-9, "instance {i} (n={n}): diff {diff:.3e}");
    }
    pass(&format!("m=1 layer == window-concat-then-matmul oracle, 20 instances, worst diff {worst:.2e}"));
}

#[test]
fn shape_contract_holds_at_64_128_384() {
    let _guard = heavy_guard();
    for input in [64usize, 128, 384] {
        let cfg = ModelConfig::new(input, Variant::Full);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let model = CtnModel::new(cfg, InitScheme::He, &mut rng).unwrap();
        let image = Tensor::from_fn(vec![3, input, input], |i| ((i % 256) as f64 / 255.0) - 0.5);
        let mut eng = Infer::new(&model.params);
        let traced = model.forward_traced(&mut eng, &image);
        let (q, e) = (input / 4, input / 8);
        assert_eq!(traced.local.shape(), &[256, q, q], "local map at {input}");
        assert_eq!(traced.conv512.as_ref().unwrap().shape(), &[512, e, e], "pre-reduction map at {input}");
        assert_eq!(traced.reduced.as_ref().unwrap().shape(), &[240, e, e], "reduced map at {input}");
        assert_eq!(traced.seq.as_ref().unwrap().shape(), &[e * e, 240], "sequence M=(H/8)^2 at {input}");
        assert_eq!(traced.nonlocal.as_ref().unwrap().shape(), &[240, e, e], "non-local map at {input}");
        assert_eq!(traced.density.shape(), &[1, input, input], "density output at {input}");
    }

    // Construction rejections.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut bad = ModelConfig::new(64, Variant::Full);
    bad.input_h = 100; // not divisible by 8
    assert!(CtnModel::new(bad, InitScheme::He, &mut rng).is_err(), "H % 8 != 0 must be rejected");
    let mut bad = ModelConfig::new(64, Variant::Full);
    bad.heads = 7; // 240 % 7 != 0, h*d_k != d
    assert!(CtnModel::new(bad, InitScheme::He, &mut rng).is_err(), "h*d_k != d must be rejected");
    pass("shape contract exact at 64/128/384; bad geometry rejected at construction");
}

#[test]
fn permutation_equivariance_holds_at_m0_and_breaks_at_m1() {
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    let n = 10;
    let d = 24;

    // m = 0: permuting input rows permutes output rows identically.
    let (set, params, cfg) = random_layer(d, 4, 0, &mut rng);
    let x = Tensor::from_fn(vec![n, d], |_| rng.gen_range(-1.0..1.0));
    let mut perm: Vec<usize> = (0..n).collect();
    use rand::seq::SliceRandom;
    perm.shuffle(&mut rng);
    let permuted = Tensor::from_fn(vec![n, d], |i| x.data()[perm[i / d] * d + i % d]);

    let mut eng = Infer::new(&set);
    let xin = eng.leaf(x.clone());
    let y = cmha_layer(&mut eng, &xin, &params, &cfg);
    let pin = eng.leaf(permuted.clone());
    let yp = cmha_layer(&mut eng, &pin, &params, &cfg);
    let yp_want = Tensor::from_fn(vec![n, d], |i| y.data()[perm[i / d] * d + i % d]);
    let diff = yp.max_abs_diff(&yp_want);
    assert!(diff < 1e-9, "m=0 must be permutation-equivariant, diff {diff:.3e}");

    // m = 1 on a crafted asymmetric input: equivariance must fail.
    let (set1, params1, cfg1) = random_layer(d, 4, 1, &mut rng);
    let asym = Tensor::from_fn(vec![n, d], |i| {
        let (row, col) = (i / d, i % d);
        (row * row % 7) as f64 + 0.1 * col as f64
    });
    let swapped = Tensor::from_fn(vec![n, d], |i| {
        // Swap rows 0 and n-1.
        let (row, col) = (i / d, i % d);
        let src = if row == 0 { n - 1 } else if row == n - 1 { 0 } else { row };
        asym.data()[src * d + col]
    });
    let mut eng = Infer::new(&set1);
    let a_in = eng.leaf(asym);
    let ya = cmha_layer(&mut eng, &a_in, &params1, &cfg1);
    let s_in = eng.leaf(swapped);
    let ys = cmha_layer(&mut eng, &s_in, &params1, &cfg1);
    // If the layer were equivariant, swapping input rows would swap output
    // rows. Compare ys against row-swapped ya.
    let ys_if_equivariant = Tensor::from_fn(vec![n, d], |i| {
        let (row, col) = (i / d, i % d);
        let src = if row == 0 { n - 1 } else if row == n - 1 { 0 } else { row };
        ya.data()[src * d + col]
    });
    let violation = ys.max_abs_diff(&ys_if_equivariant);
    assert!(
        violation > 1e-6,
        "context m=1 must break permutation equivariance, diff only {violation:.3e}"
    );
    pass(&format!(
        "permutation equivariance: holds at m=0 (diff {diff:.2e}), violated at m=1 (diff {violation:.2e})"
    ));
}

#[test]
fn density_targets_conserve_mass() {
    let sigma = 4.0;
    let (h, w) = (128usize, 128usize);
    let margin = 4.0 * sigma + 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(400);
    for k in [1usize, 5, 50] {
        let points: Vec<(f64, f64)> = (0..k)
            .map(|_| {
                (
                    rng.gen_range(margin..w as f64 - margin),
                    rng.gen_range(margin..h as f64 - margin),
                )
            })
            .collect();
        let dots = DotAnnotations {
            image_id: format!("k{k}"),
            points,
        };
        let map = render_density(&dots, h, w, sigma);
        let err = (map.count() - k as f64).abs();
        assert!(err < 1e-3 * k as f64, "K={k}: mass error {err:.2e}");
    }

    let interior = render_density(
        &DotAnnotations {
            image_id: "i".into(),
            points: vec![(64.0, 64.0)],
        },
        h,
        w,
        sigma,
    )
    .count();
    let corner = render_density(
        &DotAnnotations {
            image_id: "c".into(),
            points: vec![(0.0, 0.0)],
        },
        h,
        w,
        sigma,
    )
    .count();
    let ratio = corner / interior;
    assert!(
        (ratio - 0.25).abs() < 0.02 * 0.25 + 0.005,
        "corner/interior ratio {ratio} not within 2% of 0.25"
    );
    assert!((ratio / 0.25 - 1.0).abs() < 0.02, "corner mass off by {:.2}%", 100.0 * (ratio / 0.25 - 1.0));
    pass(&format!(
        "density conservation: K in {{1,5,50}} within 1e-3*K; corner/interior = {ratio:.4}"
    ));
}

#[test]
fn metrics_reproduce_hand_computed_values() {
    let records = vec![
        EvalRecord {
            image_id: "a".into(),
            y: 10.0,
            y_hat: 12.0,
        },
        EvalRecord {
            image_id: "b".into(),
            y: 20.0,
            y_hat: 16.0,
        },
    ];
    assert_eq!(mae(&records), 3.0);
    assert_eq!(rmse(&records), 10.0_f64.sqrt());

    let mut rng = ChaCha8Rng::seed_from_u64(500);
    for _ in 0..1000 {
        let n = rng.gen_range(1..=20);
        let set: Vec<EvalRecord> = (0..n)
            .map(|i| EvalRecord {
                image_id: format!("r{i}"),
                y: rng.gen_range(0.0..500.0),
                y_hat: rng.gen_range(0.0..500.0),
            })
            .collect();
        assert!(
            rmse(&set) >= mae(&set) - 1e-12,
            "RMSE must dominate MAE on every record set"
        );
    }
    pass("metrics: MAE 3 / RMSE sqrt(10) exact; RMSE >= MAE on 1000 random record sets");
}

#[test]
fn overfit_smoke_on_synthetic_pair() {
    let _guard = heavy_guard();
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_synthetic_pair(dir.path(), 1).unwrap();

    let mut cfg = RunConfig::default();
    cfg.manifest = Some(manifest);
    cfg.out = dir.path().join("out");
    cfg.crop = 64;
    cfg.crops_per_image = 1;
    cfg.batch = 2;
    cfg.epochs = 200;
    cfg.tile = 64;
    cfg.seed = 0;
    // lr stays at the default 1e-4; full variant, d=240, h=12.
    assert_eq!(cfg.lr, 1e-4);
    assert_eq!(cfg.variant, Variant::Full);

    let outcome = cmd_train(&cfg, Some(200)).unwrap();
    assert_eq!(outcome.iterations, 200);
    let reduction = 1.0 - outcome.final_loss / outcome.first_loss;
    assert!(
        reduction >= 0.90,
        "loss must drop by >= 90%, got {:.1}% ({:.3e} -> {:.3e})",
        100.0 * reduction,
        outcome.first_loss,
        outcome.final_loss
    );

    cfg.checkpoint = Some(outcome.checkpoint.clone());
    let eval = cmd_eval(&cfg).unwrap();
    let mean_count: f64 =
        eval.records.iter().map(|r| r.y).sum::<f64>() / eval.records.len() as f64;
    assert!(
        eval.mae < 0.05 * mean_count,
        "eval MAE {:.3} must be < 5% of mean count {mean_count}",
        eval.mae
    );

    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 600.0, "overfit smoke took {elapsed:.0}s, budget is 600s");
    pass(&format!(
        "overfit smoke: loss -{:.1}%, eval MAE {:.2} = {:.2}% of mean count, {elapsed:.0}s",
        100.0 * reduction,
        eval.mae,
        100.0 * eval.mae / mean_count
    ));
}

#[test]
fn tiling_counts_are_exactly_additive() {
    let mut cfg = ModelConfig::new(16, Variant::Full);
    cfg.width = 24;
    cfg.heads = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(600);
    let model = CtnModel::new(cfg, InitScheme::He, &mut rng).unwrap();

    // Multi-tile image with remainder tiles on both axes.
    let (h, w) = (40usize, 56usize);
    let rgb: Vec<u8> = (0..3 * h * w).map(|_| rng.gen()).collect();
    let image = ctn_core::image::Image::new(h, w, rgb);
    let tile = 16;
    let (count, stitched) = tile_predict(&model, &image, tile);
    assert_eq!((stitched.h, stitched.w), (h, w));

    // Per-tile counts recovered from the stitched map regions; bitwise
    // equal because stitching copies tile values verbatim and the total is
    // accumulated in the same row-major tile order.
    let mut sum = 0.0;
    let mut y0 = 0;
    while y0 < h {
        let th = tile.min(h - y0);
        let mut x0 = 0;
        while x0 < w {
            let tw = tile.min(w - x0);
            sum += stitched.crop(y0, x0, th, tw).count();
            x0 += tile;
        }
        y0 += tile;
    }
    assert_eq!(count, sum, "tiled count must equal the sum of per-tile counts exactly");

    // Degenerate case: the whole image fits one tile.
    let small_rgb: Vec<u8> = (0..3 * 16 * 16).map(|_| rng.gen()).collect();
    let small = ctn_core::image::Image::new(16, 16, small_rgb);
    let (count_one, map_one) = tile_predict(&model, &small, 64);
    let mut eng = Infer::new(&model.params);
    let input = eng.leaf(normalize(&small));
    let direct = model.forward(&mut eng, &input);
    assert_eq!(map_one.values, direct.data(), "single-tile map must equal direct forward");
    assert_eq!(count_one, direct.data().iter().sum::<f64>());
    pass("tiling: count == sum of per-tile counts exactly; single tile == direct forward");
}

#[test]
fn fixed_seeds_give_byte_identical_outputs() {
    let _guard = heavy_guard();
    let run = |root: &std::path::Path| -> (Vec<u8>, Vec<u8>, Vec<u8>) {
        let manifest = write_synthetic_pair(root, 3).unwrap();
        let mut cfg = RunConfig::default();
        cfg.manifest = Some(manifest);
        cfg.out = root.join("out");
        cfg.crop = 32;
        cfg.crops_per_image = 2;
        cfg.batch = 2;
        cfg.epochs = 3;
        cfg.width = 24;
        cfg.heads = 4;
        cfg.tile = 64;
        cfg.seed = 9;
        let outcome = cmd_train(&cfg, None).unwrap();
        cfg.checkpoint = Some(outcome.checkpoint.clone());
        let eval = cmd_eval(&cfg).unwrap();
        (
            std::fs::read(&outcome.loss_csv).unwrap(),
            std::fs::read(&outcome.checkpoint).unwrap(),
            std::fs::read(&eval.csv_path).unwrap(),
        )
    };
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let (loss1, ckpt1, metrics1) = run(d1.path());
    let (loss2, ckpt2, metrics2) = run(d2.path());
    assert_eq!(loss1, loss2, "loss logs must be byte-identical");
    assert_eq!(ckpt1, ckpt2, "checkpoints must be byte-identical");
    assert_eq!(metrics1, metrics2, "metrics CSVs must be byte-identical");
    pass("determinism: loss log, checkpoint, and metrics CSV byte-identical across runs");
}
