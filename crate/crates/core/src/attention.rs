//! Contextual multi-head attention over flattened feature sequences.
//!
//! Each head projects the input sequence to query/key/value with a 1-D
//! convolution of kernel size `2m+1`, so every projected vector mixes the
//! `2m` neighboring sequence vectors (zero vectors past the ends). `m = 0`
//! reduces to plain multi-head attention with per-row matrix projections.

use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::params::{ParamId, ParamSet};
use crate::tensor::Tensor;
use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AttentionConfig {
    /// Model width `d`; every layer maps `[n, d] -> [n, d]`.
    pub width: usize,
    /// Parallel head count `h`; must divide `d` exactly.
    pub heads: usize,
    /// Context half-width `m`; each projection sees `2m` neighbors.
    pub context_m: usize,
    /// Multiply attention scores by `1/sqrt(d_k)` before the softmax.
    /// Off by default: scores are used as-is.
    pub scale_scores: bool,
}

impl AttentionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.heads == 0 {
            return Err(Error::Config("attention width and heads must be positive".into()));
        }
        if self.width % self.heads != 0 {
            return Err(Error::Config(format!(
                "head width law violated: heads ({}) must divide width ({}) exactly",
                self.heads, self.width
            )));
        }
        Ok(())
    }

    /// Per-head projection width `d_k = d / h`.
    pub fn head_width(&self) -> usize {
        self.width / self.heads
    }

    /// Projection kernel size `2m + 1`.
    pub fn kernel(&self) -> usize {
        2 * self.context_m + 1
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Conv1dParams {
    pub w: ParamId,
    pub b: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub struct HeadParams {
    pub q: Conv1dParams,
    pub k: Conv1dParams,
    pub v: Conv1dParams,
}

/// Parameters of one contextual multi-head attention layer.
#[derive(Clone, Debug)]
pub struct CmhaParams {
    pub heads: Vec<HeadParams>,
    pub out: Conv1dParams,
}

/// Registers all parameters of one layer under `prefix`, sampling weights
/// with `sample(fan_in)` and zeroing biases.
pub fn init_cmha_params<R: Rng>(
    set: &mut ParamSet,
    cfg: &AttentionConfig,
    prefix: &str,
    rng: &mut R,
    sample: &dyn Fn(usize, &mut R) -> f64,
) -> CmhaParams {
    let d = cfg.width;
    let d_k = cfg.head_width();
    let k = cfg.kernel();
    let fan = d * k;
    let conv = |set: &mut ParamSet, name: String, d_out: usize, rng: &mut R| {
        let w = Tensor::from_fn(vec![d_out, d, k], |_| sample(fan, rng));
        Conv1dParams {
            w: set.add(format!("{name}.w"), w),
            b: set.add(format!("{name}.b"), Tensor::zeros(vec![d_out])),
        }
    };
    let heads = (0..cfg.heads)
        .map(|i| HeadParams {
            q: conv(set, format!("{prefix}.head{i}.q"), d_k, rng),
            k: conv(set, format!("{prefix}.head{i}.k"), d_k, rng),
            v: conv(set, format!("{prefix}.head{i}.v"), d_k, rng),
        })
        .collect();
    let out = conv(set, format!("{prefix}.out"), d, rng);
    CmhaParams { heads, out }
}

/// Single attention head: `softmax(Q K^T) V`, with optional score scaling.
pub fn attention_head<E: Engine>(
    eng: &mut E,
    q: &E::V,
    k: &E::V,
    v: &E::V,
    scale: Option<f64>,
) -> E::V {
    let kt = eng.transpose(k);
    let mut scores = eng.matmul(q, &kt);
    if let Some(s) = scale {
        scores = eng.scale(&scores, s);
    }
    let weights = eng.softmax_rows(&scores);
    eng.matmul(&weights, v)
}

/// One contextual multi-head attention layer: `[n, d] -> [n, d]`.
///
/// Per head, Q/K/V come from 1-D convolutions with kernel `2m+1`; the head
/// outputs are concatenated column-wise and passed through the output 1-D
/// convolution (same kernel size).
pub fn cmha_layer<E: Engine>(
    eng: &mut E,
    x: &E::V,
    p: &CmhaParams,
    cfg: &AttentionConfig,
) -> E::V {
    let xv = eng.value(x);
    assert_eq!(
        xv.shape().len(),
        2,
        "cmha_layer: input must be [n, d], got {:?}",
        xv.shape()
    );
    assert_eq!(
        xv.shape()[1],
        cfg.width,
        "cmha_layer: input width {} does not match configured width {}",
        xv.shape()[1],
        cfg.width
    );
    let scale = cfg
        .scale_scores
        .then(|| 1.0 / (cfg.head_width() as f64).sqrt());
    let mut head_outs = Vec::with_capacity(cfg.heads);
    for hp in &p.heads {
        let (qw, qb) = (eng.param(hp.q.w), eng.param(hp.q.b));
        let (kw, kb) = (eng.param(hp.k.w), eng.param(hp.k.b));
        let (vw, vb) = (eng.param(hp.v.w), eng.param(hp.v.b));
        let q = eng.conv1d(x, &qw, &qb);
        let k = eng.conv1d(x, &kw, &kb);
        let v = eng.conv1d(x, &vw, &vb);
        head_outs.push(attention_head(eng, &q, &k, &v, scale));
    }
    let cat = eng.concat(1, &head_outs);
    let (ow, ob) = (eng.param(p.out.w), eng.param(p.out.b));
    eng.conv1d(&cat, &ow, &ob)
}
