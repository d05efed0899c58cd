//! The crowd transformer network: local feature block, non-local feature
//! block with contextual multi-head attention, and the density prediction
//! head, plus the ablation variants.
//!
//! Feature geometry for an `H x W` input (both divisible by 8):
//! local features `256 x H/4 x W/4`, non-local features `240 x H/8 x W/8`
//! computed over a flattened sequence of `M = (H/8)(W/8)` vectors, density
//! output `H x W`.

use crate::attention::{cmha_layer, init_cmha_params, AttentionConfig, CmhaParams};
use crate::engine::Engine;
use crate::error::{Error, Result};
use crate::params::{ParamId, ParamSet};
use crate::tensor::Tensor;
use rand::Rng;
use rand_distr::{Distribution, Normal};

pub const LOCAL_FILTERS: [usize; 5] = [64, 64, 128, 128, 256];
/// Max pooling follows these (1-based) convolutions of the local block.
pub const LOCAL_POOL_AFTER: [usize; 2] = [2, 4];
pub const NONLOCAL_FILTERS: [usize; 3] = [256, 256, 512];
/// Max pooling follows this (1-based) convolution of the non-local block.
pub const NONLOCAL_POOL_AFTER: usize = 2;
pub const HEAD_FILTERS: [usize; 4] = [196, 128, 48, 1];
pub const ATTENTION_LAYERS: usize = 3;

pub const DEFAULT_WIDTH: usize = 240;
pub const DEFAULT_HEADS: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// Local + non-local features, contextual attention.
    Full,
    /// Prediction head consumes local features only.
    LocalOnly,
    /// Skip connection removed; head consumes non-local features only.
    NonLocalOnly,
    /// Full architecture with context forced to zero (plain multi-head
    /// attention).
    StandardMha,
}

impl Variant {
    pub fn parse(s: &str) -> Result<Variant> {
        match s {
            "full" => Ok(Variant::Full),
            "local" => Ok(Variant::LocalOnly),
            "nonlocal" => Ok(Variant::NonLocalOnly),
            "mha" => Ok(Variant::StandardMha),
            other => Err(Error::Config(format!(
                "unknown variant '{other}' (expected full|local|nonlocal|mha)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::LocalOnly => "local",
            Variant::NonLocalOnly => "nonlocal",
            Variant::StandardMha => "mha",
        }
    }

    pub fn uses_nonlocal(&self) -> bool {
        !matches!(self, Variant::LocalOnly)
    }

    pub fn uses_skip(&self) -> bool {
        !matches!(self, Variant::NonLocalOnly)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    /// Nominal training input height (pixels, divisible by 8).
    pub input_h: usize,
    /// Nominal training input width (pixels, divisible by 8).
    pub input_w: usize,
    /// Attention model width `d`.
    pub width: usize,
    /// Attention head count `h`.
    pub heads: usize,
    /// Context half-width `m`; each Q/K/V projection sees `2m` neighbors.
    pub context_m: usize,
    pub variant: Variant,
    pub scale_scores: bool,
}

impl ModelConfig {
    pub fn new(input: usize, variant: Variant) -> ModelConfig {
        ModelConfig {
            input_h: input,
            input_w: input,
            width: DEFAULT_WIDTH,
            heads: DEFAULT_HEADS,
            context_m: 1,
            variant,
            scale_scores: false,
        }
    }

    /// Context actually used: the standard-MHA variant pins `m = 0`.
    pub fn effective_m(&self) -> usize {
        if self.variant == Variant::StandardMha {
            0
        } else {
            self.context_m
        }
    }

    pub fn attention(&self) -> AttentionConfig {
        AttentionConfig {
            width: self.width,
            heads: self.heads,
            context_m: self.effective_m(),
            scale_scores: self.scale_scores,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_h == 0 || self.input_h % 8 != 0 || self.input_w == 0 || self.input_w % 8 != 0 {
            return Err(Error::Config(format!(
                "input size {}x{} must be positive and divisible by 8",
                self.input_h, self.input_w
            )));
        }
        self.attention().validate()
    }
}

/// Weight initialization scheme.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitScheme {
    /// Every weight from `N(0, std^2)`, biases zero. `std = 0.001` matches
    /// the published recipe, which assumes a pretrained backbone and does
    /// not train from scratch at this scale.
    Gaussian { std: f64 },
    /// Fan-in scaled: `sqrt(2/fan)` for ReLU convolutions, `sqrt(1/fan)`
    /// for attention projections. The final density layer starts with
    /// near-zero weights and a small positive bias so the output ReLU is
    /// active from the first step. Default for from-scratch runs.
    He,
}

impl InitScheme {
    pub fn parse(s: &str) -> Result<InitScheme> {
        if s == "he" {
            return Ok(InitScheme::He);
        }
        if let Some(std) = s.strip_prefix("gauss:") {
            let std: f64 = std
                .parse()
                .map_err(|_| Error::Config(format!("bad init std '{std}'")))?;
            if !(std.is_finite() && std > 0.0) {
                return Err(Error::Config(format!("init std must be positive, got {std}")));
            }
            return Ok(InitScheme::Gaussian { std });
        }
        Err(Error::Config(format!(
            "unknown init scheme '{s}' (expected he or gauss:<std>)"
        )))
    }

    pub fn to_string_repr(&self) -> String {
        match self {
            InitScheme::He => "he".to_string(),
            InitScheme::Gaussian { std } => format!("gauss:{std}"),
        }
    }

    fn relu_conv_std(&self, fan_in: usize) -> f64 {
        match self {
            InitScheme::Gaussian { std } => *std,
            InitScheme::He => (2.0 / fan_in as f64).sqrt(),
        }
    }

    fn attention_std(&self, fan_in: usize) -> f64 {
        match self {
            InitScheme::Gaussian { std } => *std,
            InitScheme::He => (1.0 / fan_in as f64).sqrt(),
        }
    }

    fn output_conv_std(&self, _fan_in: usize) -> f64 {
        match self {
            InitScheme::Gaussian { std } => *std,
            InitScheme::He => 1e-4,
        }
    }

    /// Initial bias of the final density convolution. Positive under `He`
    /// so the output ReLU starts active everywhere.
    fn output_conv_bias(&self) -> f64 {
        match self {
            InitScheme::Gaussian { .. } => 0.0,
            InitScheme::He => 1e-2,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Conv {
    w: ParamId,
    b: ParamId,
}

#[derive(Clone, Debug)]
struct NonLocal {
    convs: Vec<Conv>,
    reduce: Conv,
    attn: Vec<CmhaParams>,
}

/// Intermediate feature handles from one forward pass.
pub struct Traced<V> {
    /// `256 x H/4 x W/4` local feature map.
    pub local: V,
    /// `512 x H/8 x W/8` map before the 1x1 reduction.
    pub conv512: Option<V>,
    /// `240 x H/8 x W/8` map entering the attention stack.
    pub reduced: Option<V>,
    /// `M x 240` sequence after the attention stack.
    pub seq: Option<V>,
    /// `240 x H/8 x W/8` non-local feature map.
    pub nonlocal: Option<V>,
    /// `1 x H x W` density prediction.
    pub density: V,
}

pub struct CtnModel {
    pub cfg: ModelConfig,
    pub params: ParamSet,
    local: Vec<Conv>,
    nonlocal: Option<NonLocal>,
    head: Vec<Conv>,
}

fn add_conv2d<R: Rng>(
    set: &mut ParamSet,
    name: &str,
    c_in: usize,
    c_out: usize,
    k: usize,
    std: f64,
    bias: f64,
    rng: &mut R,
) -> Conv {
    let w = if std == 0.0 {
        Tensor::zeros(vec![c_out, c_in, k, k])
    } else {
        let normal = Normal::new(0.0, std).unwrap();
        Tensor::from_fn(vec![c_out, c_in, k, k], |_| normal.sample(rng))
    };
    Conv {
        w: set.add(format!("{name}.w"), w),
        b: set.add(format!("{name}.b"), Tensor::full(vec![c_out], bias)),
    }
}

impl CtnModel {
    /// Builds a model with freshly initialized parameters.
    ///
    /// Rejects configurations whose input size is not divisible by 8 or
    /// whose head count does not divide the width.
    pub fn new<R: Rng>(cfg: ModelConfig, init: InitScheme, rng: &mut R) -> Result<CtnModel> {
        cfg.validate()?;
        let mut set = ParamSet::new();

        let mut local = Vec::new();
        let mut c_in = 3;
        for (i, &c_out) in LOCAL_FILTERS.iter().enumerate() {
            let std = init.relu_conv_std(c_in * 9);
            local.push(add_conv2d(&mut set, &format!("local.conv{}", i + 1), c_in, c_out, 3, std, 0.0, rng));
            c_in = c_out;
        }

        let nonlocal = if cfg.variant.uses_nonlocal() {
            let mut convs = Vec::new();
            let mut c_in = *LOCAL_FILTERS.last().unwrap();
            for (i, &c_out) in NONLOCAL_FILTERS.iter().enumerate() {
                let std = init.relu_conv_std(c_in * 9);
                convs.push(add_conv2d(&mut set, &format!("nonlocal.conv{}", i + 1), c_in, c_out, 3, std, 0.0, rng));
                c_in = c_out;
            }
            let std = init.relu_conv_std(c_in);
            let reduce = add_conv2d(&mut set, "nonlocal.reduce", c_in, cfg.width, 1, std, 0.0, rng);
            let acfg = cfg.attention();
            let sample = |fan: usize, rng: &mut R| {
                let normal = Normal::new(0.0, init.attention_std(fan)).unwrap();
                normal.sample(rng)
            };
            let attn = (0..ATTENTION_LAYERS)
                .map(|i| init_cmha_params(&mut set, &acfg, &format!("nonlocal.attn{}", i + 1), rng, &sample))
                .collect();
            Some(NonLocal { convs, reduce, attn })
        } else {
            None
        };

        let mut head = Vec::new();
        let mut c_in = match cfg.variant {
            Variant::Full | Variant::StandardMha => LOCAL_FILTERS[4] + cfg.width,
            Variant::LocalOnly => LOCAL_FILTERS[4],
            Variant::NonLocalOnly => cfg.width,
        };
        for (i, &c_out) in HEAD_FILTERS.iter().enumerate() {
            let last = i + 1 == HEAD_FILTERS.len();
            let k = if last { 1 } else { 3 };
            let fan = c_in * k * k;
            let (std, bias) = if last {
                (init.output_conv_std(fan), init.output_conv_bias())
            } else {
                (init.relu_conv_std(fan), 0.0)
            };
            head.push(add_conv2d(&mut set, &format!("head.conv{}", i + 1), c_in, c_out, k, std, bias, rng));
            c_in = c_out;
        }

        Ok(CtnModel {
            cfg,
            params: set,
            local,
            nonlocal,
            head,
        })
    }

    /// Local feature block: five 3x3 convolutions (ReLU after each) with
    /// max pooling after the second and fourth. `[3,H,W] -> [256,H/4,W/4]`.
    pub fn local_block<E: Engine>(&self, eng: &mut E, image: &E::V) -> E::V {
        let shape = eng.value(image).shape().to_vec();
        assert_eq!(shape.len(), 3, "local block: input must be [3,H,W], got {shape:?}");
        assert_eq!(shape[0], 3, "local block: expected 3 input channels, got {}", shape[0]);
        assert!(
            shape[1] % 4 == 0 && shape[2] % 4 == 0,
            "local block: spatial dims {}x{} must be divisible by 4",
            shape[1],
            shape[2]
        );
        let mut x = image.clone();
        for (i, conv) in self.local.iter().enumerate() {
            let (w, b) = (eng.param(conv.w), eng.param(conv.b));
            let y = eng.conv2d(&x, &w, &b, 1, 1);
            x = eng.relu(&y);
            if LOCAL_POOL_AFTER.contains(&(i + 1)) {
                x = eng.maxpool2d(&x);
            }
        }
        x
    }

    fn nonlocal_block<E: Engine>(&self, eng: &mut E, local: &E::V) -> (E::V, E::V, E::V, E::V) {
        let nl = self.nonlocal.as_ref().expect("variant has no non-local block");
        let shape = eng.value(local).shape().to_vec();
        assert!(
            shape[1] % 2 == 0 && shape[2] % 2 == 0,
            "non-local block: spatial dims {}x{} must be divisible by 2",
            shape[1],
            shape[2]
        );
        let mut x = local.clone();
        for (i, conv) in nl.convs.iter().enumerate() {
            let (w, b) = (eng.param(conv.w), eng.param(conv.b));
            let y = eng.conv2d(&x, &w, &b, 1, 1);
            x = eng.relu(&y);
            if i + 1 == NONLOCAL_POOL_AFTER {
                x = eng.maxpool2d(&x);
            }
        }
        let conv512 = x.clone();
        let (w, b) = (eng.param(nl.reduce.w), eng.param(nl.reduce.b));
        let y = eng.conv2d(&x, &w, &b, 1, 0);
        let reduced = eng.relu(&y);

        // Flatten row-major over (H/8, W/8): [d, h8, w8] -> [M, d].
        let rshape = eng.value(&reduced).shape().to_vec();
        let (d, h8, w8) = (rshape[0], rshape[1], rshape[2]);
        let m = h8 * w8;
        let flat = eng.reshape(&reduced, &[d, m]);
        let mut seq = eng.transpose(&flat);
        let acfg = self.cfg.attention();
        for layer in &nl.attn {
            seq = cmha_layer(eng, &seq, layer, &acfg);
        }
        let back = eng.transpose(&seq);
        let nonlocal = eng.reshape(&back, &[d, h8, w8]);
        (conv512, reduced, seq, nonlocal)
    }

    fn density_head<E: Engine>(&self, eng: &mut E, input: &E::V) -> E::V {
        let mut x = input.clone();
        for (i, conv) in self.head.iter().enumerate() {
            let last = i + 1 == self.head.len();
            let (w, b) = (eng.param(conv.w), eng.param(conv.b));
            let pad = if last { 0 } else { 1 };
            let y = eng.conv2d(&x, &w, &b, 1, pad);
            x = eng.relu(&y);
            // Bilinear upsampling after the second and third convolutions.
            if i + 1 == 2 || i + 1 == 3 {
                x = eng.upsample2x(&x);
            }
        }
        x
    }

    /// Full forward pass returning all intermediate feature handles.
    pub fn forward_traced<E: Engine>(&self, eng: &mut E, image: &E::V) -> Traced<E::V> {
        let shape = eng.value(image).shape().to_vec();
        assert!(
            shape.len() == 3 && shape[1] % 8 == 0 && shape[2] % 8 == 0,
            "forward: input must be [3,H,W] with H, W divisible by 8, got {shape:?}"
        );
        let local = self.local_block(eng, image);
        let (conv512, reduced, seq, nonlocal) = if self.cfg.variant.uses_nonlocal() {
            let (a, b, c, d) = self.nonlocal_block(eng, &local);
            (Some(a), Some(b), Some(c), Some(d))
        } else {
            (None, None, None, None)
        };
        let head_in = match self.cfg.variant {
            Variant::Full | Variant::StandardMha => {
                let up = eng.upsample2x(nonlocal.as_ref().unwrap());
                eng.concat(0, &[local.clone(), up])
            }
            Variant::LocalOnly => local.clone(),
            Variant::NonLocalOnly => eng.upsample2x(nonlocal.as_ref().unwrap()),
        };
        let density = self.density_head(eng, &head_in);
        Traced {
            local,
            conv512,
            reduced,
            seq,
            nonlocal,
            density,
        }
    }

    /// Density prediction `[1, H, W]` for an input `[3, H, W]`.
    pub fn forward<E: Engine>(&self, eng: &mut E, image: &E::V) -> E::V {
        self.forward_traced(eng, image).density
    }
}

/// Mean squared per-pixel error between predicted and target density maps.
pub fn mse_density_loss<E: Engine>(eng: &mut E, pred: &E::V, target: &E::V) -> E::V {
    eng.mse(pred, target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Tape;
    use crate::engine::Infer;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_cfg(input: usize, variant: Variant) -> ModelConfig {
        ModelConfig {
            input_h: input,
            input_w: input,
            width: 24,
            heads: 4,
            context_m: 1,
            variant,
            scale_scores: false,
        }
    }

    #[test]
    fn construction_rejects_bad_geometry() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut cfg = ModelConfig::new(64, Variant::Full);
        cfg.input_h = 60;
        assert!(CtnModel::new(cfg, InitScheme::He, &mut rng).is_err());

        let mut cfg = ModelConfig::new(64, Variant::Full);
        cfg.width = 240;
        cfg.heads = 7; // 240 % 7 != 0
        assert!(CtnModel::new(cfg, InitScheme::He, &mut rng).is_err());
    }

    #[test]
    fn forward_shapes_and_nonnegativity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = CtnModel::new(small_cfg(16, Variant::Full), InitScheme::He, &mut rng).unwrap();
        let image = Tensor::randn(vec![3, 16, 16], 1.0, &mut rng);
        let mut eng = Infer::new(&model.params);
        let traced = model.forward_traced(&mut eng, &image);
        assert_eq!(traced.local.shape(), &[256, 4, 4]);
        assert_eq!(traced.conv512.as_ref().unwrap().shape(), &[512, 2, 2]);
        assert_eq!(traced.reduced.as_ref().unwrap().shape(), &[24, 2, 2]);
        assert_eq!(traced.seq.as_ref().unwrap().shape(), &[4, 24]);
        assert_eq!(traced.nonlocal.as_ref().unwrap().shape(), &[24, 2, 2]);
        assert_eq!(traced.density.shape(), &[1, 16, 16]);
        for &v in traced.density.data() {
            assert!(v >= 0.0);
        }
    }

    #[test]
    fn zero_image_and_zero_biases_give_zero_density() {
        // The Gaussian scheme zeroes all biases, so a zero input propagates
        // zeros through every block.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = CtnModel::new(
            small_cfg(16, Variant::Full),
            InitScheme::Gaussian { std: 0.001 },
            &mut rng,
        )
        .unwrap();
        let image = Tensor::zeros(vec![3, 16, 16]);
        let mut eng = Infer::new(&model.params);
        let density = model.forward(&mut eng, &image);
        assert_eq!(density.sum(), 0.0);
    }

    #[test]
    fn local_only_skips_nonlocal_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = CtnModel::new(small_cfg(16, Variant::LocalOnly), InitScheme::He, &mut rng).unwrap();
        assert!(model.params.by_name("nonlocal.conv1.w").is_none());
        let image = Tensor::randn(vec![3, 16, 16], 1.0, &mut rng);
        let mut eng = Infer::new(&model.params);
        let traced = model.forward_traced(&mut eng, &image);
        assert!(traced.nonlocal.is_none());
        assert_eq!(traced.density.shape(), &[1, 16, 16]);
    }

    #[test]
    fn standard_mha_equals_full_with_zero_context() {
        let mut cfg = small_cfg(16, Variant::Full);
        cfg.context_m = 0;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let full0 = CtnModel::new(cfg, InitScheme::He, &mut rng).unwrap();

        let mut cfg_mha = small_cfg(16, Variant::StandardMha);
        cfg_mha.context_m = 3; // ignored by the variant
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mha = CtnModel::new(cfg_mha, InitScheme::He, &mut rng).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let image = Tensor::randn(vec![3, 16, 16], 1.0, &mut rng);
        let mut e1 = Infer::new(&full0.params);
        let mut e2 = Infer::new(&mha.params);
        let y1 = full0.forward(&mut e1, &image);
        let y2 = mha.forward(&mut e2, &image);
        assert_eq!(y1, y2, "identical parameters must give identical outputs");
    }

    #[test]
    fn every_parameter_receives_finite_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = CtnModel::new(small_cfg(16, Variant::Full), InitScheme::He, &mut rng).unwrap();
        let image = Tensor::randn(vec![3, 16, 16], 1.0, &mut rng);
        let target = Tensor::randn(vec![1, 16, 16], 1.0, &mut rng);
        let mut tape = Tape::new(&model.params);
        let img = tape.leaf(image);
        let tgt = tape.leaf(target);
        let pred = model.forward(&mut tape, &img);
        let loss = mse_density_loss(&mut tape, &pred, &tgt);
        tape.backward(loss);
        let grads = tape.param_grads();
        for (id, p) in model.params.iter() {
            let g = grads
                .get(id)
                .unwrap_or_else(|| panic!("parameter {} has no gradient", p.name));
            assert!(
                g.data().iter().all(|v| v.is_finite()),
                "parameter {} has non-finite gradient",
                p.name
            );
        }
    }

    #[test]
    fn flatten_round_trip_is_identity() {
        // With the attention stack replaced by the identity, flatten followed
        // by unflatten must reproduce the reduced map exactly.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = Tensor::randn(vec![5, 3, 4], 1.0, &mut rng);
        let set = ParamSet::new();
        let mut eng = Infer::new(&set);
        let flat = eng.reshape(&x, &[5, 12]);
        let seq = eng.transpose(&flat);
        assert_eq!(seq.shape(), &[12, 5]);
        // Row m of the sequence is the feature vector at spatial (m / 4, m % 4).
        for m in 0..12 {
            for c in 0..5 {
                assert_eq!(seq.at2(m, c), x.at3(c, m / 4, m % 4));
            }
        }
        let back = eng.transpose(&seq);
        let restored = eng.reshape(&back, &[5, 3, 4]);
        assert_eq!(restored, x);
    }
}
