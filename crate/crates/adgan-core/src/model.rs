//! The unified generator and two-branch domain discriminator.
//!
//! One auto-encoder serves both domains. A one-hot domain label replaces
//! the per-sample style code: a small MLP maps the label to one style
//! vector per domain, which is injected into every AdaIN layer of the
//! encoder and decoder as (scale, shift) affine parameters. Translation is
//! just decoding with the other domain's label. The discriminator shares a
//! PatchGAN body and keeps one output head per domain.
//!
//! Generator convolutions use reflection padding; together with
//! nearest-neighbour upsampling in the decoder this keeps a spatially
//! uniform input exactly uniform through the whole network, which is what
//! makes tiled inference stitch seamlessly.

use std::fmt;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::image_io::ImageTensor;
use crate::nn::{Conv2dSpec, NodeId, Pad, ParamGroup, ParamId, ParamStore, Tape, Tensor};
use crate::rng::{derive_seed, purpose, rng_from_seed, Rng};

/// Domain selector: a 2-vector in [0,1]. Pure labels are one-hot; linear
/// interpolations between the two pure labels are allowed and sum to 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainLabel(pub [f32; 2]);

impl DomainLabel {
    /// Microscopy image domain X1: (1, 0).
    pub fn image() -> Self {
        DomainLabel([1.0, 0.0])
    }

    /// Synthetic mask domain X2: (0, 1).
    pub fn mask() -> Self {
        DomainLabel([0.0, 1.0])
    }

    pub fn from_branch(branch: usize) -> Result<Self, ModelError> {
        match branch {
            0 => Ok(Self::image()),
            1 => Ok(Self::mask()),
            b => Err(ModelError::InvalidBranch(b)),
        }
    }

    /// Linear interpolation (1-alpha)*self + alpha*other.
    pub fn lerp(&self, other: &DomainLabel, alpha: f32) -> DomainLabel {
        DomainLabel([
            (1.0 - alpha) * self.0[0] + alpha * other.0[0],
            (1.0 - alpha) * self.0[1] + alpha * other.0[1],
        ])
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let ok = self.0.iter().all(|v| (0.0..=1.0).contains(v))
            && ((self.0[0] + self.0[1]) - 1.0).abs() <= 1e-5;
        if ok {
            Ok(())
        } else {
            Err(ModelError::InvalidLabel(*self))
        }
    }

    /// Batch of identical label rows as a (n, 2) tensor.
    pub fn rows(&self, n: usize) -> Tensor {
        let mut data = Vec::with_capacity(2 * n);
        for _ in 0..n {
            data.extend_from_slice(&self.0);
        }
        Tensor::new(&[n, 2], data)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalePreset {
    /// Paper-scale widths (base 64, content 256).
    Full,
    /// All channel widths divided by 4; same topology. Runs in minutes on CPU.
    Desk,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub base_channels: usize,
    pub content_channels: usize,
    pub n_res_blocks_enc: usize,
    pub n_res_blocks_dec: usize,
    pub image_channels: usize,
    pub scale_preset: ScalePreset,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            base_channels: 64,
            content_channels: 256,
            n_res_blocks_enc: 4,
            n_res_blocks_dec: 4,
            image_channels: 1,
            scale_preset: ScalePreset::Full,
        }
    }
}

impl GeneratorConfig {
    pub fn desk() -> Self {
        Self {
            scale_preset: ScalePreset::Desk,
            ..Self::default()
        }
    }

    fn divisor(&self) -> usize {
        match self.scale_preset {
            ScalePreset::Full => 1,
            ScalePreset::Desk => 4,
        }
    }

    /// Effective channel widths after the preset divisor.
    pub fn base(&self) -> usize {
        self.base_channels / self.divisor()
    }

    pub fn content(&self) -> usize {
        self.content_channels / self.divisor()
    }

    pub fn mlp_hidden(&self) -> usize {
        4 * self.base()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let d = self.divisor();
        if self.base_channels % d != 0 || self.content_channels % d != 0 {
            return Err(ModelError::Config(format!(
                "channel widths {}/{} not divisible by preset divisor {d}",
                self.base_channels, self.content_channels
            )));
        }
        if self.base() == 0 || self.content() == 0 || self.image_channels == 0 {
            return Err(ModelError::Config("channel widths must be positive".into()));
        }
        Ok(())
    }

    /// AdaIN layer channel widths of the encoder, in forward order.
    pub fn encoder_adain_widths(&self) -> Vec<usize> {
        let mut v = vec![self.base(), 2 * self.base(), self.content()];
        v.extend(std::iter::repeat(self.content()).take(self.n_res_blocks_enc));
        v
    }

    /// AdaIN layer channel widths of the decoder, in forward order.
    pub fn decoder_adain_widths(&self) -> Vec<usize> {
        let mut v: Vec<usize> = std::iter::repeat(self.content())
            .take(self.n_res_blocks_dec)
            .collect();
        v.push(2 * self.base());
        v.push(self.base());
        v
    }

    /// Total style vector width: one (scale, shift) pair per AdaIN layer.
    pub fn style_width(&self) -> usize {
        2 * (self.encoder_adain_widths().iter().sum::<usize>()
            + self.decoder_adain_widths().iter().sum::<usize>())
    }
}

#[derive(Debug)]
pub enum ModelError {
    Config(String),
    Shape(String),
    InvalidBranch(usize),
    InvalidLabel(DomainLabel),
    /// Construction-time gradient flow check failed for a group.
    DeadGradients(&'static str),
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::Config(m) => write!(f, "invalid generator config: {m}"),
            ModelError::Shape(m) => write!(f, "shape error: {m}"),
            ModelError::InvalidBranch(b) => write!(f, "invalid discriminator branch {b} (0 or 1)"),
            ModelError::InvalidLabel(l) => write!(f, "invalid domain label {:?}", l.0),
            ModelError::DeadGradients(g) => {
                write!(f, "gradient flow check failed: no gradients reach {g}")
            }
        }
    }
}

impl std::error::Error for ModelError {}

/// Per-AdaIN-layer style parameters materialized for one domain label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyleLayer {
    pub name: String,
    pub scale: Vec<f32>,
    pub shift: Vec<f32>,
}

/// The style representation of one domain: (scale, shift) vectors for
/// every AdaIN layer in encoder and decoder, in forward order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyleBundle {
    pub encoder: Vec<StyleLayer>,
    pub decoder: Vec<StyleLayer>,
}

impl StyleBundle {
    pub fn total_params(&self) -> usize {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .map(|l| l.scale.len() + l.shift.len())
            .sum()
    }
}

/// Latent feature grid of shape (n, c, h/4, w/4).
#[derive(Clone, Debug, PartialEq)]
pub struct ContentMap(pub Tensor);

impl ContentMap {
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        self.0.dims4()
    }

    /// Spatial average per channel, one row per sample.
    pub fn pooled(&self) -> Vec<Vec<f32>> {
        let (n, c, h, w) = self.0.dims4();
        let hw = (h * w) as f32;
        (0..n)
            .map(|ni| {
                (0..c)
                    .map(|ci| {
                        let base = (ni * c + ci) * h * w;
                        self.0.data()[base..base + h * w].iter().sum::<f32>() / hw
                    })
                    .collect()
            })
            .collect()
    }
}

struct ConvLayer {
    w: ParamId,
    b: ParamId,
    spec: Conv2dSpec,
}

impl ConvLayer {
    #[allow(clippy::too_many_arguments)]
    fn new(
        store: &mut ParamStore,
        rng: &mut Rng,
        name: &str,
        group: ParamGroup,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: Pad,
    ) -> Self {
        // Conventional conv init for this model family.
        let normal = Normal::new(0.0f32, 0.02).expect("const sigma");
        let wdata: Vec<f32> = (0..out_ch * in_ch * kernel * kernel)
            .map(|_| normal.sample(rng))
            .collect();
        let w = store.add(
            format!("{name}.weight"),
            group,
            Tensor::new(&[out_ch, in_ch * kernel * kernel], wdata),
        );
        let b = store.add(format!("{name}.bias"), group, Tensor::zeros(&[out_ch]));
        ConvLayer {
            w,
            b,
            spec: Conv2dSpec {
                in_ch,
                out_ch,
                kernel,
                stride,
                pad,
            },
        }
    }

    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: NodeId, frozen: bool) -> NodeId {
        tape.conv2d(store, x, self.w, self.b, self.spec, frozen)
    }
}

struct NormLayer {
    gamma: ParamId,
    beta: ParamId,
}

impl NormLayer {
    fn new(store: &mut ParamStore, name: &str, group: ParamGroup, channels: usize) -> Self {
        let gamma = store.add(
            format!("{name}.gamma"),
            group,
            Tensor::full(&[channels], 1.0),
        );
        let beta = store.add(format!("{name}.beta"), group, Tensor::zeros(&[channels]));
        NormLayer { gamma, beta }
    }
}

/// Style nodes for one network half: (scale, shift) per AdaIN layer.
pub struct StyleNodes {
    pub encoder: Vec<(NodeId, NodeId)>,
    pub decoder: Vec<(NodeId, NodeId)>,
}

pub struct Encoder {
    down: Vec<ConvLayer>,
    res: Vec<ConvLayer>,
}

pub struct Decoder {
    res: Vec<ConvLayer>,
    up: Vec<ConvLayer>,
    out: ConvLayer,
}

pub struct StyleMlp {
    fc: [(ParamId, ParamId); 3],
}

pub struct Discriminator {
    body: Vec<(ConvLayer, Option<NormLayer>)>,
    heads: [ConvLayer; 2],
}

/// The full model: one parameter store plus the four sub-networks.
pub struct AdGanModel {
    pub config: GeneratorConfig,
    pub store: ParamStore,
    pub encoder: Encoder,
    pub decoder: Decoder,
    pub mlp: StyleMlp,
    pub discriminator: Discriminator,
}

impl AdGanModel {
    pub fn new(config: GeneratorConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut rng = rng_from_seed(derive_seed(seed, purpose::WEIGHT_INIT, 0));
        let b = config.base();
        let c = config.content();
        let img = config.image_channels;

        let encoder = Encoder {
            down: vec![
                ConvLayer::new(&mut store, &mut rng, "enc.down0", ParamGroup::Encoder, img, b, 7, 1, Pad::reflect(3)),
                ConvLayer::new(&mut store, &mut rng, "enc.down1", ParamGroup::Encoder, b, 2 * b, 3, 2, Pad::reflect(1)),
                ConvLayer::new(&mut store, &mut rng, "enc.down2", ParamGroup::Encoder, 2 * b, c, 3, 2, Pad::reflect(1)),
            ],
            res: (0..config.n_res_blocks_enc)
                .map(|i| {
                    ConvLayer::new(&mut store, &mut rng, &format!("enc.res{i}"), ParamGroup::Encoder, c, c, 3, 1, Pad::reflect(1))
                })
                .collect(),
        };

        let decoder = Decoder {
            res: (0..config.n_res_blocks_dec)
                .map(|i| {
                    ConvLayer::new(&mut store, &mut rng, &format!("dec.res{i}"), ParamGroup::Decoder, c, c, 3, 1, Pad::reflect(1))
                })
                .collect(),
            up: vec![
                ConvLayer::new(&mut store, &mut rng, "dec.up0", ParamGroup::Decoder, c, 2 * b, 3, 1, Pad::reflect(1)),
                ConvLayer::new(&mut store, &mut rng, "dec.up1", ParamGroup::Decoder, 2 * b, b, 3, 1, Pad::reflect(1)),
            ],
            out: ConvLayer::new(&mut store, &mut rng, "dec.out", ParamGroup::Decoder, b, img, 7, 1, Pad::reflect(3)),
        };

        let hidden = config.mlp_hidden();
        let n_s = config.style_width();
        // The output bias starts every AdaIN scale slice at 1 and every
        // shift slice at 0, so styles begin as identity affine transforms;
        // a zero-centered start would collapse all decoder activations.
        let mut identity_bias = Vec::with_capacity(n_s);
        for c in config
            .encoder_adain_widths()
            .iter()
            .chain(config.decoder_adain_widths().iter())
        {
            identity_bias.extend(std::iter::repeat(1.0f32).take(*c));
            identity_bias.extend(std::iter::repeat(0.0f32).take(*c));
        }
        let mut linear = |name: &str, i: usize, o: usize, bias_init: Option<Vec<f32>>, rng: &mut Rng| {
            let normal = Normal::new(0.0f32, 0.02).expect("const sigma");
            let wdata: Vec<f32> = (0..o * i).map(|_| normal.sample(rng)).collect();
            let w = store.add(format!("{name}.weight"), ParamGroup::StyleMlp, Tensor::new(&[o, i], wdata));
            let bias_t = match bias_init {
                Some(v) => Tensor::new(&[o], v),
                None => Tensor::zeros(&[o]),
            };
            let bias = store.add(format!("{name}.bias"), ParamGroup::StyleMlp, bias_t);
            (w, bias)
        };
        let mlp = StyleMlp {
            fc: [
                linear("mlp.fc0", 2, hidden, None, &mut rng),
                linear("mlp.fc1", hidden, hidden, None, &mut rng),
                linear("mlp.fc2", hidden, n_s, Some(identity_bias), &mut rng),
            ],
        };

        let discriminator = Discriminator {
            body: vec![
                (
                    ConvLayer::new(&mut store, &mut rng, "disc.body0", ParamGroup::Discriminator, img, b, 4, 2, Pad::zero(1)),
                    None,
                ),
                (
                    ConvLayer::new(&mut store, &mut rng, "disc.body1", ParamGroup::Discriminator, b, 2 * b, 4, 2, Pad::zero(1)),
                    Some(NormLayer::new(&mut store, "disc.in1", ParamGroup::Discriminator, 2 * b)),
                ),
                (
                    ConvLayer::new(&mut store, &mut rng, "disc.body2", ParamGroup::Discriminator, 2 * b, 4 * b, 4, 2, Pad::zero(1)),
                    Some(NormLayer::new(&mut store, "disc.in2", ParamGroup::Discriminator, 4 * b)),
                ),
                (
                    ConvLayer::new(&mut store, &mut rng, "disc.body3", ParamGroup::Discriminator, 4 * b, 8 * b, 4, 1, Pad::zero_asym(1, 2)),
                    Some(NormLayer::new(&mut store, "disc.in3", ParamGroup::Discriminator, 8 * b)),
                ),
            ],
            heads: [
                ConvLayer::new(&mut store, &mut rng, "disc.head0", ParamGroup::Discriminator, 8 * b, 1, 4, 1, Pad::zero_asym(1, 2)),
                ConvLayer::new(&mut store, &mut rng, "disc.head1", ParamGroup::Discriminator, 8 * b, 1, 4, 1, Pad::zero_asym(1, 2)),
            ],
        };

        let model = AdGanModel {
            config,
            store,
            encoder,
            decoder,
            mlp,
            discriminator,
        };
        model.check_style_inventory();
        model.check_gradient_flow()?;
        Ok(model)
    }

    /// Every AdaIN layer must receive exactly one (scale, shift) slice.
    fn check_style_inventory(&self) {
        let n_s = self.config.style_width();
        let from_widths: usize = 2
            * (self.config.encoder_adain_widths().iter().sum::<usize>()
                + self.config.decoder_adain_widths().iter().sum::<usize>());
        assert_eq!(n_s, from_widths, "style width bookkeeping out of sync");
        let (_, fc2_b) = self.mlp.fc[2];
        assert_eq!(
            self.store.value(fc2_b).numel(),
            n_s,
            "MLP output width must equal total AdaIN parameter count"
        );
    }

    /// A scalar loss on the decode output must reach every sub-network.
    fn check_gradient_flow(&self) -> Result<(), ModelError> {
        let mut tape = Tape::new();
        let n = 1;
        let side = 8;
        // Fixed non-uniform probe input (uniform inputs have zero variance
        // and would starve the convolutions of gradient through AdaIN).
        let data: Vec<f32> = (0..self.config.image_channels * side * side)
            .map(|i| ((i * 2654435761usize) % 97) as f32 / 48.5 - 1.0)
            .collect();
        let x = tape.input(Tensor::new(&[n, self.config.image_channels, side, side], data));
        let styles = self.style_nodes(&mut tape, &DomainLabel::image().rows(n));
        let c = self.encode_nodes(&mut tape, x, Some(&styles), false);
        let y = self.decode_nodes(&mut tape, c, &styles, false);
        let loss = tape.mse_const(y, 0.37);
        let mut probe = self.store.clone();
        probe.zero_grads();
        tape.backward(loss, &mut probe);
        for group in [ParamGroup::Encoder, ParamGroup::Decoder, ParamGroup::StyleMlp] {
            let alive = probe
                .iter()
                .filter(|(_, p)| p.group == group)
                .any(|(_, p)| p.grad.max_abs() > 0.0);
            if !alive {
                return Err(ModelError::DeadGradients(group.label()));
            }
        }
        Ok(())
    }

    /// MLP forward + slicing into per-layer (scale, shift) node pairs.
    pub fn style_nodes(&self, tape: &mut Tape, labels: &Tensor) -> StyleNodes {
        let d = tape.input(labels.clone());
        self.style_nodes_from(tape, d)
    }

    /// Same, but reusing an existing label node (for interpolation paths).
    pub fn style_nodes_from(&self, tape: &mut Tape, d: NodeId) -> StyleNodes {
        let s = &self.store;
        let mut h = tape.linear(s, d, self.mlp.fc[0].0, self.mlp.fc[0].1, false);
        h = tape.relu(h);
        h = tape.linear(s, h, self.mlp.fc[1].0, self.mlp.fc[1].1, false);
        h = tape.relu(h);
        let style = tape.linear(s, h, self.mlp.fc[2].0, self.mlp.fc[2].1, false);

        let mut offset = 0;
        let mut slice_pairs = |tape: &mut Tape, widths: &[usize]| -> Vec<(NodeId, NodeId)> {
            widths
                .iter()
                .map(|&c| {
                    let scale = tape.slice_cols(style, offset, c);
                    let shift = tape.slice_cols(style, offset + c, c);
                    offset += 2 * c;
                    (scale, shift)
                })
                .collect()
        };
        let encoder = slice_pairs(tape, &self.config.encoder_adain_widths());
        let decoder = slice_pairs(tape, &self.config.decoder_adain_widths());
        debug_assert_eq!(offset, self.config.style_width());
        StyleNodes { encoder, decoder }
    }

    /// Conv -> AdaIN -> ReLU, with an unconditional-normalization fallback
    /// used when AdaIN is ablated out of the encoder.
    fn conv_adain_relu(
        &self,
        tape: &mut Tape,
        x: NodeId,
        layer: &ConvLayer,
        style: Option<(NodeId, NodeId)>,
        frozen: bool,
    ) -> NodeId {
        let y = layer.forward(tape, &self.store, x, frozen);
        let (n, c, _, _) = tape.value(y).dims4();
        let normed = match style {
            Some((scale, shift)) => tape.adain(y, scale, shift),
            None => {
                let ones = tape.input(Tensor::full(&[n, c], 1.0));
                let zeros = tape.input(Tensor::zeros(&[n, c]));
                tape.adain(y, ones, zeros)
            }
        };
        tape.relu(normed)
    }

    /// Encoder forward. `styles: None` replaces every encoder AdaIN by
    /// plain instance normalization (the AdaIN-in-encoder ablation).
    pub fn encode_nodes(
        &self,
        tape: &mut Tape,
        x: NodeId,
        styles: Option<&StyleNodes>,
        frozen: bool,
    ) -> NodeId {
        let mut cur = x;
        let mut li = 0;
        for layer in &self.encoder.down {
            let st = styles.map(|s| s.encoder[li]);
            cur = self.conv_adain_relu(tape, cur, layer, st, frozen);
            li += 1;
        }
        for layer in &self.encoder.res {
            let st = styles.map(|s| s.encoder[li]);
            let branch = self.conv_adain_relu(tape, cur, layer, st, frozen);
            cur = tape.add(cur, branch);
            li += 1;
        }
        cur
    }

    /// Decoder forward: residual AdaIN blocks, two upsample stages, then a
    /// 7x7 projection squashed by tanh.
    pub fn decode_nodes(
        &self,
        tape: &mut Tape,
        content: NodeId,
        styles: &StyleNodes,
        frozen: bool,
    ) -> NodeId {
        let mut cur = content;
        let mut li = 0;
        for layer in &self.decoder.res {
            let branch = self.conv_adain_relu(tape, cur, layer, Some(styles.decoder[li]), frozen);
            cur = tape.add(cur, branch);
            li += 1;
        }
        for layer in &self.decoder.up {
            cur = tape.upsample2(cur);
            cur = self.conv_adain_relu(tape, cur, layer, Some(styles.decoder[li]), frozen);
            li += 1;
        }
        let y = self.decoder.out.forward(tape, &self.store, cur, frozen);
        tape.tanh(y)
    }

    /// Shared discriminator body; returns the feature node fed to heads.
    fn discriminator_body(&self, tape: &mut Tape, x: NodeId, frozen: bool) -> NodeId {
        let mut cur = x;
        for (conv, norm) in &self.discriminator.body {
            cur = conv.forward(tape, &self.store, cur, frozen);
            if let Some(nl) = norm {
                cur = tape.instance_norm(&self.store, cur, nl.gamma, nl.beta, frozen);
            }
            cur = tape.leaky_relu(cur, 0.2);
        }
        cur
    }

    /// Patch logits of one branch: D_i(x) = D(x | d_i).
    pub fn discriminate_nodes(
        &self,
        tape: &mut Tape,
        x: NodeId,
        branch: usize,
        frozen: bool,
    ) -> Result<NodeId, ModelError> {
        if branch > 1 {
            return Err(ModelError::InvalidBranch(branch));
        }
        let body = self.discriminator_body(tape, x, frozen);
        Ok(self.discriminator.heads[branch].forward(tape, &self.store, body, frozen))
    }

    /// Both branches over one shared body evaluation.
    pub fn discriminate_both_nodes(
        &self,
        tape: &mut Tape,
        x: NodeId,
        frozen: bool,
    ) -> (NodeId, NodeId) {
        let body = self.discriminator_body(tape, x, frozen);
        (
            self.discriminator.heads[0].forward(tape, &self.store, body, frozen),
            self.discriminator.heads[1].forward(tape, &self.store, body, frozen),
        )
    }

    fn check_spatial(&self, h: usize, w: usize) -> Result<(), ModelError> {
        if h % 4 != 0 || w % 4 != 0 || h == 0 || w == 0 {
            return Err(ModelError::Shape(format!(
                "spatial dims ({h}, {w}) must be positive multiples of 4"
            )));
        }
        Ok(())
    }

    /// Factorize an image into its content representation (inference path).
    pub fn encode(&self, x: &ImageTensor, d: &DomainLabel) -> Result<ContentMap, ModelError> {
        d.validate()?;
        self.check_spatial(x.height, x.width)?;
        let mut tape = Tape::new();
        let xn = tape.input(Tensor::new(&[1, 1, x.height, x.width], x.data().to_vec()));
        let styles = self.style_nodes(&mut tape, &d.rows(1));
        let c = self.encode_nodes(&mut tape, xn, Some(&styles), true);
        Ok(ContentMap(tape.value(c).clone()))
    }

    /// Compose a content map with a domain's style into an image.
    pub fn decode(&self, c: &ContentMap, d: &DomainLabel) -> Result<ImageTensor, ModelError> {
        d.validate()?;
        let (n, ch, h, w) = c.0.dims4();
        if n != 1 || ch != self.config.content() {
            return Err(ModelError::Shape(format!(
                "content map ({n}, {ch}, {h}, {w}) does not match config content width {}",
                self.config.content()
            )));
        }
        let mut tape = Tape::new();
        let cn = tape.input(c.0.clone());
        let styles = self.style_nodes(&mut tape, &d.rows(1));
        let y = self.decode_nodes(&mut tape, cn, &styles, true);
        let yv = tape.value(y);
        let (_, _, oh, ow) = yv.dims4();
        Ok(ImageTensor::new(oh, ow, yv.data().to_vec()))
    }

    /// Patch logit grid of the selected discriminator branch.
    pub fn discriminate(&self, x: &ImageTensor, branch: usize) -> Result<Tensor, ModelError> {
        let mut tape = Tape::new();
        let xn = tape.input(Tensor::new(&[1, 1, x.height, x.width], x.data().to_vec()));
        let logits = self.discriminate_nodes(&mut tape, xn, branch, true)?;
        Ok(tape.value(logits).clone())
    }

    /// Materialize the style representation of a domain label.
    pub fn style_bundle(&self, d: &DomainLabel) -> Result<StyleBundle, ModelError> {
        d.validate()?;
        let mut tape = Tape::new();
        let styles = self.style_nodes(&mut tape, &d.rows(1));
        let take = |tape: &Tape, pairs: &[(NodeId, NodeId)], widths: &[usize], prefix: &str| {
            pairs
                .iter()
                .zip(widths)
                .enumerate()
                .map(|(i, (&(sc, sh), &_w))| StyleLayer {
                    name: format!("{prefix}{i}"),
                    scale: tape.value(sc).data().to_vec(),
                    shift: tape.value(sh).data().to_vec(),
                })
                .collect::<Vec<_>>()
        };
        Ok(StyleBundle {
            encoder: take(&tape, &styles.encoder, &self.config.encoder_adain_widths(), "enc"),
            decoder: take(&tape, &styles.decoder, &self.config.decoder_adain_widths(), "dec"),
        })
    }

    /// Human-readable parameter inventory (used by describe-checkpoint).
    pub fn describe(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "preset: {:?}  base: {}  content: {}  style width: {}\n",
            self.config.scale_preset,
            self.config.base(),
            self.config.content(),
            self.config.style_width()
        ));
        let mut total = 0usize;
        for (_, p) in self.store.iter() {
            total += p.value.numel();
            out.push_str(&format!(
                "{:<14} {:<20} {:?}\n",
                p.group.label(),
                p.name,
                p.value.shape()
            ));
        }
        out.push_str(&format!("total parameters: {total}\n"));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk_model() -> AdGanModel {
        AdGanModel::new(GeneratorConfig::desk(), 7).unwrap()
    }

    #[test]
    fn style_width_matches_appendix_arithmetic() {
        let full = GeneratorConfig::default();
        // 2 * (64+128+256 + 4*256 + 4*256 + 128 + 64) = 5376
        assert_eq!(full.style_width(), 5376);
        assert_eq!(GeneratorConfig::desk().style_width(), 5376 / 4);
        // Encoder down-layer slices for the full preset: (64+64), (128+128), (256+256).
        assert_eq!(full.encoder_adain_widths()[..3], [64, 128, 256]);
    }

    #[test]
    fn desk_shape_contract() {
        let m = desk_model();
        let x = ImageTensor::filled(64, 64, 0.1);
        let c = m.encode(&x, &DomainLabel::image()).unwrap();
        assert_eq!(c.dims(), (1, 64, 16, 16));
        let y = m.decode(&c, &DomainLabel::mask()).unwrap();
        assert_eq!((y.height, y.width), (64, 64));
        let logits = m.discriminate(&x, 0).unwrap();
        assert_eq!(logits.dims4(), (1, 1, 8, 8));
    }

    #[test]
    fn decode_output_is_inside_unit_range() {
        let m = desk_model();
        let x = ImageTensor::filled(32, 32, -0.4);
        let c = m.encode(&x, &DomainLabel::mask()).unwrap();
        let y = m.decode(&c, &DomainLabel::mask()).unwrap();
        assert!(y.data().iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn encode_rejects_unaligned_dims() {
        let m = desk_model();
        let x = ImageTensor::filled(30, 64, 0.0);
        assert!(matches!(
            m.encode(&x, &DomainLabel::image()),
            Err(ModelError::Shape(_))
        ));
    }

    #[test]
    fn encode_is_deterministic() {
        let m = desk_model();
        let x = ImageTensor::new(16, 16, (0..256).map(|i| (i as f32 / 128.0) - 1.0).collect());
        let a = m.encode(&x, &DomainLabel::image()).unwrap();
        let b = m.encode(&x, &DomainLabel::image()).unwrap();
        assert_eq!(a.0, b.0);
    }

    #[test]
    fn style_bundles_differ_between_domains() {
        let m = desk_model();
        let a = m.style_bundle(&DomainLabel::image()).unwrap();
        let b = m.style_bundle(&DomainLabel::mask()).unwrap();
        assert_eq!(a.total_params(), m.config.style_width());
        assert_ne!(a, b);
    }

    #[test]
    fn interpolated_bundle_is_between_endpoints() {
        let m = desk_model();
        let a = m.style_bundle(&DomainLabel::image()).unwrap();
        let b = m.style_bundle(&DomainLabel::mask()).unwrap();
        let mid = m
            .style_bundle(&DomainLabel::image().lerp(&DomainLabel::mask(), 0.5))
            .unwrap();
        // Continuity sanity: the midpoint bundle is not equal to either endpoint.
        assert_ne!(mid, a);
        assert_ne!(mid, b);
    }

    #[test]
    fn shared_body_equals_two_full_passes() {
        let m = desk_model();
        let x = ImageTensor::new(16, 16, (0..256).map(|i| ((i % 17) as f32 / 8.5) - 1.0).collect());
        let b0 = m.discriminate(&x, 0).unwrap();
        let b1 = m.discriminate(&x, 1).unwrap();
        let mut tape = Tape::new();
        let xn = tape.input(Tensor::new(&[1, 1, 16, 16], x.data().to_vec()));
        let (h0, h1) = m.discriminate_both_nodes(&mut tape, xn, true);
        assert_eq!(tape.value(h0), &b0);
        assert_eq!(tape.value(h1), &b1);
    }

    #[test]
    fn invalid_branch_is_rejected() {
        let m = desk_model();
        let x = ImageTensor::filled(16, 16, 0.0);
        assert!(matches!(m.discriminate(&x, 2), Err(ModelError::InvalidBranch(2))));
    }

    #[test]
    fn uniform_input_stays_uniform_through_generator() {
        // Reflection padding + nearest upsampling: a constant image maps to
        // a constant image, the property the tiling contract rests on.
        let m = desk_model();
        let x = ImageTensor::filled(32, 32, 0.25);
        let c = m.encode(&x, &DomainLabel::image()).unwrap();
        let y = m.decode(&c, &DomainLabel::image()).unwrap();
        let v0 = y.data()[0];
        assert!(y.data().iter().all(|&v| (v - v0).abs() < 1e-7));
    }
}
