//! The four training losses and their weighted objective.
//!
//! Cross-domain terms treat the decoder as a fixed content-reconstruction
//! function: its parameters receive gradient only through same-domain
//! reconstruction (when aligned training is on), while gradients still
//! flow *through* it to the encoder and style MLP. The discriminator is
//! trained to tell reconstructed images from cross-domain generated ones —
//! it never sees raw dataset images.

use serde::{Deserialize, Serialize};

use crate::model::{AdGanModel, DomainLabel, StyleNodes};
use crate::nn::{NodeId, Tape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub lambda_rec: f64,
    pub lambda_cyc: f64,
    pub lambda_ctr: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_rec: 20.0,
            lambda_cyc: 20.0,
            lambda_ctr: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), String> {
        if self.lambda_rec >= 0.0 && self.lambda_cyc >= 0.0 && self.lambda_ctr >= 0.0 {
            Ok(())
        } else {
            Err(format!("loss weights must be non-negative: {self:?}"))
        }
    }
}

/// Component toggles matching the ablation table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationFlags {
    pub use_rec: bool,
    pub use_ctr: bool,
    pub use_cyc: bool,
    pub adain_in_encoder: bool,
    pub aligned_training: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        Self {
            use_rec: true,
            use_ctr: true,
            use_cyc: true,
            adain_in_encoder: true,
            aligned_training: true,
        }
    }
}

/// Adversarial loss flavour. BCE is the default; least-squares is kept as
/// a switch with no default claim.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvLossKind {
    #[default]
    Bce,
    LeastSquares,
}

fn adv_term(tape: &mut Tape, logits: NodeId, real: bool, kind: AdvLossKind) -> NodeId {
    let target = if real { 1.0 } else { 0.0 };
    match kind {
        AdvLossKind::Bce => tape.bce_with_logits(logits, target),
        AdvLossKind::LeastSquares => tape.mse_const(logits, target),
    }
}

/// Per-iteration loss values, as logged to the training CSV.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub rec: f64,
    pub adv_d: f64,
    pub adv_g: f64,
    pub ctr: f64,
    pub cyc: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [self.rec, self.adv_d, self.adv_g, self.ctr, self.cyc, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Weighted objective with flag-disabled terms contributing exactly 0.
pub fn total_from_components(
    adv_g: f64,
    cyc: f64,
    rec: f64,
    ctr: f64,
    weights: &LossWeights,
    flags: &AblationFlags,
) -> f64 {
    let mut total = adv_g;
    if flags.use_cyc {
        total += weights.lambda_cyc * cyc;
    }
    if flags.use_rec {
        total += weights.lambda_rec * rec;
    }
    if flags.use_ctr {
        total += weights.lambda_ctr * ctr;
    }
    total
}

pub fn label_for(domain: usize) -> DomainLabel {
    if domain == 0 {
        DomainLabel::image()
    } else {
        DomainLabel::mask()
    }
}

/// Batched image tensor from a (n,1,h,w) slice of images.
fn assert_batch(x: &Tensor) {
    let (_, c, h, w) = x.dims4();
    assert_eq!(c, 1, "batches are single-channel");
    assert!(h % 4 == 0 && w % 4 == 0, "batch dims must be multiples of 4");
}

/// Detached generator outputs for the discriminator step.
pub struct DetachedOutputs {
    /// Same-domain reconstructions, by domain index.
    pub recon: [Tensor; 2],
    /// Cross-domain fakes generated *into* each domain index.
    pub fake_into: [Tensor; 2],
}

/// Forward the generator without gradient bookkeeping and return clones of
/// the images the discriminator trains on.
pub fn generator_outputs_detached(
    model: &AdGanModel,
    x1: &Tensor,
    x2: &Tensor,
    flags: &AblationFlags,
) -> DetachedOutputs {
    assert_batch(x1);
    assert_batch(x2);
    let n1 = x1.dims4().0;
    let n2 = x2.dims4().0;
    let mut tape = Tape::new();
    let x1n = tape.input(x1.clone());
    let x2n = tape.input(x2.clone());
    let s1a = model.style_nodes(&mut tape, &DomainLabel::image().rows(n1));
    let s2a = model.style_nodes(&mut tape, &DomainLabel::mask().rows(n2));
    let enc_styles = |s| if flags.adain_in_encoder { Some(s) } else { None };
    let c1 = model.encode_nodes(&mut tape, x1n, enc_styles(&s1a), true);
    let c2 = model.encode_nodes(&mut tape, x2n, enc_styles(&s2a), true);
    let recon1 = model.decode_nodes(&mut tape, c1, &s1a, true);
    let recon2 = model.decode_nodes(&mut tape, c2, &s2a, true);
    let s2_for_x1 = model.style_nodes(&mut tape, &DomainLabel::mask().rows(n1));
    let s1_for_x2 = model.style_nodes(&mut tape, &DomainLabel::image().rows(n2));
    let fake_into_2 = model.decode_nodes(&mut tape, c1, &s2_for_x1, true);
    let fake_into_1 = model.decode_nodes(&mut tape, c2, &s1_for_x2, true);
    DetachedOutputs {
        recon: [tape.value(recon1).clone(), tape.value(recon2).clone()],
        fake_into: [tape.value(fake_into_1).clone(), tape.value(fake_into_2).clone()],
    }
}

/// Discriminator objective over detached images: for each branch i, the
/// reconstruction of domain i is the real class and the cross-domain fake
/// into domain i is the fake class. Each direction is the mean of its real
/// and fake terms; the two directions are averaged.
pub struct DiscriminatorGraph {
    pub tape: Tape,
    pub root: NodeId,
    pub value: f64,
}

pub fn build_discriminator_loss(
    model: &AdGanModel,
    outputs: &DetachedOutputs,
    kind: AdvLossKind,
) -> DiscriminatorGraph {
    let mut tape = Tape::new();
    let mut terms = Vec::with_capacity(4);
    for branch in 0..2 {
        let real = tape.input(outputs.recon[branch].clone());
        let fake = tape.input(outputs.fake_into[branch].clone());
        let lr = model
            .discriminate_nodes(&mut tape, real, branch, false)
            .expect("branch in range");
        let lf = model
            .discriminate_nodes(&mut tape, fake, branch, false)
            .expect("branch in range");
        let tr = adv_term(&mut tape, lr, true, kind);
        let tf = adv_term(&mut tape, lf, false, kind);
        terms.push((tr, 0.25f32));
        terms.push((tf, 0.25f32));
    }
    let root = tape.weighted_sum(terms);
    let value = tape.value(root).item() as f64;
    DiscriminatorGraph { tape, root, value }
}

/// Everything the generator step needs: one tape holding both directions
/// of all four losses, the weighted total as the backward root, and the
/// component values for logging.
pub struct GeneratorGraph {
    pub tape: Tape,
    pub total: NodeId,
    pub breakdown: LossBreakdown,
}

struct DirectionNodes {
    x: NodeId,
    content: NodeId,
    recon: NodeId,
    fake: NodeId,
    c_re: Option<NodeId>,
    cycled: Option<NodeId>,
}

/// Generator-side forward pass, built once per iteration. The
/// discriminator step consumes detached clones of its recon/fake values;
/// the adversarial heads and loss terms are appended afterwards
/// (`finish`), so they see the freshly updated discriminator.
pub struct GeneratorForward {
    tape: Tape,
    dirs: [DirectionNodes; 2],
    flags: AblationFlags,
}

pub fn build_generator_forward(
    model: &AdGanModel,
    x1: &Tensor,
    x2: &Tensor,
    flags: &AblationFlags,
) -> GeneratorForward {
    assert_batch(x1);
    assert_batch(x2);
    let mut tape = Tape::new();
    // The decoder is a static content-reconstruction function inside the
    // cross-domain terms whenever aligned training is on.
    let frozen_dec = flags.aligned_training;

    let mut dirs = Vec::with_capacity(2);
    for (xi, di) in [(x1, 0usize), (x2, 1usize)] {
        let dj = 1 - di;
        let n = xi.dims4().0;
        let x = tape.input(xi.clone());
        let si = model.style_nodes(&mut tape, &label_for(di).rows(n));
        let sj = model.style_nodes(&mut tape, &label_for(dj).rows(n));
        let enc_si = flags.adain_in_encoder.then_some(&si);
        let enc_sj = flags.adain_in_encoder.then_some(&sj);

        let content = model.encode_nodes(&mut tape, x, enc_si, false);
        // Reconstructions always exist: they are the discriminator's real
        // class even when the reconstruction loss term is ablated away.
        let recon = model.decode_nodes(&mut tape, content, &si, false);
        let fake = model.decode_nodes(&mut tape, content, &sj, frozen_dec);

        let (mut c_re, mut cycled) = (None, None);
        if flags.use_ctr || flags.use_cyc {
            let re = model.encode_nodes(&mut tape, fake, enc_sj, false);
            c_re = Some(re);
            if flags.use_cyc {
                cycled = Some(model.decode_nodes(&mut tape, re, &si, frozen_dec));
            }
        }
        dirs.push(DirectionNodes {
            x,
            content,
            recon,
            fake,
            c_re,
            cycled,
        });
    }
    let dirs: [DirectionNodes; 2] = match dirs.try_into() {
        Ok(d) => d,
        Err(_) => unreachable!("two directions"),
    };
    GeneratorForward {
        tape,
        dirs,
        flags: *flags,
    }
}

impl GeneratorForward {
    /// Detached copies of the images the discriminator trains on.
    pub fn detached_outputs(&self) -> DetachedOutputs {
        DetachedOutputs {
            recon: [
                self.tape.value(self.dirs[0].recon).clone(),
                self.tape.value(self.dirs[1].recon).clone(),
            ],
            fake_into: [
                self.tape.value(self.dirs[1].fake).clone(),
                self.tape.value(self.dirs[0].fake).clone(),
            ],
        }
    }

    /// Append the adversarial heads and loss terms, producing the full
    /// generator objective. Called after the discriminator update so the
    /// generator trains against the current discriminator.
    pub fn finish(
        mut self,
        model: &AdGanModel,
        weights: &LossWeights,
        kind: AdvLossKind,
    ) -> GeneratorGraph {
        let flags = self.flags;
        let tape = &mut self.tape;
        let mut rec_terms = Vec::new();
        let mut adv_terms = Vec::new();
        let mut ctr_terms = Vec::new();
        let mut cyc_terms = Vec::new();

        for di in 0..2 {
            let dj = 1 - di;
            let d = &self.dirs[di];
            if flags.use_rec {
                rec_terms.push(tape.l1(d.recon, d.x));
            }
            let logits = model
                .discriminate_nodes(tape, d.fake, dj, true)
                .expect("branch in range");
            adv_terms.push(adv_term(tape, logits, true, kind));
            if flags.use_ctr {
                ctr_terms.push(tape.l1(d.c_re.expect("built with ctr"), d.content));
            }
            if flags.use_cyc {
                cyc_terms.push(tape.l1(d.cycled.expect("built with cyc"), d.x));
            }
        }

        let mean_of = |tape: &mut Tape, terms: &[NodeId]| -> Option<NodeId> {
            if terms.is_empty() {
                return None;
            }
            let w = 1.0 / terms.len() as f32;
            Some(tape.weighted_sum(terms.iter().map(|&t| (t, w)).collect()))
        };

        let rec = mean_of(tape, &rec_terms);
        let adv_g = mean_of(tape, &adv_terms).expect("adversarial term always built");
        let ctr = mean_of(tape, &ctr_terms);
        let cyc = mean_of(tape, &cyc_terms);

        let mut total_terms = vec![(adv_g, 1.0f32)];
        if let Some(r) = rec {
            total_terms.push((r, weights.lambda_rec as f32));
        }
        if let Some(c) = cyc {
            total_terms.push((c, weights.lambda_cyc as f32));
        }
        if let Some(c) = ctr {
            total_terms.push((c, weights.lambda_ctr as f32));
        }
        let total = tape.weighted_sum(total_terms);

        let val = |tape: &Tape, id: Option<NodeId>| {
            id.map(|i| tape.value(i).item() as f64).unwrap_or(0.0)
        };
        let breakdown = LossBreakdown {
            rec: val(tape, rec),
            adv_d: 0.0,
            adv_g: tape.value(adv_g).item() as f64,
            ctr: val(tape, ctr),
            cyc: val(tape, cyc),
            total: tape.value(total).item() as f64,
        };
        GeneratorGraph {
            tape: self.tape,
            total,
            breakdown,
        }
    }
}

pub fn build_generator_loss(
    model: &AdGanModel,
    x1: &Tensor,
    x2: &Tensor,
    weights: &LossWeights,
    flags: &AblationFlags,
    kind: AdvLossKind,
) -> GeneratorGraph {
    build_generator_forward(model, x1, x2, flags).finish(model, weights, kind)
}

// ---- value-level loss evaluations (single direction, no training) ----

fn single_styles(model: &AdGanModel, tape: &mut Tape, d: &DomainLabel, n: usize) -> StyleNodes {
    model.style_nodes(tape, &d.rows(n))
}

/// Same-domain image reconstruction error (L1).
pub fn loss_rec(model: &AdGanModel, x: &Tensor, d: &DomainLabel) -> f64 {
    assert_batch(x);
    let n = x.dims4().0;
    let mut tape = Tape::new();
    let xn = tape.input(x.clone());
    let s = single_styles(model, &mut tape, d, n);
    let c = model.encode_nodes(&mut tape, xn, Some(&s), true);
    let y = model.decode_nodes(&mut tape, c, &s, true);
    let l = tape.l1(y, xn);
    tape.value(l).item() as f64
}

/// Discriminator-side adversarial loss for one direction: branch
/// `domain_i` sees the reconstruction of `x_i` as real and the fake
/// generated from `x_j` into domain i as fake (both detached).
pub fn loss_adv_d(
    model: &AdGanModel,
    x_i: &Tensor,
    x_j: &Tensor,
    domain_i: usize,
    kind: AdvLossKind,
) -> f64 {
    assert_batch(x_i);
    assert_batch(x_j);
    let (di, dj) = (label_for(domain_i), label_for(1 - domain_i));
    let mut tape = Tape::new();
    let xi = tape.input(x_i.clone());
    let xj = tape.input(x_j.clone());
    let si = single_styles(model, &mut tape, &di, x_i.dims4().0);
    let sj = single_styles(model, &mut tape, &dj, x_j.dims4().0);
    let si_for_j = single_styles(model, &mut tape, &di, x_j.dims4().0);
    let ci = model.encode_nodes(&mut tape, xi, Some(&si), true);
    let cj = model.encode_nodes(&mut tape, xj, Some(&sj), true);
    let recon = model.decode_nodes(&mut tape, ci, &si, true);
    let fake = model.decode_nodes(&mut tape, cj, &si_for_j, true);
    let lr = model
        .discriminate_nodes(&mut tape, recon, domain_i, true)
        .expect("branch");
    let lf = model
        .discriminate_nodes(&mut tape, fake, domain_i, true)
        .expect("branch");
    let tr = adv_term(&mut tape, lr, true, kind);
    let tf = adv_term(&mut tape, lf, false, kind);
    let root = tape.weighted_sum(vec![(tr, 0.5), (tf, 0.5)]);
    tape.value(root).item() as f64
}

/// Generator-side adversarial loss (non-saturating): make the fake
/// generated from `x_j` into domain i score as real on branch i.
pub fn loss_adv_g(model: &AdGanModel, x_j: &Tensor, domain_i: usize, kind: AdvLossKind) -> f64 {
    assert_batch(x_j);
    let n = x_j.dims4().0;
    let (di, dj) = (label_for(domain_i), label_for(1 - domain_i));
    let mut tape = Tape::new();
    let xj = tape.input(x_j.clone());
    let sj = single_styles(model, &mut tape, &dj, n);
    let si = single_styles(model, &mut tape, &di, n);
    let cj = model.encode_nodes(&mut tape, xj, Some(&sj), true);
    let fake = model.decode_nodes(&mut tape, cj, &si, true);
    let logits = model
        .discriminate_nodes(&mut tape, fake, domain_i, true)
        .expect("branch");
    let t = adv_term(&mut tape, logits, true, kind);
    tape.value(t).item() as f64
}

/// Content reconstruction error: re-encode the cross-domain fake and
/// compare with the original content map (L1).
pub fn loss_ctr(model: &AdGanModel, x_i: &Tensor, domain_i: usize) -> f64 {
    assert_batch(x_i);
    let n = x_i.dims4().0;
    let (di, dj) = (label_for(domain_i), label_for(1 - domain_i));
    let mut tape = Tape::new();
    let xi = tape.input(x_i.clone());
    let si = single_styles(model, &mut tape, &di, n);
    let sj = single_styles(model, &mut tape, &dj, n);
    let ci = model.encode_nodes(&mut tape, xi, Some(&si), true);
    let fake = model.decode_nodes(&mut tape, ci, &sj, true);
    let c_re = model.encode_nodes(&mut tape, fake, Some(&sj), true);
    let l = tape.l1(c_re, ci);
    tape.value(l).item() as f64
}

/// Cycle consistency error: translate out and back, compare with the input.
pub fn loss_cyc(model: &AdGanModel, x_i: &Tensor, domain_i: usize) -> f64 {
    assert_batch(x_i);
    let n = x_i.dims4().0;
    let (di, dj) = (label_for(domain_i), label_for(1 - domain_i));
    let mut tape = Tape::new();
    let xi = tape.input(x_i.clone());
    let si = single_styles(model, &mut tape, &di, n);
    let sj = single_styles(model, &mut tape, &dj, n);
    let ci = model.encode_nodes(&mut tape, xi, Some(&si), true);
    let fake = model.decode_nodes(&mut tape, ci, &sj, true);
    let c_re = model.encode_nodes(&mut tape, fake, Some(&sj), true);
    let back = model.decode_nodes(&mut tape, c_re, &si, true);
    let l = tape.l1(back, xi);
    tape.value(l).item() as f64
}
