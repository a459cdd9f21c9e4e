//! Parameter storage shared by the generator and discriminator.
//!
//! Every learnable tensor lives in one flat `ParamStore`, tagged with the
//! sub-network it belongs to. The training schedule updates groups
//! independently: the decoder group may receive gradients from the image
//! reconstruction loss only, so group membership is what makes the
//! frozen-decoder contract checkable.

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamGroup {
    Encoder,
    Decoder,
    StyleMlp,
    Discriminator,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 4] = [
        ParamGroup::Encoder,
        ParamGroup::Decoder,
        ParamGroup::StyleMlp,
        ParamGroup::Discriminator,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ParamGroup::Encoder => "encoder",
            ParamGroup::Decoder => "decoder",
            ParamGroup::StyleMlp => "style_mlp",
            ParamGroup::Discriminator => "discriminator",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub group: ParamGroup,
    pub value: Tensor,
    pub grad: Tensor,
    /// Adam first-moment state, same shape as `value`.
    pub adam_m: Tensor,
    /// Adam second-moment state, same shape as `value`.
    pub adam_v: Tensor,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, group: ParamGroup, value: Tensor) -> ParamId {
        let shape = value.shape().to_vec();
        self.params.push(Param {
            name: name.into(),
            group,
            value,
            grad: Tensor::zeros(&shape),
            adam_m: Tensor::zeros(&shape),
            adam_v: Tensor::zeros(&shape),
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].grad
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn param_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamId, &mut Param)> {
        self.params
            .iter_mut()
            .enumerate()
            .map(|(i, p)| (ParamId(i), p))
    }

    pub fn ids_in_group(&self, group: ParamGroup) -> Vec<ParamId> {
        self.params
            .iter()
            .enumerate()
            .filter(|(_, p)| p.group == group)
            .map(|(i, _)| ParamId(i))
            .collect()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().fill(0.0);
        }
    }

    /// Snapshot of all values in one group, for delta audits in tests.
    pub fn group_values(&self, group: ParamGroup) -> Vec<(String, Tensor)> {
        self.params
            .iter()
            .filter(|p| p.group == group)
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect()
    }

    /// L2 norm of the gradient of each group, for NaN diagnostics.
    pub fn grad_norms(&self) -> Vec<(&'static str, f64)> {
        ParamGroup::ALL
            .iter()
            .map(|&g| {
                let sq: f64 = self
                    .params
                    .iter()
                    .filter(|p| p.group == g)
                    .flat_map(|p| p.grad.data().iter())
                    .map(|&v| (v as f64) * (v as f64))
                    .sum();
                (g.label(), sq.sqrt())
            })
            .collect()
    }
}
