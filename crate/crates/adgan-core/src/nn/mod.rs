//! Minimal CPU tensor/autodiff stack backing the generator, discriminator
//! and training loop. Deliberately small: exactly the ops the architecture
//! needs, deterministic under thread-parallel execution, gradient-checked
//! against finite differences in the test suite.

pub mod adam;
pub mod conv;
pub mod store;
pub mod tape;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use conv::{Conv2dSpec, Pad};
pub use store::{Param, ParamGroup, ParamId, ParamStore};
pub use tape::{adain_forward, NodeId, Tape, NORM_EPS};
pub use tensor::Tensor;

#[cfg(test)]
mod gradcheck;
