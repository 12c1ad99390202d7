//! Reverse-mode differentiation over dense matrices, with differentiable
//! forward-mode tangents for Jacobian-based losses.

pub mod adam;
pub mod checkpoint;
pub mod matrix;
pub mod mlp;
pub mod tape;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, NamedNet};
pub use matrix::{gemm, matmul, Matrix};
pub use mlp::{jvp, mlp_eval, mlp_forward, mlp_tangent, Layer, NetSpec, NetVars, ParamStore, Trace};
pub use tape::{leaky_relu, Gradients, Tape, Var, LEAKY_SLOPE};
