//! Reverse-mode automatic differentiation over scalars.
//!
//! A [`Tape`] records every operation on taped [`Var`]s; [`Tape::backward`]
//! propagates adjoints from a root back to the leaves. Everything numeric in
//! the crate is generic over [`Scalar`], which `f64` and `Var` both implement.

mod gradcheck;
mod scalar;
mod tape;

pub use gradcheck::{grad_check, GradCheck};
pub use scalar::Scalar;
pub use tape::{apply_primitive, Gradients, NodeKind, Primitive, Tape, Var};
