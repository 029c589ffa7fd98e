use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::tape::{binary, sigmoid, softplus, unary, NodeKind, Primitive, Var};

/// Arithmetic shared by plain `f64` and taped [`Var`]s.
///
/// Dynamics, integrators and losses are written once against this trait so the
/// same code evaluates a trajectory or records it for differentiation.
pub trait Scalar:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn constant(c: f64) -> Self;
    fn value(&self) -> f64;

    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;
    fn sigmoid(self) -> Self;
    fn softplus(self) -> Self;
    fn relu(self) -> Self;
    fn abs(self) -> Self;
    fn powf(self, p: f64) -> Self;
    fn pow(self, p: Self) -> Self;
    fn max(self, other: Self) -> Self;
    fn min(self, other: Self) -> Self;

    /// Sum as a single recorded node.
    fn sum(xs: &[Self]) -> Self;
    /// Inner product as a single recorded node.
    fn dot(a: &[Self], b: &[Self]) -> Self;
    /// `Σ wᵢ·xᵢ` with constant weights, as a single recorded node.
    fn linear(xs: &[Self], w: &[f64]) -> Self;

    fn is_finite(&self) -> bool {
        self.value().is_finite()
    }

    fn clamp(self, lo: f64, hi: f64) -> Self {
        self.max(Self::constant(lo)).min(Self::constant(hi))
    }
}

fn sum_values(xs: impl Iterator<Item = f64>) -> f64 {
    xs.fold(0.0, |acc, x| acc + x)
}

impl Scalar for f64 {
    fn constant(c: f64) -> Self {
        c
    }
    fn value(&self) -> f64 {
        *self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn sigmoid(self) -> Self {
        sigmoid(self)
    }
    fn softplus(self) -> Self {
        softplus(self)
    }
    fn relu(self) -> Self {
        unary(Primitive::Relu, self).0
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn powf(self, p: f64) -> Self {
        f64::powf(self, p)
    }
    fn pow(self, p: Self) -> Self {
        f64::powf(self, p)
    }
    fn max(self, other: Self) -> Self {
        binary(Primitive::Max, self, other).0
    }
    fn min(self, other: Self) -> Self {
        binary(Primitive::Min, self, other).0
    }
    fn sum(xs: &[Self]) -> Self {
        sum_values(xs.iter().copied())
    }
    fn dot(a: &[Self], b: &[Self]) -> Self {
        assert_eq!(a.len(), b.len(), "dot of unequal lengths");
        sum_values(a.iter().zip(b).map(|(x, y)| x * y))
    }
    fn linear(xs: &[Self], w: &[f64]) -> Self {
        Self::dot(xs, w)
    }
}

impl<'t> Scalar for Var<'t> {
    fn constant(c: f64) -> Self {
        Var::constant(c)
    }
    fn value(&self) -> f64 {
        Var::value(self)
    }
    fn exp(self) -> Self {
        self.unary_op(Primitive::Exp)
    }
    fn ln(self) -> Self {
        self.unary_op(Primitive::Log)
    }
    fn sqrt(self) -> Self {
        self.unary_op(Primitive::Sqrt)
    }
    fn tanh(self) -> Self {
        self.unary_op(Primitive::Tanh)
    }
    fn sigmoid(self) -> Self {
        self.unary_op(Primitive::Sigmoid)
    }
    fn softplus(self) -> Self {
        self.unary_op(Primitive::Softplus)
    }
    fn relu(self) -> Self {
        self.unary_op(Primitive::Relu)
    }
    fn abs(self) -> Self {
        self.unary_op(Primitive::Abs)
    }
    fn powf(self, p: f64) -> Self {
        self.binary_op(Primitive::Pow, Var::constant(p))
    }
    fn pow(self, p: Self) -> Self {
        self.binary_op(Primitive::Pow, p)
    }
    fn max(self, other: Self) -> Self {
        self.binary_op(Primitive::Max, other)
    }
    fn min(self, other: Self) -> Self {
        self.binary_op(Primitive::Min, other)
    }
    fn sum(xs: &[Self]) -> Self {
        let value = sum_values(xs.iter().map(|x| x.value()));
        Var::weighted_node(NodeKind::Sum, value, xs.iter().map(|&x| (x, 1.0)))
    }
    fn dot(a: &[Self], b: &[Self]) -> Self {
        assert_eq!(a.len(), b.len(), "dot of unequal lengths");
        let value = sum_values(a.iter().zip(b).map(|(x, y)| x.value() * y.value()));
        let terms = a
            .iter()
            .zip(b)
            .flat_map(|(&x, &y)| [(x, y.value()), (y, x.value())]);
        Var::weighted_node(NodeKind::Dot, value, terms)
    }
    fn linear(xs: &[Self], w: &[f64]) -> Self {
        assert_eq!(xs.len(), w.len(), "linear combination of unequal lengths");
        let value = sum_values(xs.iter().zip(w).map(|(x, w)| x.value() * w));
        Var::weighted_node(
            NodeKind::Dot,
            value,
            xs.iter().zip(w).map(|(&x, &w)| (x, w)),
        )
    }
}

macro_rules! var_binop {
    ($tr:ident, $method:ident, $prim:expr) => {
        impl<'t> $tr for Var<'t> {
            type Output = Var<'t>;
            fn $method(self, rhs: Var<'t>) -> Var<'t> {
                self.binary_op($prim, rhs)
            }
        }
        impl<'t> $tr<f64> for Var<'t> {
            type Output = Var<'t>;
            fn $method(self, rhs: f64) -> Var<'t> {
                self.binary_op($prim, Var::constant(rhs))
            }
        }
        impl<'t> $tr<Var<'t>> for f64 {
            type Output = Var<'t>;
            fn $method(self, rhs: Var<'t>) -> Var<'t> {
                Var::constant(self).binary_op($prim, rhs)
            }
        }
    };
}

var_binop!(Add, add, Primitive::Add);
var_binop!(Sub, sub, Primitive::Sub);
var_binop!(Mul, mul, Primitive::Mul);
var_binop!(Div, div, Primitive::Div);

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary_op(Primitive::Neg)
    }
}
