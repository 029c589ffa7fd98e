use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};

/// Scalar primitives that can be recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Primitive {
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Exp,
    Log,
    Pow,
    Sqrt,
    Tanh,
    Sigmoid,
    Softplus,
    Relu,
    Max,
    Min,
    Abs,
}

impl Primitive {
    pub fn arity(self) -> usize {
        use Primitive::*;
        match self {
            Add | Sub | Mul | Div | Pow | Max | Min => 2,
            Neg | Exp | Log | Sqrt | Tanh | Sigmoid | Softplus | Relu | Abs => 1,
        }
    }

    pub fn name(self) -> &'static str {
        use Primitive::*;
        match self {
            Add => "add",
            Sub => "sub",
            Mul => "mul",
            Div => "div",
            Neg => "neg",
            Exp => "exp",
            Log => "log",
            Pow => "pow",
            Sqrt => "sqrt",
            Tanh => "tanh",
            Sigmoid => "sigmoid",
            Softplus => "softplus",
            Relu => "relu",
            Max => "max",
            Min => "min",
            Abs => "abs",
        }
    }

    fn check_domain(self, args: &[f64]) -> Result<()> {
        let bad = match self {
            Primitive::Log => args[0] <= 0.0,
            Primitive::Sqrt => args[0] < 0.0,
            Primitive::Div => args[1] == 0.0,
            Primitive::Pow => args[0] < 0.0 && args[1].fract() != 0.0,
            _ => false,
        };
        if bad {
            let value = if self == Primitive::Div { args[1] } else { args[0] };
            return Err(Error::Domain {
                op: self.name(),
                value,
            });
        }
        Ok(())
    }
}

/// What produced a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Leaf,
    Primitive(Primitive),
    Sum,
    Dot,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Value and local partial of a unary primitive.
pub(crate) fn unary(op: Primitive, x: f64) -> (f64, f64) {
    use Primitive::*;
    match op {
        Neg => (-x, -1.0),
        Exp => {
            let v = x.exp();
            (v, v)
        }
        Log => (x.ln(), 1.0 / x),
        Sqrt => {
            let v = x.sqrt();
            (v, 0.5 / v)
        }
        Tanh => {
            let v = x.tanh();
            (v, 1.0 - v * v)
        }
        Sigmoid => {
            let v = sigmoid(x);
            (v, v * (1.0 - v))
        }
        Softplus => (softplus(x), sigmoid(x)),
        Relu => {
            if x > 0.0 {
                (x, 1.0)
            } else {
                (0.0, 0.0)
            }
        }
        Abs => {
            let d = if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            };
            (x.abs(), d)
        }
        Add | Sub | Mul | Div | Pow | Max | Min => unreachable!("{op:?} is binary"),
    }
}

/// Value and local partials of a binary primitive.
pub(crate) fn binary(op: Primitive, x: f64, y: f64) -> (f64, f64, f64) {
    use Primitive::*;
    match op {
        Add => (x + y, 1.0, 1.0),
        Sub => (x - y, 1.0, -1.0),
        Mul => (x * y, y, x),
        Div => {
            let v = x / y;
            (v, 1.0 / y, -v / y)
        }
        Pow => {
            let v = x.powf(y);
            let dx = if y == 0.0 { 0.0 } else { y * x.powf(y - 1.0) };
            let dy = if x > 0.0 { v * x.ln() } else { 0.0 };
            (v, dx, dy)
        }
        // ties go to the first argument
        Max => {
            if x >= y {
                (x, 1.0, 0.0)
            } else {
                (y, 0.0, 1.0)
            }
        }
        Min => {
            if x <= y {
                (x, 1.0, 0.0)
            } else {
                (y, 0.0, 1.0)
            }
        }
        _ => unreachable!("{op:?} is unary"),
    }
}

#[derive(Default)]
struct TapeData {
    kinds: Vec<NodeKind>,
    values: Vec<f64>,
    edge_start: Vec<u32>,
    parents: Vec<u32>,
    partials: Vec<f64>,
    leaves: usize,
}

impl TapeData {
    fn push(&mut self, kind: NodeKind, value: f64) -> u32 {
        let idx = self.values.len() as u32;
        self.kinds.push(kind);
        self.values.push(value);
        self.edge_start.push(self.parents.len() as u32);
        idx
    }

    fn edge(&mut self, parent: u32, partial: f64) {
        self.parents.push(parent);
        self.partials.push(partial);
    }

    fn edges(&self, node: usize) -> std::ops::Range<usize> {
        let start = self.edge_start[node] as usize;
        let end = self
            .edge_start
            .get(node + 1)
            .map_or(self.parents.len(), |&e| e as usize);
        start..end
    }
}

/// Append-only record of scalar operations for reverse-mode differentiation.
///
/// Nodes are stored in creation order, so parents always precede children and
/// the reverse sweep is a single pass from the root downwards. Call
/// [`Tape::reset`] between optimizer iterations to reuse the allocations.
#[derive(Default)]
pub struct Tape {
    data: RefCell<TapeData>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = self.data.borrow();
        f.debug_struct("Tape")
            .field("nodes", &d.values.len())
            .field("leaves", &d.leaves)
            .field("edges", &d.parents.len())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Creates an input (leaf) variable.
    pub fn var(&self, value: f64) -> Var<'_> {
        let mut d = self.data.borrow_mut();
        let index = d.push(NodeKind::Leaf, value);
        d.leaves += 1;
        Var {
            tape: Some(self),
            index,
            value,
        }
    }

    pub fn vars(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.var(v)).collect()
    }

    /// Total number of recorded nodes, leaves included.
    pub fn len(&self) -> usize {
        self.data.borrow().values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_leaves(&self) -> usize {
        self.data.borrow().leaves
    }

    /// Drops every node while keeping the allocations.
    pub fn reset(&mut self) {
        let d = self.data.get_mut();
        d.kinds.clear();
        d.values.clear();
        d.edge_start.clear();
        d.parents.clear();
        d.partials.clear();
        d.leaves = 0;
    }

    pub fn kind(&self, node: usize) -> NodeKind {
        self.data.borrow().kinds[node]
    }

    /// `(parent, local partial)` pairs recorded for `node`.
    pub fn partials(&self, node: usize) -> Vec<(usize, f64)> {
        let d = self.data.borrow();
        d.edges(node)
            .map(|e| (d.parents[e] as usize, d.partials[e]))
            .collect()
    }

    fn owns(&self, v: &Var<'_>) -> bool {
        v.tape.is_some_and(|t| std::ptr::eq(t, self))
    }

    /// Reverse sweep from `root`, seeding its adjoint with 1.
    pub fn backward(&self, root: Var<'_>) -> Result<Gradients> {
        let d = self.data.borrow();
        let mut adjoints = vec![0.0; d.values.len()];
        if root.tape.is_some() {
            if !self.owns(&root) {
                return Err(Error::TapeMismatch);
            }
            if !root.value.is_finite() {
                return Err(Error::NonFinite(format!("root value {}", root.value)));
            }
            adjoints[root.index as usize] = 1.0;
            sweep(&d, &mut adjoints, root.index as usize);
        }
        let leaf = d.kinds.iter().map(|k| *k == NodeKind::Leaf).collect::<Vec<_>>();
        if let Some(i) = adjoints
            .iter()
            .zip(&leaf)
            .position(|(a, l)| *l && !a.is_finite())
        {
            return Err(Error::NonFinite(format!("adjoint of leaf node {i}")));
        }
        Ok(Gradients { adjoints, leaf })
    }

}

fn sweep(d: &TapeData, adjoints: &mut [f64], root: usize) {
    for node in (0..=root).rev() {
        let a = adjoints[node];
        if a == 0.0 {
            continue;
        }
        for e in d.edges(node) {
            adjoints[d.parents[e] as usize] += a * d.partials[e];
        }
    }
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    adjoints: Vec<f64>,
    leaf: Vec<bool>,
}

impl Gradients {
    /// Gradient of the root with respect to `v`; zero for constants.
    pub fn wrt(&self, v: &Var<'_>) -> f64 {
        match v.tape {
            Some(_) => self.adjoints.get(v.index as usize).copied().unwrap_or(0.0),
            None => 0.0,
        }
    }

    pub fn wrt_all(&self, vs: &[Var<'_>]) -> Vec<f64> {
        vs.iter().map(|v| self.wrt(v)).collect()
    }

    pub fn adjoint(&self, node: usize) -> f64 {
        self.adjoints[node]
    }

    /// Gradients restricted to leaf nodes, keyed by node id.
    pub fn leaf_gradients(&self) -> BTreeMap<usize, f64> {
        self.adjoints
            .iter()
            .zip(&self.leaf)
            .enumerate()
            .filter(|(_, (_, l))| **l)
            .map(|(i, (a, _))| (i, *a))
            .collect()
    }
}

/// A scalar that may be recorded on a [`Tape`].
///
/// A `Var` without a tape is a constant: operations among constants are
/// evaluated eagerly and never recorded.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: Option<&'t Tape>,
    index: u32,
    value: f64,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.tape {
            Some(_) => write!(f, "Var(#{}: {})", self.index, self.value),
            None => write!(f, "Const({})", self.value),
        }
    }
}

impl<'t> Var<'t> {
    pub fn constant(value: f64) -> Self {
        Var {
            tape: None,
            index: 0,
            value,
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    /// Node id on the owning tape, `None` for constants.
    pub fn node_id(&self) -> Option<usize> {
        self.tape.map(|_| self.index as usize)
    }

    pub fn is_constant(&self) -> bool {
        self.tape.is_none()
    }

    pub fn tape(&self) -> Option<&'t Tape> {
        self.tape
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.value.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(format!("{self:?}")))
        }
    }

    pub(crate) fn unary_op(self, op: Primitive) -> Self {
        let (value, d) = unary(op, self.value);
        match self.tape {
            None => Var::constant(value),
            Some(t) => {
                let mut data = t.data.borrow_mut();
                let index = data.push(NodeKind::Primitive(op), value);
                data.edge(self.index, d);
                Var {
                    tape: Some(t),
                    index,
                    value,
                }
            }
        }
    }

    pub(crate) fn binary_op(self, op: Primitive, rhs: Self) -> Self {
        let (value, dx, dy) = binary(op, self.value, rhs.value);
        let tape = match (self.tape, rhs.tape) {
            (None, None) => return Var::constant(value),
            (Some(a), Some(b)) => {
                assert!(std::ptr::eq(a, b), "operands belong to different tapes");
                a
            }
            (Some(a), None) | (None, Some(a)) => a,
        };
        let mut data = tape.data.borrow_mut();
        let index = data.push(NodeKind::Primitive(op), value);
        if self.tape.is_some() {
            data.edge(self.index, dx);
        }
        if rhs.tape.is_some() {
            data.edge(rhs.index, dy);
        }
        Var {
            tape: Some(tape),
            index,
            value,
        }
    }

    /// Records `Σ wᵢ·xᵢ` as a single node; `value` must already hold the sum.
    pub(crate) fn weighted_node(
        kind: NodeKind,
        value: f64,
        terms: impl Iterator<Item = (Var<'t>, f64)> + Clone,
    ) -> Self {
        let tape = terms.clone().find_map(|(v, _)| v.tape);
        let Some(tape) = tape else {
            return Var::constant(value);
        };
        let mut data = tape.data.borrow_mut();
        let index = data.push(kind, value);
        for (v, w) in terms {
            if let Some(t) = v.tape {
                assert!(std::ptr::eq(t, tape), "operands belong to different tapes");
                data.edge(v.index, w);
            }
        }
        Var {
            tape: Some(tape),
            index,
            value,
        }
    }
}

/// Applies `op` to `args` with domain and tape checks.
///
/// Operator overloads and the [`Scalar`](super::Scalar) methods record the same
/// nodes without these checks; domain violations there surface as non-finite
/// values instead.
pub fn apply_primitive<'t>(op: Primitive, args: &[Var<'t>]) -> Result<Var<'t>> {
    if args.len() != op.arity() {
        return Err(Error::shape(
            format!("{} argument(s) for {}", op.arity(), op.name()),
            args.len(),
        ));
    }
    let mut tape: Option<&Tape> = None;
    for a in args {
        if let Some(t) = a.tape {
            match tape {
                Some(prev) if !std::ptr::eq(prev, t) => return Err(Error::TapeMismatch),
                _ => tape = Some(t),
            }
        }
    }
    let values: Vec<f64> = args.iter().map(|a| a.value).collect();
    op.check_domain(&values)?;
    Ok(match args {
        [x] => x.unary_op(op),
        [x, y] => x.binary_op(op, *y),
        _ => unreachable!(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mul_records_product_rule_partials() {
        let tape = Tape::new();
        let x = tape.var(3.0);
        let y = tape.var(4.0);
        let z = apply_primitive(Primitive::Mul, &[x, y]).unwrap();
        assert_eq!(z.value(), 12.0);
        assert_eq!(tape.partials(z.node_id().unwrap()), vec![(0, 4.0), (1, 3.0)]);
    }

    #[test]
    fn exp_at_zero() {
        let tape = Tape::new();
        let x = tape.var(0.0);
        let z = apply_primitive(Primitive::Exp, &[x]).unwrap();
        assert_eq!(z.value(), 1.0);
        assert_eq!(tape.partials(1), vec![(0, 1.0)]);
    }

    #[test]
    fn sigmoid_value_and_partial() {
        // σ(0.5) and σ(0.5)(1 − σ(0.5)) from a 50-digit evaluation
        let tape = Tape::new();
        let x = tape.var(0.5);
        let z = apply_primitive(Primitive::Sigmoid, &[x]).unwrap();
        assert!((z.value() - 0.622_459_331_201_854_6).abs() < 1e-15);
        assert!((tape.partials(1)[0].1 - 0.235_003_712_201_594_5).abs() < 1e-15);
    }

    #[test]
    fn domain_errors() {
        let tape = Tape::new();
        let neg = tape.var(-1.0);
        let zero = tape.var(0.0);
        assert!(matches!(
            apply_primitive(Primitive::Log, &[zero]),
            Err(Error::Domain { op: "log", .. })
        ));
        assert!(matches!(
            apply_primitive(Primitive::Sqrt, &[neg]),
            Err(Error::Domain { op: "sqrt", .. })
        ));
        assert!(matches!(
            apply_primitive(Primitive::Div, &[neg, zero]),
            Err(Error::Domain { op: "div", .. })
        ));
        assert!(apply_primitive(Primitive::Sqrt, &[zero]).is_ok());
    }

    #[test]
    fn tape_mismatch_is_reported() {
        let a = Tape::new();
        let b = Tape::new();
        let x = a.var(1.0);
        let y = b.var(2.0);
        assert!(matches!(
            apply_primitive(Primitive::Add, &[x, y]),
            Err(Error::TapeMismatch)
        ));
        assert!(matches!(b.backward(x), Err(Error::TapeMismatch)));
    }

    #[test]
    fn wrong_arity_is_shape_error() {
        let tape = Tape::new();
        let x = tape.var(1.0);
        assert!(apply_primitive(Primitive::Add, &[x]).is_err());
    }

    #[test]
    fn subgradient_conventions() {
        let tape = Tape::new();
        let x = tape.var(0.0);
        let y = tape.var(0.0);
        let a = apply_primitive(Primitive::Abs, &[x]).unwrap();
        let g = tape.backward(a).unwrap();
        assert_eq!(g.wrt(&x), 0.0);
        let m = apply_primitive(Primitive::Max, &[x, y]).unwrap();
        let g = tape.backward(m).unwrap();
        assert_eq!((g.wrt(&x), g.wrt(&y)), (1.0, 0.0));
        let m = apply_primitive(Primitive::Min, &[x, y]).unwrap();
        let g = tape.backward(m).unwrap();
        assert_eq!((g.wrt(&x), g.wrt(&y)), (1.0, 0.0));
    }

    #[test]
    fn constants_are_not_recorded() {
        let tape = Tape::new();
        let c = Var::constant(2.0);
        let d = apply_primitive(Primitive::Exp, &[c]).unwrap();
        assert!(d.is_constant());
        assert!(tape.is_empty());
    }

    #[test]
    fn reset_clears_nodes() {
        let mut tape = Tape::new();
        {
            let x = tape.var(1.0);
            let _ = x.unary_op(Primitive::Exp);
        }
        assert_eq!(tape.len(), 2);
        tape.reset();
        assert_eq!(tape.len(), 0);
        assert_eq!(tape.num_leaves(), 0);
    }

    #[test]
    fn backward_rejects_non_finite_root() {
        let tape = Tape::new();
        let x = tape.var(-1.0);
        let l = x.unary_op(Primitive::Log);
        assert!(matches!(tape.backward(l), Err(Error::NonFinite(_))));
    }
}
