//! Record-then-replay reverse-mode differentiation over dense matrices.
//!
//! Every primitive application appends a node holding its output value.
//! Node ids grow monotonically, so the node vector is already a topological
//! order and `backward` is a single reverse sweep.

use super::matrix::Matrix;
use super::standardize::{column_standardize, StandardizeWarning};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Primitive operation kinds.
#[derive(Clone, Debug, PartialEq)]
pub enum OpKind {
    MatMul,
    Add,
    Sub,
    Hadamard,
    Scale(f64),
    /// `X + 1·b` where `b` is a `1 x cols` row.
    AddRowBias,
    ConcatCols,
    Sigmoid,
    Tanh,
    /// Rectifier with the given negative-side slope.
    LeakyRelu(f64),
    Transpose,
    FrobeniusSq,
    Trace,
    ColumnStandardize,
    /// Row recurrence `m[n] = omega[n] + gate[n] * m[n-1]`, restarting from the
    /// initial row at every multiple of `segment_len`.
    MemoryScan {
        segment_len: usize,
    },
    /// Sum of all entries into a 1x1 value.
    SumAll,
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::MatMul => "matmul",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Hadamard => "hadamard",
            OpKind::Scale(_) => "scale",
            OpKind::AddRowBias => "add_row_bias",
            OpKind::ConcatCols => "concat_cols",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Tanh => "tanh",
            OpKind::LeakyRelu(_) => "leaky_relu",
            OpKind::Transpose => "transpose",
            OpKind::FrobeniusSq => "frobenius_sq",
            OpKind::Trace => "trace",
            OpKind::ColumnStandardize => "column_standardize",
            OpKind::MemoryScan { .. } => "memory_scan",
            OpKind::SumAll => "sum_all",
        }
    }

    fn arity(&self) -> usize {
        match self {
            OpKind::MatMul | OpKind::Add | OpKind::Sub | OpKind::Hadamard | OpKind::AddRowBias | OpKind::ConcatCols => {
                2
            }
            OpKind::MemoryScan { .. } => 3,
            _ => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Role {
    Param,
    Constant,
    Op,
}

#[derive(Clone, Debug)]
enum Cache {
    None,
    /// Per-column norms of the centred input; zero marks a degenerate column.
    ColumnNorms(Vec<f64>),
}

#[derive(Clone, Debug)]
struct Node {
    kind: Option<OpKind>,
    inputs: Vec<Var>,
    value: Matrix,
    cache: Cache,
    role: Role,
    needs_grad: bool,
}

/// Gradients of a scalar loss with respect to the parameter leaves.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `v`, or zeros shaped like `like` when the loss does not depend on it.
    pub fn get_or_zeros(&self, v: Var, like: &Matrix) -> Matrix {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(like.rows(), like.cols()))
    }
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    warnings: Vec<StandardizeWarning>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push_leaf(&mut self, value: Matrix, role: Role) -> Var {
        self.nodes.push(Node {
            kind: None,
            inputs: Vec::new(),
            value,
            cache: Cache::None,
            role,
            needs_grad: role == Role::Param,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push_leaf(value, Role::Param)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push_leaf(value, Role::Constant)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn is_param(&self, v: Var) -> bool {
        self.nodes[v.0].role == Role::Param
    }

    /// Degenerate-column events raised by column standardisation on this tape.
    pub fn warnings(&self) -> &[StandardizeWarning] {
        &self.warnings
    }

    /// Overwrites a leaf value; follow with [`Tape::replay`] to refresh downstream nodes.
    pub fn set_leaf(&mut self, v: Var, value: Matrix) -> Result<()> {
        let node = &mut self.nodes[v.0];
        if node.kind.is_some() {
            return Err(Error::InvalidArgument(format!("node {} is not a leaf", v.0)));
        }
        node.value.check_same(&value, "set_leaf")?;
        node.value = value;
        Ok(())
    }

    /// Records `kind` applied to `inputs` and returns the new node.
    pub fn apply(&mut self, kind: OpKind, inputs: &[Var]) -> Result<Var> {
        if inputs.len() != kind.arity() {
            return Err(Error::Unsupported(format!(
                "{} takes {} inputs, got {}",
                kind.name(),
                kind.arity(),
                inputs.len()
            )));
        }
        if let Some(bad) = inputs.iter().find(|v| v.0 >= self.nodes.len()) {
            return Err(Error::TapeInvariant(format!("unknown input node {}", bad.0)));
        }
        let values: Vec<&Matrix> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
        let (value, cache, warning) = eval(&kind, &values)?;
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        if let Some(columns) = warning {
            self.warnings.push(StandardizeWarning {
                node: self.nodes.len(),
                columns,
            });
        }
        self.nodes.push(Node {
            kind: Some(kind),
            inputs: inputs.to_vec(),
            value,
            cache,
            role: Role::Op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::MatMul, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Sub, &[a, b])
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Hadamard, &[a, b])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        self.apply(OpKind::Scale(s), &[a])
    }

    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        self.apply(OpKind::AddRowBias, &[x, bias])
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::ConcatCols, &[a, b])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Sigmoid, &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Tanh, &[a])
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        self.apply(OpKind::LeakyRelu(slope), &[a])
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Transpose, &[a])
    }

    pub fn frobenius_sq(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::FrobeniusSq, &[a])
    }

    pub fn trace(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::Trace, &[a])
    }

    pub fn standardize(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::ColumnStandardize, &[a])
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        self.apply(OpKind::SumAll, &[a])
    }

    pub fn memory_scan(&mut self, omega: Var, gate: Var, init: Var, segment_len: usize) -> Result<Var> {
        self.apply(OpKind::MemoryScan { segment_len }, &[omega, gate, init])
    }

    /// Recomputes every operation node from the current leaf values and
    /// returns the fresh values in node order.
    pub fn replay(&mut self) -> Result<Vec<Matrix>> {
        self.warnings.clear();
        for idx in 0..self.nodes.len() {
            let Some(kind) = self.nodes[idx].kind.clone() else {
                continue;
            };
            let inputs = self.nodes[idx].inputs.clone();
            if inputs.iter().any(|v| v.0 >= idx) {
                return Err(Error::TapeInvariant(format!("node {idx} precedes one of its inputs")));
            }
            let values: Vec<&Matrix> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            let (value, cache, warning) = eval(&kind, &values)?;
            if let Some(columns) = warning {
                self.warnings.push(StandardizeWarning { node: idx, columns });
            }
            let node = &mut self.nodes[idx];
            node.value = value;
            node.cache = cache;
        }
        Ok(self.nodes.iter().map(|n| n.value.clone()).collect())
    }

    /// Reverse sweep from a scalar `loss`; only parameter leaves get gradients.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let (rows, cols) = self.value(loss).shape();
        if (rows, cols) != (1, 1) {
            return Err(Error::NotScalar { rows, cols });
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::ones(1, 1));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            let Some(kind) = &node.kind else { continue };
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            if node.inputs.iter().any(|v| v.0 >= idx) {
                return Err(Error::TapeInvariant(format!("node {idx} visited before its inputs")));
            }
            let input_grads = self.local_backward(kind, node, &g)?;
            for (input, ig) in node.inputs.iter().zip(input_grads) {
                let Some(ig) = ig else { continue };
                if !self.nodes[input.0].needs_grad {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => acc.add_assign(&ig),
                    slot => *slot = Some(ig),
                }
            }
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.role != Role::Param {
                grads[i] = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn local_backward(&self, kind: &OpKind, node: &Node, g: &Matrix) -> Result<Vec<Option<Matrix>>> {
        let inp = |i: usize| &self.nodes[node.inputs[i].0].value;
        let want = |i: usize| self.wants(node.inputs[i]);
        let y = &node.value;
        Ok(match kind {
            OpKind::MatMul => {
                let da = if want(0) { Some(g.matmul_t(inp(1))?) } else { None };
                let db = if want(1) { Some(inp(0).t_matmul(g)?) } else { None };
                vec![da, db]
            }
            OpKind::Add => vec![Some(g.clone()), Some(g.clone())],
            OpKind::Sub => vec![Some(g.clone()), Some(g.scale(-1.0))],
            OpKind::Hadamard => vec![
                if want(0) { Some(g.hadamard(inp(1))?) } else { None },
                if want(1) { Some(g.hadamard(inp(0))?) } else { None },
            ],
            OpKind::Scale(s) => vec![Some(g.scale(*s))],
            OpKind::AddRowBias => vec![Some(g.clone()), Some(g.column_sums())],
            OpKind::ConcatCols => {
                let left = inp(0).cols();
                vec![Some(g.slice_cols(0, left)), Some(g.slice_cols(left, g.cols() - left))]
            }
            OpKind::Sigmoid => {
                let mut d = g.clone();
                for (o, s) in d.as_mut_slice().iter_mut().zip(y.as_slice()) {
                    *o *= s * (1.0 - s);
                }
                vec![Some(d)]
            }
            OpKind::Tanh => {
                let mut d = g.clone();
                for (o, t) in d.as_mut_slice().iter_mut().zip(y.as_slice()) {
                    *o *= 1.0 - t * t;
                }
                vec![Some(d)]
            }
            OpKind::LeakyRelu(slope) => {
                let mut d = g.clone();
                for (o, x) in d.as_mut_slice().iter_mut().zip(inp(0).as_slice()) {
                    if *x <= 0.0 {
                        *o *= slope;
                    }
                }
                vec![Some(d)]
            }
            OpKind::Transpose => vec![Some(g.transpose())],
            OpKind::FrobeniusSq => vec![Some(inp(0).scale(2.0 * g.scalar()))],
            OpKind::Trace => {
                let n = inp(0).rows();
                vec![Some(Matrix::identity(n).scale(g.scalar()))]
            }
            OpKind::SumAll => {
                let (r, c) = inp(0).shape();
                vec![Some(Matrix::filled(r, c, g.scalar()))]
            }
            OpKind::ColumnStandardize => {
                let Cache::ColumnNorms(norms) = &node.cache else {
                    return Err(Error::TapeInvariant("standardize without cached norms".into()));
                };
                vec![Some(standardize_backward(y, norms, g))]
            }
            OpKind::MemoryScan { segment_len } => {
                let (d_omega, d_gate, d_init) = scan_backward(inp(1), inp(2), y, g, *segment_len);
                vec![Some(d_omega), if want(1) { Some(d_gate) } else { None }, Some(d_init)]
            }
        })
    }
}

fn shape_err(kind: &OpKind, a: &Matrix, b: &Matrix) -> Error {
    Error::Shape {
        op: kind.name(),
        left: a.shape(),
        right: b.shape(),
    }
}

type Evaluated = (Matrix, Cache, Option<Vec<usize>>);

fn eval(kind: &OpKind, x: &[&Matrix]) -> Result<Evaluated> {
    let plain = |m: Matrix| -> Result<Evaluated> { Ok((m, Cache::None, None)) };
    match kind {
        OpKind::MatMul => plain(x[0].matmul(x[1]).map_err(|_| shape_err(kind, x[0], x[1]))?),
        OpKind::Add => plain(x[0].add(x[1]).map_err(|_| shape_err(kind, x[0], x[1]))?),
        OpKind::Sub => plain(x[0].sub(x[1]).map_err(|_| shape_err(kind, x[0], x[1]))?),
        OpKind::Hadamard => plain(x[0].hadamard(x[1]).map_err(|_| shape_err(kind, x[0], x[1]))?),
        OpKind::Scale(s) => plain(x[0].scale(*s)),
        OpKind::AddRowBias => plain(x[0].add_row(x[1])?),
        OpKind::ConcatCols => plain(x[0].concat_cols(x[1])?),
        OpKind::Sigmoid => plain(x[0].map(sigmoid)),
        OpKind::Tanh => plain(x[0].map(f64::tanh)),
        OpKind::LeakyRelu(slope) => plain(x[0].map(|v| if v > 0.0 { v } else { slope * v })),
        OpKind::Transpose => plain(x[0].transpose()),
        OpKind::FrobeniusSq => plain(Matrix::filled(1, 1, x[0].frobenius_sq())),
        OpKind::Trace => plain(Matrix::filled(1, 1, x[0].trace()?)),
        OpKind::SumAll => plain(Matrix::filled(1, 1, x[0].sum())),
        OpKind::ColumnStandardize => {
            let s = column_standardize(x[0]);
            let warn = (!s.zero_columns.is_empty()).then_some(s.zero_columns);
            Ok((s.value, Cache::ColumnNorms(s.column_norms), warn))
        }
        OpKind::MemoryScan { segment_len } => {
            let (omega, gate, init) = (x[0], x[1], x[2]);
            if omega.shape() != gate.shape() {
                return Err(shape_err(kind, omega, gate));
            }
            if init.shape() != (1, omega.cols()) {
                return Err(shape_err(kind, omega, init));
            }
            if *segment_len == 0 {
                return Err(Error::InvalidArgument(
                    "memory scan segment length must be positive".into(),
                ));
            }
            plain(memory_scan_values(omega, gate, init, *segment_len))
        }
    }
}

#[inline]
pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn memory_scan_values(omega: &Matrix, gate: &Matrix, init: &Matrix, segment_len: usize) -> Matrix {
    let (n, f) = omega.shape();
    let mut out = Matrix::zeros(n, f);
    for r in 0..n {
        for c in 0..f {
            let prev = if r % segment_len == 0 {
                init[(0, c)]
            } else {
                out[(r - 1, c)]
            };
            out[(r, c)] = omega[(r, c)] + gate[(r, c)] * prev;
        }
    }
    out
}

fn scan_backward(
    gate: &Matrix,
    init: &Matrix,
    out: &Matrix,
    g: &Matrix,
    segment_len: usize,
) -> (Matrix, Matrix, Matrix) {
    let (n, f) = out.shape();
    let mut d_omega = Matrix::zeros(n, f);
    let mut d_gate = Matrix::zeros(n, f);
    let mut d_init = Matrix::zeros(1, f);
    let mut carry = vec![0.0; f];
    for r in (0..n).rev() {
        let restart = r % segment_len == 0;
        for c in 0..f {
            // carry from row r+1 only flows inside the same segment
            let total = g[(r, c)] + carry[c];
            d_omega[(r, c)] = total;
            let prev = if restart { init[(0, c)] } else { out[(r - 1, c)] };
            d_gate[(r, c)] = total * prev;
            let back = total * gate[(r, c)];
            if restart {
                d_init[(0, c)] += back;
                carry[c] = 0.0;
            } else {
                carry[c] = back;
            }
        }
    }
    (d_omega, d_gate, d_init)
}

fn standardize_backward(y: &Matrix, norms: &[f64], g: &Matrix) -> Matrix {
    let (n, d) = y.shape();
    let mut out = Matrix::zeros(n, d);
    for c in 0..d {
        let norm = norms[c];
        if norm == 0.0 {
            continue;
        }
        let dot: f64 = (0..n).map(|r| y[(r, c)] * g[(r, c)]).sum();
        let mut dc: Vec<f64> = (0..n).map(|r| (g[(r, c)] - y[(r, c)] * dot) / norm).collect();
        let mean = dc.iter().sum::<f64>() / n as f64;
        for v in &mut dc {
            *v -= mean;
        }
        out.set_column(c, &dc);
    }
    out
}
