use std::ops::Index;
use std::sync::atomic::{AtomicU64, Ordering};

use super::{unary_derivatives, Algebra, AutodiffError, OpKind};

static NEXT_RECORD_ID: AtomicU64 = AtomicU64::new(1);

pub type NodeId = usize;

/// `[value, tangent, tangent2]` of a node.
type Triple = [f64; 3];
/// Local partials of an output triple with respect to one operand triple,
/// indexed `[output channel][operand channel]`.
type Partials = [[f64; 3]; 3];

const NO_PARTIALS: Partials = [[0.0; 3]; 3];

/// A value recorded on a [`ComputationRecord`], optionally carrying a first
/// and second directional tangent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffValue {
    pub value: f64,
    pub tangent: Option<f64>,
    pub tangent2: Option<f64>,
    record: u64,
    node: NodeId,
}

impl DiffValue {
    pub fn node_id(&self) -> NodeId {
        self.node
    }

    pub fn record_id(&self) -> u64 {
        self.record
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum NodeKind {
    Parameter(usize),
    Input,
    Constant,
    Op(OpKind),
    /// Promotes tangent channel `c` of the operand to a plain value.
    Channel(usize),
}

#[derive(Debug, Clone)]
struct Node {
    kind: NodeKind,
    inputs: [NodeId; 2],
    arity: usize,
    partials: [Partials; 2],
    value: Triple,
    /// 0: value only, 1: value and tangent, 2: value and both tangents.
    order: u8,
}

/// Append-only record of a differentiable computation.
///
/// Nodes are stored in creation order, so every node's operands precede it.
#[derive(Debug, Clone)]
pub struct ComputationRecord {
    id: u64,
    nodes: Vec<Node>,
    parameter_nodes: Vec<Option<NodeId>>,
    outputs: Vec<NodeId>,
}

/// Gradient of a scalar output with respect to every parameter of a record,
/// in canonical parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector {
    entries: Vec<f64>,
}

impl GradientVector {
    pub fn zeros(len: usize) -> Self {
        Self {
            entries: vec![0.0; len],
        }
    }

    pub fn from_vec(entries: Vec<f64>) -> Self {
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.entries
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.entries
    }
}

impl Index<usize> for GradientVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.entries[i]
    }
}

impl ComputationRecord {
    /// A record whose gradients have `parameter_count` entries.
    pub fn new(parameter_count: usize) -> Self {
        Self {
            id: NEXT_RECORD_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            parameter_nodes: vec![None; parameter_count],
            outputs: Vec::new(),
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn parameter_count(&self) -> usize {
        self.parameter_nodes.len()
    }

    pub fn outputs(&self) -> &[NodeId] {
        &self.outputs
    }

    pub fn mark_output(&mut self, v: &DiffValue) -> Result<(), AutodiffError> {
        self.check(v)?;
        self.outputs.push(v.node);
        Ok(())
    }

    /// A leaf input such as a coordinate, optionally seeded with tangents.
    pub fn input(&mut self, value: f64, tangent: Option<f64>, tangent2: Option<f64>) -> DiffValue {
        let order = match (tangent, tangent2) {
            (_, Some(_)) => 2,
            (Some(_), None) => 1,
            (None, None) => 0,
        };
        let triple = [value, tangent.unwrap_or(0.0), tangent2.unwrap_or(0.0)];
        self.push_leaf(NodeKind::Input, triple, order)
    }

    pub fn constant(&mut self, value: f64) -> DiffValue {
        self.push_leaf(NodeKind::Constant, [value, 0.0, 0.0], 0)
    }

    /// The leaf for parameter `index`. Repeated calls return the same node.
    pub fn param(&mut self, index: usize, value: f64) -> Result<DiffValue, AutodiffError> {
        let count = self.parameter_nodes.len();
        let slot = *self
            .parameter_nodes
            .get(index)
            .ok_or(AutodiffError::ParameterIndex { index, count })?;
        if let Some(node) = slot {
            return Ok(self.handle(node));
        }
        let v = self.push_leaf(NodeKind::Parameter(index), [value, 0.0, 0.0], 0);
        self.parameter_nodes[index] = Some(v.node);
        Ok(v)
    }

    /// Records `kind` applied to `inputs`, propagating tangents to second
    /// order by the chain rule.
    pub fn record_op(&mut self, kind: OpKind, inputs: &[&DiffValue]) -> Result<DiffValue, AutodiffError> {
        kind.check_arity(inputs.len())?;
        for v in inputs {
            self.check(v)?;
        }
        let a = self.nodes[inputs[0].node].value;
        let b = inputs.get(1).map(|v| self.nodes[v.node].value);
        let (value, partials) = jet_op(kind, a, b)?;
        let order = inputs.iter().map(|v| self.nodes[v.node].order).max().unwrap_or(0);
        let mut operands = [0; 2];
        for (slot, v) in operands.iter_mut().zip(inputs) {
            *slot = v.node;
        }
        Ok(self.push(Node {
            kind: NodeKind::Op(kind),
            inputs: operands,
            arity: inputs.len(),
            partials,
            value: mask(value, order),
            order,
        }))
    }

    /// The first tangent of `v` as a value in its own right, so that
    /// expressions in derivatives stay differentiable in the parameters.
    pub fn tangent_of(&mut self, v: &DiffValue) -> Result<DiffValue, AutodiffError> {
        self.channel(v, 1)
    }

    pub fn second_tangent_of(&mut self, v: &DiffValue) -> Result<DiffValue, AutodiffError> {
        self.channel(v, 2)
    }

    fn channel(&mut self, v: &DiffValue, c: usize) -> Result<DiffValue, AutodiffError> {
        self.check(v)?;
        let source = &self.nodes[v.node];
        let mut partials = [NO_PARTIALS; 2];
        partials[0][0][c] = 1.0;
        let value = [source.value[c], 0.0, 0.0];
        Ok(self.push(Node {
            kind: NodeKind::Channel(c),
            inputs: [v.node, 0],
            arity: 1,
            partials,
            value,
            order: 0,
        }))
    }

    /// Reverse pass from the scalar node `output`: the derivative of its value
    /// with respect to every parameter leaf. Adjoints accumulate over fan-out;
    /// inputs and constants are ignored.
    pub fn backward(&self, output: NodeId) -> Result<GradientVector, AutodiffError> {
        if output >= self.nodes.len() {
            return Err(AutodiffError::UnknownNode(output));
        }
        let mut adjoint = vec![[0.0f64; 3]; output + 1];
        adjoint[output][0] = 1.0;
        let mut grad = GradientVector::zeros(self.parameter_nodes.len());
        for i in (0..=output).rev() {
            let adj = adjoint[i];
            if adj == [0.0; 3] {
                continue;
            }
            let node = &self.nodes[i];
            if let NodeKind::Parameter(index) = node.kind {
                grad.entries[index] += adj[0];
                continue;
            }
            for k in 0..node.arity {
                let target = &mut adjoint[node.inputs[k]];
                let partials = &node.partials[k];
                for (c_out, row) in partials.iter().enumerate() {
                    if adj[c_out] == 0.0 {
                        continue;
                    }
                    for (c_in, p) in row.iter().enumerate() {
                        target[c_in] += adj[c_out] * p;
                    }
                }
            }
        }
        Ok(grad)
    }

    /// Recomputes every node from the stored leaves, in record order.
    pub fn replay(&self) -> Result<Vec<Triple>, AutodiffError> {
        self.replay_inner(None)
    }

    /// Recomputes every node with the parameter leaves replaced by `parameters`.
    pub fn replay_with_parameters(&self, parameters: &[f64]) -> Result<Vec<Triple>, AutodiffError> {
        if parameters.len() != self.parameter_nodes.len() {
            return Err(AutodiffError::ParameterIndex {
                index: parameters.len(),
                count: self.parameter_nodes.len(),
            });
        }
        self.replay_inner(Some(parameters))
    }

    /// Stored values of every node, for comparison against [`Self::replay`].
    pub fn values(&self) -> Vec<Triple> {
        self.nodes.iter().map(|n| n.value).collect()
    }

    fn replay_inner(&self, parameters: Option<&[f64]>) -> Result<Vec<Triple>, AutodiffError> {
        let mut values: Vec<Triple> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match node.kind {
                NodeKind::Parameter(index) => match parameters {
                    Some(p) => [p[index], 0.0, 0.0],
                    None => node.value,
                },
                NodeKind::Input | NodeKind::Constant => node.value,
                NodeKind::Channel(c) => [values[node.inputs[0]][c], 0.0, 0.0],
                NodeKind::Op(kind) => {
                    let a = values[node.inputs[0]];
                    let b = (node.arity == 2).then(|| values[node.inputs[1]]);
                    mask(jet_op(kind, a, b)?.0, node.order)
                }
            };
            values.push(v);
        }
        Ok(values)
    }

    fn push_leaf(&mut self, kind: NodeKind, value: Triple, order: u8) -> DiffValue {
        self.push(Node {
            kind,
            inputs: [0; 2],
            arity: 0,
            partials: [NO_PARTIALS; 2],
            value,
            order,
        })
    }

    fn push(&mut self, node: Node) -> DiffValue {
        self.nodes.push(node);
        self.handle(self.nodes.len() - 1)
    }

    fn handle(&self, node: NodeId) -> DiffValue {
        let n = &self.nodes[node];
        DiffValue {
            value: n.value[0],
            tangent: (n.order >= 1).then_some(n.value[1]),
            tangent2: (n.order >= 2).then_some(n.value[2]),
            record: self.id,
            node,
        }
    }

    fn check(&self, v: &DiffValue) -> Result<(), AutodiffError> {
        if v.record != self.id {
            return Err(AutodiffError::MixedRecords {
                expected: self.id,
                found: v.record,
            });
        }
        if v.node >= self.nodes.len() {
            return Err(AutodiffError::UnknownNode(v.node));
        }
        Ok(())
    }
}

fn mask(mut value: Triple, order: u8) -> Triple {
    if order < 2 {
        value[2] = 0.0;
    }
    if order < 1 {
        value[1] = 0.0;
    }
    value
}

fn unary_jet(d: [f64; 4], a: Triple) -> (Triple, Partials) {
    let value = [d[0], d[1] * a[1], d[2] * a[1] * a[1] + d[1] * a[2]];
    let partials = [
        [d[1], 0.0, 0.0],
        [d[2] * a[1], d[1], 0.0],
        [d[3] * a[1] * a[1] + d[2] * a[2], 2.0 * d[2] * a[1], d[1]],
    ];
    (value, partials)
}

/// Product-rule partials of `a * b` with respect to `a`.
fn product_partials(b: Triple) -> Partials {
    [[b[0], 0.0, 0.0], [b[1], b[0], 0.0], [b[2], 2.0 * b[1], b[0]]]
}

fn compose(outer: &Partials, inner: &Partials) -> Partials {
    let mut out = NO_PARTIALS;
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| outer[i][k] * inner[k][j]).sum();
        }
    }
    out
}

fn jet_op(kind: OpKind, a: Triple, b: Option<Triple>) -> Result<(Triple, [Partials; 2]), AutodiffError> {
    const I: Partials = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    const MINUS_I: Partials = [[-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]];
    let b = || b.unwrap_or([0.0; 3]);
    Ok(match kind {
        OpKind::Add => {
            let b = b();
            ([a[0] + b[0], a[1] + b[1], a[2] + b[2]], [I, I])
        }
        OpKind::Sub => {
            let b = b();
            ([a[0] - b[0], a[1] - b[1], a[2] - b[2]], [I, MINUS_I])
        }
        OpKind::Mul => {
            let b = b();
            let value = [
                a[0] * b[0],
                a[1] * b[0] + a[0] * b[1],
                a[2] * b[0] + 2.0 * a[1] * b[1] + a[0] * b[2],
            ];
            (value, [product_partials(b), product_partials(a)])
        }
        OpKind::Div => {
            let b = b();
            if b[0] == 0.0 {
                return Err(AutodiffError::DivisionByZero);
            }
            let (r, r_partials) = unary_jet(unary_derivatives(OpKind::PowInt(-1), b[0])?, b);
            let value = [
                a[0] / b[0],
                a[1] * r[0] + a[0] * r[1],
                a[2] * r[0] + 2.0 * a[1] * r[1] + a[0] * r[2],
            ];
            let wrt_b = compose(&product_partials(a), &r_partials);
            (value, [product_partials(r), wrt_b])
        }
        OpKind::Neg => ([-a[0], -a[1], -a[2]], [MINUS_I, NO_PARTIALS]),
        unary => {
            let (value, partials) = unary_jet(unary_derivatives(unary, a[0])?, a);
            (value, [partials, NO_PARTIALS])
        }
    })
}

impl Algebra for ComputationRecord {
    type Value = DiffValue;

    fn constant(&mut self, c: f64) -> DiffValue {
        ComputationRecord::constant(self, c)
    }

    fn parameter(&mut self, index: usize, value: f64) -> Result<DiffValue, AutodiffError> {
        self.param(index, value)
    }

    fn apply(&mut self, op: OpKind, args: &[&DiffValue]) -> Result<DiffValue, AutodiffError> {
        self.record_op(op, args)
    }

    fn value_of(&self, v: &DiffValue) -> f64 {
        v.value
    }
}
