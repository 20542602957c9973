use std::collections::HashMap;

use super::tensor::{ParamId, ParamStore};
use super::GradError;

/// Elementwise nonlinearities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Smooth-L1 (Huber, transition at 1) between a prediction and a target.
pub fn smooth_l1(pred: f64, target: f64) -> f64 {
    let d = pred - target;
    if d.abs() < 1.0 {
        0.5 * d * d
    } else {
        d.abs() - 0.5
    }
}

/// Derivative of [`smooth_l1`] with respect to `pred`.
pub fn smooth_l1_grad(pred: f64, target: f64) -> f64 {
    let d = pred - target;
    if d.abs() < 1.0 {
        d
    } else {
        d.signum()
    }
}

/// Node handle inside a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Constant,
    Pointwise(Activation, Var),
    Affine { w: Var, x: Var, b: Var },
    Hadamard(Var, Var),
    Concat(Var, Var),
    Sum(Vec<Var>),
    Scale(Var, f64),
    Reduce(Var),
    SmoothL1 { pred: Var, target: f64 },
}

#[derive(Debug, Clone)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    // accumulated gradient, leaves only
    grad: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct BindKey {
    param: ParamId,
    row: Option<usize>,
}

/// Tape of applied operations, replayed in reverse by [`Graph::backward`].
///
/// Nodes are appended in application order, so the tape is already a
/// topological order. Parameters from a [`ParamStore`] enter as leaves via
/// [`Graph::param`] / [`Graph::param_row`] and are bound at most once per graph.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    bindings: Vec<(BindKey, Var)>,
    bound: HashMap<BindKey, Var>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op) -> Var {
        let grad = match op {
            Op::Leaf => vec![0.0; value.len()],
            _ => Vec::new(),
        };
        self.nodes.push(Node {
            shape,
            value,
            op,
            grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Differentiable leaf with the given shape and values.
    pub fn leaf(&mut self, shape: Vec<usize>, values: Vec<f64>) -> Result<Var, GradError> {
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(GradError::Length {
                expected,
                found: values.len(),
            });
        }
        Ok(self.push(shape, values, Op::Leaf))
    }

    pub fn vector(&mut self, values: Vec<f64>) -> Var {
        let n = values.len();
        self.push(vec![n], values, Op::Leaf)
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, values: Vec<f64>) -> Var {
        let n = values.len();
        self.push(vec![n], values, Op::Constant)
    }

    pub fn zeros(&mut self, n: usize) -> Var {
        self.constant(vec![0.0; n])
    }

    /// Binds a whole parameter tensor as a leaf.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let key = BindKey {
            param: id,
            row: None,
        };
        if let Some(&v) = self.bound.get(&key) {
            return v;
        }
        let t = store.get(id);
        let var = self.push(t.shape().to_vec(), t.values().to_vec(), Op::Leaf);
        self.bound.insert(key, var);
        self.bindings.push((key, var));
        var
    }

    /// Binds one row of a 2-D parameter tensor as a vector leaf.
    pub fn param_row(&mut self, store: &ParamStore, id: ParamId, row: usize) -> Var {
        let key = BindKey {
            param: id,
            row: Some(row),
        };
        if let Some(&v) = self.bound.get(&key) {
            return v;
        }
        let values = store.get(id).row(row).to_vec();
        let n = values.len();
        let var = self.push(vec![n], values, Op::Leaf);
        self.bound.insert(key, var);
        self.bindings.push((key, var));
        var
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Value of a single-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    /// Accumulated gradient of a leaf (empty for interior nodes).
    pub fn grad(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].grad
    }

    pub fn pointwise(&mut self, kind: Activation, x: Var) -> Var {
        let node = &self.nodes[x.0];
        let value = node.value.iter().map(|&a| kind.apply(a)).collect();
        let shape = node.shape.clone();
        self.push(shape, value, Op::Pointwise(kind, x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.pointwise(Activation::Sigmoid, x)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.pointwise(Activation::Tanh, x)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.pointwise(Activation::Relu, x)
    }

    /// `W x + b` for `W: [m, n]`, `x: [n]`, `b: [m]`.
    pub fn affine(&mut self, w: Var, x: Var, b: Var) -> Result<Var, GradError> {
        let ws = &self.nodes[w.0].shape;
        if ws.len() != 2 {
            return Err(GradError::Dimension {
                op: "affine",
                operand: "W",
                expected: "a matrix".into(),
                found: ws.clone(),
            });
        }
        let (m, n) = (ws[0], ws[1]);
        let xn = &self.nodes[x.0];
        if xn.value.len() != n {
            return Err(GradError::Dimension {
                op: "affine",
                operand: "x",
                expected: format!("[{n}]"),
                found: xn.shape.clone(),
            });
        }
        let bn = &self.nodes[b.0];
        if bn.value.len() != m {
            return Err(GradError::Dimension {
                op: "affine",
                operand: "b",
                expected: format!("[{m}]"),
                found: bn.shape.clone(),
            });
        }
        let wv = &self.nodes[w.0].value;
        let xv = &xn.value;
        let mut out = bn.value.clone();
        for (i, o) in out.iter_mut().enumerate() {
            let row = &wv[i * n..(i + 1) * n];
            *o += row.iter().zip(xv).map(|(a, b)| a * b).sum::<f64>();
        }
        Ok(self.push(vec![m], out, Op::Affine { w, x, b }))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        let (an, bn) = (&self.nodes[a.0], &self.nodes[b.0]);
        if an.shape != bn.shape {
            return Err(GradError::Dimension {
                op: "hadamard",
                operand: "b",
                expected: format!("{:?}", an.shape),
                found: bn.shape.clone(),
            });
        }
        let value = an.value.iter().zip(&bn.value).map(|(x, y)| x * y).collect();
        let shape = an.shape.clone();
        Ok(self.push(shape, value, Op::Hadamard(a, b)))
    }

    /// Concatenation of two vectors.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        for (v, name) in [(a, "a"), (b, "b")] {
            if self.nodes[v.0].shape.len() != 1 {
                return Err(GradError::Dimension {
                    op: "concat",
                    operand: name,
                    expected: "a vector".into(),
                    found: self.nodes[v.0].shape.clone(),
                });
            }
        }
        let mut value = self.nodes[a.0].value.clone();
        value.extend_from_slice(&self.nodes[b.0].value);
        let n = value.len();
        Ok(self.push(vec![n], value, Op::Concat(a, b)))
    }

    /// Elementwise sum of a set of same-shaped vectors; the empty set gives zeros of width `n`.
    pub fn sum_over(&mut self, terms: &[Var], n: usize) -> Result<Var, GradError> {
        if terms.is_empty() {
            return Ok(self.zeros(n));
        }
        let mut value = vec![0.0; n];
        for (i, t) in terms.iter().enumerate() {
            let node = &self.nodes[t.0];
            if node.value.len() != n || node.shape.len() != 1 {
                return Err(GradError::Dimension {
                    op: "sum_over",
                    operand: if i == 0 { "first term" } else { "later term" },
                    expected: format!("[{n}]"),
                    found: node.shape.clone(),
                });
            }
            value.iter_mut().zip(&node.value).for_each(|(a, b)| *a += b);
        }
        Ok(self.push(vec![n], value, Op::Sum(terms.to_vec())))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, GradError> {
        let n = self.nodes[a.0].value.len();
        self.sum_over(&[a, b], n)
    }

    pub fn scale(&mut self, x: Var, alpha: f64) -> Var {
        let node = &self.nodes[x.0];
        let value = node.value.iter().map(|v| v * alpha).collect();
        let shape = node.shape.clone();
        self.push(shape, value, Op::Scale(x, alpha))
    }

    /// Sum of all elements, as a single-element node.
    pub fn reduce_sum(&mut self, x: Var) -> Var {
        let s = self.nodes[x.0].value.iter().sum();
        self.push(vec![1], vec![s], Op::Reduce(x))
    }

    pub fn smooth_l1(&mut self, pred: Var, target: f64) -> Result<Var, GradError> {
        let node = &self.nodes[pred.0];
        if node.value.len() != 1 {
            return Err(GradError::Dimension {
                op: "smooth_l1",
                operand: "pred",
                expected: "[1]".into(),
                found: node.shape.clone(),
            });
        }
        let loss = smooth_l1(node.value[0], target);
        Ok(self.push(vec![1], vec![loss], Op::SmoothL1 { pred, target }))
    }

    /// Reverse sweep from a single-element `loss`, adding into leaf gradients.
    pub fn backward(&mut self, loss: Var) -> Result<(), GradError> {
        let n = self.nodes[loss.0].value.len();
        if n != 1 {
            return Err(GradError::NonScalarLoss {
                shape: self.nodes[loss.0].shape.clone(),
            });
        }
        let mut adj: Vec<Vec<f64>> = vec![Vec::new(); loss.0 + 1];
        adj[loss.0] = vec![1.0];

        for idx in (0..=loss.0).rev() {
            if adj[idx].is_empty() {
                continue;
            }
            let up = std::mem::take(&mut adj[idx]);
            let op = self.nodes[idx].op.clone();
            let node = &self.nodes[idx];
            match &op {
                Op::Leaf => {
                    let g = &mut self.nodes[idx].grad;
                    g.iter_mut().zip(&up).for_each(|(a, b)| *a += b);
                }
                Op::Constant => {}
                Op::Pointwise(kind, x) => {
                    let xv = &self.nodes[x.0].value;
                    let contrib: Vec<f64> = up
                        .iter()
                        .zip(xv)
                        .zip(&node.value)
                        .map(|((u, &xi), &yi)| u * kind.derivative(xi, yi))
                        .collect();
                    accumulate(&mut adj, *x, &contrib);
                }
                Op::Affine { w, x, b } => {
                    let (w, x, b) = (*w, *x, *b);
                    let wv = &self.nodes[w.0].value;
                    let xv = &self.nodes[x.0].value;
                    let (m, k) = (up.len(), xv.len());
                    let mut dw = vec![0.0; m * k];
                    let mut dx = vec![0.0; k];
                    for i in 0..m {
                        let u = up[i];
                        if u == 0.0 {
                            continue;
                        }
                        let row = &wv[i * k..(i + 1) * k];
                        let drow = &mut dw[i * k..(i + 1) * k];
                        for j in 0..k {
                            drow[j] += u * xv[j];
                            dx[j] += u * row[j];
                        }
                    }
                    accumulate(&mut adj, w, &dw);
                    accumulate(&mut adj, x, &dx);
                    accumulate(&mut adj, b, &up);
                }
                Op::Hadamard(a, b) => {
                    let (a, b) = (*a, *b);
                    let da: Vec<f64> = up
                        .iter()
                        .zip(&self.nodes[b.0].value)
                        .map(|(u, v)| u * v)
                        .collect();
                    let db: Vec<f64> = up
                        .iter()
                        .zip(&self.nodes[a.0].value)
                        .map(|(u, v)| u * v)
                        .collect();
                    accumulate(&mut adj, a, &da);
                    accumulate(&mut adj, b, &db);
                }
                Op::Concat(a, b) => {
                    let (a, b) = (*a, *b);
                    let na = self.nodes[a.0].value.len();
                    accumulate(&mut adj, a, &up[..na]);
                    accumulate(&mut adj, b, &up[na..]);
                }
                Op::Sum(terms) => {
                    for &t in terms {
                        accumulate(&mut adj, t, &up);
                    }
                }
                Op::Scale(x, alpha) => {
                    let contrib: Vec<f64> = up.iter().map(|u| u * alpha).collect();
                    accumulate(&mut adj, *x, &contrib);
                }
                Op::Reduce(x) => {
                    let len = self.nodes[x.0].value.len();
                    accumulate(&mut adj, *x, &vec![up[0]; len]);
                }
                Op::SmoothL1 { pred, target } => {
                    let p = self.nodes[pred.0].value[0];
                    accumulate(&mut adj, *pred, &[up[0] * smooth_l1_grad(p, *target)]);
                }
            }
        }
        Ok(())
    }

    /// Adds the gradients of all bound parameter leaves into `store` and clears them.
    pub fn export_grads(&mut self, store: &mut ParamStore) {
        for &(key, var) in &self.bindings {
            let g = std::mem::take(&mut self.nodes[var.0].grad);
            let t = store.get_mut(key.param);
            match key.row {
                None => t
                    .grad_mut()
                    .iter_mut()
                    .zip(&g)
                    .for_each(|(a, b)| *a += b),
                Some(r) => {
                    let cols = g.len();
                    t.grad_mut()[r * cols..(r + 1) * cols]
                        .iter_mut()
                        .zip(&g)
                        .for_each(|(a, b)| *a += b);
                }
            }
            self.nodes[var.0].grad = vec![0.0; g.len()];
        }
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }
}

fn accumulate(adj: &mut [Vec<f64>], v: Var, contrib: &[f64]) {
    let slot = &mut adj[v.0];
    if slot.is_empty() {
        *slot = contrib.to_vec();
    } else {
        slot.iter_mut().zip(contrib).for_each(|(a, b)| *a += b);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcore::Tensor;

    #[test]
    fn pointwise_examples() {
        let mut g = Graph::new();
        let x = g.vector(vec![0.0]);
        let s = g.sigmoid(x);
        assert_eq!(g.value(s), &[0.5]);

        let x = g.vector(vec![-2.0, 3.0]);
        let r = g.relu(x);
        assert_eq!(g.value(r), &[0.0, 3.0]);

        let x = g.vector(vec![1.0]);
        let t = g.tanh(x);
        assert!((g.value(t)[0] - 0.761_594_155_955_764_9).abs() < 1e-15);
    }

    #[test]
    fn affine_examples() {
        let mut g = Graph::new();
        let w = g.leaf(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let x = g.vector(vec![3.0, 4.0]);
        let b = g.vector(vec![0.0, 0.0]);
        let y = g.affine(w, x, b).unwrap();
        assert_eq!(g.value(y), &[3.0, 4.0]);

        let w = g.leaf(vec![1, 1], vec![2.0]).unwrap();
        let x = g.vector(vec![3.0]);
        let b = g.vector(vec![1.0]);
        let y = g.affine(w, x, b).unwrap();
        assert_eq!(g.value(y), &[7.0]);
    }

    #[test]
    fn affine_bias_gradient_is_all_ones() {
        let mut g = Graph::new();
        let w = g.leaf(vec![3, 2], vec![0.5, -1.0, 2.0, 0.1, 0.0, 3.0]).unwrap();
        let x = g.vector(vec![1.5, -0.5]);
        let b = g.vector(vec![0.1, 0.2, 0.3]);
        let y = g.affine(w, x, b).unwrap();
        let s = g.reduce_sum(y);
        g.backward(s).unwrap();
        assert_eq!(g.grad(b), &[1.0, 1.0, 1.0]);
        // d/dW = 1 x^T, d/dx = W^T 1
        assert_eq!(g.grad(w), &[1.5, -0.5, 1.5, -0.5, 1.5, -0.5]);
        let dx = g.grad(x);
        assert!((dx[0] - 2.5).abs() < 1e-15 && (dx[1] - 2.1).abs() < 1e-15);
    }

    #[test]
    fn affine_names_offending_operand() {
        let mut g = Graph::new();
        let w = g.leaf(vec![2, 3], vec![0.0; 6]).unwrap();
        let x = g.vector(vec![1.0, 2.0]);
        let b = g.vector(vec![0.0, 0.0]);
        match g.affine(w, x, b) {
            Err(GradError::Dimension { operand, .. }) => assert_eq!(operand, "x"),
            other => panic!("unexpected {other:?}"),
        }
        let x = g.vector(vec![1.0, 2.0, 3.0]);
        let b = g.vector(vec![0.0]);
        match g.affine(w, x, b) {
            Err(GradError::Dimension { operand, .. }) => assert_eq!(operand, "b"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn elementwise_helpers() {
        let mut g = Graph::new();
        let a = g.vector(vec![1.0, 2.0]);
        let b = g.vector(vec![3.0, 4.0]);
        let h = g.hadamard(a, b).unwrap();
        assert_eq!(g.value(h), &[3.0, 8.0]);

        let a = g.vector(vec![1.0]);
        let b = g.vector(vec![2.0, 3.0]);
        let c = g.concat(a, b).unwrap();
        assert_eq!(g.value(c), &[1.0, 2.0, 3.0]);

        let a = g.vector(vec![1.0, 1.0]);
        let b = g.vector(vec![2.0, 2.0]);
        let s = g.sum_over(&[a, b], 2).unwrap();
        assert_eq!(g.value(s), &[3.0, 3.0]);

        let e = g.sum_over(&[], 3).unwrap();
        assert_eq!(g.value(e), &[0.0, 0.0, 0.0]);

        let one = g.sum_over(&[b], 2).unwrap();
        assert_eq!(g.value(one), g.value(b));

        let bad = g.vector(vec![1.0]);
        assert!(g.hadamard(a, bad).is_err());
        assert!(g.sum_over(&[a, bad], 2).is_err());
    }

    #[test]
    fn smooth_l1_values() {
        assert_eq!(smooth_l1(0.0, 0.0), 0.0);
        assert_eq!(smooth_l1(0.5, 0.0), 0.125);
        assert_eq!(smooth_l1(3.0, 1.0), 1.5);
    }

    #[test]
    fn smooth_l1_is_c1_at_the_transition() {
        for &d in &[1.0_f64, -1.0] {
            let lo = d - d.signum() * 1e-9;
            let hi = d + d.signum() * 1e-9;
            assert!((smooth_l1(lo, 0.0) - smooth_l1(hi, 0.0)).abs() < 1e-6);
            assert!((smooth_l1_grad(lo, 0.0) - smooth_l1_grad(hi, 0.0)).abs() < 1e-6);
        }
    }

    #[test]
    fn backward_examples() {
        let mut g = Graph::new();
        let x = g.vector(vec![3.0]);
        let sq = g.hadamard(x, x).unwrap();
        let loss = g.reduce_sum(sq);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x), &[6.0]);

        let mut g = Graph::new();
        let x = g.vector(vec![0.5]);
        let loss = g.smooth_l1(x, 0.0).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x), &[0.5]);

        let mut g = Graph::new();
        let a = g.vector(vec![1.0, 2.0]);
        let sq = g.hadamard(a, a).unwrap();
        let loss = g.reduce_sum(sq);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(a), &[2.0, 4.0]);
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut g = Graph::new();
        let x = g.vector(vec![3.0]);
        let sq = g.hadamard(x, x).unwrap();
        let loss = g.reduce_sum(sq);
        g.backward(loss).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(x), &[12.0]);
        g.zero_grad();
        assert_eq!(g.grad(x), &[0.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::new();
        let x = g.vector(vec![1.0, 2.0]);
        assert!(matches!(
            g.backward(x),
            Err(GradError::NonScalarLoss { .. })
        ));
    }

    #[test]
    fn param_rows_scatter_into_store() {
        let mut store = ParamStore::new();
        let id = store
            .add("emb", Tensor::matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap())
            .unwrap();
        let mut g = Graph::new();
        let r1 = g.param_row(&store, id, 1);
        assert_eq!(g.value(r1), &[3.0, 4.0]);
        // second lookup of the same row reuses the leaf
        assert_eq!(g.param_row(&store, id, 1), r1);
        let s = g.reduce_sum(r1);
        let t = g.scale(s, 2.0);
        g.backward(t).unwrap();
        g.export_grads(&mut store);
        assert_eq!(store.get(id).grad(), &[0.0, 0.0, 2.0, 2.0, 0.0, 0.0]);
    }
}
