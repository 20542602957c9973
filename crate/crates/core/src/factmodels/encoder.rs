use rand::Rng;

use super::tree::DepTree;
use super::ModelError;
use crate::gradcore::{Activation, Graph, ParamId, ParamStore, Tensor, Var};

/// Direction of a recurrent pass. For tree encoders `Forward` is the
/// upward (children → parent) pass and `Backward` the downward one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn index(self) -> usize {
        match self {
            Direction::Forward => 0,
            Direction::Backward => 1,
        }
    }

    fn tag(self) -> &'static str {
        match self {
            Direction::Forward => "fwd",
            Direction::Backward => "bwd",
        }
    }
}

/// Forget, input, output and candidate gates for one layer and direction.
/// Every weight is `[hidden × (hidden + input)]` and multiplies `[h; x]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateParams {
    pub w_f: ParamId,
    pub w_i: ParamId,
    pub w_o: ParamId,
    pub w_c: ParamId,
    pub b_f: ParamId,
    pub b_i: ParamId,
    pub b_o: ParamId,
    pub b_c: ParamId,
}

impl GateParams {
    fn init<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        let width = hidden + input;
        let bound = (6.0 / (width + hidden) as f64).sqrt();
        let mut weight = |name: &str, store: &mut ParamStore| -> Result<ParamId, ModelError> {
            let values = (0..hidden * width)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            Ok(store.add(format!("{prefix}.{name}"), Tensor::matrix(hidden, width, values)?)?)
        };
        let w_f = weight("w_f", store)?;
        let w_i = weight("w_i", store)?;
        let w_o = weight("w_o", store)?;
        let w_c = weight("w_c", store)?;
        let mut bias = |name: &str| store.add(format!("{prefix}.{name}"), Tensor::zeros(vec![hidden]));
        Ok(GateParams {
            w_f,
            w_i,
            w_o,
            w_c,
            b_f: bias("b_f")?,
            b_i: bias("b_i")?,
            b_o: bias("b_o")?,
            b_c: bias("b_c")?,
        })
    }

    pub fn ids(&self) -> [ParamId; 8] {
        [
            self.w_f, self.w_i, self.w_o, self.w_c, self.b_f, self.b_i, self.b_o, self.b_c,
        ]
    }
}

/// Stacked bidirectional LSTM weights shared by the linear-chain and tree encoders.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    /// `layers[l][d]` for direction index `d`.
    pub layers: Vec<[GateParams; 2]>,
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// The `g` nonlinearity applied to the candidate and to the cell output.
    pub nonlinearity: Activation,
}

impl EncoderParams {
    pub fn init<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        layers: usize,
        nonlinearity: Activation,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        if layers == 0 {
            return Err(ModelError::Config("an encoder needs at least one layer".into()));
        }
        let mut out = Vec::with_capacity(layers);
        for l in 0..layers {
            let input = if l == 0 { input_dim } else { 2 * hidden_dim };
            let fwd = GateParams::init(store, &format!("{prefix}.l{l}.fwd"), input, hidden_dim, rng)?;
            let bwd = GateParams::init(store, &format!("{prefix}.l{l}.bwd"), input, hidden_dim, rng)?;
            out.push([fwd, bwd]);
        }
        Ok(EncoderParams {
            layers: out,
            input_dim,
            hidden_dim,
            nonlinearity,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn gates(&self, layer: usize, dir: Direction) -> &GateParams {
        &self.layers[layer][dir.index()]
    }

    pub fn ids(&self) -> Vec<ParamId> {
        self.layers
            .iter()
            .flat_map(|l| l.iter().flat_map(GateParams::ids))
            .collect()
    }

    fn dir_tag(dir: Direction) -> &'static str {
        dir.tag()
    }
}

/// Hidden states for every layer, direction and position.
#[derive(Debug, Clone)]
pub struct EncoderStates {
    /// `hidden[l][d][t]`
    pub hidden: Vec<[Vec<Var>; 2]>,
}

impl EncoderStates {
    pub fn layer(&self, l: usize, dir: Direction) -> &[Var] {
        &self.hidden[l][dir.index()]
    }

    /// Final-layer `[h→; h←]` at position `t`.
    pub fn final_concat(&self, graph: &mut Graph, t: usize) -> Result<Var, ModelError> {
        let last = self.hidden.last().expect("at least one layer");
        Ok(graph.concat(last[0][t], last[1][t])?)
    }
}

struct BoundGates {
    w_f: Var,
    w_i: Var,
    w_o: Var,
    w_c: Var,
    b_f: Var,
    b_i: Var,
    b_o: Var,
    b_c: Var,
}

fn bind(graph: &mut Graph, store: &ParamStore, g: &GateParams) -> BoundGates {
    BoundGates {
        w_f: graph.param(store, g.w_f),
        w_i: graph.param(store, g.w_i),
        w_o: graph.param(store, g.w_o),
        w_c: graph.param(store, g.w_c),
        b_f: graph.param(store, g.b_f),
        b_i: graph.param(store, g.b_i),
        b_o: graph.param(store, g.b_o),
        b_c: graph.param(store, g.b_c),
    }
}

fn check_finite(
    graph: &Graph,
    h: Var,
    position: usize,
    layer: usize,
    dir: Direction,
) -> Result<(), ModelError> {
    if graph.value(h).iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ModelError::NonFinite {
            position,
            layer,
            direction: EncoderParams::dir_tag(dir),
        })
    }
}

/// One linear-chain step: gates from `[h_prev; x]`, `c = i∘ĉ + f∘c_prev`, `h = o∘g(c)`.
fn chain_cell(
    graph: &mut Graph,
    gates: &BoundGates,
    g: Activation,
    x: Var,
    h_prev: Var,
    c_prev: Var,
) -> Result<(Var, Var), ModelError> {
    let z = graph.concat(h_prev, x)?;
    let f_pre = graph.affine(gates.w_f, z, gates.b_f)?;
    let f = graph.sigmoid(f_pre);
    let i_pre = graph.affine(gates.w_i, z, gates.b_i)?;
    let i = graph.sigmoid(i_pre);
    let o_pre = graph.affine(gates.w_o, z, gates.b_o)?;
    let o = graph.sigmoid(o_pre);
    let c_pre = graph.affine(gates.w_c, z, gates.b_c)?;
    let c_hat = graph.pointwise(g, c_pre);
    let ic = graph.hadamard(i, c_hat)?;
    let fc = graph.hadamard(f, c_prev)?;
    let c = graph.add(ic, fc)?;
    let gc = graph.pointwise(g, c);
    let h = graph.hadamard(o, gc)?;
    Ok((h, c))
}

/// One child-sum step over the (possibly empty) set of predecessor states.
fn child_sum_cell(
    graph: &mut Graph,
    gates: &BoundGates,
    g: Activation,
    hidden: usize,
    x: Var,
    prev: &[(Var, Var)],
) -> Result<(Var, Var), ModelError> {
    let hs: Vec<Var> = prev.iter().map(|p| p.0).collect();
    let h_sum = graph.sum_over(&hs, hidden)?;
    let z = graph.concat(h_sum, x)?;
    let i_pre = graph.affine(gates.w_i, z, gates.b_i)?;
    let i = graph.sigmoid(i_pre);
    let o_pre = graph.affine(gates.w_o, z, gates.b_o)?;
    let o = graph.sigmoid(o_pre);
    let c_pre = graph.affine(gates.w_c, z, gates.b_c)?;
    let c_hat = graph.pointwise(g, c_pre);
    let mut terms = vec![graph.hadamard(i, c_hat)?];
    for &(h_k, c_k) in prev {
        let zk = graph.concat(h_k, x)?;
        let fk_pre = graph.affine(gates.w_f, zk, gates.b_f)?;
        let fk = graph.sigmoid(fk_pre);
        terms.push(graph.hadamard(fk, c_k)?);
    }
    let c = graph.sum_over(&terms, hidden)?;
    let gc = graph.pointwise(g, c);
    let h = graph.hadamard(o, gc)?;
    Ok((h, c))
}

fn layer_inputs(
    graph: &mut Graph,
    prev: &[Vec<Var>; 2],
) -> Result<Vec<Var>, ModelError> {
    prev[0]
        .iter()
        .zip(&prev[1])
        .map(|(&f, &b)| Ok(graph.concat(f, b)?))
        .collect()
}

/// Stacked bidirectional linear-chain LSTM over `xs`.
///
/// `prev→(t) = t−1`, `prev←(t) = t+1`; states beyond either end are zero.
/// Layers above the first read `[h(l−1,→); h(l−1,←)]`.
pub fn lbilstm_encode(
    graph: &mut Graph,
    store: &ParamStore,
    params: &EncoderParams,
    xs: &[Var],
) -> Result<EncoderStates, ModelError> {
    let n = xs.len();
    if n == 0 {
        return Err(ModelError::EmptyInput);
    }
    let hd = params.hidden_dim;
    let g = params.nonlinearity;
    let mut hidden: Vec<[Vec<Var>; 2]> = Vec::with_capacity(params.num_layers());
    for l in 0..params.num_layers() {
        let inputs = match hidden.last() {
            None => xs.to_vec(),
            Some(prev) => layer_inputs(graph, prev)?,
        };
        let mut out: [Vec<Var>; 2] = [Vec::with_capacity(n), Vec::with_capacity(n)];
        for dir in [Direction::Forward, Direction::Backward] {
            let gates = bind(graph, store, params.gates(l, dir));
            let order: Vec<usize> = match dir {
                Direction::Forward => (0..n).collect(),
                Direction::Backward => (0..n).rev().collect(),
            };
            let mut states = vec![None; n];
            let zero = graph.zeros(hd);
            let (mut h_prev, mut c_prev) = (zero, zero);
            for t in order {
                let (h, c) = chain_cell(graph, &gates, g, inputs[t], h_prev, c_prev)?;
                check_finite(graph, h, t, l, dir)?;
                states[t] = Some(h);
                h_prev = h;
                c_prev = c;
            }
            out[dir.index()] = states.into_iter().map(|s| s.expect("visited")).collect();
        }
        hidden.push(out);
    }
    Ok(EncoderStates { hidden })
}

/// Stacked bidirectional child-sum tree LSTM.
///
/// The upward pass combines each node's children; the downward pass combines
/// its parent (the root has none). Predecessors are summed in ascending
/// position order. Dependency labels are not used.
pub fn tbilstm_encode(
    graph: &mut Graph,
    store: &ParamStore,
    params: &EncoderParams,
    xs: &[Var],
    tree: &DepTree,
) -> Result<EncoderStates, ModelError> {
    let n = xs.len();
    if n == 0 {
        return Err(ModelError::EmptyInput);
    }
    if tree.len() != n {
        return Err(ModelError::Tree(format!(
            "tree has {} nodes but the sentence has {n} tokens",
            tree.len()
        )));
    }
    let hd = params.hidden_dim;
    let g = params.nonlinearity;
    let mut hidden: Vec<[Vec<Var>; 2]> = Vec::with_capacity(params.num_layers());
    for l in 0..params.num_layers() {
        let inputs = match hidden.last() {
            None => xs.to_vec(),
            Some(prev) => layer_inputs(graph, prev)?,
        };
        let mut out: [Vec<Var>; 2] = [Vec::new(), Vec::new()];
        for dir in [Direction::Forward, Direction::Backward] {
            let gates = bind(graph, store, params.gates(l, dir));
            let order: Vec<usize> = match dir {
                Direction::Forward => tree.bottom_up().to_vec(),
                Direction::Backward => tree.top_down().collect(),
            };
            let mut states: Vec<Option<(Var, Var)>> = vec![None; n];
            for t in order {
                let preds: Vec<(Var, Var)> = match dir {
                    Direction::Forward => tree
                        .children(t)
                        .iter()
                        .map(|&k| states[k].expect("children first"))
                        .collect(),
                    Direction::Backward => tree
                        .parent(t)
                        .map(|p| states[p].expect("parent first"))
                        .into_iter()
                        .collect(),
                };
                let (h, c) = child_sum_cell(graph, &gates, g, hd, inputs[t], &preds)?;
                check_finite(graph, h, t, l, dir)?;
                states[t] = Some((h, c));
            }
            out[dir.index()] = states.into_iter().map(|s| s.expect("visited").0).collect();
        }
        hidden.push(out);
    }
    Ok(EncoderStates { hidden })
}
