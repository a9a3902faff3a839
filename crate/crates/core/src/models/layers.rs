//! Layer transfer functions.
//!
//! Each function takes parameters already bound on the tape, so tests can
//! drive a layer with hand-set weights. Edge `e` of the adjacency carries
//! `j → i` with `j = source(e)` and `i = target(e)`; per-edge quantities are
//! indexed by `e`.

use super::ModelError;
use crate::tensor::{SparseAdjacency, Tape, Tensor, Var};

/// Affine map `x · W + b` with `W` of shape `in × out` and `b` of `1 × out`.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: Var,
    pub bias: Var,
}

impl Linear {
    pub fn apply(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var, ModelError> {
        let y = tape.matmul(x, self.weight)?;
        Ok(tape.add_row_bias(y, self.bias)?)
    }
}

/// Batch norm over the nodes of one graph with a learnable affine.
///
/// Without `running` statistics the current batch is used and every
/// application is recorded in `applied` so the caller can fold the batch
/// statistics into its running averages.
#[derive(Clone, Debug)]
pub struct Norm {
    pub gamma: Var,
    pub beta: Var,
    pub running: Option<(Vec<f64>, Vec<f64>)>,
    pub applied: Vec<Var>,
}

impl Norm {
    pub fn train(gamma: Var, beta: Var) -> Self {
        Norm {
            gamma,
            beta,
            running: None,
            applied: Vec::new(),
        }
    }

    pub fn eval(gamma: Var, beta: Var, mean: Vec<f64>, var: Vec<f64>) -> Self {
        Norm {
            gamma,
            beta,
            running: Some((mean, var)),
            applied: Vec::new(),
        }
    }

    pub fn apply(&mut self, tape: &mut Tape<'_>, x: Var) -> Result<Var, ModelError> {
        let y = match &self.running {
            Some((mean, var)) => tape.batch_norm_fixed(x, self.gamma, self.beta, mean, var)?,
            None => tape.batch_norm(x, self.gamma, self.beta)?,
        };
        self.applied.push(y);
        Ok(y)
    }
}

fn maybe_norm(norm: &mut Option<Norm>, tape: &mut Tape<'_>, x: Var) -> Result<Var, ModelError> {
    match norm {
        Some(n) => n.apply(tape, x),
        None => Ok(x),
    }
}

fn zeros_like(tape: &mut Tape<'_>, x: Var) -> Var {
    let [r, c] = tape.value(x).shape();
    tape.constant(Tensor::zeros(r, c))
}

#[derive(Clone, Debug)]
pub struct GvrnnParams {
    pub u: Linear,
    pub v: Linear,
    /// Inner map of the message MLP.
    pub b: Linear,
    /// Outer map of the message MLP.
    pub a: Linear,
    pub norm: Option<Norm>,
}

#[derive(Clone, Debug)]
pub struct GgruParams {
    pub u_z: Linear,
    pub v_z: Linear,
    pub u_r: Linear,
    pub v_r: Linear,
    pub u_h: Linear,
    pub v_h: Linear,
    pub norm: Option<Norm>,
}

#[derive(Clone, Debug)]
pub struct GlstmParams {
    pub u_i: Linear,
    pub v_i: Linear,
    pub u_o: Linear,
    pub v_o: Linear,
    pub u_c: Linear,
    pub v_c: Linear,
    pub u_f: Linear,
    pub v_f: Linear,
    pub norm: Option<Norm>,
}

#[derive(Clone, Debug)]
pub struct CommNetParams {
    pub u: Linear,
    pub v: Linear,
    pub norm: Option<Norm>,
}

#[derive(Clone, Debug)]
pub struct SgcnParams {
    pub a: Linear,
    pub b: Linear,
    pub v: Linear,
    pub norm: Option<Norm>,
}

#[derive(Clone, Debug)]
pub struct GatedGcnParams {
    pub u: Linear,
    pub v: Linear,
    pub a: Linear,
    pub b: Linear,
    pub norm: Option<Norm>,
}

/// Vanilla graph RNN: starting from `h = 0`, `T` fixed-point steps of
/// `h_i ← Σ_{j→i} A σ(B σ(U x_i + V h_j))`.
///
/// Batch norm, when present, normalizes each step's aggregate.
pub fn gvrnn_layer<'g>(
    tape: &mut Tape<'g>,
    x: Var,
    adj: &'g SparseAdjacency,
    p: &mut GvrnnParams,
    steps: usize,
) -> Result<Var, ModelError> {
    let ux = p.u.apply(tape, x)?;
    let mut h = zeros_like(tape, ux);
    for _ in 0..steps {
        let vh = p.v.apply(tape, h)?;
        let pre = tape.edge_pair_sum(ux, vh, adj)?;
        let s1 = tape.sigmoid(pre);
        let inner = p.b.apply(tape, s1)?;
        let s2 = tape.sigmoid(inner);
        let msg = p.a.apply(tape, s2)?;
        let agg = tape.scatter_to_targets(msg, adj)?;
        h = maybe_norm(&mut p.norm, tape, agg)?;
    }
    Ok(h)
}

/// Gated graph neural network: starting from `h = x`, `T` GRU steps driven
/// by the neighbor sum `h̄_i = Σ_{j→i} h_j`.
///
/// Batch norm, when present, normalizes `h̄` at every step.
pub fn ggru_layer<'g>(
    tape: &mut Tape<'g>,
    x: Var,
    adj: &'g SparseAdjacency,
    p: &mut GgruParams,
    steps: usize,
) -> Result<Var, ModelError> {
    let mut h = x;
    for _ in 0..steps {
        let sum = tape.neighbor_sum(h, adj)?;
        let hbar = maybe_norm(&mut p.norm, tape, sum)?;

        let zu = p.u_z.apply(tape, h)?;
        let zv = p.v_z.apply(tape, hbar)?;
        let zpre = tape.add(zu, zv)?;
        let z = tape.sigmoid(zpre);

        let ru = p.u_r.apply(tape, h)?;
        let rv = p.v_r.apply(tape, hbar)?;
        let rpre = tape.add(ru, rv)?;
        let r = tape.sigmoid(rpre);

        let hr = tape.hadamard(h, r)?;
        let cu = p.u_h.apply(tape, hr)?;
        let cv = p.v_h.apply(tape, hbar)?;
        let cpre = tape.add(cu, cv)?;
        let cand = tape.tanh(cpre);

        // (1 - z) ⊙ h + z ⊙ cand
        let delta = tape.sub(cand, h)?;
        let step = tape.hadamard(z, delta)?;
        h = tape.add(h, step)?;
    }
    Ok(h)
}

/// Graph LSTM layer: from `h = c = 0`, `T` simultaneous updates
///
/// ```text
/// h̄_i  = Σ_{j→i} h_j
/// i, o  = σ(U x_i + V h̄_i)
/// c̃    = tanh(U_c x_i + V_c h̄_i)
/// f_ij  = σ(U_f x_i + V_f h_j)
/// c_i  ← i ⊙ c̃ + Σ_{j→i} f_ij ⊙ c_j
/// h_i  ← o ⊙ tanh(c_i)
/// ```
///
/// The cell sum uses the neighbors' cells from the previous step.
pub fn glstm_layer<'g>(
    tape: &mut Tape<'g>,
    x: Var,
    adj: &'g SparseAdjacency,
    p: &mut GlstmParams,
    steps: usize,
) -> Result<Var, ModelError> {
    let ux_i = p.u_i.apply(tape, x)?;
    let ux_o = p.u_o.apply(tape, x)?;
    let ux_c = p.u_c.apply(tape, x)?;
    let ux_f = p.u_f.apply(tape, x)?;
    let mut h = zeros_like(tape, ux_i);
    let mut c = h;
    for _ in 0..steps {
        let sum = tape.neighbor_sum(h, adj)?;
        let hbar = maybe_norm(&mut p.norm, tape, sum)?;

        let vi = p.v_i.apply(tape, hbar)?;
        let ipre = tape.add(ux_i, vi)?;
        let ig = tape.sigmoid(ipre);

        let vo = p.v_o.apply(tape, hbar)?;
        let opre = tape.add(ux_o, vo)?;
        let og = tape.sigmoid(opre);

        let vc = p.v_c.apply(tape, hbar)?;
        let cpre = tape.add(ux_c, vc)?;
        let cand = tape.tanh(cpre);

        let vf = p.v_f.apply(tape, h)?;
        let fpre = tape.edge_pair_sum(ux_f, vf, adj)?;
        let fg = tape.sigmoid(fpre);

        let fresh = tape.hadamard(ig, cand)?;
        let carried = tape.gated_neighbor_sum(c, fg, adj)?;
        c = tape.add(fresh, carried)?;
        let tc = tape.tanh(c);
        h = tape.hadamard(og, tc)?;
    }
    Ok(h)
}

/// `ReLU(U h_i + Σ_{j→i} V h_j)`; the neighbor map is applied per message.
pub fn commnet_layer<'g>(
    tape: &mut Tape<'g>,
    h: Var,
    adj: &'g SparseAdjacency,
    p: &mut CommNetParams,
) -> Result<Var, ModelError> {
    let uh = p.u.apply(tape, h)?;
    let vh = p.v.apply(tape, h)?;
    let agg = tape.neighbor_sum(vh, adj)?;
    let pre = tape.add(uh, agg)?;
    let pre = maybe_norm(&mut p.norm, tape, pre)?;
    Ok(tape.relu(pre))
}

/// Per-edge gates `η_ij = σ(A h_i + B h_j)` for every directed edge `j → i`.
pub fn edge_gates<'g>(
    tape: &mut Tape<'g>,
    h: Var,
    adj: &'g SparseAdjacency,
    a: &Linear,
    b: &Linear,
) -> Result<Var, ModelError> {
    let ah = a.apply(tape, h)?;
    let bh = b.apply(tape, h)?;
    let pre = tape.edge_pair_sum(ah, bh, adj)?;
    Ok(tape.sigmoid(pre))
}

/// `ReLU(Σ_{j→i} η_ij ⊙ V h_j)`.
pub fn sgcn_layer<'g>(
    tape: &mut Tape<'g>,
    h: Var,
    adj: &'g SparseAdjacency,
    p: &mut SgcnParams,
) -> Result<Var, ModelError> {
    let gates = edge_gates(tape, h, adj, &p.a, &p.b)?;
    let vh = p.v.apply(tape, h)?;
    let agg = tape.gated_neighbor_sum(vh, gates, adj)?;
    let pre = maybe_norm(&mut p.norm, tape, agg)?;
    Ok(tape.relu(pre))
}

/// `ReLU(U h_i + Σ_{j→i} η_ij ⊙ V h_j)` with gates from [`edge_gates`].
pub fn gated_gcn_layer<'g>(
    tape: &mut Tape<'g>,
    h: Var,
    adj: &'g SparseAdjacency,
    p: &mut GatedGcnParams,
) -> Result<Var, ModelError> {
    let gates = edge_gates(tape, h, adj, &p.a, &p.b)?;
    gated_gcn_layer_with_gates(tape, h, adj, p, gates)
}

/// [`gated_gcn_layer`] with caller-supplied gates (one row per directed edge).
pub fn gated_gcn_layer_with_gates<'g>(
    tape: &mut Tape<'g>,
    h: Var,
    adj: &'g SparseAdjacency,
    p: &mut GatedGcnParams,
    gates: Var,
) -> Result<Var, ModelError> {
    let uh = p.u.apply(tape, h)?;
    let vh = p.v.apply(tape, h)?;
    let agg = tape.gated_neighbor_sum(vh, gates, adj)?;
    let pre = tape.add(uh, agg)?;
    let pre = maybe_norm(&mut p.norm, tape, pre)?;
    Ok(tape.relu(pre))
}

/// Identity skip `f(h) + h`.
pub fn residual_wrap(tape: &mut Tape<'_>, layer_output: Var, layer_input: Var) -> Result<Var, ModelError> {
    let (so, si) = (tape.value(layer_output).shape(), tape.value(layer_input).shape());
    if so != si {
        return Err(ModelError::Contract(format!(
            "residual needs equal shapes, got {so:?} and {si:?}"
        )));
    }
    Ok(tape.add(layer_output, layer_input)?)
}

/// Bound parameters of one layer of any architecture.
#[derive(Clone, Debug)]
pub enum LayerParams {
    Gvrnn(GvrnnParams),
    Ggru(GgruParams),
    Glstm(GlstmParams),
    CommNet(CommNetParams),
    Sgcn(SgcnParams),
    GatedGcn(GatedGcnParams),
}

impl LayerParams {
    pub fn apply<'g>(
        &mut self,
        tape: &mut Tape<'g>,
        h: Var,
        adj: &'g SparseAdjacency,
        steps: usize,
    ) -> Result<Var, ModelError> {
        match self {
            LayerParams::Gvrnn(p) => gvrnn_layer(tape, h, adj, p, steps),
            LayerParams::Ggru(p) => ggru_layer(tape, h, adj, p, steps),
            LayerParams::Glstm(p) => glstm_layer(tape, h, adj, p, steps),
            LayerParams::CommNet(p) => commnet_layer(tape, h, adj, p),
            LayerParams::Sgcn(p) => sgcn_layer(tape, h, adj, p),
            LayerParams::GatedGcn(p) => gated_gcn_layer(tape, h, adj, p),
        }
    }

    pub fn norm(&self) -> Option<&Norm> {
        match self {
            LayerParams::Gvrnn(p) => p.norm.as_ref(),
            LayerParams::Ggru(p) => p.norm.as_ref(),
            LayerParams::Glstm(p) => p.norm.as_ref(),
            LayerParams::CommNet(p) => p.norm.as_ref(),
            LayerParams::Sgcn(p) => p.norm.as_ref(),
            LayerParams::GatedGcn(p) => p.norm.as_ref(),
        }
    }

    /// Assembles typed parameters from linear maps listed in
    /// [`linear_names`] order.
    pub(crate) fn assemble(arch: super::Arch, lin: &[Linear], norm: Option<Norm>) -> Self {
        use super::Arch::*;
        match arch {
            Gvrnn => LayerParams::Gvrnn(GvrnnParams {
                u: lin[0],
                v: lin[1],
                b: lin[2],
                a: lin[3],
                norm,
            }),
            Ggru => LayerParams::Ggru(GgruParams {
                u_z: lin[0],
                v_z: lin[1],
                u_r: lin[2],
                v_r: lin[3],
                u_h: lin[4],
                v_h: lin[5],
                norm,
            }),
            Glstm => LayerParams::Glstm(GlstmParams {
                u_i: lin[0],
                v_i: lin[1],
                u_o: lin[2],
                v_o: lin[3],
                u_c: lin[4],
                v_c: lin[5],
                u_f: lin[6],
                v_f: lin[7],
                norm,
            }),
            CommNet => LayerParams::CommNet(CommNetParams {
                u: lin[0],
                v: lin[1],
                norm,
            }),
            Sgcn => LayerParams::Sgcn(SgcnParams {
                a: lin[0],
                b: lin[1],
                v: lin[2],
                norm,
            }),
            GatedGcn => LayerParams::GatedGcn(GatedGcnParams {
                u: lin[0],
                v: lin[1],
                a: lin[2],
                b: lin[3],
                norm,
            }),
        }
    }
}

/// Names of the linear maps of one layer, in assembly order.
pub(crate) fn linear_names(arch: super::Arch) -> &'static [&'static str] {
    use super::Arch::*;
    match arch {
        Gvrnn => &["u", "v", "b", "a"],
        Ggru => &["u_z", "v_z", "u_r", "v_r", "u_h", "v_h"],
        Glstm => &["u_i", "v_i", "u_o", "v_o", "u_c", "v_c", "u_f", "v_f"],
        CommNet => &["u", "v"],
        Sgcn => &["a", "b", "v"],
        GatedGcn => &["u", "v", "a", "b"],
    }
}
