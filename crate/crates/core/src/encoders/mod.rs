//! Graph-convolutional encoders: the two-view CCA-GNN baseline and the
//! gated cortical layer stack.

mod params;

pub use params::{
    assign_named, to_named, CcaGnnParams, CorticalBlock, CorticalLayer, CorticalParams, EncoderParams, GcnLayer,
    HeadParams, NamedArrays, CORTICAL_INIT_GAIN,
};

use rand::Rng;

use crate::diffmath::{Matrix, Tape, Var};
use crate::error::Result;
use crate::objectives::ViewPair;
use crate::tgraph::{augment_graph, normalize_adjacency, NormalizedAdjacency, TemporalGraph};

/// Negative-side slope of the baseline's hidden rectifier.
pub const HIDDEN_SLOPE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Identity,
    LeakyRelu(f64),
}

/// `activation(adj · X · W + b)`.
pub fn gcn_layer(tape: &mut Tape, adj: Var, x: Var, p: &GcnLayer<Var>, activation: Activation) -> Result<Var> {
    let xw = tape.matmul(x, p.weight)?;
    let ax = tape.matmul(adj, xw)?;
    let out = tape.add_row_bias(ax, p.bias)?;
    match activation {
        Activation::Identity => Ok(out),
        Activation::LeakyRelu(slope) => tape.leaky_relu(out, slope),
    }
}

/// Eager evaluation of one graph convolution.
pub fn gcn_layer_eval(adj: &NormalizedAdjacency, x: &Matrix, p: &GcnLayer, activation: Activation) -> Result<Matrix> {
    let mut tape = Tape::new();
    let a = tape.constant(adj.matrix().clone());
    let xv = tape.constant(x.clone());
    let pv = p.try_map("", &mut |_, m| Ok::<_, crate::Error>(tape.constant(m.clone())))?;
    let out = gcn_layer(&mut tape, a, xv, &pv, activation)?;
    Ok(tape.value(out).clone())
}

/// Runs a baseline GCN stack; hidden layers use the leaky rectifier, the last is linear.
/// Returns the output and every hidden activation.
pub fn gcn_stack(tape: &mut Tape, adj: Var, x: Var, layers: &[GcnLayer<Var>]) -> Result<(Var, Vec<Var>)> {
    let mut h = x;
    let mut hidden = Vec::new();
    for (i, layer) in layers.iter().enumerate() {
        let last = i + 1 == layers.len();
        let act = if last {
            Activation::Identity
        } else {
            Activation::LeakyRelu(HIDDEN_SLOPE)
        };
        h = gcn_layer(tape, adj, h, layer, act)?;
        if !last {
            hidden.push(h);
        }
    }
    Ok((h, hidden))
}

/// Augmentation probabilities for the baseline's two views.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentConfig {
    pub p_edge: f64,
    pub p_feat: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            p_edge: 0.2,
            p_feat: 0.2,
        }
    }
}

/// Draws two augmentations of `(g, x)`, encodes both through the same
/// weights and standardizes the outputs.
pub fn cca_gnn_encode<R: Rng + ?Sized>(
    tape: &mut Tape,
    g: &TemporalGraph,
    x: &Matrix,
    layers: &[GcnLayer<Var>],
    aug: AugmentConfig,
    rng: &mut R,
) -> Result<ViewPair<Var>> {
    let view = |tape: &mut Tape, rng: &mut R| -> Result<Var> {
        let (ga, xa) = augment_graph(g, x, aug.p_edge, aug.p_feat, rng)?;
        let adj = tape.constant(normalize_adjacency(&ga).into_matrix());
        let xv = tape.constant(xa);
        let (out, _) = gcn_stack(tape, adj, xv, layers)?;
        tape.standardize(out)
    };
    let a = view(tape, rng)?;
    let b = view(tape, rng)?;
    Ok(ViewPair { a, b })
}

/// Gates of one cortical layer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Filters<T = Var> {
    pub f_a: T,
    pub f_v: T,
    pub f_m: T,
    pub f_w: T,
}

fn affine(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let xw = tape.matmul(x, w)?;
    tape.add_row_bias(xw, b)
}

fn gate(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let z = affine(tape, x, w, b)?;
    tape.sigmoid(z)
}

/// Audio, visual, memory and modulation gates.
pub fn cortical_filters(tape: &mut Tape, h_a: Var, h_v: Var, p: &CorticalLayer<Var>) -> Result<Filters> {
    let hav = tape.concat_cols(h_a, h_v)?;
    Ok(Filters {
        f_a: gate(tape, h_a, p.w_a, p.b_a)?,
        f_v: gate(tape, h_v, p.w_v, p.b_v)?,
        f_m: gate(tape, hav, p.w_m, p.b_m)?,
        f_w: gate(tape, hav, p.w_w, p.b_w)?,
    })
}

/// `ρ = tanh([h_a, h_v]·W_ρ + b_ρ)` and `ω = f_w ⊙ ρ`.
pub fn premodulate_and_modulate(
    tape: &mut Tape,
    h_a: Var,
    h_v: Var,
    f_w: Var,
    p: &CorticalLayer<Var>,
) -> Result<(Var, Var)> {
    let hav = tape.concat_cols(h_a, h_v)?;
    let pre = affine(tape, hav, p.w_rho, p.b_rho)?;
    let rho = tape.tanh(pre)?;
    let omega = tape.hadamard(f_w, rho)?;
    Ok((rho, omega))
}

/// `μ[n] = ω[n] + f_m[n] ⊙ μ[n−1]`, restarting from `mu_init` every `segment_len` rows.
pub fn memory_scan(tape: &mut Tape, omega: Var, f_m: Var, mu_init: Var, segment_len: usize) -> Result<Var> {
    tape.memory_scan(omega, f_m, mu_init, segment_len)
}

/// Every intermediate of one cortical layer pass.
#[derive(Clone, Debug, PartialEq)]
pub struct CorticalState<T = Var> {
    pub filters: Filters<T>,
    pub rho: T,
    pub omega: T,
    pub mu_raw: T,
    pub mu: T,
}

pub struct CorticalLayerOutput {
    pub h_a: Var,
    pub h_v: Var,
    pub state: CorticalState,
}

pub fn cortical_layer_forward(
    tape: &mut Tape,
    h_a: Var,
    h_v: Var,
    p: &CorticalLayer<Var>,
    mu_init: Var,
    segment_len: usize,
) -> Result<CorticalLayerOutput> {
    let filters = cortical_filters(tape, h_a, h_v, p)?;
    let (rho, omega) = premodulate_and_modulate(tape, h_a, h_v, filters.f_w, p)?;
    let mu_raw = memory_scan(tape, omega, filters.f_m, mu_init, segment_len)?;
    let pre = affine(tape, mu_raw, p.w_mu, p.b_mu)?;
    let mu = tape.tanh(pre)?;
    let out_a = tape.hadamard(mu, filters.f_a)?;
    let out_v = tape.hadamard(mu, filters.f_v)?;
    Ok(CorticalLayerOutput {
        h_a: out_a,
        h_v: out_v,
        state: CorticalState {
            filters,
            rho,
            omega,
            mu_raw,
            mu,
        },
    })
}

/// Per-block record of a cortical stack pass.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockTrace<T = Var> {
    /// Graph-convolution outputs feeding the cortical layer.
    pub h_a: T,
    pub h_v: T,
    pub state: CorticalState<T>,
    pub out_a: T,
    pub out_v: T,
}

/// Materialized activations of every block, for firing-rate metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct CorticalTrace {
    pub blocks: Vec<BlockTrace<Matrix>>,
}

pub struct CorticalStackOutput {
    pub z_a: Var,
    pub z_v: Var,
    pub blocks: Vec<BlockTrace>,
}

impl CorticalStackOutput {
    pub fn trace(&self, tape: &Tape) -> CorticalTrace {
        let v = |x: Var| tape.value(x).clone();
        let blocks = self
            .blocks
            .iter()
            .map(|b| BlockTrace {
                h_a: v(b.h_a),
                h_v: v(b.h_v),
                state: CorticalState {
                    filters: Filters {
                        f_a: v(b.state.filters.f_a),
                        f_v: v(b.state.filters.f_v),
                        f_m: v(b.state.filters.f_m),
                        f_w: v(b.state.filters.f_w),
                    },
                    rho: v(b.state.rho),
                    omega: v(b.state.omega),
                    mu_raw: v(b.state.mu_raw),
                    mu: v(b.state.mu),
                },
                out_a: v(b.out_a),
                out_v: v(b.out_v),
            })
            .collect();
        CorticalTrace { blocks }
    }
}

/// Per-modality graph convolution then a cortical layer, once per block;
/// the final outputs are column-standardized. The memory resets to zero at
/// every `segment_len`-node boundary.
pub fn cortical_stack_forward(
    tape: &mut Tape,
    adj: Var,
    x_a: Var,
    x_v: Var,
    params: &CorticalParams<Var>,
    segment_len: usize,
) -> Result<CorticalStackOutput> {
    let (mut cur_a, mut cur_v) = (x_a, x_v);
    let mut blocks = Vec::with_capacity(params.blocks.len());
    for block in &params.blocks {
        let h_a = gcn_layer(tape, adj, cur_a, &block.gcn_audio, Activation::Identity)?;
        let h_v = gcn_layer(tape, adj, cur_v, &block.gcn_visual, Activation::Identity)?;
        let width = tape.value(h_a).cols();
        let mu_init = tape.constant(Matrix::zeros(1, width));
        let out = cortical_layer_forward(tape, h_a, h_v, &block.layer, mu_init, segment_len)?;
        blocks.push(BlockTrace {
            h_a,
            h_v,
            state: out.state,
            out_a: out.h_a,
            out_v: out.h_v,
        });
        cur_a = out.h_a;
        cur_v = out.h_v;
    }
    let z_a = tape.standardize(cur_a)?;
    let z_v = tape.standardize(cur_v)?;
    Ok(CorticalStackOutput { z_a, z_v, blocks })
}

/// Binds every matrix of `params` to `tape` as a trainable leaf.
pub fn bind_params(tape: &mut Tape, params: &EncoderParams) -> EncoderParams<Var> {
    params
        .try_map(&mut |_, m| Ok::<_, std::convert::Infallible>(tape.param(m.clone())))
        .unwrap_or_else(|e| match e {})
}

pub fn bind_head(tape: &mut Tape, head: &HeadParams) -> HeadParams<Var> {
    head.try_map("head", &mut |_, m| {
        Ok::<_, std::convert::Infallible>(tape.param(m.clone()))
    })
    .unwrap_or_else(|e| match e {})
}
