//! Self-supervised pretraining, frozen-encoder reconstruction, fold evaluation
//! and the energy metrics.

mod checkpoint;
mod gradcheck;
mod metrics;
pub mod reports;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use gradcheck::{gradcheck_split, model_gradcheck, GradCheckSetup, GRADCHECK_TOLERANCE};
pub use metrics::{
    activation_auc, firing_rates, wilcoxon_signed_rank, WilcoxonResult, ALPHA, EXACT_LIMIT, GATE_THRESHOLD,
    SIGNED_THRESHOLD,
};

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffmath::{adam_step, AdamConfig, AdamState, Gradients, Matrix, Tape, Var};
use crate::encoders::{
    cca_gnn_encode, cortical_stack_forward, gcn_stack, AugmentConfig, CcaGnnParams, CorticalParams, EncoderParams,
    HeadParams,
};
use crate::error::{invalid, Error, Result};
use crate::features::{AVDataset, Fold};
use crate::objectives::{cca_loss, mse, mse_on_tape, reconstruct, CcaConfig, CcaLossVars};
use crate::seed::rng_for;
use crate::tgraph::{build_sequence_graph, normalize_adjacency, TemporalGraph};

/// Stream labels for [`rng_for`], so each consumer of randomness is independent.
pub const STREAM_ENCODER_INIT: u64 = 1;
pub const STREAM_AUGMENT: u64 = 2;
pub const STREAM_HEAD_INIT: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Cortical,
    Ccagnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 2] = [ModelKind::Cortical, ModelKind::Ccagnn];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Cortical => "cortical",
            ModelKind::Ccagnn => "ccagnn",
        }
    }

    pub fn id(self) -> u64 {
        match self {
            ModelKind::Cortical => 0,
            ModelKind::Ccagnn => 1,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cortical" => Ok(ModelKind::Cortical),
            "ccagnn" => Ok(ModelKind::Ccagnn),
            other => Err(invalid(format!(
                "unknown model {other:?} (expected cortical or ccagnn)"
            ))),
        }
    }
}

/// Hyperparameters of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    pub k: usize,
    pub ssl_epochs: usize,
    pub ssl_lr: f64,
    pub lambda: f64,
    pub head_epochs: usize,
    pub head_lr: f64,
    pub head_weight_decay: f64,
    pub widths: Vec<usize>,
    pub seed: u64,
    pub folds: Vec<usize>,
    pub fold_count: usize,
    pub p_edge: f64,
    pub p_feat: f64,
}

/// Prior-frame counts of the full protocol.
pub const DEFAULT_KS: [usize; 8] = [3, 5, 7, 10, 15, 20, 25, 30];

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Cortical,
            k: 3,
            ssl_epochs: 200,
            ssl_lr: 1e-3,
            lambda: 1e-4,
            head_epochs: 2000,
            head_lr: 0.005,
            head_weight_decay: 0.0004,
            widths: vec![512, 256],
            seed: 0,
            folds: vec![0],
            fold_count: 1,
            p_edge: 0.2,
            p_feat: 0.2,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be positive".into()));
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::Config(format!(
                "widths {:?} must be non-empty and positive",
                self.widths
            )));
        }
        for (name, v) in [
            ("ssl_lr", self.ssl_lr),
            ("lambda", self.lambda),
            ("head_lr", self.head_lr),
            ("head_weight_decay", self.head_weight_decay),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} = {v} must be finite and non-negative")));
            }
        }
        for (name, p) in [("p_edge", self.p_edge), ("p_feat", self.p_feat)] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} outside [0, 1)")));
            }
        }
        if self.fold_count == 0 {
            return Err(Error::Config("fold_count must be positive".into()));
        }
        if let Some(f) = self.folds.iter().find(|f| **f >= self.fold_count) {
            return Err(Error::Config(format!(
                "fold {f} out of range for {} folds",
                self.fold_count
            )));
        }
        Ok(())
    }

    pub fn cca(&self) -> CcaConfig {
        CcaConfig { lambda: self.lambda }
    }

    pub fn augment(&self) -> AugmentConfig {
        AugmentConfig {
            p_edge: self.p_edge,
            p_feat: self.p_feat,
        }
    }
}

/// Per-column statistics of the training split.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer {
    pub audio_mean: Vec<f64>,
    pub audio_std: Vec<f64>,
    pub visual_mean: Vec<f64>,
    pub visual_std: Vec<f64>,
    pub clean_min: Vec<f64>,
    pub clean_max: Vec<f64>,
}

pub fn column_mean_std(m: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = m.rows() as f64;
    (0..m.cols())
        .map(|c| {
            let col = m.column(c);
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            (mean, if var > 0.0 { var.sqrt() } else { 1.0 })
        })
        .unzip()
}

impl Normalizer {
    /// Inputs are z-scored; clean targets are min-max scaled to `[0, 1]` on the training split.
    pub fn fit(ds: &AVDataset, train: &[usize]) -> Result<Self> {
        let (a, v, c) = stack(ds, train)?;
        let (audio_mean, audio_std) = column_mean_std(&a);
        let (visual_mean, visual_std) = column_mean_std(&v);
        let clean_min = (0..c.cols())
            .map(|j| c.column(j).into_iter().fold(f64::INFINITY, f64::min))
            .collect();
        let clean_max = (0..c.cols())
            .map(|j| c.column(j).into_iter().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        Ok(Self {
            audio_mean,
            audio_std,
            visual_mean,
            visual_std,
            clean_min,
            clean_max,
        })
    }

    fn zscore(m: &Matrix, mean: &[f64], std: &[f64]) -> Matrix {
        Matrix::from_fn(m.rows(), m.cols(), |r, c| (m[(r, c)] - mean[c]) / std[c])
    }

    fn scale_target(&self, m: &Matrix) -> Matrix {
        Matrix::from_fn(m.rows(), m.cols(), |r, c| {
            let span = self.clean_max[c] - self.clean_min[c];
            if span > 0.0 {
                (m[(r, c)] - self.clean_min[c]) / span
            } else {
                0.0
            }
        })
    }
}

fn stack(ds: &AVDataset, indices: &[usize]) -> Result<(Matrix, Matrix, Matrix)> {
    if indices.is_empty() {
        return Err(invalid("empty split"));
    }
    if let Some(i) = indices.iter().find(|i| **i >= ds.sequences.len()) {
        return Err(invalid(format!(
            "sequence {i} out of range ({} sequences)",
            ds.sequences.len()
        )));
    }
    let pick = |f: fn(&crate::features::AVSequence) -> &Matrix| {
        Matrix::vstack(&indices.iter().map(|&i| f(&ds.sequences[i])).collect::<Vec<_>>())
    };
    Ok((pick(|s| &s.noisy)?, pick(|s| &s.visual)?, pick(|s| &s.clean)?))
}

/// One split stacked into node-ordered matrices, with its graph.
#[derive(Clone, Debug)]
pub struct SplitData {
    pub sequences: Vec<usize>,
    pub graph: TemporalGraph,
    pub adjacency: Matrix,
    /// Normalized noisy log filterbank.
    pub audio: Matrix,
    pub visual: Matrix,
    /// Scaled clean log filterbank (the reconstruction target).
    pub clean: Matrix,
}

impl SplitData {
    pub fn new(ds: &AVDataset, indices: &[usize], k: usize, norm: &Normalizer) -> Result<Self> {
        let (a, v, c) = stack(ds, indices)?;
        let graph = build_sequence_graph(indices.len(), ds.frames(), k)?;
        let adjacency = normalize_adjacency(&graph).into_matrix();
        Ok(Self {
            sequences: indices.to_vec(),
            graph,
            adjacency,
            audio: Normalizer::zscore(&a, &norm.audio_mean, &norm.audio_std),
            visual: Normalizer::zscore(&v, &norm.visual_mean, &norm.visual_std),
            clean: norm.scale_target(&c),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.audio.rows()
    }
}

#[derive(Clone, Debug)]
pub struct FoldData {
    pub normalizer: Normalizer,
    pub train: SplitData,
    pub validation: SplitData,
    pub test: SplitData,
}

pub fn prepare_fold(ds: &AVDataset, fold: &Fold, k: usize) -> Result<FoldData> {
    let normalizer = Normalizer::fit(ds, &fold.train)?;
    Ok(FoldData {
        train: SplitData::new(ds, &fold.train, k, &normalizer)?,
        validation: SplitData::new(ds, &fold.validation, k, &normalizer)?,
        test: SplitData::new(ds, &fold.test, k, &normalizer)?,
        normalizer,
    })
}

pub fn init_encoder<R: Rng + ?Sized>(
    model: ModelKind,
    audio_dim: usize,
    visual_dim: usize,
    widths: &[usize],
    rng: &mut R,
) -> EncoderParams {
    match model {
        ModelKind::Cortical => EncoderParams::Cortical(CorticalParams::init(audio_dim, visual_dim, widths, rng)),
        ModelKind::Ccagnn => EncoderParams::CcaGnn(CcaGnnParams::init(audio_dim, visual_dim, widths, rng)),
    }
}

/// Initial encoder for `cfg`, drawn from the config seed's init stream.
pub fn seeded_encoder(cfg: &RunConfig, audio_dim: usize, visual_dim: usize) -> EncoderParams {
    let mut rng = rng_for(cfg.seed, &[STREAM_ENCODER_INIT]);
    init_encoder(cfg.model, audio_dim, visual_dim, &cfg.widths, &mut rng)
}

/// Records the self-supervised loss of either model on `tape`.
///
/// The cortical model pairs its audio and visual outputs. The baseline pairs
/// two augmented views per modality and averages the two modality losses.
pub fn ssl_loss<R: Rng + ?Sized>(
    tape: &mut Tape,
    params: &EncoderParams<Var>,
    split: &SplitData,
    cca: &CcaConfig,
    augment: AugmentConfig,
    rng: &mut R,
) -> Result<CcaLossVars> {
    match params {
        EncoderParams::Cortical(p) => {
            let adj = tape.constant(split.adjacency.clone());
            let xa = tape.constant(split.audio.clone());
            let xv = tape.constant(split.visual.clone());
            let out = cortical_stack_forward(tape, adj, xa, xv, p, split.graph.segment_len())?;
            cca_loss(tape, crate::objectives::ViewPair { a: out.z_a, b: out.z_v }, cca)
        }
        EncoderParams::CcaGnn(p) => {
            let va = cca_gnn_encode(tape, &split.graph, &split.audio, &p.audio, augment, rng)?;
            let la = cca_loss(tape, va, cca)?;
            let vv = cca_gnn_encode(tape, &split.graph, &split.visual, &p.visual, augment, rng)?;
            let lv = cca_loss(tape, vv, cca)?;
            let mut mean = |a: Var, b: Var| -> Result<Var> {
                let s = tape.add(a, b)?;
                tape.scale(s, 0.5)
            };
            Ok(CcaLossVars {
                total: mean(la.total, lv.total)?,
                invariance: mean(la.invariance, lv.invariance)?,
                decorrelation: mean(la.decorrelation, lv.decorrelation)?,
            })
        }
    }
}

/// Loss terms at the start of one epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub loss_total: f64,
    pub loss_invariance: f64,
    /// Un-weighted decorrelation sum; `loss_total = invariance + λ·decorrelation`.
    pub loss_decorrelation: f64,
}

#[derive(Clone, Debug)]
pub struct SslOutcome {
    pub params: EncoderParams,
    pub history: Vec<LossRecord>,
}

fn flatten(params: &EncoderParams) -> Vec<Matrix> {
    let mut out = Vec::new();
    params.visit(&mut |_, m: &Matrix| out.push(m.clone()));
    out
}

fn unflatten(params: &mut EncoderParams, flat: Vec<Matrix>) {
    let mut it = flat.into_iter();
    params.visit_mut(&mut |_, m: &mut Matrix| *m = it.next().expect("same tree"));
}

fn gather_grads(vars: &EncoderParams<Var>, flat: &[Matrix], grads: &Gradients) -> Vec<Matrix> {
    let mut handles = Vec::with_capacity(flat.len());
    vars.visit(&mut |_, v: &Var| handles.push(*v));
    handles
        .iter()
        .zip(flat)
        .map(|(v, m)| grads.get_or_zeros(*v, m))
        .collect()
}

fn check_finite(epoch: usize, loss: &LossRecord) -> Result<()> {
    for (term, v) in [
        ("total", loss.loss_total),
        ("invariance", loss.loss_invariance),
        ("decorrelation", loss.loss_decorrelation),
    ] {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                epoch,
                term: term.to_string(),
            });
        }
    }
    Ok(())
}

/// Full-batch Adam on the self-supervised loss, starting from `init`.
pub fn pretrain_ssl(split: &SplitData, init: EncoderParams, cfg: &RunConfig) -> Result<SslOutcome> {
    cfg.validate()?;
    let mut params = init;
    let mut state = AdamState::new(&flatten(&params), AdamConfig::default());
    let mut aug_rng = rng_for(cfg.seed, &[STREAM_AUGMENT]);
    let cca = cfg.cca();
    let mut history = Vec::with_capacity(cfg.ssl_epochs);
    for epoch in 0..cfg.ssl_epochs {
        let mut tape = Tape::new();
        let vars = crate::encoders::bind_params(&mut tape, &params);
        let loss = ssl_loss(&mut tape, &vars, split, &cca, cfg.augment(), &mut aug_rng)?;
        let record = LossRecord {
            epoch,
            loss_total: tape.value(loss.total).scalar(),
            loss_invariance: tape.value(loss.invariance).scalar(),
            loss_decorrelation: tape.value(loss.decorrelation).scalar(),
        };
        check_finite(epoch, &record)?;
        history.push(record);
        let grads = tape.backward(loss.total)?;
        let mut flat = flatten(&params);
        let g = gather_grads(&vars, &flat, &grads);
        adam_step(&mut flat, &g, &mut state, cfg.ssl_lr, 0.0)?;
        unflatten(&mut params, flat);
    }
    Ok(SslOutcome { params, history })
}

/// Unit outputs of one layer for both modalities.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceLayer {
    pub name: String,
    pub threshold: f64,
    pub audio: Matrix,
    pub visual: Matrix,
}

/// Per-layer, per-modality activations captured on one split.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationTrace {
    pub layers: Vec<TraceLayer>,
    /// Index of the hidden block output used for reporting.
    pub hidden: usize,
}

impl ActivationTrace {
    pub fn hidden_layer(&self) -> &TraceLayer {
        &self.layers[self.hidden]
    }

    /// Firing rates of the hidden block, audio then visual.
    pub fn hidden_rates(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let l = self.hidden_layer();
        Ok((
            firing_rates(&l.audio, l.threshold)?,
            firing_rates(&l.visual, l.threshold)?,
        ))
    }
}

/// Deterministic (un-augmented) encoder outputs on one split.
#[derive(Clone, Debug)]
pub struct Encoded {
    /// Final representations before standardization.
    pub y_a: Matrix,
    pub y_v: Matrix,
    /// The same, column-standardized over this split.
    pub z_a: Matrix,
    pub z_v: Matrix,
    pub trace: ActivationTrace,
}

impl Encoded {
    pub fn raw(&self) -> Result<Matrix> {
        self.y_a.concat_cols(&self.y_v)
    }
}

/// Column z-scoring with statistics frozen on the training split, so every
/// split reaches the head through the same affine map.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureScaler {
    pub fn fit(train: &Encoded) -> Result<Self> {
        let (mean, std) = column_mean_std(&train.raw()?);
        Ok(Self { mean, std })
    }

    /// Head input for `e`: `[Y_a, Y_v]` z-scored with the training statistics.
    pub fn features(&self, e: &Encoded) -> Result<Matrix> {
        Ok(Normalizer::zscore(&e.raw()?, &self.mean, &self.std))
    }
}

pub fn encode(params: &EncoderParams, split: &SplitData) -> Result<Encoded> {
    let mut tape = Tape::new();
    let vars = params.try_map(&mut |_, m| Ok::<_, Error>(tape.constant(m.clone())))?;
    let adj = tape.constant(split.adjacency.clone());
    let xa = tape.constant(split.audio.clone());
    let xv = tape.constant(split.visual.clone());
    match &vars {
        EncoderParams::Cortical(p) => {
            let out = cortical_stack_forward(&mut tape, adj, xa, xv, p, split.graph.segment_len())?;
            let ct = out.trace(&tape);
            let mut layers = Vec::new();
            for (b, block) in ct.blocks.into_iter().enumerate() {
                layers.push(TraceLayer {
                    name: format!("block{b}.gate"),
                    threshold: GATE_THRESHOLD,
                    audio: block.state.filters.f_a,
                    visual: block.state.filters.f_v,
                });
                layers.push(TraceLayer {
                    name: format!("block{b}.output"),
                    threshold: SIGNED_THRESHOLD,
                    audio: block.out_a,
                    visual: block.out_v,
                });
            }
            let last = out.blocks.last().expect("at least one block");
            Ok(Encoded {
                y_a: tape.value(last.out_a).clone(),
                y_v: tape.value(last.out_v).clone(),
                z_a: tape.value(out.z_a).clone(),
                z_v: tape.value(out.z_v).clone(),
                trace: ActivationTrace { layers, hidden: 1 },
            })
        }
        EncoderParams::CcaGnn(p) => {
            let (out_a, hid_a) = gcn_stack(&mut tape, adj, xa, &p.audio)?;
            let (out_v, hid_v) = gcn_stack(&mut tape, adj, xv, &p.visual)?;
            let mut layers: Vec<TraceLayer> = hid_a
                .iter()
                .zip(&hid_v)
                .enumerate()
                .map(|(i, (a, v))| TraceLayer {
                    name: format!("layer{i}.hidden"),
                    threshold: SIGNED_THRESHOLD,
                    audio: tape.value(*a).clone(),
                    visual: tape.value(*v).clone(),
                })
                .collect();
            layers.push(TraceLayer {
                name: format!("layer{}.output", hid_a.len()),
                threshold: SIGNED_THRESHOLD,
                audio: tape.value(out_a).clone(),
                visual: tape.value(out_v).clone(),
            });
            let z_a = tape.standardize(out_a)?;
            let z_v = tape.standardize(out_v)?;
            Ok(Encoded {
                y_a: tape.value(out_a).clone(),
                y_v: tape.value(out_v).clone(),
                z_a: tape.value(z_a).clone(),
                z_v: tape.value(z_v).clone(),
                trace: ActivationTrace { layers, hidden: 0 },
            })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub validation_mse: f64,
}

#[derive(Clone, Debug)]
pub struct HeadOutcome {
    /// Parameters at the epoch with the lowest validation MSE.
    pub params: HeadParams,
    pub best_epoch: usize,
    pub history: Vec<HeadRecord>,
}

fn predict(features: &Matrix, p: &HeadParams) -> Result<Matrix> {
    features.matmul(&p.weight)?.add_row(&p.bias)
}

/// Trains a dense head on frozen features. Each history entry describes the
/// parameters at the start of that epoch.
pub fn train_head(
    train: (&Matrix, &Matrix),
    validation: (&Matrix, &Matrix),
    init: HeadParams,
    cfg: &RunConfig,
) -> Result<HeadOutcome> {
    let (x, y) = train;
    let (vx, vy) = validation;
    if x.rows() != y.rows() || vx.rows() != vy.rows() {
        return Err(invalid("features and targets differ in row count"));
    }
    let mut params = init;
    let mut state = AdamState::new(&[params.weight.clone(), params.bias.clone()], AdamConfig::default());
    let mut best = (f64::INFINITY, 0, params.clone());
    let mut history = Vec::with_capacity(cfg.head_epochs);
    for epoch in 0..cfg.head_epochs {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let yv = tape.constant(y.clone());
        let w = tape.param(params.weight.clone());
        let b = tape.param(params.bias.clone());
        let lin = tape.matmul(xv, w)?;
        let pred = tape.add_row_bias(lin, b)?;
        let loss = mse_on_tape(&mut tape, pred, yv)?;
        let train_mse = tape.value(loss).scalar();
        let validation_mse = mse(&predict(vx, &params)?, vy)?;
        if !train_mse.is_finite() || !validation_mse.is_finite() {
            return Err(Error::NonFinite {
                epoch,
                term: if train_mse.is_finite() {
                    "validation_mse"
                } else {
                    "train_mse"
                }
                .into(),
            });
        }
        history.push(HeadRecord {
            epoch,
            train_mse,
            validation_mse,
        });
        if validation_mse < best.0 {
            best = (validation_mse, epoch, params.clone());
        }
        let grads = tape.backward(loss)?;
        let g = [
            grads.get_or_zeros(w, &params.weight),
            grads.get_or_zeros(b, &params.bias),
        ];
        let mut flat = [params.weight, params.bias];
        adam_step(&mut flat, &g, &mut state, cfg.head_lr, cfg.head_weight_decay)?;
        let [weight, bias] = flat;
        params = HeadParams { weight, bias };
    }
    let (_, best_epoch, params) = if cfg.head_epochs == 0 { (0.0, 0, params) } else { best };
    Ok(HeadOutcome {
        params,
        best_epoch,
        history,
    })
}

/// Metrics of one (model, k, fold) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct FoldReport {
    pub fold: usize,
    pub model: ModelKind,
    pub k: usize,
    pub seed: u64,
    pub test_mse: f64,
    /// MSE of predicting the per-column training mean.
    pub baseline_mse: f64,
    pub rates_audio: Vec<f64>,
    pub rates_visual: Vec<f64>,
    pub auc_audio: f64,
    pub auc_visual: f64,
    pub ssl_history: Vec<LossRecord>,
    pub head_history: Vec<HeadRecord>,
    pub best_head_epoch: usize,
}

#[derive(Clone, Debug)]
pub struct FoldOutcome {
    pub report: FoldReport,
    pub encoder: EncoderParams,
    pub head: HeadParams,
}

/// Mean-of-training-targets predictor evaluated on `target`.
pub fn mean_baseline_mse(train_target: &Matrix, target: &Matrix) -> Result<f64> {
    let n = train_target.rows() as f64;
    let mean = train_target.column_sums().scale(1.0 / n);
    let pred = Matrix::zeros(target.rows(), target.cols()).add_row(&mean)?;
    mse(&pred, target)
}

/// Head inputs of every split of a fold, scaled with training statistics.
#[derive(Clone, Debug)]
pub struct HeadInputs {
    pub train: Matrix,
    pub validation: Matrix,
    pub test: Matrix,
    /// Encoder outputs on the test split, for the activation trace.
    pub test_encoded: Encoded,
}

pub fn head_inputs(encoder: &EncoderParams, data: &FoldData) -> Result<HeadInputs> {
    let enc_train = encode(encoder, &data.train)?;
    let scaler = FeatureScaler::fit(&enc_train)?;
    let test_encoded = encode(encoder, &data.test)?;
    Ok(HeadInputs {
        train: scaler.features(&enc_train)?,
        validation: scaler.features(&encode(encoder, &data.validation)?)?,
        test: scaler.features(&test_encoded)?,
        test_encoded,
    })
}

/// Trains the head on frozen encoder features, selecting on validation MSE.
pub fn fit_head(inputs: &HeadInputs, data: &FoldData, cfg: &RunConfig) -> Result<HeadOutcome> {
    let mut head_rng = rng_for(cfg.seed, &[STREAM_HEAD_INIT]);
    let init = HeadParams::init(inputs.train.cols(), data.train.clean.cols(), &mut head_rng);
    train_head(
        (&inputs.train, &data.train.clean),
        (&inputs.validation, &data.validation.clean),
        init,
        cfg,
    )
}

/// Test-split reconstruction error and hidden-layer energy of a trained pair.
#[derive(Clone, Debug, PartialEq)]
pub struct TestScore {
    pub test_mse: f64,
    pub baseline_mse: f64,
    pub rates_audio: Vec<f64>,
    pub rates_visual: Vec<f64>,
    pub auc_audio: f64,
    pub auc_visual: f64,
}

pub fn score_test(inputs: &HeadInputs, head: &HeadParams, data: &FoldData) -> Result<TestScore> {
    let width = inputs.test_encoded.y_a.cols();
    let f = &inputs.test;
    let pred = reconstruct(&f.slice_cols(0, width), &f.slice_cols(width, f.cols() - width), head)?;
    let (rates_audio, rates_visual) = inputs.test_encoded.trace.hidden_rates()?;
    Ok(TestScore {
        test_mse: mse(&pred, &data.test.clean)?,
        baseline_mse: mean_baseline_mse(&data.train.clean, &data.test.clean)?,
        auc_audio: activation_auc(&rates_audio)?,
        auc_visual: activation_auc(&rates_visual)?,
        rates_audio,
        rates_visual,
    })
}

/// Pretrains, fits the head and scores the test split of one fold.
pub fn evaluate_fold(ds: &AVDataset, fold: &Fold, cfg: &RunConfig) -> Result<FoldOutcome> {
    cfg.validate()?;
    let data = prepare_fold(ds, fold, cfg.k)?;
    let init = seeded_encoder(cfg, ds.audio_dim(), ds.visual_dim());
    let ssl = pretrain_ssl(&data.train, init, cfg)?;
    let inputs = head_inputs(&ssl.params, &data)?;
    let head = fit_head(&inputs, &data, cfg)?;
    let score = score_test(&inputs, &head.params, &data)?;
    let report = FoldReport {
        fold: fold.id,
        model: cfg.model,
        k: cfg.k,
        seed: cfg.seed,
        test_mse: score.test_mse,
        baseline_mse: score.baseline_mse,
        rates_audio: score.rates_audio,
        rates_visual: score.rates_visual,
        auc_audio: score.auc_audio,
        auc_visual: score.auc_visual,
        ssl_history: ssl.history,
        head_history: head.history,
        best_head_epoch: head.best_epoch,
    };
    Ok(FoldOutcome {
        report,
        encoder: ssl.params,
        head: head.params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{split_folds, synth_av_generate, SynthConfig};

    fn tiny() -> (AVDataset, Fold) {
        let ds = synth_av_generate(
            &SynthConfig {
                sequences: 5,
                frames: 12,
                ..SynthConfig::default()
            },
            4,
        )
        .unwrap();
        let fold = split_folds(5, 1, (0.6, 0.2, 0.2), &mut rng_for(4, &[9]))
            .unwrap()
            .folds
            .remove(0);
        (ds, fold)
    }

    fn small_cfg(model: ModelKind) -> RunConfig {
        RunConfig {
            model,
            ssl_epochs: 120,
            head_epochs: 50,
            widths: vec![8, 4],
            ..RunConfig::default()
        }
    }

    #[test]
    fn config_defaults_and_validation() {
        let c = RunConfig::default();
        assert_eq!(
            (c.ssl_epochs, c.head_epochs, c.widths.clone()),
            (200, 2000, vec![512, 256])
        );
        assert_eq!(
            (c.ssl_lr, c.lambda, c.head_lr, c.head_weight_decay),
            (1e-3, 1e-4, 0.005, 0.0004)
        );
        assert!(RunConfig { k: 0, ..c.clone() }.validate().is_err());
        assert!(RunConfig {
            p_edge: 1.0,
            ..c.clone()
        }
        .validate()
        .is_err());
        assert!(RunConfig { folds: vec![3], ..c }.validate().is_err());
    }

    #[test]
    fn model_names_round_trip() {
        for m in ModelKind::ALL {
            assert_eq!(m.as_str().parse::<ModelKind>().unwrap(), m);
        }
        assert!("lstm".parse::<ModelKind>().is_err());
    }

    #[test]
    fn pretraining_records_every_epoch_and_learns() {
        let (ds, fold) = tiny();
        for model in ModelKind::ALL {
            let cfg = small_cfg(model);
            let data = prepare_fold(&ds, &fold, cfg.k).unwrap();
            let init = init_encoder(model, 22, 50, &cfg.widths, &mut rng_for(1, &[1]));
            let out = pretrain_ssl(&data.train, init, &cfg).unwrap();
            assert_eq!(out.history.len(), 120);
            assert!(out.history[119].loss_total < out.history[0].loss_total, "{model}");
        }
    }

    #[test]
    fn zero_learning_rate_freezes_parameters() {
        let (ds, fold) = tiny();
        let cfg = RunConfig {
            ssl_lr: 0.0,
            ssl_epochs: 5,
            ..small_cfg(ModelKind::Cortical)
        };
        let data = prepare_fold(&ds, &fold, cfg.k).unwrap();
        let init = init_encoder(cfg.model, 22, 50, &cfg.widths, &mut rng_for(1, &[1]));
        let out = pretrain_ssl(&data.train, init.clone(), &cfg).unwrap();
        assert_eq!(out.params, init);
        assert!(out.history.windows(2).all(|w| w[0].loss_total == w[1].loss_total));
    }

    #[test]
    fn head_fits_leaked_targets() {
        let mut rng = rng_for(3, &[]);
        let y = Matrix::random_uniform(40, 3, 1.0, &mut rng);
        let cfg = RunConfig {
            head_epochs: 3000,
            head_lr: 0.01,
            head_weight_decay: 0.0,
            ..RunConfig::default()
        };
        let out = train_head((&y, &y), (&y, &y), HeadParams::init(3, 3, &mut rng), &cfg).unwrap();
        assert_eq!(out.history.len(), 3000);
        let fit = mse(&predict(&y, &out.params).unwrap(), &y).unwrap();
        assert!(fit < 1e-6, "{fit}");
    }

    #[test]
    fn constant_features_reach_target_variance() {
        let mut rng = rng_for(5, &[]);
        let y = Matrix::random_uniform(60, 2, 1.0, &mut rng);
        let x = Matrix::ones(60, 1);
        let cfg = RunConfig {
            head_epochs: 2000,
            head_lr: 0.01,
            head_weight_decay: 0.0,
            ..RunConfig::default()
        };
        let out = train_head((&x, &y), (&x, &y), HeadParams::init(1, 2, &mut rng), &cfg).unwrap();
        let floor = mean_baseline_mse(&y, &y).unwrap();
        let got = out.history.iter().map(|h| h.train_mse).fold(f64::INFINITY, f64::min);
        assert!(got >= floor - 1e-12 && got < floor * 1.01, "{got} vs {floor}");
    }

    #[test]
    fn fold_evaluation_is_finite_and_deterministic() {
        let (ds, fold) = tiny();
        let cfg = small_cfg(ModelKind::Ccagnn);
        let a = evaluate_fold(&ds, &fold, &cfg).unwrap().report;
        let b = evaluate_fold(&ds, &fold, &cfg).unwrap().report;
        assert_eq!(a, b);
        assert!(a.test_mse.is_finite() && a.test_mse >= 0.0);
        assert_eq!(a.rates_audio.len(), 8);
        assert!(a.auc_audio <= 7.0 && a.auc_visual >= 0.0);
    }
}
