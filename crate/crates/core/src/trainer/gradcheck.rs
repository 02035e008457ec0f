//! Finite-difference check of the full self-supervised loss of either model.

use rand_distr::{Distribution, StandardNormal};

use super::{init_encoder, ssl_loss, ModelKind, SplitData, STREAM_AUGMENT, STREAM_ENCODER_INIT};
use crate::diffmath::{finite_difference_check, GradCheckReport, Matrix, Var};
use crate::encoders::{AugmentConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::objectives::CcaConfig;
use crate::seed::rng_for;
use crate::tgraph::{build_prior_frame_graph, normalize_adjacency};

/// Problem size for [`model_gradcheck`]; the defaults are small enough to
/// perturb every parameter entry in a few seconds.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckSetup {
    pub nodes: usize,
    pub audio_dim: usize,
    pub visual_dim: usize,
    pub widths: Vec<usize>,
    pub k: usize,
    pub step: f64,
    pub lambda: f64,
}

impl Default for GradCheckSetup {
    fn default() -> Self {
        Self {
            nodes: 12,
            audio_dim: 5,
            visual_dim: 7,
            widths: vec![8, 4],
            k: 3,
            step: 1e-6,
            lambda: 1e-4,
        }
    }
}

/// Tolerance on the maximum relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Random inputs on one prior-frame graph.
pub fn gradcheck_split(setup: &GradCheckSetup, seed: u64) -> Result<SplitData> {
    let mut rng = rng_for(seed, &[0]);
    let mut normal = |rows, cols| Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng));
    let graph = build_prior_frame_graph(setup.nodes, setup.k)?;
    Ok(SplitData {
        sequences: vec![0],
        adjacency: normalize_adjacency(&graph).into_matrix(),
        graph,
        audio: normal(setup.nodes, setup.audio_dim),
        visual: normal(setup.nodes, setup.visual_dim),
        clean: Matrix::zeros(setup.nodes, 1),
    })
}

/// Compares analytic and central-difference gradients of the complete
/// CCA loss with respect to every encoder parameter. The baseline's
/// augmentations are redrawn from the same seed on every evaluation, so the
/// loss is a fixed smooth function of the parameters.
pub fn model_gradcheck(model: ModelKind, seed: u64, setup: &GradCheckSetup) -> Result<GradCheckReport> {
    let split = gradcheck_split(setup, seed)?;
    let template = init_encoder(
        model,
        setup.audio_dim,
        setup.visual_dim,
        &setup.widths,
        &mut rng_for(seed, &[STREAM_ENCODER_INIT]),
    );
    let mut flat = Vec::new();
    template.visit(&mut |_, m: &Matrix| flat.push(m.clone()));
    let cca = CcaConfig::new(setup.lambda)?;
    let build = |tape: &mut crate::diffmath::Tape, vars: &[Var]| -> Result<Var> {
        let mut it = vars.iter();
        let bound: EncoderParams<Var> = template.try_map(&mut |_, _| {
            it.next()
                .copied()
                .ok_or_else(|| Error::TapeInvariant("parameter count".into()))
        })?;
        let mut rng = rng_for(seed, &[STREAM_AUGMENT]);
        Ok(ssl_loss(tape, &bound, &split, &cca, AugmentConfig::default(), &mut rng)?.total)
    };
    finite_difference_check(build, &flat, setup.step)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cortical_gradients_match() {
        let setup = GradCheckSetup {
            nodes: 6,
            widths: vec![4],
            ..GradCheckSetup::default()
        };
        let r = model_gradcheck(ModelKind::Cortical, 3, &setup).unwrap();
        assert!(r.max_rel_error < GRADCHECK_TOLERANCE, "{r:?}");
    }

    #[test]
    fn baseline_gradients_match() {
        let setup = GradCheckSetup {
            nodes: 6,
            widths: vec![4, 3],
            ..GradCheckSetup::default()
        };
        let r = model_gradcheck(ModelKind::Ccagnn, 3, &setup).unwrap();
        assert!(r.max_rel_error < GRADCHECK_TOLERANCE, "{r:?}");
    }
}
