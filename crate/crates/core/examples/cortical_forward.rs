//! One forward pass of a two-block cortical encoder, with per-block gate statistics.

use ccgnn::diffmath::Tape;
use ccgnn::encoders::{bind_params, cortical_stack_forward, CorticalParams, EncoderParams};
use ccgnn::features::{synth_av_generate, Fold, SynthConfig};
use ccgnn::seed::rng_for;
use ccgnn::trainer::{firing_rates, prepare_fold, GATE_THRESHOLD, SIGNED_THRESHOLD};

fn main() -> ccgnn::Result<()> {
    let ds = synth_av_generate(
        &SynthConfig {
            sequences: 4,
            ..SynthConfig::default()
        },
        5,
    )?;
    let fold = Fold {
        id: 0,
        train: vec![0, 1],
        validation: vec![2],
        test: vec![3],
    };
    let data = prepare_fold(&ds, &fold, 3)?;
    let params = CorticalParams::init(ds.audio_dim(), ds.visual_dim(), &[32, 16], &mut rng_for(5, &[1]));

    let mut tape = Tape::new();
    let EncoderParams::Cortical(p) = bind_params(&mut tape, &EncoderParams::Cortical(params)) else {
        unreachable!()
    };
    let adj = tape.constant(data.train.adjacency.clone());
    let xa = tape.constant(data.train.audio.clone());
    let xv = tape.constant(data.train.visual.clone());
    let out = cortical_stack_forward(&mut tape, adj, xa, xv, &p, ds.frames())?;
    let trace = out.trace(&tape);

    println!(
        "{} nodes; final views {:?}",
        data.train.num_nodes(),
        tape.value(out.z_a).shape()
    );
    for (b, block) in trace.blocks.iter().enumerate() {
        let f = &block.state.filters;
        println!(
            "block {b}: mean f_a {:.3}  f_v {:.3}  f_m {:.3}  f_w {:.3}",
            f.f_a.mean(),
            f.f_v.mean(),
            f.f_m.mean(),
            f.f_w.mean()
        );
        let gate = firing_rates(&f.f_a, GATE_THRESHOLD)?;
        let signed = firing_rates(&block.out_a, SIGNED_THRESHOLD)?;
        println!(
            "         audio gate firing {:.3}, output firing {:.3}",
            gate.iter().sum::<f64>() / gate.len() as f64,
            signed.iter().sum::<f64>() / signed.len() as f64
        );
    }
    Ok(())
}
