//! Finite-difference check of the full self-supervised loss for both encoders.

use ccgnn::trainer::{model_gradcheck, GradCheckSetup, ModelKind, GRADCHECK_TOLERANCE};

fn main() -> ccgnn::Result<()> {
    let setup = GradCheckSetup::default();
    println!(
        "{} nodes, audio {} / visual {} features, widths {:?}, k = {}, step {:e}",
        setup.nodes, setup.audio_dim, setup.visual_dim, setup.widths, setup.k, setup.step
    );
    for model in ModelKind::ALL {
        let r = model_gradcheck(model, 0, &setup)?;
        println!(
            "{model:<8} max relative error {:.2e} over {} entries ({} at roundoff level) -> {}",
            r.max_rel_error,
            r.entries_checked,
            r.within_roundoff,
            if r.max_rel_error < GRADCHECK_TOLERANCE {
                "ok"
            } else {
                "too large"
            }
        );
    }
    Ok(())
}
