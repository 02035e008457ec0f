//! Records a small expression on a tape, differentiates it and takes Adam steps.

use ccgnn::diffmath::{adam_step, finite_difference_check, AdamConfig, AdamState, Matrix, Tape};

fn main() -> ccgnn::Result<()> {
    let x = Matrix::from_rows(&[[0.5, -1.0, 2.0], [1.5, 0.0, -0.5]]);
    let target = Matrix::from_rows(&[[1.0], [-1.0]]);
    let mut w = vec![Matrix::from_rows(&[[0.1], [0.2], [-0.3]])];

    // loss = ‖tanh(X W) − y‖²
    let build = |tape: &mut Tape, p: &[ccgnn::diffmath::Var]| {
        let xv = tape.constant(x.clone());
        let y = tape.constant(target.clone());
        let h = tape.matmul(xv, p[0])?;
        let a = tape.tanh(h)?;
        let d = tape.sub(a, y)?;
        tape.frobenius_sq(d)
    };

    let check = finite_difference_check(build, &w, 1e-6)?;
    println!("gradient check: max relative error {:.2e}", check.max_rel_error);

    let mut state = AdamState::new(&w, AdamConfig::default());
    for step in 0..=200 {
        let mut tape = Tape::new();
        let p = tape.param(w[0].clone());
        let loss = build(&mut tape, &[p])?;
        if step % 50 == 0 {
            println!("step {step:>3}  loss {:.6}", tape.value(loss).scalar());
        }
        let grads = tape.backward(loss)?;
        let g = grads.get_or_zeros(p, &w[0]);
        adam_step(&mut w, &[g], &mut state, 0.05, 0.0)?;
    }
    println!("learned weights {:?}", w[0].as_slice());
    Ok(())
}
