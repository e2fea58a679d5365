//! Reverse-mode gradients on the tape, checked against finite differences.

use equikit::autograd::{grad_check, Tape};
use equikit::tensor::{Conv2dSpec, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> equikit::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let image = Tensor::randn(&[2, 8, 8], 1.0, &mut rng);
    let weight = Tensor::randn(&[4, 2, 3, 3], 0.5, &mut rng);

    let tape = Tape::new();
    let x = tape.constant(image.clone());
    let w = tape.leaf(weight.clone());
    let loss = x.conv2d(w, Conv2dSpec::same(3))?.relu().mean();
    let grads = tape.backward(loss)?;
    println!("loss {:.6}, |dL/dw|max {:.4}", loss.value().item(), grads.get_or_zeros(w).max_abs());

    let report = grad_check(&[image, weight], 1e-5, 1e-4, |_, v| {
        Ok(v[0].conv2d(v[1], Conv2dSpec::same(3))?.sigmoid().sum())
    })?;
    println!(
        "finite-difference check: max rel. error {:.2e} over {} evaluations",
        report.max_rel_err, report.evaluations
    );
    Ok(())
}
