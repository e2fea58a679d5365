//! Orientation-indexed features become a 2-D vector field that rotates
//! together with the input.

use equikit::cyclic::lift_conv;
use equikit::tensor::{rotate_image, Conv2dSpec, Tensor};
use equikit::vector_field::{apply_rg_tg, to_vector_field};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> equikit::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 8;
    let image = Tensor::randn(&[1, 15, 15], 1.0, &mut rng);
    let w = Tensor::randn(&[2, 1, 5, 5], 0.3, &mut rng);

    let field = to_vector_field(&lift_conv(&image, &w, n, Conv2dSpec::same(5))?);
    let (vx, vy) = field.at(0, 7, 7);
    println!(
        "{} channels on a {:?} grid; centre vector ({vx:.3}, {vy:.3})",
        field.channels(),
        field.hw()
    );

    // Quarter turns of a C8 network are exact.
    let g = 2;
    let rotated = to_vector_field(&lift_conv(&rotate_image(&image, g as i64, n), &w, n, Conv2dSpec::same(5))?);
    let expected = apply_rg_tg(g, n, &field);
    println!("90° rotation: field error {:.1e}", rotated.tensor.max_abs_diff(&expected.tensor));
    Ok(())
}
