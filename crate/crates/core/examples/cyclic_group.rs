//! Lifting and group convolutions commute with the C4 action exactly.

use equikit::cyclic::{group_conv, group_pool, lift_conv, CyclicGroup};
use equikit::tensor::{rotate_image, Conv2dSpec, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> equikit::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let group = CyclicGroup::new(4)?;
    let image = Tensor::randn(&[3, 17, 17], 1.0, &mut rng);
    let lift_w = Tensor::randn(&[4, 3, 5, 5], 0.3, &mut rng);
    let group_w = Tensor::randn(&[4, 4, 4, 3, 3], 0.3, &mut rng);

    let net = |x: &Tensor| -> equikit::Result<_> {
        let f = lift_conv(x, &lift_w, 4, Conv2dSpec::same(5))?;
        group_conv(&f, &group_w, Conv2dSpec::same(3))
    };
    let f = net(&image)?;
    println!("feature dims [C, N, H, W] = {:?}", f.dims());

    for g in group.elements() {
        let lhs = net(&rotate_image(&image, g as i64, 4))?;
        let rhs = group.act(g, &f)?;
        let pooled = group_pool(&lhs).max_abs_diff(&rotate_image(&group_pool(&f), g as i64, 4));
        println!(
            "g={g} ({:>5.1}°): equivariance error {:.1e}, pooled invariance error {:.1e}",
            group.angle(g).to_degrees(),
            lhs.tensor.max_abs_diff(&rhs.tensor),
            pooled
        );
    }
    Ok(())
}
