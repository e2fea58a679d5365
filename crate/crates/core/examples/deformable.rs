//! Deformable sampling with equivariant offsets (RE-DCN) and the
//! orientation-aligned rotation-invariant variant (RI-DCN).

use equikit::cyclic::{lift_conv, CyclicGroup, GroupFeature};
use equikit::deformable::{re_dcn_forward, ri_dcn_forward};
use equikit::tensor::{rotate_image, Conv2dSpec, Tensor};
use equikit::vector_field::{apply_rg_tg, VectorField};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> equikit::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (n, k, s) = (4, 9, 13);
    let group = CyclicGroup::new(n)?;
    let image = Tensor::randn(&[2, s, s], 1.0, &mut rng);
    let feat = lift_conv(&image, &Tensor::randn(&[3, 2, 3, 3], 0.5, &mut rng), n, Conv2dSpec::same(3))?;
    let offsets = VectorField::new(Tensor::randn(&[k, 2, s, s], 1.5, &mut rng))?;
    let reference = VectorField::new(Tensor::randn(&[1, 2, s, s], 1.0, &mut rng))?;
    let w_re = Tensor::randn(&[3, 3, k], 0.3, &mut rng);
    let w_ri = Tensor::randn(&[5, 3 * n, k], 0.3, &mut rng);

    let re = GroupFeature::new(re_dcn_forward(&feat.tensor, &offsets.tensor, &w_re)?)?;
    let ri = ri_dcn_forward(&feat.tensor, &offsets.tensor, &reference.tensor, &w_ri, None)?;
    println!("RE-DCN out {:?}, RI-DCN out {:?}", re.dims(), ri.shape());

    for g in 1..n {
        let feat_g = group.act(g, &feat)?;
        let off_g = apply_rg_tg(g, n, &offsets);
        let ref_g = apply_rg_tg(g, n, &reference);
        let re_err = re_dcn_forward(&feat_g.tensor, &off_g.tensor, &w_re)?.max_abs_diff(&group.act(g, &re)?.tensor);
        let ri_err =
            ri_dcn_forward(&feat_g.tensor, &off_g.tensor, &ref_g.tensor, &w_ri, None)?.max_abs_diff(&rotate_image(&ri, g as i64, n));
        println!("g={g}: RE-DCN equivariance {re_err:.1e}, RI-DCN invariance {ri_err:.1e}");
    }
    Ok(())
}
