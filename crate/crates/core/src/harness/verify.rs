use crate::cyclic::{group_conv, group_pool, lift_conv, orientation_align, CyclicGroup, GroupFeature};
use crate::deformable::{re_dcn_forward, ri_dcn_forward};
use crate::detector::{Detector, DetectorConfig};
use crate::error::{Error, Result};
use crate::tensor::{kernels::pad_to_odd, rotate_image, Conv2dSpec, Tensor};
use crate::vector_field::{apply_rg_tg, to_vector_field, VectorField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::time::Instant;

/// Every layer with a registered commutation relation, plus the negative
/// control `strided_unpadded`.
pub const LAYERS: [&str; 11] = [
    "identity",
    "lift_conv",
    "group_conv",
    "group_pool",
    "to_vector_field",
    "orientation_align",
    "re_dcn",
    "ri_dcn",
    "detector",
    "strided_padded",
    "strided_unpadded",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyOptions {
    pub group: usize,
    pub trials: usize,
    pub seed: u64,
    /// Max absolute error on quarter turns.
    pub exact_tol: f64,
    /// Max absolute error of the full detector on quarter turns.
    pub detector_tol: f64,
    /// Relative L2 error inside the inscribed disk for other rotations.
    pub approx_tol: f64,
    /// Lower bound on the negative control's error.
    pub control_min: f64,
    /// Spatial size of random inputs (odd).
    pub size: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            group: 4,
            trials: 100,
            seed: 0,
            exact_tol: 1e-8,
            detector_tol: 1e-6,
            approx_tol: 0.05,
            control_min: 1e-3,
            size: 33,
        }
    }
}

/// Worst commutator error of one layer for one group element.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerCheck {
    pub layer: String,
    pub g: usize,
    pub angle_deg: f64,
    /// `max_abs` on quarter turns, `rel_l2_disk` otherwise.
    pub metric: String,
    pub error: f64,
    pub tolerance: f64,
    /// The relation is expected not to hold; passes when `error > tolerance`.
    pub expected_fail: bool,
    /// Counts toward the report's overall verdict. The hard argmax of the
    /// vector-field transform has no relative bound off the quarter turns,
    /// so those checks are reported but not gated.
    pub gated: bool,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivReport {
    pub group: usize,
    pub trials: usize,
    pub checks: Vec<LayerCheck>,
    pub pass: bool,
    pub runtime_seconds: f64,
}

/// Sum of random Gaussian blobs, `[planes, s, s]`.
pub fn smooth_field(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let s = shape[shape.len() - 1];
    let planes: usize = shape[..shape.len() - 2].iter().product();
    let r = (s as f64 - 1.0) / 2.0;
    let mut data = vec![0.0; planes * s * s];
    for p in 0..planes {
        for _ in 0..6 {
            let (bx, by) = (rng.random_range(r * 0.4..r * 1.6), rng.random_range(r * 0.4..r * 1.6));
            let sig: f64 = rng.random_range(0.1 * s as f64..0.2 * s as f64);
            let a: f64 = rng.random_range(-1.0..1.0);
            for y in 0..s {
                for x in 0..s {
                    let d2 = (x as f64 - bx).powi(2) + (y as f64 - by).powi(2);
                    data[p * s * s + y * s + x] += a * (-d2 / (2.0 * sig * sig)).exp();
                }
            }
        }
    }
    Tensor::new(shape, data).expect("field shape")
}

/// `‖a − b‖ / ‖b‖` over pixels within `radius` of the centre.
pub fn rel_l2_disk(a: &Tensor, b: &Tensor, radius: f64) -> f64 {
    let (h, w) = a.hw();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let (mut num, mut den) = (0.0, 0.0);
    for (i, (x, y)) in a.data().iter().zip(b.data()).enumerate() {
        let p = i % (h * w);
        if ((p % w) as f64 - cx).hypot((p / w) as f64 - cy) <= radius {
            num += (x - y).powi(2);
            den += y * y;
        }
    }
    if den == 0.0 {
        return if num == 0.0 { 0.0 } else { f64::INFINITY };
    }
    (num / den).sqrt()
}

struct Ctx {
    group: CyclicGroup,
    n: usize,
    s: usize,
}

impl Ctx {
    fn input(&self, shape: &[usize], exact: bool, rng: &mut ChaCha8Rng) -> Tensor {
        if exact {
            Tensor::randn(shape, 1.0, rng)
        } else {
            smooth_field(shape, rng)
        }
    }

    /// Gaussian noise on quarter turns; otherwise the lift of a smooth
    /// image, which is smooth along the orientation axis as well.
    fn feat(&self, c: usize, exact: bool, rng: &mut ChaCha8Rng) -> GroupFeature {
        if exact {
            return GroupFeature::new(Tensor::randn(&[c, self.n, self.s, self.s], 1.0, rng)).expect("feature");
        }
        let img = smooth_field(&[2, self.s, self.s], rng);
        let w = Tensor::randn(&[c, 2, 5, 5], 1.0, rng);
        lift_conv(&img, &w, self.n, Conv2dSpec::same(5)).expect("lift")
    }

    fn act(&self, g: usize, f: &GroupFeature) -> GroupFeature {
        self.group.act(g, f).expect("order")
    }

    fn rot(&self, g: usize, t: &Tensor) -> Tensor {
        rotate_image(t, g as i64, self.n)
    }

    /// Smooth fields get a random mean per channel that dominates the blob
    /// sum, so that angles are well defined everywhere.
    fn vf(&self, k: usize, exact: bool, rng: &mut ChaCha8Rng) -> VectorField {
        let mut t = self.input(&[k, 2, self.s, self.s], exact, rng);
        if exact {
            t = t.scale(2.0);
        } else {
            let plane = self.s * self.s;
            for ch in 0..k {
                let a = rng.random_range(0.0..TAU);
                let (sn, c) = a.sin_cos();
                for (i, v) in t.data_mut()[2 * ch * plane..2 * (ch + 1) * plane].iter_mut().enumerate() {
                    *v += 4.0 * if i < plane { c } else { sn };
                }
            }
        }
        VectorField::new(t).expect("field")
    }
}

/// Returns `(lhs, rhs)` of the relation for one random draw.
fn relation(layer: &str, cx: &Ctx, g: usize, exact: bool, rng: &mut ChaCha8Rng) -> Result<(Tensor, Tensor)> {
    let spec3 = Conv2dSpec::same(3);
    Ok(match layer {
        "identity" => {
            let x = cx.input(&[2, cx.s, cx.s], exact, rng);
            (cx.rot(g, &x), cx.rot(g, &x))
        }
        "lift_conv" => {
            let x = cx.input(&[3, cx.s, cx.s], exact, rng);
            let w = Tensor::randn(&[2, 3, 5, 5], 1.0, rng);
            let lhs = lift_conv(&cx.rot(g, &x), &w, cx.n, Conv2dSpec::same(5))?;
            (lhs.tensor, cx.act(g, &lift_conv(&x, &w, cx.n, Conv2dSpec::same(5))?).tensor)
        }
        "group_conv" => {
            let f = cx.feat(2, exact, rng);
            let w = Tensor::randn(&[3, 2, cx.n, 3, 3], 1.0, rng);
            (
                group_conv(&cx.act(g, &f), &w, spec3)?.tensor,
                cx.act(g, &group_conv(&f, &w, spec3)?).tensor,
            )
        }
        "group_pool" => {
            let f = cx.feat(2, exact, rng);
            (group_pool(&cx.act(g, &f)), cx.rot(g, &group_pool(&f)))
        }
        "to_vector_field" => {
            let f = cx.feat(3, exact, rng);
            (
                to_vector_field(&cx.act(g, &f)).tensor,
                apply_rg_tg(g, cx.n, &to_vector_field(&f)).tensor,
            )
        }
        "orientation_align" => {
            let f = cx.feat(2, exact, rng);
            let r = cx.vf(1, exact, rng);
            let angle = |v: &VectorField| {
                let plane = cx.s * cx.s;
                let d = v.tensor.data();
                Tensor::from_fn(&[cx.s, cx.s], |p| d[plane + p].atan2(d[p]))
            };
            let lhs = orientation_align(&cx.act(g, &f), &angle(&apply_rg_tg(g, cx.n, &r)))?;
            let rhs = orientation_align(&f, &angle(&r))?;
            (lhs.tensor, cx.rot(g, &rhs.tensor))
        }
        "re_dcn" => {
            let f = cx.feat(2, exact, rng);
            let off = cx.vf(3, exact, rng);
            let w = Tensor::randn(&[2, 2, 3], 1.0, rng);
            let lhs = re_dcn_forward(&cx.act(g, &f).tensor, &apply_rg_tg(g, cx.n, &off).tensor, &w)?;
            let rhs = GroupFeature::new(re_dcn_forward(&f.tensor, &off.tensor, &w)?)?;
            (lhs, cx.act(g, &rhs).tensor)
        }
        "ri_dcn" => {
            let f = cx.feat(2, exact, rng);
            let off = cx.vf(3, exact, rng);
            let r = cx.vf(1, exact, rng);
            let w = Tensor::randn(&[2, 2 * cx.n, 3], 1.0, rng);
            let mw = Tensor::randn(&[3, 2 * cx.n], 0.3, rng);
            let mb = Tensor::randn(&[3], 0.3, rng);
            let lhs = ri_dcn_forward(
                &cx.act(g, &f).tensor,
                &apply_rg_tg(g, cx.n, &off).tensor,
                &apply_rg_tg(g, cx.n, &r).tensor,
                &w,
                Some((&mw, &mb)),
            )?;
            let rhs = ri_dcn_forward(&f.tensor, &off.tensor, &r.tensor, &w, Some((&mw, &mb)))?;
            (lhs, cx.rot(g, &rhs))
        }
        "detector" => {
            let cfg = DetectorConfig {
                n: cx.n,
                ..DetectorConfig::default()
            };
            let model = Detector::new(cfg, rng.random())?;
            let img = cx.input(&[3, cx.s, cx.s], exact, rng);
            let a = model.predict(&cx.rot(g, &img))?;
            let b = model.predict(&img)?;
            let pts = apply_rg_tg(g, cx.n, &VectorField::new(b.refined)?).tensor;
            let logits = cx.rot(g, &b.logits);
            let join = |p: &Tensor, l: &Tensor| {
                Tensor::new(&[p.numel() + l.numel()], p.data().iter().chain(l.data()).copied().collect()).expect("flat")
            };
            // Flattened outputs lose the spatial layout used by the disk
            // metric, so quarter turns only.
            (join(&a.refined, &a.logits), join(&pts, &logits))
        }
        "strided_padded" | "strided_unpadded" => {
            let even = cx.s + 1;
            let mut x = cx.input(&[3, even, even], true, rng);
            if layer == "strided_padded" {
                x = pad_to_odd(&x);
            }
            let w = Tensor::randn(&[2, 3, 3, 3], 1.0, rng);
            let spec = Conv2dSpec::new(2, 1);
            let lhs = lift_conv(&cx.rot(g, &x), &w, cx.n, spec)?;
            (lhs.tensor, cx.act(g, &lift_conv(&x, &w, cx.n, spec)?).tensor)
        }
        other => return Err(Error::UnknownLayer(other.to_string())),
    })
}

/// Evaluates every requested layer's commutation relation for each group
/// element on `trials` random inputs. Quarter turns use Gaussian inputs and
/// the max absolute error; other elements use smooth inputs and the relative
/// L2 error inside the inscribed disk. The detector and the strided checks
/// run on quarter turns only.
pub fn verify_equivariance(opts: &VerifyOptions, layers: &[&str]) -> Result<EquivReport> {
    let start = Instant::now();
    let group = CyclicGroup::new(opts.group)?;
    let cx = Ctx {
        group,
        n: opts.group,
        s: opts.size | 1,
    };
    let mut checks = Vec::new();
    for (li, &layer) in layers.iter().enumerate() {
        if !LAYERS.contains(&layer) {
            return Err(Error::UnknownLayer(layer.to_string()));
        }
        let quarter_only = matches!(layer, "detector" | "strided_padded" | "strided_unpadded");
        let trials = if layer == "detector" {
            opts.trials.clamp(1, 25)
        } else {
            opts.trials
        };
        for g in group.elements() {
            let exact = group.is_quarter_turn(g);
            if quarter_only && (!exact || g == 0) {
                continue;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ ((li as u64) << 32) ^ g as u64);
            let mut err: f64 = 0.0;
            for _ in 0..trials {
                let (lhs, rhs) = relation(layer, &cx, g, exact, &mut rng)?;
                let e = if exact {
                    lhs.max_abs_diff(&rhs)
                } else {
                    rel_l2_disk(&lhs, &rhs, (cx.s as f64 - 1.0) / 2.0 - 4.0)
                };
                err = err.max(e);
            }
            let expected_fail = layer == "strided_unpadded";
            let tolerance = if expected_fail {
                opts.control_min
            } else if !exact {
                opts.approx_tol
            } else if layer == "detector" {
                opts.detector_tol
            } else {
                opts.exact_tol
            };
            let pass = if expected_fail { err > tolerance } else { err < tolerance };
            checks.push(LayerCheck {
                layer: layer.to_string(),
                g,
                angle_deg: group.angle(g).to_degrees(),
                metric: if exact { "max_abs" } else { "rel_l2_disk" }.into(),
                error: err,
                tolerance,
                expected_fail,
                gated: exact || layer != "to_vector_field",
                pass,
            });
        }
    }
    Ok(EquivReport {
        group: opts.group,
        trials: opts.trials,
        pass: checks.iter().all(|c| c.pass || !c.gated),
        checks,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}
