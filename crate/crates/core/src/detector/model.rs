use super::config::{DetectorConfig, FEATURE_STRIDE};
use super::params::{init_params, ModelSummary, ParamStore};
use crate::autograd::{Tape, Var};
use crate::cyclic::diff::{group_conv, group_pool, lift_conv};
use crate::deformable::{deform_conv, re_dcn, ri_dcn, Modulation};
use crate::error::{Error, Result};
use crate::geometry::{convex_hull, hull_center, Point, PointSet};
use crate::tensor::{kernels::pad_to_odd, Conv2dSpec, Tensor};
use crate::vector_field::to_vector_field_var;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Smallest image side that still leaves a 3×3 feature grid.
pub const MIN_IMAGE_SIDE: usize = 2 * FEATURE_STRIDE + 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Detector {
    pub cfg: DetectorConfig,
    pub params: ParamStore,
}

/// Outputs of one forward pass on a tape. Vector fields are in feature-cell
/// units in the y-up frame.
pub struct ForwardOutput<'t> {
    /// `[K, 2, H', W']` initial point set.
    pub init: Var<'t>,
    /// `[K, 2, H', W']` initial plus refinement.
    pub refined: Var<'t>,
    /// `[num_classes, H', W']`.
    pub logits: Var<'t>,
    /// Channels entering the classification DCN.
    pub pre_head_channels: usize,
    /// Cells whose alignment reference was too short to define an angle.
    pub degenerate_refs: usize,
}

/// Detached network outputs for one image.
#[derive(Clone, Debug)]
pub struct Prediction {
    /// `(H', W')`.
    pub grid: (usize, usize),
    pub init: Tensor,
    pub refined: Tensor,
    pub logits: Tensor,
    /// Refined point sets in image pixels, one per cell in row-major order.
    pub point_sets: Vec<PointSet>,
}

/// Fixed starting layout used when point sets are regressed directly: a
/// centred square grid when `k` is a square number, otherwise a unit ring.
pub fn point_template(k: usize) -> Vec<(f64, f64)> {
    let s = (k as f64).sqrt().round() as usize;
    if s * s == k {
        let h = (s as f64 - 1.0) / 2.0;
        return (0..k).map(|i| ((i % s) as f64 - h, h - (i / s) as f64)).collect();
    }
    (0..k)
        .map(|i| {
            let (sn, c) = (std::f64::consts::TAU * i as f64 / k as f64).sin_cos();
            (c, sn)
        })
        .collect()
}

/// Image-pixel point sets from a `[K, 2, H', W']` field: cell `(i, j)` sits
/// at pixel `(4j, 4i)` and a vector `(vx, vy)` moves by `4·(vx, −vy)`.
pub fn points_in_pixels(field: &Tensor) -> Vec<PointSet> {
    let s = field.shape();
    let (k, h, w) = (s[0], s[2], s[3]);
    let plane = h * w;
    let d = field.data();
    let st = FEATURE_STRIDE as f64;
    (0..plane)
        .map(|p| {
            let (i, j) = ((p / w) as f64, (p % w) as f64);
            (0..k)
                .map(|ki| Point::new(st * (j + d[2 * ki * plane + p]), st * (i - d[(2 * ki + 1) * plane + p])))
                .collect()
        })
        .collect()
}

/// Per-cell alignment reference `v₀ − centroid(hull(v))` as a `[1, 2, H', W']`
/// field, falling back to the mean vector for degenerate hulls. Also returns
/// the number of fallbacks.
pub fn reference_field(field: &Tensor) -> (Tensor, usize) {
    let s = field.shape();
    let (k, h, w) = (s[0], s[2], s[3]);
    let plane = h * w;
    let d = field.data();
    let mut out = vec![0.0; 2 * plane];
    let mut fallbacks = 0;
    for p in 0..plane {
        let v: Vec<Point> = (0..k)
            .map(|ki| Point::new(d[2 * ki * plane + p], d[(2 * ki + 1) * plane + p]))
            .collect();
        let c = match convex_hull(&v).and_then(|h| hull_center(&h)) {
            Ok(c) => c,
            Err(_) => {
                fallbacks += 1;
                let n = k as f64;
                Point::new(v.iter().map(|q| q.x).sum::<f64>() / n, v.iter().map(|q| q.y).sum::<f64>() / n)
            }
        };
        out[p] = v[0].x - c.x;
        out[plane + p] = v[0].y - c.y;
    }
    (Tensor::from_parts(vec![1, 2, h, w], out), fallbacks)
}

fn flat_conv1x1<'t>(x: Var<'t>, w: Var<'t>, b: Var<'t>) -> Var<'t> {
    let s = x.shape();
    let c: usize = s[..s.len() - 2].iter().product();
    let (h, wd) = (s[s.len() - 2], s[s.len() - 1]);
    let o = w.shape()[0];
    w.matmul(x.reshape(&[c, h * wd])).add_channel_bias(b).reshape(&[o, h, wd])
}

impl Detector {
    pub fn new(cfg: DetectorConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = init_params(&cfg, &mut rng)?;
        Ok(Self { cfg, params })
    }

    pub fn summary(&self) -> ModelSummary {
        ModelSummary::of(&self.cfg, &self.params)
    }

    /// Records every parameter on `tape`, tracked when `trainable`.
    pub fn bind<'t>(&self, tape: &'t Tape, trainable: bool) -> Vec<Var<'t>> {
        self.params
            .iter()
            .map(|p| {
                if trainable {
                    tape.leaf(p.value.clone())
                } else {
                    tape.constant(p.value.clone())
                }
            })
            .collect()
    }

    /// Feature grid size for an `h × w` image.
    pub fn grid_size(h: usize, w: usize) -> (usize, usize) {
        let down = |n: usize| ((n | 1) - 1) / 2 + 1;
        (down(down(h) | 1), down(down(w) | 1))
    }

    pub fn forward<'t>(&self, tape: &'t Tape, vars: &[Var<'t>], image: &Tensor) -> Result<ForwardOutput<'t>> {
        let cfg = &self.cfg;
        let s = image.shape();
        if s.len() != 3 || s[0] != 3 {
            return Err(crate::error::shape_err("forward", format!("image {s:?} must be [3,H,W]")));
        }
        if s[1] < MIN_IMAGE_SIDE || s[2] < MIN_IMAGE_SIDE {
            return Err(Error::ImageTooSmall {
                h: s[1],
                w: s[2],
                min: MIN_IMAGE_SIDE,
            });
        }
        let p = |name: &str| -> Result<Var<'t>> { Ok(vars[self.params.index_of(name)?]) };
        let gconv = |x: Var<'t>, layer: &str, relu: bool| -> Result<Var<'t>> {
            let y = group_conv(x, p(&format!("{layer}.weight"))?, Conv2dSpec::same(3))?.add_channel_bias(p(&format!("{layer}.bias"))?);
            Ok(if relu { y.relu() } else { y })
        };

        let x = tape.constant(pad_to_odd(image));
        let f = lift_conv(x, p("backbone.lift.weight")?, cfg.n, Conv2dSpec::new(2, 2))?
            .add_channel_bias(p("backbone.lift.bias")?)
            .relu()
            .pad_to_odd();
        let f = group_conv(f, p("backbone.conv.weight")?, Conv2dSpec::new(2, 1))?
            .add_channel_bias(p("backbone.conv.bias")?)
            .relu();
        let fs = f.shape();
        let (h, w) = (fs[2], fs[3]);
        let k = cfg.k;

        // Localisation branch.
        let l1 = gconv(f, "loc.conv1", true)?;
        let l2 = gconv(l1, "loc.conv2", true)?;
        let l3 = gconv(l2, "loc.conv3", false)?;
        let init = if cfg.ablation.vector_field {
            to_vector_field_var(l3)
        } else {
            let t = point_template(k);
            let template = Tensor::from_fn(&[k, 2, h, w], |i| {
                let (ki, axis) = (i / (2 * h * w), (i / (h * w)) % 2);
                if axis == 0 {
                    t[ki].0
                } else {
                    t[ki].1
                }
            });
            flat_conv1x1(l3, p("loc.offset.weight")?, p("loc.offset.bias")?)
                .reshape(&[k, 2, h, w])
                .add(tape.constant(template))
        };
        let refine = re_dcn(l2, init.detach(), p("loc.refine.weight")?)?;
        let delta = if cfg.ablation.vector_field {
            to_vector_field_var(refine)
        } else {
            flat_conv1x1(refine, p("loc.refine_offset.weight")?, p("loc.refine_offset.bias")?).reshape(&[k, 2, h, w])
        };
        let refined = init.add(delta);

        // Classification branch.
        let c1 = gconv(f, "cls.conv1", true)?;
        let c2 = gconv(c1, "cls.conv2", true)?;
        let c3 = gconv(c2, "cls.conv3", true)?;
        let offsets = refined.detach();
        let modulation = Some(Modulation {
            weight: p("cls.modulation.weight")?,
            bias: p("cls.modulation.bias")?,
        });
        let dcn_w = p("cls.dcn.weight")?;
        let mut degenerate_refs = 0;
        let (head_in, pre_head_channels) = if cfg.ablation.orientation_align {
            let (reference, _) = reference_field(&offsets.value());
            let r = ri_dcn(c3, offsets, tape.constant(reference), dcn_w, modulation)?;
            degenerate_refs = r.degenerate_refs;
            (r.out, r.aligned.shape()[0])
        } else {
            let flat = if cfg.ablation.group_pool {
                group_pool(c3)
            } else {
                let cs = c3.shape();
                c3.reshape(&[cs[0] * cs[1], h, w])
            };
            let c = flat.shape()[0];
            (deform_conv(flat, offsets, dcn_w, modulation)?, c)
        };
        let logits = flat_conv1x1(head_in.relu(), p("cls.head.weight")?, p("cls.head.bias")?);
        Ok(ForwardOutput {
            init,
            refined,
            logits,
            pre_head_channels,
            degenerate_refs,
        })
    }

    /// Inference without gradient tracking.
    pub fn predict(&self, image: &Tensor) -> Result<Prediction> {
        let tape = Tape::new();
        let vars = self.bind(&tape, false);
        let out = self.forward(&tape, &vars, image)?;
        let refined = (*out.refined.value()).clone();
        let logits = (*out.logits.value()).clone();
        let grid = logits.hw();
        Ok(Prediction {
            grid,
            init: (*out.init.value()).clone(),
            point_sets: points_in_pixels(&refined),
            refined,
            logits,
        })
    }
}
