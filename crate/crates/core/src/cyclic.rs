//! The cyclic rotation group `C_N` acting on images and orientation-indexed
//! feature maps, plus the layers that commute with that action.
//!
//! A [`GroupFeature`] is a `[C, N, H, W]` tensor. Rotating the input image by
//! `g` rotates every plane spatially and cyclically shifts the orientation
//! axis by `g` ([`CyclicGroup::act`]). Lifting and group convolutions build
//! their filter banks from one base filter rotated to each orientation, so
//! their outputs transform the same way.

use crate::autograd::Var;
use crate::error::{shape_err, Error, Result};
use crate::tensor::kernels::{bilinear_taps, conv_dims};
use crate::tensor::{conv2d, rotate_image, rotate_point, Conv2dSpec, Tensor};
use std::f64::consts::TAU;

/// The group of planar rotations by multiples of `2π/N`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CyclicGroup {
    order: usize,
}

impl CyclicGroup {
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::Config("group order must be positive".into()));
        }
        Ok(Self { order })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn elements(&self) -> impl Iterator<Item = usize> {
        0..self.order
    }

    pub fn compose(&self, a: usize, b: usize) -> usize {
        (a + b) % self.order
    }

    pub fn inverse(&self, a: usize) -> usize {
        (self.order - a % self.order) % self.order
    }

    pub fn angle(&self, g: usize) -> f64 {
        TAU * (g % self.order) as f64 / self.order as f64
    }

    /// Whether `g` is a whole number of quarter turns.
    pub fn is_quarter_turn(&self, g: usize) -> bool {
        (4 * (g % self.order)) % self.order == 0
    }

    /// Group action on a feature: rotate each plane by `g` and shift the
    /// orientation axis so `out[c, n] = T_g feat[c, (n − g) mod N]`.
    pub fn act(&self, g: usize, feat: &GroupFeature) -> Result<GroupFeature> {
        if feat.order() != self.order {
            return Err(Error::GroupOrder {
                expected: self.order,
                actual: feat.order(),
            });
        }
        let [c, n, h, w] = feat.dims();
        let plane = h * w;
        let mut out = Vec::with_capacity(feat.tensor.numel());
        for ci in 0..c {
            for ni in 0..n {
                let src = (ni + n - g % n) % n;
                let start = (ci * n + src) * plane;
                let p = Tensor::from_parts(vec![h, w], feat.tensor.data()[start..start + plane].to_vec());
                out.extend_from_slice(rotate_image(&p, g as i64, n).data());
            }
        }
        Ok(GroupFeature {
            tensor: Tensor::from_parts(vec![c, n, h, w], out),
        })
    }
}

/// Feature map with an explicit orientation axis: `[C, N, H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupFeature {
    pub tensor: Tensor,
}

impl GroupFeature {
    pub fn new(tensor: Tensor) -> Result<Self> {
        if tensor.rank() != 4 {
            return Err(shape_err("GroupFeature", format!("expected [C,N,H,W], got {:?}", tensor.shape())));
        }
        Ok(Self { tensor })
    }

    pub fn dims(&self) -> [usize; 4] {
        let s = self.tensor.shape();
        [s[0], s[1], s[2], s[3]]
    }

    pub fn channels(&self) -> usize {
        self.dims()[0]
    }

    pub fn order(&self) -> usize {
        self.dims()[1]
    }

    /// The orientation fiber `feat[c, :, y, x]`.
    pub fn fiber(&self, c: usize, y: usize, x: usize) -> Vec<f64> {
        (0..self.order()).map(|n| self.tensor.at(&[c, n, y, x])).collect()
    }
}

/// Linear map that rotates a `k x k` kernel plane, as `(dst, src, weight)`
/// triples. Quarter turns are permutations; the remaining angle splats each
/// tap of the disk-masked kernel bilinearly onto the grid, which keeps the
/// kernel's sum and first moment.
#[derive(Clone, Debug)]
pub struct KernelRotation {
    k: usize,
    entries: Vec<(usize, usize, f64)>,
}

/// Kernels of order-`N` layers are masked to their inscribed disk unless `N`
/// divides 4, in which case every rotation is an exact permutation.
pub fn needs_disk_mask(n: usize) -> bool {
    4 % n != 0
}

fn in_disk(k: usize, x: usize, y: usize) -> bool {
    let c = (k / 2) as f64;
    let (dx, dy) = (x as f64 - c, y as f64 - c);
    dx * dx + dy * dy <= c * c + 1e-9
}

impl KernelRotation {
    pub fn new(k: usize, g: usize, n: usize) -> Result<Self> {
        if k % 2 == 0 {
            return Err(Error::EvenKernel(k));
        }
        let g = g % n;
        let masked = needs_disk_mask(n);
        let (quarters, rem_angle) = if 4 % n == 0 {
            (4 * g / n, 0.0)
        } else if n % 4 == 0 {
            let per_quarter = n / 4;
            (g / per_quarter, TAU * (g % per_quarter) as f64 / n as f64)
        } else {
            (0, TAU * g as f64 / n as f64)
        };
        let c = (k / 2) as f64;
        let quarter = |(mut x, mut y): (usize, usize)| {
            for _ in 0..quarters {
                (x, y) = (y, k - 1 - x);
            }
            y * k + x
        };
        let mut entries = Vec::new();
        for sy in 0..k {
            for sx in 0..k {
                if masked && !in_disk(k, sx, sy) {
                    continue;
                }
                let src = sy * k + sx;
                if rem_angle == 0.0 {
                    entries.push((quarter((sx, sy)), src, 1.0));
                    continue;
                }
                // Splat the rotated tap onto its bilinear neighbours, then
                // apply the whole quarter turns exactly.
                let (px, py) = rotate_point(sx as f64, sy as f64, c, c, rem_angle);
                let (taps, nt) = bilinear_taps(px, py, k, k);
                for t in &taps[..nt] {
                    if t.weight != 0.0 {
                        entries.push((quarter((t.index % k, t.index / k)), src, t.weight));
                    }
                }
            }
        }
        Ok(Self { k, entries })
    }

    pub fn kernel_size(&self) -> usize {
        self.k
    }

    /// Applies the rotation to one `k*k` plane, adding into `dst`.
    pub fn apply_into(&self, src: &[f64], dst: &mut [f64]) {
        for &(d, s, w) in &self.entries {
            dst[d] += w * src[s];
        }
    }

    /// Adjoint of [`Self::apply_into`].
    pub fn transpose_into(&self, grad_dst: &[f64], grad_src: &mut [f64]) {
        for &(d, s, w) in &self.entries {
            grad_src[s] += w * grad_dst[d];
        }
    }
}

fn kernel_size_of(weight: &Tensor) -> Result<usize> {
    let r = weight.rank();
    if r < 2 || weight.shape()[r - 1] != weight.shape()[r - 2] {
        return Err(shape_err(
            "rotate_kernel",
            format!("expected [..., k, k], got {:?}", weight.shape()),
        ));
    }
    Ok(weight.shape()[r - 1])
}

/// Rotates every trailing `k x k` plane of `weight` by `2π·g/N` about the
/// kernel center.
pub fn rotate_kernel(weight: &Tensor, g: usize, n: usize) -> Result<Tensor> {
    let k = kernel_size_of(weight)?;
    let rot = KernelRotation::new(k, g, n)?;
    let mut out = vec![0.0; weight.numel()];
    for (src, dst) in weight.data().chunks(k * k).zip(out.chunks_mut(k * k)) {
        rot.apply_into(src, dst);
    }
    Ok(Tensor::from_parts(weight.shape().to_vec(), out))
}

/// Builds the `[O·N, C, k, k]` filter bank of a lifting convolution from
/// the base filters `[O, C, k, k]`.
fn expand_lift(weight: &Tensor, rots: &[KernelRotation]) -> Tensor {
    let s = weight.shape();
    let (o, c, k) = (s[0], s[1], s[2]);
    let n = rots.len();
    let kk = k * k;
    let mut out = vec![0.0; o * n * c * kk];
    for oi in 0..o {
        for (ni, rot) in rots.iter().enumerate() {
            for ci in 0..c {
                let src = &weight.data()[(oi * c + ci) * kk..][..kk];
                let dst = &mut out[((oi * n + ni) * c + ci) * kk..][..kk];
                rot.apply_into(src, dst);
            }
        }
    }
    Tensor::from_parts(vec![o * n, c, k, k], out)
}

fn expand_lift_adjoint(grad: &Tensor, shape: &[usize], rots: &[KernelRotation]) -> Tensor {
    let (o, c, k) = (shape[0], shape[1], shape[2]);
    let n = rots.len();
    let kk = k * k;
    let mut out = vec![0.0; o * c * kk];
    for oi in 0..o {
        for (ni, rot) in rots.iter().enumerate() {
            for ci in 0..c {
                let g = &grad.data()[((oi * n + ni) * c + ci) * kk..][..kk];
                rot.transpose_into(g, &mut out[(oi * c + ci) * kk..][..kk]);
            }
        }
    }
    Tensor::from_parts(shape.to_vec(), out)
}

/// Builds the `[O·N, C·N, k, k]` filter bank of a group convolution from the
/// base filters `[O, C, N, k, k]`: block `(o,n),(c,m)` is the base filter for
/// relative orientation `(m − n) mod N` rotated by `n`.
fn expand_group(weight: &Tensor, rots: &[KernelRotation]) -> Tensor {
    let s = weight.shape();
    let (o, c, n, k) = (s[0], s[1], s[2], s[3]);
    let kk = k * k;
    let mut out = vec![0.0; o * n * c * n * kk];
    for oi in 0..o {
        for (ni, rot) in rots.iter().enumerate() {
            for ci in 0..c {
                for mi in 0..n {
                    let rel = (mi + n - ni) % n;
                    let src = &weight.data()[((oi * c + ci) * n + rel) * kk..][..kk];
                    let dst = &mut out[(((oi * n + ni) * c + ci) * n + mi) * kk..][..kk];
                    rot.apply_into(src, dst);
                }
            }
        }
    }
    Tensor::from_parts(vec![o * n, c * n, k, k], out)
}

fn expand_group_adjoint(grad: &Tensor, shape: &[usize], rots: &[KernelRotation]) -> Tensor {
    let (o, c, n, k) = (shape[0], shape[1], shape[2], shape[3]);
    let kk = k * k;
    let mut out = vec![0.0; o * c * n * kk];
    for oi in 0..o {
        for (ni, rot) in rots.iter().enumerate() {
            for ci in 0..c {
                for mi in 0..n {
                    let rel = (mi + n - ni) % n;
                    let g = &grad.data()[(((oi * n + ni) * c + ci) * n + mi) * kk..][..kk];
                    rot.transpose_into(g, &mut out[((oi * c + ci) * n + rel) * kk..][..kk]);
                }
            }
        }
    }
    Tensor::from_parts(shape.to_vec(), out)
}

fn rotations(k: usize, n: usize) -> Result<Vec<KernelRotation>> {
    (0..n).map(|g| KernelRotation::new(k, g, n)).collect()
}

/// Lifting convolution: `out[:, n] = conv2d(image, rotate_kernel(weight, n))`.
pub fn lift_conv(image: &Tensor, weight: &Tensor, n: usize, spec: Conv2dSpec) -> Result<GroupFeature> {
    let k = kernel_size_of(weight)?;
    conv_dims(image.shape(), weight.shape(), spec)?;
    let bank = expand_lift(weight, &rotations(k, n)?);
    let out = conv2d(image, &bank, spec)?;
    let (ho, wo) = out.hw();
    GroupFeature::new(out.into_reshaped(&[weight.shape()[0], n, ho, wo])?)
}

fn check_group_weight(feat: &[usize], weight: &[usize]) -> Result<()> {
    if weight.len() != 5 {
        return Err(shape_err("group_conv", format!("weight must be [O,C,N,k,k], got {weight:?}")));
    }
    if feat.len() != 4 || feat[0] != weight[1] {
        return Err(shape_err(
            "group_conv",
            format!("feature {feat:?} incompatible with weight {weight:?}"),
        ));
    }
    if feat[1] != weight[2] {
        return Err(Error::GroupOrder {
            expected: weight[2],
            actual: feat[1],
        });
    }
    if weight[3] != weight[4] {
        return Err(shape_err("group_conv", "kernel must be square"));
    }
    if weight[3] % 2 == 0 {
        return Err(Error::EvenKernel(weight[3]));
    }
    Ok(())
}

/// Regular-representation group convolution of a `[C, N, H, W]` feature with
/// base filters `[O, C, N, k, k]`.
pub fn group_conv(feat: &GroupFeature, weight: &Tensor, spec: Conv2dSpec) -> Result<GroupFeature> {
    check_group_weight(feat.tensor.shape(), weight.shape())?;
    let [c, n, h, w] = feat.dims();
    let bank = expand_group(weight, &rotations(weight.shape()[3], n)?);
    let flat = feat.tensor.reshape(&[c * n, h, w])?;
    let out = conv2d(&flat, &bank, spec)?;
    let (ho, wo) = out.hw();
    GroupFeature::new(out.into_reshaped(&[weight.shape()[0], n, ho, wo])?)
}

/// Index of the largest entry; ties go to the lowest index.
pub(crate) fn argmax(values: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// Per-pixel `(argmax, max)` over the orientation axis of `[C, N, H, W]`.
pub(crate) fn orientation_argmax(t: &Tensor) -> (Vec<usize>, Vec<f64>) {
    let s = t.shape();
    let (c, n, plane) = (s[0], s[1], s[2] * s[3]);
    let mut idx = vec![0; c * plane];
    let mut val = vec![0.0; c * plane];
    for ci in 0..c {
        let base = ci * n * plane;
        for p in 0..plane {
            let (i, v) = argmax((0..n).map(|ni| t.data()[base + ni * plane + p]));
            idx[ci * plane + p] = i;
            val[ci * plane + p] = v;
        }
    }
    (idx, val)
}

/// Max over the orientation axis: `[C, N, H, W] -> [C, H, W]`.
pub fn group_pool(feat: &GroupFeature) -> Tensor {
    let [c, _, h, w] = feat.dims();
    let (_, val) = orientation_argmax(&feat.tensor);
    Tensor::from_parts(vec![c, h, w], val)
}

/// Fractional shift `(r, α)` of the orientation axis for angle `theta`.
pub(crate) fn shift_and_blend(theta: f64, n: usize) -> (usize, f64) {
    let t = (theta * n as f64 / TAU).rem_euclid(n as f64);
    let r = t.floor();
    let alpha = t - r;
    let r = r as usize;
    if r >= n {
        (0, 0.0)
    } else {
        (r, alpha)
    }
}

fn check_theta(feat: &[usize], theta: &[usize]) -> Result<()> {
    if theta.len() != 2 || theta[0] != feat[2] || theta[1] != feat[3] {
        return Err(shape_err("orientation_align", format!("theta {theta:?} vs feature {feat:?}")));
    }
    Ok(())
}

/// Orientation alignment: per pixel, shift the orientation axis back by
/// `r = ⌊θN/2π⌋` and blend with the next group by the fractional part:
/// `out[c,n] = (1−α)·f[c,(n+r) mod N] + α·f[c,(n+r+1) mod N]`.
pub fn orientation_align(feat: &GroupFeature, theta: &Tensor) -> Result<GroupFeature> {
    check_theta(feat.tensor.shape(), theta.shape())?;
    let [c, n, h, w] = feat.dims();
    let plane = h * w;
    let f = feat.tensor.data();
    let mut out = vec![0.0; f.len()];
    for (p, &th) in theta.data().iter().enumerate() {
        let (r, a) = shift_and_blend(th, n);
        for ci in 0..c {
            let base = ci * n * plane;
            for ni in 0..n {
                let lo = f[base + ((ni + r) % n) * plane + p];
                let hi = f[base + ((ni + r + 1) % n) * plane + p];
                out[base + ni * plane + p] = (1.0 - a) * lo + a * hi;
            }
        }
    }
    GroupFeature::new(Tensor::from_parts(vec![c, n, h, w], out))
}

/// Differentiable versions of the layers above on `[C, N, H, W]` variables.
pub mod diff {
    use super::*;
    use crate::tensor::Tensor;

    pub fn lift_conv<'t>(image: Var<'t>, weight: Var<'t>, n: usize, spec: Conv2dSpec) -> Result<Var<'t>> {
        let w = weight.value();
        let k = kernel_size_of(&w)?;
        conv_dims(&image.shape(), w.shape(), spec)?;
        let rots = rotations(k, n)?;
        let bank = expand_lift(&w, &rots);
        let shape = w.shape().to_vec();
        let bank = image.tape().custom("expand_lift", &[weight], bank, move |g| {
            vec![Some(expand_lift_adjoint(g, &shape, &rots))]
        });
        let out = image.conv2d(bank, spec)?;
        let s = out.shape();
        Ok(out.reshape(&[w.shape()[0], n, s[1], s[2]]))
    }

    pub fn group_conv<'t>(feat: Var<'t>, weight: Var<'t>, spec: Conv2dSpec) -> Result<Var<'t>> {
        let w = weight.value();
        let fs = feat.shape();
        check_group_weight(&fs, w.shape())?;
        let n = fs[1];
        let rots = rotations(w.shape()[3], n)?;
        let bank = expand_group(&w, &rots);
        let shape = w.shape().to_vec();
        let bank = feat.tape().custom("expand_group", &[weight], bank, move |g| {
            vec![Some(expand_group_adjoint(g, &shape, &rots))]
        });
        let out = feat.reshape(&[fs[0] * n, fs[2], fs[3]]).conv2d(bank, spec)?;
        let s = out.shape();
        Ok(out.reshape(&[w.shape()[0], n, s[1], s[2]]))
    }

    /// Max over orientations; the gradient goes to the first maximal entry.
    pub fn group_pool(feat: Var<'_>) -> Var<'_> {
        let x = feat.value();
        let s = x.shape().to_vec();
        let (c, n, plane) = (s[0], s[1], s[2] * s[3]);
        let (idx, val) = orientation_argmax(&x);
        let out = Tensor::from_parts(vec![c, s[2], s[3]], val);
        feat.tape().custom("group_pool", &[feat], out, move |g| {
            let mut gx = vec![0.0; c * n * plane];
            for ci in 0..c {
                for p in 0..plane {
                    gx[(ci * n + idx[ci * plane + p]) * plane + p] = g.data()[ci * plane + p];
                }
            }
            vec![Some(Tensor::from_parts(s.clone(), gx))]
        })
    }

    /// Differentiable in both the feature and `theta`.
    pub fn orientation_align<'t>(feat: Var<'t>, theta: Var<'t>) -> Result<Var<'t>> {
        let f = feat.value();
        let th = theta.value();
        let out = super::orientation_align(&GroupFeature::new((*f).clone())?, &th)?.tensor;
        let s = f.shape().to_vec();
        Ok(feat.tape().custom("orientation_align", &[feat, theta], out, move |g| {
            let (c, n, plane) = (s[0], s[1], s[2] * s[3]);
            let fd = f.data();
            let gd = g.data();
            let mut gf = vec![0.0; fd.len()];
            let mut gt = vec![0.0; plane];
            for (p, &t) in th.data().iter().enumerate() {
                let (r, a) = shift_and_blend(t, n);
                for ci in 0..c {
                    let base = ci * n * plane;
                    for ni in 0..n {
                        let go = gd[base + ni * plane + p];
                        let lo = base + ((ni + r) % n) * plane + p;
                        let hi = base + ((ni + r + 1) % n) * plane + p;
                        gf[lo] += (1.0 - a) * go;
                        gf[hi] += a * go;
                        gt[p] += go * (fd[hi] - fd[lo]) * n as f64 / TAU;
                    }
                }
            }
            vec![
                Some(Tensor::from_parts(s.clone(), gf)),
                Some(Tensor::from_parts(vec![s[2], s[3]], gt)),
            ]
        }))
    }
}
