//! Spatial kernels on plain tensors: convolution, bilinear sampling, padding
//! and image rotation. Differentiable wrappers live in [`crate::autograd`].

use super::Tensor;
use crate::error::{shape_err, Error, Result};
use std::f64::consts::TAU;

/// Stride and zero padding of a 2-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: usize,
    pub padding: usize,
}

impl Conv2dSpec {
    pub const fn new(stride: usize, padding: usize) -> Self {
        Self { stride, padding }
    }

    /// Stride 1 with `(k - 1) / 2` padding: output size equals input size.
    pub const fn same(k: usize) -> Self {
        Self { stride: 1, padding: k / 2 }
    }

    pub fn out_size(&self, n: usize, k: usize) -> Option<usize> {
        (n + 2 * self.padding).checked_sub(k).map(|v| v / self.stride + 1)
    }
}

pub(crate) struct ConvDims {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub o: usize,
    pub k: usize,
    pub ho: usize,
    pub wo: usize,
}

pub(crate) fn conv_dims(input: &[usize], weight: &[usize], spec: Conv2dSpec) -> Result<ConvDims> {
    if input.len() != 3 || weight.len() != 4 {
        return Err(shape_err(
            "conv2d",
            format!("input {input:?} must be [C,H,W], weight {weight:?} [O,C,k,k]"),
        ));
    }
    let (c, h, w) = (input[0], input[1], input[2]);
    let (o, ci, k, k2) = (weight[0], weight[1], weight[2], weight[3]);
    if ci != c || k != k2 {
        return Err(shape_err("conv2d", format!("input {input:?} incompatible with weight {weight:?}")));
    }
    if k % 2 == 0 {
        return Err(Error::EvenKernel(k));
    }
    if spec.stride == 0 {
        return Err(shape_err("conv2d", "stride must be >= 1"));
    }
    let (ho, wo) = match (spec.out_size(h, k), spec.out_size(w, k)) {
        (Some(ho), Some(wo)) if ho >= 1 && wo >= 1 => (ho, wo),
        _ => {
            return Err(shape_err(
                "conv2d",
                format!("kernel {k} with padding {} does not fit {h}x{w}", spec.padding),
            ))
        }
    };
    Ok(ConvDims { c, h, w, o, k, ho, wo })
}

/// `c[m,n] (+)= a[m,k] · b[k,n]`, where `a_t`/`b_t` mean the operand is
/// stored transposed.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, c: &mut [f64], accumulate: bool) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c.fill(0.0);
        }
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the slices hold exactly m*k, k*n and m*n elements and the
    // strides above address them in bounds.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn is_pointwise(d: &ConvDims, spec: Conv2dSpec) -> bool {
    d.k == 1 && spec.stride == 1 && spec.padding == 0
}

fn im2col(input: &[f64], d: &ConvDims, spec: Conv2dSpec) -> Vec<f64> {
    let p = d.ho * d.wo;
    let kk = d.k * d.k;
    let mut cols = vec![0.0; d.c * kk * p];
    let pad = spec.padding as isize;
    for c in 0..d.c {
        let plane = &input[c * d.h * d.w..(c + 1) * d.h * d.w];
        for ky in 0..d.k {
            for kx in 0..d.k {
                let row = &mut cols[((c * kk) + ky * d.k + kx) * p..][..p];
                for oy in 0..d.ho {
                    let iy = (oy * spec.stride) as isize - pad + ky as isize;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * d.w..][..d.w];
                    let dst = &mut row[oy * d.wo..][..d.wo];
                    for (ox, v) in dst.iter_mut().enumerate() {
                        let ix = (ox * spec.stride) as isize - pad + kx as isize;
                        if ix >= 0 && ix < d.w as isize {
                            *v = src[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], d: &ConvDims, spec: Conv2dSpec) -> Vec<f64> {
    let p = d.ho * d.wo;
    let kk = d.k * d.k;
    let mut out = vec![0.0; d.c * d.h * d.w];
    let pad = spec.padding as isize;
    for c in 0..d.c {
        let plane = &mut out[c * d.h * d.w..(c + 1) * d.h * d.w];
        for ky in 0..d.k {
            for kx in 0..d.k {
                let row = &cols[((c * kk) + ky * d.k + kx) * p..][..p];
                for oy in 0..d.ho {
                    let iy = (oy * spec.stride) as isize - pad + ky as isize;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * d.w..][..d.w];
                    let src = &row[oy * d.wo..][..d.wo];
                    for (ox, v) in src.iter().enumerate() {
                        let ix = (ox * spec.stride) as isize - pad + kx as isize;
                        if ix >= 0 && ix < d.w as isize {
                            dst[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Cross-correlation of `input [C,H,W]` with `weight [O,C,k,k]`.
pub fn conv2d(input: &Tensor, weight: &Tensor, spec: Conv2dSpec) -> Result<Tensor> {
    conv2d_with_cols(input, weight, spec).map(|(out, _)| out)
}

/// Forward pass that also returns the unfolded input for reuse in backward.
/// The column buffer is empty for pointwise convolutions.
pub(crate) fn conv2d_with_cols(input: &Tensor, weight: &Tensor, spec: Conv2dSpec) -> Result<(Tensor, Vec<f64>)> {
    let d = conv_dims(input.shape(), weight.shape(), spec)?;
    let p = d.ho * d.wo;
    let ckk = d.c * d.k * d.k;
    let mut out = vec![0.0; d.o * p];
    if is_pointwise(&d, spec) {
        gemm(d.o, ckk, p, weight.data(), false, input.data(), false, &mut out, false);
        return Ok((Tensor::from_parts(vec![d.o, d.ho, d.wo], out), Vec::new()));
    }
    let cols = im2col(input.data(), &d, spec);
    gemm(d.o, ckk, p, weight.data(), false, &cols, false, &mut out, false);
    Ok((Tensor::from_parts(vec![d.o, d.ho, d.wo], out), cols))
}

/// Gradients of a convolution with respect to its input and weight.
pub fn conv2d_backward(grad_out: &Tensor, input: &Tensor, weight: &Tensor, spec: Conv2dSpec) -> Result<(Tensor, Tensor)> {
    let d = conv_dims(input.shape(), weight.shape(), spec)?;
    let cols = if is_pointwise(&d, spec) {
        Vec::new()
    } else {
        im2col(input.data(), &d, spec)
    };
    conv2d_backward_cols(grad_out, input, weight, &cols, spec)
}

pub(crate) fn conv2d_backward_cols(
    grad_out: &Tensor,
    input: &Tensor,
    weight: &Tensor,
    cols: &[f64],
    spec: Conv2dSpec,
) -> Result<(Tensor, Tensor)> {
    let d = conv_dims(input.shape(), weight.shape(), spec)?;
    if grad_out.shape() != [d.o, d.ho, d.wo] {
        return Err(shape_err(
            "conv2d_backward",
            format!("grad {:?} vs output [{}, {}, {}]", grad_out.shape(), d.o, d.ho, d.wo),
        ));
    }
    let p = d.ho * d.wo;
    let ckk = d.c * d.k * d.k;
    let pointwise = is_pointwise(&d, spec);
    let unfolded: &[f64] = if pointwise { input.data() } else { cols };
    let mut gw = vec![0.0; d.o * ckk];
    gemm(d.o, p, ckk, grad_out.data(), false, unfolded, true, &mut gw, false);
    let mut gcols = vec![0.0; ckk * p];
    gemm(ckk, d.o, p, weight.data(), true, grad_out.data(), false, &mut gcols, false);
    let gin = if pointwise { gcols } else { col2im(&gcols, &d, spec) };
    Ok((
        Tensor::from_parts(input.shape().to_vec(), gin),
        Tensor::from_parts(weight.shape().to_vec(), gw),
    ))
}

/// One bilinear tap: flat pixel index, weight, and the weight's derivatives
/// with respect to the sample coordinates.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Tap {
    pub index: usize,
    pub weight: f64,
    pub dx: f64,
    pub dy: f64,
}

/// The (up to four) in-bounds neighbours of `(x, y)` on an `h x w` grid.
/// Neighbours outside the grid read as zero and are omitted.
pub(crate) fn bilinear_taps(x: f64, y: f64, h: usize, w: usize) -> ([Tap; 4], usize) {
    let empty = Tap {
        index: 0,
        weight: 0.0,
        dx: 0.0,
        dy: 0.0,
    };
    let mut taps = [empty; 4];
    let mut n = 0;
    if !(x.is_finite() && y.is_finite()) || x <= -1.0 || y <= -1.0 || x >= w as f64 || y >= h as f64 {
        return (taps, 0);
    }
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (x0, y0) = (x0 as isize, y0 as isize);
    let corners = [
        (x0, y0, (1.0 - fx) * (1.0 - fy), -(1.0 - fy), -(1.0 - fx)),
        (x0 + 1, y0, fx * (1.0 - fy), 1.0 - fy, -fx),
        (x0, y0 + 1, (1.0 - fx) * fy, -fy, 1.0 - fx),
        (x0 + 1, y0 + 1, fx * fy, fy, fx),
    ];
    for (cx, cy, wt, dx, dy) in corners {
        if cx >= 0 && cy >= 0 && (cx as usize) < w && (cy as usize) < h {
            taps[n] = Tap {
                index: cy as usize * w + cx as usize,
                weight: wt,
                dx,
                dy,
            };
            n += 1;
        }
    }
    (taps, n)
}

/// Samples `feature [C,H,W]` at sub-pixel `points` given as `(x, y)`.
/// Returns `[C, len(points)]`; samples off the grid read zero padding.
pub fn bilinear_sample(feature: &Tensor, points: &[(f64, f64)]) -> Result<Tensor> {
    if feature.rank() != 3 {
        return Err(shape_err(
            "bilinear_sample",
            format!("feature must be [C,H,W], got {:?}", feature.shape()),
        ));
    }
    let (c, h, w) = (feature.shape()[0], feature.shape()[1], feature.shape()[2]);
    let np = points.len();
    let mut out = vec![0.0; c * np];
    let data = feature.data();
    for (j, &(x, y)) in points.iter().enumerate() {
        let (taps, n) = bilinear_taps(x, y, h, w);
        for ch in 0..c {
            let plane = &data[ch * h * w..];
            out[ch * np + j] = taps[..n].iter().map(|t| t.weight * plane[t.index]).sum();
        }
    }
    Ok(Tensor::from_parts(vec![c, np], out))
}

/// Gradients of [`bilinear_sample`] with respect to the feature map and to
/// every point's coordinates. Inside a cell the derivative uses that cell's
/// bilinear patch (the lower cell at integer coordinates).
pub fn bilinear_sample_backward(grad_out: &Tensor, feature: &Tensor, points: &[(f64, f64)]) -> Result<(Tensor, Vec<(f64, f64)>)> {
    let (c, h, w) = (feature.shape()[0], feature.shape()[1], feature.shape()[2]);
    let np = points.len();
    if grad_out.shape() != [c, np] {
        return Err(shape_err(
            "bilinear_sample_backward",
            format!("grad {:?} vs [{c}, {np}]", grad_out.shape()),
        ));
    }
    let mut gf = vec![0.0; c * h * w];
    let mut gp = vec![(0.0, 0.0); np];
    let data = feature.data();
    let g = grad_out.data();
    for (j, &(x, y)) in points.iter().enumerate() {
        let (taps, n) = bilinear_taps(x, y, h, w);
        for ch in 0..c {
            let go = g[ch * np + j];
            let base = ch * h * w;
            for t in &taps[..n] {
                gf[base + t.index] += go * t.weight;
                gp[j].0 += go * t.dx * data[base + t.index];
                gp[j].1 += go * t.dy * data[base + t.index];
            }
        }
    }
    Ok((Tensor::from_parts(feature.shape().to_vec(), gf), gp))
}

/// Rotates `(x, y)` by `angle` (counter-clockwise as displayed) about
/// `(cx, cy)`.
pub fn rotate_point(x: f64, y: f64, cx: f64, cy: f64, angle: f64) -> (f64, f64) {
    let (s, c) = angle.sin_cos();
    let (dx, dy) = (x - cx, y - cy);
    (cx + dx * c + dy * s, cy - dx * s + dy * c)
}

/// Rotates the two trailing axes by `2π·g/n`. Quarter turns are exact index
/// permutations (square images for odd quarter turns); every other angle is
/// bilinear resampling with zero fill about the center pixel.
pub fn rotate_image(input: &Tensor, g: i64, n: usize) -> Tensor {
    assert!(n > 0, "group order must be positive");
    let g = g.rem_euclid(n as i64) as usize;
    if (4 * g) % n == 0 {
        let q = 4 * g / n;
        let (h, w) = input.hw();
        if q % 2 == 0 || h == w {
            return rotate_quarter(input, q);
        }
    }
    rotate_image_angle(input, TAU * g as f64 / n as f64)
}

fn rotate_quarter(input: &Tensor, q: usize) -> Tensor {
    if q == 0 {
        return input.clone();
    }
    let (h, w) = input.hw();
    let plane = h * w;
    let planes = input.numel() / plane.max(1);
    let mut out = vec![0.0; input.numel()];
    let data = input.data();
    for p in 0..planes {
        let src = &data[p * plane..(p + 1) * plane];
        let dst = &mut out[p * plane..(p + 1) * plane];
        for y in 0..h {
            for x in 0..w {
                let (sx, sy) = match q {
                    1 => (h - 1 - y, x),
                    2 => (w - 1 - x, h - 1 - y),
                    3 => (y, w - 1 - x),
                    _ => unreachable!(),
                };
                dst[y * w + x] = src[sy * w + sx];
            }
        }
    }
    Tensor::from_parts(input.shape().to_vec(), out)
}

/// Rotation by an arbitrary angle through inverse-mapped bilinear sampling
/// about `((W-1)/2, (H-1)/2)`; output keeps the input's spatial size.
pub fn rotate_image_angle(input: &Tensor, angle: f64) -> Tensor {
    let (h, w) = input.hw();
    let plane = h * w;
    let planes = input.numel() / plane.max(1);
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let taps: Vec<([Tap; 4], usize)> = (0..plane)
        .map(|i| {
            let (sx, sy) = rotate_point((i % w) as f64, (i / w) as f64, cx, cy, -angle);
            bilinear_taps(sx, sy, h, w)
        })
        .collect();
    let data = input.data();
    let mut out = vec![0.0; input.numel()];
    for p in 0..planes {
        let src = &data[p * plane..(p + 1) * plane];
        for (i, (t, n)) in taps.iter().enumerate() {
            out[p * plane + i] = t[..*n].iter().map(|t| t.weight * src[t.index]).sum();
        }
    }
    Tensor::from_parts(input.shape().to_vec(), out)
}

/// Appends a zero row and/or column so both spatial sizes are odd.
pub fn pad_to_odd(input: &Tensor) -> Tensor {
    let (h, w) = input.hw();
    let (ho, wo) = (h | 1, w | 1);
    if (ho, wo) == (h, w) {
        return input.clone();
    }
    let planes = input.numel() / (h * w).max(1);
    let mut out = vec![0.0; planes * ho * wo];
    let data = input.data();
    for p in 0..planes {
        for y in 0..h {
            out[p * ho * wo + y * wo..][..w].copy_from_slice(&data[p * h * w + y * w..][..w]);
        }
    }
    let r = input.rank();
    let mut shape = input.shape().to_vec();
    shape[r - 2] = ho;
    shape[r - 1] = wo;
    Tensor::from_parts(shape, out)
}

/// Drops trailing rows/columns: the adjoint of [`pad_to_odd`].
pub(crate) fn crop_to(input: &Tensor, h: usize, w: usize) -> Tensor {
    let (hi, wi) = input.hw();
    if (hi, wi) == (h, w) {
        return input.clone();
    }
    let planes = input.numel() / (hi * wi).max(1);
    let mut out = Vec::with_capacity(planes * h * w);
    let data = input.data();
    for p in 0..planes {
        for y in 0..h {
            out.extend_from_slice(&data[p * hi * wi + y * wi..][..w]);
        }
    }
    let r = input.rank();
    let mut shape = input.shape().to_vec();
    shape[r - 2] = h;
    shape[r - 1] = w;
    Tensor::from_parts(shape, out)
}
