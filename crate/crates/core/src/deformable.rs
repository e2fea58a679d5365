//! Deformable convolutions driven by equivariant point sets.
//!
//! There is no base sampling grid: for every output location `p` the `K`
//! taps are read at `p + Δ_k(p)`, where `Δ` is an [`OffsetField`]. When the
//! offsets come from an equivariant vector field the sampling pattern turns
//! with the input.
//!
//! * [`re_dcn`] runs the same deformable kernel on each orientation group
//!   independently, so the output keeps the `[C, N, H, W]` cyclic structure.
//! * [`ri_dcn`] first aligns the orientation axis with the angle of a
//!   reference vector ([`crate::cyclic::orientation_align`]), then applies a
//!   modulated deformable convolution to the flattened `C·N` channels, which
//!   gives values that do not change when the input is rotated.

use crate::autograd::{Tape, Var};
use crate::cyclic::diff::orientation_align;
use crate::error::{shape_err, Result};
use crate::tensor::kernels::bilinear_taps;
use crate::tensor::Tensor;
use crate::vector_field::VectorField;

/// Sampling displacements `[K, 2, H, W]` in the vector-field frame.
pub type OffsetField = VectorField;

/// Pixels whose reference vector is shorter than this get `θ = 0`.
pub const MIN_REFERENCE_NORM: f64 = 1e-8;

fn check_offsets(feat: &[usize], offsets: &[usize]) -> Result<usize> {
    if offsets.len() != 4 || offsets[1] != 2 || offsets[2..] != feat[feat.len() - 2..] {
        return Err(shape_err(
            "deformable",
            format!("offsets {offsets:?} do not match feature {feat:?}"),
        ));
    }
    Ok(offsets[0])
}

/// Samples `feat [C, H, W]` at `p + Δ_k(p)` for every pixel `p` and tap `k`,
/// giving `[C, K, H, W]`. Differentiable in the feature and the offsets.
pub fn deform_sample<'t>(feat: Var<'t>, offsets: Var<'t>) -> Result<Var<'t>> {
    let f = feat.value();
    let o = offsets.value();
    if f.rank() != 3 {
        return Err(shape_err("deform_sample", format!("feature {:?}", f.shape())));
    }
    let k = check_offsets(f.shape(), o.shape())?;
    let (c, h, w) = (f.shape()[0], f.shape()[1], f.shape()[2]);
    let plane = h * w;
    let od = o.data();
    let taps: Vec<_> = (0..k * plane)
        .map(|i| {
            let (ki, p) = (i / plane, i % plane);
            let x = (p % w) as f64 + od[(ki * 2) * plane + p];
            let y = (p / w) as f64 - od[(ki * 2 + 1) * plane + p];
            bilinear_taps(x, y, h, w)
        })
        .collect();
    let fd = f.data();
    let mut out = vec![0.0; c * k * plane];
    for ci in 0..c {
        let src = &fd[ci * plane..(ci + 1) * plane];
        let dst = &mut out[ci * k * plane..(ci + 1) * k * plane];
        for (v, (t, n)) in dst.iter_mut().zip(&taps) {
            *v = t[..*n].iter().map(|t| t.weight * src[t.index]).sum();
        }
    }
    let shape_f = f.shape().to_vec();
    let shape_o = o.shape().to_vec();
    Ok(feat.tape().custom(
        "deform_sample",
        &[feat, offsets],
        Tensor::from_parts(vec![c, k, h, w], out),
        move |g| {
            let gd = g.data();
            let fd = f.data();
            let mut gf = vec![0.0; c * plane];
            let mut go = vec![0.0; k * 2 * plane];
            for ci in 0..c {
                let src = &fd[ci * plane..(ci + 1) * plane];
                for (i, (t, n)) in taps.iter().enumerate() {
                    let gv = gd[ci * k * plane + i];
                    if gv == 0.0 {
                        continue;
                    }
                    let (ki, p) = (i / plane, i % plane);
                    let (mut dx, mut dy) = (0.0, 0.0);
                    for t in &t[..*n] {
                        gf[ci * plane + t.index] += gv * t.weight;
                        dx += t.dx * src[t.index];
                        dy += t.dy * src[t.index];
                    }
                    go[(ki * 2) * plane + p] += gv * dx;
                    go[(ki * 2 + 1) * plane + p] -= gv * dy;
                }
            }
            vec![
                Some(Tensor::from_parts(shape_f.clone(), gf)),
                Some(Tensor::from_parts(shape_o.clone(), go)),
            ]
        },
    ))
}

/// Rotation-equivariant deformable convolution.
///
/// `feat [C_in, N, H, W]`, `offsets [K, 2, H, W]`, `weight [C_out, C_in, K]`
/// → `[C_out, N, H, W]`. Each orientation group is convolved independently
/// with the same offsets and weights.
pub fn re_dcn<'t>(feat: Var<'t>, offsets: Var<'t>, weight: Var<'t>) -> Result<Var<'t>> {
    let fs = feat.shape();
    let ws = weight.shape();
    if fs.len() != 4 {
        return Err(shape_err("re_dcn", format!("feature {fs:?} must be [C,N,H,W]")));
    }
    let k = check_offsets(&fs, &offsets.shape())?;
    if ws.len() != 3 || ws[1] != fs[0] || ws[2] != k {
        return Err(shape_err("re_dcn", format!("weight {ws:?} vs C_in={} and K={k}", fs[0])));
    }
    let (c, n, h, w) = (fs[0], fs[1], fs[2], fs[3]);
    let p = h * w;
    let samples = deform_sample(feat.reshape(&[c * n, h, w]), offsets)?;
    let cols = samples.reshape(&[c, n, k, p]).permute(&[0, 2, 1, 3]).reshape(&[c * k, n * p]);
    let out = weight.reshape(&[ws[0], c * k]).matmul(cols);
    Ok(out.reshape(&[ws[0], n, h, w]))
}

/// 1×1 convolution predicting per-tap modulation logits from the input
/// feature: `weight [K, C]`, `bias [K]`.
#[derive(Clone, Copy, Debug)]
pub struct Modulation<'t> {
    pub weight: Var<'t>,
    pub bias: Var<'t>,
}

/// Modulated deformable convolution on a plain `[C, H, W]` feature:
/// `out[o, p] = Σ_k m_k(p) Σ_c weight[o, c, k] · x[c](p + Δ_k(p))` with
/// `m = sigmoid(logits)`, or `m ≡ 1` when `modulation` is `None`.
pub fn deform_conv<'t>(x: Var<'t>, offsets: Var<'t>, weight: Var<'t>, modulation: Option<Modulation<'t>>) -> Result<Var<'t>> {
    let xs = x.shape();
    let ws = weight.shape();
    let k = check_offsets(&xs, &offsets.shape())?;
    if xs.len() != 3 || ws.len() != 3 || ws[1] != xs[0] || ws[2] != k {
        return Err(shape_err("deform_conv", format!("weight {ws:?} vs feature {xs:?} with K={k}")));
    }
    let (c, h, w) = (xs[0], xs[1], xs[2]);
    let p = h * w;
    let mut samples = deform_sample(x, offsets)?;
    if let Some(m) = modulation {
        let mws = m.weight.shape();
        if mws != [k, c] || m.bias.shape() != [k] {
            return Err(shape_err("deform_conv", format!("modulation weight {mws:?} must be [{k}, {c}]")));
        }
        let logits = m.weight.matmul(x.reshape(&[c, p])).add_channel_bias(m.bias);
        let mask = logits.sigmoid();
        samples = broadcast_mask(samples, mask, c);
    }
    let out = weight.reshape(&[ws[0], c * k]).matmul(samples.reshape(&[c * k, p]));
    Ok(out.reshape(&[ws[0], h, w]))
}

/// `samples [C, K, H, W] * mask [K, P]` broadcast over channels.
fn broadcast_mask<'t>(samples: Var<'t>, mask: Var<'t>, c: usize) -> Var<'t> {
    let s = samples.value();
    let m = mask.value();
    let kp = m.numel();
    let mut out = (*s).clone();
    for chunk in out.data_mut().chunks_mut(kp) {
        for (v, mv) in chunk.iter_mut().zip(m.data()) {
            *v *= mv;
        }
    }
    let shape_m = m.shape().to_vec();
    samples.tape().custom("modulate", &[samples, mask], out, move |g| {
        let mut gs = g.clone();
        for chunk in gs.data_mut().chunks_mut(kp) {
            for (v, mv) in chunk.iter_mut().zip(m.data()) {
                *v *= mv;
            }
        }
        let mut gm = vec![0.0; kp];
        for ci in 0..c {
            let gc = &g.data()[ci * kp..(ci + 1) * kp];
            let sc = &s.data()[ci * kp..(ci + 1) * kp];
            for j in 0..kp {
                gm[j] += gc[j] * sc[j];
            }
        }
        vec![Some(gs), Some(Tensor::from_parts(shape_m.clone(), gm))]
    })
}

/// Angle of a `[1, 2, H, W]` reference field, `[H, W]`, with the number of
/// pixels whose reference was too short to define one (set to 0).
pub fn reference_angle(reference: Var<'_>) -> Result<(Var<'_>, usize)> {
    let r = reference.value();
    let s = r.shape().to_vec();
    if s.len() != 4 || s[0] != 1 || s[1] != 2 {
        return Err(shape_err("reference_angle", format!("reference must be [1,2,H,W], got {s:?}")));
    }
    let plane = s[2] * s[3];
    let d = r.data();
    let mut degenerate = 0;
    let theta: Vec<f64> = (0..plane)
        .map(|p| {
            let (x, y) = (d[p], d[plane + p]);
            if x.hypot(y) < MIN_REFERENCE_NORM {
                degenerate += 1;
                0.0
            } else {
                y.atan2(x)
            }
        })
        .collect();
    let out = reference.tape().custom(
        "reference_angle",
        &[reference],
        Tensor::from_parts(vec![s[2], s[3]], theta),
        move |g| {
            let d = r.data();
            let mut gr = vec![0.0; 2 * plane];
            for p in 0..plane {
                let (x, y) = (d[p], d[plane + p]);
                let n2 = x * x + y * y;
                if n2.sqrt() < MIN_REFERENCE_NORM {
                    continue;
                }
                gr[p] = -y / n2 * g.data()[p];
                gr[plane + p] = x / n2 * g.data()[p];
            }
            vec![Some(Tensor::from_parts(s.clone(), gr))]
        },
    );
    Ok((out, degenerate))
}

/// Output of [`ri_dcn`].
pub struct RiDcnOutput<'t> {
    /// `[C_out, H, W]`.
    pub out: Var<'t>,
    /// Aligned feature flattened to `[C_in·N, H, W]`.
    pub aligned: Var<'t>,
    /// Pixels with a reference vector too short to define an angle.
    pub degenerate_refs: usize,
}

/// Rotation-invariant deformable convolution.
///
/// `feat [C_in, N, H, W]`, `offsets [K, 2, H, W]`, `reference [1, 2, H, W]`,
/// `weight [C_out, C_in·N, K]`; modulation weights are `[K, C_in·N]`.
pub fn ri_dcn<'t>(
    feat: Var<'t>,
    offsets: Var<'t>,
    reference: Var<'t>,
    weight: Var<'t>,
    modulation: Option<Modulation<'t>>,
) -> Result<RiDcnOutput<'t>> {
    let fs = feat.shape();
    if fs.len() != 4 {
        return Err(shape_err("ri_dcn", format!("feature {fs:?} must be [C,N,H,W]")));
    }
    let (theta, degenerate_refs) = reference_angle(reference)?;
    let aligned = orientation_align(feat, theta)?.reshape(&[fs[0] * fs[1], fs[2], fs[3]]);
    let out = deform_conv(aligned, offsets, weight, modulation)?;
    Ok(RiDcnOutput {
        out,
        aligned,
        degenerate_refs,
    })
}

/// Tensor-level [`re_dcn`].
pub fn re_dcn_forward(feat: &Tensor, offsets: &Tensor, weight: &Tensor) -> Result<Tensor> {
    let tape = Tape::new();
    let out = re_dcn(
        tape.constant(feat.clone()),
        tape.constant(offsets.clone()),
        tape.constant(weight.clone()),
    )?;
    let v = (*out.value()).clone();
    Ok(v)
}

/// Tensor-level [`ri_dcn`]; `modulation` is `(weight [K, C·N], bias [K])`.
pub fn ri_dcn_forward(
    feat: &Tensor,
    offsets: &Tensor,
    reference: &Tensor,
    weight: &Tensor,
    modulation: Option<(&Tensor, &Tensor)>,
) -> Result<Tensor> {
    let tape = Tape::new();
    let m = modulation.map(|(w, b)| Modulation {
        weight: tape.constant(w.clone()),
        bias: tape.constant(b.clone()),
    });
    let out = ri_dcn(
        tape.constant(feat.clone()),
        tape.constant(offsets.clone()),
        tape.constant(reference.clone()),
        tape.constant(weight.clone()),
        m,
    )?;
    let v = (*out.out.value()).clone();
    Ok(v)
}
