//! Rotation-equivariant 2-D vector fields derived from group features.
//!
//! Components are stored in a y-up frame: `(vx, vy)` where `vx` points along
//! increasing columns and `vy` along decreasing rows. In this frame a
//! counter-clockwise image rotation rotates vectors by the usual matrix
//! `[[cos, −sin], [sin, cos]]`. Use [`VectorField::pixel_offset`] to turn a
//! vector into a `(dx, dy)` displacement in pixel coordinates.

use crate::autograd::Var;
use crate::cyclic::{orientation_argmax, GroupFeature};
use crate::error::{shape_err, Result};
use crate::tensor::{rotate_image, Tensor};
use std::f64::consts::TAU;

/// `[K, 2, H, W]`: `K` vector channels with `(vx, vy)` per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub tensor: Tensor,
}

/// `(cos, sin)` of `2π·n/N`, exact on quarter turns.
pub fn unit_vector(n: usize, order: usize) -> (f64, f64) {
    let n = n % order;
    if (4 * n) % order == 0 {
        return [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)][4 * n / order];
    }
    let (s, c) = (TAU * n as f64 / order as f64).sin_cos();
    (c, s)
}

impl VectorField {
    pub fn new(tensor: Tensor) -> Result<Self> {
        if tensor.rank() != 4 || tensor.shape()[1] != 2 {
            return Err(shape_err("VectorField", format!("expected [K,2,H,W], got {:?}", tensor.shape())));
        }
        Ok(Self { tensor })
    }

    pub fn channels(&self) -> usize {
        self.tensor.shape()[0]
    }

    pub fn hw(&self) -> (usize, usize) {
        self.tensor.hw()
    }

    /// Vector of channel `k` at pixel `(x, y)`.
    pub fn at(&self, k: usize, x: usize, y: usize) -> (f64, f64) {
        (self.tensor.at(&[k, 0, y, x]), self.tensor.at(&[k, 1, y, x]))
    }

    /// Pixel-space displacement `(dx, dy)` of channel `k` at `(x, y)`.
    pub fn pixel_offset(&self, k: usize, x: usize, y: usize) -> (f64, f64) {
        let (vx, vy) = self.at(k, x, y);
        (vx, -vy)
    }

    /// `‖v‖` per channel and pixel: `[K, H, W]`.
    pub fn magnitude(&self) -> Tensor {
        let [k, _, h, w] = [self.tensor.shape()[0], 2, self.tensor.shape()[2], self.tensor.shape()[3]];
        let plane = h * w;
        let d = self.tensor.data();
        let mut out = Vec::with_capacity(k * plane);
        for ki in 0..k {
            for p in 0..plane {
                let (vx, vy) = (d[(ki * 2) * plane + p], d[(ki * 2 + 1) * plane + p]);
                out.push(vx.hypot(vy));
            }
        }
        Tensor::from_parts(vec![k, h, w], out)
    }
}

/// Turns each channel of a `[K, N, H, W]` feature into a vector field:
/// `v = max_n f · (cos θ, sin θ)` with `θ = 2π·argmax_n f / N` (ties to the
/// lowest orientation).
pub fn to_vector_field(feat: &GroupFeature) -> VectorField {
    let [k, n, h, w] = feat.dims();
    let plane = h * w;
    let (idx, val) = orientation_argmax(&feat.tensor);
    let mut out = vec![0.0; k * 2 * plane];
    for ki in 0..k {
        for p in 0..plane {
            let (c, s) = unit_vector(idx[ki * plane + p], n);
            let m = val[ki * plane + p];
            out[(ki * 2) * plane + p] = m * c;
            out[(ki * 2 + 1) * plane + p] = m * s;
        }
    }
    VectorField {
        tensor: Tensor::from_parts(vec![k, 2, h, w], out),
    }
}

/// Rotates a 2-D vector in the y-up frame by `2π·g/N`.
pub fn rotate_vector(v: (f64, f64), g: usize, n: usize) -> (f64, f64) {
    let (c, s) = unit_vector(g, n);
    (c * v.0 - s * v.1, s * v.0 + c * v.1)
}

/// The action on vector fields: rotate the grid by `2π·g/N` and every vector
/// by the same angle.
pub fn apply_rg_tg(g: usize, n: usize, vf: &VectorField) -> VectorField {
    let spatial = rotate_image(&vf.tensor, g as i64, n);
    let s = spatial.shape().to_vec();
    let (k, plane) = (s[0], s[2] * s[3]);
    let d = spatial.data();
    let mut out = vec![0.0; d.len()];
    for ki in 0..k {
        for p in 0..plane {
            let a = (ki * 2) * plane + p;
            let b = (ki * 2 + 1) * plane + p;
            let (x, y) = rotate_vector((d[a], d[b]), g, n);
            out[a] = x;
            out[b] = y;
        }
    }
    VectorField {
        tensor: Tensor::from_parts(s, out),
    }
}

/// Differentiable [`to_vector_field`]. The gradient flows through the max
/// response only; the argmax direction is treated as locally constant.
pub fn to_vector_field_var(feat: Var<'_>) -> Var<'_> {
    let x = feat.value();
    let s = x.shape().to_vec();
    let (k, n, plane) = (s[0], s[1], s[2] * s[3]);
    let vf = to_vector_field(&GroupFeature { tensor: (*x).clone() });
    let (idx, _) = orientation_argmax(&x);
    feat.tape().custom("to_vector_field", &[feat], vf.tensor, move |g| {
        let gd = g.data();
        let mut gx = vec![0.0; k * n * plane];
        for ki in 0..k {
            for p in 0..plane {
                let i = idx[ki * plane + p];
                let (c, sn) = unit_vector(i, n);
                gx[(ki * n + i) * plane + p] = gd[(ki * 2) * plane + p] * c + gd[(ki * 2 + 1) * plane + p] * sn;
            }
        }
        vec![Some(Tensor::from_parts(s.clone(), gx))]
    })
}
