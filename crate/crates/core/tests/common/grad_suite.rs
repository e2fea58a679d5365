//! Finite-difference check of every differentiable op on random inputs.
//!
//! Each op is reduced to a scalar by a fixed pseudo-random weighting of its
//! output. Sample positions keep their fractional parts inside
//! `[0.05, 0.95]` and alignment angles stay away from orientation-bin
//! boundaries, so central differences never straddle a kink.

use equikit::autograd::{grad_check, GradCheck, Tape, Var};
use equikit::cyclic::diff::{group_conv, group_pool, lift_conv, orientation_align};
use equikit::deformable::{deform_conv, deform_sample, re_dcn, reference_angle, ri_dcn, Modulation};
use equikit::detector::focal_loss;
use equikit::geometry::{edge_constraint_with_grad, hull_giou_loss, OrientedBox, Point};
use equikit::tensor::{Conv2dSpec, Tensor};
use equikit::vector_field::to_vector_field_var;
use equikit::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;

pub const EPS: f64 = 1e-5;
/// Relative errors use `max(|analytic|, |numeric|, FLOOR)` as denominator.
pub const FLOOR: f64 = 1e-4;

pub const OPS: [&str; 21] = [
    "conv2d",
    "conv2d_strided",
    "matmul",
    "relu",
    "sigmoid",
    "add_channel_bias",
    "pad_to_odd",
    "bilinear_sample",
    "lift_conv_c4",
    "lift_conv_c8",
    "group_conv_c8",
    "group_pool",
    "orientation_align",
    "to_vector_field",
    "deform_sample",
    "re_dcn",
    "deform_conv_modulated",
    "reference_angle",
    "ri_dcn",
    "focal_loss",
    "hull_giou_and_edge",
];

#[derive(Clone, Debug, Default)]
pub struct OpResult {
    pub op: &'static str,
    pub max_rel_err: f64,
    pub evaluations: usize,
}

fn probe(out: Var<'_>) -> Var<'_> {
    let r = Tensor::from_fn(&out.shape(), |i| (i as f64 * 0.754_877_666 + 0.1).fract() * 2.0 - 1.0);
    out.mul(out.tape().constant(r)).sum()
}

fn away_from_zero(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let v: f64 = rng.random_range(0.05..2.0);
        if rng.random_bool(0.5) {
            v
        } else {
            -v
        }
    })
}

/// Offsets whose fractional parts avoid bilinear cell boundaries.
fn offsets(k: usize, h: usize, w: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(&[k, 2, h, w], |_| rng.random_range(-2i32..2) as f64 + rng.random_range(0.05..0.95))
}

/// Angles whose position between orientation bins stays inside `[0.05, 0.95]`.
fn angles(shape: &[usize], n: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| {
        (rng.random_range(0..n) as f64 + rng.random_range(0.05..0.95)) * TAU / n as f64
    })
}

fn reference(h: usize, w: usize, n: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let th = angles(&[h * w], n, rng);
    let mags: Vec<f64> = (0..h * w).map(|_| rng.random_range(0.5..3.0)).collect();
    Tensor::from_fn(&[1, 2, h, w], |i| {
        let p = i % (h * w);
        let t = th.data()[p];
        mags[p] * if i < h * w { t.cos() } else { t.sin() }
    })
}

fn check<F>(inputs: &[Tensor], f: F) -> Result<GradCheck>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    grad_check(inputs, EPS, FLOOR, f)
}

fn scalar_fd(x: &[f64], f: impl Fn(&[f64]) -> f64, analytic: &[f64]) -> GradCheck {
    let mut r = GradCheck::default();
    let mut xs = x.to_vec();
    for i in 0..xs.len() {
        let o = xs[i];
        xs[i] = o + EPS;
        let up = f(&xs);
        xs[i] = o - EPS;
        let down = f(&xs);
        xs[i] = o;
        let num = (up - down) / (2.0 * EPS);
        let abs = (num - analytic[i]).abs();
        r.max_abs_err = r.max_abs_err.max(abs);
        r.max_rel_err = r.max_rel_err.max(abs / num.abs().max(analytic[i].abs()).max(FLOOR));
        r.evaluations += 2;
    }
    r
}

fn geometry_check(rng: &mut ChaCha8Rng) -> Result<GradCheck> {
    let gt = OrientedBox::from_center(
        rng.random_range(-3.0..3.0),
        rng.random_range(-3.0..3.0),
        rng.random_range(6.0..14.0),
        rng.random_range(3.0..6.0),
        rng.random_range(0.0..TAU),
    );
    let pts: Vec<f64> = (0..18).map(|_| rng.random_range(-8.0..8.0)).collect();
    let to_points = |x: &[f64]| x.chunks(2).map(|c| Point::new(c[0], c[1])).collect::<Vec<_>>();
    let (_, g) = hull_giou_loss(&to_points(&pts), &gt)?;
    let analytic: Vec<f64> = g.iter().flat_map(|p| [p.x, p.y]).collect();
    let mut r = scalar_fd(
        &pts,
        |x| hull_giou_loss(&to_points(x), &gt).map(|v| v.0).unwrap_or(f64::NAN),
        &analytic,
    );

    let p0 = [pts[0], pts[1]];
    let (_, ge) = edge_constraint_with_grad(Point::new(p0[0], p0[1]), &gt);
    let e = scalar_fd(&p0, |x| edge_constraint_with_grad(Point::new(x[0], x[1]), &gt).0, &[ge.x, ge.y]);
    r.max_rel_err = r.max_rel_err.max(e.max_rel_err);
    r.max_abs_err = r.max_abs_err.max(e.max_abs_err);
    r.evaluations += e.evaluations;
    Ok(r)
}

pub fn run_op(op: &str, seed: u64) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9) ^ op.len() as u64);
    let rng = &mut rng;
    let randn = |shape: &[usize], rng: &mut ChaCha8Rng| Tensor::randn(shape, 1.0, rng);
    match op {
        "conv2d" => check(&[randn(&[2, 6, 6], rng), randn(&[3, 2, 3, 3], rng)], |_, v| {
            Ok(probe(v[0].conv2d(v[1], Conv2dSpec::same(3))?))
        }),
        "conv2d_strided" => check(&[randn(&[2, 7, 7], rng), randn(&[2, 2, 3, 3], rng)], |_, v| {
            Ok(probe(v[0].conv2d(v[1], Conv2dSpec::new(2, 1))?))
        }),
        "matmul" => check(&[randn(&[3, 4], rng), randn(&[4, 5], rng)], |_, v| Ok(probe(v[0].matmul(v[1])))),
        "relu" => check(&[away_from_zero(&[3, 4, 4], rng)], |_, v| Ok(probe(v[0].relu()))),
        "sigmoid" => check(&[randn(&[3, 4, 4], rng)], |_, v| Ok(probe(v[0].sigmoid()))),
        "add_channel_bias" => check(&[randn(&[3, 4, 4], rng), randn(&[3], rng)], |_, v| {
            Ok(probe(v[0].add_channel_bias(v[1])))
        }),
        "pad_to_odd" => check(&[randn(&[2, 6, 4], rng)], |_, v| Ok(probe(v[0].pad_to_odd()))),
        "bilinear_sample" => {
            let pts = Tensor::from_fn(&[8, 2], |_| rng.random_range(0..5) as f64 + rng.random_range(0.05..0.95));
            check(&[randn(&[2, 6, 6], rng), pts], |_, v| Ok(probe(v[0].bilinear_sample(v[1])?)))
        }
        "lift_conv_c4" | "lift_conv_c8" => {
            let n = if op == "lift_conv_c4" { 4 } else { 8 };
            check(&[randn(&[2, 7, 7], rng), randn(&[2, 2, 5, 5], rng)], move |_, v| {
                Ok(probe(lift_conv(v[0], v[1], n, Conv2dSpec::same(5))?))
            })
        }
        "group_conv_c8" => check(&[randn(&[2, 8, 5, 5], rng), randn(&[2, 2, 8, 3, 3], rng)], |_, v| {
            Ok(probe(group_conv(v[0], v[1], Conv2dSpec::same(3))?))
        }),
        "group_pool" => check(&[randn(&[2, 8, 4, 4], rng)], |_, v| Ok(probe(group_pool(v[0])))),
        "orientation_align" => check(&[randn(&[2, 8, 4, 4], rng), angles(&[4, 4], 8, rng)], |_, v| {
            Ok(probe(orientation_align(v[0], v[1])?))
        }),
        "to_vector_field" => check(&[randn(&[3, 8, 4, 4], rng)], |_, v| Ok(probe(to_vector_field_var(v[0])))),
        "deform_sample" => check(&[randn(&[2, 5, 5], rng), offsets(3, 5, 5, rng)], |_, v| {
            Ok(probe(deform_sample(v[0], v[1])?))
        }),
        "re_dcn" => check(
            &[randn(&[2, 4, 5, 5], rng), offsets(3, 5, 5, rng), randn(&[2, 2, 3], rng)],
            |_, v| Ok(probe(re_dcn(v[0], v[1], v[2])?)),
        ),
        "deform_conv_modulated" => check(
            &[
                randn(&[3, 5, 5], rng),
                offsets(3, 5, 5, rng),
                randn(&[2, 3, 3], rng),
                randn(&[3, 3], rng),
                randn(&[3], rng),
            ],
            |_, v| {
                let m = Modulation { weight: v[3], bias: v[4] };
                Ok(probe(deform_conv(v[0], v[1], v[2], Some(m))?))
            },
        ),
        "reference_angle" => check(&[reference(4, 4, 8, rng)], |_, v| Ok(probe(reference_angle(v[0])?.0))),
        "ri_dcn" => check(
            &[
                randn(&[2, 4, 5, 5], rng),
                offsets(3, 5, 5, rng),
                reference(5, 5, 4, rng),
                randn(&[2, 8, 3], rng),
                randn(&[3, 8], rng).scale(0.3),
                randn(&[3], rng),
            ],
            |_, v| {
                let m = Modulation { weight: v[4], bias: v[5] };
                Ok(probe(ri_dcn(v[0], v[1], v[2], v[3], Some(m))?.out))
            },
        ),
        "focal_loss" => {
            let targets: Vec<Option<usize>> = (0..16)
                .map(|_| if rng.random_bool(0.3) { Some(rng.random_range(0..3)) } else { None })
                .collect();
            check(&[randn(&[3, 4, 4], rng).scale(2.0)], move |_, v| {
                Ok(focal_loss(v[0], &targets, 2.0, 0.25))
            })
        }
        "hull_giou_and_edge" => geometry_check(rng),
        other => panic!("unknown op {other}"),
    }
}

/// Worst error per op over `seeds`.
pub fn gradient_suite(seeds: std::ops::Range<u64>) -> Result<Vec<OpResult>> {
    OPS.iter()
        .map(|&op| {
            let mut r = OpResult { op, ..OpResult::default() };
            for s in seeds.clone() {
                let c = run_op(op, s)?;
                r.max_rel_err = r.max_rel_err.max(c.max_rel_err);
                r.evaluations += c.evaluations;
            }
            Ok(r)
        })
        .collect()
}
