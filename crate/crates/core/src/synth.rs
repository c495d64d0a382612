//! Synthetic ground-truth scenes generated from Malus's law.
//!
//! A partially polarized beam of intensity `I`, degree `p` and angle `theta`
//! seen through a polarizer at angle `a` transmits
//! `0.5 * I * (1 + p * cos(2 * (theta - a)))`, which is `I * cos^2(theta - a)`
//! for fully polarized light.

use rand::Rng;

use crate::pfa::{PolAngle, PolStack};
use crate::scalar::Scalar;
use crate::tensor::Plane;

/// Transmitted intensity through the polarizer at `angle`.
#[inline]
pub fn malus_intensity(intensity: f64, dolp: f64, theta_deg: f64, angle: PolAngle) -> f64 {
    let d = (theta_deg - angle.degrees() as f64).to_radians();
    0.5 * intensity * (1.0 + dolp * (2.0 * d).cos())
}

/// Spatially uniform beam.
pub fn uniform_polarized_stack<T: Scalar>(
    height: usize,
    width: usize,
    theta_deg: f64,
    dolp: f64,
    intensity: f64,
) -> PolStack<T> {
    PolStack::from_channels(PolAngle::ALL.map(|a| {
        Plane::filled(height, width, T::of(malus_intensity(intensity, dolp, theta_deg, a)))
    }))
    .expect("equal planes")
}

/// Builds a stack from per-pixel `(intensity, dolp, theta_deg)`.
pub fn stack_from_fields<T: Scalar>(
    height: usize,
    width: usize,
    field: impl Fn(usize, usize) -> (f64, f64, f64),
) -> PolStack<T> {
    let mut values = Vec::with_capacity(height * width);
    for y in 0..height {
        for x in 0..width {
            values.push(field(y, x));
        }
    }
    PolStack::from_channels(PolAngle::ALL.map(|a| {
        Plane::from_fn(height, width, |y, x| {
            let (i, p, t) = values[y * width + x];
            T::of(malus_intensity(i, p, t, a))
        })
    }))
    .expect("equal planes")
}

#[derive(Clone, Copy, Debug)]
enum Shape {
    Disc { cy: f64, cx: f64, r: f64 },
    Rect { y0: f64, x0: f64, y1: f64, x1: f64 },
}

impl Shape {
    fn contains(&self, y: f64, x: f64) -> bool {
        match *self {
            Shape::Disc { cy, cx, r } => (y - cy).powi(2) + (x - cx).powi(2) <= r * r,
            Shape::Rect { y0, x0, y1, x1 } => y >= y0 && y < y1 && x >= x0 && x < x1,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Object {
    shape: Shape,
    intensity: f64,
    dolp: f64,
    theta: f64,
    /// Stripe texture: amplitude, spatial frequency (cycles/pixel), direction.
    stripes: (f64, f64, f64),
}

/// A piecewise-smooth polarized scene: a smoothly varying background with
/// discs and rectangles of distinct material, some carrying stripe texture.
/// Angles cover the whole half circle, including the 0/180 wrap.
pub fn textured_scene<T: Scalar, R: Rng + ?Sized>(height: usize, width: usize, rng: &mut R) -> PolStack<T> {
    let (hf, wf) = (height as f64, width as f64);
    let scale = hf.min(wf);

    let bg_i0 = rng.random_range(0.25..0.55);
    let bg_gy = rng.random_range(-0.2..0.2);
    let bg_gx = rng.random_range(-0.2..0.2);
    let bg_p = rng.random_range(0.15..0.4);
    let bg_theta0 = rng.random_range(0.0..180.0);
    let bg_theta_span = rng.random_range(60.0..180.0);
    let bg_theta_dir = rng.random_range(0.0..std::f64::consts::TAU);
    let grating = (
        rng.random_range(0.03..0.1),
        rng.random_range(0.08..0.3),
        rng.random_range(0.0..std::f64::consts::PI),
    );

    let n_objects = rng.random_range(5..10);
    let objects: Vec<Object> = (0..n_objects)
        .map(|_| {
            let shape = if rng.random_bool(0.5) {
                Shape::Disc {
                    cy: rng.random_range(0.0..hf),
                    cx: rng.random_range(0.0..wf),
                    r: rng.random_range(0.08..0.25) * scale,
                }
            } else {
                let y0 = rng.random_range(-0.1..0.9) * hf;
                let x0 = rng.random_range(-0.1..0.9) * wf;
                Shape::Rect {
                    y0,
                    x0,
                    y1: y0 + rng.random_range(0.1..0.4) * hf,
                    x1: x0 + rng.random_range(0.1..0.4) * wf,
                }
            };
            // Bias a share of the objects toward the 0/180 degree seam.
            let theta = if rng.random_bool(0.35) {
                (rng.random_range(-20.0..20.0f64)).rem_euclid(180.0)
            } else {
                rng.random_range(0.0..180.0)
            };
            let stripes = if rng.random_bool(0.5) {
                (
                    rng.random_range(0.05..0.2),
                    rng.random_range(0.1..0.45),
                    rng.random_range(0.0..std::f64::consts::PI),
                )
            } else {
                (0.0, 0.0, 0.0)
            };
            Object {
                shape,
                intensity: rng.random_range(0.15..0.85),
                dolp: rng.random_range(0.2..0.9),
                theta,
                stripes,
            }
        })
        .collect();

    stack_from_fields(height, width, |y, x| {
        let (yf, xf) = (y as f64 + 0.5, x as f64 + 0.5);
        let (ny, nx) = (yf / hf - 0.5, xf / wf - 0.5);
        let mut i = bg_i0 + bg_gy * ny + bg_gx * nx;
        let (ga, gf, gd) = grating;
        i += ga * (std::f64::consts::TAU * gf * (yf * gd.sin() + xf * gd.cos())).sin();
        let mut p = bg_p * (1.0 + 0.5 * ny);
        let mut t = bg_theta0 + bg_theta_span * (ny * bg_theta_dir.sin() + nx * bg_theta_dir.cos());
        for o in objects.iter().rev() {
            if o.shape.contains(yf, xf) {
                let (sa, sf, sd) = o.stripes;
                i = o.intensity
                    + sa * (std::f64::consts::TAU * sf * (yf * sd.sin() + xf * sd.cos())).sin();
                p = o.dolp;
                t = o.theta;
                break;
            }
        }
        (i.clamp(0.02, 0.98), p.clamp(0.0, 1.0), t.rem_euclid(180.0))
    })
}
