//! Synthetic handwritten-style digit glyphs, rendered at 28x28.
//!
//! Each class is a fixed set of stroke polylines in a unit box; every sample
//! perturbs the stroke vertices, applies a random slant/scale/offset and
//! stroke thickness, then rasterises with an anti-aliased distance falloff.
//! Offline stand-in for MNIST-format data.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{LabeledSet, SampleShape};
use crate::error::{Error, Result};
use crate::rng::Seed;
use crate::scalar::Scalar;
use crate::tensor::Matrix;

pub const SIDE: usize = 28;
pub const N_CLASSES: usize = 10;

type Stroke = &'static [(f64, f64)];

fn ellipse(cx: f64, cy: f64, rx: f64, ry: f64, n: usize) -> Vec<(f64, f64)> {
    (0..=n)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / n as f64;
            (cx + rx * a.cos(), cy + ry * a.sin())
        })
        .collect()
}

fn template(class: usize) -> Vec<Vec<(f64, f64)>> {
    const ONE: [Stroke; 2] = [&[(0.55, 0.0), (0.55, 1.0)], &[(0.3, 0.2), (0.55, 0.0)]];
    const TWO: [Stroke; 1] = [&[
        (0.15, 0.25),
        (0.3, 0.05),
        (0.7, 0.05),
        (0.85, 0.25),
        (0.8, 0.45),
        (0.15, 1.0),
        (0.9, 1.0),
    ]];
    const THREE: [Stroke; 1] = [&[
        (0.15, 0.05),
        (0.8, 0.05),
        (0.45, 0.45),
        (0.8, 0.6),
        (0.85, 0.85),
        (0.6, 1.0),
        (0.15, 0.95),
    ]];
    const FOUR: [Stroke; 1] = [&[(0.7, 1.0), (0.7, 0.0), (0.1, 0.7), (0.9, 0.7)]];
    const FIVE: [Stroke; 1] = [&[
        (0.8, 0.0),
        (0.2, 0.0),
        (0.15, 0.45),
        (0.6, 0.4),
        (0.85, 0.65),
        (0.7, 0.95),
        (0.15, 0.95),
    ]];
    const SIX: [Stroke; 1] = [&[
        (0.75, 0.0),
        (0.3, 0.3),
        (0.15, 0.7),
        (0.3, 1.0),
        (0.7, 1.0),
        (0.85, 0.75),
        (0.6, 0.5),
        (0.2, 0.65),
    ]];
    const SEVEN: [Stroke; 1] = [&[(0.1, 0.0), (0.9, 0.0), (0.4, 1.0)]];
    let fixed = |s: &[Stroke]| s.iter().map(|p| p.to_vec()).collect::<Vec<_>>();
    match class {
        0 => vec![ellipse(0.5, 0.5, 0.33, 0.5, 16)],
        1 => fixed(&ONE),
        2 => fixed(&TWO),
        3 => fixed(&THREE),
        4 => fixed(&FOUR),
        5 => fixed(&FIVE),
        6 => fixed(&SIX),
        7 => fixed(&SEVEN),
        8 => vec![ellipse(0.5, 0.26, 0.24, 0.24, 12), ellipse(0.5, 0.73, 0.3, 0.27, 12)],
        9 => vec![ellipse(0.5, 0.3, 0.28, 0.28, 12), vec![(0.78, 0.3), (0.65, 1.0)]],
        _ => unreachable!("glyph class out of range"),
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
}

/// Renders one sample of `class` into `out` (`SIDE * SIDE` pixels in `[0, 1]`).
pub fn render<R: Rng>(class: usize, rng: &mut R, out: &mut [f64]) {
    let jitter = Normal::new(0.0, 0.035).unwrap();
    let slant = rng.random_range(-0.35..0.35);
    let sx = rng.random_range(10.0..15.0);
    let sy = rng.random_range(17.0..21.0);
    let ox = 14.0 + rng.random_range(-1.5..1.5);
    let oy = 14.0 + rng.random_range(-1.5..1.5);
    let thickness = rng.random_range(1.4..3.2);
    let strokes: Vec<Vec<(f64, f64)>> = template(class)
        .into_iter()
        .map(|s| {
            s.into_iter()
                .map(|(x, y)| {
                    let (x, y) = (x + jitter.sample(rng), y + jitter.sample(rng));
                    // Unit box centred at the origin, y down; shear leans the top right.
                    let (u, v) = (x - 0.5, y - 0.5);
                    let u = u - slant * v;
                    (ox + u * sx, oy + v * sy)
                })
                .collect()
        })
        .collect();
    let half = thickness / 2.0;
    for r in 0..SIDE {
        for c in 0..SIDE {
            let p = (c as f64 + 0.5, r as f64 + 0.5);
            let d = strokes
                .iter()
                .flat_map(|s| s.windows(2).map(move |w| segment_distance(p, w[0], w[1])))
                .fold(f64::INFINITY, f64::min);
            out[r * SIDE + c] = (half + 0.5 - d).clamp(0.0, 1.0);
        }
    }
}

/// Balanced synthetic glyph dataset, classes interleaved.
pub fn gen_glyphs<T: Scalar>(n_per_class: usize, seed: u64) -> Result<LabeledSet<T>> {
    if n_per_class == 0 {
        return Err(Error::Config("n_per_class must be positive".into()));
    }
    let mut rng = Seed(seed).stream("glyphs");
    let n = n_per_class * N_CLASSES;
    let mut data = Vec::with_capacity(n * SIDE * SIDE);
    let mut labels = Vec::with_capacity(n);
    let mut buf = vec![0.0; SIDE * SIDE];
    for i in 0..n {
        let class = i % N_CLASSES;
        render(class, &mut rng, &mut buf);
        // Quantise like an 8-bit image so IDX export is lossless.
        data.extend(buf.iter().map(|&v| T::lit((v * 255.0).round() / 255.0)));
        labels.push(class);
    }
    LabeledSet::new(
        Matrix::from_vec(n, SIDE * SIDE, data)?,
        labels,
        N_CLASSES,
        SampleShape::Image { rows: SIDE, cols: SIDE },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glyphs_have_ink_and_background() {
        let set = gen_glyphs::<f32>(3, 1).unwrap();
        assert_eq!(set.len(), 30);
        for row in set.samples.iter_rows() {
            let ink = row.iter().filter(|&&v| v > 0.5).count();
            assert!(ink > 15 && ink < 400, "ink {ink}");
            assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn classes_differ_on_average() {
        let set = gen_glyphs::<f64>(20, 4).unwrap();
        let mut means = vec![vec![0.0; SIDE * SIDE]; N_CLASSES];
        for (row, &l) in set.samples.iter_rows().zip(&set.labels) {
            for (m, v) in means[l].iter_mut().zip(row) {
                *m += v / 20.0;
            }
        }
        for a in 0..N_CLASSES {
            for b in a + 1..N_CLASSES {
                let d: f64 = means[a].iter().zip(&means[b]).map(|(x, y)| (x - y).powi(2)).sum();
                assert!(d > 1.0, "classes {a} and {b} too similar ({d})");
            }
        }
    }
}
