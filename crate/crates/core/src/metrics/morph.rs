//! Glyph morphometrics: Otsu binarisation, Zhang–Suen skeleton, stroke
//! length and thickness, moment-based slant and bounding box.

use serde::{Deserialize, Serialize};

use super::abs_rel_error;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<bool>,
}

impl BinaryImage {
    pub fn get(&self, r: isize, c: isize) -> bool {
        r >= 0 && c >= 0 && (r as usize) < self.rows && (c as usize) < self.cols && self.data[r as usize * self.cols + c as usize]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    fn coords(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.data.len()).filter(|&i| self.data[i]).map(|i| (i / self.cols, i % self.cols))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MorphRecord {
    pub area: f64,
    pub length: f64,
    /// Radians; positive when the glyph leans right going up.
    pub slant: f64,
    pub thickness: f64,
    pub width: f64,
    pub height: f64,
}

/// Absolute relative error per measurement; `None` where the reference is 0.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MorphErrors {
    pub area: Option<f64>,
    pub length: Option<f64>,
    pub slant: Option<f64>,
    pub thickness: Option<f64>,
    pub width: Option<f64>,
    pub height: Option<f64>,
}

pub fn morph_errors(measured: &MorphRecord, reference: &MorphRecord) -> MorphErrors {
    let e = |m, r| abs_rel_error(m, r).ok();
    MorphErrors {
        area: e(measured.area, reference.area),
        length: e(measured.length, reference.length),
        slant: e(measured.slant, reference.slant),
        thickness: e(measured.thickness, reference.thickness),
        width: e(measured.width, reference.width),
        height: e(measured.height, reference.height),
    }
}

/// Otsu's threshold on a 256-bin histogram of `[0, 1]` intensities. Pixels
/// strictly above the returned value are foreground.
pub fn otsu_threshold(image: &[f64]) -> f64 {
    let mut hist = [0usize; 256];
    for &v in image {
        hist[(v.clamp(0.0, 1.0) * 255.0).round() as usize] += 1;
    }
    let total = image.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &h)| i as f64 * h as f64).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (k, &h) in hist.iter().enumerate().take(255) {
        w0 += h as f64;
        sum0 += k as f64 * h as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1).powi(2);
        if between > best.0 {
            best = (between, k);
        }
    }
    if best.0 == f64::NEG_INFINITY {
        // Single intensity: anything non-zero is ink.
        return 0.0;
    }
    (best.1 as f64 + 0.5) / 255.0
}

pub fn binarize(image: &[f64], rows: usize, cols: usize) -> Result<BinaryImage> {
    if image.len() != rows * cols {
        return Err(Error::shape("binarize", rows * cols, image.len()));
    }
    let t = otsu_threshold(image);
    Ok(BinaryImage {
        rows,
        cols,
        data: image.iter().map(|&v| v > t).collect(),
    })
}

/// Zhang–Suen thinning to a one-pixel-wide skeleton.
pub fn zhang_suen(img: &BinaryImage) -> BinaryImage {
    let mut out = img.clone();
    loop {
        let mut changed = false;
        for pass in 0..2 {
            let mut remove = Vec::new();
            for (r, c) in out.coords() {
                let (r, c) = (r as isize, c as isize);
                // P2..P9 clockwise from north.
                let p = [
                    out.get(r - 1, c),
                    out.get(r - 1, c + 1),
                    out.get(r, c + 1),
                    out.get(r + 1, c + 1),
                    out.get(r + 1, c),
                    out.get(r + 1, c - 1),
                    out.get(r, c - 1),
                    out.get(r - 1, c - 1),
                ];
                let b = p.iter().filter(|&&v| v).count();
                let a = (0..8).filter(|&i| !p[i] && p[(i + 1) % 8]).count();
                let (p2, p4, p6, p8) = (p[0], p[2], p[4], p[6]);
                let cond = if pass == 0 {
                    !(p2 && p4 && p6) && !(p4 && p6 && p8)
                } else {
                    !(p2 && p4 && p8) && !(p2 && p6 && p8)
                };
                if (2..=6).contains(&b) && a == 1 && cond {
                    remove.push(r as usize * out.cols + c as usize);
                }
            }
            changed |= !remove.is_empty();
            for i in remove {
                out.data[i] = false;
            }
        }
        if !changed {
            return out;
        }
    }
}

/// Sum of link lengths between adjacent skeleton pixels: 1 per 4-neighbour
/// link, √2 per diagonal link not already bridged by a shared 4-neighbour.
pub fn skeleton_length(skel: &BinaryImage) -> f64 {
    let mut len = 0.0;
    for (r, c) in skel.coords() {
        let (r, c) = (r as isize, c as isize);
        if skel.get(r, c + 1) {
            len += 1.0;
        }
        if skel.get(r + 1, c) {
            len += 1.0;
        }
        if skel.get(r + 1, c + 1) && !skel.get(r, c + 1) && !skel.get(r + 1, c) {
            len += std::f64::consts::SQRT_2;
        }
        if skel.get(r + 1, c - 1) && !skel.get(r, c - 1) && !skel.get(r + 1, c) {
            len += std::f64::consts::SQRT_2;
        }
    }
    len
}

/// Euclidean distance from each foreground pixel centre to the nearest
/// background pixel centre; everything outside the image is background.
/// Background pixels map to 0.
pub fn distance_to_background(img: &BinaryImage) -> Vec<f64> {
    let bg: Vec<(f64, f64)> = (0..img.data.len())
        .filter(|&i| !img.data[i])
        .map(|i| ((i / img.cols) as f64, (i % img.cols) as f64))
        .collect();
    let mut out = vec![0.0; img.data.len()];
    for (r, c) in img.coords() {
        let edge = (r + 1).min(c + 1).min(img.rows - r).min(img.cols - c) as f64;
        let (rf, cf) = (r as f64, c as f64);
        let nearest = bg
            .iter()
            .map(|&(br, bc)| ((br - rf).powi(2) + (bc - cf).powi(2)).sqrt())
            .fold(edge, f64::min);
        out[r * img.cols + c] = nearest;
    }
    out
}

/// Measures a grayscale glyph with intensities in `[0, 1]`.
///
/// Thickness is twice the mean distance from skeleton pixels to the stroke
/// boundary, where the boundary sits half a pixel before the nearest
/// background centre. Slant is `atan(μ11 / μ02)` of the foreground with the
/// vertical axis pointing up, so a glyph whose top leans right is positive.
pub fn morph_measure(image: &[f64], rows: usize, cols: usize) -> Result<MorphRecord> {
    let bin = binarize(image, rows, cols)?;
    if bin.count() == 0 {
        return Err(Error::EmptyGlyph);
    }
    let (mut rmin, mut rmax, mut cmin, mut cmax) = (usize::MAX, 0, usize::MAX, 0);
    let (mut sx, mut sy) = (0.0, 0.0);
    let n = bin.count() as f64;
    for (r, c) in bin.coords() {
        rmin = rmin.min(r);
        rmax = rmax.max(r);
        cmin = cmin.min(c);
        cmax = cmax.max(c);
        sx += c as f64;
        sy -= r as f64;
    }
    let (mx, my) = (sx / n, sy / n);
    let (mut mu11, mut mu02) = (0.0, 0.0);
    for (r, c) in bin.coords() {
        let (dx, dy) = (c as f64 - mx, -(r as f64) - my);
        mu11 += dx * dy;
        mu02 += dy * dy;
    }
    let slant = if mu02 == 0.0 { 0.0 } else { (mu11 / mu02).atan() };

    let skel = zhang_suen(&bin);
    let dt = distance_to_background(&bin);
    let skel_px: Vec<usize> = (0..skel.data.len()).filter(|&i| skel.data[i]).collect();
    let thickness = 2.0 * skel_px.iter().map(|&i| dt[i] - 0.5).sum::<f64>() / skel_px.len() as f64;

    let width = (cmax - cmin + 1) as f64;
    let height = (rmax - rmin + 1) as f64;
    Ok(MorphRecord {
        area: width * height,
        length: skeleton_length(&skel),
        slant,
        thickness,
        width,
        height,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canvas(rows: usize, cols: usize, on: &[(usize, usize)]) -> Vec<f64> {
        let mut v = vec![0.0; rows * cols];
        for &(r, c) in on {
            v[r * cols + c] = 1.0;
        }
        v
    }

    #[test]
    fn horizontal_line() {
        let px: Vec<_> = (5..15).map(|c| (8, c)).collect();
        let m = morph_measure(&canvas(20, 20, &px), 20, 20).unwrap();
        assert!((m.thickness - 1.0).abs() < 1e-12);
        assert_eq!(m.slant, 0.0);
        assert_eq!((m.width, m.height, m.area), (10.0, 1.0, 10.0));
        assert_eq!(m.length, 9.0);
    }

    #[test]
    fn diagonal_line_slant_and_length() {
        let px: Vec<_> = (2..12).map(|i| (i, i)).collect();
        let m = morph_measure(&canvas(16, 16, &px), 16, 16).unwrap();
        // x grows while y (up) shrinks: μ11 = −μ02.
        assert!((m.slant + std::f64::consts::FRAC_PI_4).abs() < 1e-12);
        assert!((m.length - 9.0 * std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn blank_is_an_error() {
        assert!(matches!(morph_measure(&[0.0; 16], 4, 4), Err(Error::EmptyGlyph)));
    }

    #[test]
    fn thick_bar_thins_to_centerline() {
        let px: Vec<_> = (4..7).flat_map(|r| (3..17).map(move |c| (r, c))).collect();
        let img = binarize(&canvas(12, 20, &px), 12, 20).unwrap();
        let skel = zhang_suen(&img);
        assert!(skel.coords().all(|(r, _)| r == 5), "{:?}", skel.coords().collect::<Vec<_>>());
        let m = morph_measure(&canvas(12, 20, &px), 12, 20).unwrap();
        assert!((m.thickness - 3.0).abs() < 1e-12, "{}", m.thickness);
    }

    #[test]
    fn otsu_splits_two_levels() {
        let img = [0.1, 0.1, 0.8, 0.8, 0.1];
        let t = otsu_threshold(&img);
        assert!(t > 0.1 && t < 0.8);
        assert_eq!(otsu_threshold(&[0.4; 4]), 0.0);
    }

    #[test]
    fn l_corner_is_not_double_counted() {
        let skel = BinaryImage {
            rows: 3,
            cols: 3,
            data: vec![true, false, false, true, true, false, false, false, false],
        };
        assert_eq!(skeleton_length(&skel), 2.0);
    }

    #[test]
    fn errors_skip_zero_reference() {
        let a = MorphRecord {
            area: 10.0,
            length: 5.0,
            slant: 0.0,
            thickness: 2.0,
            width: 2.0,
            height: 5.0,
        };
        let b = MorphRecord { thickness: 3.0, ..a };
        let e = morph_errors(&b, &a);
        assert_eq!(e.thickness, Some(0.5));
        assert_eq!(e.slant, None);
        assert_eq!(e.area, Some(0.0));
    }
}
