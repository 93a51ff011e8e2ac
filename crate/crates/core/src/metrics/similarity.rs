use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRecord {
    /// `f64::INFINITY` for identical inputs.
    pub psnr: f64,
    pub ssim: f64,
    pub latent_l2: f64,
}

fn same_len(op: &'static str, a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::shape(op, a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::Empty(op));
    }
    Ok(())
}

/// `10·log10(max(x)² / MSE(x, y))` with the peak taken from the reference
/// `x`. Identical inputs give `+∞`.
pub fn psnr(x: &[f64], y: &[f64]) -> Result<f64> {
    same_len("psnr", x, y)?;
    let mse = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    let peak = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Single-window SSIM over the whole image with `C1 = (0.01 L)²` and
/// `C2 = (0.03 L)²` for dynamic range `L`.
pub fn ssim(x: &[f64], y: &[f64], dynamic_range: f64) -> Result<f64> {
    same_len("ssim", x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
        cov += (a - mx) * (b - my);
    }
    vx /= n;
    vy /= n;
    cov /= n;
    let c1 = (0.01 * dynamic_range).powi(2);
    let c2 = (0.03 * dynamic_range).powi(2);
    Ok((2.0 * mx * my + c1) * (2.0 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2)))
}

pub fn latent_l2(a: &[f64], b: &[f64]) -> Result<f64> {
    same_len("latent_l2", a, b)?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_cases() {
        let x = [1.0, 0.0, 0.5, 0.25];
        assert_eq!(psnr(&x, &x).unwrap(), f64::INFINITY);
        // every pixel off by max -> MSE = max^2 -> 0 dB
        let y: Vec<f64> = x.iter().map(|v| v + 1.0).collect();
        assert!(psnr(&x, &y).unwrap().abs() < 1e-12);
    }

    #[test]
    fn ssim_identity_and_constants() {
        let x = [0.1, 0.9, 0.4, 0.3];
        assert!((ssim(&x, &x, 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((ssim(&[0.7; 9], &[0.7; 9], 1.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn latent_distance() {
        assert_eq!(latent_l2(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert!(latent_l2(&[0.0], &[1.0, 2.0]).is_err());
    }
}
