use std::cmp::Ordering;
use std::path::PathBuf;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    pub pearson: f64,
    pub spearman: f64,
    pub n: usize,
    /// Where the `(true, estimate)` pairs were dumped, if anywhere.
    pub scatter: Option<PathBuf>,
}

/// Product-moment correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::InvalidParameter("correlation needs at least two samples".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

pub fn correlation(true_vals: &[f64], est_vals: &[f64]) -> Result<CorrelationReport> {
    Ok(CorrelationReport {
        pearson: pearson(true_vals, est_vals)?,
        spearman: spearman(true_vals, est_vals)?,
        n: true_vals.len(),
        scatter: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Textbook computational formula, independent of the two-pass implementation.
    fn closed_form(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let sx: f64 = x.iter().sum();
        let sy: f64 = y.iter().sum();
        let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        let sxx: f64 = x.iter().map(|a| a * a).sum();
        let syy: f64 = y.iter().map(|b| b * b).sum();
        (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
    }

    #[test]
    fn identity_and_reverse() {
        let x = [3.0, 1.0, 4.0, 1.5, 9.0, 2.6];
        let r = correlation(&x, &x).unwrap();
        assert!((r.pearson - 1.0).abs() < 1e-15 && (r.spearman - 1.0).abs() < 1e-15);
        let rev: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((spearman(&x, &rev).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn fixture_value() {
        let t = [1.0, 2.0, 3.0, 4.0];
        let e = [1.1, 1.9, 3.2, 3.8];
        let p = pearson(&t, &e).unwrap();
        // 4.7 / sqrt(5 * 4.5)
        assert!((p - 0.990_847_000_186_092_1).abs() < 1e-12, "{p}");
        assert!((p - closed_form(&t, &e)).abs() < 1e-12);
        assert!((spearman(&t, &e).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_closed_form_on_fixtures() {
        let x = [0.5, 2.25, 3.0, 7.5, 1.0, 4.0, 6.5];
        let y = [1.0, 2.0, 2.5, 8.0, 0.0, 5.5, 5.0];
        assert!((pearson(&x, &y).unwrap() - closed_form(&x, &y)).abs() < 1e-12);
        let (rx, ry) = (average_ranks(&x), average_ranks(&y));
        assert!((spearman(&x, &y).unwrap() - closed_form(&rx, &ry)).abs() < 1e-12);
    }

    #[test]
    fn ties_get_mean_rank() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn errors() {
        assert!(matches!(pearson(&[1.0, 1.0], &[1.0, 2.0]), Err(Error::ZeroVariance)));
        assert!(pearson(&[1.0], &[1.0]).is_err());
        assert!(pearson(&[1.0, 2.0], &[1.0]).is_err());
    }
}
