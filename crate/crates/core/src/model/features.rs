use ndarray::{Array2, ArrayViewMut2};

use crate::graph::{DirectedGraph, InfectionVector};
use crate::{Error, Result};

const MONOTONE_SLACK: f64 = 1e-9;

/// Input features from a newest-first history `[pi_{i-1}, ..., pi_{i-e}]`.
///
/// Row `v` is `(rho_{i-e+1}(v) - rho_{i-e}(v), ..., rho_{i-1}(v) - rho_{i-2}(v), rho_{i-1}(v))`:
/// the `e - 1` step increments, oldest first, then the newest probability.
pub fn build_features(history: &[InfectionVector], e: usize) -> Result<Array2<f64>> {
    let n = history.first().map_or(0, |h| h.len());
    let mut h = Array2::zeros((n, e));
    write_features(history, e, h.view_mut())?;
    Ok(h)
}

/// [`build_features`] into the first `e` columns of `out`.
pub(crate) fn write_features(history: &[InfectionVector], e: usize, mut out: ArrayViewMut2<f64>) -> Result<()> {
    if history.len() != e {
        return Err(Error::Dimension(format!("history has {} vectors, expected {e}", history.len())));
    }
    if e < 2 {
        return Err(Error::InvalidParameter(format!("history length must be >= 2, got {e}")));
    }
    let n = history[0].len();
    if let Some(bad) = history.iter().find(|h| h.len() != n) {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: bad.len(),
        });
    }
    if out.nrows() != n || out.ncols() < e {
        return Err(Error::Dimension(format!("feature buffer {:?} for {n} x {e}", out.dim())));
    }
    for j in 0..e - 1 {
        let (newer, older) = (&history[e - 2 - j], &history[e - 1 - j]);
        for v in 0..n {
            let delta = newer[v] - older[v];
            if delta < -MONOTONE_SLACK {
                return Err(Error::NonMonotoneHistory { node: v, delta });
            }
            out[[v, j]] = delta;
        }
    }
    for v in 0..n {
        out[[v, e - 1]] = history[0][v];
    }
    Ok(())
}

/// `min(pi_{i-1} + (pi_{i-1} - pi_{i-2}) P, 1)`, elementwise.
pub fn upper_bound(history: &[InfectionVector], g: &DirectedGraph) -> Result<InfectionVector> {
    let mut delta = Vec::new();
    let mut out = Vec::new();
    write_upper_bound(history, g, &mut delta, &mut out)?;
    Ok(InfectionVector::from_vec_unchecked(out))
}

/// [`upper_bound`] into reusable buffers; `out` receives the bound.
pub(crate) fn write_upper_bound(
    history: &[InfectionVector],
    g: &DirectedGraph,
    delta: &mut Vec<f64>,
    out: &mut Vec<f64>,
) -> Result<()> {
    if history.len() < 2 {
        return Err(Error::Dimension("upper bound needs at least two vectors".into()));
    }
    let (last, prev) = (&history[0], &history[1]);
    g.check_len(last.len())?;
    g.check_len(prev.len())?;
    delta.clear();
    delta.extend(last.iter().zip(prev.iter()).map(|(a, b)| (a - b).max(0.0)));
    out.clear();
    out.extend((0..g.node_count()).map(|y| {
        let spread: f64 = g.in_edges(y as u32).map(|(x, p)| delta[x as usize] * p).sum();
        (last[y] + spread).min(1.0)
    }));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(v: &[f64]) -> InfectionVector {
        InfectionVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn converged_history_has_zero_deltas() {
        let pi = iv(&[0.3, 1.0, 0.0]);
        let h = build_features(&vec![pi.clone(); 4], 4).unwrap();
        for v in 0..3 {
            assert_eq!(h.row(v).to_vec(), vec![0.0, 0.0, 0.0, pi[v]]);
        }
    }

    #[test]
    fn two_step_history() {
        let h = build_features(&[iv(&[1.0, 0.5, 0.0]), iv(&[1.0, 0.0, 0.0])], 2).unwrap();
        assert_eq!(h.row(0).to_vec(), vec![0.0, 1.0]);
        assert_eq!(h.row(1).to_vec(), vec![0.5, 0.5]);
        assert_eq!(h.row(2).to_vec(), vec![0.0, 0.0]);
    }

    #[test]
    fn oldest_delta_comes_first() {
        let hist = [iv(&[0.6]), iv(&[0.5]), iv(&[0.2])];
        let h = build_features(&hist, 3).unwrap();
        let row = h.row(0).to_vec();
        assert!((row[0] - 0.3).abs() < 1e-15 && (row[1] - 0.1).abs() < 1e-15 && row[2] == 0.6);
    }

    #[test]
    fn rejects_bad_histories() {
        assert!(matches!(
            build_features(&[iv(&[0.2]), iv(&[0.5])], 2),
            Err(Error::NonMonotoneHistory { node: 0, .. })
        ));
        assert!(build_features(&[iv(&[0.2])], 2).is_err());
        assert!(build_features(&[iv(&[0.2]), iv(&[0.1, 0.0])], 2).is_err());
    }

    #[test]
    fn upper_bound_examples() {
        let g = DirectedGraph::from_edges(3, &[(0, 1, 0.5), (1, 2, 0.5)]).unwrap();
        let u = upper_bound(&[iv(&[1.0, 0.5, 0.0]), iv(&[1.0, 0.0, 0.0])], &g).unwrap();
        assert_eq!(u.as_slice(), &[1.0, 0.5, 0.25]);

        let same = iv(&[0.7, 0.2, 0.1]);
        assert_eq!(upper_bound(&[same.clone(), same.clone()], &g).unwrap(), same);

        let fan_in = DirectedGraph::from_edges(4, &[(0, 3, 0.9), (1, 3, 0.9), (2, 3, 0.9)]).unwrap();
        let u = upper_bound(&[iv(&[1.0, 1.0, 1.0, 0.95]), iv(&[0.0, 0.0, 0.0, 0.9])], &fan_in).unwrap();
        assert_eq!(u[3], 1.0);
        assert!(upper_bound(&[iv(&[1.0])], &g).is_err());
        assert!(upper_bound(&[iv(&[1.0]), iv(&[1.0])], &g).is_err());
    }
}
