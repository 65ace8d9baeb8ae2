use ndarray::linalg::general_mat_mul;
use ndarray::{concatenate, s, Array2, ArrayViewMut2, Axis};

use super::features::{build_features, upper_bound, write_features, write_upper_bound};
use super::params::ModelParams;
use crate::graph::{DirectedGraph, InfectionVector};
use crate::{Error, Result};

const NO_SOURCE: u32 = u32::MAX;

struct LayerTrace {
    /// `[h, a]`: layer input and its max-aggregated messages side by side.
    joined: Array2<f64>,
    /// Winning in-neighbor per `(v, k)` of the max aggregation, or `NO_SOURCE`.
    arg_source: Vec<u32>,
    arg_prob: Vec<f64>,
    pre_activation: Array2<f64>,
}

/// Intermediate values of one forward step, kept for backpropagation.
pub struct StepTrace {
    layers: Vec<LayerTrace>,
    previous: InfectionVector,
    upper: InfectionVector,
    raw: Vec<f64>,
    output: InfectionVector,
    margin: f64,
}

impl StepTrace {
    pub fn output(&self) -> &InfectionVector {
        &self.output
    }

    pub fn into_output(self) -> InfectionVector {
        self.output
    }

    pub fn upper(&self) -> &InfectionVector {
        &self.upper
    }

    /// Network output `h^l` before the clamp.
    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    /// Distance to the nearest non-differentiable point of the forward pass:
    /// a ReLU input at zero, a tie in the max aggregation, or the clamp switching branch.
    pub fn kink_margin(&self) -> f64 {
        self.margin
    }
}

/// Run the network on a newest-first history and keep the trace.
pub fn forward_trace(g: &DirectedGraph, history: &[InfectionVector], params: &ModelParams) -> Result<StepTrace> {
    params.validate_shapes()?;
    let mut h = build_features(history, params.hyper.history)?;
    g.check_len(h.nrows())?;
    let upper = upper_bound(history, g)?;
    let n = g.node_count();
    let mut margin = f64::INFINITY;
    let mut traces = Vec::with_capacity(params.layers.len());

    for layer in &params.layers {
        let d = layer.d_in();
        let message = h.dot(&layer.w1) + &layer.b1;
        let mut aggregated = Array2::zeros((n, d));
        let mut arg_source = vec![NO_SOURCE; n * d];
        let mut arg_prob = vec![0.0; n * d];
        let mut best = vec![0.0; d];
        let mut second = vec![0.0; d];
        for v in 0..n {
            let mut seen = 0usize;
            for (u, p) in g.in_edges(v as u32) {
                let row = message.row(u as usize);
                for k in 0..d {
                    let cand = p * row[k];
                    let slot = v * d + k;
                    // Strict comparison keeps the lowest source id on ties.
                    if seen == 0 || cand > best[k] {
                        if seen > 0 {
                            second[k] = best[k];
                        }
                        best[k] = cand;
                        arg_source[slot] = u;
                        arg_prob[slot] = p;
                    } else if seen == 1 || cand > second[k] {
                        second[k] = cand;
                    }
                }
                seen += 1;
            }
            if seen > 0 {
                for k in 0..d {
                    aggregated[[v, k]] = best[k];
                    if seen > 1 {
                        margin = margin.min(best[k] - second[k]);
                    }
                }
            }
        }
        let joined = concatenate![Axis(1), h, aggregated];
        let pre = joined.dot(&layer.w2) + &layer.b2;
        margin = pre.iter().fold(margin, |m, z| m.min(z.abs()));
        h = pre.mapv(|z| z.max(0.0));
        traces.push(LayerTrace {
            joined,
            arg_source,
            arg_prob,
            pre_activation: pre,
        });
    }

    let raw: Vec<f64> = h.column(0).to_vec();
    if let Some(bad) = raw.iter().find(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("network output {bad}")));
    }
    let previous = history[0].clone();
    let mut out = Vec::with_capacity(n);
    for v in 0..n {
        let candidate = previous[v] + raw[v];
        // with raw pinned at zero by the ReLU the clamp cannot switch locally
        if raw[v] > 0.0 {
            margin = margin.min((candidate - upper[v]).abs());
        }
        out.push(candidate.min(upper[v]));
    }
    Ok(StepTrace {
        layers: traces,
        previous,
        upper,
        raw,
        output: InfectionVector::from_vec_unchecked(out),
        margin,
    })
}

/// Scratch buffers reused across forward steps, so repeated inference does
/// not allocate per layer.
#[derive(Debug, Default)]
pub struct StepWorkspace {
    current: Vec<f64>,
    next: Vec<f64>,
    message: Vec<f64>,
    delta: Vec<f64>,
    upper: Vec<f64>,
    tile: Vec<f64>,
}

/// Destination rows processed together, so a tile of `[h, a]` stays cache resident.
const TILE_ROWS: usize = 1024;

/// Edges walked in CSR order are known in advance, so the gathered message
/// rows are requested this many edges early.
const PREFETCH_EDGES: usize = 8;

#[inline(always)]
fn prefetch_row(row: &[f64]) {
    #[cfg(target_arch = "x86_64")]
    for line in row.chunks(8) {
        // SAFETY: prefetch is a hint and never faults; the pointer is in bounds.
        unsafe { std::arch::x86_64::_mm_prefetch::<{ std::arch::x86_64::_MM_HINT_T0 }>(line.as_ptr().cast()) }
    }
    #[cfg(not(target_arch = "x86_64"))]
    let _ = row;
}

fn view(buf: &mut Vec<f64>, rows: usize, cols: usize) -> ArrayViewMut2<'_, f64> {
    if buf.len() < rows * cols {
        buf.resize(rows * cols, 0.0);
    }
    ArrayViewMut2::from_shape((rows, cols), &mut buf[..rows * cols]).expect("buffer sized above")
}

/// `min(pi_{i-1} + h^l, u_i)` for a newest-first history of length `e`.
pub fn forward_step(g: &DirectedGraph, history: &[InfectionVector], params: &ModelParams) -> Result<InfectionVector> {
    forward_step_with(g, history, params, &mut StepWorkspace::default())
}

/// [`forward_step`] using caller-owned scratch space. Same arithmetic as
/// [`forward_trace`], without keeping intermediates.
pub fn forward_step_with(
    g: &DirectedGraph,
    history: &[InfectionVector],
    params: &ModelParams,
    ws: &mut StepWorkspace,
) -> Result<InfectionVector> {
    params.validate_shapes()?;
    let n = history.first().map_or(0, |h| h.len());
    g.check_len(n)?;
    let e = params.hyper.history;
    write_features(history, e, view(&mut ws.current, n, e))?;
    write_upper_bound(history, g, &mut ws.delta, &mut ws.upper)?;
    let (offsets, sources, probs) = g.in_csr();

    for layer in &params.layers {
        let (d, d_out) = (layer.d_in(), layer.d_out());
        let h = view(&mut ws.current, n, d);
        let mut message = view(&mut ws.message, n, d);
        general_mat_mul(1.0, &h, &layer.w1, 0.0, &mut message);
        message += &layer.b1;
        let msg = message.as_slice().expect("contiguous buffer");
        let mut next = view(&mut ws.next, n, d_out);
        for r0 in (0..n).step_by(TILE_ROWS) {
            let r1 = (r0 + TILE_ROWS).min(n);
            let mut joined = view(&mut ws.tile, r1 - r0, 2 * d);
            joined.slice_mut(s![.., ..d]).assign(&h.slice(s![r0..r1, ..]));
            let rows = joined.as_slice_mut().expect("contiguous buffer");
            for (v, row) in (r0..r1).zip(rows.chunks_exact_mut(2 * d)) {
                let agg = &mut row[d..];
                let edges = offsets[v]..offsets[v + 1];
                if edges.is_empty() {
                    agg.fill(0.0);
                    continue;
                }
                // in-lists are sorted by source and ties keep the first maximum,
                // matching forward_trace
                agg.fill(f64::NEG_INFINITY);
                for c in edges {
                    if let Some(&ahead) = sources.get(c + PREFETCH_EDGES) {
                        prefetch_row(&msg[ahead as usize * d..(ahead as usize + 1) * d]);
                    }
                    let (u, p) = (sources[c] as usize, probs[c]);
                    for (a, &m) in agg.iter_mut().zip(&msg[u * d..(u + 1) * d]) {
                        let cand = p * m;
                        if cand > *a {
                            *a = cand;
                        }
                    }
                }
            }
            let mut out = next.slice_mut(s![r0..r1, ..]);
            general_mat_mul(1.0, &joined, &layer.w2, 0.0, &mut out);
            out += &layer.b2;
            out.mapv_inplace(|z| z.max(0.0));
        }
        std::mem::swap(&mut ws.current, &mut ws.next);
    }

    let raw = view(&mut ws.current, n, 1);
    let previous = &history[0];
    let out: Vec<f64> = (0..n).map(|v| (previous[v] + raw[[v, 0]]).min(ws.upper[v])).collect();
    if let Some(bad) = out.iter().find(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("network output {bad}")));
    }
    Ok(InfectionVector::from_vec_unchecked(out))
}

/// Gradient of a scalar objective with respect to all parameters, given its
/// gradient `d_output` with respect to the clamped output.
///
/// Subgradient conventions: ReLU and the clamp pass no gradient at their
/// switching points, and the max aggregation routes gradient to the
/// lowest-id maximizer.
pub fn backward(trace: &StepTrace, g: &DirectedGraph, params: &ModelParams, d_output: &[f64]) -> Result<ModelParams> {
    g.check_len(d_output.len())?;
    let n = g.node_count();
    let mut grads = params.zeros_like();
    let mut d_h = Array2::zeros((n, 1));
    for v in 0..n {
        if trace.previous[v] + trace.raw[v] < trace.upper[v] {
            d_h[[v, 0]] = d_output[v];
        }
    }
    for (idx, (layer, t)) in params.layers.iter().zip(&trace.layers).enumerate().rev() {
        let d = layer.d_in();
        let mut d_pre = d_h;
        d_pre.zip_mut_with(&t.pre_activation, |g, &z| {
            if z <= 0.0 {
                *g = 0.0;
            }
        });
        let grad = &mut grads.layers[idx];
        grad.w2 = t.joined.t().dot(&d_pre);
        grad.b2 = d_pre.sum_axis(Axis(0));

        let d_joined = d_pre.dot(&layer.w2.t());
        let mut d_input = d_joined.slice(s![.., ..d]).to_owned();
        let d_agg = d_joined.slice(s![.., d..]);
        let mut d_message = Array2::<f64>::zeros((n, d));
        for v in 0..n {
            for k in 0..d {
                let slot = v * d + k;
                let u = t.arg_source[slot];
                if u != NO_SOURCE {
                    d_message[[u as usize, k]] += t.arg_prob[slot] * d_agg[[v, k]];
                }
            }
        }
        let input = t.joined.slice(s![.., ..d]);
        grad.w1 = input.t().dot(&d_message);
        grad.b1 = d_message.sum_axis(Axis(0));
        d_input += &d_message.dot(&layer.w1.t());
        d_h = d_input;
    }
    Ok(grads)
}

fn check_pair(predicted: &[f64], target: &[f64]) -> Result<f64> {
    if predicted.len() != target.len() {
        return Err(Error::LengthMismatch {
            expected: target.len(),
            actual: predicted.len(),
        });
    }
    let total: f64 = target.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::InvalidParameter("target influence must be positive".into()));
    }
    Ok(total)
}

/// `||pred - target||_1 / |V| + lambda * |sum(pred) - sum(target)| / sum(target)`.
pub fn loss(predicted: &[f64], target: &[f64], lambda: f64) -> Result<f64> {
    let total = check_pair(predicted, target)?;
    let n = target.len() as f64;
    let l1: f64 = predicted.iter().zip(target).map(|(p, t)| (p - t).abs()).sum();
    let sum_pred: f64 = predicted.iter().sum();
    Ok(l1 / n + lambda * (sum_pred - total).abs() / total)
}

/// Loss value and its (sub)gradient with respect to `predicted`; `sign(0) = 0`.
pub fn loss_and_grad(predicted: &[f64], target: &[f64], lambda: f64) -> Result<(f64, Vec<f64>)> {
    let value = loss(predicted, target, lambda)?;
    let total: f64 = target.iter().sum();
    let n = target.len() as f64;
    let sign = |x: f64| if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 };
    let global = lambda * sign(predicted.iter().sum::<f64>() - total) / total;
    let grad = predicted
        .iter()
        .zip(target)
        .map(|(p, t)| sign(p - t) / n + global)
        .collect();
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Hyper;

    fn iv(v: &[f64]) -> InfectionVector {
        InfectionVector::new(v.to_vec()).unwrap()
    }

    fn path() -> DirectedGraph {
        DirectedGraph::from_edges(3, &[(0, 1, 0.5), (1, 2, 0.5)]).unwrap()
    }

    #[test]
    fn zero_params_return_previous() {
        let params = ModelParams::zeros(Hyper::new(2, 3, 4, 1, 0.3)).unwrap();
        let hist = [iv(&[1.0, 0.5, 0.0]), iv(&[1.0, 0.0, 0.0])];
        let out = forward_step(&path(), &hist, &params).unwrap();
        assert_eq!(out, hist[0]);
    }

    #[test]
    fn converged_history_is_fixed_point() {
        let mut params = ModelParams::init(Hyper::new(3, 2, 4, 1, 0.3), 3).unwrap();
        params.layers[1].b2.fill(5.0);
        let pi = iv(&[1.0, 0.4, 0.1]);
        let out = forward_step(&path(), &vec![pi.clone(); 3], &params).unwrap();
        assert_eq!(out, pi);
    }

    #[test]
    fn large_output_hits_upper_bound() {
        let mut params = ModelParams::zeros(Hyper::new(2, 1, 1, 1, 0.3)).unwrap();
        params.layers[0].b2.fill(10.0);
        let hist = [iv(&[1.0, 0.5, 0.0]), iv(&[1.0, 0.0, 0.0])];
        let trace = forward_trace(&path(), &hist, &params).unwrap();
        assert_eq!(trace.output().as_slice(), &[1.0, 0.5, 0.25]);
        // every node is clamped, so no gradient reaches the parameters
        let grads = backward(&trace, &path(), &params, &[1.0, 1.0, 1.0]).unwrap();
        assert!(grads.to_flat().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn lean_step_matches_trace() {
        let g = DirectedGraph::from_edges(
            6,
            &[(0, 1, 0.5), (1, 2, 0.5), (3, 2, 0.9), (4, 2, 0.9), (2, 5, 0.3), (5, 0, 0.7), (0, 3, 0.2)],
        )
        .unwrap();
        let hist = [
            iv(&[1.0, 0.6, 0.3, 0.2, 0.1, 0.0]),
            iv(&[1.0, 0.5, 0.0, 0.2, 0.0, 0.0]),
            iv(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
        ];
        for seed in 0..20 {
            let params = ModelParams::init(Hyper::new(3, 3, 5, 1, 0.3), seed).unwrap();
            let traced = forward_trace(&g, &hist, &params).unwrap().into_output();
            assert_eq!(forward_step(&g, &hist, &params).unwrap(), traced);
        }
    }

    #[test]
    fn loss_examples() {
        let t = [1.0, 0.0, 0.0, 0.0];
        assert_eq!(loss(&t, &t, 0.3).unwrap(), 0.0);
        let p = [1.0, 0.5, 0.0, 0.0];
        assert!((loss(&p, &t, 0.3).unwrap() - 0.275).abs() < 1e-15);
        assert!((loss(&p, &t, 0.0).unwrap() - 0.125).abs() < 1e-15);
        assert!(loss(&p[..3], &t, 0.3).is_err());
    }

    #[test]
    fn loss_gradient_matches_differences() {
        let t = [1.0, 0.2, 0.4, 0.0];
        let p = [1.0 - 0.3, 0.35, 0.1, 0.05];
        let (_, grad) = loss_and_grad(&p, &t, 0.3).unwrap();
        for i in 0..4 {
            let h = 1e-6;
            let mut up = p;
            up[i] += h;
            let mut down = p;
            down[i] -= h;
            let fd = (loss(&up, &t, 0.3).unwrap() - loss(&down, &t, 0.3).unwrap()) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-8, "{i}: {fd} vs {}", grad[i]);
        }
    }
}
