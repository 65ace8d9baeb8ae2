use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;

use super::simulate;
use crate::graph::{DirectedGraph, InfectionVector, NodeId, SeedSet};
use crate::rng::{derive_seed, stream_rng};
use crate::{Error, Result};

pub const TUPLE_MAGIC: &[u8; 4] = b"MONT";
const TUPLE_VERSION: u32 = 1;
const SEED_SETS_PER_BATCH: usize = 32;

/// One supervised sample: the vector at step `step` and the `e` vectors before it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTuple {
    pub step: usize,
    /// `pi_step`.
    pub target: InfectionVector,
    /// `[pi_{step-1}, ..., pi_{step-e}]`, newest first.
    pub history: Vec<InfectionVector>,
    pub graph_ref: String,
}

/// Largest training seed-set size: `max(1, floor(|V| / 50))`.
pub fn seed_size_cap(node_count: usize) -> usize {
    (node_count / 50).max(1)
}

/// Seed set with size uniform in `[1, max_size]` and members uniform without replacement.
pub fn sample_seed_set<R: Rng + ?Sized>(rng: &mut R, node_count: usize, max_size: usize) -> SeedSet {
    let size = rng.random_range(1..=max_size.clamp(1, node_count));
    let nodes = sample(rng, node_count, size).into_iter().map(|x| x as NodeId).collect();
    SeedSet::new(nodes, node_count).expect("sampled seeds are distinct and in range")
}

fn random_seed_set(g: &DirectedGraph, index: u64, master_seed: u64) -> SeedSet {
    let n = g.node_count();
    sample_seed_set(&mut stream_rng(master_seed, 2 * index), n, seed_size_cap(n))
}

fn tuples_for_seed_set(
    g: &DirectedGraph,
    graph_ref: &str,
    index: u64,
    e: usize,
    first_step: usize,
    runs: usize,
    master_seed: u64,
) -> Result<Vec<TrainingTuple>> {
    let seeds = random_seed_set(g, index, master_seed);
    let sim = simulate(g, &seeds, runs, derive_seed(master_seed, 2 * index + 1))?;
    let h = sim.per_step.len() - 1;
    let n = g.node_count();
    Ok((first_step..=h)
        .map(|i| TrainingTuple {
            step: i,
            target: sim.per_step[i].clone(),
            history: (1..=e)
                .map(|back| match i.checked_sub(back) {
                    Some(j) => sim.per_step[j].clone(),
                    None => InfectionVector::zeros(n),
                })
                .collect(),
            graph_ref: graph_ref.to_string(),
        })
        .collect())
}

/// Draw random seed sets, simulate each, and keep one tuple per step `i` with
/// `e <= i <= h` until `n_tuples` have been collected.
///
/// Seed set `j` and its simulation use streams derived from `(master_seed, j)`,
/// so the output does not depend on the thread count.
pub fn generate_tuples(
    g: &DirectedGraph,
    graph_ref: &str,
    n_tuples: usize,
    e: usize,
    runs: usize,
    master_seed: u64,
) -> Result<Vec<TrainingTuple>> {
    generate_tuples_from(g, graph_ref, n_tuples, e, e, runs, master_seed)
}

/// As [`generate_tuples`], but keeps steps `first_step <= i <= h`. Steps before
/// 0 in the history are all-zero vectors, the same padding stacked inference
/// uses, so `first_step = 1` also covers the start of every cascade.
pub fn generate_tuples_from(
    g: &DirectedGraph,
    graph_ref: &str,
    n_tuples: usize,
    e: usize,
    first_step: usize,
    runs: usize,
    master_seed: u64,
) -> Result<Vec<TrainingTuple>> {
    if e < 2 {
        return Err(Error::InvalidParameter(format!("history length e must be >= 2, got {e}")));
    }
    if !(1..=e).contains(&first_step) {
        return Err(Error::InvalidParameter(format!("first step must be in [1, {e}], got {first_step}")));
    }
    if n_tuples == 0 {
        return Err(Error::InvalidParameter("n_tuples must be >= 1".into()));
    }
    let max_seed_sets = 100 * n_tuples + 1000;
    let mut out = Vec::with_capacity(n_tuples);
    let mut next = 0usize;
    while out.len() < n_tuples {
        if next >= max_seed_sets {
            return Err(Error::InvalidParameter(format!(
                "collected only {} tuples from {next} seed sets; cascades rarely reach step {first_step}",
                out.len()
            )));
        }
        let batch: Vec<Vec<TrainingTuple>> = (next..next + SEED_SETS_PER_BATCH)
            .into_par_iter()
            .map(|j| tuples_for_seed_set(g, graph_ref, j as u64, e, first_step, runs, master_seed))
            .collect::<Result<_>>()?;
        next += SEED_SETS_PER_BATCH;
        for t in batch.into_iter().flatten() {
            if out.len() == n_tuples {
                break;
            }
            out.push(t);
        }
    }
    Ok(out)
}

/// Binary container: magic `MONT`, version, `|V|`, `e`, count, then per tuple
/// the step, `e + 1` vectors (target first, then history newest first) and the
/// graph identifier. All integers and floats little-endian.
pub fn write_tuples(path: impl AsRef<Path>, tuples: &[TrainingTuple]) -> Result<()> {
    let path = path.as_ref();
    let (n, e) = match tuples.first() {
        Some(t) => (t.target.len(), t.history.len()),
        None => (0, 0),
    };
    for t in tuples {
        if t.history.len() != e || t.target.len() != n || t.history.iter().any(|h| h.len() != n) {
            return Err(Error::Dimension("all tuples in one file must share |V| and e".into()));
        }
    }
    let io = |err| Error::io(path, err);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(io);
    put(TUPLE_MAGIC)?;
    put(&TUPLE_VERSION.to_le_bytes())?;
    put(&(n as u64).to_le_bytes())?;
    put(&(e as u32).to_le_bytes())?;
    put(&(tuples.len() as u64).to_le_bytes())?;
    for t in tuples {
        put(&(t.step as u32).to_le_bytes())?;
        for v in std::iter::once(&t.target).chain(&t.history) {
            for x in v.iter() {
                put(&x.to_le_bytes())?;
            }
        }
        put(&(t.graph_ref.len() as u32).to_le_bytes())?;
        put(t.graph_ref.as_bytes())?;
    }
    w.flush().map_err(io)
}

struct Cursor<R> {
    inner: R,
}

impl<R: Read> Cursor<R> {
    fn bytes<const N: usize>(&mut self) -> std::io::Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf)?;
        Ok(buf)
    }

    fn u32(&mut self) -> std::io::Result<u32> {
        self.bytes().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> std::io::Result<u64> {
        self.bytes().map(u64::from_le_bytes)
    }

    fn f64(&mut self) -> std::io::Result<f64> {
        self.bytes().map(f64::from_le_bytes)
    }
}

pub fn read_tuples(path: impl AsRef<Path>) -> Result<Vec<TrainingTuple>> {
    let path = path.as_ref();
    let io = |err| Error::io(path, err);
    let mut r = Cursor {
        inner: BufReader::new(File::open(path).map_err(io)?),
    };
    if &r.bytes::<4>().map_err(io)? != TUPLE_MAGIC {
        return Err(Error::Format(format!("{}: not a tuple file", path.display())));
    }
    let version = r.u32().map_err(io)?;
    if version != TUPLE_VERSION {
        return Err(Error::Format(format!("unsupported tuple file version {version}")));
    }
    let n = r.u64().map_err(io)? as usize;
    let e = r.u32().map_err(io)? as usize;
    let count = r.u64().map_err(io)? as usize;
    let mut tuples = Vec::with_capacity(count);
    for _ in 0..count {
        let step = r.u32().map_err(io)? as usize;
        let mut vectors = Vec::with_capacity(e + 1);
        for _ in 0..=e {
            let v = (0..n).map(|_| r.f64()).collect::<std::io::Result<Vec<_>>>().map_err(io)?;
            vectors.push(InfectionVector::new(v)?);
        }
        let len = r.u32().map_err(io)? as usize;
        let mut name = vec![0u8; len];
        r.inner.read_exact(&mut name).map_err(io)?;
        let graph_ref = String::from_utf8(name).map_err(|_| Error::Format("graph id is not UTF-8".into()))?;
        let target = vectors.remove(0);
        tuples.push(TrainingTuple {
            step,
            target,
            history: vectors,
            graph_ref,
        });
    }
    Ok(tuples)
}
