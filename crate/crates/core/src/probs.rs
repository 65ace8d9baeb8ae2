//! Activation probabilities estimated from action logs.
//!
//! `actions(x, *)` is the set of actions performed by `x`; `actions(*, x)` is
//! the set of actions whose object is `x`. Denominators that are zero yield
//! probability 0.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use crate::graph::{DirectedGraph, NodeId};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ActionRecord {
    pub action: String,
    pub actor: String,
    pub object: String,
    pub timestamp: Option<f64>,
}

type ActionSet = BTreeSet<u32>;

#[derive(Debug, Clone)]
pub struct ActionLog {
    records: Vec<ActionRecord>,
    by_actor: HashMap<String, ActionSet>,
    by_object: HashMap<String, ActionSet>,
    empty: ActionSet,
}

impl ActionLog {
    pub fn new(records: Vec<ActionRecord>) -> Result<Self> {
        let mut action_ids: HashMap<&str, u32> = HashMap::new();
        let mut by_actor: HashMap<String, ActionSet> = HashMap::new();
        let mut by_object: HashMap<String, ActionSet> = HashMap::new();
        for r in &records {
            let next = action_ids.len() as u32;
            let id = *action_ids.entry(r.action.as_str()).or_insert(next);
            if !by_actor.entry(r.actor.clone()).or_default().insert(id) {
                return Err(Error::InvalidParameter(format!(
                    "action {:?} performed twice by {:?}",
                    r.action, r.actor
                )));
            }
            by_object.entry(r.object.clone()).or_default().insert(id);
        }
        Ok(ActionLog {
            records,
            by_actor,
            by_object,
            empty: ActionSet::new(),
        })
    }

    /// Parse `action_id<TAB>actor<TAB>object[<TAB>timestamp]` lines.
    pub fn parse(reader: impl BufRead) -> Result<Self> {
        let mut records = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<action log>", e))?;
            let line = line.trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let bad = |message: String| Error::Parse {
                line: lineno + 1,
                message,
            };
            let timestamp = match fields.len() {
                3 => None,
                4 => Some(
                    f64::from_str(fields[3].trim())
                        .map_err(|_| bad(format!("bad timestamp {:?}", fields[3])))?,
                ),
                n => return Err(bad(format!("expected 3 or 4 fields, found {n}"))),
            };
            records.push(ActionRecord {
                action: fields[0].to_string(),
                actor: fields[1].to_string(),
                object: fields[2].to_string(),
                timestamp,
            });
        }
        ActionLog::new(records)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(BufReader::new(file))
    }

    pub fn records(&self) -> &[ActionRecord] {
        &self.records
    }

    /// `actions(x, *)`.
    pub fn actions_by(&self, x: &str) -> &ActionSet {
        self.by_actor.get(x).unwrap_or(&self.empty)
    }

    /// `actions(*, x)`.
    pub fn actions_on(&self, x: &str) -> &ActionSet {
        self.by_object.get(x).unwrap_or(&self.empty)
    }

    /// Split into an earlier and a later part.
    ///
    /// With timestamps on every record the cut is at `min + fraction * (max - min)`;
    /// records strictly before the cut go to the first part. Without timestamps the
    /// first `floor(fraction * k)` distinct action ids, in order of first
    /// appearance, go to the first part.
    pub fn split(&self, fraction: f64) -> Result<(ActionLog, ActionLog)> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::InvalidParameter(format!("split fraction {fraction} not in [0,1]")));
        }
        let stamped = self.records.iter().filter(|r| r.timestamp.is_some()).count();
        let early: Box<dyn Fn(&ActionRecord) -> bool> = if stamped == self.records.len() && stamped > 0 {
            let ts = self.records.iter().filter_map(|r| r.timestamp);
            let lo = ts.clone().fold(f64::INFINITY, f64::min);
            let hi = ts.fold(f64::NEG_INFINITY, f64::max);
            let cut = lo + fraction * (hi - lo);
            Box::new(move |r: &ActionRecord| r.timestamp.unwrap() < cut)
        } else if stamped == 0 {
            let mut order: Vec<&str> = Vec::new();
            let mut seen = std::collections::HashSet::new();
            for r in &self.records {
                if seen.insert(r.action.as_str()) {
                    order.push(&r.action);
                }
            }
            let keep = (fraction * order.len() as f64).floor() as usize;
            let first: std::collections::HashSet<String> =
                order[..keep].iter().map(|s| s.to_string()).collect();
            Box::new(move |r: &ActionRecord| first.contains(&r.action))
        } else {
            return Err(Error::InvalidParameter(
                "timestamps present on some records but not all".into(),
            ));
        };
        let (a, b): (Vec<_>, Vec<_>) = self.records.iter().cloned().partition(|r| early(r));
        Ok((ActionLog::new(a)?, ActionLog::new(b)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    /// Bernoulli trial.
    Bt,
    /// Jaccard index.
    Ji,
    /// Linear probability.
    Lp,
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bt" => Ok(Measure::Bt),
            "ji" => Ok(Measure::Ji),
            "lp" => Ok(Measure::Lp),
            other => Err(Error::InvalidParameter(format!("unknown measure {other:?}"))),
        }
    }
}

fn intersection_len(a: &ActionSet, b: &ActionSet) -> usize {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small.iter().filter(|x| large.contains(x)).count()
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Measure {
    /// Activation probability of the pair `(u, v)` under this measure.
    pub fn probability(self, log: &ActionLog, u: &str, v: &str) -> f64 {
        let by_u = log.actions_by(u);
        match self {
            // Intersects with actions(v, *) as printed in the formula, unlike JI and LP.
            Measure::Bt => ratio(intersection_len(by_u, log.actions_by(v)), by_u.len()),
            Measure::Ji => {
                let on_v = log.actions_on(v);
                let inter = intersection_len(by_u, on_v);
                ratio(inter, by_u.len() + on_v.len() - inter)
            }
            Measure::Lp => {
                let on_v = log.actions_on(v);
                ratio(intersection_len(by_u, on_v), on_v.len())
            }
        }
    }

    /// Ordered pairs `(u, v)`, `u != v`, whose numerator set is nonempty, sorted.
    pub fn default_topology(self, log: &ActionLog) -> Vec<(String, String)> {
        let mut actors: HashMap<&str, BTreeSet<&str>> = HashMap::new();
        let mut objects: HashMap<&str, BTreeSet<&str>> = HashMap::new();
        for r in log.records() {
            actors.entry(&r.action).or_default().insert(&r.actor);
            objects.entry(&r.action).or_default().insert(&r.object);
        }
        let mut pairs = BTreeSet::new();
        for (action, who) in &actors {
            let targets = match self {
                Measure::Bt => who,
                Measure::Ji | Measure::Lp => &objects[action],
            };
            for &u in who {
                for &v in targets {
                    if u != v {
                        pairs.insert((u, v));
                    }
                }
            }
        }
        pairs
            .into_iter()
            .map(|(u, v)| (u.to_string(), v.to_string()))
            .collect()
    }
}

/// Weight the given topology with `measure`. Nodes are labeled by their log
/// names and numbered in sorted label order.
pub fn build_graph(log: &ActionLog, measure: Measure, topology: &[(String, String)]) -> Result<DirectedGraph> {
    let labels: Vec<String> = topology
        .iter()
        .flat_map(|(u, v)| [u.clone(), v.clone()])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let id = |l: &String| labels.binary_search(l).unwrap() as NodeId;
    let edges: Vec<_> = topology
        .iter()
        .map(|(u, v)| (id(u), id(v), measure.probability(log, u, v)))
        .collect();
    DirectedGraph::from_labeled_edges(labels, &edges)
}

pub fn build_bt(log: &ActionLog, topology: &[(String, String)]) -> Result<DirectedGraph> {
    build_graph(log, Measure::Bt, topology)
}

pub fn build_ji(log: &ActionLog, topology: &[(String, String)]) -> Result<DirectedGraph> {
    build_graph(log, Measure::Ji, topology)
}

pub fn build_lp(log: &ActionLog, topology: &[(String, String)]) -> Result<DirectedGraph> {
    build_graph(log, Measure::Lp, topology)
}
