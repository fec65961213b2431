//! Reachability graph generation with on-the-fly elimination of vanishing
//! markings.
//!
//! Exploration is breadth-first from the initial marking. Whenever a timed
//! firing lands in a vanishing marking, the local absorbing chain of
//! immediate firings is solved and its absorption probabilities are folded
//! into the rate of the resulting tangible-to-tangible edge. Only tangible
//! markings are stored.

use std::collections::hash_map::Entry;
use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt::Write as _;
use std::rc::Rc;

use thiserror::Error;

use crate::net::{Marking, Net, NetError, TransitionId, TransitionKind};

/// Expected firing count per transition.
type Counts = Vec<(TransitionId, f64)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExploreConfig {
    /// Upper bound on tangible states.
    pub max_states: usize,
    /// Upper bound on the size of, and the number of propagation steps
    /// through, a single component of vanishing markings.
    pub max_vanishing_depth: usize,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        ExploreConfig { max_states: 1_000_000, max_vanishing_depth: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExploreError {
    #[error("state budget of {limit} tangible markings exceeded (is the net unbounded?)")]
    StateBudget { limit: usize },
    #[error("vanishing loop at marking [{marking}]: {reason}")]
    VanishingLoop { marking: String, reason: String },
    #[error("invalid exploration config: {0}")]
    Config(String),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// A merged edge between two tangible states.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    /// Total rate in 1/hour.
    pub rate: f64,
    /// Per-transition share of the edge's flow. A timed transition
    /// contributes its rate times the probability of the vanishing path
    /// taken; an immediate transition contributes the same mass times the
    /// expected number of times it fires along that path.
    pub labels: Vec<(TransitionId, f64)>,
}

#[derive(Debug, Clone)]
pub struct TangibleGraph {
    pub states: Vec<Marking>,
    pub edges: Vec<Edge>,
    pub initial_distribution: Vec<f64>,
    /// Distinct vanishing markings met during exploration.
    pub vanishing_count: usize,
    transition_names: Vec<String>,
}

impl TangibleGraph {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn transition_names(&self) -> &[String] {
        &self.transition_names
    }

    pub fn transition_id(&self, name: &str) -> Option<TransitionId> {
        self.transition_names.iter().position(|n| n == name)
    }

    /// States with no outgoing edge other than self-loops.
    pub fn absorbing_states(&self) -> Vec<usize> {
        let mut has_exit = vec![false; self.states.len()];
        for e in &self.edges {
            if e.source != e.target {
                has_exit[e.source] = true;
            }
        }
        (0..self.states.len()).filter(|&s| !has_exit[s]).collect()
    }

    /// Fraction of all distinct reachable markings that are vanishing.
    pub fn vanishing_ratio(&self) -> f64 {
        let total = self.states.len() + self.vanishing_count;
        if total == 0 {
            0.0
        } else {
            self.vanishing_count as f64 / total as f64
        }
    }

    /// Line-oriented text dump: one `state` line per tangible marking, then
    /// one `edge` line per merged edge.
    pub fn dump(&self, net: &Net) -> String {
        let mut out = String::new();
        for (i, m) in self.states.iter().enumerate() {
            let _ = writeln!(out, "state {i} {}", net.describe(m));
        }
        for e in &self.edges {
            let _ = writeln!(out, "edge {} {} {:?}", e.source, e.target, e.rate);
        }
        out
    }
}

/// Where the probability mass entering a vanishing marking ends up.
#[derive(Debug)]
struct Resolution {
    /// (tangible marking, absorption probability, expected immediate firing
    /// counts jointly with absorbing there)
    targets: Vec<(Marking, f64, Counts)>,
}

struct Explorer<'a> {
    net: &'a Net,
    cfg: ExploreConfig,
    cache: HashMap<Marking, Rc<Resolution>>,
    vanishing_seen: HashSet<Marking>,
}

pub fn is_vanishing(net: &Net, marking: &Marking) -> Result<bool, NetError> {
    net.is_vanishing(marking)
}

pub fn explore(net: &Net, cfg: &ExploreConfig) -> Result<TangibleGraph, ExploreError> {
    if cfg.max_states == 0 || cfg.max_vanishing_depth == 0 {
        return Err(ExploreError::Config("limits must be at least 1".into()));
    }
    let mut ex = Explorer { net, cfg: *cfg, cache: HashMap::new(), vanishing_seen: HashSet::new() };

    let mut index: HashMap<Marking, usize> = HashMap::new();
    let mut states: Vec<Marking> = Vec::new();
    let mut queue: VecDeque<usize> = VecDeque::new();

    let mut intern =
        |m: &Marking, states: &mut Vec<Marking>, queue: &mut VecDeque<usize>| -> Result<usize, ExploreError> {
            match index.entry(m.clone()) {
                Entry::Occupied(e) => Ok(*e.get()),
                Entry::Vacant(e) => {
                    if states.len() >= cfg.max_states {
                        return Err(ExploreError::StateBudget { limit: cfg.max_states });
                    }
                    let i = states.len();
                    e.insert(i);
                    states.push(m.clone());
                    queue.push_back(i);
                    Ok(i)
                }
            }
        };

    let mut initial_distribution = Vec::new();
    let init = ex.resolve(net.initial_marking())?;
    for (m, p, _) in &init.targets {
        let i = intern(m, &mut states, &mut queue)?;
        if initial_distribution.len() <= i {
            initial_distribution.resize(i + 1, 0.0);
        }
        initial_distribution[i] += p;
    }

    let mut edges = Vec::new();
    while let Some(s) = queue.pop_front() {
        let marking = states[s].clone();
        // Per-target accumulation keeps first-seen order for determinism.
        let mut out: Vec<(usize, f64, Counts)> = Vec::new();
        for t in net.enabled(&marking)? {
            debug_assert_eq!(net.kind(t), TransitionKind::Timed);
            let rate = net.rate_of(&marking, t)?;
            let next = net.fire_unchecked(&marking, t);
            let res = ex.resolve(&next)?;
            for (target, p, counts) in &res.targets {
                let j = intern(target, &mut states, &mut queue)?;
                let slot = match out.iter().position(|(k, _, _)| *k == j) {
                    Some(k) => k,
                    None => {
                        out.push((j, 0.0, Vec::new()));
                        out.len() - 1
                    }
                };
                let (_, total, labels) = &mut out[slot];
                *total += rate * p;
                add_label(labels, t, rate * p);
                for &(u, c) in counts {
                    add_label(labels, u, rate * c);
                }
            }
        }
        for (target, rate, labels) in out {
            if rate > 0.0 {
                edges.push(Edge { source: s, target, rate, labels });
            }
        }
    }
    initial_distribution.resize(states.len(), 0.0);
    Ok(TangibleGraph {
        states,
        edges,
        initial_distribution,
        vanishing_count: ex.vanishing_seen.len(),
        transition_names: net.transitions().iter().map(|t| t.name.clone()).collect(),
    })
}

fn add_label(labels: &mut Vec<(TransitionId, f64)>, t: TransitionId, v: f64) {
    match labels.iter_mut().find(|(u, _)| *u == t) {
        Some((_, x)) => *x += v,
        None => labels.push((t, v)),
    }
}

impl Explorer<'_> {
    fn resolve(&mut self, m: &Marking) -> Result<Rc<Resolution>, ExploreError> {
        if !self.net.is_vanishing(m)? {
            return Ok(Rc::new(Resolution { targets: vec![(m.clone(), 1.0, Vec::new())] }));
        }
        if let Some(r) = self.cache.get(m) {
            return Ok(Rc::clone(r));
        }
        let r = Rc::new(self.eliminate(m)?);
        self.cache.insert(m.clone(), Rc::clone(&r));
        Ok(r)
    }

    /// Solves the absorbing chain of immediate firings entered at `entry`.
    fn eliminate(&mut self, entry: &Marking) -> Result<Resolution, ExploreError> {
        let net = self.net;
        let loop_err = |reason: String| ExploreError::VanishingLoop { marking: net.describe(entry), reason };

        // Successor of a vanishing node: either another vanishing node or a
        // tangible target, reached by an immediate transition.
        #[derive(Clone, Copy)]
        enum Next {
            Vanishing(usize),
            Tangible(usize),
        }
        let mut vanishing: Vec<Marking> = vec![entry.clone()];
        let mut v_index: HashMap<Marking, usize> = HashMap::from([(entry.clone(), 0)]);
        let mut tangible: Vec<Marking> = Vec::new();
        let mut t_index: HashMap<Marking, usize> = HashMap::new();
        let mut moves: Vec<Vec<(TransitionId, f64, Next)>> = Vec::new();

        let mut k = 0;
        while k < vanishing.len() {
            let m = vanishing[k].clone();
            let enabled = net.enabled(&m)?;
            let total: f64 = enabled.iter().map(|&t| net.weight(t)).sum();
            let mut row = Vec::with_capacity(enabled.len());
            for t in enabled {
                let next = net.fire_unchecked(&m, t);
                let p = net.weight(t) / total;
                let dest = if net.is_vanishing(&next)? {
                    let n = vanishing.len();
                    match v_index.entry(next) {
                        Entry::Occupied(e) => Next::Vanishing(*e.get()),
                        Entry::Vacant(e) => {
                            if n >= self.cfg.max_vanishing_depth {
                                return Err(loop_err(format!(
                                    "more than {} vanishing markings in one component",
                                    self.cfg.max_vanishing_depth
                                )));
                            }
                            vanishing.push(e.key().clone());
                            e.insert(n);
                            Next::Vanishing(n)
                        }
                    }
                } else {
                    let n = tangible.len();
                    Next::Tangible(*t_index.entry(next.clone()).or_insert_with(|| {
                        tangible.push(next);
                        n
                    }))
                };
                row.push((t, p, dest));
            }
            moves.push(row);
            k += 1;
        }
        for m in &vanishing {
            self.vanishing_seen.insert(m.clone());
        }

        // Mass that can never reach a tangible marking is trapped.
        let nv = vanishing.len();
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); nv];
        let mut escapes = vec![false; nv];
        for (v, row) in moves.iter().enumerate() {
            for &(_, _, dest) in row {
                match dest {
                    Next::Vanishing(w) => preds[w].push(v),
                    Next::Tangible(_) => escapes[v] = true,
                }
            }
        }
        let mut stack: Vec<usize> = (0..nv).filter(|&v| escapes[v]).collect();
        let mut can_escape = escapes.clone();
        while let Some(w) = stack.pop() {
            for &v in &preds[w] {
                if !can_escape[v] {
                    can_escape[v] = true;
                    stack.push(v);
                }
            }
        }
        if let Some(v) = can_escape.iter().position(|ok| !ok) {
            return Err(loop_err(format!(
                "immediate transitions cycle forever through [{}]",
                net.describe(&vanishing[v])
            )));
        }

        // Absorption probabilities h[v][j] by fixed-point iteration
        // h = A h + B; exact after (longest path) sweeps when acyclic.
        let nt = tangible.len();
        let mut h = vec![vec![0.0; nt]; nv];
        let mut converged = false;
        for _ in 0..=self.cfg.max_vanishing_depth {
            let mut delta: f64 = 0.0;
            for v in (0..nv).rev() {
                let mut row = vec![0.0; nt];
                for &(_, p, dest) in &moves[v] {
                    match dest {
                        Next::Vanishing(w) => {
                            for (r, x) in row.iter_mut().zip(&h[w]) {
                                *r += p * x;
                            }
                        }
                        Next::Tangible(j) => row[j] += p,
                    }
                }
                for (old, new) in h[v].iter().zip(&row) {
                    delta = delta.max((old - new).abs());
                }
                h[v] = row;
            }
            if delta <= 1e-15 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(loop_err(format!(
                "absorption probabilities did not converge within {} steps",
                self.cfg.max_vanishing_depth
            )));
        }

        // Expected visits n[v] from the entry: n = e0 + A^T n.
        let mut visits = vec![0.0; nv];
        let mut converged = false;
        for _ in 0..=self.cfg.max_vanishing_depth {
            let mut next = vec![0.0; nv];
            next[0] = 1.0;
            for v in 0..nv {
                for &(_, p, dest) in &moves[v] {
                    if let Next::Vanishing(w) = dest {
                        next[w] += p * visits[v];
                    }
                }
            }
            let delta = next.iter().zip(&visits).map(|(a, b)| (a - b).abs() / a.abs().max(1.0)).fold(0.0, f64::max);
            visits = next;
            if delta <= 1e-15 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(loop_err(format!(
                "expected visit counts did not converge within {} steps",
                self.cfg.max_vanishing_depth
            )));
        }

        let mut targets: Vec<(Marking, f64, Counts)> =
            tangible.into_iter().enumerate().map(|(j, m)| (m, h[0][j], Vec::new())).collect();
        for v in 0..nv {
            for &(u, p, dest) in &moves[v] {
                let mass = visits[v] * p;
                for (j, target) in targets.iter_mut().enumerate() {
                    let reach = match dest {
                        Next::Vanishing(w) => h[w][j],
                        Next::Tangible(k) => f64::from(u8::from(k == j)),
                    };
                    if reach > 0.0 {
                        add_label(&mut target.2, u, mass * reach);
                    }
                }
            }
        }
        targets.retain(|(_, p, _)| *p > 0.0);
        Ok(Resolution { targets })
    }
}
