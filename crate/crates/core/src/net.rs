//! Stochastic reward net structure and its enabling and firing rules.
//!
//! A [`NetDef`] is the raw, possibly inconsistent description produced by a
//! parser or a model builder. [`validate`] reports every problem in it;
//! [`Net::new`] accepts only definitions with no diagnostics and compiles all
//! expressions against the declared places and parameters.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::expr::{CompiledExpr, EvalError, Expr, Scope, Ty, Value, RESERVED_WORDS};

#[derive(Debug, Clone, PartialEq)]
pub struct Place {
    pub name: String,
    pub initial_tokens: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransitionKind {
    Timed,
    Immediate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub name: String,
    pub kind: TransitionKind,
    /// Firing rate in 1/hour; timed transitions only.
    pub rate: Option<Expr>,
    /// Immediate transitions only.
    pub weight: Option<f64>,
    /// Immediate transitions only. Higher values win.
    pub priority: Option<u32>,
    pub guard: Option<Expr>,
}

impl Transition {
    pub fn timed(name: &str, rate: Expr) -> Self {
        Transition {
            name: name.to_string(),
            kind: TransitionKind::Timed,
            rate: Some(rate),
            weight: None,
            priority: None,
            guard: None,
        }
    }

    pub fn immediate(name: &str, weight: f64, priority: u32) -> Self {
        Transition {
            name: name.to_string(),
            kind: TransitionKind::Immediate,
            rate: None,
            weight: Some(weight),
            priority: Some(priority),
            guard: None,
        }
    }

    pub fn with_guard(mut self, guard: Expr) -> Self {
        self.guard = Some(guard);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ArcKind {
    Input,
    Output,
    Inhibitor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arc {
    pub kind: ArcKind,
    pub place: String,
    pub transition: String,
    pub multiplicity: u32,
}

/// Raw net description. Parameters keep declaration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NetDef {
    pub params: Vec<(String, f64)>,
    pub places: Vec<Place>,
    pub transitions: Vec<Transition>,
    pub arcs: Vec<Arc>,
}

impl NetDef {
    pub fn param(&mut self, name: &str, value: f64) -> &mut Self {
        self.params.push((name.to_string(), value));
        self
    }

    pub fn place(&mut self, name: &str, initial_tokens: u32) -> &mut Self {
        self.places.push(Place { name: name.to_string(), initial_tokens });
        self
    }

    pub fn transition(&mut self, t: Transition) -> &mut Self {
        self.transitions.push(t);
        self
    }

    pub fn arc(&mut self, kind: ArcKind, place: &str, transition: &str, multiplicity: u32) -> &mut Self {
        self.arcs.push(Arc { kind, place: place.to_string(), transition: transition.to_string(), multiplicity });
        self
    }

    pub fn input(&mut self, place: &str, transition: &str, multiplicity: u32) -> &mut Self {
        self.arc(ArcKind::Input, place, transition, multiplicity)
    }

    pub fn output(&mut self, transition: &str, place: &str, multiplicity: u32) -> &mut Self {
        self.arc(ArcKind::Output, place, transition, multiplicity)
    }

    pub fn inhibitor(&mut self, place: &str, transition: &str, multiplicity: u32) -> &mut Self {
        self.arc(ArcKind::Inhibitor, place, transition, multiplicity)
    }

    /// Replaces the value of a declared parameter.
    pub fn set_param(&mut self, name: &str, value: f64) -> Result<(), NetError> {
        match self.params.iter_mut().find(|(n, _)| n == name) {
            Some((_, v)) => {
                *v = value;
                Ok(())
            }
            None => Err(NetError::UnknownParam(name.to_string())),
        }
    }

    pub fn param_value(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

/// One problem found by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// The offending place, transition, parameter or arc.
    pub element: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.element, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("invalid net: {}", join_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),
    #[error("unknown parameter {0}")]
    UnknownParam(String),
    #[error("unknown transition {0}")]
    UnknownTransition(String),
    #[error("transition {0} is not enabled")]
    NotEnabled(String),
    #[error("transition {0} is not timed")]
    NotTimed(String),
    #[error("transition {transition} has rate {rate}; rates must be positive and finite")]
    BadRate { transition: String, rate: f64 },
    #[error("evaluating {context}: {source}")]
    Eval {
        context: String,
        #[source]
        source: EvalError,
    },
}

fn join_diagnostics(d: &[Diagnostic]) -> String {
    d.iter().map(Diagnostic::to_string).collect::<Vec<_>>().join("; ")
}

fn valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    chars.next().is_some_and(crate::expr::is_ident_start)
        && chars.all(crate::expr::is_ident_char)
        && !RESERVED_WORDS.contains(&name)
}

/// Checks every structural invariant of a net definition. An empty result
/// means [`Net::new`] will succeed.
pub fn validate(def: &NetDef) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut diag = |element: &str, message: String| out.push(Diagnostic { element: element.to_string(), message });

    if def.places.is_empty() {
        diag("net", "at least one place is required".into());
    }
    if def.transitions.is_empty() {
        diag("net", "at least one transition is required".into());
    }

    let mut seen = HashSet::new();
    for (name, value) in &def.params {
        if !valid_name(name) {
            diag(name, format!("invalid parameter name {name}"));
        }
        if !seen.insert(name.as_str()) {
            diag(name, format!("duplicate parameter {name}"));
        }
        if !value.is_finite() {
            diag(name, format!("parameter {name} is not finite"));
        }
    }
    let params: HashSet<&str> = def.params.iter().map(|(n, _)| n.as_str()).collect();

    let mut seen = HashSet::new();
    for p in &def.places {
        if !valid_name(&p.name) {
            diag(&p.name, format!("invalid place name {}", p.name));
        }
        if !seen.insert(p.name.as_str()) {
            diag(&p.name, format!("duplicate place {}", p.name));
        }
    }
    let places: HashSet<&str> = def.places.iter().map(|p| p.name.as_str()).collect();

    let check_expr = |owner: &str, what: &str, e: &Expr, want: Ty, out: &mut Vec<Diagnostic>| {
        let (ps, qs) = e.references();
        for p in ps {
            if !places.contains(p) {
                out.push(Diagnostic { element: owner.to_string(), message: format!("unknown place {p} in {what}") });
            }
        }
        for q in qs {
            if !params.contains(q) {
                out.push(Diagnostic {
                    element: owner.to_string(),
                    message: format!("unknown parameter {q} in {what}"),
                });
            }
        }
        match e.ty() {
            Ok(ty) if ty == want => {}
            Ok(ty) => out
                .push(Diagnostic { element: owner.to_string(), message: format!("{what} must be {want}, found {ty}") }),
            Err(err) => out.push(Diagnostic { element: owner.to_string(), message: format!("{what}: {err}") }),
        }
    };

    let mut seen = HashSet::new();
    let mut extra = Vec::new();
    for t in &def.transitions {
        let name = t.name.as_str();
        if !valid_name(name) {
            extra.push(Diagnostic { element: name.into(), message: format!("invalid transition name {name}") });
        }
        if !seen.insert(name) {
            extra.push(Diagnostic { element: name.into(), message: format!("duplicate transition {name}") });
        }
        match t.kind {
            TransitionKind::Timed => {
                match &t.rate {
                    Some(r) => check_expr(name, "rate", r, Ty::Num, &mut extra),
                    None => {
                        extra.push(Diagnostic { element: name.into(), message: "timed transition without rate".into() })
                    }
                }
                if t.weight.is_some() {
                    extra.push(Diagnostic { element: name.into(), message: "weight on timed transition".into() });
                }
                if t.priority.is_some() {
                    extra.push(Diagnostic { element: name.into(), message: "priority on timed transition".into() });
                }
            }
            TransitionKind::Immediate => {
                if t.rate.is_some() {
                    extra.push(Diagnostic { element: name.into(), message: "rate on immediate transition".into() });
                }
                match t.weight {
                    Some(w) if w > 0.0 && w.is_finite() => {}
                    Some(w) => extra.push(Diagnostic {
                        element: name.into(),
                        message: format!("weight must be positive, got {w}"),
                    }),
                    None => extra.push(Diagnostic {
                        element: name.into(),
                        message: "immediate transition without weight".into(),
                    }),
                }
            }
        }
        if let Some(g) = &t.guard {
            check_expr(name, "guard", g, Ty::Bool, &mut extra);
        }
    }
    let transitions: HashSet<&str> = def.transitions.iter().map(|t| t.name.as_str()).collect();

    for a in &def.arcs {
        let element = format!("arc {:?} {} {}", a.kind, a.place, a.transition);
        if !places.contains(a.place.as_str()) {
            extra.push(Diagnostic { element: element.clone(), message: format!("unknown place {}", a.place) });
        }
        if !transitions.contains(a.transition.as_str()) {
            extra
                .push(Diagnostic { element: element.clone(), message: format!("unknown transition {}", a.transition) });
        }
        if a.multiplicity == 0 {
            extra.push(Diagnostic { element, message: "multiplicity must be >= 1".into() });
        }
    }
    out.extend(extra);
    out
}

/// Token counts in place declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Marking(Vec<u32>);

impl Marking {
    pub fn new(tokens: Vec<u32>) -> Self {
        Marking(tokens)
    }

    pub fn tokens(&self) -> &[u32] {
        &self.0
    }

    pub fn get(&self, place: usize) -> u32 {
        self.0[place]
    }
}

impl From<Vec<u32>> for Marking {
    fn from(v: Vec<u32>) -> Self {
        Marking(v)
    }
}

pub type TransitionId = usize;
pub type PlaceId = usize;

#[derive(Debug, Clone)]
struct CompiledTransition {
    kind: TransitionKind,
    rate: Option<CompiledExpr>,
    weight: f64,
    priority: u32,
    guard: Option<CompiledExpr>,
    inputs: Vec<(PlaceId, u32)>,
    outputs: Vec<(PlaceId, u32)>,
    inhibitors: Vec<(PlaceId, u32)>,
}

/// A validated net, ready for exploration and simulation.
#[derive(Debug, Clone)]
pub struct Net {
    def: NetDef,
    place_index: HashMap<String, PlaceId>,
    transition_index: HashMap<String, TransitionId>,
    compiled: Vec<CompiledTransition>,
    initial: Marking,
}

impl Net {
    pub fn new(def: NetDef) -> Result<Net, NetError> {
        let diagnostics = validate(&def);
        if !diagnostics.is_empty() {
            return Err(NetError::Invalid(diagnostics));
        }
        let place_index: HashMap<String, PlaceId> =
            def.places.iter().enumerate().map(|(i, p)| (p.name.clone(), i)).collect();
        let transition_index: HashMap<String, TransitionId> =
            def.transitions.iter().enumerate().map(|(i, t)| (t.name.clone(), i)).collect();
        let params: HashMap<&str, f64> = def.params.iter().map(|(n, v)| (n.as_str(), *v)).collect();

        let compile = |e: &Expr, context: &str| {
            e.compile(&|p| place_index.get(p).copied(), &|n| params.get(n).copied())
                .map_err(|source| NetError::Eval { context: context.to_string(), source })
        };

        let mut compiled = Vec::with_capacity(def.transitions.len());
        for t in &def.transitions {
            let mut ct = CompiledTransition {
                kind: t.kind,
                rate: t.rate.as_ref().map(|r| compile(r, &t.name)).transpose()?,
                weight: t.weight.unwrap_or(1.0),
                priority: t.priority.unwrap_or(0),
                guard: t.guard.as_ref().map(|g| compile(g, &t.name)).transpose()?,
                inputs: Vec::new(),
                outputs: Vec::new(),
                inhibitors: Vec::new(),
            };
            for a in def.arcs.iter().filter(|a| a.transition == t.name) {
                let p = place_index[&a.place];
                let list = match a.kind {
                    ArcKind::Input => &mut ct.inputs,
                    ArcKind::Output => &mut ct.outputs,
                    ArcKind::Inhibitor => &mut ct.inhibitors,
                };
                // Repeated arcs between the same pair add up.
                match list.iter_mut().find(|(q, _)| *q == p) {
                    Some((_, m)) => *m += a.multiplicity,
                    None => list.push((p, a.multiplicity)),
                }
            }
            compiled.push(ct);
        }
        let initial = Marking(def.places.iter().map(|p| p.initial_tokens).collect());
        Ok(Net { def, place_index, transition_index, compiled, initial })
    }

    pub fn def(&self) -> &NetDef {
        &self.def
    }

    pub fn places(&self) -> &[Place] {
        &self.def.places
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.def.transitions
    }

    pub fn place_id(&self, name: &str) -> Option<PlaceId> {
        self.place_index.get(name).copied()
    }

    pub fn transition_id(&self, name: &str) -> Option<TransitionId> {
        self.transition_index.get(name).copied()
    }

    pub fn transition_name(&self, t: TransitionId) -> &str {
        &self.def.transitions[t].name
    }

    pub fn kind(&self, t: TransitionId) -> TransitionKind {
        self.compiled[t].kind
    }

    pub fn weight(&self, t: TransitionId) -> f64 {
        self.compiled[t].weight
    }

    pub fn initial_marking(&self) -> &Marking {
        &self.initial
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.def.param_value(name)
    }

    pub fn has_immediate(&self) -> bool {
        self.compiled.iter().any(|t| t.kind == TransitionKind::Immediate)
    }

    /// Net token change of place `p` when `t` fires.
    pub fn token_delta(&self, t: TransitionId, p: PlaceId) -> i64 {
        let ct = &self.compiled[t];
        let sum = |l: &[(PlaceId, u32)]| -> i64 { l.iter().filter(|(q, _)| *q == p).map(|(_, m)| i64::from(*m)).sum() };
        sum(&ct.outputs) - sum(&ct.inputs)
    }

    /// Structural and guard enabling, ignoring priorities and preemption.
    pub fn is_concession(&self, marking: &Marking, t: TransitionId) -> Result<bool, NetError> {
        let ct = &self.compiled[t];
        let m = &marking.0;
        if ct.inputs.iter().any(|&(p, k)| m[p] < k) {
            return Ok(false);
        }
        if ct.inhibitors.iter().any(|&(p, k)| m[p] >= k) {
            return Ok(false);
        }
        match &ct.guard {
            None => Ok(true),
            Some(g) => g
                .eval_bool(m)
                .map_err(|source| NetError::Eval { context: format!("guard of {}", self.transition_name(t)), source }),
        }
    }

    /// Transitions that may fire in `marking`. When any immediate transition
    /// has concession, only the immediate transitions of the highest
    /// priority level among them are returned.
    pub fn enabled(&self, marking: &Marking) -> Result<Vec<TransitionId>, NetError> {
        let mut timed = Vec::new();
        let mut immediate: Vec<TransitionId> = Vec::new();
        let mut top = 0u32;
        for t in 0..self.compiled.len() {
            if !self.is_concession(marking, t)? {
                continue;
            }
            let ct = &self.compiled[t];
            match ct.kind {
                TransitionKind::Timed => timed.push(t),
                TransitionKind::Immediate => {
                    if immediate.is_empty() || ct.priority > top {
                        immediate.clear();
                        top = ct.priority;
                    }
                    if ct.priority == top {
                        immediate.push(t);
                    }
                }
            }
        }
        Ok(if immediate.is_empty() { timed } else { immediate })
    }

    /// True iff some immediate transition is enabled.
    pub fn is_vanishing(&self, marking: &Marking) -> Result<bool, NetError> {
        for t in 0..self.compiled.len() {
            if self.compiled[t].kind == TransitionKind::Immediate && self.is_concession(marking, t)? {
                return Ok(true);
            }
        }
        Ok(false)
    }

    pub fn fire(&self, marking: &Marking, t: TransitionId) -> Result<Marking, NetError> {
        if !self.enabled(marking)?.contains(&t) {
            return Err(NetError::NotEnabled(self.transition_name(t).to_string()));
        }
        Ok(self.fire_unchecked(marking, t))
    }

    /// Fires `t` assuming the caller has established that it is enabled.
    pub(crate) fn fire_unchecked(&self, marking: &Marking, t: TransitionId) -> Marking {
        let ct = &self.compiled[t];
        let mut m = marking.0.clone();
        for &(p, k) in &ct.inputs {
            m[p] -= k;
        }
        for &(p, k) in &ct.outputs {
            m[p] += k;
        }
        Marking(m)
    }

    /// Evaluated firing rate of timed transition `t`.
    pub fn rate_of(&self, marking: &Marking, t: TransitionId) -> Result<f64, NetError> {
        let ct = &self.compiled[t];
        let rate = ct
            .rate
            .as_ref()
            .ok_or_else(|| NetError::NotTimed(self.transition_name(t).to_string()))?
            .eval_num(&marking.0)
            .map_err(|source| NetError::Eval { context: format!("rate of {}", self.transition_name(t)), source })?;
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(NetError::BadRate { transition: self.transition_name(t).to_string(), rate });
        }
        Ok(rate)
    }

    /// Compiles an expression against this net's places and parameters.
    pub fn compile(&self, e: &Expr) -> Result<CompiledExpr, EvalError> {
        e.compile(&|p| self.place_id(p), &|n| self.param(n))
    }

    /// Evaluates a name-based expression on `marking`.
    pub fn eval(&self, e: &Expr, marking: &Marking) -> Result<Value, EvalError> {
        e.eval(&MarkingScope { net: self, marking })
    }

    /// `Place=count` pairs, in declaration order.
    pub fn describe(&self, marking: &Marking) -> String {
        self.def.places.iter().zip(&marking.0).map(|(p, n)| format!("{}={}", p.name, n)).collect::<Vec<_>>().join(" ")
    }

    /// Marking from a name map; places not mentioned are empty.
    pub fn marking_from(&self, counts: &BTreeMap<&str, u32>) -> Marking {
        let mut m = vec![0; self.def.places.len()];
        for (name, n) in counts {
            m[self.place_index[*name]] = *n;
        }
        Marking(m)
    }
}

struct MarkingScope<'a> {
    net: &'a Net,
    marking: &'a Marking,
}

impl Scope for MarkingScope<'_> {
    fn tokens(&self, place: &str) -> Option<u32> {
        self.net.place_id(place).map(|p| self.marking.0[p])
    }

    fn param(&self, name: &str) -> Option<f64> {
        self.net.param(name)
    }
}
