//! Line-oriented model files.
//!
//! ```text
//! [params]
//! lambda = 1.0
//! [places]
//! Up = 1
//! Down = 0
//! [transitions]
//! fail timed rate=lambda
//! repair timed rate=9.0 guard=#Up == 0
//! [arcs]
//! in Up fail
//! out fail Down
//! in Down repair
//! out repair Up
//! [rewards]
//! up when #Up >= 1
//! ```
//!
//! `#` followed by whitespace (or at the start of a line) begins a comment;
//! `#Name` is a token count. Transition fields are split at `key=` words, so
//! an expression must not itself contain `rate=`, `weight=`, `priority=` or
//! `guard=` glued together. In reward lines `weight` is a keyword.

use std::collections::{HashMap, HashSet};
use std::fmt::{self, Write as _};

use srn_core::expr::{Expr, Ty};
use srn_core::net::{validate, ArcKind, Place, Transition, TransitionKind};
use srn_core::{Net, NetDef, RewardSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelError {
    /// 1-based line number, when the error belongs to one line.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ModelError {}

fn at(line: usize, message: impl Into<String>) -> ModelError {
    ModelError { line: Some(line), message: message.into() }
}

/// A parsed model file, before compilation into a [`Net`].
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub def: NetDef,
    pub rewards: Vec<RewardSpec>,
}

impl Model {
    pub fn net(&self) -> Result<Net, ModelError> {
        Net::new(self.def.clone()).map_err(|e| ModelError { line: None, message: e.to_string() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Section {
    Params,
    Places,
    Transitions,
    Arcs,
    Rewards,
}

fn strip_comment(line: &str) -> &str {
    let bytes = line.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if b != b'#' {
            continue;
        }
        let at_start = line[..i].trim().is_empty();
        let before_ws = i == 0 || bytes[i - 1].is_ascii_whitespace();
        let after_ws = bytes.get(i + 1).is_none_or(|c| c.is_ascii_whitespace());
        if at_start || (before_ws && after_ws) {
            return &line[..i];
        }
    }
    line
}

fn split_assignment(line: &str, lineno: usize) -> Result<(&str, &str), ModelError> {
    let (name, value) =
        line.split_once('=').ok_or_else(|| at(lineno, format!("expected `name = value`, found `{line}`")))?;
    let name = name.trim();
    if name.is_empty() || name.contains(char::is_whitespace) {
        return Err(at(lineno, format!("bad name `{name}`")));
    }
    Ok((name, value.trim()))
}

fn parse_expr(src: &str, lineno: usize, what: &str) -> Result<Expr, ModelError> {
    Expr::parse(src).map_err(|e| at(lineno, format!("{what}: {e}")))
}

/// Splits `rate=... guard=...` into (key, value) pairs.
fn split_fields<'a>(
    rest: &'a str,
    keys: &[&'static str],
    lineno: usize,
) -> Result<Vec<(&'static str, &'a str)>, ModelError> {
    let bytes = rest.as_bytes();
    let mut starts: Vec<(usize, &'static str)> = Vec::new();
    for i in 0..bytes.len() {
        if i > 0 && !bytes[i - 1].is_ascii_whitespace() {
            continue;
        }
        for key in keys {
            let end = i + key.len();
            if rest[i..].starts_with(key) && bytes.get(end) == Some(&b'=') && bytes.get(end + 1) != Some(&b'=') {
                starts.push((i, key));
            }
        }
    }
    let first = starts.first().map_or(rest.len(), |s| s.0);
    if !rest[..first].trim().is_empty() {
        let expected: Vec<String> = keys.iter().map(|k| format!("{k}=")).collect();
        return Err(at(lineno, format!("unexpected `{}`, expected {}", rest[..first].trim(), expected.join(", "))));
    }
    let mut out: Vec<(&'static str, &str)> = Vec::new();
    for (n, &(start, key)) in starts.iter().enumerate() {
        let end = starts.get(n + 1).map_or(rest.len(), |s| s.0);
        let value = rest[start + key.len() + 1..end].trim();
        if out.iter().any(|(k, _)| *k == key) {
            return Err(at(lineno, format!("{key}= given twice")));
        }
        if value.is_empty() {
            return Err(at(lineno, format!("{key}= needs a value")));
        }
        out.push((key, value));
    }
    Ok(out)
}

fn parse_transition(line: &str, lineno: usize) -> Result<Transition, ModelError> {
    let mut words = line.splitn(3, char::is_whitespace);
    let name = words.next().unwrap_or_default();
    let kind = words.next().unwrap_or_default().trim();
    let rest = words.next().unwrap_or_default();
    let find = |fields: &[(&str, &str)], key: &str| fields.iter().find(|(k, _)| *k == key).map(|(_, v)| v.to_string());
    match kind {
        "timed" => {
            let fields = split_fields(rest, &["rate", "guard"], lineno)?;
            let rate =
                find(&fields, "rate").ok_or_else(|| at(lineno, format!("timed transition {name} needs rate=")))?;
            let mut t = Transition::timed(name, parse_expr(&rate, lineno, "rate")?);
            if let Some(g) = find(&fields, "guard") {
                t.guard = Some(parse_expr(&g, lineno, "guard")?);
            }
            Ok(t)
        }
        "immediate" => {
            let fields = split_fields(rest, &["weight", "priority", "guard"], lineno)?;
            let weight = find(&fields, "weight")
                .ok_or_else(|| at(lineno, format!("immediate transition {name} needs weight=")))?;
            let weight: f64 = weight.parse().map_err(|_| at(lineno, format!("bad weight `{weight}`")))?;
            let priority = match find(&fields, "priority") {
                Some(p) => Some(p.parse::<u32>().map_err(|_| at(lineno, format!("bad priority `{p}`")))?),
                None => None,
            };
            let guard = match find(&fields, "guard") {
                Some(g) => Some(parse_expr(&g, lineno, "guard")?),
                None => None,
            };
            Ok(Transition {
                name: name.to_string(),
                kind: TransitionKind::Immediate,
                rate: None,
                weight: Some(weight),
                priority,
                guard,
            })
        }
        "" => Err(at(lineno, format!("transition {name} needs a kind (timed or immediate)"))),
        other => Err(at(lineno, format!("unknown transition kind `{other}`"))),
    }
}

fn parse_arc(line: &str, lineno: usize) -> Result<(ArcKind, String, String, u32), ModelError> {
    let words: Vec<&str> = line.split_whitespace().collect();
    if !(3..=4).contains(&words.len()) {
        return Err(at(lineno, "expected `in|out|inhib <place> <transition> [mult]`"));
    }
    let mult = match words.get(3) {
        Some(m) => m.parse::<u32>().map_err(|_| at(lineno, format!("bad multiplicity `{m}`")))?,
        None => 1,
    };
    if mult == 0 {
        return Err(at(lineno, "multiplicity must be >= 1"));
    }
    let (kind, place, transition) = match words[0] {
        "in" => (ArcKind::Input, words[1], words[2]),
        "inhib" => (ArcKind::Inhibitor, words[1], words[2]),
        "out" => (ArcKind::Output, words[2], words[1]),
        other => return Err(at(lineno, format!("unknown arc kind `{other}`"))),
    };
    Ok((kind, place.to_string(), transition.to_string(), mult))
}

/// Index of the first standalone `word` in `s`.
fn find_word(s: &str, word: &str) -> Option<usize> {
    let bytes = s.as_bytes();
    let is_ident = |b: u8| b.is_ascii_alphanumeric() || b == b'_';
    s.match_indices(word).map(|(i, _)| i).find(|&i| {
        let end = i + word.len();
        (i == 0 || !is_ident(bytes[i - 1]) && bytes[i - 1] != b'#') && bytes.get(end).is_none_or(|&b| !is_ident(b))
    })
}

fn parse_reward(line: &str, lineno: usize) -> Result<RewardSpec, ModelError> {
    let (name, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
    let rest = rest.trim_start();
    let body = rest
        .strip_prefix("when")
        .filter(|b| b.starts_with(char::is_whitespace))
        .ok_or_else(|| at(lineno, "expected `name when <expr> [weight <expr>]`"))?;
    let (pred, weight) = match find_word(body, "weight") {
        Some(i) => (&body[..i], Some(&body[i + "weight".len()..])),
        None => (body, None),
    };
    let mut spec = RewardSpec::indicator(name, parse_expr(pred.trim(), lineno, "reward predicate")?);
    if let Some(w) = weight {
        spec = spec.with_weight(parse_expr(w.trim(), lineno, "reward weight")?);
    }
    Ok(spec)
}

struct Lines {
    params: HashMap<String, usize>,
    places: HashMap<String, usize>,
    transitions: HashMap<String, usize>,
    arcs: HashMap<String, usize>,
}

/// Parses model text into a validated net definition plus rewards.
pub fn parse_model(text: &str) -> Result<Model, ModelError> {
    let mut def = NetDef::default();
    let mut rewards: Vec<RewardSpec> = Vec::new();
    let mut lines =
        Lines { params: HashMap::new(), places: HashMap::new(), transitions: HashMap::new(), arcs: HashMap::new() };
    let mut reward_lines = Vec::new();
    let mut section = None;

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = Some(match name.trim() {
                "params" => Section::Params,
                "places" => Section::Places,
                "transitions" => Section::Transitions,
                "arcs" => Section::Arcs,
                "rewards" => Section::Rewards,
                other => return Err(at(lineno, format!("unknown section [{other}]"))),
            });
            continue;
        }
        let dup = |map: &HashMap<String, usize>, what: &str, name: &str| match map.get(name) {
            Some(first) => Err(at(lineno, format!("duplicate {what} {name} (first defined on line {first})"))),
            None => Ok(()),
        };
        match section {
            None => return Err(at(lineno, "content before the first section header")),
            Some(Section::Params) => {
                let (name, value) = split_assignment(line, lineno)?;
                dup(&lines.params, "parameter", name)?;
                let v: f64 = value.parse().map_err(|_| at(lineno, format!("bad number `{value}`")))?;
                if !v.is_finite() {
                    return Err(at(lineno, format!("parameter {name} must be finite")));
                }
                lines.params.insert(name.to_string(), lineno);
                def.param(name, v);
            }
            Some(Section::Places) => {
                let (name, value) = split_assignment(line, lineno)?;
                dup(&lines.places, "place", name)?;
                let n: u32 = value.parse().map_err(|_| {
                    at(lineno, format!("initial tokens must be a non-negative integer, found `{value}`"))
                })?;
                lines.places.insert(name.to_string(), lineno);
                def.places.push(Place { name: name.to_string(), initial_tokens: n });
            }
            Some(Section::Transitions) => {
                let t = parse_transition(line, lineno)?;
                dup(&lines.transitions, "transition", &t.name)?;
                lines.transitions.insert(t.name.clone(), lineno);
                def.transition(t);
            }
            Some(Section::Arcs) => {
                let (kind, place, transition, mult) = parse_arc(line, lineno)?;
                lines.arcs.entry(arc_key(kind, &place, &transition)).or_insert(lineno);
                def.arc(kind, &place, &transition, mult);
            }
            Some(Section::Rewards) => {
                let r = parse_reward(line, lineno)?;
                if let Some(first) = reward_lines.iter().zip(&rewards).find(|(_, s)| s.name == r.name).map(|(l, _)| *l)
                {
                    return Err(at(lineno, format!("duplicate reward {} (first defined on line {first})", r.name)));
                }
                reward_lines.push(lineno);
                rewards.push(r);
            }
        }
    }

    let diags = validate(&def);
    if let Some(d) = diags.first() {
        let line = lines
            .params
            .get(&d.element)
            .or_else(|| lines.places.get(&d.element))
            .or_else(|| lines.transitions.get(&d.element))
            .or_else(|| lines.arcs.get(&d.element))
            .copied();
        return Err(ModelError { line, message: d.to_string() });
    }
    for (r, &lineno) in rewards.iter().zip(&reward_lines) {
        check_reward(&def, r).map_err(|m| at(lineno, format!("reward {}: {m}", r.name)))?;
    }
    Ok(Model { def, rewards })
}

fn arc_key(kind: ArcKind, place: &str, transition: &str) -> String {
    format!("arc {kind:?} {place} {transition}")
}

fn check_reward(def: &NetDef, r: &RewardSpec) -> Result<(), String> {
    let places: HashSet<&str> = def.places.iter().map(|p| p.name.as_str()).collect();
    for (e, want, what) in [(&r.predicate, Ty::Bool, "predicate"), (&r.weight, Ty::Num, "weight")] {
        let (ps, qs) = e.references();
        if let Some(p) = ps.iter().find(|p| !places.contains(*p)) {
            return Err(format!("unknown place {p}"));
        }
        if let Some(q) = qs.iter().find(|q| def.param_value(q).is_none()) {
            return Err(format!("unknown parameter {q}"));
        }
        match e.ty() {
            Ok(ty) if ty == want => {}
            Ok(ty) => return Err(format!("{what} must be {want}, found {ty}")),
            Err(err) => return Err(format!("{what}: {err}")),
        }
    }
    Ok(())
}

/// Writes a model back in the textual format. Parsing the output yields an
/// equal [`Model`].
pub fn write_model(def: &NetDef, rewards: &[RewardSpec]) -> String {
    let mut out = String::new();
    if !def.params.is_empty() {
        out.push_str("[params]\n");
        for (name, v) in &def.params {
            let _ = writeln!(out, "{name} = {v:?}");
        }
    }
    out.push_str("[places]\n");
    for p in &def.places {
        let _ = writeln!(out, "{} = {}", p.name, p.initial_tokens);
    }
    out.push_str("[transitions]\n");
    for t in &def.transitions {
        match t.kind {
            TransitionKind::Timed => {
                let _ = write!(out, "{} timed", t.name);
                if let Some(r) = &t.rate {
                    let _ = write!(out, " rate={r}");
                }
            }
            TransitionKind::Immediate => {
                let _ = write!(out, "{} immediate", t.name);
                if let Some(w) = t.weight {
                    let _ = write!(out, " weight={w:?}");
                }
                if let Some(p) = t.priority {
                    let _ = write!(out, " priority={p}");
                }
            }
        }
        if let Some(g) = &t.guard {
            let _ = write!(out, " guard={g}");
        }
        out.push('\n');
    }
    out.push_str("[arcs]\n");
    for a in &def.arcs {
        let (kw, first, second) = match a.kind {
            ArcKind::Input => ("in", &a.place, &a.transition),
            ArcKind::Inhibitor => ("inhib", &a.place, &a.transition),
            ArcKind::Output => ("out", &a.transition, &a.place),
        };
        let _ = write!(out, "{kw} {first} {second}");
        if a.multiplicity != 1 {
            let _ = write!(out, " {}", a.multiplicity);
        }
        out.push('\n');
    }
    if !rewards.is_empty() {
        out.push_str("[rewards]\n");
        for r in rewards {
            let _ = write!(out, "{} when {}", r.name, r.predicate);
            if !r.has_unit_weight() {
                let _ = write!(out, " weight {}", r.weight);
            }
            out.push('\n');
        }
    }
    out
}
