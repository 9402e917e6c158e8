//! Line-oriented instance text format.
//!
//! ```text
//! multipac-instance 1
//! note <free text>
//! [domain]
//! point <name> [payload values..]
//! [distribution]
//! <name> <mass> <label_prob>
//! [groups]
//! <name> <member names..>
//! [hypotheses]
//! <name> <value per point, domain order>
//! [metric]            (only for metric-based losses)
//! <row per point, domain order>
//! [loss]
//! kind <tag>
//! <key> <value>
//! [end]
//! ```
//!
//! Reals are written in scientific notation with 17 significant digits,
//! which round-trips every `f64` exactly. Blank lines and lines starting
//! with `#` are ignored.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use super::{Instance, InstanceError};
use crate::losses::{EmptyConditional, LossFunction, Metric, PointLoss};
use crate::model::{
    Distribution, Domain, Group, GroupCollection, HypothesisCollection, NamedGroup, NamedPredictor, Predictor,
};

pub const FORMAT_HEADER: &str = "multipac-instance 1";

const SECTIONS: [&str; 7] = ["domain", "distribution", "groups", "hypotheses", "metric", "loss", "end"];

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}, {field}: {message}")]
pub struct ParseError {
    /// 1-based; 0 when the problem is the absence of something.
    pub line: usize,
    pub field: String,
    pub message: String,
}

fn err(line: usize, field: impl Into<String>, message: impl Into<String>) -> ParseError {
    ParseError {
        line,
        field: field.into(),
        message: message.into(),
    }
}

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

/// Canonical text of `inst`.
pub fn to_text(inst: &Instance) -> String {
    let d = &inst.distribution;
    let domain = d.domain();
    let names = domain.names();
    let mut out = String::new();
    let _ = writeln!(out, "{FORMAT_HEADER}");
    if !inst.note.is_empty() {
        let _ = writeln!(out, "note {}", inst.note);
    }
    out.push_str("[domain]\n");
    for (i, name) in names.iter().enumerate() {
        out.push_str("point ");
        out.push_str(name);
        if let Some(payloads) = domain.payloads() {
            for v in &payloads[i] {
                out.push(' ');
                out.push_str(&real(*v));
            }
        }
        out.push('\n');
    }
    out.push_str("[distribution]\n");
    for (i, name) in names.iter().enumerate() {
        let _ = writeln!(out, "{name} {} {}", real(d.mass_of(i)), real(d.label_prob(i)));
    }
    out.push_str("[groups]\n");
    for g in inst.groups.iter() {
        out.push_str(&g.name);
        for &m in g.group.members() {
            out.push(' ');
            out.push_str(&names[m]);
        }
        out.push('\n');
    }
    out.push_str("[hypotheses]\n");
    for h in inst.hypotheses.iter() {
        out.push_str(&h.name);
        for v in h.predictor.values() {
            out.push(' ');
            out.push_str(&real(*v));
        }
        out.push('\n');
    }
    if let Some(metric) = &inst.metric {
        out.push_str("[metric]\n");
        for i in 0..metric.len() {
            let row: Vec<String> = metric.row(i).iter().map(|v| real(*v)).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    }
    out.push_str("[loss]\n");
    let _ = writeln!(out, "kind {}", inst.loss.kind_tag());
    match inst.loss.as_ref() {
        LossFunction::Decomposable(point) => {
            let _ = writeln!(out, "point {}", point.name());
        }
        LossFunction::Calibration { lambda, uc_constant } => {
            let _ = writeln!(out, "lambda {}", real(*lambda));
            let _ = writeln!(out, "uc_constant {}", real(*uc_constant));
        }
        LossFunction::IfPlusDecomposable { a, b, point, .. } => {
            let _ = writeln!(out, "a {}", real(*a));
            let _ = writeln!(out, "b {}", real(*b));
            let _ = writeln!(out, "point {}", point.name());
        }
        LossFunction::ErrorRates { a, b, empty } => {
            let _ = writeln!(out, "a {}", real(*a));
            let _ = writeln!(out, "b {}", real(*b));
            let policy = match empty {
                EmptyConditional::Zero => "zero",
                EmptyConditional::Strict => "strict",
            };
            let _ = writeln!(out, "empty {policy}");
        }
    }
    out.push_str("[end]\n");
    out
}

struct Line<'a> {
    number: usize,
    tokens: Vec<&'a str>,
}

fn parse_real(line: &Line<'_>, field: &str, token: &str) -> Result<f64, ParseError> {
    token
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| err(line.number, field, format!("`{token}` is not a finite number")))
}

/// Parse the canonical text produced by [`to_text`].
pub fn from_text(text: &str) -> Result<Instance, InstanceError> {
    let mut header_seen = false;
    let mut note = String::new();
    let mut current: Option<&str> = None;
    let mut sections: HashMap<&str, (usize, Vec<Line<'_>>)> = HashMap::new();
    let mut order: Vec<&str> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let number = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !header_seen {
            if trimmed != FORMAT_HEADER {
                return Err(err(number, "header", format!("expected `{FORMAT_HEADER}`")).into());
            }
            header_seen = true;
            continue;
        }
        if let Some(name) = trimmed.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let Some(&known) = SECTIONS.iter().find(|&&s| s == name) else {
                return Err(err(number, "section", format!("unknown section [{name}]")).into());
            };
            if sections.contains_key(known) {
                return Err(err(number, "section", format!("duplicate section [{known}]")).into());
            }
            if let Some(&prev) = order.last() {
                let rank = |s: &str| SECTIONS.iter().position(|&x| x == s);
                if rank(known) < rank(prev) {
                    return Err(err(number, "section", format!("[{known}] must come before [{prev}]")).into());
                }
            }
            sections.insert(known, (number, Vec::new()));
            order.push(known);
            current = Some(known);
            continue;
        }
        match current {
            None => {
                if let Some(rest) = trimmed.strip_prefix("note") {
                    note = rest.trim().to_string();
                } else {
                    return Err(err(number, "preamble", format!("unexpected `{trimmed}` before [domain]")).into());
                }
            }
            Some("end") => return Err(err(number, "end", "content after [end]").into()),
            Some(section) => {
                let entry = sections.get_mut(section).expect("current section registered");
                entry.1.push(Line {
                    number,
                    tokens: trimmed.split_whitespace().collect(),
                });
            }
        }
    }
    if !header_seen {
        return Err(err(0, "header", format!("missing `{FORMAT_HEADER}`")).into());
    }
    for required in ["domain", "distribution", "groups", "hypotheses", "loss", "end"] {
        if !sections.contains_key(required) {
            return Err(err(0, "section", format!("missing section [{required}]")).into());
        }
    }
    let lines = |s: &str| -> &[Line<'_>] { sections.get(s).map_or(&[], |(_, l)| l.as_slice()) };

    // domain
    let mut names = Vec::new();
    let mut payloads = Vec::new();
    for line in lines("domain") {
        if line.tokens.first() != Some(&"point") || line.tokens.len() < 2 {
            return Err(err(line.number, "point", "expected `point <name> [payload..]`").into());
        }
        names.push(line.tokens[1].to_string());
        payloads.push(
            line.tokens[2..]
                .iter()
                .map(|t| parse_real(line, "payload", t))
                .collect::<Result<Vec<f64>, _>>()?,
        );
    }
    if names.is_empty() {
        return Err(err(sections["domain"].0, "domain", "no points").into());
    }
    let mut domain = Domain::new(names).map_err(|e| err(sections["domain"].0, "point", e.to_string()))?;
    if payloads.iter().any(|p| !p.is_empty()) {
        domain = domain
            .with_payloads(payloads)
            .map_err(|e| err(sections["domain"].0, "payload", e.to_string()))?;
    }
    let domain = Arc::new(domain);
    let n = domain.len();
    let index = |line: &Line<'_>, field: &str, name: &str| {
        domain
            .index_of(name)
            .ok_or_else(|| err(line.number, field, format!("unknown point `{name}`")))
    };

    // distribution
    let mut mass = vec![f64::NAN; n];
    let mut label_prob = vec![f64::NAN; n];
    for line in lines("distribution") {
        if line.tokens.len() != 3 {
            return Err(err(line.number, "distribution", "expected `<point> <mass> <label_prob>`").into());
        }
        let i = index(line, "point", line.tokens[0])?;
        mass[i] = parse_real(line, "mass", line.tokens[1])?;
        label_prob[i] = parse_real(line, "label_prob", line.tokens[2])?;
    }
    if let Some(i) = mass.iter().position(|m| m.is_nan()) {
        return Err(err(sections["distribution"].0, "distribution", format!("no entry for `{}`", domain.names()[i])).into());
    }
    let distribution = Distribution::new(Arc::clone(&domain), mass, label_prob)
        .map_err(|e| err(sections["distribution"].0, "distribution", e.to_string()))?;

    // groups
    let mut groups = Vec::new();
    for line in lines("groups") {
        let members = line.tokens[1..]
            .iter()
            .map(|t| index(line, "member", t))
            .collect::<Result<Vec<_>, _>>()?;
        groups.push(NamedGroup {
            name: line.tokens[0].to_string(),
            group: Group::new(members, n).map_err(|e| err(line.number, "group", e.to_string()))?,
        });
    }
    let groups = GroupCollection::new(groups).map_err(|e| err(sections["groups"].0, "group", e.to_string()))?;

    // hypotheses
    let mut hypotheses = Vec::new();
    for line in lines("hypotheses") {
        if line.tokens.len() != n + 1 {
            return Err(err(
                line.number,
                "hypothesis",
                format!("expected a name and {n} values, got {} tokens", line.tokens.len()),
            )
            .into());
        }
        let values = line.tokens[1..]
            .iter()
            .map(|t| parse_real(line, "value", t))
            .collect::<Result<Vec<_>, _>>()?;
        hypotheses.push(NamedPredictor {
            name: line.tokens[0].to_string(),
            predictor: Predictor::new(values).map_err(|e| err(line.number, "value", e.to_string()))?,
        });
    }
    let hypotheses =
        HypothesisCollection::new(hypotheses).map_err(|e| err(sections["hypotheses"].0, "hypotheses", e.to_string()))?;

    // metric
    let metric = match sections.get("metric") {
        None => None,
        Some((start, rows)) => {
            let parsed = rows
                .iter()
                .map(|line| line.tokens.iter().map(|t| parse_real(line, "metric", t)).collect())
                .collect::<Result<Vec<Vec<f64>>, _>>()?;
            let metric = Metric::new(parsed).map_err(|e| err(*start, "metric", e.to_string()))?;
            if metric.len() != n {
                return Err(err(*start, "metric", format!("expected {n} rows, got {}", metric.len())).into());
            }
            Some(Arc::new(metric))
        }
    };

    let loss = parse_loss(lines("loss"), sections["loss"].0, metric)?;
    Instance::new(distribution, hypotheses, groups, Arc::new(loss), note)
}

fn parse_loss(lines: &[Line<'_>], start: usize, metric: Option<Arc<Metric>>) -> Result<LossFunction, ParseError> {
    let mut fields: HashMap<&str, (&Line<'_>, &str)> = HashMap::new();
    for line in lines {
        if line.tokens.len() != 2 {
            return Err(err(line.number, "loss", "expected `<key> <value>`"));
        }
        fields.insert(line.tokens[0], (line, line.tokens[1]));
    }
    let get = |key: &str| fields.get(key).copied().ok_or_else(|| err(start, key, "missing loss field"));
    let real_field = |key: &str| -> Result<f64, ParseError> {
        let (line, token) = get(key)?;
        parse_real(line, key, token)
    };
    let point = || -> Result<PointLoss, ParseError> {
        let (line, token) = get("point")?;
        PointLoss::from_name(token).ok_or_else(|| err(line.number, "point", format!("unknown point loss `{token}`")))
    };
    let (kind_line, kind) = get("kind")?;
    let invalid = |e: crate::losses::LossError| err(start, "loss", e.to_string());
    match kind {
        "decomposable" => Ok(LossFunction::Decomposable(point()?)),
        "calibration" => LossFunction::calibration_with_constant(real_field("lambda")?, real_field("uc_constant")?)
            .map_err(invalid),
        "if_plus_decomposable" => {
            let metric = metric.ok_or_else(|| err(kind_line.number, "kind", "metric-based loss needs a [metric] section"))?;
            LossFunction::if_plus_decomposable(real_field("a")?, real_field("b")?, point()?, metric).map_err(invalid)
        }
        "error_rates" => {
            let (line, token) = get("empty")?;
            let policy = match token {
                "zero" => EmptyConditional::Zero,
                "strict" => EmptyConditional::Strict,
                other => return Err(err(line.number, "empty", format!("unknown policy `{other}`"))),
            };
            Ok(LossFunction::error_rates(real_field("a")?, real_field("b")?)
                .map_err(invalid)?
                .with_empty_conditional(policy))
        }
        other => Err(err(kind_line.number, "kind", format!("unknown loss kind `{other}`"))),
    }
}

pub fn save_instance(inst: &Instance, path: impl AsRef<Path>) -> Result<(), InstanceError> {
    let path = path.as_ref();
    std::fs::write(path, to_text(inst)).map_err(|source| InstanceError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<Instance, InstanceError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| InstanceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    from_text(&text)
}
