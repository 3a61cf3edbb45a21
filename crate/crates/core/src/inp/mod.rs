//! Reader and writer for the supported subset of the EPANET INP format.
//!
//! Supported sections: TITLE, JUNCTIONS, RESERVOIRS, TANKS, PIPES, PUMPS,
//! VALVES, DEMANDS, STATUS, PATTERNS, CURVES, TIMES, OPTIONS, END. Units are
//! GPM and feet with Hazen-Williams head loss. Sections that change hydraulic
//! semantics the model cannot represent (QUALITY, RULES, EMITTERS, CONTROLS,
//! ...) are rejected when they contain data; purely cosmetic sections are kept
//! in the document and reported as warnings.

mod writer;

pub use writer::write_inp;

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::{
    Curve, Junction, Network, NodeRef, Pattern, Pipe, Pump, PumpCurve, Reservoir, Tank,
    Valve, ValveKind, ValveStatus,
};

const REJECTED: &[&str] = &[
    "QUALITY", "RULES", "EMITTERS", "CONTROLS", "SOURCES", "REACTIONS", "MIXING", "LEAKAGE",
];

const KNOWN: &[&str] = &[
    "TITLE", "JUNCTIONS", "RESERVOIRS", "TANKS", "PIPES", "PUMPS", "VALVES", "DEMANDS", "STATUS",
    "PATTERNS", "CURVES", "TIMES", "OPTIONS", "END",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub line: usize,
    pub section: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub text: String,
    /// 1-based character column.
    pub column: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SourceLine {
    /// 1-based line number.
    pub line: usize,
    pub tokens: Vec<Token>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Section {
    pub name: String,
    pub header_line: usize,
    pub lines: Vec<SourceLine>,
}

/// Tokenized INP text, grouped by section, with source positions.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct InpDocument {
    pub sections: Vec<Section>,
    /// Data lines that appear before the first section header.
    pub preamble: Vec<SourceLine>,
}

impl InpDocument {
    pub fn read(text: &str) -> Self {
        let text = text.strip_prefix('\u{feff}').unwrap_or(text);
        let mut doc = InpDocument::default();
        let mut title_mode = false;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.starts_with('[') {
                let name = trimmed
                    .trim_start_matches('[')
                    .split(']')
                    .next()
                    .unwrap_or("")
                    .trim()
                    .to_ascii_uppercase();
                title_mode = name == "TITLE";
                doc.sections.push(Section {
                    name,
                    header_line: line,
                    lines: Vec::new(),
                });
                continue;
            }
            let content = if title_mode {
                raw
            } else {
                raw.split(';').next().unwrap_or("")
            };
            let tokens = if title_mode {
                let t = content.trim();
                if t.is_empty() {
                    Vec::new()
                } else {
                    let col = content.chars().take_while(|c| c.is_whitespace()).count() + 1;
                    vec![Token {
                        text: t.to_string(),
                        column: col,
                    }]
                }
            } else {
                tokenize(content)
            };
            if tokens.is_empty() {
                continue;
            }
            let sl = SourceLine { line, tokens };
            match doc.sections.last_mut() {
                Some(s) => s.lines.push(sl),
                None => doc.preamble.push(sl),
            }
        }
        doc
    }
}

fn tokenize(s: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut start = 0;
    for (col, c) in s.chars().enumerate() {
        if c.is_whitespace() {
            if !cur.is_empty() {
                out.push(Token {
                    text: std::mem::take(&mut cur),
                    column: start + 1,
                });
            }
        } else {
            if cur.is_empty() {
                start = col;
            }
            cur.push(c);
        }
    }
    if !cur.is_empty() {
        out.push(Token {
            text: cur,
            column: start + 1,
        });
    }
    out
}

/// Parsed network plus non-fatal diagnostics.
#[derive(Clone, Debug)]
pub struct ParsedInp {
    pub network: Network,
    pub diagnostics: Vec<Diagnostic>,
    pub document: InpDocument,
}

pub fn parse_inp_bytes(bytes: &[u8]) -> Result<ParsedInp> {
    match std::str::from_utf8(bytes) {
        Ok(text) => parse_inp(text),
        Err(e) => {
            let before = &bytes[..e.valid_up_to()];
            let line = before.iter().filter(|&&b| b == b'\n').count() + 1;
            let column = before.iter().rev().take_while(|&&b| b != b'\n').count() + 1;
            Err(Error::Parse {
                line,
                column,
                section: String::new(),
                message: "input is not valid UTF-8".into(),
            })
        }
    }
}

pub fn parse_inp(text: &str) -> Result<ParsedInp> {
    let document = InpDocument::read(text);
    let mut p = Parser {
        net: Network::default(),
        diags: Vec::new(),
        nodes: HashMap::new(),
        links: HashMap::new(),
        default_pattern: None,
        section: String::new(),
    };
    p.run(&document)?;
    Ok(ParsedInp {
        network: p.net,
        diagnostics: p.diags,
        document,
    })
}

struct Parser {
    net: Network,
    diags: Vec<Diagnostic>,
    nodes: HashMap<String, NodeRef>,
    links: HashMap<String, usize>,
    default_pattern: Option<String>,
    section: String,
}

impl Parser {
    fn err(&self, line: usize, column: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            line,
            column,
            section: self.section.clone(),
            message: message.into(),
        }
    }

    fn warn(&mut self, line: usize, message: impl Into<String>) {
        self.diags.push(Diagnostic {
            severity: Severity::Warning,
            line,
            section: self.section.clone(),
            message: message.into(),
        });
    }

    fn num(&self, l: &SourceLine, i: usize, field: &str) -> Result<f64> {
        let Some(t) = l.tokens.get(i) else {
            let col = l.tokens.last().map(|t| t.column + t.text.chars().count()).unwrap_or(1);
            return Err(self.err(l.line, col, format!("missing {field}")));
        };
        match t.text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.err(
                l.line,
                t.column,
                format!("expected a number for {field}, found '{}'", t.text),
            )),
        }
    }

    fn opt_num(&self, l: &SourceLine, i: usize, field: &str) -> Result<Option<f64>> {
        if l.tokens.len() > i {
            self.num(l, i, field).map(Some)
        } else {
            Ok(None)
        }
    }

    fn need(&self, l: &SourceLine, n: usize, what: &str) -> Result<()> {
        if l.tokens.len() < n {
            let col = l.tokens.last().map(|t| t.column + t.text.chars().count()).unwrap_or(1);
            return Err(self.err(
                l.line,
                col,
                format!("expected at least {n} fields ({what}), found {}", l.tokens.len()),
            ));
        }
        Ok(())
    }

    fn pattern_ref(&self, l: &SourceLine, i: usize) -> Result<Option<String>> {
        let Some(t) = l.tokens.get(i) else {
            return Ok(None);
        };
        if self.net.pattern(&t.text).is_none() {
            return Err(self.err(l.line, t.column, format!("unknown pattern '{}'", t.text)));
        }
        Ok(Some(t.text.clone()))
    }

    fn add_node(&mut self, t: &Token, line: usize, r: NodeRef) -> Result<()> {
        if self.nodes.insert(t.text.clone(), r).is_some() {
            return Err(self.err(line, t.column, format!("duplicate node id '{}'", t.text)));
        }
        Ok(())
    }

    fn add_link(&mut self, t: &Token, line: usize) -> Result<()> {
        let n = self.links.len();
        if self.links.insert(t.text.clone(), n).is_some() {
            return Err(self.err(line, t.column, format!("duplicate link id '{}'", t.text)));
        }
        Ok(())
    }

    fn node(&self, l: &SourceLine, i: usize) -> Result<NodeRef> {
        let t = &l.tokens[i];
        self.nodes
            .get(&t.text)
            .copied()
            .ok_or_else(|| self.err(l.line, t.column, format!("unknown node '{}'", t.text)))
    }


    fn run(&mut self, doc: &InpDocument) -> Result<()> {
        if let Some(l) = doc.preamble.first() {
            return Err(self.err(l.line, l.tokens[0].column, "data before the first section header"));
        }
        let mut ended = false;
        for s in &doc.sections {
            if ended {
                break;
            }
            if s.name == "END" {
                ended = true;
                continue;
            }
            if REJECTED.contains(&s.name.as_str()) {
                if !s.lines.is_empty() {
                    return Err(Error::UnsupportedSection {
                        section: s.name.clone(),
                        line: s.header_line,
                        reason: "this feature is outside the supported hydraulic model".into(),
                    });
                }
            } else if !KNOWN.contains(&s.name.as_str()) {
                self.section = s.name.clone();
                self.warn(s.header_line, format!("section [{}] is not interpreted", s.name));
            }
        }
        // Sections after [END] are ignored by EPANET; mirror that.
        let end = doc
            .sections
            .iter()
            .position(|s| s.name == "END")
            .unwrap_or(doc.sections.len());
        let doc = InpDocument {
            sections: doc.sections[..end].to_vec(),
            preamble: Vec::new(),
        };

        for s in sections(&doc, "TITLE") {
            for l in &s.lines {
                self.net.title.push(l.tokens[0].text.clone());
            }
        }
        for s in sections(&doc, "OPTIONS") {
            self.section = "OPTIONS".into();
            for l in &s.lines {
                self.option(l)?;
            }
        }
        for s in sections(&doc, "TIMES") {
            self.section = "TIMES".into();
            for l in &s.lines {
                self.time(l)?;
            }
        }
        for s in sections(&doc, "PATTERNS") {
            self.section = "PATTERNS".into();
            for l in &s.lines {
                self.pattern(l)?;
            }
        }
        for s in sections(&doc, "CURVES") {
            self.section = "CURVES".into();
            for l in &s.lines {
                self.curve(l)?;
            }
        }
        let mut saw_junctions = false;
        for s in sections(&doc, "JUNCTIONS") {
            saw_junctions = true;
            self.section = "JUNCTIONS".into();
            for l in &s.lines {
                self.need(l, 2, "id, elevation")?;
                let elevation = self.num(l, 1, "elevation")?;
                let base_demand = self.opt_num(l, 2, "demand")?.unwrap_or(0.0);
                let pattern = self.pattern_ref(l, 3)?;
                let r = NodeRef::junction(self.net.junctions.len());
                self.add_node(&l.tokens[0], l.line, r)?;
                self.net.junctions.push(Junction {
                    id: l.tokens[0].text.clone(),
                    elevation,
                    base_demand,
                    pattern,
                });
            }
        }
        for s in sections(&doc, "RESERVOIRS") {
            self.section = "RESERVOIRS".into();
            for l in &s.lines {
                self.need(l, 2, "id, head")?;
                let head = self.num(l, 1, "head")?;
                if let Some(t) = l.tokens.get(2) {
                    return Err(self.err(l.line, t.column, "reservoir head patterns are not supported"));
                }
                let r = NodeRef::reservoir(self.net.reservoirs.len());
                self.add_node(&l.tokens[0], l.line, r)?;
                self.net.reservoirs.push(Reservoir {
                    id: l.tokens[0].text.clone(),
                    head,
                });
            }
        }
        for s in sections(&doc, "TANKS") {
            self.section = "TANKS".into();
            for l in &s.lines {
                self.need(l, 6, "id, elevation, initial, min, max level, diameter")?;
                let elevation = self.num(l, 1, "elevation")?;
                let initial_level = self.num(l, 2, "initial level")?;
                let min_level = self.num(l, 3, "minimum level")?;
                let max_level = self.num(l, 4, "maximum level")?;
                let diameter = self.num(l, 5, "diameter")?;
                self.opt_num(l, 6, "minimum volume")?;
                if let Some(t) = l.tokens.get(7) {
                    if t.text != "*" {
                        return Err(self.err(l.line, t.column, "tank volume curves are not supported"));
                    }
                }
                if !(diameter > 0.0) {
                    return Err(self.err(l.line, l.tokens[5].column, "tank diameter must be positive"));
                }
                if !(min_level <= initial_level && initial_level <= max_level) {
                    return Err(self.err(
                        l.line,
                        l.tokens[2].column,
                        "tank levels must satisfy min <= initial <= max",
                    ));
                }
                let r = NodeRef::tank(self.net.tanks.len());
                self.add_node(&l.tokens[0], l.line, r)?;
                self.net.tanks.push(Tank {
                    id: l.tokens[0].text.clone(),
                    elevation,
                    initial_level,
                    min_level,
                    max_level,
                    diameter,
                });
            }
        }
        if !saw_junctions || self.net.junctions.is_empty() {
            self.section = "JUNCTIONS".into();
            self.warn(0, "network has no junctions");
        }
        for s in sections(&doc, "PIPES") {
            self.section = "PIPES".into();
            for l in &s.lines {
                self.pipe(l)?;
            }
        }
        for s in sections(&doc, "PUMPS") {
            self.section = "PUMPS".into();
            for l in &s.lines {
                self.pump(l)?;
            }
        }
        for s in sections(&doc, "VALVES") {
            self.section = "VALVES".into();
            for l in &s.lines {
                self.valve(l)?;
            }
        }
        let mut replaced = vec![false; self.net.junctions.len()];
        for s in sections(&doc, "DEMANDS") {
            self.section = "DEMANDS".into();
            for l in &s.lines {
                self.need(l, 2, "junction, demand")?;
                let n = self.node(l, 0)?;
                if n.kind != crate::network::NodeKind::Junction {
                    return Err(self.err(l.line, l.tokens[0].column, "demands apply to junctions only"));
                }
                let d = self.num(l, 1, "demand")?;
                let pat = self.pattern_ref(l, 2)?;
                let j = &mut self.net.junctions[n.index];
                if replaced[n.index] {
                    if j.pattern != pat {
                        let (line, col) = (l.line, l.tokens[0].column);
                        return Err(self.err(
                            line,
                            col,
                            "multiple demand categories with different patterns are not supported",
                        ));
                    }
                    j.base_demand += d;
                } else {
                    replaced[n.index] = true;
                    j.base_demand = d;
                    j.pattern = pat;
                }
            }
        }
        for s in sections(&doc, "STATUS") {
            self.section = "STATUS".into();
            for l in &s.lines {
                self.status(l)?;
            }
        }

        let default_pattern = match self.default_pattern.clone() {
            Some(p) if self.net.pattern(&p).is_some() => Some(p),
            Some(p) => {
                self.section = "OPTIONS".into();
                self.warn(0, format!("default pattern '{p}' is not defined"));
                None
            }
            None => self.net.pattern("1").map(|p| p.id.clone()),
        };
        for j in &mut self.net.junctions {
            if j.pattern.is_none() {
                j.pattern = default_pattern.clone();
            }
        }
        self.net.validate()
    }

    fn option(&mut self, l: &SourceLine) -> Result<()> {
        let key = l.tokens[0].text.to_ascii_uppercase();
        let val = l.tokens.get(1).map(|t| t.text.to_ascii_uppercase());
        match key.as_str() {
            "UNITS" => {
                if val.as_deref() != Some("GPM") {
                    let col = l.tokens.get(1).map(|t| t.column).unwrap_or(l.tokens[0].column);
                    return Err(self.err(l.line, col, "only GPM flow units are supported"));
                }
            }
            "HEADLOSS" => {
                if val.as_deref() != Some("H-W") {
                    let col = l.tokens.get(1).map(|t| t.column).unwrap_or(l.tokens[0].column);
                    return Err(self.err(l.line, col, "only Hazen-Williams (H-W) head loss is supported"));
                }
            }
            "PATTERN" => {
                self.default_pattern = l.tokens.get(1).map(|t| t.text.clone());
            }
            "DEMAND" => {
                // DEMAND MULTIPLIER x
                if let Some(v) = l.tokens.get(2) {
                    if v.text.parse::<f64>().ok() != Some(1.0) {
                        self.warn(l.line, "demand multiplier is ignored");
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn time(&mut self, l: &SourceLine) -> Result<()> {
        let words: Vec<String> = l.tokens.iter().map(|t| t.text.to_ascii_uppercase()).collect();
        let (field, at) = match words.first().map(String::as_str) {
            Some("DURATION") => (0, 1),
            Some("HYDRAULIC") if words.get(1).map(String::as_str) == Some("TIMESTEP") => (1, 2),
            Some("PATTERN") if words.get(1).map(String::as_str) == Some("TIMESTEP") => (2, 2),
            _ => return Ok(()),
        };
        let Some(t) = l.tokens.get(at) else {
            return Err(self.err(l.line, l.tokens[0].column, "missing time value"));
        };
        let unit = words.get(at + 1).map(String::as_str);
        let secs = parse_time(&t.text, unit)
            .ok_or_else(|| self.err(l.line, t.column, format!("cannot read time '{}'", t.text)))?;
        match field {
            0 => self.net.times.duration = secs,
            1 => {
                if !(secs > 0.0) {
                    return Err(self.err(l.line, t.column, "hydraulic timestep must be positive"));
                }
                self.net.times.hydraulic_step = secs
            }
            _ => self.net.times.pattern_step = secs,
        }
        Ok(())
    }

    fn pattern(&mut self, l: &SourceLine) -> Result<()> {
        let id = l.tokens[0].text.clone();
        let mut values = Vec::new();
        for i in 1..l.tokens.len() {
            values.push(self.num(l, i, "multiplier")?);
        }
        match self.net.patterns.iter_mut().find(|p| p.id == id) {
            Some(p) => p.multipliers.extend(values),
            None => self.net.patterns.push(Pattern {
                id,
                multipliers: values,
            }),
        }
        Ok(())
    }

    fn curve(&mut self, l: &SourceLine) -> Result<()> {
        self.need(l, 3, "id, x, y")?;
        let id = l.tokens[0].text.clone();
        let pt = (self.num(l, 1, "x value")?, self.num(l, 2, "y value")?);
        match self.net.curves.iter_mut().find(|c| c.id == id) {
            Some(c) => c.points.push(pt),
            None => self.net.curves.push(Curve {
                id,
                points: vec![pt],
            }),
        }
        Ok(())
    }

    fn pipe(&mut self, l: &SourceLine) -> Result<()> {
        self.need(l, 6, "id, node1, node2, length, diameter, roughness")?;
        let from = self.node(l, 1)?;
        let to = self.node(l, 2)?;
        if from == to {
            return Err(self.err(l.line, l.tokens[2].column, "pipe starts and ends at the same node"));
        }
        let length = self.num(l, 3, "length")?;
        let diameter_in = self.num(l, 4, "diameter")?;
        let roughness = self.num(l, 5, "roughness")?;
        for (i, v) in [(3, length), (4, diameter_in), (5, roughness)] {
            if !(v > 0.0) {
                return Err(self.err(l.line, l.tokens[i].column, "value must be positive"));
            }
        }
        if let Some(m) = self.opt_num(l, 6, "minor loss")? {
            if m != 0.0 {
                self.warn(l.line, format!("minor loss on pipe '{}' is ignored", l.tokens[0].text));
            }
        }
        if let Some(t) = l.tokens.get(7) {
            if !t.text.eq_ignore_ascii_case("OPEN") {
                return Err(self.err(l.line, t.column, format!("pipe status '{}' is not supported", t.text)));
            }
        }
        self.add_link(&l.tokens[0], l.line)?;
        self.net.pipes.push(Pipe {
            id: l.tokens[0].text.clone(),
            from,
            to,
            length,
            diameter_in,
            roughness,
        });
        Ok(())
    }

    fn pump(&mut self, l: &SourceLine) -> Result<()> {
        self.need(l, 3, "id, node1, node2")?;
        let from = self.node(l, 1)?;
        let to = self.node(l, 2)?;
        if from == to {
            return Err(self.err(l.line, l.tokens[2].column, "pump starts and ends at the same node"));
        }
        let mut curve_id = None;
        let mut i = 3;
        while i < l.tokens.len() {
            let key = l.tokens[i].text.to_ascii_uppercase();
            let Some(v) = l.tokens.get(i + 1) else {
                return Err(self.err(l.line, l.tokens[i].column, format!("missing value for {key}")));
            };
            match key.as_str() {
                "HEAD" => curve_id = Some((v.text.clone(), v.column)),
                "SPEED" => {
                    if v.text.parse::<f64>().ok() != Some(1.0) {
                        return Err(self.err(l.line, v.column, "pump speed is fixed at 1"));
                    }
                }
                _ => {
                    return Err(self.err(
                        l.line,
                        l.tokens[i].column,
                        format!("pump property {key} is not supported"),
                    ))
                }
            }
            i += 2;
        }
        let Some((cid, col)) = curve_id else {
            return Err(self.err(l.line, l.tokens[0].column, "pump needs a HEAD curve"));
        };
        let Some(c) = self.net.curves.iter().find(|c| c.id == cid) else {
            return Err(self.err(l.line, col, format!("unknown curve '{cid}'")));
        };
        let curve = fit_pump_curve(&c.points).map_err(|m| self.err(l.line, col, m))?;
        self.add_link(&l.tokens[0], l.line)?;
        self.net.pumps.push(Pump {
            id: l.tokens[0].text.clone(),
            from,
            to,
            curve_id: cid,
            curve,
        });
        Ok(())
    }

    fn valve(&mut self, l: &SourceLine) -> Result<()> {
        self.need(l, 6, "id, node1, node2, diameter, type, setting")?;
        let from = self.node(l, 1)?;
        let to = self.node(l, 2)?;
        if from == to {
            return Err(self.err(l.line, l.tokens[2].column, "valve starts and ends at the same node"));
        }
        let diameter_in = self.num(l, 3, "diameter")?;
        let kind = match l.tokens[4].text.to_ascii_uppercase().as_str() {
            "FCV" => ValveKind::Fcv,
            "PRV" => ValveKind::Prv,
            other => {
                return Err(self.err(
                    l.line,
                    l.tokens[4].column,
                    format!("valve type {other} is not supported (FCV and PRV only)"),
                ))
            }
        };
        let setting = self.num(l, 5, "setting")?;
        if let Some(m) = self.opt_num(l, 6, "minor loss")? {
            if m != 0.0 {
                self.warn(l.line, format!("minor loss on valve '{}' is ignored", l.tokens[0].text));
            }
        }
        self.add_link(&l.tokens[0], l.line)?;
        self.net.valves.push(Valve {
            id: l.tokens[0].text.clone(),
            from,
            to,
            diameter_in,
            kind,
            setting,
            status: ValveStatus::Active,
        });
        Ok(())
    }

    fn status(&mut self, l: &SourceLine) -> Result<()> {
        self.need(l, 2, "id, status")?;
        let id = &l.tokens[0];
        let st = l.tokens[1].text.to_ascii_uppercase();
        if let Some(v) = self.net.valves.iter_mut().find(|v| v.id == id.text) {
            v.status = match st.as_str() {
                "OPEN" => ValveStatus::Open,
                "ACTIVE" => ValveStatus::Active,
                _ => {
                    return Err(self.err(
                        l.line,
                        l.tokens[1].column,
                        format!("valve status '{st}' is not supported (OPEN or ACTIVE)"),
                    ))
                }
            };
            return Ok(());
        }
        if self.links.contains_key(&id.text) {
            if st != "OPEN" {
                return Err(self.err(l.line, l.tokens[1].column, format!("link status '{st}' is not supported")));
            }
            return Ok(());
        }
        Err(self.err(l.line, id.column, format!("unknown link '{}'", id.text)))
    }
}

fn sections<'d>(doc: &'d InpDocument, name: &str) -> Vec<&'d Section> {
    doc.sections.iter().filter(|s| s.name == name).collect()
}

/// Convert an EPANET time field to seconds. Plain numbers are hours.
pub fn parse_time(value: &str, unit: Option<&str>) -> Option<f64> {
    if value.contains(':') {
        let parts: Vec<&str> = value.split(':').collect();
        if parts.len() > 3 {
            return None;
        }
        let mut secs = 0.0;
        let scale = [3600.0, 60.0, 1.0];
        for (i, p) in parts.iter().enumerate() {
            let v: f64 = p.parse().ok()?;
            if !v.is_finite() || v < 0.0 {
                return None;
            }
            secs += v * scale[i];
        }
        return Some(secs);
    }
    let v: f64 = value.parse().ok()?;
    if !v.is_finite() || v < 0.0 {
        return None;
    }
    let mult = match unit {
        None => 3600.0,
        Some(u) if u.starts_with("SEC") => 1.0,
        Some(u) if u.starts_with("MIN") => 60.0,
        Some(u) if u.starts_with("HOUR") => 3600.0,
        Some(u) if u.starts_with("DAY") => 86400.0,
        Some(_) => return None,
    };
    Some(v * mult)
}

/// Fit the power-law curve `h0 - r q^beta` to EPANET curve points.
///
/// One point (q, h) expands to shutoff head 4/3 h, maximum flow 2 q and beta 2.
/// Three points must start at zero flow and are fitted exactly.
pub fn fit_pump_curve(points: &[(f64, f64)]) -> Result<PumpCurve, String> {
    match points {
        [(q, h)] => {
            if !(*q > 0.0 && *h > 0.0) {
                return Err("single-point pump curve needs positive flow and head".into());
            }
            Ok(PumpCurve {
                h0: 4.0 / 3.0 * h,
                r: h / (3.0 * q * q),
                beta: 2.0,
            })
        }
        [(q0, h0), (q1, h1), (q2, h2)] => {
            if *q0 != 0.0 {
                return Err("three-point pump curve must start at zero flow".into());
            }
            let d1 = h0 - h1;
            let d2 = h0 - h2;
            if !(*q1 > 0.0 && q2 > q1 && d1 > 0.0 && d2 > d1) {
                return Err("pump curve points must have increasing flow and decreasing head".into());
            }
            let beta = (d2 / d1).ln() / (q2 / q1).ln();
            let r = d1 / q1.powf(beta);
            if !(beta.is_finite() && r.is_finite() && beta > 0.0 && r > 0.0) {
                return Err("pump curve cannot be fitted by a power law".into());
            }
            Ok(PumpCurve { h0: *h0, r, beta })
        }
        _ => Err(format!(
            "pump curve has {} points; one point or three points starting at zero flow are supported",
            points.len()
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;
    use proptest::prelude::*;

    #[test]
    fn three_node_counts() {
        let net = parse_inp(bundled::THREE_NODE_INP).unwrap().network;
        assert_eq!(
            (net.n_j(), net.n_r(), net.n_t(), net.n_p(), net.n_m(), net.n_l()),
            (1, 1, 1, 1, 1, 0)
        );
    }

    #[test]
    fn eight_node_counts() {
        let net = parse_inp(bundled::EIGHT_NODE_INP).unwrap().network;
        assert_eq!(
            (net.n_j(), net.n_r(), net.n_t(), net.n_p(), net.n_m(), net.n_l()),
            (6, 1, 1, 8, 1, 0)
        );
        assert_eq!(net.tanks[0].initial_head(), 834.0);
    }

    #[test]
    fn empty_junctions_warns() {
        let text = "[JUNCTIONS]\n[RESERVOIRS]\nR 10\n[END]\n";
        let parsed = parse_inp(text).unwrap();
        assert_eq!(parsed.network.n_j(), 0);
        assert!(parsed
            .diagnostics
            .iter()
            .any(|d| d.severity == Severity::Warning && d.message.contains("no junctions")));
    }

    #[test]
    fn single_point_curve_expansion() {
        let c = fit_pump_curve(&[(600.0, 150.0)]).unwrap();
        assert!((c.h0 - 200.0).abs() < 1e-12);
        assert_eq!(c.beta, 2.0);
        // passes through the design point and reaches zero head at twice the flow
        assert!((c.h0 - c.r * 600f64.powi(2) - 150.0).abs() < 1e-9);
        assert!((c.h0 - c.r * 1200f64.powi(2)).abs() < 1e-9);
    }

    #[test]
    fn three_point_curve_is_exact() {
        let c = fit_pump_curve(&[(0.0, 338.0), (100.0, 265.0), (200.0, 46.0)]).unwrap();
        assert!((c.beta - 2.0).abs() < 1e-12);
        assert!((c.r - 0.0073).abs() < 1e-12);
        assert!(fit_pump_curve(&[(10.0, 100.0), (20.0, 90.0), (30.0, 50.0)]).is_err());
        assert!(fit_pump_curve(&[(0.0, 100.0), (20.0, 90.0)]).is_err());
    }

    fn expect_parse_err(text: &str) -> (usize, usize, String, String) {
        match parse_inp(text) {
            Err(Error::Parse {
                line,
                column,
                section,
                message,
            }) => (line, column, section, message),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn dangling_endpoint_reports_position() {
        let text = "[JUNCTIONS]\nJ1 0 10\n[RESERVOIRS]\nR1 100\n[PIPES]\nP1 R1 J1 100 12 100\nP2 J1  J9 100 12 100\n";
        let (line, col, section, msg) = expect_parse_err(text);
        assert_eq!((line, col, section.as_str()), (7, 8, "PIPES"));
        assert!(msg.contains("J9"));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = "[JUNCTIONS]\nJ1 0\n[TANKS]\nJ1 0 1 0 2 10\n";
        let (line, _, _, msg) = expect_parse_err(text);
        assert_eq!(line, 4);
        assert!(msg.contains("duplicate"));
    }

    #[test]
    fn malformed_number_reports_column() {
        let text = "[JUNCTIONS]\nJ1 abc 10\n";
        let (line, col, section, _) = expect_parse_err(text);
        assert_eq!((line, col, section.as_str()), (2, 4, "JUNCTIONS"));
    }

    #[test]
    fn rejected_sections_are_named() {
        let text = "[JUNCTIONS]\nJ1 0\n[QUALITY]\nJ1 0.5\n";
        match parse_inp(text) {
            Err(Error::UnsupportedSection { section, line, .. }) => {
                assert_eq!((section.as_str(), line), ("QUALITY", 3))
            }
            other => panic!("{other:?}"),
        }
        // an empty [RULES] block carries no semantics and is accepted
        let ok = "[RESERVOIRS]\nR 1\n[RULES]\n[END]\n";
        assert!(parse_inp(ok).is_ok());
    }

    #[test]
    fn unknown_sections_are_kept_and_flagged() {
        let text = "[RESERVOIRS]\nR 1\n[COORDINATES]\nR 1 2\n";
        let parsed = parse_inp(text).unwrap();
        assert!(parsed.document.sections.iter().any(|s| s.name == "COORDINATES" && s.lines.len() == 1));
        assert!(parsed.diagnostics.iter().any(|d| d.section == "COORDINATES"));
    }

    #[test]
    fn demands_section_replaces_base_demand() {
        let text = "[JUNCTIONS]\nJ1 0 10\n[RESERVOIRS]\nR 1\n[PIPES]\nP R J1 1 1 1\n[DEMANDS]\nJ1 4\nJ1 5\n";
        let net = parse_inp(text).unwrap().network;
        assert_eq!(net.junctions[0].base_demand, 9.0);
    }

    #[test]
    fn times_accept_clock_and_units() {
        assert_eq!(parse_time("24:00", None), Some(86400.0));
        assert_eq!(parse_time("1:30:15", None), Some(5415.0));
        assert_eq!(parse_time("2", None), Some(7200.0));
        assert_eq!(parse_time("90", Some("MIN")), Some(5400.0));
        assert_eq!(parse_time("x", None), None);
    }

    #[test]
    fn invalid_utf8_is_an_error() {
        let err = parse_inp_bytes(b"[JUNCTIONS]\nJ1 \xff\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn round_trip_bundled() {
        for net in [
            bundled::three_node(),
            bundled::eight_node(),
            bundled::eight_node_valves(),
            crate::generate::grid_network(&crate::generate::GridOptions::default()),
        ] {
            let text = write_inp(&net);
            let back = parse_inp(&text).unwrap().network;
            assert_eq!(back, net);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(512))]

        #[test]
        fn never_panics_on_bytes(bytes in proptest::collection::vec(any::<u8>(), 0..400)) {
            let _ = parse_inp_bytes(&bytes);
        }

        #[test]
        fn never_panics_on_inp_like_text(
            lines in proptest::collection::vec(
                prop_oneof![
                    Just("[JUNCTIONS]".to_string()),
                    Just("[PIPES]".to_string()),
                    Just("[PUMPS]".to_string()),
                    Just("[VALVES]".to_string()),
                    Just("[TANKS]".to_string()),
                    Just("[RESERVOIRS]".to_string()),
                    Just("[CURVES]".to_string()),
                    Just("[STATUS]".to_string()),
                    Just("[TIMES]".to_string()),
                    Just("[DEMANDS]".to_string()),
                    "[A-Z0-9]{1,3}( +[-0-9.e:A-Z]{1,6}){0,8}( *;.*)?",
                ],
                0..30,
            )
        ) {
            let _ = parse_inp(&lines.join("\n"));
        }

        #[test]
        fn mutated_bundled_text_never_panics(pos in 0usize..2000, byte in any::<u8>()) {
            let mut bytes = bundled::EIGHT_NODE_INP.as_bytes().to_vec();
            let i = pos % bytes.len();
            bytes[i] = byte;
            let _ = parse_inp_bytes(&bytes);
        }
    }
}
