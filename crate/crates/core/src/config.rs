//! Experiment specifications and their on-disk format.
//!
//! The config format is a deliberately small TOML-compatible subset:
//! top-level `key = value` pairs (strings, integers, floats, booleans),
//! one `[params]` table, `#` comments. It round-trips losslessly.

use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub enum ParamValue {
    Str(String),
    Int(i64),
    Float(f64),
    Bool(bool),
}

impl ParamValue {
    pub fn type_name(&self) -> &'static str {
        match self {
            ParamValue::Str(_) => "string",
            ParamValue::Int(_) => "integer",
            ParamValue::Float(_) => "float",
            ParamValue::Bool(_) => "boolean",
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Float(v) => Some(*v),
            ParamValue::Int(v) => Some(*v as f64),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            ParamValue::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            ParamValue::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            ParamValue::Bool(b) => Some(*b),
            _ => None,
        }
    }

    fn render(&self) -> String {
        match self {
            ParamValue::Str(s) => quote(s),
            ParamValue::Int(v) => v.to_string(),
            ParamValue::Float(v) => render_float(*v),
            ParamValue::Bool(b) => b.to_string(),
        }
    }
}

/// Shortest float representation that still parses back as a float.
fn render_float(v: f64) -> String {
    let mut s = format!("{v}");
    if !s.contains('.') && !s.contains('e') && !s.contains("inf") && !s.contains("NaN") {
        s.push_str(".0");
    }
    s
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            _ => out.push(c),
        }
    }
    out.push('"');
    out
}

fn unquote(s: &str, line_no: usize) -> Result<String> {
    let inner = s
        .strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .ok_or_else(|| Error::Config(format!("line {line_no}: unterminated string")))?;
    let mut out = String::new();
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('"') => out.push('"'),
                Some('\\') => out.push('\\'),
                Some('n') => out.push('\n'),
                other => {
                    return Err(Error::Config(format!(
                        "line {line_no}: bad escape \\{}",
                        other.map(String::from).unwrap_or_default()
                    )))
                }
            }
        } else {
            out.push(c);
        }
    }
    Ok(out)
}

fn parse_value(raw: &str, line_no: usize) -> Result<ParamValue> {
    let raw = raw.trim();
    if raw.starts_with('"') {
        return Ok(ParamValue::Str(unquote(raw, line_no)?));
    }
    match raw {
        "true" => return Ok(ParamValue::Bool(true)),
        "false" => return Ok(ParamValue::Bool(false)),
        _ => {}
    }
    if raw.contains('.') || raw.contains('e') || raw.contains('E') {
        if let Ok(v) = raw.parse::<f64>() {
            return Ok(ParamValue::Float(v));
        }
    } else if let Ok(v) = raw.parse::<i64>() {
        return Ok(ParamValue::Int(v));
    }
    Err(Error::Config(format!(
        "line {line_no}: cannot parse value `{raw}`"
    )))
}

/// A full experiment description: command, seed, output directory, and a
/// typed parameter table.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentSpec {
    pub command: String,
    pub seed: Option<u64>,
    pub out: Option<String>,
    pub params: BTreeMap<String, ParamValue>,
}

impl ExperimentSpec {
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command = {}", quote(&self.command));
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "seed = {seed}");
        }
        if let Some(out) = &self.out {
            let _ = writeln!(s, "out = {}", quote(out));
        }
        if !self.params.is_empty() {
            let _ = writeln!(s, "\n[params]");
            for (k, v) in &self.params {
                let _ = writeln!(s, "{k} = {}", v.render());
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = ExperimentSpec::default();
        let mut in_params = false;
        let mut saw_command = false;
        for (i, raw_line) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = strip_comment(raw_line).trim().to_string();
            if line.is_empty() {
                continue;
            }
            if let Some(section) = line.strip_prefix('[') {
                let name = section
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Config(format!("line {line_no}: bad section header")))?;
                if name != "params" {
                    return Err(Error::Config(format!(
                        "line {line_no}: unknown section [{name}] (only [params] exists)"
                    )));
                }
                in_params = true;
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {line_no}: expected key = value")))?;
            let key = key.trim();
            let value = parse_value(value, line_no)?;
            if in_params {
                spec.params.insert(key.to_string(), value);
                continue;
            }
            match key {
                "command" => {
                    spec.command = value
                        .as_str()
                        .ok_or_else(|| {
                            Error::Config(format!("line {line_no}: command must be a string"))
                        })?
                        .to_string();
                    saw_command = true;
                }
                "seed" => {
                    let v = value.as_i64().ok_or_else(|| {
                        Error::Config(format!("line {line_no}: seed must be an integer"))
                    })?;
                    if v < 0 {
                        return Err(Error::Config(format!("line {line_no}: seed must be >= 0")));
                    }
                    spec.seed = Some(v as u64);
                }
                "out" => {
                    spec.out = Some(
                        value
                            .as_str()
                            .ok_or_else(|| {
                                Error::Config(format!("line {line_no}: out must be a string"))
                            })?
                            .to_string(),
                    );
                }
                other => {
                    return Err(Error::Config(format!(
                        "line {line_no}: unknown top-level key `{other}`"
                    )))
                }
            }
        }
        if !saw_command {
            return Err(Error::Config("missing required key `command`".into()));
        }
        Ok(spec)
    }
}

fn strip_comment(line: &str) -> &str {
    // '#' starts a comment unless inside a quoted string.
    let mut in_str = false;
    let mut escaped = false;
    for (idx, c) in line.char_indices() {
        match c {
            '\\' if in_str => escaped = !escaped,
            '"' if !escaped => in_str = !in_str,
            '#' if !in_str => return &line[..idx],
            _ => escaped = false,
        }
    }
    line
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_basic() {
        let mut spec = ExperimentSpec {
            command: "bias-scan".into(),
            seed: Some(42),
            out: Some("results".into()),
            params: BTreeMap::new(),
        };
        spec.params.insert("eta".into(), ParamValue::Float(0.01));
        spec.params
            .insert("k_list".into(), ParamValue::Str("16,32,64".into()));
        spec.params.insert("n".into(), ParamValue::Int(1_000_000));
        spec.params
            .insert("antithetic".into(), ParamValue::Bool(true));
        let text = spec.serialize();
        let back = ExperimentSpec::parse(&text).unwrap();
        assert_eq!(spec, back);
    }

    #[test]
    fn floats_stay_floats() {
        let mut spec = ExperimentSpec {
            command: "x".into(),
            ..Default::default()
        };
        spec.params.insert("a".into(), ParamValue::Float(2.0));
        spec.params.insert("b".into(), ParamValue::Float(1e-12));
        let back = ExperimentSpec::parse(&spec.serialize()).unwrap();
        assert_eq!(back.params["a"], ParamValue::Float(2.0));
        assert_eq!(back.params["b"], ParamValue::Float(1e-12));
    }

    #[test]
    fn comments_and_errors() {
        let text =
            "command = \"density\" # the density experiment\nseed = 7\n\n[params]\nbins = 200\n";
        let spec = ExperimentSpec::parse(text).unwrap();
        assert_eq!(spec.command, "density");
        assert_eq!(spec.seed, Some(7));
        assert_eq!(spec.params["bins"], ParamValue::Int(200));

        assert!(
            ExperimentSpec::parse("seed = 1\n").is_err(),
            "missing command"
        );
        assert!(ExperimentSpec::parse("command = \"x\"\nbogus = 1\n").is_err());
        assert!(ExperimentSpec::parse("command = \"x\"\n[other]\n").is_err());
        assert!(ExperimentSpec::parse("command = \"x\"\nseed = \"y\"\n").is_err());
    }

    #[test]
    fn string_escapes() {
        let mut spec = ExperimentSpec {
            command: "x".into(),
            ..Default::default()
        };
        spec.params.insert(
            "label".into(),
            ParamValue::Str("a \"quoted\" \\ backslash\nnewline".into()),
        );
        let back = ExperimentSpec::parse(&spec.serialize()).unwrap();
        assert_eq!(spec, back);
    }
}
