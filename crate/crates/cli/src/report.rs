//! Pass/fail bookkeeping and the `summary.json` writer.

use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Map, Value};

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub value: Option<f64>,
    pub limit: Option<f64>,
    pub pass: bool,
}

impl Check {
    /// `value ≤ limit`
    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value: Some(value), limit: Some(limit), pass: value <= limit }
    }

    /// `value ≥ limit`
    pub fn at_least(name: &str, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value: Some(value), limit: Some(limit), pass: value >= limit }
    }

    pub fn flag(name: &str, pass: bool) -> Self {
        Self { name: name.into(), value: None, limit: None, pass }
    }

    fn to_json(&self) -> Value {
        json!({"name": self.name, "value": self.value, "limit": self.limit, "pass": self.pass})
    }
}

/// Outcome of one acceptance criterion.
#[derive(Debug, Clone)]
pub struct Criterion {
    pub id: u32,
    pub name: &'static str,
    pub checks: Vec<Check>,
}

impl Criterion {
    pub fn new(id: u32, name: &'static str) -> Self {
        Self { id, name, checks: Vec::new() }
    }

    pub fn push(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

#[derive(Debug)]
pub struct Summary {
    pub command: &'static str,
    pub criteria: Vec<Criterion>,
    pub values: Map<String, Value>,
    pub artifacts: Vec<String>,
    pub error: Option<String>,
}

impl Summary {
    pub fn new(command: &'static str) -> Self {
        Self { command, criteria: Vec::new(), values: Map::new(), artifacts: Vec::new(), error: None }
    }

    pub fn value(&mut self, key: &str, v: impl Into<Value>) {
        self.values.insert(key.into(), v.into());
    }

    pub fn pass(&self) -> bool {
        self.error.is_none() && self.criteria.iter().all(Criterion::pass)
    }

    pub fn violations(&self) -> Value {
        let mut out: Vec<Value> = self
            .criteria
            .iter()
            .flat_map(|c| {
                c.checks.iter().filter(|k| !k.pass).map(move |k| {
                    json!({"criterion": c.id, "name": c.name, "check": k.name, "value": k.value, "limit": k.limit})
                })
            })
            .collect();
        if let Some(e) = &self.error {
            out.push(json!({"criterion": null, "check": "run", "message": e}));
        }
        Value::Array(out)
    }

    pub fn to_json(&self) -> Value {
        let criteria: Vec<Value> = self
            .criteria
            .iter()
            .map(|c| {
                json!({
                    "id": c.id,
                    "name": c.name,
                    "pass": c.pass(),
                    "checks": c.checks.iter().map(Check::to_json).collect::<Vec<_>>(),
                })
            })
            .collect();
        json!({
            "command": self.command,
            "pass": self.pass(),
            "criteria": criteria,
            "values": Value::Object(self.values.clone()),
            "violations": self.violations(),
            "artifacts": self.artifacts,
        })
    }

    pub fn write(&self, dir: &Path) -> io::Result<()> {
        let mut f = io::BufWriter::new(std::fs::File::create(dir.join("summary.json"))?);
        write_json(&mut f, &self.to_json())?;
        f.flush()
    }
}

/// Pretty JSON with every float in 17 significant digits.
struct Sig17(serde_json::ser::PrettyFormatter<'static>);

impl serde_json::ser::Formatter for Sig17 {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        write!(w, "{v:.16e}")
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn write_json<W: Write>(w: W, v: &Value) -> io::Result<()> {
    let mut ser = serde_json::Serializer::with_formatter(w, Sig17(serde_json::ser::PrettyFormatter::new()));
    v.serialize(&mut ser).map_err(io::Error::other)
}

pub fn json_string(v: &Value) -> String {
    let mut buf = Vec::new();
    write_json(&mut buf, v).expect("write to memory");
    String::from_utf8(buf).expect("JSON is UTF-8")
}
