//! JSON-lines event log. Every line is an object with at least `t`
//! (simulated ms) and `kind`; node-scoped events also carry `node`.

use serde_json::{Map, Value};

#[derive(Clone, Debug, Default)]
pub struct EventLog {
    lines: Vec<String>,
}

impl EventLog {
    pub fn record(&mut self, t: u64, node: Option<usize>, kind: &str, fields: Value) {
        let mut obj = match fields {
            Value::Object(m) => m,
            Value::Null => Map::new(),
            other => {
                let mut m = Map::new();
                m.insert("value".into(), other);
                m
            }
        };
        obj.insert("t".into(), t.into());
        obj.insert("kind".into(), kind.into());
        if let Some(n) = node {
            obj.insert("node".into(), n.into());
        }
        self.lines.push(Value::Object(obj).to_string());
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::with_capacity(self.lines.iter().map(|l| l.len() + 1).sum());
        for l in &self.lines {
            s.push_str(l);
            s.push('\n');
        }
        s
    }
}

/// Parses a JSON-lines log back into values.
pub fn parse_jsonl(text: &str) -> Result<Vec<Value>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
