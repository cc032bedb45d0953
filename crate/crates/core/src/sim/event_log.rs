use serde::Serialize;
use serde_json::{json, Value};

use super::clock::Tick;

/// Line-delimited JSON log of protocol events: one object per line with
/// `tick`, `node`, `event` and event-specific fields.
#[derive(Debug, Default, Clone)]
pub struct EventLog {
    buf: Vec<u8>,
    lines: usize,
    enabled: bool,
}

impl EventLog {
    pub fn new(enabled: bool) -> Self {
        EventLog {
            buf: Vec::new(),
            lines: 0,
            enabled,
        }
    }

    pub fn record<D: Serialize>(&mut self, tick: Tick, node: impl ToString, event: &str, detail: D) {
        if !self.enabled {
            return;
        }
        let mut obj = json!({ "tick": tick, "node": node.to_string(), "event": event });
        if let (Value::Object(map), Ok(Value::Object(extra))) =
            (&mut obj, serde_json::to_value(detail))
        {
            map.extend(extra);
        }
        serde_json::to_writer(&mut self.buf, &obj).expect("json to memory");
        self.buf.push(b'\n');
        self.lines += 1;
    }

    pub fn bytes(&self) -> &[u8] {
        &self.buf
    }

    pub fn lines(&self) -> usize {
        self.lines
    }
}
