//! Structured logging: one JSON object per event on stderr. Log lines are
//! the only place the tool emits wall-clock timestamps; everything written
//! into the workspace stays deterministic.

use serde_json::Value;

pub fn event(name: &str, fields: Value) {
    let mut map = serde_json::Map::new();
    map.insert(
        "ts".into(),
        Value::String(chrono::Utc::now().format("%Y-%m-%dT%H:%M:%SZ").to_string()),
    );
    map.insert("event".into(), Value::String(name.to_string()));
    if let Value::Object(extra) = fields {
        map.extend(extra);
    }
    eprintln!("{}", Value::Object(map));
}
