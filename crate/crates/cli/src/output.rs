use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use advtrade::data::GENERATOR_ID;
use serde::Serialize;
use serde_json::{json, Value};

/// Write `contents` to `dir/name` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, contents: &[u8]) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, &target)?;
    Ok(target)
}

/// The only time-dependent field in any artifact.
pub const TIMESTAMP_KEY: &str = "generated_at_unix";

pub fn metadata(command: &str, config: &BTreeMap<String, String>) -> Value {
    let now = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    json!({
        "tool": "advtrade",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "generator": GENERATOR_ID,
        TIMESTAMP_KEY: now,
        "config": config,
    })
}

/// `{"metadata": ..., <body fields>}` as pretty JSON with a trailing newline.
pub fn document<T: Serialize>(meta: Value, body: &T) -> serde_json::Result<String> {
    let mut map = serde_json::Map::new();
    map.insert("metadata".into(), meta);
    match serde_json::to_value(body)? {
        Value::Object(fields) => map.extend(fields),
        other => {
            map.insert("result".into(), other);
        }
    }
    let mut s = serde_json::to_string_pretty(&Value::Object(map))?;
    s.push('\n');
    Ok(s)
}
