//! Layering of configuration sources: built-in defaults, then the config
//! file, then `--set` assignments, then named flags. Later sources replace
//! whole values at the keys they name.

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

/// Sets a dotted `path` in `root`, creating intermediate objects.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        bail!("malformed config key `{path}`");
    }
    let mut node = root;
    for key in &keys[..keys.len() - 1] {
        if !node.is_object() {
            bail!("config key `{path}` descends into a non-object");
        }
        node = node
            .as_object_mut()
            .unwrap()
            .entry(key.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    match node {
        Value::Object(m) => {
            m.insert(keys[keys.len() - 1].to_string(), value);
            Ok(())
        }
        _ => bail!("config key `{path}` descends into a non-object"),
    }
}

/// Parses a `key=value` assignment; the value is JSON, or a bare string
/// when it does not parse as JSON.
pub fn parse_assignment(text: &str) -> Result<(String, Value)> {
    let (k, v) = text
        .split_once('=')
        .with_context(|| format!("expected key=value, got `{text}`"))?;
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

/// Builds a typed config from defaults, an optional file, `--set`
/// assignments and flag overrides, in increasing precedence.
pub fn layered<T: Serialize + DeserializeOwned + Default>(
    file: Option<&std::path::Path>,
    sets: &[String],
    flags: Vec<(&str, Value)>,
) -> Result<T> {
    let base: T = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing config {}", path.display()))?
        }
        None => T::default(),
    };
    // Round-tripping fills every key, so flags can address any leaf.
    let mut root = serde_json::to_value(base)?;
    for s in sets {
        let (k, v) = parse_assignment(s)?;
        set_path(&mut root, &k, v)?;
    }
    for (k, v) in flags {
        set_path(&mut root, k, v)?;
    }
    serde_json::from_value(root).context("config does not match the expected schema")
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn dotted_paths() {
        let mut a = json!({"oracle": {"http": {"base_url": "a", "attempts": 3}}});
        set_path(&mut a, "oracle.http.base_url", json!("b")).unwrap();
        set_path(&mut a, "new.leaf", json!(1)).unwrap();
        set_path(&mut a, "oracle.http", json!({"attempts": 1})).unwrap();
        assert_eq!(a["oracle"]["http"], json!({"attempts": 1}));
        set_path(&mut a, "oracle.http.base_url", json!("b")).unwrap();
        assert_eq!(a["oracle"]["http"], json!({"attempts": 1, "base_url": "b"}));
        assert_eq!(a["new"]["leaf"], json!(1));
        assert!(set_path(&mut a, "oracle.http.attempts.deeper", json!(1)).is_err());
        assert!(set_path(&mut a, "a..b", json!(1)).is_err());
    }

    #[test]
    fn assignments_fall_back_to_strings() {
        assert_eq!(parse_assignment("n=4").unwrap(), ("n".into(), json!(4)));
        assert_eq!(
            parse_assignment("prompt=a cave").unwrap(),
            ("prompt".into(), json!("a cave"))
        );
        assert!(parse_assignment("nothing").is_err());
    }
}
