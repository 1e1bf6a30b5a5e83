use serde_json::Value;

use super::DocError;

/// Applies `key.path=value` to a JSON tree. The value is read as JSON when it
/// parses, otherwise as a string. Numeric segments index arrays; missing
/// object keys are created.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<(), DocError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| DocError::Override(format!("`{spec}`: expected key=value")))?;
    let path = path.trim();
    if path.is_empty() {
        return Err(DocError::Override(format!("`{spec}`: empty key")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));

    let mut node = root;
    let segments: Vec<&str> = path.split('.').collect();
    for (depth, seg) in segments.iter().enumerate() {
        let last = depth + 1 == segments.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(seg.to_string(), value);
                    return Ok(());
                }
                map.entry(seg.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = seg
                    .parse()
                    .map_err(|_| DocError::Override(format!("`{path}`: `{seg}` is not an array index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| DocError::Override(format!("`{path}`: index {idx} out of range ({len})")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => {
                return Err(DocError::Override(format!(
                    "`{path}`: `{}` is not an object or array",
                    segments[..depth].join(".")
                )))
            }
        };
    }
    unreachable!("loop returns on the last segment")
}

/// Applies overrides in order; later ones win.
pub fn apply_overrides<S: AsRef<str>>(root: &mut Value, specs: &[S]) -> Result<(), DocError> {
    specs.iter().try_for_each(|s| apply_override(root, s.as_ref()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn dotted_paths() {
        let mut v = json!({"schedule": {"k_max": 5}, "players": [{"c": [1.0]}]});
        apply_overrides(&mut v, &["schedule.k_max=0", "schedule.tau0=2.5", "players.0.c=[3]", "name=abc"]).unwrap();
        assert_eq!(v["schedule"]["k_max"], json!(0));
        assert_eq!(v["schedule"]["tau0"], json!(2.5));
        assert_eq!(v["players"][0]["c"], json!([3]));
        assert_eq!(v["name"], json!("abc"));
    }

    #[test]
    fn last_writer_wins() {
        let mut v = json!({});
        apply_overrides(&mut v, &["solver.lambda=0.5", "solver.lambda=1.5"]).unwrap();
        assert_eq!(v["solver"]["lambda"], json!(1.5));
    }

    #[test]
    fn bad_overrides() {
        let mut v = json!({"players": [1]});
        assert!(apply_override(&mut v, "novalue").is_err());
        assert!(apply_override(&mut v, "players.x=1").is_err());
        assert!(apply_override(&mut v, "players.3=1").is_err());
        assert!(apply_override(&mut v, "players.0.c=1").is_err());
    }
}
