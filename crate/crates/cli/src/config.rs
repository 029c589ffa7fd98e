use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

/// Recursively overlays `top` onto `base`; objects merge key by key and
/// everything else is replaced.
pub fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Flag overrides addressed by dotted paths such as `covid.fit.lr`.
#[derive(Default)]
pub struct Overrides(Value);

impl Overrides {
    pub fn set<T: Serialize>(&mut self, path: &str, value: Option<T>) -> &mut Self {
        let Some(value) = value else {
            return self;
        };
        let mut node = serde_json::to_value(value).expect("serializable flag");
        for key in path.rsplit('.') {
            let mut m = Map::new();
            m.insert(key.to_string(), node);
            node = Value::Object(m);
        }
        merge(&mut self.0, node);
        self
    }
}

/// Defaults, then the JSON config file, then flags.
pub fn resolve<T>(defaults: &T, file: Option<&Path>, flags: Overrides) -> Result<T, CliError>
where
    T: Serialize + DeserializeOwned,
{
    let mut value = serde_json::to_value(defaults).expect("serializable config");
    if let Some(path) = file {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let parsed: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        if !parsed.is_object() {
            return Err(CliError::Data(format!("{}: expected a JSON object", path.display())));
        }
        merge(&mut value, parsed);
    }
    if !flags.0.is_null() {
        merge(&mut value, flags.0);
    }
    serde_json::from_value(value).map_err(|e| CliError::Usage(format!("invalid configuration: {e}")))
}

pub fn write_resolved<T: Serialize>(dir: &Path, config: &T) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let text = serde_json::to_string_pretty(config).expect("serializable config") + "\n";
    fs::write(dir.join("resolved_config.json"), text)?;
    Ok(())
}
