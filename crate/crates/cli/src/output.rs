use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::config::ScenarioConfig;

/// Output directory whose files all start with the same provenance line.
pub struct OutputDir {
    root: PathBuf,
    header: String,
    written: Vec<PathBuf>,
}

pub fn header_line(config_hash: &str, seed: u64) -> String {
    format!("# phasekin config_hash={config_hash} seed={seed}")
}

impl OutputDir {
    pub fn create(root: &Path, config: &ScenarioConfig) -> std::io::Result<Self> {
        fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            header: header_line(&config.hash(), config.seed()),
            written: Vec::new(),
        })
    }

    pub fn header(&self) -> &str {
        &self.header
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    /// Writes `name` with the header line followed by whatever `body` emits.
    pub fn text<F>(&mut self, name: &str, body: F) -> std::io::Result<()>
    where
        F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
    {
        let path = self.root.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        writeln!(w, "{}", self.header)?;
        body(&mut w)?;
        w.flush()?;
        self.written.push(path);
        Ok(())
    }

    /// JSON object with the header stored under `_header` as its first key.
    pub fn json(&mut self, name: &str, value: &Value) -> std::io::Result<()> {
        let mut obj = Map::new();
        obj.insert("_header".into(), Value::String(self.header.clone()));
        if let Value::Object(m) = value {
            for (k, v) in m {
                obj.insert(k.clone(), v.clone());
            }
        }
        let path = self.root.join(name);
        let mut text = serde_json::to_string_pretty(&Value::Object(obj)).expect("json serializes");
        text.push('\n');
        fs::write(&path, text)?;
        self.written.push(path);
        Ok(())
    }
}

/// File-name tag for a time value.
pub fn time_tag(t: f64) -> String {
    format!("t{t}")
}

/// JSON number, or `null` for non-finite values.
pub fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}
