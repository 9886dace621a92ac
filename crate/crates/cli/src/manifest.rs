//! Run manifests: enough to replay a command with the same inputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rdao::dataset::parse_key_values;
use rdao::{Error, Result};

pub const RUN_MANIFEST_FILE: &str = "run_manifest.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name, in order.
    pub args: Vec<String>,
    /// Resolved settings, including defaults the user did not spell out.
    pub config: BTreeMap<String, String>,
    pub dataset_checksum: Option<String>,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub wall_time: f64,
}

impl RunManifest {
    pub fn new(command: &str, args: Vec<String>) -> Self {
        Self {
            command: command.to_string(),
            args,
            config: BTreeMap::new(),
            dataset_checksum: None,
            seed: None,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time: 0.0,
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.config.insert(key.to_string(), value.to_string());
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command = {}", self.command);
        let _ = writeln!(s, "tool_version = {}", self.tool_version);
        if let Some(c) = &self.dataset_checksum {
            let _ = writeln!(s, "dataset_checksum = {c}");
        }
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "seed = {seed}");
        }
        let _ = writeln!(s, "wall_time = {:.6}", self.wall_time);
        let _ = writeln!(s, "args = {}", self.args.len());
        for (n, a) in self.args.iter().enumerate() {
            let _ = writeln!(s, "arg.{n} = {a}");
        }
        for (k, v) in &self.config {
            let _ = writeln!(s, "config.{k} = {v}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut map = parse_key_values(text)?;
        let mut take = |k: &str| map.remove(k).ok_or_else(|| Error::Format(format!("run manifest is missing '{k}'")));
        let command = take("command")?;
        let tool_version = take("tool_version")?;
        let wall_time = take("wall_time")?.parse().map_err(|_| Error::Format("run manifest 'wall_time' is not a number".into()))?;
        let count: usize = take("args")?.parse().map_err(|_| Error::Format("run manifest 'args' is not a count".into()))?;
        let args = (0..count).map(|n| take(&format!("arg.{n}"))).collect::<Result<Vec<_>>>()?;
        let dataset_checksum = map.remove("dataset_checksum");
        let seed = match map.remove("seed") {
            Some(s) => Some(s.parse().map_err(|_| Error::Format("run manifest 'seed' is not an integer".into()))?),
            None => None,
        };
        let config = map.into_iter().filter_map(|(k, v)| k.strip_prefix("config.").map(|k| (k.to_string(), v))).collect();
        Ok(Self { command, args, config, dataset_checksum, seed, tool_version, wall_time })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(RUN_MANIFEST_FILE), self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_text(&text)
    }
}
