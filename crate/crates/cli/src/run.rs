//! Input reading, output writing and the run manifest.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nerstress::corpus::{parse_conll, Corpus, ParseMode};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Settings;
use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedSource {
    Flag,
    Config,
    Generated,
}

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Written last into every output directory.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed_source: Option<SeedSource>,
    pub config: Settings,
    pub config_digest: String,
    pub inputs: BTreeMap<String, FileDigest>,
    pub outputs: Vec<FileDigest>,
}

/// State shared by one subcommand invocation.
pub struct Run {
    pub command: String,
    pub settings: Settings,
    seed_from_flag: bool,
    seed: Option<(u64, SeedSource)>,
    inputs: BTreeMap<String, FileDigest>,
    outputs: Vec<FileDigest>,
    out_dir: Option<PathBuf>,
}

impl Run {
    pub fn new(command: impl Into<String>, settings: Settings, seed_from_flag: bool, out_dir: Option<PathBuf>) -> Self {
        Run {
            command: command.into(),
            settings,
            seed_from_flag,
            seed: None,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            out_dir,
        }
    }

    /// The run seed: from the flag or config file, otherwise freshly drawn.
    /// The resolved value is written back into the settings.
    pub fn seed(&mut self) -> u64 {
        if let Some((seed, _)) = self.seed {
            return seed;
        }
        let (seed, source) = match self.settings.seed {
            Some(s) if self.seed_from_flag => (s, SeedSource::Flag),
            Some(s) => (s, SeedSource::Config),
            None => {
                let s = rand::random::<u64>();
                log::warn!("no seed given; generated seed {s} (recorded in the manifest)");
                (s, SeedSource::Generated)
            }
        };
        self.settings.seed = Some(seed);
        self.seed = Some((seed, source));
        seed
    }

    /// Reads a file, or standard input for `-`, recording its digest.
    pub fn read_input(&mut self, role: &str, path: &Path) -> CliResult<String> {
        let text = if path == Path::new("-") {
            let mut buf = String::new();
            std::io::stdin()
                .read_to_string(&mut buf)
                .map_err(|e| CliError::input(format!("cannot read {role} from standard input: {e}")))?;
            buf
        } else {
            std::fs::read_to_string(path).map_err(|e| CliError::input(format!("cannot read {role} {}: {e}", path.display())))?
        };
        self.inputs.insert(
            role.to_string(),
            FileDigest { path: path.display().to_string(), sha256: sha256_hex(text.as_bytes()) },
        );
        Ok(text)
    }

    pub fn read_corpus(&mut self, role: &str, path: &Path) -> CliResult<Corpus> {
        let text = self.read_input(role, path)?;
        let name = path.file_stem().and_then(|s| s.to_str()).filter(|_| path != Path::new("-")).unwrap_or("stdin");
        parse_conll(&text, ParseMode::Strict)
            .map(|c| c.with_split_name(name))
            .map_err(|e| CliError::input(format!("{role} {}: {e}", path.display())))
    }

    pub fn out_dir(&self) -> Option<&Path> {
        self.out_dir.as_deref()
    }

    /// Writes `name` into the output directory, if there is one.
    pub fn write_output(&mut self, name: &str, content: &str) -> CliResult<()> {
        let Some(dir) = self.out_dir.clone() else {
            return Ok(());
        };
        write_file(&dir.join(name), content)?;
        self.outputs.push(FileDigest { path: name.to_string(), sha256: sha256_hex(content.as_bytes()) });
        Ok(())
    }

    pub fn manifest(&self) -> Manifest {
        let config_json = serde_json::to_string(&self.settings).expect("settings serialize");
        Manifest {
            tool: "nerstress",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command.clone(),
            seed: self.seed.map(|(s, _)| s),
            seed_source: self.seed.map(|(_, src)| src),
            config: self.settings.clone(),
            config_digest: sha256_hex(config_json.as_bytes()),
            inputs: self.inputs.clone(),
            outputs: self.outputs.clone(),
        }
    }

    /// Writes the manifest into the output directory, if there is one.
    pub fn finish(self) -> CliResult<()> {
        if let Some(dir) = &self.out_dir {
            let mut text = serde_json::to_string_pretty(&self.manifest()).expect("manifest serializes");
            text.push('\n');
            write_file(&dir.join(MANIFEST_FILE), &text)?;
        }
        Ok(())
    }
}

pub fn write_file(path: &Path, content: &str) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::input(format!("cannot create {}: {e}", parent.display())))?;
    }
    std::fs::write(path, content).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
}

pub fn write_stdout(content: &str) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(content.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| CliError::input(format!("cannot write to standard output: {e}")))
}

pub fn to_json_pretty<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    text
}
