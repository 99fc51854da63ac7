//! Run manifests and output-directory bookkeeping. Manifests carry the
//! tool version, the seed, derived quantities and a config echo. No
//! timestamps: reruns of the same invocation are byte-identical.

use std::path::{Path, PathBuf};

use crate::error::CliError;

pub struct Manifest {
    lines: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64) -> Self {
        let mut lines = Vec::new();
        lines.push(format!("tool = mcvorder {}", env!("CARGO_PKG_VERSION")));
        lines.push(format!("command = {command}"));
        lines.push(format!("seed = {seed}"));
        Self { lines }
    }

    pub fn kv(&mut self, key: &str, value: impl std::fmt::Display) {
        self.lines.push(format!("{key} = {value}"));
    }

    pub fn section(&mut self, name: &str) {
        self.lines.push(String::new());
        self.lines.push(format!("[{name}]"));
    }

    pub fn raw(&mut self, text: &str) {
        for line in text.lines() {
            self.lines.push(line.to_string());
        }
    }

    pub fn render(&self, outputs: &[String]) -> String {
        let mut text = self.lines.join("\n");
        text.push_str("\n\n[outputs]\n");
        for f in outputs {
            text.push_str(f);
            text.push('\n');
        }
        text
    }
}

/// Output directory that records every file it writes.
pub struct OutDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutDir {
    pub fn create(root: impl AsRef<Path>) -> Result<Self, CliError> {
        let root = root.as_ref().to_path_buf();
        std::fs::create_dir_all(&root)?;
        Ok(Self {
            root,
            files: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, content: &str) -> Result<(), CliError> {
        std::fs::write(self.root.join(name), content)?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn finish(mut self, manifest: Manifest) -> Result<(), CliError> {
        self.files.sort();
        let text = manifest.render(&self.files);
        std::fs::write(self.root.join("run.manifest"), text)?;
        Ok(())
    }

    pub fn path(&self) -> &Path {
        &self.root
    }
}
