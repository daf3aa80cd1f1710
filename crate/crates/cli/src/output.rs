//! CSV artifacts. Each file opens with a comment block holding the command
//! and the fully resolved config, and is named after a hash of both, so
//! reruns of the same job overwrite the same file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

/// Identity of one job: the command line that matters plus the config.
pub struct Job<'a> {
    pub command: String,
    pub config: &'a RunConfig,
}

impl Job<'_> {
    fn resolved(&self) -> String {
        format!("command = {:?}\n{}", self.command, self.config.to_toml())
    }

    /// First 12 hex digits of the SHA-256 of the resolved job.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.resolved().as_bytes());
        format!("{digest:x}")[..12].to_string()
    }

    pub fn path(&self, stem: &str) -> PathBuf {
        self.config.output.dir.join(format!("{stem}-{}.csv", self.hash()))
    }

    /// Provenance block: one `# ` line per line of the resolved job.
    pub fn header(&self) -> String {
        let mut out = format!("# glwb-ltc {}\n", env!("CARGO_PKG_VERSION"));
        for line in self.resolved().lines() {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        out
    }

    /// Writes the header followed by `header_row` and `rows`.
    pub fn write_csv(&self, stem: &str, header_row: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
        let mut body = Vec::new();
        {
            let mut w = csv::Writer::from_writer(&mut body);
            w.write_record(header_row)?;
            for r in rows {
                w.write_record(r)?;
            }
            w.flush()?;
        }
        self.write_raw(stem, &body)
    }

    /// Writes the header followed by pre-rendered CSV text.
    pub fn write_raw(&self, stem: &str, body: &[u8]) -> Result<PathBuf> {
        let path = self.path(stem);
        ensure_dir(&self.config.output.dir)?;
        let mut f = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        f.write_all(self.header().as_bytes())?;
        f.write_all(body)?;
        Ok(path)
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

/// Shortest round-trip rendering, stable across runs.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}
