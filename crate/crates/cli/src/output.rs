use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::config::sha256_hex;

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(sha256_hex(
        &std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?,
    ))
}

/// Appends lines to `<dir>/report.txt`.
pub struct Report<'a> {
    dir: &'a Path,
    lines: Vec<String>,
}

impl<'a> Report<'a> {
    pub fn new(dir: &'a Path, command: &str, config_hash: &str, seed: Option<u64>) -> Self {
        let seed = seed.map_or_else(|| "-".to_string(), |s| s.to_string());
        Report {
            dir,
            lines: vec![format!("[{command}] config_sha256={config_hash} seed={seed}")],
        }
    }

    pub fn line(&mut self, text: impl Into<String>) {
        let text = text.into();
        println!("{text}");
        self.lines.push(format!("  {text}"));
    }

    pub fn finish(self) -> Result<()> {
        std::fs::create_dir_all(self.dir)?;
        let path = self.dir.join("report.txt");
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .with_context(|| format!("cannot open {}", path.display()))?;
        for l in &self.lines {
            writeln!(f, "{l}")?;
        }
        Ok(())
    }
}
