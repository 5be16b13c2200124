//! Configuration files, run manifests and result files.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod svg;
pub mod table;

use std::path::{Path, PathBuf};

use serde::Serialize;

pub use config::*;
pub use manifest::{sha256_hex, RunManifest, VERSION};
pub use svg::{write_svg, Histogram, LinePlot, Series};
pub use table::{write_jsonl, Cell, Table};

use crate::error::{Error, Result};

/// Writes the files of one run into a single directory, skipping formats
/// the configuration did not ask for.
#[derive(Debug)]
pub struct Emitter {
    dir: PathBuf,
    output: OutputConfig,
    written: Vec<PathBuf>,
}

impl Emitter {
    pub fn new(dir: &Path, output: OutputConfig) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Emitter { dir: dir.to_path_buf(), output, written: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    /// Always written: the resolved configuration and the manifest.
    pub fn run_files(&mut self, resolved: &str, manifest: &RunManifest) -> Result<()> {
        let path = self.dir.join("config.resolved.toml");
        std::fs::write(&path, resolved).map_err(|e| Error::io(&path, e))?;
        self.written.push(path);
        let path = self.dir.join("manifest.json");
        manifest.write(&path)?;
        self.written.push(path);
        Ok(())
    }

    pub fn csv(&mut self, name: &str, table: &Table) -> Result<()> {
        if self.output.wants(Format::Csv) {
            let path = self.dir.join(format!("{name}.csv"));
            table.write_csv(&path)?;
            self.written.push(path);
        }
        Ok(())
    }

    pub fn jsonl<T: Serialize>(&mut self, name: &str, items: &[T]) -> Result<()> {
        if self.output.wants(Format::Jsonl) {
            let path = self.dir.join(format!("{name}.jsonl"));
            write_jsonl(&path, items)?;
            self.written.push(path);
        }
        Ok(())
    }

    pub fn line_plot(&mut self, name: &str, plot: &LinePlot) -> Result<()> {
        self.svg(name, || plot.render())
    }

    pub fn histogram(&mut self, name: &str, plot: &Histogram) -> Result<()> {
        self.svg(name, || plot.render())
    }

    fn svg(&mut self, name: &str, render: impl FnOnce() -> Result<String>) -> Result<()> {
        if self.output.wants(Format::Svg) {
            let path = self.dir.join(format!("{name}.svg"));
            write_svg(&path, &render()?)?;
            self.written.push(path);
        }
        Ok(())
    }
}
