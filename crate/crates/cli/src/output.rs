//! JSON documents written by the CLI.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use wtot::geometry::{ConvexPolygon, Point2};
use wtot::measure::Transform;
use wtot::solver::{IterationRecord, Mode, TransportSolution};
use wtot::{Error, Result};

/// Solution file. The first eight keys are the stable schema; the rest
/// carry what `render` needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolutionFile {
    pub mode: Mode,
    pub n_sites: usize,
    pub cost: f64,
    pub residual: f64,
    pub iterations: usize,
    pub heights: Vec<f64>,
    pub transform: Transform,
    pub trace: Vec<IterationRecord>,
    pub epsilon: f64,
    pub anchor: Point2,
    pub domain: ConvexPolygon,
    pub sites: Vec<Point2>,
    pub weights: Vec<f64>,
    pub cell_masses: Vec<f64>,
    pub cells: Vec<ConvexPolygon>,
    pub site_of_input: Vec<usize>,
}

impl SolutionFile {
    pub fn new(s: TransportSolution, domain: ConvexPolygon, epsilon: f64) -> Self {
        Self {
            mode: s.mode,
            n_sites: s.sites.len(),
            cost: s.cost,
            residual: s.residual,
            iterations: s.iterations,
            heights: s.heights,
            transform: s.transform,
            trace: s.trace,
            epsilon,
            anchor: s.anchor,
            domain,
            sites: s.sites,
            weights: s.weights,
            cell_masses: s.cell_masses,
            cells: s.cells,
            site_of_input: s.site_of_input,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub subcommand: &'static str,
    pub tool_version: &'static str,
    pub inputs: Value,
    pub config: Value,
    pub outputs: Vec<String>,
    pub summary: Value,
    pub notes: Vec<String>,
    /// Seconds; the only field that differs between identical runs.
    pub wall_time: f64,
}

pub struct Run {
    subcommand: &'static str,
    started: Instant,
    manifest_path: Option<PathBuf>,
    outputs: Vec<String>,
    notes: Vec<String>,
}

impl Run {
    pub fn start(subcommand: &'static str, manifest_path: Option<PathBuf>) -> Self {
        Self {
            subcommand,
            started: Instant::now(),
            manifest_path,
            outputs: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    /// Writes `value` as pretty JSON to `path`, or stdout.
    pub fn emit_json<T: Serialize>(&mut self, value: &T, path: Option<&Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(json_err)?;
        text.push('\n');
        self.emit_text(&text, path)
    }

    pub fn emit_text(&mut self, text: &str, path: Option<&Path>) -> Result<()> {
        match path {
            Some(p) => {
                std::fs::write(p, text)?;
                self.outputs.push(p.display().to_string());
            }
            None => {
                std::io::stdout().lock().write_all(text.as_bytes())?;
                self.outputs.push("-".into());
            }
        }
        Ok(())
    }

    pub fn record_output(&mut self, p: &Path) {
        self.outputs.push(p.display().to_string());
    }

    /// Writes the manifest to the explicit path, next to `out`, or to stderr.
    pub fn finish(self, out: Option<&Path>, inputs: Value, config: Value, summary: Value) -> Result<()> {
        let manifest = Manifest {
            subcommand: self.subcommand,
            tool_version: env!("CARGO_PKG_VERSION"),
            inputs,
            config,
            outputs: self.outputs,
            summary,
            notes: self.notes,
            wall_time: self.started.elapsed().as_secs_f64(),
        };
        let path = self.manifest_path.or_else(|| out.map(manifest_beside));
        let mut text = serde_json::to_string_pretty(&manifest).map_err(json_err)?;
        text.push('\n');
        match path {
            Some(p) => std::fs::write(p, text)?,
            None => std::io::stderr().lock().write_all(text.as_bytes())?,
        }
        Ok(())
    }
}

/// `dir/name.ext` → `dir/name.manifest.json`; directories get
/// `dir/manifest.json`.
pub fn manifest_beside(out: &Path) -> PathBuf {
    if out.is_dir() {
        return out.join("manifest.json");
    }
    sibling(out, "manifest.json")
}

pub fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}"))
}

pub fn json_err(e: serde_json::Error) -> Error {
    Error::Parse {
        context: "json".into(),
        message: e.to_string(),
    }
}

pub fn path_value(p: &Path) -> Value {
    Value::String(p.display().to_string())
}

/// Machine-readable error on stderr.
pub fn report_error(e: &Error) {
    let mut doc = serde_json::json!({
        "error": e.kind(),
        "message": e.to_string(),
    });
    if let Error::MaxIterationsExceeded { best, .. } = e {
        doc["best_residual"] = best.residual.into();
        doc["best_cost"] = best.cost.into();
    }
    let _ = writeln!(std::io::stderr().lock(), "{doc}");
}
