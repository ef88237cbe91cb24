//! Trace directories: `manifest.json` plus `usage.csv`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{PatternKind, UsageSeries, WorkloadConfig, WorkloadTrace};
use crate::domain::{ApplicationSpec, ComponentId, ResourceVector};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const USAGE_FILE: &str = "usage.csv";
const USAGE_HEADER: &str = "component_id,tick,cpus,mem_mb";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TraceIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: malformed manifest: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}:{line}: {message}")]
    Usage { path: PathBuf, line: usize, message: String },
    #[error("inconsistent trace: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format_version: u32,
    config: WorkloadConfig,
    applications: Vec<ApplicationSpec>,
    series: Vec<SeriesEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SeriesEntry {
    component_id: ComponentId,
    pattern: PatternKind,
    ticks: usize,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> TraceIoError + '_ {
    move |source| TraceIoError::Io { path: path.to_path_buf(), source }
}

/// Writes `trace` as a directory at `dir`, replacing any previous trace there.
///
/// The files are assembled in a sibling temporary directory which is renamed
/// into place, so readers never observe a half-written trace.
pub fn write_trace(trace: &WorkloadTrace, dir: &Path) -> Result<(), TraceIoError> {
    let parent = match dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent).map_err(io_err(&parent))?;
    let staging = tempfile::Builder::new().prefix(".trace-").tempdir_in(&parent).map_err(io_err(&parent))?;

    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        config: trace.config.clone(),
        applications: trace.applications.clone(),
        series: trace
            .usage
            .values()
            .map(|s| SeriesEntry { component_id: s.component_id, pattern: s.pattern, ticks: s.samples.len() })
            .collect(),
    };
    let manifest_path = staging.path().join(MANIFEST_FILE);
    let mut json = serde_json::to_vec_pretty(&manifest)
        .map_err(|source| TraceIoError::Manifest { path: manifest_path.clone(), source })?;
    json.push(b'\n');
    fs::write(&manifest_path, json).map_err(io_err(&manifest_path))?;

    let usage_path = staging.path().join(USAGE_FILE);
    let file = fs::File::create(&usage_path).map_err(io_err(&usage_path))?;
    let mut out = BufWriter::new(file);
    let write_rows = |out: &mut BufWriter<fs::File>| -> io::Result<()> {
        writeln!(out, "{USAGE_HEADER}")?;
        for series in trace.usage.values() {
            for (tick, s) in series.samples.iter().enumerate() {
                writeln!(out, "{},{},{},{}", series.component_id.0, tick, s.cpus, s.memory)?;
            }
        }
        out.flush()
    };
    write_rows(&mut out).map_err(io_err(&usage_path))?;
    drop(out);

    if dir.exists() {
        fs::remove_dir_all(dir).map_err(io_err(dir))?;
    }
    let staged = staging.keep();
    fs::rename(&staged, dir).map_err(|e| {
        let _ = fs::remove_dir_all(&staged);
        io_err(dir)(e)
    })?;
    Ok(())
}

/// Reads a trace directory written by [`write_trace`].
pub fn load_trace(dir: &Path) -> Result<WorkloadTrace, TraceIoError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let raw = fs::read(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: Manifest = serde_json::from_slice(&raw)
        .map_err(|source| TraceIoError::Manifest { path: manifest_path.clone(), source })?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(TraceIoError::Inconsistent(format!("unsupported format version {}", manifest.format_version)));
    }

    let usage_path = dir.join(USAGE_FILE);
    let text = fs::read_to_string(&usage_path).map_err(io_err(&usage_path))?;
    let usage_err = |line: usize, message: String| TraceIoError::Usage { path: usage_path.clone(), line, message };

    let mut rows: BTreeMap<ComponentId, Vec<ResourceVector>> = BTreeMap::new();
    let mut saw_header = false;
    let line_count = text.lines().count();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        // Every row written is newline-terminated; a missing final newline
        // means the file was cut mid-row even if the prefix parses.
        if lineno == line_count && !text.ends_with('\n') {
            return Err(usage_err(lineno, "truncated row (missing newline)".into()));
        }
        if !saw_header {
            if line != USAGE_HEADER {
                return Err(usage_err(lineno, format!("expected header `{USAGE_HEADER}`")));
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(usage_err(lineno, format!("expected 4 fields, found {}", fields.len())));
        }
        let id: u32 = fields[0].parse().map_err(|e| usage_err(lineno, format!("component_id: {e}")))?;
        let tick: usize = fields[1].parse().map_err(|e| usage_err(lineno, format!("tick: {e}")))?;
        let cpus: f64 = fields[2].parse().map_err(|e| usage_err(lineno, format!("cpus: {e}")))?;
        let memory: f64 = fields[3].parse().map_err(|e| usage_err(lineno, format!("mem_mb: {e}")))?;
        let sample = ResourceVector::new(cpus, memory).map_err(|e| usage_err(lineno, e.to_string()))?;
        let series = rows.entry(ComponentId(id)).or_default();
        if series.len() != tick {
            return Err(usage_err(lineno, format!("component {id}: expected tick {}, found {tick}", series.len())));
        }
        series.push(sample);
    }
    if !saw_header {
        return Err(usage_err(1, "missing header".into()));
    }

    let mut usage = BTreeMap::new();
    for entry in &manifest.series {
        let samples = rows.remove(&entry.component_id).unwrap_or_default();
        if samples.len() != entry.ticks {
            return Err(TraceIoError::Inconsistent(format!(
                "{}: manifest declares {} ticks, usage file has {}",
                entry.component_id,
                entry.ticks,
                samples.len()
            )));
        }
        usage.insert(
            entry.component_id,
            UsageSeries { component_id: entry.component_id, pattern: entry.pattern, samples },
        );
    }
    if let Some(id) = rows.keys().next() {
        return Err(TraceIoError::Inconsistent(format!("usage rows for {id} not declared in the manifest")));
    }

    let trace = WorkloadTrace { config: manifest.config, applications: manifest.applications, usage };
    trace.validate().map_err(TraceIoError::Inconsistent)?;
    Ok(trace)
}
