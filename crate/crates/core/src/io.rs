//! On-disk formats.
//!
//! A dataset is a directory holding `dataset.json` (field strength and the
//! ordered list of set names) and one sub-directory per spectrum set. Each set
//! directory holds one `offset_ppm,z` CSV per B1 amplitude plus `meta.json`
//! (B1 values, file names, optional labels). Synthetic datasets also carry
//! `manifest.json` with the generating spec and per-phantom labels and seeds.
//! Floats in CSVs are written with 17 significant digits, so they round-trip.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CestError, Result};
use crate::models::{JacobianMode, ModelKind};
use crate::neural::FoldResult;
use crate::solvers::{FitResult, Termination};
use crate::spectrum::{FieldContext, Spectrum, SpectrumSet};
use crate::synth::{PhantomRecord, PhantomSpec, SynthDataset};

pub const CSV_HEADER: &str = "offset_ppm,z";
pub const DATASET_FILE: &str = "dataset.json";
pub const SET_META_FILE: &str = "meta.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DATASET_FORMAT: u32 = 1;

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CestError::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| CestError::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CestError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_file(path)?).map_err(|e| CestError::parse(path, e.to_string()))
}

pub fn spectrum_to_csv(s: &Spectrum) -> String {
    let mut out = String::with_capacity(48 * (s.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for (o, z) in s.offsets_ppm().iter().zip(s.z()) {
        out.push_str(&format!("{o:.16e},{z:.16e}\n"));
    }
    out
}

pub fn spectrum_from_csv(text: &str, b1: f64, path: &Path) -> Result<Spectrum> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        _ => return Err(CestError::parse(path, format!("expected header '{CSV_HEADER}'"))),
    }
    let mut offsets = Vec::new();
    let mut z = Vec::new();
    for (n, line) in lines.enumerate() {
        let bad = || CestError::parse(path, format!("malformed row {}: '{line}'", n + 2));
        let (a, b) = line.split_once(',').ok_or_else(bad)?;
        offsets.push(a.trim().parse::<f64>().map_err(|_| bad())?);
        z.push(b.trim().parse::<f64>().map_err(|_| bad())?);
    }
    Spectrum::new(offsets, z, b1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetMeta {
    pub b1: Vec<f64>,
    pub files: Vec<String>,
    pub b0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<BTreeMap<String, f64>>,
}

pub fn write_set(dir: &Path, set: &SpectrumSet, field: &FieldContext) -> Result<()> {
    let mut files = Vec::new();
    for (i, s) in set.spectra().iter().enumerate() {
        let name = format!("b1_{i}.csv");
        write_file(&dir.join(&name), &spectrum_to_csv(s))?;
        files.push(name);
    }
    let meta = SetMeta {
        b1: set.b1_values(),
        files,
        b0: field.b0,
        labels: set.label.clone(),
    };
    write_json(&dir.join(SET_META_FILE), &meta)
}

pub fn read_set(dir: &Path) -> Result<SpectrumSet> {
    let meta_path = dir.join(SET_META_FILE);
    let meta: SetMeta = read_json(&meta_path)?;
    if meta.b1.len() != meta.files.len() {
        return Err(CestError::parse(&meta_path, "b1 and files lists differ in length"));
    }
    let spectra = meta
        .files
        .iter()
        .zip(&meta.b1)
        .map(|(f, &b1)| {
            let p = dir.join(f);
            spectrum_from_csv(&read_file(&p)?, b1, &p)
        })
        .collect::<Result<Vec<_>>>()?;
    SpectrumSet::new(spectra, meta.labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub format: u32,
    pub field: FieldContext,
    pub sets: Vec<String>,
}

/// Spectrum sets in dataset order with their names.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub field: FieldContext,
    pub names: Vec<String>,
    pub sets: Vec<SpectrumSet>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}

pub fn write_dataset(dir: &Path, data: &Dataset) -> Result<()> {
    if data.names.len() != data.sets.len() {
        return Err(CestError::LengthMismatch {
            expected: data.sets.len(),
            got: data.names.len(),
        });
    }
    for (name, set) in data.names.iter().zip(&data.sets) {
        if name.is_empty() || name.contains(['/', '\\']) || name.starts_with('.') {
            return Err(CestError::InvalidConfig(format!("invalid set name '{name}'")));
        }
        write_set(&dir.join(name), set, &data.field)?;
    }
    write_json(
        &dir.join(DATASET_FILE),
        &DatasetIndex {
            format: DATASET_FORMAT,
            field: data.field,
            sets: data.names.clone(),
        },
    )
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let index_path = dir.join(DATASET_FILE);
    let index: DatasetIndex = read_json(&index_path)?;
    if index.format != DATASET_FORMAT {
        return Err(CestError::parse(&index_path, format!("unsupported dataset format {}", index.format)));
    }
    let sets = index
        .sets
        .iter()
        .map(|n| read_set(&dir.join(n)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        field: index.field,
        names: index.sets,
        sets,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: PhantomSpec,
    pub phantoms: Vec<PhantomRecord>,
}

/// Writes a synthetic dataset and its manifest.
pub fn write_synth(dir: &Path, spec: &PhantomSpec, data: &SynthDataset) -> Result<()> {
    write_dataset(
        dir,
        &Dataset {
            field: spec.field,
            names: data.records.iter().map(|r| r.id.clone()).collect(),
            sets: data.sets.clone(),
        },
    )?;
    write_json(
        &dir.join(MANIFEST_FILE),
        &Manifest {
            spec: spec.clone(),
            phantoms: data.records.clone(),
        },
    )
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    read_json(&dir.join(MANIFEST_FILE))
}

fn nan_from_null<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

/// One fitted spectrum set. Failed fits keep their row with `error` set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub id: String,
    pub params: Vec<f64>,
    #[serde(deserialize_with = "nan_from_null")]
    pub objective_value: f64,
    pub iterations: usize,
    pub function_evals: usize,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub termination: Option<Termination>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient: Option<JacobianMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl FitRow {
    pub fn from_result(id: &str, r: FitResult) -> Self {
        Self {
            id: id.to_string(),
            params: r.params,
            objective_value: r.objective_value,
            iterations: r.iterations,
            function_evals: r.function_evals,
            converged: r.converged,
            termination: Some(r.termination),
            gradient: r.gradient,
            error: None,
        }
    }

    pub fn failed(id: &str, err: &CestError) -> Self {
        Self {
            id: id.to_string(),
            params: Vec::new(),
            objective_value: f64::NAN,
            iterations: 0,
            function_evals: 0,
            converged: false,
            termination: None,
            gradient: None,
            error: Some(err.to_string()),
        }
    }
}

/// Fitted (or predicted) parameters of a whole dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTable {
    pub model: ModelKind,
    /// Solver name, or `network`.
    pub method: String,
    pub param_names: Vec<String>,
    pub rows: Vec<FitRow>,
}

impl FitTable {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    /// NaN objectives of failed rows are stored as JSON null.
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

pub fn loss_csv(folds: &[FoldResult]) -> String {
    let mut out = String::from("fold,epoch,train_loss,val_loss\n");
    for f in folds {
        for h in &f.history {
            out.push_str(&format!("{},{},{:.16e},{:.16e}\n", f.fold, h.epoch, h.train_loss, h.val_loss));
        }
    }
    out
}

pub fn write_loss_csv(path: &Path, folds: &[FoldResult]) -> Result<()> {
    write_file(path, &loss_csv(folds))
}

/// Set directories directly under `dir`, for datasets without an index file.
pub fn list_set_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| CestError::io(dir, e))? {
        let p = entry.map_err(|e| CestError::io(dir, e))?.path();
        if p.join(SET_META_FILE).is_file() {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}
