//! Dataset assembly: coverage filtering, spatial augmentation with
//! per-city multipliers, leakage-safe train/validation splitting, and the
//! JSON-lines manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::TileFeatures;
use crate::prompts::PromptRecord;
use crate::rng::{derive_seed, Pcg32};
use crate::tiles::TileId;

/// Tiles are retained iff strictly more than this fraction of their area is
/// covered by recognized land use.
pub const COVERAGE_THRESHOLD: f64 = 0.70;

/// The default augmentation shift set: half-tile steps on each axis,
/// excluding the identity.
pub const SHIFT_SET: [(f64, f64); 8] = [
    (-0.5, -0.5),
    (-0.5, 0.0),
    (-0.5, 0.5),
    (0.0, -0.5),
    (0.0, 0.5),
    (0.5, -0.5),
    (0.5, 0.0),
    (0.5, 0.5),
];

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

/// One training pair: tile identity, derived semantics, its prompt, and the
/// control/target image paths (relative to the manifest's directory).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileSample {
    pub sample_id: String,
    pub tile: TileId,
    pub city: String,
    pub shift: (f64, f64),
    pub features: TileFeatures,
    pub prompt: PromptRecord,
    pub control_path: String,
    pub target_path: String,
    pub split: Split,
}

impl TileSample {
    /// Key shared by all augmented copies of one base tile.
    pub fn base_key(&self) -> (String, TileId) {
        (self.city.clone(), self.tile)
    }
}

pub fn sample_id(city: &str, tile: TileId, shift: (f64, f64)) -> String {
    let mut id = format!("{}_{}_{}_{}", city, tile.zoom, tile.x, tile.y);
    if shift != (0.0, 0.0) {
        id.push_str(&format!("_sx{:+.2}sy{:+.2}", shift.0, shift.1));
    }
    id
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CityCounts {
    pub base_tiles: usize,
    pub samples: usize,
    pub train: usize,
    pub val: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub version: u32,
    pub seed: u64,
    pub config_hash: String,
    pub cities: BTreeMap<String, CityCounts>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub header: ManifestHeader,
    pub samples: Vec<TileSample>,
}

/// Keeps features with coverage strictly above the threshold; returns
/// `(kept, dropped)`.
pub fn filter_tiles(features: Vec<TileFeatures>) -> (Vec<TileFeatures>, Vec<TileFeatures>) {
    features
        .into_iter()
        .partition(|f| f.coverage > COVERAGE_THRESHOLD)
}

/// Expands base samples to their augmented copies.
///
/// A multiplier of `m` keeps the original and adds `m - 1` shifted copies,
/// drawn without replacement from [`SHIFT_SET`] by a per-tile seeded choice.
/// `derive` re-derives a full sample (features, prompt, control, target) on
/// the shifted window. Cities absent from the plan default to 1x.
pub fn augment<F>(
    samples: Vec<TileSample>,
    plan: &BTreeMap<String, u32>,
    seed: u64,
    mut derive: F,
) -> Result<Vec<TileSample>>
where
    F: FnMut(&TileSample, (f64, f64)) -> Result<TileSample>,
{
    let mut out = Vec::new();
    for base in samples {
        let multiplier = plan.get(&base.city).copied().unwrap_or(1);
        if multiplier == 0 {
            return Err(Error::Invalid(format!(
                "augmentation multiplier for {} must be at least 1",
                base.city
            )));
        }
        let extra = (multiplier - 1) as usize;
        if extra > SHIFT_SET.len() {
            return Err(Error::Invalid(format!(
                "multiplier {multiplier} needs {extra} distinct shifts, only {} available",
                SHIFT_SET.len()
            )));
        }
        let tile_tag = (base.tile.x as u64) << 32 | base.tile.y as u64;
        let mut rng = Pcg32::new(derive_seed(seed, "augment-shifts", tile_tag));
        let picked = rng.choose_distinct(SHIFT_SET.len(), extra);
        let mut copies = Vec::with_capacity(extra);
        for idx in picked {
            copies.push(derive(&base, SHIFT_SET[idx])?);
        }
        out.push(base);
        out.append(&mut copies);
    }
    Ok(out)
}

/// Assigns train/val splits by base tile, so augmented copies never straddle
/// the split. The validation count is `round(n_base * val_fraction)` clamped
/// to keep both sides non-empty.
pub fn split_samples(
    mut samples: Vec<TileSample>,
    val_fraction: f64,
    seed: u64,
) -> Result<Vec<TileSample>> {
    if !(0.0..1.0).contains(&val_fraction) || val_fraction <= 0.0 {
        return Err(Error::Invalid(format!(
            "val_fraction {val_fraction} must lie in (0, 1)"
        )));
    }
    let mut base: BTreeSet<(String, TileId)> = BTreeSet::new();
    for s in &samples {
        base.insert(s.base_key());
    }
    if base.len() < 2 {
        return Err(Error::Invalid(format!(
            "need at least 2 base tiles to split, found {}",
            base.len()
        )));
    }
    let mut keys: Vec<(String, TileId)> = base.into_iter().collect();
    let mut rng = Pcg32::new(derive_seed(seed, "train-val-split", 0));
    rng.shuffle(&mut keys);
    let n = keys.len();
    let val_count = ((n as f64 * val_fraction + 0.5).floor() as usize).clamp(1, n - 1);
    let val: BTreeSet<(String, TileId)> = keys.into_iter().take(val_count).collect();
    for s in &mut samples {
        s.split = if val.contains(&s.base_key()) {
            Split::Val
        } else {
            Split::Train
        };
    }
    Ok(samples)
}

/// Orders samples by (city, tile, shift) and computes the header counts.
pub fn assemble_manifest(
    mut samples: Vec<TileSample>,
    seed: u64,
    config_hash: &str,
) -> DatasetManifest {
    samples.sort_by(|a, b| {
        a.city
            .cmp(&b.city)
            .then_with(|| a.tile.cmp(&b.tile))
            .then_with(|| a.shift.partial_cmp(&b.shift).unwrap())
    });
    let mut cities: BTreeMap<String, CityCounts> = BTreeMap::new();
    let mut seen_base: BTreeSet<(String, TileId)> = BTreeSet::new();
    for s in &samples {
        let c = cities.entry(s.city.clone()).or_default();
        c.samples += 1;
        match s.split {
            Split::Train => c.train += 1,
            Split::Val => c.val += 1,
        }
        if seen_base.insert(s.base_key()) {
            c.base_tiles += 1;
        }
    }
    DatasetManifest {
        header: ManifestHeader {
            version: MANIFEST_VERSION,
            seed,
            config_hash: config_hash.to_string(),
            cities,
        },
        samples,
    }
}

/// Writes the manifest as JSON lines: a header line, then one sample per
/// line. Output is byte-deterministic for identical content.
pub fn write_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let header = serde_json::to_string(&manifest.header)
        .map_err(|e| Error::Invalid(format!("serialize header: {e}")))?;
    writeln!(w, "{header}").map_err(|e| Error::io(path, e))?;
    for s in &manifest.samples {
        let line = serde_json::to_string(s)
            .map_err(|e| Error::Invalid(format!("serialize sample: {e}")))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut lines = reader.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::parse(path, "empty manifest"))?
        .map_err(|e| Error::io(path, e))?;
    let header: ManifestHeader = serde_json::from_str(&header_line)
        .map_err(|e| Error::parse(path, format!("header: {e}")))?;
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let s: TileSample = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, format!("line {}: {e}", i + 2)))?;
        samples.push(s);
    }
    Ok(DatasetManifest { header, samples })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "code")]
pub enum Violation {
    DuplicateId { sample_id: String },
    MissingPath { sample_id: String, path: String },
    CountMismatch { city: String, detail: String },
    SplitLeakage { city: String, tile: TileId },
    CoverageBelowThreshold { sample_id: String, coverage: f64 },
    BadShift { sample_id: String, shift: (f64, f64) },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub samples: usize,
}

impl ValidationReport {
    pub fn clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Structural checks over a manifest: id uniqueness, path existence
/// (relative to `root`), header count arithmetic, split leakage, coverage
/// and shift invariants.
pub fn validate_manifest(manifest: &DatasetManifest, root: &Path) -> ValidationReport {
    let mut report = ValidationReport {
        samples: manifest.samples.len(),
        ..ValidationReport::default()
    };
    let mut ids = BTreeSet::new();
    let mut counts: BTreeMap<String, CityCounts> = BTreeMap::new();
    let mut base_split: BTreeMap<(String, TileId), Split> = BTreeMap::new();
    let allowed_shift = |s: (f64, f64)| s == (0.0, 0.0) || SHIFT_SET.contains(&s);

    for s in &manifest.samples {
        if !ids.insert(s.sample_id.clone()) {
            report.violations.push(Violation::DuplicateId {
                sample_id: s.sample_id.clone(),
            });
        }
        for path in [&s.control_path, &s.target_path] {
            if !root.join(path).is_file() {
                report.violations.push(Violation::MissingPath {
                    sample_id: s.sample_id.clone(),
                    path: path.clone(),
                });
            }
        }
        if !allowed_shift(s.shift) {
            report.violations.push(Violation::BadShift {
                sample_id: s.sample_id.clone(),
                shift: s.shift,
            });
        }
        if s.features.coverage <= COVERAGE_THRESHOLD {
            report.violations.push(Violation::CoverageBelowThreshold {
                sample_id: s.sample_id.clone(),
                coverage: s.features.coverage,
            });
        }
        match base_split.entry(s.base_key()) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(s.split);
            }
            std::collections::btree_map::Entry::Occupied(e) => {
                if *e.get() != s.split {
                    report.violations.push(Violation::SplitLeakage {
                        city: s.city.clone(),
                        tile: s.tile,
                    });
                }
            }
        }
        let c = counts.entry(s.city.clone()).or_default();
        c.samples += 1;
        match s.split {
            Split::Train => c.train += 1,
            Split::Val => c.val += 1,
        }
    }
    let mut seen_base = BTreeSet::new();
    for s in &manifest.samples {
        if seen_base.insert(s.base_key()) {
            counts.get_mut(&s.city).unwrap().base_tiles += 1;
        }
    }
    for (city, expected) in &manifest.header.cities {
        let got = counts.get(city).cloned().unwrap_or_default();
        if got != *expected {
            report.violations.push(Violation::CountMismatch {
                city: city.clone(),
                detail: format!("header {expected:?} but manifest has {got:?}"),
            });
        }
    }
    for city in counts.keys() {
        if !manifest.header.cities.contains_key(city) {
            report.violations.push(Violation::CountMismatch {
                city: city.clone(),
                detail: "city absent from header".into(),
            });
        }
    }
    report
}
