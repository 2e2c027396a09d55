//! On-disk dataset layout:
//!
//! ```text
//! <root>/spec.json
//! <root>/<split>/manifest.csv
//! <root>/<split>/images/<id>.pgm
//! <root>/<split>/saliency/<id>.f64
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::image_io::{self, Image};
use super::{DatagenError, Sample, Split, SpurSpec};
use crate::saliency::SaliencyMap;

/// Minimum foreground fraction for a patch to count as relevant.
pub const COVERAGE_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub sample_id: usize,
    pub label: usize,
    pub background_id: usize,
    pub image_path: String,
    pub saliency_path: String,
    /// `;`-separated patch indices.
    pub relevant_patches: String,
}

pub fn parse_patch_list(s: &str) -> Result<Vec<usize>, DatagenError> {
    s.split(';')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| DatagenError::Manifest(format!("bad patch index {t:?} in {s:?}")))
        })
        .collect()
}

fn format_patch_list(idx: &[usize]) -> String {
    idx.iter().map(usize::to_string).collect::<Vec<_>>().join(";")
}

/// Writes the manifest. A leading `#` line records the relevance and blur
/// parameters the files were produced with.
pub fn write_manifest<W: Write>(mut w: W, rows: &[ManifestRow], saliency_sigma: f64) -> Result<(), DatagenError> {
    writeln!(w, "# coverage_threshold={COVERAGE_THRESHOLD} saliency_sigma={saliency_sigma}")?;
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_manifest<R: Read>(r: R) -> Result<Vec<ManifestRow>, DatagenError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

pub fn write_dataset(root: &Path, spec: &SpurSpec, splits: &[(Split, Vec<Sample>)]) -> Result<(), DatagenError> {
    fs::create_dir_all(root)?;
    fs::write(root.join("spec.json"), serde_json::to_string_pretty(spec)? + "\n")?;
    for (split, samples) in splits {
        write_split(root, *split, spec, samples)?;
    }
    Ok(())
}

pub fn write_split(root: &Path, split: Split, spec: &SpurSpec, samples: &[Sample]) -> Result<(), DatagenError> {
    let dir = root.join(split.name());
    fs::create_dir_all(dir.join("images"))?;
    fs::create_dir_all(dir.join("saliency"))?;
    let size = spec.image_size;
    let mut rows = Vec::with_capacity(samples.len());
    for s in samples {
        let image_path = format!("images/{:05}.pgm", s.id);
        let saliency_path = format!("saliency/{:05}.f64", s.id);
        let img = Image::gray(size, size, s.image.clone()).map_err(|e| file_err(&image_path, e))?;
        image_io::write_pnm(&dir.join(&image_path), &img).map_err(|e| file_err(&image_path, e))?;
        image_io::write_f64(&dir.join(&saliency_path), size, size, s.saliency.values())
            .map_err(|e| file_err(&saliency_path, e))?;
        rows.push(ManifestRow {
            sample_id: s.id,
            label: s.label,
            background_id: s.background_id,
            image_path,
            saliency_path,
            relevant_patches: format_patch_list(&s.relevant_patches),
        });
    }
    write_manifest(fs::File::create(dir.join("manifest.csv"))?, &rows, spec.saliency_sigma())
}

fn file_err(path: &str, source: image_io::ImageIoError) -> DatagenError {
    DatagenError::File {
        path: path.to_string(),
        source,
    }
}

pub fn load_dataset_spec(root: &Path) -> Result<SpurSpec, DatagenError> {
    let path = root.join("spec.json");
    if !path.is_file() {
        return Err(DatagenError::MissingFile(path.display().to_string()));
    }
    let spec: SpurSpec = serde_json::from_str(&fs::read_to_string(path)?)?;
    spec.validate()?;
    Ok(spec)
}

/// Loads one split, checking every referenced file, image size and patch
/// index against `spec`.
pub fn load_split(root: &Path, split: Split, spec: &SpurSpec) -> Result<Vec<Sample>, DatagenError> {
    let dir = root.join(split.name());
    let manifest = dir.join("manifest.csv");
    if !manifest.is_file() {
        return Err(DatagenError::MissingFile(manifest.display().to_string()));
    }
    let rows = read_manifest(fs::File::open(&manifest)?)?;
    let size = spec.image_size;
    let n = spec.num_patches();
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        let image_path = dir.join(&row.image_path);
        let saliency_path = dir.join(&row.saliency_path);
        for p in [&image_path, &saliency_path] {
            if !p.is_file() {
                return Err(DatagenError::MissingFile(p.display().to_string()));
            }
        }
        let shown = image_path.display().to_string();
        let img = image_io::read_pnm(&image_path).map_err(|e| file_err(&shown, e))?;
        if (img.height, img.width, img.channels) != (size, size, 1) {
            return Err(DatagenError::Manifest(format!(
                "{shown} is {}x{}x{}, expected {size}x{size}x1",
                img.height, img.width, img.channels
            )));
        }
        let shown = saliency_path.display().to_string();
        let (h, w, values) = image_io::read_f64(&saliency_path).map_err(|e| file_err(&shown, e))?;
        if (h, w) != (size, size) {
            return Err(DatagenError::Manifest(format!("{shown} is {h}x{w}, expected {size}x{size}")));
        }
        let relevant_patches = parse_patch_list(&row.relevant_patches)?;
        if let Some(bad) = relevant_patches.iter().find(|&&i| i >= n) {
            return Err(DatagenError::Manifest(format!(
                "sample {}: patch index {bad} out of range (N = {n})",
                row.sample_id
            )));
        }
        if row.label >= spec.num_classes || row.background_id >= spec.num_classes {
            return Err(DatagenError::Manifest(format!("sample {}: class out of range", row.sample_id)));
        }
        out.push(Sample {
            id: row.sample_id,
            label: row.label,
            background_id: row.background_id,
            image: img.pixels,
            relevant_patches,
            saliency: SaliencyMap::new(h, w, values)?,
        });
    }
    Ok(out)
}
