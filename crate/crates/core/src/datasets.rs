//! Readers for the public dataset layouts.
//!
//! APTOS ships a `train.csv` with `id_code,diagnosis` (grades 0-4) next to
//! a folder of images. IDRiD's grading CSV uses `Image name,Retinopathy
//! grade`, and its segmentation ground truth comes as one folder per
//! lesion kind (`1. Microaneurysms`, `2. Haemorrhages`, `3. Hard
//! Exudates`, `4. Soft Exudates`, ...) with files named `<id>_<CODE>`.
//! IDRiD masks are TIFF; convert them to PNG beforehand.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::features::ClassLabel;
use crate::lesions::LesionKind;

/// Images in the IDRiD segmentation training and test splits.
pub const IDRID_TRAIN_IMAGES: usize = 54;
pub const IDRID_TEST_IMAGES: usize = 27;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GradeLabel {
    /// Five-level clinical grade as given by the dataset.
    pub grade: u8,
    pub label: ClassLabel,
}

/// Reads an APTOS- or IDRiD-style grading CSV into id -> grade.
pub fn load_grade_labels(path: impl AsRef<Path>) -> Result<BTreeMap<String, GradeLabel>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let bad = |row: usize, reason: String| Error::Csv {
        path: path.into(),
        row,
        reason,
    };
    let headers = reader.headers().map_err(|e| bad(1, e.to_string()))?.clone();
    let find = |names: &[&str]| {
        headers
            .iter()
            .position(|h| names.iter().any(|n| h.eq_ignore_ascii_case(n)))
    };
    let id_col = find(&["id_code", "Image name", "image"]).ok_or_else(|| bad(1, "no id column".into()))?;
    let grade_col =
        find(&["diagnosis", "Retinopathy grade", "level"]).ok_or_else(|| bad(1, "no grade column".into()))?;
    let mut out = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| bad(row, e.to_string()))?;
        let (Some(id), Some(grade)) = (rec.get(id_col), rec.get(grade_col)) else {
            return Err(bad(row, "missing field".into()));
        };
        let unknown = || Error::UnknownLabel {
            path: path.into(),
            row,
            label: grade.to_string(),
        };
        let g: u8 = grade.parse().map_err(|_| unknown())?;
        let label = ClassLabel::from_five_level(g).ok_or_else(unknown)?;
        out.insert(id.to_string(), GradeLabel { grade: g, label });
    }
    Ok(out)
}

/// Lesion kind named by a mask folder: either a kind code (`MA`) or an
/// IDRiD folder name (`1. Microaneurysms`). Hard exudates use code `EX`
/// in IDRiD file names.
pub fn kind_from_folder(name: &str) -> Option<LesionKind> {
    if let Some(k) = LesionKind::from_code(name) {
        return Some(k);
    }
    let lower = name.to_ascii_lowercase();
    if lower.contains("microaneurysm") {
        Some(LesionKind::Ma)
    } else if lower.contains("haemorrhage") || lower.contains("hemorrhage") {
        Some(LesionKind::Hem)
    } else if lower.contains("hard exudate") {
        Some(LesionKind::He)
    } else if lower.contains("soft exudate") {
        Some(LesionKind::Se)
    } else {
        None
    }
}

/// Image id of a mask file stem, dropping an IDRiD lesion suffix.
pub fn mask_image_id(stem: &str) -> &str {
    for suffix in ["_MA", "_HE", "_EX", "_SE", "_OD"] {
        if let Some(id) = stem.strip_suffix(suffix) {
            return id;
        }
    }
    stem
}

/// Files in `dir` with one of `exts` (case-insensitive), sorted by name.
pub fn files_with_ext(dir: &Path, exts: &[&str]) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && ext.is_some_and(|e| exts.contains(&e.as_str())) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Mask files grouped by lesion kind (from sub-folder names) and keyed by
/// image id. A directory without kind sub-folders is one group, `None`.
pub fn scan_mask_tree(dir: &Path) -> Result<BTreeMap<Option<LesionKind>, BTreeMap<String, PathBuf>>> {
    const EXTS: &[&str] = &["png", "pfmap"];
    let mut groups = BTreeMap::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut subdirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    for sub in subdirs {
        let Some(kind) = sub.file_name().and_then(|n| n.to_str()).and_then(kind_from_folder) else {
            continue;
        };
        let files: &mut BTreeMap<String, PathBuf> = groups.entry(Some(kind)).or_default();
        for f in files_with_ext(&sub, EXTS)? {
            let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            files.insert(mask_image_id(stem).to_string(), f);
        }
    }
    if groups.is_empty() {
        let files: BTreeMap<String, PathBuf> = files_with_ext(dir, EXTS)?
            .into_iter()
            .map(|f| {
                let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
                (mask_image_id(stem).to_string(), f)
            })
            .collect();
        if !files.is_empty() {
            groups.insert(None, files);
        }
    }
    Ok(groups)
}
