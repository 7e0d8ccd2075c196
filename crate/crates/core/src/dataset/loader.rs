//! On-disk corpus layout:
//!
//! ```text
//! root/meta.json                                 {"class_count": C, "painter_count": P, "resolution": H}
//! root/icons/<class_id>.png
//! root/sketches/<class_id>/<painter_id>/<n>.png
//! ```
//!
//! `meta.json` may also carry `painter_names` (painter identities across
//! corpora) and `compositions` (toy component metadata).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::toy::Composition;
use super::{ContentSample, Dataset};
use crate::error::{Error, Result};
use crate::raster::Raster;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub class_count: usize,
    pub painter_count: usize,
    pub resolution: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub painter_names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compositions: Option<Vec<Composition>>,
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<Vec<_>>>()?;
    entries.sort();
    Ok(entries)
}

fn numeric_name(path: &Path) -> Result<usize> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Data(format!("expected a numeric name: {}", path.display())))
}

/// Loads a corpus. Sketches and icons are resized to `resolution` (the
/// resolution recorded in `meta.json` when `None`). Samples come back sorted
/// by (class, painter, filename).
pub fn load_dataset(root: &Path, resolution: Option<usize>) -> Result<Dataset> {
    let meta_path = root.join("meta.json");
    let meta_text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: DatasetMeta = serde_json::from_str(&meta_text)
        .map_err(|e| Error::Data(format!("{}: {e}", meta_path.display())))?;
    let res = resolution.unwrap_or(meta.resolution);

    let mut keyed: Vec<((usize, usize, String), PathBuf)> = Vec::new();
    for class_dir in read_dir_sorted(&root.join("sketches"))? {
        if !class_dir.is_dir() {
            continue;
        }
        let class = numeric_name(&class_dir)?;
        for painter_dir in read_dir_sorted(&class_dir)? {
            if !painter_dir.is_dir() {
                continue;
            }
            let painter = numeric_name(&painter_dir)?;
            for file in read_dir_sorted(&painter_dir)? {
                if file.extension().and_then(|e| e.to_str()) != Some("png") {
                    continue;
                }
                let name = file.file_name().unwrap().to_string_lossy().into_owned();
                keyed.push(((class, painter, name), file));
            }
        }
    }
    keyed.sort_by(|a, b| a.0.cmp(&b.0));

    let mut icon_table = BTreeMap::new();
    let mut samples = Vec::with_capacity(keyed.len());
    for ((class, painter, _), file) in keyed {
        let icon = match icon_table.get(&class) {
            Some(icon) => Arc::clone(icon),
            None => {
                let icon_path = root.join("icons").join(format!("{class}.png"));
                if !icon_path.is_file() {
                    return Err(Error::MissingIcon(class));
                }
                let icon = Arc::new(Raster::load_png(&icon_path, Some(res))?);
                icon_table.insert(class, Arc::clone(&icon));
                icon
            }
        };
        samples.push(ContentSample {
            sketch: Raster::load_png(&file, Some(res))?,
            class_label: class,
            content_icon: icon,
            painter_label: painter,
        });
    }
    // icons of classes without samples are still useful for generation
    let icon_dir = root.join("icons");
    if icon_dir.is_dir() {
        for path in read_dir_sorted(&icon_dir)? {
            if let Ok(class) = numeric_name(&path) {
                if class < meta.class_count && !icon_table.contains_key(&class) {
                    icon_table.insert(class, Arc::new(Raster::load_png(&path, Some(res))?));
                }
            }
        }
    }
    let painter_names = meta
        .painter_names
        .unwrap_or_else(|| (0..meta.painter_count).map(|p| p.to_string()).collect());
    Dataset::new(
        samples,
        meta.class_count,
        meta.painter_count,
        icon_table,
        painter_names,
        meta.compositions,
        res,
    )
}

/// Writes `dataset` in the layout read by [`load_dataset`]; returns every file
/// written, in write order.
pub fn write_dataset(dataset: &Dataset, root: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let meta = DatasetMeta {
        class_count: dataset.class_count(),
        painter_count: dataset.painter_count(),
        resolution: dataset.resolution(),
        painter_names: Some(dataset.painter_names().to_vec()),
        compositions: dataset.compositions().map(<[_]>::to_vec),
    };
    let meta_path = root.join("meta.json");
    fs::write(&meta_path, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&meta_path, e))?;
    written.push(meta_path);

    for (class, icon) in dataset.icon_table() {
        let path = root.join("icons").join(format!("{class}.png"));
        icon.save_png(&path)?;
        written.push(path);
    }
    let mut counters: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for s in dataset.samples() {
        let n = counters.entry((s.class_label, s.painter_label)).or_default();
        let path = root
            .join("sketches")
            .join(s.class_label.to_string())
            .join(s.painter_label.to_string())
            .join(format!("{:04}.png", *n));
        *n += 1;
        s.sketch.save_png(&path)?;
        written.push(path);
    }
    Ok(written)
}
