//! Labelled sketch corpora: domain types, the on-disk layout, the procedural
//! toy corpus, and the painter/class split protocols.

mod loader;
mod split;
pub mod toy;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::Rng;
use tch::{Kind, Tensor};

use crate::error::{Error, Result};
use crate::raster::{self, Raster};

pub use loader::{load_dataset, write_dataset, DatasetMeta};
pub use split::{class_extension_split, split_by_painter, ExtensionOption};
pub use toy::{
    all_compositions, make_toy_dataset, make_toy_dataset_from_compositions, painter_styles, Component, Composition,
    ToyStyleParams,
};

/// One labelled sketch: the raster, its class, the class's content icon and
/// the painter who drew it.
#[derive(Clone, Debug)]
pub struct ContentSample {
    pub sketch: Raster,
    pub class_label: usize,
    pub content_icon: Arc<Raster>,
    pub painter_label: usize,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    samples: Vec<ContentSample>,
    class_count: usize,
    painter_count: usize,
    icon_table: BTreeMap<usize, Arc<Raster>>,
    painter_names: Vec<String>,
    compositions: Option<Vec<Composition>>,
    resolution: usize,
}

impl Dataset {
    /// Builds a dataset and checks its label and icon invariants. Samples keep
    /// the icon handle stored in `icon_table`, so equal classes always share
    /// bit-identical icons.
    pub fn new(
        samples: Vec<ContentSample>,
        class_count: usize,
        painter_count: usize,
        icon_table: BTreeMap<usize, Arc<Raster>>,
        painter_names: Vec<String>,
        compositions: Option<Vec<Composition>>,
        resolution: usize,
    ) -> Result<Self> {
        if painter_names.len() != painter_count {
            return Err(Error::Data(format!(
                "{} painter names for {painter_count} painters",
                painter_names.len()
            )));
        }
        if let Some(c) = &compositions {
            if c.len() != class_count {
                return Err(Error::Data(format!(
                    "{} compositions for {class_count} classes",
                    c.len()
                )));
            }
        }
        let mut samples = samples;
        for s in samples.iter_mut() {
            if s.class_label >= class_count {
                return Err(Error::Data(format!(
                    "class label {} out of range for {class_count} classes",
                    s.class_label
                )));
            }
            if s.painter_label >= painter_count {
                return Err(Error::Data(format!(
                    "painter label {} out of range for {painter_count} painters",
                    s.painter_label
                )));
            }
            let icon = icon_table
                .get(&s.class_label)
                .ok_or(Error::MissingIcon(s.class_label))?;
            if !Arc::ptr_eq(icon, &s.content_icon) && **icon != *s.content_icon {
                return Err(Error::Data(format!(
                    "sample icon differs from the icon table for class {}",
                    s.class_label
                )));
            }
            s.content_icon = Arc::clone(icon);
            if s.sketch.width() != resolution || s.sketch.height() != resolution {
                return Err(Error::Shape(format!(
                    "{}x{} sketch in a {resolution}px dataset",
                    s.sketch.width(),
                    s.sketch.height()
                )));
            }
        }
        Ok(Dataset {
            samples,
            class_count,
            painter_count,
            icon_table,
            painter_names,
            compositions,
            resolution,
        })
    }

    pub fn samples(&self) -> &[ContentSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn painter_count(&self) -> usize {
        self.painter_count
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn icon_table(&self) -> &BTreeMap<usize, Arc<Raster>> {
        &self.icon_table
    }

    pub fn icon(&self, class_label: usize) -> Result<&Raster> {
        self.icon_table
            .get(&class_label)
            .map(|a| a.as_ref())
            .ok_or(Error::MissingIcon(class_label))
    }

    /// Stable identity of each painter label, used to check painter
    /// disjointness across independently built datasets.
    pub fn painter_names(&self) -> &[String] {
        &self.painter_names
    }

    pub fn compositions(&self) -> Option<&[Composition]> {
        self.compositions.as_deref()
    }

    /// Class labels that occur in at least one sample.
    pub fn classes_present(&self) -> BTreeSet<usize> {
        self.samples.iter().map(|s| s.class_label).collect()
    }

    /// Painter labels that occur in at least one sample.
    pub fn painters_present(&self) -> BTreeSet<usize> {
        self.samples.iter().map(|s| s.painter_label).collect()
    }

    /// Names of the painters that occur in at least one sample.
    pub fn painter_identities(&self) -> BTreeSet<&str> {
        self.painters_present()
            .into_iter()
            .map(|p| self.painter_names[p].as_str())
            .collect()
    }

    /// Same label spaces and icon table, restricted to the samples for which
    /// `keep` returns true (order preserved).
    pub fn filter(&self, keep: impl Fn(&ContentSample) -> bool) -> Dataset {
        Dataset {
            samples: self.samples.iter().filter(|s| keep(s)).cloned().collect(),
            class_count: self.class_count,
            painter_count: self.painter_count,
            icon_table: self.icon_table.clone(),
            painter_names: self.painter_names.clone(),
            compositions: self.compositions.clone(),
            resolution: self.resolution,
        }
    }

    /// Sketches at `indices` as an `[N, 1, H, W]` tensor in `[-1, 1]`.
    pub fn sketch_batch(&self, indices: &[usize], kind: Kind) -> Result<Tensor> {
        let rasters: Vec<&Raster> = indices.iter().map(|&i| &self.samples[i].sketch).collect();
        raster::stack(&rasters, kind)
    }

    /// Content icons of the samples at `indices`, stacked like
    /// [`Dataset::sketch_batch`].
    pub fn icon_batch(&self, indices: &[usize], kind: Kind) -> Result<Tensor> {
        let rasters: Vec<&Raster> = indices
            .iter()
            .map(|&i| self.samples[i].content_icon.as_ref())
            .collect();
        raster::stack(&rasters, kind)
    }

    pub fn class_labels(&self, indices: &[usize]) -> Tensor {
        let v: Vec<i64> = indices
            .iter()
            .map(|&i| self.samples[i].class_label as i64)
            .collect();
        Tensor::from_slice(&v)
    }

    pub fn painter_labels(&self, indices: &[usize]) -> Tensor {
        let v: Vec<i64> = indices
            .iter()
            .map(|&i| self.samples[i].painter_label as i64)
            .collect();
        Tensor::from_slice(&v)
    }
}

/// Draws the style sample for a content sample: a uniformly random record of
/// the whole dataset, with no constraint tying its class or painter to the
/// content sample.
pub fn sample_style<'a, R: Rng + ?Sized>(dataset: &'a Dataset, rng: &mut R) -> Result<&'a ContentSample> {
    Ok(&dataset.samples[sample_style_index(dataset, rng)?])
}

pub fn sample_style_index<R: Rng + ?Sized>(dataset: &Dataset, rng: &mut R) -> Result<usize> {
    if dataset.is_empty() {
        return Err(Error::Data("cannot draw a style sample from an empty dataset".into()));
    }
    Ok(rng.gen_range(0..dataset.len()))
}
