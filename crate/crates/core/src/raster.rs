//! Grayscale rasters and their conversions to PNG files and network tensors.
//!
//! Pixels live in `[0, 1]` with ink = 1 and background = 0. Networks consume
//! the same values remapped to `[-1, 1]`.

use std::path::Path;

use image::{imageops::FilterType, GrayImage, Luma};
use tch::{Kind, Tensor};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
}

impl Raster {
    pub fn zeros(width: usize, height: usize) -> Self {
        Raster {
            width,
            height,
            pixels: vec![0.0; width * height],
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<f32>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::Shape(format!(
                "{} pixels for a {width}x{height} raster",
                pixels.len()
            )));
        }
        Ok(Raster {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: f32) {
        self.pixels[y * self.width + x] = value;
    }

    pub fn same_shape(&self, other: &Raster) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Reads an 8-bit grayscale PNG (other formats are converted), resized to
    /// `resolution` when given.
    pub fn load_png(path: &Path, resolution: Option<usize>) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let mut gray = img.to_luma8();
        if let Some(res) = resolution {
            if gray.width() as usize != res || gray.height() as usize != res {
                gray = image::imageops::resize(&gray, res as u32, res as u32, FilterType::Triangle);
            }
        }
        let (w, h) = (gray.width() as usize, gray.height() as usize);
        let pixels = gray.pixels().map(|p| p.0[0] as f32 / 255.0).collect();
        Ok(Raster {
            width: w,
            height: h,
            pixels,
        })
    }

    pub fn to_gray_image(&self) -> GrayImage {
        GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let v = self.get(x as usize, y as usize).clamp(0.0, 1.0);
            Luma([(v * 255.0).round() as u8])
        })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        self.to_gray_image().save(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    /// `[1, 1, H, W]` tensor with values remapped to `[-1, 1]`.
    pub fn to_tensor(&self, kind: Kind) -> Tensor {
        Tensor::from_slice(&self.pixels)
            .view([1, 1, self.height as i64, self.width as i64])
            .to_kind(kind)
            * 2.0
            - 1.0
    }

    /// Inverse of [`Raster::to_tensor`] for a single `[1, 1, H, W]`,
    /// `[1, H, W]` or `[H, W]` tensor in `[-1, 1]`.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let size = t.size();
        let (h, w) = match size.as_slice() {
            [1, 1, h, w] | [1, h, w] | [h, w] => (*h as usize, *w as usize),
            other => return Err(Error::Shape(format!("cannot read a raster from {other:?}"))),
        };
        let flat = ((t.detach().to_kind(Kind::Float) + 1.0) * 0.5)
            .clamp(0.0, 1.0)
            .reshape([-1]);
        let pixels = Vec::<f32>::try_from(&flat)?;
        Raster::from_pixels(w, h, pixels)
    }
}

/// Stacks rasters of equal shape into a `[N, 1, H, W]` tensor in `[-1, 1]`.
pub fn stack(rasters: &[&Raster], kind: Kind) -> Result<Tensor> {
    let first = rasters
        .first()
        .ok_or_else(|| Error::InvalidArgument("cannot stack zero rasters".into()))?;
    let mut data = Vec::with_capacity(rasters.len() * first.pixels.len());
    for r in rasters {
        if !r.same_shape(first) {
            return Err(Error::Shape(format!(
                "{}x{} raster stacked with {}x{}",
                r.width, r.height, first.width, first.height
            )));
        }
        data.extend_from_slice(&r.pixels);
    }
    Ok(Tensor::from_slice(&data)
        .view([
            rasters.len() as i64,
            1,
            first.height as i64,
            first.width as i64,
        ])
        .to_kind(kind)
        * 2.0
        - 1.0)
}

/// Splits a `[N, 1, H, W]` tensor in `[-1, 1]` back into rasters.
pub fn unstack(t: &Tensor) -> Result<Vec<Raster>> {
    let size = t.size();
    if size.len() != 4 || size[1] != 1 {
        return Err(Error::Shape(format!("expected [N, 1, H, W], got {size:?}")));
    }
    (0..size[0])
        .map(|i| Raster::from_tensor(&t.get(i)))
        .collect()
}

/// Lays rasters out row-major on a grid with a one-pixel gutter.
pub fn contact_sheet(rows: &[Vec<Raster>]) -> Result<Raster> {
    let cell = rows
        .iter()
        .flatten()
        .next()
        .ok_or_else(|| Error::InvalidArgument("empty contact sheet".into()))?;
    let (cw, ch) = (cell.width, cell.height);
    let ncols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let width = ncols * (cw + 1) + 1;
    let height = rows.len() * (ch + 1) + 1;
    let mut sheet = Raster::zeros(width, height);
    for v in sheet.pixels.iter_mut() {
        *v = 0.5;
    }
    for (r, row) in rows.iter().enumerate() {
        for (c, img) in row.iter().enumerate() {
            if img.width != cw || img.height != ch {
                return Err(Error::Shape("contact sheet cells differ in size".into()));
            }
            let (ox, oy) = (1 + c * (cw + 1), 1 + r * (ch + 1));
            for y in 0..ch {
                for x in 0..cw {
                    sheet.set(ox + x, oy + y, img.get(x, y));
                }
            }
        }
    }
    Ok(sheet)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_round_trip_keeps_pixels() {
        let r = Raster::from_pixels(2, 2, vec![0.0, 0.25, 0.5, 1.0]).unwrap();
        let back = Raster::from_tensor(&r.to_tensor(Kind::Float)).unwrap();
        for (a, b) in r.pixels().iter().zip(back.pixels()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn stack_rejects_mixed_shapes() {
        let a = Raster::zeros(4, 4);
        let b = Raster::zeros(8, 8);
        assert!(matches!(stack(&[&a, &b], Kind::Float), Err(Error::Shape(_))));
    }

    #[test]
    fn png_round_trip_is_exact_on_8bit_levels() {
        let dir = tempfile::tempdir().unwrap();
        let pixels = (0..16).map(|i| (i * 17) as f32 / 255.0).collect();
        let r = Raster::from_pixels(4, 4, pixels).unwrap();
        let path = dir.path().join("r.png");
        r.save_png(&path).unwrap();
        assert_eq!(Raster::load_png(&path, None).unwrap(), r);
    }

    #[test]
    fn contact_sheet_dimensions() {
        let row = vec![Raster::zeros(4, 4), Raster::zeros(4, 4), Raster::zeros(4, 4)];
        let sheet = contact_sheet(&[row.clone(), row]).unwrap();
        assert_eq!((sheet.width(), sheet.height()), (16, 11));
    }
}
