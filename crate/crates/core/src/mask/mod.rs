//! Binary masks and the raster primitives the rest of the pipeline is built on.
//!
//! Pixels are stored row-major from the top image row, matching PNG layout.
//! Everything above storage level speaks [`TreeCoord`], where `y = 0` is the
//! bottom row (the trunk base) and `y = height - 1` is the top of the image.

mod components;
mod runs;

use std::fmt;
use std::path::Path;

use image::{GrayImage, Luma};

use crate::error::{Error, Result};

pub use components::{connected_components, keep_largest_blob, label_components, BBox, Blob, Labeling};
pub(crate) use runs::runs_in_row;
pub use runs::{column_runs, row_runs, to_partial_skeleton, PartialSkeleton, RowRun, SkeletonPoint};

/// Pixel address with the origin at the bottom-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TreeCoord {
    pub x: usize,
    pub y: usize,
}

impl TreeCoord {
    pub fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    /// `(row, col)` in storage order for an image of the given height.
    pub fn to_storage(self, height: usize) -> (usize, usize) {
        (height - 1 - self.y, self.x)
    }

    pub fn from_storage(row: usize, col: usize, height: usize) -> Self {
        Self {
            x: col,
            y: height - 1 - row,
        }
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    /// All-background mask.
    ///
    /// Panics if either dimension is zero.
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width >= 1 && height >= 1, "mask dimensions must be positive");
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    /// Builds a mask from a predicate over tree coordinates.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut mask = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    mask.set(x, y, true);
                }
            }
        }
        mask
    }

    /// Parses an ASCII picture, top row first; `#` or `1` is foreground.
    pub fn from_ascii(picture: &str) -> Self {
        let rows: Vec<&str> = picture
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect();
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        let mut mask = Self::new(width, height);
        for (row, line) in rows.iter().enumerate() {
            assert_eq!(line.chars().count(), width, "ragged ascii mask");
            for (col, ch) in line.chars().enumerate() {
                mask.data[row * width + col] = matches!(ch, '#' | '1');
            }
        }
        mask
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    fn index(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.width && y < self.height);
        (self.height - 1 - y) * self.width + x
    }

    /// Foreground test in tree coordinates.
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[self.index(x, y)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        let i = self.index(x, y);
        self.data[i] = value;
    }

    /// Foreground test in storage coordinates (row 0 at the top).
    #[inline]
    pub fn get_storage(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set_storage(&mut self, row: usize, col: usize, value: bool) {
        self.data[row * self.width + col] = value;
    }

    /// Raw storage, row-major from the top row.
    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&p| p).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&p| p)
    }

    /// Foreground pixels in tree coordinates, in storage raster order.
    pub fn foreground(&self) -> impl Iterator<Item = TreeCoord> + '_ {
        let (w, h) = (self.width, self.height);
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &p)| p)
            .map(move |(i, _)| TreeCoord::from_storage(i / w, i % w, h))
    }

    pub fn same_dims(&self, other: &Mask) -> Result<()> {
        if self.dims() == other.dims() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                left: self.dims(),
                right: other.dims(),
            })
        }
    }

    /// Pixel-wise OR. Panics on dimension mismatch.
    pub fn union(&self, other: &Mask) -> Mask {
        assert_eq!(self.dims(), other.dims());
        let data = self.data.iter().zip(&other.data).map(|(a, b)| *a || *b).collect();
        Mask { data, ..*self }
    }

    /// Pixel-wise AND. Panics on dimension mismatch.
    pub fn intersection(&self, other: &Mask) -> Mask {
        assert_eq!(self.dims(), other.dims());
        let data = self.data.iter().zip(&other.data).map(|(a, b)| *a && *b).collect();
        Mask { data, ..*self }
    }

    pub fn complement(&self) -> Mask {
        Mask {
            data: self.data.iter().map(|p| !p).collect(),
            ..*self
        }
    }

    /// True when every foreground pixel of `self` is foreground in `other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.dims() == other.dims() && self.data.iter().zip(&other.data).all(|(a, b)| !*a || *b)
    }

    /// Keeps only the rows with `y` in `[y_lo, y_hi)`.
    pub fn row_band(&self, y_lo: usize, y_hi: usize) -> Mask {
        let mut out = Mask::new(self.width, self.height);
        for y in y_lo..y_hi.min(self.height) {
            for x in 0..self.width {
                if self.get(x, y) {
                    out.set(x, y, true);
                }
            }
        }
        out
    }

    /// Counter-clockwise quarter turn in tree coordinates:
    /// `(x, y)` maps to `(height - 1 - y, x)` in a `height x width` mask.
    pub fn rotate90(&self) -> Mask {
        let mut out = Mask::new(self.height, self.width);
        for p in self.foreground() {
            out.set(self.height - 1 - p.y, p.x, true);
        }
        out
    }

    pub fn to_gray_image(&self) -> GrayImage {
        GrayImage::from_fn(self.width as u32, self.height as u32, |col, row| {
            Luma([if self.get_storage(row as usize, col as usize) { 255 } else { 0 }])
        })
    }

    /// Thresholds an 8-bit grayscale image: values above 127 are foreground.
    pub fn from_gray_image(img: &GrayImage) -> Result<Mask> {
        let (w, h) = img.dimensions();
        if w == 0 || h == 0 {
            return Err(Error::Data("mask image has a zero dimension".into()));
        }
        let data = img.pixels().map(|p| p.0[0] > 127).collect();
        Ok(Mask {
            width: w as usize,
            height: h as usize,
            data,
        })
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Mask> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        Mask::from_gray_image(&img.to_luma8())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        self.to_gray_image()
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })
    }
}

impl fmt::Debug for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mask {}x{}", self.width, self.height)?;
        if self.width <= 64 && self.height <= 64 {
            for row in 0..self.height {
                let line: String = (0..self.width)
                    .map(|c| if self.get_storage(row, c) { '#' } else { '.' })
                    .collect();
                writeln!(f, "{line}")?;
            }
        }
        Ok(())
    }
}
