use super::{Mask, TreeCoord};

/// Axis-aligned extent of a blob, inclusive, in tree coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BBox {
    pub x_min: usize,
    pub x_max: usize,
    pub y_min: usize,
    pub y_max: usize,
}

impl BBox {
    pub fn width(&self) -> usize {
        self.x_max - self.x_min + 1
    }

    pub fn height(&self) -> usize {
        self.y_max - self.y_min + 1
    }
}

/// One 8-connected foreground component.
#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    /// 1-based label, assigned in storage raster-scan discovery order.
    pub label: u32,
    pub pixel_count: usize,
    pub bbox: BBox,
    /// Mean `(x, y)` of member pixels.
    pub centroid: (f64, f64),
}

/// Per-pixel component labels (0 = background) plus blob summaries.
#[derive(Debug, Clone)]
pub struct Labeling {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    pub blobs: Vec<Blob>,
}

impl Labeling {
    /// Label of the pixel at tree coordinate `(x, y)`, 0 for background.
    pub fn label_at(&self, x: usize, y: usize) -> u32 {
        self.labels[(self.height - 1 - y) * self.width + x]
    }

    pub fn blob(&self, label: u32) -> &Blob {
        &self.blobs[label as usize - 1]
    }

    /// Mask of the pixels whose blob satisfies `keep`.
    pub fn retain(&self, mut keep: impl FnMut(&Blob) -> bool) -> Mask {
        let flags: Vec<bool> = self.blobs.iter().map(&mut keep).collect();
        self.mask_where(|label| flags[label as usize - 1])
    }

    /// Mask of a single blob.
    pub fn blob_mask(&self, label: u32) -> Mask {
        self.mask_where(|l| l == label)
    }

    fn mask_where(&self, mut keep: impl FnMut(u32) -> bool) -> Mask {
        let mut out = Mask::new(self.width, self.height);
        for (i, &l) in self.labels.iter().enumerate() {
            if l != 0 && keep(l) {
                out.set_storage(i / self.width, i % self.width, true);
            }
        }
        out
    }
}

const NEIGHBOURS: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// 8-connected component labelling by flood fill.
pub fn label_components(mask: &Mask) -> Labeling {
    let (w, h) = mask.dims();
    let mut labels = vec![0u32; w * h];
    let mut blobs = Vec::new();
    let mut stack = Vec::new();

    for start in 0..w * h {
        if !mask.as_slice()[start] || labels[start] != 0 {
            continue;
        }
        let label = blobs.len() as u32 + 1;
        labels[start] = label;
        stack.push(start);

        let mut count = 0usize;
        let (mut sx, mut sy) = (0usize, 0usize);
        let (mut x_min, mut x_max, mut y_min, mut y_max) = (usize::MAX, 0, usize::MAX, 0);

        while let Some(i) = stack.pop() {
            let (row, col) = (i / w, i % w);
            let p = TreeCoord::from_storage(row, col, h);
            count += 1;
            sx += p.x;
            sy += p.y;
            x_min = x_min.min(p.x);
            x_max = x_max.max(p.x);
            y_min = y_min.min(p.y);
            y_max = y_max.max(p.y);

            for (dr, dc) in NEIGHBOURS {
                let (r, c) = (row as isize + dr, col as isize + dc);
                if r < 0 || c < 0 || r >= h as isize || c >= w as isize {
                    continue;
                }
                let j = r as usize * w + c as usize;
                if mask.as_slice()[j] && labels[j] == 0 {
                    labels[j] = label;
                    stack.push(j);
                }
            }
        }

        blobs.push(Blob {
            label,
            pixel_count: count,
            bbox: BBox {
                x_min,
                x_max,
                y_min,
                y_max,
            },
            centroid: (sx as f64 / count as f64, sy as f64 / count as f64),
        });
    }

    Labeling {
        width: w,
        height: h,
        labels,
        blobs,
    }
}

pub fn connected_components(mask: &Mask) -> Vec<Blob> {
    label_components(mask).blobs
}

/// Retains only the largest blob; ties go to the blob discovered first.
pub fn keep_largest_blob(mask: &Mask) -> Mask {
    let labeling = label_components(mask);
    let Some(best) = largest(&labeling.blobs) else {
        return mask.clone();
    };
    labeling.blob_mask(best)
}

pub(crate) fn largest(blobs: &[Blob]) -> Option<u32> {
    blobs
        .iter()
        .fold(None::<&Blob>, |best, b| match best {
            Some(cur) if cur.pixel_count >= b.pixel_count => Some(cur),
            _ => Some(b),
        })
        .map(|b| b.label)
}
