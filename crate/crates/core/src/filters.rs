//! Geometric blob filters: the four pre-fit cleanup filters and the
//! Y-shaped tree acceptance filter.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{label_components, Blob, Labeling, Mask};

/// Thresholds for all blob filters. Defaults are tuned for 256x256 masks and
/// are not rescaled automatically for other sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub min_blob_area: usize,
    pub trunk_scan_rows: usize,
    pub other_tree_tol: usize,
    pub false_branch_y_min: f64,
    pub false_branch_min_height: usize,
    pub false_trunk_x_tol: usize,
    pub false_trunk_min_height: usize,
    pub false_trunk_max_width: usize,
    pub y_filter_top_rows: usize,
    pub y_filter_bottom_rows: usize,
    pub y_filter_top_sections: usize,
    pub y_filter_bottom_sections: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_blob_area: 50,
            trunk_scan_rows: 40,
            other_tree_tol: 100,
            false_branch_y_min: 240.0,
            false_branch_min_height: 5,
            false_trunk_x_tol: 30,
            false_trunk_min_height: 80,
            false_trunk_max_width: 15,
            y_filter_top_rows: 20,
            y_filter_bottom_rows: 40,
            y_filter_top_sections: 2,
            y_filter_bottom_sections: 1,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("min_blob_area", self.min_blob_area),
            ("trunk_scan_rows", self.trunk_scan_rows),
            ("other_tree_tol", self.other_tree_tol),
            ("false_branch_min_height", self.false_branch_min_height),
            ("false_trunk_x_tol", self.false_trunk_x_tol),
            ("false_trunk_min_height", self.false_trunk_min_height),
            ("false_trunk_max_width", self.false_trunk_max_width),
            ("y_filter_top_rows", self.y_filter_top_rows),
            ("y_filter_bottom_rows", self.y_filter_bottom_rows),
            ("y_filter_top_sections", self.y_filter_top_sections),
            ("y_filter_bottom_sections", self.y_filter_bottom_sections),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(Error::Config(format!("filter.{name} must be positive")));
            }
        }
        if !(self.false_branch_y_min > 0.0) {
            return Err(Error::Config("filter.false_branch_y_min must be positive".into()));
        }
        Ok(())
    }

    /// Checks the size-dependent invariant against a concrete image height.
    pub fn validate_for_height(&self, height: usize) -> Result<()> {
        self.validate()?;
        if self.false_branch_y_min >= height as f64 {
            return Err(Error::Config(format!(
                "filter.false_branch_y_min ({}) must be below the image height ({height})",
                self.false_branch_y_min
            )));
        }
        Ok(())
    }
}

/// Estimated x of the trunk center near the bottom of the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrunkEstimate {
    pub t_pos: usize,
    pub found: bool,
}

impl TrunkEstimate {
    pub const NOT_FOUND: TrunkEstimate = TrunkEstimate {
        t_pos: 0,
        found: false,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FilterWarning {
    /// A trunk-relative filter was skipped because no trunk was found.
    TrunkNotFound { filter: &'static str },
}

impl fmt::Display for FilterWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterWarning::TrunkNotFound { filter } => {
                write!(f, "{filter}: trunk not found, filter skipped")
            }
        }
    }
}

/// Pixel-weighted mean x of the foreground in the bottom `trunk_scan_rows`
/// rows, truncated to an integer column.
pub fn estimate_trunk_position(mask: &Mask, cfg: &FilterConfig) -> TrunkEstimate {
    let rows = cfg.trunk_scan_rows.min(mask.height());
    let (mut sum, mut count) = (0usize, 0usize);
    for y in 0..rows {
        for x in 0..mask.width() {
            if mask.get(x, y) {
                sum += x;
                count += 1;
            }
        }
    }
    if count == 0 {
        return TrunkEstimate::NOT_FOUND;
    }
    TrunkEstimate {
        t_pos: sum / count,
        found: true,
    }
}

/// Removes blobs with fewer than `min_blob_area` pixels.
pub fn small_blob_removal(mask: &Mask, cfg: &FilterConfig) -> Mask {
    label_components(mask).retain(|b| b.pixel_count >= cfg.min_blob_area)
}

fn x_offset(blob: &Blob, trunk: TrunkEstimate) -> f64 {
    (blob.centroid.0 - trunk.t_pos as f64).abs()
}

/// Removes blobs whose centroid lies more than `other_tree_tol` columns from
/// the trunk.
pub fn different_tree_detection(
    mask: &Mask,
    trunk: TrunkEstimate,
    cfg: &FilterConfig,
) -> (Mask, Option<FilterWarning>) {
    if !trunk.found {
        return (
            mask.clone(),
            Some(FilterWarning::TrunkNotFound {
                filter: "different-tree",
            }),
        );
    }
    let tol = cfg.other_tree_tol as f64;
    (label_components(mask).retain(|b| x_offset(b, trunk) <= tol), None)
}

/// Removes blobs near the top edge (centroid above `false_branch_y_min`)
/// that are taller than `false_branch_min_height`.
pub fn false_branch_detection(mask: &Mask, cfg: &FilterConfig) -> Mask {
    label_components(mask).retain(|b| {
        !(b.centroid.1 > cfg.false_branch_y_min && b.bbox.height() > cfg.false_branch_min_height)
    })
}

/// Removes tall thin blobs standing away from the trunk (poles, stakes).
pub fn false_trunk_detection(
    mask: &Mask,
    trunk: TrunkEstimate,
    cfg: &FilterConfig,
) -> (Mask, Option<FilterWarning>) {
    if !trunk.found {
        return (
            mask.clone(),
            Some(FilterWarning::TrunkNotFound {
                filter: "false-trunk",
            }),
        );
    }
    let tol = cfg.false_trunk_x_tol as f64;
    let kept = label_components(mask).retain(|b| {
        !(x_offset(b, trunk) > tol
            && b.bbox.height() > cfg.false_trunk_min_height
            && b.bbox.width() < cfg.false_trunk_max_width)
    });
    (kept, None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreFilterOutcome {
    pub mask: Mask,
    pub trunk: TrunkEstimate,
    pub warnings: Vec<FilterWarning>,
}

/// The full cleanup chain: small blobs, trunk estimate, other trees, false
/// branch ends, false trunks.
pub fn atl_pre_filter(mask: &Mask, cfg: &FilterConfig) -> PreFilterOutcome {
    let mut warnings = Vec::new();
    let cleaned = small_blob_removal(mask, cfg);
    let trunk = estimate_trunk_position(&cleaned, cfg);
    let (cleaned, w) = different_tree_detection(&cleaned, trunk, cfg);
    warnings.extend(w);
    let cleaned = false_branch_detection(&cleaned, cfg);
    let (cleaned, w) = false_trunk_detection(&cleaned, trunk, cfg);
    warnings.extend(w);
    PreFilterOutcome {
        mask: cleaned,
        trunk,
        warnings,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct YFilterOutcome {
    pub passes: bool,
    pub mask: Mask,
}

/// Number of 8-connected sections each blob has inside a row band.
fn sections_per_blob(labeling: &Labeling, mask: &Mask, y_lo: usize, y_hi: usize) -> Vec<usize> {
    let mut counts = vec![0usize; labeling.blobs.len()];
    let band = mask.row_band(y_lo, y_hi);
    let band_labels = label_components(&band);
    for section in &band_labels.blobs {
        // any pixel of the section identifies its parent blob
        let (x, y) = first_pixel(&band_labels, section);
        let parent = labeling.label_at(x, y);
        counts[parent as usize - 1] += 1;
    }
    counts
}

fn first_pixel(labeling: &Labeling, blob: &Blob) -> (usize, usize) {
    let b = blob.bbox;
    for y in (b.y_min..=b.y_max).rev() {
        for x in b.x_min..=b.x_max {
            if labeling.label_at(x, y) == blob.label {
                return (x, y);
            }
        }
    }
    unreachable!("blob without pixels")
}

/// Keeps the largest blob with at least two sections in the top band and
/// one in the bottom band. Fails (with an empty mask) when no blob qualifies.
pub fn y_shaped_tree_filter(mask: &Mask, cfg: &FilterConfig) -> YFilterOutcome {
    let h = mask.height();
    let labeling = label_components(mask);
    let top = sections_per_blob(&labeling, mask, h.saturating_sub(cfg.y_filter_top_rows), h);
    let bottom = sections_per_blob(&labeling, mask, 0, cfg.y_filter_bottom_rows);

    let best = labeling
        .blobs
        .iter()
        .filter(|b| {
            let i = b.label as usize - 1;
            top[i] >= cfg.y_filter_top_sections && bottom[i] >= cfg.y_filter_bottom_sections
        })
        .fold(None::<&Blob>, |best, b| match best {
            Some(cur) if cur.pixel_count >= b.pixel_count => Some(cur),
            _ => Some(b),
        });

    match best {
        Some(b) => YFilterOutcome {
            passes: true,
            mask: labeling.blob_mask(b.label),
        },
        None => YFilterOutcome {
            passes: false,
            mask: Mask::new(mask.width(), h),
        },
    }
}

/// A completely connected mask with no noise that is tree-shaped: exactly one
/// blob, and that blob passes the Y filter.
pub fn is_successful_label(mask: &Mask, cfg: &FilterConfig) -> bool {
    label_components(mask).blobs.len() == 1 && y_shaped_tree_filter(mask, cfg).passes
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(m: &mut Mask, x0: usize, x1: usize, y0: usize, y1: usize) {
        for y in y0..=y1 {
            for x in x0..=x1 {
                m.set(x, y, true);
            }
        }
    }

    /// A 256x256 Y: trunk x 126..=130 up to y 150, two diagonal-free arms
    /// built from vertical bars joined by a crossbar.
    fn y_tree() -> Mask {
        let mut m = Mask::new(256, 256);
        rect(&mut m, 126, 130, 0, 150);
        rect(&mut m, 90, 166, 150, 155);
        rect(&mut m, 90, 95, 150, 255);
        rect(&mut m, 161, 166, 150, 255);
        m
    }

    #[test]
    fn trunk_at_center_column() {
        let mut m = Mask::new(256, 256);
        rect(&mut m, 128, 128, 0, 39);
        let t = estimate_trunk_position(&m, &FilterConfig::default());
        assert_eq!(t, TrunkEstimate { t_pos: 128, found: true });
    }

    #[test]
    fn trunk_not_found_on_empty_bottom() {
        let mut m = Mask::new(64, 64);
        rect(&mut m, 10, 12, 50, 60);
        assert!(!estimate_trunk_position(&m, &FilterConfig::default()).found);
    }

    #[test]
    fn trunk_weighted_mean_truncates() {
        let mut m = Mask::new(64, 64);
        rect(&mut m, 10, 10, 0, 39);
        rect(&mut m, 20, 22, 0, 39);
        // oracle: (10*40 + 21*120) / 160 = 18.25
        let oracle = (10.0 * 40.0 + 21.0 * 120.0) / 160.0;
        assert_eq!(oracle, 18.25);
        let t = estimate_trunk_position(&m, &FilterConfig::default());
        assert_eq!(t.t_pos, 18);
    }

    #[test]
    fn small_blob_threshold_is_strict() {
        let cfg = FilterConfig::default();
        let mut m = Mask::new(40, 40);
        rect(&mut m, 0, 6, 0, 6); // 49
        assert!(small_blob_removal(&m, &cfg).is_empty());
        let mut m = Mask::new(40, 40);
        rect(&mut m, 0, 9, 0, 4); // 50
        assert_eq!(small_blob_removal(&m, &cfg), m);
        assert!(small_blob_removal(&Mask::new(5, 5), &cfg).is_empty());
    }

    #[test]
    fn small_blob_removal_keeps_tree() {
        let cfg = FilterConfig::default();
        let mut tree = Mask::new(64, 64);
        rect(&mut tree, 20, 23, 0, 49); // 200 px
        let mut noisy = tree.clone();
        rect(&mut noisy, 0, 1, 60, 64 - 1 - 0); // 2x4 = 8
        rect(&mut noisy, 40, 44, 30, 31); // 10
        rect(&mut noisy, 50, 51, 10, 14); // 10
        rect(&mut noisy, 58, 62, 50, 51); // 10
        assert_eq!(small_blob_removal(&noisy, &cfg), tree);
    }

    #[test]
    fn different_tree_bounds() {
        let cfg = FilterConfig::default();
        let trunk = TrunkEstimate { t_pos: 128, found: true };
        let mut far = Mask::new(256, 256);
        rect(&mut far, 239, 241, 100, 110);
        assert!(different_tree_detection(&far, trunk, &cfg).0.is_empty());
        let mut edge = Mask::new(256, 256);
        rect(&mut edge, 227, 229, 100, 110); // centroid x = 228
        assert_eq!(different_tree_detection(&edge, trunk, &cfg).0, edge);
    }

    #[test]
    fn different_tree_without_trunk_is_noop() {
        let cfg = FilterConfig::default();
        let mut m = Mask::new(64, 64);
        rect(&mut m, 0, 3, 30, 40);
        let (out, warn) = different_tree_detection(&m, TrunkEstimate::NOT_FOUND, &cfg);
        assert_eq!(out, m);
        assert!(warn.is_some());
    }

    #[test]
    fn false_branch_conjunction() {
        let cfg = FilterConfig::default();
        // centroid y 250, height 10 -> removed
        let mut m = Mask::new(256, 256);
        rect(&mut m, 100, 101, 245, 254);
        assert!(false_branch_detection(&m, &cfg).is_empty());
        // centroid y 250, height 4 -> kept
        let mut m = Mask::new(256, 256);
        rect(&mut m, 100, 101, 248, 251);
        assert_eq!(false_branch_detection(&m, &cfg), m);
        // centroid y 200, height 30 -> kept
        let mut m = Mask::new(256, 256);
        rect(&mut m, 100, 101, 185, 214);
        assert_eq!(false_branch_detection(&m, &cfg), m);
    }

    #[test]
    fn false_trunk_conjunction() {
        let cfg = FilterConfig::default();
        let trunk = TrunkEstimate { t_pos: 100, found: true };
        let mut pole = Mask::new(256, 256);
        rect(&mut pole, 156, 163, 0, 119); // centroid 159.5, h 120, w 8
        assert!(false_trunk_detection(&pole, trunk, &cfg).0.is_empty());
        let mut wide = Mask::new(256, 256);
        rect(&mut wide, 150, 169, 0, 119); // w 20
        assert_eq!(false_trunk_detection(&wide, trunk, &cfg).0, wide);
        let mut near = Mask::new(256, 256);
        rect(&mut near, 108, 112, 0, 119); // centroid 110
        assert_eq!(false_trunk_detection(&near, trunk, &cfg).0, near);
    }

    #[test]
    fn pre_filter_fixed_point_on_clean_tree() {
        let cfg = FilterConfig::default();
        let tree = y_tree();
        let out = atl_pre_filter(&tree, &cfg);
        assert_eq!(out.mask, tree);
        assert!(out.warnings.is_empty());
        assert_eq!(out.trunk.t_pos, 128);
    }

    #[test]
    fn pre_filter_on_empty() {
        let out = atl_pre_filter(&Mask::new(256, 256), &FilterConfig::default());
        assert!(out.mask.is_empty());
        assert_eq!(out.warnings.len(), 2);
    }

    #[test]
    fn pre_filter_removes_composed_artifacts() {
        let cfg = FilterConfig::default();
        let tree = y_tree();
        let mut noisy = tree.clone();
        rect(&mut noisy, 30, 32, 200, 202); // speck
        rect(&mut noisy, 200, 201, 60, 61); // speck
        rect(&mut noisy, 190, 195, 45, 164); // pole, centroid x 192.5
        rect(&mut noisy, 0, 10, 60, 120); // neighbour tree fragment
        rect(&mut noisy, 130, 135, 246, 255); // false branch end
        let out = atl_pre_filter(&noisy, &cfg);
        assert_eq!(out.mask, tree);
        // rerunning changes nothing
        assert_eq!(atl_pre_filter(&out.mask, &cfg).mask, out.mask);
    }

    #[test]
    fn y_filter_accepts_y_and_rejects_i() {
        let cfg = FilterConfig::default();
        let tree = y_tree();
        let out = y_shaped_tree_filter(&tree, &cfg);
        assert!(out.passes);
        assert_eq!(out.mask, tree);

        let mut i_shape = Mask::new(256, 256);
        rect(&mut i_shape, 126, 130, 0, 255);
        let out = y_shaped_tree_filter(&i_shape, &cfg);
        assert!(!out.passes);
        assert!(out.mask.is_empty());
    }

    #[test]
    fn y_filter_keeps_largest_qualifying_blob() {
        let cfg = FilterConfig::default();
        let tree = y_tree();
        let mut m = tree.clone();
        rect(&mut m, 200, 250, 60, 200); // bigger than the tree, not Y-shaped
        assert!(label_components(&m).blobs.iter().any(|b| b.pixel_count > tree.count()));
        let out = y_shaped_tree_filter(&m, &cfg);
        assert!(out.passes);
        assert_eq!(out.mask, tree);
        assert!(y_shaped_tree_filter(&out.mask, &cfg).passes);
    }

    #[test]
    fn config_validation() {
        assert!(FilterConfig::default().validate_for_height(256).is_ok());
        assert!(FilterConfig::default().validate_for_height(96).is_err());
        let bad = FilterConfig {
            min_blob_area: 0,
            ..FilterConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
