use serde::{Deserialize, Serialize};

use super::Mask;

/// A maximal horizontal run of foreground pixels, `x_start..=x_end` on row `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowRun {
    pub y: usize,
    pub x_start: usize,
    pub x_end: usize,
}

impl RowRun {
    pub fn center(&self) -> f64 {
        (self.x_start + self.x_end) as f64 / 2.0
    }

    pub fn thickness(&self) -> usize {
        self.x_end - self.x_start + 1
    }

    pub fn contains(&self, x: i64) -> bool {
        x >= self.x_start as i64 && x <= self.x_end as i64
    }
}

/// Runs of one row, left to right.
pub(crate) fn runs_in_row(mask: &Mask, y: usize, out: &mut Vec<RowRun>) {
    let w = mask.width();
    let mut x = 0;
    while x < w {
        if mask.get(x, y) {
            let start = x;
            while x + 1 < w && mask.get(x + 1, y) {
                x += 1;
            }
            out.push(RowRun {
                y,
                x_start: start,
                x_end: x,
            });
        }
        x += 1;
    }
}

/// All maximal horizontal runs, top row first, left to right within a row.
pub fn row_runs(mask: &Mask) -> Vec<RowRun> {
    let mut out = Vec::new();
    for y in (0..mask.height()).rev() {
        runs_in_row(mask, y, &mut out);
    }
    out
}

/// Vertical runs expressed as runs of the counter-clockwise rotated mask:
/// `y` is the column index and the span is in storage rows (0 at the top).
/// Equal to `row_runs(&mask.rotate90())`.
pub fn column_runs(mask: &Mask) -> Vec<RowRun> {
    let h = mask.height();
    let mut out = Vec::new();
    for x in (0..mask.width()).rev() {
        let mut row = 0;
        while row < h {
            if mask.get_storage(row, x) {
                let start = row;
                while row + 1 < h && mask.get_storage(row + 1, x) {
                    row += 1;
                }
                out.push(RowRun {
                    y: x,
                    x_start: start,
                    x_end: row,
                });
            }
            row += 1;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkeletonPoint {
    pub y: usize,
    pub x: f64,
}

/// Per-row run centers of a mask: the target the template is fitted to.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PartialSkeleton {
    pub points: Vec<SkeletonPoint>,
}

impl PartialSkeleton {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn to_partial_skeleton(mask: &Mask) -> PartialSkeleton {
    PartialSkeleton {
        points: row_runs(mask)
            .into_iter()
            .map(|r| SkeletonPoint {
                y: r.y,
                x: r.center(),
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn paint(runs: &[RowRun], w: usize, h: usize) -> Mask {
        let mut m = Mask::new(w, h);
        for r in runs {
            for x in r.x_start..=r.x_end {
                m.set(x, r.y, true);
            }
        }
        m
    }

    #[test]
    fn single_run() {
        let m = Mask::from_ascii("..###...");
        let runs = row_runs(&m);
        assert_eq!(runs.len(), 1);
        assert_eq!(runs[0].center(), 3.0);
        assert_eq!(runs[0].thickness(), 3);
    }

    #[test]
    fn maximal_runs() {
        let m = Mask::from_ascii(".##..#..");
        let runs = row_runs(&m);
        assert_eq!(runs.len(), 2);
        assert_eq!((runs[0].x_start, runs[0].x_end), (1, 2));
        assert_eq!(runs[0].center(), 1.5);
        assert_eq!(runs[0].thickness(), 2);
        assert_eq!(runs[1].center(), 5.0);
        assert_eq!(runs[1].thickness(), 1);
    }

    #[test]
    fn full_width_run() {
        let runs = row_runs(&Mask::from_ascii("########"));
        assert_eq!(runs.len(), 1);
        assert_eq!(runs[0].center(), 3.5);
        assert_eq!(runs[0].thickness(), 8);
    }

    #[test]
    fn vertical_line_column_run() {
        let m = Mask::from_fn(4, 5, |x, _| x == 1);
        let runs = column_runs(&m);
        assert_eq!(runs.len(), 1);
        assert_eq!(runs[0].thickness(), 5);
        assert!(column_runs(&Mask::new(3, 3)).is_empty());
    }

    #[test]
    fn skeleton_points() {
        let m = Mask::from_fn(8, 8, |x, y| y == 7 && (2..=4).contains(&x));
        let s = to_partial_skeleton(&m);
        assert_eq!(s.points, vec![SkeletonPoint { y: 7, x: 3.0 }]);
        assert!(to_partial_skeleton(&Mask::new(5, 5)).is_empty());
    }

    #[test]
    fn y_fixture_has_two_points_per_top_row() {
        // trunk in rows 0..6, two arms above
        let m = Mask::from_fn(12, 10, |x, y| {
            (y < 6 && (5..=6).contains(&x)) || (y >= 6 && (x == 2 || x == 9))
        });
        let s = to_partial_skeleton(&m);
        for y in 6..10 {
            assert_eq!(s.points.iter().filter(|p| p.y == y).count(), 2);
        }
        assert_eq!(s.len(), 6 + 2 * 4);
    }

    fn mask_strategy() -> impl Strategy<Value = Mask> {
        (1usize..17, 1usize..17)
            .prop_flat_map(|(w, h)| {
                proptest::collection::vec(any::<bool>(), w * h).prop_map(move |bits| {
                    Mask::from_fn(w, h, |x, y| bits[y * w + x])
                })
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn column_runs_match_rotated_row_runs(m in mask_strategy()) {
            prop_assert_eq!(column_runs(&m), row_runs(&m.rotate90()));
        }

        #[test]
        fn runs_reconstruct_mask(m in mask_strategy()) {
            prop_assert_eq!(paint(&row_runs(&m), m.width(), m.height()), m.clone());
            let rot = m.rotate90();
            prop_assert_eq!(paint(&column_runs(&m), rot.width(), rot.height()), rot);
        }

        #[test]
        fn runs_are_maximal_and_ordered(m in mask_strategy()) {
            let runs = row_runs(&m);
            for r in &runs {
                prop_assert!(r.x_start <= r.x_end);
                prop_assert!(r.x_start == 0 || !m.get(r.x_start - 1, r.y));
                prop_assert!(r.x_end + 1 == m.width() || !m.get(r.x_end + 1, r.y));
            }
            for pair in runs.windows(2) {
                let (a, b) = (pair[0], pair[1]);
                prop_assert!(a.y > b.y || (a.y == b.y && a.x_end < b.x_start));
            }
            prop_assert_eq!(to_partial_skeleton(&m).len(), runs.len());
        }
    }
}
