//! Ground-truth assignment: map annotated quads to pyramid levels and grid
//! locations, producing classification, regression, center-ness, and center
//! offset targets.

use crate::data::AnnotationSet;
use crate::geometry::{self, Quad};
use crate::grid::{self, FpnLevel, GridLocation, RegressionTarget, LEVELS};

pub const BACKGROUND: i32 = -1;

/// Default center-ness decay exponent.
pub const DEFAULT_ALPHA: f64 = 4.0;

/// Per-location training target. Background iff `class_id == BACKGROUND`,
/// in which case the regression and center-ness fields are absent.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationTarget {
    pub class_id: i32,
    pub regression: Option<RegressionTarget>,
    pub centerness: Option<f64>,
    /// Stride-normalized offset from the location to the vertex centroid,
    /// used by the center-to-corner strategy.
    pub center_offset: Option<[f64; 2]>,
}

impl LocationTarget {
    pub fn background() -> LocationTarget {
        LocationTarget {
            class_id: BACKGROUND,
            regression: None,
            centerness: None,
            center_offset: None,
        }
    }

    pub fn is_positive(&self) -> bool {
        self.class_id != BACKGROUND
    }
}

/// Targets for every grid cell of every level, row-major per level.
#[derive(Debug, Clone)]
pub struct TargetMap {
    pub image_h: i64,
    pub image_w: i64,
    levels: Vec<LevelTargets>,
}

#[derive(Debug, Clone)]
pub struct LevelTargets {
    pub level: FpnLevel,
    pub rows: u32,
    pub cols: u32,
    pub targets: Vec<LocationTarget>,
}

impl TargetMap {
    pub fn levels(&self) -> &[LevelTargets] {
        &self.levels
    }

    pub fn get(&self, level: FpnLevel, x: u32, y: u32) -> Option<&LocationTarget> {
        let lt = self.levels.iter().find(|l| l.level == level)?;
        if x >= lt.cols || y >= lt.rows {
            return None;
        }
        lt.targets.get((y * lt.cols + x) as usize)
    }

    pub fn positives(&self) -> impl Iterator<Item = (GridLocation, &LocationTarget)> {
        self.levels.iter().flat_map(|lt| {
            lt.targets.iter().enumerate().filter_map(move |(i, t)| {
                if t.is_positive() {
                    let x = i as u32 % lt.cols;
                    let y = i as u32 / lt.cols;
                    Some((GridLocation::new(lt.level, x, y), t))
                } else {
                    None
                }
            })
        })
    }

    pub fn total_locations(&self) -> usize {
        self.levels.iter().map(|l| l.targets.len()).sum()
    }
}

/// Picks the responsible pyramid level from the object's corner spread.
///
/// The size measure is twice the largest corner-to-centroid distance;
/// ranges (0,64] -> P3, (64,128] -> P4, (128,256] -> P5, (256,512] -> P6,
/// larger -> P7.
pub fn assign_level(quad: &Quad) -> FpnLevel {
    let c = quad.centroid();
    let m = quad
        .vertices()
        .iter()
        .map(|v| v.distance(&c) * 2.0)
        .fold(0.0, f64::max);
    if m <= 64.0 {
        FpnLevel::P3
    } else if m <= 128.0 {
        FpnLevel::P4
    } else if m <= 256.0 {
        FpnLevel::P5
    } else if m <= 512.0 {
        FpnLevel::P6
    } else {
        FpnLevel::P7
    }
}

/// Builds the full target map for one image.
///
/// A location is positive for a quad when the quad is assigned to the
/// location's level and the location's image point lies strictly inside
/// the quad. Ambiguities resolve to the smallest-area quad, ties broken by
/// annotation order. Boundary-touching locations stay background.
pub fn assign_locations(
    annotations: &AnnotationSet,
    image_h: i64,
    image_w: i64,
    alpha: f64,
) -> Result<TargetMap, grid::GridError> {
    struct Candidate {
        quad: Quad,
        class_id: i32,
        area: f64,
        level: FpnLevel,
    }
    let cands: Vec<Candidate> = annotations
        .objects
        .iter()
        .map(|obj| Candidate {
            quad: obj.quad,
            class_id: obj.class_id,
            area: geometry::area(&obj.quad),
            level: assign_level(&obj.quad),
        })
        .collect();

    let mut levels = Vec::with_capacity(LEVELS.len());
    for level in LEVELS {
        let (rows, cols) = grid::grid_shape(level, image_h, image_w)?;
        let mut targets = Vec::with_capacity((rows * cols) as usize);
        for y in 0..rows {
            for x in 0..cols {
                let loc = GridLocation::new(level, x, y);
                let mut best: Option<&Candidate> = None;
                for cand in cands.iter().filter(|c| c.level == level) {
                    if geometry::contains_strict(&cand.quad, loc.image_point) {
                        let better = match best {
                            None => true,
                            Some(b) => cand.area < b.area,
                        };
                        if better {
                            best = Some(cand);
                        }
                    }
                }
                let target = match best {
                    None => LocationTarget::background(),
                    Some(cand) => {
                        let centroid = cand.quad.centroid();
                        let s = loc.stride();
                        let centerness =
                            geometry::oriented_centerness(&cand.quad, loc.image_point, alpha)
                                .expect("strictly interior point");
                        LocationTarget {
                            class_id: cand.class_id,
                            regression: Some(grid::encode_target(&cand.quad, &loc)),
                            centerness: Some(centerness),
                            center_offset: Some([
                                (centroid.x - loc.image_point.x) / s,
                                (centroid.y - loc.image_point.y) / s,
                            ]),
                        }
                    }
                };
                targets.push(target);
            }
        }
        levels.push(LevelTargets {
            level,
            rows,
            cols,
            targets,
        });
    }
    Ok(TargetMap {
        image_h,
        image_w,
        levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{AnnotatedObject, AnnotationSet};
    use crate::geometry::Quad;

    fn square(cx: f64, cy: f64, side: f64) -> Quad {
        let h = side / 2.0;
        Quad::from_coords([
            cx - h,
            cy - h,
            cx + h,
            cy - h,
            cx + h,
            cy + h,
            cx - h,
            cy + h,
        ])
        .unwrap()
    }

    fn set(objects: Vec<AnnotatedObject>) -> AnnotationSet {
        AnnotationSet {
            image_id: "test".into(),
            image_w: 128,
            image_h: 128,
            objects,
        }
    }

    #[test]
    fn assign_level_examples() {
        assert_eq!(assign_level(&square(64.0, 64.0, 32.0)), FpnLevel::P3);
        assert_eq!(assign_level(&square(64.0, 64.0, 100.0)), FpnLevel::P5);
        assert_eq!(assign_level(&square(64.0, 64.0, 1000.0)), FpnLevel::P7);
    }

    #[test]
    fn empty_annotations_all_background() {
        let map = assign_locations(&set(vec![]), 128, 128, 4.0).unwrap();
        assert!(map.positives().next().is_none());
        assert_eq!(map.total_locations(), 256 + 64 + 16 + 4 + 1);
    }

    #[test]
    fn centered_square_gets_centerness_one() {
        // 8-px square centered exactly on P3 cell (1, 1) = image point (12, 12).
        let obj = AnnotatedObject {
            quad: square(12.0, 12.0, 8.0),
            class_id: 0,
            class_name: "a".into(),
            difficult: false,
        };
        let map = assign_locations(&set(vec![obj]), 128, 128, 4.0).unwrap();
        let t = map.get(FpnLevel::P3, 1, 1).unwrap();
        assert!(t.is_positive());
        assert!((t.centerness.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(t.center_offset.unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn nested_quads_resolve_to_smaller() {
        let big = AnnotatedObject {
            quad: square(12.0, 12.0, 40.0),
            class_id: 0,
            class_name: "a".into(),
            difficult: false,
        };
        let small = AnnotatedObject {
            quad: square(12.0, 12.0, 10.0),
            class_id: 1,
            class_name: "b".into(),
            difficult: false,
        };
        // Brute force over both orderings: the smaller-area quad always wins.
        for objs in [vec![big.clone(), small.clone()], vec![small, big]] {
            let map = assign_locations(&set(objs), 128, 128, 4.0).unwrap();
            let t = map.get(FpnLevel::P3, 1, 1).unwrap();
            assert_eq!(t.class_id, 1);
        }
    }

    #[test]
    fn positives_inside_their_quad() {
        let obj = AnnotatedObject {
            quad: square(40.0, 40.0, 30.0),
            class_id: 2,
            class_name: "c".into(),
            difficult: false,
        };
        let objs = set(vec![obj.clone()]);
        let map = assign_locations(&objs, 128, 128, 4.0).unwrap();
        let mut n = 0;
        for (loc, t) in map.positives() {
            assert!(crate::geometry::contains(&obj.quad, loc.image_point));
            let c = t.centerness.unwrap();
            assert!(c > 0.0 && c <= 1.0);
            n += 1;
        }
        assert!(n > 0);
    }

    #[test]
    fn deterministic() {
        let obj = AnnotatedObject {
            quad: square(40.0, 40.0, 30.0),
            class_id: 2,
            class_name: "c".into(),
            difficult: false,
        };
        let objs = set(vec![obj]);
        let a = assign_locations(&objs, 128, 128, 4.0).unwrap();
        let b = assign_locations(&objs, 128, 128, 4.0).unwrap();
        for lt in a.levels().iter().zip(b.levels()) {
            assert_eq!(lt.0.targets, lt.1.targets);
        }
    }
}
