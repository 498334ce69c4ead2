//! Binary mask and label rasterization.
//!
//! The road mask is the set of pixels whose center lies within `radius`
//! meters of any road segment (round caps and joins implied). Labels are
//! crown polygons burned by the even-odd crossing-number rule. Both
//! rasterizers are defined by the naive per-pixel oracles in [`oracle`];
//! the accelerated paths here must stay bitwise-equal to them.

use crate::error::{Error, Result};
use crate::geodata::{Point2, Polygon, Polyline};
use crate::raster::{GridTransform, Raster, Samples};

/// Buffer radius around road centerlines, in meters.
#[derive(Debug, Clone, Copy)]
pub struct BufferSpec {
    pub radius: f64,
}

impl Default for BufferSpec {
    fn default() -> Self {
        BufferSpec { radius: 5.0 }
    }
}

impl BufferSpec {
    pub fn new(radius: f64) -> Result<Self> {
        if !(radius >= 0.0) {
            return Err(Error::validation(format!("buffer radius must be >= 0, got {radius}")));
        }
        Ok(BufferSpec { radius })
    }
}

/// Euclidean distance from `p` to the closed segment `ab` (a == b allowed).
pub fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0)
    };
    let cx = a.x + t * dx;
    let cy = a.y + t * dy;
    ((p.x - cx) * (p.x - cx) + (p.y - cy) * (p.y - cy)).sqrt()
}

/// Even-odd crossing-number containment with the half-open edge rule:
/// an edge (y1 -> y2) crosses the horizontal ray through `p` iff
/// y1 <= p.y < y2 or y2 <= p.y < y1, and only x-intersections strictly
/// greater than p.x count. Holes subtract via parity.
pub fn point_in_polygon(p: Point2, polygon: &Polygon) -> bool {
    let mut crossings = 0usize;
    for ring in polygon.rings() {
        let n = ring.len();
        for i in 0..n {
            let a = ring[i];
            let b = ring[(i + 1) % n];
            let spans = (a.y <= p.y && p.y < b.y) || (b.y <= p.y && p.y < a.y);
            if spans {
                let t = (p.y - a.y) / (b.y - a.y);
                let x_int = a.x + t * (b.x - a.x);
                if x_int > p.x {
                    crossings += 1;
                }
            }
        }
    }
    crossings % 2 == 1
}

/// Rasterize buffered polylines into a binary mask.
///
/// Accelerated by restricting each segment to its radius-expanded bounding
/// box in pixel space; per-pixel arithmetic is identical to the oracle, so
/// results are bitwise-equal.
pub fn rasterize_buffered_polylines(
    lines: &[Polyline],
    grid: &GridTransform,
    spec: &BufferSpec,
) -> Raster {
    let mut out = Raster::zeros_u8(*grid, 1);
    let r = spec.radius;
    for line in lines {
        for (a, b) in line.segments() {
            let min_x = a.x.min(b.x) - r;
            let max_x = a.x.max(b.x) + r;
            let min_y = a.y.min(b.y) - r;
            let max_y = a.y.max(b.y) + r;
            // one pixel of slack on every side keeps the range conservative
            let col0 = (((min_x - grid.origin_x) / grid.pixel_size).floor() - 1.0).max(0.0) as usize;
            let col1 = ((((max_x - grid.origin_x) / grid.pixel_size).ceil() + 1.0).max(0.0) as usize)
                .min(grid.width);
            let row0 = (((grid.origin_y - max_y) / grid.pixel_size).floor() - 1.0).max(0.0) as usize;
            let row1 = ((((grid.origin_y - min_y) / grid.pixel_size).ceil() + 1.0).max(0.0) as usize)
                .min(grid.height);
            for row in row0..row1 {
                for col in col0..col1 {
                    if out.get_u8(0, row, col) == 1 {
                        continue;
                    }
                    let center = grid.pixel_center(row, col).expect("in range");
                    if point_segment_distance(center, a, b) <= r {
                        out.set_u8(0, row, col, 1);
                    }
                }
            }
        }
    }
    out
}

/// Burn crown polygons into a binary label raster (pixel-center membership).
pub fn rasterize_polygons(polys: &[Polygon], grid: &GridTransform) -> Result<Raster> {
    let mut out = Raster::zeros_u8(*grid, 1);
    for poly in polys {
        // re-validate: callers may have constructed rings directly
        for ring in poly.rings() {
            let mut distinct: Vec<Point2> = Vec::new();
            for &p in ring {
                if !distinct.iter().any(|q| q.x == p.x && q.y == p.y) {
                    distinct.push(p);
                }
            }
            if distinct.len() < 3 {
                return Err(Error::validation("degenerate ring with < 3 distinct vertices"));
            }
        }
        let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
        for ring in poly.rings() {
            for p in ring {
                min_x = min_x.min(p.x);
                max_x = max_x.max(p.x);
                min_y = min_y.min(p.y);
                max_y = max_y.max(p.y);
            }
        }
        let ps = grid.pixel_size;
        let col0 = (((min_x - grid.origin_x) / ps).floor() - 1.0).max(0.0) as usize;
        let col1 = ((((max_x - grid.origin_x) / ps).ceil() + 1.0).max(0.0) as usize).min(grid.width);
        let row0 = (((grid.origin_y - max_y) / ps).floor() - 1.0).max(0.0) as usize;
        let row1 = ((((grid.origin_y - min_y) / ps).ceil() + 1.0).max(0.0) as usize).min(grid.height);
        for row in row0..row1 {
            for col in col0..col1 {
                if out.get_u8(0, row, col) == 1 {
                    continue;
                }
                let center = grid.pixel_center(row, col).expect("in range");
                if point_in_polygon(center, poly) {
                    out.set_u8(0, row, col, 1);
                }
            }
        }
    }
    Ok(out)
}

/// Zero every sample of every band where the mask is 0 (the AND operator).
pub fn apply_mask(values: &Raster, mask: &Raster) -> Result<Raster> {
    if values.grid != mask.grid {
        return Err(Error::validation("value and mask grids differ"));
    }
    if !mask.is_binary_mask() {
        return Err(Error::validation("mask must be a single-band binary u8 raster"));
    }
    let mask_data = match &mask.data {
        Samples::U8(v) => v,
        Samples::F32(_) => unreachable!("is_binary_mask checked u8"),
    };
    let n = values.grid.pixel_count();
    let data = match &values.data {
        Samples::U8(v) => Samples::U8(
            v.iter()
                .enumerate()
                .map(|(i, &s)| s * mask_data[i % n])
                .collect(),
        ),
        Samples::F32(v) => Samples::F32(
            v.iter()
                .enumerate()
                .map(|(i, &s)| s * mask_data[i % n] as f32)
                .collect(),
        ),
    };
    Raster::new(values.grid, values.bands, data)
}

/// Naive per-pixel reference rasterizers. These define the semantics that
/// the accelerated paths above are tested against; they share only the
/// scalar kernels ([`point_segment_distance`], [`point_in_polygon`]) and
/// iterate every pixel against every primitive.
pub mod oracle {
    use super::*;

    pub fn buffered_polylines(lines: &[Polyline], grid: &GridTransform, spec: &BufferSpec) -> Raster {
        let mut out = Raster::zeros_u8(*grid, 1);
        for row in 0..grid.height {
            for col in 0..grid.width {
                let center = grid.pixel_center(row, col).expect("in range");
                let hit = lines.iter().any(|line| {
                    line.segments()
                        .any(|(a, b)| point_segment_distance(center, a, b) <= spec.radius)
                });
                if hit {
                    out.set_u8(0, row, col, 1);
                }
            }
        }
        out
    }

    pub fn polygons(polys: &[Polygon], grid: &GridTransform) -> Raster {
        let mut out = Raster::zeros_u8(*grid, 1);
        for row in 0..grid.height {
            for col in 0..grid.width {
                let center = grid.pixel_center(row, col).expect("in range");
                if polys.iter().any(|poly| point_in_polygon(center, poly)) {
                    out.set_u8(0, row, col, 1);
                }
            }
        }
        out
    }
}

/// Random line/polygon scenes for randomized oracle-equivalence tests.
pub mod scenes {
    use super::*;
    use crate::rng::SplitMix64;

    pub fn random_polylines(rng: &mut SplitMix64, count: usize, extent: f64) -> Vec<Polyline> {
        (0..count)
            .map(|_| {
                let n = 2 + rng.below(4) as usize;
                let vertices: Vec<Point2> = (0..n)
                    .map(|_| Point2::new(rng.uniform(-2.0, extent + 2.0), rng.uniform(-extent - 2.0, 2.0)))
                    .collect();
                Polyline::new(vertices).expect("random vertices are distinct with probability 1")
            })
            .collect()
    }

    /// Star-shaped (hence simple) polygons: sorted angles, random radii.
    pub fn random_polygons(rng: &mut SplitMix64, count: usize, extent: f64) -> Vec<Polygon> {
        (0..count)
            .map(|_| {
                let cx = rng.uniform(0.0, extent);
                let cy = rng.uniform(-extent, 0.0);
                let n = 3 + rng.below(8) as usize;
                let mut angles: Vec<f64> =
                    (0..n).map(|_| rng.uniform(0.0, std::f64::consts::TAU)).collect();
                angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
                angles.dedup();
                while angles.len() < 3 {
                    angles.push(angles.last().unwrap() + 0.1);
                }
                let ring: Vec<Point2> = angles
                    .iter()
                    .map(|&t| {
                        let r = rng.uniform(extent * 0.05, extent * 0.4);
                        Point2::new(cx + r * t.cos(), cy + r * t.sin())
                    })
                    .collect();
                Polygon::new(ring, vec![]).expect("star polygon rings are valid")
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn grid(w: usize, h: usize, ps: f64) -> GridTransform {
        GridTransform::new(0.0, 0.0, ps, w, h).unwrap()
    }

    #[test]
    fn segment_distance_cases() {
        let d = point_segment_distance(Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(1.0, 1.0));
        assert_eq!(d, 1.0);
        let d = point_segment_distance(Point2::new(2.0, 0.0), Point2::new(0.0, 0.0), Point2::new(1.0, 0.0));
        assert_eq!(d, 1.0);
        let d = point_segment_distance(Point2::new(0.5, 0.5), Point2::new(0.0, 0.0), Point2::new(1.0, 0.0));
        assert_eq!(d, 0.5);
        // degenerate segment
        let d = point_segment_distance(Point2::new(3.0, 4.0), Point2::new(0.0, 0.0), Point2::new(0.0, 0.0));
        assert_eq!(d, 5.0);
    }

    #[test]
    fn empty_polyline_list_is_all_zeros() {
        let out = rasterize_buffered_polylines(&[], &grid(5, 5, 1.0), &BufferSpec::default());
        assert!(matches!(&out.data, Samples::U8(v) if v.iter().all(|&s| s == 0)));
    }

    #[test]
    fn horizontal_segment_sets_three_middle_rows() {
        let g = grid(5, 5, 1.0);
        let line = Polyline::new(vec![Point2::new(0.0, -2.5), Point2::new(5.0, -2.5)]).unwrap();
        let out = rasterize_buffered_polylines(&[line], &g, &BufferSpec::new(1.0).unwrap());
        for row in 0..5 {
            for col in 0..5 {
                let expected = if (1..=3).contains(&row) { 1 } else { 0 };
                assert_eq!(out.get_u8(0, row, col), expected, "({row}, {col})");
            }
        }
    }

    #[test]
    fn buffered_matches_oracle_on_random_scenes() {
        let mut rng = SplitMix64::new(99);
        for _ in 0..10 {
            let g = GridTransform::new(0.0, 0.0, 0.2, 64, 64).unwrap();
            let lines = scenes::random_polylines(&mut rng, 100, 64.0 * 0.2);
            let spec = BufferSpec::new(5.0).unwrap();
            let fast = rasterize_buffered_polylines(&lines, &g, &spec);
            let slow = oracle::buffered_polylines(&lines, &g, &spec);
            assert_eq!(fast, slow);
        }
    }

    #[test]
    fn axis_aligned_square_burn() {
        let g = grid(4, 4, 1.0);
        let square = Polygon::new(
            vec![
                Point2::new(0.0, 0.0),
                Point2::new(2.0, 0.0),
                Point2::new(2.0, -2.0),
                Point2::new(0.0, -2.0),
            ],
            vec![],
        )
        .unwrap();
        let out = rasterize_polygons(&[square], &g).unwrap();
        for row in 0..4 {
            for col in 0..4 {
                let expected = if row < 2 && col < 2 { 1 } else { 0 };
                assert_eq!(out.get_u8(0, row, col), expected, "({row}, {col})");
            }
        }
    }

    #[test]
    fn hole_clears_center_pixel() {
        let g = grid(3, 3, 1.0);
        let outer = vec![
            Point2::new(0.0, 0.0),
            Point2::new(3.0, 0.0),
            Point2::new(3.0, -3.0),
            Point2::new(0.0, -3.0),
        ];
        let hole = vec![
            Point2::new(1.2, -1.2),
            Point2::new(1.8, -1.2),
            Point2::new(1.8, -1.8),
            Point2::new(1.2, -1.8),
        ];
        let out = rasterize_polygons(&[Polygon::new(outer, vec![hole]).unwrap()], &g).unwrap();
        assert_eq!(out.get_u8(0, 1, 1), 0);
        assert_eq!(out.get_u8(0, 0, 0), 1);
        assert_eq!(out.get_u8(0, 2, 2), 1);
    }

    #[test]
    fn polygons_match_oracle_on_random_scenes() {
        let mut rng = SplitMix64::new(7);
        for _ in 0..10 {
            let g = GridTransform::new(0.0, 0.0, 0.2, 64, 64).unwrap();
            let polys = scenes::random_polygons(&mut rng, 50, 64.0 * 0.2);
            let fast = rasterize_polygons(&polys, &g).unwrap();
            let slow = oracle::polygons(&polys, &g);
            assert_eq!(fast, slow);
        }
    }

    #[test]
    fn degenerate_ring_rejected() {
        let g = grid(2, 2, 1.0);
        let bad = Polygon {
            outer: vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 0.0)],
            holes: vec![],
        };
        assert!(rasterize_polygons(&[bad], &g).is_err());
    }

    #[test]
    fn radius_monotonicity() {
        let mut rng = SplitMix64::new(5);
        let g = GridTransform::new(0.0, 0.0, 0.5, 32, 32).unwrap();
        let lines = scenes::random_polylines(&mut rng, 8, 16.0);
        let small = rasterize_buffered_polylines(&lines, &g, &BufferSpec::new(1.0).unwrap());
        let large = rasterize_buffered_polylines(&lines, &g, &BufferSpec::new(3.0).unwrap());
        for row in 0..32 {
            for col in 0..32 {
                assert!(small.get_u8(0, row, col) <= large.get_u8(0, row, col));
            }
        }
    }

    #[test]
    fn translation_equivariance() {
        let mut rng = SplitMix64::new(11);
        let lines = scenes::random_polylines(&mut rng, 6, 10.0);
        let (dx, dy) = (123.25, -54.5);
        let shifted: Vec<Polyline> = lines
            .iter()
            .map(|l| {
                Polyline::new(
                    l.vertices.iter().map(|p| Point2::new(p.x + dx, p.y + dy)).collect(),
                )
                .unwrap()
            })
            .collect();
        let g = GridTransform::new(0.0, 0.0, 0.5, 24, 24).unwrap();
        let g2 = GridTransform::new(dx, dy, 0.5, 24, 24).unwrap();
        let spec = BufferSpec::new(2.0).unwrap();
        let a = rasterize_buffered_polylines(&lines, &g, &spec);
        let b = rasterize_buffered_polylines(&shifted, &g2, &spec);
        assert_eq!(a.data, b.data);
    }

    #[test]
    fn apply_mask_is_elementwise_product() {
        let g = grid(3, 2, 1.0);
        let mut rng = SplitMix64::new(3);
        let values: Vec<f32> = (0..12).map(|_| rng.uniform(-4.0, 4.0) as f32).collect();
        let mask_vals: Vec<u8> = (0..6).map(|_| (rng.below(2)) as u8).collect();
        let values_r = Raster::new(g, 2, Samples::F32(values.clone())).unwrap();
        let mask_r = Raster::new(g, 1, Samples::U8(mask_vals.clone())).unwrap();
        let out = apply_mask(&values_r, &mask_r).unwrap();
        let Samples::F32(out_v) = &out.data else { panic!() };
        for band in 0..2 {
            for i in 0..6 {
                assert_eq!(out_v[band * 6 + i], values[band * 6 + i] * mask_vals[i] as f32);
            }
        }
    }

    #[test]
    fn apply_mask_identity_and_annihilator() {
        let g = grid(2, 2, 1.0);
        let values = Raster::new(g, 1, Samples::U8(vec![9, 8, 7, 6])).unwrap();
        let ones = Raster::new(g, 1, Samples::U8(vec![1; 4])).unwrap();
        let zeros = Raster::zeros_u8(g, 1);
        assert_eq!(apply_mask(&values, &ones).unwrap(), values);
        let out = apply_mask(&values, &zeros).unwrap();
        assert!(matches!(&out.data, Samples::U8(v) if v.iter().all(|&s| s == 0)));
    }

    #[test]
    fn apply_mask_grid_mismatch() {
        let a = Raster::zeros_u8(grid(2, 2, 1.0), 1);
        let b = Raster::zeros_u8(grid(3, 2, 1.0), 1);
        assert!(apply_mask(&a, &b).is_err());
    }
}
