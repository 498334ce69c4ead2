//! Deterministic synthetic scenes: gray-green noise background, dark road
//! strips, green tree disks with 16-gon crown polygons. A desk-scale
//! stand-in for aerial imagery with road-side tree annotations.

use crate::error::{Error, Result};
use crate::geodata::{FeatureSet, Point2, Polygon, Polyline};
use crate::maskgen::point_segment_distance;
use crate::raster::{GridTransform, Raster, Samples};
use crate::rng::SplitMix64;

/// Ground resolution of generated scenes, meters per pixel.
pub const SCENE_PIXEL_SIZE: f64 = 0.2;

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub image: Raster,
    pub roads: FeatureSet,
    pub crowns: FeatureSet,
}

struct Disk {
    center: Point2,
    /// meters
    radius: f64,
}

/// Generate a scene from the seed alone: same seed, same bytes.
///
/// Roads are straight chord polylines drawn as dark strips 4-8 px wide;
/// trees are disks of radius 4-10 px in saturated green, most of them
/// centered within 25 px of a road so that road-masked labels stay
/// nontrivial. Crowns are emitted as 16-gons whose area equals the disk
/// area.
pub fn generate_synthetic_scene(
    seed: u64,
    width: usize,
    height: usize,
    n_trees: usize,
    n_roads: usize,
) -> Result<SyntheticScene> {
    if width < 64 || height < 64 {
        return Err(Error::validation(format!(
            "scene must be at least 64x64 pixels, got {width}x{height}"
        )));
    }
    let grid = GridTransform::new(0.0, 0.0, SCENE_PIXEL_SIZE, width, height)?;
    let ps = SCENE_PIXEL_SIZE;
    let (extent_x, extent_y) = (width as f64 * ps, height as f64 * ps);
    let mut rng = SplitMix64::new(seed);

    // background: per-pixel noise around gray-green
    let n = width * height;
    let mut rgb = [vec![0u8; n], vec![0u8; n], vec![0u8; n]];
    let base = [108.0, 122.0, 96.0];
    for i in 0..n {
        for band in 0..3 {
            rgb[band][i] = (base[band] + rng.uniform(-10.0, 10.0)).clamp(0.0, 255.0) as u8;
        }
    }

    // roads: straight chords of moderate length at random positions/angles
    let mut roads: Vec<(Polyline, f64)> = Vec::with_capacity(n_roads);
    for _ in 0..n_roads {
        let half = rng.uniform(0.175, 0.275) * extent_x.min(extent_y);
        let cx = rng.uniform(half, extent_x - half);
        let cy = rng.uniform(-extent_y + half, -half);
        let angle = rng.uniform(0.0, std::f64::consts::PI);
        let (dx, dy) = (angle.cos() * half, angle.sin() * half);
        let a = Point2::new(cx - dx, cy - dy);
        let b = Point2::new(cx + dx, cy + dy);
        let width_px = rng.uniform(4.0, 8.0);
        roads.push((Polyline::new(vec![a, b])?, width_px));
    }
    for (road, width_px) in &roads {
        let radius = width_px / 2.0 * ps;
        let (a, b) = (road.vertices[0], road.vertices[1]);
        paint_strip(&grid, &mut rgb, &mut rng, a, b, radius);
    }

    // trees: three of every four hug a road (well inside the 25 px buffer),
    // the rest land anywhere
    let mut disks: Vec<Disk> = Vec::with_capacity(n_trees);
    for k in 0..n_trees {
        let radius_px = rng.uniform(4.0, 10.0);
        let radius = radius_px * ps;
        let center = if k % 4 < 3 && !roads.is_empty() {
            let (road, _) = &roads[rng.below(roads.len() as u64) as usize];
            let (a, b) = (road.vertices[0], road.vertices[1]);
            let t = rng.next_f64();
            let offset = rng.uniform(-18.0 * ps, 18.0 * ps);
            let dx = b.x - a.x;
            let dy = b.y - a.y;
            let len = (dx * dx + dy * dy).sqrt();
            let (nx, ny) = if len > 0.0 { (-dy / len, dx / len) } else { (0.0, 1.0) };
            Point2::new(
                (a.x + t * dx + offset * nx).clamp(radius, extent_x - radius),
                (a.y + t * dy + offset * ny).clamp(-extent_y + radius, -radius),
            )
        } else {
            Point2::new(
                rng.uniform(radius, extent_x - radius),
                rng.uniform(-extent_y + radius, -radius),
            )
        };
        disks.push(Disk { center, radius });
    }
    for disk in &disks {
        paint_disk(&grid, &mut rgb, &mut rng, disk);
    }

    let mut data = Vec::with_capacity(3 * n);
    for band in rgb {
        data.extend(band);
    }
    let image = Raster::new(grid, 3, Samples::U8(data))?;

    let crowns = FeatureSet {
        polylines: vec![],
        polygons: disks.iter().map(crown_polygon).collect::<Result<Vec<_>>>()?,
    };
    let roads = FeatureSet {
        polylines: roads.into_iter().map(|(line, _)| line).collect(),
        polygons: vec![],
    };
    Ok(SyntheticScene { image, roads, crowns })
}

fn paint_strip(
    grid: &GridTransform,
    rgb: &mut [Vec<u8>; 3],
    rng: &mut SplitMix64,
    a: Point2,
    b: Point2,
    radius: f64,
) {
    let (w, h) = (grid.width, grid.height);
    for row in 0..h {
        for col in 0..w {
            let center = grid.pixel_center(row, col).expect("in range");
            if point_segment_distance(center, a, b) <= radius {
                let shade = 60.0 + rng.uniform(-5.0, 5.0);
                for band in rgb.iter_mut() {
                    band[row * w + col] = shade.clamp(0.0, 255.0) as u8;
                }
            }
        }
    }
}

fn paint_disk(grid: &GridTransform, rgb: &mut [Vec<u8>; 3], rng: &mut SplitMix64, disk: &Disk) {
    let ps = grid.pixel_size;
    let w = grid.width;
    let col0 = (((disk.center.x - disk.radius) / ps).floor() - 1.0).max(0.0) as usize;
    let col1 = ((((disk.center.x + disk.radius) / ps).ceil() + 1.0).max(0.0) as usize).min(w);
    let row0 = (((-disk.center.y - disk.radius) / ps).floor() - 1.0).max(0.0) as usize;
    let row1 =
        ((((-disk.center.y + disk.radius) / ps).ceil() + 1.0).max(0.0) as usize).min(grid.height);
    let base = [40.0, 150.0, 45.0];
    for row in row0..row1 {
        for col in col0..col1 {
            let c = grid.pixel_center(row, col).expect("in range");
            let dx = c.x - disk.center.x;
            let dy = c.y - disk.center.y;
            if dx * dx + dy * dy <= disk.radius * disk.radius {
                for (band, &b) in rgb.iter_mut().zip(&base) {
                    band[row * w + col] = (b + rng.uniform(-12.0, 12.0)).clamp(0.0, 255.0) as u8;
                }
            }
        }
    }
}

/// 16-gon approximation of a disk, radius scaled so the polygon area equals
/// the disk area (pi r^2 / (8 sin(pi/8) r^2))^0.5.
fn crown_polygon(disk: &Disk) -> Result<Polygon> {
    let sides = 16usize;
    let area_ratio = std::f64::consts::PI / (8.0 * (std::f64::consts::PI / 8.0).sin());
    let r = disk.radius * area_ratio.sqrt();
    let ring = (0..sides)
        .map(|i| {
            let t = std::f64::consts::TAU * i as f64 / sides as f64;
            Point2::new(disk.center.x + r * t.cos(), disk.center.y + r * t.sin())
        })
        .collect();
    Polygon::new(ring, vec![])
}
