//! North-up affine pixel grid and the RRAS raster container shared by every
//! pipeline stage, plus PGM/PPM previews for human inspection.
//!
//! Point-to-pixel mapping is floor-based with left/top-inclusive edges; the
//! rasterizer and its oracle both rely on this one rule.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodata::Point2;

const RRAS_MAGIC: &[u8; 8] = b"RRASTER1";

/// North-up affine grid: origin at the top-left corner, y decreases as the
/// row index grows. Rotation/shear are unrepresentable by construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridTransform {
    pub origin_x: f64,
    pub origin_y: f64,
    pub pixel_size: f64,
    pub width: usize,
    pub height: usize,
}

impl GridTransform {
    pub fn new(origin_x: f64, origin_y: f64, pixel_size: f64, width: usize, height: usize) -> Result<Self> {
        if !(pixel_size > 0.0) {
            return Err(Error::validation(format!("pixel_size must be > 0, got {pixel_size}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::validation("grid must be at least 1x1"));
        }
        Ok(GridTransform { origin_x, origin_y, pixel_size, width, height })
    }

    /// World coordinates of the center of pixel (row, col).
    pub fn pixel_center(&self, row: usize, col: usize) -> Result<Point2> {
        if row >= self.height || col >= self.width {
            return Err(Error::validation(format!(
                "pixel ({row}, {col}) out of bounds for {}x{}",
                self.height, self.width
            )));
        }
        Ok(Point2 {
            x: self.origin_x + (col as f64 + 0.5) * self.pixel_size,
            y: self.origin_y - (row as f64 + 0.5) * self.pixel_size,
        })
    }

    /// Floor-based inverse mapping; `None` when the point falls outside the grid.
    pub fn world_to_pixel(&self, p: Point2) -> Option<(usize, usize)> {
        let col = ((p.x - self.origin_x) / self.pixel_size).floor();
        let row = ((self.origin_y - p.y) / self.pixel_size).floor();
        if col < 0.0 || row < 0.0 || col >= self.width as f64 || row >= self.height as f64 {
            return None;
        }
        Some((row as usize, col as usize))
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dtype {
    #[serde(rename = "u8")]
    U8,
    #[serde(rename = "f32")]
    F32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Samples {
    U8(Vec<u8>),
    F32(Vec<f32>),
}

impl Samples {
    pub fn len(&self) -> usize {
        match self {
            Samples::U8(v) => v.len(),
            Samples::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> Dtype {
        match self {
            Samples::U8(_) => Dtype::U8,
            Samples::F32(_) => Dtype::F32,
        }
    }
}

/// Band-sequential, row-major sample container on a [`GridTransform`].
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub grid: GridTransform,
    pub bands: usize,
    pub data: Samples,
}

impl Raster {
    pub fn new(grid: GridTransform, bands: usize, data: Samples) -> Result<Self> {
        let expected = bands * grid.pixel_count();
        if data.len() != expected {
            return Err(Error::validation(format!(
                "sample count {} does not match bands*width*height = {expected}",
                data.len()
            )));
        }
        Ok(Raster { grid, bands, data })
    }

    /// All-zero u8 raster; the starting point for masks and labels.
    pub fn zeros_u8(grid: GridTransform, bands: usize) -> Self {
        Raster { grid, bands, data: Samples::U8(vec![0; bands * grid.pixel_count()]) }
    }

    pub fn zeros_f32(grid: GridTransform, bands: usize) -> Self {
        Raster { grid, bands, data: Samples::F32(vec![0.0; bands * grid.pixel_count()]) }
    }

    pub fn dtype(&self) -> Dtype {
        self.data.dtype()
    }

    fn index(&self, band: usize, row: usize, col: usize) -> usize {
        (band * self.grid.height + row) * self.grid.width + col
    }

    pub fn get_u8(&self, band: usize, row: usize, col: usize) -> u8 {
        match &self.data {
            Samples::U8(v) => v[self.index(band, row, col)],
            Samples::F32(_) => panic!("raster is f32, not u8"),
        }
    }

    pub fn set_u8(&mut self, band: usize, row: usize, col: usize, value: u8) {
        let i = self.index(band, row, col);
        match &mut self.data {
            Samples::U8(v) => v[i] = value,
            Samples::F32(_) => panic!("raster is f32, not u8"),
        }
    }

    pub fn get_f32(&self, band: usize, row: usize, col: usize) -> f32 {
        match &self.data {
            Samples::F32(v) => v[self.index(band, row, col)],
            Samples::U8(_) => panic!("raster is u8, not f32"),
        }
    }

    pub fn set_f32(&mut self, band: usize, row: usize, col: usize, value: f32) {
        let i = self.index(band, row, col);
        match &mut self.data {
            Samples::F32(v) => v[i] = value,
            Samples::U8(_) => panic!("raster is u8, not f32"),
        }
    }

    /// True when this is a single-band u8 raster with samples in {0, 1}.
    pub fn is_binary_mask(&self) -> bool {
        self.bands == 1
            && matches!(&self.data, Samples::U8(v) if v.iter().all(|&s| s <= 1))
    }
}

#[derive(Serialize, Deserialize)]
struct RrasHeader {
    width: usize,
    height: usize,
    bands: usize,
    dtype: Dtype,
    origin_x: f64,
    origin_y: f64,
    pixel_size: f64,
}

pub fn rras_write(raster: &Raster, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_rras(raster, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_rras<W: Write>(raster: &Raster, w: &mut W) -> Result<()> {
    let header = RrasHeader {
        width: raster.grid.width,
        height: raster.grid.height,
        bands: raster.bands,
        dtype: raster.dtype(),
        origin_x: raster.grid.origin_x,
        origin_y: raster.grid.origin_y,
        pixel_size: raster.grid.pixel_size,
    };
    let header_bytes = serde_json::to_vec(&header).expect("header serialization cannot fail");
    w.write_all(RRAS_MAGIC)?;
    w.write_all(&(header_bytes.len() as u32).to_le_bytes())?;
    w.write_all(&header_bytes)?;
    match &raster.data {
        Samples::U8(v) => w.write_all(v)?,
        Samples::F32(v) => {
            for &s in v {
                w.write_all(&s.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn rras_read(path: &Path) -> Result<Raster> {
    let mut r = BufReader::new(File::open(path)?);
    read_rras(&mut r)
}

pub fn read_rras<R: Read>(r: &mut R) -> Result<Raster> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::format("RRAS file truncated before magic"))?;
    if &magic != RRAS_MAGIC {
        return Err(Error::format(format!(
            "bad RRAS magic {:?}",
            String::from_utf8_lossy(&magic)
        )));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)
        .map_err(|_| Error::format("RRAS file truncated in header length"))?;
    let mut header_bytes = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut header_bytes)
        .map_err(|_| Error::format("RRAS file truncated in header"))?;
    let header: RrasHeader = serde_json::from_slice(&header_bytes)
        .map_err(|e| Error::format(format!("bad RRAS header: {e}")))?;
    let grid = GridTransform::new(
        header.origin_x,
        header.origin_y,
        header.pixel_size,
        header.width,
        header.height,
    )?;
    let count = header.bands * grid.pixel_count();
    let data = match header.dtype {
        Dtype::U8 => {
            let mut v = vec![0u8; count];
            r.read_exact(&mut v)
                .map_err(|_| Error::format("RRAS file truncated in sample data"))?;
            Samples::U8(v)
        }
        Dtype::F32 => {
            let mut raw = vec![0u8; count * 4];
            r.read_exact(&mut raw)
                .map_err(|_| Error::format("RRAS file truncated in sample data"))?;
            Samples::F32(
                raw.chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            )
        }
    };
    Raster::new(grid, header.bands, data)
}

/// Load a grid from either an RRAS raster (`--like`) or a grid JSON file.
pub fn grid_from_json(text: &str) -> Result<GridTransform> {
    let g: GridTransform = serde_json::from_str(text)
        .map_err(|e| Error::format(format!("bad grid JSON: {e}")))?;
    GridTransform::new(g.origin_x, g.origin_y, g.pixel_size, g.width, g.height)
}

/// Options for [`export_preview`].
#[derive(Debug, Clone)]
pub struct PreviewOptions {
    /// Band indices to export: 1 band -> PGM, 3 bands -> PPM.
    pub bands: Vec<usize>,
    /// Multiply u8 samples by 255 (for {0,1} masks). f32 is unaffected.
    pub scale_binary: bool,
}

/// Write a binary PGM (1 band) or PPM (3 bands) preview.
///
/// u8 samples pass through (optionally scaled x255); f32 samples are scaled
/// linearly from [min, max] to [0, 255], a constant raster mapping to 0.
pub fn export_preview(raster: &Raster, path: &Path, options: &PreviewOptions) -> Result<()> {
    let n = options.bands.len();
    if n != 1 && n != 3 {
        return Err(Error::validation(format!("preview needs 1 or 3 bands, got {n}")));
    }
    for &b in &options.bands {
        if b >= raster.bands {
            return Err(Error::validation(format!(
                "band index {b} out of range for {}-band raster",
                raster.bands
            )));
        }
    }
    let (w, h) = (raster.grid.width, raster.grid.height);
    let mut out = BufWriter::new(File::create(path)?);
    let kind = if n == 1 { "P5" } else { "P6" };
    write!(out, "{kind}\n{w} {h}\n255\n")?;

    let (lo, hi) = match &raster.data {
        Samples::F32(v) => v.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &s| {
            (lo.min(s), hi.max(s))
        }),
        Samples::U8(_) => (0.0, 0.0),
    };
    let mut pixel = Vec::with_capacity(n);
    for row in 0..h {
        for col in 0..w {
            pixel.clear();
            for &band in &options.bands {
                let byte = match &raster.data {
                    Samples::U8(_) => {
                        let s = raster.get_u8(band, row, col);
                        if options.scale_binary { s.saturating_mul(255) } else { s }
                    }
                    Samples::F32(_) => {
                        let s = raster.get_f32(band, row, col);
                        if hi > lo {
                            (((s - lo) / (hi - lo)) * 255.0).round().clamp(0.0, 255.0) as u8
                        } else {
                            0
                        }
                    }
                };
                pixel.push(byte);
            }
            out.write_all(&pixel)?;
        }
    }
    out.flush()?;
    Ok(())
}
