//! Slicing aligned image/mask/label rasters into fixed-size training
//! patches: deterministic windowing, zero padding for undersized rasters,
//! reproducible split assignment and the MKPATCH1 archive container.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{GridTransform, Raster};
use crate::rng::{shuffle, SplitMix64};

const ARCHIVE_MAGIC: &[u8; 8] = b"MKPATCH1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchSpec {
    pub size: usize,
    pub stride: usize,
}

impl Default for PatchSpec {
    fn default() -> Self {
        PatchSpec { size: 256, stride: 128 }
    }
}

impl PatchSpec {
    pub fn new(size: usize, stride: usize) -> Result<Self> {
        if size < 1 || stride < 1 || stride > size {
            return Err(Error::validation(format!(
                "patch spec needs size >= 1 and 1 <= stride <= size, got size {size} stride {stride}"
            )));
        }
        Ok(PatchSpec { size, stride })
    }
}

/// One training sample: normalized RGB, validity mask, label, and the
/// window origin in the source grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    /// [3, size, size], u8 samples divided by 255.
    pub image: Vec<f32>,
    /// [size, size], values in {0, 1}.
    pub mask: Vec<u8>,
    /// [size, size], values in {0, 1}.
    pub label: Vec<u8>,
    pub row0: usize,
    pub col0: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    pub tags: Vec<Split>,
    pub seed: u64,
    pub fractions: (f64, f64, f64),
}

/// Row-major window origins. Starts are multiples of the stride with
/// `start + size <= dim`; a dimension smaller than `size` yields the single
/// start 0 (zero padding applies at extraction).
pub fn plan_windows(height: usize, width: usize, spec: &PatchSpec) -> Vec<(usize, usize)> {
    let starts = |dim: usize| -> Vec<usize> {
        if dim < spec.size {
            vec![0]
        } else {
            (0..)
                .map(|k| k * spec.stride)
                .take_while(|&s| s + spec.size <= dim)
                .collect()
        }
    };
    let rows = starts(height);
    let cols = starts(width);
    let mut out = Vec::with_capacity(rows.len() * cols.len());
    for &r in &rows {
        for &c in &cols {
            out.push((r, c));
        }
    }
    out
}

/// Cut one patch per planned window. Samples outside the raster read as 0
/// in every channel; image samples are normalized to [0, 1].
pub fn extract_patches(
    image: &Raster,
    mask: &Raster,
    label: &Raster,
    spec: &PatchSpec,
) -> Result<Vec<Patch>> {
    if image.grid != mask.grid || image.grid != label.grid {
        return Err(Error::validation("image, mask and label must share one grid"));
    }
    if image.bands != 3 || image.dtype() != crate::raster::Dtype::U8 {
        return Err(Error::validation("image must be a 3-band u8 raster"));
    }
    if !mask.is_binary_mask() || !label.is_binary_mask() {
        return Err(Error::validation("mask and label must be single-band binary rasters"));
    }
    let (h, w) = (image.grid.height, image.grid.width);
    let s = spec.size;
    let windows = plan_windows(h, w, spec);
    let mut patches = Vec::with_capacity(windows.len());
    for (row0, col0) in windows {
        let mut patch = Patch {
            image: vec![0.0; 3 * s * s],
            mask: vec![0; s * s],
            label: vec![0; s * s],
            row0,
            col0,
        };
        let rows = s.min(h.saturating_sub(row0));
        let cols = s.min(w.saturating_sub(col0));
        for dr in 0..rows {
            for dc in 0..cols {
                let (r, c) = (row0 + dr, col0 + dc);
                for band in 0..3 {
                    patch.image[(band * s + dr) * s + dc] =
                        image.get_u8(band, r, c) as f32 / 255.0;
                }
                patch.mask[dr * s + dc] = mask.get_u8(0, r, c);
                patch.label[dr * s + dc] = label.get_u8(0, r, c);
            }
        }
        patches.push(patch);
    }
    Ok(patches)
}

/// Deterministic split: n_test = floor(f_test*n), n_val = floor(f_val*n),
/// the rest train; indices Fisher-Yates-shuffled by splitmix64(seed).
pub fn split_assign(n: usize, fractions: (f64, f64, f64), seed: u64) -> Result<SplitAssignment> {
    let (f_train, f_val, f_test) = fractions;
    if f_train < 0.0 || f_val < 0.0 || f_test < 0.0 || (f_train + f_val + f_test - 1.0).abs() > 1e-9
    {
        return Err(Error::validation(format!(
            "split fractions must be non-negative and sum to 1, got {fractions:?}"
        )));
    }
    let n_test = (f_test * n as f64).floor() as usize;
    let n_val = (f_val * n as f64).floor() as usize;
    let n_train = n - n_val - n_test;

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = SplitMix64::new(seed);
    shuffle(&mut order, &mut rng);

    let mut tags = vec![Split::Test; n];
    for (pos, &idx) in order.iter().enumerate() {
        tags[idx] = if pos < n_train {
            Split::Train
        } else if pos < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok(SplitAssignment { tags, seed, fractions })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestEntry {
    row0: usize,
    col0: usize,
    split: Split,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    size: usize,
    stride: usize,
    count: usize,
    seed: u64,
    fractions: (f64, f64, f64),
    grid: GridTransform,
    entries: Vec<ManifestEntry>,
}

/// A patch archive in memory: the patches plus everything the manifest
/// records about their provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchArchive {
    pub spec: PatchSpec,
    pub grid: GridTransform,
    pub assignment: SplitAssignment,
    pub patches: Vec<Patch>,
}

impl PatchArchive {
    pub fn new(
        spec: PatchSpec,
        grid: GridTransform,
        assignment: SplitAssignment,
        patches: Vec<Patch>,
    ) -> Result<Self> {
        if assignment.tags.len() != patches.len() {
            return Err(Error::validation(format!(
                "{} split tags for {} patches",
                assignment.tags.len(),
                patches.len()
            )));
        }
        Ok(PatchArchive { spec, grid, assignment, patches })
    }

    pub fn indices_of(&self, split: Split) -> Vec<usize> {
        self.assignment
            .tags
            .iter()
            .enumerate()
            .filter(|(_, &t)| t == split)
            .map(|(i, _)| i)
            .collect()
    }
}

pub fn archive_write(archive: &PatchArchive, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let manifest = Manifest {
        size: archive.spec.size,
        stride: archive.spec.stride,
        count: archive.patches.len(),
        seed: archive.assignment.seed,
        fractions: archive.assignment.fractions,
        grid: archive.grid,
        entries: archive
            .patches
            .iter()
            .zip(&archive.assignment.tags)
            .map(|(p, &split)| ManifestEntry { row0: p.row0, col0: p.col0, split })
            .collect(),
    };
    let manifest_bytes = serde_json::to_vec(&manifest).expect("manifest serialization cannot fail");
    w.write_all(ARCHIVE_MAGIC)?;
    w.write_all(&(manifest_bytes.len() as u32).to_le_bytes())?;
    w.write_all(&manifest_bytes)?;
    for patch in &archive.patches {
        for &s in &patch.image {
            w.write_all(&s.to_le_bytes())?;
        }
        w.write_all(&patch.mask)?;
        w.write_all(&patch.label)?;
    }
    w.flush()?;
    Ok(())
}

pub fn archive_read(path: &Path) -> Result<PatchArchive> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::format("patch archive truncated before magic"))?;
    if &magic != ARCHIVE_MAGIC {
        return Err(Error::format(format!(
            "bad patch archive magic {:?}",
            String::from_utf8_lossy(&magic)
        )));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)
        .map_err(|_| Error::format("patch archive truncated in manifest length"))?;
    let mut manifest_bytes = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut manifest_bytes)
        .map_err(|_| Error::format("patch archive truncated in manifest"))?;
    let manifest: Manifest = serde_json::from_slice(&manifest_bytes)
        .map_err(|e| Error::format(format!("bad patch manifest: {e}")))?;
    if manifest.entries.len() != manifest.count {
        return Err(Error::format("patch manifest count does not match entry list"));
    }
    let spec = PatchSpec::new(manifest.size, manifest.stride)?;
    let s = spec.size;
    let mut patches = Vec::with_capacity(manifest.count);
    let mut tags = Vec::with_capacity(manifest.count);
    for entry in &manifest.entries {
        let mut image_raw = vec![0u8; 3 * s * s * 4];
        r.read_exact(&mut image_raw)
            .map_err(|_| Error::format("patch archive truncated in image payload"))?;
        let image = image_raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let mut mask = vec![0u8; s * s];
        r.read_exact(&mut mask)
            .map_err(|_| Error::format("patch archive truncated in mask payload"))?;
        let mut label = vec![0u8; s * s];
        r.read_exact(&mut label)
            .map_err(|_| Error::format("patch archive truncated in label payload"))?;
        patches.push(Patch { image, mask, label, row0: entry.row0, col0: entry.col0 });
        tags.push(entry.split);
    }
    PatchArchive::new(
        spec,
        GridTransform::new(
            manifest.grid.origin_x,
            manifest.grid.origin_y,
            manifest.grid.pixel_size,
            manifest.grid.width,
            manifest.grid.height,
        )?,
        SplitAssignment { tags, seed: manifest.seed, fractions: manifest.fractions },
        patches,
    )
}
