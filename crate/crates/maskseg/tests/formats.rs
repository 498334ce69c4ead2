//! Corrupted container files must surface as format errors (exit code 2)
//! through the CLI; bit-exact round-trips are covered per module and in the
//! acceptance suite.

mod util;

use maskseg::nn::{checkpoint_write, init_params, UNetConfig};
use maskseg::patches::{archive_write, extract_patches, split_assign, PatchArchive, PatchSpec};
use maskseg::raster::{rras_write, GridTransform, Raster, Samples};
use tempfile::tempdir;

fn small_raster(bands: usize, fill: u8) -> Raster {
    let grid = GridTransform::new(0.0, 3.2, 0.2, 16, 16).unwrap();
    Raster::new(grid, bands, Samples::U8(vec![fill; bands * 256])).unwrap()
}

fn write_small_archive(path: &std::path::Path) {
    let image = small_raster(3, 90);
    let mask = small_raster(1, 1);
    let labels = small_raster(1, 0);
    let spec = PatchSpec::new(8, 8).unwrap();
    let patches = extract_patches(&image, &mask, &labels, &spec).unwrap();
    let assignment = split_assign(patches.len(), (0.5, 0.25, 0.25), 1).unwrap();
    let archive = PatchArchive::new(spec, image.grid, assignment, patches).unwrap();
    archive_write(&archive, path).unwrap();
}

#[test]
fn corrupted_rras_magic_exits_2() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("r.rras");
    rras_write(&small_raster(1, 7), &path).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[0] ^= 0xFF;
    std::fs::write(&path, bytes).unwrap();
    let out = util::run_cli(dir.path(), &["export-ppm", "--in", "r.rras", "--out", "r.pgm"]);
    assert_eq!(util::exit_code(&out), 2);
}

#[test]
fn truncated_rras_exits_2() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("r.rras");
    rras_write(&small_raster(1, 7), &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
    let out = util::run_cli(dir.path(), &["export-ppm", "--in", "r.rras", "--out", "r.pgm"]);
    assert_eq!(util::exit_code(&out), 2);
}

#[test]
fn corrupted_checkpoint_magic_exits_2() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let cfg = UNetConfig { in_channels: 4, out_channels: 1, levels: 1, base_filters: 2 };
    checkpoint_write(&init_params(&cfg, 1).unwrap(), &cfg, &path).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[0] ^= 0xFF;
    std::fs::write(&path, bytes).unwrap();
    let out = util::run_cli(
        dir.path(),
        &["predict", "--model", "m.ckpt", "--image", "i.rras", "--ones", "--out", "p.rras"],
    );
    assert_eq!(util::exit_code(&out), 2);
}

#[test]
fn truncated_checkpoint_exits_2() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let cfg = UNetConfig { in_channels: 4, out_channels: 1, levels: 1, base_filters: 2 };
    checkpoint_write(&init_params(&cfg, 1).unwrap(), &cfg, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    let out = util::run_cli(
        dir.path(),
        &["predict", "--model", "m.ckpt", "--image", "i.rras", "--ones", "--out", "p.rras"],
    );
    assert_eq!(util::exit_code(&out), 2);
}

#[test]
fn corrupted_archive_magic_exits_2() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("p.mkp");
    write_small_archive(&path);
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[0] ^= 0xFF;
    std::fs::write(&path, bytes).unwrap();
    std::fs::write(dir.path().join("train.json"), "{}").unwrap();
    let out = util::run_cli(
        dir.path(),
        &["train", "--patches", "p.mkp", "--config", "train.json", "--out", "m.ckpt"],
    );
    assert_eq!(util::exit_code(&out), 2);
}

#[test]
fn truncated_archive_exits_2() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("p.mkp");
    write_small_archive(&path);
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 16]).unwrap();
    std::fs::write(dir.path().join("train.json"), "{}").unwrap();
    let out = util::run_cli(
        dir.path(),
        &["train", "--patches", "p.mkp", "--config", "train.json", "--out", "m.ckpt"],
    );
    assert_eq!(util::exit_code(&out), 2);
}

#[test]
fn missing_input_file_exits_2() {
    let dir = tempdir().unwrap();
    let out = util::run_cli(dir.path(), &["export-ppm", "--in", "absent.rras", "--out", "x.pgm"]);
    assert_eq!(util::exit_code(&out), 2);
}
