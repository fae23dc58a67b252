//! On-disk formats: binary scan grids, 16-bit PNG import, pose and
//! trajectory CSV, and the TOML config/scene files.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{GridSpec, Pose2D};
use crate::imageops::{MaskGrid, ScanGrid};
use crate::matcher::MatchConfig;
use crate::spectral::CorrelationSurface;
use crate::synth::Scene;

pub const SCAN_MAGIC: [u8; 4] = *b"FSCN";
pub const SCAN_HEADER_LEN: usize = 16;
pub const SCAN_EXTENSION: &str = "fscn";
pub const TRAJECTORY_HEADER: [&str; 4] = ["frame", "theta", "tx", "ty"];

/// Encodes a grid as header plus little-endian `f32` cells, row-major.
pub fn encode_scan(spec: GridSpec, values: &Array2<f64>) -> Vec<u8> {
    let n = spec.n();
    let mut out = Vec::with_capacity(SCAN_HEADER_LEN + 4 * n * n);
    out.extend_from_slice(&SCAN_MAGIC);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(spec.delta() as f32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for &v in values.iter() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

/// Parses the header and body written by [`encode_scan`]. `path` is only
/// used in error messages.
pub fn decode_scan(bytes: &[u8], path: &Path) -> Result<(GridSpec, Array2<f64>)> {
    let bad = |reason: String| Error::format("scan", path, reason);
    if bytes.len() < SCAN_HEADER_LEN {
        return Err(bad(format!(
            "{} bytes is shorter than the header",
            bytes.len()
        )));
    }
    if bytes[0..4] != SCAN_MAGIC {
        return Err(bad("missing FSCN magic".into()));
    }
    let word = |i: usize| [bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]];
    let n = u32::from_le_bytes(word(4)) as usize;
    let delta = f32::from_le_bytes(word(8));
    // Recover the decimal the writer most likely meant, e.g. 0.4 rather
    // than 0.4000000059604645.
    let delta: f64 = delta
        .to_string()
        .parse()
        .map_err(|_| bad("bad cell size".into()))?;
    let spec = GridSpec::new(n, delta).map_err(|e| bad(e.to_string()))?;
    let expected = SCAN_HEADER_LEN + 4 * n * n;
    if bytes.len() != expected {
        return Err(bad(format!(
            "expected {expected} bytes for n = {n}, found {}",
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes[SCAN_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let values = Array2::from_shape_vec((n, n), values).expect("length checked above");
    Ok((spec, values))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_scan(path: &Path) -> Result<ScanGrid> {
    let (spec, values) = decode_scan(&read_bytes(path)?, path)?;
    ScanGrid::new(spec, values).map_err(|e| Error::format("scan", path, e.to_string()))
}

pub fn write_scan(path: &Path, scan: &ScanGrid) -> Result<()> {
    write_bytes(path, &encode_scan(*scan.spec(), scan.values()))
}

pub fn read_mask(path: &Path) -> Result<MaskGrid> {
    let (spec, values) = decode_scan(&read_bytes(path)?, path)?;
    MaskGrid::new(spec, values).map_err(|e| Error::format("mask", path, e.to_string()))
}

pub fn write_mask(path: &Path, mask: &MaskGrid) -> Result<()> {
    write_bytes(path, &encode_scan(*mask.spec(), mask.values()))
}

/// Imports a 16-bit grayscale PNG; pixel values become cell values unchanged.
pub fn import_png(path: &Path, delta: f64) -> Result<ScanGrid> {
    let img = image::open(path).map_err(|e| Error::format("png", path, e.to_string()))?;
    let img = match img {
        image::DynamicImage::ImageLuma16(buf) => buf,
        other => {
            return Err(Error::format(
                "png",
                path,
                format!("expected 16-bit grayscale, found {:?}", other.color()),
            ))
        }
    };
    let (w, h) = img.dimensions();
    if w != h {
        return Err(Error::format(
            "png",
            path,
            format!("image is {w}x{h}, not square"),
        ));
    }
    let spec =
        GridSpec::new(w as usize, delta).map_err(|e| Error::format("png", path, e.to_string()))?;
    let values = Array2::from_shape_fn((h as usize, w as usize), |(r, c)| {
        img.get_pixel(c as u32, r as u32).0[0] as f64
    });
    ScanGrid::new(spec, values)
}

#[derive(Debug, Serialize, Deserialize)]
struct TrajectoryRow {
    frame: usize,
    theta: f64,
    tx: f64,
    ty: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct PoseRow {
    theta: f64,
    tx: f64,
    ty: f64,
}

fn csv_error(kind: &'static str, path: &Path, e: csv::Error) -> Error {
    Error::format(kind, path, e.to_string())
}

/// Serialises poses as `frame,theta,tx,ty` rows with a header.
pub fn trajectory_csv(poses: &[Pose2D]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for (frame, p) in poses.iter().enumerate() {
        w.serialize(TrajectoryRow {
            frame,
            theta: p.theta,
            tx: p.tx,
            ty: p.ty,
        })
        .expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("csv output is utf-8")
}

pub fn write_trajectory(path: &Path, poses: &[Pose2D]) -> Result<()> {
    write_bytes(path, trajectory_csv(poses).as_bytes())
}

/// Reads `frame,theta,tx,ty` rows. Frames must count up from zero.
pub fn read_trajectory(path: &Path) -> Result<Vec<Pose2D>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| csv_error("trajectory", path, e))?;
    if headers.iter().ne(TRAJECTORY_HEADER) {
        return Err(Error::format(
            "trajectory",
            path,
            format!("header must be {}", TRAJECTORY_HEADER.join(",")),
        ));
    }
    let mut poses = Vec::new();
    for row in reader.deserialize::<TrajectoryRow>() {
        let row = row.map_err(|e| csv_error("trajectory", path, e))?;
        if row.frame != poses.len() {
            return Err(Error::format(
                "trajectory",
                path,
                format!("frame {} out of order, expected {}", row.frame, poses.len()),
            ));
        }
        if ![row.theta, row.tx, row.ty].iter().all(|v| v.is_finite()) {
            return Err(Error::format(
                "trajectory",
                path,
                format!("non-finite pose at frame {}", row.frame),
            ));
        }
        poses.push(Pose2D::new(row.theta, row.tx, row.ty));
    }
    Ok(poses)
}

/// Reads a single pose from a `theta,tx,ty` file, header optional.
pub fn read_pose(path: &Path) -> Result<Pose2D> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let mut line = lines
        .next()
        .ok_or_else(|| Error::format("pose", path, "empty file"))?;
    if line.replace(' ', "") == "theta,tx,ty" {
        line = lines
            .next()
            .ok_or_else(|| Error::format("pose", path, "header without values"))?;
    }
    line.parse()
        .map_err(|e: Error| Error::format("pose", path, e.to_string()))
}

pub fn pose_csv(pose: &Pose2D) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.serialize(PoseRow {
        theta: pose.theta,
        tx: pose.tx,
        ty: pose.ty,
    })
    .expect("writing to memory");
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("csv output is utf-8")
}

/// Long-form dump of a correlation surface: `row,col,score` in physical
/// coordinates.
pub fn surface_csv(surface: &CorrelationSurface) -> String {
    let mut out = String::from("row,col,score\n");
    for ((r, c), v) in surface.scores().indexed_iter() {
        out.push_str(&format!(
            "{:?},{:?},{:?}\n",
            surface.row_coords()[r],
            surface.col_coords()[c],
            v
        ));
    }
    out
}

pub fn read_config(path: &Path) -> Result<MatchConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    MatchConfig::from_toml(&text).map_err(|e| Error::format("config", path, e.to_string()))
}

pub fn write_config(path: &Path, cfg: &MatchConfig) -> Result<()> {
    write_bytes(path, cfg.to_toml().as_bytes())
}

pub fn read_scene(path: &Path) -> Result<Scene> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Scene::from_toml(&text).map_err(|e| Error::format("scene", path, e.to_string()))
}

pub fn write_scene(path: &Path, scene: &Scene) -> Result<()> {
    write_bytes(path, scene.to_toml().as_bytes())
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes text to a file, or to stdout when `path` is `None`.
pub fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write_bytes(p, text.as_bytes()),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

/// Scan files in a directory, sorted by file name.
pub fn list_scans(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|ext| ext == SCAN_EXTENSION) {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}
