//! VVOL file I/O.
//!
//! A volume is a pair of files: `<name>.vvol.json` (header) and
//! `<name>.vvol.raw` (little-endian payload, x-fastest). Scalar volumes use
//! dtype "f32"; masks and matter-label grids use dtype "u8". Matter maps
//! additionally carry a per-class stats block in the header.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, VamosError};
use crate::volume::{BinaryMask, ClassStats, Dims, MatterMap, VoxelVolume};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VvolHeader {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    pub origin_mm: [f64; 3],
    pub dtype: String,
    pub order: String,
    pub payload: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stats: Option<Vec<ClassStats>>,
}

fn io_err(path: &Path, source: std::io::Error) -> VamosError {
    VamosError::Io { path: path.display().to_string(), source }
}

/// Resolve `<base>.vvol.json` / `<base>.vvol.raw` from either the header
/// path or the bare base path.
fn header_path(path: &Path) -> PathBuf {
    let s = path.to_string_lossy();
    if s.ends_with(".vvol.json") {
        path.to_path_buf()
    } else {
        PathBuf::from(format!("{s}.vvol.json"))
    }
}

fn read_header(path: &Path) -> Result<(VvolHeader, PathBuf)> {
    let hpath = header_path(path);
    let text = fs::read_to_string(&hpath).map_err(|e| io_err(&hpath, e))?;
    let header: VvolHeader = serde_json::from_str(&text)?;
    if header.order != "x-fastest" {
        return Err(VamosError::Header(format!("unsupported order {:?}", header.order)));
    }
    if header.dims.iter().any(|&d| d == 0) {
        return Err(VamosError::Header(format!("zero dimension in {:?}", header.dims)));
    }
    if header.spacing_mm.iter().any(|&s| !(s > 0.0)) {
        return Err(VamosError::Header(format!("non-positive spacing {:?}", header.spacing_mm)));
    }
    let raw = hpath.parent().unwrap_or(Path::new(".")).join(&header.payload);
    Ok((header, raw))
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<VoxelVolume> {
    let (header, raw_path) = read_header(path.as_ref())?;
    if header.dtype != "f32" {
        return Err(VamosError::Header(format!("expected dtype f32, got {:?}", header.dtype)));
    }
    let bytes = fs::read(&raw_path).map_err(|e| io_err(&raw_path, e))?;
    let dims = Dims::new(header.dims[0], header.dims[1], header.dims[2]);
    if bytes.len() != dims.len() * 4 {
        return Err(VamosError::PayloadLength { expected: dims.len(), actual: bytes.len() / 4 });
    }
    let data: Vec<f32> = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    VoxelVolume::new(dims, header.spacing_mm, header.origin_mm, data)
}

pub fn write_volume(vol: &VoxelVolume, path: impl AsRef<Path>) -> Result<()> {
    vol.validate()?;
    let hpath = header_path(path.as_ref());
    let stem = hpath.file_name().unwrap().to_string_lossy().replace(".vvol.json", "");
    let header = VvolHeader {
        dims: vol.dims.as_array(),
        spacing_mm: vol.spacing,
        origin_mm: vol.origin,
        dtype: "f32".into(),
        order: "x-fastest".into(),
        payload: format!("{stem}.vvol.raw"),
        stats: None,
    };
    let raw_path = hpath.parent().unwrap_or(Path::new(".")).join(&header.payload);
    let mut bytes = Vec::with_capacity(vol.data.len() * 4);
    for &v in &vol.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&raw_path, &bytes).map_err(|e| io_err(&raw_path, e))?;
    let text = serde_json::to_string_pretty(&header)?;
    fs::write(&hpath, text).map_err(|e| io_err(&hpath, e))?;
    Ok(())
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let (header, raw_path) = read_header(path.as_ref())?;
    if header.dtype != "u8" {
        return Err(VamosError::Header(format!("expected dtype u8, got {:?}", header.dtype)));
    }
    let bytes = fs::read(&raw_path).map_err(|e| io_err(&raw_path, e))?;
    let dims = Dims::new(header.dims[0], header.dims[1], header.dims[2]);
    if bytes.len() != dims.len() {
        return Err(VamosError::PayloadLength { expected: dims.len(), actual: bytes.len() });
    }
    if let Some(bad) = bytes.iter().find(|&&b| b > 1) {
        return Err(VamosError::Header(format!("mask value {bad} outside {{0,1}}")));
    }
    Ok(BinaryMask {
        dims,
        spacing: header.spacing_mm,
        origin: header.origin_mm,
        data: bytes.iter().map(|&b| b != 0).collect(),
    })
}

pub fn write_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    write_u8(
        &mask.data.iter().map(|&b| b as u8).collect::<Vec<_>>(),
        mask.dims,
        mask.spacing,
        mask.origin,
        None,
        path.as_ref(),
    )
}

pub fn read_matter_map(path: impl AsRef<Path>) -> Result<MatterMap> {
    let (header, raw_path) = read_header(path.as_ref())?;
    if header.dtype != "u8" {
        return Err(VamosError::Header(format!("expected dtype u8, got {:?}", header.dtype)));
    }
    let bytes = fs::read(&raw_path).map_err(|e| io_err(&raw_path, e))?;
    let dims = Dims::new(header.dims[0], header.dims[1], header.dims[2]);
    if bytes.len() != dims.len() {
        return Err(VamosError::PayloadLength { expected: dims.len(), actual: bytes.len() });
    }
    Ok(MatterMap {
        dims,
        spacing: header.spacing_mm,
        origin: header.origin_mm,
        labels: bytes,
        stats: header.stats.unwrap_or_default(),
    })
}

pub fn write_matter_map(map: &MatterMap, path: impl AsRef<Path>) -> Result<()> {
    write_u8(&map.labels, map.dims, map.spacing, map.origin, Some(map.stats.clone()), path.as_ref())
}

fn write_u8(
    data: &[u8],
    dims: Dims,
    spacing: [f64; 3],
    origin: [f64; 3],
    stats: Option<Vec<ClassStats>>,
    path: &Path,
) -> Result<()> {
    if data.len() != dims.len() {
        return Err(VamosError::PayloadLength { expected: dims.len(), actual: data.len() });
    }
    let hpath = header_path(path);
    let stem = hpath.file_name().unwrap().to_string_lossy().replace(".vvol.json", "");
    let header = VvolHeader {
        dims: dims.as_array(),
        spacing_mm: spacing,
        origin_mm: origin,
        dtype: "u8".into(),
        order: "x-fastest".into(),
        payload: format!("{stem}.vvol.raw"),
        stats,
    };
    let raw_path = hpath.parent().unwrap_or(Path::new(".")).join(&header.payload);
    fs::write(&raw_path, data).map_err(|e| io_err(&raw_path, e))?;
    fs::write(&hpath, serde_json::to_string_pretty(&header)?).map_err(|e| io_err(&hpath, e))?;
    Ok(())
}
