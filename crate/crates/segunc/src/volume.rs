//! Volume files: single-file NIfTI-1 (`.nii`, `.nii.gz`) and the raw
//! sidecar format (`.raw` payload plus `.raw.meta` text header).
//!
//! Stored values map to voxels as `slope * stored + intercept`. The NIfTI
//! orientation fields (qform/sform block) are carried through as opaque
//! bytes and never interpreted. See `docs/formats.md` for the layouts.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use segunc_core::{BinaryMask, Dims, Spacing, VoxelGrid};

use crate::{Error, Result};

const NIFTI1_HEADER: usize = 348;
const NIFTI2_HEADER: i32 = 540;
const DEFAULT_VOX_OFFSET: usize = 352;
const ORIENTATION: std::ops::Range<usize> = 252..344;

/// Stored voxel type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataType {
    /// Unsigned byte (NIfTI code 2).
    Uint8,
    /// Signed 16-bit integer (NIfTI code 4).
    Int16,
    /// IEEE single precision (NIfTI code 16).
    Float32,
}

impl DataType {
    /// NIfTI datatype code.
    pub fn code(self) -> i16 {
        match self {
            DataType::Uint8 => 2,
            DataType::Int16 => 4,
            DataType::Float32 => 16,
        }
    }

    fn from_code(code: i16) -> Option<Self> {
        match code {
            2 => Some(DataType::Uint8),
            4 => Some(DataType::Int16),
            16 => Some(DataType::Float32),
            _ => None,
        }
    }

    /// Bytes per voxel.
    pub fn size(self) -> usize {
        match self {
            DataType::Uint8 => 1,
            DataType::Int16 => 2,
            DataType::Float32 => 4,
        }
    }

    /// Name used in sidecar files and messages.
    pub fn name(self) -> &'static str {
        match self {
            DataType::Uint8 => "uint8",
            DataType::Int16 => "int16",
            DataType::Float32 => "float32",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        [DataType::Uint8, DataType::Int16, DataType::Float32]
            .into_iter()
            .find(|d| d.name() == name)
    }
}

/// Geometry and storage description of a volume file.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeHeader {
    pub dims: Dims,
    pub spacing: Spacing,
    pub datatype: DataType,
    pub slope: f64,
    pub intercept: f64,
    /// NIfTI bytes 252..344 (qform/sform codes, quaternion, srows, intent name).
    pub orientation: Option<Vec<u8>>,
}

/// A decoded volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    pub header: VolumeHeader,
    pub grid: VoxelGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Nifti { gzip: bool },
    Raw,
}

fn format_of(path: &Path) -> Result<Format> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    if name.ends_with(".nii.gz") {
        Ok(Format::Nifti { gzip: true })
    } else if name.ends_with(".nii") {
        Ok(Format::Nifti { gzip: false })
    } else if name.ends_with(".raw") {
        Ok(Format::Raw)
    } else if name.ends_with(".hdr") || name.ends_with(".img") || name.ends_with(".img.gz") {
        Err(Error::UnsupportedFormat {
            path: path.into(),
            what: "NIfTI .hdr/.img pair",
        })
    } else {
        Err(Error::UnsupportedFormat {
            path: path.into(),
            what: "file extension (expected .nii, .nii.gz or .raw)",
        })
    }
}

/// Path of the text header belonging to a `.raw` payload.
pub fn sidecar_path(raw: &Path) -> PathBuf {
    let mut s = raw.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Reads a NIfTI-1 or raw volume.
pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    match format_of(path)? {
        Format::Nifti { .. } => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            let bytes = if bytes.starts_with(&[0x1f, 0x8b]) {
                let mut out = Vec::new();
                MultiGzDecoder::new(&bytes[..])
                    .read_to_end(&mut out)
                    .map_err(|e| Error::io(path, e))?;
                out
            } else {
                bytes
            };
            decode_nifti(path, &bytes)
        }
        Format::Raw => read_raw(path),
    }
}

/// Reads a label volume whose voxels are exactly 0 or 1.
pub fn read_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let volume = read_volume(path)?;
    if let Some(&value) = volume.grid.data().iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::NotBinary {
            path: path.into(),
            value,
        });
    }
    Ok(to_mask(&volume.grid, |v| v == 1.0)?)
}

/// Reads any label volume, treating every nonzero voxel as foreground.
pub fn read_mask_nonzero(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let volume = read_volume(path)?;
    Ok(to_mask(&volume.grid, |v| v != 0.0)?)
}

fn to_mask(grid: &VoxelGrid, on: impl Fn(f64) -> bool) -> segunc_core::Result<BinaryMask> {
    let data = grid.data();
    BinaryMask::from_fn(grid.dims(), grid.spacing(), |i| on(data[i]))
}

/// Writes `grid` with the requested datatype; `.gz` output is gzip-compressed.
///
/// float32 accepts any finite grid (values round to single precision);
/// uint8 accepts only 0/1 values; int16 only integers in range.
pub fn write_volume(
    grid: &VoxelGrid,
    path: impl AsRef<Path>,
    datatype: DataType,
    orientation: Option<&[u8]>,
) -> Result<()> {
    let path = path.as_ref();
    let format = format_of(path)?;
    let payload = encode_payload(grid.data(), datatype)?;
    let header = VolumeHeader {
        dims: grid.dims(),
        spacing: grid.spacing(),
        datatype,
        slope: 1.0,
        intercept: 0.0,
        orientation: orientation.map(<[u8]>::to_vec),
    };
    match format {
        Format::Nifti { gzip } => {
            let mut bytes = encode_nifti_header(&header);
            bytes.extend_from_slice(&payload);
            if gzip {
                let mut enc = GzEncoder::new(Vec::new(), Compression::fast());
                enc.write_all(&bytes).map_err(|e| Error::io(path, e))?;
                bytes = enc.finish().map_err(|e| Error::io(path, e))?;
            }
            fs::write(path, bytes).map_err(|e| Error::io(path, e))
        }
        Format::Raw => {
            let meta = sidecar_path(path);
            fs::write(&meta, encode_sidecar(&header)).map_err(|e| Error::io(&meta, e))?;
            fs::write(path, payload).map_err(|e| Error::io(path, e))
        }
    }
}

/// Writes a mask as a uint8 volume.
pub fn write_mask(mask: &BinaryMask, path: impl AsRef<Path>, orientation: Option<&[u8]>) -> Result<()> {
    write_volume(&mask.to_grid(), path, DataType::Uint8, orientation)
}

fn encode_payload(data: &[f64], datatype: DataType) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(data.len() * datatype.size());
    match datatype {
        DataType::Float32 => {
            for &v in data {
                let f = v as f32;
                if !f.is_finite() {
                    return Err(Error::Range {
                        datatype: "float32",
                        value: v,
                    });
                }
                out.extend_from_slice(&f.to_le_bytes());
            }
        }
        DataType::Uint8 => {
            for &v in data {
                if v != 0.0 && v != 1.0 {
                    return Err(Error::Range {
                        datatype: "uint8",
                        value: v,
                    });
                }
                out.push(v as u8);
            }
        }
        DataType::Int16 => {
            for &v in data {
                if v.fract() != 0.0 || v < i16::MIN as f64 || v > i16::MAX as f64 {
                    return Err(Error::Range {
                        datatype: "int16",
                        value: v,
                    });
                }
                out.extend_from_slice(&(v as i16).to_le_bytes());
            }
        }
    }
    Ok(out)
}

fn decode_payload(path: &Path, bytes: &[u8], header: &VolumeHeader, little_endian: bool) -> Result<VoxelGrid> {
    let n = header.dims.len();
    let expected = n * header.datatype.size();
    if bytes.len() != expected {
        return Err(Error::PayloadSize {
            path: path.into(),
            expected,
            actual: bytes.len(),
        });
    }
    let (slope, inter) = (header.slope, header.intercept);
    let scale = |stored: f64| slope * stored + inter;
    let data: Vec<f64> = match header.datatype {
        DataType::Uint8 => bytes.iter().map(|&b| scale(b as f64)).collect(),
        DataType::Int16 => bytes
            .chunks_exact(2)
            .map(|c| {
                let raw = [c[0], c[1]];
                let v = if little_endian {
                    i16::from_le_bytes(raw)
                } else {
                    i16::from_be_bytes(raw)
                };
                scale(v as f64)
            })
            .collect(),
        DataType::Float32 => bytes
            .chunks_exact(4)
            .map(|c| {
                let raw = [c[0], c[1], c[2], c[3]];
                let v = if little_endian {
                    f32::from_le_bytes(raw)
                } else {
                    f32::from_be_bytes(raw)
                };
                scale(v as f64)
            })
            .collect(),
    };
    Ok(VoxelGrid::new(header.dims, header.spacing, data)?)
}

struct Fields<'a> {
    bytes: &'a [u8],
    little: bool,
}

impl Fields<'_> {
    fn i16(&self, at: usize) -> i16 {
        let raw = [self.bytes[at], self.bytes[at + 1]];
        if self.little {
            i16::from_le_bytes(raw)
        } else {
            i16::from_be_bytes(raw)
        }
    }

    fn f32(&self, at: usize) -> f32 {
        let raw: [u8; 4] = self.bytes[at..at + 4].try_into().unwrap();
        if self.little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        }
    }

    /// f32 field widened through its shortest decimal form, so 0.8f32 reads as 0.8.
    fn decimal(&self, at: usize) -> f64 {
        let v = self.f32(at);
        if v.is_finite() {
            v.to_string().parse().unwrap_or(v as f64)
        } else {
            v as f64
        }
    }
}

fn header_error(path: &Path, reason: impl Into<String>) -> Error {
    Error::Header {
        path: path.into(),
        reason: reason.into(),
    }
}

fn decode_nifti(path: &Path, bytes: &[u8]) -> Result<Volume> {
    if bytes.len() < 4 {
        return Err(header_error(path, "file shorter than the header size field"));
    }
    let raw_size: [u8; 4] = bytes[0..4].try_into().unwrap();
    let little = match (i32::from_le_bytes(raw_size), i32::from_be_bytes(raw_size)) {
        (348, _) => true,
        (_, 348) => false,
        (NIFTI2_HEADER, _) | (_, NIFTI2_HEADER) => {
            return Err(Error::UnsupportedFormat {
                path: path.into(),
                what: "NIfTI-2",
            })
        }
        (other, _) => return Err(header_error(path, format!("sizeof_hdr is {other}, expected 348"))),
    };
    if bytes.len() < NIFTI1_HEADER {
        return Err(header_error(path, format!("{} bytes, header needs 348", bytes.len())));
    }
    let magic: [u8; 4] = bytes[344..348].try_into().unwrap();
    match &magic {
        b"n+1\0" => {}
        b"ni1\0" => {
            return Err(Error::UnsupportedFormat {
                path: path.into(),
                what: "NIfTI .hdr/.img pair",
            })
        }
        _ => {
            return Err(Error::BadMagic {
                path: path.into(),
                found: magic,
            })
        }
    }
    let f = Fields { bytes, little };

    let ndim = f.i16(40);
    if !(3..=7).contains(&ndim) {
        return Err(header_error(path, format!("dim[0] = {ndim}, need a 3D volume")));
    }
    let dim = |i: usize| f.i16(40 + 2 * i);
    if (4..=ndim as usize).any(|i| dim(i) != 1) {
        return Err(header_error(
            path,
            "only 3D volumes are supported (dims beyond z must be 1)",
        ));
    }
    let sizes = [dim(1), dim(2), dim(3)];
    if sizes.iter().any(|&s| s < 1) {
        return Err(header_error(path, format!("non-positive dimension in {sizes:?}")));
    }
    let dims = Dims::new(sizes[0] as usize, sizes[1] as usize, sizes[2] as usize)?;
    let spacing = Spacing::new(f.decimal(80).abs(), f.decimal(84).abs(), f.decimal(88).abs())
        .map_err(|_| header_error(path, "pixdim must be non-zero and finite"))?;

    let code = f.i16(70);
    let datatype = DataType::from_code(code).ok_or(Error::UnsupportedDatatype {
        path: path.into(),
        code,
    })?;

    let (mut slope, mut intercept) = (f.decimal(112), f.decimal(116));
    if slope == 0.0 || !slope.is_finite() {
        // NIfTI: slope 0 means "no scaling"
        slope = 1.0;
        intercept = 0.0;
    }
    if !intercept.is_finite() {
        intercept = 0.0;
    }

    let vox_offset = f.f32(108);
    if !(vox_offset.is_finite() && vox_offset >= NIFTI1_HEADER as f32) {
        return Err(header_error(
            path,
            format!("vox_offset {vox_offset} precedes the end of the header"),
        ));
    }
    let offset = vox_offset as usize;
    let payload = bytes.get(offset..).unwrap_or(&[]);

    let header = VolumeHeader {
        dims,
        spacing,
        datatype,
        slope,
        intercept,
        orientation: Some(bytes[ORIENTATION].to_vec()),
    };
    let grid = decode_payload(path, payload, &header, little)?;
    Ok(Volume { header, grid })
}

fn encode_nifti_header(h: &VolumeHeader) -> Vec<u8> {
    let mut b = vec![0u8; DEFAULT_VOX_OFFSET];
    let put_i16 = |b: &mut [u8], at: usize, v: i16| b[at..at + 2].copy_from_slice(&v.to_le_bytes());
    let put_f32 = |b: &mut [u8], at: usize, v: f32| b[at..at + 4].copy_from_slice(&v.to_le_bytes());

    b[0..4].copy_from_slice(&(NIFTI1_HEADER as i32).to_le_bytes());
    b[38] = b'r';
    let d = h.dims.as_array();
    put_i16(&mut b, 40, 3);
    for (i, &n) in d.iter().enumerate() {
        put_i16(&mut b, 42 + 2 * i, n as i16);
    }
    for i in 4..8 {
        put_i16(&mut b, 40 + 2 * i, 1);
    }
    put_i16(&mut b, 70, h.datatype.code());
    put_i16(&mut b, 72, (h.datatype.size() * 8) as i16);
    put_f32(&mut b, 76, 1.0);
    for (i, &s) in h.spacing.0.iter().enumerate() {
        put_f32(&mut b, 80 + 4 * i, s as f32);
    }
    for i in 4..8 {
        put_f32(&mut b, 76 + 4 * i, 1.0);
    }
    put_f32(&mut b, 108, DEFAULT_VOX_OFFSET as f32);
    put_f32(&mut b, 112, h.slope as f32);
    put_f32(&mut b, 116, h.intercept as f32);
    b[123] = 2; // xyzt_units: millimeters

    match &h.orientation {
        Some(bytes) if bytes.len() == ORIENTATION.len() => b[ORIENTATION].copy_from_slice(bytes),
        _ => {
            // sform_code 1 with a diagonal scaling affine
            put_i16(&mut b, 254, 1);
            put_f32(&mut b, 280, h.spacing.0[0] as f32);
            put_f32(&mut b, 296 + 4, h.spacing.0[1] as f32);
            put_f32(&mut b, 312 + 8, h.spacing.0[2] as f32);
        }
    }
    b[344..348].copy_from_slice(b"n+1\0");
    b
}

const SIDECAR_FORMAT: &str = "segunc-raw/1";

fn encode_sidecar(h: &VolumeHeader) -> String {
    let d = h.dims;
    let s = h.spacing.0;
    format!(
        "format = {SIDECAR_FORMAT}\n\
         dims = {} {} {}\n\
         spacing = {} {} {}\n\
         datatype = {}\n\
         axis_order = x-fastest\n\
         byte_order = little\n\
         scl_slope = {}\n\
         scl_inter = {}\n",
        d.nx,
        d.ny,
        d.nz,
        s[0],
        s[1],
        s[2],
        h.datatype.name(),
        h.slope,
        h.intercept
    )
}

fn parse_sidecar(path: &Path, text: &str) -> Result<VolumeHeader> {
    let bad = |reason: String| header_error(path, reason);
    let mut fields = std::collections::BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("line {}: expected `key = value`", lineno + 1)))?;
        if fields.insert(key.trim().to_owned(), value.trim().to_owned()).is_some() {
            return Err(bad(format!("duplicate key `{}`", key.trim())));
        }
    }
    let get = |key: &str| {
        fields
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| bad(format!("missing `{key}`")))
    };
    if get("format")? != SIDECAR_FORMAT {
        return Err(bad(format!("format must be `{SIDECAR_FORMAT}`")));
    }
    if get("axis_order")? != "x-fastest" {
        return Err(bad("axis_order must be `x-fastest`".into()));
    }
    if fields.get("byte_order").is_some_and(|v| v != "little") {
        return Err(bad("byte_order must be `little`".into()));
    }
    let triple = |key: &str| -> Result<Vec<String>> {
        let parts: Vec<String> = get(key)?.split_whitespace().map(str::to_owned).collect();
        if parts.len() != 3 {
            return Err(bad(format!("`{key}` needs three values")));
        }
        Ok(parts)
    };
    let dims: Vec<usize> = triple("dims")?
        .iter()
        .map(|v| v.parse().map_err(|_| bad(format!("bad dimension `{v}`"))))
        .collect::<Result<_>>()?;
    let spacing: Vec<f64> = triple("spacing")?
        .iter()
        .map(|v| v.parse().map_err(|_| bad(format!("bad spacing `{v}`"))))
        .collect::<Result<_>>()?;
    let datatype_name = get("datatype")?;
    let datatype =
        DataType::from_name(datatype_name).ok_or_else(|| bad(format!("unsupported datatype `{datatype_name}`")))?;
    let scalar = |key: &str, default: f64| -> Result<f64> {
        match fields.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| bad(format!("bad `{key}` value `{v}`"))),
        }
    };
    Ok(VolumeHeader {
        dims: Dims::new(dims[0], dims[1], dims[2])?,
        spacing: Spacing::new(spacing[0], spacing[1], spacing[2])?,
        datatype,
        slope: scalar("scl_slope", 1.0)?,
        intercept: scalar("scl_inter", 0.0)?,
        orientation: None,
    })
}

fn read_raw(path: &Path) -> Result<Volume> {
    let meta = sidecar_path(path);
    let text = fs::read_to_string(&meta).map_err(|e| Error::io(&meta, e))?;
    let header = parse_sidecar(&meta, &text)?;
    let payload = fs::read(path).map_err(|e| Error::io(path, e))?;
    let grid = decode_payload(path, &payload, &header, true)?;
    Ok(Volume { header, grid })
}
