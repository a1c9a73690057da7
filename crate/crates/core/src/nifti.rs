//! NIfTI-1 single-file (`.nii`, `.nii.gz`) reading and writing.
//!
//! Voxels are held in memory as `f32` Hounsfield units regardless of the
//! stored datatype. Orientation is reduced from the stored affine (qform
//! preferred, sform fallback, RAS identity otherwise) to the nearest signed
//! axis permutation.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::orientation::AxisCodes;
use crate::CtVolume;

pub const HEADER_SIZE: usize = 348;
/// Header plus the four-byte extension flag.
pub const DEFAULT_VOX_OFFSET: usize = 352;

const MAGIC_SINGLE: &[u8; 4] = b"n+1\0";
const MAGIC_PAIR: &[u8; 4] = b"ni1\0";
const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

mod offset {
    pub const SIZEOF_HDR: usize = 0;
    pub const DIM: usize = 40;
    pub const DATATYPE: usize = 70;
    pub const BITPIX: usize = 72;
    pub const PIXDIM: usize = 76;
    pub const VOX_OFFSET: usize = 108;
    pub const SCL_SLOPE: usize = 112;
    pub const SCL_INTER: usize = 116;
    pub const XYZT_UNITS: usize = 123;
    pub const DESCRIP: usize = 148;
    pub const QFORM_CODE: usize = 252;
    pub const SFORM_CODE: usize = 254;
    pub const QUATERN_B: usize = 256;
    pub const SROW_X: usize = 280;
    pub const MAGIC: usize = 344;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NiftiDatatype {
    Int16,
    Uint16,
    Float32,
}

impl NiftiDatatype {
    pub fn code(self) -> i16 {
        match self {
            NiftiDatatype::Int16 => 4,
            NiftiDatatype::Uint16 => 512,
            NiftiDatatype::Float32 => 16,
        }
    }

    pub fn from_code(code: i16) -> Result<Self> {
        match code {
            4 => Ok(NiftiDatatype::Int16),
            512 => Ok(NiftiDatatype::Uint16),
            16 => Ok(NiftiDatatype::Float32),
            other => Err(CoreError::UnsupportedFormat(format!("NIfTI datatype code {other}"))),
        }
    }

    pub fn bytes(self) -> usize {
        match self {
            NiftiDatatype::Int16 | NiftiDatatype::Uint16 => 2,
            NiftiDatatype::Float32 => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NiftiHeader {
    /// `dim[1..=dim[0]]`; the first three are always present (missing ones read as 1).
    pub dims: Vec<usize>,
    pub pixdim: [f64; 3],
    pub datatype: NiftiDatatype,
    pub scl_slope: f32,
    pub scl_inter: f32,
    pub orientation: AxisCodes,
    pub oblique: bool,
    pub qform_code: i16,
    pub sform_code: i16,
    pub vox_offset: usize,
    pub descrip: String,
}

/// Storage options for [`encode_nifti`]. Integer datatypes quantize
/// `(hu - scl_inter) / scl_slope` to the nearest representable value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WriteOptions {
    pub datatype: NiftiDatatype,
    pub scl_slope: f32,
    pub scl_inter: f32,
}

impl Default for WriteOptions {
    fn default() -> Self {
        WriteOptions {
            datatype: NiftiDatatype::Float32,
            scl_slope: 1.0,
            scl_inter: 0.0,
        }
    }
}

pub fn read_nifti(path: impl AsRef<Path>) -> Result<(CtVolume, NiftiHeader)> {
    let path = path.as_ref();
    let raw = fs::read(path).map_err(|e| CoreError::io(path, e))?;
    decode_nifti(&raw)
}

/// Decodes an in-memory `.nii` or gzip-compressed `.nii.gz` image.
pub fn decode_nifti(bytes: &[u8]) -> Result<(CtVolume, NiftiHeader)> {
    if bytes.starts_with(&GZIP_MAGIC) {
        let mut buf = Vec::new();
        MultiGzDecoder::new(bytes)
            .read_to_end(&mut buf)
            .map_err(|e| CoreError::Parse(format!("gzip stream: {e}")))?;
        decode_plain::<LittleEndian>(&buf).or_else(|e| match e {
            CoreError::Parse(_) if is_big_endian(&buf) => decode_plain::<BigEndian>(&buf),
            other => Err(other),
        })
    } else if is_big_endian(bytes) {
        decode_plain::<BigEndian>(bytes)
    } else {
        decode_plain::<LittleEndian>(bytes)
    }
}

fn is_big_endian(bytes: &[u8]) -> bool {
    bytes.len() >= 4 && BigEndian::read_i32(&bytes[0..4]) == HEADER_SIZE as i32
}

fn decode_plain<E: ByteOrder>(b: &[u8]) -> Result<(CtVolume, NiftiHeader)> {
    if b.len() < HEADER_SIZE {
        return Err(CoreError::Parse(format!(
            "{} bytes is shorter than a NIfTI-1 header",
            b.len()
        )));
    }
    if E::read_i32(&b[offset::SIZEOF_HDR..]) != HEADER_SIZE as i32 {
        return Err(CoreError::Parse("sizeof_hdr is not 348".into()));
    }
    let magic = &b[offset::MAGIC..offset::MAGIC + 4];
    if magic == MAGIC_PAIR {
        return Err(CoreError::UnsupportedFormat(
            "detached .hdr/.img NIfTI pairs are not supported".into(),
        ));
    }
    if magic != MAGIC_SINGLE {
        return Err(CoreError::Parse(format!("bad NIfTI-1 magic {magic:?}")));
    }

    let i16_at = |o: usize| E::read_i16(&b[o..o + 2]);
    let f32_at = |o: usize| E::read_f32(&b[o..o + 4]);

    let ndim = i16_at(offset::DIM);
    if !(1..=7).contains(&ndim) {
        return Err(CoreError::Parse(format!("dim[0] = {ndim} out of range")));
    }
    let ndim = ndim as usize;
    let mut dims = Vec::with_capacity(ndim.max(3));
    for i in 1..=ndim.max(3) {
        let d = if i <= ndim { i16_at(offset::DIM + 2 * i) } else { 1 };
        if d < 1 {
            return Err(CoreError::Parse(format!("dim[{i}] = {d} must be positive")));
        }
        dims.push(d as usize);
    }
    if let Some((i, d)) = dims.iter().enumerate().skip(3).find(|(_, &d)| d > 1) {
        return Err(CoreError::Dimensionality(format!(
            "dim[{}] = {d}; only single-volume 3D images are supported",
            i + 1
        )));
    }

    let datatype = NiftiDatatype::from_code(i16_at(offset::DATATYPE))?;
    let bitpix = i16_at(offset::BITPIX);
    if bitpix as usize != datatype.bytes() * 8 {
        return Err(CoreError::Parse(format!(
            "bitpix {bitpix} does not match datatype {datatype:?}"
        )));
    }

    let qfac_raw = f32_at(offset::PIXDIM);
    let pixdim = [1, 2, 3].map(|i| f32_at(offset::PIXDIM + 4 * i) as f64);
    if pixdim.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
        return Err(CoreError::Parse(format!("pixdim {pixdim:?} must be positive")));
    }

    let vox_offset = f32_at(offset::VOX_OFFSET);
    if !(vox_offset.is_finite() && vox_offset >= HEADER_SIZE as f32) {
        return Err(CoreError::Parse(format!("vox_offset {vox_offset} below header size")));
    }
    let vox_offset = vox_offset as usize;

    let scl_slope = f32_at(offset::SCL_SLOPE);
    let scl_inter = f32_at(offset::SCL_INTER);

    let qform_code = i16_at(offset::QFORM_CODE);
    let sform_code = i16_at(offset::SFORM_CODE);
    let direction = if qform_code > 0 {
        let [qb, qc, qd] = [0, 1, 2].map(|i| f32_at(offset::QUATERN_B + 4 * i) as f64);
        let qfac = if qfac_raw < 0.0 { -1.0 } else { 1.0 };
        quaternion_matrix(qb, qc, qd, qfac)
    } else if sform_code > 0 {
        let mut m = [[0.0; 3]; 3];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = f32_at(offset::SROW_X + 16 * r + 4 * c) as f64;
            }
        }
        m
    } else {
        AxisCodes::RAS.direction_matrix()
    };
    let (orientation, oblique) = AxisCodes::from_direction_matrix(&direction)?;

    let descrip = {
        let field = &b[offset::DESCRIP..offset::DESCRIP + 80];
        let end = field.iter().position(|&c| c == 0).unwrap_or(80);
        String::from_utf8_lossy(&field[..end]).into_owned()
    };

    let count: usize = dims[..3].iter().product();
    let need = count * datatype.bytes();
    let data = b
        .get(vox_offset..)
        .filter(|d| d.len() >= need)
        .ok_or_else(|| {
            CoreError::Parse(format!(
                "voxel data truncated: need {need} bytes at offset {vox_offset}, file has {}",
                b.len()
            ))
        })?;

    let scale = scl_slope != 0.0 && scl_slope.is_finite();
    let convert = |raw: f64| -> f32 {
        if scale {
            (raw * scl_slope as f64 + scl_inter as f64) as f32
        } else {
            raw as f32
        }
    };
    let mut flat = Vec::with_capacity(count);
    match datatype {
        NiftiDatatype::Int16 => flat.extend(data[..need].chunks_exact(2).map(|c| convert(E::read_i16(c) as f64))),
        NiftiDatatype::Uint16 => flat.extend(data[..need].chunks_exact(2).map(|c| convert(E::read_u16(c) as f64))),
        NiftiDatatype::Float32 => flat.extend(data[..need].chunks_exact(4).map(|c| {
            let v = E::read_f32(c);
            if scale {
                convert(v as f64)
            } else {
                v
            }
        })),
    }

    // NIfTI stores the first index fastest; the in-memory layout keeps axis0 slowest.
    let (nx, ny, nz) = (dims[0], dims[1], dims[2]);
    let mut voxels = vec![0.0f32; count];
    for k in 0..nz {
        for j in 0..ny {
            let src = (k * ny + j) * nx;
            for i in 0..nx {
                voxels[(i * ny + j) * nz + k] = flat[src + i];
            }
        }
    }

    let header = NiftiHeader {
        dims,
        pixdim,
        datatype,
        scl_slope,
        scl_inter,
        orientation,
        oblique,
        qform_code,
        sform_code,
        vox_offset,
        descrip: descrip.clone(),
    };
    let mut volume = CtVolume::new([nx, ny, nz], pixdim, orientation, voxels)?.with_provenance(descrip);
    volume.set_oblique(oblique);
    Ok((volume, header))
}

/// Rotation matrix of a NIfTI quaternion; `qfac` negates the third column.
fn quaternion_matrix(b: f64, c: f64, d: f64, qfac: f64) -> [[f64; 3]; 3] {
    // Stored components are 32-bit; for half-turn rotations `a` is lost in
    // their rounding, so renormalize (b, c, d) instead of trusting 1 - |q|².
    let rest = 1.0 - (b * b + c * c + d * d);
    let (a, b, c, d) = if rest < 1e-7 {
        let n = (b * b + c * c + d * d).sqrt();
        (0.0, b / n, c / n, d / n)
    } else {
        (rest.sqrt(), b, c, d)
    };
    [
        [
            a * a + b * b - c * c - d * d,
            2.0 * (b * c - a * d),
            2.0 * (b * d + a * c) * qfac,
        ],
        [
            2.0 * (b * c + a * d),
            a * a + c * c - b * b - d * d,
            2.0 * (c * d - a * b) * qfac,
        ],
        [
            2.0 * (b * d - a * c),
            2.0 * (c * d + a * b),
            (a * a + d * d - c * c - b * b) * qfac,
        ],
    ]
}

/// Quaternion `(b, c, d)` and `qfac` for a proper or improper rotation.
fn matrix_quaternion(m: &[[f64; 3]; 3]) -> ([f64; 3], f64) {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let mut r = *m;
    let qfac = if det < 0.0 {
        for row in r.iter_mut() {
            row[2] = -row[2];
        }
        -1.0
    } else {
        1.0
    };
    let (r11, r12, r13) = (r[0][0], r[0][1], r[0][2]);
    let (r21, r22, r23) = (r[1][0], r[1][1], r[1][2]);
    let (r31, r32, r33) = (r[2][0], r[2][1], r[2][2]);
    let trace = r11 + r22 + r33 + 1.0;
    let (a, mut b, mut c, mut d);
    if trace > 0.5 {
        a = 0.5 * trace.sqrt();
        b = 0.25 * (r32 - r23) / a;
        c = 0.25 * (r13 - r31) / a;
        d = 0.25 * (r21 - r12) / a;
    } else {
        let xd = 1.0 + r11 - (r22 + r33);
        let yd = 1.0 + r22 - (r11 + r33);
        let zd = 1.0 + r33 - (r11 + r22);
        if xd > 1.0 {
            b = 0.5 * xd.sqrt();
            c = 0.25 * (r12 + r21) / b;
            d = 0.25 * (r13 + r31) / b;
            a = 0.25 * (r32 - r23) / b;
        } else if yd > 1.0 {
            c = 0.5 * yd.sqrt();
            b = 0.25 * (r12 + r21) / c;
            d = 0.25 * (r23 + r32) / c;
            a = 0.25 * (r13 - r31) / c;
        } else {
            d = 0.5 * zd.sqrt();
            b = 0.25 * (r13 + r31) / d;
            c = 0.25 * (r23 + r32) / d;
            a = 0.25 * (r21 - r12) / d;
        }
    }
    if a < 0.0 {
        b = -b;
        c = -c;
        d = -d;
    }
    ([b, c, d], qfac)
}

pub fn write_nifti(vol: &CtVolume, path: impl AsRef<Path>) -> Result<()> {
    write_nifti_with(vol, path, &WriteOptions::default())
}

/// Writes `vol`; a path ending in `.gz` is gzip-compressed.
pub fn write_nifti_with(vol: &CtVolume, path: impl AsRef<Path>, opts: &WriteOptions) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_nifti(vol, opts)?;
    let gz = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("gz"));
    let payload = if gz {
        let mut enc = GzEncoder::new(Vec::new(), Compression::fast());
        enc.write_all(&bytes).map_err(|e| CoreError::io(path, e))?;
        enc.finish().map_err(|e| CoreError::io(path, e))?
    } else {
        bytes
    };
    fs::write(path, payload).map_err(|e| CoreError::io(path, e))
}

pub fn encode_nifti(vol: &CtVolume, opts: &WriteOptions) -> Result<Vec<u8>> {
    if vol.is_empty() {
        return Err(CoreError::Precondition("cannot write an empty volume".into()));
    }
    let [nx, ny, nz] = vol.dims();
    if [nx, ny, nz].iter().any(|&d| d > i16::MAX as usize) {
        return Err(CoreError::Precondition(format!(
            "extent {:?} exceeds the NIfTI-1 limit of 32767",
            vol.dims()
        )));
    }
    let dt = opts.datatype;
    let mut out = vec![0u8; DEFAULT_VOX_OFFSET + vol.len() * dt.bytes()];
    {
        let h = &mut out[..HEADER_SIZE];
        LittleEndian::write_i32(&mut h[offset::SIZEOF_HDR..], HEADER_SIZE as i32);
        let dim = [3i16, nx as i16, ny as i16, nz as i16, 1, 1, 1, 1];
        for (i, d) in dim.iter().enumerate() {
            LittleEndian::write_i16(&mut h[offset::DIM + 2 * i..], *d);
        }
        LittleEndian::write_i16(&mut h[offset::DATATYPE..], dt.code());
        LittleEndian::write_i16(&mut h[offset::BITPIX..], (dt.bytes() * 8) as i16);

        let spacing = vol.spacing();
        let direction = vol.axes().direction_matrix();
        let (quat, qfac) = matrix_quaternion(&direction);
        let pixdim = [qfac as f32, spacing[0] as f32, spacing[1] as f32, spacing[2] as f32, 0.0, 0.0, 0.0, 0.0];
        for (i, p) in pixdim.iter().enumerate() {
            LittleEndian::write_f32(&mut h[offset::PIXDIM + 4 * i..], *p);
        }
        LittleEndian::write_f32(&mut h[offset::VOX_OFFSET..], DEFAULT_VOX_OFFSET as f32);
        LittleEndian::write_f32(&mut h[offset::SCL_SLOPE..], opts.scl_slope);
        LittleEndian::write_f32(&mut h[offset::SCL_INTER..], opts.scl_inter);
        // NIFTI_UNITS_MM
        h[offset::XYZT_UNITS] = 2;

        let desc = vol.provenance.as_bytes();
        let n = desc.len().min(79);
        h[offset::DESCRIP..offset::DESCRIP + n].copy_from_slice(&desc[..n]);

        LittleEndian::write_i16(&mut h[offset::QFORM_CODE..], 1);
        LittleEndian::write_i16(&mut h[offset::SFORM_CODE..], 1);
        for (i, q) in quat.iter().enumerate() {
            LittleEndian::write_f32(&mut h[offset::QUATERN_B + 4 * i..], *q as f32);
        }
        for r in 0..3 {
            for c in 0..3 {
                let v = direction[r][c] * spacing[c];
                LittleEndian::write_f32(&mut h[offset::SROW_X + 16 * r + 4 * c..], v as f32);
            }
        }
        h[offset::MAGIC..offset::MAGIC + 4].copy_from_slice(MAGIC_SINGLE);
    }

    let slope = if opts.scl_slope != 0.0 { opts.scl_slope as f64 } else { 1.0 };
    let inter = if opts.scl_slope != 0.0 { opts.scl_inter as f64 } else { 0.0 };
    let quantize = |v: f32, lo: f64, hi: f64| -> Result<f64> {
        let raw = ((v as f64 - inter) / slope).round();
        if raw < lo || raw > hi {
            return Err(CoreError::Precondition(format!(
                "value {v} does not fit {dt:?} with slope {slope} and intercept {inter}"
            )));
        }
        Ok(raw)
    };

    let data = &mut out[DEFAULT_VOX_OFFSET..];
    let mut pos = 0;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let v = vol.get([i, j, k]);
                match dt {
                    NiftiDatatype::Float32 => {
                        let stored = if opts.scl_slope != 0.0 && (slope != 1.0 || inter != 0.0) {
                            ((v as f64 - inter) / slope) as f32
                        } else {
                            v
                        };
                        LittleEndian::write_f32(&mut data[pos..], stored);
                    }
                    NiftiDatatype::Int16 => {
                        let raw = quantize(v, i16::MIN as f64, i16::MAX as f64)?;
                        LittleEndian::write_i16(&mut data[pos..], raw as i16);
                    }
                    NiftiDatatype::Uint16 => {
                        let raw = quantize(v, 0.0, u16::MAX as f64)?;
                        LittleEndian::write_u16(&mut data[pos..], raw as u16);
                    }
                }
                pos += dt.bytes();
            }
        }
    }
    Ok(out)
}
