//! `.igrd` raster files.
//!
//! Layout (little-endian throughout):
//!
//! | offset | size | field                         |
//! |--------|------|-------------------------------|
//! | 0      | 4    | magic `IGRD`                  |
//! | 4      | 4    | version (`u32`, = 1)          |
//! | 8      | 4    | width (`u32`)                 |
//! | 12     | 4    | height (`u32`)                |
//! | 16     | 4    | channels (`u32`, 1 or 2)      |
//! | 20     | ...  | `f32` payload, planar         |
//!
//! The payload holds each channel as a contiguous row-major plane; a
//! two-channel file stores the real plane first, then the imaginary plane.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{CoherenceMap, ComplexField, PhaseImage, UnwrappedImage};

pub const MAGIC: &[u8; 4] = b"IGRD";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RasterHeader {
    pub width: u32,
    pub height: u32,
    pub channels: u32,
}

impl RasterHeader {
    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..4].copy_from_slice(MAGIC);
        out[4..8].copy_from_slice(&VERSION.to_le_bytes());
        out[8..12].copy_from_slice(&self.width.to_le_bytes());
        out[12..16].copy_from_slice(&self.height.to_le_bytes());
        out[16..20].copy_from_slice(&self.channels.to_le_bytes());
        out
    }

    fn parse(path: &Path, bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::format(path, "file shorter than the 20-byte header"));
        }
        if &bytes[0..4] != MAGIC {
            return Err(Error::format(path, "bad magic, expected IGRD"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let version = word(4);
        if version != VERSION {
            return Err(Error::format(path, format!("unsupported version {version}")));
        }
        let header = RasterHeader {
            width: word(8),
            height: word(12),
            channels: word(16),
        };
        if !(1..=2).contains(&header.channels) {
            return Err(Error::format(
                path,
                format!("channel count {} not in {{1, 2}}", header.channels),
            ));
        }
        if header.width == 0 || header.height == 0 {
            return Err(Error::format(path, "zero-sized raster"));
        }
        Ok(header)
    }

    fn payload_len(&self) -> usize {
        self.width as usize * self.height as usize * self.channels as usize * 4
    }
}

/// Contents of a raster file, dispatched on the header's channel count.
#[derive(Debug, Clone, PartialEq)]
pub enum Raster {
    Single {
        width: usize,
        height: usize,
        data: Vec<f32>,
    },
    Complex(ComplexField),
}

impl Raster {
    pub fn channels(&self) -> u32 {
        match self {
            Raster::Single { .. } => 1,
            Raster::Complex(_) => 2,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        match self {
            Raster::Single { width, height, .. } => (*width, *height),
            Raster::Complex(c) => c.dims(),
        }
    }

    pub fn into_phase(self) -> Result<PhaseImage> {
        match self {
            Raster::Single {
                width,
                height,
                data,
            } => PhaseImage::new(width, height, data),
            Raster::Complex(_) => Err(Error::Shape(
                "expected a single-channel phase raster, found two channels".into(),
            )),
        }
    }

    /// Single-channel data interpreted as (possibly unwrapped) phase and wrapped.
    pub fn into_wrapped_phase(self) -> Result<PhaseImage> {
        match self {
            Raster::Single {
                width,
                height,
                data,
            } => Ok(PhaseImage::from_unwrapped(&UnwrappedImage::new(
                width, height, data,
            )?)),
            Raster::Complex(_) => Err(Error::Shape(
                "expected a single-channel phase raster, found two channels".into(),
            )),
        }
    }

    pub fn into_coherence(self) -> Result<CoherenceMap> {
        match self {
            Raster::Single {
                width,
                height,
                data,
            } => CoherenceMap::new(width, height, data),
            Raster::Complex(_) => Err(Error::Shape(
                "expected a single-channel coherence raster, found two channels".into(),
            )),
        }
    }

    pub fn into_complex(self) -> Result<ComplexField> {
        match self {
            Raster::Complex(c) => Ok(c),
            Raster::Single { .. } => Err(Error::Shape(
                "expected a two-channel complex raster, found one channel".into(),
            )),
        }
    }
}

impl From<ComplexField> for Raster {
    fn from(c: ComplexField) -> Self {
        Raster::Complex(c)
    }
}

impl From<&PhaseImage> for Raster {
    fn from(p: &PhaseImage) -> Self {
        Raster::Single {
            width: p.width(),
            height: p.height(),
            data: p.data().to_vec(),
        }
    }
}

impl From<&UnwrappedImage> for Raster {
    fn from(p: &UnwrappedImage) -> Self {
        Raster::Single {
            width: p.width(),
            height: p.height(),
            data: p.data().to_vec(),
        }
    }
}

impl From<&CoherenceMap> for Raster {
    fn from(p: &CoherenceMap) -> Self {
        Raster::Single {
            width: p.width(),
            height: p.height(),
            data: p.data().to_vec(),
        }
    }
}

fn push_plane(out: &mut Vec<u8>, plane: &[f32]) {
    for v in plane {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode(raster: &Raster) -> Vec<u8> {
    let (width, height) = raster.dims();
    let header = RasterHeader {
        width: width as u32,
        height: height as u32,
        channels: raster.channels(),
    };
    let mut out = Vec::with_capacity(HEADER_LEN + header.payload_len());
    out.extend_from_slice(&header.to_bytes());
    match raster {
        Raster::Single { data, .. } => push_plane(&mut out, data),
        Raster::Complex(c) => {
            push_plane(&mut out, c.re());
            push_plane(&mut out, c.im());
        }
    }
    out
}

pub fn decode(path: &Path, bytes: &[u8]) -> Result<Raster> {
    let header = RasterHeader::parse(path, bytes)?;
    let expected = header.payload_len();
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::format(
            path,
            format!(
                "payload is {} bytes, header requires {expected}",
                payload.len()
            ),
        ));
    }
    let floats: Vec<f32> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let (width, height) = (header.width as usize, header.height as usize);
    if header.channels == 1 {
        Ok(Raster::Single {
            width,
            height,
            data: floats,
        })
    } else {
        let n = width * height;
        let mut re = floats;
        let im = re.split_off(n);
        Ok(Raster::Complex(ComplexField::new(width, height, re, im)?))
    }
}

pub fn write_raster(path: impl AsRef<Path>, raster: &Raster) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&encode(raster))
        .map_err(|e| Error::io(path, e))
}

pub fn read_raster(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(path, &bytes)
}
