use std::io::BufReader;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::preprocess::MultiBandImage;
use crate::{Error, Result};

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Normalization {
    /// Each band is mapped so its minimum becomes 0 and its maximum 1.
    MinMax,
    /// Every value is divided by a fixed constant.
    Divisor(f64),
}

/// A raster path and how to bring its values into `[0, 1]`.
///
/// PNG files (8 or 16 bit, gray or RGB) default to dividing by the full
/// code range. Anything else is read as band-sequential little-endian `f32`
/// described by a sidecar `<path>.hdr` with `height=`, `width=`, `bands=`
/// and `dtype=f32le` lines, and defaults to per-band min-max.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterSpec {
    pub path: PathBuf,
    pub normalization: Option<Normalization>,
}

impl RasterSpec {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            normalization: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LoadedRaster {
    pub image: MultiBandImage,
    /// SHA-256 of the raster file, hex.
    pub checksum: String,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".hdr");
    PathBuf::from(s)
}

/// Planar band data plus the code range implied by the file format.
struct Decoded {
    height: usize,
    width: usize,
    planes: Vec<Vec<f64>>,
    full_scale: Option<f64>,
}

fn decode_png(bytes: &[u8], path: &Path) -> Result<Decoded> {
    let mut decoder = png::Decoder::new(BufReader::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let (height, width) = (info.height as usize, info.width as usize);
    let (channels, keep) = match info.color_type {
        png::ColorType::Grayscale => (1, 1),
        png::ColorType::GrayscaleAlpha => (2, 1),
        png::ColorType::Rgb => (3, 3),
        png::ColorType::Rgba => (4, 3),
        png::ColorType::Indexed => {
            return Err(Error::Format(format!("{}: unexpanded palette image", path.display())))
        }
    };
    let (samples, full_scale): (Vec<f64>, f64) = match info.bit_depth {
        png::BitDepth::Eight => (buf[..info.buffer_size()].iter().map(|&v| v as f64).collect(), 255.0),
        png::BitDepth::Sixteen => (
            buf[..info.buffer_size()]
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64)
                .collect(),
            65535.0,
        ),
        other => {
            return Err(Error::Format(format!(
                "{}: unsupported PNG bit depth {other:?}",
                path.display()
            )))
        }
    };
    let planes = (0..keep)
        .map(|c| samples.iter().skip(c).step_by(channels).copied().collect())
        .collect();
    Ok(Decoded {
        height,
        width,
        planes,
        full_scale: Some(full_scale),
    })
}

fn parse_sidecar(text: &str, path: &Path) -> Result<(usize, usize, usize)> {
    let (mut h, mut w, mut b, mut dtype) = (None, None, None, None);
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("{}: malformed header line {line:?}", path.display())))?;
        let (key, value) = (key.trim(), value.trim());
        let num = || {
            value
                .parse::<usize>()
                .map_err(|_| Error::Format(format!("{}: {key}={value} is not a count", path.display())))
        };
        match key {
            "height" => h = Some(num()?),
            "width" => w = Some(num()?),
            "bands" => b = Some(num()?),
            "dtype" => dtype = Some(value.to_string()),
            _ => {}
        }
    }
    let missing = |k: &str| Error::Format(format!("{}: header lacks {k}=", path.display()));
    let dtype = dtype.ok_or_else(|| missing("dtype"))?;
    if dtype != "f32le" {
        return Err(Error::Format(format!("{}: unsupported dtype {dtype:?}", path.display())));
    }
    Ok((
        h.ok_or_else(|| missing("height"))?,
        w.ok_or_else(|| missing("width"))?,
        b.ok_or_else(|| missing("bands"))?,
    ))
}

fn decode_raw(bytes: &[u8], path: &Path) -> Result<Decoded> {
    let header = sidecar_path(path);
    if !header.exists() {
        return Err(Error::Format(format!(
            "{}: not a PNG and no raw header {} found",
            path.display(),
            header.display()
        )));
    }
    let text = String::from_utf8(read(&header)?)
        .map_err(|_| Error::Format(format!("{}: header is not UTF-8", header.display())))?;
    let (height, width, bands) = parse_sidecar(&text, &header)?;
    let plane = height * width;
    if plane * bands * 4 != bytes.len() {
        return Err(Error::Format(format!(
            "{}: header declares {height} x {width} x {bands} f32 values ({} bytes), file has {} bytes",
            path.display(),
            plane * bands * 4,
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format(format!("{}: non-finite sample", path.display())));
    }
    Ok(Decoded {
        height,
        width,
        planes: values.chunks(plane.max(1)).map(<[f64]>::to_vec).collect(),
        full_scale: None,
    })
}

fn normalize(decoded: Decoded, normalization: Normalization, path: &Path) -> Result<MultiBandImage> {
    let planes: Vec<Vec<f32>> = match normalization {
        Normalization::Divisor(d) => {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::Config(format!("normalization divisor {d} must be positive")));
            }
            decoded
                .planes
                .iter()
                .map(|p| p.iter().map(|&v| (v / d).clamp(0.0, 1.0) as f32).collect())
                .collect()
        }
        Normalization::MinMax => decoded
            .planes
            .iter()
            .map(|p| {
                let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let span = hi - lo;
                p.iter()
                    .map(|&v| if span > 0.0 { ((v - lo) / span).clamp(0.0, 1.0) as f32 } else { 0.0 })
                    .collect()
            })
            .collect(),
    };
    MultiBandImage::from_planes(decoded.height, decoded.width, &planes)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Decodes and normalizes one raster.
pub fn load_raster(spec: &RasterSpec) -> Result<LoadedRaster> {
    let bytes = read(&spec.path)?;
    let decoded = if bytes.starts_with(&PNG_SIGNATURE) {
        decode_png(&bytes, &spec.path)?
    } else {
        decode_raw(&bytes, &spec.path)?
    };
    let normalization = spec.normalization.unwrap_or(match decoded.full_scale {
        Some(s) => Normalization::Divisor(s),
        None => Normalization::MinMax,
    });
    Ok(LoadedRaster {
        image: normalize(decoded, normalization, &spec.path)?,
        checksum: sha256_hex(&bytes),
    })
}

/// Loads both acquisitions and checks that their extents agree.
pub fn load_pair(pre: &RasterSpec, post: &RasterSpec) -> Result<(LoadedRaster, LoadedRaster)> {
    let a = load_raster(pre)?;
    let b = load_raster(post)?;
    if !a.image.same_shape(&b.image) {
        return Err(Error::Registration {
            pre: a.image.describe(),
            post: b.image.describe(),
        });
    }
    Ok((a, b))
}

/// Binary reference mask: a pixel is change when its first channel is at
/// least half the code range.
pub fn load_mask(path: &Path) -> Result<(usize, usize, Vec<bool>)> {
    let loaded = load_raster(&RasterSpec::new(path))?;
    let img = loaded.image;
    let mask = img.values().chunks(img.bands()).map(|px| px[0] >= 0.5).collect();
    Ok((img.height(), img.width(), mask))
}

/// Writes band-sequential `f32le` samples with their sidecar header.
pub fn write_raw(path: &Path, height: usize, width: usize, planes: &[Vec<f32>]) -> Result<()> {
    let mut bytes = Vec::with_capacity(planes.len() * height * width * 4);
    for p in planes {
        if p.len() != height * width {
            return Err(Error::Contract(format!(
                "band plane has {} values, expected {}",
                p.len(),
                height * width
            )));
        }
        for v in p {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let header = sidecar_path(path);
    let text = format!("height={height}\nwidth={width}\nbands={}\ndtype=f32le\n", planes.len());
    std::fs::write(&header, text).map_err(|e| Error::io(header, e))
}
