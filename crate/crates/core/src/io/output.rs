use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use super::raster::{load_raster, RasterSpec};
use super::report::RunReport;
use crate::engine::RunResult;
use crate::metrics::render_confusion_map;
use crate::preprocess::MultiBandImage;
use crate::{contract, Error, Result};

pub const PROBABILITY_FILE: &str = "probability.png";
pub const MASK_FILE: &str = "mask.png";
pub const CONFUSION_FILE: &str = "confusion.png";
pub const DIFFERENCE_FILE: &str = "difference.png";
pub const REPORT_FILE: &str = "report.txt";

fn write_png(path: &Path, width: usize, height: usize, color: png::ColorType, depth: png::BitDepth, data: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(color);
    encoder.set_depth(depth);
    let to_err = |e: png::EncodingError| match e {
        png::EncodingError::IoError(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other}", path.display())),
    };
    let mut writer = encoder.write_header().map_err(to_err)?;
    writer.write_image_data(data).map_err(to_err)?;
    writer.finish().map_err(to_err)
}

/// 16-bit grayscale with code `round(p * 65535)`.
pub fn write_probability_png(path: &Path, pc: &[f32], height: usize, width: usize) -> Result<()> {
    contract!(pc.len() == height * width, "{} probabilities for a {height} x {width} map", pc.len());
    let data: Vec<u8> = pc
        .iter()
        .flat_map(|&p| ((((p as f64).clamp(0.0, 1.0) * 65535.0).round()) as u16).to_be_bytes())
        .collect();
    write_png(path, width, height, png::ColorType::Grayscale, png::BitDepth::Sixteen, &data)
}

/// 16-bit grayscale or RGB copy of a 1- or 3-band image.
pub fn write_image_png(path: &Path, image: &MultiBandImage) -> Result<()> {
    let color = match image.bands() {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        b => return Err(Error::Contract(format!("cannot write a {b}-band image as PNG"))),
    };
    let data: Vec<u8> = image
        .values()
        .iter()
        .flat_map(|&v| (((v as f64) * 65535.0).round() as u16).to_be_bytes())
        .collect();
    write_png(path, image.width(), image.height(), color, png::BitDepth::Sixteen, &data)
}

/// Reads a probability map back as `code / 65535`.
pub fn read_probability_png(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let loaded = load_raster(&RasterSpec::new(path))?;
    let img = loaded.image;
    contract!(img.bands() == 1, "{} is not a single-channel map", path.display());
    Ok((img.height(), img.width(), img.values().to_vec()))
}

/// 8-bit grayscale, 255 for change and 0 otherwise.
pub fn write_mask_png(path: &Path, mask: &[bool], height: usize, width: usize) -> Result<()> {
    contract!(mask.len() == height * width, "{} mask pixels for a {height} x {width} map", mask.len());
    let data: Vec<u8> = mask.iter().map(|&m| if m { 255 } else { 0 }).collect();
    write_png(path, width, height, png::ColorType::Grayscale, png::BitDepth::Eight, &data)
}

pub fn write_confusion_png(path: &Path, mask: &[bool], reference: &[bool], height: usize, width: usize) -> Result<()> {
    contract!(mask.len() == height * width, "{} mask pixels for a {height} x {width} map", mask.len());
    let rgb = render_confusion_map(mask, reference)?;
    write_png(path, width, height, png::ColorType::Rgb, png::BitDepth::Eight, rgb.as_flattened())
}

/// 8-bit grayscale of the difference image scaled by its maximum.
pub fn write_difference_png(path: &Path, values: &[f32], height: usize, width: usize) -> Result<()> {
    contract!(values.len() == height * width, "{} values for a {height} x {width} map", values.len());
    let max = values.iter().copied().fold(0.0f32, f32::max);
    let data: Vec<u8> = values
        .iter()
        .map(|&v| if max > 0.0 { (v / max * 255.0).round().clamp(0.0, 255.0) as u8 } else { 0 })
        .collect();
    write_png(path, width, height, png::ColorType::Grayscale, png::BitDepth::Eight, &data)
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputFiles {
    pub probability: PathBuf,
    pub mask: PathBuf,
    pub difference: PathBuf,
    pub confusion: Option<PathBuf>,
    pub report: PathBuf,
}

/// Writes every output of a run into `dir`, creating it when needed.
/// `confusion.png` is written only when a reference mask is supplied.
pub fn write_outputs(dir: &Path, result: &RunResult, reference: Option<&[bool]>, report: &RunReport) -> Result<OutputFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (h, w) = (result.height, result.width);
    let files = OutputFiles {
        probability: dir.join(PROBABILITY_FILE),
        mask: dir.join(MASK_FILE),
        difference: dir.join(DIFFERENCE_FILE),
        confusion: reference.map(|_| dir.join(CONFUSION_FILE)),
        report: dir.join(REPORT_FILE),
    };
    write_probability_png(&files.probability, &result.probability, h, w)?;
    write_mask_png(&files.mask, &result.mask, h, w)?;
    write_difference_png(&files.difference, result.prepared.difference.values(), h, w)?;
    if let (Some(path), Some(r)) = (&files.confusion, reference) {
        write_confusion_png(path, &result.mask, r, h, w)?;
    }
    std::fs::write(&files.report, report.to_text()).map_err(|e| Error::io(&files.report, e))?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_quantizes_to_32768() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.png");
        write_probability_png(&p, &[0.5; 6], 2, 3).unwrap();
        let decoder = png::Decoder::new(File::open(&p).unwrap());
        let mut reader = decoder.read_info().unwrap();
        let mut buf = vec![0; reader.output_buffer_size()];
        let info = reader.next_frame(&mut buf).unwrap();
        assert_eq!(info.bit_depth, png::BitDepth::Sixteen);
        for c in buf[..info.buffer_size()].chunks(2) {
            assert_eq!(u16::from_be_bytes([c[0], c[1]]), 32768);
        }
    }

    #[test]
    fn probability_round_trip_within_one_code() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.png");
        let pc: Vec<f32> = (0..40).map(|i| (i as f32 * 0.0251).fract()).collect();
        write_probability_png(&p, &pc, 5, 8).unwrap();
        let (h, w, back) = read_probability_png(&p).unwrap();
        assert_eq!((h, w), (5, 8));
        for (a, b) in pc.iter().zip(&back) {
            assert!((a - b).abs() as f64 <= 1.0 / 65535.0 + 1e-7);
        }
    }

    #[test]
    fn image_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("i.png");
        let values: Vec<f32> = (0..24).map(|i| i as f32 / 23.0).collect();
        let img = MultiBandImage::new(2, 4, 3, values).unwrap();
        write_image_png(&p, &img).unwrap();
        let back = load_raster(&RasterSpec::new(&p)).unwrap().image;
        assert_eq!((back.height(), back.width(), back.bands()), (2, 4, 3));
        for (a, b) in img.values().iter().zip(back.values()) {
            assert!((a - b).abs() <= 1.0 / 65535.0);
        }
    }

    #[test]
    fn mask_codes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        write_mask_png(&p, &[true, false, false, true], 2, 2).unwrap();
        let loaded = load_raster(&RasterSpec::new(&p)).unwrap();
        assert_eq!(loaded.image.values(), &[1.0, 0.0, 0.0, 1.0]);
        assert!(write_mask_png(&p, &[true], 2, 2).is_err());
    }
}
