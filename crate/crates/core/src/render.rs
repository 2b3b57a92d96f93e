//! PNG previews. Phase uses a hue ramp from blue (−π) to red (+π) at full
//! saturation and value; coherence is 8-bit grayscale, black at 0 and white at 1.

use std::f64::consts::PI;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{CoherenceMap, PhaseImage};

/// Hue in degrees for a phase value: 240 at −π falling linearly to 0 at +π.
pub fn phase_hue(theta: f64) -> f64 {
    let t = theta.clamp(-PI, PI);
    120.0 * (1.0 - t / PI)
}

/// HSV → 8-bit RGB with s = v = 1.
pub fn hue_to_rgb(hue: f64) -> [u8; 3] {
    let h = hue.rem_euclid(360.0) / 60.0;
    let x = 1.0 - (h % 2.0 - 1.0).abs();
    let (r, g, b) = match h as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    let q = |v: f64| (255.0 * v).round() as u8;
    [q(r), q(g), q(b)]
}

pub fn coherence_gray(gamma: f64) -> u8 {
    (255.0 * gamma.clamp(0.0, 1.0)).round() as u8
}

pub fn phase_pixels(p: &PhaseImage) -> Vec<u8> {
    p.data()
        .iter()
        .flat_map(|&t| hue_to_rgb(phase_hue(t as f64)))
        .collect()
}

pub fn coherence_pixels(c: &CoherenceMap) -> Vec<u8> {
    c.data().iter().map(|&g| coherence_gray(g as f64)).collect()
}

fn write_png(
    path: &Path,
    width: usize,
    height: usize,
    color: png::ColorType,
    pixels: &[u8],
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(color);
    encoder.set_depth(png::BitDepth::Eight);
    let to_io = |e: png::EncodingError| match e {
        png::EncodingError::IoError(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(other.to_string())),
    };
    let mut writer = encoder.write_header().map_err(to_io)?;
    writer.write_image_data(pixels).map_err(to_io)?;
    writer.finish().map_err(to_io)
}

pub fn render_phase_png(p: &PhaseImage, path: impl AsRef<Path>) -> Result<()> {
    write_png(
        path.as_ref(),
        p.width(),
        p.height(),
        png::ColorType::Rgb,
        &phase_pixels(p),
    )
}

pub fn render_coherence_png(c: &CoherenceMap, path: impl AsRef<Path>) -> Result<()> {
    write_png(
        path.as_ref(),
        c.width(),
        c.height(),
        png::ColorType::Grayscale,
        &coherence_pixels(c),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decode(path: &Path) -> (png::OutputInfo, Vec<u8>) {
        let decoder = png::Decoder::new(std::io::BufReader::new(File::open(path).unwrap()));
        let mut reader = decoder.read_info().unwrap();
        let mut buf = vec![0; reader.output_buffer_size().unwrap()];
        let info = reader.next_frame(&mut buf).unwrap();
        buf.truncate(info.buffer_size());
        (info, buf)
    }

    #[test]
    fn coherence_extremes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c0.png");
        render_coherence_png(&CoherenceMap::constant(4, 3, 0.0).unwrap(), &p).unwrap();
        let (info, px) = decode(&p);
        assert_eq!((info.width, info.height), (4, 3));
        assert!(px.iter().all(|&v| v == 0));

        render_coherence_png(&CoherenceMap::constant(4, 3, 1.0).unwrap(), &p).unwrap();
        assert!(decode(&p).1.iter().all(|&v| v == 255));
        assert_eq!(coherence_gray(0.5), 128);
    }

    #[test]
    fn phase_colormap() {
        assert_eq!(phase_hue(-PI), 240.0);
        assert_eq!(phase_hue(PI), 0.0);
        assert_eq!(phase_hue(0.0), 120.0);
        assert_eq!(hue_to_rgb(240.0), [0, 0, 255]);
        assert_eq!(hue_to_rgb(0.0), [255, 0, 0]);
        assert_eq!(hue_to_rgb(120.0), [0, 255, 0]);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.png");
        // the stored range excludes -π itself; the closest representable value
        render_phase_png(&PhaseImage::constant(5, 2, -PI + 1e-6), &path).unwrap();
        let (info, px) = decode(&path);
        assert_eq!(info.color_type, png::ColorType::Rgb);
        assert!(px.chunks(3).all(|c| c == [0, 0, 255]));
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let err = render_coherence_png(
            &CoherenceMap::constant(1, 1, 0.0).unwrap(),
            "/nonexistent/dir/x.png",
        );
        assert!(matches!(err, Err(Error::Io { .. })));
    }
}
