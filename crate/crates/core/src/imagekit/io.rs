//! 8-bit PNG and binary PPM/PGM input and output.
//!
//! Loading maps bytes to floats unchanged. Saving rounds half away from zero
//! and clamps to `[0, 255]`. Masks load from gray (color files are averaged
//! as `(R + G + B) / 3`) with `byte >= 128` meaning foreground.

use std::path::Path;

use image::codecs::png::PngEncoder;
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat, ImageReader};

use super::{BinaryMask, Image, SaliencyMap};
use crate::error::{Error, Result};

const MASK_THRESHOLD: u8 = 128;

fn format_for(path: &Path) -> Result<ImageFormat> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("png") => Ok(ImageFormat::Png),
        Some("ppm" | "pgm" | "pnm") => Ok(ImageFormat::Pnm),
        _ => Err(Error::UnsupportedFormat(path.to_path_buf())),
    }
}

/// True when the extension is one the harness reads.
pub fn is_supported(path: &Path) -> bool {
    format_for(path).is_ok()
}

fn decode(path: &Path) -> Result<DynamicImage> {
    if !path.is_file() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    let format = format_for(path)?;
    let mut reader = ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    reader.set_format(format);
    reader.decode().map_err(|e| Error::CorruptData {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let rgb = decode(path)?.to_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb.into_raw().into_iter().map(f64::from).collect();
    Image::new(h as usize, w as usize, data)
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    let gray: Vec<u8> = match decode(path)? {
        DynamicImage::ImageLuma8(g) => g.into_raw(),
        other => other
            .to_rgb8()
            .pixels()
            .map(|p| ((u16::from(p[0]) + u16::from(p[1]) + u16::from(p[2])) / 3) as u8)
            .collect(),
    };
    let (h, w) = image_dims(path)?;
    BinaryMask::new(h, w, gray.into_iter().map(|b| b >= MASK_THRESHOLD).collect())
}

/// `(height, width)` read from the file header.
pub fn image_dims(path: impl AsRef<Path>) -> Result<(usize, usize)> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    let (w, h) = image::image_dimensions(path).map_err(|e| Error::CorruptData {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok((h as usize, w as usize))
}

/// Byte quantization used at every file boundary.
#[inline]
pub fn quantize(v: f64) -> u8 {
    // f64::round rounds half away from zero; the cast saturates.
    super::clamp_byte(v.round()) as u8
}

fn write(path: &Path, bytes: &[u8], w: usize, h: usize, color: ExtendedColorType) -> Result<()> {
    let format = format_for(path)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        if !parent.is_dir() {
            return Err(Error::io(
                path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "parent directory missing"),
            ));
        }
    }
    let mut buf = Vec::new();
    let encoded = match format {
        ImageFormat::Png => PngEncoder::new(&mut buf).write_image(bytes, w as u32, h as u32, color),
        _ => {
            let subtype = match color {
                ExtendedColorType::L8 => PnmSubtype::Graymap(SampleEncoding::Binary),
                _ => PnmSubtype::Pixmap(SampleEncoding::Binary),
            };
            PnmEncoder::new(&mut buf)
                .with_subtype(subtype)
                .write_image(bytes, w as u32, h as u32, color)
        }
    };
    encoded.map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let bytes: Vec<u8> = img.data().iter().map(|&v| quantize(v)).collect();
    write(path.as_ref(), &bytes, img.width(), img.height(), ExtendedColorType::Rgb8)
}

pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let bytes: Vec<u8> = mask.data().iter().map(|&b| if b { 255 } else { 0 }).collect();
    write(path.as_ref(), &bytes, mask.width(), mask.height(), ExtendedColorType::L8)
}

pub fn save_saliency(map: &SaliencyMap, path: impl AsRef<Path>) -> Result<()> {
    let bytes: Vec<u8> = map.data().iter().map(|&v| quantize(v * 255.0)).collect();
    write(path.as_ref(), &bytes, map.width(), map.height(), ExtendedColorType::L8)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagekit::RngStream;
    use rand::Rng;

    #[test]
    fn black_png_loads_as_zero() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("black.png");
        image::save_buffer(&p, &[0u8; 12], 2, 2, ExtendedColorType::Rgb8).unwrap();
        let img = load_image(&p).unwrap();
        assert_eq!(img.dims(), (2, 2));
        assert!(img.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn white_png_loads_as_255() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("white.png");
        image::save_buffer(&p, &[255u8; 3], 1, 1, ExtendedColorType::Rgb8).unwrap();
        assert_eq!(load_image(&p).unwrap().data(), &[255.0; 3]);
    }

    #[test]
    fn ppm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("grad.ppm");
        let img = Image::from_fn(8, 12, |y, x, c| (y * 20 + x * 7 + c * 3) as f64);
        save_image(&img, &p).unwrap();
        assert_eq!(&std::fs::read(&p).unwrap()[..2], b"P6");
        assert_eq!(load_image(&p).unwrap(), img);
    }

    #[test]
    fn rounding_and_clamping() {
        assert_eq!(quantize(254.6), 255);
        assert_eq!(quantize(-3.0), 0);
        assert_eq!(quantize(2.5), 3);
        assert_eq!(quantize(1.49), 1);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.png");
        let img = Image::new(1, 1, vec![254.6, 0.4, 127.5]).unwrap();
        save_image(&img, &p).unwrap();
        assert_eq!(load_image(&p).unwrap().data(), &[255.0, 0.0, 128.0]);
    }

    #[test]
    fn random_round_trip_equals_rounded_input() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rand.png");
        let mut rng = RngStream::new(11);
        let img = Image::from_fn(16, 16, |_, _, _| rng.random_range(0.0..=255.0));
        save_image(&img, &p).unwrap();
        let back = load_image(&p).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert_eq!(a.round(), *b);
        }
    }

    #[test]
    fn distinct_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_image(dir.path().join("missing.png")), Err(Error::NotFound(_))));
        let bmp = dir.path().join("x.bmp");
        std::fs::write(&bmp, b"BM").unwrap();
        assert!(matches!(load_image(&bmp), Err(Error::UnsupportedFormat(_))));
        let bad = dir.path().join("bad.png");
        std::fs::write(&bad, b"not a png at all").unwrap();
        assert!(matches!(load_image(&bad), Err(Error::CorruptData { .. })));
        let img = Image::filled(1, 1, [0.0; 3]);
        assert!(matches!(
            save_image(&img, dir.path().join("nope/x.png")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn mask_threshold_at_128() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.pgm");
        image::save_buffer_with_format(&p, &[0, 127, 128, 255], 4, 1, ExtendedColorType::L8, ImageFormat::Pnm)
            .unwrap();
        let m = load_mask(&p).unwrap();
        assert_eq!(m.data(), &[false, false, true, true]);

        let rgb = dir.path().join("m.png");
        image::save_buffer(&rgb, &[255, 255, 0, 10, 10, 10], 2, 1, ExtendedColorType::Rgb8).unwrap();
        assert_eq!(load_mask(&rgb).unwrap().data(), &[true, false]);
    }
}
