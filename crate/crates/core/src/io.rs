//! PNG and binary PPM (P6) image I/O.
//!
//! PNG resolution is carried in the `pHYs` chunk (pixels per meter). When an
//! image has no usable resolution the caller-supplied fallback is used.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::{BitMask, Channels, Raster};

const METERS_PER_INCH: f64 = 0.0254;

/// Read a PNG or PPM file. `fallback_dpi` applies when the file carries no
/// resolution (always the case for PPM).
pub fn read_image(path: &Path, fallback_dpi: f64) -> Result<Raster> {
    let mut magic = [0u8; 2];
    File::open(path)?.read_exact(&mut magic)?;
    match &magic {
        b"P6" => read_ppm(path, fallback_dpi),
        [0x89, b'P'] => read_png(path, fallback_dpi),
        _ => Err(Error::ImageFormat {
            path: path.to_path_buf(),
            reason: "expected PNG or binary PPM (P6)".into(),
        }),
    }
}

/// Write PNG or PPM depending on the file extension (`.ppm` → P6).
pub fn write_image(path: &Path, img: &Raster) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("ppm") => write_ppm(path, img),
        _ => write_png(path, img),
    }
}

pub fn read_png(path: &Path, fallback_dpi: f64) -> Result<Raster> {
    let mut decoder = png::Decoder::new(BufReader::new(File::open(path)?));
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder.read_info()?;
    let dpi = reader
        .info()
        .pixel_dims
        .filter(|d| d.unit == png::Unit::Meter && d.xppu > 0)
        .map(|d| (d.xppu as f64 * METERS_PER_INCH).round())
        .unwrap_or(fallback_dpi);
    let size = reader.output_buffer_size().ok_or_else(|| Error::ImageFormat {
        path: path.to_path_buf(),
        reason: "image too large".into(),
    })?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf)?;
    let (w, h) = (info.width as usize, info.height as usize);
    let stride = info.line_size;
    let take = |n: usize| -> Vec<u8> {
        let mut out = Vec::with_capacity(w * h * n);
        for row in buf.chunks(stride).take(h) {
            out.extend_from_slice(&row[..w * n]);
        }
        out
    };
    // drop alpha, fold gray+alpha into gray
    let (channels, pixels) = match info.color_type {
        png::ColorType::Rgb => (Channels::Rgb8, take(3)),
        png::ColorType::Grayscale => (Channels::Gray8, take(1)),
        png::ColorType::Rgba => {
            (Channels::Rgb8, take(4).chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect())
        }
        png::ColorType::GrayscaleAlpha => {
            (Channels::Gray8, take(2).chunks_exact(2).map(|p| p[0]).collect())
        }
        png::ColorType::Indexed => {
            return Err(Error::ImageFormat {
                path: path.to_path_buf(),
                reason: "indexed PNG was not expanded".into(),
            })
        }
    };
    Raster::from_raw(w, h, channels, pixels, dpi)
}

pub fn write_png(path: &Path, img: &Raster) -> Result<()> {
    let writer = BufWriter::new(File::create(path)?);
    let mut encoder = png::Encoder::new(writer, img.width() as u32, img.height() as u32);
    encoder.set_color(match img.channels() {
        Channels::Rgb8 => png::ColorType::Rgb,
        Channels::Gray8 => png::ColorType::Grayscale,
    });
    encoder.set_depth(png::BitDepth::Eight);
    let ppm = (img.dpi() / METERS_PER_INCH).round() as u32;
    encoder.set_pixel_dims(Some(png::PixelDimensions { xppu: ppm, yppu: ppm, unit: png::Unit::Meter }));
    let mut writer = encoder.write_header()?;
    writer.write_image_data(img.pixels())?;
    writer.finish()?;
    Ok(())
}

pub fn write_mask_png(path: &Path, mask: &BitMask, dpi: f64) -> Result<()> {
    write_png(path, &mask.to_raster(dpi))
}

fn read_token(r: &mut impl BufRead) -> Result<String> {
    let mut token = String::new();
    loop {
        let mut byte = [0u8; 1];
        if r.read(&mut byte)? == 0 {
            break;
        }
        let c = byte[0] as char;
        if c == '#' && token.is_empty() {
            let mut line = String::new();
            r.read_line(&mut line)?;
            continue;
        }
        if c.is_ascii_whitespace() {
            if token.is_empty() {
                continue;
            }
            break;
        }
        token.push(c);
    }
    Ok(token)
}

pub fn read_ppm(path: &Path, dpi: f64) -> Result<Raster> {
    let bad = |reason: &str| Error::ImageFormat { path: path.to_path_buf(), reason: reason.into() };
    let mut r = BufReader::new(File::open(path)?);
    if read_token(&mut r)? != "P6" {
        return Err(bad("missing P6 magic"));
    }
    let mut next_num = || -> Result<usize> {
        read_token(&mut r)?.parse::<usize>().map_err(|_| bad("malformed header"))
    };
    let (w, h, maxval) = (next_num()?, next_num()?, next_num()?);
    if maxval != 255 {
        return Err(bad("only maxval 255 is supported"));
    }
    let mut pixels = vec![0u8; w * h * 3];
    r.read_exact(&mut pixels)?;
    Raster::from_raw(w, h, Channels::Rgb8, pixels, dpi)
}

pub fn write_ppm(path: &Path, img: &Raster) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P6\n{} {}\n255\n", img.width(), img.height())?;
    match img.channels() {
        Channels::Rgb8 => w.write_all(img.pixels())?,
        Channels::Gray8 => {
            let rgb: Vec<u8> = img.pixels().iter().flat_map(|&v| [v, v, v]).collect();
            w.write_all(&rgb)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Raster {
        let mut img = Raster::filled_rgb(7, 5, [250, 240, 230], 300.0);
        img.set_rgb(3, 2, [1, 2, 3]);
        img.set_rgb(6, 4, [200, 10, 90]);
        img
    }

    #[test]
    fn png_round_trip_keeps_dpi() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let img = sample();
        write_image(&path, &img).unwrap();
        let back = read_image(&path, 72.0).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn ppm_round_trip_uses_fallback_dpi() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ppm");
        let img = sample();
        write_image(&path, &img).unwrap();
        let back = read_image(&path, 300.0).unwrap();
        assert_eq!(back, img);
        let back = read_image(&path, 150.0).unwrap();
        assert_eq!(back.dpi(), 150.0);
    }

    #[test]
    fn gray_png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        let mut img = Raster::filled_gray(3, 3, 9, 200.0);
        img.set_rgb(1, 1, [255; 3]);
        write_png(&path, &img).unwrap();
        assert_eq!(read_image(&path, 1.0).unwrap(), img);
    }

    #[test]
    fn unknown_format_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bin");
        std::fs::write(&path, b"GIF89a").unwrap();
        assert!(matches!(read_image(&path, 200.0), Err(Error::ImageFormat { .. })));
    }
}
