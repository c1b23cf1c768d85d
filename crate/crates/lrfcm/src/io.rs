//! Image file I/O: PGM (P2/P5), PPM (P3/P6) and 8-bit PNG.
//!
//! Reads sniff the magic bytes; writes pick the codec from the file
//! extension. Samples with a maxval above 255 are rescaled by `255/65535`
//! on read so the rest of the pipeline only ever sees `[0, 255]`.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{quantize_u8, ColorImage, GrayImage, Image};

const SIXTEEN_BIT_SCALE: f64 = 255.0 / 65535.0;

pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match bytes.get(..2) {
        Some(b"P2") | Some(b"P5") => read_pnm(&bytes, false),
        Some(b"P3") | Some(b"P6") => read_pnm(&bytes, true),
        Some([0x89, b'P']) => read_png(path, &bytes),
        _ => Err(Error::format(0, "unrecognized image magic")),
    }
}

pub fn write_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    match (ext.as_str(), img) {
        ("pgm", Image::Gray(g)) => write_pgm(g, path),
        ("ppm", Image::Color(c)) => write_ppm(c, path),
        ("png", _) => write_png(img, path),
        ("pgm", Image::Color(_)) => Err(Error::Param(
            "cannot write a color image as PGM; use .ppm or .png".into(),
        )),
        ("ppm", Image::Gray(_)) => Err(Error::Param(
            "cannot write a gray image as PPM; use .pgm or .png".into(),
        )),
        _ => Err(Error::Param(format!(
            "unsupported output extension `{ext}` (expected pgm, ppm or png)"
        ))),
    }
}

pub fn write_gray(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    write_image(&Image::Gray(img.clone()), path)
}

// ---------------------------------------------------------------------------
// Netpbm
// ---------------------------------------------------------------------------

struct PnmCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> PnmCursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    /// Skip whitespace and `#` comments (which run to end of line).
    fn skip_separators(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&b) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn next_uint(&mut self, what: &str) -> Result<u64> {
        self.skip_separators();
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|b| b.is_ascii_digit())
        {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(Error::format(start, format!("expected {what}")));
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap();
        text.parse::<u64>()
            .map_err(|_| Error::format(start, format!("{what} out of range")))
    }
}

fn read_pnm(bytes: &[u8], color: bool) -> Result<Image> {
    let mut cur = PnmCursor::new(bytes);
    let magic = &bytes[..2];
    cur.pos = 2;
    let binary = magic == b"P5" || magic == b"P6";

    let width = cur.next_uint("width")? as usize;
    let height = cur.next_uint("height")? as usize;
    let maxval = cur.next_uint("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::format(cur.pos, "zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format(cur.pos, format!("maxval {maxval} out of range")));
    }
    let samples = height * width * if color { 3 } else { 1 };
    let mut values = Vec::with_capacity(samples);

    if binary {
        // Exactly one whitespace byte separates the header from the raster.
        match bytes.get(cur.pos) {
            Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
            _ => return Err(Error::format(cur.pos, "missing raster separator")),
        }
        let wide = maxval > 255;
        let bytes_per_sample = if wide { 2 } else { 1 };
        let need = samples * bytes_per_sample;
        let raster = &bytes[cur.pos.min(bytes.len())..];
        if raster.len() < need {
            return Err(Error::format(
                bytes.len(),
                format!("raster truncated: need {need} bytes, have {}", raster.len()),
            ));
        }
        for i in 0..samples {
            let v = if wide {
                u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]]) as u64
            } else {
                raster[i] as u64
            };
            if v > maxval {
                return Err(Error::format(
                    cur.pos + i * bytes_per_sample,
                    format!("sample {v} exceeds maxval {maxval}"),
                ));
            }
            values.push(v);
        }
    } else {
        for _ in 0..samples {
            let at = cur.pos;
            let v = cur.next_uint("sample")?;
            if v > maxval {
                return Err(Error::format(at, format!("sample {v} exceeds maxval {maxval}")));
            }
            values.push(v);
        }
    }

    let scale = if maxval > 255 { SIXTEEN_BIT_SCALE } else { 1.0 };
    let to_f = |v: u64| v as f64 * scale;

    if color {
        let mut r = Vec::with_capacity(height * width);
        let mut g = Vec::with_capacity(height * width);
        let mut b = Vec::with_capacity(height * width);
        for px in values.chunks_exact(3) {
            r.push(to_f(px[0]));
            g.push(to_f(px[1]));
            b.push(to_f(px[2]));
        }
        Ok(Image::Color(ColorImage::new(
            GrayImage::new(height, width, r)?,
            GrayImage::new(height, width, g)?,
            GrayImage::new(height, width, b)?,
        )?))
    } else {
        let data = values.into_iter().map(to_f).collect();
        Ok(Image::Gray(GrayImage::new(height, width, data)?))
    }
}

fn write_pgm(img: &GrayImage, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(img.len() + 32);
    write!(out, "P5\n{} {}\n255\n", img.width(), img.height()).unwrap();
    out.extend(img.data().iter().map(|&v| quantize_u8(v)));
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn write_ppm(img: &ColorImage, path: &Path) -> Result<()> {
    let [r, g, b] = img.channels();
    let mut out = Vec::with_capacity(3 * r.len() + 32);
    write!(out, "P6\n{} {}\n255\n", img.width(), img.height()).unwrap();
    for i in 0..r.len() {
        out.push(quantize_u8(r.data()[i]));
        out.push(quantize_u8(g.data()[i]));
        out.push(quantize_u8(b.data()[i]));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// PNG (via the `image` crate)
// ---------------------------------------------------------------------------

fn read_png(path: &Path, bytes: &[u8]) -> Result<Image> {
    let decoded = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::format(0, format!("png decode failed: {e}")))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    match decoded {
        image::DynamicImage::ImageLuma8(buf) => {
            let data = buf.into_raw().into_iter().map(|v| v as f64).collect();
            Ok(Image::Gray(GrayImage::new(h, w, data)?))
        }
        image::DynamicImage::ImageLuma16(buf) => {
            let data = buf
                .into_raw()
                .into_iter()
                .map(|v| v as f64 * SIXTEEN_BIT_SCALE)
                .collect();
            Ok(Image::Gray(GrayImage::new(h, w, data)?))
        }
        image::DynamicImage::ImageRgb8(buf) => {
            let raw = buf.into_raw();
            let mut ch = [
                Vec::with_capacity(h * w),
                Vec::with_capacity(h * w),
                Vec::with_capacity(h * w),
            ];
            for px in raw.chunks_exact(3) {
                for k in 0..3 {
                    ch[k].push(px[k] as f64);
                }
            }
            let [r, g, b] = ch;
            Ok(Image::Color(ColorImage::new(
                GrayImage::new(h, w, r)?,
                GrayImage::new(h, w, g)?,
                GrayImage::new(h, w, b)?,
            )?))
        }
        other => Err(Error::format(
            0,
            format!(
                "unsupported png color type {:?}; expected 8-bit grayscale or RGB",
                other.color()
            ),
        )),
    }
    .map_err(|e| match e {
        Error::Format { offset, message } => Error::Format { offset, message },
        other => other,
    })
    .map_err(|e| {
        // Attach the path to bare i/o failures, if any slipped through.
        match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        }
    })
}

fn write_png(img: &Image, path: &Path) -> Result<()> {
    let to_img_err = |e: image::ImageError| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Param(format!("png encode failed: {other}")),
    };
    match img {
        Image::Gray(g) => {
            let buf: Vec<u8> = g.data().iter().map(|&v| quantize_u8(v)).collect();
            let out = image::GrayImage::from_raw(g.width() as u32, g.height() as u32, buf)
                .expect("buffer sized from image");
            out.save_with_format(path, image::ImageFormat::Png)
                .map_err(to_img_err)
        }
        Image::Color(c) => {
            let [r, g, b] = c.channels();
            let mut buf = Vec::with_capacity(3 * r.len());
            for i in 0..r.len() {
                buf.push(quantize_u8(r.data()[i]));
                buf.push(quantize_u8(g.data()[i]));
                buf.push(quantize_u8(b.data()[i]));
            }
            let out = image::RgbImage::from_raw(c.width() as u32, c.height() as u32, buf)
                .expect("buffer sized from image");
            out.save_with_format(path, image::ImageFormat::Png)
                .map_err(to_img_err)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("lrfcm-io-tests");
        fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn p2_text_decodes_literally() {
        let path = tmp("t1.pgm");
        fs::write(&path, "P2\n# comment\n2 2\n255\n0 10 20 30\n").unwrap();
        match read_image(&path).unwrap() {
            Image::Gray(g) => {
                assert_eq!(g.height(), 2);
                assert_eq!(g.width(), 2);
                assert_eq!(g.data(), &[0.0, 10.0, 20.0, 30.0]);
            }
            _ => panic!("expected gray"),
        }
    }

    #[test]
    fn p5_and_p2_agree() {
        let text = tmp("t2.pgm");
        let bin = tmp("t3.pgm");
        fs::write(&text, "P2\n2 2\n255\n0 10 20 30\n").unwrap();
        let mut payload = b"P5\n2 2\n255\n".to_vec();
        payload.extend_from_slice(&[0, 10, 20, 30]);
        fs::write(&bin, payload).unwrap();
        assert_eq!(read_image(&text).unwrap(), read_image(&bin).unwrap());
    }

    #[test]
    fn ppm_equal_planes_yield_equal_channels() {
        let path = tmp("t4.ppm");
        fs::write(&path, "P3\n2 1\n255\n5 5 5 9 9 9\n").unwrap();
        match read_image(&path).unwrap() {
            Image::Color(c) => {
                let [r, g, b] = c.channels();
                assert_eq!(r, g);
                assert_eq!(g, b);
                assert_eq!(r.data(), &[5.0, 9.0]);
            }
            _ => panic!("expected color"),
        }
    }

    #[test]
    fn sixteen_bit_rescales() {
        let path = tmp("t5.pgm");
        fs::write(&path, "P2\n1 1\n65535\n65535\n").unwrap();
        match read_image(&path).unwrap() {
            Image::Gray(g) => assert!((g.data()[0] - 255.0).abs() < 1e-12),
            _ => panic!(),
        }
    }

    #[test]
    fn malformed_header_reports_offset() {
        let path = tmp("t6.pgm");
        fs::write(&path, "P2\n2 x\n255\n0 0 0 0\n").unwrap();
        match read_image(&path) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_binary_raster_rejected() {
        let path = tmp("t7.pgm");
        let mut payload = b"P5\n2 2\n255\n".to_vec();
        payload.extend_from_slice(&[1, 2, 3]);
        fs::write(&path, payload).unwrap();
        assert!(matches!(read_image(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn quantized_roundtrip_is_identity() {
        let img = GrayImage::new(2, 3, vec![0.0, 1.0, 128.0, 254.0, 255.0, 7.0]).unwrap();
        for name in ["rt.pgm", "rt.png"] {
            let path = tmp(name);
            write_gray(&img, &path).unwrap();
            match read_image(&path).unwrap() {
                Image::Gray(back) => assert_eq!(back, img),
                _ => panic!("expected gray"),
            }
        }
    }

    #[test]
    fn write_clamps_out_of_range() {
        let img = GrayImage::new(1, 2, vec![255.7, -3.0]).unwrap();
        let path = tmp("clamp.pgm");
        write_gray(&img, &path).unwrap();
        match read_image(&path).unwrap() {
            Image::Gray(g) => assert_eq!(g.data(), &[255.0, 0.0]),
            _ => panic!(),
        }
    }

    #[test]
    fn png_color_roundtrip() {
        let r = GrayImage::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let g = GrayImage::new(2, 2, vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        let b = GrayImage::new(2, 2, vec![9.0, 10.0, 11.0, 12.0]).unwrap();
        let img = Image::Color(ColorImage::new(r, g, b).unwrap());
        let path = tmp("c.png");
        write_image(&img, &path).unwrap();
        assert_eq!(read_image(&path).unwrap(), img);
    }

    #[test]
    fn extension_mismatch_rejected() {
        let gray = Image::Gray(GrayImage::constant(2, 2, 0.0));
        assert!(write_image(&gray, tmp("x.ppm")).is_err());
        assert!(write_image(&gray, tmp("x.bmp")).is_err());
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            read_image("/nonexistent/path/img.pgm"),
            Err(Error::Io { .. })
        ));
    }
}
