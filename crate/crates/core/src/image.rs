//! Image container and pixel-level operations.
//!
//! Images are RGB with real intensities in `[0, 1]`, stored interleaved in
//! row-major order (`data[(y * width + x) * 3 + c]`). 8-bit sources map to
//! `[0, 1]` by dividing by 255. Binary PPM (P6, maxval 255) is the native
//! format and round-trips byte-exactly; PNG is supported read-only.

use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// An RGB image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

pub const CHANNELS: usize = 3;

impl Image {
    /// Builds an image from interleaved RGB data (`(y * width + x) * 3 + c`).
    pub fn from_data(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::arg("image dimensions must be nonzero"));
        }
        if data.len() != width * height * CHANNELS {
            return Err(Error::arg(format!(
                "data length {} does not match {}x{}x{}",
                data.len(),
                width,
                height,
                CHANNELS
            )));
        }
        Ok(Image {
            width,
            height,
            data,
        })
    }

    /// A constant-intensity image.
    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Image::from_data(width, height, vec![value; width * height * CHANNELS])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * CHANNELS + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * CHANNELS + c] = v;
    }

    /// Top-left anchored crop. Used to trim images to a multiple of the patch
    /// side before grid extraction (right/bottom remainder is discarded).
    pub fn crop(&self, width: usize, height: usize) -> Result<Image> {
        self.window(0, 0, width, height)
    }

    /// Copies the `width x height` rectangle whose top-left corner is at
    /// `(x0, y0)`.
    pub fn window(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Image> {
        if width == 0
            || height == 0
            || x0 + width > self.width
            || y0 + height > self.height
        {
            return Err(Error::arg(format!(
                "window {width}x{height} at ({x0}, {y0}) outside image {}x{}",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(width * height * CHANNELS);
        for y in y0..y0 + height {
            let row = (y * self.width + x0) * CHANNELS;
            data.extend_from_slice(&self.data[row..row + width * CHANNELS]);
        }
        Image::from_data(width, height, data)
    }
}

/// Loads an image from `path`. Binary PPM (P6), PNG, and BMP are
/// recognized by file extension; anything else is attempted as PPM.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("png") | Some("bmp") => load_via_decoder(path),
        _ => {
            let bytes = std::fs::read(path)?;
            decode_ppm(&bytes)
        }
    }
}

/// Saves `img` as binary PPM (P6, maxval 255). Intensities are clamped to
/// `[0, 1]` and quantized by rounding to the nearest 8-bit value.
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    write!(w, "P6\n{} {}\n255\n", img.width, img.height)?;
    let bytes: Vec<u8> = img.data.iter().map(|&v| quantize(v)).collect();
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

#[inline]
fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn load_via_decoder(path: &Path) -> Result<Image> {
    let dyn_img = image::ImageReader::open(path)?
        .decode()
        .map_err(|e| Error::format(format!("decode {}: {e}", path.display())))?;
    let rgb = dyn_img.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let data = rgb.as_raw().iter().map(|&b| b as f64 / 255.0).collect();
    Image::from_data(w, h, data)
}

/// Decodes a binary PPM (P6) byte stream. Maxval must be 255; `#` comments
/// in the header are skipped per the netpbm convention.
pub fn decode_ppm(bytes: &[u8]) -> Result<Image> {
    let mut cursor = PpmCursor::new(bytes);
    let magic = cursor.token()?;
    if magic != b"P6" {
        return Err(Error::format("not a P6 ppm (bad magic)"));
    }
    let width = cursor.unsigned()?;
    let height = cursor.unsigned()?;
    let maxval = cursor.unsigned()?;
    if maxval != 255 {
        return Err(Error::format(format!("unsupported maxval {maxval} (expected 255)")));
    }
    if width == 0 || height == 0 {
        return Err(Error::format("zero image dimension in header"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    cursor.skip_single_whitespace()?;
    let need = width * height * CHANNELS;
    let raster = cursor.rest();
    if raster.len() < need {
        return Err(Error::format(format!(
            "truncated raster: need {need} bytes, have {}",
            raster.len()
        )));
    }
    let data = raster[..need].iter().map(|&b| b as f64 / 255.0).collect();
    Image::from_data(width, height, data)
}

/// Encodes `img` as P6 bytes (the same bytes `save_image` writes).
pub fn encode_ppm(img: &Image) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + img.data.len());
    out.extend_from_slice(format!("P6\n{} {}\n255\n", img.width, img.height).as_bytes());
    out.extend(img.data.iter().map(|&v| quantize(v)));
    out
}

struct PpmCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> PpmCursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        PpmCursor { bytes, pos: 0 }
    }

    fn skip_ws_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<&'a [u8]> {
        self.skip_ws_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format("unexpected end of ppm header"));
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn unsigned(&mut self) -> Result<usize> {
        let tok = self.token()?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| Error::format("malformed integer in ppm header"))
    }

    fn skip_single_whitespace(&mut self) -> Result<()> {
        if self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::format("missing whitespace before ppm raster"))
        }
    }

    fn rest(&self) -> &'a [u8] {
        &self.bytes[self.pos..]
    }
}

/// Box-filter resize: each output pixel is the area-weighted average of the
/// source pixels its footprint covers. Deterministic, exact for identity and
/// integer downscales, and preserves the mean of constant images.
pub fn resize_box(img: &Image, width: usize, height: usize) -> Result<Image> {
    if width == 0 || height == 0 {
        return Err(Error::arg("resize target dimensions must be nonzero"));
    }
    if width == img.width && height == img.height {
        return Ok(img.clone());
    }
    let sx = img.width as f64 / width as f64;
    let sy = img.height as f64 / height as f64;
    let mut data = vec![0.0; width * height * CHANNELS];
    for oy in 0..height {
        let y0 = oy as f64 * sy;
        let y1 = (oy + 1) as f64 * sy;
        let iy0 = y0.floor() as usize;
        let iy1 = (y1.ceil() as usize).min(img.height);
        for ox in 0..width {
            let x0 = ox as f64 * sx;
            let x1 = (ox + 1) as f64 * sx;
            let ix0 = x0.floor() as usize;
            let ix1 = (x1.ceil() as usize).min(img.width);
            let mut acc = [0.0f64; CHANNELS];
            let mut total = 0.0;
            for iy in iy0..iy1 {
                let wy = overlap(iy as f64, (iy + 1) as f64, y0, y1);
                for ix in ix0..ix1 {
                    let wx = overlap(ix as f64, (ix + 1) as f64, x0, x1);
                    let w = wx * wy;
                    if w > 0.0 {
                        total += w;
                        let base = (iy * img.width + ix) * CHANNELS;
                        for c in 0..CHANNELS {
                            acc[c] += w * img.data[base + c];
                        }
                    }
                }
            }
            let base = (oy * width + ox) * CHANNELS;
            for c in 0..CHANNELS {
                data[base + c] = acc[c] / total;
            }
        }
    }
    Image::from_data(width, height, data)
}

#[inline]
fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

/// Adds zero-mean Gaussian noise with standard deviation `sigma` given on the
/// 0–255 scale, then clamps back to `[0, 1]`. Deterministic under a fixed
/// generator state; `sigma = 0` returns the input unchanged.
pub fn add_gaussian_noise<R: Rng>(img: &Image, sigma: f64, rng: &mut R) -> Result<Image> {
    if sigma < 0.0 || !sigma.is_finite() {
        return Err(Error::arg(format!("noise sigma must be finite and >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::arg(format!("bad sigma: {e}")))?;
    let data = img
        .data
        .iter()
        .map(|&v| (v + normal.sample(rng) / 255.0).clamp(0.0, 1.0))
        .collect();
    Image::from_data(img.width, img.height, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p6_bytes(w: usize, h: usize, fill: u8) -> Vec<u8> {
        let mut v = format!("P6\n{w} {h}\n255\n").into_bytes();
        v.extend(std::iter::repeat(fill).take(w * h * 3));
        v
    }

    #[test]
    fn decode_all_255_maps_to_one() {
        let img = decode_ppm(&p6_bytes(2, 2, 255)).unwrap();
        assert!(img.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn decode_all_zero_maps_to_zero() {
        let img = decode_ppm(&p6_bytes(2, 2, 0)).unwrap();
        assert!(img.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn decode_128_maps_to_direct_division() {
        // oracle: byte / 255
        let img = decode_ppm(&p6_bytes(1, 1, 128)).unwrap();
        assert_abs_diff_eq!(img.data()[0], 128.0 / 255.0, epsilon = 1e-15);
        assert_abs_diff_eq!(img.data()[0], 0.50196, epsilon = 1e-5);
    }

    #[test]
    fn decode_skips_header_comments() {
        let mut bytes = b"P6\n# a comment\n2 1\n# another\n255\n".to_vec();
        bytes.extend([0u8; 6]);
        let img = decode_ppm(&bytes).unwrap();
        assert_eq!((img.width(), img.height()), (2, 1));
    }

    #[test]
    fn decode_rejects_bad_magic_and_maxval() {
        assert!(matches!(decode_ppm(b"P5\n1 1\n255\n\0"), Err(Error::Format(_))));
        let mut bytes = b"P6\n1 1\n65535\n".to_vec();
        bytes.extend([0u8; 6]);
        assert!(matches!(decode_ppm(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn decode_rejects_truncated_raster() {
        let mut bytes = b"P6\n2 2\n255\n".to_vec();
        bytes.extend([0u8; 5]);
        assert!(matches!(decode_ppm(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn load_missing_file_is_io_error() {
        let err = load_image("/nonexistent/nowhere.ppm").unwrap_err();
        assert!(matches!(err, Error::Io(_)));
    }

    #[test]
    fn ppm_round_trip_is_byte_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data: Vec<f64> = (0..5 * 4 * 3).map(|_| rng.random::<f64>()).collect();
        let img = Image::from_data(5, 4, data).unwrap();
        let bytes = encode_ppm(&img);
        let back = decode_ppm(&bytes).unwrap();
        assert_eq!(encode_ppm(&back), bytes);
    }

    #[test]
    fn save_then_load_matches_quantized_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.ppm");
        let img = Image::filled(3, 2, 128.0 / 255.0).unwrap();
        save_image(&img, &path).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn resize_same_size_is_identity() {
        let img = Image::filled(4, 3, 0.25).unwrap();
        let out = resize_box(&img, 4, 3).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn resize_constant_image_stays_constant() {
        let img = Image::filled(4, 4, 0.7).unwrap();
        let out = resize_box(&img, 2, 2).unwrap();
        for &v in out.data() {
            assert_abs_diff_eq!(v, 0.7, epsilon = 1e-15);
        }
    }

    #[test]
    fn resize_two_pixels_averages_to_half() {
        // hand oracle: box average of {0, 1} is 0.5
        let mut img = Image::filled(2, 1, 0.0).unwrap();
        for c in 0..CHANNELS {
            img.set(1, 0, c, 1.0);
        }
        let out = resize_box(&img, 1, 1).unwrap();
        for c in 0..CHANNELS {
            assert_abs_diff_eq!(out.get(0, 0, c), 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn resize_rejects_zero_target() {
        let img = Image::filled(2, 2, 0.0).unwrap();
        assert!(matches!(resize_box(&img, 0, 1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn resize_non_integer_ratio_preserves_global_mean_of_constant() {
        let img = Image::filled(128, 128, 0.33).unwrap();
        let out = resize_box(&img, 72, 72).unwrap();
        let mean: f64 = out.data().iter().sum::<f64>() / out.data().len() as f64;
        assert_abs_diff_eq!(mean, 0.33, epsilon = 1e-12);
    }

    #[test]
    fn noise_sigma_zero_is_identity() {
        let img = Image::filled(8, 8, 0.4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = add_gaussian_noise(&img, 0.0, &mut rng).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn noise_rejects_negative_sigma() {
        let img = Image::filled(2, 2, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            add_gaussian_noise(&img, -1.0, &mut rng),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn noise_is_reproducible_from_seed() {
        let img = Image::filled(16, 16, 0.5).unwrap();
        let a = add_gaussian_noise(&img, 25.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = add_gaussian_noise(&img, 25.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noise_statistics_match_sigma_25() {
        // statistical oracle on ~1e6 samples: mean within +-0.5 of 0 and
        // stddev within +-0.5 of 25 (mid-gray keeps clamping negligible).
        let img = Image::filled(578, 577, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let noisy = add_gaussian_noise(&img, 25.0, &mut rng).unwrap();
        let diffs: Vec<f64> = noisy
            .data()
            .iter()
            .zip(img.data())
            .map(|(&n, &c)| (n - c) * 255.0)
            .collect();
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.5, "noise mean {mean} out of range");
        assert!((var.sqrt() - 25.0).abs() < 0.5, "noise stddev {} out of range", var.sqrt());
    }

    #[test]
    fn crop_discards_right_and_bottom() {
        let mut img = Image::filled(3, 3, 0.0).unwrap();
        img.set(0, 0, 0, 1.0);
        img.set(2, 2, 0, 1.0);
        let c = img.crop(2, 2).unwrap();
        assert_eq!(c.get(0, 0, 0), 1.0);
        assert_eq!(c.width(), 2);
        assert_eq!(c.height(), 2);
    }

    #[test]
    fn window_copies_offset_rectangle() {
        let mut img = Image::filled(4, 3, 0.0).unwrap();
        img.set(1, 1, 0, 0.25);
        img.set(2, 1, 1, 0.5);
        img.set(1, 2, 2, 0.75);
        let w = img.window(1, 1, 2, 2).unwrap();
        assert_eq!((w.width(), w.height()), (2, 2));
        assert_eq!(w.get(0, 0, 0), 0.25);
        assert_eq!(w.get(1, 0, 1), 0.5);
        assert_eq!(w.get(0, 1, 2), 0.75);
        assert!(img.window(3, 0, 2, 2).is_err());
        assert!(img.window(0, 0, 0, 1).is_err());
    }
}
