//! Synthetic imagery: spectrally shaped random fields that mimic the
//! second-order statistics of photographs, a small catalog of procedural
//! textures, and parametric distortions. Everything is reproducible from a
//! seed, which makes these generators usable as test fixtures and as a
//! stand-in corpus when no real image data is available.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};
use crate::image::{add_gaussian_noise, encode_ppm, Image};
use crate::patches::{sample_random_patches, PatchMatrix};

/// Splitmix-style avalanche; spreads structured inputs over the seed space.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent child seed from a base seed and a role path.
/// Used everywhere a parallel or per-item generator is needed, so the
/// derivation (not iteration order) fixes each item's randomness.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}

/// Zero-mean, unit-variance random field whose power spectrum falls off as
/// `1/f^exponent`, synthesized by shaping white Gaussian noise in the
/// frequency domain and inverse transforming.
fn spectral_field(width: usize, height: usize, exponent: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut spec = vec![Complex::new(0.0, 0.0); width * height];
    for v in 0..height {
        let fy = (v.min(height - v)) as f64 / height as f64;
        for u in 0..width {
            if u == 0 && v == 0 {
                continue; // zero DC: the field is mean-free by construction
            }
            let fx = (u.min(width - u)) as f64 / width as f64;
            let f = (fx * fx + fy * fy).sqrt();
            let amp = f.powf(-exponent / 2.0);
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            spec[v * width + u] = Complex::new(re * amp, im * amp);
        }
    }

    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft_inverse(width);
    for row in spec.chunks_exact_mut(width) {
        row_fft.process(row);
    }
    let col_fft = planner.plan_fft_inverse(height);
    let mut col = vec![Complex::new(0.0, 0.0); height];
    for u in 0..width {
        for v in 0..height {
            col[v] = spec[v * width + u];
        }
        col_fft.process(&mut col);
        for v in 0..height {
            spec[v * width + u] = col[v];
        }
    }

    // The real part of the complex field keeps the spectrum shape.
    let mut field: Vec<f64> = spec.iter().map(|c| c.re).collect();
    let n = field.len() as f64;
    let mean = field.iter().sum::<f64>() / n;
    let var = field.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let scale = if var > 0.0 { 1.0 / var.sqrt() } else { 1.0 };
    for v in &mut field {
        *v = (*v - mean) * scale;
    }
    field
}

/// Renders an RGB image with photograph-like second-order statistics:
/// power concentrated at low spatial frequencies (`1/f^2`) and strongly
/// correlated color channels.
pub fn natural_like_image(width: usize, height: usize, seed: u64) -> Result<Image> {
    if width == 0 || height == 0 {
        return Err(Error::arg("image dimensions must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x6e61_74]));
    let base = spectral_field(width, height, 2.0, &mut rng);
    let detail: Vec<Vec<f64>> = (0..3)
        .map(|_| spectral_field(width, height, 2.0, &mut rng))
        .collect();
    let mut data = Vec::with_capacity(width * height * 3);
    for i in 0..width * height {
        for ch in &detail {
            let v = 0.5 + 0.18 * (0.85 * base[i] + 0.35 * ch[i]);
            data.push(v.clamp(0.0, 1.0));
        }
    }
    Image::from_data(width, height, data)
}

/// Samples `count` patches of `side x side x 3` from a stream of
/// `natural_like_image` renderings (up to 100 patches per image).
pub fn natural_like_patches(side: usize, count: usize, seed: u64) -> Result<PatchMatrix> {
    const IMAGE_SIZE: usize = 128;
    const PER_IMAGE: usize = 100;
    if side == 0 || side > IMAGE_SIZE {
        return Err(Error::arg(format!(
            "patch side must be in 1..={IMAGE_SIZE}"
        )));
    }
    if count == 0 {
        return Err(Error::arg("patch count must be >= 1"));
    }
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(count);
    let mut image_index = 0u64;
    while columns.len() < count {
        let img = natural_like_image(IMAGE_SIZE, IMAGE_SIZE, derive_seed(seed, &[1, image_index]))?;
        let take = PER_IMAGE.min(count - columns.len());
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[2, image_index]));
        let batch = sample_random_patches(&img, take, side, &mut rng)?;
        for j in 0..batch.n() {
            columns.push(batch.column(j));
        }
        image_index += 1;
    }
    PatchMatrix::from_columns(&columns)
}

/// Parametric degradations applied to an image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distortion {
    /// Separable Gaussian blur with the given standard deviation in pixels.
    GaussianBlur { sigma: f64 },
    /// Additive white Gaussian noise; `sigma` is on the 0-255 byte scale.
    GaussianNoise { sigma: f64 },
    /// Scales contrast about mid-gray: `v -> 0.5 + factor * (v - 0.5)`.
    ContrastScale { factor: f64 },
}

/// Applies a distortion. Only `GaussianNoise` consumes randomness; the
/// seed is ignored by the deterministic distortions.
pub fn distort(img: &Image, distortion: Distortion, seed: u64) -> Result<Image> {
    match distortion {
        Distortion::GaussianBlur { sigma } => gaussian_blur(img, sigma),
        Distortion::GaussianNoise { sigma } => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x6e6f_6973]));
            add_gaussian_noise(img, sigma, &mut rng)
        }
        Distortion::ContrastScale { factor } => {
            if !(factor.is_finite() && factor >= 0.0) {
                return Err(Error::arg(format!(
                    "contrast factor must be finite and >= 0, got {factor}"
                )));
            }
            let data = img
                .data()
                .iter()
                .map(|v| (0.5 + factor * (v - 0.5)).clamp(0.0, 1.0))
                .collect();
            Image::from_data(img.width(), img.height(), data)
        }
    }
}

/// Separable Gaussian blur with clamp-to-edge boundaries. `sigma = 0`
/// returns the image unchanged.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Result<Image> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::arg(format!(
            "blur sigma must be finite and >= 0, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel = Vec::with_capacity(2 * radius as usize + 1);
    for i in -radius..=radius {
        kernel.push((-((i * i) as f64) / (2.0 * sigma * sigma)).exp());
    }
    let norm: f64 = kernel.iter().sum();
    for w in &mut kernel {
        *w /= norm;
    }

    let (w, h) = (img.width(), img.height());
    let clamp = |v: i64, hi: usize| v.clamp(0, hi as i64 - 1) as usize;
    let mut horiz = Image::filled(w, h, 0.0)?;
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for (ki, kw) in kernel.iter().enumerate() {
                    let sx = clamp(x as i64 + ki as i64 - radius, w);
                    acc += kw * img.get(sx, y, c);
                }
                horiz.set(x, y, c, acc);
            }
        }
    }
    let mut out = Image::filled(w, h, 0.0)?;
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for (ki, kw) in kernel.iter().enumerate() {
                    let sy = clamp(y as i64 + ki as i64 - radius, h);
                    acc += kw * horiz.get(x, sy, c);
                }
                out.set(x, y, c, acc);
            }
        }
    }
    Ok(out)
}

/// Scalar pattern behind a texture class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TexturePattern {
    /// Sinusoidal grating: `frequency` in cycles per image width.
    Grating { frequency: f64, orientation_deg: f64 },
    /// Alternating squares with the given cell edge in pixels.
    Checkerboard { cell: usize },
    /// Concentric rings around the image center, cycles per half-diagonal.
    Rings { frequency: f64 },
    /// Spectrally shaped noise; larger exponents look blotchier.
    FilteredNoise { exponent: f64 },
    /// Horizontal square-wave stripes with the given period in pixels.
    Stripes { period: usize },
    /// Diagonal luminance ramp mixed with mid-frequency noise.
    GradientBlend { noise_amount: f64 },
}

/// A named texture class: a pattern plus the two colors its scalar field
/// interpolates between. The tint is what distinguishes classes that share
/// a pattern family.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureSpec {
    pub name: String,
    pub pattern: TexturePattern,
    pub low: [f64; 3],
    pub high: [f64; 3],
}

/// The built-in catalog: twelve visually distinct classes spanning
/// oriented gratings, checkerboards, rings, filtered noise, stripes, and
/// gradients.
pub fn texture_catalog() -> Vec<TextureSpec> {
    let spec = |name: &str, pattern, low, high| TextureSpec {
        name: name.to_string(),
        pattern,
        low,
        high,
    };
    vec![
        spec(
            "grating_fine_0",
            TexturePattern::Grating {
                frequency: 14.0,
                orientation_deg: 0.0,
            },
            [0.10, 0.12, 0.30],
            [0.85, 0.88, 0.95],
        ),
        spec(
            "grating_fine_45",
            TexturePattern::Grating {
                frequency: 14.0,
                orientation_deg: 45.0,
            },
            [0.25, 0.10, 0.10],
            [0.95, 0.80, 0.70],
        ),
        spec(
            "grating_coarse_90",
            TexturePattern::Grating {
                frequency: 5.0,
                orientation_deg: 90.0,
            },
            [0.08, 0.25, 0.10],
            [0.75, 0.95, 0.78],
        ),
        spec(
            "grating_coarse_135",
            TexturePattern::Grating {
                frequency: 5.0,
                orientation_deg: 135.0,
            },
            [0.25, 0.20, 0.05],
            [0.98, 0.90, 0.60],
        ),
        spec(
            "checker_small",
            TexturePattern::Checkerboard { cell: 8 },
            [0.12, 0.12, 0.12],
            [0.92, 0.92, 0.92],
        ),
        spec(
            "checker_large",
            TexturePattern::Checkerboard { cell: 24 },
            [0.30, 0.12, 0.30],
            [0.90, 0.75, 0.92],
        ),
        spec(
            "rings_fine",
            TexturePattern::Rings { frequency: 16.0 },
            [0.05, 0.18, 0.20],
            [0.80, 0.95, 0.95],
        ),
        spec(
            "rings_coarse",
            TexturePattern::Rings { frequency: 6.0 },
            [0.25, 0.15, 0.02],
            [0.95, 0.85, 0.55],
        ),
        spec(
            "noise_fine",
            TexturePattern::FilteredNoise { exponent: 1.0 },
            [0.15, 0.20, 0.15],
            [0.85, 0.90, 0.85],
        ),
        spec(
            "noise_blotchy",
            TexturePattern::FilteredNoise { exponent: 3.0 },
            [0.10, 0.12, 0.25],
            [0.90, 0.85, 0.75],
        ),
        spec(
            "stripes_wide",
            TexturePattern::Stripes { period: 20 },
            [0.15, 0.25, 0.35],
            [0.90, 0.85, 0.75],
        ),
        spec(
            "gradient_noisy",
            TexturePattern::GradientBlend { noise_amount: 0.35 },
            [0.10, 0.30, 0.15],
            [0.95, 0.90, 0.80],
        ),
    ]
}

/// Renders one sample of a texture class at `size x size`. The same
/// `(spec, sample_index, seed)` triple always renders the same pixels;
/// different sample indices jitter phase and noise while keeping the class
/// appearance.
pub fn render_texture(
    spec: &TextureSpec,
    size: usize,
    sample_index: usize,
    seed: u64,
) -> Result<Image> {
    if size == 0 {
        return Err(Error::arg("texture size must be >= 1"));
    }
    let name_tag = mix(spec.name.bytes().fold(0u64, |a, b| mix(a ^ b as u64)));
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[name_tag, sample_index as u64]));
    let phase_x: f64 = rng.random_range(0.0..1.0);
    let phase_y: f64 = rng.random_range(0.0..1.0);

    let field: Vec<f64> = match spec.pattern {
        TexturePattern::Grating {
            frequency,
            orientation_deg,
        } => {
            let theta = orientation_deg.to_radians();
            let (c, s) = (theta.cos(), theta.sin());
            render_scalar(size, |x, y| {
                let t = (x * c + y * s) * frequency + phase_x;
                0.5 + 0.5 * (std::f64::consts::TAU * t).sin()
            })
        }
        TexturePattern::Checkerboard { cell } => {
            let cell = cell.max(1);
            let (ox, oy) = (
                (phase_x * cell as f64) as usize,
                (phase_y * cell as f64) as usize,
            );
            (0..size * size)
                .map(|i| {
                    let (x, y) = (i % size + ox, i / size + oy);
                    if (x / cell + y / cell) % 2 == 0 {
                        0.0
                    } else {
                        1.0
                    }
                })
                .collect()
        }
        TexturePattern::Rings { frequency } => render_scalar(size, |x, y| {
            let (dx, dy) = (x - 0.5, y - 0.5);
            let r = (dx * dx + dy * dy).sqrt() / 0.5f64.sqrt();
            0.5 + 0.5 * (std::f64::consts::TAU * (r * frequency + phase_x)).sin()
        }),
        TexturePattern::FilteredNoise { exponent } => {
            let raw = spectral_field(size, size, exponent, &mut rng);
            raw.iter().map(|v| (0.5 + 0.25 * v).clamp(0.0, 1.0)).collect()
        }
        TexturePattern::Stripes { period } => {
            let period = period.max(2);
            let off = (phase_y * period as f64) as usize;
            (0..size * size)
                .map(|i| {
                    let y = i / size + off;
                    if (y / (period / 2)) % 2 == 0 {
                        0.0
                    } else {
                        1.0
                    }
                })
                .collect()
        }
        TexturePattern::GradientBlend { noise_amount } => {
            let noise = spectral_field(size, size, 1.5, &mut rng);
            (0..size * size)
                .map(|i| {
                    let (x, y) = ((i % size) as f64, (i / size) as f64);
                    let ramp = (x + y) / (2.0 * (size - 1).max(1) as f64);
                    (ramp + noise_amount * 0.25 * noise[i]).clamp(0.0, 1.0)
                })
                .collect()
        }
    };

    let mut data = Vec::with_capacity(size * size * 3);
    for &t in &field {
        for c in 0..3 {
            data.push(spec.low[c] + t * (spec.high[c] - spec.low[c]));
        }
    }
    Image::from_data(size, size, data)
}

/// Evaluates `f(x, y)` over normalized coordinates in [0, 1].
fn render_scalar(size: usize, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let denom = (size - 1).max(1) as f64;
    (0..size * size)
        .map(|i| {
            let (x, y) = ((i % size) as f64 / denom, (i / size) as f64 / denom);
            f(x, y).clamp(0.0, 1.0)
        })
        .collect()
}

/// One labelled image of a generated corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub path: PathBuf,
    pub class: String,
    pub sample: usize,
}

/// Renders the full catalog in memory: `samples_per_class` images of each
/// class at `size x size`.
pub fn generate_texture_corpus(
    size: usize,
    samples_per_class: usize,
    seed: u64,
) -> Result<Vec<(String, usize, Image)>> {
    if samples_per_class == 0 {
        return Err(Error::arg("samples_per_class must be >= 1"));
    }
    let mut out = Vec::new();
    for spec in texture_catalog() {
        for sample in 0..samples_per_class {
            let img = render_texture(&spec, size, sample, seed)?;
            out.push((spec.name.clone(), sample, img));
        }
    }
    Ok(out)
}

/// Writes the generated corpus under `dir` as PPM files plus a
/// `manifest.tsv` with `path<TAB>class` lines (paths relative to `dir`).
pub fn write_texture_corpus(
    dir: &Path,
    size: usize,
    samples_per_class: usize,
    seed: u64,
) -> Result<Vec<CorpusEntry>> {
    std::fs::create_dir_all(dir)?;
    let corpus = generate_texture_corpus(size, samples_per_class, seed)?;
    let mut entries = Vec::with_capacity(corpus.len());
    let mut manifest = String::new();
    for (class, sample, img) in corpus {
        let file = format!("{class}_{sample:02}.ppm");
        std::fs::write(dir.join(&file), encode_ppm(&img))?;
        manifest.push_str(&format!("{file}\t{class}\n"));
        entries.push(CorpusEntry {
            path: dir.join(&file),
            class,
            sample,
        });
    }
    std::fs::write(dir.join("manifest.tsv"), manifest)?;
    Ok(entries)
}
