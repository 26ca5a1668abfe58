//! Patch matrices and patch extraction.
//!
//! A [`PatchMatrix`] is a `d x n` real matrix whose columns are flattened
//! image patches (or, higher in a filter hierarchy, arbitrary feature
//! vectors). For an image patch of side `s` the flattening order is
//! **channel-major, then row-major**:
//!
//! ```text
//! index(c, y, x) = c * s * s + y * s + x
//! ```
//!
//! This order is a stability guarantee: serialized filter sets depend on it
//! and it must never change.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::image::{Image, CHANNELS};

/// Column-major collection of flattened patches: `d` rows, `n` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchMatrix {
    data: DMatrix<f64>,
}

impl PatchMatrix {
    pub fn from_matrix(data: DMatrix<f64>) -> Result<Self> {
        if data.ncols() == 0 || data.nrows() == 0 {
            return Err(Error::arg("patch matrix must be non-empty"));
        }
        Ok(PatchMatrix { data })
    }

    /// Builds from column vectors, all of equal length.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::arg("patch matrix needs at least one column"));
        }
        let d = columns[0].len();
        if d == 0 || columns.iter().any(|c| c.len() != d) {
            return Err(Error::arg("patch columns must be non-empty and equal length"));
        }
        let mut data = DMatrix::zeros(d, columns.len());
        for (j, col) in columns.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                data[(i, j)] = v;
            }
        }
        Ok(PatchMatrix { data })
    }

    /// Patch dimension (rows).
    pub fn d(&self) -> usize {
        self.data.nrows()
    }

    /// Patch count (columns).
    pub fn n(&self) -> usize {
        self.data.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.data.column(j).iter().copied().collect()
    }
}

/// Flattens the `side x side` window of `img` with top-left corner `(x0, y0)`
/// in channel-major then row-major order.
pub fn flatten_window(img: &Image, x0: usize, y0: usize, side: usize) -> Vec<f64> {
    let mut out = vec![0.0; side * side * CHANNELS];
    for c in 0..CHANNELS {
        for y in 0..side {
            for x in 0..side {
                out[c * side * side + y * side + x] = img.get(x0 + x, y0 + y, c);
            }
        }
    }
    out
}

/// Inverse of [`flatten_window`]: rebuilds a `side x side` image from one
/// flattened patch vector.
pub fn unflatten_patch(patch: &[f64], side: usize) -> Result<Image> {
    if patch.len() != side * side * CHANNELS {
        return Err(Error::arg(format!(
            "patch length {} does not match side {side}",
            patch.len()
        )));
    }
    let mut img = Image::filled(side, side, 0.0)?;
    for c in 0..CHANNELS {
        for y in 0..side {
            for x in 0..side {
                img.set(x, y, c, patch[c * side * side + y * side + x]);
            }
        }
    }
    Ok(img)
}

/// Samples `count` random `side x side x 3` windows fully inside `img`.
/// Window positions are drawn uniformly; reproducible from the generator.
pub fn sample_random_patches<R: Rng>(
    img: &Image,
    count: usize,
    side: usize,
    rng: &mut R,
) -> Result<PatchMatrix> {
    if count == 0 {
        return Err(Error::arg("patch count must be >= 1"));
    }
    if side == 0 || img.width() < side || img.height() < side {
        return Err(Error::arg(format!(
            "image {}x{} smaller than patch side {side}",
            img.width(),
            img.height()
        )));
    }
    let columns: Vec<Vec<f64>> = (0..count)
        .map(|_| {
            let x0 = rng.random_range(0..=img.width() - side);
            let y0 = rng.random_range(0..=img.height() - side);
            flatten_window(img, x0, y0, side)
        })
        .collect();
    PatchMatrix::from_columns(&columns)
}

/// Extracts the non-overlapping `side x side` patches tiling `img`
/// left-to-right, top-to-bottom. The image dimensions must be exact
/// multiples of `side`; callers crop the right/bottom remainder first.
pub fn extract_grid_patches(img: &Image, side: usize) -> Result<PatchMatrix> {
    if side == 0 {
        return Err(Error::arg("patch side must be >= 1"));
    }
    if img.width() % side != 0 || img.height() % side != 0 {
        return Err(Error::arg(format!(
            "image {}x{} is not a multiple of side {side} (crop first)",
            img.width(),
            img.height()
        )));
    }
    let cols = img.width() / side;
    let rows = img.height() / side;
    let columns: Vec<Vec<f64>> = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .map(|(r, c)| flatten_window(img, c * side, r * side, side))
        .collect();
    PatchMatrix::from_columns(&columns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gradient_image(w: usize, h: usize) -> Image {
        let mut img = Image::filled(w, h, 0.0).unwrap();
        for y in 0..h {
            for x in 0..w {
                for c in 0..CHANNELS {
                    img.set(x, y, c, ((x + y * w) * CHANNELS + c) as f64 / (w * h * 4) as f64);
                }
            }
        }
        img
    }

    #[test]
    fn single_window_is_whole_image() {
        let img = gradient_image(4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = sample_random_patches(&img, 1, 4, &mut rng).unwrap();
        assert_eq!(p.d(), 48);
        assert_eq!(p.n(), 1);
        assert_eq!(p.column(0), flatten_window(&img, 0, 0, 4));
    }

    #[test]
    fn sampling_is_deterministic_under_seed() {
        let img = gradient_image(32, 24);
        let a = sample_random_patches(&img, 10, 8, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = sample_random_patches(&img, 10, 8, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn hundred_8x8_rgb_patches_have_paper_shape() {
        let img = gradient_image(64, 64);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = sample_random_patches(&img, 100, 8, &mut rng).unwrap();
        assert_eq!(p.d(), 192);
        assert_eq!(p.n(), 100);
    }

    #[test]
    fn sampling_rejects_too_small_image() {
        let img = gradient_image(4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_random_patches(&img, 1, 8, &mut rng).is_err());
    }

    #[test]
    fn grid_single_patch() {
        let img = gradient_image(8, 8);
        let p = extract_grid_patches(&img, 8).unwrap();
        assert_eq!(p.n(), 1);
    }

    #[test]
    fn grid_72_side_24_gives_nine_row_major() {
        let img = gradient_image(72, 72);
        let p = extract_grid_patches(&img, 24).unwrap();
        assert_eq!(p.n(), 9);
        // row-major: patch 1 is the middle of the top row, patch 3 starts row 2
        assert_eq!(p.column(1), flatten_window(&img, 24, 0, 24));
        assert_eq!(p.column(3), flatten_window(&img, 0, 24, 24));
    }

    #[test]
    fn grid_16x8_left_patch_first() {
        let img = gradient_image(16, 8);
        let p = extract_grid_patches(&img, 8).unwrap();
        assert_eq!(p.n(), 2);
        assert_eq!(p.column(0), flatten_window(&img, 0, 0, 8));
        assert_eq!(p.column(1), flatten_window(&img, 8, 0, 8));
    }

    #[test]
    fn grid_rejects_non_multiple() {
        let img = gradient_image(10, 8);
        assert!(extract_grid_patches(&img, 8).is_err());
    }

    #[test]
    fn flatten_unflatten_round_trip() {
        let img = gradient_image(8, 8);
        let flat = flatten_window(&img, 0, 0, 8);
        let back = unflatten_patch(&flat, 8).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn flatten_order_is_channel_major_then_row_major() {
        let mut img = Image::filled(2, 2, 0.0).unwrap();
        img.set(1, 0, 0, 0.25); // red, row 0, col 1
        img.set(0, 1, 2, 0.75); // blue, row 1, col 0
        let flat = flatten_window(&img, 0, 0, 2);
        assert_eq!(flat[1], 0.25); // 0*4 + 0*2 + 1
        assert_eq!(flat[2 * 4 + 1 * 2], 0.75);
    }
}
