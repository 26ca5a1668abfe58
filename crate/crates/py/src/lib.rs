//! Python bindings for the filter-set pipeline.
//!
//! Builds a `cdylib` whose import name is `iqtex` (rename `libiqtex.so` to
//! `iqtex.so`, or point `PYTHONPATH` at a directory containing that copy).
//! The module exposes the main operations end to end: rank/linear
//! correlation metrics, patch synthesis and whitening, both quality
//! estimators, and the texture feature extractor with its retrieval index.
//!
//! Patches cross the boundary as `list[list[float]]` (one inner list per
//! patch, channel-major then row-major flattening); images are passed as
//! file paths and decoded by the core loaders.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use iqtex_core::image::load_image;
use iqtex_core::model_io::{Encoding, ModelFile};
use iqtex_core::whitening::Epsilon;
use iqtex_core::{Image, PatchMatrix};

fn to_py(e: iqtex_core::Error) -> PyErr {
    match e {
        iqtex_core::Error::Io(_) => PyIOError::new_err(e.to_string()),
        iqtex_core::Error::InvalidArgument(_) | iqtex_core::Error::Format(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn patches_in(patches: Vec<Vec<f64>>) -> PyResult<PatchMatrix> {
    PatchMatrix::from_columns(&patches).map_err(to_py)
}

fn patches_out(p: &PatchMatrix) -> Vec<Vec<f64>> {
    (0..p.n()).map(|j| p.column(j)).collect()
}

fn image_at(path: &PathBuf) -> PyResult<Image> {
    load_image(path).map_err(to_py)
}

fn encoding(decimal: bool) -> Encoding {
    if decimal {
        Encoding::Decimal
    } else {
        Encoding::Base64
    }
}

/// Spearman rank correlation of two equal-length sequences.
#[pyfunction]
fn spearman(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    iqtex_core::metrics::spearman(&a, &b).map_err(to_py)
}

/// Pearson correlation of two equal-length sequences.
#[pyfunction]
fn pearson(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    iqtex_core::metrics::pearson(&a, &b).map_err(to_py)
}

/// Root-mean-square error between two equal-length sequences.
#[pyfunction]
fn rmse(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    iqtex_core::metrics::rmse(&a, &b).map_err(to_py)
}

/// Samples `count` patches of `side x side x 3` values from synthetic
/// images with natural-like (1/f^2) statistics. Deterministic in `seed`.
#[pyfunction]
fn natural_like_patches(side: usize, count: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let p = iqtex_core::synth::natural_like_patches(side, count, seed).map_err(to_py)?;
    Ok(patches_out(&p))
}

/// Runs `k` rounds of zero-phase whitening over the patches and returns the
/// whitened patches. `epsilon` is an absolute eigenvalue floor; omit it for
/// the default regularization of the chosen `k`.
#[pyfunction]
#[pyo3(signature = (patches, k, epsilon=None))]
fn whiten(patches: Vec<Vec<f64>>, k: usize, epsilon: Option<f64>) -> PyResult<Vec<Vec<f64>>> {
    let eps = match epsilon {
        Some(v) => Epsilon::Absolute(v),
        None => Epsilon::default_for_k(k),
    };
    let p = patches_in(patches)?;
    let (white, _) = iqtex_core::whitening::iterated_whiten(&p, k, eps).map_err(to_py)?;
    Ok(patches_out(&white))
}

/// Renders the 12-class procedural texture corpus into `dir` as portable
/// pixmaps plus a `manifest.tsv`, and returns `(path, class)` pairs.
#[pyfunction]
fn write_texture_corpus(
    dir: PathBuf,
    size: usize,
    samples_per_class: usize,
    seed: u64,
) -> PyResult<Vec<(String, String)>> {
    let entries = iqtex_core::synth::write_texture_corpus(&dir, size, samples_per_class, seed)
        .map_err(to_py)?;
    Ok(entries
        .into_iter()
        .map(|e| (e.path.to_string_lossy().into_owned(), e.class))
        .collect())
}

/// Single-filter-set full-reference quality estimator.
#[pyclass]
struct UniqueModel {
    inner: iqtex_core::iqa::UniqueModel,
}

#[pymethods]
impl UniqueModel {
    /// Trains on raw patches (`side x side x 3` values each).
    #[staticmethod]
    #[pyo3(signature = (patches, hidden=400, side=8, iterations=400, seed=7))]
    fn train(
        patches: Vec<Vec<f64>>,
        hidden: usize,
        side: usize,
        iterations: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let mut cfg = iqtex_core::iqa::UniqueConfig {
            hidden,
            side,
            seed,
            ..Default::default()
        };
        cfg.training.max_iterations = iterations;
        let inner = iqtex_core::iqa::train_unique(&patches_in(patches)?, &cfg).map_err(to_py)?;
        Ok(UniqueModel { inner })
    }

    /// Quality of `distorted` against `reference` (both image paths), in
    /// [-1, 1] with 1 meaning identical structure.
    fn score(&self, reference: PathBuf, distorted: PathBuf) -> PyResult<f64> {
        iqtex_core::iqa::unique_score(&self.inner, &image_at(&reference)?, &image_at(&distorted)?)
            .map_err(to_py)
    }

    #[pyo3(signature = (path, decimal=false))]
    fn save(&self, path: PathBuf, decimal: bool) -> PyResult<()> {
        iqtex_core::iqa::unique_to_model(&self.inner, encoding(decimal))
            .and_then(|f| f.save(&path))
            .map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let file = ModelFile::load(&path).map_err(to_py)?;
        let inner = iqtex_core::iqa::unique_from_model(&file).map_err(to_py)?;
        Ok(UniqueModel { inner })
    }

    #[getter]
    fn hidden(&self) -> usize {
        self.inner.filters().h()
    }

    #[getter]
    fn side(&self) -> usize {
        self.inner.side()
    }
}

/// Ensemble quality estimator with sharpness-weighted members.
#[pyclass]
struct MsUniqueModel {
    inner: iqtex_core::iqa::MsUniqueModel,
}

#[pymethods]
impl MsUniqueModel {
    /// Trains every member on the same patches; `hidden_sizes` defaults to
    /// the standard five-member ensemble.
    #[staticmethod]
    #[pyo3(signature = (patches, hidden_sizes=None, side=8, edge_weight=2.0, iterations=400, seed=7))]
    fn train(
        patches: Vec<Vec<f64>>,
        hidden_sizes: Option<Vec<usize>>,
        side: usize,
        edge_weight: f64,
        iterations: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let mut cfg = iqtex_core::iqa::MsUniqueConfig {
            side,
            edge_weight,
            seed,
            ..Default::default()
        };
        if let Some(sizes) = hidden_sizes {
            cfg.hidden_sizes = sizes;
        }
        cfg.training.max_iterations = iterations;
        let inner = iqtex_core::iqa::train_msunique(&patches_in(patches)?, &cfg).map_err(to_py)?;
        Ok(MsUniqueModel { inner })
    }

    fn score(&self, reference: PathBuf, distorted: PathBuf) -> PyResult<f64> {
        iqtex_core::iqa::msunique_score(
            &self.inner,
            &image_at(&reference)?,
            &image_at(&distorted)?,
        )
        .map_err(to_py)
    }

    #[pyo3(signature = (path, decimal=false))]
    fn save(&self, path: PathBuf, decimal: bool) -> PyResult<()> {
        iqtex_core::iqa::msunique_to_model(&self.inner, encoding(decimal))
            .and_then(|f| f.save(&path))
            .map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let file = ModelFile::load(&path).map_err(to_py)?;
        let inner = iqtex_core::iqa::msunique_from_model(&file).map_err(to_py)?;
        Ok(MsUniqueModel { inner })
    }

    #[getter]
    fn member_count(&self) -> usize {
        self.inner.submodels().len()
    }
}

/// Two-pathway texture feature extractor (color thumbnail + filter
/// hierarchy over whitened patches).
#[pyclass]
struct TextureModel {
    inner: iqtex_core::texture::TextureModel,
}

#[pymethods]
impl TextureModel {
    /// Trains the full hierarchy on the images at `paths`. Omitted sizes
    /// fall back to the core defaults; images must be at least 72 pixels on
    /// each side (the structure crop size).
    #[staticmethod]
    #[pyo3(signature = (paths, h_color=None, h2=None, h3=None, h_final=None, pool_k=None,
                        crops_per_image=None, iterations=None, seed=7))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        paths: Vec<PathBuf>,
        h_color: Option<usize>,
        h2: Option<usize>,
        h3: Option<usize>,
        h_final: Option<usize>,
        pool_k: Option<usize>,
        crops_per_image: Option<usize>,
        iterations: Option<usize>,
        seed: u64,
    ) -> PyResult<Self> {
        let mut cfg = iqtex_core::texture::TextureConfig {
            seed,
            ..Default::default()
        };
        if let Some(v) = h_color {
            cfg.h_color = v;
        }
        if let Some(v) = h2 {
            cfg.h2 = v;
        }
        if let Some(v) = h3 {
            cfg.h3 = v;
        }
        if let Some(v) = h_final {
            cfg.h_final = v;
        }
        if let Some(v) = pool_k {
            cfg.pool_k = v;
        }
        if let Some(v) = crops_per_image {
            cfg.crops_per_image = v;
        }
        if let Some(v) = iterations {
            cfg.training.max_iterations = v;
        }
        let images = paths.iter().map(image_at).collect::<PyResult<Vec<_>>>()?;
        let inner =
            iqtex_core::texture::train_texture_model(&images, &cfg).map_err(to_py)?;
        Ok(TextureModel { inner })
    }

    /// `(color, structure)` descriptor pair for one image path.
    fn features(&self, image: PathBuf) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let (c, s) = iqtex_core::texture::texture_features(&self.inner, &image_at(&image)?)
            .map_err(to_py)?;
        Ok((c.as_slice().to_vec(), s.as_slice().to_vec()))
    }

    #[pyo3(signature = (path, decimal=false))]
    fn save(&self, path: PathBuf, decimal: bool) -> PyResult<()> {
        iqtex_core::texture::texture_to_model(&self.inner, encoding(decimal))
            .and_then(|f| f.save(&path))
            .map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let file = ModelFile::load(&path).map_err(to_py)?;
        let inner = iqtex_core::texture::texture_from_model(&file).map_err(to_py)?;
        Ok(TextureModel { inner })
    }
}

/// Descriptor index over a labeled corpus, queried by two-stage ranking
/// (color prefilter, then structure correlation).
#[pyclass]
struct RetrievalIndex {
    inner: iqtex_core::texture::RetrievalIndex,
}

#[pymethods]
impl RetrievalIndex {
    /// Extracts descriptors for every `(id, class, image_path)` triple and
    /// indexes them.
    #[staticmethod]
    fn build(model: &TextureModel, corpus: Vec<(String, String, PathBuf)>) -> PyResult<Self> {
        let items = corpus
            .into_iter()
            .map(|(id, class, path)| Ok((id, class, image_at(&path)?)))
            .collect::<PyResult<Vec<_>>>()?;
        let inner = iqtex_core::texture::build_index(&model.inner, &items).map_err(to_py)?;
        Ok(RetrievalIndex { inner })
    }

    /// Ranks the whole index against a query image. Returns
    /// `(id, class, correlation, survived_prefilter)` tuples, best first.
    #[pyo3(signature = (model, image, color_fraction=0.5, samples_per_class=3))]
    fn query(
        &self,
        model: &TextureModel,
        image: PathBuf,
        color_fraction: f64,
        samples_per_class: usize,
    ) -> PyResult<Vec<(String, String, f64, bool)>> {
        let cfg = iqtex_core::texture::QueryConfig {
            color_fraction,
            samples_per_class,
        };
        let ranked = iqtex_core::texture::query_image(
            &model.inner,
            &self.inner,
            &image_at(&image)?,
            &cfg,
        )
        .map_err(to_py)?;
        Ok(ranked
            .into_iter()
            .map(|r| (r.id, r.class, r.correlation, r.survived_prefilter))
            .collect())
    }

    /// Leave-one-out `(P@1, MRR, MAP)` over the indexed corpus.
    #[pyo3(signature = (color_fraction=0.5, samples_per_class=3))]
    fn evaluate(&self, color_fraction: f64, samples_per_class: usize) -> PyResult<(f64, f64, f64)> {
        let cfg = iqtex_core::texture::QueryConfig {
            color_fraction,
            samples_per_class,
        };
        let eval =
            iqtex_core::texture::evaluate_retrieval(&self.inner, &cfg).map_err(to_py)?;
        Ok((
            eval.precision_at_1,
            eval.mean_reciprocal_rank,
            eval.mean_average_precision,
        ))
    }

    #[pyo3(signature = (path, decimal=false))]
    fn save(&self, path: PathBuf, decimal: bool) -> PyResult<()> {
        iqtex_core::texture::index_to_model(&self.inner, encoding(decimal))
            .and_then(|f| f.save(&path))
            .map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let file = ModelFile::load(&path).map_err(to_py)?;
        let inner = iqtex_core::texture::index_from_model(&file).map_err(to_py)?;
        Ok(RetrievalIndex { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Adaptive filter sets over whitened image patches: quality estimation and
/// texture retrieval.
#[pymodule]
fn iqtex(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(rmse, m)?)?;
    m.add_function(wrap_pyfunction!(natural_like_patches, m)?)?;
    m.add_function(wrap_pyfunction!(whiten, m)?)?;
    m.add_function(wrap_pyfunction!(write_texture_corpus, m)?)?;
    m.add_class::<UniqueModel>()?;
    m.add_class::<MsUniqueModel>()?;
    m.add_class::<TextureModel>()?;
    m.add_class::<RetrievalIndex>()?;
    Ok(())
}
