//! Full-reference image quality assessment built on learned filter sets.
//!
//! An image is scored by tiling it with non-overlapping patches, whitening
//! those patches with a transform refit on this image alone, pushing them
//! through a trained filter set's sigmoid layer, and concatenating the
//! activations into one long feature vector. The quality score of a
//! reference/distorted pair is the Spearman correlation between their
//! feature vectors: 1.0 for identical images, drifting toward 0 as the
//! distortion rearranges structure.
//!
//! Two estimators are provided: a single filter set (`UniqueModel`), and an
//! ensemble over several hidden sizes whose filters are labelled edge- or
//! color-selective, with edge activations up-weighted before correlation
//! (`MsUniqueModel`).

use nalgebra::{DMatrix, DVector};

use crate::decoder::{self, FilterSet, TrainingConfig};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::metrics;
use crate::model_io::{
    push_chain, push_filterset, read_chain, read_filterset, Encoding, ModelFile, ModelKind,
};
use crate::patches::{extract_grid_patches, PatchMatrix};
use crate::synth::derive_seed;
use crate::whitening::{apply_chain, iterated_whiten, Epsilon, WhiteningChain, WhiteningProtocol};

/// Training setup for a single-filter-set estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct UniqueConfig {
    /// Hidden units (number of filters).
    pub hidden: usize,
    /// Whitening iterations applied to the training patches and refit on
    /// each scored image.
    pub k: usize,
    pub epsilon: Epsilon,
    /// Patch side in pixels; patches are `side x side x 3`.
    pub side: usize,
    /// How scored images are whitened; see [`WhiteningProtocol`].
    pub protocol: WhiteningProtocol,
    /// If set, activations below this value are zeroed in feature vectors.
    pub activation_threshold: Option<f64>,
    pub training: TrainingConfig,
    pub seed: u64,
}

impl Default for UniqueConfig {
    fn default() -> Self {
        UniqueConfig {
            hidden: 400,
            k: 1,
            epsilon: Epsilon::default_for_k(1),
            side: 8,
            protocol: WhiteningProtocol::RefitPerImage,
            activation_threshold: None,
            training: TrainingConfig::default(),
            seed: 7,
        }
    }
}

/// A trained single-filter-set quality estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct UniqueModel {
    filters: FilterSet,
    /// Whitening chain fit on the training patches; applied verbatim under
    /// [`WhiteningProtocol::TrainingChain`].
    chain: WhiteningChain,
    protocol: WhiteningProtocol,
    side: usize,
    k: usize,
    epsilon: Epsilon,
    activation_threshold: Option<f64>,
}

impl UniqueModel {
    /// Wraps a pre-trained filter set as an estimator. `chain` is the
    /// whitening chain fit during training; `k` and `epsilon` are the
    /// settings refit on each scored image under the per-image protocol.
    /// Both should match the filters' training provenance for sensible
    /// scores.
    pub fn new(
        filters: FilterSet,
        chain: WhiteningChain,
        protocol: WhiteningProtocol,
        side: usize,
        k: usize,
        epsilon: Epsilon,
        activation_threshold: Option<f64>,
    ) -> Result<Self> {
        check_side(side, filters.d())?;
        if chain.base_mean().len() != filters.d() {
            return Err(Error::arg(format!(
                "whitening chain dimension {} does not match filters ({})",
                chain.base_mean().len(),
                filters.d()
            )));
        }
        Ok(UniqueModel {
            filters,
            chain,
            protocol,
            side,
            k,
            epsilon,
            activation_threshold,
        })
    }

    pub fn filters(&self) -> &FilterSet {
        &self.filters
    }

    pub fn chain(&self) -> &WhiteningChain {
        &self.chain
    }

    pub fn protocol(&self) -> WhiteningProtocol {
        self.protocol
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn epsilon(&self) -> Epsilon {
        self.epsilon
    }

    pub fn activation_threshold(&self) -> Option<f64> {
        self.activation_threshold
    }
}

/// Trains a single-filter-set estimator from raw (unwhitened) patches.
pub fn train_unique(raw_patches: &PatchMatrix, cfg: &UniqueConfig) -> Result<UniqueModel> {
    check_side(cfg.side, raw_patches.d())?;
    let (white, chain) = iterated_whiten(raw_patches, cfg.k, cfg.epsilon)?;
    let filters = decoder::train(&white, cfg.hidden, &cfg.training, cfg.seed, cfg.k, cfg.epsilon)?;
    Ok(UniqueModel {
        filters,
        chain,
        protocol: cfg.protocol,
        side: cfg.side,
        k: cfg.k,
        epsilon: cfg.epsilon,
        activation_threshold: cfg.activation_threshold,
    })
}

fn check_side(side: usize, d: usize) -> Result<()> {
    if side == 0 {
        return Err(Error::arg("patch side must be >= 1"));
    }
    if d != 3 * side * side {
        return Err(Error::arg(format!(
            "patch dimension {d} does not match side {side} (expected {})",
            3 * side * side
        )));
    }
    Ok(())
}

/// Tiles `img` with non-overlapping patches, cropping any right/bottom
/// remainder.
fn grid_patches(img: &Image, side: usize) -> Result<PatchMatrix> {
    if img.width() < side || img.height() < side {
        return Err(Error::arg(format!(
            "image {}x{} smaller than one {side}x{side} patch",
            img.width(),
            img.height()
        )));
    }
    let cropped = img.crop(
        img.width() - img.width() % side,
        img.height() - img.height() % side,
    )?;
    let grid = extract_grid_patches(&cropped, side)?;
    if grid.n() < 2 {
        return Err(Error::arg(
            "image yields fewer than two patches; cannot refit whitening",
        ));
    }
    Ok(grid)
}

/// Preprocesses one image's grid patches per the model's protocol: a fresh
/// whitening refit, the stored training chain, or nothing at all.
pub(crate) fn prepare_patches(
    grid: &PatchMatrix,
    protocol: WhiteningProtocol,
    k: usize,
    epsilon: Epsilon,
    chain: &WhiteningChain,
) -> Result<PatchMatrix> {
    match protocol {
        WhiteningProtocol::RefitPerImage => {
            // A refit needs the patches to differ; catch flat and perfectly
            // periodic images before the eigensolver does.
            let mut max_dev = 0.0f64;
            for row in grid.matrix().row_iter() {
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for &v in row.iter() {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                max_dev = max_dev.max(hi - lo);
            }
            if max_dev <= 1e-12 {
                return Err(Error::degenerate(
                    "image patches have no variation; no structure to score",
                ));
            }
            Ok(iterated_whiten(grid, k, epsilon)?.0)
        }
        WhiteningProtocol::TrainingChain => apply_chain(chain, grid),
        WhiteningProtocol::None => Ok(grid.clone()),
    }
}

/// Concatenates a filter set's activations on whitened patches into one
/// vector. Layout: all hidden-unit responses for the first patch, then the
/// second, and so on (patches in grid order, left-to-right, top-to-bottom).
fn features_from_white(
    filters: &FilterSet,
    threshold: Option<f64>,
    white: &PatchMatrix,
) -> Result<DVector<f64>> {
    let mut s = decoder::forward(filters, white)?;
    if let Some(t) = threshold {
        s.apply(|v| {
            if *v < t {
                *v = 0.0;
            }
        });
    }
    Ok(DVector::from_column_slice(s.as_slice()))
}

/// Feature vector of one image under a trained estimator. Under the
/// per-image whitening protocol this fails with a degenerate-input error
/// on images with no patch-to-patch variation.
pub fn unique_features(model: &UniqueModel, img: &Image) -> Result<DVector<f64>> {
    let grid = grid_patches(img, model.side)?;
    let white = prepare_patches(&grid, model.protocol, model.k, model.epsilon, &model.chain)?;
    features_from_white(&model.filters, model.activation_threshold, &white)
}

/// Spearman correlation between two feature vectors. A degenerate side
/// (constant features) correlates 0 with a logged warning rather than
/// failing; both quality scoring and texture ranking want that policy.
pub(crate) fn feature_correlation(a: &DVector<f64>, b: &DVector<f64>) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::arg(format!(
            "feature length mismatch ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    match metrics::spearman(a.as_slice(), b.as_slice()) {
        Ok(r) => Ok(r),
        Err(Error::DegenerateInput(msg)) => {
            log::warn!("degenerate feature vector ({msg}); reporting correlation 0");
            Ok(0.0)
        }
        Err(e) => Err(e),
    }
}

/// Similarity of a distorted image to its reference: Spearman correlation
/// of their feature vectors, in [-1, 1]. Degenerate inputs (flat images,
/// constant features) score 0 with a logged warning rather than failing.
pub fn unique_score(model: &UniqueModel, reference: &Image, distorted: &Image) -> Result<f64> {
    let fr = match unique_features(model, reference) {
        Ok(f) => f,
        Err(Error::DegenerateInput(msg)) => {
            log::warn!("reference image is degenerate ({msg}); reporting score 0");
            return Ok(0.0);
        }
        Err(e) => return Err(e),
    };
    let fd = match unique_features(model, distorted) {
        Ok(f) => f,
        Err(Error::DegenerateInput(msg)) => {
            log::warn!("distorted image is degenerate ({msg}); reporting score 0");
            return Ok(0.0);
        }
        Err(e) => return Err(e),
    };
    feature_correlation(&fr, &fd)
}

/// Whether a filter responds mostly to luminance structure or to color.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterLabel {
    Edge,
    Color,
}

/// Labels one filter (flat `3 * side * side` vector, channel-planar
/// layout) by where its energy lives. `E` is the squared first-difference
/// energy of the channel-averaged plane — large for oriented, edge-like
/// filters. `C` is the variance across the three per-channel means — large
/// for filters that trade one channel against another. The filter is
/// edge-selective when `E / (E + C) > 0.5`; an all-flat filter (both zero)
/// counts as color.
pub fn classify_filter_sharpness(filter: &[f64], side: usize) -> Result<FilterLabel> {
    if side == 0 || filter.len() != 3 * side * side {
        return Err(Error::arg(format!(
            "filter length {} does not match side {side}",
            filter.len()
        )));
    }
    let plane_at = |x: usize, y: usize| -> f64 {
        (0..3).map(|c| filter[c * side * side + y * side + x]).sum::<f64>() / 3.0
    };
    let mut e = 0.0;
    for y in 0..side {
        for x in 0..side.saturating_sub(1) {
            let d = plane_at(x + 1, y) - plane_at(x, y);
            e += d * d;
        }
    }
    for y in 0..side.saturating_sub(1) {
        for x in 0..side {
            let d = plane_at(x, y + 1) - plane_at(x, y);
            e += d * d;
        }
    }
    let area = (side * side) as f64;
    let channel_means: Vec<f64> = (0..3)
        .map(|c| filter[c * side * side..(c + 1) * side * side].iter().sum::<f64>() / area)
        .collect();
    let grand = channel_means.iter().sum::<f64>() / 3.0;
    let c = channel_means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>() / 3.0;
    if e + c == 0.0 {
        return Ok(FilterLabel::Color);
    }
    Ok(if e / (e + c) > 0.5 {
        FilterLabel::Edge
    } else {
        FilterLabel::Color
    })
}

/// Training setup for the multi-resolution ensemble estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct MsUniqueConfig {
    /// Hidden sizes of the ensemble members.
    pub hidden_sizes: Vec<usize>,
    pub k: usize,
    pub epsilon: Epsilon,
    pub side: usize,
    /// How scored images are whitened; see [`WhiteningProtocol`].
    pub protocol: WhiteningProtocol,
    /// Multiplier applied to edge-selective filter activations.
    pub edge_weight: f64,
    pub activation_threshold: Option<f64>,
    pub training: TrainingConfig,
    pub seed: u64,
}

impl Default for MsUniqueConfig {
    fn default() -> Self {
        MsUniqueConfig {
            hidden_sizes: vec![81, 121, 169, 400, 625],
            k: 1,
            epsilon: Epsilon::default_for_k(1),
            side: 8,
            protocol: WhiteningProtocol::RefitPerImage,
            edge_weight: 2.0,
            activation_threshold: None,
            training: TrainingConfig::default(),
            seed: 7,
        }
    }
}

/// One ensemble member: a filter set plus a per-filter label.
#[derive(Debug, Clone, PartialEq)]
pub struct MsUniqueSubmodel {
    pub filters: FilterSet,
    pub labels: Vec<FilterLabel>,
}

/// The trained ensemble estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct MsUniqueModel {
    submodels: Vec<MsUniqueSubmodel>,
    /// Whitening chain fit on the shared training patches.
    chain: WhiteningChain,
    protocol: WhiteningProtocol,
    side: usize,
    k: usize,
    epsilon: Epsilon,
    edge_weight: f64,
    activation_threshold: Option<f64>,
}

impl MsUniqueModel {
    /// Assembles an ensemble from pre-trained members. All members must
    /// share the patch dimension implied by `side`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        submodels: Vec<MsUniqueSubmodel>,
        chain: WhiteningChain,
        protocol: WhiteningProtocol,
        side: usize,
        k: usize,
        epsilon: Epsilon,
        edge_weight: f64,
        activation_threshold: Option<f64>,
    ) -> Result<Self> {
        if side == 0 {
            return Err(Error::arg("patch side must be >= 1"));
        }
        if submodels.is_empty() {
            return Err(Error::arg("ensemble needs at least one member"));
        }
        if !(edge_weight.is_finite() && edge_weight > 0.0) {
            return Err(Error::arg("edge weight must be finite and > 0"));
        }
        if chain.base_mean().len() != 3 * side * side {
            return Err(Error::arg(format!(
                "whitening chain dimension {} does not match side {side}",
                chain.base_mean().len()
            )));
        }
        for (i, m) in submodels.iter().enumerate() {
            if m.filters.d() != 3 * side * side {
                return Err(Error::arg(format!(
                    "member {i} has patch dimension {}, side {side} needs {}",
                    m.filters.d(),
                    3 * side * side
                )));
            }
            if m.labels.len() != m.filters.h() {
                return Err(Error::arg(format!(
                    "member {i} has {} labels for {} filters",
                    m.labels.len(),
                    m.filters.h()
                )));
            }
        }
        Ok(MsUniqueModel {
            submodels,
            chain,
            protocol,
            side,
            k,
            epsilon,
            edge_weight,
            activation_threshold,
        })
    }

    pub fn submodels(&self) -> &[MsUniqueSubmodel] {
        &self.submodels
    }

    pub fn chain(&self) -> &WhiteningChain {
        &self.chain
    }

    pub fn protocol(&self) -> WhiteningProtocol {
        self.protocol
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn edge_weight(&self) -> f64 {
        self.edge_weight
    }
}

/// Trains every ensemble member on the same whitened patches, then labels
/// each learned filter. Member seeds are derived from the base seed and
/// the member's position and hidden size.
pub fn train_msunique(raw_patches: &PatchMatrix, cfg: &MsUniqueConfig) -> Result<MsUniqueModel> {
    check_side(cfg.side, raw_patches.d())?;
    if cfg.hidden_sizes.is_empty() {
        return Err(Error::arg("ensemble needs at least one hidden size"));
    }
    if !(cfg.edge_weight.is_finite() && cfg.edge_weight > 0.0) {
        return Err(Error::arg("edge weight must be finite and > 0"));
    }
    let (white, chain) = iterated_whiten(raw_patches, cfg.k, cfg.epsilon)?;
    let mut submodels = Vec::with_capacity(cfg.hidden_sizes.len());
    for (i, &h) in cfg.hidden_sizes.iter().enumerate() {
        let seed = derive_seed(cfg.seed, &[i as u64, h as u64]);
        let filters = decoder::train(&white, h, &cfg.training, seed, cfg.k, cfg.epsilon)?;
        let labels = (0..h)
            .map(|j| classify_filter_sharpness(&filters.filter_column(j), cfg.side))
            .collect::<Result<Vec<_>>>()?;
        submodels.push(MsUniqueSubmodel { filters, labels });
    }
    Ok(MsUniqueModel {
        submodels,
        chain,
        protocol: cfg.protocol,
        side: cfg.side,
        k: cfg.k,
        epsilon: cfg.epsilon,
        edge_weight: cfg.edge_weight,
        activation_threshold: cfg.activation_threshold,
    })
}

fn submodel_features(
    sub: &MsUniqueSubmodel,
    edge_weight: f64,
    threshold: Option<f64>,
    white: &PatchMatrix,
) -> Result<DVector<f64>> {
    let mut s = decoder::forward(&sub.filters, white)?;
    if let Some(t) = threshold {
        s.apply(|v| {
            if *v < t {
                *v = 0.0;
            }
        });
    }
    for (j, label) in sub.labels.iter().enumerate() {
        if *label == FilterLabel::Edge {
            s.row_mut(j).scale_mut(edge_weight);
        }
    }
    Ok(DVector::from_column_slice(s.as_slice()))
}

/// Per-member feature vectors for one image.
pub fn msunique_features(model: &MsUniqueModel, img: &Image) -> Result<Vec<DVector<f64>>> {
    let grid = grid_patches(img, model.side)?;
    let white = prepare_patches(&grid, model.protocol, model.k, model.epsilon, &model.chain)?;
    model
        .submodels
        .iter()
        .map(|sub| submodel_features(sub, model.edge_weight, model.activation_threshold, &white))
        .collect()
}

/// Ensemble score: the mean over members of the per-member feature
/// correlation. Degenerate inputs score 0, as in [`unique_score`].
pub fn msunique_score(model: &MsUniqueModel, reference: &Image, distorted: &Image) -> Result<f64> {
    let fr = match msunique_features(model, reference) {
        Ok(f) => f,
        Err(Error::DegenerateInput(msg)) => {
            log::warn!("reference image is degenerate ({msg}); reporting score 0");
            return Ok(0.0);
        }
        Err(e) => return Err(e),
    };
    let fd = match msunique_features(model, distorted) {
        Ok(f) => f,
        Err(Error::DegenerateInput(msg)) => {
            log::warn!("distorted image is degenerate ({msg}); reporting score 0");
            return Ok(0.0);
        }
        Err(e) => return Err(e),
    };
    let mut total = 0.0;
    for (a, b) in fr.iter().zip(&fd) {
        total += feature_correlation(a, b)?;
    }
    Ok(total / fr.len() as f64)
}

/// Either estimator behind one scoring interface.
#[derive(Debug, Clone, PartialEq)]
pub enum QualityEstimator {
    Unique(UniqueModel),
    MsUnique(MsUniqueModel),
}

impl QualityEstimator {
    pub fn score(&self, reference: &Image, distorted: &Image) -> Result<f64> {
        match self {
            QualityEstimator::Unique(m) => unique_score(m, reference, distorted),
            QualityEstimator::MsUnique(m) => msunique_score(m, reference, distorted),
        }
    }
}

/// Agreement between predicted scores and subjective ratings over a set of
/// reference/distorted pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct IqaEvaluation {
    pub scores: Vec<f64>,
    pub spearman: f64,
    pub pearson: f64,
    pub rmse: f64,
    pub outlier_ratio: f64,
}

/// Scores every pair and compares against subjective ratings. `stds`, when
/// given, are the per-item rating standard deviations used by the outlier
/// ratio; otherwise it falls back to a 2*RMSE threshold. Note the RMSE is
/// on raw values: predictions live in [-1, 1], so against ratings on other
/// scales it is only comparable between estimators, not absolutely.
pub fn evaluate(
    estimator: &QualityEstimator,
    pairs: &[(Image, Image)],
    subjective: &[f64],
    stds: Option<&[f64]>,
) -> Result<IqaEvaluation> {
    if pairs.len() != subjective.len() {
        return Err(Error::arg(format!(
            "{} pairs but {} subjective ratings",
            pairs.len(),
            subjective.len()
        )));
    }
    if pairs.len() < 2 {
        return Err(Error::arg("evaluation needs at least two pairs"));
    }
    let mut scores = Vec::with_capacity(pairs.len());
    for (reference, distorted) in pairs {
        scores.push(estimator.score(reference, distorted)?);
    }
    Ok(IqaEvaluation {
        spearman: metrics::spearman(subjective, &scores)?,
        pearson: metrics::pearson(subjective, &scores)?,
        rmse: metrics::rmse(subjective, &scores)?,
        outlier_ratio: metrics::outlier_ratio(subjective, &scores, stds)?,
        scores,
    })
}

/// Serializes a single-filter-set estimator.
pub fn unique_to_model(m: &UniqueModel, encoding: Encoding) -> Result<ModelFile> {
    let mut file = ModelFile::new(ModelKind::Unique, encoding);
    file.set_hyper("side", m.side)?;
    file.set_hyper("k", m.k)?;
    file.set_hyper("epsilon", m.epsilon)?;
    file.set_hyper("protocol", m.protocol)?;
    file.set_hyper("activation_threshold", m.activation_threshold)?;
    push_filterset(&mut file, "", &m.filters)?;
    push_chain(&mut file, "chain_", &m.chain)?;
    Ok(file)
}

/// Deserializes a single-filter-set estimator.
pub fn unique_from_model(file: &ModelFile) -> Result<UniqueModel> {
    file.expect_kind(ModelKind::Unique)?;
    let side: usize = file.hyper_as("side")?;
    let filters = read_filterset(file, "")?;
    check_side(side, filters.d())?;
    Ok(UniqueModel {
        filters,
        chain: read_chain(file, "chain_")?,
        protocol: file.hyper_as("protocol")?,
        side,
        k: file.hyper_as("k")?,
        epsilon: file.hyper_as("epsilon")?,
        activation_threshold: file.hyper_as("activation_threshold")?,
    })
}

/// Serializes the ensemble estimator; member arrays are prefixed `m0_`,
/// `m1_`, ... and labels are stored as a 0/1 row per member.
pub fn msunique_to_model(m: &MsUniqueModel, encoding: Encoding) -> Result<ModelFile> {
    let mut file = ModelFile::new(ModelKind::Msunique, encoding);
    file.set_hyper("side", m.side)?;
    file.set_hyper("k", m.k)?;
    file.set_hyper("epsilon", m.epsilon)?;
    file.set_hyper("protocol", m.protocol)?;
    file.set_hyper("edge_weight", m.edge_weight)?;
    file.set_hyper("activation_threshold", m.activation_threshold)?;
    file.set_hyper("submodel_count", m.submodels.len())?;
    push_chain(&mut file, "chain_", &m.chain)?;
    for (i, sub) in m.submodels.iter().enumerate() {
        push_filterset(&mut file, &format!("m{i}_"), &sub.filters)?;
        let labels = DMatrix::from_iterator(
            1,
            sub.labels.len(),
            sub.labels.iter().map(|l| match l {
                FilterLabel::Edge => 1.0,
                FilterLabel::Color => 0.0,
            }),
        );
        file.push_array(&format!("m{i}_labels"), labels)?;
    }
    Ok(file)
}

/// Deserializes the ensemble estimator.
pub fn msunique_from_model(file: &ModelFile) -> Result<MsUniqueModel> {
    file.expect_kind(ModelKind::Msunique)?;
    let side: usize = file.hyper_as("side")?;
    let count: usize = file.hyper_as("submodel_count")?;
    if count == 0 {
        return Err(Error::format("ensemble model has no members"));
    }
    let mut submodels = Vec::with_capacity(count);
    for i in 0..count {
        let filters = read_filterset(file, &format!("m{i}_"))?;
        check_side(side, filters.d())?;
        let raw = file.array(&format!("m{i}_labels"))?;
        if raw.len() != filters.h() {
            return Err(Error::format(format!(
                "member {i}: {} labels for {} filters",
                raw.len(),
                filters.h()
            )));
        }
        let labels = raw
            .iter()
            .map(|&v| if v > 0.5 { FilterLabel::Edge } else { FilterLabel::Color })
            .collect();
        submodels.push(MsUniqueSubmodel { filters, labels });
    }
    Ok(MsUniqueModel {
        submodels,
        chain: read_chain(file, "chain_")?,
        protocol: file.hyper_as("protocol")?,
        side,
        k: file.hyper_as("k")?,
        epsilon: file.hyper_as("epsilon")?,
        edge_weight: file.hyper_as("edge_weight")?,
        activation_threshold: file.hyper_as("activation_threshold")?,
    })
}
