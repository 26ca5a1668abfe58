//! Texture description and retrieval with a two-pathway feature hierarchy.
//!
//! The color pathway thumbnails an image to a single small patch, centers
//! it, and reads one filter set's activations: a cheap global descriptor
//! used to prefilter candidates. The structure pathway resizes the image
//! onto a fixed patch grid, whitens the grid patches (by default with a
//! transform refit on that image), and stacks three filter sets:
//! patch-level filters, tile-level filters over 3x3 patch neighborhoods,
//! and a final set over the top-k pooled tile responses. Retrieval keeps
//! the candidates whose color features correlate best with the query's,
//! then ranks those by structure-feature Spearman correlation.
//!
//! Training is greedy and layer-wise: each filter set is trained on the
//! outputs of the already-trained layers below it, harvested from random
//! crops of the training images.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::decoder::{self, FilterSet, TrainingConfig};
use crate::error::{Error, Result};
use crate::image::{resize_box, Image};
use crate::iqa::{feature_correlation, prepare_patches};
use crate::metrics;
use crate::model_io::{
    push_chain, push_filterset, read_chain, read_filterset, Encoding, ModelFile, ModelKind,
};
use crate::patches::{extract_grid_patches, flatten_window, PatchMatrix};
use crate::synth::{derive_seed, distort, Distortion};
use crate::whitening::{iterated_whiten, Epsilon, WhiteningChain, WhiteningProtocol};

/// Training setup for the texture hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureConfig {
    /// Hidden sizes: color pathway, patch layer, tile layer, final layer.
    pub h_color: usize,
    pub h2: usize,
    pub h3: usize,
    pub h_final: usize,
    /// Patch side in pixels.
    pub side: usize,
    /// Patches per image side; the structure input is `grid*side` square.
    pub grid: usize,
    /// Patches per tile side; `grid` must be a multiple.
    pub tile: usize,
    /// Activations kept per tile by top-k pooling.
    pub pool_k: usize,
    /// Thumbnail side for the color pathway.
    pub color_side: usize,
    /// Whitening iterations for the structure patches.
    pub k: usize,
    pub epsilon: Epsilon,
    /// How structure patches are whitened outside the training fit: refit
    /// per image (default), reuse the stored training chain, or skip
    /// whitening entirely.
    pub structure_whitening: WhiteningProtocol,
    /// Random crops harvested per training image.
    pub crops_per_image: usize,
    /// Cap on training samples per layer (subsampled when exceeded).
    pub max_layer_samples: usize,
    pub training: TrainingConfig,
    pub seed: u64,
}

impl Default for TextureConfig {
    fn default() -> Self {
        TextureConfig {
            h_color: 400,
            h2: 64,
            h3: 192,
            h_final: 400,
            side: 8,
            grid: 9,
            tile: 3,
            pool_k: 64,
            color_side: 8,
            k: 1,
            epsilon: Epsilon::default_for_k(1),
            structure_whitening: WhiteningProtocol::RefitPerImage,
            crops_per_image: 4,
            max_layer_samples: 20_000,
            training: TrainingConfig::default(),
            seed: 7,
        }
    }
}

impl TextureConfig {
    fn validate(&self) -> Result<()> {
        if self.side == 0 || self.grid == 0 || self.tile == 0 || self.color_side == 0 {
            return Err(Error::arg("texture geometry parameters must be >= 1"));
        }
        if self.grid % self.tile != 0 {
            return Err(Error::arg(format!(
                "grid {} must be a multiple of tile {}",
                self.grid, self.tile
            )));
        }
        if self.pool_k == 0 || self.pool_k > self.h3 {
            return Err(Error::arg(format!(
                "pool_k {} must be in 1..={}",
                self.pool_k, self.h3
            )));
        }
        if self.crops_per_image == 0 || self.max_layer_samples == 0 {
            return Err(Error::arg("crops_per_image and max_layer_samples must be >= 1"));
        }
        Ok(())
    }

    fn structure_size(&self) -> usize {
        self.grid * self.side
    }
}

/// The trained two-pathway texture feature extractor.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureModel {
    color_filters: FilterSet,
    /// Mean of the flattened training thumbnails; subtracted before the
    /// color filters (the color pathway uses centering only, no whitening).
    color_mean: DVector<f64>,
    p2: FilterSet,
    p3: FilterSet,
    final_filters: FilterSet,
    /// Whitening chain fit on the pooled training structure patches; used
    /// directly under the training-chain protocol and kept for provenance
    /// under the others.
    structure_chain: WhiteningChain,
    structure_whitening: WhiteningProtocol,
    side: usize,
    grid: usize,
    tile: usize,
    pool_k: usize,
    color_side: usize,
    k: usize,
    epsilon: Epsilon,
}

impl TextureModel {
    /// Validates the dimension chain:
    /// `p2: 3*side^2 -> h2`, `p3: tile^2*h2 -> h3` with `pool_k <= h3`,
    /// `final: (grid/tile)^2*pool_k -> h_final`, and the color pathway
    /// `3*color_side^2 -> h_color`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        color_filters: FilterSet,
        color_mean: DVector<f64>,
        p2: FilterSet,
        p3: FilterSet,
        final_filters: FilterSet,
        structure_chain: WhiteningChain,
        structure_whitening: WhiteningProtocol,
        side: usize,
        grid: usize,
        tile: usize,
        pool_k: usize,
        color_side: usize,
        k: usize,
        epsilon: Epsilon,
    ) -> Result<Self> {
        if side == 0 || grid == 0 || tile == 0 || color_side == 0 || grid % tile != 0 {
            return Err(Error::arg("invalid texture geometry"));
        }
        if structure_chain.base_mean().len() != 3 * side * side {
            return Err(Error::arg(format!(
                "structure whitening chain expects d = {}, geometry says {}",
                structure_chain.base_mean().len(),
                3 * side * side
            )));
        }
        if color_filters.d() != 3 * color_side * color_side {
            return Err(Error::arg(format!(
                "color filters expect d = {}, geometry says {}",
                color_filters.d(),
                3 * color_side * color_side
            )));
        }
        if color_mean.len() != color_filters.d() {
            return Err(Error::arg("color mean length does not match color filters"));
        }
        if p2.d() != 3 * side * side {
            return Err(Error::arg(format!(
                "patch filters expect d = {}, geometry says {}",
                p2.d(),
                3 * side * side
            )));
        }
        if p3.d() != tile * tile * p2.h() {
            return Err(Error::arg(format!(
                "tile filters expect d = {}, chain says {}",
                p3.d(),
                tile * tile * p2.h()
            )));
        }
        if pool_k == 0 || pool_k > p3.h() {
            return Err(Error::arg(format!(
                "pool_k {pool_k} must be in 1..={}",
                p3.h()
            )));
        }
        let tiles = (grid / tile) * (grid / tile);
        if final_filters.d() != tiles * pool_k {
            return Err(Error::arg(format!(
                "final filters expect d = {}, chain says {}",
                final_filters.d(),
                tiles * pool_k
            )));
        }
        Ok(TextureModel {
            color_filters,
            color_mean,
            p2,
            p3,
            final_filters,
            structure_chain,
            structure_whitening,
            side,
            grid,
            tile,
            pool_k,
            color_side,
            k,
            epsilon,
        })
    }

    pub fn color_dim(&self) -> usize {
        self.color_filters.h()
    }

    pub fn structure_dim(&self) -> usize {
        self.final_filters.h()
    }

    pub fn structure_size(&self) -> usize {
        self.grid * self.side
    }

    pub fn structure_chain(&self) -> &WhiteningChain {
        &self.structure_chain
    }

    pub fn structure_whitening(&self) -> WhiteningProtocol {
        self.structure_whitening
    }
}

/// The `k` largest values of `values`, sorted descending. Positions are
/// discarded; only the response magnitudes survive pooling.
pub fn top_k_pool(values: &[f64], k: usize) -> Result<Vec<f64>> {
    if k == 0 || k > values.len() {
        return Err(Error::arg(format!(
            "pool size {k} must be in 1..={}",
            values.len()
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    sorted.truncate(k);
    Ok(sorted)
}

/// Regroups per-patch responses (`h x grid^2`, patches in row-major grid
/// order) into per-tile stacks: one column per tile (`tile^2 * h` tall),
/// tiles in row-major order, patches within a tile in row-major order.
fn tile_concat(s: &DMatrix<f64>, grid: usize, tile: usize) -> Result<DMatrix<f64>> {
    if s.ncols() != grid * grid {
        return Err(Error::arg(format!(
            "expected {} patch columns, got {}",
            grid * grid,
            s.ncols()
        )));
    }
    if tile == 0 || grid % tile != 0 {
        return Err(Error::arg("grid must be a multiple of tile"));
    }
    let h = s.nrows();
    let per_side = grid / tile;
    let mut out = DMatrix::zeros(tile * tile * h, per_side * per_side);
    for tr in 0..per_side {
        for tc in 0..per_side {
            let tile_col = tr * per_side + tc;
            for pr in 0..tile {
                for pc in 0..tile {
                    let patch_col = (tr * tile + pr) * grid + (tc * tile + pc);
                    let block = pr * tile + pc;
                    out.view_mut((block * h, tile_col), (h, 1))
                        .copy_from(&s.column(patch_col));
                }
            }
        }
    }
    Ok(out)
}

/// Top-k pools each column and concatenates the results in column order.
fn pooled_concat(s: &DMatrix<f64>, pool_k: usize) -> Result<DVector<f64>> {
    let mut out = Vec::with_capacity(s.ncols() * pool_k);
    for col in s.column_iter() {
        let vals: Vec<f64> = col.iter().copied().collect();
        out.extend(top_k_pool(&vals, pool_k)?);
    }
    Ok(DVector::from_vec(out))
}

/// Color-pathway descriptor: activations of the color filters on the
/// centered thumbnail.
pub fn color_feature(model: &TextureModel, img: &Image) -> Result<DVector<f64>> {
    let thumb = resize_box(img, model.color_side, model.color_side)?;
    let flat = flatten_window(&thumb, 0, 0, model.color_side);
    let centered = DVector::from_vec(flat) - &model.color_mean;
    let p = PatchMatrix::from_matrix(DMatrix::from_column_slice(centered.len(), 1, centered.as_slice()))?;
    let s = decoder::forward(&model.color_filters, &p)?;
    Ok(DVector::from_column_slice(s.as_slice()))
}

/// Structure-pathway descriptor: the image resized onto the patch grid,
/// its grid patches whitened per the model's protocol, then the full
/// three-layer stack.
pub fn structure_feature(model: &TextureModel, img: &Image) -> Result<DVector<f64>> {
    let size = model.structure_size();
    let resized = resize_box(img, size, size)?;
    let patches = extract_grid_patches(&resized, model.side)?;
    let white = prepare_patches(
        &patches,
        model.structure_whitening,
        model.k,
        model.epsilon,
        &model.structure_chain,
    )?;
    let s2 = decoder::forward(&model.p2, &white)?;
    let tiles = PatchMatrix::from_matrix(tile_concat(&s2, model.grid, model.tile)?)?;
    let s3 = decoder::forward(&model.p3, &tiles)?;
    let pooled = pooled_concat(&s3, model.pool_k)?;
    let p = PatchMatrix::from_matrix(DMatrix::from_column_slice(pooled.len(), 1, pooled.as_slice()))?;
    let s = decoder::forward(&model.final_filters, &p)?;
    Ok(DVector::from_column_slice(s.as_slice()))
}

/// Both descriptors of one image.
pub fn texture_features(model: &TextureModel, img: &Image) -> Result<(DVector<f64>, DVector<f64>)> {
    Ok((color_feature(model, img)?, structure_feature(model, img)?))
}

fn subsample_columns(p: PatchMatrix, max: usize, seed: u64) -> Result<PatchMatrix> {
    if p.n() <= max {
        return Ok(p);
    }
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..p.n()).collect();
    idx.shuffle(&mut rng);
    idx.truncate(max);
    idx.sort_unstable();
    let cols: Vec<Vec<f64>> = idx.iter().map(|&j| p.column(j)).collect();
    PatchMatrix::from_columns(&cols)
}

/// Trains the full hierarchy layer by layer. Each training image must be
/// at least `grid*side` square so structure crops can be harvested; crop
/// positions, layer seeds, and subsampling are all derived from the
/// config seed, making training bit-reproducible.
pub fn train_texture_model(images: &[Image], cfg: &TextureConfig) -> Result<TextureModel> {
    cfg.validate()?;
    if images.len() < 2 {
        return Err(Error::arg("texture training needs at least two images"));
    }
    let size = cfg.structure_size();
    for (i, img) in images.iter().enumerate() {
        if img.width() < size || img.height() < size {
            return Err(Error::arg(format!(
                "training image {i} is {}x{}, needs at least {size}x{size}",
                img.width(),
                img.height()
            )));
        }
    }

    // Color pathway: one centered thumbnail per image.
    let thumbs: Vec<Vec<f64>> = images
        .iter()
        .map(|img| {
            let t = resize_box(img, cfg.color_side, cfg.color_side)?;
            Ok(flatten_window(&t, 0, 0, cfg.color_side))
        })
        .collect::<Result<_>>()?;
    let color_input = PatchMatrix::from_columns(&thumbs)?;
    let (color_centered, color_chain) = iterated_whiten(&color_input, 0, cfg.epsilon)?;
    let color_filters = decoder::train(
        &color_centered,
        cfg.h_color,
        &cfg.training,
        derive_seed(cfg.seed, &[10]),
        0,
        cfg.epsilon,
    )?;
    let color_mean = color_chain.base_mean().clone();

    // Harvest raw patch grids from random crops; every structure layer
    // trains on views derived from these.
    let mut raw_crops: Vec<PatchMatrix> = Vec::with_capacity(images.len() * cfg.crops_per_image);
    for (i, img) in images.iter().enumerate() {
        use rand::{Rng, SeedableRng};
        let mut rng =
            rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[20, i as u64]));
        for _ in 0..cfg.crops_per_image {
            let x0 = rng.random_range(0..=img.width() - size);
            let y0 = rng.random_range(0..=img.height() - size);
            let crop = img.window(x0, y0, size, size)?;
            raw_crops.push(extract_grid_patches(&crop, cfg.side)?);
        }
    }

    // The corpus-level chain is fit on all raw patches pooled together and
    // always stored, so a saved model can serve any whitening protocol.
    let mut raw_cols: Vec<Vec<f64>> = Vec::new();
    for raw in &raw_crops {
        for j in 0..raw.n() {
            raw_cols.push(raw.column(j));
        }
    }
    let (_, structure_chain) =
        iterated_whiten(&PatchMatrix::from_columns(&raw_cols)?, cfg.k, cfg.epsilon)?;
    drop(raw_cols);

    // Per-crop inputs whitened the same way test-time extraction will be.
    let crops: Vec<PatchMatrix> = raw_crops
        .iter()
        .map(|raw| {
            prepare_patches(
                raw,
                cfg.structure_whitening,
                cfg.k,
                cfg.epsilon,
                &structure_chain,
            )
        })
        .collect::<Result<_>>()?;
    drop(raw_crops);

    // Patch layer: pooled prepared patches from every crop.
    let mut patch_cols: Vec<Vec<f64>> = Vec::new();
    for white in &crops {
        for j in 0..white.n() {
            patch_cols.push(white.column(j));
        }
    }
    let p2_input = subsample_columns(
        PatchMatrix::from_columns(&patch_cols)?,
        cfg.max_layer_samples,
        derive_seed(cfg.seed, &[30]),
    )?;
    let (p2_k, p2_epsilon) = match cfg.structure_whitening {
        WhiteningProtocol::None => (0, Epsilon::Absolute(0.0)),
        _ => (cfg.k, cfg.epsilon),
    };
    let p2 = decoder::train(
        &p2_input,
        cfg.h2,
        &cfg.training,
        derive_seed(cfg.seed, &[11]),
        p2_k,
        p2_epsilon,
    )?;

    // Tile layer: per-crop tile stacks of patch-layer responses.
    let mut tile_cols: Vec<Vec<f64>> = Vec::new();
    for white in &crops {
        let s2 = decoder::forward(&p2, white)?;
        let tiles = tile_concat(&s2, cfg.grid, cfg.tile)?;
        for j in 0..tiles.ncols() {
            tile_cols.push(tiles.column(j).iter().copied().collect());
        }
    }
    let p3_input = subsample_columns(
        PatchMatrix::from_columns(&tile_cols)?,
        cfg.max_layer_samples,
        derive_seed(cfg.seed, &[31]),
    )?;
    let p3 = decoder::train(
        &p3_input,
        cfg.h3,
        &cfg.training,
        derive_seed(cfg.seed, &[12]),
        0,
        Epsilon::Absolute(0.0),
    )?;

    // Final layer: one pooled-and-concatenated vector per crop.
    let mut final_cols: Vec<Vec<f64>> = Vec::new();
    for white in &crops {
        let s2 = decoder::forward(&p2, white)?;
        let tiles = PatchMatrix::from_matrix(tile_concat(&s2, cfg.grid, cfg.tile)?)?;
        let s3 = decoder::forward(&p3, &tiles)?;
        let pooled = pooled_concat(&s3, cfg.pool_k)?;
        final_cols.push(pooled.iter().copied().collect());
    }
    let final_input = subsample_columns(
        PatchMatrix::from_columns(&final_cols)?,
        cfg.max_layer_samples,
        derive_seed(cfg.seed, &[32]),
    )?;
    let final_filters = decoder::train(
        &final_input,
        cfg.h_final,
        &cfg.training,
        derive_seed(cfg.seed, &[13]),
        0,
        Epsilon::Absolute(0.0),
    )?;

    TextureModel::new(
        color_filters,
        color_mean,
        p2,
        p3,
        final_filters,
        structure_chain,
        cfg.structure_whitening,
        cfg.side,
        cfg.grid,
        cfg.tile,
        cfg.pool_k,
        cfg.color_side,
        cfg.k,
        cfg.epsilon,
    )
}

/// One indexed corpus item: identifier, class label, both descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub id: String,
    pub class: String,
    pub color: DVector<f64>,
    pub structure: DVector<f64>,
}

/// A searchable set of labelled texture descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalIndex {
    entries: Vec<IndexEntry>,
}

impl RetrievalIndex {
    /// Builds an index from precomputed entries (descriptors need not come
    /// from a `TextureModel`; any consistent-dimension vectors work, which
    /// is how baseline indexes are constructed). Ids must be unique.
    pub fn from_entries(entries: Vec<IndexEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::arg("index needs at least one entry"));
        }
        let (cd, sd) = (entries[0].color.len(), entries[0].structure.len());
        for e in &entries {
            if e.color.len() != cd || e.structure.len() != sd {
                return Err(Error::arg(format!(
                    "entry {:?} has inconsistent descriptor dimensions",
                    e.id
                )));
            }
        }
        let mut ids: Vec<&str> = entries.iter().map(|e| e.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::arg("duplicate entry id in index"));
        }
        Ok(RetrievalIndex { entries })
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Extracts descriptors for every `(id, class, image)` item in parallel
/// and indexes them in input order. A retrievable corpus needs at least
/// two images spanning at least two classes.
pub fn build_index(
    model: &TextureModel,
    items: &[(String, String, Image)],
) -> Result<RetrievalIndex> {
    if items.len() < 2 {
        return Err(Error::arg("index needs at least two images"));
    }
    let mut classes: Vec<&str> = items.iter().map(|(_, class, _)| class.as_str()).collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::arg("index needs at least two distinct classes"));
    }
    let entries: Vec<IndexEntry> = items
        .par_iter()
        .map(|(id, class, img)| {
            let (color, structure) = texture_features(model, img)?;
            Ok(IndexEntry {
                id: id.clone(),
                class: class.clone(),
                color,
                structure,
            })
        })
        .collect::<Result<_>>()?;
    RetrievalIndex::from_entries(entries)
}

/// Retrieval tuning knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryConfig {
    /// Fraction of candidates the color prefilter keeps.
    pub color_fraction: f64,
    /// Expected samples per class; the prefilter always keeps at least
    /// twice this many candidates so a full class cannot be dropped.
    pub samples_per_class: usize,
}

impl Default for QueryConfig {
    fn default() -> Self {
        QueryConfig {
            color_fraction: 0.5,
            samples_per_class: 3,
        }
    }
}

impl QueryConfig {
    fn validate(&self) -> Result<()> {
        if !(self.color_fraction > 0.0 && self.color_fraction <= 1.0) {
            return Err(Error::arg(format!(
                "color fraction must be in (0, 1], got {}",
                self.color_fraction
            )));
        }
        if self.samples_per_class == 0 {
            return Err(Error::arg("samples_per_class must be >= 1"));
        }
        Ok(())
    }

    fn keep(&self, candidates: usize) -> usize {
        let by_fraction = (self.color_fraction * candidates.saturating_sub(1) as f64).ceil() as usize;
        by_fraction.max(2 * self.samples_per_class).min(candidates)
    }
}

/// One ranked candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedResult {
    pub id: String,
    pub class: String,
    /// Structure correlation for prefilter survivors, color correlation
    /// for the rest (they are never reordered by structure).
    pub correlation: f64,
    pub color_correlation: f64,
    pub survived_prefilter: bool,
}

fn rank_candidates(
    candidates: &[&IndexEntry],
    color: &DVector<f64>,
    structure: &DVector<f64>,
    cfg: &QueryConfig,
) -> Result<Vec<RankedResult>> {
    cfg.validate()?;
    if candidates.is_empty() {
        return Err(Error::arg("no candidates to rank"));
    }
    for e in candidates {
        if e.color.len() != color.len() || e.structure.len() != structure.len() {
            return Err(Error::arg(format!(
                "query descriptors do not match index dimensions (entry {:?})",
                e.id
            )));
        }
    }

    let mut color_order: Vec<(usize, f64)> = candidates
        .iter()
        .enumerate()
        .map(|(i, e)| Ok((i, feature_correlation(&e.color, color)?)))
        .collect::<Result<_>>()?;
    // Best correlation first; ties broken by id so rankings are stable
    // across runs and platforms.
    color_order.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| candidates[a.0].id.cmp(&candidates[b.0].id))
    });

    let keep = cfg.keep(candidates.len());
    let mut survivors: Vec<(usize, f64, f64)> = color_order[..keep]
        .iter()
        .map(|&(i, cc)| {
            Ok((
                i,
                feature_correlation(&candidates[i].structure, structure)?,
                cc,
            ))
        })
        .collect::<Result<_>>()?;
    survivors.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| candidates[a.0].id.cmp(&candidates[b.0].id))
    });

    let mut out = Vec::with_capacity(candidates.len());
    for (i, sc, cc) in survivors {
        out.push(RankedResult {
            id: candidates[i].id.clone(),
            class: candidates[i].class.clone(),
            correlation: sc,
            color_correlation: cc,
            survived_prefilter: true,
        });
    }
    for &(i, cc) in &color_order[keep..] {
        out.push(RankedResult {
            id: candidates[i].id.clone(),
            class: candidates[i].class.clone(),
            correlation: cc,
            color_correlation: cc,
            survived_prefilter: false,
        });
    }
    Ok(out)
}

/// Ranks the whole index against query descriptors: the color prefilter
/// keeps the `max(ceil(fraction * (N-1)), 2 * samples_per_class)` best
/// color-correlated candidates, those are reordered by structure
/// correlation (best first), and the remainder follows in color order.
pub fn query(
    index: &RetrievalIndex,
    color: &DVector<f64>,
    structure: &DVector<f64>,
    cfg: &QueryConfig,
) -> Result<Vec<RankedResult>> {
    let candidates: Vec<&IndexEntry> = index.entries.iter().collect();
    rank_candidates(&candidates, color, structure, cfg)
}

/// Convenience wrapper: extract descriptors for `img`, then [`query`].
pub fn query_image(
    model: &TextureModel,
    index: &RetrievalIndex,
    img: &Image,
    cfg: &QueryConfig,
) -> Result<Vec<RankedResult>> {
    let (color, structure) = texture_features(model, img)?;
    query(index, &color, &structure, cfg)
}

/// Leave-one-out retrieval quality over an index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetrievalEvaluation {
    pub precision_at_1: f64,
    pub mean_reciprocal_rank: f64,
    pub mean_average_precision: f64,
}

fn relevance_lists(
    index: &RetrievalIndex,
    rank_for: impl Fn(usize) -> Result<Vec<RankedResult>>,
) -> Result<Vec<Vec<bool>>> {
    (0..index.len())
        .map(|i| {
            let ranked = rank_for(i)?;
            let class = &index.entries[i].class;
            Ok(ranked.iter().map(|r| &r.class == class).collect())
        })
        .collect()
}

/// Queries every entry against the rest of the index (itself excluded) and
/// scores the rankings with same-class relevance.
pub fn evaluate_retrieval(index: &RetrievalIndex, cfg: &QueryConfig) -> Result<RetrievalEvaluation> {
    if index.len() < 2 {
        return Err(Error::arg("retrieval evaluation needs at least two entries"));
    }
    let lists = relevance_lists(index, |i| {
        let e = &index.entries[i];
        let candidates: Vec<&IndexEntry> = index
            .entries
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, c)| c)
            .collect();
        rank_candidates(&candidates, &e.color, &e.structure, cfg)
    })?;
    Ok(RetrievalEvaluation {
        precision_at_1: metrics::precision_at_1(&lists)?,
        mean_reciprocal_rank: metrics::mean_reciprocal_rank(&lists)?,
        mean_average_precision: metrics::mean_average_precision(&lists)?,
    })
}

/// Retrieval quality at one distortion level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustnessPoint {
    pub sigma: f64,
    pub precision_at_1: f64,
    pub mean_reciprocal_rank: f64,
    pub mean_average_precision: f64,
}

/// Corrupts every corpus image with additive Gaussian noise, rebuilds the
/// index from the corrupted corpus, and reruns the leave-one-out
/// evaluation — once per noise level. Per-image noise seeds are derived
/// from `seed`, so the sweep is reproducible; `sigma = 0` leaves images
/// untouched and reproduces the clean-corpus numbers.
pub fn robustness_sweep(
    model: &TextureModel,
    items: &[(String, String, Image)],
    sigmas: &[f64],
    cfg: &QueryConfig,
    seed: u64,
) -> Result<Vec<RobustnessPoint>> {
    if items.is_empty() || sigmas.is_empty() {
        return Err(Error::arg("robustness sweep needs items and noise levels"));
    }
    let mut out = Vec::with_capacity(sigmas.len());
    for (si, &sigma) in sigmas.iter().enumerate() {
        let noisy: Vec<(String, String, Image)> = items
            .iter()
            .enumerate()
            .map(|(i, (id, class, img))| {
                let degraded = distort(
                    img,
                    Distortion::GaussianNoise { sigma },
                    derive_seed(seed, &[si as u64, i as u64]),
                )?;
                Ok((id.clone(), class.clone(), degraded))
            })
            .collect::<Result<_>>()?;
        let index = build_index(model, &noisy)?;
        let eval = evaluate_retrieval(&index, cfg)?;
        out.push(RobustnessPoint {
            sigma,
            precision_at_1: eval.precision_at_1,
            mean_reciprocal_rank: eval.mean_reciprocal_rank,
            mean_average_precision: eval.mean_average_precision,
        });
    }
    Ok(out)
}

/// Serializes the texture model.
pub fn texture_to_model(m: &TextureModel, encoding: Encoding) -> Result<ModelFile> {
    let mut file = ModelFile::new(ModelKind::Texture, encoding);
    file.set_hyper("side", m.side)?;
    file.set_hyper("grid", m.grid)?;
    file.set_hyper("tile", m.tile)?;
    file.set_hyper("pool_k", m.pool_k)?;
    file.set_hyper("color_side", m.color_side)?;
    file.set_hyper("k", m.k)?;
    file.set_hyper("epsilon", m.epsilon)?;
    file.set_hyper("structure_whitening", m.structure_whitening)?;
    push_chain(&mut file, "schain_", &m.structure_chain)?;
    push_filterset(&mut file, "color_", &m.color_filters)?;
    file.push_array(
        "color_mean",
        DMatrix::from_column_slice(m.color_mean.len(), 1, m.color_mean.as_slice()),
    )?;
    push_filterset(&mut file, "p2_", &m.p2)?;
    push_filterset(&mut file, "p3_", &m.p3)?;
    push_filterset(&mut file, "final_", &m.final_filters)?;
    Ok(file)
}

/// Deserializes a texture model, revalidating the dimension chain.
pub fn texture_from_model(file: &ModelFile) -> Result<TextureModel> {
    file.expect_kind(ModelKind::Texture)?;
    let mean_arr = file.array("color_mean")?;
    if mean_arr.ncols() != 1 {
        return Err(Error::format("color_mean should be a column vector"));
    }
    TextureModel::new(
        read_filterset(file, "color_")?,
        DVector::from_column_slice(mean_arr.as_slice()),
        read_filterset(file, "p2_")?,
        read_filterset(file, "p3_")?,
        read_filterset(file, "final_")?,
        read_chain(file, "schain_")?,
        file.hyper_as("structure_whitening")?,
        file.hyper_as("side")?,
        file.hyper_as("grid")?,
        file.hyper_as("tile")?,
        file.hyper_as("pool_k")?,
        file.hyper_as("color_side")?,
        file.hyper_as("k")?,
        file.hyper_as("epsilon")?,
    )
}

/// Serializes an index: descriptors as two matrices (one column per
/// entry), ids and classes in the hyper table.
pub fn index_to_model(index: &RetrievalIndex, encoding: Encoding) -> Result<ModelFile> {
    let mut file = ModelFile::new(ModelKind::Index, encoding);
    let n = index.len();
    let ids: Vec<&str> = index.entries.iter().map(|e| e.id.as_str()).collect();
    let classes: Vec<&str> = index.entries.iter().map(|e| e.class.as_str()).collect();
    file.set_hyper("ids", ids)?;
    file.set_hyper("classes", classes)?;
    let cd = index.entries[0].color.len();
    let sd = index.entries[0].structure.len();
    let color = DMatrix::from_fn(cd, n, |r, c| index.entries[c].color[r]);
    let structure = DMatrix::from_fn(sd, n, |r, c| index.entries[c].structure[r]);
    file.push_array("color", color)?;
    file.push_array("structure", structure)?;
    Ok(file)
}

/// Deserializes an index.
pub fn index_from_model(file: &ModelFile) -> Result<RetrievalIndex> {
    file.expect_kind(ModelKind::Index)?;
    let ids: Vec<String> = file.hyper_as("ids")?;
    let classes: Vec<String> = file.hyper_as("classes")?;
    let color = file.array("color")?;
    let structure = file.array("structure")?;
    if ids.len() != classes.len() || color.ncols() != ids.len() || structure.ncols() != ids.len() {
        return Err(Error::format("index arrays and labels disagree on entry count"));
    }
    let entries = ids
        .into_iter()
        .zip(classes)
        .enumerate()
        .map(|(j, (id, class))| IndexEntry {
            id,
            class,
            color: DVector::from_iterator(color.nrows(), color.column(j).iter().copied()),
            structure: DVector::from_iterator(
                structure.nrows(),
                structure.column(j).iter().copied(),
            ),
        })
        .collect();
    RetrievalIndex::from_entries(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{render_texture, texture_catalog};
    use std::sync::OnceLock;

    #[test]
    fn top_k_pool_sorts_and_truncates() {
        assert_eq!(top_k_pool(&[3.0, 1.0, 2.0], 2).unwrap(), vec![3.0, 2.0]);
        assert_eq!(
            top_k_pool(&[1.0, 4.0, 2.0], 3).unwrap(),
            vec![4.0, 2.0, 1.0]
        );
        assert!(top_k_pool(&[1.0], 2).is_err());
        assert!(top_k_pool(&[1.0, 2.0], 0).is_err());
    }

    #[test]
    fn tile_concat_groups_three_by_three_neighborhoods() {
        // one response row whose value is the patch's grid position,
        // so the output spells out the grouping directly
        let s = DMatrix::from_fn(1, 81, |_, j| j as f64);
        let tiles = tile_concat(&s, 9, 3).unwrap();
        assert_eq!(tiles.shape(), (9, 9));
        let first: Vec<f64> = tiles.column(0).iter().copied().collect();
        assert_eq!(
            first,
            vec![0.0, 1.0, 2.0, 9.0, 10.0, 11.0, 18.0, 19.0, 20.0]
        );
        // tile row 1, col 2 starts at patch (3, 6) = 3*9 + 6
        let c5: Vec<f64> = tiles.column(5).iter().copied().collect();
        assert_eq!(c5[0], 33.0);
        assert_eq!(c5[8], 53.0);
    }

    #[test]
    fn tile_concat_rejects_wrong_count() {
        let s = DMatrix::zeros(2, 80);
        assert!(tile_concat(&s, 9, 3).is_err());
    }

    /// Tiny but structurally complete model over a 4-image corpus;
    /// shared across tests because layer-wise training dominates runtime.
    fn tiny_setup() -> &'static (TextureModel, Vec<(String, String, Image)>) {
        static SETUP: OnceLock<(TextureModel, Vec<(String, String, Image)>)> = OnceLock::new();
        SETUP.get_or_init(|| {
            let catalog = texture_catalog();
            let mut items = Vec::new();
            for spec in [&catalog[0], &catalog[4]] {
                for sample in 0..2 {
                    let img = render_texture(spec, 80, sample, 3).unwrap();
                    items.push((
                        format!("{}_{sample}", spec.name),
                        spec.name.clone(),
                        img,
                    ));
                }
            }
            let cfg = TextureConfig {
                h_color: 6,
                h2: 4,
                h3: 9,
                h_final: 8,
                pool_k: 3,
                crops_per_image: 2,
                training: TrainingConfig {
                    max_iterations: 8,
                    ..TrainingConfig::default()
                },
                ..TextureConfig::default()
            };
            let images: Vec<Image> = items.iter().map(|(_, _, img)| img.clone()).collect();
            let model = train_texture_model(&images, &cfg).unwrap();
            (model, items)
        })
    }

    #[test]
    fn trained_model_has_consistent_chain() {
        let (model, _) = tiny_setup();
        assert_eq!(model.color_dim(), 6);
        assert_eq!(model.structure_dim(), 8);
        assert_eq!(model.structure_size(), 72);
        // chain: p3 expects 3*3 tiles of 4 responses, final expects 9 tiles of 3
        assert_eq!(model.p2.d(), 192);
        assert_eq!(model.p3.d(), 36);
        assert_eq!(model.final_filters.d(), 27);
        assert_eq!(model.structure_chain().base_mean().len(), 192);
        assert_eq!(model.structure_chain().k(), 1);
        assert_eq!(model.structure_whitening(), WhiteningProtocol::RefitPerImage);
    }

    #[test]
    fn features_are_deterministic_and_sized() {
        let (model, items) = tiny_setup();
        let (c, s) = texture_features(model, &items[0].2).unwrap();
        assert_eq!(c.len(), 6);
        assert_eq!(s.len(), 8);
        let (c2, s2) = texture_features(model, &items[0].2).unwrap();
        assert_eq!(c, c2);
        assert_eq!(s, s2);
        assert!(c.iter().chain(s.iter()).all(|v| v.is_finite()));
    }

    #[test]
    fn training_is_reproducible() {
        let catalog = texture_catalog();
        let images: Vec<Image> = (0..2)
            .map(|i| render_texture(&catalog[1], 72, i, 5).unwrap())
            .collect();
        let cfg = TextureConfig {
            h_color: 3,
            h2: 2,
            h3: 4,
            h_final: 3,
            pool_k: 2,
            crops_per_image: 1,
            training: TrainingConfig {
                max_iterations: 4,
                ..TrainingConfig::default()
            },
            ..TextureConfig::default()
        };
        let a = train_texture_model(&images, &cfg).unwrap();
        let b = train_texture_model(&images, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn training_rejects_small_images() {
        let img = Image::filled(64, 64, 0.5).unwrap();
        let cfg = TextureConfig::default();
        assert!(train_texture_model(&[img.clone(), img], &cfg).is_err());
    }

    #[test]
    fn self_query_ranks_self_first() {
        let (model, items) = tiny_setup();
        let index = build_index(model, items).unwrap();
        assert_eq!(index.len(), 4);
        let ranked = query_image(model, &index, &items[2].2, &QueryConfig::default()).unwrap();
        assert_eq!(ranked.len(), 4);
        assert_eq!(ranked[0].id, items[2].0);
        // an exact duplicate correlates perfectly in both pathways
        assert_eq!(ranked[0].correlation, 1.0);
        assert_eq!(ranked[0].color_correlation, 1.0);
        assert!(ranked[1..].iter().all(|r| r.correlation < 1.0));
    }

    #[test]
    fn evaluation_reports_unit_interval_metrics() {
        let (model, items) = tiny_setup();
        let index = build_index(model, items).unwrap();
        let eval = evaluate_retrieval(&index, &QueryConfig::default()).unwrap();
        for v in [
            eval.precision_at_1,
            eval.mean_reciprocal_rank,
            eval.mean_average_precision,
        ] {
            assert!((0.0..=1.0).contains(&v), "{eval:?}");
        }
    }

    #[test]
    fn zero_noise_sweep_matches_clean_evaluation() {
        let (model, items) = tiny_setup();
        let index = build_index(model, items).unwrap();
        let clean = evaluate_retrieval(&index, &QueryConfig::default()).unwrap();
        let sweep =
            robustness_sweep(model, items, &[0.0], &QueryConfig::default(), 99).unwrap();
        assert_eq!(sweep.len(), 1);
        assert_eq!(sweep[0].sigma, 0.0);
        assert_eq!(sweep[0].precision_at_1, clean.precision_at_1);
        assert_eq!(sweep[0].mean_reciprocal_rank, clean.mean_reciprocal_rank);
        assert_eq!(
            sweep[0].mean_average_precision,
            clean.mean_average_precision
        );
    }

    #[test]
    fn prefilter_keeps_floor_and_appends_rest() {
        // six entries; cluster A colors share the query's rank order
        // (correlation +1), cluster B colors reverse it (-1)
        let entry = |id: &str, class: &str, c: [f64; 3], s: [f64; 3]| IndexEntry {
            id: id.into(),
            class: class.into(),
            color: DVector::from_row_slice(&c),
            structure: DVector::from_row_slice(&s),
        };
        let index = RetrievalIndex::from_entries(vec![
            entry("a0", "alpha", [0.0, 1.0, 2.0], [3.0, 2.0, 1.0]),
            entry("a1", "alpha", [5.0, 6.0, 7.0], [1.0, 3.0, 2.0]),
            entry("a2", "alpha", [0.1, 0.2, 0.3], [1.0, 2.0, 3.0]),
            entry("b0", "beta", [2.0, 1.0, 0.0], [1.0, 2.0, 3.0]),
            entry("b1", "beta", [9.0, 8.0, 7.0], [1.0, 2.0, 3.0]),
            entry("b2", "beta", [0.3, 0.2, 0.1], [1.0, 2.0, 3.0]),
        ])
        .unwrap();
        let cfg = QueryConfig {
            color_fraction: 0.5,
            samples_per_class: 1,
        };
        // keep = max(ceil(0.5 * 5), 2) = 3: exactly cluster A survives
        let ranked = query(
            &index,
            &DVector::from_row_slice(&[1.0, 2.0, 3.0]),
            &DVector::from_row_slice(&[1.0, 2.0, 3.0]),
            &cfg,
        )
        .unwrap();
        let survivors: Vec<&str> = ranked
            .iter()
            .filter(|r| r.survived_prefilter)
            .map(|r| r.id.as_str())
            .collect();
        // survivors reranked by structure correlation: a2 (1), a1 (0.5), a0 (-1)
        assert_eq!(survivors, vec!["a2", "a1", "a0"]);
        assert_eq!(ranked[0].correlation, 1.0);
        assert_eq!(ranked[1].correlation, 0.5);
        assert_eq!(ranked[2].correlation, -1.0);
        let rest: Vec<&str> = ranked
            .iter()
            .filter(|r| !r.survived_prefilter)
            .map(|r| r.id.as_str())
            .collect();
        // non-survivors tie at color correlation -1, so they keep id order,
        // and their structure never gets consulted
        assert_eq!(rest, vec!["b0", "b1", "b2"]);
        assert!(ranked[3..].iter().all(|r| r.correlation == -1.0));
        assert_eq!(ranked.len(), 6);
    }

    #[test]
    fn ties_break_by_id() {
        // all entries correlate 1.0 with the query in both pathways
        let entry = |id: &str| IndexEntry {
            id: id.into(),
            class: "c".into(),
            color: DVector::from_row_slice(&[1.0, 2.0, 3.0]),
            structure: DVector::from_row_slice(&[1.0, 2.0, 3.0]),
        };
        let index =
            RetrievalIndex::from_entries(vec![entry("z"), entry("a"), entry("m")]).unwrap();
        let ranked = query(
            &index,
            &DVector::from_row_slice(&[4.0, 5.0, 6.0]),
            &DVector::from_row_slice(&[4.0, 5.0, 6.0]),
            &QueryConfig {
                color_fraction: 1.0,
                samples_per_class: 1,
            },
        )
        .unwrap();
        let ids: Vec<&str> = ranked.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, vec!["a", "m", "z"]);
    }

    #[test]
    fn index_rejects_duplicates_and_mismatches() {
        let entry = |id: &str, dim: usize| IndexEntry {
            id: id.into(),
            class: "c".into(),
            color: DVector::zeros(dim),
            structure: DVector::zeros(2),
        };
        assert!(RetrievalIndex::from_entries(vec![entry("a", 2), entry("a", 2)]).is_err());
        assert!(RetrievalIndex::from_entries(vec![entry("a", 2), entry("b", 3)]).is_err());
        assert!(RetrievalIndex::from_entries(vec![]).is_err());
    }

    #[test]
    fn texture_model_file_round_trip() {
        let (model, items) = tiny_setup();
        let file = texture_to_model(model, Encoding::Base64).unwrap();
        let back = texture_from_model(&ModelFile::from_json(&file.to_json().unwrap()).unwrap())
            .unwrap();
        assert_eq!(&back, model);
        let (c0, s0) = texture_features(model, &items[1].2).unwrap();
        let (c1, s1) = texture_features(&back, &items[1].2).unwrap();
        assert_eq!(c0, c1);
        assert_eq!(s0, s1);
    }

    #[test]
    fn index_model_file_round_trip() {
        let (model, items) = tiny_setup();
        let index = build_index(model, items).unwrap();
        let file = index_to_model(&index, Encoding::Base64).unwrap();
        let back =
            index_from_model(&ModelFile::from_json(&file.to_json().unwrap()).unwrap()).unwrap();
        assert_eq!(back, index);
    }

    #[test]
    fn model_constructor_rejects_broken_chain() {
        let (model, _) = tiny_setup();
        // final layer expects 9 pooled values per tile instead of 3
        let result = TextureModel::new(
            model.color_filters.clone(),
            model.color_mean.clone(),
            model.p2.clone(),
            model.p3.clone(),
            model.final_filters.clone(),
            model.structure_chain.clone(),
            model.structure_whitening,
            model.side,
            model.grid,
            model.tile,
            9,
            model.color_side,
            model.k,
            model.epsilon,
        );
        assert!(result.is_err());
    }

    #[test]
    fn whitening_protocol_changes_structure_features() {
        let (model, items) = tiny_setup();
        let img = &items[0].2;
        let refit = structure_feature(model, img).unwrap();
        for protocol in [WhiteningProtocol::TrainingChain, WhiteningProtocol::None] {
            let alt = TextureModel::new(
                model.color_filters.clone(),
                model.color_mean.clone(),
                model.p2.clone(),
                model.p3.clone(),
                model.final_filters.clone(),
                model.structure_chain.clone(),
                protocol,
                model.side,
                model.grid,
                model.tile,
                model.pool_k,
                model.color_side,
                model.k,
                model.epsilon,
            )
            .unwrap();
            let f = structure_feature(&alt, img).unwrap();
            assert_eq!(f.len(), refit.len());
            assert!(f.iter().all(|v| v.is_finite()));
            assert_ne!(f, refit, "{protocol:?} should whiten differently");
        }
    }

    #[test]
    fn index_requires_two_classes() {
        let (model, items) = tiny_setup();
        // both samples of the first class only
        let single: Vec<(String, String, Image)> = items
            .iter()
            .filter(|(_, class, _)| class == &items[0].1)
            .cloned()
            .collect();
        assert_eq!(single.len(), 2);
        assert!(build_index(model, &single).is_err());
        assert!(build_index(model, &items[..1]).is_err());
    }
}
