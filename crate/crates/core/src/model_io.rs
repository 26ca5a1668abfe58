//! Self-describing JSON container for trained models and indexes.
//!
//! A model file carries a format version, a `kind` tag, a free-form
//! `hyper` table (JSON object with sorted keys, so serialization is
//! deterministic), and a list of named 2-D arrays. Array data is row-major
//! and stored either as `"decimal"` (a JSON number list; the shortest
//! round-trip decimal form, so reading it back restores the exact bits of
//! every finite value) or `"base64"` (little-endian f64 bytes; bit-exact
//! for any payload and much smaller).

use std::path::Path;

use base64::Engine;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::decoder::{FilterSet, Provenance};
use crate::error::{Error, Result};
use crate::whitening::{WhiteningChain, WhiteningTransform};

pub const FORMAT_VERSION: u32 = 1;

/// What a model file contains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// A bare trained filter set.
    Filterset,
    /// A single-filter-set quality estimator.
    Unique,
    /// A multi-resolution ensemble quality estimator.
    Msunique,
    /// The three-stage texture feature extractor.
    Texture,
    /// A feature index over a labelled corpus.
    Index,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Filterset => "filterset",
            ModelKind::Unique => "unique",
            ModelKind::Msunique => "msunique",
            ModelKind::Texture => "texture",
            ModelKind::Index => "index",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    Base64,
    Decimal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub matrix: DMatrix<f64>,
}

/// In-memory form of a model file.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub kind: ModelKind,
    pub encoding: Encoding,
    hyper: Map<String, Value>,
    arrays: Vec<NamedArray>,
}

#[derive(Serialize, Deserialize)]
struct RawModelFile {
    format_version: u32,
    kind: ModelKind,
    encoding: Encoding,
    hyper: Map<String, Value>,
    arrays: Vec<RawArray>,
}

#[derive(Serialize, Deserialize)]
struct RawArray {
    name: String,
    rows: usize,
    cols: usize,
    data: Value,
}

impl ModelFile {
    pub fn new(kind: ModelKind, encoding: Encoding) -> Self {
        ModelFile {
            kind,
            encoding,
            hyper: Map::new(),
            arrays: Vec::new(),
        }
    }

    /// Appends a named array; names must be unique within the file.
    pub fn push_array(&mut self, name: &str, matrix: DMatrix<f64>) -> Result<()> {
        if self.arrays.iter().any(|a| a.name == name) {
            return Err(Error::arg(format!("duplicate array name {name:?}")));
        }
        self.arrays.push(NamedArray {
            name: name.to_string(),
            matrix,
        });
        Ok(())
    }

    pub fn array(&self, name: &str) -> Result<&DMatrix<f64>> {
        self.arrays
            .iter()
            .find(|a| a.name == name)
            .map(|a| &a.matrix)
            .ok_or_else(|| Error::format(format!("model file has no array {name:?}")))
    }

    pub fn arrays(&self) -> &[NamedArray] {
        &self.arrays
    }

    pub fn set_hyper(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        let v = serde_json::to_value(value)
            .map_err(|e| Error::format(format!("unserializable hyperparameter {key:?}: {e}")))?;
        self.hyper.insert(key.to_string(), v);
        Ok(())
    }

    pub fn hyper(&self, key: &str) -> Result<&Value> {
        self.hyper
            .get(key)
            .ok_or_else(|| Error::format(format!("model file has no hyperparameter {key:?}")))
    }

    pub fn hyper_as<T: for<'de> Deserialize<'de>>(&self, key: &str) -> Result<T> {
        serde_json::from_value(self.hyper(key)?.clone())
            .map_err(|e| Error::format(format!("hyperparameter {key:?}: {e}")))
    }

    pub fn hyper_f64(&self, key: &str) -> Result<f64> {
        self.hyper_as(key)
    }

    pub fn hyper_usize(&self, key: &str) -> Result<usize> {
        self.hyper_as(key)
    }

    pub fn hyper_str(&self, key: &str) -> Result<String> {
        self.hyper_as(key)
    }

    /// Serializes to pretty JSON. Hyper keys are sorted and arrays keep
    /// insertion order, so equal models produce identical bytes.
    pub fn to_json(&self) -> Result<String> {
        let arrays = self
            .arrays
            .iter()
            .map(|a| encode_array(a, self.encoding))
            .collect();
        let raw = RawModelFile {
            format_version: FORMAT_VERSION,
            kind: self.kind,
            encoding: self.encoding,
            hyper: self.hyper.clone(),
            arrays,
        };
        serde_json::to_string_pretty(&raw).map_err(|e| Error::format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawModelFile =
            serde_json::from_str(text).map_err(|e| Error::format(format!("model file: {e}")))?;
        if raw.format_version != FORMAT_VERSION {
            return Err(Error::format(format!(
                "unsupported model format version {} (expected {FORMAT_VERSION})",
                raw.format_version
            )));
        }
        let mut arrays = Vec::with_capacity(raw.arrays.len());
        for a in &raw.arrays {
            arrays.push(decode_array(a, raw.encoding)?);
        }
        Ok(ModelFile {
            kind: raw.kind,
            encoding: raw.encoding,
            hyper: raw.hyper,
            arrays,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?)
            .map_err(|e| Error::format(format!("writing {}: {e}", path.display())))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::format(format!("reading {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Fails unless the file's kind matches; call sites know what they
    /// expect to load.
    pub fn expect_kind(&self, kind: ModelKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::format(format!(
                "model file is {:?}, expected {:?}",
                self.kind.as_str(),
                kind.as_str()
            )));
        }
        Ok(())
    }
}

/// Stores a filter set's four parameter arrays and its provenance under a
/// name prefix, so several filter sets can share one file.
pub(crate) fn push_filterset(m: &mut ModelFile, prefix: &str, f: &FilterSet) -> Result<()> {
    m.push_array(&format!("{prefix}w1"), f.w1().clone())?;
    m.push_array(&format!("{prefix}b1"), column(f.b1()))?;
    m.push_array(&format!("{prefix}w2"), f.w2().clone())?;
    m.push_array(&format!("{prefix}b2"), column(f.b2()))?;
    m.set_hyper(&format!("{prefix}provenance"), f.provenance())
}

/// Inverse of [`push_filterset`].
pub(crate) fn read_filterset(m: &ModelFile, prefix: &str) -> Result<FilterSet> {
    let w1 = m.array(&format!("{prefix}w1"))?.clone();
    let b1 = vector(m.array(&format!("{prefix}b1"))?, &format!("{prefix}b1"))?;
    let w2 = m.array(&format!("{prefix}w2"))?.clone();
    let b2 = vector(m.array(&format!("{prefix}b2"))?, &format!("{prefix}b2"))?;
    let provenance: Provenance = m.hyper_as(&format!("{prefix}provenance"))?;
    FilterSet::new(w1, b1, w2, b2, provenance)
}

fn column(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

fn vector(m: &DMatrix<f64>, name: &str) -> Result<DVector<f64>> {
    if m.ncols() != 1 {
        return Err(Error::format(format!(
            "array {name:?} should be a column vector, found {} columns",
            m.ncols()
        )));
    }
    Ok(DVector::from_column_slice(m.as_slice()))
}

/// Stores every stage of a whitening chain under `prefix`: the base mean,
/// then per-stage filter, mean, and eigen-data so the reloaded chain
/// compares equal to the original.
pub(crate) fn push_chain(m: &mut ModelFile, prefix: &str, c: &WhiteningChain) -> Result<()> {
    m.set_hyper(&format!("{prefix}stages"), c.k())?;
    m.push_array(&format!("{prefix}base_mean"), column(c.base_mean()))?;
    for (i, stage) in c.stages().iter().enumerate() {
        m.set_hyper(&format!("{prefix}epsilon_{i}"), stage.epsilon())?;
        m.push_array(&format!("{prefix}w_{i}"), stage.w().clone())?;
        m.push_array(&format!("{prefix}mean_{i}"), column(stage.mean()))?;
        m.push_array(&format!("{prefix}eigvals_{i}"), column(stage.eigvals()))?;
        m.push_array(&format!("{prefix}eigvecs_{i}"), stage.eigvecs().clone())?;
    }
    Ok(())
}

/// Inverse of [`push_chain`].
pub(crate) fn read_chain(m: &ModelFile, prefix: &str) -> Result<WhiteningChain> {
    let stages: usize = m.hyper_as(&format!("{prefix}stages"))?;
    let base_mean = vector(
        m.array(&format!("{prefix}base_mean"))?,
        &format!("{prefix}base_mean"),
    )?;
    let mut parts = Vec::with_capacity(stages);
    for i in 0..stages {
        let epsilon: f64 = m.hyper_as(&format!("{prefix}epsilon_{i}"))?;
        let w = m.array(&format!("{prefix}w_{i}"))?.clone();
        let mean = vector(m.array(&format!("{prefix}mean_{i}"))?, &format!("{prefix}mean_{i}"))?;
        let eigvals = vector(
            m.array(&format!("{prefix}eigvals_{i}"))?,
            &format!("{prefix}eigvals_{i}"),
        )?;
        let eigvecs = m.array(&format!("{prefix}eigvecs_{i}"))?.clone();
        parts.push(WhiteningTransform::from_parts(w, epsilon, mean, eigvals, eigvecs)?);
    }
    Ok(WhiteningChain::from_parts(base_mean, parts))
}

/// Writes a bare filter set as a standalone model file.
pub fn filterset_to_model(f: &FilterSet, encoding: Encoding) -> Result<ModelFile> {
    let mut m = ModelFile::new(ModelKind::Filterset, encoding);
    push_filterset(&mut m, "", f)?;
    Ok(m)
}

/// Reads a standalone filter set model file.
pub fn filterset_from_model(m: &ModelFile) -> Result<FilterSet> {
    m.expect_kind(ModelKind::Filterset)?;
    read_filterset(m, "")
}

fn encode_array(a: &NamedArray, encoding: Encoding) -> RawArray {
    let (rows, cols) = (a.matrix.nrows(), a.matrix.ncols());
    // Row-major, independent of the in-memory layout.
    let values: Vec<f64> = (0..rows)
        .flat_map(|i| (0..cols).map(move |j| a.matrix[(i, j)]))
        .collect();
    let data = match encoding {
        Encoding::Decimal => Value::Array(
            values
                .iter()
                .map(|v| serde_json::Number::from_f64(*v).map(Value::Number).unwrap_or(Value::Null))
                .collect(),
        ),
        Encoding::Base64 => {
            let mut bytes = Vec::with_capacity(values.len() * 8);
            for v in &values {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            Value::String(base64::engine::general_purpose::STANDARD.encode(bytes))
        }
    };
    RawArray {
        name: a.name.clone(),
        rows,
        cols,
        data,
    }
}

fn decode_array(a: &RawArray, encoding: Encoding) -> Result<NamedArray> {
    let expected = a.rows * a.cols;
    let values: Vec<f64> = match (&a.data, encoding) {
        (Value::Array(items), Encoding::Decimal) => {
            let mut out = Vec::with_capacity(items.len());
            for item in items {
                let v = item.as_f64().ok_or_else(|| {
                    Error::format(format!("array {:?}: non-numeric element", a.name))
                })?;
                out.push(v);
            }
            out
        }
        (Value::String(text), Encoding::Base64) => {
            let bytes = base64::engine::general_purpose::STANDARD
                .decode(text)
                .map_err(|e| Error::format(format!("array {:?}: bad base64: {e}", a.name)))?;
            if bytes.len() % 8 != 0 {
                return Err(Error::format(format!(
                    "array {:?}: byte length {} is not a multiple of 8",
                    a.name,
                    bytes.len()
                )));
            }
            bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect()
        }
        _ => {
            return Err(Error::format(format!(
                "array {:?}: data does not match declared encoding",
                a.name
            )))
        }
    };
    if values.len() != expected {
        return Err(Error::format(format!(
            "array {:?}: {} elements, header says {} x {}",
            a.name,
            values.len(),
            a.rows,
            a.cols
        )));
    }
    let matrix = DMatrix::from_row_slice(a.rows, a.cols, &values);
    Ok(NamedArray {
        name: a.name.clone(),
        matrix,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn tricky_matrix() -> DMatrix<f64> {
        dmatrix![
            0.1, 1.0 / 3.0, -0.0;
            1e-300, 5e-324, 123456.789_012_345_6;
        ]
    }

    #[test]
    fn decimal_round_trip_is_bit_exact() {
        let mut m = ModelFile::new(ModelKind::Filterset, Encoding::Decimal);
        m.push_array("w", tricky_matrix()).unwrap();
        let back = ModelFile::from_json(&m.to_json().unwrap()).unwrap();
        let (a, b) = (m.array("w").unwrap(), back.array("w").unwrap());
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.to_bits(), y.to_bits(), "{x} vs {y}");
        }
    }

    #[test]
    fn base64_round_trip_is_bit_exact() {
        let mut m = ModelFile::new(ModelKind::Texture, Encoding::Base64);
        m.push_array("w", tricky_matrix()).unwrap();
        let back = ModelFile::from_json(&m.to_json().unwrap()).unwrap();
        let (a, b) = (m.array("w").unwrap(), back.array("w").unwrap());
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(back.kind, ModelKind::Texture);
    }

    #[test]
    fn serialization_is_deterministic() {
        let build = || {
            let mut m = ModelFile::new(ModelKind::Unique, Encoding::Base64);
            m.set_hyper("zeta", 1).unwrap();
            m.set_hyper("alpha", 2).unwrap();
            m.push_array("b", dmatrix![1.0; 2.0]).unwrap();
            m.push_array("a", dmatrix![3.0, 4.0]).unwrap();
            m
        };
        let x = build().to_json().unwrap();
        let y = build().to_json().unwrap();
        assert_eq!(x, y);
        // load-save is stable too
        let z = ModelFile::from_json(&x).unwrap().to_json().unwrap();
        assert_eq!(x, z);
    }

    #[test]
    fn hyper_round_trip_typed() {
        let mut m = ModelFile::new(ModelKind::Msunique, Encoding::Decimal);
        m.set_hyper("h", 400usize).unwrap();
        m.set_hyper("rho", 0.035).unwrap();
        m.set_hyper("label", "edge").unwrap();
        let back = ModelFile::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back.hyper_usize("h").unwrap(), 400);
        assert_eq!(back.hyper_f64("rho").unwrap(), 0.035);
        assert_eq!(back.hyper_str("label").unwrap(), "edge");
        assert!(back.hyper_f64("missing").is_err());
    }

    #[test]
    fn version_mismatch_rejected() {
        let mut m = ModelFile::new(ModelKind::Filterset, Encoding::Decimal);
        m.push_array("w", dmatrix![1.0]).unwrap();
        let text = m.to_json().unwrap().replace(
            "\"format_version\": 1",
            "\"format_version\": 9",
        );
        assert!(ModelFile::from_json(&text).is_err());
    }

    #[test]
    fn unknown_kind_rejected() {
        let text = r#"{"format_version":1,"kind":"mystery","encoding":"decimal","hyper":{},"arrays":[]}"#;
        assert!(ModelFile::from_json(text).is_err());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut m = ModelFile::new(ModelKind::Filterset, Encoding::Decimal);
        m.push_array("w", dmatrix![1.0, 2.0; 3.0, 4.0]).unwrap();
        let text = m.to_json().unwrap().replace("\"rows\": 2", "\"rows\": 3");
        assert!(ModelFile::from_json(&text).is_err());
    }

    #[test]
    fn duplicate_array_name_rejected() {
        let mut m = ModelFile::new(ModelKind::Index, Encoding::Decimal);
        m.push_array("w", dmatrix![1.0]).unwrap();
        assert!(m.push_array("w", dmatrix![2.0]).is_err());
    }

    #[test]
    fn row_major_layout_in_file() {
        let mut m = ModelFile::new(ModelKind::Filterset, Encoding::Decimal);
        m.push_array("w", dmatrix![1.0, 2.0; 3.0, 4.0]).unwrap();
        let text = m.to_json().unwrap();
        let compact: String = text.split_whitespace().collect();
        assert!(compact.contains("[1.0,2.0,3.0,4.0]"), "{compact}");
    }

    #[test]
    fn filterset_round_trip_preserves_parameters() {
        use crate::decoder::{train, TrainingConfig};
        use crate::patches::PatchMatrix;
        use crate::whitening::Epsilon;
        use rand::{Rng, SeedableRng};

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let p = PatchMatrix::from_matrix(DMatrix::from_fn(6, 30, |_, _| {
            rng.random_range(-1.0..1.0)
        }))
        .unwrap();
        let cfg = TrainingConfig {
            max_iterations: 10,
            ..TrainingConfig::default()
        };
        let f = train(&p, 4, &cfg, 11, 1, Epsilon::Relative(0.01)).unwrap();
        for encoding in [Encoding::Base64, Encoding::Decimal] {
            let m = filterset_to_model(&f, encoding).unwrap();
            let text = m.to_json().unwrap();
            let back = filterset_from_model(&ModelFile::from_json(&text).unwrap()).unwrap();
            assert_eq!(back, f);
        }
    }

    #[test]
    fn whitening_chain_round_trip_preserves_stages() {
        use crate::patches::PatchMatrix;
        use crate::whitening::{iterated_whiten, Epsilon};
        use rand::{Rng, SeedableRng};

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let p = PatchMatrix::from_matrix(DMatrix::from_fn(5, 40, |_, _| {
            rng.random_range(-1.0..1.0)
        }))
        .unwrap();
        for k in [0usize, 2] {
            let (_, chain) = iterated_whiten(&p, k, Epsilon::Absolute(0.05)).unwrap();
            let mut m = ModelFile::new(ModelKind::Filterset, Encoding::Base64);
            push_chain(&mut m, "c_", &chain).unwrap();
            let text = m.to_json().unwrap();
            let back = read_chain(&ModelFile::from_json(&text).unwrap(), "c_").unwrap();
            assert_eq!(back, chain);
        }
    }

    #[test]
    fn save_load_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let mut m = ModelFile::new(ModelKind::Unique, Encoding::Base64);
        m.set_hyper("k", 1usize).unwrap();
        m.push_array("w1", tricky_matrix()).unwrap();
        m.save(&path).unwrap();
        let back = ModelFile::load(&path).unwrap();
        assert_eq!(back, m);
        assert!(back.expect_kind(ModelKind::Unique).is_ok());
        assert!(back.expect_kind(ModelKind::Texture).is_err());
    }
}
