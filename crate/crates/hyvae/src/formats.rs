//! Little-endian binary containers. Each starts with a 4-byte magic and a
//! version byte; integers are u64, values are f64, all little-endian.
//!
//! | magic  | payload                                                        |
//! |--------|----------------------------------------------------------------|
//! | `HYVF` | N, D, feature-set tag (u8), N·D values                         |
//! | `HYVE` | N, E, feature-set tag (u8), N·E values                         |
//! | `HYVC` | N, N movieIds, U, then per user: userId, count, count × u32    |
//! | `HYVM` | kind (u8), MLP descriptor, [hybrid header], P, P values        |

use std::fs;
use std::path::Path;

use hyvae_core::dataset::{BinaryClickMatrix, MovieIndex};
use hyvae_core::features::{FeatureSet, MovieFeatureMatrix};
use hyvae_core::hvae::{AssemblyMode, DenseReduction, HybridVae};
use hyvae_core::mvae::MovieEmbeddingTable;
use hyvae_core::vae::{Activation, Architecture, MlpVae, Parameters};
use hyvae_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const FORMAT_VERSION: u8 = 1;
pub const FEATURE_MAGIC: &[u8; 4] = b"HYVF";
pub const EMBEDDING_MAGIC: &[u8; 4] = b"HYVE";
pub const CLICKS_MAGIC: &[u8; 4] = b"HYVC";
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"HYVM";

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn header(magic: &[u8; 4]) -> Self {
        let mut w = Writer(magic.to_vec());
        w.u8(FORMAT_VERSION);
        w
    }

    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }

    fn f64s(&mut self, vs: &[f64]) {
        vs.iter().for_each(|v| self.0.extend_from_slice(&v.to_le_bytes()));
    }
}

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn open(path: &'a Path, bytes: &'a [u8], magic: &[u8; 4]) -> Result<Self> {
        let mut r = Reader { path, bytes, pos: 0 };
        if r.take(4)? != magic {
            return Err(CliError::format(path, format!("bad magic, expected {}", String::from_utf8_lossy(magic))));
        }
        let version = r.u8()?;
        if version != FORMAT_VERSION {
            return Err(CliError::format(path, format!("unsupported version {version}")));
        }
        Ok(r)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| CliError::format(self.path, format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| CliError::format(self.path, format!("size {v} does not fit in memory")))
    }

    /// A count of items that must still fit in the remaining bytes.
    fn count(&mut self, item_bytes: usize) -> Result<usize> {
        let n = self.usize()?;
        if n.saturating_mul(item_bytes) > self.bytes.len() - self.pos {
            return Err(CliError::format(self.path, format!("declared count {n} exceeds file size")));
        }
        Ok(n)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| CliError::format(self.path, "size overflow"))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn feature_set(&mut self) -> Result<FeatureSet> {
        let tag = self.u8()?;
        FeatureSet::from_tag(tag).ok_or_else(|| CliError::format(self.path, format!("unknown feature-set tag {tag}")))
    }

    fn finish(self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(CliError::format(self.path, format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

fn table_bytes(magic: &[u8; 4], set: FeatureSet, m: &Matrix) -> Vec<u8> {
    let mut w = Writer::header(magic);
    w.usize(m.rows());
    w.usize(m.cols());
    w.u8(set.tag());
    w.f64s(m.as_slice());
    w.0
}

fn parse_table(path: &Path, bytes: &[u8], magic: &[u8; 4]) -> Result<(FeatureSet, Matrix)> {
    let mut r = Reader::open(path, bytes, magic)?;
    let n = r.usize()?;
    let d = r.usize()?;
    let set = r.feature_set()?;
    let data = r.f64s(n.checked_mul(d).ok_or_else(|| CliError::format(path, "size overflow"))?)?;
    r.finish()?;
    Ok((set, Matrix::from_vec(n, d, data)?))
}

pub fn feature_bytes(f: &MovieFeatureMatrix) -> Vec<u8> {
    table_bytes(FEATURE_MAGIC, f.set, &f.matrix)
}

pub fn parse_features(path: &Path, bytes: &[u8]) -> Result<MovieFeatureMatrix> {
    let (set, m) = parse_table(path, bytes, FEATURE_MAGIC)?;
    Ok(MovieFeatureMatrix::new(set, m)?)
}

pub fn load_features(path: &Path) -> Result<MovieFeatureMatrix> {
    parse_features(path, &read_file(path)?)
}

/// JSON manifest written next to a feature matrix: movie order and column
/// names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSidecar {
    pub feature_set: String,
    pub n_movies: usize,
    pub dim: usize,
    pub movie_ids: Vec<u64>,
    pub columns: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub missing_rating: Vec<u64>,
    #[serde(default)]
    pub out_of_vocabulary_tokens: usize,
}

pub fn sidecar_bytes(s: &FeatureSidecar) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(s).expect("sidecar serialises");
    out.push(b'\n');
    out
}

pub fn load_sidecar(path: &Path) -> Result<FeatureSidecar> {
    serde_json::from_slice(&read_file(path)?).map_err(|e| CliError::format(path, e.to_string()))
}

pub fn embedding_bytes(t: &MovieEmbeddingTable) -> Vec<u8> {
    table_bytes(EMBEDDING_MAGIC, t.source(), t.table())
}

pub fn parse_embeddings(path: &Path, bytes: &[u8]) -> Result<MovieEmbeddingTable> {
    let (set, m) = parse_table(path, bytes, EMBEDDING_MAGIC)?;
    Ok(MovieEmbeddingTable::new(set, m)?)
}

pub fn load_embeddings(path: &Path) -> Result<MovieEmbeddingTable> {
    parse_embeddings(path, &read_file(path)?)
}

/// `movieId,e1,…,eE` with shortest round-trip float formatting.
pub fn embedding_csv(t: &MovieEmbeddingTable, index: &MovieIndex) -> Result<String> {
    if index.len() != t.n_movies() {
        return Err(CliError::Config(format!(
            "movie index has {} entries, embedding table {}",
            index.len(),
            t.n_movies()
        )));
    }
    let mut out = String::from("movieId");
    (1..=t.dim()).for_each(|e| out.push_str(&format!(",e{e}")));
    out.push('\n');
    for (id, row) in index.ids().iter().zip(t.table().row_iter()) {
        out.push_str(&id.to_string());
        row.iter().for_each(|v| out.push_str(&format!(",{v}")));
        out.push('\n');
    }
    Ok(out)
}

/// A click matrix together with the movie ids its columns refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct ClickData {
    pub index: MovieIndex,
    pub clicks: BinaryClickMatrix,
}

pub fn clicks_bytes(data: &ClickData) -> Vec<u8> {
    let mut w = Writer::header(CLICKS_MAGIC);
    w.usize(data.index.len());
    data.index.ids().iter().for_each(|&id| w.u64(id));
    w.usize(data.clicks.n_users());
    for (row, &user) in data.clicks.roster().iter().enumerate() {
        let c = data.clicks.clicks(row);
        w.u64(user);
        w.usize(c.len());
        c.iter().for_each(|&m| w.u32(m));
    }
    w.0
}

pub fn parse_clicks(path: &Path, bytes: &[u8]) -> Result<ClickData> {
    let mut r = Reader::open(path, bytes, CLICKS_MAGIC)?;
    let n = r.count(8)?;
    let ids = (0..n).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
    let index = MovieIndex::new(ids.iter().copied());
    if index.ids() != ids.as_slice() {
        return Err(CliError::format(path, "movie ids are not strictly increasing"));
    }
    let users = r.count(16)?;
    let mut rows = Vec::with_capacity(users);
    for _ in 0..users {
        let user = r.u64()?;
        let k = r.count(4)?;
        rows.push((user, (0..k).map(|_| r.u32()).collect::<Result<Vec<_>>>()?));
    }
    r.finish()?;
    let clicks = BinaryClickMatrix::from_rows(n, rows)?;
    Ok(ClickData { index, clicks })
}

pub fn load_clicks(path: &Path) -> Result<ClickData> {
    parse_clicks(path, &read_file(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Standard,
    Movie,
    Hybrid,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Standard => "svae",
            ModelKind::Movie => "mvae",
            ModelKind::Hybrid => "hvae",
        }
    }

    fn tag(self) -> u8 {
        match self {
            ModelKind::Standard => 0,
            ModelKind::Movie => 1,
            ModelKind::Hybrid => 2,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        [ModelKind::Standard, ModelKind::Movie, ModelKind::Hybrid]
            .into_iter()
            .find(|k| k.tag() == tag)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoint {
    Standard(MlpVae),
    Movie(MlpVae),
    Hybrid(HybridVae),
}

impl Checkpoint {
    pub fn kind(&self) -> ModelKind {
        match self {
            Checkpoint::Standard(_) => ModelKind::Standard,
            Checkpoint::Movie(_) => ModelKind::Movie,
            Checkpoint::Hybrid(_) => ModelKind::Hybrid,
        }
    }
}

fn write_architecture(w: &mut Writer, model: &MlpVae) {
    let arch = model.architecture();
    w.u8(model.activation.tag());
    w.usize(arch.input);
    w.usize(arch.hidden.len());
    arch.hidden.iter().for_each(|&h| w.usize(h));
    w.usize(arch.latent);
    w.usize(arch.output);
}

fn read_architecture(r: &mut Reader<'_>) -> Result<(Activation, Architecture)> {
    let tag = r.u8()?;
    let activation = Activation::from_tag(tag).ok_or_else(|| CliError::format(r.path, format!("unknown activation tag {tag}")))?;
    let input = r.usize()?;
    let depth = r.count(8)?;
    let hidden = (0..depth).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
    let latent = r.usize()?;
    let output = r.usize()?;
    Ok((activation, Architecture::new(input, hidden, latent).with_output(output)))
}

pub fn checkpoint_bytes(ckpt: &Checkpoint) -> Vec<u8> {
    let mut w = Writer::header(CHECKPOINT_MAGIC);
    w.u8(ckpt.kind().tag());
    let params = match ckpt {
        Checkpoint::Standard(m) | Checkpoint::Movie(m) => {
            write_architecture(&mut w, m);
            m.flat_params()
        }
        Checkpoint::Hybrid(h) => {
            write_architecture(&mut w, &h.inner);
            w.u8(h.mode.tag());
            w.u8(h.source.tag());
            w.u8(u8::from(h.freeze_embeddings));
            w.usize(h.n_movies());
            w.usize(h.embedding_dim());
            h.flat_params()
        }
    };
    w.usize(params.len());
    w.f64s(&params);
    w.0
}

pub fn parse_checkpoint(path: &Path, bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader::open(path, bytes, CHECKPOINT_MAGIC)?;
    let tag = r.u8()?;
    let kind = ModelKind::from_tag(tag).ok_or_else(|| CliError::format(path, format!("unknown model kind {tag}")))?;
    let (activation, arch) = read_architecture(&mut r)?;
    let mut inner = MlpVae::zeros(&arch)?;
    inner.activation = activation;
    let mut ckpt = match kind {
        ModelKind::Standard => Checkpoint::Standard(inner),
        ModelKind::Movie => Checkpoint::Movie(inner),
        ModelKind::Hybrid => {
            let mode_tag = r.u8()?;
            let mode = AssemblyMode::from_tag(mode_tag)
                .ok_or_else(|| CliError::format(path, format!("unknown assembly mode {mode_tag}")))?;
            let source = r.feature_set()?;
            let freeze = match r.u8()? {
                0 => false,
                1 => true,
                v => return Err(CliError::format(path, format!("bad freeze flag {v}"))),
            };
            let n = r.usize()?;
            let e = r.usize()?;
            let reduction = (mode == AssemblyMode::DenseReduce).then(|| DenseReduction::zeros(e));
            let mut h = HybridVae::from_parts(Matrix::zeros(n, e), source, mode, reduction, inner)?;
            h.freeze_embeddings = freeze;
            Checkpoint::Hybrid(h)
        }
    };
    let declared = r.count(8)?;
    let params = r.f64s(declared)?;
    r.finish()?;
    let expected = match &ckpt {
        Checkpoint::Standard(m) | Checkpoint::Movie(m) => m.n_params(),
        Checkpoint::Hybrid(h) => h.n_params(),
    };
    if expected != declared {
        return Err(CliError::format(
            path,
            format!("architecture implies {expected} parameters, file holds {declared}"),
        ));
    }
    match &mut ckpt {
        Checkpoint::Standard(m) | Checkpoint::Movie(m) => m.set_flat_params(&params),
        Checkpoint::Hybrid(h) => h.set_flat_params(&params),
    }
    Ok(ckpt)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    parse_checkpoint(path, &read_file(path)?)
}
