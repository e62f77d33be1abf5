//! Movie feature sets: genre multi-hot, top-k genome tags, the IMDb-derived
//! block (language and certification one-hots, rating, lexicon and word
//! vector averages of the plot), and random embeddings for ablations.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::{MovieId, MovieIndex};
use crate::error::{Error, Result};
use crate::mvae::MovieEmbeddingTable;
use crate::ndmath::{Matrix, RngStream};

pub const NO_GENRES: &str = "(no genres listed)";
pub const GENOME_TOP_K: usize = 20;
pub const LIWC_DIM: usize = 64;
pub const VAD_DIM: usize = 3;
pub const WORD_VECTOR_DIM: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FeatureSet {
    Genre,
    Genome,
    Imdb,
    Random,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 4] = [FeatureSet::Genre, FeatureSet::Genome, FeatureSet::Imdb, FeatureSet::Random];

    pub fn name(self) -> &'static str {
        match self {
            FeatureSet::Genre => "genre",
            FeatureSet::Genome => "genome",
            FeatureSet::Imdb => "imdb",
            FeatureSet::Random => "random",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }

    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.get(usize::from(tag)).copied()
    }
}

/// N × D feature rows aligned with a [`MovieIndex`].
#[derive(Debug, Clone, PartialEq)]
pub struct MovieFeatureMatrix {
    pub set: FeatureSet,
    pub matrix: Matrix,
}

impl MovieFeatureMatrix {
    pub fn new(set: FeatureSet, matrix: Matrix) -> Result<Self> {
        if !matrix.is_finite() {
            return Err(Error::Invalid("feature matrix contains non-finite values".into()));
        }
        Ok(Self { set, matrix })
    }

    pub fn n_movies(&self) -> usize {
        self.matrix.rows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }
}

/// One line of a movies listing.
#[derive(Debug, Clone, PartialEq)]
pub struct MovieGenres {
    pub movie: MovieId,
    pub genres: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenreFeatures {
    pub features: MovieFeatureMatrix,
    /// Column labels, sorted.
    pub vocabulary: Vec<String>,
}

/// Multi-hot genre rows. The vocabulary is every distinct genre in `movies`
/// except the "(no genres listed)" marker, which encodes as an all-zero row.
pub fn encode_genres(movies: &[MovieGenres], index: &MovieIndex) -> Result<GenreFeatures> {
    let vocabulary: Vec<String> = movies
        .iter()
        .flat_map(|m| m.genres.iter())
        .filter(|g| g.as_str() != NO_GENRES && !g.is_empty())
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let by_movie: BTreeMap<MovieId, &MovieGenres> = movies.iter().map(|m| (m.movie, m)).collect();
    let mut matrix = Matrix::zeros(index.len(), vocabulary.len());
    for (row, &id) in index.ids().iter().enumerate() {
        let entry = by_movie.get(&id).ok_or(Error::MissingMovie(id))?;
        for g in &entry.genres {
            if let Ok(col) = vocabulary.binary_search(g) {
                matrix[(row, col)] = 1.0;
            }
        }
    }
    Ok(GenreFeatures {
        features: MovieFeatureMatrix::new(FeatureSet::Genre, matrix)?,
        vocabulary,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenomeScore {
    pub movie: MovieId,
    pub tag: u64,
    pub relevance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenomeFeatures {
    pub features: MovieFeatureMatrix,
    /// Tag id of each column, ascending.
    pub tag_ids: Vec<u64>,
}

/// Marks each movie's `top_k` most relevant tags (ties: smaller tag id).
/// Columns follow `tag_ids` in ascending order; movies without scores get a
/// zero row.
pub fn encode_genome_top_k(
    scores: &[GenomeScore],
    tag_ids: &[u64],
    index: &MovieIndex,
    top_k: usize,
) -> Result<GenomeFeatures> {
    let mut tags = tag_ids.to_vec();
    tags.sort_unstable();
    tags.dedup();
    let mut per_movie: BTreeMap<usize, Vec<(u64, f64)>> = BTreeMap::new();
    for s in scores {
        if !s.relevance.is_finite() {
            return Err(Error::Invalid(format!("non-finite relevance for movie {} tag {}", s.movie, s.tag)));
        }
        if tags.binary_search(&s.tag).is_err() {
            return Err(Error::Invalid(format!("genome score references unknown tag {}", s.tag)));
        }
        if let Some(row) = index.index_of(s.movie) {
            per_movie.entry(row).or_default().push((s.tag, s.relevance));
        }
    }
    let mut matrix = Matrix::zeros(index.len(), tags.len());
    for (row, mut scored) in per_movie {
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for &(tag, _) in scored.iter().take(top_k) {
            let col = tags.binary_search(&tag).expect("checked above");
            matrix[(row, col)] = 1.0;
        }
    }
    Ok(GenomeFeatures {
        features: MovieFeatureMatrix::new(FeatureSet::Genome, matrix)?,
        tag_ids: tags,
    })
}

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Case-insensitive token → vector map with a fixed dimension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Lexicon {
    dim: usize,
    entries: BTreeMap<String, Vec<f64>>,
}

impl Lexicon {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: BTreeMap::new(),
        }
    }

    /// Adds or replaces a token's vector.
    pub fn insert(&mut self, token: &str, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Invalid(format!(
                "lexicon entry {token:?} has {} values, expected {}",
                vector.len(),
                self.dim
            )));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("lexicon entry {token:?} has non-finite values")));
        }
        self.entries.insert(token.to_lowercase(), vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.entries.get(&token.to_lowercase()).map(Vec::as_slice)
    }
}

/// Pre-trained word vectors; a [`Lexicon`] pinned to 300 dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVectorTable(Lexicon);

impl WordVectorTable {
    pub fn new() -> Self {
        Self(Lexicon::new(WORD_VECTOR_DIM))
    }

    pub fn insert(&mut self, token: &str, vector: Vec<f64>) -> Result<()> {
        self.0.insert(token, vector)
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.0
    }
}

impl Default for WordVectorTable {
    fn default() -> Self {
        Self::new()
    }
}

impl TryFrom<Lexicon> for WordVectorTable {
    type Error = Error;

    fn try_from(lex: Lexicon) -> Result<Self> {
        if lex.dim() != WORD_VECTOR_DIM {
            return Err(Error::Invalid(format!(
                "word vectors must have {WORD_VECTOR_DIM} dimensions, got {}",
                lex.dim()
            )));
        }
        Ok(Self(lex))
    }
}

/// Mean vector of the in-vocabulary tokens of a text.
#[derive(Debug, Clone, PartialEq)]
pub struct TextAverage {
    pub vector: Vec<f64>,
    pub matched: usize,
    pub out_of_vocabulary: usize,
}

pub fn average_tokens(text: &str, lex: &Lexicon) -> TextAverage {
    let mut sum = vec![0.0; lex.dim()];
    let mut matched = 0;
    let mut oov = 0;
    for token in tokenize(text) {
        match lex.get(&token) {
            Some(v) => {
                matched += 1;
                sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
            }
            None => oov += 1,
        }
    }
    if matched > 0 {
        let n = matched as f64;
        sum.iter_mut().for_each(|s| *s /= n);
    }
    TextAverage {
        vector: sum,
        matched,
        out_of_vocabulary: oov,
    }
}

pub fn average_lexicon(text: &str, lex: &Lexicon) -> Vec<f64> {
    average_tokens(text, lex).vector
}

pub fn average_word_vectors(text: &str, table: &WordVectorTable) -> TextAverage {
    average_tokens(text, table.lexicon())
}

/// One movie's metadata snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct MovieMetadata {
    pub movie: MovieId,
    pub language: String,
    pub certification: String,
    pub imdb_rating: Option<f64>,
    pub plot: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImdbFeatures {
    pub features: MovieFeatureMatrix,
    pub languages: Vec<String>,
    pub certifications: Vec<String>,
    /// Movies whose rating was missing and encoded as 0.
    pub missing_rating: Vec<MovieId>,
    pub out_of_vocabulary_tokens: usize,
}

impl ImdbFeatures {
    /// `|languages| + |certifications| + 1 + 64 + 3 + 300`.
    pub fn expected_dim(n_languages: usize, n_certifications: usize) -> usize {
        n_languages + n_certifications + 1 + LIWC_DIM + VAD_DIM + WORD_VECTOR_DIM
    }
}

fn vocabulary<'a>(values: impl Iterator<Item = &'a str>) -> Vec<String> {
    values
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(ToString::to_string)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Rows of `[language one-hot | certification one-hot | rating | LIWC mean |
/// VAD mean | word-vector mean]`. Blank language or certification values
/// leave their one-hot block empty.
pub fn assemble_imdb_features(
    metadata: &[MovieMetadata],
    liwc: &Lexicon,
    vad: &Lexicon,
    word_vectors: &WordVectorTable,
    index: &MovieIndex,
) -> Result<ImdbFeatures> {
    if liwc.dim() != LIWC_DIM || vad.dim() != VAD_DIM {
        return Err(Error::Invalid(format!(
            "LIWC lexicon must be {LIWC_DIM}-d and VAD lexicon {VAD_DIM}-d, got {} and {}",
            liwc.dim(),
            vad.dim()
        )));
    }
    let languages = vocabulary(metadata.iter().map(|m| m.language.as_str()));
    let certifications = vocabulary(metadata.iter().map(|m| m.certification.as_str()));
    let by_movie: BTreeMap<MovieId, &MovieMetadata> = metadata.iter().map(|m| (m.movie, m)).collect();

    let dim = ImdbFeatures::expected_dim(languages.len(), certifications.len());
    let cert_offset = languages.len();
    let rating_col = cert_offset + certifications.len();
    let liwc_offset = rating_col + 1;
    let vad_offset = liwc_offset + LIWC_DIM;
    let w2v_offset = vad_offset + VAD_DIM;

    let mut matrix = Matrix::zeros(index.len(), dim);
    let mut missing_rating = Vec::new();
    let mut oov = 0;
    for (row, &id) in index.ids().iter().enumerate() {
        let meta = by_movie.get(&id).ok_or(Error::MissingMovie(id))?;
        let out = matrix.row_mut(row);
        if let Ok(c) = languages.binary_search_by(|l| l.as_str().cmp(meta.language.trim())) {
            out[c] = 1.0;
        }
        if let Ok(c) = certifications.binary_search_by(|l| l.as_str().cmp(meta.certification.trim())) {
            out[cert_offset + c] = 1.0;
        }
        match meta.imdb_rating {
            Some(r) if r.is_finite() => out[rating_col] = r,
            _ => missing_rating.push(id),
        }
        out[liwc_offset..vad_offset].copy_from_slice(&average_lexicon(&meta.plot, liwc));
        out[vad_offset..w2v_offset].copy_from_slice(&average_lexicon(&meta.plot, vad));
        let w = average_word_vectors(&meta.plot, word_vectors);
        oov += w.out_of_vocabulary;
        out[w2v_offset..].copy_from_slice(&w.vector);
    }
    Ok(ImdbFeatures {
        features: MovieFeatureMatrix::new(FeatureSet::Imdb, matrix)?,
        languages,
        certifications,
        missing_rating,
        out_of_vocabulary_tokens: oov,
    })
}

/// N × `dim` table of i.i.d. N(0, 1) entries.
pub fn random_embeddings(index: &MovieIndex, dim: usize, seed: u64) -> Result<MovieEmbeddingTable> {
    if dim == 0 {
        return Err(Error::Invalid("embedding dimension must be at least 1".into()));
    }
    let mut rng = RngStream::substream(seed, "random-embeddings");
    let data = (0..index.len() * dim).map(|_| rng.standard_normal()).collect();
    MovieEmbeddingTable::new(FeatureSet::Random, Matrix::from_vec(index.len(), dim, data)?)
}
