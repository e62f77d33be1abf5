//! CSV readers for ratings, movie catalogues, genome tags, metadata and
//! token lexicons. Every error carries the file and line it came from.

use std::fs::File;
use std::path::Path;
use std::str::FromStr;

use hyvae_core::dataset::{InteractionsTable, MovieId, Rating};
use hyvae_core::features::{GenomeScore, Lexicon, MovieGenres, MovieMetadata};

use crate::error::{CliError, Result};

pub const RATINGS_HEADER: [&str; 4] = ["userId", "movieId", "rating", "timestamp"];
pub const MOVIES_HEADER: [&str; 3] = ["movieId", "title", "genres"];
pub const GENOME_SCORES_HEADER: [&str; 3] = ["movieId", "tagId", "relevance"];
pub const GENOME_TAGS_HEADER: [&str; 2] = ["tagId", "tag"];
pub const METADATA_HEADER: [&str; 5] = ["movieId", "language", "certification", "imdb_rating", "plot"];

fn csv_error(path: &Path, err: csv::Error) -> CliError {
    let line = err.position().map_or(0, |p| p.line());
    match err.into_kind() {
        csv::ErrorKind::Io(e) => CliError::io(path, e),
        kind => CliError::parse(path, line, format!("{kind:?}")),
    }
}

fn open_with_header(path: &Path, expected: &[&str]) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = reader.headers().map_err(|e| csv_error(path, e))?;
    if header.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(CliError::format(
            path,
            format!("expected header `{}`, found `{}`", expected.join(","), header.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    Ok(reader)
}

/// Iterates data records with their 1-based line numbers.
fn records(path: &Path, expected: &[&str]) -> Result<impl Iterator<Item = Result<(u64, csv::StringRecord)>>> {
    let reader = open_with_header(path, expected)?;
    let owned = path.to_path_buf();
    Ok(reader.into_records().map(move |r| {
        let rec = r.map_err(|e| csv_error(&owned, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        Ok((line, rec))
    }))
}

fn field<T: FromStr>(path: &Path, line: u64, rec: &csv::StringRecord, i: usize, name: &str) -> Result<T> {
    let raw = rec.get(i).unwrap_or("").trim();
    raw.parse()
        .map_err(|_| CliError::parse(path, line, format!("cannot parse {name} from {raw:?}")))
}

pub fn load_ratings(path: &Path) -> Result<InteractionsTable> {
    let mut out = Vec::new();
    for item in records(path, &RATINGS_HEADER)? {
        let (line, rec) = item?;
        let stars: f64 = field(path, line, &rec, 2, "rating")?;
        if !(0.5..=5.0).contains(&stars) {
            return Err(CliError::parse(path, line, format!("rating {stars} outside [0.5, 5]")));
        }
        out.push(Rating {
            user: field(path, line, &rec, 0, "userId")?,
            movie: field(path, line, &rec, 1, "movieId")?,
            stars,
            timestamp: field(path, line, &rec, 3, "timestamp")?,
        });
    }
    Ok(InteractionsTable::from_records(out)?)
}

/// `movies.csv` rows with their pipe-separated genre lists.
pub fn load_movies(path: &Path) -> Result<Vec<MovieGenres>> {
    let mut out = Vec::new();
    for item in records(path, &MOVIES_HEADER)? {
        let (line, rec) = item?;
        let genres = rec.get(2).unwrap_or("").trim();
        out.push(MovieGenres {
            movie: field(path, line, &rec, 0, "movieId")?,
            genres: genres.split('|').filter(|g| !g.is_empty()).map(str::to_string).collect(),
        });
    }
    Ok(out)
}

pub fn load_genome_scores(path: &Path) -> Result<Vec<GenomeScore>> {
    let mut out = Vec::new();
    for item in records(path, &GENOME_SCORES_HEADER)? {
        let (line, rec) = item?;
        out.push(GenomeScore {
            movie: field(path, line, &rec, 0, "movieId")?,
            tag: field(path, line, &rec, 1, "tagId")?,
            relevance: field(path, line, &rec, 2, "relevance")?,
        });
    }
    Ok(out)
}

/// `(tagId, tag)` pairs in file order.
pub fn load_genome_tags(path: &Path) -> Result<Vec<(u64, String)>> {
    let mut out = Vec::new();
    for item in records(path, &GENOME_TAGS_HEADER)? {
        let (line, rec) = item?;
        out.push((field(path, line, &rec, 0, "tagId")?, rec.get(1).unwrap_or("").to_string()));
    }
    Ok(out)
}

pub fn load_metadata(path: &Path) -> Result<Vec<MovieMetadata>> {
    let mut out = Vec::new();
    for item in records(path, &METADATA_HEADER)? {
        let (line, rec) = item?;
        let rating = rec.get(3).unwrap_or("").trim();
        let imdb_rating = if rating.is_empty() || rating.eq_ignore_ascii_case("nan") {
            None
        } else {
            Some(field(path, line, &rec, 3, "imdb_rating")?)
        };
        out.push(MovieMetadata {
            movie: field::<MovieId>(path, line, &rec, 0, "movieId")?,
            language: rec.get(1).unwrap_or("").trim().to_string(),
            certification: rec.get(2).unwrap_or("").trim().to_string(),
            imdb_rating,
            plot: rec.get(4).unwrap_or("").to_string(),
        });
    }
    Ok(out)
}

/// Header-less `token,v1,…,vd` lines. The dimension is taken from the first
/// line unless `dim` pins it.
pub fn load_lexicon(path: &Path, dim: Option<usize>) -> Result<Lexicon> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(file);
    let mut lexicon: Option<Lexicon> = dim.map(Lexicon::new);
    for r in reader.records() {
        let rec = r.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let d = rec.len().saturating_sub(1);
        let lex = lexicon.get_or_insert_with(|| Lexicon::new(d));
        if d != lex.dim() || d == 0 {
            return Err(CliError::parse(path, line, format!("expected {} values after the token, found {d}", lex.dim())));
        }
        let vector = (1..rec.len())
            .map(|i| field(path, line, &rec, i, "vector component"))
            .collect::<Result<Vec<f64>>>()?;
        lex.insert(&rec[0], vector).map_err(|e| CliError::parse(path, line, e.to_string()))?;
    }
    lexicon.ok_or_else(|| CliError::format(path, "lexicon file is empty"))
}
