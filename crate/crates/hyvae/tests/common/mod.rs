#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hyvae_core::dataset::BinaryClickMatrix;
use hyvae_core::{Matrix, RngStream};

pub const GENRES: [&str; 18] = [
    "Action", "Adventure", "Animation", "Children", "Comedy", "Crime", "Documentary", "Drama", "Fantasy", "Film-Noir",
    "Horror", "Musical", "Mystery", "Romance", "Sci-Fi", "Thriller", "War", "Western",
];

pub const WORDS: [&str; 10] = ["love", "war", "space", "family", "murder", "friend", "dark", "funny", "journey", "city"];

/// Bookkeeping of the toy dataset, computed while generating it.
#[derive(Debug, Clone)]
pub struct ToyTruth {
    pub n_rating_rows: usize,
    pub n_ratings: usize,
    pub n_users: usize,
    pub n_movies: usize,
    pub n_clicks: usize,
    pub n_genres: usize,
    pub dir: PathBuf,
}

pub const TOY_USERS: u64 = 90;
pub const TOY_MOVIES: u64 = 40;

/// Users fall in three taste groups (id mod 3); movies likewise. In-group
/// ratings are mostly high, others low, with a few 3.5s on the boundary.
pub fn write_toy_dataset(dir: &Path) -> ToyTruth {
    let mut rng = RngStream::new(2024);
    let mut rows: Vec<(u64, u64, f64, i64)> = Vec::new();
    for user in 1..=TOY_USERS {
        for movie in 1..=TOY_MOVIES {
            let same = user % 3 == movie % 3;
            let u = rng.next_f64();
            let stars = match (same, u) {
                (true, u) if u < 0.75 => 4.5,
                (true, u) if u < 0.85 => 3.5,
                (false, u) if u < 0.05 => 4.0,
                (false, u) if u < 0.4 => 2.0,
                _ => continue,
            };
            rows.push((user, movie * 10, stars, (user * 1000 + movie) as i64));
        }
        // every movie gets at least one rating from user 1
        if user == 1 {
            for movie in 1..=TOY_MOVIES {
                if !rows.iter().any(|r| r.0 == 1 && r.1 == movie * 10) {
                    rows.push((1, movie * 10, 1.0, movie as i64));
                }
            }
        }
    }
    // a re-rating: the later timestamp wins even though it comes first
    rows.insert(0, (2, 20, 5.0, 99_999_999));
    rows.push((2, 20, 1.0, 5));
    // a rating for a movie missing from the catalogue
    rows.push((3, 50_000, 5.0, 1));

    let mut latest: BTreeMap<(u64, u64), (i64, f64)> = BTreeMap::new();
    for &(u, m, s, t) in &rows {
        let e = latest.entry((u, m)).or_insert((t, s));
        if t >= e.0 {
            *e = (t, s);
        }
    }
    let catalogued = |m: u64| m % 10 == 0 && m / 10 >= 1 && m / 10 <= TOY_MOVIES;
    let n_clicks = latest.iter().filter(|(k, v)| catalogued(k.1) && v.1 > 3.5).count();
    let users: std::collections::BTreeSet<u64> = latest.keys().map(|k| k.0).collect();

    let mut ratings = String::from("userId,movieId,rating,timestamp\n");
    for (u, m, s, t) in &rows {
        let _ = writeln!(ratings, "{u},{m},{s},{t}");
    }
    std::fs::write(dir.join("ratings.csv"), ratings).unwrap();

    let mut movies = String::from("movieId,title,genres\n");
    let mut used = std::collections::BTreeSet::new();
    for movie in 1..=TOY_MOVIES {
        let genres = if movie == TOY_MOVIES {
            "(no genres listed)".to_string()
        } else {
            let a = GENRES[(movie as usize) % 18];
            let b = GENRES[(movie as usize * 7) % 18];
            used.insert(a);
            used.insert(b);
            if a == b { a.to_string() } else { format!("{a}|{b}") }
        };
        let _ = writeln!(movies, "{},\"Movie {movie}, The ({})\",{genres}", movie * 10, 1990 + movie);
    }
    // catalogued but never rated
    let _ = writeln!(movies, "9990,Unseen (2000),Drama");
    std::fs::write(dir.join("movies.csv"), movies).unwrap();

    let mut tags = String::from("tagId,tag\n");
    for t in 1..=30 {
        let _ = writeln!(tags, "{t},tag {t}");
    }
    std::fs::write(dir.join("genome-tags.csv"), tags).unwrap();
    let mut scores = String::from("movieId,tagId,relevance\n");
    for movie in 1..=TOY_MOVIES {
        for t in 1..=30 {
            let _ = writeln!(scores, "{},{t},{:.5}", movie * 10, rng.next_f64());
        }
    }
    std::fs::write(dir.join("genome-scores.csv"), scores).unwrap();

    let mut meta = String::from("movieId,language,certification,imdb_rating,plot\n");
    let langs = ["en", "fr", "de"];
    let certs = ["G", "PG", "PG-13", "R"];
    for movie in 1..=TOY_MOVIES {
        let i = movie as usize;
        let rating = if i % 7 == 0 { String::new() } else { format!("{:.1}", 5.0 + (i % 5) as f64) };
        let plot = format!("A {} {}, and {} unknownword.", WORDS[i % 10], WORDS[(i * 3) % 10], WORDS[(i * 7) % 10]);
        let _ = writeln!(meta, "{},{},{},{rating},\"{plot}\"", movie * 10, langs[i % 3], certs[i % 4]);
    }
    std::fs::write(dir.join("metadata.csv"), meta).unwrap();

    for (name, dim) in [("liwc.csv", 64), ("vad.csv", 3), ("word-vectors.csv", 300)] {
        let mut lex = String::new();
        for w in WORDS {
            lex.push_str(w);
            for _ in 0..dim {
                let _ = write!(lex, ",{:.4}", rng.next_f64());
            }
            lex.push('\n');
        }
        std::fs::write(dir.join(name), lex).unwrap();
    }

    ToyTruth {
        n_rating_rows: rows.len(),
        n_ratings: latest.len(),
        n_users: users.len(),
        n_movies: TOY_MOVIES as usize,
        n_clicks,
        n_genres: used.len(),
        dir: dir.to_path_buf(),
    }
}

/// A config over the toy dataset with small models; `extra` is appended as
/// additional TOML (later sections must not repeat earlier ones).
pub fn toy_config(truth: &ToyTruth, sections: &[(&str, &str)]) -> PathBuf {
    let mut base: BTreeMap<&str, String> = BTreeMap::new();
    base.insert(
        "paths",
        "ratings = \"ratings.csv\"\nmovies = \"movies.csv\"\ngenome_scores = \"genome-scores.csv\"\n\
         genome_tags = \"genome-tags.csv\"\nmetadata = \"metadata.csv\"\nliwc = \"liwc.csv\"\nvad = \"vad.csv\"\n\
         word_vectors = \"word-vectors.csv\"\nout = \"out\"\n"
            .into(),
    );
    base.insert("data", "folds = 3\nval_size = 10\ntest_size = 10\n".into());
    base.insert("train", "learning_rate = 0.01\nbatch_size = 16\nepochs = 20\n".into());
    base.insert("svae", "hidden = [16]\nlatent = 4\n".into());
    base.insert("mvae", "hidden = [8]\nlatent = 3\n".into());
    base.insert("hvae", "hidden = [16]\nlatent = 4\n".into());
    base.insert("viz", "projection = \"tsne\"\nperplexity = 3.0\ntsne_iterations = 300\n".into());
    for (section, body) in sections {
        base.insert(section, body.to_string());
    }
    let mut text = String::from("seed = 7\n");
    for (section, body) in base {
        let _ = write!(text, "\n[{section}]\n{body}");
    }
    let path = truth.dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}

pub fn hyvae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hyvae")).args(args).output().expect("binary runs")
}

pub fn hyvae_ok(args: &[&str]) -> String {
    let out = hyvae(args);
    assert!(
        out.status.success(),
        "hyvae {args:?} failed ({:?}):\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Every file under `root`, relative path → bytes.
pub fn snapshot(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Users `0..users/2` click movies of the first half, the rest the second
/// half; each in-block click is kept with probability `density`.
pub fn planted_blocks(users: usize, movies: usize, density: f64, seed: u64) -> BinaryClickMatrix {
    let mut rng = RngStream::new(seed);
    let half = movies / 2;
    let rows = (0..users).map(|u| {
        let block = if u < users / 2 { 0..half } else { half..movies };
        let mut clicks: Vec<u32> = block.clone().filter(|_| rng.next_f64() < density).map(|m| m as u32).collect();
        if clicks.is_empty() {
            clicks.push(block.start as u32);
        }
        (u as u64, clicks)
    });
    BinaryClickMatrix::from_rows(movies, rows.collect::<Vec<_>>()).unwrap()
}

/// Clicks generated from 3-d movie attributes: movies belong to one of three
/// attribute clusters, users prefer one cluster, and
/// P(click) = sigmoid(scale · ⟨pref, attr⟩ − offset).
pub struct AttributeWorld {
    pub attributes: Matrix,
    pub features: Matrix,
    pub clicks: BinaryClickMatrix,
}

pub fn attribute_world(users: usize, movies: usize, seed: u64) -> AttributeWorld {
    let mut rng = RngStream::new(seed);
    let mut attributes = Matrix::zeros(movies, 3);
    for i in 0..movies {
        for d in 0..3 {
            attributes[(i, d)] = if d == i % 3 { 1.0 } else { 0.0 } + 0.15 * rng.standard_normal();
        }
    }
    // features: noisy nonlinear expansion of the attributes into [0, 1]
    let d_feat = 12;
    let mix = Matrix::from_vec(3, d_feat, (0..3 * d_feat).map(|_| rng.standard_normal()).collect()).unwrap();
    let mut features = attributes.matmul(&mix).unwrap();
    for v in features.as_mut_slice() {
        *v = 1.0 / (1.0 + (-*v).exp());
    }
    let rows: Vec<(u64, Vec<u32>)> = (0..users)
        .map(|u| {
            let mut pref = [0.0; 3];
            pref[u % 3] = 1.0;
            for p in &mut pref {
                *p += 0.2 * rng.standard_normal();
            }
            let mut clicks: Vec<u32> = (0..movies)
                .filter(|&i| {
                    let s: f64 = (0..3).map(|d| pref[d] * attributes[(i, d)]).sum();
                    let p = 1.0 / (1.0 + (-(6.0 * s - 4.0)).exp());
                    rng.next_f64() < p
                })
                .map(|i| i as u32)
                .collect();
            if clicks.len() < 2 {
                clicks = vec![(u % 3) as u32, (u % 3 + 3) as u32];
            }
            (u as u64, clicks)
        })
        .collect();
    AttributeWorld {
        attributes,
        features,
        clicks: BinaryClickMatrix::from_rows(movies, rows).unwrap(),
    }
}
