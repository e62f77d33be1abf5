mod common;

use std::path::Path;

use common::*;
use hyvae::formats::{self, Checkpoint};
use hyvae_core::vae::{Architecture, MlpVae};

fn cfg_arg(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

fn csv_rows(p: impl AsRef<Path>) -> Vec<Vec<String>> {
    read(p).lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn prepare_summary_matches_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let truth = write_toy_dataset(dir.path());
    let cfg = toy_config(&truth, &[]);
    let stdout = hyvae_ok(&["prepare", "--config", &cfg_arg(&cfg)]);
    let expected = format!(
        "ratings={} users={} movies={} clicks={}",
        truth.n_ratings, truth.n_users, truth.n_movies, truth.n_clicks
    );
    assert!(stdout.contains(&expected), "{stdout}\nexpected {expected}");
    assert_eq!(stdout.matches("test=10").count(), 3);

    let first = snapshot(&dir.path().join("out"));
    hyvae_ok(&["prepare", "--config", &cfg_arg(&cfg)]);
    assert_eq!(first, snapshot(&dir.path().join("out")));

    let folds: Vec<Vec<Vec<String>>> = (0..3).map(|f| csv_rows(dir.path().join(format!("out/splits/fold{f}.csv")))).collect();
    let tests: Vec<std::collections::BTreeSet<String>> = folds
        .iter()
        .map(|rows| rows.iter().filter(|r| r[1] == "test").map(|r| r[0].clone()).collect())
        .collect();
    assert!(tests[0].is_disjoint(&tests[1]) && tests[1].is_disjoint(&tests[2]) && tests[0].is_disjoint(&tests[2]));
}

#[test]
fn missing_ratings_fails_before_output() {
    let dir = tempfile::tempdir().unwrap();
    let truth = write_toy_dataset(dir.path());
    std::fs::remove_file(dir.path().join("ratings.csv")).unwrap();
    let cfg = toy_config(&truth, &[]);
    let out = hyvae(&["prepare", "--config", &cfg_arg(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ratings"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn malformed_rating_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let truth = write_toy_dataset(dir.path());
    std::fs::write(dir.path().join("ratings.csv"), "userId,movieId,rating,timestamp\n1,10,4,1\n1,20,abc,2\n").unwrap();
    let cfg = toy_config(&truth, &[]);
    let out = hyvae(&["prepare", "--config", &cfg_arg(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ratings.csv:3:"));
}

#[test]
fn seed_is_required() {
    let dir = tempfile::tempdir().unwrap();
    let truth = write_toy_dataset(dir.path());
    let cfg = toy_config(&truth, &[]);
    let text = read(&cfg).replacen("seed = 7\n", "", 1);
    std::fs::write(&cfg, text).unwrap();
    assert_eq!(hyvae(&["prepare", "--config", &cfg_arg(&cfg)]).status.code(), Some(1));
    hyvae_ok(&["prepare", "--config", &cfg_arg(&cfg), "--seed", "3"]);
}

#[test]
fn feature_sets() {
    let dir = tempfile::tempdir().unwrap();
    let truth = write_toy_dataset(dir.path());
    let cfg = toy_config(&truth, &[]);
    let c = cfg_arg(&cfg);
    hyvae_ok(&["prepare", "--config", &c]);
    hyvae_ok(&["features", "--config", &c]);
    let sidecar = formats::load_sidecar(&dir.path().join("out/features/genre.json")).unwrap();
    assert_eq!(sidecar.dim, truth.n_genres);
    assert_eq!(sidecar.columns.len(), truth.n_genres);
    let f = formats::load_features(&dir.path().join("out/features/genre.hyvf")).unwrap();
    assert_eq!(f.matrix.shape(), (truth.n_movies, truth.n_genres));

    let genome = toy_config(&truth, &[("features", "set = \"genome\"\ngenome_top_k = 5\n")]);
    hyvae_ok(&["features", "--config", &cfg_arg(&genome)]);
    let g = formats::load_features(&dir.path().join("out/features/genome.hyvf")).unwrap();
    for row in g.matrix.row_iter() {
        assert_eq!(row.iter().sum::<f64>(), 5.0);
    }

    let imdb = toy_config(&truth, &[("features", "set = \"imdb\"\n")]);
    hyvae_ok(&["features", "--config", &cfg_arg(&imdb)]);
    let s = formats::load_sidecar(&dir.path().join("out/features/imdb.json")).unwrap();
    assert_eq!(s.dim, 3 + 4 + 1 + 64 + 3 + 300);
    assert_eq!(s.missing_rating.len(), 5);

    let random = toy_config(&truth, &[("features", "set = \"random\"\n")]);
    hyvae_ok(&["features", "--config", &cfg_arg(&random)]);
    assert!(dir.path().join("out/embeddings/random.hyve").is_file());
    assert!(dir.path().join("out/embeddings/random.csv").is_file());
    assert!(!dir.path().join("out/features/random.hyvf").exists());
    assert_eq!(hyvae(&["train-mvae", "--config", &cfg_arg(&random)]).status.code(), Some(1));

    std::fs::remove_file(dir.path().join("liwc.csv")).unwrap();
    let imdb = toy_config(&truth, &[("features", "set = \"imdb\"\n")]);
    let out = hyvae(&["features", "--config", &cfg_arg(&imdb)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("liwc"));
}

#[test]
fn train_svae_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let truth = write_toy_dataset(dir.path());
    let cfg = toy_config(&truth, &[]);
    let c = cfg_arg(&cfg);
    hyvae_ok(&["prepare", "--config", &c]);
    hyvae_ok(&["train-svae", "--config", &c]);
    let log = csv_rows(dir.path().join("out/logs/svae-fold0.csv"));
    let totals: Vec<f64> = log.iter().map(|r| r[4].parse().unwrap()).collect();
    assert!(totals.iter().all(|t| t.is_finite()));
    assert!(totals.last() < totals.first());

    let ckpt = dir.path().join("out/models/svae-fold0.hyvm");
    let bytes = std::fs::read(&ckpt).unwrap();
    hyvae_ok(&["train-svae", "--config", &c]);
    assert_eq!(bytes, std::fs::read(&ckpt).unwrap());

    hyvae_ok(&["eval", "--config", &c]);
    let reports = dir.path().join("out/reports");
    let mut means = vec![0.0; 3];
    for fold in 0..3 {
        for scheme in ["eval1", "eval2"] {
            assert!(reports.join(format!("svae-{scheme}-fold{fold}.csv")).is_file());
        }
        for (i, row) in csv_rows(reports.join(format!("svae-eval1-fold{fold}.csv"))).iter().enumerate() {
            means[i] += row[4].parse::<f64>().unwrap() / 3.0;
        }
    }
    let agg = csv_rows(reports.join("svae-aggregate.csv"));
    assert_eq!(agg[0][0], "svae");
    assert_eq!(agg[0][1], "eval1");
    assert_eq!(agg[0][2], "3");
    for (i, m) in means.iter().enumerate() {
        assert!((agg[0][3 + i].parse::<f64>().unwrap() - m).abs() < 1e-12);
    }
    assert!(read(reports.join("table.csv")).starts_with("model,scheme,folds,NDCG@100,Recall@20,Recall@50\n"));
}

#[test]
fn one_scheme_one_fold_two_reports() {
    let dir = tempfile::tempdir().unwrap();
    let truth = write_toy_dataset(dir.path());
    let cfg = toy_config(&truth, &[("data", "folds = 1\nval_size = 10\ntest_size = 10\n")]);
    let c = cfg_arg(&cfg);
    hyvae_ok(&["prepare", "--config", &c]);
    hyvae_ok(&["train-svae", "--config", &c]);
    hyvae_ok(&["eval", "--config", &c]);
    let reports: Vec<_> = std::fs::read_dir(dir.path().join("out/reports"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.contains("-fold"))
        .collect();
    assert_eq!(reports.len(), 2, "{reports:?}");
}

/// Identity network: no hidden layer, K = N, mean = x and logits = z.
fn identity_svae(n: usize) -> MlpVae {
    let mut m = MlpVae::zeros(&Architecture::new(n, vec![], n)).unwrap();
    for i in 0..n {
        m.encoder[0].weight[(i, i)] = 1.0;
        m.decoder[0].weight[(i, i)] = 1.0;
    }
    m
}

#[test]
fn oracle_checkpoint_scores_one_on_full_history() {
    let dir = tempfile::tempdir().unwrap();
    let truth = write_toy_dataset(dir.path());
    let cfg = toy_config(&truth, &[("eval", "schemes = [\"eval1\"]\n")]);
    let c = cfg_arg(&cfg);
    hyvae_ok(&["prepare", "--config", &c]);
    let path = dir.path().join("oracle.hyvm");
    formats::write_file(&path, &formats::checkpoint_bytes(&Checkpoint::Standard(identity_svae(truth.n_movies)))).unwrap();
    hyvae_ok(&["eval", "--config", &c, "--checkpoint", &cfg_arg(&path)]);
    for fold in 0..3 {
        for row in csv_rows(dir.path().join(format!("out/reports/oracle-eval1-fold{fold}.csv"))) {
            assert_eq!(row[4], "1", "{row:?}");
        }
    }
}

#[test]
fn hybrid_needs_embedding_table() {
    let dir = tempfile::tempdir().unwrap();
    let truth = write_toy_dataset(dir.path());
    let cfg = toy_config(&truth, &[]);
    let c = cfg_arg(&cfg);
    hyvae_ok(&["prepare", "--config", &c]);
    let out = hyvae(&["train-hvae", "--config", &c]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("embedding table") && err.contains("genre.hyve") && err.contains("train-mvae"), "{err}");
}

#[test]
fn hybrid_pipeline_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let truth = write_toy_dataset(dir.path());
    let cfg = toy_config(&truth, &[("hvae", "hidden = [16]\nlatent = 4\nmode = \"dense-reduce\"\n")]);
    let c = cfg_arg(&cfg);
    hyvae_ok(&["prepare", "--config", &c]);
    hyvae_ok(&["features", "--config", &c]);
    hyvae_ok(&["train-mvae", "--config", &c]);
    let emb = csv_rows(dir.path().join("out/embeddings/genre.csv"));
    assert_eq!(emb.len(), truth.n_movies);
    assert_eq!(emb[0].len(), 4);

    hyvae_ok(&["train-hvae", "--config", &c]);
    let ckpt = formats::load_checkpoint(&dir.path().join("out/models/hvae-genre-dense-reduce-fold0.hyvm")).unwrap();
    match ckpt {
        Checkpoint::Hybrid(h) => assert_eq!(h.mode.name(), "dense-reduce"),
        other => panic!("{:?}", other.kind()),
    }
    hyvae_ok(&["eval", "--config", &c, "--model", "hvae"]);
    assert!(dir.path().join("out/reports/hvae-genre-dense-reduce-aggregate.csv").is_file());

    hyvae_ok(&["viz", "--config", &c, "--source", "movie-embedding"]);
    let svg = read(dir.path().join("out/viz/movie-embedding-genre.svg"));
    assert_eq!(svg.matches("<circle").count(), truth.n_movies);
    assert_eq!(svg.matches("<text").count(), 18);
    hyvae_ok(&["viz", "--config", &c, "--source", "movie-embedding"]);
    assert_eq!(svg, read(dir.path().join("out/viz/movie-embedding-genre.svg")));

    hyvae_ok(&["viz", "--config", &c, "--source", "embedding-drift", "--k", "4"]);
    let disp = csv_rows(dir.path().join("out/viz/embedding-drift-displacement.csv"));
    assert_eq!(disp.len(), truth.n_movies);
    assert!(disp.iter().any(|r| r[1].parse::<f64>().unwrap() > 0.0));
}

#[test]
fn user_latent_projection_rows() {
    let dir = tempfile::tempdir().unwrap();
    let truth = write_toy_dataset(dir.path());
    let cfg = toy_config(&truth, &[("svae", "hidden = [16]\nlatent = 200\nepochs = 3\n")]);
    let c = cfg_arg(&cfg);
    hyvae_ok(&["prepare", "--config", &c]);
    hyvae_ok(&["train-svae", "--config", &c]);
    hyvae_ok(&["viz", "--config", &c, "--source", "user-latent", "--k", "3"]);
    let rows = csv_rows(dir.path().join("out/viz/user-latent.csv"));
    assert_eq!(rows.len(), 10);
    let svg = read(dir.path().join("out/viz/user-latent.svg"));
    assert_eq!(svg.matches("<circle").count(), 10);
    hyvae_ok(&["viz", "--config", &c, "--source", "user-latent", "--k", "3"]);
    assert_eq!(svg, read(dir.path().join("out/viz/user-latent.svg")));
    assert_eq!(hyvae(&["viz", "--config", &c, "--source", "user-latent", "--k", "11"]).status.code(), Some(2));
}

#[test]
fn corrupt_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let truth = write_toy_dataset(dir.path());
    let cfg = toy_config(&truth, &[]);
    let c = cfg_arg(&cfg);
    hyvae_ok(&["prepare", "--config", &c]);
    let path = dir.path().join("bad.hyvm");
    std::fs::write(&path, b"HYVM\x01\x07").unwrap();
    let out = hyvae(&["eval", "--config", &c, "--checkpoint", &cfg_arg(&path)]);
    assert_eq!(out.status.code(), Some(1));
}
