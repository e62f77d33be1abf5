//! Subcommand bodies. Each reads its prerequisites from the output directory,
//! writes its artifacts there and returns a short summary.

use std::fmt;
use std::path::{Path, PathBuf};

use hyvae_core::dataset::{
    binarize, holdout_split, make_cv_folds_sized, proportional_split_size, split_users, BinaryClickMatrix, MovieIndex,
    SplitSpec, UserId,
};
use hyvae_core::features::{
    assemble_imdb_features, encode_genome_top_k, encode_genres, random_embeddings, FeatureSet, MovieFeatureMatrix,
    WordVectorTable, LIWC_DIM, VAD_DIM, WORD_VECTOR_DIM,
};
use hyvae_core::hvae::{train_hvae, AssemblyMode};
use hyvae_core::metrics::{mean_over_reports, run_eval1, run_eval2, EvalReport, MetricSpec, Scheme, Scorer};
use hyvae_core::mvae::{export_embeddings, train_mvae, MovieEmbeddingTable};
use hyvae_core::vae::{train, Architecture, MlpVae};
use hyvae_core::viz::{kmeans, project_pca, project_tsne, Projection2D, TsneConfig, DEFAULT_TOL};
use hyvae_core::{Matrix, RngStream};

use crate::config::{Input, RunConfig};
use crate::error::{CliError, Result};
use crate::formats::{self, Checkpoint, ClickData, FeatureSidecar};
use crate::input;
use crate::output::{self, AggregateRow};

/// Where every artifact lives under the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn clicks(&self) -> PathBuf {
        self.root.join("clicks.hyvc")
    }

    pub fn fold(&self, fold: usize) -> PathBuf {
        self.root.join("splits").join(format!("fold{fold}.csv"))
    }

    pub fn holdout(&self, fold: usize) -> PathBuf {
        self.root.join("splits").join(format!("holdout{fold}.csv"))
    }

    pub fn features(&self, set: FeatureSet) -> PathBuf {
        self.root.join("features").join(format!("{}.hyvf", set.name()))
    }

    pub fn sidecar(&self, set: FeatureSet) -> PathBuf {
        self.root.join("features").join(format!("{}.json", set.name()))
    }

    pub fn embeddings(&self, set: FeatureSet) -> PathBuf {
        self.root.join("embeddings").join(format!("{}.hyve", set.name()))
    }

    pub fn mvae(&self, set: FeatureSet) -> PathBuf {
        self.root.join("models").join(format!("mvae-{}.hyvm", set.name()))
    }

    pub fn model(&self, tag: &str, fold: usize) -> PathBuf {
        self.root.join("models").join(format!("{tag}-fold{fold}.hyvm"))
    }

    pub fn log(&self, name: &str) -> PathBuf {
        self.root.join("logs").join(format!("{name}.csv"))
    }

    pub fn hybrid_table(&self, tag: &str, fold: usize, stage: &str) -> PathBuf {
        self.root.join("embeddings").join(format!("{tag}-fold{fold}-{stage}.hyve"))
    }

    pub fn report(&self, model: &str, scheme: Scheme, fold: usize) -> PathBuf {
        self.root.join("reports").join(format!("{model}-{}-fold{fold}.csv", scheme.name()))
    }

    pub fn per_user(&self, model: &str, scheme: Scheme, fold: usize) -> PathBuf {
        self.root.join("reports").join(format!("{model}-{}-fold{fold}-users.csv", scheme.name()))
    }

    pub fn aggregate(&self, model: &str) -> PathBuf {
        self.root.join("reports").join(format!("{model}-aggregate.csv"))
    }

    pub fn table(&self) -> PathBuf {
        self.root.join("reports").join("table.csv")
    }

    pub fn viz(&self, name: &str, ext: &str) -> PathBuf {
        self.root.join("viz").join(format!("{name}.{ext}"))
    }
}

pub fn hybrid_tag(set: FeatureSet, mode: AssemblyMode) -> String {
    format!("hvae-{}-{}", set.name(), mode.name())
}

/// Lines printed after a command, plus the files it wrote.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub lines: Vec<String>,
    pub written: Vec<PathBuf>,
}

impl Outcome {
    fn write(&mut self, path: PathBuf, bytes: impl AsRef<[u8]>) -> Result<()> {
        formats::write_file(&path, bytes.as_ref())?;
        self.written.push(path);
        Ok(())
    }

    fn say(&mut self, line: impl Into<String>) {
        self.lines.push(line.into());
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.lines {
            writeln!(f, "{l}")?;
        }
        Ok(())
    }
}

fn require_artifact(path: PathBuf, what: &'static str, produced_by: &'static str) -> Result<PathBuf> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(CliError::MissingArtifact { what, path, produced_by })
    }
}

fn load_click_data(layout: &Layout) -> Result<ClickData> {
    formats::load_clicks(&require_artifact(layout.clicks(), "click matrix", "prepare")?)
}

fn load_fold(layout: &Layout, cfg: &RunConfig, fold: usize) -> Result<SplitSpec> {
    let path = require_artifact(layout.fold(fold), "fold manifest", "prepare")?;
    output::read_fold_manifest(&path, fold, cfg.seed()?)
}

pub fn make_folds(cfg: &RunConfig, roster: &[UserId]) -> Result<Vec<SplitSpec>> {
    let seed = cfg.seed()?;
    let size = |v: usize| if v == 0 { proportional_split_size(roster.len()) } else { v };
    let (n_val, n_test) = (size(cfg.data.val_size), size(cfg.data.test_size));
    Ok(if cfg.data.folds == 1 {
        vec![split_users(roster, seed, n_val, n_test)?]
    } else {
        make_cv_folds_sized(roster, seed, cfg.data.folds, n_val, n_test)?
    })
}

/// Binarizes ratings over the movies that are both catalogued and rated,
/// then writes the click matrix, fold manifests and holdout manifests.
pub fn cmd_prepare(cfg: &RunConfig, layout: &Layout) -> Result<Outcome> {
    cfg.seed()?;
    let ratings_path = cfg.input(Input::Ratings)?;
    let movies_path = cfg.input(Input::Movies)?;
    let table = input::load_ratings(ratings_path)?;
    let movies = input::load_movies(movies_path)?;
    let catalogue = MovieIndex::new(movies.iter().map(|m| m.movie));
    let rated = MovieIndex::new(table.records().iter().map(|r| r.movie));
    let index = catalogue.intersect(&rated);
    let clicks = binarize(&table, &index, cfg.data.threshold);
    let folds = make_folds(cfg, clicks.roster())?;

    let mut out = Outcome::default();
    out.say(format!(
        "ratings={} users={} movies={} clicks={} users_without_clicks={}",
        table.len(),
        clicks.n_users(),
        clicks.n_movies(),
        clicks.n_clicks(),
        clicks.users_without_clicks().len()
    ));
    for spec in &folds {
        let holdout = holdout_split(&clicks, &spec.test, cfg.seed()?, cfg.data.holdout_fraction)?;
        out.say(format!(
            "fold {}: train={} val={} test={} holdout_users={} excluded={}",
            spec.fold_id,
            spec.train.len(),
            spec.validation.len(),
            spec.test.len(),
            holdout.users.len(),
            holdout.excluded.len()
        ));
        out.write(layout.fold(spec.fold_id), output::fold_manifest(spec))?;
        out.write(layout.holdout(spec.fold_id), output::holdout_manifest(&holdout))?;
    }
    out.write(layout.clicks(), formats::clicks_bytes(&ClickData { index, clicks }))?;
    Ok(out)
}

fn imdb_columns(languages: &[String], certifications: &[String]) -> Vec<String> {
    let mut cols: Vec<String> = languages.iter().map(|l| format!("language:{l}")).collect();
    cols.extend(certifications.iter().map(|c| format!("certification:{c}")));
    cols.push("imdb_rating".into());
    cols.extend((1..=LIWC_DIM).map(|i| format!("liwc{i}")));
    cols.extend((1..=VAD_DIM).map(|i| format!("vad{i}")));
    cols.extend((1..=WORD_VECTOR_DIM).map(|i| format!("w2v{i}")));
    cols
}

/// Extracts the configured feature set over the prepared movie index. The
/// random set writes an embedding table directly.
pub fn cmd_features(cfg: &RunConfig, layout: &Layout) -> Result<Outcome> {
    let set = cfg.feature_set()?;
    let needs: &[Input] = match set {
        FeatureSet::Genre => &[Input::Movies],
        FeatureSet::Genome => &[Input::GenomeScores, Input::GenomeTags],
        FeatureSet::Imdb => &[Input::Metadata, Input::Liwc, Input::Vad, Input::WordVectors],
        FeatureSet::Random => &[],
    };
    cfg.require(needs)?;
    let data = load_click_data(layout)?;
    let index = &data.index;
    let mut out = Outcome::default();

    let mut sidecar = FeatureSidecar {
        feature_set: set.name().into(),
        n_movies: index.len(),
        dim: 0,
        movie_ids: index.ids().to_vec(),
        columns: Vec::new(),
        missing_rating: Vec::new(),
        out_of_vocabulary_tokens: 0,
    };
    let features: MovieFeatureMatrix = match set {
        FeatureSet::Genre => {
            let g = encode_genres(&input::load_movies(cfg.input(Input::Movies)?)?, index)?;
            sidecar.columns = g.vocabulary;
            g.features
        }
        FeatureSet::Genome => {
            let tags = input::load_genome_tags(cfg.input(Input::GenomeTags)?)?;
            let scores = input::load_genome_scores(cfg.input(Input::GenomeScores)?)?;
            let ids: Vec<u64> = tags.iter().map(|t| t.0).collect();
            let g = encode_genome_top_k(&scores, &ids, index, cfg.features.genome_top_k)?;
            sidecar.columns = g
                .tag_ids
                .iter()
                .map(|id| tags.iter().find(|t| t.0 == *id).map_or_else(|| id.to_string(), |t| t.1.clone()))
                .collect();
            g.features
        }
        FeatureSet::Imdb => {
            let metadata = input::load_metadata(cfg.input(Input::Metadata)?)?;
            let liwc = input::load_lexicon(cfg.input(Input::Liwc)?, Some(LIWC_DIM))?;
            let vad = input::load_lexicon(cfg.input(Input::Vad)?, Some(VAD_DIM))?;
            let w2v = WordVectorTable::try_from(input::load_lexicon(cfg.input(Input::WordVectors)?, Some(WORD_VECTOR_DIM))?)?;
            let f = assemble_imdb_features(&metadata, &liwc, &vad, &w2v, index)?;
            sidecar.columns = imdb_columns(&f.languages, &f.certifications);
            sidecar.missing_rating = f.missing_rating;
            sidecar.out_of_vocabulary_tokens = f.out_of_vocabulary_tokens;
            f.features
        }
        FeatureSet::Random => {
            let table = random_embeddings(index, cfg.features.embedding_dim, cfg.seed()?)?;
            out.say(format!("random embeddings: N={} E={}", table.n_movies(), table.dim()));
            write_embeddings(&mut out, layout.embeddings(set), &table, index)?;
            return Ok(out);
        }
    };
    sidecar.dim = features.dim();
    out.say(format!("{} features: N={} D={}", set.name(), features.n_movies(), features.dim()));
    out.write(layout.features(set), formats::feature_bytes(&features))?;
    out.write(layout.sidecar(set), formats::sidecar_bytes(&sidecar))?;
    Ok(out)
}

fn write_embeddings(out: &mut Outcome, path: PathBuf, table: &MovieEmbeddingTable, index: &MovieIndex) -> Result<()> {
    let csv = path.with_extension("csv");
    out.write(path, formats::embedding_bytes(table))?;
    out.write(csv, formats::embedding_csv(table, index)?)
}

fn loss_line(name: &str, history: &[hyvae_core::vae::EpochLog]) -> String {
    match (history.first(), history.last()) {
        (Some(a), Some(b)) => format!("{name}: epochs={} loss {:.6} -> {:.6}", history.len(), a.total, b.total),
        _ => format!("{name}: no epochs run"),
    }
}

pub fn cmd_train_mvae(cfg: &RunConfig, layout: &Layout) -> Result<Outcome> {
    let set = cfg.feature_set()?;
    if set == FeatureSet::Random {
        return Err(CliError::Config("random embeddings come from `features` directly; no M-VAE is trained".into()));
    }
    let train_cfg = cfg.train_config(cfg.mvae.epochs)?;
    let features = formats::load_features(&require_artifact(layout.features(set), "feature matrix", "features")?)?;
    let data = load_click_data(layout)?;
    if features.n_movies() != data.index.len() {
        return Err(CliError::Config(format!(
            "feature matrix has {} movies, click matrix {}",
            features.n_movies(),
            data.index.len()
        )));
    }
    let (model, history) = train_mvae(&features, &train_cfg, &cfg.mvae.hidden, cfg.mvae.latent)?;
    let table = export_embeddings(&model, &features)?;

    let mut out = Outcome::default();
    let name = format!("mvae-{}", set.name());
    out.say(loss_line(&name, &history));
    out.write(layout.mvae(set), formats::checkpoint_bytes(&Checkpoint::Movie(model)))?;
    out.write(layout.log(&name), output::training_log(&history))?;
    write_embeddings(&mut out, layout.embeddings(set), &table, &data.index)?;
    Ok(out)
}

/// One S-VAE per fold, trained on that fold's training users.
pub fn cmd_train_svae(cfg: &RunConfig, layout: &Layout) -> Result<Outcome> {
    let train_cfg = cfg.train_config(cfg.svae.epochs)?;
    let data = load_click_data(layout)?;
    let mut out = Outcome::default();
    for fold in 0..cfg.data.folds {
        let spec = load_fold(layout, cfg, fold)?;
        let subset = data.clicks.subset(&spec.train);
        let arch = Architecture::new(data.index.len(), cfg.svae.hidden.clone(), cfg.svae.latent);
        let mut model = MlpVae::new(&arch, &mut RngStream::substream(train_cfg.seed, "init"))?;
        let history = train(&mut model, &subset, &train_cfg)?;
        let name = format!("svae-fold{fold}");
        out.say(loss_line(&name, &history));
        out.write(layout.model("svae", fold), formats::checkpoint_bytes(&Checkpoint::Standard(model)))?;
        out.write(layout.log(&name), output::training_log(&history))?;
    }
    Ok(out)
}

/// One H-VAE per fold around the configured embedding table; the table
/// before and after training is kept for drift plots.
pub fn cmd_train_hvae(cfg: &RunConfig, layout: &Layout) -> Result<Outcome> {
    let set = cfg.feature_set()?;
    let mode = cfg.assembly_mode()?;
    let train_cfg = cfg.train_config(cfg.hvae.epochs)?;
    let producer = if set == FeatureSet::Random { "features" } else { "train-mvae" };
    let table = formats::load_embeddings(&require_artifact(layout.embeddings(set), "embedding table", producer)?)?;
    let data = load_click_data(layout)?;
    let tag = hybrid_tag(set, mode);
    let mut out = Outcome::default();
    for fold in 0..cfg.data.folds {
        let spec = load_fold(layout, cfg, fold)?;
        let subset = data.clicks.subset(&spec.train);
        let trained = train_hvae(
            &subset,
            &table,
            mode,
            &cfg.hvae.hidden,
            cfg.hvae.latent,
            cfg.hvae.freeze_embeddings,
            &train_cfg,
        )?;
        let name = format!("{tag}-fold{fold}");
        out.say(loss_line(&name, &trained.history));
        out.write(layout.hybrid_table(&tag, fold, "initial"), formats::embedding_bytes(&trained.initial_embeddings))?;
        out.write(
            layout.hybrid_table(&tag, fold, "final"),
            formats::embedding_bytes(&trained.model.embedding_table()),
        )?;
        out.write(layout.log(&name), output::training_log(&trained.history))?;
        out.write(layout.model(&tag, fold), formats::checkpoint_bytes(&Checkpoint::Hybrid(trained.model)))?;
    }
    Ok(out)
}

/// Which trained models `eval` and `viz` read.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelChoice {
    Svae,
    Hvae,
    /// One checkpoint applied to every fold.
    Checkpoint(PathBuf),
}

impl ModelChoice {
    fn label(&self, cfg: &RunConfig) -> Result<String> {
        Ok(match self {
            ModelChoice::Svae => "svae".into(),
            ModelChoice::Hvae => hybrid_tag(cfg.feature_set()?, cfg.assembly_mode()?),
            ModelChoice::Checkpoint(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "checkpoint".into()),
        })
    }

    fn path(&self, cfg: &RunConfig, layout: &Layout, fold: usize) -> Result<PathBuf> {
        let (path, producer) = match self {
            ModelChoice::Svae => (layout.model("svae", fold), "train-svae"),
            ModelChoice::Hvae => (layout.model(&self.label(cfg)?, fold), "train-hvae"),
            ModelChoice::Checkpoint(p) => (p.clone(), "train-svae"),
        };
        require_artifact(path, "checkpoint", producer)
    }
}

fn user_scorer<'a>(ckpt: &'a Checkpoint, path: &Path, n_movies: usize) -> Result<&'a dyn Scorer> {
    let (scorer, input_movies): (&dyn Scorer, usize) = match ckpt {
        Checkpoint::Standard(m) => (m, m.output_dim()),
        Checkpoint::Hybrid(h) => (h, h.n_movies()),
        Checkpoint::Movie(_) => {
            return Err(CliError::Config(format!("{} is an M-VAE checkpoint; it does not score users", path.display())))
        }
    };
    if input_movies != n_movies {
        return Err(CliError::Config(format!(
            "{} scores {input_movies} movies but the click matrix has {n_movies}",
            path.display()
        )));
    }
    Ok(scorer)
}

/// Reports per (scheme, fold), a fold-averaged aggregate for the model and a
/// combined table over every aggregate present.
pub fn cmd_eval(cfg: &RunConfig, layout: &Layout, choice: &ModelChoice) -> Result<Outcome> {
    let schemes = cfg.schemes()?;
    let metrics = cfg.metrics()?;
    let label = choice.label(cfg)?;
    let data = load_click_data(layout)?;
    let mut out = Outcome::default();
    let mut by_scheme: Vec<(Scheme, Vec<EvalReport>)> = schemes.iter().map(|&s| (s, Vec::new())).collect();
    for fold in 0..cfg.data.folds {
        let spec = load_fold(layout, cfg, fold)?;
        let path = choice.path(cfg, layout, fold)?;
        let ckpt = formats::load_checkpoint(&path)?;
        let scorer = user_scorer(&ckpt, &path, data.index.len())?;
        for (scheme, reports) in by_scheme.iter_mut() {
            let report = evaluate(scorer, *scheme, &data.clicks, &spec, &metrics, layout)?;
            out.say(format!(
                "{label} {} fold {fold}: {}",
                scheme.name(),
                summarize(&report.metrics, &report.means)
            ));
            out.write(layout.report(&label, *scheme, fold), output::report_csv(&report))?;
            if cfg.eval.per_user {
                out.write(layout.per_user(&label, *scheme, fold), output::per_user_csv(&report))?;
            }
            reports.push(report);
        }
    }
    let rows: Vec<AggregateRow> = by_scheme
        .iter()
        .map(|(scheme, reports)| AggregateRow {
            label: label.clone(),
            scheme: scheme.name(),
            folds: reports.len(),
            values: mean_over_reports(reports),
        })
        .collect();
    out.write(layout.aggregate(&label), output::aggregate_csv("model", &metrics, &rows))?;
    out.write(layout.table(), combined_table(layout)?)?;
    Ok(out)
}

fn evaluate(
    scorer: &dyn Scorer,
    scheme: Scheme,
    clicks: &BinaryClickMatrix,
    spec: &SplitSpec,
    metrics: &[MetricSpec],
    layout: &Layout,
) -> Result<EvalReport> {
    Ok(match scheme {
        Scheme::Eval1 => run_eval1(scorer, clicks, &spec.test, metrics, spec.fold_id)?,
        Scheme::Eval2 => {
            let path = require_artifact(layout.holdout(spec.fold_id), "holdout manifest", "prepare")?;
            let holdout = output::read_holdout_manifest(&path, &spec.test)?;
            run_eval2(scorer, clicks.n_movies(), &holdout, metrics, spec.fold_id)?
        }
    })
}

fn summarize(metrics: &[MetricSpec], values: &[f64]) -> String {
    metrics
        .iter()
        .zip(values)
        .map(|(m, v)| format!("{}@{}={v:.4}", m.name(), m.cutoff))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Concatenates every `*-aggregate.csv` (sorted by name) sharing the first
/// file's header.
fn combined_table(layout: &Layout) -> Result<String> {
    let dir = layout.root().join("reports");
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| CliError::io(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with("-aggregate.csv"))
        .collect();
    files.sort();
    let mut header: Option<String> = None;
    let mut body = String::new();
    for f in files {
        let text = std::fs::read_to_string(&f).map_err(|e| CliError::io(&f, e))?;
        let mut lines = text.lines();
        let h = lines.next().unwrap_or_default().to_string();
        if header.get_or_insert_with(|| h.clone()) != &h {
            continue;
        }
        lines.for_each(|l| {
            body.push_str(l);
            body.push('\n');
        });
    }
    Ok(header.map(|h| format!("{h}\n{body}")).unwrap_or_default())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VizSource {
    UserLatent,
    MovieEmbedding,
    EmbeddingDrift,
}

impl VizSource {
    pub fn name(self) -> &'static str {
        match self {
            VizSource::UserLatent => "user-latent",
            VizSource::MovieEmbedding => "movie-embedding",
            VizSource::EmbeddingDrift => "embedding-drift",
        }
    }
}

fn project(cfg: &RunConfig, points: &Matrix) -> Result<Projection2D> {
    Ok(match cfg.viz.projection.as_str() {
        "pca" => project_pca(points)?,
        _ => project_tsne(
            points,
            &TsneConfig {
                perplexity: cfg.viz.perplexity,
                iterations: cfg.viz.tsne_iterations,
                seed: cfg.seed()?,
                ..TsneConfig::default()
            },
        )?,
    })
}

/// Posterior means of the given users under a user model, in roster order.
pub fn user_latents(ckpt: &Checkpoint, clicks: &BinaryClickMatrix, users: &[UserId]) -> Result<Matrix> {
    let rows: Vec<usize> = users
        .iter()
        .map(|u| clicks.row_of(*u).ok_or_else(|| CliError::Config(format!("user {u} is not in the click matrix"))))
        .collect::<Result<_>>()?;
    let mut blocks = Vec::new();
    for chunk in rows.chunks(256) {
        let x = clicks.dense_rows(chunk);
        let mean = match ckpt {
            Checkpoint::Standard(m) => m.encode(&x)?.0,
            Checkpoint::Hybrid(h) => h.inner.encode(&h.encoder_input(&x)?)?.0,
            Checkpoint::Movie(_) => return Err(CliError::Config("an M-VAE checkpoint has no user latents".into())),
        };
        blocks.push(mean);
    }
    let cols = blocks.first().map_or(0, Matrix::cols);
    let data: Vec<f64> = blocks.into_iter().flat_map(Matrix::into_vec).collect();
    Ok(Matrix::from_vec(rows.len(), cols, data)?)
}

fn scatter(
    out: &mut Outcome,
    cfg: &RunConfig,
    layout: &Layout,
    name: &str,
    ids: &[u64],
    points: &Matrix,
    labels: &[usize],
) -> Result<()> {
    let proj = project(cfg, points)?;
    out.write(layout.viz(name, "csv"), output::projection_csv(ids, &proj, labels))?;
    out.write(layout.viz(name, "svg"), output::scatter_svg(&proj, labels, name)?)?;
    Ok(())
}

/// Clusters and projects user latents (fold 0 test users), a movie embedding
/// table, or the H-VAE table before and after training.
pub fn cmd_viz(
    cfg: &RunConfig,
    layout: &Layout,
    source: VizSource,
    k: Option<usize>,
    choice: &ModelChoice,
) -> Result<Outcome> {
    let seed = cfg.seed()?;
    let data = load_click_data(layout)?;
    let mut out = Outcome::default();
    let cluster = |points: &Matrix, k: usize| kmeans(points, k, seed, cfg.viz.max_kmeans_iterations, DEFAULT_TOL);
    match source {
        VizSource::UserLatent => {
            let spec = load_fold(layout, cfg, 0)?;
            let ckpt = formats::load_checkpoint(&choice.path(cfg, layout, 0)?)?;
            let latents = user_latents(&ckpt, &data.clicks, &spec.test)?;
            let c = cluster(&latents, k.unwrap_or(cfg.viz.user_clusters))?;
            out.say(format!("user latents: n={} K={} inertia={:.6}", latents.rows(), latents.cols(), c.inertia));
            scatter(&mut out, cfg, layout, source.name(), &spec.test, &latents, &c.labels)?;
        }
        VizSource::MovieEmbedding => {
            let set = cfg.feature_set()?;
            let producer = if set == FeatureSet::Random { "features" } else { "train-mvae" };
            let table = formats::load_embeddings(&require_artifact(layout.embeddings(set), "embedding table", producer)?)?;
            let c = cluster(table.table(), k.unwrap_or(cfg.viz.movie_clusters))?;
            out.say(format!("movie embeddings ({}): n={} inertia={:.6}", set.name(), table.n_movies(), c.inertia));
            let name = format!("{}-{}", source.name(), set.name());
            scatter(&mut out, cfg, layout, &name, data.index.ids(), table.table(), &c.labels)?;
        }
        VizSource::EmbeddingDrift => {
            let tag = hybrid_tag(cfg.feature_set()?, cfg.assembly_mode()?);
            let load = |stage| {
                formats::load_embeddings(&require_artifact(
                    layout.hybrid_table(&tag, 0, stage),
                    "hybrid embedding snapshot",
                    "train-hvae",
                )?)
            };
            let (before, after) = (load("initial")?, load("final")?);
            let c = cluster(before.table(), k.unwrap_or(cfg.viz.movie_clusters))?;
            let displacement = before.displacement(&after)?;
            let mean = displacement.iter().sum::<f64>() / displacement.len().max(1) as f64;
            out.say(format!("embedding drift ({tag}): mean displacement={mean:.6}"));
            let ids = data.index.ids();
            scatter(&mut out, cfg, layout, &format!("{}-initial", source.name()), ids, before.table(), &c.labels)?;
            scatter(&mut out, cfg, layout, &format!("{}-final", source.name()), ids, after.table(), &c.labels)?;
            out.write(
                layout.viz(&format!("{}-displacement", source.name()), "csv"),
                output::displacement_csv(ids, &displacement),
            )?;
        }
    }
    Ok(out)
}
