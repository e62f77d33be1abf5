//! Ranking metrics and the two evaluation protocols.
//!
//! Recall@R divides the hits in the top R by `min(R, |I_u|)`. DCG@R uses
//! the base-2 log discount `1 / log2(r + 1)` and NDCG@R normalises by the
//! DCG of the ideal ranking. Rankings sort by descending score, ties by
//! ascending movie index.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::dataset::{BinaryClickMatrix, HoldoutSplit, UserId};
use crate::error::{Error, Result};
use crate::hvae::HybridVae;
use crate::ndmath::Matrix;
use crate::vae::MlpVae;

/// Users scored per forward pass.
const SCORE_BATCH: usize = 256;

/// Anything that maps (masked) click rows to per-movie scores.
pub trait Scorer {
    fn score(&self, input: &Matrix) -> Result<Matrix>;
}

impl Scorer for MlpVae {
    fn score(&self, input: &Matrix) -> Result<Matrix> {
        self.predict(input)
    }
}

impl Scorer for HybridVae {
    fn score(&self, input: &Matrix) -> Result<Matrix> {
        self.predict(input)
    }
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn score(&self, input: &Matrix) -> Result<Matrix> {
        (**self).score(input)
    }
}

fn rank_order(scores: &[f64], a: usize, b: usize) -> Ordering {
    scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
}

/// Movie indices by descending score, ties broken by ascending index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedList(Vec<usize>);

impl RankedList {
    /// Full ranking of `candidates` (all movies when `None`).
    pub fn rank(scores: &[f64], candidates: Option<&[usize]>) -> Self {
        Self::top(scores, candidates, usize::MAX)
    }

    /// The first `limit` entries of [`RankedList::rank`].
    pub fn top(scores: &[f64], candidates: Option<&[usize]>, limit: usize) -> Self {
        let mut items: Vec<usize> = match candidates {
            Some(c) => c.to_vec(),
            None => (0..scores.len()).collect(),
        };
        if limit < items.len() {
            if limit == 0 {
                items.clear();
            } else {
                items.select_nth_unstable_by(limit - 1, |&a, &b| rank_order(scores, a, b));
                items.truncate(limit);
            }
        }
        items.sort_unstable_by(|&a, &b| rank_order(scores, a, b));
        Self(items)
    }

    pub fn from_order(order: Vec<usize>) -> Self {
        Self(order)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn is_relevant(heldout: &[usize], item: usize) -> bool {
    heldout.binary_search(&item).is_ok()
}

fn check(heldout: &[usize], r: usize) -> Result<()> {
    if heldout.is_empty() {
        return Err(Error::UndefinedMetric("held-out set is empty"));
    }
    if r == 0 {
        return Err(Error::UndefinedMetric("cutoff R must be at least 1"));
    }
    Ok(())
}

/// `heldout` must be sorted.
pub fn recall_at_r(ranked: &RankedList, heldout: &[usize], r: usize) -> Result<f64> {
    check(heldout, r)?;
    let hits = ranked.0.iter().take(r).filter(|&&m| is_relevant(heldout, m)).count();
    Ok(hits as f64 / r.min(heldout.len()) as f64)
}

pub fn dcg_at_r(ranked: &RankedList, heldout: &[usize], r: usize) -> f64 {
    ranked
        .0
        .iter()
        .take(r)
        .enumerate()
        .filter(|(_, &m)| is_relevant(heldout, m))
        .map(|(pos, _)| 1.0 / libm::log2(pos as f64 + 2.0))
        .sum()
}

/// DCG of `hits` relevant items occupying the top ranks.
pub fn ideal_dcg(hits: usize) -> f64 {
    (0..hits).map(|pos| 1.0 / libm::log2(pos as f64 + 2.0)).sum()
}

pub fn ndcg_at_r(ranked: &RankedList, heldout: &[usize], r: usize) -> Result<f64> {
    check(heldout, r)?;
    Ok(dcg_at_r(ranked, heldout, r) / ideal_dcg(r.min(heldout.len())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Recall,
    Ndcg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MetricSpec {
    pub kind: MetricKind,
    pub cutoff: usize,
}

impl MetricSpec {
    pub const fn recall(cutoff: usize) -> Self {
        Self {
            kind: MetricKind::Recall,
            cutoff,
        }
    }

    pub const fn ndcg(cutoff: usize) -> Self {
        Self {
            kind: MetricKind::Ndcg,
            cutoff,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            MetricKind::Recall => "Recall",
            MetricKind::Ndcg => "NDCG",
        }
    }

    pub fn evaluate(&self, ranked: &RankedList, heldout: &[usize]) -> Result<f64> {
        match self.kind {
            MetricKind::Recall => recall_at_r(ranked, heldout, self.cutoff),
            MetricKind::Ndcg => ndcg_at_r(ranked, heldout, self.cutoff),
        }
    }
}

/// NDCG@100, Recall@20, Recall@50.
pub const DEFAULT_METRICS: [MetricSpec; 3] = [MetricSpec::ndcg(100), MetricSpec::recall(20), MetricSpec::recall(50)];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Full click history is both input and relevant set.
    Eval1,
    /// A held-out share of clicks is masked from the input and forms the relevant set.
    Eval2,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Eval1 => "eval1",
            Scheme::Eval2 => "eval2",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Scheme::Eval1 => "Eval 1",
            Scheme::Eval2 => "Eval 2",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserMetrics {
    pub user: UserId,
    /// Aligned with [`EvalReport::metrics`].
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub scheme: Scheme,
    pub fold: usize,
    pub metrics: Vec<MetricSpec>,
    pub per_user: Vec<UserMetrics>,
    pub means: Vec<f64>,
    pub n_evaluated: usize,
    pub n_excluded: usize,
}

impl EvalReport {
    fn from_users(scheme: Scheme, fold: usize, metrics: &[MetricSpec], per_user: Vec<UserMetrics>, n_excluded: usize) -> Self {
        let n = per_user.len();
        let mut means = alloc::vec![0.0; metrics.len()];
        for u in &per_user {
            for (m, v) in means.iter_mut().zip(&u.values) {
                *m += v;
            }
        }
        if n > 0 {
            means.iter_mut().for_each(|m| *m /= n as f64);
        }
        Self {
            scheme,
            fold,
            metrics: metrics.to_vec(),
            per_user,
            means,
            n_evaluated: n,
            n_excluded,
        }
    }

    pub fn mean_of(&self, spec: MetricSpec) -> Option<f64> {
        self.metrics.iter().position(|m| *m == spec).map(|i| self.means[i])
    }
}

/// Per-metric mean over several reports (e.g. the CV folds).
pub fn mean_over_reports(reports: &[EvalReport]) -> Vec<f64> {
    let Some(first) = reports.first() else {
        return Vec::new();
    };
    let mut out = alloc::vec![0.0; first.means.len()];
    for r in reports {
        for (o, v) in out.iter_mut().zip(&r.means) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|o| *o /= reports.len() as f64);
    out
}

struct EvalItem<'a> {
    user: UserId,
    input: &'a [u32],
    relevant: Vec<usize>,
    exclude_input: bool,
}

fn evaluate_items<S: Scorer + ?Sized>(
    model: &S,
    n_movies: usize,
    items: &[EvalItem<'_>],
    metrics: &[MetricSpec],
) -> Result<Vec<UserMetrics>> {
    let max_cutoff = metrics.iter().map(|m| m.cutoff).max().unwrap_or(0);
    let mut out = Vec::with_capacity(items.len());
    for chunk in items.chunks(SCORE_BATCH) {
        let mut input = Matrix::zeros(chunk.len(), n_movies);
        for (b, item) in chunk.iter().enumerate() {
            let row = input.row_mut(b);
            for &m in item.input {
                row[m as usize] = 1.0;
            }
        }
        let scores = model.score(&input)?;
        if scores.shape() != input.shape() {
            return Err(Error::Dimension {
                op: "score",
                left: input.shape(),
                right: scores.shape(),
            });
        }
        for (b, item) in chunk.iter().enumerate() {
            let candidates: Option<Vec<usize>> = item.exclude_input.then(|| {
                (0..n_movies)
                    .filter(|m| item.input.binary_search(&(*m as u32)).is_err())
                    .collect()
            });
            let ranked = RankedList::top(scores.row(b), candidates.as_deref(), max_cutoff);
            let values = metrics
                .iter()
                .map(|m| m.evaluate(&ranked, &item.relevant))
                .collect::<Result<Vec<f64>>>()?;
            out.push(UserMetrics { user: item.user, values });
        }
    }
    Ok(out)
}

/// Every test user's full history is the input and the relevant set; all
/// movies are ranked. Users without clicks are excluded.
pub fn run_eval1<S: Scorer + ?Sized>(
    model: &S,
    clicks: &BinaryClickMatrix,
    test_users: &[UserId],
    metrics: &[MetricSpec],
    fold: usize,
) -> Result<EvalReport> {
    let mut excluded = 0;
    let mut items = Vec::new();
    for &user in test_users {
        let row = clicks
            .clicks_of(user)
            .ok_or_else(|| Error::Invalid(alloc::format!("test user {user} is not in the click matrix")))?;
        if row.is_empty() {
            excluded += 1;
            continue;
        }
        items.push(EvalItem {
            user,
            input: row,
            relevant: row.iter().map(|&m| m as usize).collect(),
            exclude_input: false,
        });
    }
    let per_user = evaluate_items(model, clicks.n_movies(), &items, metrics)?;
    Ok(EvalReport::from_users(Scheme::Eval1, fold, metrics, per_user, excluded))
}

/// The model sees only each user's input share; the held-out share is the
/// relevant set and candidates are all movies outside the input.
pub fn run_eval2<S: Scorer + ?Sized>(
    model: &S,
    n_movies: usize,
    holdout: &HoldoutSplit,
    metrics: &[MetricSpec],
    fold: usize,
) -> Result<EvalReport> {
    let items: Vec<EvalItem<'_>> = holdout
        .users
        .iter()
        .map(|u| EvalItem {
            user: u.user,
            input: &u.input,
            relevant: u.heldout.iter().map(|&m| m as usize).collect(),
            exclude_input: true,
        })
        .collect();
    let per_user = evaluate_items(model, n_movies, &items, metrics)?;
    Ok(EvalReport::from_users(Scheme::Eval2, fold, metrics, per_user, holdout.excluded.len()))
}
