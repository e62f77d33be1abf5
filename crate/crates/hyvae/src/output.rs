//! Text artifacts: split and holdout manifests, training logs, metric
//! reports, projections and SVG scatter plots.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::path::Path;

use hyvae_core::dataset::{HoldoutSplit, HoldoutUser, SplitRole, SplitSpec, UserId};
use hyvae_core::metrics::{EvalReport, MetricSpec};
use hyvae_core::vae::EpochLog;
use hyvae_core::viz::Projection2D;

use crate::error::{CliError, Result};

pub fn fold_manifest(spec: &SplitSpec) -> String {
    let mut out = String::from("userId,role\n");
    for (user, role) in spec.assignments() {
        let _ = writeln!(out, "{user},{}", role.as_str());
    }
    out
}

fn manifest_rows(path: &Path, header: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let found = reader.headers().map_err(|e| CliError::format(path, e.to_string()))?;
    if found.iter().ne(header.iter().copied()) {
        return Err(CliError::format(path, format!("expected header `{}`", header.join(","))));
    }
    reader
        .into_records()
        .map(|r| {
            let rec = r.map_err(|e| CliError::parse(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
            Ok((rec.position().map_or(0, |p| p.line()), rec))
        })
        .collect()
}

pub fn read_fold_manifest(path: &Path, fold_id: usize, seed: u64) -> Result<SplitSpec> {
    let mut spec = SplitSpec {
        fold_id,
        seed,
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for (line, rec) in manifest_rows(path, &["userId", "role"])? {
        let user: UserId = rec[0].parse().map_err(|_| CliError::parse(path, line, "bad userId"))?;
        match &rec[1] {
            r if r == SplitRole::Train.as_str() => spec.train.push(user),
            r if r == SplitRole::Validation.as_str() => spec.validation.push(user),
            r if r == SplitRole::Test.as_str() => spec.test.push(user),
            other => return Err(CliError::parse(path, line, format!("unknown role {other:?}"))),
        }
    }
    Ok(spec)
}

pub fn holdout_manifest(split: &HoldoutSplit) -> String {
    let mut out = String::from("userId,movieIndex,role\n");
    for u in &split.users {
        for m in &u.input {
            let _ = writeln!(out, "{},{m},input", u.user);
        }
        for m in &u.heldout {
            let _ = writeln!(out, "{},{m},heldout", u.user);
        }
    }
    out
}

/// Rebuilds a holdout split; test users absent from the manifest are the
/// excluded ones.
pub fn read_holdout_manifest(path: &Path, test_users: &[UserId]) -> Result<HoldoutSplit> {
    let mut order: Vec<UserId> = Vec::new();
    let mut by_user: BTreeMap<UserId, HoldoutUser> = BTreeMap::new();
    for (line, rec) in manifest_rows(path, &["userId", "movieIndex", "role"])? {
        let user: UserId = rec[0].parse().map_err(|_| CliError::parse(path, line, "bad userId"))?;
        let movie: u32 = rec[1].parse().map_err(|_| CliError::parse(path, line, "bad movieIndex"))?;
        let entry = by_user.entry(user).or_insert_with(|| {
            order.push(user);
            HoldoutUser {
                user,
                input: Vec::new(),
                heldout: Vec::new(),
            }
        });
        match &rec[2] {
            "input" => entry.input.push(movie),
            "heldout" => entry.heldout.push(movie),
            other => return Err(CliError::parse(path, line, format!("unknown role {other:?}"))),
        }
    }
    let unknown: Vec<_> = order.iter().filter(|u| !test_users.contains(u)).collect();
    if let Some(u) = unknown.first() {
        return Err(CliError::format(path, format!("user {u} is not a test user of this fold")));
    }
    Ok(HoldoutSplit {
        users: order.iter().map(|u| by_user.remove(u).expect("inserted")).collect(),
        excluded: test_users.iter().copied().filter(|u| !order.contains(u)).collect(),
    })
}

pub fn training_log(history: &[EpochLog]) -> String {
    let mut out = String::from("epoch,neg_loglik,kl,beta,total\n");
    for e in history {
        let _ = writeln!(out, "{},{},{},{},{}", e.epoch, e.neg_log_likelihood, e.kl, e.beta, e.total);
    }
    out
}

pub fn report_csv(report: &EvalReport) -> String {
    let mut out = String::from("scheme,fold,metric,R,value,n_users\n");
    for (spec, value) in report.metrics.iter().zip(&report.means) {
        let _ = writeln!(
            out,
            "{},{},{},{},{value},{}",
            report.scheme.name(),
            report.fold,
            spec.name(),
            spec.cutoff,
            report.n_evaluated
        );
    }
    out
}

pub fn per_user_csv(report: &EvalReport) -> String {
    let mut out = String::from("scheme,fold,userId");
    report.metrics.iter().for_each(|m| {
        let _ = write!(out, ",{}@{}", m.name(), m.cutoff);
    });
    out.push('\n');
    for u in &report.per_user {
        let _ = write!(out, "{},{},{}", report.scheme.name(), report.fold, u.user);
        u.values.iter().for_each(|v| {
            let _ = write!(out, ",{v}");
        });
        out.push('\n');
    }
    out
}

/// One row per (row label, scheme) with fold-averaged metric columns.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub label: String,
    pub scheme: &'static str,
    pub folds: usize,
    pub values: Vec<f64>,
}

pub fn aggregate_csv(row_header: &str, metrics: &[MetricSpec], rows: &[AggregateRow]) -> String {
    let mut out = format!("{row_header},scheme,folds");
    metrics.iter().for_each(|m| {
        let _ = write!(out, ",{}@{}", m.name(), m.cutoff);
    });
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{},{},{}", r.label, r.scheme, r.folds);
        r.values.iter().for_each(|v| {
            let _ = write!(out, ",{v}");
        });
        out.push('\n');
    }
    out
}

pub fn projection_csv(ids: &[u64], proj: &Projection2D, labels: &[usize]) -> String {
    let mut out = String::from("id,x,y,cluster\n");
    for ((id, row), l) in ids.iter().zip(proj.coords.row_iter()).zip(labels) {
        let _ = writeln!(out, "{id},{},{},{l}", row[0], row[1]);
    }
    out
}

pub fn displacement_csv(ids: &[u64], displacement: &[f64]) -> String {
    let mut out = String::from("movieId,displacement\n");
    for (id, d) in ids.iter().zip(displacement) {
        let _ = writeln!(out, "{id},{d}");
    }
    out
}

pub const PALETTE: [&str; 20] = [
    "#1f77b4", "#aec7e8", "#ff7f0e", "#ffbb78", "#2ca02c", "#98df8a", "#d62728", "#ff9896", "#9467bd", "#c5b0d5",
    "#8c564b", "#c49c94", "#e377c2", "#f7b6d2", "#7f7f7f", "#c7c7c7", "#bcbd22", "#dbdb8d", "#17becf", "#9edae5",
];

const PLOT: f64 = 480.0;
const MARGIN: f64 = 20.0;
const LEGEND_W: f64 = 140.0;

/// Standalone SVG with one circle per point coloured by label and a legend
/// listing each distinct label.
pub fn scatter_svg(proj: &Projection2D, labels: &[usize], title: &str) -> Result<String> {
    let n = proj.coords.rows();
    if labels.len() != n {
        return Err(CliError::Config(format!("{} labels for {n} points", labels.len())));
    }
    let mut distinct: Vec<usize> = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let width = PLOT + 2.0 * MARGIN + if distinct.is_empty() { 0.0 } else { LEGEND_W };
    let height = (PLOT + 2.0 * MARGIN).max(MARGIN * 2.0 + 18.0 * distinct.len() as f64);

    let range = |c: usize| {
        let (lo, hi) = (0..n).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            let v = proj.coords[(r, c)];
            (lo.min(v), hi.max(v))
        });
        if hi > lo {
            (lo, hi - lo)
        } else {
            (lo - 0.5, 1.0)
        }
    };
    let (x0, xs) = range(0);
    let (y0, ys) = range(1);

    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(out, "<title>{}</title>", escape(title));
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (r, &l) in labels.iter().enumerate() {
        let cx = MARGIN + PLOT * (proj.coords[(r, 0)] - x0) / xs;
        let cy = MARGIN + PLOT * (1.0 - (proj.coords[(r, 1)] - y0) / ys);
        let _ = writeln!(
            out,
            r#"<circle cx="{cx:.3}" cy="{cy:.3}" r="3" fill="{}" fill-opacity="0.8"/>"#,
            PALETTE[l % PALETTE.len()]
        );
    }
    if !distinct.is_empty() {
        let _ = writeln!(out, r#"<g class="legend" font-family="sans-serif" font-size="12">"#);
        let lx = PLOT + 2.0 * MARGIN;
        for (i, l) in distinct.iter().enumerate() {
            let ly = MARGIN + 18.0 * i as f64;
            let _ = writeln!(
                out,
                r#"<rect x="{lx}" y="{ly}" width="12" height="12" fill="{}"/><text x="{}" y="{}">cluster {l}</text>"#,
                PALETTE[l % PALETTE.len()],
                lx + 18.0,
                ly + 10.0
            );
        }
        let _ = writeln!(out, "</g>");
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
