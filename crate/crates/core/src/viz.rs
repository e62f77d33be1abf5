//! k-means clustering and 2-D projections (PCA, exact t-SNE) of latent
//! representations.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::ndmath::{Matrix, RngStream};

pub const DEFAULT_MAX_ITER: usize = 300;
pub const DEFAULT_TOL: f64 = 1e-6;
/// Largest input accepted by the exact O(n²) t-SNE.
pub const TSNE_MAX_POINTS: usize = 20_000;
/// Bisection target accuracy for the per-point entropy, in nats.
pub const PERPLEXITY_TOL: f64 = 1e-5;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub centroids: Matrix,
    pub inertia: f64,
    /// Inertia after each assignment step, first to last.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

fn assign(points: &Matrix, centroids: &Matrix, labels: &mut [usize], dists: &mut [f64]) -> f64 {
    let mut inertia = 0.0;
    for (i, p) in points.row_iter().enumerate() {
        let (best, d) = centroids
            .row_iter()
            .map(|c| sq_dist(p, c))
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (j, d)| if d < acc.1 { (j, d) } else { acc });
        labels[i] = best;
        dists[i] = d;
        inertia += d;
    }
    inertia
}

fn plus_plus_init(points: &Matrix, k: usize, rng: &mut RngStream) -> Matrix {
    let n = points.rows();
    let mut centroids = Matrix::zeros(k, points.cols());
    let first = rng.below(n);
    centroids.row_mut(0).copy_from_slice(points.row(first));
    let mut nearest: Vec<f64> = points.row_iter().map(|p| sq_dist(p, points.row(first))).collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.next_f64() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &d) in nearest.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.below(n)
        };
        centroids.row_mut(c).copy_from_slice(points.row(pick));
        for (i, p) in points.row_iter().enumerate() {
            nearest[i] = nearest[i].min(sq_dist(p, points.row(pick)));
        }
    }
    centroids
}

/// k-means++ seeding followed by Lloyd iterations until the largest centroid
/// shift drops below `tol` or `max_iter` is reached. An empty cluster is
/// re-seeded at the point farthest from its current centroid.
pub fn kmeans(points: &Matrix, k: usize, seed: u64, max_iter: usize, tol: f64) -> Result<ClusterAssignment> {
    let n = points.rows();
    if k == 0 || k > n {
        return Err(Error::Size(format!("k-means needs 1 <= k <= n, got k={k}, n={n}")));
    }
    let d = points.cols();
    let mut rng = RngStream::substream(seed, "kmeans++");
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let mut labels = vec![0; n];
    let mut dists = vec![0.0; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    while iterations < max_iter {
        history.push(assign(points, &centroids, &mut labels, &mut dists));
        iterations += 1;

        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (p, &l) in points.row_iter().zip(&labels) {
            counts[l] += 1;
            sums.row_mut(l).iter_mut().zip(p).for_each(|(s, &v)| *s += v);
        }
        let mut next = Matrix::zeros(k, d);
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                next.row_mut(c).iter_mut().zip(sums.row(c)).for_each(|(o, &s)| *o = s * inv);
            } else {
                let far = (0..n)
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .expect("n >= 1");
                next.row_mut(c).copy_from_slice(points.row(far));
                dists[far] = 0.0;
            }
        }
        let shift = (0..k)
            .map(|c| libm::sqrt(sq_dist(centroids.row(c), next.row(c))))
            .fold(0.0, f64::max);
        centroids = next;
        if shift < tol {
            break;
        }
    }
    let inertia = assign(points, &centroids, &mut labels, &mut dists);
    history.push(inertia);
    Ok(ClusterAssignment {
        labels,
        centroids,
        inertia,
        inertia_history: history,
        iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionMethod {
    Pca,
    Tsne,
}

impl ProjectionMethod {
    pub fn name(self) -> &'static str {
        match self {
            ProjectionMethod::Pca => "pca",
            ProjectionMethod::Tsne => "tsne",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection2D {
    /// n × 2, row-aligned with the input points.
    pub coords: Matrix,
    pub method: ProjectionMethod,
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues (descending) and eigenvectors as matrix columns.
pub fn symmetric_eigen(a: &Matrix) -> (Vec<f64>, Matrix) {
    let n = a.rows();
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        let scale: f64 = m.as_slice().iter().map(|x| x * x).sum();
        if off <= 1e-30 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = libm::copysign(1.0, theta) / (libm::fabs(theta) + libm::sqrt(theta * theta + 1.0));
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| m[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors[(k, dst)] = v[(k, src)];
        }
    }
    (values, vectors)
}

/// Projection of centered points onto the top two principal directions. Each
/// direction's first non-negligible loading is made positive.
pub fn project_pca(points: &Matrix) -> Result<Projection2D> {
    let n = points.rows();
    if n < 2 {
        return Err(Error::Size(format!("PCA needs at least 2 points, got {n}")));
    }
    let d = points.cols();
    let means: Vec<f64> = points.col_sums().into_iter().map(|s| s / n as f64).collect();
    let centered = Matrix::from_vec(
        n,
        d,
        points
            .row_iter()
            .flat_map(|r| r.iter().zip(&means).map(|(v, m)| v - m))
            .collect(),
    )?;
    let mut cov = centered.t_matmul(&centered)?;
    cov.scale(1.0 / (n - 1) as f64);
    let (_, vectors) = symmetric_eigen(&cov);
    let mut coords = Matrix::zeros(n, 2);
    for axis in 0..2.min(d) {
        let mut dir: Vec<f64> = (0..d).map(|k| vectors[(k, axis)]).collect();
        let largest = dir.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if let Some(first) = dir.iter().find(|v| v.abs() > 1e-9 * largest) {
            if *first < 0.0 {
                dir.iter_mut().for_each(|v| *v = -*v);
            }
        }
        for r in 0..n {
            coords[(r, axis)] = centered.row(r).iter().zip(&dir).map(|(a, b)| a * b).sum();
        }
    }
    Ok(Projection2D {
        coords,
        method: ProjectionMethod::Pca,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            seed: 0,
        }
    }
}

/// Row-conditional input affinities `p_{j|i}` and their entropies (nats).
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalAffinities {
    pub p: Matrix,
    pub entropies: Vec<f64>,
    pub precisions: Vec<f64>,
}

fn pairwise_sq_distances(points: &Matrix) -> Matrix {
    let n = points.rows();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v = sq_dist(points.row(i), points.row(j));
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// Gaussian row `exp(-β (d - d_min))` over `j ≠ i`, normalised; returns its entropy.
fn conditional_row(dist: &[f64], i: usize, beta: f64, d_min: f64, out: &mut [f64]) -> f64 {
    let mut sum = 0.0;
    let mut weighted = 0.0;
    for (j, (&d, o)) in dist.iter().zip(out.iter_mut()).enumerate() {
        if j == i {
            *o = 0.0;
            continue;
        }
        let shifted = d - d_min;
        let w = libm::exp(-beta * shifted);
        *o = w;
        sum += w;
        weighted += shifted * w;
    }
    out.iter_mut().for_each(|o| *o /= sum);
    libm::log(sum) + beta * weighted / sum
}

/// Per-point bisection on the Gaussian precision so each row's entropy is
/// `ln(perplexity)` within [`PERPLEXITY_TOL`].
pub fn conditional_affinities(points: &Matrix, perplexity: f64) -> Result<ConditionalAffinities> {
    let n = points.rows();
    if !(perplexity >= 1.0) || perplexity >= (n as f64) - 1.0 {
        return Err(Error::Invalid(format!(
            "perplexity must lie in [1, n-1) = [1, {}), got {perplexity}",
            n.saturating_sub(1)
        )));
    }
    let dist = pairwise_sq_distances(points);
    let target = libm::log(perplexity);
    let mut p = Matrix::zeros(n, n);
    let mut entropies = vec![0.0; n];
    let mut precisions = vec![0.0; n];
    for i in 0..n {
        let row = dist.row(i);
        let d_min = row
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &d)| d)
            .fold(f64::INFINITY, f64::min);
        let mut beta = 1.0;
        let (mut lo, mut hi) = (0.0, f64::INFINITY);
        let mut h = conditional_row(row, i, beta, d_min, p.row_mut(i));
        for _ in 0..200 {
            if libm::fabs(h - target) < PERPLEXITY_TOL {
                break;
            }
            if h > target {
                lo = beta;
                beta = if hi.is_finite() { 0.5 * (beta + hi) } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
            h = conditional_row(row, i, beta, d_min, p.row_mut(i));
        }
        entropies[i] = h;
        precisions[i] = beta;
    }
    Ok(ConditionalAffinities { p, entropies, precisions })
}

/// Exact t-SNE: symmetrised affinities, Student-t output kernel, gradient
/// descent with momentum, per-coordinate gains and early exaggeration.
pub fn project_tsne(points: &Matrix, cfg: &TsneConfig) -> Result<Projection2D> {
    let n = points.rows();
    if n > TSNE_MAX_POINTS {
        return Err(Error::Size(format!(
            "exact t-SNE is limited to {TSNE_MAX_POINTS} points (got {n}); use PCA instead"
        )));
    }
    let cond = conditional_affinities(points, cfg.perplexity)?;
    let mut p = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            p[(i, j)] = ((cond.p[(i, j)] + cond.p[(j, i)]) / (2.0 * n as f64)).max(1e-12);
        }
    }

    let mut rng = RngStream::substream(cfg.seed, "tsne-init");
    let mut y = Matrix::from_vec(n, 2, (0..2 * n).map(|_| 1e-4 * rng.standard_normal()).collect())?;
    let mut update = Matrix::zeros(n, 2);
    let mut gains = Matrix::filled(n, 2, 1.0);
    let mut num = Matrix::zeros(n, n);
    let mut grad = Matrix::zeros(n, 2);
    for iter in 0..cfg.iterations {
        let exaggeration = if iter < cfg.exaggeration_iters { cfg.early_exaggeration } else { 1.0 };
        let momentum = if iter < cfg.exaggeration_iters { 0.5 } else { 0.8 };
        let mut z = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let v = 1.0 / (1.0 + sq_dist(y.row(i), y.row(j)));
                num[(i, j)] = v;
                num[(j, i)] = v;
                z += 2.0 * v;
            }
        }
        for i in 0..n {
            let (mut g0, mut g1) = (0.0, 0.0);
            for j in 0..n {
                if j == i {
                    continue;
                }
                let w = num[(i, j)];
                let coeff = (exaggeration * p[(i, j)] - w / z) * w;
                g0 += coeff * (y[(i, 0)] - y[(j, 0)]);
                g1 += coeff * (y[(i, 1)] - y[(j, 1)]);
            }
            grad[(i, 0)] = 4.0 * g0;
            grad[(i, 1)] = 4.0 * g1;
        }
        for idx in 0..2 * n {
            let g = grad.as_slice()[idx];
            let u = update.as_slice()[idx];
            let gain = &mut gains.as_mut_slice()[idx];
            *gain = if (g > 0.0) != (u > 0.0) { *gain + 0.2 } else { *gain * 0.8 };
            *gain = gain.max(0.01);
            let next = momentum * u - cfg.learning_rate * *gain * g;
            update.as_mut_slice()[idx] = next;
            y.as_mut_slice()[idx] += next;
        }
        for c in 0..2 {
            let mean = (0..n).map(|i| y[(i, c)]).sum::<f64>() / n as f64;
            (0..n).for_each(|i| y[(i, c)] -= mean);
        }
    }
    if !y.is_finite() {
        return Err(Error::Invalid("t-SNE produced non-finite coordinates".into()));
    }
    Ok(Projection2D {
        coords: y,
        method: ProjectionMethod::Tsne,
    })
}

/// Mean silhouette coefficient of a labelled point set.
pub fn silhouette(points: &Matrix, labels: &[usize]) -> f64 {
    let n = points.rows();
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut total = 0.0;
    for i in 0..n {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for j in 0..n {
            if j != i {
                sums[labels[j]] += libm::sqrt(sq_dist(points.row(i), points.row(j)));
                counts[labels[j]] += 1;
            }
        }
        let own = labels[i];
        if counts[own] == 0 {
            continue;
        }
        let a = sums[own] / counts[own] as f64;
        let b = (0..k)
            .filter(|&c| c != own && counts[c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if b.is_finite() {
            total += (b - a) / a.max(b);
        }
    }
    total / n as f64
}
