//! K-means, label-matched confusion matrices and regression metrics.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::alp::AlpConfig;
use crate::diffusion::{dm_extend, dm_fit, DmConfig};
use crate::error::{invalid, Error, Result};

/// Largest K for which [`cluster_agreement`] enumerates label permutations.
pub const MAX_MATCHED_CLUSTERS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult {
    pub labels: Vec<usize>,
    pub centroids: Array2<f64>,
    pub inertia: f64,
    /// Inertia after every assignment step.
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid, lowest index on ties.
fn nearest(point: ArrayView1<f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.outer_iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_seeds(points: ArrayView2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = points.nrows();
    let mut centroids = Array2::zeros((k, points.ncols()));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&points.row(first));
    let mut d2: Vec<f64> = points.outer_iter().map(|p| sq_dist(p, centroids.row(0))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, w) in d2.iter().enumerate() {
                if target < *w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).assign(&points.row(pick));
        for (i, p) in points.outer_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, centroids.row(c)));
        }
    }
    centroids
}

/// Lloyd's algorithm with k-means++ seeding.
///
/// Runs until the assignment reaches a fixpoint or `max_iter` passes.
/// A cluster that loses all its points is re-seeded at the point farthest
/// from its current centroid.
pub fn kmeans(points: ArrayView2<f64>, k: usize, seed: u64, max_iter: usize) -> Result<ClusteringResult> {
    let n = points.nrows();
    if k == 0 {
        return Err(invalid("k", "must be at least 1"));
    }
    if k > n {
        return Err(invalid("k", format!("cannot exceed the number of points ({n}), got {k}")));
    }
    if max_iter == 0 {
        return Err(invalid("max_iter", "must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_seeds(points, k, &mut rng);
    let mut labels = vec![usize::MAX; n];
    let mut trace = Vec::new();
    let mut iterations = 0;

    loop {
        let mut changed = false;
        let mut inertia = 0.0;
        let mut dists = vec![0.0; n];
        for (i, p) in points.outer_iter().enumerate() {
            let (c, d) = nearest(p, &centroids);
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
            dists[i] = d;
            inertia += d;
        }

        // empty clusters take the currently worst-served point
        let mut counts = vec![0usize; k];
        for &l in &labels {
            counts[l] += 1;
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .filter(|&i| counts[labels[i]] > 1)
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .expect("k <= n leaves a shared cluster");
                counts[labels[far]] -= 1;
                inertia -= dists[far];
                labels[far] = c;
                dists[far] = 0.0;
                counts[c] = 1;
                centroids.row_mut(c).assign(&points.row(far));
                changed = true;
            }
        }
        trace.push(inertia);
        iterations += 1;
        if !changed || iterations >= max_iter {
            break;
        }

        let mut sums = Array2::<f64>::zeros(centroids.dim());
        for (i, p) in points.outer_iter().enumerate() {
            let mut row = sums.row_mut(labels[i]);
            row += &p;
        }
        for c in 0..k {
            let mut row = sums.row_mut(c);
            row /= counts[c] as f64;
        }
        centroids = sums;
    }

    let inertia = points
        .outer_iter()
        .zip(labels.iter())
        .map(|(p, &l)| sq_dist(p, centroids.row(l)))
        .sum();
    Ok(ClusteringResult {
        labels,
        centroids,
        inertia,
        inertia_trace: trace,
        iterations,
    })
}

/// Best of `restarts` k-means runs (seeds `seed..seed + restarts`) by final
/// inertia; the earliest run wins ties.
pub fn kmeans_restarts(
    points: ArrayView2<f64>,
    k: usize,
    seed: u64,
    max_iter: usize,
    restarts: usize,
) -> Result<ClusteringResult> {
    if restarts == 0 {
        return Err(invalid("restarts", "must be at least 1"));
    }
    let mut best = kmeans(points, k, seed, max_iter)?;
    for r in 1..restarts as u64 {
        let run = kmeans(points, k, seed.wrapping_add(r), max_iter)?;
        if run.inertia < best.inertia {
            best = run;
        }
    }
    Ok(best)
}

/// Outcome of [`extension_agreement`].
#[derive(Debug, Clone)]
pub struct ExtensionAgreement {
    pub confusion: ConfusionMatrix,
    /// Retained dimension of the full-sample and train-only embeddings.
    pub full_dim: usize,
    pub train_dim: usize,
    /// Full-sample coordinates of the test rows.
    pub reference: Array2<f64>,
    /// Extended coordinates of the test rows.
    pub extended: Array2<f64>,
    pub reference_labels: Vec<usize>,
    pub predicted_labels: Vec<usize>,
}

/// Compares k-means clusterings of the test rows in two embeddings: the
/// diffusion map of the whole sample, and the diffusion map of the train rows
/// extended to the test rows by pyramids. Both clusterings use
/// `kmeans_restarts(.., k, seed, 300, restarts)`.
pub fn extension_agreement(
    x: ArrayView2<f64>,
    train: &[usize],
    test: &[usize],
    dm: &DmConfig,
    alp: &AlpConfig,
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<ExtensionAgreement> {
    if test.is_empty() || train.is_empty() {
        return Err(Error::Empty("train and test index sets must be nonempty"));
    }
    if let Some(&bad) = train.iter().chain(test).find(|&&i| i >= x.nrows()) {
        return Err(Error::IndexOutOfRange { index: bad, len: x.nrows() });
    }
    let full = dm_fit(x, dm)?;
    let x_train = x.select(Axis(0), train);
    let x_test = x.select(Axis(0), test);
    let emb = dm_fit(x_train.view(), dm)?;
    let extended = dm_extend(&emb, x_test.view(), alp)?;
    let reference = full.coordinates().select(Axis(0), test);
    let reference_labels = kmeans_restarts(reference.view(), k, seed, 300, restarts)?.labels;
    let predicted_labels = kmeans_restarts(extended.view(), k, seed, 300, restarts)?.labels;
    let confusion = cluster_agreement(&reference_labels, &predicted_labels, k)?;
    Ok(ExtensionAgreement {
        confusion,
        full_dim: full.dim(),
        train_dim: emb.dim(),
        reference,
        extended,
        reference_labels,
        predicted_labels,
    })
}

/// Counts of reference label (rows) against predicted label (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    counts: Array2<u64>,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Array2<u64>) -> Result<Self> {
        if counts.nrows() != counts.ncols() {
            return Err(Error::NotSquare {
                mode: "confusion matrix",
                rows: counts.nrows(),
                cols: counts.ncols(),
            });
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn counts(&self) -> &Array2<u64> {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.sum()
    }

    pub fn row_totals(&self) -> Vec<u64> {
        self.counts.rows().into_iter().map(|r| r.sum()).collect()
    }

    pub fn col_totals(&self) -> Vec<u64> {
        self.counts.columns().into_iter().map(|c| c.sum()).collect()
    }

    /// Diagonal mass over total.
    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        self.counts.diag().sum() as f64 / total as f64
    }

    /// Plain-text table with marginals.
    pub fn to_table(&self) -> String {
        let k = self.counts.nrows();
        let mut out = String::from("ref\\pred");
        for j in 0..k {
            out.push_str(&format!("\tP{}", j + 1));
        }
        out.push_str("\tsum\n");
        for (i, row) in self.counts.rows().into_iter().enumerate() {
            out.push_str(&format!("R{}", i + 1));
            for v in row {
                out.push_str(&format!("\t{v}"));
            }
            out.push_str(&format!("\t{}\n", row.sum()));
        }
        out.push_str("sum");
        for v in self.col_totals() {
            out.push_str(&format!("\t{v}"));
        }
        out.push_str(&format!("\t{}\n", self.total()));
        out
    }
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for v in 0..used.len() {
            if !used[v] {
                used[v] = true;
                prefix.push(v);
                rec(prefix, used, out);
                prefix.pop();
                used[v] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(k), &mut vec![false; k], &mut out);
    out
}

/// Confusion matrix after relabeling predictions by the permutation that
/// maximizes the diagonal.
pub fn cluster_agreement(labels_ref: &[usize], labels_pred: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if labels_ref.len() != labels_pred.len() {
        return Err(Error::DimensionMismatch {
            context: "label vectors must have equal length",
            expected: labels_ref.len(),
            got: labels_pred.len(),
        });
    }
    if k == 0 || k > MAX_MATCHED_CLUSTERS {
        return Err(invalid("k", format!("must lie in 1..={MAX_MATCHED_CLUSTERS}, got {k}")));
    }
    let mut raw = Array2::<u64>::zeros((k, k));
    for (&r, &p) in labels_ref.iter().zip(labels_pred.iter()) {
        if r >= k || p >= k {
            return Err(invalid("labels", format!("label {} out of range for k={k}", r.max(p))));
        }
        raw[[r, p]] += 1;
    }
    // perm[p] = reference label assigned to predicted label p
    let mut best: Option<(u64, Vec<usize>)> = None;
    for perm in permutations(k) {
        let diag: u64 = (0..k).map(|p| raw[[perm[p], p]]).sum();
        if best.as_ref().is_none_or(|(b, _)| diag > *b) {
            best = Some((diag, perm));
        }
    }
    let (_, perm) = best.expect("at least one permutation");
    let mut counts = Array2::<u64>::zeros((k, k));
    for r in 0..k {
        for p in 0..k {
            counts[[r, perm[p]]] += raw[[r, p]];
        }
    }
    ConfusionMatrix::from_counts(counts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionMetrics {
    pub rmse: f64,
    pub mae: f64,
    /// Mean of `y_pred - y_true`.
    pub mean_error: f64,
}

pub fn regression_metrics(y_true: &[f64], y_pred: &[f64]) -> Result<RegressionMetrics> {
    if y_true.is_empty() {
        return Err(Error::Empty("regression metrics need at least one value"));
    }
    if y_true.len() != y_pred.len() {
        return Err(Error::DimensionMismatch {
            context: "prediction length must match truth length",
            expected: y_true.len(),
            got: y_pred.len(),
        });
    }
    let n = y_true.len() as f64;
    let (mut se, mut ae, mut e) = (0.0, 0.0, 0.0);
    for (i, (t, p)) in y_true.iter().zip(y_pred.iter()).enumerate() {
        if !t.is_finite() || !p.is_finite() {
            return Err(Error::NonFinite { what: "regression input", row: i, col: 0 });
        }
        let d = p - t;
        se += d * d;
        ae += d.abs();
        e += d;
    }
    Ok(RegressionMetrics {
        rmse: (se / n).sqrt(),
        mae: ae / n,
        mean_error: e / n,
    })
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "spearman inputs",
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::Empty("spearman needs at least two pairs"));
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(rb.iter()) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    Ok(cov / (va * vb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn single_cluster_is_the_mean() {
        let p = array![[0.0, 1.0], [2.0, 3.0], [4.0, 8.0]];
        let r = kmeans(p.view(), 1, 0, 100).unwrap();
        assert_eq!(r.labels, vec![0, 0, 0]);
        assert_abs_diff_eq!(r.centroids[[0, 0]], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.centroids[[0, 1]], 4.0, epsilon = 1e-12);
    }

    #[test]
    fn one_point_per_cluster_has_zero_inertia() {
        let p = array![[0.0], [1.0], [5.0], [9.0]];
        for seed in 0..5 {
            let r = kmeans(p.view(), 4, seed, 100).unwrap();
            assert_eq!(r.inertia, 0.0);
        }
    }

    #[test]
    fn separated_blobs_split_perfectly() {
        let mut p = Array2::zeros((40, 2));
        for i in 0..40 {
            let base = if i < 20 { 0.0 } else { 1000.0 };
            p[[i, 0]] = base + (i % 5) as f64 * 0.1;
            p[[i, 1]] = base + (i % 7) as f64 * 0.1;
        }
        let truth: Vec<usize> = (0..40).map(|i| usize::from(i >= 20)).collect();
        for seed in 0..10 {
            let r = kmeans(p.view(), 2, seed, 100).unwrap();
            let cm = cluster_agreement(&truth, &r.labels, 2).unwrap();
            assert_eq!(cm.accuracy(), 1.0);
        }
    }

    #[test]
    fn restarts_keep_lowest_inertia() {
        let p = Array2::from_shape_fn((60, 2), |(i, j)| ((i * 7 + j * 3) as f64 * 0.61).sin() * (1 + i % 3) as f64);
        let best = kmeans_restarts(p.view(), 4, 5, 100, 6).unwrap();
        for s in 5..11 {
            assert!(best.inertia <= kmeans(p.view(), 4, s, 100).unwrap().inertia);
        }
        assert_eq!(kmeans_restarts(p.view(), 4, 5, 100, 1).unwrap(), kmeans(p.view(), 4, 5, 100).unwrap());
        assert!(kmeans_restarts(p.view(), 4, 5, 100, 0).is_err());
    }

    #[test]
    fn kmeans_rejects_bad_k() {
        let p = array![[0.0], [1.0]];
        assert!(kmeans(p.view(), 3, 0, 10).is_err());
        assert!(kmeans(p.view(), 0, 0, 10).is_err());
    }

    #[test]
    fn duplicate_points_reseed_empty_clusters() {
        let p = array![[0.0], [0.0], [0.0], [0.0], [1.0]];
        let r = kmeans(p.view(), 3, 1, 50).unwrap();
        let mut used = r.labels.clone();
        used.sort_unstable();
        used.dedup();
        assert_eq!(used.len(), 3);
    }

    #[test]
    fn agreement_identity_and_permutation() {
        let a = vec![0, 0, 1, 2, 2, 1, 0];
        let cm = cluster_agreement(&a, &a, 3).unwrap();
        assert_eq!(cm.accuracy(), 1.0);
        assert_eq!(cm.counts(), &array![[3, 0, 0], [0, 2, 0], [0, 0, 2]]);
        let perm = [2, 0, 1];
        let b: Vec<usize> = a.iter().map(|&l| perm[l]).collect();
        assert_eq!(cluster_agreement(&a, &b, 3).unwrap().accuracy(), 1.0);
    }

    #[test]
    fn agreement_errors() {
        assert!(cluster_agreement(&[0, 1], &[0], 2).is_err());
        assert!(cluster_agreement(&[0, 3], &[0, 1], 2).is_err());
        assert!(cluster_agreement(&[0], &[0], 9).is_err());
    }

    #[test]
    fn published_confusion_counts() {
        let cm = ConfusionMatrix::from_counts(array![[294, 4, 0], [9, 342, 2], [0, 12, 432]]).unwrap();
        assert_eq!(cm.total(), 1095);
        assert_eq!(cm.row_totals(), vec![298, 353, 444]);
        assert_eq!(cm.col_totals(), vec![303, 358, 434]);
        assert_abs_diff_eq!(cm.accuracy(), 1068.0 / 1095.0, epsilon = 1e-15);
        assert_abs_diff_eq!(cm.accuracy(), 0.97534, epsilon = 1e-5);
        assert!(cm.to_table().contains("R2\t9\t342\t2\t353"));
    }

    #[test]
    fn metric_examples() {
        let y = [1.0, -2.0, 3.5];
        let m = regression_metrics(&y, &y).unwrap();
        assert_eq!(m.rmse, 0.0);
        let shifted: Vec<f64> = y.iter().map(|v| v - 0.75).collect();
        let m = regression_metrics(&y, &shifted).unwrap();
        assert_abs_diff_eq!(m.rmse, 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(m.mae, 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(m.mean_error, -0.75, epsilon = 1e-12);
        assert!(regression_metrics(&[], &[]).is_err());
        assert!(regression_metrics(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn uniform_noise_rmse() {
        let delta = 0.3;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise: Vec<f64> = (0..200_000).map(|_| rng.random_range(-delta..=delta)).collect();
        let zeros = vec![0.0; noise.len()];
        let m = regression_metrics(&zeros, &noise).unwrap();
        let expected = delta / 3f64.sqrt();
        assert!((m.rmse - expected).abs() / expected < 0.05);
    }

    #[test]
    fn spearman_basics() {
        assert_abs_diff_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 25.0]).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0, epsilon = 1e-12);
        assert_eq!(ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
    }

    proptest! {
        #[test]
        fn inertia_never_increases(v in proptest::collection::vec(-10.0f64..10.0, 20..60), k in 1usize..6, seed in 0u64..100) {
            let n = v.len() / 2;
            let p = Array2::from_shape_vec((n, 2), v[..2 * n].to_vec()).unwrap();
            let r = kmeans(p.view(), k, seed, 100).unwrap();
            for w in r.inertia_trace.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12);
            }
            prop_assert!(r.inertia >= 0.0);
            prop_assert!(r.inertia <= r.inertia_trace.last().unwrap() * (1.0 + 1e-12) + 1e-12);
        }

        #[test]
        fn agreement_relabel_invariant(
            pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..80),
            perm_a in Just([0usize, 1, 2, 3]).prop_shuffle(),
            perm_b in Just([0usize, 1, 2, 3]).prop_shuffle(),
        ) {
            let a: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let b: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            let base = cluster_agreement(&a, &b, 4).unwrap();
            prop_assert_eq!(base.total(), a.len() as u64);
            let a2: Vec<usize> = a.iter().map(|&l| perm_a[l]).collect();
            let b2: Vec<usize> = b.iter().map(|&l| perm_b[l]).collect();
            let other = cluster_agreement(&a2, &b2, 4).unwrap();
            prop_assert_eq!(base.accuracy(), other.accuracy());
            prop_assert!((0.0..=1.0).contains(&base.accuracy()));
        }
    }
}
