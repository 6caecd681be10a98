//! InfoNCE over in-batch negatives and its symmetric variant.

use super::TrainError;

const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// Pairwise dot products between two batches of unit vectors: `s[i][j] =
/// q_i · k_j`. With unit-norm inputs every entry is a cosine in [-1, 1].
#[derive(Debug, Clone)]
pub struct BatchSims {
    k: usize,
    s: Vec<f64>,
}

impl BatchSims {
    pub fn compute(queries: &[Vec<f64>], keys: &[Vec<f64>]) -> Result<Self, TrainError> {
        validate_batches(queries, keys)?;
        let k = queries.len();
        let mut s = vec![0.0; k * k];
        for (i, q) in queries.iter().enumerate() {
            for (j, key) in keys.iter().enumerate() {
                s[i * k + j] = q.iter().zip(key).map(|(a, b)| a * b).sum();
            }
        }
        Ok(BatchSims { k, s })
    }

    /// Build from an explicit row-major k×k score matrix.
    pub fn from_matrix(k: usize, s: Vec<f64>) -> Result<Self, TrainError> {
        if k == 0 {
            return Err(TrainError::EmptyBatch);
        }
        if s.len() != k * k {
            return Err(TrainError::DimMismatch);
        }
        Ok(BatchSims { k, s })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.s[i * self.k + j]
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.s[i * self.k..(i + 1) * self.k]
    }

    /// Fraction of rows whose largest score sits on the diagonal: the
    /// in-batch instance discrimination accuracy.
    pub fn discrimination_accuracy(&self) -> f64 {
        let mut correct = 0usize;
        for i in 0..self.k {
            let row = self.row(i);
            let best = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
                .map(|(j, _)| j);
            if best == Some(i) {
                correct += 1;
            }
        }
        correct as f64 / self.k as f64
    }
}

fn validate_batches(queries: &[Vec<f64>], keys: &[Vec<f64>]) -> Result<(), TrainError> {
    if queries.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    if queries.len() != keys.len() {
        return Err(TrainError::BatchSizeMismatch {
            q: queries.len(),
            k: keys.len(),
        });
    }
    let dim = queries[0].len();
    for (side, batch) in [("query", queries), ("key", keys)] {
        for (row, v) in batch.iter().enumerate() {
            if v.len() != dim {
                return Err(TrainError::DimMismatch);
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(TrainError::NonUnitRow { side, row, norm });
            }
        }
    }
    Ok(())
}

/// Row-softmax of `sims / tau` with max-subtraction, plus the per-row loss
/// `logsumexp(row) - row[i]`.
fn softmax_rows(sims: &BatchSims, tau: f64, transpose: bool) -> (Vec<f64>, f64) {
    let k = sims.k();
    let mut probs = vec![0.0; k * k];
    let mut loss = 0.0;
    for i in 0..k {
        let logit = |j: usize| {
            if transpose {
                sims.get(j, i) / tau
            } else {
                sims.get(i, j) / tau
            }
        };
        let mut max = f64::NEG_INFINITY;
        for j in 0..k {
            max = max.max(logit(j));
        }
        let mut sum = 0.0;
        for j in 0..k {
            let e = (logit(j) - max).exp();
            probs[i * k + j] = e;
            sum += e;
        }
        for j in 0..k {
            probs[i * k + j] /= sum;
        }
        let lse = max + sum.ln();
        loss += lse - logit(i);
    }
    (probs, loss / k as f64)
}

/// InfoNCE from precomputed similarity scores: the mean over rows of the
/// negative log-softmax of row i of `S/τ` at column i. Always ≥ 0 and
/// exactly 0 for a single-pair batch.
pub fn info_nce_from_sims(sims: &BatchSims, tau: f64) -> Result<f64, TrainError> {
    if tau <= 0.0 {
        return Err(TrainError::NonPositiveTemperature);
    }
    Ok(softmax_rows(sims, tau, false).1)
}

/// InfoNCE where each query must identify its paired key among the batch.
pub fn info_nce(queries: &[Vec<f64>], keys: &[Vec<f64>], tau: f64) -> Result<f64, TrainError> {
    let sims = BatchSims::compute(queries, keys)?;
    info_nce_from_sims(&sims, tau)
}

/// Mean of the two directional InfoNCE losses: queries against keys and
/// keys against queries.
pub fn symmetric_loss(queries: &[Vec<f64>], keys: &[Vec<f64>], tau: f64) -> Result<f64, TrainError> {
    if tau <= 0.0 {
        return Err(TrainError::NonPositiveTemperature);
    }
    let sims = BatchSims::compute(queries, keys)?;
    let (_, l_qk) = softmax_rows(&sims, tau, false);
    let (_, l_kq) = softmax_rows(&sims, tau, true);
    Ok(0.5 * (l_qk + l_kq))
}

/// Symmetric loss plus its gradient with respect to every (already
/// normalized) query and key vector, and the similarity matrix for metric
/// reporting.
pub struct SymmetricLossGrad {
    pub loss: f64,
    pub d_queries: Vec<Vec<f64>>,
    pub d_keys: Vec<Vec<f64>>,
    pub sims: BatchSims,
}

pub fn symmetric_loss_with_grad(
    queries: &[Vec<f64>],
    keys: &[Vec<f64>],
    tau: f64,
) -> Result<SymmetricLossGrad, TrainError> {
    if tau <= 0.0 {
        return Err(TrainError::NonPositiveTemperature);
    }
    let sims = BatchSims::compute(queries, keys)?;
    let k = sims.k();
    let dim = queries[0].len();
    let (p_qk, l_qk) = softmax_rows(&sims, tau, false);
    let (p_kq, l_kq) = softmax_rows(&sims, tau, true);

    // d(loss)/dS_ij, combining both directions; each direction contributes
    // (P - I)/(K·τ) with respect to its own row ordering.
    let scale = 0.5 / (k as f64 * tau);
    let mut ds = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            let delta = if i == j { 1.0 } else { 0.0 };
            ds[i * k + j] =
                scale * ((p_qk[i * k + j] - delta) + (p_kq[j * k + i] - delta));
        }
    }

    let mut d_queries = vec![vec![0.0; dim]; k];
    let mut d_keys = vec![vec![0.0; dim]; k];
    for i in 0..k {
        for j in 0..k {
            let g = ds[i * k + j];
            if g == 0.0 {
                continue;
            }
            for d in 0..dim {
                d_queries[i][d] += g * keys[j][d];
                d_keys[j][d] += g * queries[i][d];
            }
        }
    }

    Ok(SymmetricLossGrad {
        loss: 0.5 * (l_qk + l_kq),
        d_queries,
        d_keys,
        sims,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(v: &[f64]) -> Vec<f64> {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / n).collect()
    }

    #[test]
    fn single_pair_loss_is_exactly_zero() {
        let q = vec![unit(&[0.3, -0.4, 0.5])];
        let k = vec![unit(&[1.0, 2.0, -1.0])];
        assert_eq!(info_nce(&q, &k, 0.05).unwrap(), 0.0);
        assert_eq!(symmetric_loss(&q, &k, 0.05).unwrap(), 0.0);
    }

    #[test]
    fn orthogonal_two_pair_batch_matches_closed_form() {
        // q_i = k_i, q_1 ⟂ q_2, τ = 1: each row's loss is
        // -ln(e / (e + 1)) = ln(1 + e⁻¹).
        let q = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let k = q.clone();
        let expected = (1.0 + (-1.0f64).exp()).ln();
        let got = info_nce(&q, &k, 1.0).unwrap();
        assert!((got - expected).abs() < 1e-9, "got {got}, expected {expected}");
        let sym = symmetric_loss(&q, &k, 1.0).unwrap();
        assert!((sym - expected).abs() < 1e-9);
    }

    #[test]
    fn loss_is_nonnegative() {
        let q = vec![unit(&[1.0, 0.2]), unit(&[-0.3, 0.8]), unit(&[0.5, 0.5])];
        let k = vec![unit(&[0.9, -0.1]), unit(&[0.2, 0.7]), unit(&[-0.6, 0.3])];
        for tau in [0.05, 0.5, 1.0, 5.0] {
            assert!(info_nce(&q, &k, tau).unwrap() >= 0.0);
        }
    }

    #[test]
    fn symmetric_equals_mean_of_directions() {
        let q = vec![unit(&[1.0, 0.2]), unit(&[-0.3, 0.8]), unit(&[0.5, 0.5]), unit(&[0.1, -0.9])];
        let k = vec![unit(&[0.9, -0.1]), unit(&[0.2, 0.7]), unit(&[-0.6, 0.3]), unit(&[0.4, 0.4])];
        let direct = symmetric_loss(&q, &k, 0.3).unwrap();
        let two_calls = 0.5 * (info_nce(&q, &k, 0.3).unwrap() + info_nce(&k, &q, 0.3).unwrap());
        assert!((direct - two_calls).abs() < 1e-12);
    }

    #[test]
    fn symmetric_with_identical_sides_matches_single_direction() {
        let q = vec![unit(&[0.8, 0.1]), unit(&[-0.2, 0.6])];
        assert!(
            (symmetric_loss(&q, &q, 0.2).unwrap() - info_nce(&q, &q, 0.2).unwrap()).abs() < 1e-12
        );
    }

    #[test]
    fn loss_is_invariant_under_joint_permutation() {
        let q = vec![unit(&[1.0, 0.2]), unit(&[-0.3, 0.8]), unit(&[0.5, 0.5])];
        let k = vec![unit(&[0.9, -0.1]), unit(&[0.2, 0.7]), unit(&[-0.6, 0.3])];
        let perm = [2usize, 0, 1];
        let qp: Vec<Vec<f64>> = perm.iter().map(|&i| q[i].clone()).collect();
        let kp: Vec<Vec<f64>> = perm.iter().map(|&i| k[i].clone()).collect();
        let a = info_nce(&q, &k, 0.1).unwrap();
        let b = info_nce(&qp, &kp, 0.1).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn raising_a_diagonal_score_lowers_the_loss() {
        let sims = BatchSims::from_matrix(3, vec![0.5, 0.2, 0.1, 0.0, 0.4, 0.3, 0.2, 0.1, 0.6])
            .unwrap();
        let base = info_nce_from_sims(&sims, 0.5).unwrap();
        for i in 0..3 {
            let mut bumped = sims.clone();
            bumped.s[i * 3 + i] += 1e-4;
            let after = info_nce_from_sims(&bumped, 0.5).unwrap();
            assert!(after < base, "raising S[{i}][{i}] must reduce the loss");
        }
    }

    #[test]
    fn non_unit_rows_are_rejected() {
        let q = vec![vec![1.0, 1.0]];
        let k = vec![vec![1.0, 0.0]];
        assert!(matches!(
            info_nce(&q, &k, 1.0),
            Err(TrainError::NonUnitRow { side: "query", .. })
        ));
    }

    #[test]
    fn non_positive_temperature_is_rejected() {
        let q = vec![vec![1.0, 0.0]];
        assert!(matches!(
            info_nce(&q, &q, 0.0),
            Err(TrainError::NonPositiveTemperature)
        ));
    }

    #[test]
    fn gradient_matches_finite_differences_at_the_vector_level() {
        let mut qs = vec![unit(&[0.6, 0.3, -0.2]), unit(&[-0.1, 0.9, 0.4]), unit(&[0.5, -0.5, 0.5]), unit(&[0.2, 0.2, -0.9])];
        let ks = vec![unit(&[0.7, 0.1, 0.1]), unit(&[-0.4, 0.6, 0.2]), unit(&[0.3, -0.8, 0.1]), unit(&[0.1, 0.3, -0.8])];
        let tau = 0.4;
        let grad = symmetric_loss_with_grad(&qs, &ks, tau).unwrap();
        // Perturb raw entries; re-normalization is skipped by evaluating the
        // loss pieces directly on the perturbed (still near-unit) vectors.
        let h = 1e-6;
        for i in 0..qs.len() {
            for d in 0..3 {
                let orig = qs[i][d];
                qs[i][d] = orig + h;
                let up = loss_no_validate(&qs, &ks, tau);
                qs[i][d] = orig - h;
                let down = loss_no_validate(&qs, &ks, tau);
                qs[i][d] = orig;
                let numeric = (up - down) / (2.0 * h);
                assert!(
                    (grad.d_queries[i][d] - numeric).abs() < 1e-6,
                    "dQ[{i}][{d}] analytic {} vs numeric {numeric}",
                    grad.d_queries[i][d]
                );
            }
        }
    }

    fn loss_no_validate(q: &[Vec<f64>], k: &[Vec<f64>], tau: f64) -> f64 {
        let n = q.len();
        let mut s = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                s[i * n + j] = q[i].iter().zip(&k[j]).map(|(a, b)| a * b).sum();
            }
        }
        let sims = BatchSims { k: n, s };
        let (_, a) = softmax_rows(&sims, tau, false);
        let (_, b) = softmax_rows(&sims, tau, true);
        0.5 * (a + b)
    }

    #[test]
    fn discrimination_accuracy_counts_diagonal_wins() {
        let sims = BatchSims::from_matrix(2, vec![0.9, 0.1, 0.8, 0.2]).unwrap();
        // Row 0 picks column 0 (correct); row 1 picks column 0 (wrong).
        assert_eq!(sims.discrimination_accuracy(), 0.5);
    }
}
