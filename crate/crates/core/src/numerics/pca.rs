use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::{Error, Result};

/// Fitted principal component projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    /// `n_features × k`, orthonormal columns.
    pub basis: Matrix,
    pub mean: Vec<f64>,
    /// Fraction of total variance carried by each kept component, descending.
    pub variance_fractions: Vec<f64>,
}

impl Pca {
    pub fn components(&self) -> usize {
        self.basis.cols()
    }

    pub fn explained(&self) -> f64 {
        self.variance_fractions.iter().sum()
    }

    pub fn project(&self, sample: &[f64]) -> Vec<f64> {
        let k = self.components();
        let mut out = vec![0.0; k];
        for (f, (&x, &mu)) in sample.iter().zip(&self.mean).enumerate() {
            let c = x - mu;
            for (j, o) in out.iter_mut().enumerate() {
                *o += c * self.basis.get(f, j);
            }
        }
        out
    }

    pub fn reconstruct(&self, coords: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (f, o) in out.iter_mut().enumerate() {
            for (j, &c) in coords.iter().enumerate() {
                *o += c * self.basis.get(f, j);
            }
        }
        out
    }
}

/// Mean-centre `samples` (`n_samples × n_features`) and keep the top `k`
/// right singular vectors. Each basis vector's largest-magnitude entry is
/// made positive so the result is sign-deterministic.
pub fn pca_fit(samples: &Matrix, k: usize) -> Result<Pca> {
    let (n, p) = samples.shape();
    if n < 2 {
        return Err(Error::invalid("pca needs at least two samples"));
    }
    if k == 0 || k > (n - 1).min(p) {
        return Err(Error::invalid(format!(
            "pca component count {k} outside 1..={}",
            (n - 1).min(p)
        )));
    }
    let mean: Vec<f64> = (0..p)
        .map(|c| (0..n).map(|r| samples.get(r, c)).sum::<f64>() / n as f64)
        .collect();
    let centered = DMatrix::from_fn(n, p, |r, c| samples.get(r, c) - mean[c]);
    let total: f64 = centered.iter().map(|x| x * x).sum();
    if total <= f64::EPSILON * f64::EPSILON * (n * p) as f64 || total == 0.0 {
        return Err(Error::ZeroVariance(
            "all samples identical; principal directions undefined".into(),
        ));
    }

    let svd = centered.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::invalid("svd did not produce right singular vectors"))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let mut basis = Matrix::zeros(p, k);
    let mut fractions = Vec::with_capacity(k);
    for (j, &idx) in order.iter().take(k).enumerate() {
        let row = v_t.row(idx);
        let pivot = row.iter().copied().fold(
            0.0f64,
            |best, x| if x.abs() > best.abs() { x } else { best },
        );
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for f in 0..p {
            basis.set(f, j, sign * row[f]);
        }
        let s = svd.singular_values[idx];
        fractions.push(s * s / total);
    }
    Ok(Pca {
        basis,
        mean,
        variance_fractions: fractions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn variance_lost(samples: &Matrix, pca: &Pca) -> f64 {
        let mut lost = 0.0;
        let mut total = 0.0;
        for r in 0..samples.rows() {
            let x = samples.row(r);
            let back = pca.reconstruct(&pca.project(x));
            for c in 0..x.len() {
                lost += (x[c] - back[c]).powi(2);
                total += (x[c] - pca.mean[c]).powi(2);
            }
        }
        lost / total
    }

    #[test]
    fn rank_one_line() {
        let s = Matrix::from_vec(4, 2, vec![0.0, 0.0, 1.0, 1.0, 2.0, 2.0, -3.0, -3.0]).unwrap();
        let pca = pca_fit(&s, 1).unwrap();
        assert!((pca.variance_fractions[0] - 1.0).abs() < 1e-12);
        let h = 1.0 / 2f64.sqrt();
        assert!((pca.basis.get(0, 0).abs() - h).abs() < 1e-12);
        assert!((pca.basis.get(1, 0).abs() - h).abs() < 1e-12);
    }

    #[test]
    fn full_rank_keeps_everything() {
        let mut rng = Rng::new(9);
        let data = (0..40).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let s = Matrix::from_vec(10, 4, data).unwrap();
        let pca = pca_fit(&s, 4).unwrap();
        assert!((pca.explained() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn basis_orthonormal_fractions_sorted_and_loss_matches() {
        let mut rng = Rng::new(21);
        let data = (0..21 * 6).map(|_| rng.uniform(-2.0, 2.0)).collect();
        let s = Matrix::from_vec(21, 6, data).unwrap();
        for k in 1..=6 {
            let pca = pca_fit(&s, k).unwrap();
            let b = &pca.basis;
            for i in 0..k {
                for j in 0..k {
                    let dot: f64 = (0..6).map(|f| b.get(f, i) * b.get(f, j)).sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-10);
                }
            }
            assert!(pca.variance_fractions.windows(2).all(|w| w[0] >= w[1]));
            assert!(pca.explained() <= 1.0 + 1e-10);
            assert!((variance_lost(&s, &pca) - (1.0 - pca.explained())).abs() < 1e-10);
        }
    }

    #[test]
    fn sign_convention_pins_largest_entry_positive() {
        let s = Matrix::from_vec(3, 2, vec![0.0, 0.0, -1.0, -2.0, 1.0, 2.0]).unwrap();
        let pca = pca_fit(&s, 1).unwrap();
        assert!(pca.basis.get(1, 0) > 0.0);
    }

    #[test]
    fn identical_samples_are_rejected() {
        let s = Matrix::from_vec(3, 2, vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0]).unwrap();
        assert!(matches!(pca_fit(&s, 1), Err(Error::ZeroVariance(_))));
    }

    #[test]
    fn bad_component_count_is_rejected() {
        let s = Matrix::from_vec(3, 2, vec![1.0, 2.0, 0.0, 2.0, 1.0, 5.0]).unwrap();
        assert!(pca_fit(&s, 0).is_err());
        assert!(pca_fit(&s, 3).is_err());
        assert!(pca_fit(&Matrix::zeros(1, 2), 1).is_err());
    }
}
