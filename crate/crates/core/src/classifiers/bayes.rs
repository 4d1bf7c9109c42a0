use serde::{Deserialize, Serialize};

use crate::features::FeatureDataset;

const VAR_FLOOR: f64 = 1e-9;

/// Gaussian naive Bayes with class-frequency priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNb {
    pub log_prior: [f64; 3],
    pub mean: Vec<Vec<f64>>,
    pub var: Vec<Vec<f64>>,
}

impl GaussianNb {
    pub(crate) fn fit(ds: &FeatureDataset) -> GaussianNb {
        let d = ds.dim();
        let counts = ds.class_counts();
        let mut mean = vec![vec![0.0; d]; 3];
        for (x, l) in ds.rows() {
            for (m, v) in mean[l.index()].iter_mut().zip(x) {
                *m += v;
            }
        }
        for c in 0..3 {
            let n = counts[c].max(1) as f64;
            mean[c].iter_mut().for_each(|m| *m /= n);
        }
        let mut var = vec![vec![0.0; d]; 3];
        for (x, l) in ds.rows() {
            let c = l.index();
            for j in 0..d {
                var[c][j] += (x[j] - mean[c][j]).powi(2);
            }
        }
        for c in 0..3 {
            let n = counts[c].max(1) as f64;
            var[c].iter_mut().for_each(|v| *v = (*v / n).max(VAR_FLOOR));
        }
        let total = ds.len() as f64;
        GaussianNb {
            log_prior: counts.map(|n| (n as f64 / total).ln()),
            mean,
            var,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean[0].len()
    }

    /// `log p(c) + sum_j log N(x_j; mean_cj, var_cj)`.
    pub fn log_joint(&self, x: &[f64]) -> [f64; 3] {
        [0, 1, 2].map(|c| {
            let ll: f64 = x
                .iter()
                .zip(self.mean[c].iter().zip(&self.var[c]))
                .map(|(v, (m, s2))| -0.5 * ((std::f64::consts::TAU * s2).ln() + (v - m).powi(2) / s2))
                .sum();
            self.log_prior[c] + ll
        })
    }

    pub fn posterior(&self, x: &[f64]) -> [f64; 3] {
        let lj = self.log_joint(x);
        let max = lj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e = lj.map(|v| (v - max).exp());
        let z: f64 = e.iter().sum();
        e.map(|v| v / z)
    }
}
