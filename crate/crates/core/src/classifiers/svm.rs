//! Support vector machines trained by stochastic subgradient descent.
//!
//! All variants minimise `lambda/2 |w|^2 + mean hinge` with
//! `lambda = 1 / (C n)` and step `lr / (1 + t / n)`.

use serde::{Deserialize, Serialize};

use super::{dot, Hyperparams};
use crate::features::FeatureDataset;
use crate::rng::SeededRng;

fn step_size(hp: &Hyperparams, t: usize, n: usize) -> f64 {
    hp.learning_rate / (1.0 + t as f64 / n as f64)
}

fn sign(label_index: usize, class: usize) -> f64 {
    if label_index == class {
        1.0
    } else {
        -1.0
    }
}

/// Three independent binary hinge-loss machines, one per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearOvr {
    pub weights: Vec<Vec<f64>>,
    pub bias: [f64; 3],
}

impl LinearOvr {
    pub(crate) fn fit(ds: &FeatureDataset, hp: &Hyperparams, seed: u64) -> (LinearOvr, Vec<f64>) {
        let (n, d) = (ds.len(), ds.dim());
        let lambda = 1.0 / (hp.c * n as f64);
        let mut rng = SeededRng::new(seed);
        let mut model = LinearOvr {
            weights: vec![vec![0.0; d]; 3],
            bias: [0.0; 3],
        };
        let mut order: Vec<usize> = (0..n).collect();
        let mut history = Vec::with_capacity(hp.epochs);
        let mut t = 0;
        for _ in 0..hp.epochs {
            rng.shuffle(&mut order);
            for &i in &order {
                let x = &ds.vectors[i].values;
                let label = ds.labels[i].index();
                let eta = step_size(hp, t, n);
                for c in 0..3 {
                    let y = sign(label, c);
                    let margin = y * (dot(&model.weights[c], x) + model.bias[c]);
                    let shrink = 1.0 - eta * lambda;
                    let w = &mut model.weights[c];
                    if margin < 1.0 {
                        for (wj, xj) in w.iter_mut().zip(x) {
                            *wj = *wj * shrink + eta * y * xj;
                        }
                        model.bias[c] += eta * y;
                    } else {
                        w.iter_mut().for_each(|wj| *wj *= shrink);
                    }
                }
                t += 1;
            }
            history.push(model.mean_hinge(ds));
        }
        (model, history)
    }

    /// Hinge loss averaged over samples and the three binary problems.
    pub fn mean_hinge(&self, ds: &FeatureDataset) -> f64 {
        let mut total = 0.0;
        for (x, label) in ds.rows() {
            for c in 0..3 {
                let y = sign(label.index(), c);
                total += (1.0 - y * (dot(&self.weights[c], x) + self.bias[c])).max(0.0);
            }
        }
        total / (3 * ds.len()) as f64
    }

    pub fn dim(&self) -> usize {
        self.weights[0].len()
    }

    pub fn scores(&self, x: &[f64]) -> [f64; 3] {
        [0, 1, 2].map(|c| dot(&self.weights[c], x) + self.bias[c])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    /// `(gamma x.y + bias)^degree` with `gamma = 1 / d`.
    Poly { degree: u32, bias: f64 },
    /// `exp(-gamma |x - y|^2)`.
    Rbf { gamma: f64 },
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Poly { degree, bias } => {
                let gamma = 1.0 / a.len().max(1) as f64;
                (gamma * dot(a, b) + bias).powi(degree as i32)
            }
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

/// One-vs-rest kernel machines sharing a pool of support vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelOvr {
    pub kernel: Kernel,
    pub support: Vec<Vec<f64>>,
    /// Per support vector, the coefficient in each class's machine.
    pub coef: Vec<[f64; 3]>,
}

/// Largest training set whose Gram matrix is cached in memory.
const GRAM_CACHE_LIMIT: usize = 2500;

struct Gram<'a> {
    ds: &'a FeatureDataset,
    kernel: Kernel,
    cached: Option<Vec<f64>>,
}

impl Gram<'_> {
    fn get(&self, i: usize, j: usize) -> f64 {
        match &self.cached {
            Some(g) => g[i * self.ds.len() + j],
            None => self.kernel.eval(&self.ds.vectors[i].values, &self.ds.vectors[j].values),
        }
    }
}

/// Binary machine state in scaled form: coefficient = `scale * raw`.
struct Machine {
    raw: Vec<f64>,
    scale: f64,
    active: Vec<usize>,
}

impl KernelOvr {
    pub(crate) fn fit(ds: &FeatureDataset, hp: &Hyperparams, kernel: Kernel, seed: u64) -> Self {
        let n = ds.len();
        let lambda = 1.0 / (hp.c * n as f64);
        let cached = (n <= GRAM_CACHE_LIMIT).then(|| {
            let mut g = vec![0.0; n * n];
            for i in 0..n {
                for j in i..n {
                    let k = kernel.eval(&ds.vectors[i].values, &ds.vectors[j].values);
                    g[i * n + j] = k;
                    g[j * n + i] = k;
                }
            }
            g
        });
        let gram = Gram { ds, kernel, cached };
        let mut machines: Vec<Machine> = (0..3)
            .map(|_| Machine {
                raw: vec![0.0; n],
                scale: 1.0,
                active: Vec::new(),
            })
            .collect();
        let mut rng = SeededRng::new(seed);
        let mut order: Vec<usize> = (0..n).collect();
        let mut t = 0;
        for _ in 0..hp.epochs {
            rng.shuffle(&mut order);
            for &i in &order {
                let label = ds.labels[i].index();
                let eta = step_size(hp, t, n);
                for (c, m) in machines.iter_mut().enumerate() {
                    let y = sign(label, c);
                    let f = m.scale * m.active.iter().map(|&j| m.raw[j] * gram.get(j, i)).sum::<f64>();
                    m.scale *= 1.0 - eta * lambda;
                    if m.scale < 1e-9 {
                        let s = m.scale;
                        m.raw.iter_mut().for_each(|r| *r *= s);
                        m.scale = 1.0;
                    }
                    if y * f < 1.0 {
                        if m.raw[i] == 0.0 {
                            m.active.push(i);
                        }
                        m.raw[i] += eta * y / m.scale;
                        if m.active.len() > hp.support_budget {
                            // drop the weakest support vector
                            let (pos, _) = m
                                .active
                                .iter()
                                .enumerate()
                                .min_by(|a, b| m.raw[*a.1].abs().total_cmp(&m.raw[*b.1].abs()))
                                .expect("active set is non-empty");
                            let j = m.active.swap_remove(pos);
                            m.raw[j] = 0.0;
                        }
                    }
                }
                t += 1;
            }
        }
        let mut pool: Vec<usize> = machines.iter().flat_map(|m| m.active.iter().copied()).collect();
        pool.sort_unstable();
        pool.dedup();
        KernelOvr {
            kernel,
            support: pool.iter().map(|&j| ds.vectors[j].values.clone()).collect(),
            coef: pool
                .iter()
                .map(|&j| [0, 1, 2].map(|c| machines[c].scale * machines[c].raw[j]))
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.support.first().map_or(0, Vec::len)
    }

    pub fn scores(&self, x: &[f64]) -> [f64; 3] {
        let mut s = [0.0; 3];
        for (sv, coef) in self.support.iter().zip(&self.coef) {
            let k = self.kernel.eval(sv, x);
            for c in 0..3 {
                s[c] += coef[c] * k;
            }
        }
        s
    }

    /// Support vectors with a nonzero coefficient in class `c`'s machine.
    pub fn support_count(&self, c: usize) -> usize {
        self.coef.iter().filter(|k| k[c] != 0.0).count()
    }
}

/// Joint multiclass hinge: `max(0, 1 + max_{r != y} s_r - s_y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrammerSinger {
    pub weights: Vec<Vec<f64>>,
    pub bias: [f64; 3],
}

impl CrammerSinger {
    pub(crate) fn fit(ds: &FeatureDataset, hp: &Hyperparams, seed: u64) -> Self {
        let (n, d) = (ds.len(), ds.dim());
        let lambda = 1.0 / (hp.c * n as f64);
        let mut rng = SeededRng::new(seed);
        let mut m = CrammerSinger {
            weights: vec![vec![0.0; d]; 3],
            bias: [0.0; 3],
        };
        let mut order: Vec<usize> = (0..n).collect();
        let mut t = 0;
        for _ in 0..hp.epochs {
            rng.shuffle(&mut order);
            for &i in &order {
                let x = &ds.vectors[i].values;
                let y = ds.labels[i].index();
                let eta = step_size(hp, t, n);
                let s = m.scores(x);
                let rival = (0..3)
                    .filter(|&r| r != y)
                    .max_by(|&a, &b| s[a].total_cmp(&s[b]).then(a.cmp(&b)))
                    .expect("three classes");
                let shrink = 1.0 - eta * lambda;
                m.weights.iter_mut().flatten().for_each(|w| *w *= shrink);
                if 1.0 + s[rival] - s[y] > 0.0 {
                    for (j, &xj) in x.iter().enumerate().take(d) {
                        m.weights[y][j] += eta * xj;
                        m.weights[rival][j] -= eta * xj;
                    }
                    m.bias[y] += eta;
                    m.bias[rival] -= eta;
                }
                t += 1;
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.weights[0].len()
    }

    pub fn scores(&self, x: &[f64]) -> [f64; 3] {
        [0, 1, 2].map(|c| dot(&self.weights[c], x) + self.bias[c])
    }
}
