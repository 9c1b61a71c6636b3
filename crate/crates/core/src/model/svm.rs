use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::warn;

use super::smo::{solve, Gram};
use crate::domain::{Label, TaskKind};
use crate::error::{Error, Result};
use crate::features::SparseVector;

/// `exp(−γ‖x − y‖²)`.
pub fn rbf_kernel(x: &SparseVector, y: &SparseVector, gamma: f64) -> Result<f64> {
    Ok((-gamma * x.squared_distance(y)?).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmHyperparams {
    pub c: f64,
    pub gamma: f64,
    /// Stop once the maximal KKT violation falls below this.
    pub tolerance: f64,
    /// Iteration budget per binary problem, in multiples of its size.
    pub max_passes: usize,
}

impl Default for SvmHyperparams {
    fn default() -> Self {
        SvmHyperparams {
            c: 1.0,
            gamma: 1.0,
            tolerance: 1e-3,
            max_passes: 1000,
        }
    }
}

impl SvmHyperparams {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        positive("C", self.c)?;
        positive("gamma", self.gamma)?;
        positive("tolerance", self.tolerance)?;
        if self.max_passes == 0 {
            return Err(Error::InvalidParameter("max_passes must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MultiClass {
    #[default]
    OneVsOne,
    OneVsRest,
}

impl std::str::FromStr for MultiClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ovo" | "one-vs-one" => Ok(MultiClass::OneVsOne),
            "ovr" | "one-vs-rest" => Ok(MultiClass::OneVsRest),
            other => Err(Error::Config(format!("unknown multi-class strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TrainWarning {
    /// Iteration budget exhausted; the best-so-far solution is kept.
    NoConvergence {
        positive: u8,
        negative: Option<u8>,
        iterations: usize,
    },
    /// Decision function is constant on the training data.
    Degenerate { positive: u8, negative: Option<u8> },
}

/// One binary decision function `f(x) = Σ coef_k K(sv_k, x) − rho`.
///
/// `f(x) ≥ 0` votes for `positive`. In one-vs-one mode `positive` is the
/// lower class code of the pair; in one-vs-rest mode `negative` is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryMachine {
    pub positive: u8,
    pub negative: Option<u8>,
    /// Positions in [`SvmModel::support_vectors`].
    pub support: Vec<u32>,
    /// `α·y` for each support vector.
    pub coef: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl BinaryMachine {
    pub fn decision(&self, kernel_row: &[f64]) -> f64 {
        self.support
            .iter()
            .zip(&self.coef)
            .map(|(&s, &c)| c * kernel_row[s as usize])
            .sum::<f64>()
            - self.rho
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub task: TaskKind,
    /// Class codes seen in training, ascending.
    pub classes: Vec<u8>,
    pub strategy: MultiClass,
    pub hyperparams: SvmHyperparams,
    pub dim: usize,
    pub support_vectors: Vec<SparseVector>,
    pub machines: Vec<BinaryMachine>,
    #[serde(default)]
    pub warnings: Vec<TrainWarning>,
    /// Fingerprint of the vectorizer the inputs came from.
    #[serde(default)]
    pub vocabulary_hash: Option<String>,
}

/// Pairwise squared distances, row-major.
pub(crate) struct DistMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistMatrix {
    pub(crate) fn new(xs: &[SparseVector]) -> Self {
        let n = xs.len();
        let norms: Vec<f64> = xs.iter().map(SparseVector::squared_norm).collect();
        let d: Vec<f64> = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let (xs, norms) = (&xs, &norms);
                (0..n).map(move |j| {
                    if i == j {
                        0.0
                    } else {
                        let v = norms[i] + norms[j] - 2.0 * crate::features::sparse_dot(&xs[i], &xs[j]);
                        v.max(0.0)
                    }
                })
            })
            .collect();
        DistMatrix { n, d }
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }
}

fn check_inputs(xs: &[SparseVector], labels: &[Label]) -> Result<(TaskKind, usize)> {
    let first = labels.first().ok_or(Error::Empty)?;
    if xs.len() != labels.len() {
        return Err(Error::LengthMismatch {
            preds: xs.len(),
            gold: labels.len(),
        });
    }
    let task = first.task();
    if let Some(l) = labels.iter().find(|l| l.task() != task) {
        return Err(Error::InvalidParameter(format!(
            "mixed label schemes: {task} and {}",
            l.task()
        )));
    }
    let dim = xs[0].dim;
    if let Some(x) = xs.iter().find(|x| x.dim != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: x.dim,
        });
    }
    Ok((task, dim))
}

/// Train on `(vector, label)` pairs.
pub fn train_svm(
    data: &[(SparseVector, Label)],
    hp: &SvmHyperparams,
    strategy: MultiClass,
) -> Result<SvmModel> {
    let xs: Vec<SparseVector> = data.iter().map(|(x, _)| x.clone()).collect();
    let labels: Vec<Label> = data.iter().map(|(_, l)| *l).collect();
    hp.validate()?;
    check_inputs(&xs, &labels)?;
    let dist = DistMatrix::new(&xs);
    let subset: Vec<usize> = (0..xs.len()).collect();
    fit_subset(&xs, &labels, &dist, &subset, hp, strategy)
}

struct Solved {
    positive: u8,
    negative: Option<u8>,
    /// (training index, α·y)
    support: Vec<(usize, f64)>,
    rho: f64,
    iterations: usize,
    converged: bool,
    degenerate: bool,
}

fn solve_binary(
    dist: &DistMatrix,
    members: &[usize],
    y: &[f64],
    hp: &SvmHyperparams,
    positive: u8,
    negative: Option<u8>,
) -> Solved {
    let m = members.len();
    let mut k = vec![0.0; m * m];
    k.par_chunks_mut(m.max(1)).enumerate().for_each(|(a, row)| {
        for (b, cell) in row.iter_mut().enumerate() {
            *cell = (-hp.gamma * dist.get(members[a], members[b])).exp();
        }
    });
    let max_iter = hp.max_passes.saturating_mul(m).max(10_000);
    let sol = solve(&Gram { n: m, k: &k }, y, hp.c, hp.tolerance, max_iter);
    let support: Vec<(usize, f64)> = sol
        .alpha
        .iter()
        .enumerate()
        .filter(|(_, a)| **a > 0.0)
        .map(|(t, a)| (members[t], a * y[t]))
        .collect();
    let decisions: Vec<f64> = (0..m)
        .map(|t| {
            sol.alpha
                .iter()
                .enumerate()
                .filter(|(_, a)| **a > 0.0)
                .map(|(s, a)| a * y[s] * k[s * m + t])
                .sum::<f64>()
                - sol.rho
        })
        .collect();
    let lo = decisions.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = decisions.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Solved {
        positive,
        negative,
        support,
        rho: sol.rho,
        iterations: sol.iterations,
        converged: sol.converged,
        degenerate: hi - lo < 1e-12,
    }
}

pub(crate) fn fit_subset(
    xs: &[SparseVector],
    labels: &[Label],
    dist: &DistMatrix,
    subset: &[usize],
    hp: &SvmHyperparams,
    strategy: MultiClass,
) -> Result<SvmModel> {
    hp.validate()?;
    let task = labels[subset[0]].task();
    let dim = xs[subset[0]].dim;
    let mut classes: Vec<u8> = subset.iter().map(|&i| labels[i].code()).collect();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::SingleClass);
    }

    let jobs: Vec<(u8, Option<u8>)> = match strategy {
        MultiClass::OneVsOne => classes
            .iter()
            .enumerate()
            .flat_map(|(a, &ca)| classes[a + 1..].iter().map(move |&cb| (ca, Some(cb))))
            .collect(),
        MultiClass::OneVsRest => classes.iter().map(|&c| (c, None)).collect(),
    };
    let solved: Vec<Solved> = jobs
        .par_iter()
        .map(|&(pos, neg)| {
            let members: Vec<usize> = subset
                .iter()
                .copied()
                .filter(|&i| neg.is_none() || [pos, neg.unwrap()].contains(&labels[i].code()))
                .collect();
            let y: Vec<f64> = members
                .iter()
                .map(|&i| if labels[i].code() == pos { 1.0 } else { -1.0 })
                .collect();
            solve_binary(dist, &members, &y, hp, pos, neg)
        })
        .collect();

    let mut position: BTreeMap<usize, u32> = BTreeMap::new();
    for s in &solved {
        for &(i, _) in &s.support {
            position.insert(i, 0);
        }
    }
    for (p, v) in position.values_mut().enumerate() {
        *v = p as u32;
    }
    let support_vectors = position.keys().map(|&i| xs[i].clone()).collect();

    let mut warnings = Vec::new();
    let machines = solved
        .into_iter()
        .map(|s| {
            if !s.converged {
                warn!(positive = s.positive, negative = ?s.negative, "SMO hit its iteration budget");
                warnings.push(TrainWarning::NoConvergence {
                    positive: s.positive,
                    negative: s.negative,
                    iterations: s.iterations,
                });
            }
            if s.degenerate {
                warn!(positive = s.positive, negative = ?s.negative, "constant decision function");
                warnings.push(TrainWarning::Degenerate {
                    positive: s.positive,
                    negative: s.negative,
                });
            }
            BinaryMachine {
                positive: s.positive,
                negative: s.negative,
                support: s.support.iter().map(|(i, _)| position[i]).collect(),
                coef: s.support.iter().map(|(_, c)| *c).collect(),
                rho: s.rho,
                iterations: s.iterations,
                converged: s.converged,
            }
        })
        .collect();

    Ok(SvmModel {
        task,
        classes,
        strategy,
        hyperparams: *hp,
        dim,
        support_vectors,
        machines,
        warnings,
        vocabulary_hash: None,
    })
}

impl SvmModel {
    fn kernel_row(&self, x: &SparseVector) -> Result<Vec<f64>> {
        if x.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: x.dim,
            });
        }
        self.support_vectors
            .iter()
            .map(|sv| rbf_kernel(sv, x, self.hyperparams.gamma))
            .collect()
    }

    /// Decision value of every machine, in machine order.
    pub fn decision_values(&self, x: &SparseVector) -> Result<Vec<f64>> {
        let row = self.kernel_row(x)?;
        Ok(self.machines.iter().map(|m| m.decision(&row)).collect())
    }

    /// Combine machine outputs into a class code.
    pub fn vote(&self, decisions: &[f64]) -> u8 {
        match self.strategy {
            MultiClass::OneVsOne => {
                let mut votes: BTreeMap<u8, usize> = self.classes.iter().map(|&c| (c, 0)).collect();
                for (m, &f) in self.machines.iter().zip(decisions) {
                    let winner = if f >= 0.0 {
                        m.positive
                    } else {
                        m.negative.expect("one-vs-one machine has a negative class")
                    };
                    *votes.get_mut(&winner).expect("known class") += 1;
                }
                let mut best = self.classes[0];
                for (&c, &v) in &votes {
                    if v > votes[&best] {
                        best = c;
                    }
                }
                best
            }
            MultiClass::OneVsRest => {
                let mut best = 0;
                for (k, &f) in decisions.iter().enumerate() {
                    if f > decisions[best] {
                        best = k;
                    }
                }
                self.machines[best].positive
            }
        }
    }

    pub fn predict(&self, x: &SparseVector) -> Result<Label> {
        let code = self.vote(&self.decision_values(x)?);
        Ok(Label::from_code(self.task, code).expect("trained class code"))
    }

    pub fn predict_all(&self, xs: &[SparseVector]) -> Result<Vec<Label>> {
        xs.par_iter().map(|x| self.predict(x)).collect()
    }

    pub fn with_vocabulary_hash(mut self, hash: impl Into<String>) -> Self {
        self.vocabulary_hash = Some(hash.into());
        self
    }

    /// Structural consistency of a deserialized model.
    pub fn check(&self) -> Result<()> {
        self.hyperparams.validate()?;
        for sv in &self.support_vectors {
            if sv.dim != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    actual: sv.dim,
                });
            }
        }
        for m in &self.machines {
            if m.coef.len() != m.support.len()
                || m.support.iter().any(|&s| s as usize >= self.support_vectors.len())
            {
                return Err(Error::InvalidParameter("malformed machine in SVM model".into()));
            }
        }
        if self.classes.len() < 2 || self.machines.is_empty() {
            return Err(Error::InvalidParameter("SVM model has fewer than two classes".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: SvmModel = serde_json::from_str(&text)?;
        model.check()?;
        Ok(model)
    }
}
