use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::svm::{fit_subset, DistMatrix, MultiClass, SvmHyperparams};
use crate::corpus::DEFAULT_SEED;
use crate::domain::Label;
use crate::error::{Error, Result};
use crate::features::SparseVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub c_values: Vec<f64>,
    pub gamma_values: Vec<f64>,
    pub cv_folds: usize,
    pub seed: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            c_values: vec![0.1, 1.0, 10.0, 100.0],
            gamma_values: vec![0.001, 0.01, 0.1, 1.0],
            cv_folds: 5,
            seed: DEFAULT_SEED,
        }
    }
}

impl GridSpec {
    pub fn single(c: f64, gamma: f64) -> Self {
        GridSpec {
            c_values: vec![c],
            gamma_values: vec![gamma],
            ..GridSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_values.is_empty() || self.gamma_values.is_empty() {
            return Err(Error::InvalidParameter("grid value lists must be non-empty".into()));
        }
        if self.cv_folds < 2 {
            return Err(Error::InvalidParameter(format!(
                "cv_folds must be >= 2, got {}",
                self.cv_folds
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub c: f64,
    pub gamma: f64,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: SvmHyperparams,
    /// Index into `cells`; cells are row-major with C outer, γ inner.
    pub best_index: usize,
    pub cells: Vec<GridCell>,
}

/// Fold number for each item; every class is spread round-robin over the
/// folds after a seeded shuffle.
pub fn stratified_folds(labels: &[Label], k: usize, seed: u64) -> Result<Vec<usize>> {
    let mut by_class: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        by_class.entry(*l).or_default().push(i);
    }
    if let Some((l, members)) = by_class.iter().find(|(_, m)| m.len() < k) {
        return Err(Error::ClassTooSmall {
            label: l.to_string(),
            count: members.len(),
            needed: k,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold = vec![0; labels.len()];
    let mut next = 0;
    for members in by_class.values_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            fold[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(fold)
}

/// Stratified k-fold cross-validated accuracy for every (C, γ) cell.
pub fn grid_search(
    data: &[(SparseVector, Label)],
    spec: &GridSpec,
    base: &SvmHyperparams,
    strategy: MultiClass,
) -> Result<GridResult> {
    spec.validate()?;
    if data.is_empty() {
        return Err(Error::Empty);
    }
    let xs: Vec<SparseVector> = data.iter().map(|(x, _)| x.clone()).collect();
    let labels: Vec<Label> = data.iter().map(|(_, l)| *l).collect();
    let folds = stratified_folds(&labels, spec.cv_folds, spec.seed)?;
    let dist = DistMatrix::new(&xs);

    let cells: Vec<(f64, f64)> = spec
        .c_values
        .iter()
        .flat_map(|&c| spec.gamma_values.iter().map(move |&g| (c, g)))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|cell| (0..spec.cv_folds).map(move |f| (cell, f)))
        .collect();
    let scores: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(cell, f)| {
            let (c, gamma) = cells[cell];
            let hp = SvmHyperparams { c, gamma, ..*base };
            let train: Vec<usize> = (0..data.len()).filter(|&i| folds[i] != f).collect();
            let held: Vec<usize> = (0..data.len()).filter(|&i| folds[i] == f).collect();
            let model = fit_subset(&xs, &labels, &dist, &train, &hp, strategy)?;
            let correct = held
                .iter()
                .map(|&i| model.predict(&xs[i]).map(|p| p == labels[i]))
                .collect::<Result<Vec<bool>>>()?
                .into_iter()
                .filter(|&ok| ok)
                .count();
            Ok(correct as f64 / held.len() as f64)
        })
        .collect();
    let scores = scores.into_iter().collect::<Result<Vec<f64>>>()?;

    let cells: Vec<GridCell> = cells
        .iter()
        .enumerate()
        .map(|(i, &(c, gamma))| {
            let fold_accuracies = scores[i * spec.cv_folds..(i + 1) * spec.cv_folds].to_vec();
            let mean_accuracy = fold_accuracies.iter().sum::<f64>() / spec.cv_folds as f64;
            GridCell {
                c,
                gamma,
                fold_accuracies,
                mean_accuracy,
            }
        })
        .collect();
    let mut best_index = 0;
    for (i, cell) in cells.iter().enumerate() {
        if cell.mean_accuracy > cells[best_index].mean_accuracy {
            best_index = i;
        }
    }
    let best = SvmHyperparams {
        c: cells[best_index].c,
        gamma: cells[best_index].gamma,
        ..*base
    };
    Ok(GridResult {
        best,
        best_index,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::TaskKind;
    use rand::Rng;

    fn f(code: u8) -> Label {
        Label::from_code(TaskKind::Factuality, code).unwrap()
    }

    fn blobs(n_per: usize, seed: u64) -> Vec<(SparseVector, Label)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = [[0.0, 2.0], [2.0, -1.0], [-2.0, -1.0]];
        let mut out = Vec::new();
        for (c, ctr) in centers.iter().enumerate() {
            for _ in 0..n_per {
                let p = [ctr[0] + rng.gen_range(-0.8..0.8), ctr[1] + rng.gen_range(-0.8..0.8)];
                out.push((SparseVector::from_dense(&p), f(c as u8)));
            }
        }
        out
    }

    #[test]
    fn folds_are_stratified() {
        let labels: Vec<Label> = (0..30).map(|i| f((i % 3) as u8)).collect();
        let folds = stratified_folds(&labels, 5, 1).unwrap();
        for k in 0..5 {
            for c in 0..3 {
                let n = (0..30).filter(|&i| folds[i] == k && labels[i].code() == c).count();
                assert_eq!(n, 2);
            }
        }
        assert_eq!(folds, stratified_folds(&labels, 5, 1).unwrap());
        assert!(matches!(
            stratified_folds(&labels[..12], 5, 1),
            Err(Error::ClassTooSmall { count: 4, needed: 5, .. })
        ));
    }

    #[test]
    fn singleton_grid() {
        let data = blobs(10, 1);
        let r = grid_search(&data, &GridSpec::single(1.0, 0.5), &SvmHyperparams::default(), MultiClass::OneVsOne).unwrap();
        assert_eq!(r.cells.len(), 1);
        assert_eq!(r.best_index, 0);
        assert_eq!((r.best.c, r.best.gamma), (1.0, 0.5));
    }

    #[test]
    fn duplicate_values_score_identically() {
        let data = blobs(10, 2);
        let spec = GridSpec {
            c_values: vec![1.0, 1.0],
            gamma_values: vec![0.1, 1.0],
            cv_folds: 3,
            seed: 4,
        };
        let r = grid_search(&data, &spec, &SvmHyperparams::default(), MultiClass::OneVsOne).unwrap();
        assert_eq!(r.cells[0].fold_accuracies, r.cells[2].fold_accuracies);
        assert_eq!(r.cells[1].fold_accuracies, r.cells[3].fold_accuracies);
    }

    #[test]
    fn best_cell_dominates() {
        let data = blobs(12, 3);
        let spec = GridSpec {
            c_values: vec![1e-4, 1.0, 10.0],
            gamma_values: vec![0.01, 1.0],
            cv_folds: 4,
            seed: 5,
        };
        let r = grid_search(&data, &spec, &SvmHyperparams::default(), MultiClass::OneVsOne).unwrap();
        let best = r.cells[r.best_index].mean_accuracy;
        assert!(r.cells.iter().all(|c| c.mean_accuracy <= best));
        // first of any tied maxima
        assert!(r.cells[..r.best_index].iter().all(|c| c.mean_accuracy < best));
        assert!(r.cells[0].mean_accuracy <= best);
        assert!(best > 0.9);
    }

    #[test]
    fn invalid_specs() {
        let data = blobs(3, 1);
        let spec = GridSpec { cv_folds: 1, ..GridSpec::default() };
        assert!(matches!(
            grid_search(&data, &spec, &SvmHyperparams::default(), MultiClass::OneVsOne),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            grid_search(&data, &GridSpec::default(), &SvmHyperparams::default(), MultiClass::OneVsOne),
            Err(Error::ClassTooSmall { .. })
        ));
    }
}
