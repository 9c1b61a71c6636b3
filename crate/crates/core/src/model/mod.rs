//! RBF-kernel SVM, hyperparameter grid search and the majority baseline.

mod grid;
mod smo;
mod svm;

pub use grid::{grid_search, stratified_folds, GridCell, GridResult, GridSpec};
pub use svm::{
    rbf_kernel, train_svm, BinaryMachine, MultiClass, SvmHyperparams, SvmModel, TrainWarning,
};

use crate::domain::Label;
use crate::error::{Error, Result};

/// Constant classifier predicting the most frequent training label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MajorityBaseline {
    pub label: Label,
}

impl MajorityBaseline {
    /// Ties go to the lower ordinal code.
    pub fn fit(labels: &[Label]) -> Result<Self> {
        let task = labels.first().ok_or(Error::Empty)?.task();
        let mut counts = vec![0usize; task.num_classes()];
        for l in labels {
            counts[l.code() as usize] += 1;
        }
        let mut best = 0;
        for (code, &n) in counts.iter().enumerate() {
            if n > counts[best] {
                best = code;
            }
        }
        let label = Label::from_code(task, best as u8).expect("code in range");
        Ok(MajorityBaseline { label })
    }

    pub fn predict(&self) -> Label {
        self.label
    }

    pub fn predict_all(&self, n: usize) -> Vec<Label> {
        vec![self.label; n]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{BiasLabel3, FactualityLabel};

    #[test]
    fn majority_of_factuality_distribution() {
        let mut labels = vec![Label::Factuality(FactualityLabel::Low); 597];
        labels.extend(vec![Label::Factuality(FactualityLabel::Mixed); 1200]);
        labels.extend(vec![Label::Factuality(FactualityLabel::High); 2395]);
        let m = MajorityBaseline::fit(&labels).unwrap();
        assert_eq!(m.predict(), Label::Factuality(FactualityLabel::High));
    }

    #[test]
    fn ties_go_low() {
        let labels = [
            Label::Bias3(BiasLabel3::Right),
            Label::Bias3(BiasLabel3::Center),
            Label::Bias3(BiasLabel3::Center),
            Label::Bias3(BiasLabel3::Right),
        ];
        assert_eq!(
            MajorityBaseline::fit(&labels).unwrap().predict(),
            Label::Bias3(BiasLabel3::Center)
        );
        assert!(matches!(MajorityBaseline::fit(&[]), Err(Error::Empty)));
    }
}
