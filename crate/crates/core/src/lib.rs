//! Media outlet profiling: prompt elicitation, TF-IDF features, an RBF SVM
//! and ordinal evaluation for factuality and political-bias labels.

pub mod corpus;
pub mod domain;
pub mod elicitation;
pub mod error;
pub mod eval;
pub mod features;
pub mod model;
pub mod pipeline;
pub mod prompts;
pub mod synthetic;
pub mod zeroshot;

pub use domain::{
    collapse_bias5, encode_ordinal, parse_label, BiasLabel3, BiasLabel5, CollapsePolicy, Domain,
    FactualityLabel, Label, OrdinalLabel, Outlet, Region, TaskKind, Verdict,
};
pub use error::{Error, Result};
pub use prompts::{PromptInstance, PromptLibrary, Suite, TemplateCategory};
pub use corpus::{LabeledCorpus, SplitManifest, SplitSpec, DEFAULT_SEED};
pub use eval::{AbstainPolicy, EvalReport};
pub use features::{AblationConfig, AblationMode, SparseVector, TfidfModel};
pub use model::{GridSpec, MultiClass, SvmHyperparams, SvmModel};
pub use pipeline::{TrainConfig, TrainedModel};
