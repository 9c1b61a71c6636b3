//! Deterministic synthetic outlets and canned model replies whose wording
//! tracks the gold labels. Used by tests, benchmarks and offline demos.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::domain::{
    collapse_bias5, BiasLabel3, BiasLabel5, CollapsePolicy, Domain, FactualityLabel, OrdinalLabel,
    Outlet, Region,
};
use crate::elicitation::FixtureBackend;
use crate::error::Result;
use crate::prompts::{PromptInstance, PromptLibrary, Suite, TemplateCategory};

/// `n` outlets with a skewed factuality mix (45% high, 35% mixed, 20% low)
/// and bias5 spread evenly over its five values.
pub fn synthetic_outlets(n: usize, seed: u64) -> Vec<Outlet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_high = (n as f64 * 0.45).round() as usize;
    let n_mixed = (n as f64 * 0.35).round() as usize;
    let mut fact: Vec<FactualityLabel> = (0..n)
        .map(|i| match i {
            i if i < n_high => FactualityLabel::High,
            i if i < n_high + n_mixed => FactualityLabel::Mixed,
            _ => FactualityLabel::Low,
        })
        .collect();
    let mut bias: Vec<BiasLabel5> = (0..n).map(|i| BiasLabel5::ALL[i % 5]).collect();
    fact.shuffle(&mut rng);
    bias.shuffle(&mut rng);
    (0..n)
        .map(|i| {
            let mut o = Outlet::new(Domain::parse(&format!("synthetic-{i:03}.com")).expect("valid"))
                .with_bias5(bias[i], CollapsePolicy::DropFringe);
            o.factuality = Some(fact[i]);
            o.alexa_rank = Some(10f64.powf(rng.gen_range(1.0..7.0)) as u64);
            o.region = if rng.gen_bool(0.6) { Region::Us } else { Region::NonUs };
            o
        })
        .collect()
}

/// Answers prompts as an outlet with the given gold labels would, except
/// that a `noise` fraction of replies (chosen by prompt hash) use random
/// labels instead.
#[derive(Debug, Clone)]
pub struct SyntheticResponder {
    outlets: BTreeMap<Domain, (FactualityLabel, BiasLabel5)>,
    seed: u64,
    noise: f64,
}

impl SyntheticResponder {
    pub fn new(outlets: &[Outlet], seed: u64) -> Self {
        let outlets = outlets
            .iter()
            .map(|o| {
                let f = o.factuality.unwrap_or(FactualityLabel::Mixed);
                let b = o.bias5.unwrap_or(BiasLabel5::Center);
                (o.domain.clone(), (f, b))
            })
            .collect();
        SyntheticResponder {
            outlets,
            seed,
            noise: 0.25,
        }
    }

    pub fn with_noise(mut self, noise: f64) -> Self {
        self.noise = noise.clamp(0.0, 1.0);
        self
    }

    pub fn reply(&self, prompt: &PromptInstance) -> String {
        let hash_seed = u64::from_str_radix(&prompt.content_hash[..16], 16).unwrap_or(0);
        let mut rng = ChaCha8Rng::seed_from_u64(hash_seed ^ self.seed);
        let gold = prompt
            .outlet_domain
            .as_ref()
            .and_then(|d| self.outlets.get(d).copied());
        let (fact, bias) = match gold {
            Some(g) if !rng.gen_bool(self.noise) => g,
            _ => (
                FactualityLabel::ALL[rng.gen_range(0..3)],
                BiasLabel5::ALL[rng.gen_range(0..5)],
            ),
        };
        let side = collapse_bias5(bias);
        let reason = format!("{} framing with {}", bias_words(bias), fact_words(fact));
        let value = match prompt.category {
            TemplateCategory::StancePublicFigure | TemplateCategory::StancePopularTopic => {
                json!({"stance": stance_word(side), "reason": reason})
            }
            TemplateCategory::FactualityQuestion if prompt.template_id == "factuality_q3" => {
                json!({"answer": side.as_str(), "reason": reason})
            }
            TemplateCategory::FactualityQuestion => {
                json!({"answer": fact_answer(fact), "reason": reason})
            }
            TemplateCategory::SystematicPolicy => {
                json!({"leaning": side.as_str(), "reason": reason})
            }
            TemplateCategory::ZeroShotName | TemplateCategory::ZeroShotArticle => {
                let label = if prompt.template_id.ends_with("factuality") {
                    fact.as_str()
                } else if prompt.template_id.ends_with("bias5") {
                    bias.as_str()
                } else {
                    side.as_str()
                };
                json!({"label": label, "reason": reason})
            }
            TemplateCategory::Summarize => return format!("A report with {}.", bias_words(bias)),
        };
        value.to_string()
    }
}

/// Write one fixture file per prompt of `suite` for every outlet.
pub fn write_fixtures(
    dir: &Path,
    library: &PromptLibrary,
    outlets: &[Outlet],
    suite: Suite,
    responder: &SyntheticResponder,
) -> Result<usize> {
    let mut written = 0;
    for o in outlets {
        for p in library.suite(&o.domain, suite)? {
            FixtureBackend::write_fixture(dir, &p, &responder.reply(&p))?;
            written += 1;
        }
    }
    Ok(written)
}

fn bias_words(b: BiasLabel5) -> &'static str {
    match b {
        BiasLabel5::Left => "progressive activist",
        BiasLabel5::LeftCenter => "progressive moderate",
        BiasLabel5::Center => "balanced neutral",
        BiasLabel5::RightCenter => "conservative moderate",
        BiasLabel5::Right => "conservative nationalist",
    }
}

fn fact_words(f: FactualityLabel) -> &'static str {
    match f {
        FactualityLabel::Low => "fabricated clickbait claims",
        FactualityLabel::Mixed => "uneven occasionally corrected sourcing",
        FactualityLabel::High => "rigorous transparent sourcing",
    }
}

fn stance_word(side: BiasLabel3) -> &'static str {
    match side {
        BiasLabel3::Left => "pro",
        BiasLabel3::Center => "neutral",
        BiasLabel3::Right => "con",
    }
}

fn fact_answer(f: FactualityLabel) -> &'static str {
    match f {
        FactualityLabel::Low => "no",
        FactualityLabel::Mixed => "sometimes",
        FactualityLabel::High => "yes",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::TaskKind;
    use crate::elicitation::{ElicitedResponse, ResponseStatus};

    #[test]
    fn outlets_are_deterministic_and_skewed() {
        let a = synthetic_outlets(60, 1);
        assert_eq!(a, synthetic_outlets(60, 1));
        let high = a.iter().filter(|o| o.factuality == Some(FactualityLabel::High)).count();
        assert_eq!(high, 27);
        assert!(a.iter().all(|o| o.gold(TaskKind::Factuality).is_some()));
        assert_eq!(a.iter().filter(|o| o.bias3.is_some()).count(), 36);
    }

    #[test]
    fn replies_parse_cleanly() {
        let outlets = synthetic_outlets(3, 2);
        let r = SyntheticResponder::new(&outlets, 2);
        let lib = PromptLibrary::bundled();
        for p in lib.suite(&outlets[0].domain, Suite::Both).unwrap() {
            let reply = r.reply(&p);
            assert_eq!(reply, r.reply(&p));
            let resp = ElicitedResponse::from_reply(&p, "mock", reply, false, chrono::Utc::now());
            assert_eq!(resp.status, ResponseStatus::Ok, "{}", p.template_id);
        }
    }

    #[test]
    fn noiseless_replies_follow_gold() {
        let outlets = synthetic_outlets(5, 3);
        let r = SyntheticResponder::new(&outlets, 3).with_noise(0.0);
        let lib = PromptLibrary::bundled();
        let o = &outlets[0];
        let p = &lib.systematic_suite(&o.domain).unwrap()[0];
        let side = collapse_bias5(o.bias5.unwrap()).as_str();
        assert!(r.reply(p).contains(&format!("\"leaning\":\"{side}\"")));
    }
}
