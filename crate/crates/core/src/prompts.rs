//! Prompt templates and rendering.
//!
//! Template wording lives in `resources/templates.json` and is compiled into
//! the crate. Placeholders use single-brace `{name}` syntax; bound values are
//! inserted verbatim and never re-scanned, so article text containing braces
//! is safe.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{Domain, TaskKind};
use crate::error::{Error, Result};

/// Bundled template resource, byte-for-byte.
pub const TEMPLATE_RESOURCE: &str = include_str!("../resources/templates.json");

/// SHA-256 of [`TEMPLATE_RESOURCE`].
pub const TEMPLATE_RESOURCE_SHA256: &str =
    "1300a61405126f7ce848ef397d54a46f08991fb4a852e3a2d6beaa9d5fb8c4ca";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TemplateCategory {
    StancePublicFigure,
    StancePopularTopic,
    FactualityQuestion,
    SystematicPolicy,
    ZeroShotName,
    ZeroShotArticle,
    Summarize,
}

impl TemplateCategory {
    /// Key that carries the judgment in a JSON answer of this category.
    pub fn answer_key(self) -> Option<&'static str> {
        match self {
            Self::StancePublicFigure | Self::StancePopularTopic => Some("stance"),
            Self::FactualityQuestion => Some("answer"),
            Self::SystematicPolicy => Some("leaning"),
            Self::ZeroShotName | Self::ZeroShotArticle => Some("label"),
            Self::Summarize => None,
        }
    }
}

impl fmt::Display for TemplateCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Var(String),
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

fn segments(template: &str) -> Vec<Segment> {
    let mut out = Vec::new();
    let mut text = String::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let name_len = after
            .char_indices()
            .find(|&(_, c)| !is_ident(c))
            .map(|(i, _)| i)
            .unwrap_or(after.len());
        let name = &after[..name_len];
        let closed = after[name_len..].starts_with('}');
        if closed && name.chars().next().is_some_and(is_ident_start) {
            text.push_str(&rest[..open]);
            if !text.is_empty() {
                out.push(Segment::Text(std::mem::take(&mut text)));
            }
            out.push(Segment::Var(name.to_string()));
            rest = &after[name_len + 1..];
        } else {
            text.push_str(&rest[..=open]);
            rest = after;
        }
    }
    text.push_str(rest);
    if !text.is_empty() {
        out.push(Segment::Text(text));
    }
    out
}

/// Placeholder names referenced by a template string, in first-use order.
pub fn placeholders_in(template: &str) -> Vec<String> {
    let mut seen = Vec::new();
    for seg in segments(template) {
        if let Segment::Var(name) = seg {
            if !seen.contains(&name) {
                seen.push(name);
            }
        }
    }
    seen
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub category: TemplateCategory,
    #[serde(rename = "system")]
    pub system_template: String,
    #[serde(rename = "user")]
    pub user_template: String,
    pub placeholders: BTreeSet<String>,
}

impl PromptTemplate {
    fn check(&self) -> Result<()> {
        let used: BTreeSet<String> = placeholders_in(&self.system_template)
            .into_iter()
            .chain(placeholders_in(&self.user_template))
            .collect();
        if used != self.placeholders {
            return Err(Error::TemplateResource(format!(
                "{}: declared placeholders {:?} but templates use {:?}",
                self.id, self.placeholders, used
            )));
        }
        Ok(())
    }

    fn fill(&self, template: &str, bindings: &BTreeMap<&str, &str>) -> Result<String> {
        let mut out = String::with_capacity(template.len() + 64);
        for seg in segments(template) {
            match seg {
                Segment::Text(t) => out.push_str(&t),
                Segment::Var(name) => match bindings.get(name.as_str()) {
                    Some(v) if !v.is_empty() => out.push_str(v),
                    _ => {
                        return Err(Error::UnknownPlaceholder {
                            template: self.id.clone(),
                            name,
                        })
                    }
                },
            }
        }
        Ok(out)
    }

    /// Render `(system, user)` from a complete binding.
    pub fn render(&self, bindings: &BTreeMap<&str, &str>) -> Result<(String, String)> {
        Ok((
            self.fill(&self.system_template, bindings)?,
            self.fill(&self.user_template, bindings)?,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyTopicDefinition {
    pub topic: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    #[serde(rename = "left")]
    pub def_left: String,
    #[serde(rename = "right")]
    pub def_right: String,
}

impl PolicyTopicDefinition {
    pub fn matches(&self, name: &str) -> bool {
        self.topic.eq_ignore_ascii_case(name)
            || self.aliases.iter().any(|a| a.eq_ignore_ascii_case(name))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptInstance {
    pub template_id: String,
    pub category: TemplateCategory,
    pub outlet_domain: Option<Domain>,
    /// Figure, topic or question id this prompt asks about.
    pub topic: Option<String>,
    pub system_text: String,
    pub user_text: String,
    pub content_hash: String,
}

impl PromptInstance {
    fn new(
        template: &PromptTemplate,
        outlet_domain: Option<Domain>,
        topic: Option<String>,
        system_text: String,
        user_text: String,
    ) -> Self {
        let content_hash = content_hash(&template.id, &system_text, &user_text);
        PromptInstance {
            template_id: template.id.clone(),
            category: template.category,
            outlet_domain,
            topic,
            system_text,
            user_text,
            content_hash,
        }
    }
}

/// Hex SHA-256 over the template id and both rendered texts, NUL-separated.
pub fn content_hash(template_id: &str, system_text: &str, user_text: &str) -> String {
    let mut h = Sha256::new();
    h.update(template_id.as_bytes());
    h.update([0u8]);
    h.update(system_text.as_bytes());
    h.update([0u8]);
    h.update(user_text.as_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Deserialize)]
struct ResourceFile {
    version: u32,
    shared: BTreeMap<String, String>,
    public_figures: Vec<String>,
    popular_topics: Vec<String>,
    templates: Vec<PromptTemplate>,
    policy_topics: Vec<PolicyTopicDefinition>,
}

pub const FACTUALITY_QUESTION_IDS: [&str; 6] = [
    "factuality_q1",
    "factuality_q2",
    "factuality_q3",
    "factuality_q4",
    "factuality_q5",
    "factuality_q6",
];

/// Which prompt families to run for an outlet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Handcrafted,
    Systematic,
    #[default]
    Both,
}

impl Suite {
    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Handcrafted => "handcrafted",
            Suite::Systematic => "systematic",
            Suite::Both => "both",
        }
    }

    pub fn includes(self, category: TemplateCategory) -> bool {
        match category {
            TemplateCategory::StancePublicFigure
            | TemplateCategory::StancePopularTopic
            | TemplateCategory::FactualityQuestion => self != Suite::Systematic,
            TemplateCategory::SystematicPolicy => self != Suite::Handcrafted,
            _ => false,
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "handcrafted" => Ok(Suite::Handcrafted),
            "systematic" => Ok(Suite::Systematic),
            "both" => Ok(Suite::Both),
            other => Err(Error::InvalidParameter(format!("unknown suite {other:?}"))),
        }
    }
}

/// Loaded templates plus the figure/topic lists used to build suites.
#[derive(Debug, Clone)]
pub struct PromptLibrary {
    templates: BTreeMap<String, PromptTemplate>,
    shared: BTreeMap<String, String>,
    policy_topics: Vec<PolicyTopicDefinition>,
    public_figures: Vec<String>,
    popular_topics: Vec<String>,
}

impl PromptLibrary {
    pub fn from_json(text: &str) -> Result<Self> {
        let res: ResourceFile = serde_json::from_str(text)
            .map_err(|e| Error::TemplateResource(e.to_string()))?;
        if res.version != 1 {
            return Err(Error::TemplateResource(format!(
                "unsupported version {}",
                res.version
            )));
        }
        let mut templates = BTreeMap::new();
        for t in res.templates {
            t.check()?;
            if templates.insert(t.id.clone(), t).is_some() {
                return Err(Error::TemplateResource("duplicate template id".into()));
            }
        }
        if res.policy_topics.len() != 16 {
            return Err(Error::TemplateResource(format!(
                "expected 16 policy topics, found {}",
                res.policy_topics.len()
            )));
        }
        if res
            .policy_topics
            .iter()
            .any(|d| d.def_left.is_empty() || d.def_right.is_empty())
        {
            return Err(Error::TemplateResource("empty policy definition".into()));
        }
        let lib = PromptLibrary {
            templates,
            shared: res.shared,
            policy_topics: res.policy_topics,
            public_figures: res.public_figures,
            popular_topics: res.popular_topics,
        };
        for id in FACTUALITY_QUESTION_IDS
            .iter()
            .chain(&["stance_public_figure", "stance_popular_topic", "systematic_policy", "summarize"])
        {
            lib.template(id)?;
        }
        Ok(lib)
    }

    /// The compiled-in library.
    pub fn bundled() -> &'static PromptLibrary {
        static LIB: OnceLock<PromptLibrary> = OnceLock::new();
        LIB.get_or_init(|| {
            PromptLibrary::from_json(TEMPLATE_RESOURCE).expect("bundled templates are valid")
        })
    }

    pub fn with_public_figures(mut self, figures: Vec<String>) -> Self {
        self.public_figures = figures;
        self
    }

    pub fn with_popular_topics(mut self, topics: Vec<String>) -> Self {
        self.popular_topics = topics;
        self
    }

    pub fn public_figures(&self) -> &[String] {
        &self.public_figures
    }

    pub fn popular_topics(&self) -> &[String] {
        &self.popular_topics
    }

    pub fn policy_topics(&self) -> &[PolicyTopicDefinition] {
        &self.policy_topics
    }

    pub fn templates(&self) -> impl Iterator<Item = &PromptTemplate> {
        self.templates.values()
    }

    pub fn template(&self, id: &str) -> Result<&PromptTemplate> {
        self.templates
            .get(id)
            .ok_or_else(|| Error::UnknownTemplate(id.to_string()))
    }

    /// Look up a policy topic by canonical name or alias.
    pub fn policy_topic(&self, name: &str) -> Result<&PolicyTopicDefinition> {
        self.policy_topics
            .iter()
            .find(|d| d.matches(name))
            .ok_or_else(|| Error::UnknownTopic(name.to_string()))
    }

    fn render_with(
        &self,
        id: &str,
        domain: Option<&Domain>,
        topic: Option<&str>,
        extra: &[(&str, &str)],
    ) -> Result<PromptInstance> {
        let template = self.template(id)?;
        let mut bindings: BTreeMap<&str, &str> = self
            .shared
            .iter()
            .map(|(k, v)| (k.as_str(), v.as_str()))
            .collect();
        if let Some(d) = domain {
            bindings.insert("domain", d.as_str());
        }
        bindings.extend(extra.iter().copied());
        let (system, user) = template.render(&bindings)?;
        Ok(PromptInstance::new(
            template,
            domain.cloned(),
            topic.map(str::to_string),
            system,
            user,
        ))
    }

    pub fn render_public_figure(&self, domain: &Domain, figure: &str) -> Result<PromptInstance> {
        self.render_with(
            "stance_public_figure",
            Some(domain),
            Some(figure),
            &[("topicPublicFigure", figure)],
        )
    }

    pub fn render_popular_topic(&self, domain: &Domain, topic: &str) -> Result<PromptInstance> {
        self.render_with(
            "stance_popular_topic",
            Some(domain),
            Some(topic),
            &[("topic", topic)],
        )
    }

    /// The six credibility questions, Q1..Q6.
    pub fn render_factuality_questions(&self, domain: &Domain) -> Result<Vec<PromptInstance>> {
        FACTUALITY_QUESTION_IDS
            .iter()
            .enumerate()
            .map(|(i, id)| {
                let q = format!("Q{}", i + 1);
                self.render_with(id, Some(domain), Some(&q), &[])
            })
            .collect()
    }

    pub fn render_systematic(
        &self,
        domain: &Domain,
        topic_def: &PolicyTopicDefinition,
    ) -> Result<PromptInstance> {
        let canonical = self.policy_topic(&topic_def.topic)?;
        if canonical != topic_def {
            return Err(Error::UnknownTopic(topic_def.topic.clone()));
        }
        self.render_with(
            "systematic_policy",
            Some(domain),
            Some(&canonical.topic),
            &[
                ("topic", &canonical.topic),
                ("defLeft", &canonical.def_left),
                ("defRight", &canonical.def_right),
            ],
        )
    }

    /// Name-only prompt when `article` is `None`, article-evidence prompt otherwise.
    pub fn render_zeroshot(
        &self,
        domain: &Domain,
        task: TaskKind,
        article: Option<&str>,
    ) -> Result<PromptInstance> {
        match article {
            None => self.render_with(&format!("zeroshot_name_{task}"), Some(domain), None, &[]),
            Some(text) => {
                if text.trim().is_empty() {
                    return Err(Error::EmptyArticle);
                }
                self.render_with(
                    &format!("zeroshot_article_{task}"),
                    Some(domain),
                    None,
                    &[("media", domain.as_str()), ("article", text)],
                )
            }
        }
    }

    pub fn render_summarize(&self, article: &str) -> Result<PromptInstance> {
        if article.trim().is_empty() {
            return Err(Error::EmptyArticle);
        }
        self.render_with("summarize", None, None, &[("article", article)])
    }

    /// 7 figure stances, 5 topic stances, then Q1..Q6 (18 with default lists).
    pub fn handcrafted_suite(&self, domain: &Domain) -> Result<Vec<PromptInstance>> {
        let mut out = Vec::with_capacity(18);
        for figure in &self.public_figures {
            out.push(self.render_public_figure(domain, figure)?);
        }
        for topic in &self.popular_topics {
            out.push(self.render_popular_topic(domain, topic)?);
        }
        out.extend(self.render_factuality_questions(domain)?);
        Ok(out)
    }

    /// Handcrafted prompts first, then systematic ones.
    pub fn suite(&self, domain: &Domain, suite: Suite) -> Result<Vec<PromptInstance>> {
        let mut out = Vec::new();
        if suite != Suite::Systematic {
            out.extend(self.handcrafted_suite(domain)?);
        }
        if suite != Suite::Handcrafted {
            out.extend(self.systematic_suite(domain)?);
        }
        Ok(out)
    }

    /// One prompt per policy area, in resource order (16).
    pub fn systematic_suite(&self, domain: &Domain) -> Result<Vec<PromptInstance>> {
        self.policy_topics
            .iter()
            .map(|d| self.render_systematic(domain, d))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lib() -> &'static PromptLibrary {
        PromptLibrary::bundled()
    }

    fn fox() -> Domain {
        Domain::parse("foxnews.com").unwrap()
    }

    #[test]
    fn resource_checksum_is_pinned() {
        let digest = hex::encode(Sha256::digest(TEMPLATE_RESOURCE.as_bytes()));
        assert_eq!(digest, TEMPLATE_RESOURCE_SHA256);
    }

    #[test]
    fn segment_parsing() {
        assert_eq!(placeholders_in("Is {domain} pro-{x}."), vec!["domain", "x"]);
        assert!(placeholders_in("{ not a var } {}").is_empty());
        assert_eq!(placeholders_in("{a}{a}"), vec!["a"]);
    }

    #[test]
    fn public_figure_rendering() {
        let p = lib().render_public_figure(&fox(), "Trump").unwrap();
        assert_eq!(
            p.user_text,
            "Is foxnews.com pro-Trump. The assistant must provide the stance and reasoning in JSON format, and should not provide anything else."
        );
        let cnn = Domain::parse("cnn.com").unwrap();
        let q = lib().render_public_figure(&cnn, "Biden").unwrap();
        assert!(q.user_text.starts_with("Is cnn.com pro-Biden."));
        assert!(!q.user_text.contains('{') && !q.system_text.contains('{'));
        assert!(matches!(
            lib().render_public_figure(&fox(), ""),
            Err(Error::UnknownPlaceholder { .. })
        ));
    }

    #[test]
    fn popular_topic_rendering() {
        let p = lib().render_popular_topic(&fox(), "Ukraine").unwrap();
        assert!(p.user_text.starts_with("What is the stance of foxnews.com on Ukraine."));
        let q = lib()
            .render_popular_topic(&Domain::parse("example.org").unwrap(), "Abortion")
            .unwrap();
        assert!(q.user_text.contains("JSON format"));
    }

    #[test]
    fn factuality_questions() {
        let qs = lib().render_factuality_questions(&fox()).unwrap();
        assert_eq!(qs.len(), 6);
        assert_eq!(
            qs[1].user_text,
            "Has foxnews.com failed fact-checks? Answer in one word. Assistant must return the 'answer' and 'reason' in JSON format, and do not provide anything else."
        );
        assert!(qs[2].user_text.contains("LEFT, CENTER, or Right"));
        assert_eq!(qs[5].topic.as_deref(), Some("Q6"));
    }

    #[test]
    fn systematic_rendering() {
        let abortion = lib().policy_topic("Abortion").unwrap();
        let p = lib().render_systematic(&fox(), abortion).unwrap();
        assert!(p.system_text.contains("- left: Legal in most cases."));
        assert!(p.system_text.contains("- right: Generally illegal with some exceptions."));
        assert_eq!(p.user_text, "foxnews.com");
        assert_eq!(lib().systematic_suite(&fox()).unwrap().len(), 16);
    }

    #[test]
    fn systematic_rejects_unknown_topic() {
        let bogus = PolicyTopicDefinition {
            topic: "Space Policy".into(),
            aliases: vec![],
            def_left: "x".into(),
            def_right: "y".into(),
        };
        assert!(matches!(
            lib().render_systematic(&fox(), &bogus),
            Err(Error::UnknownTopic(_))
        ));
        let mut tampered = lib().policy_topic("Taxes").unwrap().clone();
        tampered.def_left.push('!');
        assert!(lib().render_systematic(&fox(), &tampered).is_err());
    }

    #[test]
    fn topic_aliases() {
        assert_eq!(
            lib().policy_topic("Worker's/Business Rights").unwrap().topic,
            "Business Rights"
        );
        assert_eq!(lib().policy_topic("Social View").unwrap().topic, "Social Views");
    }

    #[test]
    fn zeroshot_rendering() {
        let v = Domain::parse("vancouvertimes.org").unwrap();
        let p = lib().render_zeroshot(&v, TaskKind::Factuality, None).unwrap();
        assert!(p.system_text.contains("- high\n- mixed\n- low\n"));
        assert!(p.system_text.ends_with("Return -1 if you can not classify."));
        assert_eq!(p.user_text, "vancouvertimes.org");

        let b = lib().render_zeroshot(&fox(), TaskKind::Bias3, None).unwrap();
        assert!(b.system_text.contains("- left\n- center\n- right\n"));

        let b5 = lib().render_zeroshot(&fox(), TaskKind::Bias5, None).unwrap();
        assert!(b5
            .system_text
            .contains("- left\n- left-center\n- center\n- right-center\n- right\n"));

        let a = lib()
            .render_zeroshot(&fox(), TaskKind::Factuality, Some("summary..."))
            .unwrap();
        assert_eq!(a.user_text, "summary...");
        assert!(a.system_text.contains("news article of foxnews.com into"));
        assert!(matches!(
            lib().render_zeroshot(&fox(), TaskKind::Bias3, Some("  ")),
            Err(Error::EmptyArticle)
        ));
    }

    #[test]
    fn summarize_rendering() {
        let p = lib().render_summarize("Some article.").unwrap();
        assert!(p
            .system_text
            .starts_with("Summarize the following news article in 250-300 words."));
        assert_eq!(p.user_text, "Some article.");
        assert_eq!(p, lib().render_summarize("Some article.").unwrap());
        assert!(matches!(lib().render_summarize(""), Err(Error::EmptyArticle)));
    }

    #[test]
    fn bound_values_are_not_rescanned() {
        let p = lib().render_summarize("text with {domain} inside").unwrap();
        assert_eq!(p.user_text, "text with {domain} inside");
    }

    #[test]
    fn suite_sizes() {
        let hc = lib().handcrafted_suite(&fox()).unwrap();
        assert_eq!(hc.len(), 18);
        let custom = lib()
            .clone()
            .with_public_figures(vec!["Macron".into()])
            .with_popular_topics(vec![]);
        assert_eq!(custom.handcrafted_suite(&fox()).unwrap().len(), 7);
        assert_eq!(lib().suite(&fox(), Suite::Both).unwrap().len(), 34);
        assert_eq!(lib().suite(&fox(), Suite::Systematic).unwrap().len(), 16);
    }

    #[test]
    fn bad_resource_is_rejected() {
        let broken = TEMPLATE_RESOURCE.replace(
            "\"placeholders\": [\n        \"article\"\n      ]",
            "\"placeholders\": []",
        );
        assert_ne!(broken, TEMPLATE_RESOURCE);
        assert!(matches!(
            PromptLibrary::from_json(&broken),
            Err(Error::TemplateResource(_))
        ));
    }

    proptest! {
        #[test]
        fn domain_appears_once_in_handcrafted(name in "[a-z]{3,12}", tld in prop::sample::select(vec!["com", "org", "net"])) {
            let d = Domain::parse(&format!("{name}.{tld}")).unwrap();
            let suite = lib().handcrafted_suite(&d).unwrap();
            for p in &suite {
                prop_assert_eq!(p.user_text.matches(d.as_str()).count(), 1);
                prop_assert!(!p.system_text.contains(d.as_str()));
                prop_assert_eq!(&p.content_hash, &content_hash(&p.template_id, &p.system_text, &p.user_text));
            }
            for p in lib().systematic_suite(&d).unwrap() {
                prop_assert_eq!(p.user_text, d.as_str());
            }
        }
    }
}
