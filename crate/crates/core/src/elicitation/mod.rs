//! Running prompts against a chat-completion backend.
//!
//! Every [`PromptInstance`] becomes exactly one request; nothing is shared
//! between calls. Replies are parsed against the category's schema and the
//! outcome (including parse failures) is cached by content hash, so replaying
//! a batch against a warm cache issues no requests.

mod backend;
mod cache;
mod parse;
mod rate;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, SecondsFormat, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

pub use backend::{
    extract_content, http_requests_attempted, request_body, BackendError, ChatBackend,
    FixtureBackend, FnBackend, HttpBackend, API_KEY_ENV,
};
pub use cache::ResponseCache;
pub use parse::{
    extract_json_object, parse_response, Answer, ParseFailure, ParseFailureCode, Parsed,
};
pub use rate::{Clock, ManualClock, RateLimiter, SystemClock};

use crate::domain::{Domain, Outlet};
use crate::error::{Error, Result};
use crate::prompts::{PromptInstance, PromptLibrary, Suite, TemplateCategory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub endpoint: String,
    pub model_id: String,
    pub temperature: f64,
    #[serde(with = "secs")]
    pub timeout: Duration,
    pub max_retries: u32,
    /// Requests per minute.
    pub rate_limit: u32,
    /// First retry delay; doubles on each further attempt.
    #[serde(with = "secs")]
    pub backoff_base: Duration,
    #[serde(with = "secs")]
    pub backoff_max: Duration,
}

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model_id: "gpt-3.5-turbo-0125".into(),
            temperature: 0.0,
            timeout: Duration::from_secs(60),
            max_retries: 5,
            rate_limit: 500,
            backoff_base: Duration::from_secs(1),
            backoff_max: Duration::from_secs(60),
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if self.rate_limit == 0 {
            return Err(Error::Config("rate_limit must be > 0".into()));
        }
        if self.model_id.trim().is_empty() {
            return Err(Error::Config("model_id is empty".into()));
        }
        Ok(())
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let factor = 2u32.saturating_pow(attempt.min(20));
        self.backoff_base.saturating_mul(factor).min(self.backoff_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ResponseStatus {
    Ok,
    ParseFailed,
    Abstained,
}

/// A parsed reply, keyed by outlet and template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElicitedResponse {
    pub outlet_domain: Option<Domain>,
    pub template_id: String,
    pub category: TemplateCategory,
    pub topic: Option<String>,
    pub content_hash: String,
    pub model_id: String,
    pub status: ResponseStatus,
    pub parsed: Option<Parsed>,
    pub failure: Option<ParseFailure>,
    pub raw_text: String,
    #[serde(with = "rfc3339")]
    pub fetched_at: DateTime<Utc>,
}

mod rfc3339 {
    use chrono::{DateTime, SecondsFormat, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&t.to_rfc3339_opts(SecondsFormat::Millis, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let s = String::deserialize(d)?;
        DateTime::parse_from_rfc3339(&s)
            .map(|t| t.with_timezone(&Utc))
            .map_err(serde::de::Error::custom)
    }
}

impl ElicitedResponse {
    /// Build a response record from a raw reply.
    pub fn from_reply(
        prompt: &PromptInstance,
        model_id: &str,
        raw_text: String,
        strict: bool,
        fetched_at: DateTime<Utc>,
    ) -> Self {
        let (status, parsed, failure) = match parse_response(&raw_text, prompt.category, strict) {
            Ok(p) => {
                let answers = p.answers();
                let abstained = matches!(
                    prompt.category,
                    TemplateCategory::SystematicPolicy
                        | TemplateCategory::ZeroShotName
                        | TemplateCategory::ZeroShotArticle
                ) && !answers.is_empty()
                    && answers.iter().all(|a| a.is_abstention());
                let status = if abstained {
                    ResponseStatus::Abstained
                } else {
                    ResponseStatus::Ok
                };
                (status, Some(p), None)
            }
            Err(f) => (ResponseStatus::ParseFailed, None, Some(f)),
        };
        ElicitedResponse {
            outlet_domain: prompt.outlet_domain.clone(),
            template_id: prompt.template_id.clone(),
            category: prompt.category,
            topic: prompt.topic.clone(),
            content_hash: prompt.content_hash.clone(),
            model_id: model_id.to_string(),
            status,
            parsed,
            failure,
            raw_text,
            fetched_at: truncate_millis(fetched_at),
        }
    }

    /// Leaf answers, empty when parsing failed.
    pub fn answers(&self) -> Vec<&Answer> {
        self.parsed.as_ref().map(Parsed::answers).unwrap_or_default()
    }
}

fn truncate_millis(t: DateTime<Utc>) -> DateTime<Utc> {
    let s = t.to_rfc3339_opts(SecondsFormat::Millis, true);
    DateTime::parse_from_rfc3339(&s)
        .map(|t| t.with_timezone(&Utc))
        .unwrap_or(t)
}

/// Responses for one outlet plus the prompts whose request failed outright.
#[derive(Debug)]
pub struct OutletElicitation {
    pub domain: Domain,
    pub responses: Vec<ElicitedResponse>,
    pub errors: Vec<(PromptInstance, Error)>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ElicitStats {
    pub cache_hits: u64,
    pub requests: u64,
}

/// Issues prompts through a backend with caching, rate limiting and retries.
pub struct Elicitor {
    backend: Arc<dyn ChatBackend>,
    config: BackendConfig,
    cache: Arc<ResponseCache>,
    limiter: RateLimiter,
    clock: Arc<dyn Clock>,
    strict: bool,
    cache_hits: AtomicU64,
    requests: AtomicU64,
}

impl Elicitor {
    pub fn new(
        backend: Arc<dyn ChatBackend>,
        config: BackendConfig,
        cache: Arc<ResponseCache>,
    ) -> Result<Self> {
        Self::with_clock(backend, config, cache, Arc::new(SystemClock::default()))
    }

    pub fn with_clock(
        backend: Arc<dyn ChatBackend>,
        config: BackendConfig,
        cache: Arc<ResponseCache>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self> {
        config.validate()?;
        Ok(Elicitor {
            backend,
            limiter: RateLimiter::per_minute(config.rate_limit, clock.clone()),
            config,
            cache,
            clock,
            strict: false,
            cache_hits: AtomicU64::new(0),
            requests: AtomicU64::new(0),
        })
    }

    /// Require replies to be a bare JSON object.
    pub fn strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    pub fn stats(&self) -> ElicitStats {
        ElicitStats {
            cache_hits: self.cache_hits.load(Ordering::SeqCst),
            requests: self.requests.load(Ordering::SeqCst),
        }
    }

    fn request(&self, prompt: &PromptInstance) -> Result<String> {
        let attempts = self.config.max_retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let delay = self.config.backoff(attempt - 1);
                debug!(hash = %prompt.content_hash, attempt, ?delay, "retrying");
                self.clock.sleep(delay);
            }
            if self.backend.is_networked() {
                self.limiter.acquire();
            }
            self.requests.fetch_add(1, Ordering::SeqCst);
            match self.backend.complete(prompt, &self.config) {
                Ok(text) => return Ok(text),
                Err(BackendError::Transient(m)) => {
                    warn!(hash = %prompt.content_hash, attempt, "transient backend error: {m}");
                    last = m;
                }
                Err(BackendError::Fatal(m)) => {
                    return Err(Error::Network {
                        attempts: attempt + 1,
                        message: m,
                    })
                }
            }
        }
        Err(Error::Network {
            attempts,
            message: last,
        })
    }

    /// Cached response, or one backend request parsed and stored.
    pub fn elicit(&self, prompt: &PromptInstance) -> Result<ElicitedResponse> {
        if let Some(hit) = self.cache.lookup(&prompt.content_hash, &self.config.model_id) {
            self.cache_hits.fetch_add(1, Ordering::SeqCst);
            return Ok(ElicitedResponse {
                outlet_domain: prompt.outlet_domain.clone(),
                ..hit
            });
        }
        let raw = self.request(prompt)?;
        let response =
            ElicitedResponse::from_reply(prompt, &self.config.model_id, raw, self.strict, Utc::now());
        self.cache.store(response.clone())?;
        Ok(response)
    }

    /// Elicit a batch in parallel; results keep input order.
    pub fn elicit_all(&self, prompts: &[PromptInstance]) -> Vec<Result<ElicitedResponse>> {
        prompts.par_iter().map(|p| self.elicit(p)).collect()
    }

    /// All prompts of `suite` for one outlet, in suite order. Failed requests
    /// are collected in `errors`; the outlet is never abandoned midway.
    pub fn elicit_outlet(
        &self,
        library: &PromptLibrary,
        outlet: &Outlet,
        suite: Suite,
    ) -> Result<OutletElicitation> {
        let prompts = library.suite(&outlet.domain, suite)?;
        let mut responses = Vec::with_capacity(prompts.len());
        let mut errors = Vec::new();
        for (prompt, result) in prompts.iter().zip(self.elicit_all(&prompts)) {
            match result {
                Ok(r) => responses.push(r),
                Err(e) => errors.push((prompt.clone(), e)),
            }
        }
        Ok(OutletElicitation {
            domain: outlet.domain.clone(),
            responses,
            errors,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    fn fox() -> Outlet {
        Outlet::new(Domain::parse("foxnews.com").unwrap())
    }

    fn answer_for(p: &PromptInstance) -> String {
        match p.category {
            TemplateCategory::SystematicPolicy => {
                r#"{"leaning": "right", "reason": "conservative"}"#.into()
            }
            TemplateCategory::FactualityQuestion => {
                r#"{"answer": "Right", "reason": "conservative"}"#.into()
            }
            _ => r#"{"stance": "pro", "reason": "conservative"}"#.into(),
        }
    }

    fn elicitor(backend: Arc<dyn ChatBackend>, config: BackendConfig) -> (Elicitor, Arc<ManualClock>) {
        let clock = Arc::new(ManualClock::default());
        let e = Elicitor::with_clock(backend, config, Arc::new(ResponseCache::in_memory()), clock.clone())
            .unwrap();
        (e, clock)
    }

    #[test]
    fn cache_hit_issues_no_request() {
        let calls = Arc::new(AtomicU64::new(0));
        let c = calls.clone();
        let backend = Arc::new(FnBackend(move |p: &PromptInstance| {
            c.fetch_add(1, Ordering::SeqCst);
            Ok(answer_for(p))
        }));
        let (e, _) = elicitor(backend, BackendConfig::default());
        let p = PromptLibrary::bundled()
            .render_public_figure(&fox().domain, "Trump")
            .unwrap();
        let first = e.elicit(&p).unwrap();
        let second = e.elicit(&p).unwrap();
        assert_eq!(first, second);
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        assert_eq!(e.stats(), ElicitStats { cache_hits: 1, requests: 1 });
    }

    #[test]
    fn malformed_reply_is_recorded_not_thrown() {
        let backend = Arc::new(FnBackend(|_: &PromptInstance| Ok("{not json".to_string())));
        let (e, _) = elicitor(backend, BackendConfig::default());
        let p = PromptLibrary::bundled()
            .render_popular_topic(&fox().domain, "Ukraine")
            .unwrap();
        let r = e.elicit(&p).unwrap();
        assert_eq!(r.status, ResponseStatus::ParseFailed);
        assert_eq!(r.raw_text, "{not json");
        assert_eq!(r.failure.unwrap().code, ParseFailureCode::NoJson);
    }

    #[test]
    fn unknown_leaning_abstains() {
        let backend = Arc::new(FnBackend(|_: &PromptInstance| {
            Ok(r#"{"leaning": "unknown", "reason": "not enough evidence"}"#.to_string())
        }));
        let (e, _) = elicitor(backend, BackendConfig::default());
        let lib = PromptLibrary::bundled();
        let p = lib.render_systematic(&fox().domain, lib.policy_topic("Taxes").unwrap()).unwrap();
        let r = e.elicit(&p).unwrap();
        assert_eq!(r.status, ResponseStatus::Abstained);
        assert_eq!(r.answers()[0].reason, "not enough evidence");
    }

    #[test]
    fn retries_with_exponential_backoff() {
        let calls = Arc::new(Mutex::new(0u32));
        let c = calls.clone();
        let backend = Arc::new(FnBackend(move |p: &PromptInstance| {
            let mut n = c.lock().unwrap();
            *n += 1;
            if *n < 3 {
                Err(BackendError::Transient("503".into()))
            } else {
                Ok(answer_for(p))
            }
        }));
        let config = BackendConfig {
            max_retries: 3,
            backoff_base: Duration::from_millis(100),
            ..BackendConfig::default()
        };
        let (e, clock) = elicitor(backend, config);
        let p = PromptLibrary::bundled().render_public_figure(&fox().domain, "Putin").unwrap();
        assert_eq!(e.elicit(&p).unwrap().status, ResponseStatus::Ok);
        assert_eq!(
            clock.sleeps(),
            vec![Duration::from_millis(100), Duration::from_millis(200)]
        );
    }

    #[test]
    fn exhausted_retries_surface_network_error() {
        let backend = Arc::new(FnBackend(|_: &PromptInstance| {
            Err(BackendError::Transient("timeout".into()))
        }));
        let config = BackendConfig {
            max_retries: 2,
            ..BackendConfig::default()
        };
        let (e, _) = elicitor(backend, config);
        let p = PromptLibrary::bundled().render_public_figure(&fox().domain, "Putin").unwrap();
        match e.elicit(&p) {
            Err(Error::Network { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("expected network error, got {other:?}"),
        }
        assert!(e.cache().is_empty());
    }

    #[test]
    fn fatal_errors_do_not_retry() {
        let backend = Arc::new(FnBackend(|_: &PromptInstance| Err(BackendError::Fatal("401".into()))));
        let (e, clock) = elicitor(backend, BackendConfig::default());
        let p = PromptLibrary::bundled().render_public_figure(&fox().domain, "Putin").unwrap();
        assert!(matches!(e.elicit(&p), Err(Error::Network { attempts: 1, .. })));
        assert!(clock.sleeps().is_empty());
    }

    #[test]
    fn outlet_suites_have_fixed_sizes_and_order() {
        let backend = Arc::new(FnBackend(|p: &PromptInstance| Ok(answer_for(p))));
        let (e, _) = elicitor(backend, BackendConfig::default());
        let lib = PromptLibrary::bundled();
        let hc = e.elicit_outlet(lib, &fox(), Suite::Handcrafted).unwrap();
        assert_eq!(hc.responses.len(), 18);
        let sys = e.elicit_outlet(lib, &fox(), Suite::Systematic).unwrap();
        assert_eq!(sys.responses.len(), 16);
        let both = e.elicit_outlet(lib, &fox(), Suite::Both).unwrap();
        assert_eq!(both.responses.len(), 34);
        let ids: Vec<_> = both.responses.iter().map(|r| r.template_id.as_str()).collect();
        assert_eq!(ids[0], "stance_public_figure");
        assert_eq!(ids[7], "stance_popular_topic");
        assert_eq!(ids[12], "factuality_q1");
        assert_eq!(ids[18], "systematic_policy");
        assert_eq!(both.responses[18].topic.as_deref(), Some("General Philosophy"));
    }

    #[test]
    fn partial_failures_do_not_abort_outlet() {
        let backend = Arc::new(FnBackend(|p: &PromptInstance| {
            if p.template_id == "factuality_q4" {
                Err(BackendError::Fatal("boom".into()))
            } else {
                Ok(answer_for(p))
            }
        }));
        let (e, _) = elicitor(backend, BackendConfig::default());
        let out = e
            .elicit_outlet(PromptLibrary::bundled(), &fox(), Suite::Handcrafted)
            .unwrap();
        assert_eq!(out.responses.len(), 17);
        assert_eq!(out.errors.len(), 1);
        assert_eq!(out.errors[0].0.template_id, "factuality_q4");
    }

    #[test]
    fn config_validation() {
        let bad = BackendConfig {
            temperature: -0.5,
            ..BackendConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = BackendConfig {
            rate_limit: 0,
            ..BackendConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(BackendConfig::default().validate().is_ok());
    }

    #[test]
    fn backoff_is_capped() {
        let c = BackendConfig::default();
        assert_eq!(c.backoff(0), Duration::from_secs(1));
        assert_eq!(c.backoff(3), Duration::from_secs(8));
        assert_eq!(c.backoff(30), Duration::from_secs(60));
    }
}
