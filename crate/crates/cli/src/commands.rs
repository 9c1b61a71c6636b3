use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Result;
use mediaprofile::corpus::{
    attach_metadata, ingest_labels, read_corpus, split, write_jsonl, write_labels_csv,
};
use mediaprofile::elicitation::{
    ChatBackend, ElicitedResponse, Elicitor, FixtureBackend, FnBackend, HttpBackend, ResponseCache,
};
use mediaprofile::eval::{
    evaluate_predictions, read_predictions, render_confusion, render_table, stratify_by_popularity,
    stratify_by_region, write_scatter_csv,
};
use mediaprofile::features::{self, build_documents};
use mediaprofile::pipeline::{train_on_split, TrainOutcome};
use mediaprofile::synthetic::SyntheticResponder;
use mediaprofile::zeroshot::{
    evaluate_zeroshot, load_articles, predict_by_articles, predict_by_name,
    summarize_articles, ZeroShotMode, ZeroShotRecord,
};
use mediaprofile::{
    AbstainPolicy, AblationMode, Domain, Error, EvalReport, LabeledCorpus, Outlet, PromptInstance,
    PromptLibrary, SplitManifest, TaskKind, TrainConfig, Verdict,
};
use serde::Serialize;
use tracing::{info, warn};

use crate::config::{BackendKind, Settings};
use crate::manifest::Recorder;
use crate::{
    AblateArgs, AnalyzeArgs, CliError, Dimension, ElicitArgs, EvaluateArgs, ExportArgs,
    IngestArgs, ModelArgs, TrainArgs, ZeroshotArgs,
};

pub struct Context {
    pub settings: Settings,
    pub manifest: Option<PathBuf>,
    pub config_path: Option<PathBuf>,
}

impl Context {
    fn recorder(&self, command: &str, args: &impl Serialize) -> Result<Recorder> {
        let snapshot = serde_json::json!({
            "settings": self.settings,
            "options": args,
        });
        let mut rec = Recorder::new(command, snapshot);
        if let Some(p) = &self.config_path {
            rec.input(p)?;
        }
        Ok(rec)
    }

    fn manifest_path(&self, default: PathBuf) -> PathBuf {
        self.manifest.clone().unwrap_or(default)
    }

    fn task(&self, flag: Option<TaskKind>) -> TaskKind {
        flag.unwrap_or(self.settings.train.task)
    }
}

/// `dir/name` for directory outputs, `file.<suffix>` beside file outputs.
fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{name}.{suffix}"))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn load_outlets(ctx: &Context, path: &Path, rec: &mut Recorder) -> Result<Vec<Outlet>> {
    rec.input(path)?;
    let report = ingest_labels(path, ctx.settings.collapse)?;
    for r in &report.rejects {
        warn!("{}:{}: {}", path.display(), r.line, r.reason);
    }
    Ok(report.outlets)
}

fn load_split(path: &Path, task: TaskKind, rec: &mut Recorder) -> Result<SplitManifest> {
    rec.input(path)?;
    let manifest = SplitManifest::load(path)?;
    if manifest.task != task {
        return Err(CliError::Config(format!(
            "{} splits the {} task, not {task}",
            path.display(),
            manifest.task
        ))
        .into());
    }
    Ok(manifest)
}

fn build_elicitor(
    ctx: &Context,
    outlets: &[Outlet],
    default_cache: PathBuf,
    rec: &mut Recorder,
) -> Result<Elicitor> {
    let s = &ctx.settings.backend;
    let mut request = s.request.clone();
    let backend: Arc<dyn ChatBackend> = match s.kind {
        BackendKind::Mock => {
            // keep mock replies apart from real ones in a shared cache
            request.model_id = format!("mock:{}", request.model_id);
            match &s.fixtures {
                Some(dir) => {
                    if !dir.is_dir() {
                        return Err(CliError::Io(format!(
                            "fixture directory {} not found",
                            dir.display()
                        ))
                        .into());
                    }
                    rec.input(dir)?;
                    Arc::new(FixtureBackend::new(dir))
                }
                None => {
                    let responder = SyntheticResponder::new(outlets, ctx.settings.seed);
                    Arc::new(FnBackend(move |p: &PromptInstance| Ok(responder.reply(p))))
                }
            }
        }
        BackendKind::Openai => Arc::new(HttpBackend::from_env(&request)?),
    };
    let cache_path = s.cache.clone().unwrap_or(default_cache);
    let cache = ResponseCache::open(&cache_path)?;
    info!(path = %cache_path.display(), entries = cache.len(), "response cache");
    Ok(Elicitor::new(backend, request, Arc::new(cache))?.strict(s.strict))
}

pub fn ingest(ctx: &Context, args: &IngestArgs) -> Result<()> {
    let mut rec = ctx.recorder("ingest", args)?;
    let policy = args.collapse.unwrap_or(ctx.settings.collapse);
    rec.input(&args.labels)?;
    let mut report = ingest_labels(&args.labels, policy)?;
    for r in &report.rejects {
        warn!("{}:{}: {}", args.labels.display(), r.line, r.reason);
    }
    for path in [&args.ranks, &args.regions].into_iter().flatten() {
        rec.input(path)?;
    }
    let meta = attach_metadata(&mut report.outlets, args.ranks.as_deref(), args.regions.as_deref())?;
    for r in &meta.rejects {
        warn!("metadata line {}: {}", r.line, r.reason);
    }
    write_labels_csv(&args.out, &report.outlets)?;
    rec.output(&args.out);
    println!(
        "{} outlets, {} rejected rows, {} ranks and {} regions joined",
        report.outlets.len(),
        report.rejects.len(),
        meta.ranks_joined,
        meta.regions_joined
    );
    for task in TaskKind::ALL {
        let hist: Vec<String> = report
            .histogram(task)
            .iter()
            .map(|(l, n)| format!("{l}={n}"))
            .collect();
        println!("  {task}: {}", hist.join(" "));
    }

    if let (Some(task), Some(out)) = (args.task, &args.split_out) {
        let mut spec = ctx.settings.train.split.clone();
        if let Some(f) = args.train_fraction {
            spec.train_fraction = f;
        }
        let items: Vec<(Domain, _)> = report
            .outlets
            .iter()
            .filter_map(|o| o.gold(task).map(|l| (o.domain.clone(), l)))
            .collect();
        let manifest = split(&items, task, &spec)?;
        manifest.save(out)?;
        rec.output(out);
        println!("split: {} train, {} test", manifest.train.len(), manifest.test.len());
    }
    rec.finish(&ctx.manifest_path(sidecar(&args.out, "manifest.json")))?;
    Ok(())
}

pub fn elicit(ctx: &Context, args: &ElicitArgs) -> Result<()> {
    let mut rec = ctx.recorder("elicit", args)?;
    let mut outlets = load_outlets(ctx, &args.labels, &mut rec)?;
    if let Some(n) = args.limit {
        outlets.truncate(n);
    }
    let elicitor = build_elicitor(ctx, &outlets, sidecar(&args.out, "cache.jsonl"), &mut rec)?;
    let library = PromptLibrary::bundled();
    let mut responses: Vec<ElicitedResponse> = Vec::new();
    let mut failures = Vec::new();
    for outlet in &outlets {
        let got = elicitor.elicit_outlet(library, outlet, args.suite)?;
        for (prompt, err) in got.errors {
            warn!("{} {}: {err}", outlet.domain, prompt.template_id);
            failures.push(err);
        }
        responses.extend(got.responses);
    }
    mediaprofile::corpus::write_corpus(&args.out, &responses)?;
    rec.output(&args.out);
    let stats = elicitor.stats();
    println!(
        "{} responses for {} outlets ({} requests, {} cache hits)",
        responses.len(),
        outlets.len(),
        stats.requests,
        stats.cache_hits
    );
    rec.finish(&ctx.manifest_path(sidecar(&args.out, "manifest.json")))?;
    match failures.into_iter().next() {
        Some(first) => Err(anyhow::Error::from(first).context("some prompts could not be answered")),
        None => Ok(()),
    }
}

fn train_config(ctx: &Context, m: &ModelArgs, ablation: Option<AblationMode>) -> Result<TrainConfig> {
    let mut c = ctx.settings.train.clone();
    c.task = ctx.task(m.task);
    if let Some(s) = m.suite {
        c.ablation.suite = s;
    }
    if let Some(a) = ablation {
        c.ablation.mode = a;
    }
    if let Some(f) = m.train_fraction {
        c.split.train_fraction = f;
    }
    if let Some(v) = &m.c_values {
        c.grid.c_values = v.clone();
    }
    if let Some(v) = &m.gamma_values {
        c.grid.gamma_values = v.clone();
    }
    if let Some(k) = m.folds {
        c.grid.cv_folds = k;
    }
    if let Some(s) = m.strategy {
        c.strategy = s;
    }
    c.grid.validate()?;
    c.svm.validate()?;
    Ok(c)
}

type Prepared = (Vec<Outlet>, LabeledCorpus, LabeledCorpus, SplitManifest);

fn prepare(ctx: &Context, m: &ModelArgs, cfg: &TrainConfig, rec: &mut Recorder) -> Result<Prepared> {
    let outlets = load_outlets(ctx, &m.labels, rec)?;
    rec.input(&m.corpus)?;
    let responses = read_corpus(&m.corpus)?;
    let corpus = LabeledCorpus::new(cfg.task, &outlets, responses);
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus.into());
    }
    let (train, test, manifest) = match &m.split {
        Some(path) => {
            let manifest = load_split(path, cfg.task, rec)?;
            let train = corpus.subset(&manifest.train_domains()?);
            let test = corpus.subset(&manifest.test_domains()?);
            (train, test, manifest)
        }
        None => corpus.split(&cfg.split)?,
    };
    info!(train = train.len(), test = test.len(), "split");
    Ok((outlets, train, test, manifest))
}

fn report_outcome(out: &TrainOutcome) {
    for w in &out.model.svm.warnings {
        warn!("{w:?}");
    }
    let g = &out.model.grid;
    println!(
        "best C={} gamma={} (cv accuracy {:.3})",
        g.best.c, g.best.gamma, g.cells[g.best_index].mean_accuracy
    );
}

pub fn train(ctx: &Context, args: &TrainArgs) -> Result<()> {
    let mut rec = ctx.recorder("train", args)?;
    let cfg = train_config(ctx, &args.model, args.ablation)?;
    let (_, train, test, manifest) = prepare(ctx, &args.model, &cfg, &mut rec)?;
    let out = train_on_split(&train, &test, manifest, &cfg)?;
    report_outcome(&out);

    let dir = &args.model.out;
    create_dir(dir)?;
    let reports = vec![out.report.clone(), out.baseline.clone()];
    let table = render_table(&reports);
    let files = [
        "model.json",
        "report.json",
        "report.txt",
        "predictions.jsonl",
        "split.json",
    ]
    .map(|f| dir.join(f));
    out.model.save(&files[0])?;
    write_json(&files[1], &reports)?;
    write_text(&files[2], &format!("{table}\n{}", render_confusion(&out.report)))?;
    write_jsonl(&files[3], &out.predictions)?;
    out.manifest.save(&files[4])?;
    for f in files {
        rec.output(f);
    }
    print!("{table}");
    rec.finish(&ctx.manifest_path(dir.join("manifest.json")))?;
    Ok(())
}

pub fn ablate(ctx: &Context, args: &AblateArgs) -> Result<()> {
    let mut rec = ctx.recorder("ablate", args)?;
    let cfg = train_config(ctx, &args.model, None)?;
    let (_, train, test, manifest) = prepare(ctx, &args.model, &cfg, &mut rec)?;
    let mut reports: Vec<EvalReport> = Vec::new();
    let mut baseline = None;
    for mode in AblationMode::ALL {
        let mut c = cfg.clone();
        c.ablation.mode = mode;
        let out = train_on_split(&train, &test, manifest.clone(), &c)?;
        baseline.get_or_insert(out.baseline);
        reports.push(out.report.with_system(format!("SVM ({mode})")));
    }
    reports.extend(baseline);

    let dir = &args.model.out;
    create_dir(dir)?;
    let table = render_table(&reports);
    let files = ["ablation.json", "ablation.txt", "split.json"].map(|f| dir.join(f));
    write_json(&files[0], &reports)?;
    write_text(&files[1], &table)?;
    manifest.save(&files[2])?;
    for f in files {
        rec.output(f);
    }
    print!("{table}");
    rec.finish(&ctx.manifest_path(dir.join("manifest.json")))?;
    Ok(())
}

/// A report file holds one report or an array of them.
fn load_reports(path: &Path) -> Result<Vec<EvalReport>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(Error::Json)?;
    let reports = if value.is_array() {
        serde_json::from_value(value).map_err(Error::Json)?
    } else {
        vec![serde_json::from_value(value).map_err(Error::Json)?]
    };
    Ok(reports)
}

/// An empty join means no prediction named a labelled outlet.
fn join<T>(result: mediaprofile::Result<T>) -> Result<T> {
    match result {
        Err(Error::Empty) => Err(CliError::Io("no prediction matched a labelled outlet".into()).into()),
        other => Ok(other?),
    }
}

pub fn evaluate(ctx: &Context, args: &EvaluateArgs) -> Result<()> {
    let mut rec = ctx.recorder("evaluate", args)?;
    let mut reports = Vec::new();
    let mut confusion = None;
    if let (Some(preds), Some(labels)) = (&args.predictions, &args.labels) {
        let task = ctx.task(args.task);
        let outlets = load_outlets(ctx, labels, &mut rec)?;
        rec.input(preds)?;
        let records = read_predictions(preds)?;
        let restrict = match &args.split {
            Some(p) => Some(load_split(p, task, &mut rec)?.test_domains()?),
            None => None,
        };
        let policy = args.abstain.unwrap_or(ctx.settings.abstain);
        let eval = join(evaluate_predictions(&outlets, task, &records, restrict.as_ref(), policy))?;
        let system = args.system.clone().unwrap_or_else(|| {
            preds.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
        });
        let report = eval.report.with_system(system);
        if let Some(out) = &args.out {
            report.save(out)?;
            rec.output(out);
        }
        confusion = Some(render_confusion(&report));
        reports.push(report);
    }
    for path in &args.reports {
        rec.input(path)?;
        reports.extend(load_reports(path)?);
    }
    if reports.is_empty() {
        return Err(CliError::Config("nothing to evaluate: pass --predictions or --report".into()).into());
    }
    print!("{}", render_table(&reports));
    if let Some(c) = confusion {
        print!("\n{c}");
    }
    let dest = ctx
        .manifest
        .clone()
        .or_else(|| args.out.as_ref().map(|o| sidecar(o, "manifest.json")));
    match dest {
        Some(d) => {
            rec.finish(&d)?;
        }
        None => info!("no --out or --manifest given; run manifest not written"),
    }
    Ok(())
}

pub fn zeroshot(ctx: &Context, args: &ZeroshotArgs) -> Result<()> {
    let mut rec = ctx.recorder("zeroshot", args)?;
    let task = ctx.task(args.task);
    let articles = match (args.mode, &args.articles) {
        (ZeroShotMode::Articles, None) => {
            return Err(CliError::Config("--articles is required in articles mode".into()).into())
        }
        (ZeroShotMode::Articles, Some(dir)) if !dir.is_dir() => {
            return Err(CliError::Io(format!("article directory {} not found", dir.display())).into())
        }
        (ZeroShotMode::Articles, Some(dir)) => {
            rec.input(dir)?;
            Some(dir.clone())
        }
        (ZeroShotMode::NameOnly, _) => None,
    };
    let mut outlets = load_outlets(ctx, &args.labels, &mut rec)?;
    if let Some(n) = args.limit {
        outlets.truncate(n);
    }
    create_dir(&args.out)?;
    let elicitor = build_elicitor(ctx, &outlets, args.out.join("cache.jsonl"), &mut rec)?;
    let library = PromptLibrary::bundled();

    let mut records = Vec::new();
    let mut verdicts: BTreeMap<Domain, Verdict> = BTreeMap::new();
    let mut ties = 0;
    for o in &outlets {
        let (votes, verdict) = match &articles {
            None => {
                let (v, _) = predict_by_name(&elicitor, library, &o.domain, task)?;
                (vec![v], v)
            }
            Some(dir) => match load_articles(dir, &o.domain) {
                Err(e) => {
                    warn!("{}: no articles ({e}); abstaining", o.domain);
                    (Vec::new(), Verdict::Abstain)
                }
                Ok(set) => {
                    let set = summarize_articles(&elicitor, library, &set);
                    match predict_by_articles(&elicitor, library, &set, task) {
                        Ok(vote) => {
                            ties += vote.tie_broken as usize;
                            (vote.votes, Verdict::Label(vote.final_label))
                        }
                        Err(Error::AllAbstained | Error::Empty) => {
                            warn!("{}: every vote abstained", o.domain);
                            (Vec::new(), Verdict::Abstain)
                        }
                        Err(e) => return Err(e.into()),
                    }
                }
            },
        };
        records.push(ZeroShotRecord::new(&o.domain, &votes, verdict, task));
        verdicts.insert(o.domain.clone(), verdict);
    }

    let reports = [AbstainPolicy::CountWrong, AbstainPolicy::Exclude]
        .into_iter()
        .map(|policy| {
            evaluate_zeroshot(&outlets, task, &verdicts, args.mode, policy).map(|r| {
                let name = r.system.clone().unwrap_or_default();
                r.with_system(format!("{name} [{}]", policy.as_str()))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let table = render_table(&reports);
    let files = ["predictions.jsonl", "report.json", "report.txt"].map(|f| args.out.join(f));
    write_jsonl(&files[0], &records)?;
    write_json(&files[1], &reports)?;
    write_text(&files[2], &table)?;
    for f in files {
        rec.output(f);
    }
    let stats = elicitor.stats();
    println!(
        "{} outlets, {} requests, {} cache hits, {} tie-broken votes",
        records.len(),
        stats.requests,
        stats.cache_hits,
        ties
    );
    print!("{table}");
    rec.finish(&ctx.manifest_path(args.out.join("manifest.json")))?;
    Ok(())
}

pub fn analyze(ctx: &Context, args: &AnalyzeArgs) -> Result<()> {
    let mut rec = ctx.recorder("analyze", args)?;
    let task = ctx.task(args.task);
    let mut outlets = load_outlets(ctx, &args.labels, &mut rec)?;
    for path in [&args.ranks, &args.regions].into_iter().flatten() {
        rec.input(path)?;
    }
    attach_metadata(&mut outlets, args.ranks.as_deref(), args.regions.as_deref())?;
    rec.input(&args.predictions)?;
    let records = read_predictions(&args.predictions)?;
    let restrict: Option<BTreeSet<Domain>> = match &args.split {
        Some(p) => Some(load_split(p, task, &mut rec)?.test_domains()?),
        None => None,
    };
    let eval = join(evaluate_predictions(&outlets, task, &records, restrict.as_ref(), ctx.settings.abstain))?;
    create_dir(&args.out)?;

    if matches!(args.dimension, Dimension::Popularity | Dimension::All) {
        let ranked = outlets
            .iter()
            .any(|o| o.alexa_rank.is_some() && eval.correctness.contains_key(&o.domain));
        if ranked {
            let report = stratify_by_popularity(&outlets, &eval.correctness, args.bin_width)?;
            let (json, csv) = (args.out.join("popularity.json"), args.out.join("scatter.csv"));
            write_json(&json, &report)?;
            write_scatter_csv(&csv, &outlets, &eval.correctness, task)?;
            rec.output(json);
            rec.output(csv);
            print!("{}", report.render());
        } else {
            warn!("no rank metadata for the scored outlets; skipping the popularity report");
        }
    }
    if matches!(args.dimension, Dimension::Region | Dimension::All) {
        let report = stratify_by_region(&outlets, &eval.correctness);
        let json = args.out.join("region.json");
        write_json(&json, &report)?;
        rec.output(json);
        print!("{}", report.render());
    }
    rec.finish(&ctx.manifest_path(args.out.join("manifest.json")))?;
    Ok(())
}

pub fn export_features(ctx: &Context, args: &ExportArgs) -> Result<()> {
    let mut rec = ctx.recorder("export-features", args)?;
    let mut cfg = ctx.settings.train.clone();
    cfg.task = ctx.task(args.task);
    if let Some(m) = args.ablation {
        cfg.ablation.mode = m;
    }
    if let Some(s) = args.suite {
        cfg.ablation.suite = s;
    }
    if let Some(f) = args.train_fraction {
        cfg.split.train_fraction = f;
    }
    let outlets = load_outlets(ctx, &args.labels, &mut rec)?;
    rec.input(&args.corpus)?;
    let corpus = LabeledCorpus::new(cfg.task, &outlets, read_corpus(&args.corpus)?);
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus.into());
    }
    let manifest = match &args.split {
        Some(p) => load_split(p, cfg.task, &mut rec)?,
        None => {
            let (_, _, manifest) = corpus.split(&cfg.split)?;
            let path = sidecar(&args.out, "split.json");
            manifest.save(&path)?;
            rec.output(path);
            manifest
        }
    };
    let docs = build_documents(&corpus, &cfg.ablation)?;
    let n = features::export_features(&args.out, &docs, Some(&manifest))?;
    rec.output(&args.out);
    println!("{n} feature records ({} train, {} test)", manifest.train.len(), manifest.test.len());
    rec.finish(&ctx.manifest_path(sidecar(&args.out, "manifest.json")))?;
    Ok(())
}
