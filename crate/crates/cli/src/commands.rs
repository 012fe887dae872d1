use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use radjudge::corpus::{
    export_sft, load_reports, make_pairs, screen_pairs, screen_template, CorpusError, PairingMode, PairingSpec,
    ReportFormat, SftFormat, DEFAULT_PRUNE_CANDIDATES,
};
use radjudge::io::read_jsonl;
use radjudge::judge::{benchmark, judge_pair, BenchmarkReport, FailureRow, JudgeError, JudgeParams, PromptTemplate, Usage};
use radjudge::metrics::{bland_altman, leave_one_out_agreement, pairwise_agreement, AgreementResult, MetricsError};
use radjudge::par::map_bounded;
use radjudge::respparse::{RepairRule, RepairTrace};
use radjudge::types::{Judgment, RaterAnnotation, ReportPair};
use serde::Serialize;

use crate::annotations::{read_annotations, ColumnMapping};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult, EXIT_PARTIAL};
use crate::output::{num, write_csv, write_json, write_lines};
use crate::svg;

fn ensure_out_dir(cfg: &RunConfig) -> CliResult<PathBuf> {
    let dir = cfg.out_dir();
    std::fs::create_dir_all(&dir).map_err(|e| CliError::config(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

pub fn load_pairs(path: &Path) -> CliResult<Vec<ReportPair>> {
    let pairs: Vec<ReportPair> = read_jsonl(path).map_err(|e| CliError::config(e.to_string()))?;
    let mut seen = BTreeSet::new();
    for p in &pairs {
        if !seen.insert(p.pair_id.as_str()) {
            return Err(CliError::config(format!("{}: duplicate pair id `{}`", path.display(), p.pair_id)));
        }
    }
    Ok(pairs)
}

fn load_mapping(path: Option<&Path>) -> CliResult<Option<ColumnMapping>> {
    path.map(ColumnMapping::load).transpose()
}

fn corpus_err(e: CorpusError) -> CliError {
    match e {
        CorpusError::InvalidJudgment { .. } => CliError::partial(e.to_string()),
        _ => CliError::config(e.to_string()),
    }
}

#[derive(Serialize)]
struct TraceLine<'a> {
    pair_id: &'a str,
    trace: &'a RepairTrace,
    warnings: &'a [String],
}

#[derive(Serialize)]
struct JudgeSummary {
    prompt_version: String,
    pairs: usize,
    judged: usize,
    failed: usize,
    repaired: usize,
    repair_rules: BTreeMap<RepairRule, usize>,
    warnings: usize,
    usage: Usage,
    failures: Vec<FailureRow>,
}

pub fn judge(cfg: RunConfig, pairs_path: &Path, verbose: bool) -> CliResult<u8> {
    let cfg = cfg.with_input("pairs", pairs_path);
    let prompts = cfg.prompts()?;
    let backend = cfg.backend()?;
    let pairs = load_pairs(pairs_path)?;
    let params = cfg.judge_params();
    let out = ensure_out_dir(&cfg)?;

    let results = map_bounded(&pairs, params.concurrency, |p| {
        judge_pair(p, backend.as_ref(), cfg.strategy, &prompts, &params)
    });

    let mut judgments = Vec::new();
    let mut traces = Vec::new();
    let mut summary = JudgeSummary {
        prompt_version: prompts.version.clone(),
        pairs: pairs.len(),
        judged: 0,
        failed: 0,
        repaired: 0,
        repair_rules: BTreeMap::new(),
        warnings: 0,
        usage: Usage::default(),
        failures: Vec::new(),
    };
    for (pair, r) in pairs.iter().zip(&results) {
        match r {
            Ok(o) => {
                summary.judged += 1;
                summary.usage.merge(&o.usage);
                summary.warnings += o.warnings.len();
                if !o.trace.applied_rules.is_empty() {
                    summary.repaired += 1;
                }
                for rule in &o.trace.applied_rules {
                    *summary.repair_rules.entry(*rule).or_default() += 1;
                }
                judgments.push(&o.judgment);
                traces.push(TraceLine {
                    pair_id: &pair.pair_id,
                    trace: &o.trace,
                    warnings: &o.warnings,
                });
            }
            Err(e) => {
                summary.failed += 1;
                summary.failures.push(FailureRow {
                    pair_id: pair.pair_id.clone(),
                    error: e.to_string(),
                });
            }
        }
    }

    write_lines(&out.join("judgments.jsonl"), &judgments)?;
    if verbose {
        write_lines(&out.join("repair_traces.jsonl"), &traces)?;
    }
    write_json(&out.join("judge_summary.json"), &cfg, &summary)?;
    eprintln!("judged {}/{} pairs ({} repaired, {} failed)", summary.judged, summary.pairs, summary.repaired, summary.failed);
    for f in &summary.failures {
        eprintln!("  {}: {}", f.pair_id, f.error);
    }
    Ok(if cfg.strict && summary.failed > 0 { EXIT_PARTIAL } else { 0 })
}

#[derive(Serialize)]
struct BenchmarkOut<'a> {
    prompt_version: &'a str,
    report: &'a BenchmarkReport,
    usage: Usage,
}

fn judge_err(e: JudgeError) -> CliError {
    match e {
        JudgeError::TooFewPairs { .. } | JudgeError::Metrics(_) | JudgeError::Backend { .. } | JudgeError::Parse { .. } => {
            CliError::partial(e.to_string())
        }
        _ => CliError::config(e.to_string()),
    }
}

pub fn benchmark_cmd(cfg: RunConfig, pairs_path: &Path, ann_path: &Path, mapping: Option<&Path>) -> CliResult<u8> {
    let mut cfg = cfg.with_input("pairs", pairs_path).with_input("annotations", ann_path);
    if let Some(m) = mapping {
        cfg = cfg.with_input("mapping", m);
    }
    let prompts = cfg.prompts()?;
    let pairs = load_pairs(pairs_path)?;
    let anns = read_annotations(ann_path, load_mapping(mapping)?.as_ref())?;
    let known: BTreeSet<&str> = pairs.iter().map(|p| p.pair_id.as_str()).collect();
    let unknown: BTreeSet<&str> = anns
        .iter()
        .map(|a| a.pair_id.as_str())
        .filter(|id| !known.contains(id))
        .collect();
    if !unknown.is_empty() {
        let list: Vec<&str> = unknown.into_iter().collect();
        return Err(CliError::config(format!(
            "annotations reference unknown pair id(s): {}",
            list.join(", ")
        )));
    }
    let backend = cfg.backend()?;
    let params = cfg.judge_params();
    let out = ensure_out_dir(&cfg)?;

    let run = benchmark(&pairs, &anns, backend.as_ref(), cfg.strategy, &prompts, &params, cfg.score_mode)
        .map_err(judge_err)?;
    let mut usage = Usage::default();
    for o in &run.outcomes {
        usage.merge(&o.usage);
    }
    let r = &run.report;
    write_json(
        &out.join("benchmark_report.json"),
        &cfg,
        &BenchmarkOut {
            prompt_version: &prompts.version,
            report: r,
            usage,
        },
    )?;
    let rows: Vec<Vec<String>> = r
        .per_pair
        .iter()
        .map(|p| vec![p.pair_id.clone(), p.judge_total.to_string(), num(p.rater_mean)])
        .collect();
    write_csv(
        &out.join("per_pair.csv"),
        &cfg,
        &[("prompt_version", prompts.version.clone())],
        &["pair_id", "judge_total", "rater_mean"],
        &rows,
    )?;
    let judgments: Vec<&Judgment> = run.outcomes.iter().map(|o| &o.judgment).collect();
    write_lines(&out.join("judgments.jsonl"), &judgments)?;

    println!(
        "tau_b = {} over {} pairs (concordant {}, discordant {}); mean error {}",
        num(r.tau_vs_raters.tau),
        r.tau_vs_raters.n,
        r.tau_vs_raters.concordant,
        r.tau_vs_raters.discordant,
        num(r.error_dist.mean)
    );
    for f in &r.failures {
        eprintln!("  failed {}: {}", f.pair_id, f.error);
    }
    Ok(if cfg.strict && !r.failures.is_empty() { EXIT_PARTIAL } else { 0 })
}

#[derive(Serialize)]
struct RaterRow {
    rater_id: String,
    /// `None` when the rater or the rest of the panel gave constant scores.
    tau: Option<f64>,
    n: usize,
    detail: Option<AgreementResult>,
}

#[derive(Serialize)]
struct AgreementOut {
    score_mode: radjudge::metrics::ScoreMode,
    raters: Vec<RaterRow>,
    pairwise: Vec<radjudge::metrics::PairwiseTau>,
    tau_min: Option<f64>,
    tau_max: Option<f64>,
}

fn metrics_err(e: MetricsError) -> CliError {
    CliError::config(e.to_string())
}

pub fn agreement(cfg: RunConfig, ann_path: &Path, mapping: Option<&Path>) -> CliResult<u8> {
    let mut cfg = cfg.with_input("annotations", ann_path);
    if let Some(m) = mapping {
        cfg = cfg.with_input("mapping", m);
    }
    let anns: Vec<RaterAnnotation> = read_annotations(ann_path, load_mapping(mapping)?.as_ref())?;
    let loo = leave_one_out_agreement(&anns, cfg.score_mode).map_err(metrics_err)?;
    let pairwise = pairwise_agreement(&anns, cfg.score_mode).map_err(metrics_err)?;
    let n_pairs = anns.iter().map(|a| a.pair_id.as_str()).collect::<BTreeSet<_>>().len();
    let out = ensure_out_dir(&cfg)?;

    let raters: Vec<RaterRow> = loo
        .into_iter()
        .map(|(rater_id, r)| RaterRow {
            rater_id,
            tau: r.as_ref().map(|r| r.tau),
            n: n_pairs,
            detail: r,
        })
        .collect();
    let taus: Vec<f64> = raters.iter().filter_map(|r| r.tau).collect();
    let body = AgreementOut {
        score_mode: cfg.score_mode,
        tau_min: taus.iter().copied().reduce(f64::min),
        tau_max: taus.iter().copied().reduce(f64::max),
        raters,
        pairwise,
    };
    write_json(&out.join("agreement.json"), &cfg, &body)?;
    let opt = |t: Option<f64>| t.map(num).unwrap_or_default();
    let rows: Vec<Vec<String>> = body
        .raters
        .iter()
        .map(|r| vec![r.rater_id.clone(), opt(r.tau), r.n.to_string()])
        .collect();
    write_csv(&out.join("agreement.csv"), &cfg, &[], &["rater_id", "tau", "n"], &rows)?;
    let rows: Vec<Vec<String>> = body
        .pairwise
        .iter()
        .map(|p| vec![p.rater_a.clone(), p.rater_b.clone(), opt(p.tau)])
        .collect();
    write_csv(&out.join("pairwise.csv"), &cfg, &[], &["rater_a", "rater_b", "tau"], &rows)?;

    println!("{:<16} {:>8} {:>5}", "rater_id", "tau", "n");
    for r in &body.raters {
        let tau = r.tau.map(|t| format!("{t:.4}")).unwrap_or_else(|| "n/a".into());
        println!("{:<16} {:>8} {:>5}", r.rater_id, tau, r.n);
    }
    Ok(0)
}

pub struct PairArgs<'a> {
    pub corpus: &'a Path,
    pub format: Option<&'a str>,
    pub mode: &'a str,
    pub count: usize,
    pub prune: Option<usize>,
}

fn guess_format(path: &Path) -> ReportFormat {
    if path.is_dir() {
        return ReportFormat::DirectoryOfText;
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => ReportFormat::Csv,
        _ => ReportFormat::Jsonl,
    }
}

#[derive(Serialize)]
struct PairEntry<'a> {
    pair_id: &'a str,
    reference_id: &'a str,
    candidate_id: &'a str,
    provenance: radjudge::types::Provenance,
}

#[derive(Serialize)]
struct PairManifest<'a> {
    spec: &'a PairingSpec,
    corpus_reports: usize,
    corpus_skipped: usize,
    pairs: Vec<PairEntry<'a>>,
}

pub fn pair(cfg: RunConfig, args: PairArgs<'_>) -> CliResult<u8> {
    let cfg = cfg.with_input("corpus", args.corpus);
    let format = match args.format {
        Some(f) => f.parse().map_err(|e: String| CliError::config(e))?,
        None => guess_format(args.corpus),
    };
    let mode: PairingMode = args.mode.parse().map_err(|e: String| CliError::config(e))?;
    let spec = PairingSpec {
        mode,
        count: args.count,
        seed: cfg.seed,
        prune_candidates: args.prune.unwrap_or(DEFAULT_PRUNE_CANDIDATES),
    };
    spec.validate().map_err(corpus_err)?;
    let loaded = load_reports(args.corpus, format).map_err(corpus_err)?;
    let pairs = make_pairs(&loaded.corpus, &spec).map_err(corpus_err)?;
    let out = ensure_out_dir(&cfg)?;
    write_lines(&out.join("pairs.jsonl"), &pairs)?;
    let manifest = PairManifest {
        spec: &spec,
        corpus_reports: loaded.corpus.len(),
        corpus_skipped: loaded.skipped,
        pairs: pairs
            .iter()
            .map(|p| PairEntry {
                pair_id: &p.pair_id,
                reference_id: &p.reference.id,
                candidate_id: &p.candidate.id,
                provenance: p.provenance,
            })
            .collect(),
    };
    write_json(&out.join("pairs_manifest.json"), &cfg, &manifest)?;
    eprintln!("wrote {} pairs from {} reports ({} skipped)", pairs.len(), loaded.corpus.len(), loaded.skipped);
    Ok(0)
}

#[derive(Serialize)]
struct ScreenReport<'a> {
    template_version: &'a str,
    screened: usize,
    kept: usize,
    rejected: usize,
    unscreened: usize,
    decisions: &'a [radjudge::corpus::ScreenDecision],
}

pub fn screen(cfg: RunConfig, pairs_path: &Path, template: Option<&Path>) -> CliResult<u8> {
    let mut cfg = cfg.with_input("pairs", pairs_path);
    let tpl_path = template.map(Path::to_path_buf).or_else(|| cfg.screen_template.as_ref().map(PathBuf::from));
    let tpl = match &tpl_path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?;
            PromptTemplate::parse(&text).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?
        }
        None => screen_template(&cfg.prompt_version).map_err(corpus_err)?,
    };
    if let Some(p) = &tpl_path {
        cfg.screen_template = Some(p.display().to_string());
    }
    let backend = cfg.backend()?;
    let pairs = load_pairs(pairs_path)?;
    let params = JudgeParams {
        model: cfg.screen_model.clone(),
        ..cfg.judge_params()
    };
    let out = ensure_out_dir(&cfg)?;
    let outcome = screen_pairs(&pairs, backend.as_ref(), &tpl, &params).map_err(corpus_err)?;
    write_lines(&out.join("screened_pairs.jsonl"), &outcome.kept)?;
    write_json(
        &out.join("screen_report.json"),
        &cfg,
        &ScreenReport {
            template_version: &tpl.version,
            screened: pairs.len(),
            kept: outcome.kept.len(),
            rejected: outcome.rejected,
            unscreened: outcome.unscreened,
            decisions: &outcome.decisions,
        },
    )?;
    eprintln!(
        "kept {}/{} pairs ({} rejected, {} unscreened)",
        outcome.kept.len(),
        pairs.len(),
        outcome.rejected,
        outcome.unscreened
    );
    Ok(if cfg.strict && outcome.unscreened > 0 { EXIT_PARTIAL } else { 0 })
}

#[derive(Serialize)]
struct SftManifest {
    prompt_version: String,
    format: &'static str,
    records: usize,
    pairs_without_judgment: Vec<String>,
}

pub fn export(cfg: RunConfig, pairs_path: &Path, judgments_path: &Path) -> CliResult<u8> {
    let cfg = cfg.with_input("pairs", pairs_path).with_input("judgments", judgments_path);
    let prompts = cfg.prompts()?;
    let pairs = load_pairs(pairs_path)?;
    let judgments: Vec<Judgment> = read_jsonl(judgments_path).map_err(|e| CliError::config(e.to_string()))?;
    let mut by_id: BTreeMap<&str, &Judgment> = BTreeMap::new();
    for j in &judgments {
        if by_id.insert(&j.pair_id, j).is_some() {
            return Err(CliError::config(format!("duplicate judgment for pair `{}`", j.pair_id)));
        }
    }
    let known: BTreeSet<&str> = pairs.iter().map(|p| p.pair_id.as_str()).collect();
    let orphans: Vec<&str> = by_id.keys().copied().filter(|k| !known.contains(k)).collect();
    if !orphans.is_empty() {
        return Err(CliError::config(format!("judgments for unknown pair id(s): {}", orphans.join(", "))));
    }
    let mut items = Vec::new();
    let mut missing = Vec::new();
    for p in &pairs {
        match by_id.get(p.pair_id.as_str()) {
            Some(j) => items.push((p.clone(), (*j).clone())),
            None => missing.push(p.pair_id.clone()),
        }
    }
    let out = ensure_out_dir(&cfg)?;
    let n = export_sft(&items, &out.join("sft.jsonl"), SftFormat::PromptCompletionJsonl, &prompts).map_err(corpus_err)?;
    write_json(
        &out.join("sft_manifest.json"),
        &cfg,
        &SftManifest {
            prompt_version: prompts.version.clone(),
            format: "prompt_completion_jsonl",
            records: n,
            pairs_without_judgment: missing,
        },
    )?;
    eprintln!("wrote {n} SFT records");
    Ok(0)
}

struct Series {
    ids: Vec<String>,
    a: Vec<f64>,
    b: Vec<f64>,
    names: (String, String),
}

fn read_benchmark(path: &Path) -> CliResult<BenchmarkReport> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let v: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let report = v
        .get("report")
        .cloned()
        .ok_or_else(|| CliError::config(format!("{}: unknown report schema (no `report` field)", path.display())))?;
    serde_json::from_value(report).map_err(|e| CliError::config(format!("{}: unknown report schema: {e}", path.display())))
}

/// Two numeric series from a CSV `id,<a>,<b>`; `#` lines are skipped.
fn read_series(path: &Path) -> CliResult<Series> {
    let bad = |m: String| CliError::config(format!("{}: {m}", path.display()));
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| bad(e.to_string()))?;
    let header = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.len() != 3 {
        return Err(bad(format!("unknown report schema: expected 3 columns, got {}", header.len())));
    }
    let mut s = Series {
        ids: Vec::new(),
        a: Vec::new(),
        b: Vec::new(),
        names: (header[1].to_owned(), header[2].to_owned()),
    };
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let parse = |i: usize| {
            rec[i]
                .parse::<f64>()
                .map_err(|_| bad(format!("line {line}: `{}` is not a number", &rec[i])))
        };
        s.ids.push(rec[0].to_owned());
        s.a.push(parse(1)?);
        s.b.push(parse(2)?);
    }
    Ok(s)
}

fn write_bland_altman(out: &Path, cfg: &RunConfig, s: &Series, svg_out: bool) -> CliResult<()> {
    let ba = bland_altman(&s.a, &s.b).map_err(metrics_err)?;
    let meta = [
        ("series", format!("{} - {}", s.names.0, s.names.1)),
        ("mean_diff", num(ba.mean_diff)),
        ("sd_diff", num(ba.sd_diff)),
        ("loa_lower", num(ba.loa_lower)),
        ("loa_upper", num(ba.loa_upper)),
    ];
    let rows: Vec<Vec<String>> = s
        .ids
        .iter()
        .zip(&ba.points)
        .map(|(id, (m, d))| vec![id.clone(), num(*m), num(*d), num(ba.loa_lower), num(ba.loa_upper)])
        .collect();
    write_csv(
        &out.join("bland_altman.csv"),
        cfg,
        &meta,
        &["pair_id", "mean", "diff", "loa_lower", "loa_upper"],
        &rows,
    )?;
    if svg_out {
        let doc = svg::scatter(
            "Bland-Altman",
            "mean",
            "difference",
            &ba.points,
            &[(ba.mean_diff, "mean"), (ba.loa_lower, "-1.96 SD"), (ba.loa_upper, "+1.96 SD")],
        );
        write_text(&out.join("bland_altman.svg"), &doc)?;
    }
    Ok(())
}

fn write_text(path: &Path, s: &str) -> CliResult<()> {
    radjudge::io::write_atomic(path, s.as_bytes()).map_err(|e| CliError::config(e.to_string()))
}

pub fn plot(cfg: RunConfig, report: &Path, svg_out: bool) -> CliResult<u8> {
    let cfg = cfg.with_input("report", report);
    let is_json = report.extension().and_then(|e| e.to_str()) == Some("json");
    if is_json {
        let r = read_benchmark(report)?;
        if r.per_pair.is_empty() {
            return Err(CliError::config(format!("{}: report has no pairs", report.display())));
        }
        let out = ensure_out_dir(&cfg)?;
        let pv = [("prompt_version", r.prompt_version.clone())];
        let rows: Vec<Vec<String>> = r
            .per_pair
            .iter()
            .map(|p| vec![p.pair_id.clone(), p.judge_total.to_string(), num(p.rater_mean)])
            .collect();
        write_csv(&out.join("scatter.csv"), &cfg, &pv, &["pair_id", "judge_total", "rater_mean"], &rows)?;
        let rows: Vec<Vec<String>> = r
            .error_dist
            .histogram
            .iter()
            .map(|b| vec![b.center.to_string(), b.count.to_string()])
            .collect();
        let hist_meta = [pv[0].clone(), ("mean_error", num(r.error_dist.mean))];
        write_csv(&out.join("error_hist.csv"), &cfg, &hist_meta, &["center", "count"], &rows)?;
        let series = Series {
            ids: r.per_pair.iter().map(|p| p.pair_id.clone()).collect(),
            a: r.per_pair.iter().map(|p| p.judge_total as f64).collect(),
            b: r.per_pair.iter().map(|p| p.rater_mean).collect(),
            names: ("judge_total".into(), "rater_mean".into()),
        };
        write_bland_altman(&out, &cfg, &series, svg_out)?;
        if svg_out {
            let pts: Vec<(f64, f64)> = series.a.iter().copied().zip(series.b.iter().copied()).collect();
            write_text(&out.join("scatter.svg"), &svg::scatter("Judge vs raters", "judge_total", "rater_mean", &pts, &[]))?;
            let bins: Vec<(i64, usize)> = r.error_dist.histogram.iter().map(|b| (b.center, b.count)).collect();
            write_text(&out.join("error_hist.svg"), &svg::histogram("Error distribution", "judge - rater mean", &bins))?;
        }
    } else {
        let s = read_series(report)?;
        if s.ids.is_empty() {
            return Err(CliError::config(format!("{}: report has no rows", report.display())));
        }
        let out = ensure_out_dir(&cfg)?;
        write_bland_altman(&out, &cfg, &s, svg_out)?;
    }
    Ok(0)
}
