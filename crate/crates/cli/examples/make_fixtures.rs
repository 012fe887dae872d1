//! Regenerates `fixtures/`: a synthetic 20-pair benchmark with six raters,
//! a scripted judge recorded into a replay cache, two small example groups, and a
//! 500-report synthetic corpus.
//!
//! ```text
//! cargo run -p radjudge-cli --example make_fixtures -- fixtures
//! ```

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use radjudge::backend::{BackendError, CacheMode, CachedBackend, ChatRequest, ChatResponse, FnBackend, Role};
use radjudge::corpus::{make_pairs, screen_pairs, screen_template, synthetic::synthetic_corpus, PairingMode, PairingSpec};
use radjudge::io::{write_atomic, write_json_pretty, write_jsonl};
use radjudge::judge::{judge_pair, JudgeParams};
use radjudge::types::{ErrorCategory, Provenance, Report, ReportPair, Significance};
use radjudge_cli::annotations::native_header;
use radjudge_cli::config::{CommonArgs, Env, RunConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

const CONFIG: &str = "backend = \"replay\"\ncache_dir = \"cache\"\nmodel = \"gpt-4\"\nstrategy = \"two_stage\"\nconcurrency = 4\nparse_retries = 1\n";

#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
#[serde(rename_all = "snake_case")]
enum Flaw {
    None,
    SingleQuotes,
    TrailingComma,
    MissingTotal,
    GarbageFirst,
}

#[derive(Clone, Debug, Serialize)]
struct PlannedError {
    category: ErrorCategory,
    significance: Significance,
    description: String,
}

#[derive(Clone, Debug, Serialize)]
struct Plan {
    pair_id: String,
    errors: Vec<PlannedError>,
    judge_total: usize,
    flaw: Flaw,
}

fn comparison_text(errors: &[PlannedError]) -> String {
    if errors.is_empty() {
        return "No clinical discrepancies were found; the candidate agrees with the reference.".into();
    }
    let mut s = String::from("Discrepancies of the candidate relative to the reference:\n");
    for (i, e) in errors.iter().enumerate() {
        let sig = match e.significance {
            Significance::ClinicallySignificant => "clinically significant",
            Significance::ClinicallyInsignificant => "clinically insignificant",
        };
        s.push_str(&format!("{}. {} ({sig}): {}\n", i + 1, e.category.label(), e.description));
    }
    s
}

fn count_json(errors: &[PlannedError], flaw: Flaw) -> String {
    let items: Vec<String> = errors
        .iter()
        .map(|e| {
            format!(
                "{{\"category\": \"{}\", \"significance\": \"{}\", \"description\": \"{}\"}}",
                e.category.as_str(),
                e.significance.as_str(),
                e.description
            )
        })
        .collect();
    let mut list = items.join(", ");
    if flaw == Flaw::TrailingComma && !list.is_empty() {
        list.push(',');
    }
    let body = match flaw {
        Flaw::MissingTotal => format!("{{\"errors\": [{list}]}}"),
        Flaw::TrailingComma => format!("{{\"errors\": [{list}], \"total_count\": {},}}", errors.len()),
        _ => format!("{{\"errors\": [{list}], \"total_count\": {}}}", errors.len()),
    };
    match flaw {
        Flaw::SingleQuotes => body.replace('"', "'"),
        _ => body,
    }
}

fn reply(content: String) -> Result<ChatResponse, BackendError> {
    Ok(ChatResponse {
        completion_tokens: content.split_whitespace().count() as u64,
        content,
        model_id: "gpt-4-0613".into(),
        prompt_tokens: 0,
        latency_ms: 0,
    })
}

fn user_text(req: &ChatRequest) -> &str {
    req.messages
        .iter()
        .rev()
        .find(|m| m.role == Role::User)
        .map(|m| m.content.as_str())
        .unwrap_or("")
}

/// Scripted two-stage judge: stage 1 describes the planned errors for the
/// pair found in the prompt; stage 2 turns that description into JSON,
/// with the pair's planned formatting flaw.
struct Script {
    by_texts: Vec<Scripted>,
    comparisons: Mutex<HashMap<String, (Vec<PlannedError>, Flaw)>>,
}

impl Script {
    fn answer(&self, req: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let user = user_text(req);
        let attempt: u32 = req.extra.get("_attempt").and_then(|a| a.parse().ok()).unwrap_or(1);
        let found = self
            .comparisons
            .lock()
            .unwrap()
            .iter()
            .filter(|(c, _)| user.contains(c.as_str()))
            .max_by_key(|(c, _)| c.len())
            .map(|(_, v)| v.clone());
        if let Some((errors, flaw)) = found {
            if flaw == Flaw::GarbageFirst && attempt == 1 {
                return reply("I have listed the discrepancies above.".into());
            }
            return reply(count_json(&errors, flaw));
        }
        let (_, _, errors, flaw) = self
            .by_texts
            .iter()
            .filter(|(r, c, _, _)| user.contains(r.as_str()) && user.contains(c.as_str()))
            .max_by_key(|(r, c, _, _)| r.len() + c.len())
            .ok_or_else(|| BackendError::InvalidRequest("script has no answer for this prompt".into()))?;
        let text = comparison_text(errors);
        self.comparisons.lock().unwrap().insert(text.clone(), (errors.clone(), *flaw));
        reply(text)
    }
}

const DESCRIPTIONS: [&str; 6] = [
    "the candidate reports a finding absent from the reference",
    "a finding from the reference is missing",
    "the finding is placed on the wrong side",
    "the severity differs from the reference",
    "the candidate cites a prior study the reference does not mention",
    "the change since the prior study is not described",
];

fn plan_errors(rng: &mut ChaCha8Rng) -> Vec<PlannedError> {
    let n = rng.gen_range(0..=6);
    (0..n)
        .map(|_| {
            let c = ErrorCategory::ALL[rng.gen_range(0..6)];
            let s = if rng.gen_bool(0.6) {
                Significance::ClinicallySignificant
            } else {
                Significance::ClinicallyInsignificant
            };
            PlannedError {
                category: c,
                significance: s,
                description: DESCRIPTIONS[c.index()].into(),
            }
        })
        .collect()
}

/// Each rater sees the planned errors, then misses or adds one now and
/// then.
fn rater_counts(plan: &[PlannedError], rng: &mut ChaCha8Rng) -> [u32; 12] {
    let mut cells = [0u32; 12];
    for e in plan {
        cells[e.category.index() * 2 + e.significance.index()] += 1;
    }
    for _ in 0..2 {
        let i = rng.gen_range(0..12);
        match rng.gen_range(0..10) {
            0..=1 if cells[i] > 0 => cells[i] -= 1,
            2..=3 => cells[i] += 1,
            _ => {}
        }
    }
    cells
}

#[derive(Serialize)]
struct ExampleGroup {
    reference: String,
    candidates: Vec<GroupCandidate>,
}

#[derive(Serialize)]
struct GroupCandidate {
    id: String,
    text: String,
    bleu2: f64,
}

/// `(reference text, candidate text, planned errors, flaw)`.
type Scripted = (String, String, Vec<PlannedError>, Flaw);

fn example_groups() -> (Vec<(String, ExampleGroup)>, Vec<ReportPair>, Vec<Scripted>) {
    let a_gt = "FINDINGS: Frontal and lateral views of the chest were obtained. No focal consolidation, pleural effusion, or evidence of pneumothorax is seen. The cardiac silhouette is top normal. Mediastinal and hilar contours are unremarkable. No displaced fracture is seen. There is no evidence of free air beneath the diaphragms.";
    let a = [
        ("GR1", "FINDINGS: AP and lateral CXR. No indications of focal consolidation or pleural effusion is seen. There is no evidence of pneumothorax. The cardiac outline is within the upper limits of normal. The mediastinal and hilar contours do not show any abnormalities. No evidence of a fracture is present. Additionally, there is an absence of free air beneath the diaphragms areas.", 0.472),
        ("GR2", "FINDINGS: Frontal views of the chest were obtained. Focal consolidation, pleural effusion, and evidence of pneumothorax are seen. The cardiac silhouette is enlarged. Mediastinal and hilar contours are unremarkable. Rib fracture is seen. There is no evidence of free air beneath the diaphragms.", 0.778),
        ("GR3", "FINDINGS: Frontal and lateral views of the chest were obtained. No consolidation, no pleural effusion, no pneumothorax. The cardiac silhouette is bottom normal. Mediastinal and hilar contours are unremarkable. No fracture. There is some evidence of free air beneath the diaphragms.", 0.717),
    ];
    let b_gt = "Heart size is enlarged. Mediastinum is stable. Multifocal opacities are present, overall similar to previous study but potentially minimally improved. No appreciable pneumothorax. Old rib fractures, unchanged.";
    let b = [
        ("GR1", "Cardiomegaly is found. Mediastinal silhouette remains unchanged. There are multiple areas of increased opacity within the lungs, which appear largely consistent with the prior examination, with a slight possibility of marginal improvement. No significant evidence of pneumothorax. Prior rib fractures are present with no interval change.", 0.114),
        ("GR2", "Mediastinum and heart size is enlarged. Mediastinum is stable. Single opacities are present, overall similar to previous study but potentially minimally decreased.No appreciable pneumothorax. Old rib fractures, unchanged.", 0.850),
        ("GR3", "Heart size is enlarged and mediastinum is large. Opacities are present in basiliar side,  overall similar to previous study but potentially minimally decreased. No pneumothorax. Old rib fractures, changed.", 0.634),
    ];
    let case = |gt: &str, cs: &[(&str, &str, f64)]| ExampleGroup {
        reference: gt.into(),
        candidates: cs
            .iter()
            .map(|(id, t, s)| GroupCandidate {
                id: (*id).into(),
                text: (*t).into(),
                bleu2: *s,
            })
            .collect(),
    };
    let groups = vec![("a".to_owned(), case(a_gt, &a)), ("b".to_owned(), case(b_gt, &b))];

    let e = |c, d: &str| PlannedError {
        category: c,
        significance: Significance::ClinicallySignificant,
        description: d.into(),
    };
    use ErrorCategory::*;
    let scripted = [
        ("GR1", vec![]),
        (
            "GR2",
            vec![
                e(OmissionOfFinding, "the lateral view is not mentioned"),
                e(FalsePredictionOfFinding, "focal consolidation is reported but absent in the reference"),
                e(FalsePredictionOfFinding, "pleural effusion is reported but absent in the reference"),
                e(FalsePredictionOfFinding, "pneumothorax is reported but absent in the reference"),
                e(IncorrectSeverityOfFinding, "the cardiac silhouette is called enlarged instead of top normal"),
                e(FalsePredictionOfFinding, "a rib fracture is reported but absent in the reference"),
            ],
        ),
        (
            "GR3",
            vec![
                e(IncorrectSeverityOfFinding, "the cardiac silhouette is called bottom normal instead of top normal"),
                e(FalsePredictionOfFinding, "free air beneath the diaphragms is reported"),
            ],
        ),
    ];
    let mut pairs = Vec::new();
    let mut script = Vec::new();
    for ((id, text, _), (_, errs)) in a.iter().zip(scripted) {
        pairs.push(ReportPair {
            pair_id: format!("groupa:{id}"),
            reference: Report::new("groupa:GT", a_gt),
            candidate: Report::new(format!("groupa:{id}"), *text),
            provenance: Provenance::User,
        });
        script.push((a_gt.to_owned(), (*text).to_owned(), errs, Flaw::None));
    }
    (groups, pairs, script)
}

fn main() {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    let cache = root.join("cache");
    if cache.exists() {
        std::fs::remove_dir_all(&cache).unwrap();
    }
    std::fs::create_dir_all(root.join("oracle")).unwrap();
    let cfg_path = root.join("radjudge.toml");
    write_atomic(&cfg_path, CONFIG.as_bytes()).unwrap();

    // 20 benchmark pairs drawn at random from a small synthetic corpus.
    let corpus = synthetic_corpus(60, 20);
    let pairs = make_pairs(&corpus, &PairingSpec::new(PairingMode::Random, 20, 20)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let flaws = [
        (2, Flaw::SingleQuotes),
        (7, Flaw::TrailingComma),
        (11, Flaw::MissingTotal),
        (15, Flaw::GarbageFirst),
    ];
    let plans: Vec<Plan> = pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let errors = plan_errors(&mut rng);
            Plan {
                pair_id: p.pair_id.clone(),
                judge_total: errors.len(),
                errors,
                flaw: flaws.iter().find(|f| f.0 == i).map(|f| f.1).unwrap_or(Flaw::None),
            }
        })
        .collect();

    let raters = ["rad1", "rad2", "rad3", "rad4", "rad5", "rad6"];
    let mut csv_out = native_header().join(",") + "\n";
    for plan in &plans {
        for r in raters {
            let cells = rater_counts(&plan.errors, &mut rng);
            let row: Vec<String> = cells.iter().map(u32::to_string).collect();
            csv_out.push_str(&format!("{},{r},{}\n", plan.pair_id, row.join(",")));
        }
    }

    let (groups, group_pairs, group_script) = example_groups();
    let mut by_texts: Vec<_> = pairs
        .iter()
        .zip(&plans)
        .map(|(p, plan)| (p.reference.text.clone(), p.candidate.text.clone(), plan.errors.clone(), plan.flaw))
        .collect();
    by_texts.extend(group_script);
    let script = Script {
        by_texts,
        comparisons: Mutex::new(HashMap::new()),
    };

    let args = CommonArgs {
        config: Some(cfg_path.clone()),
        ..Default::default()
    };
    let cfg = RunConfig::resolve("judge", &args, &Env::default()).unwrap();
    let prompts = cfg.prompts().unwrap();
    let params: JudgeParams = cfg.judge_params();
    let live = FnBackend(move |req: &ChatRequest| script.answer(req));
    let backend = CachedBackend::new(&cache, CacheMode::ReplayOrRecord, Some(Box::new(live)));
    // Sequential so stage-1 text is registered before its count prompt.
    for p in pairs.iter().chain(&group_pairs) {
        let o = judge_pair(p, &backend, cfg.strategy, &prompts, &params).unwrap();
        if let Some(plan) = plans.iter().find(|pl| pl.pair_id == p.pair_id) {
            assert_eq!(o.judgment.total_count as usize, plan.judge_total, "{} {:?} {}", p.pair_id, plan.flaw, o.judgment.raw_final);
        }
    }

    // Screening replies: everything kept except one pair.
    let reject = pairs[4].pair_id.clone();
    let screen_live = FnBackend(|_: &ChatRequest| reply("KEEP both reports read as complete radiology reports.".into()));
    let screen_backend = CachedBackend::new(&cache, CacheMode::ReplayOrRecord, Some(Box::new(screen_live)));
    let screen_params = JudgeParams {
        model: cfg.screen_model.clone(),
        ..params.clone()
    };
    let tpl = screen_template("v1").unwrap();
    let keep_pairs: Vec<ReportPair> = pairs.iter().filter(|p| p.pair_id != reject).cloned().collect();
    screen_pairs(&keep_pairs, &screen_backend, &tpl, &screen_params).unwrap();
    let reject_live = FnBackend(|_: &ChatRequest| reply("REJECT report B ends mid-sentence.".into()));
    let reject_backend = CachedBackend::new(&cache, CacheMode::ReplayOrRecord, Some(Box::new(reject_live)));
    let rejected: Vec<ReportPair> = pairs.iter().filter(|p| p.pair_id == reject).cloned().collect();
    screen_pairs(&rejected, &reject_backend, &tpl, &screen_params).unwrap();

    write_jsonl(&root.join("bench20_pairs.jsonl"), &pairs).unwrap();
    write_jsonl(&root.join("pairs5.jsonl"), &pairs[..5]).unwrap();
    write_jsonl(&root.join("group_a_pairs.jsonl"), &group_pairs).unwrap();
    write_json_pretty(&root.join("bench20_plan.json"), &plans).unwrap();
    write_atomic(&root.join("bench20_annotations.csv"), csv_out.as_bytes()).unwrap();
    let by_name: std::collections::BTreeMap<_, _> = groups.into_iter().collect();
    write_json_pretty(&root.join("example_groups.json"), &by_name).unwrap();

    // Three-rater annotation grid for the agreement oracle.
    let mut agree = native_header().join(",") + "\n";
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for i in 0..12 {
        let base: Vec<PlannedError> = plan_errors(&mut rng);
        for r in ["r1", "r2", "r3"] {
            let cells = rater_counts(&base, &mut rng);
            let row: Vec<String> = cells.iter().map(u32::to_string).collect();
            agree.push_str(&format!("case{i:02},{r},{}\n", row.join(",")));
        }
    }
    write_atomic(&root.join("agree3.csv"), agree.as_bytes()).unwrap();

    let corpus500 = synthetic_corpus(500, 0);
    let reports: Vec<&Report> = corpus500.iter().collect();
    write_jsonl(&root.join("corpus500.jsonl"), &reports).unwrap();

    let n = count_files(&cache);
    eprintln!("wrote fixtures to {} ({n} cache entries)", root.display());
}

fn count_files(dir: &Path) -> usize {
    std::fs::read_dir(dir)
        .unwrap()
        .flatten()
        .map(|e| if e.path().is_dir() { count_files(&e.path()) } else { 1 })
        .sum()
}
