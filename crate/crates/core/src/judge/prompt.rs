use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::JudgeError;
use crate::backend::Message;
use crate::types::{ErrorCategory, ReportPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Single,
    Compare,
    Count,
    Screen,
}

impl Stage {
    fn required(self) -> &'static [&'static str] {
        match self {
            Stage::Single | Stage::Compare | Stage::Screen => &["reference", "candidate"],
            Stage::Count => &["comparison"],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Single => "single",
            Stage::Compare => "compare",
            Stage::Count => "count",
            Stage::Screen => "screen",
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" => Ok(Stage::Single),
            "compare" => Ok(Stage::Compare),
            "count" => Ok(Stage::Count),
            "screen" => Ok(Stage::Screen),
            other => Err(format!("unknown stage `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Slot(String),
}

fn segments(body: &str) -> Vec<Segment> {
    let mut out = Vec::new();
    let mut rest = body;
    let mut text = String::new();
    while let Some(open) = rest.find("{{") {
        let after = &rest[open + 2..];
        let Some(close) = after.find("}}") else { break };
        let name = after[..close].trim();
        if !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            text.push_str(&rest[..open]);
            if !text.is_empty() {
                out.push(Segment::Text(std::mem::take(&mut text)));
            }
            out.push(Segment::Slot(name.to_owned()));
            rest = &after[close + 2..];
        } else {
            text.push_str(&rest[..open + 2]);
            rest = after;
        }
    }
    text.push_str(rest);
    if !text.is_empty() {
        out.push(Segment::Text(text));
    }
    out
}

/// A prompt body with `{{name}}` placeholders, stored on disk as plain text
/// behind a `---` front-matter block carrying `stage` and `version`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub stage: Stage,
    pub version: String,
    pub body: String,
}

impl PromptTemplate {
    pub fn new(stage: Stage, version: impl Into<String>, body: impl Into<String>) -> Result<Self, JudgeError> {
        let t = Self {
            stage,
            version: version.into(),
            body: body.into(),
        };
        t.validate()?;
        Ok(t)
    }

    /// Parses the front-matter file format.
    pub fn parse(text: &str) -> Result<Self, JudgeError> {
        let bad = |m: &str| JudgeError::Template(m.to_owned());
        let text = text.strip_prefix('\u{feff}').unwrap_or(text);
        let rest = text
            .strip_prefix("---\n")
            .or_else(|| text.strip_prefix("---\r\n"))
            .ok_or_else(|| bad("missing front matter"))?;
        let end = rest
            .find("\n---\n")
            .or_else(|| rest.find("\n---\r\n"))
            .ok_or_else(|| bad("unterminated front matter"))?;
        let header = &rest[..end];
        let body_start = end + rest[end + 1..].find('\n').expect("terminator has a newline") + 2;
        let body = &rest[body_start..];
        let mut stage = None;
        let mut version = None;
        for line in header.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line.split_once(':').ok_or_else(|| bad(&format!("bad front-matter line `{line}`")))?;
            match k.trim() {
                "stage" => stage = Some(v.trim().parse::<Stage>().map_err(|e| bad(&e))?),
                "version" => version = Some(v.trim().to_owned()),
                _ => {}
            }
        }
        Self::new(
            stage.ok_or_else(|| bad("front matter lacks `stage`"))?,
            version.ok_or_else(|| bad("front matter lacks `version`"))?,
            body,
        )
    }

    pub fn to_file_string(&self) -> String {
        format!("---\nstage: {}\nversion: {}\n---\n{}", self.stage.as_str(), self.version, self.body)
    }

    pub fn placeholders(&self) -> Vec<String> {
        let mut names: Vec<String> = segments(&self.body)
            .into_iter()
            .filter_map(|s| match s {
                Segment::Slot(n) => Some(n),
                Segment::Text(_) => None,
            })
            .collect();
        names.sort();
        names.dedup();
        names
    }

    pub fn validate(&self) -> Result<(), JudgeError> {
        if self.version.is_empty() {
            return Err(JudgeError::Template("empty version".into()));
        }
        let present = self.placeholders();
        for need in self.stage.required() {
            if !present.iter().any(|p| p == need) {
                return Err(JudgeError::Template(format!(
                    "{} template must contain {{{{{need}}}}}",
                    self.stage.as_str()
                )));
            }
        }
        Ok(())
    }

    /// Substitutes every placeholder in one pass; bound values are inserted
    /// verbatim and never re-scanned.
    pub fn render(&self, bindings: &BTreeMap<&str, &str>) -> Result<String, JudgeError> {
        let mut out = String::with_capacity(self.body.len() + 256);
        for seg in segments(&self.body) {
            match seg {
                Segment::Text(t) => out.push_str(&t),
                Segment::Slot(name) => {
                    let v = bindings
                        .get(name.as_str())
                        .ok_or(JudgeError::UnboundPlaceholder(name))?;
                    out.push_str(v);
                }
            }
        }
        Ok(out)
    }
}

/// Task framing, the six categories and the significance definitions.
pub fn system_message() -> String {
    let mut s = String::from(
        "You are an expert radiologist reviewing a candidate radiology report against a reference report \
written for the same study. Judge clinical content, not wording: paraphrases, synonyms and \
reordered sentences that keep the clinical meaning are not errors.\n\n\
Classify every discrepancy into exactly one of these six error categories (use the id in structured output):\n",
    );
    for (i, c) in ErrorCategory::ALL.into_iter().enumerate() {
        let _ = writeln!(s, "{}. {} (id: {})", i + 1, c.label(), c.as_str());
    }
    s.push_str(
        "\nMark each discrepancy with a significance:\n\
- clinically_significant: the discrepancy could change patient management or the clinical interpretation of the study.\n\
- clinically_insignificant: the discrepancy is real but would not change management or interpretation.\n",
    );
    s
}

/// Renders the system message and the user message for `pair`. `bindings`
/// is layered over the pair's `reference` and `candidate` texts.
pub fn render_messages(
    template: &PromptTemplate,
    pair: &ReportPair,
    bindings: &BTreeMap<String, String>,
) -> Result<Vec<Message>, JudgeError> {
    let mut all: BTreeMap<&str, &str> = BTreeMap::new();
    all.insert("reference", &pair.reference.text);
    all.insert("candidate", &pair.candidate.text);
    for (k, v) in bindings {
        all.insert(k, v);
    }
    Ok(vec![Message::system(system_message()), Message::user(template.render(&all)?)])
}

/// The single, compare and count templates of one prompt version.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub version: String,
    pub single: PromptTemplate,
    pub compare: PromptTemplate,
    pub count: PromptTemplate,
}

const V1_SINGLE: &str = include_str!("../../templates/v1/single.txt");
const V1_COMPARE: &str = include_str!("../../templates/v1/compare.txt");
const V1_COUNT: &str = include_str!("../../templates/v1/count.txt");
pub(crate) const V1_SCREEN: &str = include_str!("../../templates/v1/screen.txt");

impl PromptSet {
    pub fn from_templates(single: PromptTemplate, compare: PromptTemplate, count: PromptTemplate) -> Result<Self, JudgeError> {
        for (t, stage) in [(&single, Stage::Single), (&compare, Stage::Compare), (&count, Stage::Count)] {
            if t.stage != stage {
                return Err(JudgeError::Template(format!(
                    "expected a {} template, got {}",
                    stage.as_str(),
                    t.stage.as_str()
                )));
            }
        }
        if compare.version != single.version || count.version != single.version {
            return Err(JudgeError::Template(format!(
                "template versions differ: {}, {}, {}",
                single.version, compare.version, count.version
            )));
        }
        Ok(Self {
            version: single.version.clone(),
            single,
            compare,
            count,
        })
    }

    /// Bundled prompts. Only `v1` exists.
    pub fn builtin(version: &str) -> Result<Self, JudgeError> {
        match version {
            "v1" => Self::from_templates(
                PromptTemplate::parse(V1_SINGLE)?,
                PromptTemplate::parse(V1_COMPARE)?,
                PromptTemplate::parse(V1_COUNT)?,
            ),
            other => Err(JudgeError::Template(format!("no bundled prompt version `{other}`"))),
        }
    }

    /// Loads `single.txt`, `compare.txt` and `count.txt` from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, JudgeError> {
        let read = |name: &str| {
            let p = dir.join(name);
            std::fs::read_to_string(&p)
                .map_err(|e| JudgeError::Template(format!("{}: {e}", p.display())))
                .and_then(|t| PromptTemplate::parse(&t))
        };
        Self::from_templates(read("single.txt")?, read("compare.txt")?, read("count.txt")?)
    }
}
