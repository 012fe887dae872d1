use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::OnceLock;

use super::RespParseError;
use crate::types::{ErrorCategory, Significance};

const DEFAULT_TABLE: &str = include_str!("../../data/category_synonyms.json");

/// Lowercases and reduces every run of non-alphanumeric characters to a
/// single space.
pub fn normalize_label(label: &str) -> String {
    let mut out = String::with_capacity(label.len());
    for word in label
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
    {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

/// Surface form → category lookup, loaded from a JSON document mapping each
/// category id to its accepted labels.
#[derive(Debug, Clone)]
pub struct SynonymTable {
    forms: HashMap<String, ErrorCategory>,
}

impl SynonymTable {
    pub fn from_json(json: &str) -> Result<Self, RespParseError> {
        let raw: BTreeMap<String, Vec<String>> =
            serde_json::from_str(json).map_err(|e| RespParseError::SynonymTable(e.to_string()))?;
        let mut forms = HashMap::new();
        for category in ErrorCategory::ALL {
            forms.insert(normalize_label(category.as_str()), category);
        }
        for (id, labels) in raw {
            let category = ErrorCategory::from_id(&id)
                .ok_or_else(|| RespParseError::SynonymTable(format!("unknown category id `{id}`")))?;
            for label in labels {
                let key = normalize_label(&label);
                match forms.insert(key.clone(), category) {
                    Some(prev) if prev != category => {
                        return Err(RespParseError::SynonymTable(format!(
                            "label `{label}` maps to both {prev} and {category}"
                        )))
                    }
                    _ => {}
                }
            }
        }
        Ok(Self { forms })
    }

    pub fn from_path(path: &Path) -> Result<Self, RespParseError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RespParseError::SynonymTable(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// The table shipped with the crate.
    pub fn builtin() -> &'static SynonymTable {
        static TABLE: OnceLock<SynonymTable> = OnceLock::new();
        TABLE.get_or_init(|| SynonymTable::from_json(DEFAULT_TABLE).expect("bundled synonym table is valid"))
    }

    pub fn lookup(&self, label: &str) -> Result<ErrorCategory, RespParseError> {
        let key = normalize_label(label);
        if let Some(&c) = self.forms.get(&key) {
            return Ok(c);
        }
        // "2. Omission of finding", "(a) false prediction"
        if let Some((head, rest)) = key.split_once(' ') {
            if head.len() <= 2 && head.chars().all(|c| c.is_ascii_alphanumeric()) {
                if let Some(&c) = self.forms.get(rest) {
                    return Ok(c);
                }
            }
        }
        Err(RespParseError::Unmappable(label.to_owned()))
    }
}

/// Maps a free-text category label onto the taxonomy using the bundled
/// synonym table.
pub fn normalize_category(label: &str) -> Result<ErrorCategory, RespParseError> {
    SynonymTable::builtin().lookup(label)
}

pub fn normalize_significance(label: &str) -> Option<Significance> {
    let key = normalize_label(label);
    let s = match key.as_str() {
        "clinically significant" | "significant" | "yes" | "true" | "major" | "high" => {
            Significance::ClinicallySignificant
        }
        "clinically insignificant" | "insignificant" | "not significant" | "not clinically significant"
        | "non significant" | "clinically not significant" | "minor" | "no" | "false" | "low" => {
            Significance::ClinicallyInsignificant
        }
        _ => return None,
    };
    Some(s)
}
