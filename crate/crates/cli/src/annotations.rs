//! Rater annotation CSV input, with an optional column-mapping file for
//! layouts other than the native one.

use std::collections::BTreeMap;
use std::path::Path;

use radjudge::respparse::{normalize_category, normalize_significance};
use radjudge::types::{CountMatrix, ErrorCategory, RaterAnnotation, Significance};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// One row per (pair, rater) with twelve count columns.
    #[default]
    Wide,
    /// One row per (pair, rater, category[, significance]) with a count.
    Long,
}

/// Column mapping, read from TOML.
///
/// ```toml
/// layout = "wide"
/// pair_id = "case"
/// rater_id = "radiologist"
/// [columns]
/// omission_of_finding_clinically_significant = "omission_sig"
/// ```
///
/// For `layout = "long"`, name the `category`, `significance` (optional;
/// rows without one count as clinically significant) and `count` columns.
/// Values in those columns go through the category synonym table unless
/// listed in `category_values` / `significance_values`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnMapping {
    #[serde(default)]
    pub layout: Layout,
    pub pair_id: Option<String>,
    pub rater_id: Option<String>,
    #[serde(default)]
    pub columns: BTreeMap<String, String>,
    pub category: Option<String>,
    pub significance: Option<String>,
    pub count: Option<String>,
    #[serde(default)]
    pub category_values: BTreeMap<String, String>,
    #[serde(default)]
    pub significance_values: BTreeMap<String, String>,
}

impl ColumnMapping {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }
}

fn cells() -> impl Iterator<Item = (ErrorCategory, Significance)> {
    ErrorCategory::ALL
        .into_iter()
        .flat_map(|c| Significance::ALL.into_iter().map(move |s| (c, s)))
}

fn column_name(c: ErrorCategory, s: Significance) -> String {
    format!("{}_{}", c.as_str(), s.as_str())
}

struct Table {
    headers: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
}

fn read_table(path: &Path) -> CliResult<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let headers = rdr
        .headers()
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        rows.push((line, rec.iter().map(str::to_owned).collect()));
    }
    Ok(Table { headers, rows })
}

impl Table {
    fn col(&self, path: &Path, name: &str) -> CliResult<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::config(format!("{}: missing column `{name}`", path.display())))
    }
}

fn parse_count(path: &Path, line: usize, col: &str, v: &str) -> CliResult<u32> {
    if v.is_empty() {
        return Ok(0);
    }
    v.parse::<u32>()
        .or_else(|_| match v.parse::<f64>() {
            Ok(f) if f >= 0.0 && f.fract() == 0.0 && f <= u32::MAX as f64 => Ok(f as u32),
            _ => Err(()),
        })
        .map_err(|_| {
            CliError::config(format!(
                "{}:{line}: column `{col}` must be a non-negative integer, got `{v}`",
                path.display()
            ))
        })
}

/// Reads annotations. Without a mapping the file must have `pair_id`,
/// `rater_id` and the twelve `<category>_<significance>` columns.
pub fn read_annotations(path: &Path, mapping: Option<&ColumnMapping>) -> CliResult<Vec<RaterAnnotation>> {
    let default = ColumnMapping::default();
    let m = mapping.unwrap_or(&default);
    let t = read_table(path)?;
    let pair_col = t.col(path, m.pair_id.as_deref().unwrap_or("pair_id"))?;
    let rater_col = t.col(path, m.rater_id.as_deref().unwrap_or("rater_id"))?;
    let mut out: BTreeMap<(String, String), CountMatrix> = BTreeMap::new();
    let mut order = Vec::new();

    match m.layout {
        Layout::Wide => {
            let mut cols = Vec::new();
            for (c, s) in cells() {
                let native = column_name(c, s);
                let source = m.columns.get(&native).cloned().unwrap_or(native);
                cols.push((c, s, t.col(path, &source)?, source));
            }
            for (line, row) in &t.rows {
                let key = (row[pair_col].clone(), row[rater_col].clone());
                let mut counts = CountMatrix::default();
                for (c, s, i, name) in &cols {
                    counts.set(*c, *s, parse_count(path, *line, name, &row[*i])?);
                }
                if out.insert(key.clone(), counts).is_some() {
                    return Err(CliError::config(format!(
                        "{}:{line}: duplicate annotation for pair `{}` rater `{}`",
                        path.display(),
                        key.0,
                        key.1
                    )));
                }
                order.push(key);
            }
        }
        Layout::Long => {
            let need = |o: &Option<String>, what: &str| {
                o.clone()
                    .ok_or_else(|| CliError::config(format!("long layout mapping needs `{what}`")))
            };
            let cat_col = t.col(path, &need(&m.category, "category")?)?;
            let count_name = need(&m.count, "count")?;
            let count_col = t.col(path, &count_name)?;
            let sig_col = match &m.significance {
                Some(n) => Some(t.col(path, n)?),
                None => None,
            };
            for (line, row) in &t.rows {
                let raw_cat = &row[cat_col];
                let cat = match m.category_values.get(raw_cat) {
                    Some(id) => ErrorCategory::from_id(id),
                    None => normalize_category(raw_cat).ok(),
                }
                .ok_or_else(|| CliError::config(format!("{}:{line}: unknown category `{raw_cat}`", path.display())))?;
                let sig = match sig_col {
                    None => Significance::ClinicallySignificant,
                    Some(i) => {
                        let raw = &row[i];
                        match m.significance_values.get(raw) {
                            Some(v) => normalize_significance(v),
                            None => normalize_significance(raw),
                        }
                        .ok_or_else(|| {
                            CliError::config(format!("{}:{line}: unknown significance `{raw}`", path.display()))
                        })?
                    }
                };
                let n = parse_count(path, *line, &count_name, &row[count_col])?;
                let key = (row[pair_col].clone(), row[rater_col].clone());
                let entry = out.entry(key.clone()).or_insert_with(|| {
                    order.push(key);
                    CountMatrix::default()
                });
                entry.set(cat, sig, entry.get(cat, sig) + n);
            }
        }
    }

    Ok(order
        .into_iter()
        .map(|k| {
            let counts = out[&k];
            RaterAnnotation {
                pair_id: k.0,
                rater_id: k.1,
                counts,
            }
        })
        .collect())
}

/// Native layout header.
pub fn native_header() -> Vec<String> {
    let mut h = vec!["pair_id".to_owned(), "rater_id".to_owned()];
    h.extend(cells().map(|(c, s)| column_name(c, s)));
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    fn native_row(pair: &str, rater: &str, cells: [u32; 12]) -> String {
        let mut s = format!("{pair},{rater}");
        for c in cells {
            s.push_str(&format!(",{c}"));
        }
        s
    }

    #[test]
    fn native_layout() {
        let d = tempfile::tempdir().unwrap();
        let body = format!(
            "# comment\n{}\n{}\n{}\n",
            native_header().join(","),
            native_row("p1", "r1", [1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 2]),
            native_row("p1", "r2", [0; 12])
        );
        let anns = read_annotations(&write(d.path(), "a.csv", &body), None).unwrap();
        assert_eq!(anns.len(), 2);
        assert_eq!(anns[0].total_count(), 3);
        assert_eq!(anns[0].significant_count(), 1);
        assert_eq!(
            anns[0].counts.get(ErrorCategory::ALL[5], Significance::ClinicallyInsignificant),
            2
        );
    }

    #[test]
    fn missing_column_and_bad_count() {
        let d = tempfile::tempdir().unwrap();
        let p = write(d.path(), "a.csv", "pair_id,rater_id\np1,r1\n");
        assert_eq!(read_annotations(&p, None).unwrap_err().code, 2);
        let mut row = native_row("p1", "r1", [0; 12]);
        row.push('x');
        let p = write(d.path(), "b.csv", &format!("{}\n{row}\n", native_header().join(",")));
        assert!(read_annotations(&p, None).unwrap_err().message.contains("non-negative integer"));
    }

    #[test]
    fn duplicate_row_rejected() {
        let d = tempfile::tempdir().unwrap();
        let r = native_row("p1", "r1", [0; 12]);
        let p = write(d.path(), "a.csv", &format!("{}\n{r}\n{r}\n", native_header().join(",")));
        assert!(read_annotations(&p, None).unwrap_err().message.contains("duplicate"));
    }

    #[test]
    fn long_layout_with_value_map() {
        let d = tempfile::tempdir().unwrap();
        let csv = "study,reader,err_type,sig,n\n\
                   s1,A,2,yes,2\n\
                   s1,A,2,no,1\n\
                   s1,A,Incorrect location of finding,yes,1\n\
                   s1,B,1,yes,0\n";
        let map = r#"
layout = "long"
pair_id = "study"
rater_id = "reader"
category = "err_type"
significance = "sig"
count = "n"
[significance_values]
yes = "clinically_significant"
no = "clinically_insignificant"
"#;
        let m: ColumnMapping = toml::from_str(map).unwrap();
        let anns = read_annotations(&write(d.path(), "a.csv", csv), Some(&m)).unwrap();
        assert_eq!(anns.len(), 2);
        let a = &anns[0];
        assert_eq!((a.pair_id.as_str(), a.rater_id.as_str()), ("s1", "A"));
        assert_eq!(a.counts.get(ErrorCategory::OmissionOfFinding, Significance::ClinicallySignificant), 2);
        assert_eq!(a.counts.get(ErrorCategory::OmissionOfFinding, Significance::ClinicallyInsignificant), 1);
        assert_eq!(a.counts.get(ErrorCategory::IncorrectLocationOfFinding, Significance::ClinicallySignificant), 1);
        assert_eq!(anns[1].total_count(), 0);
    }

    #[test]
    fn wide_layout_with_renamed_columns() {
        let d = tempfile::tempdir().unwrap();
        let mut header = native_header();
        header[0] = "case".into();
        header[2] = "fp_sig".into();
        let csv = format!("{}\n{}\n", header.join(","), native_row("c9", "r1", [4, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]));
        let m: ColumnMapping = toml::from_str(&format!(
            "pair_id = \"case\"\n[columns]\n{} = \"fp_sig\"\n",
            column_name(ErrorCategory::ALL[0], Significance::ClinicallySignificant)
        ))
        .unwrap();
        let anns = read_annotations(&write(d.path(), "a.csv", &csv), Some(&m)).unwrap();
        assert_eq!(anns[0].pair_id, "c9");
        assert_eq!(anns[0].total_count(), 4);
    }
}
