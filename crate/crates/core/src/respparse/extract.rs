use super::RespParseError;

/// Byte spans of every top-level balanced `{...}` block in `s`. Braces
/// inside double-quoted strings are ignored.
fn balanced_objects(s: &str) -> Vec<(usize, usize)> {
    let b = s.as_bytes();
    let mut spans = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    let mut in_str = false;
    let mut esc = false;
    for (i, &c) in b.iter().enumerate() {
        if in_str {
            if esc {
                esc = false;
            } else if c == b'\\' {
                esc = true;
            } else if c == b'"' {
                in_str = false;
            }
            continue;
        }
        match c {
            b'"' if depth > 0 => in_str = true,
            b'{' => {
                if depth == 0 {
                    start = i;
                }
                depth += 1;
            }
            b'}' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    spans.push((start, i + 1));
                }
            }
            _ => {}
        }
    }
    spans
}

fn largest(s: &str) -> Option<&str> {
    balanced_objects(s)
        .into_iter()
        // max_by_key keeps the last maximum; reverse to prefer the first
        .rev()
        .max_by_key(|(a, b)| b - a)
        .map(|(a, b)| &s[a..b])
}

/// Contents of fenced code blocks (```), with any info string removed.
fn fenced_blocks(text: &str) -> Vec<&str> {
    text.split("```")
        .enumerate()
        .filter(|(i, _)| i % 2 == 1)
        .map(|(_, block)| match block.find('\n') {
            Some(nl) if !block[..nl].trim().contains(['{', '[']) => &block[nl + 1..],
            _ => block,
        })
        .collect()
}

/// Returns the largest balanced `{...}` block in `text`, looking inside
/// fenced code blocks first.
pub fn extract_candidate_object(text: &str) -> Result<&str, RespParseError> {
    let fenced = fenced_blocks(text)
        .into_iter()
        .filter_map(largest)
        .rev()
        .max_by_key(|s| s.len());
    fenced
        .or_else(|| largest(text))
        .ok_or(RespParseError::NoObjectFound)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strips_prose() {
        assert_eq!(
            extract_candidate_object(r#"Here is my analysis: {"errors": []}"#).unwrap(),
            r#"{"errors": []}"#
        );
    }

    #[test]
    fn prefers_fenced_block() {
        let text = "Compare {a} with ref.\n```json\n{\"errors\": [], \"total_count\": 0}\n```\nDone {longer block here}";
        assert_eq!(
            extract_candidate_object(text).unwrap(),
            "{\"errors\": [], \"total_count\": 0}"
        );
    }

    #[test]
    fn picks_largest_and_ignores_braces_in_strings() {
        let text = r#"{"a": 1} then {"b": "has } brace", "c": {"d": 2}}"#;
        assert_eq!(
            extract_candidate_object(text).unwrap(),
            r#"{"b": "has } brace", "c": {"d": 2}}"#
        );
    }

    #[test]
    fn no_object() {
        assert_eq!(extract_candidate_object("no braces at all"), Err(RespParseError::NoObjectFound));
        assert_eq!(extract_candidate_object("{ truncated"), Err(RespParseError::NoObjectFound));
    }

    #[test]
    fn apostrophes_in_prose_do_not_matter() {
        assert_eq!(extract_candidate_object("Here's it: {'a': 1}").unwrap(), "{'a': 1}");
    }
}
