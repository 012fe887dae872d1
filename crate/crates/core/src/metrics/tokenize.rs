use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub lowercase: bool,
    /// Emit each punctuation character as its own token.
    pub split_punctuation: bool,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            lowercase: true,
            split_punctuation: true,
        }
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Splits `text` into tokens. Whitespace runs always separate tokens and
/// never produce empty tokens.
pub fn tokenize(text: &str, cfg: &TokenizerConfig) -> Vec<String> {
    let text = if cfg.lowercase {
        std::borrow::Cow::Owned(text.to_lowercase())
    } else {
        std::borrow::Cow::Borrowed(text)
    };
    if !cfg.split_punctuation {
        return text.split_whitespace().map(str::to_owned).collect();
    }
    let mut out = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if is_word_char(c) {
            word.push(c);
            continue;
        }
        if !word.is_empty() {
            out.push(std::mem::take(&mut word));
        }
        if !c.is_whitespace() {
            out.push(c.to_string());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s, &TokenizerConfig::default())
    }

    #[test]
    fn splits_trailing_period() {
        assert_eq!(toks("Heart size is enlarged."), ["heart", "size", "is", "enlarged", "."]);
    }

    #[test]
    fn empty_text() {
        assert!(toks("").is_empty());
        assert!(toks("  \n\t ").is_empty());
    }

    #[test]
    fn collapses_whitespace() {
        assert_eq!(toks("No  pneumothorax"), ["no", "pneumothorax"]);
    }

    #[test]
    fn missing_space_after_period() {
        assert_eq!(toks("decreased.No"), ["decreased", ".", "no"]);
    }

    #[test]
    fn whitespace_only_mode_keeps_case_when_asked() {
        let cfg = TokenizerConfig {
            lowercase: false,
            split_punctuation: false,
        };
        assert_eq!(tokenize(" Heart  size. ", &cfg), ["Heart", "size."]);
    }
}
