use crate::error::{Error, Result};

/// Longest sentence, in words, after splitting.
pub const MAX_SENTENCE_WORDS: usize = 35;

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// Lower-cases and keeps letters, digits, whitespace, `. ! ?` and
/// apostrophes. Dropped characters become spaces, runs of terminators
/// collapse to their first character, and whitespace is squeezed.
pub fn preprocess(text: &str) -> Result<String> {
    let mut kept = String::with_capacity(text.len());
    for c in text.to_lowercase().chars() {
        let c = match c {
            '\u{2018}' | '\u{2019}' => '\'',
            _ => c,
        };
        if c.is_alphanumeric() || c == '\'' || is_terminator(c) {
            if is_terminator(c) && kept.chars().last().is_some_and(is_terminator) {
                continue;
            }
            kept.push(c);
        } else {
            kept.push(' ');
        }
    }
    let out = kept.split_whitespace().collect::<Vec<_>>().join(" ");
    if out.is_empty() {
        return Err(Error::EmptyPost(text.chars().take(80).collect()));
    }
    Ok(out)
}

/// Splits preprocessed text on `. ! ?`, tokenizes on whitespace, and wraps
/// sentences longer than [`MAX_SENTENCE_WORDS`]. Empty sentences are dropped.
pub fn split_sentences(text: &str) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    for sentence in text.split(is_terminator) {
        let words: Vec<String> = sentence.split_whitespace().map(str::to_string).collect();
        for chunk in words.chunks(MAX_SENTENCE_WORDS) {
            out.push(chunk.to_vec());
        }
    }
    out
}

/// `preprocess` followed by `split_sentences`.
pub fn tokenize_post(text: &str) -> Result<Vec<Vec<String>>> {
    let sentences = split_sentences(&preprocess(text)?);
    if sentences.is_empty() {
        return Err(Error::EmptyPost(text.chars().take(80).collect()));
    }
    Ok(sentences)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preprocess_cases() {
        assert_eq!(preprocess("It's NICE!!  ").unwrap(), "it's nice!");
        assert_eq!(preprocess("abc").unwrap(), "abc");
        assert!(matches!(preprocess("@#$%"), Err(Error::EmptyPost(_))));
        assert_eq!(preprocess("Don\u{2019}t,stop?!").unwrap(), "don't stop?");
    }

    #[test]
    fn split_cases() {
        assert_eq!(split_sentences("a b. c"), vec![vec!["a", "b"], vec!["c"]]);
        let long = vec!["w"; 80].join(" ");
        let lens: Vec<usize> = split_sentences(&long).iter().map(Vec::len).collect();
        assert_eq!(lens, vec![35, 35, 10]);
        assert!(split_sentences("...").is_empty());
    }

    #[test]
    fn punctuation_only_post() {
        assert!(tokenize_post("!!!").is_err());
    }
}
