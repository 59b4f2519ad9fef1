use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// Abbreviations kept intact (trailing period attached) by normalization and
/// never treated as sentence ends by the splitter.
pub const DEFAULT_ABBREVIATIONS: &[&str] = &[
    "mr.", "mrs.", "ms.", "dr.", "st.", "jr.", "sr.", "prof.", "gen.", "col.", "capt.", "lt.",
    "sgt.", "rev.", "hon.", "gov.", "sen.", "rep.", "mt.", "ft.", "vs.", "co.", "inc.", "ltd.",
    "u.s.", "u.k.", "e.g.", "i.e.", "a.m.", "p.m.",
];

/// Clitic tokens that attach to the preceding token.
pub const CLITICS: &[&str] = &["n't", "'s", "'re", "'ve", "'ll", "'d", "'m"];

/// Lower-cases, strips accents and splits punctuation into standalone tokens.
///
/// Apostrophes followed by a letter or digit stay inside the word (`don't`,
/// `n't`, `'s`) so that clitics survive for [`rejoin_contractions`].
pub fn normalize_text(raw: &str) -> String {
    normalize_text_with(raw, DEFAULT_ABBREVIATIONS)
}

pub fn normalize_text_with<S: AsRef<str>>(raw: &str, abbreviations: &[S]) -> String {
    let mut abbrevs: Vec<Vec<char>> = abbreviations
        .iter()
        .map(|a| a.as_ref().chars().collect())
        .filter(|a: &Vec<char>| !a.is_empty())
        .collect();
    // longest match wins
    abbrevs.sort_by(|a, b| b.len().cmp(&a.len()));

    let folded: String = raw
        .to_lowercase()
        .nfd()
        .filter(|c| !is_combining_mark(*c))
        .map(|c| match c {
            '\u{2019}' => '\'',
            c if is_separator(c) => ' ',
            c => c,
        })
        .collect();

    let mut tokens: Vec<String> = Vec::new();
    for chunk in folded.split(' ').filter(|c| !c.is_empty()) {
        split_chunk(chunk, &abbrevs, &mut tokens);
    }
    tokens.join(" ")
}

fn is_separator(c: char) -> bool {
    c.is_whitespace()
        || c.is_control()
        || matches!(c, '\u{200B}'..='\u{200D}' | '\u{2060}' | '\u{FEFF}')
}

fn is_word_apostrophe(chars: &[char], i: usize) -> bool {
    chars[i] == '\'' && chars.get(i + 1).is_some_and(|c| c.is_alphanumeric())
}

fn split_chunk(chunk: &str, abbrevs: &[Vec<char>], out: &mut Vec<String>) {
    let chars: Vec<char> = chunk.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        if let Some(len) = match_abbreviation(&chars[i..], abbrevs) {
            out.push(chars[i..i + len].iter().collect());
            i += len;
            continue;
        }
        if chars[i].is_alphanumeric() || is_word_apostrophe(&chars, i) {
            let start = i;
            i += 1;
            while i < chars.len() && (chars[i].is_alphanumeric() || is_word_apostrophe(&chars, i)) {
                i += 1;
            }
            out.push(chars[start..i].iter().collect());
        } else {
            out.push(chars[i].to_string());
            i += 1;
        }
    }
}

fn match_abbreviation(rest: &[char], abbrevs: &[Vec<char>]) -> Option<usize> {
    abbrevs
        .iter()
        .find(|a| rest.starts_with(a) && rest.get(a.len()).is_none_or(|c| !c.is_alphanumeric()))
        .map(|a| a.len())
}

/// Re-attaches split clitics (`do n't` -> `don't`) to the preceding token.
///
/// A clitic only attaches when the preceding token ends in a letter or digit;
/// a clitic at the start of the text is left alone.
pub fn rejoin_contractions(text: &str) -> String {
    let mut out: Vec<String> = Vec::new();
    for token in text.split_whitespace() {
        let is_clitic = CLITICS.iter().any(|c| c.eq_ignore_ascii_case(token));
        match out.last_mut() {
            Some(prev) if is_clitic && prev.chars().last().is_some_and(char::is_alphanumeric) => {
                prev.push_str(token);
            }
            _ => out.push(token.to_string()),
        }
    }
    out.join(" ")
}

/// Full text pipeline applied to raw documents before splitting.
pub fn preprocess_text(raw: &str) -> String {
    rejoin_contractions(&normalize_text(raw))
}
