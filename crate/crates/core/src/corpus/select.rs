use alloc::vec::Vec;

use super::{Comment, Vocab, PAD, UNK};

/// Chooses the content words (nouns, verbs, adjectives, adverbs) of a
/// comment that act as attention targets.
pub trait ContentWordSelector: Send + Sync {
    fn is_content(&self, token: usize, vocab: &Vocab) -> bool;

    /// Content words of `tokens`, preserving order and multiplicity.
    fn select(&self, tokens: &[usize], vocab: &Vocab) -> Vec<usize> {
        tokens
            .iter()
            .copied()
            .filter(|&t| self.is_content(t, vocab))
            .collect()
    }
}

/// Keeps every token.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentitySelector;

impl ContentWordSelector for IdentitySelector {
    fn is_content(&self, _token: usize, _vocab: &Vocab) -> bool {
        true
    }
}

/// Function-word exclusion plus open-class suffix rules.
///
/// A token is a content word when it carries an open-class suffix
/// (`-ly`, `-ing`, `-ed`, `-tion`, ...) and is at least four characters
/// long; otherwise when it is not a stopword. Reserved slots and pure
/// numbers are never content words.
#[derive(Clone, Copy, Debug, Default)]
pub struct HeuristicSelector;

const CONTENT_SUFFIXES: &[&str] = &[
    "ly", "ing", "ed", "tion", "sion", "ment", "ness", "ity", "ous", "ful", "ive", "able", "ible", "ize", "ise",
    "est", "ism", "ist", "less",
];

/// Closed-class English words: determiners, pronouns, prepositions,
/// conjunctions, auxiliaries and particles.
pub const STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are", "as", "at", "be",
    "because", "been", "before", "being", "below", "between", "both", "but", "by", "can", "could", "did", "do",
    "does", "doing", "down", "during", "each", "either", "few", "for", "from", "further", "had", "has", "have",
    "having", "he", "her", "here", "hers", "herself", "him", "himself", "his", "how", "i", "if", "in", "into",
    "is", "it", "its", "itself", "just", "ll", "m", "may", "me", "might", "mine", "more", "most", "must", "my",
    "myself", "neither", "no", "nor", "not", "of", "off", "on", "once", "only", "or", "other", "our", "ours",
    "ourselves", "out", "over", "own", "re", "s", "same", "shall", "she", "should", "so", "some", "such", "t",
    "than", "that", "the", "their", "theirs", "them", "themselves", "then", "there", "these", "they", "this",
    "those", "through", "to", "too", "under", "until", "up", "us", "ve", "very", "was", "we", "were", "what",
    "when", "where", "which", "while", "who", "whom", "whose", "why", "will", "with", "would", "yet", "you",
    "your", "yours", "yourself", "yourselves", "d", "don", "doesn", "didn", "isn", "wasn", "aren", "weren",
    "won", "wouldn", "couldn", "shouldn", "hasn", "haven", "hadn", "also", "even", "ever", "every", "via",
];

impl ContentWordSelector for HeuristicSelector {
    fn is_content(&self, token: usize, vocab: &Vocab) -> bool {
        if token == PAD || token == UNK || token >= vocab.len() {
            return false;
        }
        let word = vocab.token(token);
        if word.chars().all(|c| c.is_numeric()) {
            return false;
        }
        let chars = word.chars().count();
        if chars >= 4 && CONTENT_SUFFIXES.iter().any(|s| word.ends_with(s)) {
            return true;
        }
        !STOPWORDS.contains(&word)
    }
}

/// Content words of an indexed comment under `selector`.
pub fn select_content_words(comment: &Comment, vocab: &Vocab, selector: &dyn ContentWordSelector) -> Vec<usize> {
    selector.select(&comment.tokens, vocab)
}
