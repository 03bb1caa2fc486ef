//! Review text to bag-of-words features.
//!
//! Processing order per review: tokenize (punctuation becomes a scope
//! boundary, apostrophes vanish inside words), drop stopwords, consume
//! negation triggers and mark the words they scope over, stem, then
//! prefix marked words with `not_`. Features are binary presence vectors
//! over a shared vocabulary, averaged across an entity's reviews.
//!
//! The vocabulary intersects the most common stems of each domain so
//! that every feature is populated on both sides of the shift.

use std::collections::{HashMap, HashSet};

use ndarray::Array2;

use crate::data::io::RawCorpus;
use crate::data::stem::stem;
use crate::error::{Error, Result};

/// Common English words dropped before stemming. Negation carriers are
/// deliberately absent; they are consumed by negation marking instead.
pub const DEFAULT_STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and",
    "any", "are", "as", "at", "be", "because", "been", "before", "being", "below",
    "between", "both", "but", "by", "could", "did", "do", "does", "doing", "down",
    "during", "each", "few", "for", "from", "further", "had", "has", "have",
    "having", "he", "her", "here", "hers", "herself", "him", "himself", "his",
    "how", "i", "if", "im", "in", "into", "is", "it", "its", "itself", "ive",
    "just", "me", "more", "most", "my", "myself", "of", "off", "on", "once",
    "only", "or", "other", "our", "ours", "ourselves", "out", "over", "own",
    "same", "she", "should", "so", "some", "such", "than", "that", "thats",
    "the", "their", "theirs", "them", "themselves", "then", "there", "these",
    "they", "theyre", "this", "those", "through", "to", "too", "under", "until",
    "up", "very", "was", "we", "were", "weve", "what", "when", "where", "which",
    "while", "who", "whom", "why", "will", "with", "would", "you", "your",
    "youre", "yours", "yourself", "yourselves", "youve",
];

/// Words that flip the polarity of everything up to the next punctuation
/// boundary. Contractions appear with their apostrophes stripped, which
/// is how the tokenizer emits them.
pub const NEGATION_WORDS: &[&str] = &[
    "not", "no", "never", "cannot", "nothing", "neither", "nor", "nobody",
    "dont", "cant", "wont", "isnt", "wasnt", "arent", "werent", "doesnt",
    "didnt", "couldnt", "shouldnt", "wouldnt", "havent", "hasnt", "hadnt",
];

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Word(String),
    Boundary,
}

/// Splits lowercased text into words and scope boundaries. Alphanumerics
/// and apostrophes extend a word (apostrophes are dropped from it),
/// whitespace separates words, and any other character closes the
/// current negation scope. Consecutive boundaries collapse.
fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    let flush = |word: &mut String, tokens: &mut Vec<Token>| {
        if !word.is_empty() {
            tokens.push(Token::Word(std::mem::take(word)));
        }
    };
    for ch in text.chars().flat_map(|c| c.to_lowercase()) {
        if ch.is_alphanumeric() {
            word.push(ch);
        } else if ch == '\'' {
            // swallowed: "don't" tokenizes as "dont"
        } else {
            flush(&mut word, &mut tokens);
            if !ch.is_whitespace() && tokens.last() != Some(&Token::Boundary) {
                tokens.push(Token::Boundary);
            }
        }
    }
    flush(&mut word, &mut tokens);
    tokens
}

/// Full preprocessing for one review: the stem stream with negation
/// prefixes applied and boundaries removed.
fn process_review(text: &str, stopwords: &HashSet<&str>) -> Vec<String> {
    let mut out = Vec::new();
    let mut negating = false;
    for token in tokenize(text) {
        match token {
            Token::Boundary => negating = false,
            Token::Word(w) => {
                if stopwords.contains(w.as_str()) {
                    continue;
                }
                if !negating && NEGATION_WORDS.contains(&w.as_str()) {
                    // The trigger itself is consumed; a second negation
                    // word inside an open scope is treated as an
                    // ordinary (marked) word rather than restarting it.
                    negating = true;
                    continue;
                }
                let stemmed = stem(&w);
                if negating {
                    out.push(format!("not_{stemmed}"));
                } else {
                    out.push(stemmed);
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct BowOptions {
    /// Final vocabulary size after intersecting the two domains.
    pub vocab_size: usize,
    /// How many of each domain's most frequent stems are candidates for
    /// the intersection.
    pub per_domain_common: usize,
    /// Replacement stopword list; `None` uses [`DEFAULT_STOPWORDS`].
    pub stopwords: Option<Vec<String>>,
}

impl Default for BowOptions {
    fn default() -> Self {
        BowOptions { vocab_size: 500, per_domain_common: 837, stopwords: None }
    }
}

/// A fixed token order plus the preprocessing state needed to featurize
/// new text the same way the vocabulary was built.
#[derive(Debug, Clone)]
pub struct BowVocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    stopwords: Vec<String>,
}

impl BowVocabulary {
    fn new(tokens: Vec<String>, stopwords: Vec<String>) -> Self {
        let index =
            tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        BowVocabulary { tokens, index, stopwords }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Binary presence per review, averaged over the reviews. An entity
    /// with no reviews gets a zero row.
    pub fn featurize_reviews(&self, reviews: &[String]) -> Vec<f64> {
        let stopwords: HashSet<&str> =
            self.stopwords.iter().map(String::as_str).collect();
        let mut row = vec![0.0; self.tokens.len()];
        for review in reviews {
            let mut seen = vec![false; self.tokens.len()];
            for stem in process_review(review, &stopwords) {
                if let Some(i) = self.index_of(&stem) {
                    seen[i] = true;
                }
            }
            for (acc, hit) in row.iter_mut().zip(&seen) {
                *acc += f64::from(*hit as u8);
            }
        }
        if !reviews.is_empty() {
            let n = reviews.len() as f64;
            for v in &mut row {
                *v /= n;
            }
        }
        row
    }
}

#[derive(Debug, Clone)]
pub struct BowOutput {
    pub vocabulary: BowVocabulary,
    /// One row per source entity, in corpus order.
    pub source: Array2<f64>,
    /// One row per target entity, in corpus order.
    pub target: Array2<f64>,
}

fn count_stems(corpus: &RawCorpus, stopwords: &HashSet<&str>) -> HashMap<String, u64> {
    let mut counts: HashMap<String, u64> = HashMap::new();
    for entity in &corpus.entities {
        for review in &entity.reviews {
            for stem in process_review(review, stopwords) {
                *counts.entry(stem).or_insert(0) += 1;
            }
        }
    }
    counts
}

/// Most frequent stems, ties broken alphabetically so the result does
/// not depend on hash iteration order.
fn top_stems(counts: &HashMap<String, u64>, k: usize) -> Vec<&str> {
    let mut ranked: Vec<(&str, u64)> =
        counts.iter().map(|(t, &c)| (t.as_str(), c)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(k);
    ranked.into_iter().map(|(t, _)| t).collect()
}

/// Builds the shared vocabulary from both domains and featurizes every
/// entity of each corpus.
pub fn bow_pipeline(
    source: &RawCorpus,
    target: &RawCorpus,
    options: &BowOptions,
) -> Result<BowOutput> {
    if options.vocab_size == 0 {
        return Err(Error::InvalidConfig("vocab_size must be positive".into()));
    }
    if options.per_domain_common == 0 {
        return Err(Error::InvalidConfig("per_domain_common must be positive".into()));
    }
    if source.entities.is_empty() || target.entities.is_empty() {
        return Err(Error::EmptySampleSet);
    }

    let stopword_store: Vec<String> = match &options.stopwords {
        Some(list) => list.clone(),
        None => DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect(),
    };
    let stopwords: HashSet<&str> =
        stopword_store.iter().map(String::as_str).collect();

    let source_counts = count_stems(source, &stopwords);
    let target_counts = count_stems(target, &stopwords);
    let source_top: HashSet<&str> =
        top_stems(&source_counts, options.per_domain_common).into_iter().collect();
    let target_top: HashSet<&str> =
        top_stems(&target_counts, options.per_domain_common).into_iter().collect();

    let mut shared: Vec<(&str, u64)> = source_top
        .intersection(&target_top)
        .map(|&t| (t, source_counts[t] + target_counts[t]))
        .collect();
    if shared.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    shared.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    shared.truncate(options.vocab_size);
    let tokens: Vec<String> = shared.into_iter().map(|(t, _)| t.to_string()).collect();

    let vocabulary = BowVocabulary::new(tokens, stopword_store);
    let featurize = |corpus: &RawCorpus| -> Array2<f64> {
        let mut rows = Vec::with_capacity(corpus.entities.len() * vocabulary.len());
        for entity in &corpus.entities {
            rows.extend(vocabulary.featurize_reviews(&entity.reviews));
        }
        Array2::from_shape_vec((corpus.entities.len(), vocabulary.len()), rows)
            .expect("row width is the vocabulary size")
    };
    Ok(BowOutput {
        source: featurize(source),
        target: featurize(target),
        vocabulary,
    })
}

/// Maps an average star rating to a sentiment class: clearly low ratings
/// are class 1, clearly high ratings class 0, and the ambiguous band in
/// between (or an unparseable rating) yields no label.
pub fn label_by_rating(rating: f64) -> Option<usize> {
    if rating < 3.4 {
        Some(1)
    } else if rating > 3.6 {
        Some(0)
    } else {
        None
    }
}
