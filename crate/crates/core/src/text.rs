// SPDX-License-Identifier: MIT OR Apache-2.0

//! Rule-based text encoder: description text to target feature values.
//!
//! Text is lowercased and split on non-alphanumeric characters; clause
//! punctuation (`, ; . ! ? :`) additionally separates clauses, and no phrase
//! spans a clause break. At every position the longest lexicon, modifier or
//! negation phrase is taken. A lexicon match sets its feature to
//!
//! ```text
//! clamp(base_value * m_1 * ... * m_j * (-1 if negated))
//! ```
//!
//! where `m_1..m_j` are the modifiers directly preceding the phrase and a
//! negation token governs the next lexicon phrase only. The last mention of
//! a feature wins.
//!
//! The same lexicon drives [`Lexicon::generate_description`], which renders
//! a [`FeatureVector`] back into text that parses to exactly that vector.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::{FeatureRegistry, FeatureVector, ValueRange};

const DEFAULT_LEXICON_JSON: &str = include_str!("../data/default_lexicon.json");

/// Tolerance when matching a requested value to a phrase combination.
pub const REPRESENTABLE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Head noun of the description ("a man").
    Subject,
    /// Placed before the noun ("a young man").
    Adjective,
    /// Listed after the noun ("with long hair").
    #[default]
    Attribute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LexiconEntry {
    pub phrase: Vec<String>,
    pub feature_id: String,
    pub base_value: f64,
    pub polarity: Polarity,
    pub role: Role,
    #[serde(skip)]
    feature: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModifierRule {
    pub phrase: Vec<String>,
    pub multiplier: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryFile {
    phrase: String,
    feature: String,
    value: f64,
    #[serde(default)]
    role: Role,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModifierFile {
    phrase: String,
    multiplier: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LexiconFile {
    entries: Vec<EntryFile>,
    #[serde(default)]
    modifiers: Vec<ModifierFile>,
    #[serde(default)]
    negations: Vec<String>,
    /// Groups of features the corpus generator never mentions together.
    #[serde(default)]
    exclusive: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PhraseKind {
    Entry(usize),
    Modifier(usize),
    Negation,
}

#[derive(Debug, Clone, PartialEq)]
struct Token {
    text: String,
    clause: usize,
}

fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut clause = 0;
    let flush = |current: &mut String, tokens: &mut Vec<Token>, clause: usize| {
        if !current.is_empty() {
            tokens.push(Token {
                text: std::mem::take(current),
                clause,
            });
        }
    };
    for c in text.chars() {
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
        } else if c == '\'' || c == '\u{2019}' {
            // "man's" -> "mans"
        } else {
            flush(&mut current, &mut tokens, clause);
            if matches!(c, ',' | ';' | '.' | '!' | '?' | ':') {
                clause += 1;
            }
        }
    }
    flush(&mut current, &mut tokens, clause);
    tokens
}

fn phrase_tokens(s: &str) -> Vec<String> {
    tokenize(s).into_iter().map(|t| t.text).collect()
}

/// Feature value for a phrase with the given modifiers and negation.
fn compose(base: f64, multipliers: &[f64], negated: bool, range: ValueRange) -> f64 {
    range.clamp(raw_value(base, multipliers, negated))
}

fn raw_value(base: f64, multipliers: &[f64], negated: bool) -> f64 {
    let v = multipliers.iter().fold(base, |acc, m| acc * m);
    if negated {
        -v
    } else {
        v
    }
}

/// One resolved lexicon match.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchedSpan {
    /// Token range of the lexicon phrase.
    pub start: usize,
    pub end: usize,
    pub feature_id: String,
    pub value: f64,
    pub multiplier: f64,
    pub negated: bool,
}

/// How a text was resolved.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParseTrace {
    pub tokens: Vec<String>,
    pub spans: Vec<MatchedSpan>,
    /// Indices of tokens that matched no phrase.
    pub unmatched: Vec<usize>,
}

impl ParseTrace {
    pub fn unmatched_tokens(&self) -> impl Iterator<Item = &str> {
        self.unmatched.iter().map(|&i| self.tokens[i].as_str())
    }
}

/// Sentence frame used by [`Lexicon::generate_description`].
#[derive(Debug, Clone, PartialEq)]
pub struct Templates {
    /// Noun used when no subject-role feature is mentioned.
    pub default_subject: String,
    /// Words introducing the attribute list; one is picked per description.
    pub intros: Vec<String>,
    /// Negation word for attributes ("no beard").
    pub attribute_negation: String,
    /// Negation word for adjectives and subjects ("not young").
    pub adjective_negation: String,
}

impl Default for Templates {
    fn default() -> Self {
        Templates {
            default_subject: "person".into(),
            intros: vec!["with".into()],
            attribute_negation: "no".into(),
            adjective_negation: "not".into(),
        }
    }
}

/// A (description, target) pair from [`Lexicon::build_corpus`].
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub text: String,
    pub vector: FeatureVector,
}

#[derive(Serialize, Deserialize)]
struct CorpusLine {
    text: String,
    values: std::collections::BTreeMap<String, f64>,
    mask: Vec<String>,
}

/// Phrase tables bound to one registry.
#[derive(Debug, Clone)]
pub struct Lexicon {
    entries: Vec<LexiconEntry>,
    modifiers: Vec<ModifierRule>,
    negations: Vec<Vec<String>>,
    exclusive: Vec<Vec<usize>>,
    feature_ids: Vec<String>,
    ranges: Vec<ValueRange>,
    phrases: HashMap<String, PhraseKind>,
    max_phrase_len: usize,
}

impl Lexicon {
    /// The embedded default lexicon, which targets the default registry ids.
    pub fn default_for(reg: &FeatureRegistry) -> Result<Self> {
        Lexicon::from_json_str(DEFAULT_LEXICON_JSON, reg)
    }

    pub fn load(path: Option<&Path>, reg: &FeatureRegistry) -> Result<Self> {
        match path {
            None => Lexicon::default_for(reg),
            Some(p) => {
                let s = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Lexicon::from_json_str(&s, reg)
            }
        }
    }

    pub fn from_json_str(s: &str, reg: &FeatureRegistry) -> Result<Self> {
        let file: LexiconFile = serde_json::from_str(s).map_err(|e| Error::json("lexicon", &e))?;
        let mut phrases = HashMap::new();
        let mut max_phrase_len = 0;
        let mut register = |tokens: &[String], kind: PhraseKind, raw: &str| -> Result<()> {
            if tokens.is_empty() {
                return Err(Error::Validation(format!(
                    "lexicon phrase `{raw}` has no words"
                )));
            }
            if phrases.insert(tokens.join(" "), kind).is_some() {
                return Err(Error::Validation(format!(
                    "lexicon phrase `{raw}` is defined twice"
                )));
            }
            max_phrase_len = max_phrase_len.max(tokens.len());
            Ok(())
        };

        let mut entries = Vec::with_capacity(file.entries.len());
        for e in file.entries {
            let feature = reg
                .index_of(&e.feature)
                .ok_or_else(|| Error::UnknownFeature(e.feature.clone()))?;
            let range = reg.features()[feature].value_range;
            if !(e.value != 0.0 && range.contains(e.value)) {
                return Err(Error::Validation(format!(
                    "lexicon value {} for `{}` must be non-zero and within [{}, {}]",
                    e.value, e.phrase, range.lo, range.hi
                )));
            }
            let phrase = phrase_tokens(&e.phrase);
            register(&phrase, PhraseKind::Entry(entries.len()), &e.phrase)?;
            entries.push(LexiconEntry {
                phrase,
                feature_id: e.feature,
                base_value: e.value,
                polarity: if e.value > 0.0 {
                    Polarity::Positive
                } else {
                    Polarity::Negative
                },
                role: e.role,
                feature,
            });
        }
        let mut modifiers = Vec::with_capacity(file.modifiers.len());
        for m in file.modifiers {
            if !(m.multiplier > 0.0 && m.multiplier <= 3.0) {
                return Err(Error::Validation(format!(
                    "modifier `{}` multiplier {} must lie in (0, 3]",
                    m.phrase, m.multiplier
                )));
            }
            let phrase = phrase_tokens(&m.phrase);
            register(&phrase, PhraseKind::Modifier(modifiers.len()), &m.phrase)?;
            modifiers.push(ModifierRule {
                phrase,
                multiplier: m.multiplier,
            });
        }
        let mut negations = Vec::with_capacity(file.negations.len());
        for n in file.negations {
            let phrase = phrase_tokens(&n);
            register(&phrase, PhraseKind::Negation, &n)?;
            negations.push(phrase);
        }
        let exclusive = file
            .exclusive
            .iter()
            .map(|group| {
                group
                    .iter()
                    .map(|id| {
                        reg.index_of(id)
                            .ok_or_else(|| Error::UnknownFeature(id.clone()))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(Lexicon {
            entries,
            modifiers,
            negations,
            exclusive,
            feature_ids: reg.ids().map(String::from).collect(),
            ranges: reg.features().iter().map(|f| f.value_range).collect(),
            phrases,
            max_phrase_len,
        })
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn modifiers(&self) -> &[ModifierRule] {
        &self.modifiers
    }

    /// Number of registry features this lexicon targets.
    pub fn feature_count(&self) -> usize {
        self.feature_ids.len()
    }

    /// Longest phrase starting at token `i` that stays within its clause.
    fn longest_match(&self, tokens: &[Token], i: usize) -> Option<(usize, PhraseKind)> {
        let clause = tokens[i].clause;
        let max = self.max_phrase_len.min(tokens.len() - i);
        let mut key = String::new();
        let mut best = None;
        for len in 1..=max {
            let t = &tokens[i + len - 1];
            if t.clause != clause {
                break;
            }
            if len > 1 {
                key.push(' ');
            }
            key.push_str(&t.text);
            if let Some(&kind) = self.phrases.get(&key) {
                best = Some((len, kind));
            }
        }
        best
    }

    /// Encodes `text` into target values plus a mentioned-mask. Total: any
    /// input yields a vector, possibly with an all-false mask.
    pub fn parse(&self, text: &str) -> (FeatureVector, ParseTrace) {
        let tokens = tokenize(text);
        let mut vector = FeatureVector::unmasked(self.feature_count());
        let mut spans = Vec::new();
        let mut unmatched = Vec::new();
        let mut multipliers: Vec<f64> = Vec::new();
        let mut negated = false;
        let mut i = 0;
        while i < tokens.len() {
            if i > 0 && tokens[i].clause != tokens[i - 1].clause {
                multipliers.clear();
                negated = false;
            }
            match self.longest_match(&tokens, i) {
                Some((len, PhraseKind::Entry(e))) => {
                    let entry = &self.entries[e];
                    let value = compose(
                        entry.base_value,
                        &multipliers,
                        negated,
                        self.ranges[entry.feature],
                    );
                    vector.set(entry.feature, value);
                    spans.push(MatchedSpan {
                        start: i,
                        end: i + len,
                        feature_id: entry.feature_id.clone(),
                        value,
                        multiplier: multipliers.iter().product(),
                        negated,
                    });
                    multipliers.clear();
                    negated = false;
                    i += len;
                }
                Some((len, PhraseKind::Modifier(m))) => {
                    multipliers.push(self.modifiers[m].multiplier);
                    i += len;
                }
                Some((len, PhraseKind::Negation)) => {
                    negated = true;
                    i += len;
                }
                None => {
                    unmatched.push(i);
                    multipliers.clear();
                    i += 1;
                }
            }
        }
        let trace = ParseTrace {
            tokens: tokens.into_iter().map(|t| t.text).collect(),
            spans,
            unmatched,
        };
        (vector, trace)
    }

    /// Pre-clamp value of an entry under the given modifiers.
    pub fn raw_value(
        &self,
        entry: &LexiconEntry,
        modifiers: &[&ModifierRule],
        negated: bool,
    ) -> f64 {
        let mults: Vec<f64> = modifiers.iter().map(|m| m.multiplier).collect();
        raw_value(entry.base_value, &mults, negated)
    }

    /// Cheapest phrase combination producing `target` for feature `f`:
    /// fewest modifiers first, then no negation, then lexicon order.
    fn find_combo(&self, f: usize, target: f64) -> Option<Combo> {
        let range = self.ranges[f];
        let candidates: Vec<usize> = (0..self.entries.len())
            .filter(|&e| self.entries[e].feature == f)
            .collect();
        let nm = self.modifiers.len();
        for n_mods in 0..=2usize {
            let sequences = nm.pow(n_mods as u32);
            for negated in [false, true] {
                for &e in &candidates {
                    for seq in 0..sequences {
                        let mods: Vec<usize> = (0..n_mods)
                            .map(|p| seq / nm.pow((n_mods - 1 - p) as u32) % nm)
                            .collect();
                        let mults: Vec<f64> =
                            mods.iter().map(|&m| self.modifiers[m].multiplier).collect();
                        let v = compose(self.entries[e].base_value, &mults, negated, range);
                        if (v - target).abs() <= REPRESENTABLE_TOL {
                            return Some(Combo {
                                entry: e,
                                modifiers: mods,
                                negated,
                            });
                        }
                    }
                }
            }
        }
        None
    }

    fn render(&self, combo: &Combo, negation: &str) -> String {
        let mut words: Vec<&str> = Vec::new();
        if combo.negated {
            words.push(negation);
        }
        for &m in &combo.modifiers {
            words.extend(self.modifiers[m].phrase.iter().map(String::as_str));
        }
        words.extend(self.entries[combo.entry].phrase.iter().map(String::as_str));
        words.join(" ")
    }

    fn check_negation(&self, word: &str) -> Result<()> {
        if self.negations.iter().any(|n| n.join(" ") == word) {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "template negation `{word}` is not a lexicon negation"
            )))
        }
    }

    /// Renders `v` as a description mentioning exactly its masked features.
    pub fn generate_description(
        &self,
        v: &FeatureVector,
        templates: &Templates,
        rng_seed: u64,
    ) -> Result<String> {
        v.check_len(self.feature_count())?;
        self.check_negation(&templates.attribute_negation)?;
        self.check_negation(&templates.adjective_negation)?;
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);

        let mut subject: Option<String> = None;
        let mut adjectives = Vec::new();
        let mut attributes = Vec::new();
        for f in v.masked_indices() {
            let combo = self
                .find_combo(f, v.values[f])
                .ok_or_else(|| Error::Unrepresentable {
                    feature: self.feature_ids[f].clone(),
                    value: v.values[f],
                })?;
            match self.entries[combo.entry].role {
                Role::Subject if subject.is_none() => {
                    subject = Some(self.render(&combo, &templates.adjective_negation));
                }
                Role::Adjective => {
                    adjectives.push(self.render(&combo, &templates.adjective_negation))
                }
                _ => attributes.push(self.render(&combo, &templates.attribute_negation)),
            }
        }
        adjectives.shuffle(&mut rng);
        attributes.shuffle(&mut rng);

        let mut noun_phrase = adjectives;
        noun_phrase.push(subject.unwrap_or_else(|| templates.default_subject.clone()));
        let noun_phrase = noun_phrase.join(" ");
        let article = match noun_phrase.chars().next() {
            Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
            _ => "a",
        };
        let mut text = format!("{article} {noun_phrase}");
        if let Some((last, rest)) = attributes.split_last() {
            let intro = templates
                .intros
                .choose(&mut rng)
                .map(String::as_str)
                .unwrap_or("with");
            write!(text, " {intro} ").expect("string write");
            if !rest.is_empty() {
                text.push_str(&rest.join(", "));
                text.push_str(" and ");
            }
            text.push_str(last);
        }
        Ok(text)
    }

    /// Samples `n` random representable targets and their descriptions.
    pub fn build_corpus(
        &self,
        n: usize,
        templates: &Templates,
        rng_seed: u64,
    ) -> Result<Vec<CorpusEntry>> {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let k = self.feature_count();
        let fitted: Vec<usize> = (0..k)
            .filter(|&f| self.entries.iter().any(|e| e.feature == f))
            .collect();
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let count = rng.random_range(0..=5.min(fitted.len()));
            let mut order = fitted.clone();
            order.shuffle(&mut rng);
            let mut chosen: Vec<usize> = Vec::with_capacity(count);
            for f in order {
                if chosen.len() == count {
                    break;
                }
                let clashes = self
                    .exclusive
                    .iter()
                    .any(|g| g.contains(&f) && chosen.iter().any(|c| g.contains(c)));
                if !clashes {
                    chosen.push(f);
                }
            }
            chosen.sort_unstable();

            let mut vector = FeatureVector::unmasked(k);
            for f in chosen {
                let options: Vec<&LexiconEntry> =
                    self.entries.iter().filter(|e| e.feature == f).collect();
                let entry = *options.choose(&mut rng).expect("feature has entries");
                let mut mults = Vec::new();
                let mut negated = false;
                if entry.role != Role::Subject {
                    if rng.random_bool(0.35) {
                        if let Some(m) = self.modifiers.choose(&mut rng) {
                            mults.push(m.multiplier);
                        }
                    } else if rng.random_bool(0.15) {
                        negated = true;
                    }
                }
                vector.set(
                    f,
                    compose(entry.base_value, &mults, negated, self.ranges[f]),
                );
            }
            let text = self.generate_description(&vector, templates, rng.random())?;
            out.push(CorpusEntry { text, vector });
        }
        Ok(out)
    }

    pub fn corpus_line(&self, entry: &CorpusEntry) -> String {
        let line = CorpusLine {
            text: entry.text.clone(),
            values: entry
                .vector
                .masked_indices()
                .map(|i| (self.feature_ids[i].clone(), entry.vector.values[i]))
                .collect(),
            mask: entry
                .vector
                .masked_indices()
                .map(|i| self.feature_ids[i].clone())
                .collect(),
        };
        serde_json::to_string(&line).expect("corpus line serializes")
    }

    pub fn parse_corpus_line(&self, line: &str) -> Result<CorpusEntry> {
        let parsed: CorpusLine =
            serde_json::from_str(line).map_err(|e| Error::json("corpus line", &e))?;
        let mut vector = FeatureVector::unmasked(self.feature_count());
        for id in &parsed.mask {
            let i = self
                .feature_ids
                .iter()
                .position(|f| f == id)
                .ok_or_else(|| Error::UnknownFeature(id.clone()))?;
            let v = *parsed.values.get(id).ok_or_else(|| Error::Format {
                what: "corpus line".into(),
                location: format!("values.{id}"),
                message: "masked feature has no value".into(),
            })?;
            vector.set(i, v);
        }
        Ok(CorpusEntry {
            text: parsed.text,
            vector,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Combo {
    entry: usize,
    modifiers: Vec<usize>,
    negated: bool,
}
