//! Template stanza parsing.
//!
//! A template is a stanza of `key: value` lines. `b:` and `g:` hold the
//! ungrammatical and grammatical patterns; both are whitespace-split into
//! words, and the two word lists must have equal length. Positions where the
//! word patterns differ are the contrast; everything else is shared filler.
//!
//! Inside a word, `{name}` is a slot drawing from the lexical class `name`,
//! `{a|b}` is an inline choice, and bare text is literal. Pieces concatenate
//! without spaces, so `{name_m2}'s` renders as one token.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use thiserror::Error;

use super::lexicon::{Lexicon, LexiconError};
use super::PairPhenomenon;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("template {id:?}: missing key {key:?}")]
    MissingKey { id: String, key: &'static str },
    #[error("template {id:?}: patterns have {bad} and {good} words; they must align")]
    LengthMismatch { id: String, bad: usize, good: usize },
    #[error("template {id:?}: the two patterns are identical")]
    NoContrast { id: String },
    #[error("duplicate template id {0:?}")]
    DuplicateId(String),
    #[error("template {id:?}: antecedent {slot:?} is not a slot of either pattern")]
    UnknownAntecedent { id: String, slot: String },
    #[error("template {id:?}: {source}")]
    Lexicon {
        id: String,
        #[source]
        source: LexiconError,
    },
    #[error("template {id:?}: class {class:?} has {have} entries but {need} distinct slots")]
    ClassTooSmall {
        id: String,
        class: String,
        have: usize,
        need: usize,
    },
    #[error("template {id:?}: capacity {capacity} is below the requested {requested} pairs")]
    CapacityTooSmall {
        id: String,
        capacity: u128,
        requested: usize,
    },
    #[error("template {id:?}: ran out of unique pairs at {produced} of {requested}")]
    Exhausted {
        id: String,
        produced: usize,
        requested: usize,
    },
    #[error("template {id:?} produced an unsound pair: {detail}")]
    Violation { id: String, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One fragment of a pattern word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Piece {
    Lit(String),
    Slot(String),
    Choice(Vec<String>),
}

/// A whitespace-delimited word: pieces joined without separators.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternWord {
    pub pieces: Vec<Piece>,
}

impl fmt::Display for PatternWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for piece in &self.pieces {
            match piece {
                Piece::Lit(s) => write!(f, "{s}")?,
                Piece::Slot(name) => write!(f, "{{{name}}}")?,
                Piece::Choice(opts) => write!(f, "{{{}}}", opts.join("|"))?,
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    pub words: Vec<PatternWord>,
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, word) in self.words.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{word}")?;
        }
        Ok(())
    }
}

impl Pattern {
    fn parse(text: &str, line: usize) -> Result<Pattern, TemplateError> {
        let words = text
            .split_whitespace()
            .map(|w| parse_word(w, line))
            .collect::<Result<Vec<_>, _>>()?;
        if words.is_empty() {
            return Err(TemplateError::Syntax {
                line,
                msg: "empty pattern".into(),
            });
        }
        Ok(Pattern { words })
    }

    /// Slot names in order of first occurrence.
    pub fn slot_names(&self) -> Vec<&str> {
        let mut out = Vec::new();
        for word in &self.words {
            for piece in &word.pieces {
                if let Piece::Slot(name) = piece {
                    if !out.contains(&name.as_str()) {
                        out.push(name.as_str());
                    }
                }
            }
        }
        out
    }
}

fn parse_word(word: &str, line: usize) -> Result<PatternWord, TemplateError> {
    let mut pieces = Vec::new();
    let mut lit = String::new();
    let mut chars = word.chars();
    let mut choices_seen = 0usize;
    while let Some(c) = chars.next() {
        match c {
            '{' => {
                if !lit.is_empty() {
                    pieces.push(Piece::Lit(std::mem::take(&mut lit)));
                }
                let mut inner = String::new();
                let mut closed = false;
                for c in chars.by_ref() {
                    match c {
                        '}' => {
                            closed = true;
                            break;
                        }
                        '{' => {
                            return Err(TemplateError::Syntax {
                                line,
                                msg: format!("nested brace in {word:?}"),
                            })
                        }
                        other => inner.push(other),
                    }
                }
                if !closed {
                    return Err(TemplateError::Syntax {
                        line,
                        msg: format!("unclosed brace in {word:?}"),
                    });
                }
                if inner.is_empty() {
                    return Err(TemplateError::Syntax {
                        line,
                        msg: format!("empty braces in {word:?}"),
                    });
                }
                if inner.contains('|') {
                    choices_seen += 1;
                    if choices_seen > 1 {
                        return Err(TemplateError::Syntax {
                            line,
                            msg: format!("more than one inline choice in {word:?}"),
                        });
                    }
                    let opts: Vec<String> = inner.split('|').map(str::to_string).collect();
                    if opts.iter().any(String::is_empty) {
                        return Err(TemplateError::Syntax {
                            line,
                            msg: format!("empty alternative in {word:?}"),
                        });
                    }
                    pieces.push(Piece::Choice(opts));
                } else {
                    pieces.push(Piece::Slot(inner));
                }
            }
            '}' => {
                return Err(TemplateError::Syntax {
                    line,
                    msg: format!("stray closing brace in {word:?}"),
                })
            }
            other => lit.push(other),
        }
    }
    if !lit.is_empty() {
        pieces.push(Piece::Lit(lit));
    }
    Ok(PatternWord { pieces })
}

/// A parsed minimal-pair template.
#[derive(Debug, Clone)]
pub struct TemplateSpec {
    pub phenomenon: PairPhenomenon,
    pub subcategory: String,
    pub id: String,
    /// Slot the contrasting reflexive or pronoun must agree with, if any.
    pub antecedent: Option<String>,
    pub bad: Pattern,
    pub good: Pattern,
}

impl TemplateSpec {
    /// Word positions where the two patterns differ.
    pub fn contrast_positions(&self) -> Vec<usize> {
        self.bad
            .words
            .iter()
            .zip(&self.good.words)
            .enumerate()
            .filter(|(_, (b, g))| b != g)
            .map(|(i, _)| i)
            .collect()
    }

    /// Slot names across both patterns, order of first occurrence, bad first.
    pub fn slot_names(&self) -> Vec<&str> {
        let mut out = self.bad.slot_names();
        for name in self.good.slot_names() {
            if !out.contains(&name) {
                out.push(name);
            }
        }
        out
    }

    fn validate(&self) -> Result<(), TemplateError> {
        if self.bad.words.len() != self.good.words.len() {
            return Err(TemplateError::LengthMismatch {
                id: self.id.clone(),
                bad: self.bad.words.len(),
                good: self.good.words.len(),
            });
        }
        let contrast = self.contrast_positions();
        if contrast.is_empty() {
            return Err(TemplateError::NoContrast {
                id: self.id.clone(),
            });
        }
        if let Some(slot) = &self.antecedent {
            if !self.slot_names().contains(&slot.as_str()) {
                return Err(TemplateError::UnknownAntecedent {
                    id: self.id.clone(),
                    slot: slot.clone(),
                });
            }
        }
        Ok(())
    }

    /// Distinctness groups: slots sharing an alias-resolved base class must
    /// receive pairwise distinct fills. Returns base class -> slot names.
    pub fn distinctness_groups(
        &self,
        lexicon: &Lexicon,
    ) -> Result<BTreeMap<String, Vec<String>>, TemplateError> {
        let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for slot in self.slot_names() {
            let base = lexicon.base_of(slot).map_err(|source| TemplateError::Lexicon {
                id: self.id.clone(),
                source,
            })?;
            groups
                .entry(base.to_string())
                .or_default()
                .push(slot.to_string());
        }
        Ok(groups)
    }
}

/// All templates from one file, ids unique.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    pub templates: Vec<TemplateSpec>,
}

impl TemplateSet {
    pub fn from_text(text: &str) -> Result<TemplateSet, TemplateError> {
        let mut templates = Vec::new();
        let mut stanza: Vec<(usize, &str)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                if !stanza.is_empty() {
                    templates.push(parse_stanza(&stanza)?);
                    stanza.clear();
                }
            } else {
                stanza.push((i + 1, line));
            }
        }
        if !stanza.is_empty() {
            templates.push(parse_stanza(&stanza)?);
        }
        let mut seen = Vec::new();
        for t in &templates {
            if seen.contains(&t.id.as_str()) {
                return Err(TemplateError::DuplicateId(t.id.clone()));
            }
            seen.push(t.id.as_str());
        }
        Ok(TemplateSet { templates })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TemplateSet, TemplateError> {
        TemplateSet::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, id: &str) -> Option<&TemplateSpec> {
        self.templates.iter().find(|t| t.id == id)
    }

    /// (phenomenon, subcategory) keys in file order, deduplicated.
    pub fn subcategories(&self) -> Vec<(PairPhenomenon, &str)> {
        let mut out: Vec<(PairPhenomenon, &str)> = Vec::new();
        for t in &self.templates {
            let key = (t.phenomenon, t.subcategory.as_str());
            if !out.contains(&key) {
                out.push(key);
            }
        }
        out
    }

    /// Check every slot resolves and every distinctness group fits its class.
    pub fn validate_against(&self, lexicon: &Lexicon) -> Result<(), TemplateError> {
        for t in &self.templates {
            for (base, slots) in t.distinctness_groups(lexicon)? {
                let have = lexicon
                    .entries(&base)
                    .map_err(|source| TemplateError::Lexicon {
                        id: t.id.clone(),
                        source,
                    })?
                    .len();
                if slots.len() > have {
                    return Err(TemplateError::ClassTooSmall {
                        id: t.id.clone(),
                        class: base,
                        have,
                        need: slots.len(),
                    });
                }
            }
        }
        Ok(())
    }
}

fn parse_stanza(lines: &[(usize, &str)]) -> Result<TemplateSpec, TemplateError> {
    let mut phenomenon = None;
    let mut subcategory = None;
    let mut id = None;
    let mut antecedent = None;
    let mut bad = None;
    let mut good = None;
    for &(line, text) in lines {
        let (key, value) = text.split_once(':').ok_or_else(|| TemplateError::Syntax {
            line,
            msg: format!("expected `key: value`, got {text:?}"),
        })?;
        let value = value.trim();
        let dup = |line, key: &str| TemplateError::Syntax {
            line,
            msg: format!("duplicate key {key:?}"),
        };
        match key.trim() {
            "phenomenon" => {
                if phenomenon.is_some() {
                    return Err(dup(line, "phenomenon"));
                }
                phenomenon = Some(value.parse::<PairPhenomenon>().map_err(|_| {
                    TemplateError::Syntax {
                        line,
                        msg: format!("unknown phenomenon {value:?}"),
                    }
                })?);
            }
            "subcategory" => {
                if subcategory.is_some() {
                    return Err(dup(line, "subcategory"));
                }
                subcategory = Some(value.to_string());
            }
            "id" => {
                if id.is_some() {
                    return Err(dup(line, "id"));
                }
                id = Some(value.to_string());
            }
            "antecedent" => {
                if antecedent.is_some() {
                    return Err(dup(line, "antecedent"));
                }
                antecedent = Some(value.to_string());
            }
            "b" => {
                if bad.is_some() {
                    return Err(dup(line, "b"));
                }
                bad = Some(Pattern::parse(value, line)?);
            }
            "g" => {
                if good.is_some() {
                    return Err(dup(line, "g"));
                }
                good = Some(Pattern::parse(value, line)?);
            }
            other => {
                return Err(TemplateError::Syntax {
                    line,
                    msg: format!("unknown key {other:?}"),
                })
            }
        }
    }
    let first = lines[0].0;
    let id = id.ok_or(TemplateError::MissingKey {
        id: format!("<stanza at line {first}>"),
        key: "id",
    })?;
    let missing = |key| TemplateError::MissingKey {
        id: id.clone(),
        key,
    };
    let spec = TemplateSpec {
        phenomenon: phenomenon.ok_or_else(|| missing("phenomenon"))?,
        subcategory: subcategory.ok_or_else(|| missing("subcategory"))?,
        antecedent,
        bad: bad.ok_or_else(|| missing("b"))?,
        good: good.ok_or_else(|| missing("g"))?,
        id,
    };
    spec.validate()?;
    Ok(spec)
}

impl std::str::FromStr for PairPhenomenon {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "question_formation" => Ok(PairPhenomenon::QuestionFormation),
            "island" => Ok(PairPhenomenon::Island),
            "binding" => Ok(PairPhenomenon::Binding),
            "wanna" => Ok(PairPhenomenon::Wanna),
            "other" => Ok(PairPhenomenon::Other),
            _ => Err(()),
        }
    }
}
