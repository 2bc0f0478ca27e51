//! Lexical classes with feature bundles.
//!
//! A class either lists entries (strings inherit the class feature bundle;
//! objects may override it) or aliases another class. Distinct slots that
//! resolve to the same base class draw distinct entries within a sentence,
//! which is what makes `{noun1} ... {noun2}` come out as two different nouns.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("unknown lexical class {0:?}")]
    UnknownClass(String),
    #[error("alias cycle involving class {0:?}")]
    AliasCycle(String),
    #[error("class {0:?} has no entries")]
    EmptyClass(String),
    #[error("class {class:?} declares both an alias and entries")]
    AliasWithEntries { class: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One surface form with its resolved features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexEntry {
    pub form: String,
    #[serde(default)]
    pub features: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum RawEntry {
    Form(String),
    Full(LexEntry),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct RawClass {
    #[serde(default)]
    alias: Option<String>,
    #[serde(default)]
    features: BTreeMap<String, String>,
    #[serde(default)]
    entries: Vec<RawEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawLexicon {
    #[serde(default)]
    description: String,
    classes: BTreeMap<String, RawClass>,
}

/// A loaded, alias-resolved lexicon.
#[derive(Debug, Clone)]
pub struct Lexicon {
    /// class name -> (base class name, entries)
    resolved: BTreeMap<String, (String, Vec<LexEntry>)>,
}

impl Lexicon {
    pub fn from_json(json: &str) -> Result<Lexicon, LexiconError> {
        let raw: RawLexicon = serde_json::from_str(json)?;
        let mut resolved = BTreeMap::new();
        for name in raw.classes.keys() {
            let base = resolve_alias(&raw, name)?;
            let class = &raw.classes[&base];
            let entries: Vec<LexEntry> = class
                .entries
                .iter()
                .map(|e| match e {
                    RawEntry::Form(form) => LexEntry {
                        form: form.clone(),
                        features: class.features.clone(),
                    },
                    RawEntry::Full(entry) => {
                        let mut features = class.features.clone();
                        features.extend(entry.features.clone());
                        LexEntry {
                            form: entry.form.clone(),
                            features,
                        }
                    }
                })
                .collect();
            if entries.is_empty() {
                return Err(LexiconError::EmptyClass(base));
            }
            resolved.insert(name.clone(), (base, entries));
        }
        Ok(Lexicon { resolved })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Lexicon, LexiconError> {
        Lexicon::from_json(&std::fs::read_to_string(path)?)
    }

    /// Base class name a slot class resolves to (identity for non-aliases).
    pub fn base_of(&self, class: &str) -> Result<&str, LexiconError> {
        self.resolved
            .get(class)
            .map(|(base, _)| base.as_str())
            .ok_or_else(|| LexiconError::UnknownClass(class.to_string()))
    }

    pub fn entries(&self, class: &str) -> Result<&[LexEntry], LexiconError> {
        self.resolved
            .get(class)
            .map(|(_, e)| e.as_slice())
            .ok_or_else(|| LexiconError::UnknownClass(class.to_string()))
    }

    /// Entry for a surface form within a class, if present.
    pub fn entry_for_form(&self, class: &str, form: &str) -> Option<&LexEntry> {
        self.resolved
            .get(class)
            .and_then(|(_, entries)| entries.iter().find(|e| e.form == form))
    }

    /// Every surface form in the lexicon (for vocabulary closure).
    pub fn all_forms(&self) -> impl Iterator<Item = &str> {
        self.resolved
            .values()
            .flat_map(|(_, entries)| entries.iter().map(|e| e.form.as_str()))
    }

    /// The value of `feature` on `form`, when every class that lists the form
    /// agrees on it. Disagreement or absence yields None.
    pub fn feature_of_form(&self, form: &str, feature: &str) -> Option<&str> {
        let mut found: Option<&str> = None;
        for (name, (base, entries)) in &self.resolved {
            // Aliases share the base entry list; only scan each base once.
            if name != base {
                continue;
            }
            for entry in entries {
                if entry.form != form {
                    continue;
                }
                match (found, entry.features.get(feature)) {
                    (_, None) => return None,
                    (None, Some(v)) => found = Some(v),
                    (Some(prev), Some(v)) if prev != v => return None,
                    _ => {}
                }
            }
        }
        found
    }
}

fn resolve_alias(raw: &RawLexicon, name: &str) -> Result<String, LexiconError> {
    let mut seen = vec![name.to_string()];
    let mut current = name.to_string();
    loop {
        let class = raw
            .classes
            .get(&current)
            .ok_or_else(|| LexiconError::UnknownClass(current.clone()))?;
        match &class.alias {
            None => return Ok(current),
            Some(target) => {
                if !class.entries.is_empty() {
                    return Err(LexiconError::AliasWithEntries { class: current });
                }
                if seen.contains(target) {
                    return Err(LexiconError::AliasCycle(target.clone()));
                }
                seen.push(target.clone());
                current = target.clone();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "description": "test lexicon",
        "classes": {
            "nn_m": {
                "features": {"gender": "m", "number": "sg"},
                "entries": ["boy", "man"]
            },
            "nn_m1": {"alias": "nn_m"},
            "name": {
                "features": {"number": "sg"},
                "entries": [
                    {"form": "John", "features": {"gender": "m"}},
                    {"form": "Mary", "features": {"gender": "f"}}
                ]
            }
        }
    }"#;

    #[test]
    fn aliases_resolve_and_share_entries() {
        let lex = Lexicon::from_json(SAMPLE).unwrap();
        assert_eq!(lex.base_of("nn_m1").unwrap(), "nn_m");
        assert_eq!(lex.base_of("nn_m").unwrap(), "nn_m");
        assert_eq!(lex.entries("nn_m1").unwrap(), lex.entries("nn_m").unwrap());
    }

    #[test]
    fn entry_features_merge_class_defaults() {
        let lex = Lexicon::from_json(SAMPLE).unwrap();
        let john = lex.entry_for_form("name", "John").unwrap();
        assert_eq!(john.features["gender"], "m");
        assert_eq!(john.features["number"], "sg");
        let boy = lex.entry_for_form("nn_m", "boy").unwrap();
        assert_eq!(boy.features["gender"], "m");
    }

    #[test]
    fn form_features_resolve_when_unambiguous() {
        let lex = Lexicon::from_json(SAMPLE).unwrap();
        assert_eq!(lex.feature_of_form("Mary", "gender"), Some("f"));
        assert_eq!(lex.feature_of_form("boy", "gender"), Some("m"));
        assert_eq!(lex.feature_of_form("boy", "case"), None);
        assert_eq!(lex.feature_of_form("unlisted", "gender"), None);
        let clash = r#"{"classes": {
            "a": {"entries": [{"form": "x", "features": {"gender": "m"}}]},
            "b": {"entries": [{"form": "x", "features": {"gender": "f"}}]}
        }}"#;
        let lex = Lexicon::from_json(clash).unwrap();
        assert_eq!(lex.feature_of_form("x", "gender"), None);
    }

    #[test]
    fn unknown_class_and_cycles_error() {
        let lex = Lexicon::from_json(SAMPLE).unwrap();
        assert!(matches!(lex.entries("nope"), Err(LexiconError::UnknownClass(_))));
        let cyclic = r#"{"classes": {"a": {"alias": "b"}, "b": {"alias": "a"}}}"#;
        assert!(matches!(
            Lexicon::from_json(cyclic),
            Err(LexiconError::AliasCycle(_))
        ));
        let empty = r#"{"classes": {"a": {"entries": []}}}"#;
        assert!(matches!(
            Lexicon::from_json(empty),
            Err(LexiconError::EmptyClass(_))
        ));
    }
}
