//! Post-generation invariant checks on minimal pairs.
//!
//! Generation is supposed to guarantee these by construction; the checks run
//! anyway so a bad template or lexicon edit fails loudly instead of shipping
//! a benchmark that quietly tests nothing.

use std::collections::BTreeSet;

use thiserror::Error;

use super::lexicon::Lexicon;
use super::pattern::TemplateSpec;
use super::MinimalPair;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PairViolation {
    #[error("sentences have {good} and {bad} tokens; pairs must align")]
    LengthMismatch { good: usize, bad: usize },
    #[error("good and bad sentences are identical")]
    Identical,
    #[error("sentences differ at position {position}, outside the template contrast")]
    DivergenceOutsideContrast { position: usize },
    #[error("no fill recorded for antecedent slot {slot:?}")]
    MissingAntecedentFill { slot: String },
    #[error("token {token:?} at position {position} disagrees with antecedent {antecedent:?}")]
    GenderMismatch {
        position: usize,
        antecedent: String,
        token: String,
    },
    #[error("bad-sentence token {token:?} at position {position} agrees with {antecedent:?}")]
    BadTokenAgrees {
        position: usize,
        antecedent: String,
        token: String,
    },
}

/// All invariant violations for one pair; empty means the pair is sound.
pub fn verify_pair(
    template: &TemplateSpec,
    pair: &MinimalPair,
    lexicon: &Lexicon,
) -> Vec<PairViolation> {
    let mut violations = Vec::new();
    let good: Vec<&str> = pair.sentence_good.split_whitespace().collect();
    let bad: Vec<&str> = pair.sentence_bad.split_whitespace().collect();
    if good.len() != bad.len() {
        violations.push(PairViolation::LengthMismatch {
            good: good.len(),
            bad: bad.len(),
        });
        return violations;
    }
    let contrast = template.contrast_positions();
    let mut any_diff = false;
    for (pos, (g, b)) in good.iter().zip(&bad).enumerate() {
        if g != b {
            any_diff = true;
            if !contrast.contains(&pos) {
                violations.push(PairViolation::DivergenceOutsideContrast { position: pos });
            }
        }
    }
    if !any_diff {
        violations.push(PairViolation::Identical);
    }
    if let Some(slot) = &template.antecedent {
        match pair.slot_fill.get(slot) {
            None => violations.push(PairViolation::MissingAntecedentFill { slot: slot.clone() }),
            Some(fill) => {
                let ant_gender = lexicon
                    .entry_for_form(slot, fill)
                    .and_then(|e| e.features.get("gender").cloned());
                if let Some(ant_gender) = ant_gender {
                    for &pos in &contrast {
                        if let Some(g) = lexicon.feature_of_form(good[pos], "gender") {
                            if g != ant_gender {
                                violations.push(PairViolation::GenderMismatch {
                                    position: pos,
                                    antecedent: fill.clone(),
                                    token: good[pos].to_string(),
                                });
                            }
                        }
                        if let Some(g) = lexicon.feature_of_form(bad[pos], "gender") {
                            if g == ant_gender {
                                violations.push(PairViolation::BadTokenAgrees {
                                    position: pos,
                                    antecedent: fill.clone(),
                                    token: bad[pos].to_string(),
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    violations
}

/// A token some sentence uses that the shared vocabulary is missing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClosureGap {
    pub pair_index: usize,
    pub token: String,
}

/// Every token of every sentence must be covered by `vocab`.
pub fn check_lexical_closure(pairs: &[MinimalPair], vocab: &BTreeSet<String>) -> Vec<ClosureGap> {
    let mut gaps = Vec::new();
    for (pair_index, pair) in pairs.iter().enumerate() {
        for sentence in [&pair.sentence_good, &pair.sentence_bad] {
            for token in sentence.split_whitespace() {
                if !vocab.contains(token) {
                    gaps.push(ClosureGap {
                        pair_index,
                        token: token.to_string(),
                    });
                }
            }
        }
    }
    gaps
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::super::pattern::TemplateSet;
    use super::super::PairPhenomenon;
    use super::*;

    fn lexicon() -> Lexicon {
        Lexicon::from_json(
            r#"{"classes": {
                "name_f1": {
                    "features": {"gender": "f"},
                    "entries": ["Mary", "Sue"]
                },
                "name_m1": {
                    "features": {"gender": "m"},
                    "entries": ["John", "Bill"]
                },
                "refl": {
                    "entries": [
                        {"form": "himself", "features": {"gender": "m"}},
                        {"form": "herself", "features": {"gender": "f"}}
                    ]
                }
            }}"#,
        )
        .unwrap()
    }

    fn template() -> TemplateSpec {
        TemplateSet::from_text(
            "\
phenomenon: binding
subcategory: refl_gender
id: b-1
antecedent: name_f1
b: {name_f1} saw himself .
g: {name_f1} saw herself .
",
        )
        .unwrap()
        .templates
        .remove(0)
    }

    fn pair(good: &str, bad: &str, fill: &[(&str, &str)]) -> MinimalPair {
        MinimalPair {
            sentence_good: good.to_string(),
            sentence_bad: bad.to_string(),
            phenomenon: PairPhenomenon::Binding,
            subcategory: "refl_gender".into(),
            template_id: "b-1".into(),
            slot_fill: fill
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect::<BTreeMap<_, _>>(),
        }
    }

    #[test]
    fn sound_pair_has_no_violations() {
        let p = pair("Mary saw herself .", "Mary saw himself .", &[("name_f1", "Mary")]);
        assert!(verify_pair(&template(), &p, &lexicon()).is_empty());
    }

    #[test]
    fn divergence_outside_contrast_is_flagged() {
        let p = pair("Sue saw herself .", "Mary saw himself .", &[("name_f1", "Sue")]);
        let violations = verify_pair(&template(), &p, &lexicon());
        assert!(violations.contains(&PairViolation::DivergenceOutsideContrast { position: 0 }));
    }

    #[test]
    fn gender_disagreement_is_flagged_both_ways() {
        // Good and bad swapped: the "good" reflexive now clashes with Mary
        // and the "bad" one agrees.
        let p = pair("Mary saw himself .", "Mary saw herself .", &[("name_f1", "Mary")]);
        let violations = verify_pair(&template(), &p, &lexicon());
        assert!(violations
            .iter()
            .any(|v| matches!(v, PairViolation::GenderMismatch { .. })));
        assert!(violations
            .iter()
            .any(|v| matches!(v, PairViolation::BadTokenAgrees { .. })));
    }

    #[test]
    fn identical_and_misaligned_pairs_are_flagged() {
        let p = pair("Mary saw herself .", "Mary saw herself .", &[("name_f1", "Mary")]);
        assert!(verify_pair(&template(), &p, &lexicon())
            .contains(&PairViolation::Identical));
        let p = pair("Mary saw herself .", "Mary saw himself", &[("name_f1", "Mary")]);
        assert_eq!(
            verify_pair(&template(), &p, &lexicon()),
            vec![PairViolation::LengthMismatch { good: 4, bad: 3 }]
        );
    }

    #[test]
    fn closure_gaps_name_the_missing_tokens() {
        let vocab: BTreeSet<String> = ["Mary", "saw", "herself", "."]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let p = pair("Mary saw herself .", "Mary saw himself .", &[("name_f1", "Mary")]);
        let gaps = check_lexical_closure(std::slice::from_ref(&p), &vocab);
        assert_eq!(gaps, vec![ClosureGap { pair_index: 0, token: "himself".into() }]);
    }
}
