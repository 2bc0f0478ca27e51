//! Template expansion with capacity accounting.
//!
//! The number of distinct assignments for a template is the product, over
//! distinctness groups, of the falling factorial n*(n-1)*...*(n-k+1), times
//! the option count of every inline choice. Small spaces are enumerated and
//! sampled without replacement; large ones fall back to rejection sampling
//! against a seen-set. Either way the output pairs are unique, and unique
//! against everything already drawn for the surrounding benchmark.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::stream;

use super::lexicon::{LexEntry, Lexicon};
use super::pattern::{Pattern, PatternWord, Piece, TemplateError, TemplateSpec, TemplateSet};
use super::verify::verify_pair;
use super::{MinimalPair, PairPhenomenon};

/// Expansion space of one template, precomputed against a lexicon.
struct Plan<'a> {
    /// (slot names in fill order, entries of their shared base class)
    groups: Vec<(Vec<String>, &'a [LexEntry])>,
    /// Inline-choice sites. A position where the patterns agree carries one
    /// shared site keyed `alt@{pos}`; a contrasting position carries a site
    /// per side, `alt@{pos}:b` and `alt@{pos}:g`, drawn independently.
    choices: Vec<ChoiceSite>,
}

struct ChoiceSite {
    key: String,
    opts: Vec<String>,
}

fn word_choice(word: &PatternWord) -> Option<&[String]> {
    word.pieces.iter().find_map(|p| match p {
        Piece::Choice(opts) => Some(opts.as_slice()),
        _ => None,
    })
}

impl<'a> Plan<'a> {
    fn build(t: &TemplateSpec, lexicon: &'a Lexicon) -> Result<Plan<'a>, TemplateError> {
        let wrap = |source| TemplateError::Lexicon {
            id: t.id.clone(),
            source,
        };
        let mut groups = Vec::new();
        for (base, slots) in t.distinctness_groups(lexicon)? {
            let entries = lexicon.entries(&base).map_err(wrap)?;
            if slots.len() > entries.len() {
                return Err(TemplateError::ClassTooSmall {
                    id: t.id.clone(),
                    class: base,
                    have: entries.len(),
                    need: slots.len(),
                });
            }
            groups.push((slots, entries));
        }
        let contrast: BTreeSet<usize> = t.contrast_positions().into_iter().collect();
        let mut choices = Vec::new();
        for pos in 0..t.bad.words.len() {
            if contrast.contains(&pos) {
                if let Some(opts) = word_choice(&t.bad.words[pos]) {
                    choices.push(ChoiceSite {
                        key: format!("alt@{pos}:b"),
                        opts: opts.to_vec(),
                    });
                }
                if let Some(opts) = word_choice(&t.good.words[pos]) {
                    choices.push(ChoiceSite {
                        key: format!("alt@{pos}:g"),
                        opts: opts.to_vec(),
                    });
                }
            } else if let Some(opts) = word_choice(&t.bad.words[pos]) {
                choices.push(ChoiceSite {
                    key: format!("alt@{pos}"),
                    opts: opts.to_vec(),
                });
            }
        }
        Ok(Plan { groups, choices })
    }

    fn capacity(&self) -> u128 {
        let mut cap: u128 = 1;
        for (slots, entries) in &self.groups {
            let n = entries.len() as u128;
            for i in 0..slots.len() as u128 {
                cap = cap.saturating_mul(n - i);
            }
        }
        for site in &self.choices {
            cap = cap.saturating_mul(site.opts.len() as u128);
        }
        cap
    }

    /// Mixed-radix decode of an assignment index, groups first then choices.
    fn decode(&self, mut idx: u128) -> Assignment {
        let mut fills = BTreeMap::new();
        for (slots, entries) in &self.groups {
            let n = entries.len() as u128;
            let mut radix: u128 = 1;
            for i in 0..slots.len() as u128 {
                radix *= n - i;
            }
            let mut local = idx % radix;
            idx /= radix;
            let mut remaining: Vec<&LexEntry> = entries.iter().collect();
            for slot in slots {
                let m = remaining.len() as u128;
                let digit = (local % m) as usize;
                local /= m;
                fills.insert(slot.clone(), remaining.remove(digit).form.clone());
            }
        }
        let mut choices = BTreeMap::new();
        for site in &self.choices {
            let m = site.opts.len() as u128;
            let digit = (idx % m) as usize;
            idx /= m;
            choices.insert(site.key.clone(), site.opts[digit].clone());
        }
        Assignment { fills, choices }
    }

    fn draw(&self, rng: &mut impl Rng) -> Assignment {
        let mut fills = BTreeMap::new();
        for (slots, entries) in &self.groups {
            let picks = rand::seq::index::sample(rng, entries.len(), slots.len());
            for (slot, pick) in slots.iter().zip(picks.iter()) {
                fills.insert(slot.clone(), entries[pick].form.clone());
            }
        }
        let mut choices = BTreeMap::new();
        for site in &self.choices {
            let opt = site.opts[rng.gen_range(0..site.opts.len())].clone();
            choices.insert(site.key.clone(), opt);
        }
        Assignment { fills, choices }
    }
}

struct Assignment {
    fills: BTreeMap<String, String>,
    /// Choice picks keyed by site, see `Plan::choices`.
    choices: BTreeMap<String, String>,
}

fn render(pattern: &Pattern, side: char, asg: &Assignment) -> String {
    let mut out = String::new();
    for (pos, word) in pattern.words.iter().enumerate() {
        if pos > 0 {
            out.push(' ');
        }
        for piece in &word.pieces {
            match piece {
                Piece::Lit(s) => out.push_str(s),
                Piece::Slot(name) => out.push_str(&asg.fills[name]),
                Piece::Choice(_) => {
                    let opt = asg
                        .choices
                        .get(&format!("alt@{pos}"))
                        .unwrap_or_else(|| &asg.choices[&format!("alt@{pos}:{side}")]);
                    out.push_str(opt);
                }
            }
        }
    }
    out
}

fn realize(t: &TemplateSpec, asg: &Assignment) -> MinimalPair {
    let mut slot_fill = asg.fills.clone();
    for (key, opt) in &asg.choices {
        slot_fill.insert(key.clone(), opt.clone());
    }
    MinimalPair {
        sentence_good: render(&t.good, 'g', asg),
        sentence_bad: render(&t.bad, 'b', asg),
        phenomenon: t.phenomenon,
        subcategory: t.subcategory.clone(),
        template_id: t.id.clone(),
        slot_fill,
    }
}

/// Distinct assignments the template admits under this lexicon.
pub fn template_capacity(t: &TemplateSpec, lexicon: &Lexicon) -> Result<u128, TemplateError> {
    Ok(Plan::build(t, lexicon)?.capacity())
}

/// Claims a pair against the benchmark-wide seen-set. Two keys guard two
/// duplications: an identical slot_fill within the subcategory, and an
/// identical rendered sentence pair anywhere (templates of the same shape
/// can collide through different slot names).
fn claim(taken: &mut HashSet<String>, pair: &MinimalPair) -> bool {
    let fill_key = format!("f\u{1}{}\u{1}{:?}", pair.subcategory, pair.slot_fill);
    let sent_key = format!(
        "s\u{1}{}\u{1}{}",
        pair.sentence_good, pair.sentence_bad
    );
    if taken.contains(&fill_key) || taken.contains(&sent_key) {
        return false;
    }
    taken.insert(fill_key);
    taken.insert(sent_key);
    true
}

fn expand_with(
    t: &TemplateSpec,
    plan: &Plan<'_>,
    quota: usize,
    rng: &mut impl Rng,
    taken: &mut HashSet<String>,
) -> Result<Vec<MinimalPair>, TemplateError> {
    let cap = plan.capacity();
    if cap < quota as u128 {
        return Err(TemplateError::CapacityTooSmall {
            id: t.id.clone(),
            capacity: cap,
            requested: quota,
        });
    }
    let exhausted = |produced| TemplateError::Exhausted {
        id: t.id.clone(),
        produced,
        requested: quota,
    };
    let mut out = Vec::with_capacity(quota);
    let threshold = (4 * quota as u128).max(20_000);
    if cap <= threshold {
        let mut order: Vec<usize> = (0..cap as usize).collect();
        order.shuffle(rng);
        for idx in order {
            if out.len() == quota {
                break;
            }
            let pair = realize(t, &plan.decode(idx as u128));
            if claim(taken, &pair) {
                out.push(pair);
            }
        }
        if out.len() < quota {
            return Err(exhausted(out.len()));
        }
    } else {
        let budget = 10_000 + 100 * quota;
        let mut attempts = 0;
        while out.len() < quota {
            attempts += 1;
            if attempts > budget {
                return Err(exhausted(out.len()));
            }
            let pair = realize(t, &plan.draw(rng));
            if claim(taken, &pair) {
                out.push(pair);
            }
        }
    }
    Ok(out)
}

/// Draw `quota` unique pairs from one template.
pub fn expand_template(
    t: &TemplateSpec,
    lexicon: &Lexicon,
    quota: usize,
    rng: &mut impl Rng,
) -> Result<Vec<MinimalPair>, TemplateError> {
    let plan = Plan::build(t, lexicon)?;
    expand_with(t, &plan, quota, rng, &mut HashSet::new())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemplateCount {
    pub id: String,
    pub pairs: usize,
    /// Assignment-space size, stringly typed to stay JSON-safe.
    pub capacity: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubcategorySummary {
    pub phenomenon: PairPhenomenon,
    pub subcategory: String,
    pub pairs: usize,
    pub templates: Vec<TemplateCount>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkManifest {
    pub seed: u64,
    pub pairs_per_subcategory: usize,
    pub total_pairs: usize,
    pub subcategories: Vec<SubcategorySummary>,
}

/// Generate the full benchmark: `pairs_per_subcategory` pairs for every
/// (phenomenon, subcategory), split as evenly as file order allows across
/// that subcategory's templates. Every pair is verified before it ships.
pub fn generate_benchmark(
    set: &TemplateSet,
    lexicon: &Lexicon,
    pairs_per_subcategory: usize,
    seed: u64,
) -> Result<(Vec<MinimalPair>, BenchmarkManifest), TemplateError> {
    set.validate_against(lexicon)?;
    let mut taken = HashSet::new();
    let mut pairs = Vec::new();
    let mut subcategories = Vec::new();
    for (phenomenon, subcategory) in set.subcategories() {
        let members: Vec<&TemplateSpec> = set
            .templates
            .iter()
            .filter(|t| t.phenomenon == phenomenon && t.subcategory == subcategory)
            .collect();
        let base = pairs_per_subcategory / members.len();
        let rem = pairs_per_subcategory % members.len();
        let mut counts = Vec::new();
        let mut sub_total = 0;
        for (i, t) in members.iter().enumerate() {
            let quota = base + usize::from(i < rem);
            let plan = Plan::build(t, lexicon)?;
            let capacity = plan.capacity();
            let mut rng = stream(seed, &format!("bench:{}", t.id));
            let got = expand_with(t, &plan, quota, &mut rng, &mut taken)?;
            for pair in &got {
                let violations = verify_pair(t, pair, lexicon);
                if !violations.is_empty() {
                    let detail = violations
                        .iter()
                        .map(|v| v.to_string())
                        .collect::<Vec<_>>()
                        .join("; ");
                    return Err(TemplateError::Violation {
                        id: t.id.clone(),
                        detail,
                    });
                }
            }
            sub_total += got.len();
            counts.push(TemplateCount {
                id: t.id.clone(),
                pairs: got.len(),
                capacity: capacity.to_string(),
            });
            pairs.extend(got);
        }
        subcategories.push(SubcategorySummary {
            phenomenon,
            subcategory: subcategory.to_string(),
            pairs: sub_total,
            templates: counts,
        });
    }
    let manifest = BenchmarkManifest {
        seed,
        pairs_per_subcategory,
        total_pairs: pairs.len(),
        subcategories,
    };
    Ok((pairs, manifest))
}
