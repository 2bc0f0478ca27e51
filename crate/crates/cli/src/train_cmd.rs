//! The train command: config loading, corpus encoding, mode dispatch.
//!
//! Mode is picked from the config: `epochs` set trains on whole sentences
//! epoch by epoch; a bracket corpus argument runs the pre-pretraining phase
//! first; otherwise training samples windows from the token stream.

use std::collections::BTreeSet;
use std::path::Path;

use anyhow::{bail, Context, Result};
use posh_core::bpe::{BpeModel, BOS_ID, EOS_ID};
use posh_model::data::Sequence;
use posh_model::{tree_distances_from_parse, RunManifest, TrainConfig, Trainer};

use crate::ioutil::{read_parsed, read_text_lines};

/// Reads a TrainConfig from TOML (default) or JSON (by extension).
pub fn load_train_config(path: &Path) -> Result<TrainConfig> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("read {}", path.display()))?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let cfg: TrainConfig = if ext == "json" {
        serde_json::from_str(&text).with_context(|| format!("parse {}", path.display()))?
    } else {
        toml::from_str(&text).with_context(|| format!("parse {}", path.display()))?
    };
    Ok(cfg)
}

/// One flat id stream: every line framed as bos ids eos.
pub fn encode_stream(tok: &BpeModel, lines: &[String]) -> Vec<u32> {
    let mut out = Vec::new();
    for line in lines {
        out.push(BOS_ID);
        out.extend(tok.encode(line));
        out.push(EOS_ID);
    }
    out
}

/// One framed sequence per line, no parse alignment.
pub fn sequences_plain(tok: &BpeModel, lines: &[String]) -> Vec<Sequence> {
    lines
        .iter()
        .map(|line| {
            let mut ids = vec![BOS_ID];
            ids.extend(tok.encode(line));
            ids.push(EOS_ID);
            Sequence::plain(ids)
        })
        .collect()
}

/// Framed sequences with the subword-to-token alignment and tree distances
/// that tree-planted training needs. Words encode independently under the
/// whitespace-marker scheme, so per-token encoding concatenates to the
/// whole-line encoding.
pub fn sequences_with_trees(
    tok: &BpeModel,
    records: &[posh_core::conllu::SentenceRecord],
) -> Result<Vec<Sequence>> {
    let mut out = Vec::with_capacity(records.len());
    for rec in records {
        let tree = tree_distances_from_parse(rec)
            .with_context(|| format!("sentence {}", rec.id))?;
        let mut ids = vec![BOS_ID];
        let mut token_of = vec![None];
        for (ti, token) in rec.tokens.iter().enumerate() {
            for id in tok.encode(&token.form) {
                ids.push(id);
                token_of.push(Some(ti));
            }
        }
        ids.push(EOS_ID);
        token_of.push(None);
        out.push(Sequence {
            ids,
            token_of: Some(token_of),
            tree: Some(tree),
        });
    }
    Ok(out)
}

fn check_model_covers(cfg: &TrainConfig, tok: &BpeModel) -> Result<()> {
    if cfg.model.vocab_size < tok.vocab_len() {
        bail!(
            "model vocab_size {} is smaller than the tokenizer's {} entries",
            cfg.model.vocab_size,
            tok.vocab_len()
        );
    }
    if cfg.seq_len > cfg.model.context_len {
        bail!(
            "seq_len {} exceeds the model's context_len {}",
            cfg.seq_len,
            cfg.model.context_len
        );
    }
    Ok(())
}

fn check_brackets_in_vocab(tok: &BpeModel, dyck_lines: &[String]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for line in dyck_lines {
        for word in line.split_whitespace() {
            seen.insert(word.to_string());
        }
    }
    let missing: Vec<String> = seen
        .into_iter()
        .filter(|w| tok.id(w).is_none())
        .collect();
    if !missing.is_empty() {
        bail!(
            "bracket tokens absent from the tokenizer vocab: {} (train the tokenizer with reserved bracket rows)",
            missing.join(" ")
        );
    }
    Ok(())
}

/// `train`: run one training job and return its manifest.
pub fn run_train(
    cfg: &TrainConfig,
    corpus: &Path,
    tokenizer: &Path,
    dyck_corpus: Option<&Path>,
    out_dir: &Path,
) -> Result<RunManifest> {
    let tok = BpeModel::load(tokenizer).with_context(|| format!("{}", tokenizer.display()))?;
    check_model_covers(cfg, &tok)?;
    let trainer = Trainer::new(cfg.clone(), out_dir);
    let manifest = if let Some(dyck_path) = dyck_corpus {
        let dyck_lines = read_text_lines(dyck_path)?;
        check_brackets_in_vocab(&tok, &dyck_lines)?;
        let dyck_tokens = encode_stream(&tok, &dyck_lines);
        let lines = read_text_lines(corpus)?;
        let tokens = encode_stream(&tok, &lines);
        trainer.pre_pretrain_then_train(&dyck_tokens, &tokens)?
    } else if cfg.epochs.is_some() {
        let seqs = if cfg.bias.needs_tree() {
            let records = read_parsed(corpus)?;
            sequences_with_trees(&tok, &records)?
        } else {
            let lines = read_text_lines(corpus)?;
            sequences_plain(&tok, &lines)
        };
        trainer.train_epochwise(&seqs)?
    } else {
        let lines = read_text_lines(corpus)?;
        let tokens = encode_stream(&tok, &lines);
        trainer.train_stream(&tokens)?
    };
    Ok(manifest)
}
