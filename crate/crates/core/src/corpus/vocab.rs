use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Utterance;
use crate::{Error, Result};

pub const PAD_TOKEN: &str = "<pad>";
pub const SIL_TOKEN: &str = "<sil>";
pub const PAD_ID: u32 = 0;
pub const SIL_ID: u32 = 1;

/// Corpus spellings that all denote silence and share [`SIL_ID`].
const SILENCE_ALIASES: &[&str] = &["<sil>", "sil", "sp", "pau", "SP", "AP"];

/// Dense phoneme id space shared by the singing and speaking corpora.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhonemeVocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
}

impl PhonemeVocabulary {
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let set: BTreeSet<String> = tokens
            .into_iter()
            .map(|t| t.as_ref().to_string())
            .filter(|t| t != PAD_TOKEN && !SILENCE_ALIASES.contains(&t.as_str()))
            .collect();
        let tokens: Vec<String> = [PAD_TOKEN.to_string(), SIL_TOKEN.to_string()]
            .into_iter()
            .chain(set)
            .collect();
        let ids = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self { tokens, ids }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        if SILENCE_ALIASES.contains(&token) {
            return Some(SIL_ID);
        }
        self.ids.get(token).copied()
    }

    pub fn lookup(&self, token: &str) -> Result<u32> {
        self.id(token)
            .ok_or_else(|| Error::Validation(format!("phoneme {token:?} not in vocabulary")))
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Stable digest of the id assignment, embedded in checkpoints.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update([0u8]);
        }
        hex::encode(&h.finalize()[..8])
    }
}

impl Serialize for PhonemeVocabulary {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.tokens.serialize(s)
    }
}

impl<'de> Deserialize<'de> for PhonemeVocabulary {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let tokens = Vec::<String>::deserialize(d)?;
        if tokens.first().map(String::as_str) != Some(PAD_TOKEN)
            || tokens.get(1).map(String::as_str) != Some(SIL_TOKEN)
        {
            return Err(serde::de::Error::custom("vocabulary must start with <pad>, <sil>"));
        }
        let ids = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Ok(Self { tokens, ids })
    }
}

/// Covers every phoneme in both styles. Ids are assigned in sorted token
/// order after the reserved ids, so the result does not depend on corpus
/// order.
pub fn build_vocabulary(corpus: &[Utterance]) -> PhonemeVocabulary {
    PhonemeVocabulary::from_tokens(
        corpus
            .iter()
            .flat_map(|u| u.entries.iter().map(|e| e.phoneme.as_str())),
    )
}
