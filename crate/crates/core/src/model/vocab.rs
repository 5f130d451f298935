use std::collections::HashMap;

use crate::error::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const EOS_ID: u32 = 2;

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const EOS: &str = "</s>";

/// Dense token ↔ id map. Ids 0, 1 and 2 are reserved for padding, unknown words and
/// end of sentence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 3 || tokens[0] != PAD || tokens[1] != UNK || tokens[2] != EOS {
            return Err(Error::Schema(format!(
                "vocabulary must start with {PAD}, {UNK}, {EOS}"
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Schema(format!("duplicate vocabulary entry {t:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    /// Reserved entries followed by `w0001`, `w0002`, ….
    pub fn synthetic(size: usize) -> Result<Self> {
        if size < 3 {
            return Err(Error::Parameter(format!("vocabulary size {size} leaves no room for reserved ids")));
        }
        let mut tokens = vec![PAD.to_string(), UNK.to_string(), EOS.to_string()];
        tokens.extend((1..=size - 3).map(|i| format!("w{i:04}")));
        Self::new(tokens)
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

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Whitespace-split ids; unknown words map to `UNK`.
    pub fn encode_line(&self, line: &str) -> Vec<u32> {
        line.split_whitespace().map(|w| self.id(w)).collect()
    }

    /// Token strings for `ids`, stopping at the first EOS.
    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        ids.iter()
            .take_while(|&&id| id != EOS_ID)
            .map(|&id| self.token(id).unwrap_or(UNK).to_string())
            .collect()
    }
}
