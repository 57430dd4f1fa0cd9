//! Embedding tables for category labels and word-vector averaging.
//!
//! File format: `key,v_1,...,v_E`, one row per key. A first row whose key
//! field is literally `key` is treated as a header.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};

use crate::error::DataError;

/// Stop words used when no list is supplied.
pub const DEFAULT_STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "but", "by", "for", "from", "in", "into", "is",
    "it", "n.e.c", "nec", "no", "not", "of", "on", "or", "other", "such", "that", "the", "their",
    "then", "there", "these", "they", "this", "to", "was", "were", "which", "will", "with",
];

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    encoder_name: String,
    dimension: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(encoder_name: impl Into<String>, dimension: usize) -> Self {
        EmbeddingTable {
            encoder_name: encoder_name.into(),
            dimension,
            vectors: BTreeMap::new(),
        }
    }

    /// Adds a vector, enforcing the table invariants.
    pub fn insert(&mut self, key: impl Into<String>, v: Vec<f64>) -> Result<(), DataError> {
        let key = key.into();
        let row = self.vectors.len() + 1;
        if v.len() != self.dimension {
            return Err(DataError::DimensionMismatch {
                row,
                expected: self.dimension,
                found: v.len(),
            });
        }
        if v.iter().all(|&x| x == 0.0) {
            return Err(DataError::ZeroVector(key));
        }
        if self.vectors.contains_key(&key) {
            return Err(DataError::DuplicateKey(key));
        }
        self.vectors.insert(key, v);
        Ok(())
    }

    pub fn encoder_name(&self) -> &str {
        &self.encoder_name
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.vectors.get(key).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.vectors.keys().map(String::as_str)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["key".to_string()];
        header.extend((1..=self.dimension).map(|i| format!("v_{i}")));
        wtr.write_record(&header)?;
        for (k, v) in &self.vectors {
            let mut row = vec![k.clone()];
            row.extend(v.iter().map(|x| x.to_string()));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Parses an embeddings CSV. The dimension is taken from the first data row.
pub fn load_embedding_table<R: Read>(
    reader: R,
    encoder_name: &str,
) -> Result<EmbeddingTable, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut table: Option<EmbeddingTable> = None;
    let mut row = 0;
    for rec in rdr.records() {
        let rec = rec?;
        if rec.get(0) == Some("key") && row == 0 && table.is_none() {
            continue;
        }
        row += 1;
        if rec.len() < 2 {
            return Err(DataError::MalformedRow {
                row,
                reason: "embedding row needs a key and at least one value".into(),
            });
        }
        let key = rec[0].to_string();
        let values: Vec<f64> = rec
            .iter()
            .skip(1)
            .map(|s| {
                s.parse::<f64>().map_err(|_| DataError::MalformedRow {
                    row,
                    reason: format!("cannot parse {s:?} as a number"),
                })
            })
            .collect::<Result<_, _>>()?;
        let t = table.get_or_insert_with(|| EmbeddingTable::new(encoder_name, values.len()));
        if values.len() != t.dimension {
            return Err(DataError::DimensionMismatch {
                row,
                expected: t.dimension,
                found: values.len(),
            });
        }
        t.insert(key, values)?;
    }
    table.ok_or_else(|| DataError::MalformedRow {
        row: 0,
        reason: "embedding file has no rows".into(),
    })
}

/// Reads a stop-word list: one token per line, `#` starts a comment.
pub fn load_stopwords<R: Read>(mut reader: R) -> Result<HashSet<String>, DataError> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    Ok(text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect())
}

pub fn default_stopwords() -> HashSet<String> {
    DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect()
}

/// Lower-cases and splits on runs of non-alphanumeric characters.
pub fn tokenize(label: &str) -> Vec<String> {
    label
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Result of averaging the word vectors of one label.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedEmbedding {
    pub vector: Vec<f64>,
    pub used: usize,
    /// Tokens that were not stop words but had no vector.
    pub skipped: usize,
}

/// Element-wise mean of the word vectors of the label's non-stop-word tokens.
pub fn average_word_embeddings(
    label: &str,
    word_table: &EmbeddingTable,
    stopwords: &HashSet<String>,
) -> Result<AveragedEmbedding, DataError> {
    let mut sum = vec![0.0; word_table.dimension()];
    let mut used = 0;
    let mut skipped = 0;
    for token in tokenize(label) {
        if stopwords.contains(&token) {
            continue;
        }
        match word_table.get(&token) {
            Some(v) => {
                for (s, x) in sum.iter_mut().zip(v) {
                    *s += x;
                }
                used += 1;
            }
            None => skipped += 1,
        }
    }
    if used == 0 {
        return Err(DataError::NoUsableTokens {
            label: label.to_string(),
            skipped,
        });
    }
    let n = used as f64;
    sum.iter_mut().for_each(|s| *s /= n);
    Ok(AveragedEmbedding {
        vector: sum,
        used,
        skipped,
    })
}
