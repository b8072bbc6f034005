//! Corpus ingestion, vocabulary construction, token encoding and
//! pretrained word-vector loading.

use std::collections::{BTreeSet, HashMap};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::numeric::Matrix;
use crate::rng::rng_for;
use crate::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub tokens: Vec<String>,
    pub labels: BTreeSet<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub documents: Vec<Document>,
}

#[derive(Deserialize)]
struct RawDocument {
    id: String,
    labels: Vec<i64>,
    text: String,
}

/// Lowercases and splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// One past the largest label index seen, or 0 for an empty corpus.
    pub fn label_space(&self) -> usize {
        self.documents
            .iter()
            .filter_map(|d| d.labels.iter().next_back())
            .max()
            .map_or(0, |&m| m + 1)
    }

    /// Number of documents carrying each label.
    pub fn label_frequencies(&self, k: usize) -> Vec<usize> {
        let mut freq = vec![0; k];
        for d in &self.documents {
            for &l in &d.labels {
                if l < k {
                    freq[l] += 1;
                }
            }
        }
        freq
    }

    pub fn find(&self, doc_id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.doc_id == doc_id)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for d in &self.documents {
            let line = serde_json::json!({
                "id": d.doc_id,
                "labels": d.labels,
                "text": d.tokens.join(" "),
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }
}

/// Reads a JSON-lines corpus: one `{"id", "labels", "text"}` object per line.
///
/// Blank lines are skipped. Line numbers in errors are 1-based.
pub fn load_corpus<R: BufRead>(reader: R) -> Result<Corpus> {
    let mut documents = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawDocument = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        let mut labels = BTreeSet::new();
        for l in raw.labels {
            if l < 0 {
                return Err(Error::Validation(format!(
                    "line {line_no}: negative label index {l}"
                )));
            }
            labels.insert(l as usize);
        }
        if labels.is_empty() {
            return Err(Error::Validation(format!(
                "line {line_no}: document {:?} has no labels",
                raw.id
            )));
        }
        let tokens = tokenize(&raw.text);
        if tokens.is_empty() {
            return Err(Error::Validation(format!(
                "line {line_no}: document {:?} has empty text",
                raw.id
            )));
        }
        documents.push(Document {
            doc_id: raw.id,
            tokens,
            labels,
        });
    }
    Ok(Corpus { documents })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    id_to_token: Vec<String>,
    token_to_id: HashMap<String, usize>,
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        Vocabulary::from_tokens(tokens)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.id_to_token
    }
}

impl Vocabulary {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.first().map(String::as_str) != Some(PAD_TOKEN)
            || tokens.get(1).map(String::as_str) != Some(UNK_TOKEN)
        {
            return Err(Error::Format(
                "vocabulary must start with the PAD and UNK tokens".into(),
            ));
        }
        let mut token_to_id = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if token_to_id.insert(t.clone(), i).is_some() {
                return Err(Error::Format(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Vocabulary {
            id_to_token: tokens,
            token_to_id,
        })
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.token_to_id.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }
}

/// Keeps tokens with frequency ≥ `min_freq`, most frequent first with ties
/// broken lexicographically, capped at `max_size` entries beyond PAD/UNK.
pub fn build_vocab(corpus: &Corpus, min_freq: usize, max_size: usize) -> Result<Vocabulary> {
    if min_freq == 0 {
        return Err(Error::Validation("min_freq must be at least 1".into()));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for d in &corpus.documents {
        for t in &d.tokens {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(t, c)| c >= min_freq && t != PAD_TOKEN && t != UNK_TOKEN)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    kept.truncate(max_size);

    let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
    tokens.extend(kept.into_iter().map(|(t, _)| t.to_string()));
    Vocabulary::from_tokens(tokens)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordVectors {
    pub table: Matrix,
}

impl WordVectors {
    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    /// Every row drawn from uniform(−0.25, 0.25) except PAD, which is zero.
    pub fn random(vocab: &Vocabulary, d: usize, seed: u64) -> Self {
        let mut table = Matrix::zeros(vocab.len(), d);
        for id in 0..vocab.len() {
            fill_oov_row(&mut table, id, seed);
        }
        WordVectors { table }
    }
}

const OOV_BOUND: f64 = 0.25;

fn fill_oov_row(table: &mut Matrix, id: usize, seed: u64) {
    use rand::Rng;
    if id == PAD {
        table.row_mut(id).fill(0.0);
        return;
    }
    let mut rng = rng_for(seed, &[0x00f0_0f00, id as u64]);
    for v in table.row_mut(id) {
        *v = rng.gen_range(-OOV_BOUND..OOV_BOUND);
    }
}

/// Reads GloVe-style text vectors (`token v1 … vd`, no header).
///
/// Vocabulary tokens missing from the file get a seeded uniform(−0.25, 0.25)
/// vector that depends only on `(seed, token id)`. The PAD row is zero.
pub fn load_word_vectors<R: BufRead>(
    reader: R,
    vocab: &Vocabulary,
    d: usize,
    seed: u64,
) -> Result<WordVectors> {
    let mut table = Matrix::zeros(vocab.len(), d);
    let mut found = vec![false; vocab.len()];
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let values: Vec<f64> = fields
            .map(|f| {
                f.parse::<f64>().map_err(|e| Error::Parse {
                    line: line_no,
                    msg: format!("bad float {f:?}: {e}"),
                })
            })
            .collect::<Result<_>>()?;
        if values.len() != d {
            return Err(Error::Format(format!(
                "line {line_no}: expected {d} floats for {token:?}, found {}",
                values.len()
            )));
        }
        if let Some(id) = vocab.get(token) {
            if id != PAD && !found[id] {
                table.row_mut(id).copy_from_slice(&values);
                found[id] = true;
            }
        }
    }
    for (id, _) in found.iter().enumerate().filter(|(_, &f)| !f) {
        fill_oov_row(&mut table, id, seed);
    }
    Ok(WordVectors { table })
}

/// Fixed-length token ids plus a validity mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedDocument {
    pub ids: Vec<usize>,
    pub mask: Vec<bool>,
}

impl EncodedDocument {
    pub fn valid_len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Truncates to the first `max_len` tokens or right-pads with PAD.
pub fn encode_document(
    doc: &Document,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<EncodedDocument> {
    if max_len == 0 {
        return Err(Error::Validation("max_len must be at least 1".into()));
    }
    let mut ids: Vec<usize> = doc
        .tokens
        .iter()
        .take(max_len)
        .map(|t| vocab.id(t))
        .collect();
    let mut mask = vec![true; ids.len()];
    ids.resize(max_len, PAD);
    mask.resize(max_len, false);
    Ok(EncodedDocument { ids, mask })
}

/// Maps valid ids back to tokens.
pub fn decode(encoded: &EncodedDocument, vocab: &Vocabulary) -> Vec<String> {
    encoded
        .ids
        .iter()
        .zip(&encoded.mask)
        .filter(|(_, &m)| m)
        .map(|(&id, _)| vocab.token(id).unwrap_or(UNK_TOKEN).to_string())
        .collect()
}
