use serde::{Deserialize, Serialize};

use super::forward::ForwardTrace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelAttention {
    pub label: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Sorted by descending weight.
    pub tokens: Vec<TokenWeight>,
}

/// Serialized as a `[token, weight]` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "(String, f64)", into = "(String, f64)")]
pub struct TokenWeight {
    pub token: String,
    pub weight: f64,
}

impl From<(String, f64)> for TokenWeight {
    fn from((token, weight): (String, f64)) -> Self {
        TokenWeight { token, weight }
    }
}

impl From<TokenWeight> for (String, f64) {
    fn from(t: TokenWeight) -> Self {
        (t.token, t.weight)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionReport {
    pub doc_id: String,
    pub labels: Vec<LabelAttention>,
}

/// Per-label word weights of the representation that fed the prediction.
///
/// `tokens[t]` names position `t`; masked positions are skipped. Ties keep
/// document order.
pub fn export_attention(
    doc_id: &str,
    trace: &ForwardTrace,
    tokens: &[String],
    label_names: Option<&[String]>,
) -> AttentionReport {
    let fused = trace.fused_attention();
    let labels = trace
        .labels
        .iter()
        .enumerate()
        .map(|(j, &label)| {
            let mut weights: Vec<TokenWeight> = (0..fused.rows())
                .filter(|&t| trace.mask[t])
                .map(|t| TokenWeight {
                    token: tokens.get(t).cloned().unwrap_or_default(),
                    weight: fused[(t, j)],
                })
                .collect();
            weights.sort_by(|a, b| b.weight.total_cmp(&a.weight));
            LabelAttention {
                label,
                name: label_names.and_then(|n| n.get(label).cloned()),
                tokens: weights,
            }
        })
        .collect();
    AttentionReport {
        doc_id: doc_id.to_string(),
        labels,
    }
}
