use geocurate_core::locatability::{EmbeddingKind, EmbeddingRecord};
use serde_json::{json, Value};

use crate::client::Gateway;
use crate::GatewayError;

/// A clue or label text to embed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbedItem {
    pub id: String,
    pub kind: EmbeddingKind,
    pub text: String,
}

const BATCH: usize = 64;

/// Embeds every item and unit-normalises the vectors. All vectors must
/// share one dimension.
pub async fn fetch_embeddings(gateway: &Gateway, items: &[EmbedItem]) -> Result<Vec<EmbeddingRecord>, GatewayError> {
    let mut out: Vec<EmbeddingRecord> = Vec::with_capacity(items.len());
    for chunk in items.chunks(BATCH) {
        let body = json!({
            "model": gateway.config().model,
            "input": chunk.iter().map(|i| i.text.as_str()).collect::<Vec<_>>(),
        });
        let (resp, _) = gateway.post_json("embeddings", &body).await?;
        let vectors = decode(&resp, chunk.len())?;
        for (item, v) in chunk.iter().zip(vectors) {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(norm.is_finite() && norm > 0.0) {
                return Err(GatewayError::Decode(format!(
                    "embedding for {:?} has norm {norm}",
                    item.id
                )));
            }
            if let Some(first) = out.first() {
                if first.vector.len() != v.len() {
                    return Err(GatewayError::Dimension {
                        id: item.id.clone(),
                        expected: first.vector.len(),
                        found: v.len(),
                    });
                }
            }
            out.push(EmbeddingRecord {
                id: item.id.clone(),
                kind: item.kind,
                vector: v.iter().map(|x| x / norm).collect(),
            });
        }
    }
    Ok(out)
}

/// `data[*].embedding`, ordered by `index` when present.
fn decode(resp: &Value, expected: usize) -> Result<Vec<Vec<f64>>, GatewayError> {
    let data = resp
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| GatewayError::Decode("embeddings response has no data array".into()))?;
    if data.len() != expected {
        return Err(GatewayError::Decode(format!(
            "{} embeddings for {expected} inputs",
            data.len()
        )));
    }
    let mut rows = Vec::with_capacity(data.len());
    for (pos, d) in data.iter().enumerate() {
        let index = d.get("index").and_then(Value::as_u64).map_or(pos, |i| i as usize);
        let v = d
            .get("embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| GatewayError::Decode(format!("data[{pos}] has no embedding")))?
            .iter()
            .map(|x| {
                x.as_f64()
                    .ok_or_else(|| GatewayError::Decode(format!("data[{pos}] has a non-numeric entry")))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push((index, v));
    }
    rows.sort_by_key(|(i, _)| *i);
    Ok(rows.into_iter().map(|(_, v)| v).collect())
}
