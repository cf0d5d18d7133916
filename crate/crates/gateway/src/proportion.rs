use std::collections::HashSet;
use std::path::Path;

use geocurate_core::eval::{compute_level_metrics, GroundTruth, Level, NameNormalizer, ProportionPoint};

use crate::batch::{batch_infer, BatchOptions, Manifest};
use crate::client::Gateway;
use crate::GatewayError;

/// One dataset variant: its share of highly locatable images and the
/// evaluation images to run.
#[derive(Debug, Clone)]
pub struct ProportionVariant {
    pub high_fraction: f64,
    pub manifest: Manifest,
}

/// Runs each variant through the endpoint and scores it against the
/// matching ground truth. Each variant checkpoints to
/// `checkpoint_dir/variant-<i>.jsonl`.
pub async fn proportion_experiment(
    gateway: &Gateway,
    variants: &[ProportionVariant],
    truth: &[GroundTruth],
    normalizer: &NameNormalizer,
    checkpoint_dir: &Path,
    options: &BatchOptions,
) -> Result<Vec<ProportionPoint>, GatewayError> {
    let mut curve = Vec::with_capacity(variants.len());
    for (i, variant) in variants.iter().enumerate() {
        let checkpoint = checkpoint_dir.join(format!("variant-{i}.jsonl"));
        let outcome = batch_infer(gateway, &variant.manifest, &checkpoint, options).await?;
        let ids: HashSet<&str> = variant.manifest.entries.iter().map(|e| e.image_id.as_str()).collect();
        let subset: Vec<GroundTruth> = truth
            .iter()
            .filter(|t| ids.contains(t.image_id.as_str()))
            .cloned()
            .collect();
        let country = compute_level_metrics(&outcome.records, &subset, Level::Country, normalizer)?;
        let city = compute_level_metrics(&outcome.records, &subset, Level::City, normalizer)?;
        curve.push(ProportionPoint {
            high_fraction: variant.high_fraction,
            country_accuracy: country.accuracy,
            city_accuracy: city.accuracy,
        });
    }
    Ok(curve)
}
