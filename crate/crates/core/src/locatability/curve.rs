use serde::{Deserialize, Serialize};

use super::{LabelSchema, LocatabilityError, LocatabilityScore, SegmentationProfile};

/// One bin of a label-proportion vs locatability curve. `mean_score` is
/// `None` for empty bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveBin {
    pub bin_center: f64,
    pub mean_score: Option<f64>,
    pub count: usize,
}

/// Bins images by the area ratio of `label` and averages locatability per bin.
///
/// Bins cover `[0, 1]` with width `bin_width`; a ratio of exactly 1 falls in
/// the last bin. Every bin is emitted, populated or not.
pub fn class_proportion_curve(
    schema: &LabelSchema,
    entries: &[(SegmentationProfile, LocatabilityScore)],
    label: &str,
    bin_width: f64,
) -> Result<Vec<CurveBin>, LocatabilityError> {
    if !(bin_width > 0.0 && bin_width <= 1.0) {
        return Err(LocatabilityError::BadBinWidth(bin_width));
    }
    let k = schema
        .index_of(label)
        .ok_or_else(|| LocatabilityError::UnknownLabel(label.to_owned()))?;
    // 1/0.05 is 20.000000000000004 in f64
    let n_bins = ((1.0 / bin_width) - 1e-9).ceil().max(1.0) as usize;

    let mut sums = vec![0.0; n_bins];
    let mut counts = vec![0usize; n_bins];
    for (profile, score) in entries {
        let ratio = *profile.ratios.get(k).ok_or_else(|| LocatabilityError::LengthMismatch {
            image_id: profile.image_id.clone(),
            expected: schema.len(),
            found: profile.ratios.len(),
        })?;
        let bin = ((ratio / bin_width + 1e-9).floor() as usize).min(n_bins - 1);
        sums[bin] += score.score;
        counts[bin] += 1;
    }
    Ok((0..n_bins)
        .map(|i| CurveBin {
            bin_center: (i as f64 + 0.5) * bin_width,
            mean_score: (counts[i] > 0).then(|| sums[i] / counts[i] as f64),
            count: counts[i],
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> LabelSchema {
        LabelSchema::new("s", vec!["building".into(), "sky".into()]).unwrap()
    }

    fn entry(id: &str, building: f64, score: f64) -> (SegmentationProfile, LocatabilityScore) {
        (
            SegmentationProfile {
                image_id: id.into(),
                label_schema_id: "s".into(),
                ratios: vec![building, 1.0 - building],
            },
            LocatabilityScore {
                image_id: id.into(),
                score,
            },
        )
    }

    #[test]
    fn zero_ratios_fill_first_bin() {
        let entries = vec![entry("a", 0.0, 0.3), entry("b", 0.0, 0.5)];
        let bins = class_proportion_curve(&schema(), &entries, "building", 0.05).unwrap();
        assert_eq!(bins.len(), 20);
        assert_eq!(bins[0].count, 2);
        assert!((bins[0].bin_center - 0.025).abs() < 1e-15);
        assert!((bins[0].mean_score.unwrap() - 0.4).abs() < 1e-15);
        assert!(bins[1..].iter().all(|b| b.count == 0 && b.mean_score.is_none()));
    }

    #[test]
    fn ratio_one_lands_in_last_bin() {
        let bins = class_proportion_curve(&schema(), &[entry("a", 1.0, 1.0)], "building", 0.25).unwrap();
        assert_eq!(bins.len(), 4);
        assert_eq!(bins[3].count, 1);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            class_proportion_curve(&schema(), &[], "road", 0.1),
            Err(LocatabilityError::UnknownLabel(_))
        ));
        assert!(class_proportion_curve(&schema(), &[], "sky", 0.0).is_err());
        assert!(class_proportion_curve(&schema(), &[], "sky", 1.5).is_err());
    }
}
