use serde::{Deserialize, Serialize};

use super::{LocatabilityError, LocatabilityWeights, UNIT_NORM_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixStage {
    Raw,
    Normalized,
    Thresholded,
}

/// Row-major `rows x cols` matrix of clue (row) vs label (column) similarities.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    stage: MatrixStage,
    tau: Option<f64>,
}

impl SimilarityMatrix {
    /// Wraps raw similarities; `values.len()` must equal `rows * cols`.
    pub fn from_raw(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, LocatabilityError> {
        if values.len() != rows * cols {
            return Err(LocatabilityError::DimensionMismatch {
                expected: rows * cols,
                found: values.len(),
                context: "matrix values".into(),
            });
        }
        Ok(Self {
            rows,
            cols,
            values,
            stage: MatrixStage::Raw,
            tau: None,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn stage(&self) -> MatrixStage {
        self.stage
    }

    /// Threshold applied, for thresholded matrices.
    pub fn tau(&self) -> Option<f64> {
        self.tau
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    fn expect_stage(&self, expected: MatrixStage) -> Result<(), LocatabilityError> {
        if self.stage != expected {
            return Err(LocatabilityError::WrongStage {
                expected,
                found: self.stage,
            });
        }
        Ok(())
    }
}

fn check_unit(id: &str, v: &[f64]) -> Result<(), LocatabilityError> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(LocatabilityError::ZeroVector(id.to_owned()));
    }
    if (norm - 1.0).abs() > UNIT_NORM_TOL {
        return Err(LocatabilityError::NotUnitNorm {
            id: id.to_owned(),
            norm,
        });
    }
    Ok(())
}

/// Cosine similarity of every clue vector against every label vector.
/// Inputs must be unit-normalised, so cosine reduces to the dot product.
pub fn build_similarity_matrix<C, L>(clues: &[C], labels: &[L]) -> Result<SimilarityMatrix, LocatabilityError>
where
    C: AsRef<[f64]>,
    L: AsRef<[f64]>,
{
    if clues.is_empty() {
        return Err(LocatabilityError::Empty("clue"));
    }
    if labels.is_empty() {
        return Err(LocatabilityError::Empty("label"));
    }
    let dim = clues[0].as_ref().len();
    let all = clues
        .iter()
        .enumerate()
        .map(|(i, c)| (format!("clue {i}"), c.as_ref()))
        .chain(
            labels
                .iter()
                .enumerate()
                .map(|(j, l)| (format!("label {j}"), l.as_ref())),
        );
    for (id, v) in all {
        if v.len() != dim {
            return Err(LocatabilityError::DimensionMismatch {
                expected: dim,
                found: v.len(),
                context: id,
            });
        }
        check_unit(&id, v)?;
    }

    let mut values = Vec::with_capacity(clues.len() * labels.len());
    for c in clues {
        for l in labels {
            let dot: f64 = c.as_ref().iter().zip(l.as_ref()).map(|(a, b)| a * b).sum();
            values.push(dot.clamp(-1.0, 1.0));
        }
    }
    SimilarityMatrix::from_raw(clues.len(), labels.len(), values)
}

/// Global min-max normalisation into `[0, 1]`.
pub fn minmax_normalize(m: &SimilarityMatrix) -> Result<SimilarityMatrix, LocatabilityError> {
    m.expect_stage(MatrixStage::Raw)?;
    let min = m.values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = m.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m.values.is_empty() || max == min {
        return Err(LocatabilityError::DegenerateMatrix {
            value: if m.values.is_empty() { f64::NAN } else { min },
        });
    }
    let span = max - min;
    Ok(SimilarityMatrix {
        values: m.values.iter().map(|v| (v - min) / span).collect(),
        stage: MatrixStage::Normalized,
        ..m.clone()
    })
}

/// Zeroes every entry strictly below `tau`; entries equal to `tau` survive.
pub fn threshold_zero(m: &SimilarityMatrix, tau: f64) -> Result<SimilarityMatrix, LocatabilityError> {
    m.expect_stage(MatrixStage::Normalized)?;
    if !(0.0..=1.0).contains(&tau) {
        return Err(LocatabilityError::BadThreshold(tau));
    }
    Ok(SimilarityMatrix {
        values: m.values.iter().map(|&v| if v < tau { 0.0 } else { v }).collect(),
        stage: MatrixStage::Thresholded,
        tau: Some(tau),
        ..m.clone()
    })
}

/// Averages each label column over all clues and L1-normalises the result.
pub fn reduce_to_weights(
    m: &SimilarityMatrix,
    label_schema_id: &str,
    corpus_id: &str,
) -> Result<LocatabilityWeights, LocatabilityError> {
    m.expect_stage(MatrixStage::Thresholded)?;
    let tau = m.tau.unwrap_or(0.0);
    let mut means = vec![0.0; m.cols];
    for r in 0..m.rows {
        for (mean, v) in means.iter_mut().zip(m.row(r)) {
            *mean += v;
        }
    }
    for mean in &mut means {
        *mean /= m.rows as f64;
    }
    let total: f64 = means.iter().sum();
    if total <= 0.0 {
        return Err(LocatabilityError::NoSignal { tau });
    }
    Ok(LocatabilityWeights {
        weights: means.iter().map(|v| v / total).collect(),
        label_schema_id: label_schema_id.to_owned(),
        tau,
        corpus_id: corpus_id.to_owned(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(rows: usize, cols: usize, v: &[f64]) -> SimilarityMatrix {
        SimilarityMatrix::from_raw(rows, cols, v.to_vec()).unwrap()
    }

    #[test]
    fn identical_and_orthogonal_vectors() {
        let m = build_similarity_matrix(&[vec![1.0, 0.0]], &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(m.get(0, 0), 1.0);
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.stage(), MatrixStage::Raw);
    }

    #[test]
    fn rejects_bad_vectors() {
        assert!(matches!(
            build_similarity_matrix(&[vec![1.0, 0.0]], &[vec![1.0, 0.0, 0.0]]),
            Err(LocatabilityError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            build_similarity_matrix(&[vec![0.0, 0.0]], &[vec![1.0, 0.0]]),
            Err(LocatabilityError::ZeroVector(_))
        ));
        assert!(matches!(
            build_similarity_matrix(&[vec![2.0, 0.0]], &[vec![1.0, 0.0]]),
            Err(LocatabilityError::NotUnitNorm { .. })
        ));
    }

    #[test]
    fn minmax_affine_map() {
        let n = minmax_normalize(&raw(2, 2, &[0.0, 1.0, 2.0, 1.0])).unwrap();
        assert_eq!(n.values(), &[0.0, 0.5, 1.0, 0.5]);
        let fixed = minmax_normalize(&raw(1, 3, &[0.0, 1.0, 1.0])).unwrap();
        assert_eq!(fixed.values(), &[0.0, 1.0, 1.0]);
    }

    #[test]
    fn constant_matrix_is_degenerate() {
        assert!(matches!(
            minmax_normalize(&raw(2, 2, &[0.3; 4])),
            Err(LocatabilityError::DegenerateMatrix { .. })
        ));
    }

    #[test]
    fn threshold_boundaries() {
        let n = minmax_normalize(&raw(1, 4, &[0.0, 0.2, 0.5, 1.0])).unwrap();
        assert_eq!(threshold_zero(&n, 0.0).unwrap().values(), n.values());
        assert_eq!(threshold_zero(&n, 1.0).unwrap().values(), &[0.0, 0.0, 0.0, 1.0]);
        let t = threshold_zero(&n, 0.5).unwrap();
        assert_eq!(t.values(), &[0.0, 0.0, 0.5, 1.0]);
        assert!(threshold_zero(&n, 1.5).is_err());
    }

    #[test]
    fn boundary_value_survives_threshold() {
        // {0.2, 0.5, 0.7} already normalised
        let m = SimilarityMatrix {
            rows: 1,
            cols: 3,
            values: vec![0.2, 0.5, 0.7],
            stage: MatrixStage::Normalized,
            tau: None,
        };
        assert_eq!(threshold_zero(&m, 0.5).unwrap().values(), &[0.0, 0.5, 0.7]);
    }

    fn thresholded(rows: usize, cols: usize, v: &[f64]) -> SimilarityMatrix {
        SimilarityMatrix {
            rows,
            cols,
            values: v.to_vec(),
            stage: MatrixStage::Thresholded,
            tau: Some(0.5),
        }
    }

    #[test]
    fn reduce_examples() {
        let w = reduce_to_weights(&thresholded(2, 2, &[1.0, 0.0, 0.0, 1.0]), "s", "c").unwrap();
        assert_eq!(w.weights, vec![0.5, 0.5]);
        let w = reduce_to_weights(&thresholded(2, 2, &[1.0, 0.0, 1.0, 0.0]), "s", "c").unwrap();
        assert_eq!(w.weights, vec![1.0, 0.0]);
        assert!(matches!(
            reduce_to_weights(&thresholded(2, 2, &[0.0; 4]), "s", "c"),
            Err(LocatabilityError::NoSignal { .. })
        ));
    }

    #[test]
    fn stages_are_enforced() {
        let r = raw(1, 2, &[0.0, 1.0]);
        assert!(matches!(
            threshold_zero(&r, 0.5),
            Err(LocatabilityError::WrongStage { .. })
        ));
        assert!(reduce_to_weights(&r, "s", "c").is_err());
    }
}
