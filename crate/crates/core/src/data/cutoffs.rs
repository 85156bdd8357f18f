use serde::{Deserialize, Serialize};

/// Upper bound on candidate cutoffs per feature.
pub const MAX_CUTOFFS: usize = 20;

/// Candidate `>` thresholds for one numeric feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutoffSet {
    pub feature_name: String,
    pub cutoffs: Vec<f64>,
}

impl CutoffSet {
    pub fn from_column(feature_name: impl Into<String>, values: &[f64]) -> Self {
        Self { feature_name: feature_name.into(), cutoffs: compute_cutoffs(values) }
    }

    pub fn len(&self) -> usize {
        self.cutoffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cutoffs.is_empty()
    }
}

/// Nearest-rank percentiles at 5%, 10%, ..., 95%, deduplicated, with the
/// column maximum removed so that `x > c` is never empty.
///
/// The q-th percentile is the sorted value at 1-based index `ceil(q * n)`.
/// Non-finite values are ignored.
pub fn compute_cutoffs(values: &[f64]) -> Vec<f64> {
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if sorted.is_empty() {
        return Vec::new();
    }
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let max = sorted[n - 1];
    let mut out: Vec<f64> = Vec::with_capacity(19);
    for k in 1..20usize {
        // ceil(k * n / 20), 1-based
        let rank = (k * n).div_ceil(20).max(1);
        let v = sorted[rank - 1];
        if v < max && out.last().is_none_or(|&last| v > last) {
            out.push(v);
        }
    }
    out
}
