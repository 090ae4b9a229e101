//! Penalized offline change-point detection with an L2 (mean-shift) cost.
//!
//! A segmentation is a strictly increasing list of boundaries ending in the
//! series length `n` (the end sentinel). Its objective is the sum of the
//! within-segment squared deviations from the segment mean plus
//! `beta * (number of internal boundaries)`.
//!
//! Two solvers are provided: greedy [`binary_segmentation`], which is what
//! pruning uses, and the exact dynamic program [`exact_segmentation`] for a
//! fixed number of breakpoints.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::TimeSeries;

/// Multiplier `c` in the automatic penalty `c * sigma^2 * ln(n)`.
///
/// Calibrated on seeded standard-normal noise (length 120, must stay H0) and
/// a one-sigma midpoint step (must become H1); see the acceptance suite.
pub const DEFAULT_PENALTY_MULTIPLIER: f64 = 3.0;

pub const DEFAULT_MIN_SEGMENT_SIZE: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChangepointError {
    #[error("empty segment [{start}, {end})")]
    EmptySegment { start: usize, end: usize },
    #[error("segment end {end} beyond series length {len}")]
    OutOfBounds { end: usize, len: usize },
    #[error("invalid segmentation: {0}")]
    InvalidSegmentation(String),
    #[error("series of length {len} too short, need at least {needed}")]
    SeriesTooShort { len: usize, needed: usize },
    #[error("{k} breakpoints infeasible for n={n} with min segment size {min_segment_size}")]
    InfeasibleK {
        k: usize,
        n: usize,
        min_segment_size: usize,
    },
    #[error("invalid detector config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Fixed per-boundary penalty. `None` selects the automatic,
    /// variance-scaled penalty (see [`auto_penalty`]).
    pub penalty_beta: Option<f64>,
    pub penalty_multiplier: f64,
    pub min_segment_size: usize,
    pub max_changepoints: Option<usize>,
    /// Fixed number of breakpoints; when set, the penalty is ignored.
    pub known_k: Option<usize>,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            penalty_beta: None,
            penalty_multiplier: DEFAULT_PENALTY_MULTIPLIER,
            min_segment_size: DEFAULT_MIN_SEGMENT_SIZE,
            max_changepoints: None,
            known_k: None,
        }
    }
}

impl DetectorConfig {
    pub fn with_penalty(beta: f64) -> Self {
        Self {
            penalty_beta: Some(beta),
            ..Self::default()
        }
    }

    pub fn with_known_k(k: usize) -> Self {
        Self {
            known_k: Some(k),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ChangepointError> {
        if let Some(beta) = self.penalty_beta {
            if !(beta >= 0.0 && beta.is_finite()) {
                return Err(ChangepointError::InvalidConfig(format!(
                    "penalty_beta must be finite and >= 0, got {beta}"
                )));
            }
        }
        if !(self.penalty_multiplier >= 0.0 && self.penalty_multiplier.is_finite()) {
            return Err(ChangepointError::InvalidConfig(
                "penalty_multiplier must be finite and >= 0".into(),
            ));
        }
        if self.min_segment_size == 0 {
            return Err(ChangepointError::InvalidConfig(
                "min_segment_size must be >= 1".into(),
            ));
        }
        if self.max_changepoints == Some(0) || self.known_k == Some(0) {
            // zero is expressed by None / a huge penalty; reject the ambiguous form
            return Err(ChangepointError::InvalidConfig(
                "max_changepoints and known_k must be positive when set".into(),
            ));
        }
        Ok(())
    }

    /// The penalty actually applied to `values`.
    pub fn resolve_penalty(&self, values: &[f64]) -> f64 {
        self.penalty_beta
            .unwrap_or_else(|| auto_penalty(values, self.penalty_multiplier))
    }
}

/// `multiplier * sigma^2 * ln(n)` with `sigma^2 = mean((x[t+1] - x[t])^2) / 2`.
///
/// The difference-based variance estimate is insensitive to mean shifts, so
/// a large step does not inflate its own penalty.
pub fn auto_penalty(values: &[f64], multiplier: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let sq: f64 = values.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    let sigma2 = 0.5 * sq / (n - 1) as f64;
    multiplier * sigma2 * (n as f64).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShiftCategory {
    /// Only the end sentinel was returned.
    H0NoShift,
    /// At least one internal boundary.
    H1Shift,
}

/// A validated segmentation and its objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangePointSet {
    boundaries: Vec<usize>,
    objective: f64,
}

impl ChangePointSet {
    /// Checks the boundary invariants for a series of length `n`.
    pub fn new(
        boundaries: Vec<usize>,
        n: usize,
        min_segment_size: usize,
        objective: f64,
    ) -> Result<Self, ChangepointError> {
        validate_boundaries(&boundaries, n, min_segment_size)?;
        Ok(Self {
            boundaries,
            objective,
        })
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    /// Boundaries without the end sentinel.
    pub fn internal(&self) -> &[usize] {
        &self.boundaries[..self.boundaries.len() - 1]
    }

    pub fn objective(&self) -> f64 {
        self.objective
    }

    pub fn category(&self) -> ShiftCategory {
        if self.boundaries.len() == 1 {
            ShiftCategory::H0NoShift
        } else {
            ShiftCategory::H1Shift
        }
    }
}

fn validate_boundaries(
    boundaries: &[usize],
    n: usize,
    min_segment_size: usize,
) -> Result<(), ChangepointError> {
    let invalid = |msg: String| Err(ChangepointError::InvalidSegmentation(msg));
    match boundaries.last() {
        None => return invalid("no boundaries".into()),
        Some(&last) if last != n => {
            return invalid(format!("last boundary {last} != series length {n}"))
        }
        _ => {}
    }
    let mut prev = 0usize;
    for &b in boundaries {
        if b <= prev && !(prev == 0 && b > 0) {
            return invalid(format!("boundaries not strictly increasing at {b}"));
        }
        if b - prev < min_segment_size {
            return invalid(format!(
                "segment [{prev}, {b}) shorter than min_segment_size {min_segment_size}"
            ));
        }
        prev = b;
    }
    Ok(())
}

/// Sum of squared deviations from the mean over `values[start..end]`.
///
/// Two-pass evaluation; use [`SegmentCost`] when many segments of the same
/// series are queried.
pub fn l2_cost(values: &[f64], start: usize, end: usize) -> Result<f64, ChangepointError> {
    if start >= end {
        return Err(ChangepointError::EmptySegment { start, end });
    }
    if end > values.len() {
        return Err(ChangepointError::OutOfBounds {
            end,
            len: values.len(),
        });
    }
    let seg = &values[start..end];
    let mean = seg.iter().sum::<f64>() / seg.len() as f64;
    Ok(seg.iter().map(|x| (x - mean).powi(2)).sum())
}

/// O(1) L2 segment cost from prefix sums of the centred series.
#[derive(Debug, Clone)]
pub struct SegmentCost {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl SegmentCost {
    pub fn new(values: &[f64]) -> Self {
        let n = values.len();
        let centre = if n == 0 {
            0.0
        } else {
            values.iter().sum::<f64>() / n as f64
        };
        let mut sum = Vec::with_capacity(n + 1);
        let mut sum_sq = Vec::with_capacity(n + 1);
        sum.push(0.0);
        sum_sq.push(0.0);
        let (mut s, mut q) = (0.0, 0.0);
        for &v in values {
            let c = v - centre;
            s += c;
            q += c * c;
            sum.push(s);
            sum_sq.push(q);
        }
        Self { sum, sum_sq }
    }

    pub fn len(&self) -> usize {
        self.sum.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cost of `[start, end)`; callers guarantee `start < end <= len`.
    pub fn cost(&self, start: usize, end: usize) -> f64 {
        debug_assert!(start < end && end <= self.len());
        let len = (end - start) as f64;
        let s = self.sum[end] - self.sum[start];
        let q = self.sum_sq[end] - self.sum_sq[start];
        (q - s * s / len).max(0.0)
    }
}

/// Segment-cost sum of `cps` plus `beta * (|C| - 1)`.
pub fn total_objective(
    values: &[f64],
    cps: &ChangePointSet,
    config: &DetectorConfig,
) -> Result<f64, ChangepointError> {
    let beta = config.resolve_penalty(values);
    Ok(segmentation_cost(values, cps.boundaries(), config.min_segment_size)? + beta * (cps.boundaries().len() - 1) as f64)
}

/// Unpenalized cost of a boundary list (end sentinel included).
pub fn segmentation_cost(
    values: &[f64],
    boundaries: &[usize],
    min_segment_size: usize,
) -> Result<f64, ChangepointError> {
    validate_boundaries(boundaries, values.len(), min_segment_size)?;
    let mut start = 0;
    let mut total = 0.0;
    for &end in boundaries {
        total += l2_cost(values, start, end)?;
        start = end;
    }
    Ok(total)
}

/// Best single split of `[start, end)`: `(index, gain)`, smallest index on ties.
fn best_split(
    cost: &SegmentCost,
    start: usize,
    end: usize,
    min_size: usize,
) -> Option<(usize, f64)> {
    if end - start < 2 * min_size {
        return None;
    }
    let whole = cost.cost(start, end);
    let mut best: Option<(usize, f64)> = None;
    for split in (start + min_size)..=(end - min_size) {
        let gain = whole - cost.cost(start, split) - cost.cost(split, end);
        if best.is_none_or(|(_, g)| gain > g) {
            best = Some((split, gain));
        }
    }
    best
}

/// Greedy binary segmentation.
///
/// Each step applies the single split with the largest cost reduction over
/// all current segments. With `known_k` set, exactly that many splits are
/// made; otherwise a split is accepted only while its gain strictly exceeds
/// the penalty (and `max_changepoints` is not reached).
pub fn binary_segmentation(
    values: &[f64],
    config: &DetectorConfig,
) -> Result<ChangePointSet, ChangepointError> {
    config.validate()?;
    let n = values.len();
    let min_size = config.min_segment_size;
    if n == 0 || n < min_size {
        return Err(ChangepointError::SeriesTooShort {
            len: n,
            needed: min_size.max(1),
        });
    }
    if let Some(k) = config.known_k {
        if (k + 1) * min_size > n {
            return Err(ChangepointError::SeriesTooShort {
                len: n,
                needed: (k + 1) * min_size,
            });
        }
    }
    let beta = config.resolve_penalty(values);
    let cost = SegmentCost::new(values);

    // (start, end, best split of this segment)
    let mut segments: Vec<(usize, usize, Option<(usize, f64)>)> =
        vec![(0, n, best_split(&cost, 0, n, min_size))];
    let mut boundaries = vec![n];

    loop {
        let made = boundaries.len() - 1;
        match config.known_k {
            Some(k) if made >= k => break,
            None if config.max_changepoints.is_some_and(|m| made >= m) => break,
            _ => {}
        }
        let pick = segments
            .iter()
            .enumerate()
            .filter_map(|(i, &(_, _, s))| s.map(|(idx, gain)| (i, idx, gain)))
            .fold(None::<(usize, usize, f64)>, |acc, cand| match acc {
                Some(a) if a.2 > cand.2 || (a.2 == cand.2 && a.1 < cand.1) => Some(a),
                _ => Some(cand),
            });
        let Some((seg_index, split, gain)) = pick else {
            if let Some(k) = config.known_k {
                return Err(ChangepointError::InfeasibleK {
                    k,
                    n,
                    min_segment_size: min_size,
                });
            }
            break;
        };
        if config.known_k.is_none() && gain <= beta {
            break;
        }
        let (start, end, _) = segments.swap_remove(seg_index);
        segments.push((start, split, best_split(&cost, start, split, min_size)));
        segments.push((split, end, best_split(&cost, split, end, min_size)));
        let at = boundaries.partition_point(|&b| b < split);
        boundaries.insert(at, split);
    }

    let objective = segmentation_cost(values, &boundaries, min_size)?
        + beta * (boundaries.len() - 1) as f64;
    ChangePointSet::new(boundaries, n, min_size, objective)
}

/// Globally optimal segmentation with exactly `k` internal boundaries.
///
/// Dynamic program over (segments remaining, start position) computed from
/// the right, so a forward reconstruction that takes the smallest optimal
/// next boundary yields the lexicographically smallest minimizer.
/// `O(k * n^2)` time.
pub fn exact_segmentation(
    values: &[f64],
    k: usize,
    config: &DetectorConfig,
) -> Result<ChangePointSet, ChangepointError> {
    if config.min_segment_size == 0 {
        return Err(ChangepointError::InvalidConfig(
            "min_segment_size must be >= 1".into(),
        ));
    }
    let n = values.len();
    let min_size = config.min_segment_size;
    let segments = k + 1;
    if n == 0 || segments * min_size > n {
        return Err(ChangepointError::InfeasibleK {
            k,
            n,
            min_segment_size: min_size,
        });
    }
    let cost = SegmentCost::new(values);

    // best[r][i]: minimal cost of splitting values[i..n] into r + 1 segments.
    let mut best = vec![vec![f64::INFINITY; n + 1]; segments];
    let mut next = vec![vec![usize::MAX; n + 1]; segments];
    for (i, slot) in best[0].iter_mut().enumerate().take(n) {
        if n - i >= min_size {
            *slot = cost.cost(i, n);
            next[0][i] = n;
        }
    }
    for r in 1..segments {
        for i in 0..n {
            // remaining r segments after the first need r * min_size samples
            let Some(last_j) = n.checked_sub(r * min_size) else {
                continue;
            };
            let mut best_here = f64::INFINITY;
            let mut arg = usize::MAX;
            for j in (i + min_size)..=last_j {
                let tail = best[r - 1][j];
                if !tail.is_finite() {
                    continue;
                }
                let c = cost.cost(i, j) + tail;
                if c < best_here {
                    best_here = c;
                    arg = j;
                }
            }
            best[r][i] = best_here;
            next[r][i] = arg;
        }
    }

    let mut boundaries = Vec::with_capacity(segments);
    let mut pos = 0;
    for r in (0..segments).rev() {
        let j = next[r][pos];
        debug_assert!(j != usize::MAX);
        boundaries.push(j);
        pos = j;
    }
    let beta = config.resolve_penalty(values);
    let objective = segmentation_cost(values, &boundaries, min_size)? + beta * k as f64;
    ChangePointSet::new(boundaries, n, min_size, objective)
}

/// Standardizes to zero mean and unit population variance.
/// Returns `None` for a constant series.
pub fn z_score(values: &[f64]) -> Option<Vec<f64>> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if !(sd > 0.0) || !sd.is_finite() {
        return None;
    }
    Some(values.iter().map(|v| (v - mean) / sd).collect())
}

/// Category plus the segmentation it was derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub category: ShiftCategory,
    /// Boundaries on the z-scored series (indices are unaffected by scaling).
    pub changepoints: ChangePointSet,
}

/// Runs penalized binary segmentation on the z-scored series.
pub fn detect(series: &TimeSeries, config: &DetectorConfig) -> Result<Detection, ChangepointError> {
    let values = series.values();
    let n = values.len();
    let unknown_k = DetectorConfig {
        known_k: None,
        ..config.clone()
    };
    unknown_k.validate()?;
    if n < unknown_k.min_segment_size {
        return Err(ChangepointError::SeriesTooShort {
            len: n,
            needed: unknown_k.min_segment_size,
        });
    }
    let Some(z) = z_score(values) else {
        let changepoints = ChangePointSet::new(vec![n], n, unknown_k.min_segment_size, 0.0)?;
        return Ok(Detection {
            category: ShiftCategory::H0NoShift,
            changepoints,
        });
    };
    let changepoints = binary_segmentation(&z, &unknown_k)?;
    Ok(Detection {
        category: changepoints.category(),
        changepoints,
    })
}

/// H0 iff penalized binary segmentation returns only the end sentinel.
pub fn classify(series: &TimeSeries, config: &DetectorConfig) -> Result<ShiftCategory, ChangepointError> {
    detect(series, config).map(|d| d.category)
}

/// Outcome of pruning a dataset.
#[derive(Debug, Clone, Default)]
pub struct PruneReport {
    /// H1 members restamped as `Pruned`, in input order.
    pub kept: Vec<crate::series::TimeSeries>,
    pub rejected: Vec<String>,
    pub failed: Vec<(String, ChangepointError)>,
}

/// Keeps exactly the H1 series, order preserved, restamped `Pruned`.
pub fn prune(dataset: &[TimeSeries], config: &DetectorConfig) -> Vec<TimeSeries> {
    prune_detailed(dataset, config).kept
}

pub fn prune_detailed(dataset: &[TimeSeries], config: &DetectorConfig) -> PruneReport {
    let verdicts: Vec<Result<ShiftCategory, ChangepointError>> =
        dataset.par_iter().map(|s| classify(s, config)).collect();
    let mut report = PruneReport::default();
    for (series, verdict) in dataset.iter().zip(verdicts) {
        match verdict {
            Ok(ShiftCategory::H1Shift) => report.kept.push(series.to_pruned()),
            Ok(ShiftCategory::H0NoShift) => report.rejected.push(series.id().to_string()),
            Err(e) => {
                log::warn!("pruning skipped {}: {e}", series.id());
                report.failed.push((series.id().to_string(), e));
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l2_cost_examples() {
        assert_eq!(l2_cost(&[1.0, 1.0, 1.0, 1.0], 0, 4).unwrap(), 0.0);
        assert_eq!(l2_cost(&[0.0, 0.0, 1.0, 1.0], 0, 4).unwrap(), 1.0);
        assert_eq!(l2_cost(&[0.0, 0.0, 1.0, 1.0], 0, 2).unwrap(), 0.0);
        assert_eq!(
            l2_cost(&[0.0, 1.0], 1, 1),
            Err(ChangepointError::EmptySegment { start: 1, end: 1 })
        );
        assert_eq!(
            l2_cost(&[0.0, 1.0], 0, 3),
            Err(ChangepointError::OutOfBounds { end: 3, len: 2 })
        );
    }

    #[test]
    fn prefix_cost_matches_two_pass() {
        let v = [3.0, -1.0, 4.0, 1.0, -5.0, 9.0, 2.0, 6.0];
        let c = SegmentCost::new(&v);
        for s in 0..v.len() {
            for e in (s + 1)..=v.len() {
                assert!((c.cost(s, e) - l2_cost(&v, s, e).unwrap()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn total_objective_examples() {
        let step = [0.0, 0.0, 1.0, 1.0];
        let cfg = DetectorConfig::with_penalty(0.1);
        let two = ChangePointSet::new(vec![2, 4], 4, 2, 0.0).unwrap();
        let one = ChangePointSet::new(vec![4], 4, 2, 0.0).unwrap();
        assert!((total_objective(&step, &two, &cfg).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(total_objective(&step, &one, &cfg).unwrap(), 1.0);

        let flat = [2.5; 7];
        let sentinel = ChangePointSet::new(vec![7], 7, 2, 0.0).unwrap();
        for beta in [0.0, 1.0, 1e6] {
            let cfg = DetectorConfig::with_penalty(beta);
            assert_eq!(total_objective(&flat, &sentinel, &cfg).unwrap(), 0.0);
        }
    }

    #[test]
    fn changepoint_set_validation() {
        assert!(ChangePointSet::new(vec![], 4, 1, 0.0).is_err());
        assert!(ChangePointSet::new(vec![2, 3], 4, 1, 0.0).is_err());
        assert!(ChangePointSet::new(vec![3, 2, 4], 4, 1, 0.0).is_err());
        assert!(ChangePointSet::new(vec![1, 4], 4, 2, 0.0).is_err());
        assert!(ChangePointSet::new(vec![0, 4], 4, 1, 0.0).is_err());
        assert!(ChangePointSet::new(vec![2, 4], 4, 2, 0.0).is_ok());
    }

    #[test]
    fn binseg_step_and_flat() {
        let mut step = vec![0.0; 50];
        step.extend(std::iter::repeat_n(5.0, 50));
        let cps = binary_segmentation(&step, &DetectorConfig::with_penalty(1.0)).unwrap();
        assert_eq!(cps.boundaries(), &[50, 100]);

        let flat = [
            0.01, -0.02, 0.0, 0.015, -0.01, 0.005, 0.02, -0.015, 0.0, 0.01, -0.005, 0.012,
            -0.018, 0.003, 0.007, -0.012, 0.016, -0.004, 0.009, -0.011,
        ];
        let cps = binary_segmentation(&flat, &DetectorConfig::with_penalty(1.0)).unwrap();
        assert_eq!(cps.boundaries(), &[20]);

        let cps =
            binary_segmentation(&[0.0, 0.0, 0.0, 9.0, 9.0, 9.0], &DetectorConfig::with_known_k(1))
                .unwrap();
        assert_eq!(cps.boundaries(), &[3, 6]);
    }

    #[test]
    fn binseg_known_k_infeasible() {
        let err = binary_segmentation(&[1.0, 2.0, 3.0, 4.0], &DetectorConfig::with_known_k(2));
        assert!(matches!(err, Err(ChangepointError::SeriesTooShort { .. })));
    }

    #[test]
    fn binseg_rejects_empty() {
        assert!(matches!(
            binary_segmentation(&[], &DetectorConfig::default()),
            Err(ChangepointError::SeriesTooShort { .. })
        ));
    }

    #[test]
    fn exact_examples() {
        let cfg = DetectorConfig::default();
        assert_eq!(
            exact_segmentation(&[0.0, 0.0, 9.0, 9.0], 1, &cfg)
                .unwrap()
                .boundaries(),
            &[2, 4]
        );
        assert_eq!(
            exact_segmentation(&[4.0, 1.0, 7.0], 0, &cfg)
                .unwrap()
                .boundaries(),
            &[3]
        );
        assert!(matches!(
            exact_segmentation(&[1.0, 2.0, 3.0], 1, &cfg),
            Err(ChangepointError::InfeasibleK { .. })
        ));
    }

    #[test]
    fn auto_penalty_ignores_level() {
        let a = [0.0, 1.0, 0.0, 1.0];
        let b = [10.0, 11.0, 10.0, 11.0];
        assert_eq!(auto_penalty(&a, 3.0), auto_penalty(&b, 3.0));
        // sigma^2 = 0.5 * 1 = 0.5
        assert!((auto_penalty(&a, 3.0) - 1.5 * 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(DetectorConfig::with_penalty(-1.0).validate().is_err());
        assert!(DetectorConfig {
            min_segment_size: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(DetectorConfig::default().validate().is_ok());
    }
}
