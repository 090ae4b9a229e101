//! Time-axis augmentations: time warping, window warping, window slicing.
//!
//! All three transforms work on sample indices `0..n` and keep the parent's
//! timestamp grid. Every value they produce is a convex combination of two
//! neighbouring input values, so outputs never leave the input range.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::changepoint::{self, DetectorConfig, ShiftCategory};
use crate::series::{AugmentMethod, Provenance, SeriesError, Stage, TimeSeries};

/// Lower bound applied to spline speeds so the warp stays invertible.
pub const MIN_SPEED: f64 = 0.1;

const METHODS: [AugmentMethod; 3] = [
    AugmentMethod::TimeWarp,
    AugmentMethod::WindowWarp,
    AugmentMethod::WindowSlice,
];

#[derive(Debug, Error, PartialEq)]
pub enum AugmentError {
    #[error("series of length {len} too short for {what}, need at least {needed}")]
    SeriesTooShort {
        what: &'static str,
        len: usize,
        needed: usize,
    },
    #[error("invalid augment config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Series(#[from] SeriesError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub knot_count: usize,
    pub knot_mu: f64,
    pub knot_sigma: f64,
    pub window_warp_fraction: f64,
    pub warp_scales: Vec<f64>,
    pub slice_fraction: f64,
    /// Augmented outputs per input series.
    pub factor: usize,
    pub verify_shift: bool,
    pub max_retries: usize,
    pub master_seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            knot_count: 3,
            knot_mu: 1.0,
            knot_sigma: 0.2,
            window_warp_fraction: 0.10,
            warp_scales: vec![0.5, 2.0],
            slice_fraction: 0.90,
            factor: 30,
            verify_shift: true,
            max_retries: 10,
            master_seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), AugmentError> {
        let bad = |m: &str| Err(AugmentError::InvalidConfig(m.to_string()));
        if self.knot_count == 0 {
            return bad("knot_count must be positive");
        }
        if !self.knot_mu.is_finite() || !(self.knot_sigma >= 0.0 && self.knot_sigma.is_finite()) {
            return bad("knot_mu must be finite and knot_sigma finite and >= 0");
        }
        if !(self.window_warp_fraction > 0.0 && self.window_warp_fraction < 1.0) {
            return bad("window_warp_fraction must lie in (0, 1)");
        }
        if self.warp_scales.is_empty()
            || self.warp_scales.iter().any(|s| !(*s > 0.0 && s.is_finite()))
        {
            return bad("warp_scales must be a non-empty set of positive reals");
        }
        if !(self.slice_fraction > 0.0 && self.slice_fraction < 1.0) {
            return bad("slice_fraction must lie in (0, 1)");
        }
        if self.factor == 0 || self.factor % METHODS.len() != 0 {
            return bad("factor must be a positive multiple of 3 (round-robin over three methods)");
        }
        if self.max_retries == 0 {
            return bad("max_retries must be positive");
        }
        Ok(())
    }
}

/// For each output index, the fractional source index it reads from.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpPath {
    mapping: Vec<f64>,
}

impl WarpPath {
    pub fn mapping(&self) -> &[f64] {
        &self.mapping
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }
}

/// Natural cubic spline through `(xs[i], ys[i])`, `xs` strictly increasing.
#[derive(Debug, Clone)]
pub struct NaturalSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    second: Vec<f64>,
}

impl NaturalSpline {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        assert_eq!(xs.len(), ys.len());
        assert!(xs.len() >= 2, "spline needs at least two knots");
        let m = xs.len();
        let mut second = vec![0.0; m];
        if m > 2 {
            // Thomas algorithm on the interior equations; M_0 = M_{m-1} = 0.
            let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
            let k = m - 2;
            let mut diag = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 0..k {
                diag[i] = 2.0 * (h[i] + h[i + 1]);
                rhs[i] = 6.0 * ((ys[i + 2] - ys[i + 1]) / h[i + 1] - (ys[i + 1] - ys[i]) / h[i]);
            }
            for i in 1..k {
                let w = h[i] / diag[i - 1];
                diag[i] -= w * h[i];
                rhs[i] -= w * rhs[i - 1];
            }
            second[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                second[i + 1] = (rhs[i] - h[i + 1] * second[i + 2]) / diag[i];
            }
        }
        Self { xs, ys, second }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let last = self.xs.len() - 2;
        let i = self.xs[1..].partition_point(|&x| x < t).min(last);
        let (x0, x1) = (self.xs[i], self.xs[i + 1]);
        let h = x1 - x0;
        let (a, b) = (x1 - t, t - x0);
        let (m0, m1) = (self.second[i], self.second[i + 1]);
        m0 * a.powi(3) / (6.0 * h)
            + m1 * b.powi(3) / (6.0 * h)
            + (self.ys[i] / h - m0 * h / 6.0) * a
            + (self.ys[i + 1] / h - m1 * h / 6.0) * b
    }
}

fn require_len(what: &'static str, len: usize, needed: usize) -> Result<(), AugmentError> {
    if len < needed {
        Err(AugmentError::SeriesTooShort { what, len, needed })
    } else {
        Ok(())
    }
}

/// Builds a smooth monotone warp of `0..n` onto itself.
///
/// `knot_count` speeds are drawn from `Normal(knot_mu, knot_sigma)` and
/// placed at evenly spaced interior positions, with speed 1 pinned at both
/// ends. The natural cubic spline through them is sampled at every index,
/// clamped to [`MIN_SPEED`], cumulatively summed and rescaled so the path
/// starts at 0 and ends at `n - 1`.
pub fn gen_warp_path<R: Rng + ?Sized>(
    n: usize,
    config: &AugmentConfig,
    rng: &mut R,
) -> Result<WarpPath, AugmentError> {
    require_len("time warp", n, 4)?;
    let normal = Normal::new(config.knot_mu, config.knot_sigma)
        .map_err(|e| AugmentError::InvalidConfig(e.to_string()))?;
    let span = (n - 1) as f64;
    let k = config.knot_count;
    let mut xs = Vec::with_capacity(k + 2);
    let mut ys = Vec::with_capacity(k + 2);
    xs.push(0.0);
    ys.push(1.0);
    for j in 1..=k {
        xs.push(span * j as f64 / (k + 1) as f64);
        ys.push(normal.sample(rng).max(MIN_SPEED));
    }
    xs.push(span);
    ys.push(1.0);
    let spline = NaturalSpline::new(xs, ys);

    let mut cumulative = Vec::with_capacity(n);
    let mut acc = 0.0;
    for i in 0..n {
        acc += spline.eval(i as f64).max(MIN_SPEED);
        cumulative.push(acc);
    }
    let (first, last) = (cumulative[0], cumulative[n - 1]);
    let scale = span / (last - first);
    let mut mapping: Vec<f64> = cumulative.iter().map(|c| (c - first) * scale).collect();
    mapping[0] = 0.0;
    mapping[n - 1] = span;
    Ok(WarpPath { mapping })
}

/// Linear interpolation of `values` at fractional index `pos`, clamped to
/// the two neighbours so rounding can never leave their range.
pub fn interpolate_at(values: &[f64], pos: f64) -> f64 {
    let n = values.len();
    if n == 1 {
        return values[0];
    }
    let pos = pos.clamp(0.0, (n - 1) as f64);
    let i = (pos.floor() as usize).min(n - 2);
    let frac = pos - i as f64;
    let (a, b) = (values[i], values[i + 1]);
    (a + frac * (b - a)).clamp(a.min(b), a.max(b))
}

/// Linearly resamples `values` to `len` evenly spaced points, endpoints kept.
pub fn resample(values: &[f64], len: usize) -> Vec<f64> {
    match (values.len(), len) {
        (_, 0) => Vec::new(),
        (0, _) => Vec::new(),
        (_, 1) => vec![values[0]],
        (src, _) => {
            let step = (src - 1) as f64 / (len - 1) as f64;
            (0..len)
                .map(|i| interpolate_at(values, i as f64 * step))
                .collect()
        }
    }
}

pub fn time_warp_values<R: Rng + ?Sized>(
    values: &[f64],
    config: &AugmentConfig,
    rng: &mut R,
) -> Result<Vec<f64>, AugmentError> {
    let path = gen_warp_path(values.len(), config, rng)?;
    Ok(path
        .mapping()
        .iter()
        .map(|&p| interpolate_at(values, p))
        .collect())
}

/// Stretches `values[start..start + window]` by `scale`, then resamples the
/// whole sequence back to its original length.
pub fn window_warp_at(values: &[f64], start: usize, window: usize, scale: f64) -> Vec<f64> {
    let n = values.len();
    let warped_len = ((scale * window as f64).round() as usize).max(1);
    let warped = resample(&values[start..start + window], warped_len);
    let mut joined = Vec::with_capacity(n - window + warped_len);
    joined.extend_from_slice(&values[..start]);
    joined.extend(warped);
    joined.extend_from_slice(&values[start + window..]);
    resample(&joined, n)
}

pub fn window_warp_values<R: Rng + ?Sized>(
    values: &[f64],
    config: &AugmentConfig,
    rng: &mut R,
) -> Result<Vec<f64>, AugmentError> {
    let n = values.len();
    require_len("window warp", n, 10)?;
    let window = ((config.window_warp_fraction * n as f64).round() as usize).clamp(1, n);
    let start = rng.random_range(0..=n - window);
    let scale = *config
        .warp_scales
        .choose(rng)
        .ok_or_else(|| AugmentError::InvalidConfig("warp_scales is empty".into()))?;
    Ok(window_warp_at(values, start, window, scale))
}

/// Resamples the contiguous slice `values[start..start + len]` to full length.
pub fn window_slice_at(values: &[f64], start: usize, len: usize) -> Vec<f64> {
    resample(&values[start..start + len], values.len())
}

pub fn window_slice_values<R: Rng + ?Sized>(
    values: &[f64],
    config: &AugmentConfig,
    rng: &mut R,
) -> Result<Vec<f64>, AugmentError> {
    let n = values.len();
    require_len("window slice", n, 10)?;
    let len = ((config.slice_fraction * n as f64).round() as usize).clamp(2, n);
    let start = rng.random_range(0..=n - len);
    Ok(window_slice_at(values, start, len))
}

/// Applies one transform with a fresh generator seeded from `seed`.
pub fn transform_values(
    method: AugmentMethod,
    values: &[f64],
    config: &AugmentConfig,
    seed: u64,
) -> Result<Vec<f64>, AugmentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match method {
        AugmentMethod::TimeWarp => time_warp_values(values, config, &mut rng),
        AugmentMethod::WindowWarp => window_warp_values(values, config, &mut rng),
        AugmentMethod::WindowSlice => window_slice_values(values, config, &mut rng),
    }
}

fn method_tag(method: AugmentMethod) -> &'static str {
    match method {
        AugmentMethod::TimeWarp => "tw",
        AugmentMethod::WindowWarp => "ww",
        AugmentMethod::WindowSlice => "ws",
    }
}

/// Builds an augmented child of `series` with the given id.
pub fn augment_one(
    series: &TimeSeries,
    method: AugmentMethod,
    config: &AugmentConfig,
    seed: u64,
    id: impl Into<String>,
    shift_verified: bool,
) -> Result<TimeSeries, AugmentError> {
    let values = transform_values(method, series.values(), config, seed)?;
    let provenance = Provenance {
        parent_id: series.parent_id().to_string(),
        method,
        seed,
        shift_verified,
    };
    Ok(series.derive_augmented(id, values, provenance)?)
}

fn default_id(series: &TimeSeries, method: AugmentMethod, seed: u64) -> String {
    format!("{}-{}{:016x}", series.id(), method_tag(method), seed)
}

pub fn time_warp(series: &TimeSeries, config: &AugmentConfig, seed: u64) -> Result<TimeSeries, AugmentError> {
    let id = default_id(series, AugmentMethod::TimeWarp, seed);
    augment_one(series, AugmentMethod::TimeWarp, config, seed, id, false)
}

pub fn window_warp(series: &TimeSeries, config: &AugmentConfig, seed: u64) -> Result<TimeSeries, AugmentError> {
    let id = default_id(series, AugmentMethod::WindowWarp, seed);
    augment_one(series, AugmentMethod::WindowWarp, config, seed, id, false)
}

pub fn window_slice(series: &TimeSeries, config: &AugmentConfig, seed: u64) -> Result<TimeSeries, AugmentError> {
    let id = default_id(series, AugmentMethod::WindowSlice, seed);
    augment_one(series, AugmentMethod::WindowSlice, config, seed, id, false)
}

/// Seed for one output item, independent of iteration order.
pub fn derive_seed(master_seed: u64, series_id: &str, ordinal: usize, attempt: usize) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update((series_id.len() as u64).to_le_bytes());
    hasher.update(series_id.as_bytes());
    hasher.update((ordinal as u64).to_le_bytes());
    hasher.update((attempt as u64).to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Debug, Clone, Default)]
pub struct AugmentOutcome {
    pub series: Vec<TimeSeries>,
    /// Outputs emitted with `shift_verified == false` while verification was on.
    pub unverified: usize,
    pub diagnostics: Vec<String>,
}

impl AugmentOutcome {
    pub fn unverified_fraction(&self) -> f64 {
        if self.series.is_empty() {
            0.0
        } else {
            self.unverified as f64 / self.series.len() as f64
        }
    }
}

fn augment_item(
    parent: &TimeSeries,
    ordinal: usize,
    config: &AugmentConfig,
    detector: &DetectorConfig,
) -> Result<TimeSeries, AugmentError> {
    let method = METHODS[ordinal % METHODS.len()];
    let id = format!("{}-aug{ordinal}", parent.id());
    if !config.verify_shift {
        let seed = derive_seed(config.master_seed, parent.id(), ordinal, 0);
        return augment_one(parent, method, config, seed, id, false);
    }
    let mut last_seed = 0;
    for attempt in 0..=config.max_retries {
        let seed = derive_seed(config.master_seed, parent.id(), ordinal, attempt);
        last_seed = seed;
        let candidate = augment_one(parent, method, config, seed, id.clone(), true)?;
        if let Ok(ShiftCategory::H1Shift) = changepoint::classify(&candidate, detector) {
            return Ok(candidate);
        }
    }
    augment_one(
        parent,
        AugmentMethod::WindowSlice,
        config,
        last_seed,
        id,
        false,
    )
}

/// Emits exactly `factor` augmentations per pruned input.
///
/// Methods are allocated round-robin (ordinal `k` uses method `k % 3`). Each
/// output draws from its own generator keyed by `(master_seed, parent id,
/// ordinal, attempt)`, so the result does not depend on scheduling. With
/// `verify_shift` on, a candidate that re-classifies as H0 is redrawn up to
/// `max_retries` times; after that the window-slice variant of the final
/// attempt is emitted and flagged `shift_verified = false`. Parents are not
/// part of the output.
pub fn augment_set(
    pruned: &[TimeSeries],
    config: &AugmentConfig,
    detector: &DetectorConfig,
) -> Result<AugmentOutcome, AugmentError> {
    config.validate()?;
    let mut outcome = AugmentOutcome::default();
    let mut eligible = Vec::with_capacity(pruned.len());
    for series in pruned {
        if series.stage() != Stage::Pruned {
            outcome.diagnostics.push(format!(
                "{}: skipped, stage {:?} is not Pruned",
                series.id(),
                series.stage()
            ));
        } else if series.len() < 10 {
            outcome.diagnostics.push(format!(
                "{}: skipped, length {} below 10",
                series.id(),
                series.len()
            ));
        } else {
            eligible.push(series);
        }
    }

    let items: Vec<(&TimeSeries, usize)> = eligible
        .iter()
        .flat_map(|s| (0..config.factor).map(move |k| (*s, k)))
        .collect();
    let produced: Vec<Result<TimeSeries, AugmentError>> = items
        .par_iter()
        .map(|&(parent, k)| augment_item(parent, k, config, detector))
        .collect();
    for (result, (parent, k)) in produced.into_iter().zip(&items) {
        match result {
            Ok(series) => {
                if config.verify_shift
                    && !series.provenance().is_some_and(|p| p.shift_verified)
                {
                    outcome.unverified += 1;
                }
                outcome.series.push(series);
            }
            Err(e) => outcome
                .diagnostics
                .push(format!("{}-aug{k}: {e}", parent.id())),
        }
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::Source;
    use chrono::NaiveDate;

    fn series(values: Vec<f64>) -> TimeSeries {
        let start = NaiveDate::from_ymd_opt(2000, 1, 1).unwrap();
        let ts = (0..values.len())
            .map(|i| start + chrono::Days::new(i as u64))
            .collect();
        TimeSeries::original("p", Source::Synthetic, ts, values, "")
            .unwrap()
            .to_pruned()
    }

    #[test]
    fn spline_reproduces_knots_and_lines() {
        let s = NaturalSpline::new(vec![0.0, 1.0, 3.0, 4.0], vec![1.0, 2.0, 0.5, 1.0]);
        for (x, y) in [(0.0, 1.0), (1.0, 2.0), (3.0, 0.5), (4.0, 1.0)] {
            assert!((s.eval(x) - y).abs() < 1e-12);
        }
        // a straight line is its own natural spline
        let line = NaturalSpline::new(vec![0.0, 2.0, 5.0], vec![1.0, 5.0, 11.0]);
        assert!((line.eval(3.5) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn zero_sigma_gives_identity_path() {
        let cfg = AugmentConfig {
            knot_sigma: 0.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let path = gen_warp_path(37, &cfg, &mut rng).unwrap();
        for (i, p) in path.mapping().iter().enumerate() {
            assert!((p - i as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn warp_path_endpoints_and_monotone() {
        let cfg = AugmentConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let p = gen_warp_path(100, &cfg, &mut rng).unwrap();
        assert_eq!(p.mapping()[0], 0.0);
        assert_eq!(p.mapping()[99], 99.0);
        assert!(p.mapping().windows(2).all(|w| w[0] < w[1]));
        assert!(gen_warp_path(3, &cfg, &mut rng).is_err());
    }

    #[test]
    fn warp_path_deterministic() {
        let cfg = AugmentConfig::default();
        let a = gen_warp_path(50, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = gen_warp_path(50, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_series_fixed_by_all_transforms() {
        let s = series(vec![4.25; 40]);
        let cfg = AugmentConfig::default();
        for out in [
            time_warp(&s, &cfg, 3).unwrap(),
            window_warp(&s, &cfg, 3).unwrap(),
            window_slice(&s, &cfg, 3).unwrap(),
        ] {
            assert_eq!(out.values(), s.values());
            assert_eq!(out.timestamps(), s.timestamps());
        }
    }

    #[test]
    fn ramp_time_warp_stays_monotone() {
        let ramp: Vec<f64> = (0..100).map(f64::from).collect();
        let s = series(ramp);
        for seed in 0..20 {
            let out = time_warp(&s, &AugmentConfig::default(), seed).unwrap();
            let v = out.values();
            assert!(v[0] >= 0.0 && v[99] <= 99.0);
            assert!(v.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn slice_of_ramp_is_ramp() {
        let ramp: Vec<f64> = (0..100).map(f64::from).collect();
        let out = window_slice_at(&ramp, 5, 90);
        assert_eq!(out.len(), 100);
        for (i, v) in out.iter().enumerate() {
            let expected = 5.0 + 89.0 * i as f64 / 99.0;
            assert!((v - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn short_series_rejected() {
        let s = series(vec![1.0; 9]);
        let cfg = AugmentConfig::default();
        assert!(matches!(
            window_warp(&s, &cfg, 0),
            Err(AugmentError::SeriesTooShort { needed: 10, .. })
        ));
        assert!(window_slice(&s, &cfg, 0).is_err());
        assert!(time_warp(&s, &cfg, 0).is_ok());
    }

    #[test]
    fn config_validation() {
        let ok = AugmentConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            AugmentConfig { factor: 31, ..ok.clone() },
            AugmentConfig { warp_scales: vec![], ..ok.clone() },
            AugmentConfig { slice_fraction: 1.0, ..ok.clone() },
            AugmentConfig { knot_sigma: -0.1, ..ok.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn seeds_differ_per_item() {
        let a = derive_seed(1, "x", 0, 0);
        assert_ne!(a, derive_seed(1, "x", 1, 0));
        assert_ne!(a, derive_seed(1, "x", 0, 1));
        assert_ne!(a, derive_seed(2, "x", 0, 0));
        assert_eq!(a, derive_seed(1, "x", 0, 0));
    }

    #[test]
    fn augment_set_counts_and_ids() {
        let mut v = vec![0.0; 30];
        v.extend(vec![6.0; 30]);
        let v: Vec<f64> = v
            .iter()
            .enumerate()
            .map(|(i, x)| x + 0.3 * ((i * 7919) % 13) as f64 / 13.0)
            .collect();
        let parent = series(v);
        let cfg = AugmentConfig {
            factor: 6,
            master_seed: 11,
            ..Default::default()
        };
        let out = augment_set(&[parent], &cfg, &DetectorConfig::default()).unwrap();
        assert_eq!(out.series.len(), 6);
        assert_eq!(out.series[4].id(), "p-aug4");
        let methods: Vec<_> = out
            .series
            .iter()
            .map(|s| s.provenance().unwrap().method)
            .collect();
        assert_eq!(methods[0], AugmentMethod::TimeWarp);
        assert_eq!(methods[1], AugmentMethod::WindowWarp);
        assert_eq!(methods[5], AugmentMethod::WindowSlice);
        assert_eq!(out.unverified, 0);
        assert!(augment_set(&[], &cfg, &DetectorConfig::default())
            .unwrap()
            .series
            .is_empty());
    }
}
