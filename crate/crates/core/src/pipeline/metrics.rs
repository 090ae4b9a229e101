//! Forecast evaluation metrics.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {0} predictions vs {1} actuals")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("quantile levels differ between forecasts")]
    LevelMismatch,
    #[error("invalid quantile forecast: {0}")]
    InvalidForecast(String),
}

/// Mean of squared differences.
pub fn mse(pred: &[f64], actual: &[f64]) -> Result<f64, MetricError> {
    if pred.len() != actual.len() {
        return Err(MetricError::LengthMismatch(pred.len(), actual.len()));
    }
    if pred.is_empty() {
        return Err(MetricError::Empty);
    }
    let sum: f64 = pred.iter().zip(actual).map(|(p, a)| (p - a) * (p - a)).sum();
    Ok(sum / pred.len() as f64)
}

/// Population variance of per-sample MSEs.
pub fn mse_variance(per_sample: &[f64]) -> Result<f64, MetricError> {
    if per_sample.len() < 2 {
        return Err(MetricError::TooFewSamples(per_sample.len()));
    }
    let n = per_sample.len() as f64;
    let mean = per_sample.iter().sum::<f64>() / n;
    Ok(per_sample.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n)
}

/// Quantile forecast over a horizon: `values[step][level]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileForecast {
    levels: Vec<f64>,
    values: Vec<Vec<f64>>,
    point: Vec<f64>,
}

impl QuantileForecast {
    pub fn new(levels: Vec<f64>, values: Vec<Vec<f64>>, point: Vec<f64>) -> Result<Self, MetricError> {
        let bad = |m: &str| Err(MetricError::InvalidForecast(m.into()));
        if levels.is_empty() {
            return bad("no quantile levels");
        }
        if levels.iter().any(|&q| !(q > 0.0 && q < 1.0)) {
            return bad("levels must lie in (0, 1)");
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return bad("levels must be strictly increasing");
        }
        if values.len() != point.len() {
            return bad("values and point forecasts differ in horizon");
        }
        for step in &values {
            if step.len() != levels.len() {
                return bad("one value per level is required at every step");
            }
            if step.iter().any(|v| v.is_nan()) {
                return bad("NaN quantile");
            }
            if step.windows(2).any(|w| w[0] > w[1]) {
                return bad("quantiles decrease across levels");
            }
        }
        Ok(Self { levels, values, point })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn point(&self) -> &[f64] {
        &self.point
    }

    pub fn horizon(&self) -> usize {
        self.point.len()
    }
}

/// Mean over levels of |observed coverage - level|, where coverage is the
/// share of (sample, step) pairs whose actual is at or below the forecast
/// quantile.
pub fn mae_coverage(forecasts: &[QuantileForecast], actuals: &[Vec<f64>]) -> Result<f64, MetricError> {
    if forecasts.len() != actuals.len() {
        return Err(MetricError::LengthMismatch(forecasts.len(), actuals.len()));
    }
    let first = forecasts.first().ok_or(MetricError::Empty)?;
    let levels = first.levels();
    if forecasts.iter().any(|f| f.levels() != levels) {
        return Err(MetricError::LevelMismatch);
    }
    let mut covered = vec![0usize; levels.len()];
    let mut total = 0usize;
    for (f, actual) in forecasts.iter().zip(actuals) {
        if f.horizon() != actual.len() {
            return Err(MetricError::LengthMismatch(f.horizon(), actual.len()));
        }
        for (step, &a) in f.values().iter().zip(actual) {
            for (c, &q) in covered.iter_mut().zip(step) {
                if a <= q {
                    *c += 1;
                }
            }
        }
        total += actual.len();
    }
    if total == 0 {
        return Err(MetricError::Empty);
    }
    let err: f64 = levels
        .iter()
        .zip(&covered)
        .map(|(q, &c)| (c as f64 / total as f64 - q).abs())
        .sum();
    Ok(err / levels.len() as f64)
}
