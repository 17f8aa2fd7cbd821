//! Post-fit analytics: cumulative-effect trajectories and their slopes,
//! per-profile RMTL predictions, and external validation metrics.

use serde::Serialize;

use crate::data::{CompetingRisksDataset, EventCode, PatientProfile, SubjectRecord};
use crate::error::{Error, Result};
use crate::estimator::FittedModel;
use crate::nonparam::censoring_km;
use crate::stacking::{expand_design, horizon_weights, StackingOptions};

/// z-multiplier for 95% Wald intervals.
pub const Z_95: f64 = 1.96;

/// Whether horizons outside the fitted grid are accepted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum RangePolicy {
    #[default]
    Strict,
    Extrapolate,
}

fn check_range(fitted: &FittedModel, l: f64, policy: RangePolicy) -> Result<()> {
    let (lo, hi) = (fitted.grid.min(), fitted.grid.max());
    let eps = 1e-12 * hi.abs().max(1.0);
    if !l.is_finite() {
        return Err(Error::InvalidInput(format!("horizon {l} is not finite")));
    }
    if policy == RangePolicy::Strict && (l < lo - eps || l > hi + eps) {
        return Err(Error::InvalidInput(format!("horizon {l} lies outside the fitted range [{lo}, {hi}]")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectPoint {
    pub l: f64,
    pub value: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    /// `d beta_k(l) / dl`, the real-time effect.
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectTrajectory {
    pub covariate: String,
    pub points: Vec<EffectPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RealTimeEffect {
    pub slope: f64,
    pub magnitude: f64,
}

fn column_of(fitted: &FittedModel, covariate: &str) -> Result<usize> {
    fitted
        .column_index(covariate)
        .ok_or_else(|| Error::InvalidInput(format!("unknown covariate {covariate:?}")))
}

/// `beta_k(l) = sum_m beta_km l^m` with delta-method SE and 95% interval.
pub fn evaluate_effect(fitted: &FittedModel, covariate: &str, l: f64, policy: RangePolicy) -> Result<EffectPoint> {
    let column = column_of(fitted, covariate)?;
    check_range(fitted, l, policy)?;
    let terms = fitted.basis.column_terms(column);
    let basis_at = |m: usize| l.powi(m as i32);
    let value: f64 = terms.iter().map(|&(i, m)| fitted.coefficients[i] * basis_at(m)).sum();
    let slope: f64 = terms
        .iter()
        .filter(|&&(_, m)| m > 0)
        .map(|&(i, m)| m as f64 * fitted.coefficients[i] * l.powi(m as i32 - 1))
        .sum();
    let mut var = 0.0;
    for &(i, mi) in &terms {
        for &(j, mj) in &terms {
            var += basis_at(mi) * fitted.covariance[(i, j)] * basis_at(mj);
        }
    }
    let se = var.max(0.0).sqrt();
    Ok(EffectPoint { l, value, se, ci_lower: value - Z_95 * se, ci_upper: value + Z_95 * se, slope })
}

/// Slope of the cumulative effect at `l` and its absolute value.
pub fn real_time_effect(fitted: &FittedModel, covariate: &str, l: f64, policy: RangePolicy) -> Result<RealTimeEffect> {
    let slope = evaluate_effect(fitted, covariate, l, policy)?.slope;
    Ok(RealTimeEffect { slope, magnitude: slope.abs() })
}

pub fn effect_trajectory(
    fitted: &FittedModel,
    covariate: &str,
    horizons: &[f64],
    policy: RangePolicy,
) -> Result<EffectTrajectory> {
    let points = horizons
        .iter()
        .map(|&l| evaluate_effect(fitted, covariate, l, policy))
        .collect::<Result<_>>()?;
    Ok(EffectTrajectory { covariate: covariate.to_string(), points })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prediction {
    pub l: f64,
    pub rmtl: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

/// Prediction for an already encoded design vector `z` (length `p`).
pub fn predict_encoded(fitted: &FittedModel, z: &[f64], l: f64, policy: RangePolicy) -> Result<Prediction> {
    if z.len() != fitted.schema.width() {
        return Err(Error::InvalidInput("design vector length does not match the model schema".into()));
    }
    check_range(fitted, l, policy)?;
    let x = expand_design(z, l, &fitted.basis);
    let eta: f64 = x.iter().zip(&fitted.coefficients).map(|(a, b)| a * b).sum();
    let q = x.len();
    let mut var_eta = 0.0;
    for i in 0..q {
        if x[i] == 0.0 {
            continue;
        }
        for j in 0..q {
            var_eta += x[i] * fitted.covariance[(i, j)] * x[j];
        }
    }
    let rmtl = fitted.link.inverse(eta);
    let se = fitted.link.derivative(eta) * var_eta.max(0.0).sqrt();
    Ok(Prediction { l, rmtl, se, ci_lower: rmtl - Z_95 * se, ci_upper: rmtl + Z_95 * se })
}

/// Predicted mean life lost to the cause of interest over `[0, l]`.
pub fn predict_rmtl(fitted: &FittedModel, profile: &PatientProfile, l: f64, policy: RangePolicy) -> Result<Prediction> {
    let z = fitted.schema.encode_profile(profile).map_err(|e| Error::InvalidInput(e.to_string()))?;
    predict_encoded(fitted, &z, l, policy)
}

pub fn predict_trajectory(
    fitted: &FittedModel,
    profile: &PatientProfile,
    horizons: &[f64],
    policy: RangePolicy,
) -> Result<Vec<Prediction>> {
    let z = fitted.schema.encode_profile(profile).map_err(|e| Error::InvalidInput(e.to_string()))?;
    horizons.iter().map(|&l| predict_encoded(fitted, &z, l, policy)).collect()
}

/// Least-squares projection onto non-decreasing sequences (pool adjacent
/// violators). Optional post-processing for predicted trajectories.
pub fn isotonic_increasing(values: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (b, nb) = blocks[blocks.len() - 1];
            let (a, na) = blocks[blocks.len() - 2];
            if a <= b {
                break;
            }
            blocks.truncate(blocks.len() - 2);
            blocks.push(((a * na as f64 + b * nb as f64) / (na + nb) as f64, na + nb));
        }
    }
    blocks.into_iter().flat_map(|(v, n)| std::iter::repeat_n(v, n)).collect()
}

fn check_schema(fitted: &FittedModel, validation: &CompetingRisksDataset) -> Result<()> {
    if validation.schema() != &fitted.schema {
        return Err(Error::Schema("validation data does not share the model's covariate schema".into()));
    }
    Ok(())
}

fn predictions_at(fitted: &FittedModel, records: &[SubjectRecord], l: f64) -> Result<Vec<f64>> {
    records
        .iter()
        .map(|r| predict_encoded(fitted, &r.covariates, l, RangePolicy::Extrapolate).map(|p| p.rmtl))
        .collect()
}

/// IPCW-weighted truncated concordance at horizon `l` for arbitrary risk
/// scores (larger score = more life lost predicted).
///
/// A pair `(i, j)` is comparable when `i` has the event of interest at
/// `T_i < min(T_j, l)`; it is weighted by `1 / G(T_i-)^2` and scores ties as ½.
pub fn c_index_scores(records: &[SubjectRecord], scores: &[f64], l: f64) -> Result<f64> {
    if records.len() != scores.len() {
        return Err(Error::InvalidInput("one score per record is required".into()));
    }
    let g = censoring_km(&records.iter().map(|r| (r.time, r.status == EventCode::Censored)).collect::<Vec<_>>())?;
    let (mut num, mut den) = (0.0, 0.0);
    for (i, ri) in records.iter().enumerate() {
        if ri.status != EventCode::Cause1 || ri.time >= l {
            continue;
        }
        let gi = g.evaluate_minus(ri.time);
        if gi <= 0.0 {
            continue;
        }
        let w = 1.0 / (gi * gi);
        for (j, rj) in records.iter().enumerate() {
            if j == i || rj.time <= ri.time {
                continue;
            }
            den += w;
            if scores[i] > scores[j] {
                num += w;
            } else if scores[i] == scores[j] {
                num += 0.5 * w;
            }
        }
    }
    if den == 0.0 {
        return Err(Error::InvalidInput(format!("no comparable pairs at horizon {l}")));
    }
    Ok(num / den)
}

pub fn c_index(fitted: &FittedModel, validation: &CompetingRisksDataset, l: f64) -> Result<f64> {
    check_schema(fitted, validation)?;
    let scores = predictions_at(fitted, validation.records(), l)?;
    c_index_scores(validation.records(), &scores, l)
}

/// IPCW-weighted mean absolute error of predicted against observed restricted
/// life lost at horizon `l`, using the stacking weights at that horizon.
pub fn prediction_error_scores(records: &[SubjectRecord], predictions: &[f64], l: f64) -> Result<f64> {
    if records.len() != predictions.len() {
        return Err(Error::InvalidInput("one prediction per record is required".into()));
    }
    let weights = horizon_weights(records, l, StackingOptions::default())?;
    let (mut num, mut den) = (0.0, 0.0);
    for ((restricted, w), pred) in weights.iter().zip(predictions) {
        num += w * (restricted.life_lost - pred).abs();
        den += w;
    }
    if den == 0.0 {
        return Err(Error::InvalidInput(format!("all IPCW weights are zero at horizon {l}")));
    }
    Ok(num / den)
}

pub fn prediction_error(fitted: &FittedModel, validation: &CompetingRisksDataset, l: f64) -> Result<f64> {
    check_schema(fitted, validation)?;
    let preds = predictions_at(fitted, validation.records(), l)?;
    prediction_error_scores(validation.records(), &preds, l)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValidationPoint {
    pub l: f64,
    pub c_index: f64,
    pub prediction_error: f64,
}

pub fn validate(fitted: &FittedModel, validation: &CompetingRisksDataset, horizons: &[f64]) -> Result<Vec<ValidationPoint>> {
    horizons
        .iter()
        .map(|&l| {
            Ok(ValidationPoint {
                l,
                c_index: c_index(fitted, validation, l)?,
                prediction_error: prediction_error(fitted, validation, l)?,
            })
        })
        .collect()
}
