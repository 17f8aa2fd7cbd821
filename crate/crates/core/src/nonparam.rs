//! Nonparametric estimators: Kaplan-Meier for the censoring distribution,
//! Aalen-Johansen cumulative incidence, and group RMTL as the area under the CIF.

use serde::Serialize;

use crate::data::{Cause, EventCode, SubjectRecord};
use crate::error::{Error, Result};

/// Right-continuous step function with jumps at strictly increasing times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepFunction {
    pub jump_times: Vec<f64>,
    pub values: Vec<f64>,
    pub value_at_zero: f64,
}

impl StepFunction {
    pub fn constant(value: f64) -> Self {
        Self { jump_times: Vec::new(), values: Vec::new(), value_at_zero: value }
    }

    /// Value at the largest jump time `<= t`.
    pub fn evaluate(&self, t: f64) -> f64 {
        let k = self.jump_times.partition_point(|&s| s <= t);
        if k == 0 {
            self.value_at_zero
        } else {
            self.values[k - 1]
        }
    }

    /// Left limit: value at the largest jump time `< t`.
    pub fn evaluate_minus(&self, t: f64) -> f64 {
        let k = self.jump_times.partition_point(|&s| s < t);
        if k == 0 {
            self.value_at_zero
        } else {
            self.values[k - 1]
        }
    }

    /// Exact integral over `[0, upper]`.
    pub fn integrate(&self, upper: f64) -> f64 {
        let mut area = 0.0;
        let mut left = 0.0;
        let mut level = self.value_at_zero;
        for (&t, &v) in self.jump_times.iter().zip(&self.values) {
            if t >= upper {
                break;
            }
            area += level * (t - left);
            left = t;
            level = v;
        }
        area + level * (upper - left)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("step function serializes")
    }
}

fn sorted_by_time<T: Copy>(items: &[(f64, T)]) -> Vec<(f64, T)> {
    let mut v = items.to_vec();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    v
}

/// Kaplan-Meier estimate of `P(C > t)`.
///
/// `is_censoring_event = true` marks a censoring occurrence. At tied times the
/// other departures leave the risk set first, so a censoring at `t` is scored
/// against the subjects still under observation after `t`.
pub fn censoring_km(records: &[(f64, bool)]) -> Result<StepFunction> {
    if records.is_empty() {
        return Err(Error::InvalidInput("censoring_km needs at least one observation".into()));
    }
    let sorted = sorted_by_time(records);
    let mut at_risk = sorted.len();
    let mut g = 1.0;
    let mut jump_times = Vec::new();
    let mut values = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        let (mut censored, mut other) = (0usize, 0usize);
        while i < sorted.len() && sorted[i].0 == t {
            if sorted[i].1 {
                censored += 1;
            } else {
                other += 1;
            }
            i += 1;
        }
        if censored > 0 {
            let risk = at_risk - other;
            g *= 1.0 - censored as f64 / risk as f64;
            jump_times.push(t);
            values.push(g);
        }
        at_risk -= censored + other;
    }
    Ok(StepFunction { jump_times, values, value_at_zero: 1.0 })
}

/// All-cause Kaplan-Meier survival `S(t) = P(T > t)`.
pub fn overall_survival(records: &[SubjectRecord]) -> Result<StepFunction> {
    let pairs: Vec<(f64, bool)> = records.iter().map(|r| (r.time, r.status.is_event())).collect();
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no records".into()));
    }
    let sorted = sorted_by_time(&pairs);
    let mut at_risk = sorted.len();
    let mut s = 1.0;
    let mut jump_times = Vec::new();
    let mut values = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        let (mut events, mut total) = (0usize, 0usize);
        while i < sorted.len() && sorted[i].0 == t {
            events += sorted[i].1 as usize;
            total += 1;
            i += 1;
        }
        if events > 0 {
            s *= 1.0 - events as f64 / at_risk as f64;
            jump_times.push(t);
            values.push(s);
        }
        at_risk -= total;
    }
    Ok(StepFunction { jump_times, values, value_at_zero: 1.0 })
}

/// Aalen-Johansen cumulative incidence for one cause:
/// `F(t) = sum_{t_k <= t} S(t_k-) d_cause(t_k) / n(t_k)`.
pub fn aalen_johansen_cif(records: &[SubjectRecord], cause: Cause) -> Result<StepFunction> {
    if records.is_empty() {
        return Err(Error::InvalidInput("no records".into()));
    }
    let target = cause.event_code();
    let mut sorted: Vec<(f64, EventCode)> = records.iter().map(|r| (r.time, r.status)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut at_risk = sorted.len();
    let mut surv = 1.0;
    let mut cif = 0.0;
    let mut jump_times = Vec::new();
    let mut values = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        let (mut d_cause, mut d_all, mut total) = (0usize, 0usize, 0usize);
        while i < sorted.len() && sorted[i].0 == t {
            let s = sorted[i].1;
            d_cause += (s == target) as usize;
            d_all += s.is_event() as usize;
            total += 1;
            i += 1;
        }
        let n = at_risk as f64;
        if d_cause > 0 {
            cif += surv * d_cause as f64 / n;
            jump_times.push(t);
            values.push(cif);
        }
        if d_all > 0 {
            surv *= 1.0 - d_all as f64 / n;
        }
        at_risk -= total;
    }
    Ok(StepFunction { jump_times, values, value_at_zero: 0.0 })
}

/// Restricted mean time lost to `cause` over `[0, tau]`: the area under the
/// Aalen-Johansen CIF.
///
/// Horizons past the last observed time are refused unless the all-cause
/// survival has already dropped to zero there, in which case the CIF is
/// constant from that point on.
pub fn rmtl_group(records: &[SubjectRecord], cause: Cause, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::InvalidInput(format!("tau must be positive, got {tau}")));
    }
    let max_time = records.iter().map(|r| r.time).fold(f64::NEG_INFINITY, f64::max);
    if tau > max_time && overall_survival(records)?.evaluate(max_time) > 0.0 {
        return Err(Error::InvalidInput(format!(
            "tau = {tau} exceeds the last observed time {max_time}"
        )));
    }
    Ok(aalen_johansen_cif(records, cause)?.integrate(tau))
}
