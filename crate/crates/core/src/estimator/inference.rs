use std::io::Write;

use statrs::function::erf::erfc;

use super::{fit, FitOptions, FittedModel, Link};
use crate::data::CompetingRisksDataset;
use crate::error::Result;
use crate::stacking::{build_stacked, column_name, power_label, HorizonGrid, StackedDataset, Term, TimeBasis};

/// `P(|Z| >= |z|)` for a standard normal `Z`.
pub fn normal_two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaldRow {
    pub term: Term,
    pub variable: String,
    pub time_function: &'static str,
    pub coefficient: f64,
    pub se: f64,
    pub z: f64,
    pub p: f64,
    /// Set when the standard error is zero; `p` is then reported as 0.
    pub degenerate: bool,
}

pub fn wald_table(fitted: &FittedModel) -> Vec<WaldRow> {
    let se = fitted.standard_errors();
    fitted
        .terms()
        .into_iter()
        .enumerate()
        .map(|(i, term)| {
            let coefficient = fitted.coefficients[i];
            let degenerate = !(se[i] > 0.0);
            let (z, p) = if degenerate {
                (if coefficient == 0.0 { 0.0 } else { f64::INFINITY.copysign(coefficient) }, 0.0)
            } else {
                let z = coefficient / se[i];
                (z, normal_two_sided_p(z))
            };
            WaldRow {
                term,
                variable: column_name(&fitted.schema, term.column),
                time_function: power_label(term.power),
                coefficient,
                se: se[i],
                z,
                p,
                degenerate,
            }
        })
        .collect()
}

/// Coefficient table as CSV: variable, time function, coefficient, SE, Z, P.
pub fn write_wald_csv<W: Write>(rows: &[WaldRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["variable", "time_function", "coefficient", "se", "z_value", "p_value"])?;
    for r in rows {
        w.write_record([
            r.variable.clone(),
            r.time_function.to_string(),
            format!("{:.6}", r.coefficient),
            format!("{:.6}", r.se),
            format!("{:.4}", r.z),
            format!("{:.6}", r.p),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct StepwiseResult {
    pub model: FittedModel,
    /// Removed terms in removal order with the p-value that triggered each removal.
    pub removed: Vec<(Term, f64)>,
}

/// Copy of `stacked` keeping only the design columns active in `basis`,
/// which must be a subset of the stacked basis.
fn project(stacked: &StackedDataset, basis: &TimeBasis) -> StackedDataset {
    let keep: Vec<bool> = stacked
        .basis
        .active_terms()
        .iter()
        .map(|t| basis.mask(t.column)[t.power])
        .collect();
    let mut out = stacked.clone();
    out.basis = basis.clone();
    for row in &mut out.rows {
        row.design = row.design.iter().zip(&keep).filter(|(_, &k)| k).map(|(&v, _)| v).collect();
    }
    out
}

/// Backward elimination at term granularity: refit after dropping the single
/// term with the largest Wald p-value above `alpha` until none remain. The
/// intercept's constant is never dropped; ties go to the term latest in
/// design order.
pub fn backward_stepwise(
    dataset: &CompetingRisksDataset,
    grid: &HorizonGrid,
    full_basis: &TimeBasis,
    link: Link,
    alpha: f64,
    options: FitOptions,
) -> Result<StepwiseResult> {
    let stacked = build_stacked(dataset, grid, full_basis)?;
    let mut basis = full_basis.clone();
    let mut removed = Vec::new();
    loop {
        let model = fit(&project(&stacked, &basis), link, options)?;
        let mut worst: Option<&WaldRow> = None;
        let table = wald_table(&model);
        for row in &table {
            if row.term == (Term { column: 0, power: 0 }) || !(row.p > alpha) {
                continue;
            }
            if worst.is_none_or(|w| row.p >= w.p) {
                worst = Some(row);
            }
        }
        match worst {
            None => return Ok(StepwiseResult { model, removed }),
            Some(row) => {
                removed.push((row.term, row.p));
                basis = basis.without(row.term)?;
            }
        }
    }
}

/// Static-effect regression at `tau`: one horizon, constant basis.
pub fn fit_static(dataset: &CompetingRisksDataset, tau: f64, link: Link) -> Result<FittedModel> {
    let grid = HorizonGrid::new(vec![tau], tau)?;
    let basis = TimeBasis::constant_only(dataset.schema().width());
    fit(&build_stacked(dataset, &grid, &basis)?, link, FitOptions::default())
}
