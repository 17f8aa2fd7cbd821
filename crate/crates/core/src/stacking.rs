//! Stacked dataset construction.
//!
//! For every horizon `l_j` each subject's outcome is restricted to `[0, l_j]`,
//! a censoring Kaplan-Meier curve is refit on that restricted copy, complete
//! cases receive weight `1 / G_j(T(l_j)-)`, and the covariate row is expanded
//! through the `(1, l, l^2)` time basis. Rows come out subject-contiguous and
//! horizon-ascending, which the clustered variance relies on.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{CompetingRisksDataset, CovariateSchema, EventCode, SubjectRecord};
use crate::error::{Error, Result};
use crate::nonparam::censoring_km;

/// Number of basis functions per coefficient: `1, l, l^2`.
pub const BASIS_TERMS: usize = 3;

/// Default number of horizons when none is configured.
pub const DEFAULT_GRID_POINTS: usize = 20;

/// Strictly increasing positive horizons `l_1 < ... < l_J <= tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridDocument", into = "GridDocument")]
pub struct HorizonGrid {
    points: Vec<f64>,
    tau: f64,
}

#[derive(Serialize, Deserialize)]
struct GridDocument {
    points: Vec<f64>,
    tau: f64,
}

impl TryFrom<GridDocument> for HorizonGrid {
    type Error = Error;

    fn try_from(doc: GridDocument) -> Result<Self> {
        HorizonGrid::new(doc.points, doc.tau)
    }
}

impl From<HorizonGrid> for GridDocument {
    fn from(grid: HorizonGrid) -> Self {
        GridDocument { points: grid.points, tau: grid.tau }
    }
}

impl HorizonGrid {
    pub fn new(points: Vec<f64>, tau: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("horizon grid needs at least one point".into()));
        }
        if points.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidInput("horizons must be positive and finite".into()));
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("horizons must be strictly increasing".into()));
        }
        if points[points.len() - 1] > tau {
            return Err(Error::InvalidInput(format!("horizon exceeds tau = {tau}")));
        }
        Ok(Self { points, tau })
    }

    /// `count` equally spaced points from `lo` to `hi` inclusive, `tau = hi`.
    pub fn equally_spaced(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidInput("grid needs at least one point".into()));
        }
        if count == 1 {
            if lo != hi {
                return Err(Error::InvalidInput("a one-point grid needs l_min = l_max".into()));
            }
            return Self::new(vec![hi], hi);
        }
        if lo >= hi {
            return Err(Error::InvalidInput(format!("l_min ({lo}) must be below l_max ({hi})")));
        }
        let step = (hi - lo) / (count - 1) as f64;
        let mut points: Vec<f64> = (0..count).map(|j| lo + step * j as f64).collect();
        points[count - 1] = hi;
        Self::new(points, hi)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn min(&self) -> f64 {
        self.points[0]
    }

    pub fn max(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// One end of a grid: a fixed horizon or a data-driven percentile of the
/// cause-1 event times (10th for the lower end, 95th for the upper).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridBound {
    Auto,
    Value(f64),
}

impl std::str::FromStr for GridBound {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            Ok(GridBound::Auto)
        } else {
            s.parse::<f64>().map(GridBound::Value).map_err(|_| format!("expected a number or 'auto', got {s:?}"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    pub l_min: GridBound,
    pub l_max: GridBound,
    pub points: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { l_min: GridBound::Auto, l_max: GridBound::Auto, points: DEFAULT_GRID_POINTS }
    }
}

pub const AUTO_LOWER_PERCENTILE: f64 = 0.10;
pub const AUTO_UPPER_PERCENTILE: f64 = 0.95;

/// Linear-interpolation percentile (`x[h]` with `h = (n-1) p`) of unsorted data.
pub fn percentile(data: &[f64], p: f64) -> Option<f64> {
    if data.is_empty() || !(0.0..=1.0).contains(&p) {
        return None;
    }
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

/// Build a horizon grid for `dataset`, resolving automatic bounds from the
/// observed cause-1 event times.
pub fn build_time_grid(dataset: &CompetingRisksDataset, config: &GridConfig) -> Result<HorizonGrid> {
    let cause1 = dataset.cause1_times();
    let resolve = |bound: GridBound, p: f64| match bound {
        GridBound::Value(v) => Ok(v),
        GridBound::Auto => percentile(&cause1, p)
            .ok_or_else(|| Error::InvalidInput("automatic grid bounds need at least one cause-1 event".into())),
    };
    let hi = resolve(config.l_max, AUTO_UPPER_PERCENTILE)?;
    let lo = resolve(config.l_min, AUTO_LOWER_PERCENTILE)?;
    if hi > dataset.max_time() {
        return Err(Error::InvalidInput(format!(
            "l_max = {hi} exceeds the last observed time {}",
            dataset.max_time()
        )));
    }
    HorizonGrid::equally_spaced(lo, hi, config.points)
}

/// Per design column (intercept first) mask over the `(1, l, l^2)` terms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[bool; 3]>", into = "Vec<[bool; 3]>")]
pub struct TimeBasis {
    terms: Vec<[bool; BASIS_TERMS]>,
}

impl TryFrom<Vec<[bool; 3]>> for TimeBasis {
    type Error = Error;

    fn try_from(terms: Vec<[bool; 3]>) -> Result<Self> {
        TimeBasis::new(terms)
    }
}

impl From<TimeBasis> for Vec<[bool; 3]> {
    fn from(b: TimeBasis) -> Self {
        b.terms
    }
}

/// One active coefficient: design column (0 = intercept) and power of `l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Term {
    pub column: usize,
    pub power: usize,
}

impl TimeBasis {
    /// `terms[0]` is the intercept, whose constant term must be active.
    /// A covariate column may have no active term, meaning it has been
    /// screened out of the model.
    pub fn new(terms: Vec<[bool; BASIS_TERMS]>) -> Result<Self> {
        match terms.first() {
            None => Err(Error::InvalidInput("time basis needs an intercept column".into())),
            Some(t) if !t[0] => Err(Error::InvalidInput("the intercept's constant term must be active".into())),
            _ => Ok(Self { terms }),
        }
    }

    /// All three terms on the intercept and on each of `p` columns.
    pub fn full(p: usize) -> Self {
        Self { terms: vec![[true; 3]; p + 1] }
    }

    /// Static-effect basis: the constant term only.
    pub fn constant_only(p: usize) -> Self {
        Self { terms: vec![[true, false, false]; p + 1] }
    }

    pub fn columns(&self) -> usize {
        self.terms.len()
    }

    pub fn mask(&self, column: usize) -> [bool; BASIS_TERMS] {
        self.terms[column]
    }

    /// Expanded dimension `q`.
    pub fn dim(&self) -> usize {
        self.terms.iter().flatten().filter(|&&b| b).count()
    }

    /// Active terms in coefficient order (column-major, power-ascending).
    pub fn active_terms(&self) -> Vec<Term> {
        self.terms
            .iter()
            .enumerate()
            .flat_map(|(column, mask)| {
                (0..BASIS_TERMS).filter(move |&m| mask[m]).map(move |power| Term { column, power })
            })
            .collect()
    }

    /// Coefficient positions of one column's active terms, with their powers.
    pub fn column_terms(&self, column: usize) -> Vec<(usize, usize)> {
        self.active_terms()
            .into_iter()
            .enumerate()
            .filter(|(_, t)| t.column == column)
            .map(|(i, t)| (i, t.power))
            .collect()
    }

    pub fn without(&self, term: Term) -> Result<Self> {
        let mut terms = self.terms.clone();
        terms[term.column][term.power] = false;
        Self::new(terms)
    }
}

/// Human-readable name of a design column, `(Intercept)` for column 0.
pub fn column_name(schema: &CovariateSchema, column: usize) -> String {
    if column == 0 {
        "(Intercept)".to_string()
    } else {
        schema.design_names()[column - 1].clone()
    }
}

pub fn power_label(power: usize) -> &'static str {
    ["1", "l", "l^2"][power]
}

/// Emit `z_k * l^m` for each active term, intercept prepended as `z_0 = 1`.
pub fn expand_design(z: &[f64], l: f64, basis: &TimeBasis) -> Vec<f64> {
    debug_assert_eq!(z.len() + 1, basis.columns());
    let powers = [1.0, l, l * l];
    let mut out = Vec::with_capacity(basis.dim());
    for (k, mask) in basis.terms.iter().enumerate() {
        let zk = if k == 0 { 1.0 } else { z[k - 1] };
        for m in 0..BASIS_TERMS {
            if mask[m] {
                out.push(zk * powers[m]);
            }
        }
    }
    out
}

/// A subject's outcome restricted to the horizon `l`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Restricted {
    pub event: EventCode,
    pub time: f64,
    pub complete_case: bool,
    pub life_lost: f64,
}

pub fn restrict(record: &SubjectRecord, l: f64) -> Restricted {
    let u = record.time;
    match record.status {
        s @ (EventCode::Cause1 | EventCode::Cause2) if u <= l => Restricted {
            event: s,
            time: u,
            complete_case: true,
            life_lost: if s == EventCode::Cause1 { l - u } else { 0.0 },
        },
        _ if u >= l => Restricted { event: EventCode::Censored, time: l, complete_case: true, life_lost: 0.0 },
        _ => Restricted { event: EventCode::Censored, time: u, complete_case: false, life_lost: 0.0 },
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StackingOptions {
    /// Treat only subjects with an observed event before the horizon as
    /// complete cases, dropping those still event-free at `l`. Kept for
    /// comparison against the default reading; it biases the estimating
    /// equation whenever some subjects survive past a horizon.
    pub events_only: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackedRow {
    /// Index of the subject in the source dataset.
    pub subject: usize,
    pub horizon: f64,
    pub restricted_event: EventCode,
    pub restricted_time: f64,
    pub complete_case: bool,
    pub life_lost: f64,
    pub weight: f64,
    pub design: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct StackedDataset {
    pub rows: Vec<StackedRow>,
    pub grid: HorizonGrid,
    pub basis: TimeBasis,
    pub schema: CovariateSchema,
    pub subject_ids: Vec<String>,
}

impl StackedDataset {
    pub fn n_subjects(&self) -> usize {
        self.subject_ids.len()
    }

    /// Rows of each subject, in subject order.
    pub fn by_subject(&self) -> impl Iterator<Item = &[StackedRow]> {
        self.rows.chunks(self.grid.len())
    }

    /// Debug export: one line per row with the expanded design terms.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> =
            ["subject", "horizon", "event", "time", "complete", "life_lost", "weight"].map(String::from).into();
        for t in self.basis.active_terms() {
            header.push(format!("{}:{}", column_name(&self.schema, t.column), power_label(t.power)));
        }
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                self.subject_ids[r.subject].clone(),
                r.horizon.to_string(),
                r.restricted_event.code().to_string(),
                r.restricted_time.to_string(),
                (r.complete_case as u8).to_string(),
                r.life_lost.to_string(),
                r.weight.to_string(),
            ];
            rec.extend(r.design.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Restricted outcome and IPCW weight of every subject at one horizon.
pub fn horizon_weights(
    records: &[SubjectRecord],
    l: f64,
    options: StackingOptions,
) -> Result<Vec<(Restricted, f64)>> {
    let restricted: Vec<Restricted> = records.iter().map(|r| restrict(r, l)).collect();
    let km_input: Vec<(f64, bool)> = restricted.iter().map(|r| (r.time, !r.complete_case)).collect();
    let g = censoring_km(&km_input)?;
    restricted
        .into_iter()
        .map(|mut r| {
            if options.events_only {
                r.complete_case = r.event.is_event();
            }
            if !r.complete_case {
                return Ok((r, 0.0));
            }
            let surv = g.evaluate_minus(r.time);
            if surv <= 0.0 {
                return Err(Error::InfiniteWeight { horizon: l });
            }
            Ok((r, 1.0 / surv))
        })
        .collect()
}

pub fn build_stacked(dataset: &CompetingRisksDataset, grid: &HorizonGrid, basis: &TimeBasis) -> Result<StackedDataset> {
    build_stacked_with(dataset, grid, basis, StackingOptions::default())
}

pub fn build_stacked_with(
    dataset: &CompetingRisksDataset,
    grid: &HorizonGrid,
    basis: &TimeBasis,
    options: StackingOptions,
) -> Result<StackedDataset> {
    if basis.columns() != dataset.schema().width() + 1 {
        return Err(Error::InvalidInput(format!(
            "time basis covers {} columns but the design has {} plus the intercept",
            basis.columns(),
            dataset.schema().width()
        )));
    }
    let records = dataset.records();
    let blocks: Vec<Vec<(Restricted, f64)>> = grid
        .points()
        .par_iter()
        .map(|&l| horizon_weights(records, l, options))
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(records.len() * grid.len());
    for (i, record) in records.iter().enumerate() {
        for (j, &l) in grid.points().iter().enumerate() {
            let (r, weight) = blocks[j][i];
            rows.push(StackedRow {
                subject: i,
                horizon: l,
                restricted_event: r.event,
                restricted_time: r.time,
                complete_case: r.complete_case,
                life_lost: r.life_lost,
                weight,
                design: expand_design(&record.covariates, l, basis),
            });
        }
    }
    Ok(StackedDataset {
        rows,
        grid: grid.clone(),
        basis: basis.clone(),
        schema: dataset.schema().clone(),
        subject_ids: records.iter().map(|r| r.id.clone()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CovariateEntry, CovariateSchema};
    use proptest::prelude::*;

    fn rec(time: f64, status: u8, z: f64) -> SubjectRecord {
        SubjectRecord::new("s", time, EventCode::try_from(status).unwrap(), vec![z]).unwrap()
    }

    fn ds(records: Vec<SubjectRecord>) -> CompetingRisksDataset {
        let schema = CovariateSchema::new(vec![CovariateEntry::numeric("z1")]).unwrap();
        let records = records.into_iter().enumerate().map(|(i, mut r)| {
            r.id = format!("s{i}");
            r
        });
        CompetingRisksDataset::new(records.collect(), schema).unwrap()
    }

    #[test]
    fn grid_spacing() {
        let d = ds(vec![rec(11.0, 1, 0.0)]);
        let cfg = GridConfig { l_min: GridBound::Value(2.5), l_max: GridBound::Value(10.5), points: 5 };
        assert_eq!(build_time_grid(&d, &cfg).unwrap().points(), &[2.5, 4.5, 6.5, 8.5, 10.5]);
        let cfg = GridConfig { l_min: GridBound::Value(7.0), l_max: GridBound::Value(7.0), points: 1 };
        let g = build_time_grid(&d, &cfg).unwrap();
        assert_eq!((g.points(), g.tau()), (&[7.0][..], 7.0));
        let cfg = GridConfig { l_min: GridBound::Value(8.0), l_max: GridBound::Value(7.0), points: 3 };
        assert!(build_time_grid(&d, &cfg).is_err());
        let cfg = GridConfig { l_min: GridBound::Value(1.0), l_max: GridBound::Value(12.0), points: 3 };
        assert!(build_time_grid(&d, &cfg).is_err());
    }

    #[test]
    fn auto_lower_bound_uses_interpolated_percentile() {
        // Oracle: h = 99 * 0.1 = 9.9, so x[9] + 0.9 (x[10] - x[9]) = 10.9.
        let d = ds((1..=100).map(|t| rec(t as f64, 1, 0.0)).collect());
        let cfg = GridConfig { l_min: GridBound::Auto, l_max: GridBound::Value(95.0), points: 2 };
        let g = build_time_grid(&d, &cfg).unwrap();
        assert!((g.points()[0] - 10.9).abs() < 1e-12);
        assert_eq!(g.points()[1], 95.0);
        let none = ds(vec![rec(3.0, 2, 0.0)]);
        assert!(build_time_grid(&none, &cfg).is_err());
    }

    #[test]
    fn restriction_cases() {
        let r = restrict(&rec(3.0, 1, 0.0), 5.0);
        assert_eq!((r.event, r.time, r.complete_case, r.life_lost), (EventCode::Cause1, 3.0, true, 2.0));
        let r = restrict(&rec(3.0, 2, 0.0), 5.0);
        assert_eq!((r.event, r.time, r.complete_case, r.life_lost), (EventCode::Cause2, 3.0, true, 0.0));
        let r = restrict(&rec(4.0, 0, 0.0), 5.0);
        assert_eq!((r.event, r.time, r.complete_case, r.life_lost), (EventCode::Censored, 4.0, false, 0.0));
        let r = restrict(&rec(6.0, 0, 0.0), 5.0);
        assert_eq!((r.event, r.time, r.complete_case, r.life_lost), (EventCode::Censored, 5.0, true, 0.0));
        let r = restrict(&rec(6.0, 1, 0.0), 5.0);
        assert_eq!((r.event, r.time, r.complete_case, r.life_lost), (EventCode::Censored, 5.0, true, 0.0));
    }

    #[test]
    fn design_expansion() {
        assert_eq!(expand_design(&[1.0], 2.0, &TimeBasis::full(1)), vec![1.0, 2.0, 4.0, 1.0, 2.0, 4.0]);
        assert_eq!(expand_design(&[0.0], 2.0, &TimeBasis::full(1)), vec![1.0, 2.0, 4.0, 0.0, 0.0, 0.0]);
        let sparse = TimeBasis::new(vec![[true, true, false], [false, false, true]]).unwrap();
        assert_eq!(expand_design(&[1.0], 3.0, &sparse), vec![1.0, 3.0, 9.0]);
        assert!(TimeBasis::new(vec![[false, true, true]]).is_err());
    }

    #[test]
    fn weights_without_censoring_are_one() {
        let d = ds(vec![rec(1.0, 1, 0.0), rec(2.0, 2, 1.0), rec(6.0, 1, 1.0)]);
        let grid = HorizonGrid::new(vec![1.5, 3.0, 5.0], 5.0).unwrap();
        let s = build_stacked(&d, &grid, &TimeBasis::full(1)).unwrap();
        assert!(s.rows.iter().all(|r| r.weight == 1.0));
        assert_eq!(s.rows.len(), 9);
        let subjects: Vec<usize> = s.rows.iter().map(|r| r.subject).collect();
        assert_eq!(subjects, vec![0, 0, 0, 1, 1, 1, 2, 2, 2]);
    }

    #[test]
    fn hand_computed_ipcw_weights() {
        let d = ds(vec![rec(2.0, 0, 0.0), rec(3.0, 1, 0.0), rec(4.0, 0, 0.0), rec(6.0, 1, 0.0)]);
        let grid = HorizonGrid::new(vec![5.0], 5.0).unwrap();
        let s = build_stacked(&d, &grid, &TimeBasis::full(1)).unwrap();
        let w: Vec<f64> = s.rows.iter().map(|r| r.weight).collect();
        assert_eq!(w[0], 0.0);
        assert!((w[1] - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(w[2], 0.0);
        assert!((w[3] - 8.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.rows[3].restricted_time, 5.0);
        assert_eq!(s.rows[1].life_lost, 2.0);
    }

    #[test]
    fn weights_stay_finite_under_heavy_censoring() {
        let d = ds(vec![rec(1.0, 0, 0.0), rec(2.0, 0, 0.0), rec(3.0, 1, 0.0)]);
        // Risk sets 3 then 2: G(3-) = (2/3)(1/2) = 1/3.
        let s = build_stacked(&d, &HorizonGrid::new(vec![4.0], 4.0).unwrap(), &TimeBasis::full(1)).unwrap();
        assert!((s.rows[2].weight - 3.0).abs() < 1e-12);
        // A censoring tied with the event does not enter that event's weight.
        let d = ds(vec![rec(2.0, 0, 0.0), rec(2.0, 1, 0.0)]);
        let s = build_stacked(&d, &HorizonGrid::new(vec![2.0], 2.0).unwrap(), &TimeBasis::full(1)).unwrap();
        assert_eq!(s.rows[1].weight, 1.0);
    }

    #[test]
    fn events_only_option_drops_survivors() {
        let d = ds(vec![rec(3.0, 1, 0.0), rec(6.0, 0, 0.0)]);
        let grid = HorizonGrid::new(vec![5.0], 5.0).unwrap();
        let s = build_stacked_with(&d, &grid, &TimeBasis::full(1), StackingOptions { events_only: true }).unwrap();
        assert!(s.rows[0].complete_case && !s.rows[1].complete_case);
        assert_eq!(s.rows[1].weight, 0.0);
    }

    #[test]
    fn csv_export_has_term_columns() {
        let d = ds(vec![rec(3.0, 1, 1.0)]);
        let s = build_stacked(&d, &HorizonGrid::new(vec![2.0], 2.0).unwrap(), &TimeBasis::full(1)).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("subject,horizon,event,time,complete,life_lost,weight,(Intercept):1,(Intercept):l"));
        assert!(text.contains("z1:l^2"));
    }

    fn arb_records() -> impl Strategy<Value = Vec<SubjectRecord>> {
        prop::collection::vec((1u32..40, 0u8..3, 0u8..2), 2..40).prop_map(|v| {
            v.into_iter().map(|(t, s, z)| rec(t as f64 / 4.0, s, z as f64)).collect()
        })
    }

    proptest! {
        #[test]
        fn stacking_invariants(records in arb_records()) {
            let d = ds(records);
            let grid = HorizonGrid::new(vec![1.0, 2.5, 4.0, 7.0], 7.0).unwrap();
            if let Ok(s) = build_stacked(&d, &grid, &TimeBasis::full(1)) {
                prop_assert_eq!(s.rows.len(), 4 * d.len());
                for block in s.by_subject() {
                    let mut prev = -1.0;
                    let mut prev_h = 0.0;
                    for r in block {
                        prop_assert!(r.horizon > prev_h);
                        prev_h = r.horizon;
                        prop_assert!(r.life_lost >= 0.0 && r.life_lost <= r.horizon);
                        prop_assert!(r.restricted_time <= r.horizon);
                        if r.restricted_event != EventCode::Cause1 { prop_assert_eq!(r.life_lost, 0.0); }
                        prop_assert_eq!(r.weight == 0.0, !r.complete_case);
                        prop_assert!(r.life_lost >= prev);
                        prev = r.life_lost;
                    }
                }
            }
        }

        #[test]
        fn weights_are_order_independent(records in arb_records(), rot in 0usize..40) {
            let n = records.len();
            let grid = HorizonGrid::new(vec![2.0, 5.0], 5.0).unwrap();
            let a = build_stacked(&ds(records.clone()), &grid, &TimeBasis::full(1));
            let mut rotated = records.clone();
            rotated.rotate_left(rot % n);
            let b = build_stacked(&ds(rotated), &grid, &TimeBasis::full(1));
            if let (Ok(a), Ok(b)) = (a, b) {
                let total = |s: &StackedDataset| s.rows.iter().map(|r| r.weight * (1.0 + r.life_lost)).sum::<f64>();
                prop_assert!((total(&a) - total(&b)).abs() < 1e-9);
            }
        }
    }
}
