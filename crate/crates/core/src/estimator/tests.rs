use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::data::{Cause, CompetingRisksDataset, CovariateEntry, CovariateSchema, EventCode, SubjectRecord};
use crate::nonparam::rmtl_group;
use crate::stacking::{build_stacked, HorizonGrid, TimeBasis};

fn schema(p: usize) -> CovariateSchema {
    CovariateSchema::new((1..=p).map(|k| CovariateEntry::numeric(format!("z{k}"))).collect()).unwrap()
}

/// Binary covariate cohort; `censor` is the probability of an early censoring.
fn cohort(n: usize, seed: u64, censor: f64) -> CompetingRisksDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = (0..n)
        .map(|i| {
            let z: f64 = if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 };
            let t = -rng.random::<f64>().ln() / (0.3 + 0.4 * z);
            let cause = if rng.random::<f64>() < 0.6 { EventCode::Cause1 } else { EventCode::Cause2 };
            let c = if rng.random::<f64>() < censor { rng.random::<f64>() * 4.0 } else { f64::INFINITY };
            let (time, status) = if c < t { (c, EventCode::Censored) } else { (t, cause) };
            SubjectRecord::new(format!("s{i}"), time, status, vec![z]).unwrap()
        })
        .collect();
    CompetingRisksDataset::new(records, schema(1)).unwrap()
}

fn single_horizon(ds: &CompetingRisksDataset, tau: f64) -> StackedDataset {
    build_stacked(ds, &HorizonGrid::new(vec![tau], tau).unwrap(), &TimeBasis::constant_only(1)).unwrap()
}

#[test]
fn saturated_binary_fit_equals_group_means() {
    let ds = cohort(300, 1, 0.0);
    let s = single_horizon(&ds, 2.0);
    let m = fit(&s, Link::Identity, FitOptions::default()).unwrap();
    let mean = |g: f64| {
        let v: Vec<f64> = s.rows.iter().filter(|r| ds.records()[r.subject].covariates[0] == g).map(|r| r.life_lost).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!((m.coefficients[0] - mean(0.0)).abs() < 1e-10);
    assert!((m.coefficients[1] - (mean(1.0) - mean(0.0))).abs() < 1e-10);
    assert!(m.convergence.equation_norm < 1e-8);
}

#[test]
fn zero_response_gives_zero_coefficients() {
    let records = (0..20)
        .map(|i| SubjectRecord::new(format!("{i}"), 5.0 + i as f64, if i % 2 == 0 { EventCode::Cause1 } else { EventCode::Cause2 }, vec![(i % 3) as f64]).unwrap())
        .collect();
    let ds = CompetingRisksDataset::new(records, schema(1)).unwrap();
    let grid = HorizonGrid::new(vec![1.0, 2.0, 3.0, 4.0], 4.0).unwrap();
    let m = fit(&build_stacked(&ds, &grid, &TimeBasis::full(1)).unwrap(), Link::Identity, FitOptions::default()).unwrap();
    assert!(m.coefficients.iter().all(|b| b.abs() < 1e-12));
}

/// HC0 computed directly from the least-squares residuals.
fn hc0(ds: &CompetingRisksDataset, stacked: &StackedDataset) -> DMatrix<f64> {
    let n = ds.len();
    let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { ds.records()[i].covariates[0] });
    let y = DMatrix::from_fn(n, 1, |i, _| stacked.rows[i].life_lost);
    let xtx_inv = (x.transpose() * &x).try_inverse().unwrap();
    let beta = &xtx_inv * x.transpose() * &y;
    let e = &y - &x * beta;
    let mut meat = DMatrix::zeros(2, 2);
    for i in 0..n {
        let xi = x.row(i).transpose();
        meat += &xi * xi.transpose() * e[(i, 0)].powi(2);
    }
    &xtx_inv * meat * &xtx_inv
}

#[test]
fn single_horizon_sandwich_is_hc0() {
    let ds = cohort(250, 2, 0.0);
    let s = single_horizon(&ds, 1.5);
    let m = fit(&s, Link::Identity, FitOptions::default()).unwrap();
    let oracle = hc0(&ds, &s);
    for i in 0..2 {
        for j in 0..2 {
            assert!((m.covariance[(i, j)] - oracle[(i, j)]).abs() < 1e-10, "{i},{j}");
        }
    }
}

#[test]
fn duplicating_subjects_halves_covariance() {
    let ds = cohort(200, 3, 0.3);
    let mut doubled = ds.records().to_vec();
    doubled.extend(ds.records().iter().map(|r| SubjectRecord { id: format!("{}b", r.id), ..r.clone() }));
    let ds2 = CompetingRisksDataset::new(doubled, ds.schema().clone()).unwrap();
    let grid = HorizonGrid::equally_spaced(0.5, 2.5, 5).unwrap();
    let m1 = fit(&build_stacked(&ds, &grid, &TimeBasis::full(1)).unwrap(), Link::Identity, FitOptions::default()).unwrap();
    let m2 = fit(&build_stacked(&ds2, &grid, &TimeBasis::full(1)).unwrap(), Link::Identity, FitOptions::default()).unwrap();
    for (a, b) in m1.coefficients.iter().zip(&m2.coefficients) {
        assert!((a - b).abs() < 1e-10);
    }
    for (a, b) in m1.covariance.iter().zip(m2.covariance.iter()) {
        assert!((a / 2.0 - b).abs() < 1e-10 * a.abs().max(1.0));
    }
}

#[test]
fn weight_rescaling_and_permutation_invariance() {
    let ds = cohort(300, 4, 0.3);
    let grid = HorizonGrid::equally_spaced(0.5, 2.5, 6).unwrap();
    let s = build_stacked(&ds, &grid, &TimeBasis::full(1)).unwrap();
    let m = fit(&s, Link::Identity, FitOptions::default()).unwrap();

    let mut scaled = s.clone();
    scaled.rows.iter_mut().for_each(|r| r.weight *= 3.7);
    let ms = fit(&scaled, Link::Identity, FitOptions::default()).unwrap();
    for (a, b) in m.coefficients.iter().zip(&ms.coefficients) {
        assert!((a - b).abs() < 1e-10);
    }

    let mut rev = ds.records().to_vec();
    rev.reverse();
    let dsr = CompetingRisksDataset::new(rev, ds.schema().clone()).unwrap();
    let mr = fit(&build_stacked(&dsr, &grid, &TimeBasis::full(1)).unwrap(), Link::Identity, FitOptions::default()).unwrap();
    for (a, b) in m.coefficients.iter().zip(&mr.coefficients) {
        assert!((a - b).abs() < 1e-12);
    }
    for (a, b) in m.covariance.iter().zip(mr.covariance.iter()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn residuals_are_orthogonal_and_covariance_is_psd() {
    let ds = cohort(400, 5, 0.4);
    let grid = HorizonGrid::equally_spaced(0.3, 2.0, 8).unwrap();
    let s = build_stacked(&ds, &grid, &TimeBasis::full(1)).unwrap();
    let m = fit(&s, Link::Identity, FitOptions::default()).unwrap();
    let q = m.coefficients.len();
    for k in 0..q {
        let dot: f64 = s
            .rows
            .iter()
            .map(|r| r.weight * r.design[k] * (r.life_lost - linear_predictor(&r.design, &m.coefficients)))
            .sum();
        assert!(dot.abs() <= 1e-8 * ds.len() as f64);
    }
    let c = &m.covariance;
    assert!((c - c.transpose()).amax() < 1e-15);
    assert!(c.clone().symmetric_eigen().eigenvalues.min() > -1e-10);
}

#[test]
fn saturated_prediction_matches_group_rmtl() {
    let ds = cohort(200, 6, 0.0);
    let grid = HorizonGrid::new(vec![0.5, 1.0, 2.0], 2.0).unwrap();
    let m = fit(&build_stacked(&ds, &grid, &TimeBasis::full(1)).unwrap(), Link::Identity, FitOptions::default()).unwrap();
    for g in [0.0, 1.0] {
        let group: Vec<SubjectRecord> = ds.records().iter().filter(|r| r.covariates[0] == g).cloned().collect();
        for &l in grid.points() {
            let x = crate::stacking::expand_design(&[g], l, &m.basis);
            let pred = linear_predictor(&x, &m.coefficients);
            let oracle = rmtl_group(&group, Cause::One, l).unwrap();
            assert!((pred - oracle).abs() < 1e-10, "g={g} l={l}: {pred} vs {oracle}");
        }
    }
}

#[test]
fn log_link_recovers_group_means() {
    let ds = cohort(300, 7, 0.0);
    let s = single_horizon(&ds, 2.0);
    let m = fit(&s, Link::Log, FitOptions::default()).unwrap();
    let mean = |g: f64| {
        let v: Vec<f64> = s.rows.iter().filter(|r| ds.records()[r.subject].covariates[0] == g).map(|r| r.life_lost).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!((m.coefficients[0].exp() - mean(0.0)).abs() < 1e-8);
    assert!(((m.coefficients[0] + m.coefficients[1]).exp() - mean(1.0)).abs() < 1e-8);
    assert!(m.convergence.iterations >= 1);
    assert!(m.convergence.equation_norm <= 1e-8);
}

#[test]
fn log_link_with_no_losses_fails_cleanly() {
    let records = (0..10).map(|i| SubjectRecord::new(format!("{i}"), 9.0, EventCode::Cause2, vec![(i % 2) as f64]).unwrap()).collect();
    let ds = CompetingRisksDataset::new(records, schema(1)).unwrap();
    assert!(fit(&single_horizon(&ds, 2.0), Link::Log, FitOptions::default()).is_err());
}

#[test]
fn rank_deficiency_names_columns() {
    let one = CompetingRisksDataset::new(vec![SubjectRecord::new("a", 1.0, EventCode::Cause1, vec![1.0]).unwrap()], schema(1)).unwrap();
    match fit_static(&one, 1.0, Link::Identity) {
        Err(crate::Error::RankDeficient { columns }) => assert!(!columns.is_empty()),
        other => panic!("expected rank deficiency, got {other:?}"),
    }
    // Two horizons cannot identify three time terms.
    let ds = cohort(100, 8, 0.0);
    let grid = HorizonGrid::new(vec![1.0, 2.0], 2.0).unwrap();
    let err = fit(&build_stacked(&ds, &grid, &TimeBasis::full(1)).unwrap(), Link::Identity, FitOptions::default()).unwrap_err();
    match err {
        crate::Error::RankDeficient { columns } => assert!(columns.iter().any(|c| c.contains("l^2"))),
        other => panic!("{other:?}"),
    }
}

#[test]
fn static_fit_is_the_one_point_special_case() {
    let ds = cohort(300, 9, 0.3);
    let a = fit_static(&ds, 2.0, Link::Identity).unwrap();
    let b = fit(&single_horizon(&ds, 2.0), Link::Identity, FitOptions::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn row_level_meat_differs_from_clustered() {
    let ds = cohort(300, 10, 0.2);
    let grid = HorizonGrid::equally_spaced(0.5, 2.5, 6).unwrap();
    let s = build_stacked(&ds, &grid, &TimeBasis::full(1)).unwrap();
    let clustered = fit(&s, Link::Identity, FitOptions::default()).unwrap();
    let row = fit(&s, Link::Identity, FitOptions { clustering: ScoreClustering::Row, ..Default::default() }).unwrap();
    assert_eq!(clustered.coefficients, row.coefficients);
    // Residuals of one subject are positively correlated across horizons, so
    // the clustered variance of a mid-grid level is the larger one.
    let x = DVector::from_vec(vec![1.0, 1.5, 2.25, 0.0, 0.0, 0.0]);
    let var = |m: &FittedModel| (x.transpose() * &m.covariance * &x)[(0, 0)];
    assert!(var(&clustered) > var(&row));
}

#[test]
fn wald_rows() {
    let ds = cohort(300, 11, 0.0);
    let mut m = fit_static(&ds, 2.0, Link::Identity).unwrap();
    m.coefficients = vec![0.0, 1.96];
    m.covariance = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
    let t = wald_table(&m);
    assert_eq!((t[0].z, t[0].p), (0.0, 1.0));
    assert!((t[1].p - 0.05).abs() < 1e-4);
    m.coefficients = vec![0.140, 0.5];
    m.covariance = DMatrix::from_row_slice(2, 2, &[0.026f64.powi(2), 0.0, 0.0, 0.0]);
    let t = wald_table(&m);
    assert!((t[0].z - 5.385).abs() < 1e-3 && t[0].p < 0.001);
    assert!(t[1].degenerate && t[1].p == 0.0);
}

#[test]
fn model_json_roundtrip_is_lossless() {
    let ds = cohort(200, 12, 0.3);
    let grid = HorizonGrid::equally_spaced(0.5, 2.5, 5).unwrap();
    let m = fit(&build_stacked(&ds, &grid, &TimeBasis::full(1)).unwrap(), Link::Identity, FitOptions::default()).unwrap();
    let back = FittedModel::from_json(&m.to_json()).unwrap();
    assert_eq!(back, m);
    let bad = m.to_json().replace("\"format_version\": 1", "\"format_version\": 9");
    assert!(FittedModel::from_json(&bad).is_err());
}
