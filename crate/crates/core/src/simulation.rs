//! Gompertz competing-risks generator, closed-form truth, and the Monte Carlo
//! harness that scores the dynamic-effect estimator against it.
//!
//! Cause-1 has a proper-looking but improper Gompertz subdistribution hazard
//! `lambda_1(t | z) = gamma_z exp(rho_z t)` with `rho_z < 0`, so that
//! `P(eps = 1 | z) = 1 - exp(gamma_z / rho_z)`. Given cause 2, the event time is
//! unit exponential. Two binary covariates `(z1, z2)` pick one of four strata.

use std::io::Write;

use rand::distr::Open01;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{CompetingRisksDataset, CovariateEntry, CovariateSchema, EventCode, SubjectRecord};
use crate::error::{Error, Result};
use crate::estimator::{fit, FitOptions, Link};
use crate::evaluation::{evaluate_effect, RangePolicy, Z_95};
use crate::stacking::{build_stacked, build_time_grid, GridConfig, TimeBasis};

/// Pilot size for censoring calibration.
pub const PILOT_DRAWS: usize = 1_000_000;
const PILOT_SEED: u64 = 0x5eed_ca1b;
/// Largest censoring proportion the calibration accepts.
pub const MAX_CENSOR_RATE: f64 = 0.9;
const CALIBRATION_TOLERANCE: f64 = 0.002;
/// Absolute tolerance of the quadrature behind [`true_rmtl`].
pub const QUADRATURE_TOLERANCE: f64 = 1e-6;
/// Largest tolerated share of failed replications.
pub const MAX_FAILURE_SHARE: f64 = 0.05;

/// One real number per `(z1, z2)` stratum, keyed `"00"`, `"01"`, `"10"`, `"11"`
/// in JSON with `z1` as the first digit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StratumMap {
    #[serde(rename = "00")]
    pub s00: f64,
    #[serde(rename = "01")]
    pub s01: f64,
    #[serde(rename = "10")]
    pub s10: f64,
    #[serde(rename = "11")]
    pub s11: f64,
}

impl StratumMap {
    pub fn get(&self, z1: bool, z2: bool) -> f64 {
        match (z1, z2) {
            (false, false) => self.s00,
            (false, true) => self.s01,
            (true, false) => self.s10,
            (true, true) => self.s11,
        }
    }

    fn values(&self) -> [f64; 4] {
        [self.s00, self.s01, self.s10, self.s11]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationScenario {
    pub gamma: StratumMap,
    pub rho: StratumMap,
    /// Bernoulli probabilities of `z1` and `z2`.
    pub exposure_prob: [f64; 2],
    /// Target proportion of subjects whose event is censored.
    pub censor_rate: f64,
    pub n: usize,
}

impl SimulationScenario {
    /// The reference parameterisation with the given cohort size, censoring
    /// target and common exposure probability.
    pub fn reference(n: usize, censor_rate: f64, exposure: f64) -> Self {
        Self {
            gamma: StratumMap { s00: 2.88, s01: 1.95, s10: 2.29, s11: 1.55 },
            rho: StratumMap { s00: -1.7, s01: -1.4, s10: -2.9, s11: -2.8 },
            exposure_prob: [exposure, exposure],
            censor_rate,
            n,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let scenario: Self = serde_json::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma.values().iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::InvalidInput("every gamma must be finite and positive".into()));
        }
        if self.rho.values().iter().any(|r| !(r.is_finite() && *r < 0.0)) {
            return Err(Error::InvalidInput("every rho must be finite and negative".into()));
        }
        if self.exposure_prob.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidInput("exposure probabilities must lie in [0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.censor_rate) {
            return Err(Error::InvalidInput("censor_rate must lie in [0, 1)".into()));
        }
        if self.n == 0 {
            return Err(Error::InvalidInput("n must be positive".into()));
        }
        Ok(())
    }

    fn stratum(&self, z1: bool, z2: bool) -> (f64, f64) {
        (self.gamma.get(z1, z2), self.rho.get(z1, z2))
    }
}

/// `F_1(t) = 1 - exp{-(gamma/rho)(e^{rho t} - 1)}`.
pub fn cif1(t: f64, gamma: f64, rho: f64) -> f64 {
    -(-(gamma / rho) * (rho * t).exp_m1()).exp_m1()
}

/// `F_2(t) = e^{gamma/rho} (1 - e^{-t})`.
pub fn cif2(t: f64, gamma: f64, rho: f64) -> f64 {
    (gamma / rho).exp() * -(-t).exp_m1()
}

/// `P(eps = 1)` for one stratum.
pub fn cause1_probability(gamma: f64, rho: f64) -> f64 {
    -(gamma / rho).exp_m1()
}

/// Inverse-transform draw of `(T, eps)` from two uniforms on `(0, 1)`.
pub fn sample_event(u_outcome: f64, u_time: f64, gamma: f64, rho: f64) -> (f64, u8) {
    let p1 = cause1_probability(gamma, rho);
    if u_outcome < p1 {
        let t = (-(rho / gamma) * (-u_time * p1).ln_1p()).ln_1p() / rho;
        (t, 1)
    } else {
        (-(-u_time).ln_1p(), 2)
    }
}

/// Subdistribution hazard ratio of `z1` (`which = 1`) or `z2` (`which = 2`)
/// against the `(0, 0)` stratum at time `t`.
pub fn shr(scenario: &SimulationScenario, which: u8, t: f64) -> Result<f64> {
    let (g0, r0) = scenario.stratum(false, false);
    let (g, r) = match which {
        1 => scenario.stratum(true, false),
        2 => scenario.stratum(false, true),
        _ => return Err(Error::InvalidInput(format!("shr is defined for covariate 1 or 2, not {which}"))),
    };
    Ok(g * (r * t).exp() / (g0 * (r0 * t).exp()))
}

fn simpson(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
}

#[allow(clippy::too_many_arguments)]
fn adaptive_simpson(
    f: &impl Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    m: f64,
    fm: f64,
    whole: f64,
    eps: f64,
    depth: u32,
) -> f64 {
    let (lm, flm, left) = simpson(f, a, fa, m, fm);
    let (rm, frm, right) = simpson(f, m, fm, b, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        return left + right + delta / 15.0;
    }
    adaptive_simpson(f, a, fa, m, fm, lm, flm, left, eps / 2.0, depth - 1)
        + adaptive_simpson(f, m, fm, b, fb, rm, frm, right, eps / 2.0, depth - 1)
}

/// `integral_a^b f` by adaptive Simpson to absolute tolerance `eps`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, eps: f64) -> f64 {
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(&f, a, fa, b, fb);
    adaptive_simpson(&f, a, fa, b, fb, m, fm, whole, eps, 50)
}

/// `mu_1(l) = integral_0^l F_1(t) dt`.
pub fn true_rmtl(gamma: f64, rho: f64, l: f64) -> f64 {
    if l <= 0.0 {
        return 0.0;
    }
    integrate(|t| cif1(t, gamma, rho), 0.0, l, QUADRATURE_TOLERANCE)
}

/// `(beta_0, beta_1, beta_2)(l)`: the `(0,0)` stratum RMTL and the differences
/// `mu(1,0) - mu(0,0)` and `mu(0,1) - mu(0,0)`.
pub fn true_coefficients(scenario: &SimulationScenario, l: f64) -> [f64; 3] {
    let mu = |z1, z2| {
        let (g, r) = scenario.stratum(z1, z2);
        true_rmtl(g, r, l)
    };
    let base = mu(false, false);
    [base, mu(true, false) - base, mu(false, true) - base]
}

/// True CIFs, RMTLs and coefficient trajectories of one scenario.
#[derive(Debug, Clone)]
pub struct TrueValues {
    scenario: SimulationScenario,
}

impl TrueValues {
    pub fn new(scenario: &SimulationScenario) -> Self {
        Self { scenario: scenario.clone() }
    }

    pub fn cif1(&self, t: f64, z1: bool, z2: bool) -> f64 {
        let (g, r) = self.scenario.stratum(z1, z2);
        cif1(t, g, r)
    }

    pub fn cif2(&self, t: f64, z1: bool, z2: bool) -> f64 {
        let (g, r) = self.scenario.stratum(z1, z2);
        cif2(t, g, r)
    }

    pub fn rmtl(&self, l: f64, z1: bool, z2: bool) -> f64 {
        let (g, r) = self.scenario.stratum(z1, z2);
        true_rmtl(g, r, l)
    }

    pub fn coefficients(&self, l: f64) -> [f64; 3] {
        true_coefficients(&self.scenario, l)
    }
}

fn draw_subject(scenario: &SimulationScenario, rng: &mut ChaCha8Rng) -> (bool, bool, f64, u8) {
    let z1 = rng.sample::<f64, _>(Open01) < scenario.exposure_prob[0];
    let z2 = rng.sample::<f64, _>(Open01) < scenario.exposure_prob[1];
    let (g, r) = scenario.stratum(z1, z2);
    let (t, eps) = sample_event(rng.sample(Open01), rng.sample(Open01), g, r);
    (z1, z2, t, eps)
}

fn subject_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Sorted event times with prefix sums, for evaluating the expected censored
/// share `E[min(T / c, 1)]` of `C ~ Uniform(0, c)` in logarithmic time.
struct PilotSample {
    times: Vec<f64>,
    prefix: Vec<f64>,
}

impl PilotSample {
    fn draw(scenario: &SimulationScenario, size: usize) -> Self {
        let mut times: Vec<f64> = (0..size as u64)
            .into_par_iter()
            .map(|i| draw_subject(scenario, &mut subject_rng(PILOT_SEED, i)).2)
            .collect();
        times.sort_by(f64::total_cmp);
        let mut prefix = Vec::with_capacity(times.len() + 1);
        prefix.push(0.0);
        for t in &times {
            prefix.push(prefix.last().unwrap() + t);
        }
        Self { times, prefix }
    }

    fn censored_share(&self, c: f64) -> f64 {
        let below = self.times.partition_point(|&t| t < c);
        let n = self.times.len() as f64;
        (self.prefix[below] / c + (self.times.len() - below) as f64) / n
    }
}

/// Upper limit `c_max` of uniform censoring that censors `censor_rate` of the
/// subjects in expectation; `+inf` when the rate is zero.
pub fn calibrate_censoring(scenario: &SimulationScenario) -> Result<f64> {
    calibrate_with_pilot(scenario, PILOT_DRAWS)
}

fn calibrate_with_pilot(scenario: &SimulationScenario, draws: usize) -> Result<f64> {
    scenario.validate()?;
    let target = scenario.censor_rate;
    if target == 0.0 {
        return Ok(f64::INFINITY);
    }
    if target > MAX_CENSOR_RATE {
        return Err(Error::InvalidInput(format!(
            "censor_rate {target} is above the attainable maximum {MAX_CENSOR_RATE}"
        )));
    }
    let pilot = PilotSample::draw(scenario, draws);
    let mut hi = pilot.times[pilot.times.len() - 1].max(1.0);
    while pilot.censored_share(hi) > target {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if pilot.censored_share(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    let c_max = 0.5 * (lo + hi);
    if (pilot.censored_share(c_max) - target).abs() > CALIBRATION_TOLERANCE {
        return Err(Error::InvalidInput(format!("censor_rate {target} is not attainable")));
    }
    Ok(c_max)
}

/// Schema of generated cohorts: two numeric 0/1 covariates.
pub fn cohort_schema() -> CovariateSchema {
    CovariateSchema::new(vec![CovariateEntry::numeric("z1"), CovariateEntry::numeric("z2")])
        .expect("static schema is valid")
}

/// A scenario with its censoring bound resolved, ready to draw many cohorts.
#[derive(Debug, Clone)]
pub struct CohortGenerator {
    scenario: SimulationScenario,
    c_max: f64,
}

impl CohortGenerator {
    pub fn new(scenario: &SimulationScenario) -> Result<Self> {
        Ok(Self { scenario: scenario.clone(), c_max: calibrate_censoring(scenario)? })
    }

    pub fn c_max(&self) -> f64 {
        self.c_max
    }

    /// Cohort of `scenario.n` subjects; subject `i` draws from its own stream
    /// of `seed`, so the result does not depend on the thread count.
    pub fn generate(&self, seed: u64) -> Result<CompetingRisksDataset> {
        let records = (0..self.scenario.n as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = subject_rng(seed, i);
                let (z1, z2, t, eps) = draw_subject(&self.scenario, &mut rng);
                let c = if self.c_max.is_finite() { self.c_max * rng.sample::<f64, _>(Open01) } else { f64::INFINITY };
                let (time, status) = if t <= c { (t, eps) } else { (c, 0) };
                let status = EventCode::try_from(status).expect("codes 0..=2 are valid");
                SubjectRecord::new(format!("{}", i + 1), time, status, vec![z1 as u8 as f64, z2 as u8 as f64])
            })
            .collect::<Result<Vec<_>>>()?;
        CompetingRisksDataset::new(records, cohort_schema())
    }
}

pub fn generate_cohort(scenario: &SimulationScenario, seed: u64) -> Result<CompetingRisksDataset> {
    CohortGenerator::new(scenario)?.generate(seed)
}

/// A point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

/// Estimates of `(beta_0, beta_1, beta_2)` at each evaluation horizon.
pub type CoefficientEstimates = Vec<[Estimate; 3]>;

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloConfig {
    pub replications: usize,
    pub eval_points: Vec<f64>,
    pub seed: u64,
    pub grid: GridConfig,
    pub link: Link,
    pub fit_options: FitOptions,
}

impl MonteCarloConfig {
    pub fn new(replications: usize, eval_points: Vec<f64>, seed: u64) -> Self {
        Self {
            replications,
            eval_points,
            seed,
            grid: GridConfig::default(),
            link: Link::Identity,
            fit_options: FitOptions::default(),
        }
    }
}

/// The default estimator of the harness: automatic percentile grid, full
/// quadratic basis, and delta-method standard errors of each `beta_k(l)`.
pub fn dynamic_estimates(dataset: &CompetingRisksDataset, config: &MonteCarloConfig) -> Result<CoefficientEstimates> {
    let grid = build_time_grid(dataset, &config.grid)?;
    let stacked = build_stacked(dataset, &grid, &TimeBasis::full(dataset.schema().width()))?;
    let model = fit(&stacked, config.link, config.fit_options)?;
    config
        .eval_points
        .iter()
        .map(|&l| {
            let mut out = [Estimate { value: 0.0, se: 0.0 }; 3];
            for (k, name) in ["(Intercept)", "z1", "z2"].iter().enumerate() {
                let e = evaluate_effect(&model, name, l, RangePolicy::Extrapolate)?;
                out[k] = Estimate { value: e.value, se: e.se };
            }
            Ok(out)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub coefficient: usize,
    pub l: f64,
    pub true_value: f64,
    pub mean_estimate: f64,
    pub bias: f64,
    /// Mean bias divided by the true value.
    pub relative_bias: f64,
    pub rmse: f64,
    pub mean_se: f64,
    pub empirical_sd: f64,
    /// Mean estimated SE over the Monte Carlo SD; `None` when undefined.
    pub relative_se: Option<f64>,
    /// 95% Wald coverage; `None` when every estimated SE is zero.
    pub coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsTable {
    pub scenario: SimulationScenario,
    pub replications: usize,
    pub failures: usize,
    pub rows: Vec<MetricsRow>,
}

/// Order-independent sum: sorting first makes the result identical for any
/// permutation of the inputs.
fn stable_sum(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

fn replication_seed(master: u64, replication: usize) -> u64 {
    subject_rng(master, replication as u64).next_u64()
}

/// Monte Carlo study with the default dynamic-effect estimator.
pub fn run_monte_carlo(scenario: &SimulationScenario, config: &MonteCarloConfig) -> Result<MetricsTable> {
    run_monte_carlo_with(scenario, config, |data| dynamic_estimates(data, config))
}

/// Monte Carlo study with an arbitrary estimator. Replications run in
/// parallel; each draws its cohort from a seed derived from
/// `(config.seed, replication index)`.
pub fn run_monte_carlo_with<F>(scenario: &SimulationScenario, config: &MonteCarloConfig, estimator: F) -> Result<MetricsTable>
where
    F: Fn(&CompetingRisksDataset) -> Result<CoefficientEstimates> + Sync,
{
    if config.replications < 2 {
        return Err(Error::InvalidInput("the Monte Carlo harness needs at least 2 replications".into()));
    }
    if config.eval_points.is_empty() || config.eval_points.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(Error::InvalidInput("evaluation points must be positive and finite".into()));
    }
    let generator = CohortGenerator::new(scenario)?;
    let outcomes: Vec<Option<CoefficientEstimates>> = (0..config.replications)
        .into_par_iter()
        .map(|r| {
            let data = generator.generate(replication_seed(config.seed, r)).ok()?;
            let est = estimator(&data).ok()?;
            (est.len() == config.eval_points.len()).then_some(est)
        })
        .collect();
    let successes: Vec<&CoefficientEstimates> = outcomes.iter().flatten().collect();
    let failures = config.replications - successes.len();
    if failures as f64 > MAX_FAILURE_SHARE * config.replications as f64 || successes.len() < 2 {
        return Err(Error::TooManyFailures { failed: failures, total: config.replications });
    }

    let truth = TrueValues::new(scenario);
    let m = successes.len() as f64;
    let mut rows = Vec::new();
    for (j, &l) in config.eval_points.iter().enumerate() {
        let true_values = truth.coefficients(l);
        for (k, &true_value) in true_values.iter().enumerate() {
            let est: Vec<Estimate> = successes.iter().map(|s| s[j][k]).collect();
            let mean_estimate = stable_sum(est.iter().map(|e| e.value).collect()) / m;
            let bias = stable_sum(est.iter().map(|e| e.value - true_value).collect()) / m;
            let rmse = (stable_sum(est.iter().map(|e| (e.value - true_value).powi(2)).collect()) / m).sqrt();
            let empirical_sd =
                (stable_sum(est.iter().map(|e| (e.value - mean_estimate).powi(2)).collect()) / (m - 1.0)).sqrt();
            let mean_se = stable_sum(est.iter().map(|e| e.se).collect()) / m;
            let degenerate = est.iter().all(|e| !(e.se > 0.0));
            let coverage = (!degenerate).then(|| {
                est.iter().filter(|e| (e.value - true_value).abs() <= Z_95 * e.se).count() as f64 / m
            });
            let relative_se = (!degenerate && empirical_sd > 0.0).then(|| mean_se / empirical_sd);
            rows.push(MetricsRow {
                coefficient: k,
                l,
                true_value,
                mean_estimate,
                bias,
                relative_bias: bias / true_value,
                rmse,
                mean_se,
                empirical_sd,
                relative_se,
                coverage,
            });
        }
    }
    Ok(MetricsTable { scenario: scenario.clone(), replications: config.replications, failures, rows })
}

impl MetricsTable {
    pub fn row(&self, coefficient: usize, l: f64) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.coefficient == coefficient && r.l == l)
    }

    /// CSV with one row per `(l, coefficient)`: bias in units of 10^-2,
    /// relative bias, RMSE, relative SE and coverage; undefined cells are `NA`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.3}"));
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "n",
            "censor_rate",
            "exposure_z1",
            "exposure_z2",
            "l",
            "coefficient",
            "true_value",
            "bias_x100",
            "rel_bias",
            "rmse",
            "rel_se",
            "coverage",
            "replications",
            "failures",
        ])?;
        for r in &self.rows {
            w.write_record([
                self.scenario.n.to_string(),
                format!("{}", self.scenario.censor_rate),
                format!("{}", self.scenario.exposure_prob[0]),
                format!("{}", self.scenario.exposure_prob[1]),
                format!("{}", r.l),
                format!("beta{}", r.coefficient),
                format!("{:.4}", r.true_value),
                format!("{:.3}", 100.0 * r.bias),
                format!("{:.3}", r.relative_bias),
                format!("{:.3}", r.rmse),
                opt(r.relative_se),
                opt(r.coverage),
                self.replications.to_string(),
                self.failures.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reference() -> SimulationScenario {
        SimulationScenario::reference(500, 0.1, 0.5)
    }

    #[test]
    fn closed_forms() {
        assert_eq!(cif1(0.0, 2.88, -1.7), 0.0);
        assert!((cause1_probability(2.88, -1.7) - 0.81624).abs() < 1e-5);
        assert!((cif1(0.75, 2.88, -1.7) - 0.70498).abs() < 1e-5);
        let s = reference();
        for (z1, z2) in [(false, false), (false, true), (true, false), (true, true)] {
            let (g, r) = s.stratum(z1, z2);
            assert!((cif1(50.0, g, r) + cif2(50.0, g, r) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn inverse_sampling() {
        let (t, e) = sample_event(0.9, 0.5, 2.88, -1.7);
        assert_eq!(e, 2);
        assert!((t - std::f64::consts::LN_2).abs() < 1e-15);
        let (t, e) = sample_event(0.1, 0.5, 2.88, -1.7);
        assert_eq!(e, 1);
        assert!((t - 0.217907).abs() < 1e-5);
        assert!((cif1(t, 2.88, -1.7) - 0.408119).abs() < 1e-5);
        assert!(sample_event(0.1, 1e-12, 2.88, -1.7).0 < 1e-10);
    }

    proptest! {
        #[test]
        fn inverse_reproduces_u(u in 1e-6f64..(1.0 - 1e-6), k in 0usize..4) {
            let s = reference();
            let (g, r) = s.stratum(k >= 2, k % 2 == 1);
            let (t, e) = sample_event(0.0, u, g, r);
            prop_assert_eq!(e, 1);
            prop_assert!((cif1(t, g, r) / cause1_probability(g, r) - u).abs() < 1e-9);
        }
    }

    #[test]
    fn subdistribution_hazard_ratios() {
        let s = reference();
        assert!((shr(&s, 1, 0.0).unwrap() - 2.29 / 2.88).abs() < 1e-12);
        assert!((shr(&s, 2, 0.0).unwrap() - 1.95 / 2.88).abs() < 1e-12);
        let cross = (2.88f64 / 1.95).ln() / 0.3;
        assert!((shr(&s, 2, cross).unwrap() - 1.0).abs() < 1e-12);
        assert!((cross - 1.2999).abs() < 1e-3);
        assert!(shr(&s, 3, 0.0).is_err());
    }

    #[test]
    fn quadrature_against_exact_polynomial() {
        let v = integrate(|t| 3.0 * t * t, 0.0, 2.0, 1e-10);
        assert!((v - 8.0).abs() < 1e-10);
        let v = integrate(f64::exp, 0.0, 1.0, 1e-9);
        assert!((v - (std::f64::consts::E - 1.0)).abs() < 1e-8);
    }

    #[test]
    fn truth_vanishes_at_zero_and_grows() {
        let s = reference();
        assert_eq!(true_coefficients(&s, 0.0), [0.0; 3]);
        let mut prev = [0.0f64; 3];
        for i in 1..=30 {
            let b = true_coefficients(&s, i as f64 * 0.1);
            for k in 0..3 {
                assert!(b[k].abs() >= prev[k].abs());
            }
            prev = b;
        }
    }

    #[test]
    fn scenario_validation_and_json() {
        let s = reference();
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("\"00\":2.88"));
        assert_eq!(SimulationScenario::from_json(&text).unwrap(), s);
        let mut bad = s.clone();
        bad.rho.s11 = 0.5;
        assert!(bad.validate().is_err());
        let mut bad = s.clone();
        bad.censor_rate = 0.95;
        assert!(calibrate_censoring(&bad).is_err());
    }

    #[test]
    fn censoring_calibration() {
        let mut s = reference();
        s.censor_rate = 0.0;
        assert_eq!(calibrate_censoring(&s).unwrap(), f64::INFINITY);
        s.censor_rate = 0.25;
        let c = calibrate_with_pilot(&s, 200_000).unwrap();
        let pilot = PilotSample::draw(&s, 200_000);
        assert!((pilot.censored_share(c) - 0.25).abs() < 1e-6);
    }

    #[test]
    fn degenerate_exposure_puts_everyone_in_the_base_stratum() {
        let mut s = SimulationScenario::reference(300, 0.0, 0.0);
        s.exposure_prob = [0.0, 0.0];
        let data = generate_cohort(&s, 3).unwrap();
        assert!(data.records().iter().all(|r| r.covariates == [0.0, 0.0] && r.status.is_event()));
    }

    #[test]
    fn cohorts_are_seed_deterministic() {
        let g = CohortGenerator { scenario: SimulationScenario::reference(200, 0.0, 0.5), c_max: 2.0 };
        let a = g.generate(11).unwrap();
        let b = g.generate(11).unwrap();
        let c = g.generate(12).unwrap();
        assert_eq!(a.records(), b.records());
        assert_ne!(a.records(), c.records());
    }

    fn oracle_config() -> (SimulationScenario, MonteCarloConfig) {
        (SimulationScenario::reference(50, 0.0, 0.5), MonteCarloConfig::new(20, vec![0.75, 1.0], 7))
    }

    #[test]
    fn truth_injection_gives_zero_bias_and_flags_coverage() {
        let (s, config) = oracle_config();
        let truth = TrueValues::new(&s);
        let table = run_monte_carlo_with(&s, &config, |_| {
            Ok(config
                .eval_points
                .iter()
                .map(|&l| truth.coefficients(l).map(|v| Estimate { value: v, se: 0.0 }))
                .collect())
        })
        .unwrap();
        assert_eq!(table.rows.len(), 6);
        for r in &table.rows {
            assert_eq!(r.bias, 0.0);
            assert_eq!(r.rmse, 0.0);
            assert_eq!(r.coverage, None);
            assert_eq!(r.relative_se, None);
        }
        let mut out = Vec::new();
        table.write_csv(&mut out).unwrap();
        assert!(String::from_utf8(out).unwrap().contains(",NA,NA,"));
    }

    #[test]
    fn failing_replications_are_counted_then_fatal() {
        let (s, config) = oracle_config();
        let ok = |v: f64| vec![[Estimate { value: v, se: 1.0 }; 3]; 2];
        let counter = std::sync::atomic::AtomicUsize::new(0);
        let table = run_monte_carlo_with(&s, &config, |d| {
            counter.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
            Ok(ok(d.records()[0].time))
        })
        .unwrap();
        assert_eq!(table.failures, 0);
        assert_eq!(counter.into_inner(), 20);
        let err = run_monte_carlo_with(&s, &config, |d| {
            if d.records()[0].time < 0.3 {
                Err(Error::InvalidInput("boom".into()))
            } else {
                Ok(ok(0.0))
            }
        });
        assert!(matches!(err, Err(Error::TooManyFailures { .. })));
    }

    #[test]
    fn aggregation_ignores_replication_order() {
        let (s, config) = oracle_config();
        let first = run_monte_carlo_with(&s, &config, |d| {
            Ok(vec![[Estimate { value: d.records()[0].time, se: 0.3 }; 3]; 2])
        })
        .unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let second = pool
            .install(|| {
                run_monte_carlo_with(&s, &config, |d| Ok(vec![[Estimate { value: d.records()[0].time, se: 0.3 }; 3]; 2]))
            })
            .unwrap();
        assert_eq!(first, second);
        assert!(stable_sum(vec![0.1, 1e16, -1e16, 0.2]) == stable_sum(vec![-1e16, 0.2, 1e16, 0.1]));
    }

    #[test]
    fn harness_rejects_bad_configs() {
        let (s, mut config) = oracle_config();
        config.replications = 1;
        assert!(run_monte_carlo(&s, &config).is_err());
        config.replications = 2;
        config.eval_points = vec![];
        assert!(run_monte_carlo(&s, &config).is_err());
    }
}
