//! Replica farms over coupled environments, and the statistics built on them.
//!
//! Each replica is a pure function of `(config, n, index)`. Replicas run on a
//! rayon pool and are collected in index order, so reports do not depend on
//! the worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{calibrate_alpha, tv_upper_bound, CouplingKind, CouplingSpec, EpsilonSchedule, Region, ScheduleKind};
use crate::error::{Error, Result};
use crate::fpp::CoupledEdgeEnvironment;
use crate::lattice::{LatticeBox, Point};
use crate::lawcore::WeightLaw;
use crate::lpp::{perturbed_lpp, CoupledVertexEnvironment};
use crate::metrics::{interval_cap_check, fluctuation_interval};
use crate::polymer::perturbed_free_energy;
use crate::rng::{Lane, StreamKey};

pub const SCHEMA_VERSION: u32 = 1;
pub const MASSES: [f64; 3] = [0.5, 0.75, 0.9];
pub const KAPPA_STEPS: u32 = 40;
pub const KAPPA_STEP: f64 = 0.05;
pub const BOOTSTRAP_RESAMPLES: u64 = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    Fpp,
    Lpp,
    Polymer,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    pub kind: CouplingKind,
    #[serde(default = "one")]
    pub m: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub kind: ScheduleKind,
    /// `None` calibrates α per n so that the TV bound meets `tv_target`.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default = "quarter")]
    pub tv_target: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeParams {
    #[serde(default)]
    pub delta: f64,
    #[serde(default = "quarter")]
    pub rho: f64,
    #[serde(default = "one_f")]
    pub beta: f64,
}

impl Default for ProbeParams {
    fn default() -> Self {
        ProbeParams { delta: 0.0, rho: 0.25, beta: 1.0 }
    }
}

fn one() -> u32 {
    1
}
fn one_f() -> f64 {
    1.0
}
fn quarter() -> f64 {
    0.25
}
fn version() -> u32 {
    SCHEMA_VERSION
}
fn box_factor() -> f64 {
    3.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "version")]
    pub version: u32,
    pub model: Model,
    pub law: WeightLaw,
    pub n_list: Vec<u32>,
    pub replicas: u32,
    pub coupling: CouplingConfig,
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub probe: ProbeParams,
    /// Target direction; the endpoint for size n is `n·direction`.
    /// Defaults to e₁ for fpp and (1, 1) for lpp. Polymers are point-to-line.
    #[serde(default)]
    pub direction: Option<Point>,
    /// fpp only: the box radius is `box_factor · n + box_margin`.
    #[serde(default = "box_factor")]
    pub box_factor: f64,
    #[serde(default)]
    pub box_margin: u32,
    pub seed: u64,
    /// Execution only; never echoed into reports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let c: ExperimentConfig = serde_json::from_str(s).map_err(|e| Error::invalid("config", e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCHEMA_VERSION {
            return Err(Error::invalid("version", format!("unsupported version {}", self.version)));
        }
        let want = match self.model {
            Model::Fpp => CouplingKind::Min,
            Model::Lpp | Model::Polymer => CouplingKind::Max,
        };
        if self.coupling.kind != want {
            return Err(Error::Incompatible(format!(
                "{:?} needs the {:?} coupling, got {:?}",
                self.model, want, self.coupling.kind
            )));
        }
        if self.coupling.m == 0 {
            return Err(Error::invalid("coupling.m", "must be >= 1"));
        }
        if self.n_list.is_empty() {
            return Err(Error::invalid("n_list", "must not be empty"));
        }
        if let Some(n) = self.n_list.iter().find(|&&n| n < 2) {
            return Err(Error::invalid("n_list", format!("every n must be >= 2, got {n}")));
        }
        if self.replicas < 2 {
            return Err(Error::invalid("replicas", "must be >= 2"));
        }
        if self.workers == Some(0) {
            return Err(Error::invalid("workers", "must be >= 1"));
        }
        let ok_kind = match self.model {
            Model::Fpp => matches!(self.schedule.kind, ScheduleKind::FppRadial | ScheduleKind::FppBox | ScheduleKind::Uniform),
            _ => matches!(self.schedule.kind, ScheduleKind::LppRadial | ScheduleKind::Uniform),
        };
        if !ok_kind {
            return Err(Error::Incompatible(format!("schedule {:?} does not apply to {:?}", self.schedule.kind, self.model)));
        }
        if let Some(a) = self.schedule.alpha {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(Error::invalid("schedule.alpha", format!("must be finite and >= 0, got {a}")));
            }
        }
        if !(self.schedule.tv_target > 0.0 && self.schedule.tv_target < 1.0) {
            return Err(Error::invalid("schedule.tv_target", "must lie in (0, 1)"));
        }
        if !(self.probe.delta >= 0.0 && self.probe.delta.is_finite()) {
            return Err(Error::invalid("probe.delta", "must be finite and >= 0"));
        }
        if self.model == Model::Polymer && !(self.probe.beta > 0.0 && self.probe.beta.is_finite()) {
            return Err(Error::invalid("probe.beta", "must be finite and > 0"));
        }
        if self.model == Model::Fpp {
            if self.law.essinf() < 0.0 {
                return Err(Error::NegativeWeight { essinf: self.law.essinf() });
            }
            if !(self.box_factor > 0.0 && self.box_factor.is_finite()) {
                return Err(Error::invalid("box_factor", "must be finite and > 0"));
            }
        }
        if let Some(d) = self.direction {
            if self.model == Model::Polymer {
                return Err(Error::invalid("direction", "polymers are point-to-line"));
            }
            if self.model == Model::Lpp && (d.x < 0 || d.y < 0) {
                return Err(Error::invalid("direction", "lpp needs a nonnegative direction"));
            }
            if d == Point::ORIGIN {
                return Err(Error::invalid("direction", "must be nonzero"));
            }
        }
        Ok(())
    }

    pub fn worker_count(&self) -> usize {
        self.workers.unwrap_or(1)
    }

    /// The config as echoed into reports: everything except `workers`.
    pub fn echo(&self) -> ExperimentConfig {
        ExperimentConfig { workers: None, ..self.clone() }
    }

    pub fn spec(&self) -> CouplingSpec {
        CouplingSpec { kind: self.coupling.kind, m: self.coupling.m }
    }

    pub fn target(&self, n: u32) -> Point {
        let d = self.direction.unwrap_or(match self.model {
            Model::Fpp => Point::new(1, 0),
            _ => Point::new(1, 1),
        });
        Point::new(d.x * n as i32, d.y * n as i32)
    }

    fn fpp_box(&self, n: u32) -> LatticeBox {
        let t = self.target(n);
        let dist = f64::from(t.l1());
        let r = (self.box_factor * f64::from(n)).ceil() + f64::from(self.box_margin);
        // express the radius through `around`, whose factor is relative to |t|₁
        LatticeBox::around(Point::ORIGIN, t, r / dist)
    }

    fn base_schedule(&self, n: u32, alpha: f64) -> Result<EpsilonSchedule> {
        let nf = f64::from(n);
        match self.schedule.kind {
            ScheduleKind::FppBox => EpsilonSchedule::fpp_box(alpha, nf, self.probe.delta, Some(self.target(n))),
            k => EpsilonSchedule::new(k, alpha, nf),
        }
    }

    /// Sites whose perturbation can reach the observable.
    pub fn region(&self, n: u32) -> Region {
        match self.model {
            Model::Fpp => Region::EdgeBox(self.fpp_box(n)),
            Model::Lpp => Region::VertexRect { corner: self.target(n) },
            Model::Polymer => Region::VertexTriangle { n },
        }
    }
}

/// α and the resulting TV bound for one n.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub n: u32,
    pub m: u32,
    pub alpha: f64,
    pub tv_bound: f64,
    pub sites: u64,
    pub auto: bool,
}

pub fn calibrate(config: &ExperimentConfig, n: u32) -> Result<Calibration> {
    let region = config.region(n);
    let spec = config.spec();
    let sched = config.base_schedule(n, 1.0)?;
    let (alpha, tv_bound, auto) = match config.schedule.alpha {
        Some(a) => (a, tv_upper_bound(&config.law, &spec, &sched.with_alpha(a), &region)?, false),
        None => {
            let (a, tv) = calibrate_alpha(&config.law, &spec, &sched, &region, config.schedule.tv_target)?;
            (a, tv, true)
        }
    };
    Ok(Calibration { n, m: spec.m, alpha, tv_bound, sites: region.len(), auto })
}

/// One coupled replica. `delta` is the signed gain of the perturbation:
/// `T − T̃` for fpp, `T̃ − T` for lpp, `log Z̃ − log Z` for polymers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicaRecord {
    pub version: u32,
    pub n: u32,
    pub replica: u32,
    pub observable: f64,
    pub perturbed: f64,
    pub delta: f64,
    pub d: f64,
    pub holds: bool,
    pub touched_boundary: bool,
}

pub fn replica_key(seed: u64, n: u32, index: u32) -> StreamKey {
    StreamKey::new(seed).replica(u64::from(n), u64::from(index))
}

pub fn run_replica(config: &ExperimentConfig, cal: &Calibration, index: u32) -> Result<ReplicaRecord> {
    let n = cal.n;
    let key = replica_key(config.seed, n, index);
    let schedule = config.base_schedule(n, cal.alpha)?;
    let spec = config.spec();
    let (observable, perturbed, delta, d, holds, touched) = match config.model {
        Model::Fpp => {
            let env = CoupledEdgeEnvironment::sample(&config.law, spec, &schedule, key, config.fpp_box(n))?;
            if cal.alpha == 0.0 {
                // X̃ ≡ X, so the second search would repeat the first
                let r = crate::fpp::passage_time(env.unperturbed(), Point::ORIGIN, config.target(n))?;
                (r.value, r.value, 0.0, 0.0, true, r.touched_boundary)
            } else {
                let p = env.perturbed_passage(Point::ORIGIN, config.target(n))?;
                (p.t, p.t_tilde, p.t - p.t_tilde, p.d, p.holds(), p.touched_boundary || p.touched_boundary_tilde)
            }
        }
        Model::Lpp => {
            let env = CoupledVertexEnvironment::sample(&config.law, spec, &schedule, key, config.target(n))?;
            let p = perturbed_lpp(&env, config.target(n))?;
            (p.t, p.t_tilde, p.t_tilde - p.t, p.d, p.holds(), false)
        }
        Model::Polymer => {
            let k = n as i32;
            let env = CoupledVertexEnvironment::sample(&config.law, spec, &schedule, key, Point::new(k, k))?;
            let p = perturbed_free_energy(&env, config.probe.beta, n)?;
            (p.log_z, p.log_z_tilde, p.log_z_tilde - p.log_z, p.jensen_lb, p.holds(), false)
        }
    };
    Ok(ReplicaRecord {
        version: SCHEMA_VERSION,
        n,
        replica: index,
        observable,
        perturbed,
        delta,
        d,
        holds,
        touched_boundary: touched,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub count: u64,
    pub mean: f64,
    pub variance: f64,
    pub se: f64,
    pub min: f64,
    pub max: f64,
}

impl SampleStats {
    pub fn of(xs: &[f64]) -> Self {
        let count = xs.len() as u64;
        let nf = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / nf;
        let variance = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0) } else { 0.0 };
        SampleStats {
            count,
            mean,
            variance,
            se: (variance / nf).sqrt(),
            min: xs.iter().cloned().fold(f64::INFINITY, f64::min),
            max: xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Shortest interval at one mass, with the implied cap on its probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WidthRow {
    pub mass: f64,
    pub a: f64,
    pub b: f64,
    pub width: f64,
    /// Bootstrap standard error of the width.
    pub width_se: f64,
    pub cap: IntervalCap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub kappa: f64,
    pub threshold: f64,
    pub prob: f64,
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalCap {
    pub lhs: f64,
    pub bound: f64,
    pub se: f64,
    pub violated: bool,
}

/// `P(a ≤ X ≤ b) ≤ ½(1 + P(|X − Y| ≤ b − a) + tv)` with `tv` an upper bound
/// on the total variation. Flags a violation beyond 3 standard errors.
pub fn interval_cap(x: &[f64], delta: &[f64], tv: f64, a: f64, b: f64) -> Result<IntervalCap> {
    let absdiff: Vec<f64> = delta.iter().map(|d| d.abs()).collect();
    let c = interval_cap_check(x, &absdiff, a, b, tv)?;
    Ok(IntervalCap { lhs: c.lhs, bound: c.rhs, se: c.se, violated: !c.satisfied })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NReport {
    pub n: u32,
    pub calibration: Calibration,
    pub replicas: u64,
    pub observable: SampleStats,
    pub perturbed: SampleStats,
    pub delta: SampleStats,
    pub d: SampleStats,
    pub widths: Vec<WidthRow>,
    pub tail: Vec<TailRow>,
    /// Largest tail probability over the κ grid.
    pub best_tail: TailRow,
    pub pathwise_violations: u64,
    pub boundary_touches: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitModel {
    PowerInN,
    SqrtLogN,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub model: FitModel,
    pub exponent: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

/// Least squares on `(ln n, ln s)` for the power model or `(√ln n, s)` for
/// the sqrt-log model.
pub fn scaling_fit(table: &[(f64, f64)], model: FitModel) -> Result<ScalingFit> {
    if table.len() < 3 {
        return Err(Error::DegenerateFit(format!("need at least 3 points, got {}", table.len())));
    }
    let mut xs = Vec::with_capacity(table.len());
    let mut ys = Vec::with_capacity(table.len());
    for &(n, s) in table {
        if !(n > 1.0) {
            return Err(Error::DegenerateFit(format!("n must exceed 1, got {n}")));
        }
        match model {
            FitModel::PowerInN => {
                if !(s > 0.0) {
                    return Err(Error::DegenerateFit(format!("statistic must be positive, got {s}")));
                }
                xs.push(n.ln());
                ys.push(s.ln());
            }
            FitModel::SqrtLogN => {
                xs.push(n.ln().sqrt());
                ys.push(s);
            }
        }
    }
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all n are equal".into()));
    }
    if syy == 0.0 {
        return Err(Error::DegenerateFit("statistic has zero variance".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Ok(ScalingFit { model, exponent: slope, intercept, r2: 1.0 - ss_res / syy, points: table.len() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluctuationReport {
    pub version: u32,
    pub config: ExperimentConfig,
    pub per_n: Vec<NReport>,
    /// Power fit of the observable's variance across n, when there are at
    /// least three n and the fit is not degenerate.
    pub variance_fit: Option<ScalingFit>,
    pub replicas: u64,
    pub pathwise_violations: u64,
    pub cap_violations: u64,
    pub boundary_touches: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub report: FluctuationReport,
    pub records: Vec<ReplicaRecord>,
}

fn bootstrap_width_se(xs: &[f64], mass: f64, seed: u64, n: u32) -> Result<f64> {
    let key = StreamKey::new(seed).replica(u64::from(n), u64::MAX);
    let len = xs.len();
    let mut widths = Vec::with_capacity(BOOTSTRAP_RESAMPLES as usize);
    let mut buf = vec![0.0; len];
    for b in 0..BOOTSTRAP_RESAMPLES {
        let mut rng = key.stream(b, Lane::Scratch, 0);
        for slot in buf.iter_mut() {
            let i = ((rng.next_open01() * len as f64) as usize).min(len - 1);
            *slot = xs[i];
        }
        widths.push(fluctuation_interval(&buf, mass)?.width);
    }
    Ok(SampleStats::of(&widths).variance.sqrt())
}

/// Aggregates the records of one n.
pub fn summarize_n(config: &ExperimentConfig, cal: &Calibration, records: &[ReplicaRecord]) -> Result<NReport> {
    let n = cal.n;
    let x: Vec<f64> = records.iter().map(|r| r.observable).collect();
    let xt: Vec<f64> = records.iter().map(|r| r.perturbed).collect();
    let delta: Vec<f64> = records.iter().map(|r| r.delta).collect();
    let d: Vec<f64> = records.iter().map(|r| r.d).collect();
    let count = records.len() as f64;
    let mut widths = Vec::new();
    for &mass in &MASSES {
        let iv = fluctuation_interval(&x, mass)?;
        widths.push(WidthRow {
            mass,
            a: iv.a,
            b: iv.b,
            width: iv.width,
            width_se: bootstrap_width_se(&x, mass, config.seed, n)?,
            cap: interval_cap(&x, &delta, cal.tv_bound, iv.a, iv.b)?,
        });
    }
    let scale = f64::from(n).ln().sqrt();
    let tail: Vec<TailRow> = (1..=KAPPA_STEPS)
        .map(|j| {
            let kappa = KAPPA_STEP * f64::from(j);
            let threshold = kappa * scale;
            let prob = delta.iter().filter(|&&v| v >= threshold).count() as f64 / count;
            TailRow { kappa, threshold, prob, se: (prob * (1.0 - prob) / count).sqrt() }
        })
        .collect();
    // ties go to the smaller κ
    let best_tail = tail.iter().fold(tail[0].clone(), |best, t| if t.prob > best.prob { t.clone() } else { best });
    Ok(NReport {
        n,
        calibration: cal.clone(),
        replicas: records.len() as u64,
        observable: SampleStats::of(&x),
        perturbed: SampleStats::of(&xt),
        delta: SampleStats::of(&delta),
        d: SampleStats::of(&d),
        widths,
        tail,
        best_tail,
        pathwise_violations: records.iter().filter(|r| !r.holds).count() as u64,
        boundary_touches: records.iter().filter(|r| r.touched_boundary).count() as u64,
    })
}

/// Builds the report from per-n calibrations and all records, which must be
/// grouped by n in `n_list` order.
pub fn summarize(config: &ExperimentConfig, cals: &[Calibration], records: &[ReplicaRecord]) -> Result<FluctuationReport> {
    let mut per_n = Vec::new();
    for cal in cals {
        let rs: Vec<ReplicaRecord> = records.iter().filter(|r| r.n == cal.n).cloned().collect();
        if rs.len() < 2 {
            return Err(Error::invalid("records", format!("n = {} has {} records, need >= 2", cal.n, rs.len())));
        }
        per_n.push(summarize_n(config, cal, &rs)?);
    }
    let covered: u64 = per_n.iter().map(|r| r.replicas).sum();
    if covered != records.len() as u64 {
        return Err(Error::invalid("records", format!("{} records do not belong to any n", records.len() as u64 - covered)));
    }
    let variance_fit = if per_n.len() >= 3 {
        let table: Vec<(f64, f64)> = per_n.iter().map(|r| (f64::from(r.n), r.observable.variance)).collect();
        scaling_fit(&table, FitModel::PowerInN).ok()
    } else {
        None
    };
    Ok(FluctuationReport {
        version: SCHEMA_VERSION,
        config: config.echo(),
        replicas: records.len() as u64,
        pathwise_violations: per_n.iter().map(|r| r.pathwise_violations).sum(),
        cap_violations: per_n.iter().map(|r| r.widths.iter().filter(|w| w.cap.violated).count() as u64).sum(),
        boundary_touches: per_n.iter().map(|r| r.boundary_touches).sum(),
        per_n,
        variance_fit,
    })
}

/// Runs every replica for every n on a pool of `config.workers` threads.
pub fn run_coupled_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.worker_count())
        .build()
        .map_err(|e| Error::invalid("workers", e.to_string()))?;
    let mut cals = Vec::new();
    let mut records = Vec::new();
    for &n in &config.n_list {
        let cal = calibrate(config, n)?;
        let batch: Vec<Result<ReplicaRecord>> =
            pool.install(|| (0..config.replicas).into_par_iter().map(|i| run_replica(config, &cal, i)).collect());
        for r in batch {
            records.push(r?);
        }
        cals.push(cal);
    }
    let report = summarize(config, &cals, &records)?;
    Ok(ExperimentOutput { report, records })
}

/// Concatenates runs that differ only in seed and replica count, then
/// rebuilds the report. Merged replicas keep their original seeds, so the
/// merged config records the first seed and the summed replica count.
pub fn merge_outputs(outputs: &[ExperimentOutput]) -> Result<ExperimentOutput> {
    let first = outputs.first().ok_or_else(|| Error::invalid("reports", "nothing to merge"))?;
    let base = &first.report.config;
    let mut records = Vec::new();
    let mut replicas = 0u32;
    for o in outputs {
        let c = &o.report.config;
        let same = ExperimentConfig { seed: base.seed, replicas: base.replicas, ..c.clone() };
        if &same != base {
            return Err(Error::Incompatible("reports differ in more than seed and replica count".into()));
        }
        let cals_a: Vec<_> = o.report.per_n.iter().map(|r| (r.n, r.calibration.alpha.to_bits())).collect();
        let cals_b: Vec<_> = first.report.per_n.iter().map(|r| (r.n, r.calibration.alpha.to_bits())).collect();
        if cals_a != cals_b {
            return Err(Error::Incompatible("reports were calibrated differently".into()));
        }
        replicas += c.replicas;
    }
    for n in &base.n_list {
        for o in outputs {
            records.extend(o.records.iter().filter(|r| r.n == *n).cloned());
        }
    }
    let config = ExperimentConfig { replicas, ..base.clone() };
    let cals: Vec<Calibration> = first.report.per_n.iter().map(|r| r.calibration.clone()).collect();
    let report = summarize(&config, &cals, &records)?;
    Ok(ExperimentOutput { report, records })
}

/// One row of the directed-percolation probe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedSitesRow {
    pub n: u32,
    pub seeds: u32,
    pub mean_fraction: f64,
    /// Empirical `P(min closed < ρn)`.
    pub prob: f64,
    pub se: f64,
}

/// Runs `min_closed_sites` over `seeds` replica keys for each n.
pub fn closed_sites_probe(p: f64, rho: f64, n_list: &[u32], seeds: u32, seed: u64, workers: usize) -> Result<Vec<ClosedSitesRow>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::invalid("workers", e.to_string()))?;
    let mut rows = Vec::new();
    for &n in n_list {
        let mins: Vec<Result<u32>> = pool.install(|| {
            (0..seeds).into_par_iter().map(|i| crate::lpp::min_closed_sites(p, n, replica_key(seed, n, i))).collect()
        });
        let mins: Vec<u32> = mins.into_iter().collect::<Result<_>>()?;
        let k = f64::from(seeds);
        let hits = mins.iter().filter(|&&m| f64::from(m) < rho * f64::from(n)).count() as f64;
        let prob = hits / k;
        rows.push(ClosedSitesRow {
            n,
            seeds,
            mean_fraction: mins.iter().map(|&m| f64::from(m)).sum::<f64>() / (k * f64::from(n)),
            prob,
            se: (prob * (1.0 - prob) / k).sqrt(),
        });
    }
    Ok(rows)
}
