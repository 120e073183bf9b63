//! Weight laws with exact CDF access, and checks of the percolation-type
//! conditions that make fluctuation lower bounds available.
//!
//! Laws serialize as `{"kind": ..., "params": {...}, "offset": ...}` with an
//! optional `"version": 1`. Every kind is shifted by `offset`.

use rand_distr::{Distribution, Gamma as GammaSampler};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma as GammaDist};

use crate::error::{Error, Result};
use crate::metrics::DiscreteLaw;
use crate::rng::{CounterRng, Lane, StreamKey};

/// Critical probability of undirected bond percolation on Z².
pub const P_C_BOND: f64 = 0.5;
/// Rigorous upper bound on the directed bond threshold of Z².
pub const P_C_DIRECTED_BOND_UPPER: f64 = 0.6735;
/// Numerical estimate of the directed bond threshold (informational only).
pub const P_C_DIRECTED_BOND_ESTIMATE: f64 = 0.6445;
/// Rigorous upper bound on the directed site threshold of Z².
pub const P_C_DIRECTED_SITE_UPPER: f64 = 0.75;

pub const LAW_SCHEMA_VERSION: u32 = 1;

/// Tail mass below which a geometric law is truncated when tabulated.
const GEOMETRIC_TAIL: f64 = 1e-18;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case")]
pub enum LawKind {
    Exponential { rate: f64 },
    /// Number of failures before the first success: `P(k) = (1 − p)^k p`.
    Geometric { p: f64 },
    /// `a` with probability `p`, `b` otherwise.
    BernoulliTwoPoint { a: f64, b: f64, p: f64 },
    Uniform { lo: f64, hi: f64 },
    FiniteDiscrete { atoms: Vec<f64>, probs: Vec<f64> },
    Gamma { shape: f64, scale: f64 },
}

#[derive(Serialize, Deserialize)]
struct LawDescriptor {
    #[serde(default = "default_version")]
    version: u32,
    #[serde(flatten)]
    kind: LawKind,
    #[serde(default)]
    offset: f64,
}

fn default_version() -> u32 {
    LAW_SCHEMA_VERSION
}

/// An i.i.d. weight distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LawDescriptor", into = "LawDescriptor")]
pub struct WeightLaw {
    kind: LawKind,
    offset: f64,
}

impl TryFrom<LawDescriptor> for WeightLaw {
    type Error = Error;

    fn try_from(d: LawDescriptor) -> Result<Self> {
        if d.version != LAW_SCHEMA_VERSION {
            return Err(Error::invalid(
                "version",
                format!("unsupported law schema version {}", d.version),
            ));
        }
        WeightLaw::with_offset(d.kind, d.offset)
    }
}

impl From<WeightLaw> for LawDescriptor {
    fn from(w: WeightLaw) -> Self {
        LawDescriptor { version: LAW_SCHEMA_VERSION, kind: w.kind, offset: w.offset }
    }
}

fn check(cond: bool, field: &str, reason: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::invalid(field, reason()))
    }
}

impl WeightLaw {
    pub fn new(kind: LawKind) -> Result<Self> {
        Self::with_offset(kind, 0.0)
    }

    pub fn with_offset(kind: LawKind, offset: f64) -> Result<Self> {
        check(offset.is_finite(), "offset", || format!("must be finite, got {offset}"))?;
        match &kind {
            LawKind::Exponential { rate } => {
                check(rate.is_finite() && *rate > 0.0, "params.rate", || format!("must be > 0, got {rate}"))?
            }
            LawKind::Geometric { p } => {
                check(*p > 0.0 && *p < 1.0, "params.p", || format!("must lie in (0, 1), got {p}"))?
            }
            LawKind::BernoulliTwoPoint { a, b, p } => {
                check(a.is_finite() && b.is_finite() && a < b, "params.a", || {
                    format!("need finite a < b, got a = {a}, b = {b}")
                })?;
                check((0.0..=1.0).contains(p), "params.p", || format!("must lie in [0, 1], got {p}"))?;
            }
            LawKind::Uniform { lo, hi } => check(lo.is_finite() && hi.is_finite() && lo < hi, "params.lo", || {
                format!("need finite lo < hi, got lo = {lo}, hi = {hi}")
            })?,
            LawKind::FiniteDiscrete { atoms, probs } => {
                DiscreteLaw::new(atoms.clone(), probs.clone()).map_err(|e| match e {
                    Error::Invalid { field, reason } => Error::Invalid { field: format!("params.{field}"), reason },
                    other => other,
                })?;
            }
            LawKind::Gamma { shape, scale } => {
                check(shape.is_finite() && *shape > 0.0, "params.shape", || format!("must be > 0, got {shape}"))?;
                check(scale.is_finite() && *scale > 0.0, "params.scale", || format!("must be > 0, got {scale}"))?;
            }
        }
        Ok(WeightLaw { kind, offset })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        Self::new(LawKind::Exponential { rate })
    }

    pub fn geometric(p: f64) -> Result<Self> {
        Self::new(LawKind::Geometric { p })
    }

    pub fn two_point(a: f64, b: f64, p: f64) -> Result<Self> {
        Self::new(LawKind::BernoulliTwoPoint { a, b, p })
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Self::new(LawKind::Uniform { lo, hi })
    }

    pub fn finite(atoms: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        Self::new(LawKind::FiniteDiscrete { atoms, probs })
    }

    pub fn gamma(shape: f64, scale: f64) -> Result<Self> {
        Self::new(LawKind::Gamma { shape, scale })
    }

    /// A point mass, represented as a two-point law with all mass on `a`.
    pub fn point_mass(at: f64) -> Self {
        WeightLaw { kind: LawKind::BernoulliTwoPoint { a: at, b: at + 1.0, p: 1.0 }, offset: 0.0 }
    }

    pub fn kind(&self) -> &LawKind {
        &self.kind
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self.kind, LawKind::Exponential { .. } | LawKind::Uniform { .. } | LawKind::Gamma { .. })
    }

    /// Inverse-CDF transform of a uniform on (0, 1). `None` for gamma, which
    /// is sampled by rejection instead.
    #[inline]
    pub fn quantile_of_uniform(&self, u: f64) -> Option<f64> {
        let raw = match &self.kind {
            LawKind::Exponential { rate } => -u.ln() / rate,
            LawKind::Geometric { p } => (u.ln() / (1.0 - p).ln()).floor(),
            LawKind::BernoulliTwoPoint { a, b, p } => {
                if u < *p {
                    *a
                } else {
                    *b
                }
            }
            LawKind::Uniform { lo, hi } => lo + (hi - lo) * u,
            LawKind::FiniteDiscrete { atoms, probs } => {
                let mut acc = 0.0;
                let mut out = *atoms.last().unwrap();
                for (a, p) in atoms.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        out = *a;
                        break;
                    }
                }
                out
            }
            LawKind::Gamma { .. } => return None,
        };
        Some(raw + self.offset)
    }

    /// Draws one value from a counter stream.
    pub fn sample(&self, rng: &mut CounterRng) -> f64 {
        match &self.kind {
            LawKind::Gamma { shape, scale } => {
                let g = GammaSampler::new(*shape, *scale).expect("validated gamma parameters");
                g.sample(rng) + self.offset
            }
            _ => {
                let u = rng.next_open01();
                self.quantile_of_uniform(u).expect("inverse-CDF kind")
            }
        }
    }

    /// Value for `(site, lane, stream)` under `key`; identical to
    /// `sample(&mut key.stream(site, lane, stream))` but cheaper.
    #[inline]
    pub fn sample_at(&self, key: StreamKey, site: u64, lane: Lane, stream: u16) -> f64 {
        match self.quantile_of_uniform(key.uniform(site, lane, stream)) {
            Some(v) => v,
            None => self.sample(&mut key.stream(site, lane, stream)),
        }
    }

    /// `P(X ≤ t)`.
    pub fn cdf(&self, t: f64) -> f64 {
        let x = t - self.offset;
        if t.is_nan() {
            return f64::NAN;
        }
        match &self.kind {
            LawKind::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
            LawKind::Geometric { p } => {
                if x < 0.0 {
                    0.0
                } else if x.is_infinite() {
                    1.0
                } else {
                    1.0 - (1.0 - p).powf(x.floor() + 1.0)
                }
            }
            LawKind::BernoulliTwoPoint { a, b, p } => {
                if x < *a {
                    0.0
                } else if x < *b {
                    *p
                } else {
                    1.0
                }
            }
            LawKind::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            LawKind::FiniteDiscrete { atoms, probs } => {
                let k = atoms.partition_point(|a| *a <= x);
                probs[..k].iter().sum::<f64>().min(1.0)
            }
            LawKind::Gamma { shape, scale } => {
                if x <= 0.0 {
                    0.0
                } else if x.is_infinite() {
                    1.0
                } else {
                    GammaDist::new(*shape, 1.0 / scale).expect("validated gamma parameters").cdf(x)
                }
            }
        }
    }

    /// `P(X < t)`.
    pub fn cdf_left(&self, t: f64) -> f64 {
        match self.atoms() {
            Some(d) => (self.cdf(t) - d.pmf(t)).max(0.0),
            None => self.cdf(t),
        }
    }

    /// The atoms of a discrete law. Geometric laws are truncated once the
    /// remaining tail is below 1e-18.
    pub fn atoms(&self) -> Option<DiscreteLaw> {
        let o = self.offset;
        let law = match &self.kind {
            LawKind::BernoulliTwoPoint { a, b, p } => {
                let pairs: Vec<(f64, f64)> =
                    [(a + o, *p), (b + o, 1.0 - p)].into_iter().filter(|(_, w)| *w > 0.0).collect();
                DiscreteLaw::from_pairs(pairs)
            }
            LawKind::FiniteDiscrete { atoms, probs } => {
                let pairs: Vec<(f64, f64)> =
                    atoms.iter().zip(probs).filter(|(_, w)| **w > 0.0).map(|(a, w)| (a + o, *w)).collect();
                DiscreteLaw::from_pairs(pairs)
            }
            LawKind::Geometric { p } => {
                let q = 1.0 - p;
                let mut pairs = Vec::new();
                let mut tail = 1.0;
                let mut k = 0.0;
                while tail > GEOMETRIC_TAIL {
                    let w = tail * p;
                    pairs.push((k + o, w));
                    tail *= q;
                    k += 1.0;
                }
                // the truncated tail is folded into the last atom so the
                // table stays a probability vector
                if let Some(last) = pairs.last_mut() {
                    last.1 += tail;
                }
                DiscreteLaw::from_pairs(pairs)
            }
            _ => return None,
        };
        Some(law.expect("atoms of a validated law form a simplex"))
    }

    pub fn essinf(&self) -> f64 {
        let o = self.offset;
        match &self.kind {
            LawKind::Exponential { .. } | LawKind::Geometric { .. } | LawKind::Gamma { .. } => o,
            LawKind::BernoulliTwoPoint { a, b, p } => o + if *p > 0.0 { *a } else { *b },
            LawKind::Uniform { lo, .. } => o + lo,
            LawKind::FiniteDiscrete { .. } => self.atoms().unwrap().atoms()[0],
        }
    }

    pub fn esssup(&self) -> f64 {
        let o = self.offset;
        match &self.kind {
            LawKind::Exponential { .. } | LawKind::Geometric { .. } | LawKind::Gamma { .. } => f64::INFINITY,
            LawKind::BernoulliTwoPoint { a, b, p } => o + if *p < 1.0 { *b } else { *a },
            LawKind::Uniform { hi, .. } => o + hi,
            LawKind::FiniteDiscrete { .. } => *self.atoms().unwrap().atoms().last().unwrap(),
        }
    }

    pub fn mean(&self) -> f64 {
        let o = self.offset;
        o + match &self.kind {
            LawKind::Exponential { rate } => 1.0 / rate,
            LawKind::Geometric { p } => (1.0 - p) / p,
            LawKind::BernoulliTwoPoint { a, b, p } => p * a + (1.0 - p) * b,
            LawKind::Uniform { lo, hi } => 0.5 * (lo + hi),
            LawKind::FiniteDiscrete { atoms, probs } => atoms.iter().zip(probs).map(|(a, p)| a * p).sum(),
            LawKind::Gamma { shape, scale } => shape * scale,
        }
    }

    pub fn atom_at(&self, t: f64) -> f64 {
        match self.atoms() {
            Some(d) => d.pmf(t),
            None => 0.0,
        }
    }

    /// A law with a single atom carrying all the mass.
    pub fn is_degenerate(&self) -> bool {
        self.essinf() == self.esssup()
    }
}

/// `P(min(X, X¹, …, X^m) ≤ t) = 1 − (1 − F(t))^{m+1}`.
pub fn min_of_m_cdf(law: &WeightLaw, m: u32, t: f64) -> f64 {
    1.0 - (1.0 - law.cdf(t)).powi(m as i32 + 1)
}

/// `P(max(X, X¹, …, X^m) ≤ t) = F(t)^{m+1}`.
pub fn max_of_m_cdf(law: &WeightLaw, m: u32, t: f64) -> f64 {
    law.cdf(t).powi(m as i32 + 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentFlag {
    KnownFinite,
    KnownInfinite,
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub essinf: f64,
    pub esssup: f64,
    pub atom_at_essinf: f64,
    pub atom_at_esssup: f64,
    pub nondegenerate: bool,
    /// `P(X = s) < p_c(Z²) = 1/2`.
    pub passes_undirected: bool,
    /// `P(X = s) < 0.6735`, the rigorous directed bond bound.
    pub passes_directed_bond: bool,
    /// `P(X = S) < 3/4`, the rigorous directed site bound.
    pub passes_directed_site: bool,
    /// Comparison against the non-rigorous directed bond estimate 0.6445.
    pub below_directed_bond_estimate: bool,
    /// `E min(X¹, …, X⁴)² < ∞`.
    pub moment_flag_min4_sq: MomentFlag,
}

pub fn check_conditions(law: &WeightLaw) -> ConditionReport {
    let s = law.essinf();
    let big_s = law.esssup();
    let atom_s = law.atom_at(s);
    let atom_big_s = if big_s.is_finite() { law.atom_at(big_s) } else { 0.0 };
    // every built-in kind has finite moments of all orders
    let moment = MomentFlag::KnownFinite;
    ConditionReport {
        essinf: s,
        esssup: big_s,
        atom_at_essinf: atom_s,
        atom_at_esssup: atom_big_s,
        nondegenerate: !law.is_degenerate(),
        passes_undirected: atom_s < P_C_BOND,
        passes_directed_bond: atom_s < P_C_DIRECTED_BOND_UPPER,
        passes_directed_site: atom_big_s < P_C_DIRECTED_SITE_UPPER,
        below_directed_bond_estimate: atom_s < P_C_DIRECTED_BOND_ESTIMATE,
        moment_flag_min4_sq: moment,
    }
}

/// Smallest `m` with `P(min(X¹, …, X^m) ≤ s + δ) > 1 − (1/3)^{1/ρ}`.
pub fn calibrate_m(law: &WeightLaw, delta: f64, rho: f64) -> Result<u32> {
    if !(delta > 0.0) {
        return Err(Error::invalid("delta", format!("must be > 0, got {delta}")));
    }
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::invalid("rho", format!("must lie in (0, 1), got {rho}")));
    }
    let f = law.cdf(law.essinf() + delta);
    if f <= 0.0 {
        return Err(Error::NonCalibratable { delta });
    }
    let q = 1.0 - f;
    let target = (1.0f64 / 3.0).powf(1.0 / rho);
    let holds = |m: u32| 1.0 - q.powi(m as i32) > 1.0 - target;
    if q <= 0.0 {
        return Ok(1);
    }
    let guess = (target.ln() / q.ln()).floor().max(1.0);
    if guess > f64::from(u32::MAX - 2) {
        return Err(Error::NonCalibratable { delta });
    }
    let mut m = (guess as u32).saturating_sub(1).max(1);
    while !holds(m) {
        m += 1;
    }
    while m > 1 && holds(m - 1) {
        m -= 1;
    }
    Ok(m)
}

/// Truncation level `S′` and smallest `m` for the max-coupling of LPP.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxCalibration {
    pub s_prime: f64,
    pub delta: f64,
    /// `P(X ≥ S′ − 2δ)`
    pub upper_tail: f64,
    pub m: u32,
}

/// Picks `S′` with `P(X ≥ S′ − 2δ) < threshold` (`S′ = S` when `S < ∞`), then
/// the smallest `m` with `P(max(X¹..X^m) < S′ − δ) < threshold − P(X ≥ S′ − 2δ)`.
pub fn calibrate_max_coupling(law: &WeightLaw, delta: f64, threshold: f64) -> Result<MaxCalibration> {
    if !(delta > 0.0) {
        return Err(Error::invalid("delta", format!("must be > 0, got {delta}")));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::invalid("threshold", format!("must lie in (0, 1], got {threshold}")));
    }
    let tail = |t: f64| 1.0 - law.cdf_left(t);
    let s_prime = if law.esssup().is_finite() {
        law.esssup()
    } else {
        // tail(S' - 2δ) is nonincreasing in S'; bracket then bisect
        let mut lo = law.essinf();
        let mut hi = lo.abs().max(1.0);
        while tail(hi - 2.0 * delta) >= threshold {
            hi *= 2.0;
            if hi > 1e300 {
                return Err(Error::NonCalibratable { delta });
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if tail(mid - 2.0 * delta) < threshold {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    let upper_tail = tail(s_prime - 2.0 * delta);
    if upper_tail >= threshold {
        return Err(Error::NonCalibratable { delta });
    }
    let gap = threshold - upper_tail;
    let below = law.cdf_left(s_prime - delta);
    if below >= 1.0 {
        return Err(Error::NonCalibratable { delta });
    }
    let mut m = 1u32;
    while below.powi(m as i32) >= gap {
        m += 1;
        if m > 1_000_000 {
            return Err(Error::NonCalibratable { delta });
        }
    }
    Ok(MaxCalibration { s_prime, delta, upper_tail, m })
}
