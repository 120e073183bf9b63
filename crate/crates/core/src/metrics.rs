//! Probability distances (Hellinger affinity, total variation), the
//! shortest-interval fluctuation statistic, and the coupling bound
//! `P(a ≤ X ≤ b) ≤ ½(1 + P(|X − Y| ≤ b − a) + d_tv)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SIMPLEX_TOL: f64 = 1e-12;

/// A law with finitely many atoms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteLaw {
    atoms: Vec<f64>,
    probs: Vec<f64>,
}

impl DiscreteLaw {
    /// Atoms must be finite and strictly increasing; probabilities must be
    /// nonnegative and sum to one within 1e-12.
    pub fn new(atoms: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::invalid("atoms", "must be nonempty"));
        }
        if atoms.len() != probs.len() {
            return Err(Error::invalid(
                "probs",
                format!("length {} does not match {} atoms", probs.len(), atoms.len()),
            ));
        }
        if atoms.iter().any(|a| !a.is_finite()) {
            return Err(Error::invalid("atoms", "must be finite"));
        }
        if atoms.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("atoms", "must be strictly increasing"));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::invalid("probs", "must be nonnegative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::invalid("probs", format!("sum to {total}, expected 1")));
        }
        Ok(DiscreteLaw { atoms, probs })
    }

    pub fn point_mass(at: f64) -> Self {
        DiscreteLaw { atoms: vec![at], probs: vec![1.0] }
    }

    /// Builds a law from `(atom, prob)` pairs in any order, merging duplicates.
    pub fn from_pairs(mut pairs: Vec<(f64, f64)>) -> Result<Self> {
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut atoms: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut probs: Vec<f64> = Vec::with_capacity(pairs.len());
        for (a, p) in pairs {
            if atoms.last() == Some(&a) {
                *probs.last_mut().unwrap() += p;
            } else {
                atoms.push(a);
                probs.push(p);
            }
        }
        DiscreteLaw::new(atoms, probs)
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn pmf(&self, t: f64) -> f64 {
        match self.atoms.binary_search_by(|a| a.total_cmp(&t)) {
            Ok(i) => self.probs[i],
            Err(_) => 0.0,
        }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        let k = self.atoms.partition_point(|a| *a <= t);
        self.probs[..k].iter().sum::<f64>().min(1.0)
    }

    /// Product law of `self` and `other` on pairs, flattened to a law on
    /// pair indices `i * other.len() + j` (atoms are the indices).
    pub fn product(&self, other: &DiscreteLaw) -> DiscreteLaw {
        let mut probs = Vec::with_capacity(self.atoms.len() * other.atoms.len());
        for p in &self.probs {
            for q in &other.probs {
                probs.push(p * q);
            }
        }
        let atoms = (0..probs.len()).map(|i| i as f64).collect();
        DiscreteLaw { atoms, probs }
    }
}

/// Walks the union of the two supports in increasing order.
fn merged<'a>(p: &'a DiscreteLaw, q: &'a DiscreteLaw) -> impl Iterator<Item = (f64, f64, f64)> + 'a {
    let (mut i, mut j) = (0usize, 0usize);
    std::iter::from_fn(move || {
        let pa = p.atoms.get(i).copied();
        let qa = q.atoms.get(j).copied();
        match (pa, qa) {
            (None, None) => None,
            (Some(a), None) => {
                i += 1;
                Some((a, p.probs[i - 1], 0.0))
            }
            (None, Some(b)) => {
                j += 1;
                Some((b, 0.0, q.probs[j - 1]))
            }
            (Some(a), Some(b)) => {
                if a < b {
                    i += 1;
                    Some((a, p.probs[i - 1], 0.0))
                } else if b < a {
                    j += 1;
                    Some((b, 0.0, q.probs[j - 1]))
                } else {
                    i += 1;
                    j += 1;
                    Some((a, p.probs[i - 1], q.probs[j - 1]))
                }
            }
        }
    })
}

/// `ρ(p, q) = Σ_t √(p(t) q(t))`.
pub fn hellinger_affinity(p: &DiscreteLaw, q: &DiscreteLaw) -> f64 {
    merged(p, q).map(|(_, a, b)| (a * b).sqrt()).sum::<f64>().clamp(0.0, 1.0)
}

/// `d_tv(p, q) = ½ Σ_t |p(t) − q(t)|`.
pub fn tv_distance(p: &DiscreteLaw, q: &DiscreteLaw) -> f64 {
    (0.5 * merged(p, q).map(|(_, a, b)| (a - b).abs()).sum::<f64>()).clamp(0.0, 1.0)
}

/// Law of `X̃`: `q` with probability `eps`, `p` otherwise.
pub fn mixture_with(p: &DiscreteLaw, q: &DiscreteLaw, eps: f64) -> Result<DiscreteLaw> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::invalid("eps", format!("{eps} not in [0, 1]")));
    }
    let mut atoms = Vec::new();
    let mut probs = Vec::new();
    for (t, a, b) in merged(p, q) {
        let w = (1.0 - eps) * a + eps * b;
        if w > 0.0 {
            atoms.push(t);
            probs.push(w);
        }
    }
    Ok(DiscreteLaw { atoms, probs })
}

/// `1 − √(1 − x) − x/2` summed against `p` reduces, once `Σ p·x = 0`, to
/// `Σ p · x² / (2(1 + √(1 − x))²)`, which has no cancellation for small x.
#[inline]
fn stable_deficit_term(x: f64) -> f64 {
    let r = (1.0 - x).max(0.0).sqrt();
    x * x / (2.0 * (1.0 + r) * (1.0 + r))
}

/// `1 − ρ(p, (1 − ε)p + εq)` computed without cancellation. Requires `q ≪ p`.
pub fn mixture_affinity_deficit(p: &DiscreteLaw, q: &DiscreteLaw, eps: f64) -> Result<f64> {
    let mut total = 0.0;
    for (t, a, b) in merged(p, q) {
        if a == 0.0 {
            if b > 0.0 {
                return Err(Error::SupportViolation { atom: t });
            }
            continue;
        }
        let x = eps * (1.0 - b / a);
        total += a * stable_deficit_term(x);
    }
    Ok(total)
}

/// One row of [`affinity_quadratic_check`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticRow {
    pub eps: f64,
    /// `1 − ρ(p, (1 − ε)p + εq)`
    pub deficit: f64,
    /// `(1 − ρ) / ε²`
    pub ratio: f64,
}

/// The ε → 0 limit of `(1 − ρ)/ε²`: `(1/8) Σ_t (1 − g(t))² p(t)` with `g = dq/dp`.
pub fn quadratic_limit(p: &DiscreteLaw, q: &DiscreteLaw) -> Result<f64> {
    let mut total = 0.0;
    for (t, a, b) in merged(p, q) {
        if a == 0.0 {
            if b > 0.0 {
                return Err(Error::SupportViolation { atom: t });
            }
            continue;
        }
        let g = b / a;
        total += (1.0 - g) * (1.0 - g) * a;
    }
    Ok(total / 8.0)
}

/// Tabulates `1 − ρ(λ_X, λ_X̃)` and its ratio to ε² over a grid of ε.
pub fn affinity_quadratic_check(
    p: &DiscreteLaw,
    q: &DiscreteLaw,
    eps_grid: &[f64],
) -> Result<Vec<QuadraticRow>> {
    eps_grid
        .iter()
        .map(|&eps| {
            if !(eps > 0.0 && eps <= 1.0) {
                return Err(Error::invalid("eps_grid", format!("{eps} not in (0, 1]")));
            }
            let deficit = mixture_affinity_deficit(p, q, eps)?;
            Ok(QuadraticRow { eps, deficit, ratio: deficit / (eps * eps) })
        })
        .collect()
}

/// Adaptive Simpson quadrature. Returns the estimate and an error bound
/// assembled from the Richardson differences of accepted panels.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> (f64, f64) {
    fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
        h / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
        err: &mut f64,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, m - a);
        let right = simpson(fm, frm, fb, b - m);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            *err += diff.abs() / 15.0 + f64::EPSILON * (left + right).abs();
            return left + right + diff / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1, err)
            + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1, err)
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(fa, fm, fb, b - a);
    // scale for the relative tolerance from a coarse pass
    let coarse = {
        let n = 16;
        let h = (b - a) / n as f64;
        (0..n)
            .map(|i| {
                let x0 = a + i as f64 * h;
                simpson(f(x0), f(x0 + 0.5 * h), f(x0 + h), h)
            })
            .sum::<f64>()
    };
    let tol = (rel_tol * coarse.abs()).max(abs_tol);
    let mut err = 0.0;
    let value = recurse(f, a, b, fa, fm, fb, whole, tol, 48, &mut err);
    (value, err)
}

/// `1 − ρ(λ_X, λ_X̃)` for an atomless law under the min- or max-of-m
/// coupling. With `u = F(X)` uniform, `dλ_X′/dλ_X = (m + 1) v^m` for
/// `v = 1 − u` (min) or `v = u` (max), so the affinity does not depend on the
/// law itself. Returns the quadrature value and its error bound.
pub fn continuous_mixture_deficit(m: u32, eps: f64) -> (f64, f64) {
    if eps == 0.0 {
        return (0.0, 0.0);
    }
    let mp1 = f64::from(m) + 1.0;
    let mi = m as i32;
    // deficit = ε² ∫ h² / (2 (1 + √(1 − εh))²) dv with h = 1 − (m+1) v^m
    let integrand = |v: f64| {
        let h = 1.0 - mp1 * v.powi(mi);
        let r = (1.0 - eps * h).sqrt();
        h * h / (2.0 * (1.0 + r) * (1.0 + r))
    };
    let (val, err) = adaptive_simpson(&integrand, 0.0, 1.0, 1e-12, 1e-300);
    (eps * eps * val, eps * eps * err)
}

/// Shortest interval over the sample's order statistics holding a target mass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalEstimate {
    pub a: f64,
    pub b: f64,
    /// Empirical fraction of samples in `[a, b]`.
    pub mass: f64,
    pub width: f64,
}

/// Shortest window `[a, b]` containing `⌈mass · N⌉` order statistics; ties go
/// to the smallest `a`.
pub fn fluctuation_interval(samples: &[f64], mass: f64) -> Result<IntervalEstimate> {
    if samples.len() < 2 {
        return Err(Error::invalid("samples", "need at least 2 samples"));
    }
    if !(mass > 0.0 && mass < 1.0) {
        return Err(Error::invalid("mass", format!("{mass} not in (0, 1)")));
    }
    if samples.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("samples", "contain NaN"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let k = ((mass * n as f64).ceil() as usize).clamp(1, n);
    let mut best = 0usize;
    let mut best_w = f64::INFINITY;
    for i in 0..=(n - k) {
        let w = sorted[i + k - 1] - sorted[i];
        if w < best_w {
            best_w = w;
            best = i;
        }
    }
    let a = sorted[best];
    let b = sorted[best + k - 1];
    let lo = sorted.partition_point(|s| *s < a);
    let hi = sorted.partition_point(|s| *s <= b);
    Ok(IntervalEstimate { a, b, mass: (hi - lo) as f64 / n as f64, width: b - a })
}

/// Outcome of checking `P(a ≤ X ≤ b) ≤ ½(1 + P(|X − Y| ≤ b − a) + tv)` on samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// Monte Carlo standard error of `lhs − rhs`, bounded by the sum of parts.
    pub se: f64,
    pub satisfied: bool,
}

/// Evaluates the coupling bound on samples of `X` and of `|X − Y|`.
/// `satisfied` allows a `3·SE` Monte Carlo slack.
pub fn interval_cap_check(x_samples: &[f64], absdiff_samples: &[f64], a: f64, b: f64, tv: f64) -> Result<BoundCheck> {
    if a > b {
        return Err(Error::invalid("a", format!("{a} > b = {b}")));
    }
    if !(0.0..=1.0).contains(&tv) {
        return Err(Error::invalid("tv", format!("{tv} not in [0, 1]")));
    }
    if x_samples.is_empty() || absdiff_samples.is_empty() {
        return Err(Error::invalid("samples", "must be nonempty"));
    }
    let nx = x_samples.len() as f64;
    let nd = absdiff_samples.len() as f64;
    let lhs = x_samples.iter().filter(|x| a <= **x && **x <= b).count() as f64 / nx;
    let close = absdiff_samples.iter().filter(|d| **d <= b - a).count() as f64 / nd;
    let rhs = 0.5 * (1.0 + close + tv);
    let se = (lhs * (1.0 - lhs) / nx).sqrt() + 0.5 * (close * (1.0 - close) / nd).sqrt();
    Ok(BoundCheck { lhs, rhs, se, satisfied: lhs <= rhs + 3.0 * se })
}
