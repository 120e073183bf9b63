//! Directed last-passage percolation (the corner growth model) on Z²₊ with
//! i.i.d. vertex weights of any sign.
//!
//! A path `(v₀, …, v_n)` has weight `Σ_{i=1}^n X_{v_i}`: the starting vertex
//! is not counted. Among maximizers the one preferring the `e₁` predecessor
//! at every step is distinguished.

use serde::{Deserialize, Serialize};

use crate::coupling::{coupled_pair, draw_coupled, y_uniform, CoupledDraw, CouplingKind, CouplingSpec, EpsilonSchedule};
use crate::error::{Error, Result};
use crate::lattice::{Location, Point};
use crate::lawcore::WeightLaw;
use crate::rng::{Lane, StreamKey};

/// Dense vertex weights on the rectangle `[0, corner.x] × [0, corner.y]`.
#[derive(Clone, Debug, PartialEq)]
pub struct VertexEnvironment {
    corner: Point,
    values: Vec<f64>,
}

impl VertexEnvironment {
    pub fn sample(law: &WeightLaw, key: StreamKey, corner: Point) -> Result<Self> {
        Self::check_corner(corner)?;
        Ok(Self::from_fn(corner, |p| law.sample_at(key, p.site_id(), Lane::Vertex, 0)))
    }

    pub fn from_fn(corner: Point, mut f: impl FnMut(Point) -> f64) -> Self {
        let w = corner.x as usize + 1;
        let h = corner.y as usize + 1;
        let mut values = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                values.push(f(Point::new(x as i32, y as i32)));
            }
        }
        VertexEnvironment { corner, values }
    }

    fn check_corner(corner: Point) -> Result<()> {
        if corner.x < 0 || corner.y < 0 {
            return Err(Error::invalid("corner", format!("{corner:?} has a negative coordinate")));
        }
        Ok(())
    }

    pub fn corner(&self) -> Point {
        self.corner
    }

    #[inline]
    pub fn contains(&self, p: Point) -> bool {
        p.x >= 0 && p.y >= 0 && p.x <= self.corner.x && p.y <= self.corner.y
    }

    #[inline]
    fn idx(&self, p: Point) -> usize {
        p.y as usize * (self.corner.x as usize + 1) + p.x as usize
    }

    #[inline]
    pub fn get(&self, p: Point) -> f64 {
        debug_assert!(self.contains(p));
        self.values[self.idx(p)]
    }

    pub fn weight(&self, p: Point) -> Option<f64> {
        self.contains(p).then(|| self.get(p))
    }

    pub fn set(&mut self, p: Point, w: f64) -> Result<()> {
        if !self.contains(p) {
            return Err(Error::OutsideBox(p));
        }
        let i = self.idx(p);
        self.values[i] = w;
        Ok(())
    }

    /// The environment reflected across the diagonal.
    pub fn transposed(&self) -> Self {
        let c = self.corner;
        Self::from_fn(Point::new(c.y, c.x), |p| self.get(Point::new(p.y, p.x)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LppResult {
    pub value: f64,
    /// Vertices from `u` to `v`.
    pub path: Vec<Point>,
    /// Weights of `path[1..]`.
    pub per_vertex_weights: Vec<f64>,
}

fn check_pair(env: &VertexEnvironment, u: Point, v: Point) -> Result<()> {
    if v.x < u.x || v.y < u.y {
        return Err(Error::NotOrdered { from: u, to: v });
    }
    for p in [u, v] {
        if !env.contains(p) {
            return Err(Error::OutsideBox(p));
        }
    }
    Ok(())
}

/// `T(u, v)` with its distinguished maximizer.
pub fn last_passage(env: &VertexEnvironment, u: Point, v: Point) -> Result<LppResult> {
    check_pair(env, u, v)?;
    let w = (v.x - u.x) as usize + 1;
    let h = (v.y - u.y) as usize + 1;
    let mut t = vec![0.0f64; w * h];
    // true when the maximizer arrives by an e₁ step
    let mut from_left = vec![false; w * h];
    for j in 0..h {
        for i in 0..w {
            if i == 0 && j == 0 {
                continue;
            }
            let x = env.get(Point::new(u.x + i as i32, u.y + j as i32));
            let k = j * w + i;
            let (best, left) = match (i > 0, j > 0) {
                (true, false) => (t[k - 1], true),
                (false, true) => (t[k - w], false),
                _ => {
                    let a = t[k - 1];
                    let b = t[k - w];
                    if a >= b {
                        (a, true)
                    } else {
                        (b, false)
                    }
                }
            };
            t[k] = best + x;
            from_left[k] = left;
        }
    }
    let mut path = Vec::with_capacity(w + h - 1);
    let (mut i, mut j) = (w - 1, h - 1);
    path.push(v);
    while i > 0 || j > 0 {
        if from_left[j * w + i] {
            i -= 1;
        } else {
            j -= 1;
        }
        path.push(Point::new(u.x + i as i32, u.y + j as i32));
    }
    path.reverse();
    let per_vertex_weights: Vec<f64> = path[1..].iter().map(|p| env.get(*p)).collect();
    Ok(LppResult { value: t[w * h - 1], path, per_vertex_weights })
}

/// `T(u, v)` by a row sweep in `O(v.x − u.x)` memory.
pub fn last_passage_value(env: &VertexEnvironment, u: Point, v: Point) -> Result<f64> {
    check_pair(env, u, v)?;
    let w = (v.x - u.x) as usize + 1;
    let h = (v.y - u.y) as usize + 1;
    let mut row = vec![0.0f64; w];
    for i in 1..w {
        row[i] = row[i - 1] + env.get(Point::new(u.x + i as i32, u.y));
    }
    for j in 1..h {
        let y = u.y + j as i32;
        row[0] += env.get(Point::new(u.x, y));
        for i in 1..w {
            let best = if row[i - 1] >= row[i] { row[i - 1] } else { row[i] };
            row[i] = best + env.get(Point::new(u.x + i as i32, y));
        }
    }
    Ok(row[w - 1])
}

/// Minimum of `Σ_{i=1}^{steps} cost(v_i)` over directed paths whose start
/// lies on the anti-diagonal `‖v₀‖₁ = level`.
fn min_plus_from_level(level: u32, steps: u32, cost: &mut impl FnMut(Point) -> f64) -> f64 {
    let mut cur = vec![0.0f64; level as usize + 1];
    for k in 1..=steps {
        let l = (level + k) as i32;
        let mut next = vec![f64::INFINITY; l as usize + 1];
        for x in 0..=l {
            let xi = x as usize;
            let via_e1 = if x >= 1 { cur[xi - 1] } else { f64::INFINITY };
            let via_e2 = if x < l { cur[xi] } else { f64::INFINITY };
            next[xi] = via_e1.min(via_e2) + cost(Point::new(x, l - x));
        }
        cur = next;
    }
    cur.into_iter().fold(f64::INFINITY, f64::min)
}

/// Whether a site is open in directed site percolation: `U_v < p`.
#[inline]
pub fn site_open(key: StreamKey, v: Point, p: f64) -> bool {
    key.uniform(v.site_id(), Lane::Vertex, 0) < p
}

/// Fewest closed sites among `v₁, …, v_n` over all directed paths
/// `(v₀, …, v_n)` with `‖v₀‖₁ ≤ n`.
pub fn min_closed_sites(p: f64, n: u32, key: StreamKey) -> Result<u32> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid("p", format!("{p} not in [0, 1]")));
    }
    // cache the open/closed field on the triangle ‖v‖₁ ≤ 2n
    let side = 2 * n as usize + 1;
    let mut closed = vec![0.0f64; side * side];
    for y in 0..side {
        for x in 0..(side - y) {
            let v = Point::new(x as i32, y as i32);
            closed[y * side + x] = if site_open(key, v, p) { 0.0 } else { 1.0 };
        }
    }
    let mut cost = |v: Point| closed[v.y as usize * side + v.x as usize];
    let best = (0..=n).map(|l| min_plus_from_level(l, n, &mut cost)).fold(f64::INFINITY, f64::min);
    Ok(best as u32)
}

/// A vertex field with its coupled draws.
pub struct CoupledVertexEnvironment {
    law: WeightLaw,
    spec: CouplingSpec,
    schedule: EpsilonSchedule,
    key: StreamKey,
    x: VertexEnvironment,
    x_prime: VertexEnvironment,
    x_tilde: VertexEnvironment,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbedLpp {
    pub t: f64,
    pub t_tilde: f64,
    /// `Σ 1{Y = 1}·Z` along the distinguished maximizer of the `X` field.
    pub d: f64,
}

impl PerturbedLpp {
    pub fn slack(&self) -> f64 {
        1e-10 * (1.0 + self.t.abs())
    }

    /// `T̃ ≥ T` and `T̃ − T ≥ D ≥ 0` up to rounding.
    pub fn holds(&self) -> bool {
        let s = self.slack();
        self.t_tilde >= self.t - s && self.t_tilde - self.t >= self.d - s && self.d >= 0.0
    }
}

impl CoupledVertexEnvironment {
    pub fn sample(
        law: &WeightLaw,
        spec: CouplingSpec,
        schedule: &EpsilonSchedule,
        key: StreamKey,
        corner: Point,
    ) -> Result<Self> {
        if spec.kind != CouplingKind::Max {
            return Err(Error::Incompatible("last passage and polymers use the max coupling".into()));
        }
        VertexEnvironment::check_corner(corner)?;
        let mut x = VertexEnvironment::from_fn(corner, |_| 0.0);
        let mut x_prime = x.clone();
        let mut x_tilde = x.clone();
        for (k, p) in (0..=corner.y).flat_map(|y| (0..=corner.x).map(move |xx| Point::new(xx, y))).enumerate() {
            let site = p.site_id();
            let (xv, xp) = coupled_pair(law, &spec, key, site, Lane::Vertex);
            let eps = schedule.epsilon_at(Location::Vertex(p));
            let yv = eps > 0.0 && y_uniform(&spec, key, site, Lane::Vertex) < eps;
            x.values[k] = xv;
            x_prime.values[k] = xp;
            x_tilde.values[k] = if yv { xp } else { xv };
        }
        Ok(CoupledVertexEnvironment { law: law.clone(), spec, schedule: schedule.clone(), key, x, x_prime, x_tilde })
    }

    pub fn unperturbed(&self) -> &VertexEnvironment {
        &self.x
    }

    pub fn perturbed(&self) -> &VertexEnvironment {
        &self.x_tilde
    }

    pub fn schedule(&self) -> &EpsilonSchedule {
        &self.schedule
    }

    /// `W_v = 1 − e^{−Z_v}` with `Z_v = X′_v − X_v`.
    pub fn w(&self, v: Point) -> f64 {
        -(-(self.x_prime.get(v) - self.x.get(v))).exp_m1()
    }

    /// `1{Y_v = 1}·Z_v`, i.e. `X̃_v − X_v`.
    pub fn gain(&self, v: Point) -> f64 {
        self.x_tilde.get(v) - self.x.get(v)
    }

    pub fn draw(&self, v: Point) -> CoupledDraw {
        let at = Location::Vertex(v);
        draw_coupled(&self.law, &self.spec, self.schedule.epsilon_at(at), self.key, at)
    }
}

/// Minimum of `Σ_{i=1}^n W_{v_i}` over directed paths `(v₀, …, v_n)` with
/// `‖v₀‖₁ = n`. The environment must cover `[0, 2n]²`.
pub fn min_w_sum_directed(env: &CoupledVertexEnvironment, n: u32) -> Result<f64> {
    let need = Point::new(2 * n as i32, 2 * n as i32);
    if !env.x.contains(need) {
        return Err(Error::OutsideBox(need));
    }
    Ok(min_plus_from_level(n, n, &mut |v| env.w(v)))
}

pub fn perturbed_lpp(env: &CoupledVertexEnvironment, v: Point) -> Result<PerturbedLpp> {
    let a = last_passage(&env.x, Point::ORIGIN, v)?;
    let t_tilde = last_passage_value(&env.x_tilde, Point::ORIGIN, v)?;
    let d = a.path[1..].iter().map(|p| env.gain(*p)).sum();
    Ok(PerturbedLpp { t: a.value, t_tilde, d })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::ScheduleKind;

    fn exp_env(seed: u64, corner: Point) -> VertexEnvironment {
        VertexEnvironment::sample(&WeightLaw::exponential(1.0).unwrap(), StreamKey::new(seed), corner).unwrap()
    }

    #[test]
    fn examples() {
        let env = exp_env(1, Point::new(10, 10));
        let u = Point::new(2, 3);
        assert_eq!(last_passage(&env, u, u).unwrap().value, 0.0);
        let v = Point::new(9, 3);
        let axis: f64 = (3..=9).map(|x| env.get(Point::new(x, 3))).fold(0.0, |a, w| a + w);
        assert_eq!(last_passage(&env, u, v).unwrap().value, axis);
        assert!(matches!(last_passage(&env, v, u), Err(Error::NotOrdered { .. })));
        assert!(matches!(last_passage(&env, u, Point::new(11, 3)), Err(Error::OutsideBox(_))));
    }

    #[test]
    fn value_and_path_agree() {
        for seed in 0..30 {
            let env = exp_env(seed, Point::new(12, 9));
            let r = last_passage(&env, Point::ORIGIN, Point::new(12, 9)).unwrap();
            assert_eq!(r.value, last_passage_value(&env, Point::ORIGIN, Point::new(12, 9)).unwrap());
            assert_eq!(r.value, r.per_vertex_weights.iter().fold(0.0, |a, w| a + w));
            for w in r.path.windows(2) {
                let d = (w[1].x - w[0].x, w[1].y - w[0].y);
                assert!(d == (1, 0) || d == (0, 1));
            }
        }
    }

    #[test]
    fn tie_break_prefers_e1() {
        let env = VertexEnvironment::from_fn(Point::new(2, 2), |_| 1.0);
        let r = last_passage(&env, Point::ORIGIN, Point::new(2, 2)).unwrap();
        // walking back, the e₁ predecessor is taken whenever it ties
        assert_eq!(
            r.path,
            vec![Point::new(0, 0), Point::new(0, 1), Point::new(0, 2), Point::new(1, 2), Point::new(2, 2)]
        );
    }

    #[test]
    fn closed_site_extremes() {
        for seed in 0..5 {
            assert_eq!(min_closed_sites(1.0, 12, StreamKey::new(seed)).unwrap(), 0);
            assert_eq!(min_closed_sites(0.0, 12, StreamKey::new(seed)).unwrap(), 12);
        }
    }

    #[test]
    fn w_sum_examples() {
        let s = EpsilonSchedule::new(ScheduleKind::LppRadial, 1.0, 8.0).unwrap();
        let pm = CoupledVertexEnvironment::sample(
            &WeightLaw::point_mass(1.0),
            CouplingSpec::max(2).unwrap(),
            &s,
            StreamKey::new(0),
            Point::new(16, 16),
        )
        .unwrap();
        assert_eq!(min_w_sum_directed(&pm, 8).unwrap(), 0.0);
        let law = WeightLaw::exponential(1.0).unwrap();
        for seed in 0..10 {
            let env = CoupledVertexEnvironment::sample(&law, CouplingSpec::max(2).unwrap(), &s, StreamKey::new(seed), Point::new(16, 16))
                .unwrap();
            let w = min_w_sum_directed(&env, 8).unwrap();
            assert!((0.0..8.0).contains(&w));
        }
    }

    #[test]
    fn zero_schedule_is_identity() {
        let law = WeightLaw::exponential(1.0).unwrap();
        let env = CoupledVertexEnvironment::sample(
            &law,
            CouplingSpec::max(3).unwrap(),
            &EpsilonSchedule::zero(8.0),
            StreamKey::new(2),
            Point::new(8, 8),
        )
        .unwrap();
        let r = perturbed_lpp(&env, Point::new(8, 8)).unwrap();
        assert_eq!((r.t, r.d), (r.t_tilde, 0.0));
        assert!(CoupledVertexEnvironment::sample(
            &law,
            CouplingSpec::min(1).unwrap(),
            &EpsilonSchedule::zero(8.0),
            StreamKey::new(2),
            Point::new(8, 8)
        )
        .is_err());
    }
}
