//! Brute-force path enumeration, used to cross-check the fast solvers on
//! small instances. Nothing here shares code with the solvers beyond the
//! environment accessors.

use serde::{Deserialize, Serialize};

use crate::coupling::{CouplingSpec, EpsilonSchedule, ScheduleKind};
use crate::error::{Error, Result};
use crate::fpp::{passage_time, CoupledEdgeEnvironment, EdgeEnvironment};
use crate::lattice::{Edge, LatticeBox, Point};
use crate::lawcore::WeightLaw;
use crate::lpp::{last_passage, CoupledVertexEnvironment, VertexEnvironment};
use crate::polymer::{endpoint_distribution, free_energy, occupation_probabilities, perturbed_free_energy};
use crate::rng::StreamKey;

/// Minimum weight over all self-avoiding paths from `x` to `y` inside the
/// box, each summed in path order.
pub fn fpp_enumerate(env: &EdgeEnvironment, x: Point, y: Point) -> f64 {
    fn dfs(env: &EdgeEnvironment, at: Point, y: Point, acc: f64, seen: &mut Vec<Point>, best: &mut f64) {
        if at == y {
            *best = best.min(acc);
            return;
        }
        for q in at.neighbors() {
            if !env.bbox().contains(q) || seen.contains(&q) {
                continue;
            }
            let w = env.weight(Edge::between(at, q).unwrap()).unwrap();
            seen.push(q);
            dfs(env, q, y, acc + w, seen, best);
            seen.pop();
        }
    }
    let mut best = f64::INFINITY;
    dfs(env, x, y, 0.0, &mut vec![x], &mut best);
    best
}

/// Every up-right path from `u` to `v`, as vertex lists.
pub fn directed_paths(u: Point, v: Point) -> Vec<Vec<Point>> {
    fn rec(at: Point, v: Point, cur: &mut Vec<Point>, out: &mut Vec<Vec<Point>>) {
        if at == v {
            out.push(cur.clone());
            return;
        }
        for q in [Point::new(at.x + 1, at.y), Point::new(at.x, at.y + 1)] {
            if q.x <= v.x && q.y <= v.y {
                cur.push(q);
                rec(q, v, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(u, v, &mut vec![u], &mut out);
    out
}

/// Every up-right path of `n` steps from `start`.
pub fn directed_paths_of_length(start: Point, n: u32) -> Vec<Vec<Point>> {
    let mut out = Vec::with_capacity(1 << n);
    for mask in 0u32..(1u32 << n) {
        let mut p = start;
        let mut path = vec![p];
        for i in 0..n {
            p = if mask >> i & 1 == 0 { Point::new(p.x + 1, p.y) } else { Point::new(p.x, p.y + 1) };
            path.push(p);
        }
        out.push(path);
    }
    out
}

fn path_sum(path: &[Point], f: &impl Fn(Point) -> f64) -> f64 {
    path[1..].iter().fold(0.0, |acc, p| acc + f(*p))
}

pub fn lpp_enumerate(env: &VertexEnvironment, u: Point, v: Point) -> f64 {
    directed_paths(u, v)
        .iter()
        .map(|p| path_sum(p, &|q| env.get(q)))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Polymer quantities by summing over all `2^n` paths.
#[derive(Clone, Debug, PartialEq)]
pub struct PolymerEnumeration {
    pub log_z: f64,
    pub endpoints: Vec<f64>,
    /// `occupation[l][x]` for `v = (x, l − x)`.
    pub occupation: Vec<Vec<f64>>,
}

pub fn polymer_enumerate(env: &VertexEnvironment, beta: f64, n: u32) -> PolymerEnumeration {
    let paths = directed_paths_of_length(Point::ORIGIN, n);
    let energies: Vec<f64> = paths.iter().map(|p| beta * path_sum(p, &|q| env.get(q))).collect();
    let m = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = energies.iter().map(|e| (e - m).exp()).collect();
    let total: f64 = weights.iter().sum();
    let log_z = m + total.ln();
    let mut endpoints = vec![0.0; n as usize + 1];
    let mut occupation: Vec<Vec<f64>> = (0..=n as usize).map(|l| vec![0.0; l + 1]).collect();
    for (p, w) in paths.iter().zip(&weights) {
        let g = w / total;
        endpoints[p[n as usize].x as usize] += g;
        for (l, v) in p.iter().enumerate() {
            occupation[l][v.x as usize] += g;
        }
    }
    PolymerEnumeration { log_z, endpoints, occupation }
}

/// Gibbs average of `β Σ_{i≥1} gain(γ_i)` over the unperturbed polymer.
pub fn polymer_gain_average(env: &VertexEnvironment, beta: f64, n: u32, gain: impl Fn(Point) -> f64) -> f64 {
    let paths = directed_paths_of_length(Point::ORIGIN, n);
    let energies: Vec<f64> = paths.iter().map(|p| beta * path_sum(p, &|q| env.get(q))).collect();
    let m = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, e) in paths.iter().zip(&energies) {
        let w = (e - m).exp();
        num += w * beta * path_sum(p, &gain);
        den += w;
    }
    num / den
}

/// Fewest values of `cost` along `v₁..v_n` over directed paths whose start
/// satisfies `start_ok`.
pub fn min_path_cost_enumerate(n: u32, start_ok: impl Fn(Point) -> bool, cost: impl Fn(Point) -> f64) -> f64 {
    let mut best = f64::INFINITY;
    for l in 0..=n as i32 {
        for x in 0..=l {
            let s = Point::new(x, l - x);
            if !start_ok(s) {
                continue;
            }
            for p in directed_paths_of_length(s, n) {
                best = best.min(path_sum(&p, &cost));
            }
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleModel {
    Fpp,
    Lpp,
    Polymer,
}

/// One comparison between a solver and its oracle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub model: OracleModel,
    pub seed: u64,
    pub case: String,
    pub solver: f64,
    pub oracle: f64,
    pub pass: bool,
}

/// Relative tolerance for polymer comparisons.
pub const POLYMER_REL_TOL: f64 = 1e-10;

pub const FPP_MAX_RADIUS: u32 = 2;
pub const DIRECTED_MAX_N: u32 = 12;

fn fpp_laws() -> Vec<(&'static str, WeightLaw)> {
    vec![
        ("exponential", WeightLaw::exponential(1.0).unwrap()),
        ("two-point", WeightLaw::two_point(1.0, 2.0, 0.5).unwrap()),
        ("uniform", WeightLaw::uniform(0.0, 1.0).unwrap()),
    ]
}

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= POLYMER_REL_TOL * a.abs().max(b.abs()).max(1.0)
}

/// FPP: Dijkstra against self-avoiding-path enumeration for every pair of
/// points in a box of the given radius, plus the perturbed field and the
/// `W` sum of a coupled environment.
pub fn check_fpp(radius: u32, seed: u64) -> Result<Vec<OracleRow>> {
    if radius > FPP_MAX_RADIUS {
        return Err(Error::invalid("size", format!("fpp enumeration is limited to radius {FPP_MAX_RADIUS}")));
    }
    let bbox = LatticeBox::new(Point::ORIGIN, radius);
    let pts: Vec<Point> = bbox.points().collect();
    let mut rows = Vec::new();
    let key = StreamKey::new(seed);
    for (name, law) in fpp_laws() {
        let env = EdgeEnvironment::sample(&law, key, bbox)?;
        for &x in &pts {
            for &y in &pts {
                let fast = passage_time(&env, x, y)?.value;
                let slow = fpp_enumerate(&env, x, y);
                rows.push(OracleRow {
                    model: OracleModel::Fpp,
                    seed,
                    case: format!("{name} T({},{})->({},{})", x.x, x.y, y.x, y.y),
                    solver: fast,
                    oracle: slow,
                    pass: fast == slow,
                });
            }
        }
        let schedule = EpsilonSchedule::new(ScheduleKind::Uniform, 0.5, 2.0)?;
        let coupled = CoupledEdgeEnvironment::sample(&law, CouplingSpec::min(2)?, &schedule, key, bbox)?;
        let y = Point::new(radius as i32, 0);
        let fast = passage_time(coupled.perturbed(), Point::ORIGIN, y)?.value;
        let slow = fpp_enumerate(coupled.perturbed(), Point::ORIGIN, y);
        rows.push(OracleRow {
            model: OracleModel::Fpp,
            seed,
            case: format!("{name} perturbed T"),
            solver: fast,
            oracle: slow,
            pass: fast == slow,
        });
        let fast = coupled.geodesic_w_sum(Point::ORIGIN, y)?;
        let path = passage_time(coupled.unperturbed(), Point::ORIGIN, y)?.path;
        let slow: f64 = path.iter().map(|e| coupled.draw(*e).w).sum();
        rows.push(OracleRow {
            model: OracleModel::Fpp,
            seed,
            case: format!("{name} geodesic W sum"),
            solver: fast,
            oracle: slow,
            pass: fast == slow,
        });
    }
    Ok(rows)
}

/// LPP: DP against directed-path enumeration for every target with
/// `a + b ≤ n`, plus the perturbed field and the directed `W`-sum minimum.
pub fn check_lpp(n: u32, seed: u64) -> Result<Vec<OracleRow>> {
    if n > DIRECTED_MAX_N {
        return Err(Error::invalid("size", format!("lpp enumeration is limited to n = {DIRECTED_MAX_N}")));
    }
    let key = StreamKey::new(seed);
    let law = WeightLaw::uniform(-1.0, 2.0)?;
    let schedule = EpsilonSchedule::new(ScheduleKind::LppRadial, 1.0, f64::from(n.max(2)))?;
    let k = n as i32;
    let coupled = CoupledVertexEnvironment::sample(&law, CouplingSpec::max(2)?, &schedule, key, Point::new(2 * k, 2 * k))?;
    let env = coupled.unperturbed();
    let mut rows = Vec::new();
    for a in 0..=k {
        for b in 0..=(k - a) {
            let v = Point::new(a, b);
            let fast = last_passage(env, Point::ORIGIN, v)?.value;
            let slow = lpp_enumerate(env, Point::ORIGIN, v);
            rows.push(OracleRow {
                model: OracleModel::Lpp,
                seed,
                case: format!("T(0,0)->({a},{b})"),
                solver: fast,
                oracle: slow,
                pass: fast == slow,
            });
        }
    }
    let v = Point::new(k / 2, k - k / 2);
    let fast = last_passage(coupled.perturbed(), Point::ORIGIN, v)?.value;
    let slow = lpp_enumerate(coupled.perturbed(), Point::ORIGIN, v);
    rows.push(OracleRow { model: OracleModel::Lpp, seed, case: "perturbed T".into(), solver: fast, oracle: slow, pass: fast == slow });
    let steps = n.min(6);
    let fast = crate::lpp::min_w_sum_directed(&coupled, steps)?;
    let slow = min_path_cost_enumerate(steps, |s| s.l1() == steps, |p| coupled.w(p));
    rows.push(OracleRow {
        model: OracleModel::Lpp,
        seed,
        case: format!("min W sum, {steps} steps"),
        solver: fast,
        oracle: slow,
        pass: fast == slow,
    });
    let p = 0.5;
    let fast = f64::from(crate::lpp::min_closed_sites(p, steps, key)?);
    let slow = min_path_cost_enumerate(steps, |s| s.l1() <= steps, |v| {
        if crate::lpp::site_open(key, v, p) {
            0.0
        } else {
            1.0
        }
    });
    rows.push(OracleRow {
        model: OracleModel::Lpp,
        seed,
        case: format!("min closed sites, {steps} steps"),
        solver: fast,
        oracle: slow,
        pass: fast == slow,
    });
    Ok(rows)
}

/// Polymer: log-domain recursions against enumeration over all `2^n` paths.
pub fn check_polymer(n: u32, beta: f64, seed: u64) -> Result<Vec<OracleRow>> {
    if n > DIRECTED_MAX_N || n == 0 {
        return Err(Error::invalid("size", format!("polymer enumeration needs 1 <= n <= {DIRECTED_MAX_N}")));
    }
    let key = StreamKey::new(seed);
    let law = WeightLaw::exponential(1.0)?;
    let schedule = EpsilonSchedule::new(ScheduleKind::LppRadial, 1.0, f64::from(n.max(2)))?;
    let k = n as i32;
    let coupled = CoupledVertexEnvironment::sample(&law, CouplingSpec::max(2)?, &schedule, key, Point::new(k, k))?;
    let env = coupled.unperturbed();
    let slow = polymer_enumerate(env, beta, n);
    let mut rows = Vec::new();
    let mut push = |case: String, fast: f64, slow: f64| {
        rows.push(OracleRow { model: OracleModel::Polymer, seed, case, solver: fast, oracle: slow, pass: rel_close(fast, slow) });
    };
    push("log Z".into(), free_energy(env, beta, n)?, slow.log_z);
    let ep = endpoint_distribution(env, beta, n)?;
    for (x, (a, b)) in ep.probs.iter().zip(&slow.endpoints).enumerate() {
        push(format!("endpoint {x}"), *a, *b);
    }
    let occ = occupation_probabilities(env, beta, n)?;
    for (l, (ra, rb)) in occ.iter().zip(&slow.occupation).enumerate() {
        for (x, (a, b)) in ra.iter().zip(rb).enumerate() {
            push(format!("occupation ({x},{})", l - x), *a, *b);
        }
    }
    let pert = perturbed_free_energy(&coupled, beta, n)?;
    push("log Z perturbed".into(), pert.log_z_tilde, polymer_enumerate(coupled.perturbed(), beta, n).log_z);
    push("jensen average".into(), pert.jensen_lb, polymer_gain_average(env, beta, n, |v| coupled.gain(v)));
    Ok(rows)
}

/// Runs one model's oracle over `seeds` consecutive seeds from `first_seed`.
pub fn run_oracle(model: OracleModel, size: u32, beta: f64, first_seed: u64, seeds: u64) -> Result<Vec<OracleRow>> {
    let mut rows = Vec::new();
    for s in first_seed..first_seed + seeds {
        rows.extend(match model {
            OracleModel::Fpp => check_fpp(size, s)?,
            OracleModel::Lpp => check_lpp(size, s)?,
            OracleModel::Polymer => check_polymer(size, beta, s)?,
        });
    }
    Ok(rows)
}
