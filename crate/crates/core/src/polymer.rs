//! Directed polymers in 1+1 dimensions: `Z_n = Σ_γ exp(β Σ_{i=1}^n X_{γ_i})`
//! over up-right paths of length `n` from the origin, computed level by
//! level in the log domain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Point;
use crate::lpp::{CoupledVertexEnvironment, VertexEnvironment};

#[inline]
fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + (-(a - b).abs()).exp().ln_1p()
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Forward log-weights on every level: `layers[l][x]` is the log of the
/// summed Gibbs weight of paths from the origin to `(x, l − x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolymerState {
    pub beta: f64,
    pub n: u32,
    pub log_partition: f64,
    pub log_layer: Vec<Vec<f64>>,
}

fn check(env: &VertexEnvironment, beta: f64, n: u32) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::invalid("beta", format!("must be finite and > 0, got {beta}")));
    }
    if n == 0 {
        return Err(Error::invalid("n", "must be >= 1"));
    }
    let need = Point::new(n as i32, n as i32);
    if !env.contains(need) {
        return Err(Error::OutsideBox(need));
    }
    Ok(())
}

pub fn forward(env: &VertexEnvironment, beta: f64, n: u32) -> Result<PolymerState> {
    check(env, beta, n)?;
    let mut layers = Vec::with_capacity(n as usize + 1);
    layers.push(vec![0.0f64]);
    for l in 1..=n as i32 {
        let prev = layers.last().unwrap();
        let mut next = vec![f64::NEG_INFINITY; l as usize + 1];
        for x in 0..=l {
            let xi = x as usize;
            let a = if x >= 1 { prev[xi - 1] } else { f64::NEG_INFINITY };
            let b = if x < l { prev[xi] } else { f64::NEG_INFINITY };
            next[xi] = log_add_exp(a, b) + beta * env.get(Point::new(x, l - x));
        }
        layers.push(next);
    }
    let log_partition = log_sum_exp(layers.last().unwrap());
    Ok(PolymerState { beta, n, log_partition, log_layer: layers })
}

/// Point-to-line free energy `log Z_n^β`.
pub fn free_energy(env: &VertexEnvironment, beta: f64, n: u32) -> Result<f64> {
    Ok(forward(env, beta, n)?.log_partition)
}

/// Free energy with the endpoint pinned at `v`, `‖v‖₁ = n`.
pub fn free_energy_point_to_point(env: &VertexEnvironment, beta: f64, v: Point) -> Result<f64> {
    if v.x < 0 || v.y < 0 {
        return Err(Error::NotOrdered { from: Point::ORIGIN, to: v });
    }
    let st = forward(env, beta, v.l1())?;
    Ok(st.log_layer[v.l1() as usize][v.x as usize])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndpointDistribution {
    pub n: u32,
    /// `probs[k]` is the Gibbs probability that the path ends at `(k, n − k)`.
    pub probs: Vec<f64>,
    pub max_atom: f64,
}

pub fn endpoint_distribution(env: &VertexEnvironment, beta: f64, n: u32) -> Result<EndpointDistribution> {
    let st = forward(env, beta, n)?;
    let probs: Vec<f64> = st.log_layer[n as usize].iter().map(|l| (l - st.log_partition).exp()).collect();
    let max_atom = probs.iter().cloned().fold(0.0, f64::max);
    Ok(EndpointDistribution { n, probs, max_atom })
}

/// `P(v ∈ γ)` under the polymer measure, for every `v` with `‖v‖₁ ≤ n`,
/// as `occ[l][x]` for `v = (x, l − x)`.
pub fn occupation_probabilities(env: &VertexEnvironment, beta: f64, n: u32) -> Result<Vec<Vec<f64>>> {
    let st = forward(env, beta, n)?;
    let n = n as i32;
    // backward log-weights: paths from v to level n, excluding v itself
    let mut back = vec![0.0f64; n as usize + 1];
    let mut occ = vec![Vec::new(); n as usize + 1];
    for l in (0..=n).rev() {
        if l < n {
            let mut cur = vec![f64::NEG_INFINITY; l as usize + 1];
            for x in 0..=l {
                let xi = x as usize;
                let right = beta * env.get(Point::new(x + 1, l - x)) + back[xi + 1];
                let up = beta * env.get(Point::new(x, l + 1 - x)) + back[xi];
                cur[xi] = log_add_exp(right, up);
            }
            back = cur;
        }
        occ[l as usize] = st.log_layer[l as usize]
            .iter()
            .zip(&back)
            .map(|(f, b)| (f + b - st.log_partition).exp())
            .collect();
    }
    Ok(occ)
}

/// `max_{‖v‖₁ = n} T(0, v)`, the zero-temperature limit of `(1/β) log Z`.
pub fn point_to_line_max(env: &VertexEnvironment, n: u32) -> Result<f64> {
    check(env, 1.0, n)?;
    let mut cur = vec![0.0f64];
    for l in 1..=n as i32 {
        let mut next = vec![f64::NEG_INFINITY; l as usize + 1];
        for x in 0..=l {
            let xi = x as usize;
            let a = if x >= 1 { cur[xi - 1] } else { f64::NEG_INFINITY };
            let b = if x < l { cur[xi] } else { f64::NEG_INFINITY };
            next[xi] = a.max(b) + env.get(Point::new(x, l - x));
        }
        cur = next;
    }
    Ok(cur.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbedPolymer {
    pub log_z: f64,
    pub log_z_tilde: f64,
    /// `Σ_v β·1{Y_v = 1}·Z_v·P(v ∈ γ)`, the Gibbs average of `β(H̃ − H)`.
    pub jensen_lb: f64,
}

impl PerturbedPolymer {
    pub fn slack(&self) -> f64 {
        1e-10 * (1.0 + self.log_z.abs())
    }

    /// `log Z̃ − log Z ≥ jensen_lb ≥ 0` up to rounding.
    pub fn holds(&self) -> bool {
        self.log_z_tilde - self.log_z >= self.jensen_lb - self.slack() && self.jensen_lb >= 0.0
    }
}

pub fn perturbed_free_energy(env: &CoupledVertexEnvironment, beta: f64, n: u32) -> Result<PerturbedPolymer> {
    let log_z = free_energy(env.unperturbed(), beta, n)?;
    let log_z_tilde = free_energy(env.perturbed(), beta, n)?;
    let occ = occupation_probabilities(env.unperturbed(), beta, n)?;
    let mut jensen_lb = 0.0;
    for (l, row) in occ.iter().enumerate().skip(1) {
        for (x, p) in row.iter().enumerate() {
            let v = Point::new(x as i32, l as i32 - x as i32);
            jensen_lb += beta * env.gain(v) * p;
        }
    }
    Ok(PerturbedPolymer { log_z, log_z_tilde, jensen_lb })
}
