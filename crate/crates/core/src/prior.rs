//! Reference Markov laws on a graph: the prior against which bridges are
//! measured.
//!
//! A prior is a (possibly time-varying) Markov chain: an initial
//! distribution `p0` and one row-stochastic transition matrix per step of
//! the horizon. Two canonical constructions are provided. The *Boltzmann*
//! law weights every `N`-step walk by `exp(-length/T)` and normalizes; it is
//! Markov once written with backward partition vectors, which is exactly how
//! it is built here. The *Ruelle–Bowen* law puts equal probability on every
//! `N`-step walk between fixed endpoints, maximizing path entropy; it comes
//! from the Perron eigendata of the adjacency matrix.

use ndarray::{Array1, Array2, ArrayView1};

use crate::graph::{Graph, PERRON_MAX_ITER, PERRON_TOL};
use crate::{Error, Result};

/// Validation tolerance for row sums and distribution normalization.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Below this temperature the Boltzmann construction switches to log-domain
/// accumulation: with unit edge lengths, `exp(-1/T)` underflows long before
/// the normalized transition rows do, so the partition vectors are carried
/// as logarithms and only the (well-scaled) row ratios are exponentiated.
pub const LOG_DOMAIN_TEMPERATURE: f64 = 0.05;

/// A time-varying Markov chain over `n` states and a fixed horizon.
#[derive(Debug, Clone)]
pub struct MarkovPrior {
    n: usize,
    horizon: usize,
    p0: Array1<f64>,
    steps: Vec<Array2<f64>>,
}

impl MarkovPrior {
    /// Wraps a user-supplied chain after validating shapes, nonnegativity,
    /// row-stochasticity, and normalization of `p0` (all within
    /// [`STOCHASTIC_TOL`]).
    pub fn custom(p0: Array1<f64>, steps: Vec<Array2<f64>>) -> Result<Self> {
        let n = p0.len();
        if n == 0 {
            return Err(Error::InvalidDistribution("empty state space".into()));
        }
        if steps.is_empty() {
            return Err(Error::InvalidPrior("horizon must be at least 1".into()));
        }
        if p0.iter().any(|&x| x < 0.0 || !x.is_finite()) {
            return Err(Error::InvalidDistribution(
                "initial distribution has negative or non-finite entries".into(),
            ));
        }
        if (p0.sum() - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::InvalidDistribution(format!(
                "initial distribution sums to {}, expected 1",
                p0.sum()
            )));
        }
        for (t, m) in steps.iter().enumerate() {
            if m.shape() != [n, n] {
                return Err(Error::InvalidPrior(format!(
                    "step {t} has shape {:?}, expected [{n}, {n}]",
                    m.shape()
                )));
            }
            if m.iter().any(|&x| x < 0.0 || !x.is_finite()) {
                return Err(Error::InvalidPrior(format!(
                    "step {t} has negative or non-finite entries"
                )));
            }
            for (i, row) in m.rows().into_iter().enumerate() {
                let s = row.sum();
                if (s - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(Error::InvalidPrior(format!(
                        "step {t} row {} sums to {s}, expected 1",
                        i + 1
                    )));
                }
            }
        }
        let horizon = steps.len();
        Ok(MarkovPrior {
            n,
            horizon,
            p0,
            steps,
        })
    }

    /// Boltzmann law on `g` at temperature `t_temp` over `horizon` steps:
    /// every walk `x_0, ..., x_N` gets probability proportional to
    /// `exp(-(sum of edge lengths)/T)`.
    ///
    /// Built via backward partition vectors `b_k = M^k 1` with
    /// `M = exp(-lengths/T)` supported on edges: `p0 = b_N / sum(b_N)` and
    /// `step_t[i][j] = M[i][j] b_{N-t-1}[j] / b_{N-t}[i]`. States from which
    /// no walk of the remaining length exists get a uniform row over their
    /// out-neighbors (a self-row if the node is a sink); such states carry
    /// zero probability, the filler only keeps the matrices stochastic.
    pub fn boltzmann(g: &Graph, t_temp: f64, horizon: usize) -> Result<Self> {
        if !(t_temp > 0.0 && t_temp.is_finite()) {
            return Err(Error::InvalidPrior(format!(
                "temperature must be positive and finite, got {t_temp}"
            )));
        }
        if horizon == 0 {
            return Err(Error::InvalidPrior("horizon must be at least 1".into()));
        }
        // Log-weights: -length/T on edges, -inf elsewhere.
        let lw = g.lengths().mapv(|l| {
            if l.is_finite() {
                -l / t_temp
            } else {
                f64::NEG_INFINITY
            }
        });
        if t_temp < LOG_DOMAIN_TEMPERATURE {
            Self::boltzmann_log_domain(g, &lw, horizon)
        } else {
            Self::boltzmann_plain(g, &lw, horizon)
        }
    }

    fn boltzmann_plain(g: &Graph, lw: &Array2<f64>, horizon: usize) -> Result<Self> {
        let n = g.n();
        let m = lw.mapv(|x| if x.is_finite() { x.exp() } else { 0.0 });
        let mut b = vec![Array1::from_elem(n, 1.0)];
        for k in 1..=horizon {
            b.push(m.dot(&b[k - 1]));
        }
        let z: f64 = b[horizon].sum();
        if !(z > 0.0) {
            return Err(Error::InvalidPrior(format!(
                "no walk of length {horizon} exists: empty partition sum"
            )));
        }
        let p0 = &b[horizon] / z;
        let mut steps = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let mut step = Array2::zeros((n, n));
            for i in 0..n {
                let denom = b[horizon - t][i];
                if denom > 0.0 {
                    for &j in g.out_neighbors(i) {
                        step[[i, j]] = m[[i, j]] * b[horizon - t - 1][j] / denom;
                    }
                    normalize_row(&mut step, i);
                } else {
                    fill_fallback_row(g, &mut step, i);
                }
            }
            steps.push(step);
        }
        Self::custom(p0, steps)
    }

    fn boltzmann_log_domain(g: &Graph, lw: &Array2<f64>, horizon: usize) -> Result<Self> {
        let n = g.n();
        let mut lb = vec![Array1::from_elem(n, 0.0)];
        for k in 1..=horizon {
            let prev = &lb[k - 1];
            let next = Array1::from_shape_fn(n, |i| {
                let terms: Vec<f64> = g
                    .out_neighbors(i)
                    .iter()
                    .map(|&j| lw[[i, j]] + prev[j])
                    .collect();
                logsumexp(&terms)
            });
            lb.push(next);
        }
        let log_z = logsumexp(lb[horizon].as_slice().unwrap());
        if log_z == f64::NEG_INFINITY {
            return Err(Error::InvalidPrior(format!(
                "no walk of length {horizon} exists: empty partition sum"
            )));
        }
        let p0 = lb[horizon].mapv(|x| (x - log_z).exp());
        let mut steps = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let mut step = Array2::zeros((n, n));
            for i in 0..n {
                let denom = lb[horizon - t][i];
                if denom > f64::NEG_INFINITY {
                    for &j in g.out_neighbors(i) {
                        let le = lw[[i, j]] + lb[horizon - t - 1][j] - denom;
                        if le > f64::NEG_INFINITY {
                            step[[i, j]] = le.exp();
                        }
                    }
                    normalize_row(&mut step, i);
                } else {
                    fill_fallback_row(g, &mut step, i);
                }
            }
            steps.push(step);
        }
        Self::custom(p0, steps)
    }

    /// Ruelle–Bowen law on `g` over `horizon` steps: the time-homogeneous
    /// chain whose `N`-step bridges are uniform over paths, built from the
    /// Perron eigendata as `R[i][j] = A[i][j] v[j] / (lambda v[i])` with
    /// stationary initial distribution `p0[i] = u[i] v[i]`.
    pub fn ruelle_bowen(g: &Graph, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidPrior("horizon must be at least 1".into()));
        }
        let n = g.n();
        let perron = g.perron(PERRON_TOL, PERRON_MAX_ITER)?;
        let a = g.adjacency();
        let mut r = Array2::zeros((n, n));
        for i in 0..n {
            for &j in g.out_neighbors(i) {
                r[[i, j]] = a[[i, j]] * perron.v[j] / (perron.lambda * perron.v[i]);
            }
            normalize_row(&mut r, i);
        }
        let mut p0 = Array1::from_shape_fn(n, |i| perron.u[i] * perron.v[i]);
        let total = p0.sum();
        p0.mapv_inplace(|x| x / total);
        let steps = vec![r; horizon];
        Self::custom(p0, steps)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of steps in the horizon (`N`); states are observed at times
    /// `0..=N`.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn p0(&self) -> &Array1<f64> {
        &self.p0
    }

    /// Transition matrix applied between times `t` and `t + 1`.
    pub fn step(&self, t: usize) -> Result<&Array2<f64>> {
        self.steps.get(t).ok_or(Error::TimeOutOfRange {
            s: t,
            t: t + 1,
            horizon: self.horizon,
        })
    }

    /// Transition kernel from time `s` to time `t` (`0 <= s < t <= N`):
    /// the ordered product of the per-step matrices.
    pub fn n_step_kernel(&self, s: usize, t: usize) -> Result<Array2<f64>> {
        if s >= t || t > self.horizon {
            return Err(Error::TimeOutOfRange {
                s,
                t,
                horizon: self.horizon,
            });
        }
        let mut k = self.steps[s].clone();
        for step in &self.steps[s + 1..t] {
            k = k.dot(step);
        }
        Ok(k)
    }

    /// Joint law of the endpoint pair `(X_0, X_N)`:
    /// `joint[x0][xN] = p0[x0] * k[x0][xN]` with `k` the full-horizon kernel.
    pub fn endpoint_joint(&self) -> Result<Array2<f64>> {
        let k = self.n_step_kernel(0, self.horizon)?;
        let mut joint = k;
        for (i, mut row) in joint.rows_mut().into_iter().enumerate() {
            row *= self.p0[i];
        }
        Ok(joint)
    }

    /// State distribution at time `t` (`0 <= t <= N`).
    pub fn marginal(&self, t: usize) -> Result<Array1<f64>> {
        if t > self.horizon {
            return Err(Error::TimeOutOfRange {
                s: t,
                t,
                horizon: self.horizon,
            });
        }
        let mut p = self.p0.clone();
        for step in &self.steps[..t] {
            p = step.t().dot(&p);
        }
        Ok(p)
    }

    /// Time-reversed endpoint kernel: row `x_N` gives the conditional law of
    /// the initial state given the final state,
    /// `rows[x_N][x_0] = p0[x_0] k[x_0][x_N] / p_N[x_N]`
    /// with `k` the full-horizon kernel. Rows at states with zero final mass
    /// are undefined; they are flagged and left zero.
    pub fn reverse_kernel(&self) -> Result<ReverseKernel> {
        let k = self.n_step_kernel(0, self.horizon)?;
        let p_final = self.marginal(self.horizon)?;
        let n = self.n;
        let mut rows = Array2::zeros((n, n));
        let mut defined = vec![false; n];
        for x_final in 0..n {
            if p_final[x_final] > 0.0 {
                defined[x_final] = true;
                for x0 in 0..n {
                    rows[[x_final, x0]] = self.p0[x0] * k[[x0, x_final]] / p_final[x_final];
                }
            }
        }
        Ok(ReverseKernel { rows, defined })
    }

    /// Probability of a full-horizon path given as `N + 1` 1-based labels.
    /// Paths through absent transitions have probability zero.
    pub fn path_probability(&self, path: &[usize]) -> Result<f64> {
        if path.len() != self.horizon + 1 {
            return Err(Error::InvalidSpec(format!(
                "path has {} states, expected horizon + 1 = {}",
                path.len(),
                self.horizon + 1
            )));
        }
        for &label in path {
            if label < 1 || label > self.n {
                return Err(Error::InvalidSpec(format!(
                    "path label {label} outside 1..={}",
                    self.n
                )));
            }
        }
        let mut prob = self.p0[path[0] - 1];
        for t in 0..self.horizon {
            if prob == 0.0 {
                return Ok(0.0);
            }
            prob *= self.steps[t][[path[t] - 1, path[t + 1] - 1]];
        }
        Ok(prob)
    }
}

/// Reverse endpoint kernel with per-row definedness flags.
#[derive(Debug, Clone)]
pub struct ReverseKernel {
    rows: Array2<f64>,
    defined: Vec<bool>,
}

impl ReverseKernel {
    /// Conditional law of the initial state given final state `x_final`
    /// (1-based). Errors when the prior puts no mass on `x_final`.
    pub fn row(&self, x_final: usize) -> Result<ArrayView1<'_, f64>> {
        if x_final < 1 || x_final > self.defined.len() {
            return Err(Error::InvalidSpec(format!(
                "state label {x_final} outside 1..={}",
                self.defined.len()
            )));
        }
        if !self.defined[x_final - 1] {
            return Err(Error::UndefinedReverseRow { state: x_final });
        }
        Ok(self.rows.row(x_final - 1))
    }

    pub fn is_defined(&self, x_final: usize) -> bool {
        x_final >= 1 && x_final <= self.defined.len() && self.defined[x_final - 1]
    }

    /// Full matrix; undefined rows are zero.
    pub fn matrix(&self) -> &Array2<f64> {
        &self.rows
    }
}

/// `log(sum(exp(terms)))` with the usual max shift; `-inf` for empty input
/// or when every term is `-inf`.
pub(crate) fn logsumexp(terms: &[f64]) -> f64 {
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = terms.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

/// Divides row `i` by its sum to absorb floating-point drift; rows are
/// always within `O(eps)` of stochastic already.
fn normalize_row(m: &mut Array2<f64>, i: usize) {
    let s: f64 = m.row(i).sum();
    if s > 0.0 {
        m.row_mut(i).mapv_inplace(|x| x / s);
    }
}

/// Stochastic filler for states that cannot complete the horizon: uniform
/// over out-neighbors, or a self-loop row for sinks.
fn fill_fallback_row(g: &Graph, step: &mut Array2<f64>, i: usize) {
    let nbrs = g.out_neighbors(i);
    if nbrs.is_empty() {
        step[[i, i]] = 1.0;
    } else {
        let w = 1.0 / nbrs.len() as f64;
        for &j in nbrs {
            step[[i, j]] = w;
        }
    }
}
