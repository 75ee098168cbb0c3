//! Entropic bridge solvers over Markov priors: half-bridges, the classical
//! full bridge, and the incomplete-information bridge where the endpoint
//! marginals are prescribed only on subsets of the state space.
//!
//! All solvers return a [`BridgeSolution`] whose joint endpoint law factors
//! as `q0n[i][j] = phihat0[i] * k[i][j] * phi_n[j]` with `k` the prior's
//! full-horizon kernel. The incomplete-information solver alternates four
//! maps on the potential `phihat0` — propagate forward, rescale at the final
//! time, propagate backward, rescale at the initial time — and stops when
//! the Hilbert projective distance between successive iterates drops below
//! tolerance. The rescale maps divide by the current potential on the
//! constrained nodes and use the explicit normalization constant on the
//! unconstrained remainder, which is what keeps the total mass at one.

use ndarray::{Array1, Array2};

use crate::hilbert::hilbert_distance;
use crate::prior::{logsumexp, MarkovPrior};
use crate::{Error, Result};

/// Default Hilbert-gap tolerance for the iterative solver.
pub const DEFAULT_TOL: f64 = 1e-12;

/// Default iteration budget for the iterative solver.
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// The iterative solver declares failure if the Hilbert gap has not improved
/// for this many consecutive iterations.
pub const STALL_WINDOW: usize = 50;

/// When any positive kernel entry falls below this floor the iteration runs
/// on log-domain potentials to dodge underflow.
pub const LOG_DOMAIN_KERNEL_FLOOR: f64 = 1e-250;

/// Tolerated deviation from unit mass when validating fully specified
/// marginals (inputs are renormalized to machine-exact unit mass).
const UNIT_MASS_TOL: f64 = 1e-9;

/// An endpoint marginal constraint: target values on a subset of nodes.
///
/// Two regimes exist and behave differently inside the solvers:
///
/// * **Proper subset** — the marginal is observed only on some nodes, with
///   total observed mass strictly below one. Values must be strictly
///   positive. The solver completes the marginal on the remaining nodes.
/// * **Full information** — every node is constrained and the values form a
///   probability vector (zeros allowed, so point masses are expressible).
#[derive(Debug, Clone)]
pub struct PartialMarginal {
    n: usize,
    mask: Vec<bool>,
    dense: Array1<f64>,
    mass: f64,
}

impl PartialMarginal {
    /// Constraint on a proper subset (or, when `nodes` covers every node,
    /// full information with positive values). `nodes` are 1-based labels.
    pub fn on_subset(n: usize, nodes: &[usize], values: &[f64]) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidDistribution(format!(
                "need at least 2 states, got {n}"
            )));
        }
        if nodes.is_empty() || nodes.len() != values.len() {
            return Err(Error::InvalidDistribution(format!(
                "subset of {} nodes with {} values",
                nodes.len(),
                values.len()
            )));
        }
        let mut mask = vec![false; n];
        let mut dense = Array1::zeros(n);
        for (&label, &v) in nodes.iter().zip(values) {
            if label < 1 || label > n {
                return Err(Error::InvalidDistribution(format!(
                    "node label {label} outside 1..={n}"
                )));
            }
            if mask[label - 1] {
                return Err(Error::InvalidDistribution(format!(
                    "node {label} listed twice"
                )));
            }
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidDistribution(format!(
                    "observed mass at node {label} must be positive and finite, got {v}"
                )));
            }
            mask[label - 1] = true;
            dense[label - 1] = v;
        }
        let mass: f64 = dense.sum();
        let full = mask.iter().all(|&b| b);
        if full {
            if (mass - 1.0).abs() > UNIT_MASS_TOL {
                return Err(Error::InvalidDistribution(format!(
                    "fully specified marginal must have unit mass, got {mass}"
                )));
            }
            dense.mapv_inplace(|v| v / mass);
            return Ok(PartialMarginal {
                n,
                mask,
                dense,
                mass: 1.0,
            });
        }
        if 1.0 - mass <= 1e-12 {
            return Err(Error::InvalidDistribution(format!(
                "marginal on a proper subset must leave strictly positive \
                 unobserved mass, got total {mass}"
            )));
        }
        Ok(PartialMarginal {
            n,
            mask,
            dense,
            mass,
        })
    }

    /// Fully specified marginal: a probability vector over all `n` nodes.
    /// Zeros are allowed (unlike [`PartialMarginal::on_subset`], which
    /// rejects them because a vanishing target on an *observed* node would
    /// make the rescale maps degenerate).
    pub fn full(values: &[f64]) -> Result<Self> {
        let n = values.len();
        if n < 2 {
            return Err(Error::InvalidDistribution(format!(
                "need at least 2 states, got {n}"
            )));
        }
        let mut sum = 0.0;
        for (i, &v) in values.iter().enumerate() {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidDistribution(format!(
                    "mass at node {} must be nonnegative and finite, got {v}",
                    i + 1
                )));
            }
            sum += v;
        }
        if (sum - 1.0).abs() > UNIT_MASS_TOL {
            return Err(Error::InvalidDistribution(format!(
                "fully specified marginal must have unit mass, got {sum}"
            )));
        }
        let dense = Array1::from_iter(values.iter().map(|&v| v / sum));
        Ok(PartialMarginal {
            n,
            mask: vec![true; n],
            dense,
            mass: 1.0,
        })
    }

    /// Point mass at a single 1-based node.
    pub fn delta(n: usize, node: usize) -> Result<Self> {
        if node < 1 || node > n {
            return Err(Error::InvalidDistribution(format!(
                "node label {node} outside 1..={n}"
            )));
        }
        let mut values = vec![0.0; n];
        values[node - 1] = 1.0;
        PartialMarginal::full(&values)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Total observed mass (one for fully specified marginals).
    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Whether every node is constrained.
    pub fn is_full(&self) -> bool {
        self.mask.iter().all(|&b| b)
    }

    /// Whether the 1-based `label` carries a constraint.
    pub fn is_constrained(&self, label: usize) -> bool {
        label >= 1 && label <= self.n && self.mask[label - 1]
    }

    /// Target values on a dense 0-indexed vector (zero off the subset).
    pub fn dense(&self) -> &Array1<f64> {
        &self.dense
    }

    /// Constrained positions, 0-based and ascending.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }

    /// Unconstrained positions, 0-based and ascending.
    pub fn complement(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| (!b).then_some(i))
    }

    /// Constrained 1-based labels, ascending.
    pub fn nodes(&self) -> Vec<usize> {
        self.indices().map(|i| i + 1).collect()
    }
}

/// Output of every bridge solver. The joint endpoint law `q0n` always
/// factors through the four potentials:
/// `q0n[i][j] = phihat0[i] * k[i][j] * phi_n[j]`, with
/// `phi0 = k · phi_n` and `phihat_n = kᵀ · phihat0`, and the normalization
/// `Σ phihat0 ∘ phi0 = 1` fixed. The potentials are gauge-canonical: when
/// the final side is constrained on a proper subset its potential is one on
/// the unconstrained nodes; when it is fully specified, the potential is one
/// at the highest-prior-mass reachable final node.
#[derive(Debug, Clone)]
pub struct BridgeSolution {
    pub phi0: Array1<f64>,
    pub phi_n: Array1<f64>,
    pub phihat0: Array1<f64>,
    pub phihat_n: Array1<f64>,
    /// Joint law of `(X_0, X_N)`, row = initial node, column = final node.
    pub q0n: Array2<f64>,
    /// Completed initial marginal (row sums of `q0n`).
    pub q0_star: Array1<f64>,
    /// Completed final marginal (column sums of `q0n`).
    pub qn_star: Array1<f64>,
    /// Iterations spent by the alternating solver (zero for closed forms).
    pub iterations: usize,
    /// Hilbert distance between the last two `phihat0` iterates.
    pub final_gap: f64,
    /// Hilbert gap after each full cycle, in order.
    pub gap_history: Vec<f64>,
    /// Relative entropy of the solution from the prior endpoint law.
    pub kl_value: f64,
}

/// Time-resolved picture of a solved bridge: per-time marginals, the tilted
/// transition matrices, and the mass moved along each edge per interval.
#[derive(Debug, Clone)]
pub struct FlowEvolution {
    /// `(N+1) × n`; row `t` is the state distribution at time `t`.
    pub marginals: Array2<f64>,
    /// `N` row-stochastic matrices; entry `[i][j]` is the probability of
    /// moving `i → j` over interval `t` under the solution law.
    pub transitions: Vec<Array2<f64>>,
    /// `N` matrices; entry `[i][j]` is the absolute mass moved `i → j`
    /// over interval `t`. Each matrix sums to one.
    pub edge_flows: Vec<Array2<f64>>,
}

/// Relative entropy `Σ q log(q/p)` with `0 log 0 = 0`; `+inf` when `q`
/// carries mass where `p` has none. Both arguments must be distributions
/// (nonnegative, total mass one within `1e-6`).
pub fn kl_divergence(q: &Array2<f64>, p: &Array2<f64>) -> Result<f64> {
    if q.dim() != p.dim() {
        return Err(Error::InvalidDistribution(format!(
            "shape mismatch {:?} vs {:?}",
            q.dim(),
            p.dim()
        )));
    }
    for (name, m) in [("first", q), ("second", p)] {
        if m.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::InvalidDistribution(format!(
                "{name} argument has a negative or non-finite entry"
            )));
        }
        let s = m.sum();
        if (s - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidDistribution(format!(
                "{name} argument has total mass {s}, expected 1"
            )));
        }
    }
    let mut acc = 0.0;
    for (&qv, &pv) in q.iter().zip(p.iter()) {
        if qv > 0.0 {
            if pv == 0.0 {
                return Ok(f64::INFINITY);
            }
            acc += qv * (qv / pv).ln();
        }
    }
    Ok(acc)
}

/// The unconstrained solution: the prior itself, packaged as a
/// [`BridgeSolution`] (unit potentials, zero relative entropy).
pub fn prior_solution(prior: &MarkovPrior) -> Result<BridgeSolution> {
    let n = prior.n();
    let q0n = prior.endpoint_joint()?;
    let q0_star = prior.p0().clone();
    let qn_star = prior.marginal(prior.horizon())?;
    Ok(BridgeSolution {
        phi0: Array1::ones(n),
        phi_n: Array1::ones(n),
        phihat0: q0_star.clone(),
        phihat_n: qn_star.clone(),
        q0n,
        q0_star,
        qn_star,
        iterations: 0,
        final_gap: 0.0,
        gap_history: Vec::new(),
        kl_value: 0.0,
    })
}

/// Bridge with only the initial marginal constrained (possibly on a
/// subset). The transition law is untouched: the solution keeps the prior's
/// forward kernel and only moves the initial distribution. On the
/// unobserved nodes the completed marginal is the prior's, rescaled by
/// `c0 = (1 − α) / Σ_unobserved p0` so everything sums to one.
pub fn half_bridge_initial(prior: &MarkovPrior, rho0: &PartialMarginal) -> Result<BridgeSolution> {
    check_dims(prior, rho0)?;
    let n = prior.n();
    let p0 = prior.p0();
    let q0_star = if rho0.is_full() {
        rho0.dense().clone()
    } else {
        let unobserved: f64 = rho0.complement().map(|x| p0[x]).sum();
        if unobserved <= 0.0 {
            return Err(Error::Infeasible(
                "the prior assigns no mass outside the observed initial set, \
                 so the remaining mass cannot be placed"
                    .into(),
            ));
        }
        let c0 = (1.0 - rho0.mass()) / unobserved;
        let mut out = Array1::zeros(n);
        for x in rho0.indices() {
            out[x] = rho0.dense()[x];
        }
        for x in rho0.complement() {
            out[x] = c0 * p0[x];
        }
        out
    };
    let k = prior.n_step_kernel(0, prior.horizon())?;
    let mut q0n = k.clone();
    for (i, mut row) in q0n.rows_mut().into_iter().enumerate() {
        row *= q0_star[i];
    }
    let qn_star = column_sums(&q0n);
    let kl = kl_divergence(&q0n, &prior.endpoint_joint()?)?;
    Ok(BridgeSolution {
        phi0: Array1::ones(n),
        phi_n: Array1::ones(n),
        phihat0: q0_star.clone(),
        phihat_n: qn_star.clone(),
        q0n,
        q0_star,
        qn_star,
        iterations: 0,
        final_gap: 0.0,
        gap_history: Vec::new(),
        kl_value: kl,
    })
}

/// Bridge with only the final marginal constrained (possibly on a subset).
/// The time-reversed transition law is untouched; equivalently the final
/// potential takes the two-branch form — `ρ_N / p_N` on the observed nodes,
/// the constant `c_N = (1 − β) / Σ_unobserved p_N` elsewhere — and the rest
/// of the solution follows from the backward propagation of that potential.
pub fn half_bridge_final(prior: &MarkovPrior, rho_n: &PartialMarginal) -> Result<BridgeSolution> {
    check_dims(prior, rho_n)?;
    let n = prior.n();
    let horizon = prior.horizon();
    let p_n = prior.marginal(horizon)?;
    let mut phi_n = Array1::ones(n);
    if rho_n.is_full() {
        for x in 0..n {
            let target = rho_n.dense()[x];
            if target == 0.0 {
                phi_n[x] = 0.0;
            } else if p_n[x] > 0.0 {
                phi_n[x] = target / p_n[x];
            } else {
                return Err(Error::Infeasible(format!(
                    "final mass requested at node {} which the prior cannot reach",
                    x + 1
                )));
            }
        }
    } else {
        for x in rho_n.indices() {
            if p_n[x] <= 0.0 {
                return Err(Error::Infeasible(format!(
                    "final mass requested at node {} which the prior cannot reach",
                    x + 1
                )));
            }
            phi_n[x] = rho_n.dense()[x] / p_n[x];
        }
        let unobserved: f64 = rho_n.complement().map(|x| p_n[x]).sum();
        if unobserved <= 0.0 {
            return Err(Error::Infeasible(
                "the prior assigns no mass outside the observed final set, \
                 so the remaining mass cannot be placed"
                    .into(),
            ));
        }
        let c_n = (1.0 - rho_n.mass()) / unobserved;
        for x in rho_n.complement() {
            phi_n[x] = c_n;
        }
    }
    let k = prior.n_step_kernel(0, horizon)?;
    let mut phihat0 = prior.p0().clone();
    let mut phihat_n = p_n;
    let mut phi0 = k.dot(&phi_n);
    // Gauge: a proper-subset constraint pins the potential (it is the
    // constant c_N off the subset); a fully specified side is rescaled so
    // the potential is one at the heaviest reachable final node.
    if rho_n.is_full() {
        if let Some(j) = (0..n)
            .filter(|&x| phi_n[x] > 0.0)
            .max_by(|&a, &b| phihat_n[a].partial_cmp(&phihat_n[b]).unwrap())
        {
            let g = phi_n[j];
            phi_n.mapv_inplace(|v| v / g);
            phi0.mapv_inplace(|v| v / g);
            phihat0.mapv_inplace(|v| v * g);
            phihat_n.mapv_inplace(|v| v * g);
        }
    }
    let mut q0n = k;
    for (i, mut row) in q0n.rows_mut().into_iter().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v *= phihat0[i] * phi_n[j];
        }
    }
    let q0_star = row_sums(&q0n);
    let qn_star = column_sums(&q0n);
    let kl = kl_divergence(&q0n, &prior.endpoint_joint()?)?;
    Ok(BridgeSolution {
        phi0,
        phi_n,
        phihat0,
        phihat_n,
        q0n,
        q0_star,
        qn_star,
        iterations: 0,
        final_gap: 0.0,
        gap_history: Vec::new(),
        kl_value: kl,
    })
}

/// Bridge with both endpoint marginals constrained, each possibly on a
/// subset of nodes: alternate the four potential maps until the Hilbert
/// distance between successive `phihat0` iterates falls below `tol`.
///
/// Covers the classical full bridge when both constraints are fully
/// specified. Fails with [`Error::Stalled`] when the gap stops improving
/// for [`STALL_WINDOW`] consecutive iterations (the usual symptom of
/// constraints the kernel support cannot meet) and with
/// [`Error::NonConvergence`] when `max_iter` runs out first.
pub fn imsbp_solve(
    prior: &MarkovPrior,
    rho0: &PartialMarginal,
    rho_n: &PartialMarginal,
    tol: f64,
    max_iter: usize,
) -> Result<BridgeSolution> {
    check_dims(prior, rho0)?;
    check_dims(prior, rho_n)?;
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::InvalidSpec(format!("tolerance must be positive, got {tol}")));
    }
    if max_iter == 0 {
        return Err(Error::InvalidSpec("iteration budget must be positive".into()));
    }
    let horizon = prior.horizon();
    let k = prior.n_step_kernel(0, horizon)?;
    let log_k = log_kernel(prior)?;
    // Underflow dispatch: if the kernel has genuinely tiny positive entries
    // (or entries that already underflowed in the linear product), iterate
    // on log-domain potentials instead.
    let min_positive = k.iter().cloned().filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min);
    let underflowed = k
        .iter()
        .zip(log_k.iter())
        .any(|(&lin, &lg)| lin == 0.0 && lg.is_finite());
    let use_log = underflowed || min_positive < LOG_DOMAIN_KERNEL_FLOOR;
    let (lph0, lph_n, lphi0, lphihat_n, history, iterations) = if use_log {
        iterate_log(&log_k, prior.p0(), rho0, rho_n, tol, max_iter)?
    } else {
        let (a, b, c, d, h, it) = iterate_linear(&k, prior.p0(), rho0, rho_n, tol, max_iter)?;
        (
            a.mapv(f64::ln),
            b.mapv(f64::ln),
            c.mapv(f64::ln),
            d.mapv(f64::ln),
            h,
            it,
        )
    };
    assemble(
        prior, &log_k, rho_n, lph0, lph_n, lphi0, lphihat_n, iterations, history,
    )
}

/// One entry point for every constraint pattern: no constraints returns the
/// prior, one side dispatches to the matching half-bridge, two sides run
/// the alternating solver.
pub fn solve_bridge(
    prior: &MarkovPrior,
    rho0: Option<&PartialMarginal>,
    rho_n: Option<&PartialMarginal>,
    tol: f64,
    max_iter: usize,
) -> Result<BridgeSolution> {
    match (rho0, rho_n) {
        (None, None) => prior_solution(prior),
        (Some(r0), None) => half_bridge_initial(prior, r0),
        (None, Some(rn)) => half_bridge_final(prior, rn),
        (Some(r0), Some(rn)) => imsbp_solve(prior, r0, rn, tol, max_iter),
    }
}

/// Completed endpoint marginals: the row and column sums of the joint law.
pub fn complete_marginals(sol: &BridgeSolution) -> (Array1<f64>, Array1<f64>) {
    (row_sums(&sol.q0n), column_sums(&sol.q0n))
}

/// Unrolls a solved bridge over time: per-time marginals, the tilted
/// transition matrices `q_ij(t) = p_ij(t) · φ(t+1, j) / φ(t, i)` from the
/// backward potential recursion `φ(t) = Π_t · φ(t+1)`, and per-interval
/// edge flows. Rows at states the solution never occupies keep the prior's
/// transition row.
pub fn recover_flow(prior: &MarkovPrior, sol: &BridgeSolution) -> Result<FlowEvolution> {
    let n = prior.n();
    let horizon = prior.horizon();
    if sol.phi_n.len() != n {
        return Err(Error::InvalidSpec(format!(
            "solution over {} states does not match a prior over {n}",
            sol.phi_n.len()
        )));
    }
    // Backward potentials φ(t); φ(N) is the solution's final potential.
    let mut phis = vec![Array1::zeros(n); horizon + 1];
    phis[horizon] = sol.phi_n.clone();
    for t in (0..horizon).rev() {
        phis[t] = prior.step(t)?.dot(&phis[t + 1]);
    }
    let mut marginals = Array2::zeros((horizon + 1, n));
    for (j, &v) in sol.q0_star.iter().enumerate() {
        marginals[[0, j]] = v;
    }
    let mut transitions = Vec::with_capacity(horizon);
    let mut edge_flows = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let step = prior.step(t)?;
        let mut q_t = Array2::zeros((n, n));
        for i in 0..n {
            if phis[t][i] > 0.0 {
                for j in 0..n {
                    q_t[[i, j]] = step[[i, j]] * phis[t + 1][j] / phis[t][i];
                }
            } else {
                if marginals[[t, i]] > 0.0 {
                    return Err(Error::Infeasible(format!(
                        "node {} carries mass at time {t} but its potential \
                         vanishes; the solution is inconsistent with the prior",
                        i + 1
                    )));
                }
                for j in 0..n {
                    q_t[[i, j]] = step[[i, j]];
                }
            }
        }
        let mut flow = Array2::zeros((n, n));
        for i in 0..n {
            let mass = marginals[[t, i]];
            for j in 0..n {
                flow[[i, j]] = mass * q_t[[i, j]];
                marginals[[t + 1, j]] += flow[[i, j]];
            }
        }
        transitions.push(q_t);
        edge_flows.push(flow);
    }
    Ok(FlowEvolution {
        marginals,
        transitions,
        edge_flows,
    })
}

// ---------------------------------------------------------------------------
// internals
// ---------------------------------------------------------------------------

fn check_dims(prior: &MarkovPrior, rho: &PartialMarginal) -> Result<()> {
    if rho.n() != prior.n() {
        return Err(Error::InvalidDistribution(format!(
            "marginal over {} states does not match a prior over {}",
            rho.n(),
            prior.n()
        )));
    }
    Ok(())
}

fn row_sums(m: &Array2<f64>) -> Array1<f64> {
    m.rows().into_iter().map(|r| r.sum()).collect()
}

fn column_sums(m: &Array2<f64>) -> Array1<f64> {
    m.columns().into_iter().map(|c| c.sum()).collect()
}

/// Full-horizon kernel in the log domain, composed step by step with
/// log-sum-exp so entries far below linear underflow stay meaningful.
fn log_kernel(prior: &MarkovPrior) -> Result<Array2<f64>> {
    let n = prior.n();
    let mut acc = prior.step(0)?.mapv(f64::ln);
    let mut terms = Vec::with_capacity(n);
    for t in 1..prior.horizon() {
        let step_log = prior.step(t)?.mapv(f64::ln);
        let mut next = Array2::from_elem((n, n), f64::NEG_INFINITY);
        for i in 0..n {
            for j in 0..n {
                terms.clear();
                for m in 0..n {
                    let v = acc[[i, m]] + step_log[[m, j]];
                    if v.is_finite() {
                        terms.push(v);
                    }
                }
                next[[i, j]] = logsumexp(&terms);
            }
        }
        acc = next;
    }
    Ok(acc)
}

fn unreachable_final(x: usize) -> Error {
    Error::Infeasible(format!(
        "final mass requested at node {} which no initial mass can reach",
        x + 1
    ))
}

fn starved_initial(x: usize) -> Error {
    Error::Infeasible(format!(
        "initial mass requested at node {} from which no final mass is reachable",
        x + 1
    ))
}

fn starved_complement() -> Error {
    Error::Infeasible(
        "the prior assigns no reachable mass outside the observed initial set, \
         so the remaining mass cannot be placed"
            .into(),
    )
}

/// Final-time rescale: divide the target by the propagated potential on the
/// constrained nodes, one elsewhere (zero targets give zero potential).
fn d_final_linear(rho: &PartialMarginal, phihat_n: &Array1<f64>) -> Result<Array1<f64>> {
    let mut phi = Array1::ones(phihat_n.len());
    for x in rho.indices() {
        let target = rho.dense()[x];
        if target == 0.0 {
            phi[x] = 0.0;
        } else if phihat_n[x] > 0.0 {
            phi[x] = target / phihat_n[x];
        } else {
            return Err(unreachable_final(x));
        }
    }
    Ok(phi)
}

/// Initial-time rescale: divide the target by the propagated potential on
/// the constrained nodes; on the rest, rescale the prior by the
/// normalization constant `c0 = (1 − α) / Σ_unconstrained p0 ∘ φ(0)`.
fn d_initial_linear(
    rho: &PartialMarginal,
    phi0: &Array1<f64>,
    p0: &Array1<f64>,
) -> Result<Array1<f64>> {
    let mut phihat = Array1::zeros(p0.len());
    for x in rho.indices() {
        let target = rho.dense()[x];
        if target == 0.0 {
            phihat[x] = 0.0;
        } else if phi0[x] > 0.0 {
            phihat[x] = target / phi0[x];
        } else {
            return Err(starved_initial(x));
        }
    }
    if !rho.is_full() {
        let denom: f64 = rho.complement().map(|x| p0[x] * phi0[x]).sum();
        if !(denom > 0.0) || !denom.is_finite() {
            return Err(starved_complement());
        }
        let c0 = (1.0 - rho.mass()) / denom;
        for x in rho.complement() {
            phihat[x] = c0 * p0[x];
        }
    }
    Ok(phihat)
}

type Quadruple = (
    Array1<f64>,
    Array1<f64>,
    Array1<f64>,
    Array1<f64>,
    Vec<f64>,
    usize,
);

fn iterate_linear(
    k: &Array2<f64>,
    p0: &Array1<f64>,
    rho0: &PartialMarginal,
    rho_n: &PartialMarginal,
    tol: f64,
    max_iter: usize,
) -> Result<Quadruple> {
    let mut phihat0 = p0.clone();
    let mut history = Vec::new();
    let mut best = f64::INFINITY;
    let mut since_improved = 0usize;
    let mut converged = false;
    let mut iterations = 0usize;
    for it in 1..=max_iter {
        iterations = it;
        let phihat_n = k.t().dot(&phihat0);
        let phi_n = d_final_linear(rho_n, &phihat_n)?;
        let phi0 = k.dot(&phi_n);
        let next = d_initial_linear(rho0, &phi0, p0)?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Infeasible(
                "potentials overflowed; the constraints appear unreachable \
                 under the prior's support"
                    .into(),
            ));
        }
        let gap = hilbert_distance(
            phihat0.as_slice().expect("contiguous"),
            next.as_slice().expect("contiguous"),
        )?;
        history.push(gap);
        phihat0 = next;
        if gap < tol {
            converged = true;
            break;
        }
        if gap < best {
            best = gap;
            since_improved = 0;
        } else {
            since_improved += 1;
            if since_improved >= STALL_WINDOW {
                return Err(Error::Stalled {
                    iterations: it,
                    gap,
                });
            }
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            method: "alternating bridge iteration",
            iterations,
            gap: history.last().copied().unwrap_or(f64::INFINITY),
        });
    }
    // One ordered half-cycle so the returned quadruple is mutually
    // consistent: phi_n from the converged phihat0, phi0 from phi_n, and
    // the initial-side rescale applied last (its constraint holds exactly).
    let phihat_n_pre = k.t().dot(&phihat0);
    let phi_n = d_final_linear(rho_n, &phihat_n_pre)?;
    let phi0 = k.dot(&phi_n);
    let phihat0 = d_initial_linear(rho0, &phi0, p0)?;
    let phihat_n = k.t().dot(&phihat0);
    Ok((phihat0, phi_n, phi0, phihat_n, history, iterations))
}

fn d_final_log(rho: &PartialMarginal, lphihat_n: &Array1<f64>) -> Result<Array1<f64>> {
    let mut lphi = Array1::zeros(lphihat_n.len());
    for x in rho.indices() {
        let target = rho.dense()[x];
        if target == 0.0 {
            lphi[x] = f64::NEG_INFINITY;
        } else if lphihat_n[x].is_finite() {
            lphi[x] = target.ln() - lphihat_n[x];
        } else {
            return Err(unreachable_final(x));
        }
    }
    Ok(lphi)
}

fn d_initial_log(
    rho: &PartialMarginal,
    lphi0: &Array1<f64>,
    p0: &Array1<f64>,
) -> Result<Array1<f64>> {
    let mut lphihat = Array1::from_elem(p0.len(), f64::NEG_INFINITY);
    for x in rho.indices() {
        let target = rho.dense()[x];
        if target == 0.0 {
            lphihat[x] = f64::NEG_INFINITY;
        } else if lphi0[x].is_finite() {
            lphihat[x] = target.ln() - lphi0[x];
        } else {
            return Err(starved_initial(x));
        }
    }
    if !rho.is_full() {
        let terms: Vec<f64> = rho
            .complement()
            .filter(|&x| p0[x] > 0.0)
            .map(|x| p0[x].ln() + lphi0[x])
            .filter(|v| v.is_finite())
            .collect();
        let denom_log = logsumexp(&terms);
        if !denom_log.is_finite() {
            return Err(starved_complement());
        }
        let c0_log = (1.0 - rho.mass()).ln() - denom_log;
        for x in rho.complement() {
            lphihat[x] = if p0[x] > 0.0 {
                c0_log + p0[x].ln()
            } else {
                f64::NEG_INFINITY
            };
        }
    }
    Ok(lphihat)
}

/// Hilbert projective distance between two log-domain positive vectors:
/// the spread of their difference over the common support. Infinite when
/// exactly one coordinate vanishes, an error when no support is shared.
fn log_hilbert_gap(a: &Array1<f64>, b: &Array1<f64>) -> Result<f64> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut shared = false;
    for (&x, &y) in a.iter().zip(b.iter()) {
        match (x.is_finite(), y.is_finite()) {
            (true, true) => {
                shared = true;
                let d = x - y;
                lo = lo.min(d);
                hi = hi.max(d);
            }
            (false, false) => {}
            _ => return Ok(f64::INFINITY),
        }
    }
    if !shared {
        return Err(Error::DegenerateVector(
            "log-domain potentials share no support".into(),
        ));
    }
    Ok(hi - lo)
}

fn iterate_log(
    log_k: &Array2<f64>,
    p0: &Array1<f64>,
    rho0: &PartialMarginal,
    rho_n: &PartialMarginal,
    tol: f64,
    max_iter: usize,
) -> Result<Quadruple> {
    let n = p0.len();
    let lse_cols = |v: &Array1<f64>| -> Array1<f64> {
        let mut out = Array1::from_elem(n, f64::NEG_INFINITY);
        let mut terms = Vec::with_capacity(n);
        for j in 0..n {
            terms.clear();
            for i in 0..n {
                let t = log_k[[i, j]] + v[i];
                if t.is_finite() {
                    terms.push(t);
                }
            }
            out[j] = logsumexp(&terms);
        }
        out
    };
    let lse_rows = |v: &Array1<f64>| -> Array1<f64> {
        let mut out = Array1::from_elem(n, f64::NEG_INFINITY);
        let mut terms = Vec::with_capacity(n);
        for i in 0..n {
            terms.clear();
            for j in 0..n {
                let t = log_k[[i, j]] + v[j];
                if t.is_finite() {
                    terms.push(t);
                }
            }
            out[i] = logsumexp(&terms);
        }
        out
    };
    let mut lphihat0 = p0.mapv(f64::ln);
    let mut history = Vec::new();
    let mut best = f64::INFINITY;
    let mut since_improved = 0usize;
    let mut converged = false;
    let mut iterations = 0usize;
    for it in 1..=max_iter {
        iterations = it;
        let lphihat_n = lse_cols(&lphihat0);
        let lphi_n = d_final_log(rho_n, &lphihat_n)?;
        let lphi0 = lse_rows(&lphi_n);
        let next = d_initial_log(rho0, &lphi0, p0)?;
        let gap = log_hilbert_gap(&lphihat0, &next)?;
        history.push(gap);
        lphihat0 = next;
        if gap < tol {
            converged = true;
            break;
        }
        if gap < best {
            best = gap;
            since_improved = 0;
        } else {
            since_improved += 1;
            if since_improved >= STALL_WINDOW {
                return Err(Error::Stalled {
                    iterations: it,
                    gap,
                });
            }
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            method: "alternating bridge iteration (log domain)",
            iterations,
            gap: history.last().copied().unwrap_or(f64::INFINITY),
        });
    }
    let lphihat_n_pre = lse_cols(&lphihat0);
    let lphi_n = d_final_log(rho_n, &lphihat_n_pre)?;
    let lphi0 = lse_rows(&lphi_n);
    let lphihat0 = d_initial_log(rho0, &lphi0, p0)?;
    let lphihat_n = lse_cols(&lphihat0);
    Ok((lphihat0, lphi_n, lphi0, lphihat_n, history, iterations))
}

/// Builds the final [`BridgeSolution`] from a log-domain potential
/// quadruple: normalizes total mass into the `phihat` side, applies the
/// output gauge, exponentiates, and fills in the derived fields.
#[allow(clippy::too_many_arguments)]
fn assemble(
    prior: &MarkovPrior,
    log_k: &Array2<f64>,
    rho_n: &PartialMarginal,
    mut lphihat0: Array1<f64>,
    mut lphi_n: Array1<f64>,
    mut lphi0: Array1<f64>,
    mut lphihat_n: Array1<f64>,
    iterations: usize,
    gap_history: Vec<f64>,
) -> Result<BridgeSolution> {
    let n = prior.n();
    let mut lq = Array2::from_elem((n, n), f64::NEG_INFINITY);
    for i in 0..n {
        for j in 0..n {
            let v = lphihat0[i] + log_k[[i, j]] + lphi_n[j];
            if v.is_finite() {
                lq[[i, j]] = v;
            }
        }
    }
    let finite: Vec<f64> = lq.iter().cloned().filter(|v| v.is_finite()).collect();
    let slog = logsumexp(&finite);
    if !slog.is_finite() {
        return Err(Error::Infeasible(
            "the solution carries no mass on the kernel support".into(),
        ));
    }
    lq.mapv_inplace(|v| v - slog);
    lphihat0.mapv_inplace(|v| v - slog);
    lphihat_n.mapv_inplace(|v| v - slog);
    if rho_n.is_full() {
        let p_n = prior.marginal(prior.horizon())?;
        if let Some(j) = (0..n)
            .filter(|&x| lphi_n[x].is_finite())
            .max_by(|&a, &b| p_n[a].partial_cmp(&p_n[b]).unwrap())
        {
            let g = lphi_n[j];
            lphi_n.mapv_inplace(|v| v - g);
            lphi0.mapv_inplace(|v| v - g);
            lphihat0.mapv_inplace(|v| v + g);
            lphihat_n.mapv_inplace(|v| v + g);
        }
    }
    let q0n = lq.mapv(f64::exp);
    let q0_star = row_sums(&q0n);
    let qn_star = column_sums(&q0n);
    let kl_value = kl_divergence(&q0n, &prior.endpoint_joint()?)?;
    let final_gap = gap_history.last().copied().unwrap_or(0.0);
    Ok(BridgeSolution {
        phi0: lphi0.mapv(f64::exp),
        phi_n: lphi_n.mapv(f64::exp),
        phihat0: lphihat0.mapv(f64::exp),
        phihat_n: lphihat_n.mapv(f64::exp),
        q0n,
        q0_star,
        qn_star,
        iterations,
        final_gap,
        gap_history,
        kl_value,
    })
}
