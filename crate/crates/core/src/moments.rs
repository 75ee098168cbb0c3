//! Maximum-entropy bridges when only moments of the endpoint marginals are
//! known. The optimal joint law is an exponential tilt of the prior's
//! endpoint law, `q ∝ p0n · exp(−λ v(x0) − µ v(xN) − α v(x0)² − β v(xN)²)`,
//! and the multipliers solve a smooth concave dual. Two solvers are
//! provided: gradient ascent with backtracking (the workhorse, any
//! constraint pattern) and an alternating polynomial-root iteration for the
//! mean-only case, useful as an independent cross-check.
//!
//! The normalization multiplier θ is eliminated analytically — the tilted
//! law is renormalized explicitly — which removes a flat direction from the
//! dual and leaves two (means only) or four (means and second moments) free
//! variables.

use ndarray::{Array1, Array2};

use crate::bridge::BridgeSolution;
use crate::prior::{logsumexp, MarkovPrior};
use crate::{Error, Result};

/// Multipliers are clamped to this magnitude during ascent; exponents never
/// overflow below it.
pub const MULTIPLIER_CAP: f64 = 500.0;

/// A converged solution whose multipliers exceed this magnitude is flagged
/// near-degenerate: targets in the interior of the feasible moment set are
/// met with moderate multipliers, so magnitudes of this size mean the
/// target sits (numerically) on the boundary — e.g. a zero-variance second
/// moment — and the reported law is an exponential approximation of a
/// degenerate limit.
pub const NEAR_DEGENERATE_MULTIPLIER: f64 = 50.0;

/// Which endpoint a one-sided moment constraint applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Initial,
    Final,
}

/// Moment targets for the endpoint marginals. Order 1 constrains means;
/// order 2 constrains means and second moments. Either side may be left
/// unconstrained. Node `x` carries the numeric value `x` by default (labels
/// are `1..=n`); [`MomentSpec::with_node_values`] overrides this.
#[derive(Debug, Clone)]
pub struct MomentSpec {
    order: u8,
    m0_1: Option<f64>,
    mn_1: Option<f64>,
    m0_2: Option<f64>,
    mn_2: Option<f64>,
    node_values: Option<Vec<f64>>,
}

impl MomentSpec {
    pub fn mean_both(m0: f64, mn: f64) -> Self {
        MomentSpec {
            order: 1,
            m0_1: Some(m0),
            mn_1: Some(mn),
            m0_2: None,
            mn_2: None,
            node_values: None,
        }
    }

    pub fn mean_initial(m0: f64) -> Self {
        MomentSpec {
            order: 1,
            m0_1: Some(m0),
            mn_1: None,
            m0_2: None,
            mn_2: None,
            node_values: None,
        }
    }

    pub fn mean_final(mn: f64) -> Self {
        MomentSpec {
            order: 1,
            m0_1: None,
            mn_1: Some(mn),
            m0_2: None,
            mn_2: None,
            node_values: None,
        }
    }

    /// Means and second moments on both sides.
    pub fn mean_variance(m0_1: f64, m0_2: f64, mn_1: f64, mn_2: f64) -> Self {
        MomentSpec {
            order: 2,
            m0_1: Some(m0_1),
            mn_1: Some(mn_1),
            m0_2: Some(m0_2),
            mn_2: Some(mn_2),
            node_values: None,
        }
    }

    /// Mean and second moment on a single side.
    pub fn mean_variance_side(side: Side, m1: f64, m2: f64) -> Self {
        match side {
            Side::Initial => MomentSpec {
                order: 2,
                m0_1: Some(m1),
                mn_1: None,
                m0_2: Some(m2),
                mn_2: None,
                node_values: None,
            },
            Side::Final => MomentSpec {
                order: 2,
                m0_1: None,
                mn_1: Some(m1),
                m0_2: None,
                mn_2: Some(m2),
                node_values: None,
            },
        }
    }

    /// Overrides the numeric value attached to each node (defaults are the
    /// labels `1..=n` as real numbers).
    pub fn with_node_values(mut self, values: Vec<f64>) -> Self {
        self.node_values = Some(values);
        self
    }

    pub fn order(&self) -> u8 {
        self.order
    }

    pub fn constrains_initial(&self) -> bool {
        self.m0_1.is_some()
    }

    pub fn constrains_final(&self) -> bool {
        self.mn_1.is_some()
    }

    pub fn m0_1(&self) -> Option<f64> {
        self.m0_1
    }

    pub fn mn_1(&self) -> Option<f64> {
        self.mn_1
    }

    pub fn m0_2(&self) -> Option<f64> {
        self.m0_2
    }

    pub fn mn_2(&self) -> Option<f64> {
        self.mn_2
    }

    pub fn node_values(&self) -> Option<&[f64]> {
        self.node_values.as_deref()
    }
}

/// Dual variables and convergence diagnostics of a moment solve. Inactive
/// multipliers stay at zero. `theta` is the eliminated normalization
/// multiplier, reported for completeness (`exp[−1−θ]` is the tilt
/// normalizer). `near_degenerate` flags a solve that ran into the
/// multiplier clamp — the target is on the boundary of the feasible set and
/// the reported law is the capped approximation of a degenerate limit.
#[derive(Debug, Clone)]
pub struct DualState {
    pub theta: f64,
    pub lambda: f64,
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
    pub objective: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub near_degenerate: bool,
}

impl DualState {
    /// A state with the given first-order multipliers and everything else
    /// zero — convenient for evaluating the dual at a chosen point.
    pub fn at(lambda: f64, mu: f64) -> Self {
        DualState {
            theta: 0.0,
            lambda,
            mu,
            alpha: 0.0,
            beta: 0.0,
            objective: 0.0,
            grad_norm: f64::INFINITY,
            iterations: 0,
            near_degenerate: false,
        }
    }

    /// As [`DualState::at`] with second-order multipliers too.
    pub fn at_order2(lambda: f64, mu: f64, alpha: f64, beta: f64) -> Self {
        DualState {
            alpha,
            beta,
            ..DualState::at(lambda, mu)
        }
    }
}

/// One feature of the tilt: a power of the node value on one endpoint.
#[derive(Debug, Clone, Copy)]
struct Feature {
    side: Side,
    power: i32,
    target: f64,
}

/// Everything a solve needs, precomputed: the log endpoint law, node
/// values, and the active features in canonical order
/// (initial mean, final mean, initial second moment, final second moment).
struct Prepared {
    lp: Array2<f64>,
    values: Vec<f64>,
    features: Vec<Feature>,
}

impl Prepared {
    fn feature_value(&self, f: usize, i: usize, j: usize) -> f64 {
        let feat = self.features[f];
        let v = match feat.side {
            Side::Initial => self.values[i],
            Side::Final => self.values[j],
        };
        v.powi(feat.power)
    }

    /// Log-normalizer and achieved feature expectations at multipliers `m`.
    fn eval(&self, m: &[f64]) -> (f64, Vec<f64>) {
        let n = self.values.len();
        let mut shift = f64::NEG_INFINITY;
        let mut logits = Array2::from_elem((n, n), f64::NEG_INFINITY);
        for i in 0..n {
            for j in 0..n {
                if self.lp[[i, j]].is_finite() {
                    let mut l = self.lp[[i, j]];
                    for (f, &mf) in m.iter().enumerate() {
                        l -= mf * self.feature_value(f, i, j);
                    }
                    logits[[i, j]] = l;
                    shift = shift.max(l);
                }
            }
        }
        let mut z = 0.0;
        for &l in logits.iter() {
            if l.is_finite() {
                z += (l - shift).exp();
            }
        }
        let log_z = shift + z.ln();
        let mut achieved = vec![0.0; m.len()];
        for i in 0..n {
            for j in 0..n {
                let l = logits[[i, j]];
                if l.is_finite() {
                    let q = (l - log_z).exp();
                    for (f, a) in achieved.iter_mut().enumerate() {
                        *a += q * self.feature_value(f, i, j);
                    }
                }
            }
        }
        (log_z, achieved)
    }

    /// Dual value `−log Z − Σ m·target` and its gradient
    /// (achieved − target per feature).
    fn value_and_gradient(&self, m: &[f64]) -> (f64, Vec<f64>) {
        let (log_z, achieved) = self.eval(m);
        let mut value = -log_z;
        let mut grad = vec![0.0; m.len()];
        for (f, feat) in self.features.iter().enumerate() {
            value -= m[f] * feat.target;
            grad[f] = achieved[f] - feat.target;
        }
        (value, grad)
    }

    /// Feature covariance matrix under the tilted law at `m` — the negated
    /// Hessian of the dual, used for Newton steps.
    fn covariance(&self, m: &[f64]) -> Vec<Vec<f64>> {
        let n = self.values.len();
        let dim = m.len();
        let (log_z, achieved) = self.eval(m);
        let mut second = vec![vec![0.0; dim]; dim];
        for i in 0..n {
            for j in 0..n {
                if self.lp[[i, j]].is_finite() {
                    let mut l = self.lp[[i, j]];
                    for (f, &mf) in m.iter().enumerate() {
                        l -= mf * self.feature_value(f, i, j);
                    }
                    let q = (l - log_z).exp();
                    for a in 0..dim {
                        let fa = self.feature_value(a, i, j);
                        for b in a..dim {
                            second[a][b] += q * fa * self.feature_value(b, i, j);
                        }
                    }
                }
            }
        }
        let mut cov = vec![vec![0.0; dim]; dim];
        for a in 0..dim {
            for b in a..dim {
                let c = second[a][b] - achieved[a] * achieved[b];
                cov[a][b] = c;
                cov[b][a] = c;
            }
        }
        cov
    }

    /// The tilted primal at multipliers `m`, normalized exactly.
    fn primal(&self, m: &[f64]) -> (Array2<f64>, f64) {
        let n = self.values.len();
        let (log_z, _) = self.eval(m);
        let mut q = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                if self.lp[[i, j]].is_finite() {
                    let mut l = self.lp[[i, j]] - log_z;
                    for (f, &mf) in m.iter().enumerate() {
                        l -= mf * self.feature_value(f, i, j);
                    }
                    q[[i, j]] = l.exp();
                }
            }
        }
        (q, log_z)
    }
}

fn prepare(prior: &MarkovPrior, spec: &MomentSpec) -> Result<Prepared> {
    if spec.order != 1 && spec.order != 2 {
        return Err(Error::InvalidSpec(format!(
            "moment order must be 1 or 2, got {}",
            spec.order
        )));
    }
    if !spec.constrains_initial() && !spec.constrains_final() {
        return Err(Error::InvalidSpec(
            "at least one endpoint must carry a moment constraint".into(),
        ));
    }
    if spec.order == 2 {
        if spec.constrains_initial() && spec.m0_2.is_none() {
            return Err(Error::InvalidSpec(
                "order-2 initial constraint needs a second moment".into(),
            ));
        }
        if spec.constrains_final() && spec.mn_2.is_none() {
            return Err(Error::InvalidSpec(
                "order-2 final constraint needs a second moment".into(),
            ));
        }
    }
    let n = prior.n();
    let values: Vec<f64> = match &spec.node_values {
        Some(v) => {
            if v.len() != n {
                return Err(Error::InvalidSpec(format!(
                    "{} node values for {n} nodes",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidSpec("node values must be finite".into()));
            }
            v.clone()
        }
        None => (1..=n).map(|x| x as f64).collect(),
    };
    let p0n = prior.endpoint_joint()?;
    let lp = p0n.mapv(f64::ln);
    // Feasibility against what the prior can actually express: the moment
    // targets must be reachable by reweighting the support of p0n.
    if spec.constrains_initial() {
        let weights: Vec<f64> = p0n.rows().into_iter().map(|r| r.sum()).collect();
        let support = support_values(&values, &weights)?;
        check_moments(&support, spec.m0_1.unwrap(), spec.m0_2, "initial")?;
    }
    if spec.constrains_final() {
        let weights: Vec<f64> = p0n.columns().into_iter().map(|c| c.sum()).collect();
        let support = support_values(&values, &weights)?;
        check_moments(&support, spec.mn_1.unwrap(), spec.mn_2, "final")?;
    }
    let mut features = Vec::new();
    if let Some(t) = spec.m0_1 {
        features.push(Feature {
            side: Side::Initial,
            power: 1,
            target: t,
        });
    }
    if let Some(t) = spec.mn_1 {
        features.push(Feature {
            side: Side::Final,
            power: 1,
            target: t,
        });
    }
    if let Some(t) = spec.m0_2 {
        features.push(Feature {
            side: Side::Initial,
            power: 2,
            target: t,
        });
    }
    if let Some(t) = spec.mn_2 {
        features.push(Feature {
            side: Side::Final,
            power: 2,
            target: t,
        });
    }
    Ok(Prepared {
        lp,
        values,
        features,
    })
}

/// Sorted distinct node values carrying positive marginal mass.
fn support_values(values: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    let mut vals: Vec<f64> = values
        .iter()
        .zip(weights)
        .filter_map(|(&v, &w)| (w > 0.0).then_some(v))
        .collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    vals.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if vals.len() < 2 {
        return Err(Error::InvalidDistribution(
            "endpoint law is degenerate: fewer than two node values carry mass".into(),
        ));
    }
    Ok(vals)
}

/// Exact feasibility of `(m1, m2)` over distributions on the given sorted
/// value set: the mean must lie strictly inside the value range, and the
/// second moment inside the moment polytope — below the chord through the
/// extreme values and above the chord through the two values adjacent to
/// the mean (the lower boundary is attainable, so it is allowed; it simply
/// forces a near-degenerate solution).
fn check_moments(support: &[f64], m1: f64, m2: Option<f64>, which: &str) -> Result<()> {
    let lo = support[0];
    let hi = support[support.len() - 1];
    if !(m1 > lo && m1 < hi) {
        return Err(Error::InfeasibleMoments(format!(
            "{which} mean {m1} is outside the open value range ({lo}, {hi}) \
             reachable under the prior"
        )));
    }
    if let Some(m2) = m2 {
        let upper = (lo + hi) * m1 - lo * hi;
        let k = support.partition_point(|&v| v <= m1) - 1;
        let (a, b) = (support[k], support[(k + 1).min(support.len() - 1)]);
        let lower = if (a - b).abs() < 1e-12 {
            a * a
        } else {
            (a + b) * m1 - a * b
        };
        if m2 < lower - 1e-9 || m2 > upper + 1e-9 {
            return Err(Error::InfeasibleMoments(format!(
                "{which} second moment {m2} is outside the feasible band \
                 [{lower:.12}, {upper:.12}] for mean {m1}"
            )));
        }
    }
    Ok(())
}

/// Solves the symmetric positive-semidefinite system `A d = b` by Gaussian
/// elimination with partial pivoting; `None` when `A` is numerically
/// singular (the tilted law has collapsed along some feature direction).
fn solve_linear(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let dim = b.len();
    let mut aug: Vec<Vec<f64>> = (0..dim)
        .map(|r| {
            let mut row = a[r].clone();
            row.push(b[r]);
            row
        })
        .collect();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |acc, &x| acc.max(x.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..dim {
        let pivot_row = (col..dim)
            .max_by(|&r1, &r2| aug[r1][col].abs().partial_cmp(&aug[r2][col].abs()).unwrap())?;
        if aug[pivot_row][col].abs() < 1e-13 * scale {
            return None;
        }
        aug.swap(col, pivot_row);
        for r in (col + 1)..dim {
            let factor = aug[r][col] / aug[col][col];
            for c in col..=dim {
                aug[r][c] -= factor * aug[col][c];
            }
        }
    }
    let mut d = vec![0.0; dim];
    for r in (0..dim).rev() {
        let mut acc = aug[r][dim];
        for c in (r + 1)..dim {
            acc -= aug[r][c] * d[c];
        }
        d[r] = acc / aug[r][r];
    }
    d.iter().all(|x| x.is_finite()).then_some(d)
}

/// Maximizes the concave dual: Newton steps (the Hessian is the negated
/// feature covariance) accepted whenever they shrink the gradient, with
/// backtracking gradient ascent as the globalizing fallback. Returns the
/// final multipliers with diagnostics; `Err` when neither convergence nor a
/// certified degenerate limit is reached.
fn ascend(prep: &Prepared, tol: f64, max_iter: usize) -> Result<(Vec<f64>, f64, f64, usize, bool)> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::InvalidSpec(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let dim = prep.features.len();
    let mut m = vec![0.0; dim];
    let mut step = 1.0;
    let mut iterations = 0;
    let mut stalled = false;
    let (mut value, mut grad) = prep.value_and_gradient(&m);
    let mut grad_norm = norm(&grad);
    while iterations < max_iter {
        if grad_norm < tol {
            break;
        }
        iterations += 1;
        // Newton attempt first: quadratic convergence near the optimum and
        // immune to the value-noise floor that stops line searches on the
        // objective around gradient norms of 1e-9.
        let mut accepted = false;
        if let Some(d) = solve_linear(&prep.covariance(&m), &grad) {
            let cand: Vec<f64> = m
                .iter()
                .zip(&d)
                .map(|(x, dx)| (x + dx).clamp(-MULTIPLIER_CAP, MULTIPLIER_CAP))
                .collect();
            let (cand_value, cand_grad) = prep.value_and_gradient(&cand);
            let cand_norm = norm(&cand_grad);
            if cand_norm < grad_norm {
                m = cand;
                value = cand_value;
                grad = cand_grad;
                grad_norm = cand_norm;
                accepted = true;
            }
        }
        if !accepted {
            // Armijo backtracking along the gradient.
            let mut s = step;
            while s > 1e-18 {
                let cand: Vec<f64> = m
                    .iter()
                    .zip(&grad)
                    .map(|(x, g)| (x + s * g).clamp(-MULTIPLIER_CAP, MULTIPLIER_CAP))
                    .collect();
                let ascent: f64 = cand
                    .iter()
                    .zip(&m)
                    .zip(&grad)
                    .map(|((c, x), g)| (c - x) * g)
                    .sum();
                if ascent <= 0.0 {
                    // Every active direction is clamped: the optimum sits
                    // at the cap (degenerate target).
                    break;
                }
                let (cand_value, cand_grad) = prep.value_and_gradient(&cand);
                if cand_value >= value + 1e-4 * ascent {
                    m = cand;
                    value = cand_value;
                    grad = cand_grad;
                    grad_norm = norm(&grad);
                    step = (s * 2.0).min(1e6);
                    accepted = true;
                    break;
                }
                s *= 0.5;
            }
        }
        if !accepted {
            stalled = true;
            break;
        }
    }
    let capped = m.iter().any(|x| x.abs() >= MULTIPLIER_CAP - 1e-9);
    let near_degenerate = m.iter().any(|x| x.abs() >= NEAR_DEGENERATE_MULTIPLIER);
    if grad_norm >= tol {
        if capped {
            // A capped solve is acceptable only if the targets are still
            // essentially met (boundary-of-feasible-set limits); otherwise
            // the joint constraints cannot be satisfied.
            let max_resid = grad.iter().fold(0.0f64, |a, &g| a.max(g.abs()));
            if max_resid > 1e-6 {
                return Err(Error::InfeasibleMoments(format!(
                    "moment residual {max_resid:.3e} with multipliers at the \
                     clamp; the joint targets are not reachable"
                )));
            }
        } else if stalled {
            return Err(Error::Stalled {
                iterations,
                gap: grad_norm,
            });
        } else {
            return Err(Error::NonConvergence {
                method: "moment dual ascent",
                iterations,
                gap: grad_norm,
            });
        }
    }
    Ok((m, value, grad_norm, iterations, near_degenerate))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn multipliers_from_dual(dual: &DualState, prep: &Prepared) -> Vec<f64> {
    prep.features
        .iter()
        .map(|f| match (f.side, f.power) {
            (Side::Initial, 1) => dual.lambda,
            (Side::Final, 1) => dual.mu,
            (Side::Initial, 2) => dual.alpha,
            (Side::Final, 2) => dual.beta,
            _ => 0.0,
        })
        .collect()
}

fn dual_from_multipliers(
    prep: &Prepared,
    m: &[f64],
    log_z: f64,
    objective: f64,
    grad_norm: f64,
    iterations: usize,
    near_degenerate: bool,
) -> DualState {
    let mut dual = DualState {
        theta: log_z - 1.0,
        lambda: 0.0,
        mu: 0.0,
        alpha: 0.0,
        beta: 0.0,
        objective,
        grad_norm,
        iterations,
        near_degenerate,
    };
    for (f, feat) in prep.features.iter().enumerate() {
        match (feat.side, feat.power) {
            (Side::Initial, 1) => dual.lambda = m[f],
            (Side::Final, 1) => dual.mu = m[f],
            (Side::Initial, 2) => dual.alpha = m[f],
            (Side::Final, 2) => dual.beta = m[f],
            _ => {}
        }
    }
    dual
}

/// Solves any moment-constrained bridge by dual ascent: the general engine
/// behind the public wrappers.
pub fn moment_bridge(
    prior: &MarkovPrior,
    spec: &MomentSpec,
    tol: f64,
    max_iter: usize,
) -> Result<(Array2<f64>, DualState)> {
    let prep = prepare(prior, spec)?;
    let (m, objective, grad_norm, iterations, near_degenerate) = ascend(&prep, tol, max_iter)?;
    let (q, log_z) = prep.primal(&m);
    let dual = dual_from_multipliers(
        &prep,
        &m,
        log_z,
        objective,
        grad_norm,
        iterations,
        near_degenerate,
    );
    Ok((q, dual))
}

/// Bridge with both endpoint means prescribed, solved by gradient ascent on
/// the two-variable dual.
pub fn mean_bridge_dual_ascent(
    prior: &MarkovPrior,
    m0: f64,
    mn: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(Array2<f64>, DualState)> {
    moment_bridge(prior, &MomentSpec::mean_both(m0, mn), tol, max_iter)
}

/// Bridge with means and second moments prescribed on the constrained
/// sides (order-2 spec required).
pub fn mean_variance_bridge(
    prior: &MarkovPrior,
    spec: &MomentSpec,
    tol: f64,
    max_iter: usize,
) -> Result<(Array2<f64>, DualState)> {
    if spec.order() != 2 {
        return Err(Error::InvalidSpec(
            "mean_variance_bridge needs an order-2 moment spec".into(),
        ));
    }
    moment_bridge(prior, spec, tol, max_iter)
}

/// Half-bridge: moment constraints on a single endpoint; the other side's
/// multipliers stay at zero, so the unconstrained marginal is the prior's
/// own, reweighted only through the constrained coordinate.
pub fn half_bridge_moments(
    prior: &MarkovPrior,
    side: Side,
    spec: &MomentSpec,
) -> Result<(Array2<f64>, DualState)> {
    let constrained = match side {
        Side::Initial => spec.constrains_initial() && !spec.constrains_final(),
        Side::Final => spec.constrains_final() && !spec.constrains_initial(),
    };
    if !constrained {
        return Err(Error::InvalidSpec(
            "half_bridge_moments needs exactly the named side constrained".into(),
        ));
    }
    moment_bridge(prior, spec, 1e-10, 100_000)
}

/// Dual value and gradient at the multipliers stored in `dual`, for the
/// constraint pattern in `spec`. The gradient is ordered
/// (initial mean, final mean, initial second moment, final second moment),
/// restricted to the active features; each component is the constraint
/// residual (achieved − target). Non-finite multipliers propagate to a
/// non-finite value rather than an error.
pub fn dual_objective_and_gradient(
    prior: &MarkovPrior,
    dual: &DualState,
    spec: &MomentSpec,
) -> Result<(f64, Vec<f64>)> {
    let prep = prepare(prior, spec)?;
    let m = multipliers_from_dual(dual, &prep);
    Ok(prep.value_and_gradient(&m))
}

/// The unique positive real root of a polynomial given by descending-degree
/// coefficients, e.g. `[1.0, 0.0, -4.0]` for `r² − 4`.
///
/// Requires exactly one sign change in the coefficient sequence (zeros
/// skipped), which guarantees exactly one positive root; bracketed
/// bisection then locates it to a relative width of `1e-14`.
pub fn positive_root(coeffs: &[f64]) -> Result<f64> {
    let trimmed: Vec<f64> = {
        let first = coeffs.iter().position(|&c| c != 0.0);
        match first {
            Some(k) => coeffs[k..].to_vec(),
            None => Vec::new(),
        }
    };
    if trimmed.len() < 2 {
        return Err(Error::DescartesPrecondition { sign_changes: 0 });
    }
    if trimmed.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidSpec(
            "polynomial coefficients must be finite".into(),
        ));
    }
    let scale = trimmed.iter().fold(0.0f64, |a, &c| a.max(c.abs()));
    let poly: Vec<f64> = trimmed.iter().map(|&c| c / scale).collect();
    let signs: Vec<f64> = poly.iter().cloned().filter(|&c| c != 0.0).collect();
    let sign_changes = signs
        .windows(2)
        .filter(|w| (w[0] > 0.0) != (w[1] > 0.0))
        .count();
    if sign_changes != 1 {
        return Err(Error::DescartesPrecondition { sign_changes });
    }
    let eval = |x: f64| -> f64 { poly.iter().fold(0.0, |acc, &c| acc * x + c) };
    // Sign at 0⁺ is the lowest-order nonzero coefficient's; sign at +∞ is
    // the leading coefficient's. One sign change makes them differ.
    let sign_at_zero = *signs.last().expect("nonempty") > 0.0;
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut guard = 0;
    while (eval(hi) > 0.0) == sign_at_zero {
        lo = hi;
        hi *= 2.0;
        guard += 1;
        if guard > 1100 {
            return Err(Error::NonConvergence {
                method: "positive-root bracketing",
                iterations: guard,
                gap: hi,
            });
        }
    }
    for _ in 0..2000 {
        if hi - lo <= 1e-14 * hi.max(1e-300) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if (eval(mid) > 0.0) == sign_at_zero {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Mean-only bridge by the alternating root iteration: with one side's
/// multiplier frozen, the other side's optimality condition is a polynomial
/// in `r = e^multiplier` with exactly one positive root, so each half-step
/// is an exact coordinate maximization of the concave dual. Requires the
/// default consecutive-integer node values (the polynomial powers are
/// `n − x`).
pub fn mean_bridge_root_iteration(
    prior: &MarkovPrior,
    m0: f64,
    mn: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(Array2<f64>, DualState)> {
    let spec = MomentSpec::mean_both(m0, mn);
    let prep = prepare(prior, &spec)?;
    let n = prep.values.len();
    for (x, &v) in prep.values.iter().enumerate() {
        if (v - (x + 1) as f64).abs() > 1e-12 {
            return Err(Error::InvalidSpec(
                "the root iteration assumes consecutive integer node values 1..=n".into(),
            ));
        }
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::InvalidSpec(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    // Coefficients of the one-sided optimality polynomial: with the other
    // side folded into h, the condition E[x] = target becomes
    // Σ_x h(x) (x − target) r^(n−x) = 0 with r the exponentiated
    // multiplier. h is computed in the log domain and rescaled (a common
    // positive factor does not move the roots).
    let side_poly = |frozen: f64, own: Side, target: f64| -> Vec<f64> {
        let mut lh = vec![f64::NEG_INFINITY; n];
        let mut terms = Vec::with_capacity(n);
        for x in 0..n {
            terms.clear();
            for other in 0..n {
                let lp = match own {
                    Side::Initial => prep.lp[[x, other]],
                    Side::Final => prep.lp[[other, x]],
                };
                if lp.is_finite() {
                    terms.push(lp - frozen * (other + 1) as f64);
                }
            }
            lh[x] = logsumexp(&terms);
        }
        let shift = lh.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (0..n)
            .map(|x| {
                if lh[x].is_finite() {
                    (lh[x] - shift).exp() * ((x + 1) as f64 - target)
                } else {
                    0.0
                }
            })
            .collect()
    };
    let mut lambda = 0.0;
    let mut mu = 0.0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let lambda_new = positive_root(&side_poly(mu, Side::Initial, m0))?.ln();
        let mu_new = positive_root(&side_poly(lambda_new, Side::Final, mn))?.ln();
        let delta = (lambda_new - lambda).abs() + (mu_new - mu).abs();
        lambda = lambda_new;
        mu = mu_new;
        if delta < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            method: "alternating root iteration",
            iterations,
            gap: f64::NAN,
        });
    }
    let m = vec![lambda, mu];
    let (value, grad) = prep.value_and_gradient(&m);
    let (q, log_z) = prep.primal(&m);
    let dual = dual_from_multipliers(&prep, &m, log_z, value, norm(&grad), iterations, false);
    Ok((q, dual))
}

/// Repackages a moment solve as a [`BridgeSolution`]: the exponential tilt
/// factors over the endpoints, so the potentials are read off directly
/// (`phihat0 = p0 ∘ exp(−1 − θ − λv − αv²)`, `phi_n = exp(−µv − βv²)`),
/// which makes the time-resolved flow recovery available.
pub fn to_bridge_solution(
    prior: &MarkovPrior,
    dual: &DualState,
    spec: &MomentSpec,
) -> Result<BridgeSolution> {
    let prep = prepare(prior, spec)?;
    let n = prior.n();
    let mut phihat0 = Array1::zeros(n);
    let mut phi_n = Array1::zeros(n);
    for x in 0..n {
        let v = prep.values[x];
        phihat0[x] = prior.p0()[x]
            * (-1.0 - dual.theta - dual.lambda * v - dual.alpha * v * v).exp();
        phi_n[x] = (-dual.mu * v - dual.beta * v * v).exp();
    }
    let k = prior.n_step_kernel(0, prior.horizon())?;
    let mut q0n = k.clone();
    for ((i, j), v) in q0n.indexed_iter_mut() {
        *v *= phihat0[i] * phi_n[j];
    }
    let total = q0n.sum();
    if !((total - 1.0).abs() < 1e-8) {
        return Err(Error::InvalidSpec(format!(
            "dual state is inconsistent with the prior: tilted mass {total}"
        )));
    }
    q0n.mapv_inplace(|v| v / total);
    phihat0.mapv_inplace(|v| v / total);
    let phi0 = k.dot(&phi_n);
    let phihat_n = k.t().dot(&phihat0);
    let q0_star = q0n.rows().into_iter().map(|r| r.sum()).collect();
    let qn_star = q0n.columns().into_iter().map(|c| c.sum()).collect();
    let kl_value = crate::bridge::kl_divergence(&q0n, &prior.endpoint_joint()?)?;
    Ok(BridgeSolution {
        phi0,
        phi_n,
        phihat0,
        phihat_n,
        q0n,
        q0_star,
        qn_star,
        iterations: dual.iterations,
        final_gap: dual.grad_norm,
        gap_history: Vec::new(),
        kl_value,
    })
}
