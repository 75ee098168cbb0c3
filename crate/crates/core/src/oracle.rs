//! Brute-force reference solvers for tiny instances. Everything here is
//! deliberately independent of the production solvers: the bridge oracle
//! minimizes relative entropy under explicit linear equality constraints by
//! an augmented-Lagrangian outer loop with entropic mirror-descent inner
//! steps, and the path oracle enumerates the path space outright. Their only
//! job is to certify the fast solvers on small problems, so clarity beats
//! speed throughout.

use ndarray::Array2;

use crate::bridge::PartialMarginal;
use crate::prior::MarkovPrior;
use crate::{Error, Result};

/// Largest joint-law size (`n * n`) the bridge oracle accepts.
pub const MAX_ORACLE_CELLS: usize = 400;

/// Largest path-space size (`n^(N+1)`) the path oracle accepts.
pub const MAX_ORACLE_PATHS: f64 = 1e6;

/// Constraint residuals above this floor after the full solve are reported
/// as infeasibility rather than silently returned.
pub const RESIDUAL_FLOOR: f64 = 1e-7;

/// A linear equality constraint `Σ_ij coeffs[i][j] · q[i][j] = target` on a
/// joint endpoint law.
#[derive(Debug, Clone)]
pub struct LinearConstraint {
    pub coeffs: Array2<f64>,
    pub target: f64,
}

impl LinearConstraint {
    pub fn new(coeffs: Array2<f64>, target: f64) -> Self {
        LinearConstraint { coeffs, target }
    }

    /// Pins the sum of row `row` (0-based) to `target`.
    pub fn row_sum(n: usize, row: usize, target: f64) -> Self {
        let mut coeffs = Array2::zeros((n, n));
        coeffs.row_mut(row).fill(1.0);
        LinearConstraint { coeffs, target }
    }

    /// Pins the sum of column `col` (0-based) to `target`.
    pub fn col_sum(n: usize, col: usize, target: f64) -> Self {
        let mut coeffs = Array2::zeros((n, n));
        coeffs.column_mut(col).fill(1.0);
        LinearConstraint { coeffs, target }
    }

    /// Pins `Σ_ij value(i)^power · q[i][j]` (initial-coordinate moment).
    pub fn initial_moment(values: &[f64], power: u32, target: f64) -> Self {
        let n = values.len();
        let mut coeffs = Array2::zeros((n, n));
        for i in 0..n {
            coeffs.row_mut(i).fill(values[i].powi(power as i32));
        }
        LinearConstraint { coeffs, target }
    }

    /// Pins `Σ_ij value(j)^power · q[i][j]` (final-coordinate moment).
    pub fn final_moment(values: &[f64], power: u32, target: f64) -> Self {
        let n = values.len();
        let mut coeffs = Array2::zeros((n, n));
        for j in 0..n {
            coeffs.column_mut(j).fill(values[j].powi(power as i32));
        }
        LinearConstraint { coeffs, target }
    }

    /// `⟨coeffs, q⟩ − target`.
    pub fn residual(&self, q: &Array2<f64>) -> f64 {
        self.coeffs
            .iter()
            .zip(q.iter())
            .map(|(a, b)| a * b)
            .sum::<f64>()
            - self.target
    }
}

/// Expands endpoint marginal constraints into per-node [`LinearConstraint`]s
/// (one row-sum pin per constrained initial node, one column-sum pin per
/// constrained final node). The unit-total-mass constraint is implicit: the
/// oracle works on the simplex.
pub fn bridge_constraints(
    rho0: Option<&PartialMarginal>,
    rho_n: Option<&PartialMarginal>,
    n: usize,
) -> Vec<LinearConstraint> {
    let mut out = Vec::new();
    if let Some(r) = rho0 {
        for x in r.indices() {
            out.push(LinearConstraint::row_sum(n, x, r.dense()[x]));
        }
    }
    if let Some(r) = rho_n {
        for x in r.indices() {
            out.push(LinearConstraint::col_sum(n, x, r.dense()[x]));
        }
    }
    out
}

/// Minimizes `Σ q log(q/p0n)` over the simplex subject to the given linear
/// equalities. Deterministic: always initialized at `p0n`, no randomness.
///
/// The outer loop is a standard augmented Lagrangian (fixed penalty,
/// first-order multiplier updates); the inner minimization is entropic
/// mirror descent with a doubling/halving step search, which keeps iterates
/// strictly positive on the support of `p0n` — exactly the set where the
/// minimizer can live.
pub fn brute_force_bridge(
    p0n: &Array2<f64>,
    constraints: &[LinearConstraint],
) -> Result<Array2<f64>> {
    let (rows, cols) = p0n.dim();
    if rows * cols > MAX_ORACLE_CELLS {
        return Err(Error::InstanceTooLarge(format!(
            "oracle accepts at most {MAX_ORACLE_CELLS} cells, got {}",
            rows * cols
        )));
    }
    if p0n.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidDistribution(
            "reference law has a negative or non-finite entry".into(),
        ));
    }
    let total = p0n.sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidDistribution(format!(
            "reference law has total mass {total}, expected 1"
        )));
    }
    for c in constraints {
        if c.coeffs.dim() != (rows, cols) {
            return Err(Error::InvalidSpec(format!(
                "constraint shape {:?} does not match the law shape {:?}",
                c.coeffs.dim(),
                (rows, cols)
            )));
        }
    }
    // A constraint `Σ c·q = 0` whose coefficients all share one sign forces
    // `q = 0` wherever the coefficient is nonzero. Apply those exactly up
    // front: the multiplicative iteration keeps positive cells positive, so
    // it can approach that boundary but never reach it.
    let mut p = p0n.mapv(|v| v / total);
    let mut active: Vec<LinearConstraint> = Vec::new();
    for c in constraints {
        let one_signed =
            c.coeffs.iter().all(|&v| v >= 0.0) || c.coeffs.iter().all(|&v| v <= 0.0);
        if c.target == 0.0 && one_signed {
            for (cell, &coeff) in p.iter_mut().zip(c.coeffs.iter()) {
                if coeff != 0.0 {
                    *cell = 0.0;
                }
            }
        } else {
            active.push(c.clone());
        }
    }
    let restricted = p.sum();
    if restricted <= 0.0 {
        return Err(Error::Infeasible(
            "zero-target constraints leave no reference mass".into(),
        ));
    }
    p.mapv_inplace(|v| v / restricted);
    let constraints = active;
    let support: Vec<(usize, usize)> = p
        .indexed_iter()
        .filter_map(|(idx, &v)| (v > 0.0).then_some(idx))
        .collect();
    if support.is_empty() {
        return Err(Error::InvalidDistribution("reference law is empty".into()));
    }
    let m = constraints.len();
    let mut q = p.clone();
    let mut y = vec![0.0; m];
    let penalty = 10.0;

    let residuals = |q: &Array2<f64>| -> Vec<f64> {
        constraints.iter().map(|c| c.residual(q)).collect()
    };
    let augmented = |q: &Array2<f64>, y: &[f64]| -> f64 {
        let mut val = 0.0;
        for &(i, j) in &support {
            let qv = q[[i, j]];
            if qv > 0.0 {
                val += qv * (qv / p[[i, j]]).ln();
            }
        }
        for (c, &yc) in constraints.iter().zip(y) {
            let r = c.residual(q);
            val += yc * r + 0.5 * penalty * r * r;
        }
        val
    };
    // Mirror step q ∘ exp(−s·g), renormalized; exponents clamped so that
    // extreme multipliers cannot overflow.
    let mirror = |q: &Array2<f64>, g: &Array2<f64>, s: f64| -> Array2<f64> {
        let mut w = Array2::zeros(q.dim());
        for &(i, j) in &support {
            let e = (-s * g[[i, j]]).clamp(-700.0, 700.0);
            w[[i, j]] = q[[i, j]] * e.exp();
        }
        let z = w.sum();
        w.mapv(|v| v / z)
    };

    let mut gap = f64::INFINITY;
    let mut inner_budget = 200_000usize;
    for _outer in 0..200 {
        let mut step = 1.0;
        while inner_budget > 0 {
            inner_budget -= 1;
            let r = residuals(&q);
            let mut g = Array2::zeros((rows, cols));
            for &(i, j) in &support {
                let mut v = (q[[i, j]] / p[[i, j]]).ln() + 1.0;
                for (c, (&yc, &rc)) in constraints.iter().zip(y.iter().zip(&r)) {
                    v += (yc + penalty * rc) * c.coeffs[[i, j]];
                }
                g[[i, j]] = v;
            }
            // Fixed-point residual of the unit mirror step: the inner
            // problem is solved when the step no longer moves the iterate.
            let probe = mirror(&q, &g, 1.0);
            gap = probe
                .iter()
                .zip(q.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if gap < 1e-13 {
                break;
            }
            let current = augmented(&q, &y);
            let mut accepted = false;
            while step > 1e-18 {
                let cand = mirror(&q, &g, step);
                if augmented(&cand, &y) < current {
                    q = cand;
                    step = (step * 2.0).min(4.0);
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        let r = residuals(&q);
        let max_r = r.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        if max_r < 1e-11 && gap < 1e-10 {
            break;
        }
        for (yc, &rc) in y.iter_mut().zip(&r) {
            *yc += penalty * rc;
        }
    }
    let max_r = residuals(&q).iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if max_r > RESIDUAL_FLOOR {
        return Err(Error::Infeasible(format!(
            "constraint residual {max_r:.3e} after the augmented-Lagrangian \
             solve; the constraints appear infeasible on the reference support"
        )));
    }
    Ok(q)
}

/// Exhaustive path table: every positive-probability path of the prior as
/// `(labels, probability)`, in lexicographic label order. With
/// `conditioning = Some((a, b))` only paths with `X_0 = a, X_N = b` are
/// kept and their probabilities renormalized. Zero-probability paths are
/// omitted; the returned probabilities always sum to one.
pub fn brute_force_paths(
    prior: &MarkovPrior,
    conditioning: Option<(usize, usize)>,
) -> Result<Vec<(Vec<usize>, f64)>> {
    let n = prior.n();
    let horizon = prior.horizon();
    let space = (n as f64).powi(horizon as i32 + 1);
    if space > MAX_ORACLE_PATHS {
        return Err(Error::InstanceTooLarge(format!(
            "path space of size {space:.3e} exceeds the oracle cap {MAX_ORACLE_PATHS:.0e}"
        )));
    }
    if let Some((a, b)) = conditioning {
        for label in [a, b] {
            if label < 1 || label > n {
                return Err(Error::InvalidSpec(format!(
                    "conditioning label {label} outside 1..={n}"
                )));
            }
        }
    }
    let mut out = Vec::new();
    let mut path = vec![1usize; horizon + 1];
    loop {
        let keep = match conditioning {
            Some((a, b)) => path[0] == a && path[horizon] == b,
            None => true,
        };
        if keep {
            let prob = prior.path_probability(&path)?;
            if prob > 0.0 {
                out.push((path.clone(), prob));
            }
        }
        // Lexicographic increment over {1..n}^(N+1).
        let mut pos = horizon + 1;
        while pos > 0 {
            pos -= 1;
            if path[pos] < n {
                path[pos] += 1;
                for p in path.iter_mut().skip(pos + 1) {
                    *p = 1;
                }
                break;
            }
            if pos == 0 {
                let total: f64 = out.iter().map(|(_, p)| p).sum();
                if conditioning.is_some() {
                    if total <= 0.0 {
                        return Err(Error::Infeasible(
                            "conditioning event has zero probability under the prior".into(),
                        ));
                    }
                    for entry in &mut out {
                        entry.1 /= total;
                    }
                }
                return Ok(out);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::kl_divergence;
    use ndarray::{array, Array1};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn no_constraints_returns_the_reference_law() {
        let p = array![[0.3, 0.2], [0.1, 0.4]];
        let q = brute_force_bridge(&p, &[]).unwrap();
        for (a, b) in q.iter().zip(p.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_two_by_two_scaling_fixed_point() {
        // Full marginals on a 2×2 law: the minimizer is the diagonal
        // rescale D_r · p · D_c. An independent alternating-scaling loop
        // (six lines, nothing shared with the oracle) pins the target.
        let p = array![[0.3, 0.2], [0.1, 0.4]];
        let rows = [0.6, 0.4];
        let cols = [0.25, 0.75];
        let mut scaled = p.clone();
        for _ in 0..2000 {
            for i in 0..2 {
                let s: f64 = scaled.row(i).sum();
                scaled.row_mut(i).mapv_inplace(|v| v * rows[i] / s);
            }
            for j in 0..2 {
                let s: f64 = scaled.column(j).sum();
                scaled.column_mut(j).mapv_inplace(|v| v * cols[j] / s);
            }
        }
        let constraints = vec![
            LinearConstraint::row_sum(2, 0, rows[0]),
            LinearConstraint::row_sum(2, 1, rows[1]),
            LinearConstraint::col_sum(2, 0, cols[0]),
            LinearConstraint::col_sum(2, 1, cols[1]),
        ];
        let q = brute_force_bridge(&p, &constraints).unwrap();
        for (a, b) in q.iter().zip(scaled.iter()) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_marginal_pins_are_applied_exactly() {
        // Pinning whole rows/columns to zero must come out exact, not as a
        // mirror-descent limit. The remaining support here is the single
        // cell (1, 2), so the minimizer is a point mass.
        let p = array![
            [0.20, 0.05, 0.05],
            [0.10, 0.30, 0.10],
            [0.05, 0.05, 0.10]
        ];
        let constraints = vec![
            LinearConstraint::row_sum(3, 0, 0.0),
            LinearConstraint::row_sum(3, 2, 0.0),
            LinearConstraint::col_sum(3, 0, 0.0),
            LinearConstraint::col_sum(3, 1, 0.0),
        ];
        let q = brute_force_bridge(&p, &constraints).unwrap();
        for ((i, j), &v) in q.indexed_iter() {
            let want = if (i, j) == (1, 2) { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-12, "q[{i}][{j}] = {v}");
        }
    }

    #[test]
    fn zero_pins_that_empty_the_support_are_infeasible() {
        let p = array![[0.5, 0.0], [0.0, 0.5]];
        let constraints = vec![
            LinearConstraint::row_sum(2, 0, 0.0),
            LinearConstraint::col_sum(2, 1, 0.0),
        ];
        assert!(matches!(
            brute_force_bridge(&p, &constraints),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn beats_random_feasible_points_on_three_by_three() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut p = Array2::zeros((3, 3));
        p.mapv_inplace(|_: f64| rng.gen_range(0.05..1.0));
        let total = p.sum();
        p.mapv_inplace(|v| v / total);
        let constraints = vec![
            LinearConstraint::row_sum(3, 0, 0.3),
            LinearConstraint::col_sum(3, 1, 0.35),
        ];
        let q = brute_force_bridge(&p, &constraints).unwrap();
        let kl_opt = kl_divergence(&q, &p).unwrap();
        let mut tested = 0;
        for _ in 0..10_000 {
            // Random positive start, pushed onto the constraint set by
            // alternating rescales; samples that fail to land are skipped.
            let mut cand = Array2::zeros((3, 3));
            cand.mapv_inplace(|_: f64| rng.gen_range(0.01..1.0));
            let mut feasible = false;
            for _ in 0..300 {
                let s: f64 = cand.row(0).sum();
                cand.row_mut(0).mapv_inplace(|v| v * 0.3 / s);
                let s: f64 = cand.column(1).sum();
                cand.column_mut(1).mapv_inplace(|v| v * 0.35 / s);
                let rest: f64 = cand
                    .indexed_iter()
                    .filter(|((i, j), _)| *i != 0 && *j != 1)
                    .map(|(_, &v)| v)
                    .sum();
                let want = 1.0 - cand.row(0).sum() - cand.column(1).sum() + cand[[0, 1]];
                if rest > 0.0 && want > 0.0 {
                    for ((i, j), v) in cand.indexed_iter_mut() {
                        if i != 0 && j != 1 {
                            *v *= want / rest;
                        }
                    }
                }
                feasible = (cand.row(0).sum() - 0.3).abs() < 1e-10
                    && (cand.column(1).sum() - 0.35).abs() < 1e-10
                    && (cand.sum() - 1.0).abs() < 1e-10;
                if feasible {
                    break;
                }
            }
            if feasible {
                tested += 1;
                let kl = kl_divergence(&cand, &p).unwrap();
                assert!(kl_opt <= kl + 1e-7, "sampled point beat the oracle");
            }
        }
        assert!(tested > 1000, "only {tested} feasible samples produced");
    }

    #[test]
    fn reports_contradictory_constraints_as_infeasible() {
        let p = array![[0.3, 0.2], [0.1, 0.4]];
        let constraints = vec![
            LinearConstraint::row_sum(2, 0, 0.5),
            LinearConstraint::row_sum(2, 0, 0.2),
        ];
        assert!(matches!(
            brute_force_bridge(&p, &constraints),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn rejects_oversized_instances() {
        let p = Array2::from_elem((25, 25), 1.0 / 625.0);
        assert!(matches!(
            brute_force_bridge(&p, &[]),
            Err(Error::InstanceTooLarge(_))
        ));
    }

    #[test]
    fn path_table_reshapes_to_the_joint_law_for_one_step() {
        let p0 = array![0.6, 0.4];
        let step = array![[0.7, 0.3], [0.4, 0.6]];
        let prior = MarkovPrior::custom(p0, vec![step]).unwrap();
        let table = brute_force_paths(&prior, None).unwrap();
        let joint = prior.endpoint_joint().unwrap();
        assert_eq!(table.len(), 4);
        for (path, prob) in table {
            assert!((prob - joint[[path[0] - 1, path[1] - 1]]).abs() < 1e-15);
        }
    }

    #[test]
    fn path_table_conditioning_renormalizes() {
        let p0 = array![0.5, 0.5];
        let step = array![[0.5, 0.5], [0.5, 0.5]];
        let prior = MarkovPrior::custom(p0, vec![step.clone(), step]).unwrap();
        let table = brute_force_paths(&prior, Some((1, 2))).unwrap();
        assert_eq!(table.len(), 2); // 1→1→2 and 1→2→2
        let total: f64 = table.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
        for (path, prob) in &table {
            assert_eq!(path[0], 1);
            assert_eq!(path[2], 2);
            assert!((prob - 0.5).abs() < 1e-12);
        }
        // Marginal cross-check: unconditioned table sums against marginal(t).
        let full = brute_force_paths(&prior, None).unwrap();
        for t in 0..=2 {
            let marg = prior.marginal(t).unwrap();
            for state in 1..=2 {
                let mass: f64 = full
                    .iter()
                    .filter(|(path, _)| path[t] == state)
                    .map(|(_, p)| p)
                    .sum();
                assert!((mass - marg[state - 1]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn path_table_rejects_oversized_spaces() {
        let p0 = Array1::from_elem(10, 0.1);
        let step = Array2::from_elem((10, 10), 0.1);
        let prior = MarkovPrior::custom(p0, vec![step; 6]).unwrap();
        assert!(matches!(
            brute_force_paths(&prior, None),
            Err(Error::InstanceTooLarge(_))
        ));
    }

    #[test]
    fn path_table_flags_impossible_conditioning() {
        let p0 = array![1.0, 0.0];
        let step = array![[1.0, 0.0], [0.0, 1.0]];
        let prior = MarkovPrior::custom(p0, vec![step]).unwrap();
        assert!(matches!(
            brute_force_paths(&prior, Some((2, 1))),
            Err(Error::Infeasible(_))
        ));
    }
}
