//! Operator-splitting QP solver with warm starts and an active-set polish.
//!
//! Solves `min 1/2 x'Px + q'x  s.t.  l <= Ax <= u` with diagonal PSD `P`.
//! The splitting iteration follows the standard scaled form: an equality-
//! coupled x-update through a cached Cholesky factor of `P + sigma I +
//! rho A'A`, a clamped auxiliary update, and a dual ascent, with the step
//! `rho` adapted to balance the residuals. A terminal polish solves the KKT
//! system on the detected active set, which is what pushes residuals from
//! solver tolerance to near machine precision.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::ControlError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Solved,
    /// Iteration cap hit; best iterate returned.
    MaxIterations,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Dual variables of the box rows.
    pub y: DVector<f64>,
    pub status: QpStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub polished: bool,
    /// Largest constraint violation, populated for infeasible problems.
    pub max_violation: f64,
}

/// A box-constrained QP with diagonal Hessian.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub p_diag: DVector<f64>,
    pub q: DVector<f64>,
    pub a: DMatrix<f64>,
    pub l: DVector<f64>,
    pub u: DVector<f64>,
    /// Warm-start primal/dual pair from a previous solve.
    pub warm: Option<(DVector<f64>, DVector<f64>)>,
}

#[derive(Debug, Clone)]
pub struct QpSettings {
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iter: usize,
    pub sigma: f64,
    pub alpha: f64,
    pub polish: bool,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            eps_abs: 1e-7,
            eps_rel: 1e-7,
            max_iter: 20_000,
            sigma: 1e-6,
            alpha: 1.6,
            polish: true,
        }
    }
}

impl QpProblem {
    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn n_rows(&self) -> usize {
        self.a.nrows()
    }

    fn validate(&self) -> Result<(), ControlError> {
        let n = self.n();
        if self.p_diag.len() != n || self.a.ncols() != n {
            return Err(ControlError::Setup("QP dimension mismatch".into()));
        }
        if self.a.nrows() != self.l.len() || self.l.len() != self.u.len() {
            return Err(ControlError::Setup("QP bound rows mismatch".into()));
        }
        if self.p_diag.iter().any(|&p| p < 0.0) {
            return Err(ControlError::Setup("Hessian must be PSD".into()));
        }
        if self.l.iter().zip(self.u.iter()).any(|(&l, &u)| l > u) {
            return Err(ControlError::Setup("row with l > u".into()));
        }
        Ok(())
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.component_mul(&self.p_diag).dot(x) + self.q.dot(x)
    }
}

struct Factor {
    chol: Cholesky<f64, nalgebra::Dyn>,
    rho: f64,
}

fn factorize(p: &QpProblem, sigma: f64, rho: f64) -> Result<Factor, ControlError> {
    let n = p.n();
    let mut k = p.a.transpose() * &p.a * rho;
    for i in 0..n {
        k[(i, i)] += p.p_diag[i] + sigma;
    }
    let chol = Cholesky::new(k).ok_or_else(|| {
        ControlError::Numerical("splitting matrix is not positive definite".into())
    })?;
    Ok(Factor { chol, rho })
}

/// Ruiz equilibration of the stacked `[P A'; A 0]` matrix plus cost
/// normalization. MPC problems mix row scales across four orders of
/// magnitude; the splitting iteration needs them flattened.
struct Scaling {
    d: DVector<f64>,
    e: DVector<f64>,
    cost: f64,
}

fn ruiz_equilibrate(problem: &QpProblem) -> (QpProblem, Scaling) {
    let n = problem.n();
    let m = problem.n_rows();
    let mut a = problem.a.clone();
    let mut p = problem.p_diag.clone();
    let mut q = problem.q.clone();
    let mut d = DVector::from_element(n, 1.0);
    let mut e = DVector::from_element(m, 1.0);
    let mut cost = 1.0;

    // Per-pass factors live in [1e-2, 1e2], cumulative ones in [1e-5, 1e5];
    // structurally empty rows/columns are left alone.
    let band = |s: f64, acc: f64| -> f64 {
        let s = s.clamp(1e-2, 1e2);
        s.clamp(1e-5 / acc, 1e5 / acc)
    };
    for _ in 0..5 {
        for j in 0..n {
            let mut norm: f64 = p[j].abs();
            for i in 0..m {
                norm = norm.max(a[(i, j)].abs());
            }
            if norm <= 1e-10 {
                continue;
            }
            let s = band(1.0 / norm.sqrt(), d[j]);
            d[j] *= s;
            p[j] *= s * s;
            q[j] *= s;
            for i in 0..m {
                a[(i, j)] *= s;
            }
        }
        for i in 0..m {
            let mut norm = 0.0f64;
            for j in 0..n {
                norm = norm.max(a[(i, j)].abs());
            }
            if norm <= 1e-10 {
                continue;
            }
            let s = band(1.0 / norm.sqrt(), e[i]);
            e[i] *= s;
            for j in 0..n {
                a[(i, j)] *= s;
            }
        }
    }
    // One terminal cost normalization toward a unit gradient scale.
    let q_norm = q.amax().max(p.amax());
    if q_norm > 1e-12 {
        let gamma = (1.0 / q_norm).clamp(1e-8, 1e8);
        cost *= gamma;
        q *= gamma;
        p *= gamma;
    }

    let l = DVector::from_fn(m, |i, _| {
        let v = problem.l[i];
        if v.is_finite() {
            v * e[i]
        } else {
            v
        }
    });
    let u = DVector::from_fn(m, |i, _| {
        let v = problem.u[i];
        if v.is_finite() {
            v * e[i]
        } else {
            v
        }
    });
    let warm = problem.warm.as_ref().map(|(x, y)| {
        (
            DVector::from_fn(n, |j, _| x[j] / d[j]),
            DVector::from_fn(m, |i, _| y[i] * cost / e[i]),
        )
    });
    (
        QpProblem {
            p_diag: p,
            q,
            a,
            l,
            u,
            warm,
        },
        Scaling { d, e, cost },
    )
}

/// Solve the QP. Deterministic given the same warm start.
///
/// The iteration runs on the equilibrated problem; convergence is declared
/// on the residuals of the original one, which is also what the returned
/// diagnostics report.
pub fn solve_qp(problem: &QpProblem, settings: &QpSettings) -> Result<QpSolution, ControlError> {
    problem.validate()?;
    let n = problem.n();
    let m = problem.n_rows();

    if m == 0 {
        // Unconstrained: P x = -q on the positive-diagonal part.
        let mut x = DVector::zeros(n);
        for i in 0..n {
            if problem.p_diag[i] > 0.0 {
                x[i] = -problem.q[i] / problem.p_diag[i];
            } else if problem.q[i] != 0.0 {
                return Err(ControlError::Numerical("unbounded QP".into()));
            }
        }
        return Ok(QpSolution {
            x,
            y: DVector::zeros(0),
            status: QpStatus::Solved,
            iterations: 0,
            primal_residual: 0.0,
            dual_residual: 0.0,
            polished: false,
            max_violation: 0.0,
        });
    }

    let (sp, scaling) = ruiz_equilibrate(problem);
    let unscale_x = |x: &DVector<f64>| x.component_mul(&scaling.d);
    let unscale_y = |y: &DVector<f64>| y.component_mul(&scaling.e) / scaling.cost;

    let (mut x, mut y) = match &sp.warm {
        Some((x0, y0)) if x0.len() == n && y0.len() == m => (x0.clone(), y0.clone()),
        _ => (DVector::zeros(n), DVector::zeros(m)),
    };
    let mut z = &sp.a * &x;
    for i in 0..m {
        z[i] = z[i].clamp(sp.l[i], sp.u[i]);
    }

    let mut rho: f64 = 1.0;
    let mut factor = factorize(&sp, settings.sigma, rho)?;
    let mut status = QpStatus::MaxIterations;
    let mut iterations = settings.max_iter;
    let (mut r_prim, mut r_dual) = (f64::INFINITY, f64::INFINITY);
    let mut y_prev_check = y.clone();

    for iter in 0..settings.max_iter {
        // x-update through the cached factorization.
        let rhs = &x * settings.sigma - &sp.q + sp.a.transpose() * (&z * rho - &y);
        let x_tilde = factor.chol.solve(&rhs);
        let z_tilde = &sp.a * &x_tilde;

        // Relaxed updates.
        let x_next = &x_tilde * settings.alpha + &x * (1.0 - settings.alpha);
        let mut z_next = DVector::zeros(m);
        let z_relaxed = &z_tilde * settings.alpha + &z * (1.0 - settings.alpha);
        for i in 0..m {
            z_next[i] = (z_relaxed[i] + y[i] / rho).clamp(sp.l[i], sp.u[i]);
        }
        let y_next = &y + (&z_relaxed - &z_next) * rho;

        x = x_next;
        z = z_next;
        y = y_next;

        if iter % 10 == 9 {
            // Residuals of the original problem.
            let x_o = unscale_x(&x);
            let y_o = unscale_y(&y);
            let ax = &problem.a * &x_o;
            let mut z_o = DVector::zeros(m);
            for i in 0..m {
                z_o[i] = z[i] / scaling.e[i];
            }
            r_prim = (&ax - &z_o).amax();
            let dual_vec =
                x_o.component_mul(&problem.p_diag) + &problem.q + problem.a.transpose() * &y_o;
            r_dual = dual_vec.amax();
            let eps_p = settings.eps_abs + settings.eps_rel * ax.amax().max(z_o.amax());
            let eps_d = settings.eps_abs
                + settings.eps_rel
                    * x_o
                        .component_mul(&problem.p_diag)
                        .amax()
                        .max(problem.q.amax());
            if r_prim < eps_p && r_dual < eps_d {
                status = QpStatus::Solved;
                iterations = iter + 1;
                break;
            }

            // The first-order tail can be slow on the near-linear-cost
            // problems MPC produces; once the iterate is primal-plausible,
            // try to finish with a verified active-set solve.
            if settings.polish
                && [500, 1000, 2000, 4000, 8000, 16000].contains(&(iter + 1))
                && r_prim < 1e-3 * (1.0 + z_o.amax())
            {
                let candidate = QpSolution {
                    x: x_o.clone(),
                    y: y_o.clone(),
                    status: QpStatus::Solved,
                    iterations: iter + 1,
                    primal_residual: r_prim,
                    dual_residual: r_dual,
                    polished: false,
                    max_violation: 0.0,
                };
                if let Some(p) = polish(problem, &candidate) {
                    return Ok(QpSolution {
                        iterations: iter + 1,
                        ..p
                    });
                }
            }

            // Primal infeasibility certificate on the original data.
            let dy = unscale_y(&y) - unscale_y(&y_prev_check);
            let dy_norm = dy.amax();
            if dy_norm > 1e-14 {
                let at_dy = problem.a.transpose() * &dy;
                let mut support = 0.0;
                for i in 0..m {
                    let term = if dy[i] > 0.0 {
                        if problem.u[i].is_finite() {
                            problem.u[i] * dy[i]
                        } else {
                            f64::INFINITY
                        }
                    } else if dy[i] < 0.0 {
                        if problem.l[i].is_finite() {
                            problem.l[i] * dy[i]
                        } else {
                            f64::INFINITY
                        }
                    } else {
                        0.0
                    };
                    support += term;
                }
                if at_dy.amax() <= 1e-8 * dy_norm && support < -1e-8 * dy_norm {
                    let x_o = unscale_x(&x);
                    let ax = &problem.a * &x_o;
                    let mut max_violation = 0.0f64;
                    for i in 0..m {
                        max_violation = max_violation
                            .max(problem.l[i] - ax[i])
                            .max(ax[i] - problem.u[i]);
                    }
                    return Ok(QpSolution {
                        x: x_o,
                        y: unscale_y(&y),
                        status: QpStatus::Infeasible,
                        iterations: iter + 1,
                        primal_residual: r_prim,
                        dual_residual: r_dual,
                        polished: false,
                        max_violation,
                    });
                }
            }
            y_prev_check = y.clone();

            // Rebalance the step when the scaled residuals drift apart,
            // each normalized by its own magnitude scale.
            if iter % 100 == 99 {
                let ax_s = &sp.a * &x;
                let rp_s = (&ax_s - &z).amax()
                    / ax_s.amax().max(z.amax()).max(1e-10);
                let dual_s =
                    x.component_mul(&sp.p_diag) + &sp.q + sp.a.transpose() * &y;
                let rd_s = dual_s.amax()
                    / x.component_mul(&sp.p_diag)
                        .amax()
                        .max(sp.q.amax())
                        .max((sp.a.transpose() * &y).amax())
                        .max(1e-10);
                let scale = (rp_s.max(1e-16) / rd_s.max(1e-16)).sqrt();
                let new_rho = (rho * scale).clamp(1e-1, 1e3);
                if new_rho > rho * 5.0 || new_rho < rho / 5.0 {
                    rho = new_rho;
                    factor = factorize(&sp, settings.sigma, rho)?;
                }
            }
        }
    }
    let _ = factor.rho;

    let mut solution = QpSolution {
        x: unscale_x(&x),
        y: unscale_y(&y),
        status,
        iterations,
        primal_residual: r_prim,
        dual_residual: r_dual,
        polished: false,
        max_violation: 0.0,
    };
    if settings.polish {
        if let Some(p) = polish(problem, &solution) {
            solution = p;
        }
    }
    Ok(solution)
}

/// Finish the splitting iterate exactly with a primal active-set method:
/// start from the (feasibility-repaired) iterate and its near-active rows,
/// then take equality-constrained steps with ratio tests until the KKT
/// conditions hold. Working sets stay consistent by construction — a
/// blocking row is never parallel to the current working set — so unlike
/// dual-guess heuristics this terminates on a verified optimum or not at
/// all.
fn polish(problem: &QpProblem, sol: &QpSolution) -> Option<QpSolution> {
    let n = problem.n();
    let m = problem.n_rows();
    let ax = &problem.a * &sol.x;

    // Working set seed: rows active at the start (side from the duals).
    let mut working: Vec<(usize, bool)> = Vec::new();
    for i in 0..m {
        let scale = 1.0 + problem.l[i].abs().min(1e12).min(problem.u[i].abs().min(1e12));
        let near_l = problem.l[i].is_finite() && ax[i] - problem.l[i] <= 1e-7 * scale;
        let near_u = problem.u[i].is_finite() && problem.u[i] - ax[i] <= 1e-7 * scale;
        if near_l && near_u {
            working.push((i, sol.y[i] > 0.0));
        } else if near_l {
            working.push((i, false));
        } else if near_u {
            working.push((i, true));
        }
    }

    // Alternate descent on violation-relaxed bounds with a restoration step
    // that pulls the working rows back onto the true bounds; the residual
    // relaxation shrinks to machine precision in a couple of rounds.
    let mut x = sol.x.clone();
    let mut y = DVector::zeros(m);
    for _round in 0..3 {
        let ax = &problem.a * &x;
        let mut l = problem.l.clone();
        let mut u = problem.u.clone();
        for i in 0..m {
            l[i] = l[i].min(ax[i] - 1e-15);
            u[i] = u[i].max(ax[i] + 1e-15);
        }
        let relaxed = QpProblem {
            p_diag: problem.p_diag.clone(),
            q: problem.q.clone(),
            a: problem.a.clone(),
            l,
            u,
            warm: None,
        };
        let (x_new, y_new, w_new) = active_set_descent(&relaxed, x.clone(), working.clone())?;
        x = x_new;
        y = y_new;
        working = w_new;

        // Restore the working rows to the true bounds with a least-norm
        // correction; inactive rows keep their margins to first order.
        let k = working.len();
        if k > 0 {
            let mut a_w = DMatrix::zeros(k, n);
            let mut delta = DVector::zeros(k);
            let ax = &problem.a * &x;
            for (r, &(i, upper)) in working.iter().enumerate() {
                for c in 0..n {
                    a_w[(r, c)] = problem.a[(i, c)];
                }
                let b = if upper { problem.u[i] } else { problem.l[i] };
                delta[r] = b - ax[i];
            }
            if delta.amax() > 1e-15 {
                let gram = &a_w * a_w.transpose() + DMatrix::identity(k, k) * 1e-12;
                if let Some(mult) = gram.lu().solve(&delta) {
                    x += a_w.transpose() * mult;
                }
            }
        }
        let ax = &problem.a * &x;
        let resid = (0..m)
            .map(|i| (problem.l[i] - ax[i]).max(ax[i] - problem.u[i]))
            .fold(0.0f64, f64::max);
        // One more round after restoration refreshes the duals at the
        // restored point.
        if resid <= 1e-12 * ax.amax().max(1.0) && _round >= 1 {
            break;
        }
    }
    let x = (x, y);

    // Verify against the original bounds.
    let ax = &problem.a * &x.0;
    let feas_scale = ax.amax().max(1.0);
    let mut primal = 0.0f64;
    for i in 0..m {
        primal = primal.max(problem.l[i] - ax[i]).max(ax[i] - problem.u[i]);
    }
    let dual =
        (x.0.component_mul(&problem.p_diag) + &problem.q + problem.a.transpose() * &x.1).amax();
    if !primal.is_finite() || !dual.is_finite() {
        return None;
    }
    if primal > 1e-7 * feas_scale || dual > 1e-6 * problem.q.amax().max(1.0) {
        return None;
    }
    Some(QpSolution {
        x: x.0,
        y: x.1,
        status: QpStatus::Solved,
        iterations: sol.iterations,
        primal_residual: primal.max(0.0),
        dual_residual: dual,
        polished: true,
        max_violation: 0.0,
    })
}

/// Primal active-set iteration from a feasible point. Returns the optimal
/// primal/dual pair of the given (possibly bound-relaxed) problem.
fn active_set_descent(
    problem: &QpProblem,
    mut x: DVector<f64>,
    mut working: Vec<(usize, bool)>,
) -> Option<(DVector<f64>, DVector<f64>, Vec<(usize, bool)>)> {
    let m = problem.n_rows();
    for _ in 0..400 {
        // Direction: min 1/2 p'Pp + g'p  s.t.  A_W p = 0, with g the current
        // gradient. Solved through the same scaled KKT machinery with
        // homogeneous constraint rights.
        let g = x.component_mul(&problem.p_diag) + &problem.q;
        let active: Vec<(usize, f64)> = working.iter().map(|&(i, _)| (i, 0.0)).collect();
        let shifted = QpProblem {
            p_diag: problem.p_diag.clone(),
            q: g.clone(),
            a: problem.a.clone(),
            l: problem.l.clone(),
            u: problem.u.clone(),
            warm: None,
        };
        let (p, lambda) = solve_kkt(&shifted, &active)?;

        let p_norm = p.amax();
        if p_norm <= 1e-10 * (1.0 + x.amax()) {
            // Stationary on the working set; check multiplier signs.
            let mut worst: Option<(usize, f64)> = None;
            for (w, &(i, upper)) in working.iter().enumerate() {
                if problem.l[i] == problem.u[i] {
                    continue;
                }
                let wrong = if upper { (-lambda[i]).max(0.0) } else { lambda[i].max(0.0) };
                if wrong > 1e-9 && worst.map_or(true, |(_, v)| wrong > v) {
                    worst = Some((w, wrong));
                }
            }
            match worst {
                None => {
                    let mut y = DVector::zeros(m);
                    for &(i, _) in &working {
                        y[i] = lambda[i];
                    }
                    return Some((x, y, working));
                }
                Some((w, _)) => {
                    working.remove(w);
                    continue;
                }
            }
        }

        // Ratio test along p toward the nearest blocking row.
        let ap = &problem.a * &p;
        let ax = &problem.a * &x;
        let mut alpha = 1.0f64;
        let mut blocking: Option<(usize, bool)> = None;
        for i in 0..m {
            if working.iter().any(|&(r, _)| r == i) {
                continue;
            }
            let d = ap[i];
            if d > 1e-12 && problem.u[i].is_finite() {
                let a_i = (problem.u[i] - ax[i]) / d;
                if a_i < alpha {
                    alpha = a_i.max(0.0);
                    blocking = Some((i, true));
                }
            } else if d < -1e-12 && problem.l[i].is_finite() {
                let a_i = (problem.l[i] - ax[i]) / d;
                if a_i < alpha {
                    alpha = a_i.max(0.0);
                    blocking = Some((i, false));
                }
            }
        }
        if alpha > 0.0 {
            x += p * alpha;
        }
        match blocking {
            Some(b) if alpha < 1.0 => working.push(b),
            _ => {
                if alpha >= 1.0 && blocking.is_none() && p_norm > 1e8 * (1.0 + x.amax()) {
                    // Unbounded descent direction with nothing blocking.
                    return None;
                }
            }
        }
    }
    None
}

/// Solve the equality-constrained KKT system for one active set, with a
/// refinement pass against the unregularized system (the diagonal
/// regularization error scales with the duals).
fn solve_kkt(problem: &QpProblem, active: &[(usize, f64)]) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = problem.n();
    let m = problem.n_rows();
    let k = active.len();
    let dim = n + k;
    let mut kkt = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    for i in 0..n {
        kkt[(i, i)] = problem.p_diag[i] + 1e-12;
        rhs[i] = -problem.q[i];
    }
    for (r, &(row, bound)) in active.iter().enumerate() {
        for c in 0..n {
            kkt[(n + r, c)] = problem.a[(row, c)];
            kkt[(c, n + r)] = problem.a[(row, c)];
        }
        kkt[(n + r, n + r)] = -1e-12;
        rhs[n + r] = bound;
    }

    // Symmetric Jacobi scaling: the system mixes constraint rows and
    // Hessian entries across ten orders of magnitude.
    let mut scale = DVector::from_element(dim, 1.0);
    for i in 0..dim {
        let mut norm = 0.0f64;
        for j in 0..dim {
            norm = norm.max(kkt[(i, j)].abs());
        }
        if norm > 1e-300 {
            scale[i] = 1.0 / norm.sqrt();
        }
    }
    for i in 0..dim {
        for j in 0..dim {
            kkt[(i, j)] *= scale[i] * scale[j];
        }
        rhs[i] *= scale[i];
    }

    let lu = kkt.clone().lu();
    let mut sol_kkt = lu.solve(&rhs)?;
    for i in 0..n {
        kkt[(i, i)] -= 1e-12 * scale[i] * scale[i];
    }
    for r in 0..k {
        kkt[(n + r, n + r)] += 1e-12 * scale[n + r] * scale[n + r];
    }
    // Refine against the unregularized system, keeping the best iterate:
    // with badly mixed row scales the correction step can diverge.
    let mut best = sol_kkt.clone();
    let mut best_norm = (&rhs - &kkt * &sol_kkt).amax();
    for _ in 0..3 {
        let residual = &rhs - &kkt * &sol_kkt;
        let Some(correction) = lu.solve(&residual) else {
            break;
        };
        sol_kkt += correction;
        let norm = (&rhs - &kkt * &sol_kkt).amax();
        if norm < best_norm {
            best_norm = norm;
            best.copy_from(&sol_kkt);
        } else {
            break;
        }
    }
    let mut sol_kkt = best;
    for i in 0..dim {
        sol_kkt[i] *= scale[i];
    }
    if !sol_kkt.iter().all(|v| v.is_finite()) {
        return None;
    }
    let x = DVector::from_column_slice(&sol_kkt.as_slice()[..n]);
    let mut y = DVector::zeros(m);
    for (r, &(row, _)) in active.iter().enumerate() {
        y[row] = sol_kkt[n + r];
    }
    Some((x, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn settings() -> QpSettings {
        QpSettings::default()
    }

    #[test]
    fn unconstrained_minimum_is_analytic() {
        // min 1/2 (2 x0^2 + 4 x1^2) + [1, -8] x  ->  x = (-0.5, 2).
        let qp = QpProblem {
            p_diag: DVector::from_vec(vec![2.0, 4.0]),
            q: DVector::from_vec(vec![1.0, -8.0]),
            a: DMatrix::zeros(0, 2),
            l: DVector::zeros(0),
            u: DVector::zeros(0),
            warm: None,
        };
        let sol = solve_qp(&qp, &settings()).unwrap();
        assert_relative_eq!(sol.x[0], -0.5, epsilon = 1e-8);
        assert_relative_eq!(sol.x[1], 2.0, epsilon = 1e-8);
    }

    #[test]
    fn box_constrained_matches_brute_force_grid() {
        // min 1/2 x'Px + q'x over the box [0,1]^2 with a coupling row.
        let qp = QpProblem {
            p_diag: DVector::from_vec(vec![1.0, 0.5]),
            q: DVector::from_vec(vec![-1.0, -0.3]),
            a: DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]),
            l: DVector::from_vec(vec![0.0, 0.0, -f64::INFINITY]),
            u: DVector::from_vec(vec![1.0, 1.0, 1.2]),
            warm: None,
        };
        let sol = solve_qp(&qp, &settings()).unwrap();

        let mut best = (f64::INFINITY, 0.0, 0.0);
        let steps = 1000;
        for i in 0..=steps {
            for j in 0..=steps {
                let x0 = i as f64 / steps as f64;
                let x1 = j as f64 / steps as f64;
                if x0 + x1 > 1.2 {
                    continue;
                }
                let obj = 0.5 * (x0 * x0 + 0.5 * x1 * x1) - x0 - 0.3 * x1;
                if obj < best.0 {
                    best = (obj, x0, x1);
                }
            }
        }
        assert!(
            (sol.x[0] - best.1).abs() < 1e-3 && (sol.x[1] - best.2).abs() < 1e-3,
            "solver ({}, {}) vs grid ({}, {})",
            sol.x[0],
            sol.x[1],
            best.1,
            best.2
        );
        assert!(sol.primal_residual < 1e-6 && sol.dual_residual < 1e-6);
    }

    #[test]
    fn warm_start_speeds_up_resolve() {
        let base = QpProblem {
            p_diag: DVector::from_vec(vec![1.0, 1.0, 1.0]),
            q: DVector::from_vec(vec![-1.0, -2.0, -3.0]),
            a: DMatrix::from_row_slice(4, 3, &[
                1.0, 0.0, 0.0, //
                0.0, 1.0, 0.0, //
                0.0, 0.0, 1.0, //
                1.0, 1.0, 1.0,
            ]),
            l: DVector::from_vec(vec![0.0, 0.0, 0.0, -f64::INFINITY]),
            u: DVector::from_vec(vec![2.0, 2.0, 2.0, 3.5]),
            warm: None,
        };
        let cold = solve_qp(&base, &settings()).unwrap();

        let mut perturbed = base.clone();
        perturbed.u[3] = 3.4;
        let cold2 = solve_qp(&perturbed, &settings()).unwrap();
        perturbed.warm = Some((cold.x.clone(), cold.y.clone()));
        let warm = solve_qp(&perturbed, &settings()).unwrap();
        assert!(
            warm.iterations <= cold2.iterations,
            "warm {} > cold {}",
            warm.iterations,
            cold2.iterations
        );
        assert!((warm.x - cold2.x).amax() < 1e-5);
    }

    #[test]
    fn infeasible_rows_are_detected() {
        // x >= 2 and x <= 1 cannot hold.
        let qp = QpProblem {
            p_diag: DVector::from_vec(vec![1.0]),
            q: DVector::from_vec(vec![0.0]),
            a: DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            l: DVector::from_vec(vec![2.0, -f64::INFINITY]),
            u: DVector::from_vec(vec![f64::INFINITY, 1.0]),
            warm: None,
        };
        let sol = solve_qp(&qp, &settings()).unwrap();
        assert_eq!(sol.status, QpStatus::Infeasible);
        assert!(sol.max_violation > 0.4);
    }

    #[test]
    fn polish_reaches_tight_kkt_residuals() {
        let qp = QpProblem {
            p_diag: DVector::from_vec(vec![2.0, 2.0]),
            q: DVector::from_vec(vec![-4.0, -4.0]),
            a: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            l: DVector::from_vec(vec![-f64::INFINITY]),
            u: DVector::from_vec(vec![1.0]),
            warm: None,
        };
        let sol = solve_qp(&qp, &settings()).unwrap();
        assert!(sol.polished);
        assert!(sol.primal_residual < 1e-9);
        assert!(sol.dual_residual < 1e-9);
        // Analytic: symmetric, active sum constraint -> x = (0.5, 0.5).
        assert_relative_eq!(sol.x[0], 0.5, epsilon = 1e-9);
    }
}
