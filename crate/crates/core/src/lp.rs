//! Dense two-phase simplex for tiny linear programs, plus the
//! feasibility front end used to construct conservative inputs.
//!
//! Problems here have at most ~10 variables and ~20 rows; the tableau is
//! stored densely and Bland's rule is used throughout so degenerate pivots
//! cannot cycle.

use crate::error::{shape_err, Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Find `z` with `G z ⪯ g`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFeasibilityProblem<T> {
    g_mat: Matrix<T>,
    g_vec: Vec<T>,
}

impl<T: Real> LinearFeasibilityProblem<T> {
    pub fn new(g_mat: Matrix<T>, g_vec: Vec<T>) -> Result<Self> {
        if g_mat.rows() == 0 || g_mat.cols() == 0 {
            return Err(Error::Domain("feasibility problem needs at least one row and one variable".into()));
        }
        if g_vec.len() != g_mat.rows() {
            return shape_err("LinearFeasibilityProblem", g_mat.rows(), g_vec.len());
        }
        if !g_mat.is_finite() || g_vec.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("feasibility problem entries must be finite".into()));
        }
        Ok(Self { g_mat, g_vec })
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.g_mat
    }

    pub fn rhs(&self) -> &[T] {
        &self.g_vec
    }

    pub fn n_vars(&self) -> usize {
        self.g_mat.cols()
    }

    /// Largest `max(0, (G z − g)_i)`.
    pub fn max_violation(&self, z: &[T]) -> Result<T> {
        let gz = self.g_mat.mul_vec(z)?;
        Ok(gz
            .iter()
            .zip(&self.g_vec)
            .fold(T::zero(), |acc, (&lhs, &rhs)| acc.max(lhs - rhs)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome<T> {
    Feasible(Vec<T>),
    /// Smallest achievable maximum row violation.
    Infeasible { violation: T },
}

impl<T> LpOutcome<T> {
    pub fn feasible(self) -> Option<Vec<T>> {
        match self {
            LpOutcome::Feasible(z) => Some(z),
            LpOutcome::Infeasible { .. } => None,
        }
    }
}

/// First minimize the worst violation `t ≥ 0` of `G z ⪯ g`; if it is zero
/// (within the feasibility slack), return the feasible `z` of smallest
/// ∞-norm.
pub fn solve_lp_feasible<T: Real>(prob: &LinearFeasibilityProblem<T>) -> Result<LpOutcome<T>> {
    let p = prob.g_mat.rows();
    let v = prob.n_vars();
    let slack = T::check_tolerance();

    // Phase A: variables [z⁺, z⁻, t] ≥ 0, rows G z⁺ − G z⁻ − t ≤ g.
    let mut a = Matrix::zeros(p, 2 * v + 1);
    for i in 0..p {
        for k in 0..v {
            let gik = prob.g_mat[(i, k)];
            a[(i, k)] = gik;
            a[(i, v + k)] = -gik;
        }
        a[(i, 2 * v)] = -T::one();
    }
    let mut c = vec![T::zero(); 2 * v + 1];
    c[2 * v] = T::one();
    let sol = match simplex_minimize(&c, &a, &prob.g_vec)? {
        SimplexResult::Optimal { objective, .. } => objective,
        SimplexResult::Infeasible => unreachable!("violation program is always feasible"),
    };
    if sol > slack {
        return Ok(LpOutcome::Infeasible { violation: sol });
    }
    let relax = sol.max(T::zero());

    // Phase B: variables [z⁺, z⁻, s] ≥ 0, minimize s subject to
    // G z ≤ g + relax and −s ≤ z_k ≤ s.
    let rows = p + 2 * v;
    let mut a = Matrix::zeros(rows, 2 * v + 1);
    let mut b = vec![T::zero(); rows];
    for i in 0..p {
        for k in 0..v {
            let gik = prob.g_mat[(i, k)];
            a[(i, k)] = gik;
            a[(i, v + k)] = -gik;
        }
        b[i] = prob.g_vec[i] + relax;
    }
    for k in 0..v {
        let up = p + 2 * k;
        a[(up, k)] = T::one();
        a[(up, v + k)] = -T::one();
        a[(up, 2 * v)] = -T::one();
        let down = up + 1;
        a[(down, k)] = -T::one();
        a[(down, v + k)] = T::one();
        a[(down, 2 * v)] = -T::one();
    }
    match simplex_minimize(&c, &a, &b)? {
        SimplexResult::Optimal { x, .. } => Ok(LpOutcome::Feasible((0..v).map(|k| x[k] - x[v + k]).collect())),
        // Numerically possible only when phase A sat exactly on the slack.
        SimplexResult::Infeasible => Ok(LpOutcome::Infeasible { violation: sol }),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum SimplexResult<T> {
    Optimal { x: Vec<T>, objective: T },
    Infeasible,
}

/// `min cᵀx  s.t.  A x ≤ b, x ≥ 0` by the two-phase tableau method with
/// Bland's rule.
pub(crate) fn simplex_minimize<T: Real>(c: &[T], a: &Matrix<T>, b: &[T]) -> Result<SimplexResult<T>> {
    let (m, n) = a.shape();
    if c.len() != n || b.len() != m {
        return shape_err("simplex_minimize", format!("c:{n} b:{m}"), format!("c:{} b:{}", c.len(), b.len()));
    }
    let eps = T::epsilon() * T::lit(1024.0);
    let negative_rows: Vec<usize> = (0..m).filter(|&i| b[i] < T::zero()).collect();
    let n_art = negative_rows.len();
    // columns: structural | slack | artificial | rhs
    let width = n + m + n_art + 1;
    let rhs = width - 1;
    let mut tab = Tableau {
        data: vec![T::zero(); m * width],
        width,
        basis: vec![0; m],
        rows: m,
    };
    let mut art = 0;
    for i in 0..m {
        let flip = b[i] < T::zero();
        let sign = if flip { -T::one() } else { T::one() };
        for j in 0..n {
            tab.set(i, j, sign * a[(i, j)]);
        }
        tab.set(i, n + i, sign);
        tab.set(i, rhs, sign * b[i]);
        if flip {
            tab.set(i, n + m + art, T::one());
            tab.basis[i] = n + m + art;
            art += 1;
        } else {
            tab.basis[i] = n + i;
        }
    }
    let artificial = |j: usize| j >= n + m && j < n + m + n_art;

    if n_art > 0 {
        let mut cost = vec![T::zero(); width - 1];
        for j in (n + m)..(n + m + n_art) {
            cost[j] = T::one();
        }
        tab.optimize(&cost, |_| true, eps)?;
        let infeas: T = (0..tab.rows)
            .filter(|&i| artificial(tab.basis[i]))
            .map(|i| tab.get(i, rhs))
            .sum();
        if infeas > T::check_tolerance() {
            return Ok(SimplexResult::Infeasible);
        }
        // Drive zero-level artificials out of the basis; drop redundant rows.
        let mut i = 0;
        while i < tab.rows {
            if artificial(tab.basis[i]) {
                match (0..n + m).find(|&j| tab.get(i, j).abs() > eps) {
                    Some(j) => {
                        tab.pivot(i, j);
                        i += 1;
                    }
                    None => tab.remove_row(i),
                }
            } else {
                i += 1;
            }
        }
    }

    let mut cost = vec![T::zero(); width - 1];
    cost[..n].copy_from_slice(c);
    tab.optimize(&cost, |j| !artificial(j), eps)?;

    let mut x = vec![T::zero(); n];
    for i in 0..tab.rows {
        let j = tab.basis[i];
        if j < n {
            x[j] = tab.get(i, rhs);
        }
    }
    let objective = x.iter().zip(c).fold(T::zero(), |acc, (&xi, &ci)| acc + xi * ci);
    Ok(SimplexResult::Optimal { x, objective })
}

struct Tableau<T> {
    data: Vec<T>,
    width: usize,
    basis: Vec<usize>,
    rows: usize,
}

impl<T: Real> Tableau<T> {
    #[inline]
    fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.width + j]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.width + j] = v;
    }

    fn remove_row(&mut self, i: usize) {
        self.data.drain(i * self.width..(i + 1) * self.width);
        self.basis.remove(i);
        self.rows -= 1;
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let p = self.get(r, c);
        for j in 0..w {
            let v = self.get(r, j) / p;
            self.set(r, j, v);
        }
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.get(i, c);
            if f == T::zero() {
                continue;
            }
            for j in 0..w {
                let v = self.get(i, j) - f * self.get(r, j);
                self.set(i, j, v);
            }
            self.set(i, c, T::zero());
        }
        self.basis[r] = c;
    }

    fn optimize(&mut self, cost: &[T], allowed: impl Fn(usize) -> bool, eps: T) -> Result<()> {
        let rhs = self.width - 1;
        // Bland's rule terminates; the cap only guards against numerical stalls.
        for _ in 0..10_000 {
            let mut entering = None;
            for j in 0..rhs {
                if !allowed(j) || self.basis.contains(&j) {
                    continue;
                }
                let mut reduced = cost[j];
                for i in 0..self.rows {
                    reduced = reduced - cost[self.basis[i]] * self.get(i, j);
                }
                if reduced < -eps {
                    entering = Some(j);
                    break;
                }
            }
            let Some(col) = entering else {
                return Ok(());
            };
            let mut leave: Option<(usize, T)> = None;
            for i in 0..self.rows {
                let a = self.get(i, col);
                if a > eps {
                    let ratio = self.get(i, rhs) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - eps || ((ratio - lr).abs() <= eps && self.basis[i] < self.basis[li]) {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            let Some((row, _)) = leave else {
                return Err(Error::Unbounded);
            };
            self.pivot(row, col);
        }
        Err(Error::Domain("simplex iteration limit reached".into()))
    }
}
