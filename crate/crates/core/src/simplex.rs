//! Small dense two-phase simplex with Bland's anti-cycling rule.
//!
//! Problems here have a few dozen variables and rows, so the full tableau is kept
//! and reduced costs are recomputed every iteration. The optimal basis is
//! re-solved against the original data at the end, so the returned point is the
//! vertex of that basis to working precision rather than the accumulated tableau
//! values.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// `lower ≤ coeffs·x ≤ upper`; either side may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
}

/// Variables are non-negative with optional finite upper bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub upper_bounds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub pivot_tol: f64,
    pub cost_tol: f64,
    /// Phase-one residual allowed, relative to `max(1, max |b|)`.
    pub feasibility_tol: f64,
    pub max_pivots: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            pivot_tol: 1e-11,
            cost_tol: 1e-12,
            feasibility_tol: 1e-9,
            max_pivots: 10_000,
        }
    }
}

impl LinearProgram {
    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    fn check_shapes(&self) -> Result<()> {
        let n = self.n_vars();
        if self.upper_bounds.len() != n || self.constraints.iter().any(|c| c.coeffs.len() != n) {
            return Err(Error::InvalidParameter(
                "linear program has inconsistent dimensions".into(),
            ));
        }
        Ok(())
    }
}

/// Standard form `A z = b, z ≥ 0, b ≥ 0` with bookkeeping of which columns are
/// structural, slack or artificial.
struct StandardForm {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    n_struct: usize,
    first_artificial: usize,
    initial_basis: Vec<usize>,
}

fn standard_form(lp: &LinearProgram) -> StandardForm {
    let n = lp.n_vars();
    // (row coefficients, rhs, slack sign) with slack sign 0 for equalities
    let mut rows: Vec<(Vec<f64>, f64, f64)> = Vec::new();
    for c in &lp.constraints {
        if c.lower == c.upper {
            rows.push((c.coeffs.clone(), c.upper, 0.0));
            continue;
        }
        if c.upper.is_finite() {
            rows.push((c.coeffs.clone(), c.upper, 1.0));
        }
        if c.lower.is_finite() {
            rows.push((c.coeffs.clone(), c.lower, -1.0));
        }
    }
    for (j, &u) in lp.upper_bounds.iter().enumerate() {
        if u.is_finite() {
            let mut coeffs = vec![0.0; n];
            coeffs[j] = 1.0;
            rows.push((coeffs, u, 1.0));
        }
    }

    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.2 != 0.0).count();
    let mut a = vec![vec![0.0; n + n_slack]; m];
    let mut b = vec![0.0; m];
    let mut basis = vec![usize::MAX; m];
    let mut slack = n;
    for (i, (coeffs, rhs, sign)) in rows.into_iter().enumerate() {
        let flip = if rhs < 0.0 { -1.0 } else { 1.0 };
        for (dst, v) in a[i].iter_mut().zip(&coeffs) {
            *dst = flip * v;
        }
        b[i] = flip * rhs;
        if sign != 0.0 {
            a[i][slack] = flip * sign;
            if flip * sign > 0.0 {
                basis[i] = slack;
            }
            slack += 1;
        }
    }
    let first_artificial = n + n_slack;
    let mut next = first_artificial;
    for (i, row) in a.iter_mut().enumerate() {
        row.resize(first_artificial + m, 0.0);
        if basis[i] == usize::MAX {
            row[next] = 1.0;
            basis[i] = next;
            next += 1;
        }
    }
    for row in a.iter_mut() {
        row.truncate(next);
    }
    StandardForm {
        a,
        b,
        n_struct: n,
        first_artificial,
        initial_basis: basis,
    }
}

struct Tableau {
    t: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    pivots: usize,
    scratch: Vec<(usize, f64)>,
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.t[row][col];
        for v in self.t[row].iter_mut() {
            *v /= p;
        }
        self.rhs[row] /= p;
        self.t[row][col] = 1.0;
        // rows are sparse, so only the pivot row's nonzeros are propagated
        let mut pivot_row = std::mem::take(&mut self.scratch);
        pivot_row.clear();
        pivot_row.extend(self.t[row].iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, &v)| (j, v)));
        let pivot_rhs = self.rhs[row];
        for i in 0..self.t.len() {
            if i == row {
                continue;
            }
            let f = self.t[i][col];
            if f == 0.0 {
                continue;
            }
            let r = &mut self.t[i];
            for &(j, pv) in &pivot_row {
                r[j] -= f * pv;
            }
            self.t[i][col] = 0.0;
            self.rhs[i] -= f * pivot_rhs;
            if self.rhs[i] < 0.0 && self.rhs[i] > -1e-13 {
                self.rhs[i] = 0.0;
            }
        }
        self.scratch = pivot_row;
        self.basis[row] = col;
        self.pivots += 1;
    }

    /// Minimizes `cost·z` over columns `< allowed`, Bland's rule throughout. The
    /// reduced-cost row is carried along with the pivots.
    fn optimize(&mut self, cost: &[f64], allowed: usize, opts: &SimplexOptions) -> Result<()> {
        let ncols = cost.len();
        let mut reduced = cost.to_vec();
        for (&bi, row) in self.basis.iter().zip(&self.t) {
            if cost[bi] != 0.0 {
                for (d, v) in reduced.iter_mut().zip(row) {
                    *d -= cost[bi] * v;
                }
            }
        }
        let mut basic = vec![false; ncols];
        for &bi in &self.basis {
            basic[bi] = true;
        }
        loop {
            if self.pivots > opts.max_pivots {
                return Err(Error::IterationLimit);
            }
            let entering = (0..allowed).find(|&j| !basic[j] && reduced[j] < -opts.cost_tol);
            let Some(col) = entering else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.t.len() {
                let a = self.t[i][col];
                if a <= opts.pivot_tol {
                    continue;
                }
                let ratio = self.rhs[i] / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((k, best)) => {
                        let tie = (ratio - best).abs() <= 1e-14 * best.abs().max(1e-300);
                        if ratio < best && !tie || tie && self.basis[i] < self.basis[k] {
                            Some((i, ratio))
                        } else {
                            Some((k, best))
                        }
                    }
                };
            }
            let Some((row, _)) = leave else {
                return Err(Error::Unbounded);
            };
            basic[self.basis[row]] = false;
            basic[col] = true;
            self.pivot(row, col);
            let f = reduced[col];
            for (d, v) in reduced.iter_mut().zip(&self.t[row]) {
                *d -= f * v;
            }
            reduced[col] = 0.0;
        }
    }
}

/// Solves `B z_B = b` for the final basis by Gaussian elimination with partial
/// pivoting. `None` if the basis matrix is numerically singular.
fn resolve_basis(sf: &StandardForm, basis: &[usize]) -> Option<Vec<f64>> {
    let m = basis.len();
    let mut mat: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let mut row = Vec::with_capacity(m + 1);
            row.extend(basis.iter().map(|&j| sf.a[i][j]));
            row.push(sf.b[i]);
            row
        })
        .collect();
    let mut head: Vec<(usize, f64)> = Vec::with_capacity(m + 1);
    for col in 0..m {
        let piv = (col..m).max_by(|&x, &y| mat[x][col].abs().total_cmp(&mat[y][col].abs()))?;
        if mat[piv][col].abs() < 1e-300 {
            return None;
        }
        mat.swap(col, piv);
        head.clear();
        head.extend((col..=m).filter(|&c| mat[col][c] != 0.0).map(|c| (c, mat[col][c])));
        for r in col + 1..m {
            let f = mat[r][col] / head[0].1;
            if f != 0.0 {
                for &(c, v) in &head {
                    mat[r][c] -= f * v;
                }
            }
        }
    }
    let mut z = vec![0.0; m];
    for i in (0..m).rev() {
        let s: f64 = (i + 1..m).map(|j| mat[i][j] * z[j]).sum();
        z[i] = (mat[i][m] - s) / mat[i][i];
    }
    z.iter().all(|v| v.is_finite()).then_some(z)
}

pub fn solve(lp: &LinearProgram) -> Result<Solution> {
    solve_with(lp, &SimplexOptions::default())
}

pub fn solve_with(lp: &LinearProgram, opts: &SimplexOptions) -> Result<Solution> {
    lp.check_shapes()?;
    let sf = standard_form(lp);
    let ncols = sf.a.first().map_or(sf.first_artificial, Vec::len);
    let mut tab = Tableau {
        t: sf.a.clone(),
        rhs: sf.b.clone(),
        basis: sf.initial_basis.clone(),
        pivots: 0,
        scratch: Vec::with_capacity(ncols),
    };

    // phase one
    let phase_one: Vec<f64> = (0..ncols)
        .map(|j| if j >= sf.first_artificial { 1.0 } else { 0.0 })
        .collect();
    tab.optimize(&phase_one, ncols, opts)?;
    let residual: f64 = tab
        .basis
        .iter()
        .zip(&tab.rhs)
        .filter(|(&j, _)| j >= sf.first_artificial)
        .map(|(_, &v)| v)
        .sum();
    let scale = sf.b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if residual > opts.feasibility_tol * scale {
        return Err(Error::Infeasible { residual });
    }
    // drive remaining (zero-valued) artificials out of the basis where possible
    for i in 0..tab.t.len() {
        if tab.basis[i] >= sf.first_artificial {
            if let Some(j) =
                (0..sf.first_artificial).find(|&j| tab.t[i][j].abs() > opts.pivot_tol)
            {
                tab.pivot(i, j);
            }
        }
    }

    // phase two, internally always a minimization
    let flip = match lp.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let mut cost = vec![0.0; ncols];
    for (c, &o) in cost.iter_mut().zip(&lp.objective) {
        *c = flip * o;
    }
    tab.optimize(&cost, sf.first_artificial, opts)?;

    let basic_values = resolve_basis(&sf, &tab.basis).unwrap_or_else(|| tab.rhs.clone());
    let mut x = vec![0.0; sf.n_struct];
    for (&j, &v) in tab.basis.iter().zip(&basic_values) {
        if j < sf.n_struct {
            x[j] = v.max(0.0);
        }
    }
    let objective = x.iter().zip(&lp.objective).map(|(a, b)| a * b).sum();
    Ok(Solution {
        x,
        objective,
        pivots: tab.pivots,
    })
}
