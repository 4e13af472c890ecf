//! Earth Mover's Distance as a transportation linear program solved by a
//! two-phase revised simplex method with an explicit basis inverse.
//!
//! Constraint rows are ordered demand (`q`, one per candidate bin), supply
//! (`p`, one per reference bin), then a total-mass row. The total row is
//! redundant but kept, so the duals split into `l` (demand rows), `h` (supply
//! rows) and a constant, and the optimal value equals
//! `Σ l_v q_v + Σ h_u p_u + c`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const MASS_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-12;
const REDUCED_COST_TOL: f64 = 1e-10;
const REFACTOR_EVERY: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct TransportProblem {
    /// Reference bin count (supply rows).
    pub u: usize,
    /// Candidate bin count (demand rows).
    pub v: usize,
    /// Costs `d_uv`, flattened with `v` fastest.
    pub c: Vec<f64>,
    /// Right-hand side `(q, p, 1)`.
    pub b: Vec<f64>,
    /// `(U + V + 1) × (U V)` 0/1 constraint matrix.
    pub a: DMatrix<f64>,
}

impl TransportProblem {
    pub fn rows(&self) -> usize {
        self.u + self.v + 1
    }

    pub fn cols(&self) -> usize {
        self.u * self.v
    }

    #[inline]
    pub fn var(&self, u: usize, v: usize) -> usize {
        u * self.v + v
    }

    /// Constraint rows touched by variable `j`: demand row, supply row, total row.
    #[inline]
    fn rows_of(&self, j: usize) -> [usize; 3] {
        let (u, v) = (j / self.v, j % self.v);
        [v, self.v + u, self.u + self.v]
    }
}

/// Builds the transportation program for supplies `p` (length U), demands `q`
/// (length V) and the U×V ground distance `d`.
pub fn build_problem(p: &[f64], q: &[f64], d: &DMatrix<f64>) -> Result<TransportProblem> {
    let (u, v) = (p.len(), q.len());
    if u == 0 || v == 0 {
        return Err(Error::param("signature", "empty mass vector"));
    }
    if d.shape() != (u, v) {
        return Err(Error::DimensionMismatch(format!(
            "ground distance is {}x{}, masses need {u}x{v}",
            d.nrows(),
            d.ncols()
        )));
    }
    if p.iter().chain(q).any(|&m| !(m >= 0.0) || !m.is_finite()) {
        return Err(Error::param("masses", "must be finite and nonnegative"));
    }
    if d.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
        return Err(Error::param("ground distance", "must be finite and nonnegative"));
    }
    let (sp, sq): (f64, f64) = (p.iter().sum(), q.iter().sum());
    if (sp - sq).abs() > MASS_TOL || (sp - 1.0).abs() > MASS_TOL {
        return Err(Error::Unbalanced { supply: sp, demand: sq });
    }
    let m = u + v + 1;
    let mut a = DMatrix::zeros(m, u * v);
    let mut c = Vec::with_capacity(u * v);
    for i in 0..u {
        for j in 0..v {
            let col = i * v + j;
            a[(j, col)] = 1.0;
            a[(v + i, col)] = 1.0;
            a[(m - 1, col)] = 1.0;
            c.push(d[(i, j)]);
        }
    }
    let mut b = q.to_vec();
    b.extend_from_slice(p);
    b.push(1.0);
    Ok(TransportProblem { u, v, c, b, a })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    One,
    Two,
    DriveOut,
}

/// One pivot of the simplex trace.
#[derive(Debug, Clone, PartialEq)]
pub struct PivotRecord {
    pub phase: Phase,
    pub entering: usize,
    pub leaving: usize,
    pub step: f64,
    pub reduced_cost: f64,
    pub objective: f64,
    pub bland: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    /// Pivot cap per phase; `None` means `10 U V`.
    pub max_pivots: Option<usize>,
    pub record_trace: bool,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions { max_pivots: None, record_trace: false }
    }
}

/// A basis of the problem extended by one artificial variable per row.
/// Variable indices `>= U V` are artificials (`U V + row`).
#[derive(Debug, Clone)]
pub struct BasicSolution {
    pub basis: Vec<usize>,
    pub x_basic: Vec<f64>,
    pub b_inv: DMatrix<f64>,
}

struct Tableau<'a> {
    prob: &'a TransportProblem,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    xb: Vec<f64>,
    b_inv: DMatrix<f64>,
    since_refactor: usize,
    trace: Option<Vec<PivotRecord>>,
}

impl<'a> Tableau<'a> {
    fn n_real(&self) -> usize {
        self.prob.cols()
    }

    fn is_artificial(&self, j: usize) -> bool {
        j >= self.n_real()
    }

    /// `B⁻¹ A_j`.
    fn column(&self, j: usize) -> DVector<f64> {
        if self.is_artificial(j) {
            return self.b_inv.column(j - self.n_real()).into_owned();
        }
        let [r0, r1, r2] = self.prob.rows_of(j);
        self.b_inv.column(r0) + self.b_inv.column(r1) + self.b_inv.column(r2)
    }

    fn cost(&self, j: usize, phase: Phase) -> f64 {
        match (phase, self.is_artificial(j)) {
            (Phase::Two, false) => self.prob.c[j],
            (Phase::Two, true) => 0.0,
            (_, true) => 1.0,
            (_, false) => 0.0,
        }
    }

    /// `π = c_Bᵀ B⁻¹`.
    fn duals(&self, phase: Phase) -> DVector<f64> {
        let cb = DVector::from_iterator(self.basis.len(), self.basis.iter().map(|&j| self.cost(j, phase)));
        self.b_inv.tr_mul(&cb)
    }

    fn reduced_cost(&self, j: usize, pi: &DVector<f64>, phase: Phase) -> f64 {
        let [r0, r1, r2] = self.prob.rows_of(j);
        self.cost(j, phase) - (pi[r0] + pi[r1] + pi[r2])
    }

    fn objective(&self, phase: Phase) -> f64 {
        self.basis.iter().zip(&self.xb).map(|(&j, x)| self.cost(j, phase) * x).sum()
    }

    fn refactor(&mut self) {
        let m = self.prob.rows();
        let mut bm = DMatrix::zeros(m, m);
        for (i, &j) in self.basis.iter().enumerate() {
            if self.is_artificial(j) {
                bm[(j - self.n_real(), i)] = 1.0;
            } else {
                for r in self.prob.rows_of(j) {
                    bm[(r, i)] = 1.0;
                }
            }
        }
        match bm.try_inverse() {
            Some(inv) => {
                let x = &inv * DVector::from_column_slice(&self.prob.b);
                self.b_inv = inv;
                self.xb = x.iter().map(|&v| if v.abs() < 1e-14 { 0.0 } else { v }).collect();
            }
            None => log::warn!("basis matrix singular at refactorization; keeping product form"),
        }
        self.since_refactor = 0;
    }

    /// Eta update of `B⁻¹` and `x_B` for entering `j` replacing row `r`.
    fn pivot(&mut self, r: usize, j: usize, y: &DVector<f64>) {
        let m = self.basis.len();
        let yr = y[r];
        let step = self.xb[r] / yr;
        for i in 0..m {
            if i != r {
                self.xb[i] -= y[i] * step;
                if self.xb[i].abs() < 1e-14 {
                    self.xb[i] = 0.0;
                }
            }
        }
        self.xb[r] = step;
        let pivot_row = self.b_inv.row(r) / yr;
        for i in 0..m {
            if i != r && y[i] != 0.0 {
                let yi = y[i];
                for c in 0..m {
                    self.b_inv[(i, c)] -= yi * pivot_row[c];
                }
            }
        }
        self.b_inv.set_row(r, &pivot_row);
        self.in_basis[self.basis[r]] = false;
        self.in_basis[j] = true;
        self.basis[r] = j;
        self.since_refactor += 1;
        if self.since_refactor >= REFACTOR_EVERY {
            self.refactor();
        }
    }

    fn record(&mut self, rec: PivotRecord) {
        if let Some(t) = self.trace.as_mut() {
            t.push(rec);
        }
    }

    /// Runs simplex iterations for `phase` until optimal.
    fn run(&mut self, phase: Phase, cap: usize) -> Result<()> {
        let degenerate_limit = 2 * (self.prob.u + self.prob.v);
        let mut degenerate_run = 0;
        let n_real = self.n_real();
        for _ in 0..cap {
            let bland = degenerate_run >= degenerate_limit;
            let pi = self.duals(phase);
            let mut enter: Option<(usize, f64)> = None;
            for j in 0..n_real {
                if self.in_basis[j] {
                    continue;
                }
                let rc = self.reduced_cost(j, &pi, phase);
                if rc < -REDUCED_COST_TOL {
                    match enter {
                        _ if bland && enter.is_some() => {}
                        Some((_, best)) if rc >= best => {}
                        _ => enter = Some((j, rc)),
                    }
                }
            }
            let Some((j, rc)) = enter else {
                return Ok(());
            };
            let y = self.column(j);
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..y.len() {
                if y[i] > PIVOT_TOL {
                    let ratio = self.xb[i].max(0.0) / y[i];
                    let better = match leave {
                        None => true,
                        Some((k, best)) => {
                            ratio < best - 1e-15
                                || (ratio <= best + 1e-15
                                    && if bland { self.basis[i] < self.basis[k] } else { y[i] > y[k] })
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((r, step)) = leave else {
                return Err(Error::Numerical("unbounded direction in a bounded program".into()));
            };
            degenerate_run = if step <= 1e-15 { degenerate_run + 1 } else { 0 };
            let leaving = self.basis[r];
            self.pivot(r, j, &y);
            let objective = self.objective(phase);
            self.record(PivotRecord { phase, entering: j, leaving, step, reduced_cost: rc, objective, bland });
        }
        Err(Error::IterationCap { cap, best_basis: self.basis.clone() })
    }

    /// Pivots zero-level artificials out of the basis where a real column can
    /// replace them; the rest sit on redundant rows and stay at zero.
    fn drive_out_artificials(&mut self) {
        for r in 0..self.basis.len() {
            if !self.is_artificial(self.basis[r]) {
                continue;
            }
            let row = self.b_inv.row(r).into_owned();
            let pick = (0..self.n_real()).filter(|&j| !self.in_basis[j]).find(|&j| {
                let [r0, r1, r2] = self.prob.rows_of(j);
                (row[r0] + row[r1] + row[r2]).abs() > 1e-9
            });
            if let Some(j) = pick {
                self.xb[r] = 0.0;
                let y = self.column(j);
                let leaving = self.basis[r];
                self.pivot(r, j, &y);
                let objective = self.objective(Phase::Two);
                self.record(PivotRecord {
                    phase: Phase::DriveOut,
                    entering: j,
                    leaving,
                    step: 0.0,
                    reduced_cost: 0.0,
                    objective,
                    bland: false,
                });
            }
        }
    }
}

fn phase_one<'a>(prob: &'a TransportProblem, opts: &SimplexOptions) -> Result<Tableau<'a>> {
    let m = prob.rows();
    let n = prob.cols();
    let mut in_basis = vec![false; n + m];
    in_basis[n..].iter_mut().for_each(|f| *f = true);
    let mut t = Tableau {
        prob,
        basis: (n..n + m).collect(),
        in_basis,
        xb: prob.b.clone(),
        b_inv: DMatrix::identity(m, m),
        since_refactor: 0,
        trace: opts.record_trace.then(Vec::new),
    };
    let cap = opts.max_pivots.unwrap_or(10 * prob.u * prob.v).max(1);
    t.run(Phase::One, cap)?;
    let infeasibility = t.objective(Phase::One);
    if infeasibility > MASS_TOL {
        return Err(Error::Infeasible(infeasibility));
    }
    t.drive_out_artificials();
    Ok(t)
}

/// Phase-one basic feasible solution of the original program.
pub fn initial_bfs(prob: &TransportProblem) -> Result<BasicSolution> {
    let t = phase_one(prob, &SimplexOptions::default())?;
    Ok(BasicSolution { basis: t.basis, x_basic: t.xb, b_inv: t.b_inv })
}

#[derive(Debug, Clone)]
pub struct EmdSolution {
    /// `U × V` optimal flow.
    pub flow: DMatrix<f64>,
    pub objective: f64,
    /// Duals of the demand rows, one per candidate bin.
    pub l: Vec<f64>,
    /// Duals of the supply rows, one per reference bin.
    pub h: Vec<f64>,
    /// Dual of the total-mass row.
    pub const_c: f64,
    pub basis: Vec<usize>,
    pub b_inv: DMatrix<f64>,
    pub trace: Vec<PivotRecord>,
}

impl EmdSolution {
    /// `c_j − πA_j` for every flow variable.
    pub fn reduced_costs(&self, prob: &TransportProblem) -> Vec<f64> {
        (0..prob.cols())
            .map(|j| {
                let (u, v) = (j / prob.v, j % prob.v);
                prob.c[j] - self.l[v] - self.h[u] - self.const_c
            })
            .collect()
    }

    /// Pivot-by-pivot text dump.
    pub fn trace_text(&self, prob: &TransportProblem) -> String {
        let name = |j: usize| {
            if j >= prob.cols() {
                format!("a{}", j - prob.cols())
            } else {
                format!("r{},{}", j / prob.v, j % prob.v)
            }
        };
        let mut out = String::from("# phase entering leaving step reduced_cost objective rule\n");
        for r in &self.trace {
            let _ = writeln!(
                out,
                "{:?} {} {} {:.6e} {:.6e} {:.12} {}",
                r.phase,
                name(r.entering),
                name(r.leaving),
                r.step,
                r.reduced_cost,
                r.objective,
                if r.bland { "bland" } else { "dantzig" }
            );
        }
        out
    }
}

pub fn simplex_solve(prob: &TransportProblem) -> Result<EmdSolution> {
    simplex_solve_with(prob, &SimplexOptions::default())
}

pub fn simplex_solve_with(prob: &TransportProblem, opts: &SimplexOptions) -> Result<EmdSolution> {
    let mut t = phase_one(prob, opts)?;
    let cap = opts.max_pivots.unwrap_or(10 * prob.u * prob.v).max(1);
    t.run(Phase::Two, cap)?;
    t.refactor();

    let pi = t.duals(Phase::Two);
    let mut flow = DMatrix::zeros(prob.u, prob.v);
    for (&j, &x) in t.basis.iter().zip(&t.xb) {
        if j < prob.cols() {
            flow[(j / prob.v, j % prob.v)] = x.max(0.0);
        }
    }
    let objective = (0..prob.cols()).map(|j| prob.c[j] * flow[(j / prob.v, j % prob.v)]).sum();
    Ok(EmdSolution {
        flow,
        objective,
        l: (0..prob.v).map(|v| pi[v]).collect(),
        h: (0..prob.u).map(|u| pi[prob.v + u]).collect(),
        const_c: pi[prob.u + prob.v],
        basis: t.basis,
        b_inv: t.b_inv,
        trace: t.trace.unwrap_or_default(),
    })
}

/// EMD value with its dual decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct EmdValue {
    pub value: f64,
    pub l: Vec<f64>,
    pub h: Vec<f64>,
    pub const_c: f64,
}

pub fn emd(p: &[f64], q: &[f64], d: &DMatrix<f64>) -> Result<EmdValue> {
    let prob = build_problem(p, q, d)?;
    let sol = simplex_solve(&prob)?;
    Ok(EmdValue { value: sol.objective, l: sol.l, h: sol.h, const_c: sol.const_c })
}
