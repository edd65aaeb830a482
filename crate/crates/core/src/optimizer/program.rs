//! A small description language for convex programs (linear objective,
//! affine, convex-quadratic, hyperbolic and geometric-mean constraints) and its translation
//! into the conic form expected by the interior-point backend.

use std::collections::BTreeMap;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use crate::{Error, Result};

/// Scaled constraint violations below this are accepted after a solve.
pub const FEAS_TOL: f64 = 1e-6;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Affine {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Affine {
    pub fn constant(c: f64) -> Self {
        Affine {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(i: usize) -> Self {
        Affine {
            terms: vec![(i, 1.0)],
            constant: 0.0,
        }
    }

    pub fn term(mut self, i: usize, a: f64) -> Self {
        self.push(i, a);
        self
    }

    pub fn push(&mut self, i: usize, a: f64) {
        if a != 0.0 {
            self.terms.push((i, a));
        }
    }

    pub fn plus(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, a)| a * x[i]).sum::<f64>()
    }

    fn merged(&self) -> BTreeMap<usize, f64> {
        let mut m = BTreeMap::new();
        for &(i, a) in &self.terms {
            *m.entry(i).or_insert(0.0) += a;
        }
        m
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Constraint {
    /// `a(x) ≤ 0`
    LessEq(Affine),
    /// `a(x) = 0`
    Equal(Affine),
    /// `Σ w_i g_i(x)² ≤ h(x)` with every `w_i ≥ 0`.
    Quadratic {
        squares: Vec<(f64, Affine)>,
        rhs: Affine,
    },
    /// `x·y ≥ 1` with `x, y ≥ 0`.
    Hyperbolic { x: usize, y: usize },
    /// `z² ≤ x·y` with `x, y ≥ 0`.
    GeoMean { z: Affine, x: Affine, y: Affine },
}

impl Constraint {
    /// Amount by which `x` violates the constraint (zero when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        match self {
            Constraint::LessEq(a) => a.eval(x).max(0.0),
            Constraint::Equal(a) => a.eval(x).abs(),
            Constraint::Quadratic { squares, rhs } => {
                let lhs: f64 = squares.iter().map(|(w, g)| w * g.eval(x).powi(2)).sum();
                (lhs - rhs.eval(x)).max(0.0)
            }
            Constraint::Hyperbolic { x: a, y: b } => {
                let (a, b) = (x[*a], x[*b]);
                (1.0 - a * b).max(-a).max(-b).max(0.0)
            }
            Constraint::GeoMean { z, x: a, y: b } => {
                let (z, a, b) = (z.eval(x), a.eval(x), b.eval(x));
                (z * z - a * b).max(-a).max(-b).max(0.0)
            }
        }
    }
}

impl Affine {
    /// `1 + |c| + Σ |a_i x_i|`, the magnitude a violation is measured against.
    fn magnitude(&self, x: &[f64]) -> f64 {
        1.0 + self.constant.abs() + self.terms.iter().map(|&(i, a)| (a * x[i]).abs()).sum::<f64>()
    }
}

impl Constraint {
    /// Violation relative to the size of the terms involved.
    pub fn scaled_violation(&self, x: &[f64]) -> f64 {
        let size = match self {
            Constraint::LessEq(a) | Constraint::Equal(a) => a.magnitude(x),
            Constraint::Quadratic { squares, rhs } => {
                rhs.magnitude(x) + squares.iter().map(|(w, g)| w * g.eval(x).powi(2)).sum::<f64>()
            }
            Constraint::Hyperbolic { .. } => 1.0,
            Constraint::GeoMean { z, x: a, y: b } => {
                1.0 + z.eval(x).powi(2) + (a.eval(x) * b.eval(x)).abs()
            }
        };
        self.violation(x) / size
    }
}

#[derive(Clone, Debug, Default)]
pub struct ConvexProgram {
    pub names: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Minimized; the constant term is carried into the reported objective.
    pub objective: Affine,
    pub constraints: Vec<Constraint>,
}

impl ConvexProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> usize {
        self.names.push(name.into());
        self.lower.push(lower);
        self.upper.push(upper);
        self.names.len() - 1
    }

    pub fn n_vars(&self) -> usize {
        self.names.len()
    }

    pub fn add(&mut self, c: Constraint) {
        self.constraints.push(c);
    }

    pub fn less_eq(&mut self, a: Affine) {
        self.add(Constraint::LessEq(a));
    }

    pub fn equal(&mut self, a: Affine) {
        self.add(Constraint::Equal(a));
    }

    /// Structural convexity: every quadratic term carries a non-negative
    /// weight and every hyperbolic pair is sign-restricted.
    pub fn is_convex(&self) -> bool {
        self.constraints.iter().all(|c| match c {
            Constraint::Quadratic { squares, .. } => squares.iter().all(|(w, _)| *w >= 0.0),
            Constraint::Hyperbolic { x, y } => self.lower[*x] >= 0.0 && self.lower[*y] >= 0.0,
            _ => true,
        })
    }

    pub fn max_scaled_violation(&self, x: &[f64]) -> f64 {
        let bounds = (0..self.n_vars())
            .map(|i| {
                let v = (self.lower[i] - x[i]).max(x[i] - self.upper[i]).max(0.0);
                v / (1.0 + x[i].abs())
            })
            .fold(0.0, f64::max);
        self.constraints
            .iter()
            .map(|c| c.scaled_violation(x))
            .fold(bounds, f64::max)
    }

    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let bounds = (0..self.n_vars())
            .map(|i| (self.lower[i] - x[i]).max(x[i] - self.upper[i]).max(0.0))
            .fold(0.0, f64::max);
        self.constraints
            .iter()
            .map(|c| c.violation(x))
            .fold(bounds, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
}

#[derive(Clone, Debug)]
pub struct ConvexSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: u32,
    pub max_violation: f64,
}

/// Sparse row builder for `A x + s = b`.
struct Rows {
    entries: BTreeMap<(usize, usize), f64>,
    b: Vec<f64>,
}

impl Rows {
    fn row(&mut self, coeffs: &BTreeMap<usize, f64>, scale: f64, b: f64) {
        let r = self.b.len();
        for (&j, &a) in coeffs {
            if a != 0.0 {
                *self.entries.entry((j, r)).or_insert(0.0) += a * scale;
            }
        }
        self.b.push(b);
    }
}

/// Solves a [`ConvexProgram`] with the Clarabel interior-point method.
pub fn solve_convex(p: &ConvexProgram) -> Result<ConvexSolution> {
    if !p.is_convex() {
        return Err(Error::Structural("program is not structurally convex".into()));
    }
    let n = p.n_vars();
    let mut rows = Rows {
        entries: BTreeMap::new(),
        b: Vec::new(),
    };
    let unit = |i: usize| BTreeMap::from([(i, 1.0)]);

    // Zero cone: equalities and fixed variables.
    for c in &p.constraints {
        if let Constraint::Equal(a) = c {
            rows.row(&a.merged(), 1.0, -a.constant);
        }
    }
    for i in 0..n {
        if p.lower[i] == p.upper[i] {
            rows.row(&unit(i), 1.0, p.lower[i]);
        }
    }
    let n_zero = rows.b.len();

    // Nonnegative cone: inequalities and bounds.
    for c in &p.constraints {
        if let Constraint::LessEq(a) = c {
            rows.row(&a.merged(), 1.0, -a.constant);
        }
    }
    for i in 0..n {
        if p.lower[i] == p.upper[i] {
            continue;
        }
        if p.lower[i].is_finite() {
            rows.row(&unit(i), -1.0, -p.lower[i]);
        }
        if p.upper[i].is_finite() {
            rows.row(&unit(i), 1.0, p.upper[i]);
        }
    }
    let n_nonneg = rows.b.len() - n_zero;

    // Second-order cones.
    let mut socs = Vec::new();
    for c in &p.constraints {
        match c {
            Constraint::Quadratic { squares, rhs } => {
                // ‖(h − 1, 2√w g)‖ ≤ h + 1  ⇔  Σ w g² ≤ h
                let h = rhs.merged();
                rows.row(&h, -1.0, rhs.constant + 1.0);
                rows.row(&h, -1.0, rhs.constant - 1.0);
                for (w, g) in squares {
                    let s = 2.0 * w.sqrt();
                    rows.row(&g.merged(), -s, s * g.constant);
                }
                socs.push(2 + squares.len());
            }
            Constraint::Hyperbolic { x, y } => {
                // ‖(2, x − y)‖ ≤ x + y  ⇔  x·y ≥ 1
                rows.row(&BTreeMap::from([(*x, 1.0), (*y, 1.0)]), -1.0, 0.0);
                rows.row(&BTreeMap::new(), 1.0, 2.0);
                rows.row(&BTreeMap::from([(*x, 1.0), (*y, -1.0)]), -1.0, 0.0);
                socs.push(3);
            }
            Constraint::GeoMean { z, x, y } => {
                // ‖(2z, x − y)‖ ≤ x + y  ⇔  z² ≤ x·y
                let mut plus = x.merged();
                let mut minus = plus.clone();
                for (j, a) in y.merged() {
                    *plus.entry(j).or_insert(0.0) += a;
                    *minus.entry(j).or_insert(0.0) -= a;
                }
                rows.row(&plus, -1.0, x.constant + y.constant);
                rows.row(&minus, -1.0, x.constant - y.constant);
                rows.row(&z.merged(), -2.0, 2.0 * z.constant);
                socs.push(3);
            }
            _ => {}
        }
    }

    let m = rows.b.len();
    let mut colptr = vec![0usize; n + 1];
    let mut rowval = Vec::with_capacity(rows.entries.len());
    let mut nzval = Vec::with_capacity(rows.entries.len());
    for (&(j, r), &v) in &rows.entries {
        colptr[j + 1] += 1;
        rowval.push(r);
        nzval.push(v);
    }
    for j in 0..n {
        colptr[j + 1] += colptr[j];
    }
    let a = CscMatrix::new(m, n, colptr, rowval, nzval);
    let pm = CscMatrix::zeros((n, n));
    let mut q = vec![0.0; n];
    for (j, v) in p.objective.merged() {
        q[j] = v;
    }
    let mut cones = Vec::new();
    if n_zero > 0 {
        cones.push(SupportedConeT::ZeroConeT(n_zero));
    }
    if n_nonneg > 0 {
        cones.push(SupportedConeT::NonnegativeConeT(n_nonneg));
    }
    for d in socs {
        cones.push(SupportedConeT::SecondOrderConeT(d));
    }

    // The default settings first; on a stall, retry without equilibration
    // and with heavier regularization.
    let mut last = None;
    for attempt in 0..3 {
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(300)
            .equilibrate_enable(attempt != 1)
            .static_regularization_constant(if attempt == 2 { 1e-6 } else { 1e-8 })
            .build()
            .map_err(|e| Error::Structural(format!("solver settings: {e}")))?;
        let mut solver = DefaultSolver::new(&pm, &q, &a, &rows.b, &cones, settings)
            .map_err(|e| Error::Structural(format!("solver setup: {e:?}")))?;
        solver.solve();
        let sol = solver.solution;
        let status = match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                SolveStatus::Infeasible
            }
            other => {
                // Iteration or progress limits: accept a point that checks out.
                let viol = p.max_scaled_violation(&sol.x);
                if viol > FEAS_TOL || !sol.x.iter().all(|v| v.is_finite()) {
                    last = Some(Error::Solver {
                        status: format!("{other:?}"),
                        primal_residual: sol.r_prim,
                        dual_residual: sol.r_dual,
                    });
                    continue;
                }
                SolveStatus::Optimal
            }
        };
        return Ok(finish(p, status, sol.x, sol.iterations));
    }
    Err(last.expect("at least one attempt"))
}

fn finish(p: &ConvexProgram, status: SolveStatus, x: Vec<f64>, iterations: u32) -> ConvexSolution {
    let max_violation = if status == SolveStatus::Optimal {
        p.max_violation(&x)
    } else {
        f64::INFINITY
    };
    ConvexSolution {
        status,
        objective: p.objective.eval(&x),
        iterations,
        max_violation,
        x,
    }
}
