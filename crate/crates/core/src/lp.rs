//! Dense two-phase simplex for the small linear programs that appear in the
//! market model: support functions of martingale polytopes, arbitrage and
//! strict-positivity certificates, and the agreeability minimax.
//!
//! Problems are tiny (tens of variables) so the full tableau is kept and
//! Bland's rule is used for both the entering and the leaving variable,
//! which rules out cycling on degenerate vertices.

const PIVOT_TOL: f64 = 1e-12;
const COST_TOL: f64 = 1e-11;
/// Phase-one objective above this is reported as infeasible.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `optimize c.x subject to rows, x_j >= 0 unless free[j]`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub free: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible { phase_one_residual: f64 },
    Unbounded,
}

impl LpOutcome {
    pub fn optimal(self) -> Option<(Vec<f64>, f64)> {
        match self {
            LpOutcome::Optimal { x, value } => Some((x, value)),
            _ => None,
        }
    }
}

impl LinearProgram {
    pub fn new(sense: Sense, objective: Vec<f64>) -> Self {
        let n = objective.len();
        LinearProgram {
            sense,
            objective,
            constraints: Vec::new(),
            free: vec![false; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn set_free(&mut self, j: usize) -> &mut Self {
        self.free[j] = true;
        self
    }

    pub fn add(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> &mut Self {
        assert_eq!(coeffs.len(), self.num_vars(), "constraint width");
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
        self
    }

    pub fn solve(&self) -> LpOutcome {
        Tableau::build(self).run(self)
    }
}

/// Column layout: structural (free vars split in two), then slack/surplus,
/// then artificials.
struct Tableau {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    n_struct: usize,
    n_cols: usize,
    first_artificial: usize,
    /// structural column -> (original var, sign)
    col_map: Vec<(usize, f64)>,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let mut col_map = Vec::new();
        for j in 0..lp.num_vars() {
            col_map.push((j, 1.0));
            if lp.free[j] {
                col_map.push((j, -1.0));
            }
        }
        let n_struct = col_map.len();
        let m = lp.constraints.len();

        let mut n_slack = 0;
        let mut n_art = 0;
        let mut normalized = Vec::with_capacity(m);
        for c in &lp.constraints {
            let flip = c.rhs < 0.0;
            let rel = match (c.relation, flip) {
                (Relation::Le, true) => Relation::Ge,
                (Relation::Ge, true) => Relation::Le,
                (r, _) => r,
            };
            match rel {
                Relation::Le => n_slack += 1,
                Relation::Ge => {
                    n_slack += 1;
                    n_art += 1
                }
                Relation::Eq => n_art += 1,
            }
            normalized.push((flip, rel));
        }

        let first_slack = n_struct;
        let first_artificial = n_struct + n_slack;
        let n_cols = first_artificial + n_art;
        let mut rows = vec![vec![0.0; n_cols]; m];
        let mut rhs = vec![0.0; m];
        let mut basis = vec![0; m];
        let (mut s, mut a) = (first_slack, first_artificial);
        for (i, (c, &(flip, rel))) in lp.constraints.iter().zip(&normalized).enumerate() {
            let sign = if flip { -1.0 } else { 1.0 };
            for (col, &(j, sj)) in col_map.iter().enumerate() {
                rows[i][col] = sign * sj * c.coeffs[j];
            }
            rhs[i] = sign * c.rhs;
            match rel {
                Relation::Le => {
                    rows[i][s] = 1.0;
                    basis[i] = s;
                    s += 1;
                }
                Relation::Ge => {
                    rows[i][s] = -1.0;
                    s += 1;
                    rows[i][a] = 1.0;
                    basis[i] = a;
                    a += 1;
                }
                Relation::Eq => {
                    rows[i][a] = 1.0;
                    basis[i] = a;
                    a += 1;
                }
            }
        }
        Tableau {
            rows,
            rhs,
            basis,
            n_struct,
            n_cols,
            first_artificial,
            col_map,
        }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let piv = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= piv;
        }
        self.rhs[r] /= piv;
        let pivot_row = self.rows[r].clone();
        let pivot_rhs = self.rhs[r];
        for i in 0..self.rows.len() {
            if i == r {
                continue;
            }
            let f = self.rows[i][c];
            if f != 0.0 {
                for (v, p) in self.rows[i].iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
                self.rhs[i] -= f * pivot_rhs;
                self.rows[i][c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Minimizes `cost . x` over the columns `< active_cols`. Returns false
    /// when the objective is unbounded below.
    fn optimize(&mut self, cost: &[f64], active_cols: usize) -> bool {
        let max_iter = 50 * (self.n_cols + self.rows.len() + 10);
        for _ in 0..max_iter {
            // Bland: lowest-index column with negative reduced cost.
            let entering = (0..active_cols).find(|&j| {
                if self.basis.contains(&j) {
                    return false;
                }
                let reduced: f64 = cost[j]
                    - self
                        .basis
                        .iter()
                        .zip(&self.rows)
                        .map(|(&b, row)| cost[b] * row[j])
                        .sum::<f64>();
                reduced < -COST_TOL
            });
            let Some(c) = entering else {
                return true;
            };
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if row[c] > PIVOT_TOL {
                    let ratio = self.rhs[i] / row[c];
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-14
                                || (ratio <= lr + 1e-14 && self.basis[i] < self.basis[li])
                            {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            match leave {
                None => return false,
                Some((r, _)) => self.pivot(r, c),
            }
        }
        // Bland's rule terminates; reaching this means numerical trouble.
        true
    }

    fn run(mut self, lp: &LinearProgram) -> LpOutcome {
        if self.first_artificial < self.n_cols {
            let mut cost = vec![0.0; self.n_cols];
            for c in cost.iter_mut().skip(self.first_artificial) {
                *c = 1.0;
            }
            self.optimize(&cost, self.n_cols);
            let residual: f64 = self
                .basis
                .iter()
                .zip(&self.rhs)
                .filter(|(&b, _)| b >= self.first_artificial)
                .map(|(_, &v)| v)
                .sum();
            if residual > FEASIBILITY_TOL {
                return LpOutcome::Infeasible {
                    phase_one_residual: residual,
                };
            }
            // Drive remaining (zero-level) artificials out of the basis.
            let mut i = 0;
            while i < self.rows.len() {
                if self.basis[i] >= self.first_artificial {
                    let col = (0..self.first_artificial)
                        .find(|&j| self.rows[i][j].abs() > 1e-9 && !self.basis.contains(&j));
                    match col {
                        Some(c) => self.pivot(i, c),
                        None => {
                            // redundant equality row
                            self.rows.remove(i);
                            self.rhs.remove(i);
                            self.basis.remove(i);
                            continue;
                        }
                    }
                }
                i += 1;
            }
        }

        let sign = match lp.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let mut cost = vec![0.0; self.n_cols];
        for (col, &(j, sj)) in self.col_map.iter().enumerate() {
            cost[col] = sign * sj * lp.objective[j];
        }
        if !self.optimize(&cost, self.first_artificial) {
            return LpOutcome::Unbounded;
        }
        let mut x = vec![0.0; lp.num_vars()];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < self.n_struct {
                let (j, sj) = self.col_map[b];
                x[j] += sj * self.rhs[i];
            }
        }
        let value = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        LpOutcome::Optimal { x, value }
    }
}
