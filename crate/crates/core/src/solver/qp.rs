//! Dense strictly convex quadratic programs,
//!
//! ```text
//! min 1/2 x'Gx + c'x   s.t.  a_i'x = b_i (equalities),  a_j'x >= b_j
//! ```
//!
//! solved with the Goldfarb-Idnani dual active-set method. `G` must be
//! positive definite. The factorization is kept as `J = L^-T` (with `G = LL'`)
//! and an upper triangular `R`; constraints enter and leave through Givens
//! rotations.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("quadratic term is not positive definite")]
    NotPositiveDefinite,
    #[error("constraints are inconsistent")]
    Infeasible,
    #[error("active-set iteration limit reached")]
    IterationLimit,
}

/// `a . x (= or >=) b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub a: Vec<f64>,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// Multipliers with `Gx + c = sum lambda_i a_i`.
    pub lambda_eq: Vec<f64>,
    /// Nonnegative multipliers of the inequality rows.
    pub lambda_ge: Vec<f64>,
    pub iterations: usize,
}

const DEPENDENCE: f64 = 1e-14;

fn givens(a: f64, b: f64) -> (f64, f64, f64) {
    let h = a.hypot(b);
    if h == 0.0 {
        (1.0, 0.0, 0.0)
    } else {
        (a / h, b / h, h)
    }
}

struct ActiveSet {
    n: usize,
    j: DMatrix<f64>,
    r: DMatrix<f64>,
    q: usize,
    /// constraint index and multiplier, in insertion order
    members: Vec<usize>,
    u: Vec<f64>,
}

impl ActiveSet {
    fn rotate_j(&mut self, k1: usize, k2: usize, c: f64, s: f64) {
        for i in 0..self.n {
            let a = self.j[(i, k1)];
            let b = self.j[(i, k2)];
            self.j[(i, k1)] = c * a + s * b;
            self.j[(i, k2)] = -s * a + c * b;
        }
    }

    /// Appends a constraint whose transformed normal is `d = J'n`.
    fn add(&mut self, mut d: Vec<f64>, index: usize, multiplier: f64) {
        let q = self.q;
        for k in (q + 1..self.n).rev() {
            let (c, s, h) = givens(d[k - 1], d[k]);
            if s == 0.0 {
                continue;
            }
            d[k - 1] = h;
            d[k] = 0.0;
            self.rotate_j(k - 1, k, c, s);
        }
        for i in 0..=q {
            self.r[(i, q)] = d[i];
        }
        self.q += 1;
        self.members.push(index);
        self.u.push(multiplier);
    }

    /// Removes the constraint at active position `l`.
    fn drop(&mut self, l: usize) {
        let q = self.q;
        for col in l..q - 1 {
            for i in 0..q {
                self.r[(i, col)] = self.r[(i, col + 1)];
            }
        }
        for i in 0..q {
            self.r[(i, q - 1)] = 0.0;
        }
        for jj in l..q - 1 {
            let (c, s, h) = givens(self.r[(jj, jj)], self.r[(jj + 1, jj)]);
            if s == 0.0 {
                continue;
            }
            self.r[(jj, jj)] = h;
            self.r[(jj + 1, jj)] = 0.0;
            for k in jj + 1..q - 1 {
                let a = self.r[(jj, k)];
                let b = self.r[(jj + 1, k)];
                self.r[(jj, k)] = c * a + s * b;
                self.r[(jj + 1, k)] = -s * a + c * b;
            }
            self.rotate_j(jj, jj + 1, c, s);
        }
        self.q -= 1;
        self.members.remove(l);
        self.u.remove(l);
    }

    fn transformed(&self, normal: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|k| (0..self.n).map(|i| self.j[(i, k)] * normal[i]).sum())
            .collect()
    }

    /// Solves `R r = d[..q]`.
    fn dual_direction(&self, d: &[f64]) -> Vec<f64> {
        let q = self.q;
        let mut r = vec![0.0; q];
        for i in (0..q).rev() {
            let mut acc = d[i];
            for k in i + 1..q {
                acc -= self.r[(i, k)] * r[k];
            }
            r[i] = acc / self.r[(i, i)];
        }
        r
    }
}

/// Solves the QP. `g` is row-major `n x n`.
pub fn solve_qp(n: usize, g: &[f64], c: &[f64], eq: &[Row], ge: &[Row]) -> Result<QpSolution, QpError> {
    let gm = DMatrix::from_row_slice(n, n, g);
    let chol = gm.cholesky().ok_or(QpError::NotPositiveDefinite)?;
    let linv = chol
        .l()
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or(QpError::NotPositiveDefinite)?;
    let j = linv.transpose();
    let cv = DVector::from_column_slice(c);
    let mut x: Vec<f64> = (-(&j * (j.tr_mul(&cv)))).iter().copied().collect();

    // normalized rows; equalities first
    let meq = eq.len();
    let mut normals = Vec::with_capacity(meq + ge.len());
    let mut rhs = Vec::with_capacity(meq + ge.len());
    let mut norms = Vec::with_capacity(meq + ge.len());
    for row in eq.iter().chain(ge) {
        let nrm = row.a.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nrm == 0.0 {
            let consistent = if norms.len() < meq { row.b == 0.0 } else { row.b <= 0.0 };
            if !consistent {
                return Err(QpError::Infeasible);
            }
            normals.push(row.a.clone());
            rhs.push(0.0);
            norms.push(0.0);
            continue;
        }
        normals.push(row.a.iter().map(|v| v / nrm).collect::<Vec<_>>());
        rhs.push(row.b / nrm);
        norms.push(nrm);
    }
    let m = normals.len();
    let mut sign = vec![1.0; m];
    let mut handled = vec![false; m];
    for (k, nrm) in norms.iter().enumerate() {
        if *nrm == 0.0 {
            handled[k] = true;
        }
    }

    let mut set = ActiveSet {
        n,
        j,
        r: DMatrix::zeros(n, n),
        q: 0,
        members: Vec::new(),
        u: Vec::new(),
    };
    let limit = 50 * (n + m) + 100;
    let mut iterations = 0;
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };

    loop {
        // next constraint to enforce
        let mut pick = None;
        if let Some(k) = (0..meq).find(|&k| !handled[k]) {
            pick = Some(k);
        } else {
            let mut worst = 0.0;
            for k in meq..m {
                if norms[k] == 0.0 || set.members.contains(&k) {
                    continue;
                }
                let s = dot(&normals[k], &x) - rhs[k];
                let tol = 1e-12 * (1.0 + rhs[k].abs());
                if s < -tol && s < worst {
                    worst = s;
                    pick = Some(k);
                }
            }
        }
        let Some(p) = pick else { break };
        let is_eq = p < meq;
        if is_eq {
            let s = dot(&normals[p], &x) - rhs[p];
            sign[p] = if s > 0.0 { -1.0 } else { 1.0 };
        }
        let np: Vec<f64> = normals[p].iter().map(|v| sign[p] * v).collect();
        let bp = sign[p] * rhs[p];
        let mut up = 0.0;

        loop {
            iterations += 1;
            if iterations > limit {
                return Err(QpError::IterationLimit);
            }
            let s = dot(&np, &x) - bp;
            let d = set.transformed(&np);
            let q = set.q;
            let r = set.dual_direction(&d);
            let dn2: f64 = d.iter().map(|v| v * v).sum();
            let dz2: f64 = d[q..].iter().map(|v| v * v).sum();

            let mut t1 = f64::INFINITY;
            let mut leave = None;
            for (jj, rj) in r.iter().enumerate() {
                if set.members[jj] >= meq && *rj > 0.0 {
                    let ratio = set.u[jj] / rj;
                    if ratio < t1 {
                        t1 = ratio;
                        leave = Some(jj);
                    }
                }
            }
            let dependent = dz2 <= DEPENDENCE * dn2.max(f64::MIN_POSITIVE);
            let t2 = if dependent { f64::INFINITY } else { (-s).max(0.0) / dz2 };

            if t1.is_infinite() && t2.is_infinite() {
                if is_eq && s.abs() <= 1e-12 * (1.0 + bp.abs()) {
                    // implied by the active set
                    handled[p] = true;
                    break;
                }
                return Err(QpError::Infeasible);
            }
            if t2.is_infinite() {
                let t = t1;
                for (uj, rj) in set.u.iter_mut().zip(&r) {
                    *uj -= t * rj;
                }
                up += t;
                set.drop(leave.unwrap());
                continue;
            }
            let t = t1.min(t2);
            for i in 0..n {
                let zi: f64 = (q..n).map(|k| d[k] * set.j[(i, k)]).sum();
                x[i] += t * zi;
            }
            for (uj, rj) in set.u.iter_mut().zip(&r) {
                *uj -= t * rj;
            }
            up += t;
            if t2 <= t1 {
                set.add(d, p, up);
                handled[p] = true;
                break;
            }
            set.drop(leave.unwrap());
        }
    }

    let mut lambda_eq = vec![0.0; meq];
    let mut lambda_ge = vec![0.0; m - meq];
    for (k, u) in set.members.iter().zip(&set.u) {
        let value = sign[*k] * u / norms[*k];
        if *k < meq {
            lambda_eq[*k] = value;
        } else {
            lambda_ge[*k - meq] = value.max(0.0);
        }
    }
    Ok(QpSolution { x, lambda_eq, lambda_ge, iterations })
}
