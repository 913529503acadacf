//! Brute-force and closed-form reference implementations, kept independent of
//! the library code they check.

use std::collections::BTreeSet;

/// Totally ordered key for sets of float vectors.
pub fn key(v: &[f64]) -> Vec<u64> {
    v.iter()
        .map(|x| {
            let b = if *x == 0.0 { 0.0f64.to_bits() } else { x.to_bits() };
            // order-preserving map of IEEE bits
            if b >> 63 == 1 { !b } else { b | (1 << 63) }
        })
        .collect()
}

pub fn sorted_set(vs: &[Vec<f64>]) -> BTreeSet<Vec<u64>> {
    vs.iter().map(|v| key(v)).collect()
}

fn grid(points: &[Vec<f64>], corner: &[f64], i: usize) -> Vec<f64> {
    let mut g: Vec<f64> = points.iter().map(|p| p[i]).chain(std::iter::once(corner[i])).collect();
    g.sort_by(|a, b| a.partial_cmp(b).unwrap());
    g.dedup();
    g
}

fn for_each_cell(axes: &[Vec<f64>], mut f: impl FnMut(&[f64])) {
    let m = axes.len();
    let mut idx = vec![0usize; m];
    let mut cell = vec![0.0; m];
    loop {
        for k in 0..m {
            cell[k] = axes[k][idx[k]];
        }
        f(&cell);
        let mut k = 0;
        loop {
            if k == m {
                return;
            }
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Local upper bounds by definition: the maximal `u <= top` such that no
/// point lies strictly below `u` in every coordinate.
pub fn lub_brute(points: &[Vec<f64>], top: &[f64]) -> Vec<Vec<f64>> {
    let m = top.len();
    let axes: Vec<Vec<f64>> = (0..m).map(|i| grid(points, top, i).into_iter().filter(|g| *g <= top[i]).collect()).collect();
    let valid = |u: &[f64]| !points.iter().any(|z| z.iter().zip(u).all(|(a, b)| a < b));
    let mut out = Vec::new();
    for_each_cell(&axes, |u| {
        if !valid(u) {
            return;
        }
        let maximal = (0..m).all(|i| {
            let next = axes[i].iter().find(|g| **g > u[i]);
            match next {
                None => true,
                Some(g) => {
                    let mut v = u.to_vec();
                    v[i] = *g;
                    !valid(&v)
                }
            }
        });
        if maximal {
            out.push(u.to_vec());
        }
    });
    out
}

/// Local lower bounds by definition: the minimal `l >= bottom` such that no
/// point lies strictly above `l` in every coordinate.
pub fn llb_brute(points: &[Vec<f64>], bottom: &[f64]) -> Vec<Vec<f64>> {
    let m = bottom.len();
    let axes: Vec<Vec<f64>> =
        (0..m).map(|i| grid(points, bottom, i).into_iter().filter(|g| *g >= bottom[i]).collect()).collect();
    let valid = |l: &[f64]| !points.iter().any(|s| s.iter().zip(l).all(|(a, b)| a > b));
    let mut out = Vec::new();
    for_each_cell(&axes, |l| {
        if !valid(l) {
            return;
        }
        let minimal = (0..m).all(|i| {
            let prev = axes[i].iter().rev().find(|g| **g < l[i]);
            match prev {
                None => true,
                Some(g) => {
                    let mut v = l.to_vec();
                    v[i] = *g;
                    !valid(&v)
                }
            }
        });
        if minimal {
            out.push(l.to_vec());
        }
    });
    out
}

/// `a` better than `b` by more than `tol` in every coordinate (minimize sense).
pub fn strictly_dominates(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| *x < *y - tol)
}

/// Market correlation scenarios, written out entry by entry.
pub const P0: [[f64; 5]; 5] = [
    [1.0, 0.0, 0.0, 0.0, 0.25],
    [0.0, 1.0, 0.75, 0.75, 0.25],
    [0.0, 0.75, 1.0, 0.5, 0.25],
    [0.0, 0.75, 0.5, 1.0, 0.25],
    [0.25, 0.25, 0.25, 0.25, 1.0],
];
pub const PH: [[f64; 5]; 5] = [
    [1.0, 0.5, 0.5, 0.5, 0.25],
    [0.5, 1.0, 0.75, 0.75, 0.25],
    [0.5, 0.75, 1.0, 0.5, 0.25],
    [0.5, 0.75, 0.5, 1.0, 0.25],
    [0.25, 0.25, 0.25, 0.25, 1.0],
];

pub struct Chain {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: [f64; 5],
}

impl Chain {
    pub fn solvency(&self, w: &[f64]) -> f64 {
        let x: Vec<f64> = self.a.iter().zip(&self.b).map(|(row, off)| off + row.iter().zip(w).map(|(p, q)| p * q).sum::<f64>()).collect();
        let eq = (x[2] + x[3]).powi(2) - 0.5 * x[2] * x[3];
        let y = [x[0].max(x[1]), eq.max(0.0).sqrt(), x[4], x[5], x[6].max(x[7])];
        let qf = |p: &[[f64; 5]; 5]| -> f64 {
            let mut s = 0.0;
            for i in 0..5 {
                let mut r = 0.0;
                for j in 0..5 {
                    r += p[i][j] * y[j];
                }
                s += y[i] * r;
            }
            s
        };
        let [c1, c2, c3, c4, c5] = self.c;
        let mr = (qf(&P0).max(qf(&PH)) + c1 * c1).max(0.0).sqrt();
        c2 * (mr * mr + c3 * mr + c4).max(0.0).sqrt() + c5
    }
}

pub fn volatility(w: &[f64], sigma: &[f64], rho: &[Vec<f64>]) -> f64 {
    let n = w.len();
    let mut v = 0.0;
    for i in 0..n {
        for j in 0..n {
            v += w[i] * sigma[i] * rho[i][j] * sigma[j] * w[j];
        }
    }
    v.max(0.0).sqrt()
}

/// Every point of the simplex with coordinates in multiples of `1/steps`.
pub fn simplex_grid(n: usize, steps: usize) -> Vec<Vec<f64>> {
    fn rec(n: usize, left: usize, steps: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if cur.len() == n - 1 {
            cur.push(left);
            out.push(cur.iter().map(|k| *k as f64 / steps as f64).collect());
            cur.pop();
            return;
        }
        for k in 0..=left {
            cur.push(k);
            rec(n, left - k, steps, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, steps, steps, &mut Vec::new(), &mut out);
    out
}
