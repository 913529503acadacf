//! Checks of a finished run against the archive invariants.

use boxfront_core::boxalgo::{Outcome, RepresentationArchive};
use boxfront_core::scalarization::Normalization;

use super::oracle::{llb_brute, lub_brute, sorted_set, strictly_dominates};

pub type Check = Result<(), String>;

fn normalized(a: &RepresentationArchive) -> (Normalization, Vec<Vec<f64>>) {
    let norm = Normalization::from_bounds(&a.lower0, &a.upper0);
    let ys = a.intermediate().map(|r| norm.normalize(&r.internal())).collect();
    (norm, ys)
}

/// No record strictly better than another in every criterion by more than `tol`.
pub fn nondominated(a: &RepresentationArchive, tol: f64) -> Check {
    let f: Vec<Vec<f64>> = a.records.iter().map(|r| r.internal()).collect();
    for (i, p) in f.iter().enumerate() {
        for (j, q) in f.iter().enumerate() {
            if i != j && strictly_dominates(p, q, tol) {
                return Err(format!("record {i} {p:?} dominates record {j} {q:?}"));
            }
        }
    }
    Ok(())
}

/// Every intermediate image strictly below its box's upper corner.
pub fn inside_origin(a: &RepresentationArchive) -> Check {
    let (_, ys) = normalized(a);
    for (r, y) in a.intermediate().zip(&ys) {
        let b = r.origin.as_ref().ok_or_else(|| format!("record {} has no box", r.index))?;
        if !y.iter().zip(&b.upper).all(|(v, u)| v < u) {
            return Err(format!("record {} at {y:?} not below {:?}", r.index, b.upper));
        }
    }
    Ok(())
}

/// Selected-box shortest edges never grow.
pub fn monotone_edges(a: &RepresentationArchive) -> Check {
    let e = a.min_edges();
    match e.windows(2).position(|w| w[1] > w[0]) {
        Some(i) => Err(format!("edge grows at attempt {}: {} -> {}", i + 1, e[i], e[i + 1])),
        None => Ok(()),
    }
}

/// Final bound sets equal the local bounds of the archived points.
pub fn bound_sets(a: &RepresentationArchive) -> Check {
    let (norm, ys) = normalized(a);
    let top = norm.normalize(&a.upper0);
    if sorted_set(&a.upper_bounds) != sorted_set(&lub_brute(&ys, &top)) {
        return Err(format!("upper bounds {:?} differ from oracle", a.upper_bounds));
    }
    let vertices: Vec<Vec<f64>> = a.intermediate().filter_map(|r| r.tchebycheff.as_ref().map(|t| t.vertex.clone())).collect();
    let bottom = vec![0.0; top.len()];
    if sorted_set(&a.lower_bounds) != sorted_set(&llb_brute(&vertices, &bottom)) {
        return Err(format!("lower bounds {:?} differ from oracle", a.lower_bounds));
    }
    Ok(())
}

/// A discarded box is never selected again.
pub fn discards_stay_discarded(a: &RepresentationArchive) -> Check {
    for (i, s) in a.trace.iter().enumerate() {
        if matches!(s.outcome, Outcome::Discarded { .. }) {
            if let Some(later) = a.trace[i + 1..].iter().find(|t| t.region == s.region) {
                return Err(format!("box discarded at attempt {} selected again at {}", s.iteration, later.iteration));
            }
        }
    }
    Ok(())
}

pub fn all(a: &RepresentationArchive) -> Check {
    nondominated(a, 1e-9)?;
    inside_origin(a)?;
    monotone_edges(a)?;
    bound_sets(a)?;
    discards_stay_discarded(a)
}
