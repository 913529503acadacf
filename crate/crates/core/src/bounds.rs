//! Local upper and lower bound updates.
//!
//! A set of local upper bounds `U` describes the part of a box not yet
//! dominated by known points: it is the union of the open cones `{y < u}`.
//! Lower bounds are the mirror image.

/// `a <= b` componentwise.
pub fn weakly_below(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y)
}

/// `a < b` in every component.
pub fn strictly_below(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x < y)
}

/// Inserts point `z` into the upper bound set `u`.
///
/// Every bound strictly above `z` is replaced by its children, child `i`
/// taking `z_i` in coordinate `i`. A child is dropped when another member of
/// the updated set is componentwise at least as large. Unaffected bounds keep
/// their order and come first.
pub fn new_upper_bounds(u: &[Vec<f64>], z: &[f64]) -> Vec<Vec<f64>> {
    let (affected, mut out): (Vec<&Vec<f64>>, Vec<&Vec<f64>>) = u.iter().partition(|b| strictly_below(z, b));
    if affected.is_empty() {
        return u.to_vec();
    }
    let mut children = Vec::new();
    for b in affected {
        for i in 0..z.len() {
            let mut c = b.clone();
            c[i] = z[i];
            children.push(c);
        }
    }
    let kept = out.len();
    let mut result: Vec<Vec<f64>> = out.drain(..).cloned().collect();
    for (j, c) in children.iter().enumerate() {
        let redundant = result[..kept].iter().any(|v| weakly_below(c, v))
            || children.iter().enumerate().any(|(k, v)| {
                k != j && weakly_below(c, v) && (c != v || k < j)
            });
        if !redundant {
            result.push(c.clone());
        }
    }
    result
}

/// Mirror image of [`new_upper_bounds`]: bounds strictly below `s` are split
/// with `s_i` in coordinate `i`.
pub fn new_lower_bounds(l: &[Vec<f64>], s: &[f64]) -> Vec<Vec<f64>> {
    let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<f64>>();
    let flipped: Vec<Vec<f64>> = l.iter().map(|b| neg(b)).collect();
    new_upper_bounds(&flipped, &neg(s)).iter().map(|b| neg(b)).collect()
}
