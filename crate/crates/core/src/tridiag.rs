//! Thomas algorithm for symmetric tridiagonal systems.

/// Solves `A x = rhs` where `A` has diagonal `diag` and symmetric off-diagonal `off`
/// (`off[j]` couples unknowns j and j+1). Returns `None` if a pivot vanishes.
pub(crate) fn solve_symmetric(diag: &[f64], off: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    debug_assert_eq!(rhs.len(), n);
    debug_assert_eq!(off.len(), n.saturating_sub(1));
    if n == 0 {
        return Some(Vec::new());
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut pivot = diag[0];
    if pivot == 0.0 || !pivot.is_finite() {
        return None;
    }
    if n > 1 {
        c[0] = off[0] / pivot;
    }
    d[0] = rhs[0] / pivot;
    for j in 1..n {
        pivot = diag[j] - off[j - 1] * c[j - 1];
        if pivot == 0.0 || !pivot.is_finite() {
            return None;
        }
        if j + 1 < n {
            c[j] = off[j] / pivot;
        }
        d[j] = (rhs[j] - off[j - 1] * d[j - 1]) / pivot;
    }
    for j in (0..n - 1).rev() {
        d[j] -= c[j] * d[j + 1];
    }
    Some(d)
}

/// y = A x for the symmetric tridiagonal matrix described by `diag` and `off`.
pub(crate) fn apply_symmetric(diag: &[f64], off: &[f64], x: &[f64]) -> Vec<f64> {
    let n = diag.len();
    (0..n)
        .map(|j| {
            let mut y = diag[j] * x[j];
            if j > 0 {
                y += off[j - 1] * x[j - 1];
            }
            if j + 1 < n {
                y += off[j] * x[j + 1];
            }
            y
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn solves_random_dominant_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1, 2, 5, 40] {
            let off: Vec<f64> = (0..n - 1).map(|_| rng.random_range(-1.0..1.0)).collect();
            let diag: Vec<f64> = (0..n).map(|_| rng.random_range(2.5..4.0)).collect();
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b = apply_symmetric(&diag, &off, &x);
            let y = solve_symmetric(&diag, &off, &b).unwrap();
            for (a, b) in x.iter().zip(&y) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_pivot_is_reported() {
        assert!(solve_symmetric(&[0.0, 1.0], &[1.0], &[1.0, 1.0]).is_none());
    }
}
