//! Small dense linear algebra: LU with partial pivoting and stability checks.

use nalgebra::DMatrix;

/// Pivot magnitude, relative to the largest entry of the input, below which a
/// matrix is treated as rank deficient.
pub const RELATIVE_PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Singular {
    /// Elimination column where the pivot vanished.
    pub column: usize,
}

/// Solve `M X = RHS` by Doolittle LU with partial pivoting.
pub fn lu_solve(m: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>, Singular> {
    let n = m.nrows();
    assert_eq!(m.ncols(), n, "lu_solve needs a square matrix");
    assert_eq!(rhs.nrows(), n, "rhs row count must match");
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let mut a = m.clone();
    let mut b = rhs.clone();

    for k in 0..n {
        let (piv, piv_val) =
            (k..n)
                .map(|i| (i, a[(i, k)].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if piv_val < RELATIVE_PIVOT_TOL * scale {
            return Err(Singular { column: k });
        }
        if piv != k {
            a.swap_rows(piv, k);
            b.swap_rows(piv, k);
        }
        for i in (k + 1)..n {
            let f = a[(i, k)] / a[(k, k)];
            if f == 0.0 {
                continue;
            }
            a[(i, k)] = f;
            for j in (k + 1)..n {
                a[(i, j)] -= f * a[(k, j)];
            }
            for j in 0..b.ncols() {
                b[(i, j)] -= f * b[(k, j)];
            }
        }
    }

    // back substitution
    let mut x = DMatrix::zeros(n, b.ncols());
    for j in 0..b.ncols() {
        for i in (0..n).rev() {
            let mut s = b[(i, j)];
            for l in (i + 1)..n {
                s -= a[(i, l)] * x[(l, j)];
            }
            x[(i, j)] = s / a[(i, i)];
        }
    }
    Ok(x)
}

/// Largest real part over the eigenvalues of a square matrix.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn is_hurwitz(m: &DMatrix<f64>) -> bool {
    spectral_abscissa(m) < 0.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_a_permuted_system() {
        let m = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 0.0, 0.0]);
        let rhs = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 4.0]);
        let x = lu_solve(&m, &rhs).unwrap();
        assert_eq!(x.as_slice(), &[2.0, 1.0, 2.0]);
    }

    #[test]
    fn flags_rank_deficiency() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let rhs = DMatrix::identity(2, 2);
        assert_eq!(lu_solve(&m, &rhs), Err(Singular { column: 1 }));
    }

    #[test]
    fn residual_is_small_on_random_systems() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.random_range(1..7);
            let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let rhs = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
            if let Ok(x) = lu_solve(&m, &rhs) {
                let r = &m * &x - &rhs;
                assert!(r.amax() < 1e-8 * x.amax().max(1.0), "residual {}", r.amax());
            }
        }
    }

    #[test]
    fn hurwitz_check() {
        let stable = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -2.0]);
        let marginal = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let rotating = DMatrix::from_row_slice(2, 2, &[0.1, 1.0, -1.0, 0.1]);
        assert!(is_hurwitz(&stable));
        assert!(!is_hurwitz(&marginal));
        assert!(!is_hurwitz(&rotating));
    }
}
