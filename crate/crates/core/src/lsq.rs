//! Complex least squares on tall systems via orthogonal factorizations.
//!
//! Normal equations square the condition number, which matters once the
//! polynomial regressors mix `x` with `|x|^6 x`; everything here goes
//! through a column-pivoted QR, with an SVD minimum-norm fallback when the
//! regressor is rank deficient.

use nalgebra::{ColPivQR, DMatrix, DVector, SVD};
use num_complex::Complex64;

/// Relative threshold on R's diagonal (and singular values) below which a
/// direction counts as numerically dependent.
pub(crate) const RANK_TOL: f64 = 1e-10;

pub(crate) struct LsqSolution {
    pub coefficients: Vec<Complex64>,
    pub rank: usize,
    /// Original column indices judged linearly dependent on the others;
    /// empty at full rank.
    pub degenerate_columns: Vec<usize>,
}

/// Solves `min ||A x - b||` for a tall complex system.
///
/// Columns are equilibrated to unit norm before factorization so that rank
/// decisions are about direction, not magnitude. At full rank the solution
/// comes from the pivoted QR factors; otherwise from a truncated SVD, which
/// picks the minimum-norm solution in the equilibrated coordinates.
pub(crate) fn solve_least_squares(a: &DMatrix<Complex64>, b: &DVector<Complex64>) -> LsqSolution {
    let cols = a.ncols();
    assert!(a.nrows() >= cols, "system must be square or tall");
    assert_eq!(a.nrows(), b.nrows());

    // Equilibrate. An exactly-zero column can never contribute; give it
    // scale 1 so the arithmetic stays finite and let pivoting discard it.
    let mut scales = Vec::with_capacity(cols);
    let mut scaled = a.clone();
    for j in 0..cols {
        let norm = scaled.column(j).norm();
        let s = if norm > 0.0 { norm } else { 1.0 };
        scales.push(s);
        let inv = Complex64::new(1.0 / s, 0.0);
        scaled.column_mut(j).scale_mut(inv.re);
    }

    let qr = ColPivQR::new(scaled.clone());
    let r = qr.r();
    let lead = r[(0, 0)].norm();
    let rank = if lead == 0.0 {
        0
    } else {
        (0..cols).take_while(|&i| r[(i, i)].norm() >= RANK_TOL * lead).count()
    };

    // Recover the pivot order by permuting a label row the same way the
    // factorization permuted the columns.
    let mut labels = DMatrix::<Complex64>::from_fn(1, cols, |_, j| Complex64::new(j as f64, 0.0));
    qr.p().permute_columns(&mut labels);
    let pivot_order: Vec<usize> = (0..cols).map(|t| labels[(0, t)].re as usize).collect();
    let mut degenerate_columns: Vec<usize> = pivot_order[rank..].to_vec();
    degenerate_columns.sort_unstable();

    let solution_scaled = if rank == cols {
        // A P = Q R  =>  x = P (R^{-1} Q^H b)
        let qtb = qr.q().ad_mul(&DMatrix::from_column_slice(b.nrows(), 1, b.as_slice()));
        let mut z = r
            .solve_upper_triangular(&qtb)
            .expect("full-rank triangular solve cannot fail");
        qr.p().inv_permute_rows(&mut z);
        DVector::from_column_slice(z.as_slice())
    } else {
        let svd = SVD::new(scaled, true, true);
        let cutoff = RANK_TOL * svd.singular_values.max();
        svd.solve(b, cutoff)
            .expect("svd solve with both factors requested")
    };

    let coefficients = (0..cols)
        .map(|j| solution_scaled[j] / scales[j])
        .collect();

    LsqSolution {
        coefficients,
        rank,
        degenerate_columns,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Deterministic full-rank system whose pivot order is a genuine
    /// 3-cycle (columns have strongly different norms), catching any
    /// permutation-direction mistake that an involutory swap would hide.
    #[test]
    fn recovers_known_solution_through_nontrivial_pivoting() {
        let m = 40;
        let a = DMatrix::<Complex64>::from_fn(m, 3, |i, j| {
            let t = i as f64 * 0.17;
            match j {
                0 => c(t.sin() * 1e-3, t.cos() * 1e-3),
                1 => c((2.0 * t).cos() * 1e2, (1.3 * t).sin() * 1e2),
                2 => c((1.1 * t).cos(), -(0.7 * t).sin()),
                _ => unreachable!(),
            }
        });
        let x_true = DVector::from_vec(vec![c(3.0, -1.0), c(-0.5, 0.25), c(2.0, 2.0)]);
        let b = &a * &x_true;
        let out = solve_least_squares(&a, &b);
        assert_eq!(out.rank, 3);
        assert!(out.degenerate_columns.is_empty());
        for (got, want) in out.coefficients.iter().zip(x_true.iter()) {
            assert!(
                (got - want).norm() < 1e-8,
                "coefficient mismatch: {got} vs {want}"
            );
        }
    }

    #[test]
    fn residual_is_orthogonal_to_columns() {
        let m = 60;
        let a = DMatrix::<Complex64>::from_fn(m, 4, |i, j| {
            let t = i as f64;
            c(
                ((j + 1) as f64 * 0.3 * t).sin(),
                ((j as f64 + 0.5) * 0.21 * t).cos(),
            )
        });
        // Unfittable target: add a component none of the columns span.
        let b = DVector::from_fn(m, |i, _| c((i as f64 * 0.77).tan().clamp(-2.0, 2.0), 0.3));
        let out = solve_least_squares(&a, &b);
        let x = DVector::from_vec(out.coefficients.clone());
        let resid = &b - &a * &x;
        let rnorm = resid.norm();
        assert!(rnorm > 1e-6, "target should not be exactly fittable");
        for j in 0..4 {
            let col = a.column(j);
            let inner: Complex64 = col.iter().zip(resid.iter()).map(|(c, r)| c.conj() * r).sum();
            let rel = inner.norm() / (col.norm() * rnorm);
            assert!(rel < 1e-10, "column {j} correlation {rel}");
        }
    }

    #[test]
    fn duplicate_column_reported_and_spread_minimum_norm() {
        let m = 30;
        let base = DMatrix::<Complex64>::from_fn(m, 2, |i, j| {
            let t = i as f64 * 0.29;
            if j == 0 {
                c(t.sin(), t.cos())
            } else {
                c((1.7 * t).cos(), (0.9 * t).sin())
            }
        });
        // columns: [b0, b1, b0] -> rank 2, one of {0, 2} degenerate
        let mut a = DMatrix::<Complex64>::zeros(m, 3);
        a.set_column(0, &base.column(0));
        a.set_column(1, &base.column(1));
        a.set_column(2, &base.column(0));
        let b: DVector<Complex64> =
            DVector::from_fn(m, |i, _| a[(i, 0)] * c(2.0, 0.0) + a[(i, 1)] * c(0.0, 1.0));
        let out = solve_least_squares(&a, &b);
        assert_eq!(out.rank, 2);
        assert_eq!(out.degenerate_columns.len(), 1);
        assert!(
            out.degenerate_columns[0] == 0 || out.degenerate_columns[0] == 2,
            "unexpected degenerate column {:?}",
            out.degenerate_columns
        );
        // Residual still minimal (zero here), coefficient mass split across
        // the duplicates by the minimum-norm tie-break.
        let x = DVector::from_vec(out.coefficients.clone());
        assert!((&a * &x - &b).norm() < 1e-8);
        assert!((out.coefficients[0] - c(1.0, 0.0)).norm() < 1e-8);
        assert!((out.coefficients[2] - c(1.0, 0.0)).norm() < 1e-8);
    }

    #[test]
    fn zero_column_is_degenerate() {
        let m = 20;
        let a = DMatrix::<Complex64>::from_fn(m, 2, |i, j| {
            if j == 1 {
                c(0.0, 0.0)
            } else {
                c((i as f64).cos(), 0.1)
            }
        });
        let b = DVector::from_fn(m, |i, _| a[(i, 0)] * c(0.5, 0.5));
        let out = solve_least_squares(&a, &b);
        assert_eq!(out.rank, 1);
        assert_eq!(out.degenerate_columns, vec![1]);
        assert!((out.coefficients[0] - c(0.5, 0.5)).norm() < 1e-8);
        assert!(out.coefficients[1].norm() < 1e-10);
    }
}
