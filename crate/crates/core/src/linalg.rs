//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Largest squared singular value of a linear map given only its forward and adjoint actions.
///
/// Runs `iters` power iterations on `A^* A` from a fixed pseudo-random start.
pub fn power_sigma_max_sq<F, G>(apply: F, adjoint: G, dim: usize, iters: usize) -> f64
where
    F: Fn(&CVec) -> CVec,
    G: Fn(&CVec) -> CVec,
{
    if dim == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v = CVec::from_fn(dim, |_, _| C64::new(rng.random::<f64>() + 0.5, rng.random::<f64>() - 0.5));
    let n = v.norm();
    v /= C64::from(n);
    let mut est = 0.0;
    for _ in 0..iters {
        let w = adjoint(&apply(&v));
        let nw = w.norm();
        if nw == 0.0 || !nw.is_finite() {
            return if nw == 0.0 { est } else { f64::INFINITY };
        }
        est = nw;
        v = w / C64::from(nw);
    }
    // one Rayleigh quotient sharpens the estimate from below
    let av = apply(&v);
    est.max(av.norm_squared())
}

pub fn sigma_max_sq(a: &CMat) -> f64 {
    power_sigma_max_sq(|v| a * v, |v| a.adjoint() * v, a.ncols(), 50)
}

/// Solution of a least-squares problem together with rank diagnostics.
#[derive(Clone, Debug)]
pub struct LstsqSolution {
    pub x: CMat,
    pub condition: f64,
    pub rank: usize,
    pub regularized: bool,
}

/// Rank-revealing least-squares `min ‖A X − B‖` via SVD.
///
/// When fewer than `A.ncols()` singular values exceed `rtol · σ_max`, a ridge
/// term `ridge · σ_max²` is added instead and `regularized` is set.
pub fn lstsq(a: &CMat, b: &CMat, rtol: f64, ridge: f64) -> LstsqSolution {
    let n = a.ncols();
    if n == 0 {
        return LstsqSolution {
            x: CMat::zeros(0, b.ncols()),
            condition: 1.0,
            rank: 0,
            regularized: false,
        };
    }
    let svd = a.clone().svd(true, true);
    let s = &svd.singular_values;
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let smin = if a.nrows() >= n { s.iter().cloned().fold(f64::INFINITY, f64::min) } else { 0.0 };
    let rank = s.iter().filter(|&&v| v > rtol * smax).count();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let utb = u.adjoint() * b;
    let mut scaled = utb;
    let regularized = rank < n;
    let lam = ridge * smax * smax;
    for (i, &si) in s.iter().enumerate() {
        let f = if regularized {
            if si == 0.0 && lam == 0.0 {
                0.0
            } else {
                si / (si * si + lam)
            }
        } else {
            1.0 / si
        };
        let mut row = scaled.row_mut(i);
        row *= C64::from(f);
    }
    let x = vt.adjoint() * scaled;
    LstsqSolution {
        x,
        condition,
        rank,
        regularized,
    }
}

/// Real least squares via SVD with a relative rank cutoff.
pub fn lstsq_real(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if a.ncols() == 0 {
        return DVector::zeros(0);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = (smax * 1e-12).max(f64::MIN_POSITIVE);
    svd.solve(b, eps).expect("u and v computed")
}

/// Nonnegative least squares by the Lawson-Hanson active set method.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    if n == 0 {
        return x;
    }
    let tol = 1e-10 * a.norm().max(f64::MIN_POSITIVE) * b.norm().max(f64::MIN_POSITIVE);
    let mut passive = vec![false; n];
    let solve_sub = |passive: &[bool]| -> (Vec<usize>, DVector<f64>) {
        let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        let cols: Vec<_> = idx.iter().map(|&j| a.column(j).into_owned()).collect();
        let sub = DMatrix::from_columns(&cols);
        let z = lstsq_real(&sub, b);
        (idx, z)
    };
    for _ in 0..3 * n {
        let w = a.transpose() * (b - a * &x);
        let cand = (0..n)
            .filter(|&j| !passive[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = cand else { break };
        passive[j] = true;
        for _ in 0..=n {
            let (idx, z) = solve_sub(&passive);
            if z.iter().all(|&v| v > 0.0) {
                x.fill(0.0);
                for (k, &j) in idx.iter().enumerate() {
                    x[j] = z[k];
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (k, &j) in idx.iter().enumerate() {
                if z[k] <= 0.0 {
                    let d = x[j] - z[k];
                    if d > 0.0 {
                        alpha = alpha.min(x[j] / d);
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            for (k, &j) in idx.iter().enumerate() {
                x[j] += alpha * (z[k] - x[j]);
                if x[j] <= 1e-15 * x.amax().max(1.0) {
                    x[j] = 0.0;
                    passive[j] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    x
}

/// Orthonormal basis for the column span of `a` (modified Gram-Schmidt with rank cutoff).
pub fn orthonormal_basis(a: &CMat, rtol: f64) -> CMat {
    let scale = a.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut cols: Vec<CVec> = Vec::new();
    for c in a.column_iter() {
        let mut v: CVec = c.into_owned();
        for _ in 0..2 {
            for q in &cols {
                let p = q.dotc(&v);
                v -= q * p;
            }
        }
        let n = v.norm();
        if n > rtol * scale.max(f64::MIN_POSITIVE) {
            cols.push(v / C64::from(n));
        }
    }
    if cols.is_empty() {
        return CMat::zeros(a.nrows(), 0);
    }
    CMat::from_columns(&cols)
}

pub fn frobenius(a: &CMat) -> f64 {
    a.norm()
}

pub fn to_complex(a: &DMatrix<f64>) -> CMat {
    a.map(C64::from)
}

pub fn cvec_from_real(v: &[f64]) -> CVec {
    CVec::from_iterator(v.len(), v.iter().map(|&x| C64::from(x)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_method_on_diagonal() {
        let a = CMat::from_diagonal(&CVec::from_vec(vec![ONE * 3.0, ONE * 1.0, ONE * 0.5]));
        assert!((sigma_max_sq(&a) - 9.0).abs() < 1e-8);
    }

    #[test]
    fn lstsq_exact_and_regularized() {
        let a = CMat::from_row_slice(3, 2, &[ONE, ZERO, ZERO, ONE, ONE, ONE]);
        let x = CMat::from_row_slice(2, 1, &[C64::new(1.0, 2.0), C64::new(-1.0, 0.5)]);
        let b = &a * &x;
        let sol = lstsq(&a, &b, 1e-12, 1e-10);
        assert!(!sol.regularized);
        assert!((sol.x - x).norm() < 1e-12);

        let d = CMat::from_row_slice(2, 2, &[ONE, ONE, ONE, ONE]);
        let sol = lstsq(&d, &CMat::from_element(2, 1, ONE), 1e-12, 1e-10);
        assert!(sol.regularized);
        assert!(sol.x.iter().all(|v| v.re.is_finite()));
    }

    #[test]
    fn nnls_matches_interior_and_boundary_solutions() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let x = nnls(&a, &(&a * DVector::from_vec(vec![2.0, 0.5])));
        assert!((x[0] - 2.0).abs() < 1e-10 && (x[1] - 0.5).abs() < 1e-10);
        let x = nnls(&a, &DVector::from_vec(vec![1.0, -2.0, 0.0]));
        assert!(x[1] == 0.0);
        assert!((x[0] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn basis_drops_dependent_columns() {
        let a = CMat::from_row_slice(2, 3, &[ONE, ONE * 2.0, ZERO, ZERO, ZERO, ONE]);
        let q = orthonormal_basis(&a, 1e-10);
        assert_eq!(q.ncols(), 2);
        assert!((q.adjoint() * &q - CMat::identity(2, 2)).norm() < 1e-12);
    }
}
