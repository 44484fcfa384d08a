//! Dense eigenvalue and SVD routines, delegated to `faer`.
//!
//! Matrices live as `nalgebra` types everywhere else in the crate; these
//! helpers copy into `faer` only for the decompositions.

use faer::Mat;
use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::torus::CMatrix;

fn to_faer<T: Copy>(m: &DMatrix<T>) -> Mat<T> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, Complex64>) -> CMatrix {
    CMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Orders by decreasing modulus; ties by increasing argument.
pub fn sort_by_modulus(values: &mut [Complex64]) {
    values.sort_by(|a, b| {
        b.norm()
            .total_cmp(&a.norm())
            .then_with(|| a.arg().total_cmp(&b.arg()))
    });
}

/// All eigenvalues of a general complex matrix, by decreasing modulus.
pub fn eigenvalues(m: &CMatrix) -> Result<Vec<Complex64>> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let mut ev = to_faer(m)
        .eigenvalues()
        .map_err(|e| Error::Numerical(format!("eigenvalue solver failed: {e:?}")))?;
    sort_by_modulus(&mut ev);
    Ok(ev)
}

/// All eigenvalues of a general real matrix, by decreasing modulus.
pub fn real_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let mut ev = to_faer(m)
        .eigenvalues()
        .map_err(|e| Error::Numerical(format!("eigenvalue solver failed: {e:?}")))?;
    sort_by_modulus(&mut ev);
    Ok(ev)
}

/// Full SVD `m = U diag(s) V^dag` with singular values in decreasing order.
pub struct Svd {
    pub u: CMatrix,
    pub s: Vec<f64>,
    pub v: CMatrix,
}

pub fn svd(m: &CMatrix) -> Result<Svd> {
    let dec = to_faer(m)
        .svd()
        .map_err(|e| Error::Numerical(format!("SVD failed: {e:?}")))?;
    let s: Vec<f64> = dec.S().column_vector().iter().map(|z| z.re).collect();
    Ok(Svd {
        u: from_faer(dec.U()),
        s,
        v: from_faer(dec.V()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cyclic_permutation_has_roots_of_unity() {
        let n = 12;
        let m = CMatrix::from_fn(n, n, |i, j| {
            if i == (j + 1) % n {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let ev = eigenvalues(&m).unwrap();
        assert_eq!(ev.len(), n);
        for z in &ev {
            assert_abs_diff_eq!(z.norm(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(z.powu(n as u32).re, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn real_rotation_block() {
        let m = DMatrix::from_row_slice(3, 3, &[0.0, -0.5, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.9]);
        let ev = real_eigenvalues(&m).unwrap();
        assert_abs_diff_eq!(ev[0].re, 0.9, epsilon = 1e-14);
        assert_abs_diff_eq!(ev[1].norm(), 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!((ev[1] + ev[2]).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn svd_reconstructs() {
        let m = CMatrix::from_fn(4, 3, |i, j| Complex64::new((i + 2 * j) as f64, (i * j) as f64 - 1.0));
        let d = svd(&m).unwrap();
        assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
        let k = d.s.len();
        let sigma = CMatrix::from_fn(k, k, |i, j| if i == j { Complex64::new(d.s[i], 0.0) } else { Complex64::new(0.0, 0.0) });
        let back = d.u.columns(0, k) * sigma * d.v.columns(0, k).adjoint();
        assert!((back - m).camax() < 1e-12);
    }
}
