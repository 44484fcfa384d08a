//! The perturbed cat map on the unit torus and its quantization.
//!
//! Classically the map is the hyperbolic automorphism `A = [[2, 1], [1, 1]]`
//! followed by a shear kick in momentum generated by the potential
//! `V(q) = -(k / 4 pi^2) cos(2 pi q)`:
//!
//! ```text
//! q' = 2q + p                            (mod 1)
//! p' = q + p - (k / 2 pi) sin(2 pi q')   (mod 1)
//! ```
//!
//! The quantum map is `U = K_k U_A`, the quadratic-phase propagator of `A`
//! followed by the diagonal kick `exp(i (k N / 2 pi) cos(2 pi q / N))`.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::torus::{check_square, CMatrix, DensityMatrix, HilbertDim};

/// Unitarity tolerance above which the quantization is rejected.
pub const UNITARITY_GATE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    pub q: f64,
    pub p: f64,
}

impl PhasePoint {
    pub fn new(q: f64, p: f64) -> Self {
        Self {
            q: q.rem_euclid(1.0),
            p: p.rem_euclid(1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbedCatParams {
    /// Kick strength.
    pub k: f64,
}

impl PerturbedCatParams {
    pub fn new(k: f64) -> Result<Self> {
        if !(k >= 0.0 && k.is_finite()) {
            return Err(Error::InvalidParameter(format!("kick strength must be >= 0, got {k}")));
        }
        Ok(Self { k })
    }
}

pub fn classical_cat_step(x: PhasePoint, params: PerturbedCatParams) -> PhasePoint {
    let q_new = (2.0 * x.q + x.p).rem_euclid(1.0);
    let p_lin = x.q + x.p;
    let p_new = p_lin - params.k / (2.0 * PI) * (2.0 * PI * q_new).sin();
    PhasePoint::new(q_new, p_new)
}

/// Jacobian `d(q', p') / d(q, p)` of [`classical_cat_step`].
pub fn cat_jacobian(x: PhasePoint, params: PerturbedCatParams) -> [[f64; 2]; 2] {
    let q_new = 2.0 * x.q + x.p;
    let shear = params.k * (2.0 * PI * q_new).cos();
    [[2.0, 1.0], [1.0 - 2.0 * shear, 1.0 - shear]]
}

/// Largest Lyapunov exponent of the unperturbed map, `ln((3 + sqrt 5) / 2)`.
/// For `k > 0` this is the small-kick approximation.
pub fn lyapunov_exponent(_params: PerturbedCatParams) -> f64 {
    ((3.0 + 5f64.sqrt()) / 2.0).ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumMapUnitary {
    pub matrix: CMatrix,
    pub params: PerturbedCatParams,
    pub dim: HilbertDim,
}

impl QuantumMapUnitary {
    /// `U B U^dag` for an arbitrary operator `B`.
    pub fn conjugate(&self, b: &CMatrix) -> CMatrix {
        &self.matrix * b * self.matrix.adjoint()
    }

    /// `U^dag B U`.
    pub fn conjugate_adjoint(&self, b: &CMatrix) -> CMatrix {
        self.matrix.adjoint() * b * &self.matrix
    }

    /// Largest entry of `U U^dag - I`.
    pub fn unitarity_error(&self) -> f64 {
        let n = self.dim.get();
        (&self.matrix * self.matrix.adjoint() - CMatrix::identity(n, n)).camax()
    }
}

pub fn quantize_perturbed_cat(
    dim: HilbertDim,
    params: PerturbedCatParams,
) -> Result<QuantumMapUnitary> {
    let n = dim.get();
    if n < 2 {
        return Err(Error::InvalidParameter("quantized map needs N >= 2".into()));
    }
    let nf = n as f64;
    let prefactor = Complex64::from_polar(1.0 / nf.sqrt(), -PI / 4.0);
    // exp((i pi / N) m) depends only on m mod 2N
    let quad = |m: i64| Complex64::from_polar(1.0, PI * m.rem_euclid(2 * n as i64) as f64 / nf);
    let kick = DVector::from_fn(n, |j, _| {
        Complex64::from_polar(1.0, params.k * nf / (2.0 * PI) * (2.0 * PI * j as f64 / nf).cos())
    });
    let matrix = CMatrix::from_fn(n, n, |row, col| {
        let (qp, q) = (row as i64, col as i64);
        kick[row] * prefactor * quad(2 * q * q - 2 * q * qp + qp * qp)
    });
    let u = QuantumMapUnitary {
        matrix,
        params,
        dim,
    };
    let err = u.unitarity_error();
    if err > UNITARITY_GATE {
        return Err(Error::Convention(format!(
            "quantized cat map is not unitary at N = {n} (residual {err:e})"
        )));
    }
    Ok(u)
}

pub fn unitary_conjugation(rho: &DensityMatrix, u: &QuantumMapUnitary) -> Result<DensityMatrix> {
    check_square(u.dim, rho.matrix())?;
    Ok(DensityMatrix::from_raw(u.conjugate(rho.matrix())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::{coherent_state, wigner_function};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cat(k: f64) -> PerturbedCatParams {
        PerturbedCatParams::new(k).unwrap()
    }

    #[test]
    fn linear_step_examples() {
        let x = classical_cat_step(PhasePoint::new(0.1, 0.2), cat(0.0));
        assert_abs_diff_eq!(x.q, 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(x.p, 0.3, epsilon = 1e-15);
        let o = classical_cat_step(PhasePoint::new(0.0, 0.0), cat(0.0));
        assert_eq!((o.q, o.p), (0.0, 0.0));
    }

    #[test]
    fn kicked_step_at_zero_of_sine() {
        let x = classical_cat_step(PhasePoint::new(0.25, 0.0), cat(0.01));
        assert_abs_diff_eq!(x.q, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(x.p, 0.25, epsilon = 1e-15);
    }

    #[test]
    fn negative_kick_rejected() {
        assert!(PerturbedCatParams::new(-0.1).is_err());
    }

    #[test]
    fn linear_step_is_integer_matrix_mod_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let (q, p) = (rng.gen::<f64>(), rng.gen::<f64>());
            let x = classical_cat_step(PhasePoint::new(q, p), cat(0.0));
            assert_abs_diff_eq!(x.q, (2.0 * q + p).rem_euclid(1.0), epsilon = 1e-15);
            assert_abs_diff_eq!(x.p, (q + p).rem_euclid(1.0), epsilon = 1e-15);
        }
    }

    #[test]
    fn area_preservation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = 1e-6;
        for k in [0.0, 0.01, 0.3, 1.0] {
            let params = cat(k);
            for _ in 0..100 {
                // stay away from the seam so differences do not wrap
                let x = PhasePoint::new(rng.gen_range(0.05..0.2), rng.gen_range(0.05..0.2));
                let j = cat_jacobian(x, params);
                assert_abs_diff_eq!(j[0][0] * j[1][1] - j[0][1] * j[1][0], 1.0, epsilon = 1e-12);
                let unwrap = |d: f64| d - d.round();
                let f = |q: f64, p: f64| classical_cat_step(PhasePoint { q, p }, params);
                let (a, b) = (f(x.q + h, x.p), f(x.q - h, x.p));
                let (c, d) = (f(x.q, x.p + h), f(x.q, x.p - h));
                let dq_dq = unwrap(a.q - b.q) / (2.0 * h);
                let dp_dq = unwrap(a.p - b.p) / (2.0 * h);
                let dq_dp = unwrap(c.q - d.q) / (2.0 * h);
                let dp_dp = unwrap(c.p - d.p) / (2.0 * h);
                assert_abs_diff_eq!(dq_dq * dp_dp - dq_dp * dp_dq, 1.0, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn lyapunov_matches_jacobian_spectrum() {
        let lam = lyapunov_exponent(cat(0.0));
        assert_abs_diff_eq!(lam, ((3.0 + 5f64.sqrt()) / 2.0).ln(), epsilon = 1e-15);
        assert!(lam > 0.0);
        let j = cat_jacobian(PhasePoint::new(0.3, 0.4), cat(0.0));
        let m = nalgebra::Matrix2::new(j[0][0], j[0][1], j[1][0], j[1][1]);
        let radius = m
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert_abs_diff_eq!(lam, radius.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(lam, 0.9624236501192069, epsilon = 1e-12);
    }

    #[test]
    fn quantized_map_is_unitary() {
        for n in [2, 3, 5, 8, 17, 32, 64] {
            for k in [0.0, 0.01, 0.5] {
                let u = quantize_perturbed_cat(HilbertDim::new(n).unwrap(), cat(k)).unwrap();
                assert!(u.unitarity_error() < 1e-10, "N={n} k={k}");
            }
        }
    }

    #[test]
    fn unperturbed_determinant_and_spectrum_on_circle() {
        let u = quantize_perturbed_cat(HilbertDim::new(8).unwrap(), cat(0.0)).unwrap();
        let det = u.matrix.clone().determinant();
        assert_abs_diff_eq!(det.norm(), 1.0, epsilon = 1e-10);
        for z in crate::linalg::eigenvalues(&u.matrix).unwrap().iter() {
            assert_abs_diff_eq!(z.norm(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn rejects_trivial_dimension() {
        assert!(quantize_perturbed_cat(HilbertDim::new(1).unwrap(), cat(0.0)).is_err());
    }

    fn torus_distance(a: f64, b: f64) -> f64 {
        let d = (a - b).rem_euclid(1.0);
        d.min(1.0 - d)
    }

    #[test]
    fn egorov_transport_of_coherent_states() {
        for n in [32, 64] {
            let d = HilbertDim::new(n).unwrap();
            for k in [0.0, 0.01] {
                let u = quantize_perturbed_cat(d, cat(k)).unwrap();
                for (q0, p0) in [(0.3, 0.1), (0.12, 0.2), (0.6, 0.05)] {
                    let rho = coherent_state(d, q0, p0).unwrap();
                    let evolved = unitary_conjugation(&rho, &u).unwrap();
                    let (cq, cp) = wigner_function(d, &evolved).unwrap().centroid();
                    let x = classical_cat_step(PhasePoint::new(q0, p0), cat(k));
                    let tol = 2.0 / n as f64;
                    assert!(
                        torus_distance(cq, x.q) < tol && torus_distance(cp, x.p) < tol,
                        "N={n} k={k} start=({q0},{p0}) quantum=({cq},{cp}) classical=({},{})",
                        x.q,
                        x.p
                    );
                }
            }
        }
    }

    fn random_state(n: usize, rng: &mut ChaCha8Rng) -> DensityMatrix {
        let a = CMatrix::from_fn(n, n, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let mut m = &a * a.adjoint();
        let tr = m.trace();
        m /= tr;
        DensityMatrix::new(m).unwrap()
    }

    #[test]
    fn conjugation_by_identity_is_trivial() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let d = HilbertDim::new(6).unwrap();
        let rho = random_state(6, &mut rng);
        let id = QuantumMapUnitary {
            matrix: CMatrix::identity(6, 6),
            params: cat(0.0),
            dim: d,
        };
        assert_eq!(unitary_conjugation(&rho, &id).unwrap(), rho);
    }

    #[test]
    fn conjugation_preserves_purity_and_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 16;
        let u = quantize_perturbed_cat(HilbertDim::new(n).unwrap(), cat(0.01)).unwrap();
        let rho = random_state(n, &mut rng);
        let out = unitary_conjugation(&rho, &u).unwrap();
        assert!((rho.purity() - out.purity()).abs() < 1e-12);
        assert_abs_diff_eq!(out.trace().re, 1.0, epsilon = 1e-10);

        let n = 8;
        let u = quantize_perturbed_cat(HilbertDim::new(n).unwrap(), cat(0.3)).unwrap();
        let rho = random_state(n, &mut rng);
        let out = unitary_conjugation(&rho, &u).unwrap();
        let mut before: Vec<f64> = rho.matrix().clone().symmetric_eigenvalues().iter().copied().collect();
        let mut after: Vec<f64> = out.matrix().clone().symmetric_eigenvalues().iter().copied().collect();
        before.sort_by(f64::total_cmp);
        after.sort_by(f64::total_cmp);
        for (a, b) in before.iter().zip(&after) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn conjugation_dimension_mismatch() {
        let u = quantize_perturbed_cat(HilbertDim::new(4).unwrap(), cat(0.0)).unwrap();
        let rho = DensityMatrix::maximally_mixed(HilbertDim::new(3).unwrap());
        assert!(matches!(
            unitary_conjugation(&rho, &u),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
