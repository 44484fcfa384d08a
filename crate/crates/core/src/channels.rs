//! Gaussian diffusive noise and the coarse-grained propagator.
//!
//! The noise channel is a random-unitary process: translation `T_a` is
//! applied with probability `c(a)`, a periodized Gaussian of width
//! `sigma = eps * N` lattice steps. Because `T_a T_b T_a^dag` is a phase times
//! `T_b`, the channel is diagonal on chord symbols and multiplies component
//! `b` by the symplectic Fourier transform of `c`. That is how it is applied
//! here; the explicit Kraus sum only survives as a test oracle.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::limits::ResourceLimits;
use crate::maps::QuantumMapUnitary;
use crate::torus::{check_square, CMatrix, ChordTransformer, DensityMatrix, HilbertDim};

#[derive(Debug, Clone)]
pub struct NoiseKernel {
    dim: HilbertDim,
    epsilon: f64,
    /// Probability of applying `T_(q,p)`, stored at `(q, p)`.
    pub kraus_probs: DMatrix<f64>,
    /// Channel eigenvalue on chord component `(q, p)`.
    pub chord_eigs: DMatrix<f64>,
    transformer: ChordTransformer,
}

impl NoiseKernel {
    pub fn dim(&self) -> HilbertDim {
        self.dim
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// The identity channel (`eps = 0`): every chord eigenvalue is 1.
    pub fn noiseless(dim: HilbertDim) -> Self {
        let n = dim.get();
        let mut kraus_probs = DMatrix::zeros(n, n);
        kraus_probs[(0, 0)] = 1.0;
        Self {
            dim,
            epsilon: 0.0,
            kraus_probs,
            chord_eigs: DMatrix::from_element(n, n, 1.0),
            transformer: ChordTransformer::new(dim),
        }
    }

    pub fn is_noiseless(&self) -> bool {
        self.epsilon == 0.0
    }

    /// Largest chord eigenvalue on the shell `|b|_inf = radius` (wrap-aware).
    pub fn max_eig_on_shell(&self, radius: usize) -> f64 {
        let n = self.dim.get();
        let mut best: f64 = 0.0;
        for q in 0..n {
            for p in 0..n {
                let (dq, dp) = (q.min(n - q), p.min(n - p));
                if dq.max(dp) == radius {
                    best = best.max(self.chord_eigs[(q, p)]);
                }
            }
        }
        best
    }

    /// Multiplies the chord symbol of `b` by the channel eigenvalues.
    pub fn apply(&self, b: &CMatrix) -> CMatrix {
        if self.is_noiseless() {
            return b.clone();
        }
        let mut s = self.transformer.forward(b);
        s.coeffs
            .iter_mut()
            .zip(self.chord_eigs.iter())
            .for_each(|(c, d)| *c *= *d);
        self.transformer.inverse(&s)
    }

    pub(crate) fn transformer(&self) -> &ChordTransformer {
        &self.transformer
    }
}

/// Periodized 1D Gaussian `g(a) = sum_m exp(-(a + mN)^2 / 2 sigma^2)` on
/// `a = 0..N`, normalized to sum 1.
fn periodized_gaussian(n: usize, sigma: f64) -> Vec<f64> {
    let nf = n as f64;
    // three images suffice while sigma <= N/3; wider kernels need images out
    // to where exp(-(mN)^2 / 2 sigma^2) < 1e-16
    let images = if sigma <= nf / 3.0 {
        3
    } else {
        (9.0 * sigma / nf).ceil() as i64 + 1
    };
    let mut g: Vec<f64> = (0..n)
        .map(|a| {
            (-images..=images)
                .map(|m| {
                    let x = a as f64 + m as f64 * nf;
                    (-x * x / (2.0 * sigma * sigma)).exp()
                })
                .sum()
        })
        .collect();
    let total: f64 = g.iter().sum();
    g.iter_mut().for_each(|x| *x /= total);
    g
}

/// Fourier coefficients `h(b) = sum_a g(a) cos(2 pi a b / N)` of the
/// normalized periodized Gaussian. For `sigma >= 1` the Poisson-dual sum
/// `sum_m exp(-2 pi^2 sigma^2 (b/N - m)^2)` is used, which is positive term
/// by term and exact where the direct sum would cancel to round-off.
fn gaussian_fourier(n: usize, sigma: f64, g: &[f64]) -> Vec<f64> {
    let nf = n as f64;
    if sigma >= 1.0 {
        let dual = |x: f64| -> f64 {
            (-4..=5)
                .map(|m| {
                    let d = x - m as f64;
                    (-2.0 * PI * PI * sigma * sigma * d * d).exp()
                })
                .sum()
        };
        let norm = dual(0.0);
        (0..n).map(|b| dual(b as f64 / nf) / norm).collect()
    } else {
        (0..n)
            .map(|b| {
                g.iter()
                    .enumerate()
                    .map(|(a, ga)| ga * (2.0 * PI * ((a * b) % n) as f64 / nf).cos())
                    .sum()
            })
            .collect()
    }
}

pub fn build_noise_kernel(dim: HilbertDim, epsilon: f64) -> Result<NoiseKernel> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "noise width must be positive, got {epsilon}"
        )));
    }
    let n = dim.get();
    let sigma = epsilon * n as f64;
    let g = periodized_gaussian(n, sigma);
    let h = gaussian_fourier(n, sigma, &g);
    // c(a) = g(a_q) g(a_p); D(b) = sum_a c(a) exp((2 pi i / N) a ^ b)
    // factorizes into h(b_p) h(b_q) since g is even mod N.
    let kraus_probs = DMatrix::from_fn(n, n, |q, p| g[q] * g[p]);
    let chord_eigs = DMatrix::from_fn(n, n, |q, p| h[q] * h[p]);
    Ok(NoiseKernel {
        dim,
        epsilon,
        kraus_probs,
        chord_eigs,
        transformer: ChordTransformer::new(dim),
    })
}

/// Kernel for `epsilon >= 0`, with `0` meaning no noise.
pub fn noise_kernel_or_identity(dim: HilbertDim, epsilon: f64) -> Result<NoiseKernel> {
    if epsilon == 0.0 {
        Ok(NoiseKernel::noiseless(dim))
    } else {
        build_noise_kernel(dim, epsilon)
    }
}

pub fn apply_noise(rho: &CMatrix, kernel: &NoiseKernel) -> Result<CMatrix> {
    check_square(kernel.dim, rho)?;
    Ok(kernel.apply(rho))
}

/// `S_eps = D_eps o U`: unitary step followed by the noise channel.
#[derive(Debug, Clone)]
pub struct CoarseGrainedPropagator {
    pub unitary: QuantumMapUnitary,
    pub kernel: NoiseKernel,
}

impl CoarseGrainedPropagator {
    pub fn new(unitary: QuantumMapUnitary, kernel: NoiseKernel) -> Result<Self> {
        if unitary.dim != kernel.dim {
            return Err(Error::DimensionMismatch {
                expected: unitary.dim.get(),
                found: kernel.dim.get(),
            });
        }
        Ok(Self { unitary, kernel })
    }

    pub fn dim(&self) -> HilbertDim {
        self.unitary.dim
    }

    pub fn apply(&self, b: &CMatrix) -> CMatrix {
        self.kernel.apply(&self.unitary.conjugate(b))
    }

    /// `S^dag = U^dag o D`, using that `D` is self-adjoint for the
    /// Hilbert-Schmidt product.
    pub fn apply_adjoint(&self, b: &CMatrix) -> CMatrix {
        self.unitary.conjugate_adjoint(&self.kernel.apply(b))
    }

    pub fn evolve(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        check_square(self.dim(), rho.matrix())?;
        Ok(DensityMatrix::from_raw(self.apply(rho.matrix())))
    }

    /// Chord-basis matrix element `(1/N) tr(T_a^dag U T_b U^dag)` of the
    /// unitary step for every `a`, returned as the chord symbol of
    /// `U T_b U^dag` divided by `N`.
    pub(crate) fn unitary_chord_column(&self, b: (usize, usize)) -> CMatrix {
        let n = self.dim().get();
        let t = crate::torus::translation_matrix(self.dim(), crate::torus::LatticePoint { q: b.0, p: b.1 });
        let col = self.kernel.transformer().forward(&self.unitary.conjugate(&t)).coeffs;
        col.unscale(n as f64)
    }
}

pub fn apply_propagator(rho: &CMatrix, prop: &CoarseGrainedPropagator) -> Result<CMatrix> {
    check_square(prop.dim(), rho)?;
    Ok(prop.apply(rho))
}

pub fn apply_adjoint_propagator(rho: &CMatrix, prop: &CoarseGrainedPropagator) -> Result<CMatrix> {
    check_square(prop.dim(), rho)?;
    Ok(prop.apply_adjoint(rho))
}

/// Matrix of `S_eps` on column-major vectorized operators:
/// column `i + N j` is `vec(S(|i><j|))`.
pub fn dense_superoperator(prop: &CoarseGrainedPropagator, limits: &ResourceLimits) -> Result<CMatrix> {
    let n = prop.dim().get();
    ResourceLimits::check("dense superoperator dimension N", n, limits.dense_quantum_max_n)?;
    let u = &prop.unitary.matrix;
    let mut out = CMatrix::zeros(n * n, n * n);
    for j in 0..n {
        let uj = u.column(j).adjoint();
        for i in 0..n {
            // U |i><j| U^dag = u_i u_j^dag
            let image = prop.kernel.apply(&(u.column(i) * &uj));
            out.column_mut(i + n * j).copy_from_slice(image.as_slice());
        }
    }
    Ok(out)
}

/// Unvectorizes a column-major `N^2` vector.
pub fn unvec(v: &[Complex64], n: usize) -> CMatrix {
    CMatrix::from_column_slice(n, n, v)
}
