//! Discrete phase space of the quantized 2-torus.
//!
//! An `N`-dimensional Hilbert space carries the `N x N` lattice of
//! translations `T(q,p) = U^q V^p exp(i pi q p / N)`, where `U` is the cyclic
//! position shift `|j> -> |j+1>` and `V` the diagonal phase
//! `|j> -> exp(2 pi i p j / N) |j>`. The translations are an orthogonal operator
//! basis with `tr(T_a^dag T_b) = N delta_ab`; expanding an operator in that
//! basis gives its chord symbol, and the symplectic Fourier transform of the
//! chord symbol over the doubled `2N x 2N` lattice gives the discrete Wigner
//! function.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Dimension `N` of the Hilbert space. The effective Planck constant is
/// `hbar = 1 / (2 pi N)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HilbertDim(usize);

impl HilbertDim {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter(
                "Hilbert space dimension must be at least 1".into(),
            ));
        }
        Ok(Self(n))
    }

    #[inline]
    pub fn get(self) -> usize {
        self.0
    }

    pub fn hbar(self) -> f64 {
        1.0 / (2.0 * PI * self.0 as f64)
    }
}

/// Point `(q, p)` of the `N x N` phase-space lattice, reduced into `[0, N)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LatticePoint {
    pub q: usize,
    pub p: usize,
}

impl LatticePoint {
    /// Reduces arbitrary integer coordinates mod `N`.
    pub fn new(dim: HilbertDim, q: i64, p: i64) -> Self {
        let n = dim.get() as i64;
        Self {
            q: q.rem_euclid(n) as usize,
            p: p.rem_euclid(n) as usize,
        }
    }

    pub fn origin() -> Self {
        Self { q: 0, p: 0 }
    }

    pub fn neg(self, dim: HilbertDim) -> Self {
        Self::new(dim, -(self.q as i64), -(self.p as i64))
    }

    /// Signed distance from the origin in the sup norm, with wrap-around.
    pub fn wrapped_norm(self, dim: HilbertDim) -> usize {
        let n = dim.get();
        let dq = self.q.min(n - self.q);
        let dp = self.p.min(n - self.p);
        dq.max(dp)
    }
}

/// Symplectic form `a ^ b = q_a p_b - p_a q_b` on integer coordinates.
#[inline]
pub fn wedge(a: (i64, i64), b: (i64, i64)) -> i64 {
    a.0 * b.1 - a.1 * b.0
}

/// Cyclic position shift `U^q` times the momentum phase `V^p` with the
/// symmetrizing factor. Unitary for every `(q, p)`.
pub fn translation_matrix(dim: HilbertDim, alpha: LatticePoint) -> CMatrix {
    let n = dim.get();
    let nf = n as f64;
    let sym = Complex64::from_polar(1.0, PI * (alpha.q * alpha.p) as f64 / nf);
    let mut t = CMatrix::zeros(n, n);
    for j in 0..n {
        let phase = Complex64::from_polar(1.0, 2.0 * PI * ((alpha.p * j) % n) as f64 / nf);
        t[((j + alpha.q) % n, j)] = phase * sym;
    }
    t
}

/// Sign relating a translation with unreduced integer label to the one with
/// the reduced label: `T(q, p) = sign * T(q mod N, p mod N)`.
pub fn reduction_sign(dim: HilbertDim, q: i64, p: i64) -> f64 {
    let n = dim.get() as i64;
    let (a, qr) = (q.div_euclid(n), q.rem_euclid(n));
    let (b, pr) = (p.div_euclid(n), p.rem_euclid(n));
    let exponent = qr * b + a * pr + a * b * n;
    if exponent.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Phase in `T_a T_b = phase * T_{a+b}`, where `T_{a+b}` carries the unreduced
/// label `a + b`. For reduced representatives, multiply by
/// [`reduction_sign`] of the sum to compare with the reduced translation.
pub fn compose_translations_phase(
    dim: HilbertDim,
    alpha: LatticePoint,
    beta: LatticePoint,
) -> Complex64 {
    let w = wedge(
        (alpha.q as i64, alpha.p as i64),
        (beta.q as i64, beta.p as i64),
    );
    Complex64::from_polar(1.0, -PI * w as f64 / dim.get() as f64)
}

/// Chord symbol `C_B(a) = tr(T_a^dag B)` on the `N x N` lattice, stored with
/// `coeffs[(q, p)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChordSymbol {
    pub coeffs: CMatrix,
}

impl ChordSymbol {
    pub fn dim(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn get(&self, alpha: LatticePoint) -> Complex64 {
        self.coeffs[(alpha.q, alpha.p)]
    }
}

/// FFT plans for the chord transform of a fixed dimension.
#[derive(Clone)]
pub struct ChordTransformer {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// `exp(i pi q p / N)` indexed by `(q * p) mod 2N`.
    sym_phase: Vec<Complex64>,
}

impl std::fmt::Debug for ChordTransformer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChordTransformer").field("n", &self.n).finish()
    }
}

impl ChordTransformer {
    pub fn new(dim: HilbertDim) -> Self {
        let n = dim.get();
        let mut planner = FftPlanner::new();
        let sym_phase = (0..2 * n)
            .map(|m| Complex64::from_polar(1.0, PI * m as f64 / n as f64))
            .collect();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            sym_phase,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Row `q` of the symbol is the DFT of the `q`-th cyclic subdiagonal
    /// `B[j+q, j]`.
    pub fn forward(&self, b: &CMatrix) -> ChordSymbol {
        let n = self.n;
        assert_eq!(b.nrows(), n, "operator dimension does not match transformer");
        let mut coeffs = CMatrix::zeros(n, n);
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for q in 0..n {
            for (j, x) in buf.iter_mut().enumerate() {
                *x = b[((j + q) % n, j)];
            }
            self.forward.process(&mut buf);
            for (p, x) in buf.iter().enumerate() {
                coeffs[(q, p)] = x * self.sym_phase[(q * p) % (2 * n)].conj();
            }
        }
        ChordSymbol { coeffs }
    }

    /// `B = (1/N) sum_a C(a) T_a`.
    pub fn inverse(&self, s: &ChordSymbol) -> CMatrix {
        let n = self.n;
        assert_eq!(s.dim(), n, "symbol dimension does not match transformer");
        let scale = 1.0 / n as f64;
        let mut b = CMatrix::zeros(n, n);
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for q in 0..n {
            for (p, x) in buf.iter_mut().enumerate() {
                *x = s.coeffs[(q, p)] * self.sym_phase[(q * p) % (2 * n)];
            }
            self.inverse.process(&mut buf);
            for (j, x) in buf.iter().enumerate() {
                b[((j + q) % n, j)] = x * scale;
            }
        }
        b
    }
}

pub fn chord_transform(dim: HilbertDim, b: &CMatrix) -> Result<ChordSymbol> {
    check_square(dim, b)?;
    Ok(ChordTransformer::new(dim).forward(b))
}

pub fn inverse_chord_transform(dim: HilbertDim, s: &ChordSymbol) -> Result<CMatrix> {
    if s.coeffs.nrows() != dim.get() || s.coeffs.ncols() != dim.get() {
        return Err(Error::DimensionMismatch {
            expected: dim.get(),
            found: s.coeffs.nrows(),
        });
    }
    Ok(ChordTransformer::new(dim).inverse(s))
}

/// Hilbert-Schmidt inner product `tr(A^dag B)`.
pub fn hs_inner(a: &CMatrix, b: &CMatrix) -> Result<Complex64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: b.nrows(),
        });
    }
    Ok(a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum())
}

pub(crate) fn check_square(dim: HilbertDim, m: &CMatrix) -> Result<()> {
    let n = dim.get();
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: if m.nrows() != n { m.nrows() } else { m.ncols() },
        });
    }
    Ok(())
}

/// Tolerances for [`DensityMatrix::new`].
pub const STATE_TOL: f64 = 1e-10;

/// Self-adjoint, unit-trace, positive semidefinite `N x N` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    entries: CMatrix,
}

impl DensityMatrix {
    /// Validates hermiticity, trace, positivity and purity.
    pub fn new(entries: CMatrix) -> Result<Self> {
        let n = entries.nrows();
        if n == 0 || entries.ncols() != n {
            return Err(Error::InvalidParameter("density matrix must be square".into()));
        }
        let herm_err = (&entries - entries.adjoint()).camax();
        if herm_err > STATE_TOL {
            return Err(Error::InvalidParameter(format!(
                "density matrix is not self-adjoint (residual {herm_err:e})"
            )));
        }
        let tr = entries.trace();
        if (tr - Complex64::new(1.0, 0.0)).norm() > STATE_TOL {
            return Err(Error::InvalidParameter(format!(
                "density matrix trace is {tr}, expected 1"
            )));
        }
        let hermitian = (&entries + entries.adjoint()).scale(0.5);
        let min_eig = hermitian
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -STATE_TOL {
            return Err(Error::InvalidParameter(format!(
                "density matrix has negative eigenvalue {min_eig:e}"
            )));
        }
        let state = Self { entries };
        let purity = state.purity();
        if purity > 1.0 + STATE_TOL {
            return Err(Error::InvalidParameter(format!("purity {purity} exceeds 1")));
        }
        Ok(state)
    }

    /// Wraps the result of a trace- and positivity-preserving map without
    /// re-validating.
    pub(crate) fn from_raw(entries: CMatrix) -> Self {
        Self { entries }
    }

    /// `I / N`.
    pub fn maximally_mixed(dim: HilbertDim) -> Self {
        let n = dim.get();
        Self {
            entries: CMatrix::identity(n, n).unscale(n as f64),
        }
    }

    /// Pure state `|psi><psi|` of a vector normalized here.
    pub fn pure(psi: &nalgebra::DVector<Complex64>) -> Result<Self> {
        let norm = psi.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidParameter("cannot normalize zero vector".into()));
        }
        let v = psi.unscale(norm);
        Ok(Self {
            entries: &v * v.adjoint(),
        })
    }

    pub fn dim(&self) -> HilbertDim {
        HilbertDim(self.entries.nrows())
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_matrix(self) -> CMatrix {
        self.entries
    }

    /// `tr(rho^2)`.
    pub fn purity(&self) -> f64 {
        self.entries.iter().map(|x| x.norm_sqr()).sum()
    }

    pub fn trace(&self) -> Complex64 {
        self.entries.trace()
    }
}

/// Discrete Wigner function on the doubled lattice. `values[(a, b)]` sits at
/// the phase-space point `(a / 2N, b / 2N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerGrid {
    pub values: DMatrix<f64>,
    /// Largest discarded imaginary part.
    pub imag_residual: f64,
}

impl WignerGrid {
    /// Weight `w` in the sum rule `N * w * sum W = tr(rho)`. Summing the
    /// phase-point operators over the doubled lattice gives the identity, so
    /// `sum W = tr(rho)` and `w = 1 / N`.
    pub fn sum_rule_weight(dim: HilbertDim) -> f64 {
        1.0 / dim.get() as f64
    }

    pub fn total(&self) -> f64 {
        self.values.sum()
    }

    /// Circular mean position of the distribution on the unit torus.
    pub fn centroid(&self) -> (f64, f64) {
        let m = self.values.nrows();
        let mut zq = Complex64::new(0.0, 0.0);
        let mut zp = Complex64::new(0.0, 0.0);
        for a in 0..m {
            for b in 0..m {
                let w = self.values[(a, b)];
                zq += Complex64::from_polar(w, 2.0 * PI * a as f64 / m as f64);
                zp += Complex64::from_polar(w, 2.0 * PI * b as f64 / m as f64);
            }
        }
        let wrap = |z: Complex64| (z.arg() / (2.0 * PI)).rem_euclid(1.0);
        (wrap(zq), wrap(zp))
    }
}

/// `W(b) = Re tr(A_b rho)` with the phase-point operators
/// `A_b = (2N)^-2 sum_{a in G_2N} T_a exp((i pi / N) a ^ b)`. With this sign a
/// coherent state centered at `(q, p)` peaks at the doubled-grid point
/// `(2Nq, 2Np)`.
pub fn wigner_function(dim: HilbertDim, rho: &DensityMatrix) -> Result<WignerGrid> {
    check_square(dim, rho.matrix())?;
    let n = dim.get();
    let m = 2 * n;
    let chord = ChordTransformer::new(dim).forward(rho.matrix());
    // tr(T_a rho) = conj(tr(T_a^dag rho)) for self-adjoint rho, with the
    // unreduced label a in [0, 2N) mapped back through the reduction sign.
    let mut grid = CMatrix::zeros(m, m);
    for qa in 0..m {
        for pa in 0..m {
            let s = reduction_sign(dim, qa as i64, pa as i64);
            grid[(qa, pa)] = chord.coeffs[(qa % n, pa % n)].conj() * s;
        }
    }
    // exp((i pi / N)(q_a p_b - p_a q_b)): inverse DFT over q_a -> p_b and
    // forward DFT over p_a -> q_b.
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(m);
    let inv = planner.plan_fft_inverse(m);
    let mut buf = vec![Complex64::new(0.0, 0.0); m];
    // columns: transform along q_a for each p_a, result indexed by p_b
    let mut stage = CMatrix::zeros(m, m); // (p_b, p_a)
    for pa in 0..m {
        for (qa, x) in buf.iter_mut().enumerate() {
            *x = grid[(qa, pa)];
        }
        inv.process(&mut buf);
        for (pb, x) in buf.iter().enumerate() {
            stage[(pb, pa)] = *x;
        }
    }
    let scale = 1.0 / (m * m) as f64;
    let mut values = DMatrix::zeros(m, m);
    let mut imag_residual: f64 = 0.0;
    for pb in 0..m {
        for (pa, x) in buf.iter_mut().enumerate() {
            *x = stage[(pb, pa)];
        }
        fwd.process(&mut buf);
        for (qb, x) in buf.iter().enumerate() {
            let v = x * scale;
            values[(qb, pb)] = v.re;
            imag_residual = imag_residual.max(v.im.abs());
        }
    }
    Ok(WignerGrid {
        values,
        imag_residual,
    })
}

/// Number of periodic images kept on each side when periodizing a Gaussian.
pub const PERIODIZATION_IMAGES: i64 = 3;

/// Periodized Gaussian wavepacket centered at `(q0, p0)` on the unit torus:
/// `<j|z> ~ sum_m exp(-pi N (j/N - q0 + m)^2 + 2 pi i N p0 (j/N + m))`.
pub fn coherent_state(dim: HilbertDim, q0: f64, p0: f64) -> Result<DensityMatrix> {
    if !(q0.is_finite() && p0.is_finite()) {
        return Err(Error::InvalidParameter("coherent-state center must be finite".into()));
    }
    let n = dim.get();
    let nf = n as f64;
    let (q0, p0) = (q0.rem_euclid(1.0), p0.rem_euclid(1.0));
    let psi = nalgebra::DVector::from_fn(n, |j, _| {
        let x = j as f64 / nf;
        (-PERIODIZATION_IMAGES..=PERIODIZATION_IMAGES)
            .map(|m| {
                let d = x - q0 + m as f64;
                let amp = (-PI * nf * d * d).exp();
                // reduce the phase argument to keep it accurate for large N
                let arg = (nf * p0 * (x + m as f64)).rem_euclid(1.0);
                Complex64::from_polar(amp, 2.0 * PI * arg)
            })
            .sum::<Complex64>()
    });
    DensityMatrix::pure(&psi)
}
