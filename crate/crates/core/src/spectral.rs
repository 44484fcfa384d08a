//! Leading eigenvalues of the coarse-grained propagator.
//!
//! Three routes to the same spectrum:
//!
//! * the iteration (moment) method: overlaps `m_t = <rho0, S^t rho0>`
//!   arranged as Hankel matrices `[O]_ij = m_(i+j)`, `[S]_ij = m_(i+j+1)`,
//!   then `det([S] - lambda [O]) = 0`;
//! * chord truncation: the superoperator written in the translation basis,
//!   where the noise damps high chords, restricted to a window around 0;
//! * the dense `N^2 x N^2` matrix, as an oracle for small `N`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channels::{dense_superoperator, CoarseGrainedPropagator};
use crate::error::{Error, Result};
use crate::limits::ResourceLimits;
use crate::linalg;
use crate::torus::{hs_inner, CMatrix, DensityMatrix, LatticePoint};

/// Default relative cutoff on the singular values of `[O]`.
pub const DEFAULT_SVD_TOL: f64 = 1e-12;
/// Default Hankel size.
pub const DEFAULT_K_ITER: usize = 12;
/// Channel eigenvalue below which a chord component may be dropped.
pub const SAFE_CUT: f64 = 1e-8;
/// Agreement between Hankel sizes `k` and `k - 1` that marks an eigenvalue
/// as converged.
pub const STABILITY_DELTA: f64 = 1e-6;
/// Reported moduli above `1 + CONTRACTIVITY_TOL` are Krylov artifacts.
pub const CONTRACTIVITY_TOL: f64 = 1e-8;

/// A linear map on some state space together with the inner product the
/// moments are taken in.
pub trait LinearOperator {
    type State: Clone;

    fn apply(&self, x: &Self::State) -> Self::State;

    /// `<a, b>`, antilinear in `a`.
    fn inner(&self, a: &Self::State, b: &Self::State) -> Complex64;

    fn scale(&self, x: &mut Self::State, s: f64);
}

impl LinearOperator for CoarseGrainedPropagator {
    type State = CMatrix;

    fn apply(&self, x: &CMatrix) -> CMatrix {
        CoarseGrainedPropagator::apply(self, x)
    }

    fn inner(&self, a: &CMatrix, b: &CMatrix) -> Complex64 {
        hs_inner(a, b).expect("states share the propagator dimension")
    }

    fn scale(&self, x: &mut CMatrix, s: f64) {
        x.iter_mut().for_each(|z| *z *= s);
    }
}

/// `x -> P(A x)` for a projector `P` onto an `A`-invariant subspace.
///
/// Re-projecting after every step keeps rounding errors from feeding a
/// non-decaying component back into an iterate that is otherwise shrinking
/// geometrically.
pub struct Projected<'a, A, F> {
    pub op: &'a A,
    pub project: F,
}

impl<A, F> LinearOperator for Projected<'_, A, F>
where
    A: LinearOperator,
    F: Fn(&mut A::State),
{
    type State = A::State;

    fn apply(&self, x: &A::State) -> A::State {
        let mut y = self.op.apply(x);
        (self.project)(&mut y);
        y
    }

    fn inner(&self, a: &A::State, b: &A::State) -> Complex64 {
        self.op.inner(a, b)
    }

    fn scale(&self, x: &mut A::State, s: f64) {
        self.op.scale(x, s);
    }
}

/// Removes the `I/N` component of an operator.
pub fn remove_trace(b: &mut CMatrix) {
    let n = b.nrows();
    let shift = b.trace() / n as f64;
    for i in 0..n {
        b[(i, i)] -= shift;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Iteration,
    ChordTruncation,
    Dense,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMeta {
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(rename = "L", skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    pub eps: f64,
    /// Map kick strength.
    pub k: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_iter: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    /// Eigenvalues outside the unit disk dropped by the iteration method.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub discarded_artifacts: usize,
}

fn is_zero(v: &usize) -> bool {
    *v == 0
}

impl SpectrumMeta {
    pub fn quantum(prop: &CoarseGrainedPropagator) -> Self {
        Self {
            n: Some(prop.dim().get()),
            eps: prop.kernel.epsilon(),
            k: prop.unitary.params.k,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumResult {
    /// Ordered by decreasing modulus.
    pub eigenvalues: Vec<Complex64>,
    pub stable: Vec<bool>,
    pub method: Method,
    pub meta: SpectrumMeta,
}

impl SpectrumResult {
    fn new(mut eigenvalues: Vec<Complex64>, method: Method, meta: SpectrumMeta) -> Self {
        linalg::sort_by_modulus(&mut eigenvalues);
        let stable = vec![true; eigenvalues.len()];
        Self {
            eigenvalues,
            stable,
            method,
            meta,
        }
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn moduli(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|z| z.norm()).collect()
    }

    /// Largest modulus after the first, or 0 if there is none.
    pub fn leading_nontrivial_modulus(&self) -> f64 {
        self.eigenvalues.get(1).map_or(0.0, |z| z.norm())
    }

    /// The eigenvalues that survived [`stability_filter`].
    pub fn stable_eigenvalues(&self) -> Vec<Complex64> {
        self.eigenvalues
            .iter()
            .zip(&self.stable)
            .filter(|(_, s)| **s)
            .map(|(z, _)| *z)
            .collect()
    }
}

/// For each of the first `count` eigenvalues of `reference`, the distance to
/// the nearest eigenvalue of `other`; the maximum is returned.
pub fn leading_mismatch(reference: &[Complex64], other: &[Complex64], count: usize) -> f64 {
    reference
        .iter()
        .take(count)
        .map(|z| {
            other
                .iter()
                .map(|w| (z - w).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentSequence {
    /// `m_t` for `t = 0..len`.
    pub m: Vec<Complex64>,
    /// `ln` of the accumulated rescaling of the iterate at each `t`.
    pub scale_log: Vec<f64>,
    /// Set when the iterate vanished before all requested moments existed.
    pub truncated: bool,
}

impl MomentSequence {
    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Largest `k` for which the Hankel pair can be formed.
    pub fn max_k(&self) -> usize {
        self.m.len() / 2
    }
}

/// `m_t = <x0, A^t x0>` for `t = 0..=2k`. The iterate is renormalized to
/// unit norm after every step; `scale_log` carries the discarded factors.
pub fn compute_moments<A: LinearOperator>(op: &A, x0: &A::State, k: usize) -> Result<MomentSequence> {
    if k == 0 {
        return Err(Error::InvalidParameter("moment truncation k must be >= 1".into()));
    }
    let mut m = Vec::with_capacity(2 * k + 1);
    let mut scale_log = Vec::with_capacity(2 * k + 1);
    let mut x = x0.clone();
    let mut log_s = 0.0;
    let mut truncated = false;
    for t in 0..=2 * k {
        if t > 0 {
            x = op.apply(&x);
            let norm = op.inner(&x, &x).re.max(0.0).sqrt();
            if !(norm > 0.0 && norm.is_finite()) {
                truncated = true;
                break;
            }
            op.scale(&mut x, 1.0 / norm);
            log_s += norm.ln();
        }
        m.push(op.inner(x0, &x) * log_s.exp());
        scale_log.push(log_s);
    }
    Ok(MomentSequence {
        m,
        scale_log,
        truncated,
    })
}

/// Quantum moments of a density matrix.
pub fn compute_state_moments(
    prop: &CoarseGrainedPropagator,
    rho0: &DensityMatrix,
    k: usize,
) -> Result<MomentSequence> {
    crate::torus::check_square(prop.dim(), rho0.matrix())?;
    compute_moments(prop, rho0.matrix(), k)
}

/// `([S], [O])` with `[S]_ij = m_(i+j+1)`, `[O]_ij = m_(i+j)`.
pub fn hankel_matrices(m: &MomentSequence, k: usize) -> Result<(CMatrix, CMatrix)> {
    if m.len() < 2 * k {
        return Err(Error::InvalidParameter(format!(
            "Hankel size {k} needs {} moments, have {}",
            2 * k,
            m.len()
        )));
    }
    let s = CMatrix::from_fn(k, k, |i, j| m.m[i + j + 1]);
    let o = CMatrix::from_fn(k, k, |i, j| m.m[i + j]);
    Ok((s, o))
}

/// Generalized eigenvalues of the Hankel pair, computed on the numerical
/// range of `[O]`.
pub fn iteration_spectrum(m: &MomentSequence, k: usize, svd_tol: f64) -> Result<SpectrumResult> {
    if k < 2 {
        return Err(Error::InvalidParameter("iteration method needs k >= 2".into()));
    }
    let k = k.min(m.max_k());
    if k == 0 {
        return Err(Error::NoUsableOverlap);
    }
    // Rescaling m_t -> m_t / r^t is the similarity diag(r^-i) on both Hankel
    // matrices and maps lambda -> lambda / r; choosing r as the mean decay
    // per step keeps the fast-decaying tail of [O] above the SVD cutoff.
    let last = 2 * k - 1;
    let r = (m.m[last].norm() / m.m[0].norm()).powf(1.0 / last as f64);
    let r = if r.is_finite() && r > 0.0 { r } else { 1.0 };
    let balanced = MomentSequence {
        m: m.m[..=last].iter().enumerate().map(|(t, z)| z / r.powi(t as i32)).collect(),
        scale_log: m.scale_log[..=last].to_vec(),
        truncated: m.truncated,
    };
    let (s, o) = hankel_matrices(&balanced, k)?;
    let svd = linalg::svd(&o)?;
    let smax = svd.s.first().copied().unwrap_or(0.0);
    let rank = svd.s.iter().take_while(|&&v| v > svd_tol * smax && v > 0.0).count();
    if rank == 0 || !smax.is_finite() {
        return Err(Error::NoUsableOverlap);
    }
    let ur = svd.u.columns(0, rank);
    let vr = svd.v.columns(0, rank);
    let mut reduced = ur.adjoint() * s * vr;
    for (i, mut row) in reduced.row_iter_mut().enumerate() {
        row.iter_mut().for_each(|z| *z /= svd.s[i]);
    }
    let all: Vec<Complex64> = linalg::eigenvalues(&reduced)?.into_iter().map(|z| z * r).collect();
    let kept: Vec<Complex64> = all
        .iter()
        .copied()
        .filter(|z| z.norm() <= 1.0 + CONTRACTIVITY_TOL)
        .collect();
    let meta = SpectrumMeta {
        k_iter: Some(k),
        discarded_artifacts: all.len() - kept.len(),
        ..SpectrumMeta::default()
    };
    Ok(SpectrumResult::new(kept, Method::Iteration, meta))
}

/// Runs the iteration method at `k` and `k - 1` and keeps only the
/// eigenvalues that persist.
pub fn stable_iteration_spectrum(m: &MomentSequence, k: usize, svd_tol: f64, delta: f64) -> Result<SpectrumResult> {
    let res_k = iteration_spectrum(m, k, svd_tol)?;
    let res_km1 = if k > 2 {
        iteration_spectrum(m, k - 1, svd_tol)?
    } else {
        SpectrumResult::new(Vec::new(), Method::Iteration, SpectrumMeta::default())
    };
    Ok(stability_filter(&res_k, &res_km1, delta))
}

/// Marks an eigenvalue of `res_k` stable iff `res_km1` has one within `delta`.
pub fn stability_filter(res_k: &SpectrumResult, res_km1: &SpectrumResult, delta: f64) -> SpectrumResult {
    let stable = res_k
        .eigenvalues
        .iter()
        .map(|z| res_km1.eigenvalues.iter().any(|w| (z - w).norm() < delta))
        .collect();
    SpectrumResult {
        stable,
        ..res_k.clone()
    }
}

/// Chord components kept by a window of half-width `window`, in a fixed
/// order (the origin first).
pub fn chord_window(n: usize, window: usize) -> Vec<LatticePoint> {
    let w = window.min(n / 2) as i64;
    let nn = n as i64;
    let mut offsets: Vec<i64> = Vec::new();
    for d in 0..=w {
        for o in [d, -d] {
            let r = o.rem_euclid(nn);
            if !offsets.iter().any(|&x| x.rem_euclid(nn) == r) {
                offsets.push(o);
            }
        }
    }
    let mut out = Vec::with_capacity(offsets.len().pow(2));
    for &q in &offsets {
        for &p in &offsets {
            out.push(LatticePoint {
                q: q.rem_euclid(nn) as usize,
                p: p.rem_euclid(nn) as usize,
            });
        }
    }
    out
}

/// Smallest window outside which every channel eigenvalue is below `cut`.
pub fn safe_window(prop: &CoarseGrainedPropagator, cut: f64) -> usize {
    let n = prop.dim().get();
    if prop.kernel.is_noiseless() {
        return n / 2;
    }
    (0..n / 2)
        .find(|&w| (w + 1..=n / 2).all(|r| prop.kernel.max_eig_on_shell(r) < cut))
        .unwrap_or(n / 2)
}

/// Superoperator in the translation basis, restricted to the components in
/// `chord_window(N, window)`: entry `(a, b)` is `D(a) (1/N) tr(T_a^dag U T_b U^dag)`.
pub fn chord_truncated_matrix(
    prop: &CoarseGrainedPropagator,
    window: usize,
    limits: &ResourceLimits,
) -> Result<CMatrix> {
    let n = prop.dim().get();
    let idx = chord_window(n, window);
    ResourceLimits::check("chord-truncated dimension", idx.len(), limits.chord_max_dim)?;
    let mut out = CMatrix::zeros(idx.len(), idx.len());
    for (col, b) in idx.iter().enumerate() {
        let full = prop.unitary_chord_column((b.q, b.p));
        for (row, a) in idx.iter().enumerate() {
            out[(row, col)] = full[(a.q, a.p)] * prop.kernel.chord_eigs[(a.q, a.p)];
        }
    }
    Ok(out)
}

pub fn chord_truncation_spectrum(
    prop: &CoarseGrainedPropagator,
    window: usize,
    limits: &ResourceLimits,
) -> Result<SpectrumResult> {
    let n = prop.dim().get();
    if window > n {
        return Err(Error::InvalidParameter(format!("window {window} exceeds N = {n}")));
    }
    let m = chord_truncated_matrix(prop, window, limits)?;
    let meta = SpectrumMeta {
        window: Some(window),
        ..SpectrumMeta::quantum(prop)
    };
    Ok(SpectrumResult::new(linalg::eigenvalues(&m)?, Method::ChordTruncation, meta))
}

/// Every eigenvalue of the dense superoperator.
pub fn dense_spectrum(prop: &CoarseGrainedPropagator, limits: &ResourceLimits) -> Result<SpectrumResult> {
    let s = dense_superoperator(prop, limits)?;
    Ok(SpectrumResult::new(
        linalg::eigenvalues(&s)?,
        Method::Dense,
        SpectrumMeta::quantum(prop),
    ))
}

/// Iteration-method spectrum of `prop` seeded with `rho0`.
///
/// `S` and `S^dag` both fix `I/N`, so the invariant decouples from the
/// moments exactly: `<rho0, S^t rho0> = tr(rho0)^2 / N + <d0, S^t d0>` with
/// `d0 = rho0 - tr(rho0) I/N`. The moments are taken on `d0`, and `lambda_0 = 1`
/// is restored afterwards; otherwise the constant `1/N` swamps every decaying
/// mode after a few steps.
pub fn quantum_iteration_spectrum(
    prop: &CoarseGrainedPropagator,
    rho0: &DensityMatrix,
    k: usize,
    svd_tol: f64,
    delta: f64,
) -> Result<SpectrumResult> {
    crate::torus::check_square(prop.dim(), rho0.matrix())?;
    let mut d0 = rho0.matrix().clone();
    remove_trace(&mut d0);
    let traceless = Projected {
        op: prop,
        project: remove_trace,
    };
    let m = compute_moments(&traceless, &d0, k)?;
    let res = stable_iteration_spectrum(&m, k, svd_tol, delta)?;
    Ok(with_invariant(res, SpectrumMeta::quantum(prop)))
}

/// Prepends the exact eigenvalue 1 to a spectrum computed on the
/// complement of the invariant.
pub(crate) fn with_invariant(mut res: SpectrumResult, meta: SpectrumMeta) -> SpectrumResult {
    res.eigenvalues.insert(0, Complex64::new(1.0, 0.0));
    res.stable.insert(0, true);
    res.meta = SpectrumMeta {
        k_iter: res.meta.k_iter,
        discarded_artifacts: res.meta.discarded_artifacts,
        ..meta
    };
    res
}
