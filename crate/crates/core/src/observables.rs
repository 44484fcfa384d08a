//! Time series along the coarse-grained evolution, and slope fits.
//!
//! Everything is built from the traceless part `d_n = S^n (rho0 - I/N)`:
//! since `S` is unital, `rho_n = I/N + d_n`, so
//!
//! * `C_n = tr(rho0 rho_n) - 1/N = <d_0, d_n>`,
//! * `tr rho_n^2 = 1/N + tr d_n^2`,
//!
//! and no subtraction of nearly equal numbers is needed. The iterate is
//! renormalized every step with its log-norm carried separately, so the
//! subtracted entropy stays finite long after `tr d_n^2` would underflow.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channels::CoarseGrainedPropagator;
use crate::error::{Error, Result};
use crate::spectral::remove_trace;
use crate::torus::{check_square, coherent_state, hs_inner, CMatrix, DensityMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    Autocorrelation,
    LinearEntropy,
    LinearEntropySubtracted,
    Loschmidt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    #[serde(rename = "N")]
    pub n: usize,
    pub eps: f64,
    pub k: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k2: Option<f64>,
    /// Number of initial states averaged into the series.
    pub states: usize,
}

impl SeriesMeta {
    fn of(prop: &CoarseGrainedPropagator) -> Self {
        Self {
            n: prop.dim().get(),
            eps: prop.kernel.epsilon(),
            k: prop.unitary.params.k,
            k2: None,
            states: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    /// Value at step `n` for `n = 0..len`.
    pub values: Vec<f64>,
    pub kind: SeriesKind,
    pub meta: SeriesMeta,
    /// Set when the series stops early because the state vanished.
    pub truncated: bool,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `d_n / |d_n|` and `ln |d_n|` (Hilbert-Schmidt norm) for `n = 0..=steps`,
/// stopping early if the iterate vanishes.
struct TracelessOrbit {
    unit: Vec<CMatrix>,
    log_norm: Vec<f64>,
}

fn traceless_orbit(rho0: &CMatrix, prop: &CoarseGrainedPropagator, steps: usize) -> TracelessOrbit {
    let mut d = rho0.clone();
    remove_trace(&mut d);
    let mut unit = Vec::with_capacity(steps + 1);
    let mut log_norm = Vec::with_capacity(steps + 1);
    let mut acc = 0.0;
    for n in 0..=steps {
        if n > 0 {
            d = prop.apply(&d);
            remove_trace(&mut d);
        }
        let norm = d.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            break;
        }
        d.unscale_mut(norm);
        acc += norm.ln();
        unit.push(d.clone());
        log_norm.push(acc);
    }
    TracelessOrbit { unit, log_norm }
}

fn check_steps(steps: usize) -> Result<()> {
    if steps == 0 {
        Err(Error::InvalidParameter("number of steps T must be >= 1".into()))
    } else {
        Ok(())
    }
}

fn inner(a: &CMatrix, b: &CMatrix) -> Complex64 {
    hs_inner(a, b).expect("orbit states share a dimension")
}

/// `C_n = Re tr(rho0 rho_n) - 1/N`.
pub fn autocorrelation_series(rho0: &DensityMatrix, prop: &CoarseGrainedPropagator, steps: usize) -> Result<TimeSeries> {
    check_steps(steps)?;
    check_square(prop.dim(), rho0.matrix())?;
    let orbit = traceless_orbit(rho0.matrix(), prop, steps);
    let mut values = vec![0.0; steps + 1];
    if let (Some(u0), Some(l0)) = (orbit.unit.first(), orbit.log_norm.first()) {
        for (n, (u, l)) in orbit.unit.iter().zip(&orbit.log_norm).enumerate() {
            values[n] = inner(u0, u).re * (l0 + l).exp();
        }
    }
    // a vanished iterate means the state reached I/N exactly: C_n = 0 onwards
    Ok(TimeSeries {
        values,
        kind: SeriesKind::Autocorrelation,
        meta: SeriesMeta::of(prop),
        truncated: false,
    })
}

/// `S_n = -ln tr rho_n^2`, or `-ln tr d_n^2` when `subtract_invariant`.
pub fn linear_entropy_series(
    rho0: &DensityMatrix,
    prop: &CoarseGrainedPropagator,
    steps: usize,
    subtract_invariant: bool,
) -> Result<TimeSeries> {
    check_steps(steps)?;
    check_square(prop.dim(), rho0.matrix())?;
    let n_dim = prop.dim().get() as f64;
    let orbit = traceless_orbit(rho0.matrix(), prop, steps);
    let (values, truncated, kind) = if subtract_invariant {
        let values: Vec<f64> = orbit.log_norm.iter().map(|l| -2.0 * l).collect();
        let truncated = values.len() < steps + 1;
        (values, truncated, SeriesKind::LinearEntropySubtracted)
    } else {
        let values = (0..=steps)
            .map(|n| {
                let d2 = orbit.log_norm.get(n).map_or(0.0, |l| (2.0 * l).exp());
                -(1.0 / n_dim + d2).ln()
            })
            .collect();
        (values, false, SeriesKind::LinearEntropy)
    };
    Ok(TimeSeries {
        values,
        kind,
        meta: SeriesMeta::of(prop),
        truncated,
    })
}

/// `M_n = Re tr(S^n d_0 S'^n d_0)`, the echo of the invariant-subtracted
/// initial state under two propagators.
pub fn loschmidt_series(
    rho0: &DensityMatrix,
    prop: &CoarseGrainedPropagator,
    prop2: &CoarseGrainedPropagator,
    steps: usize,
) -> Result<TimeSeries> {
    check_steps(steps)?;
    if prop.dim() != prop2.dim() {
        return Err(Error::DimensionMismatch {
            expected: prop.dim().get(),
            found: prop2.dim().get(),
        });
    }
    check_square(prop.dim(), rho0.matrix())?;
    let a = traceless_orbit(rho0.matrix(), prop, steps);
    let b = traceless_orbit(rho0.matrix(), prop2, steps);
    let values = (0..=steps)
        .map(|n| match (a.unit.get(n), b.unit.get(n)) {
            (Some(x), Some(y)) => inner(x, y).re * (a.log_norm[n] + b.log_norm[n]).exp(),
            _ => 0.0,
        })
        .collect();
    let mut meta = SeriesMeta::of(prop);
    meta.k2 = Some(prop2.unitary.params.k);
    Ok(TimeSeries {
        values,
        kind: SeriesKind::Loschmidt,
        meta,
        truncated: false,
    })
}

fn check_window(series: &TimeSeries, n_min: usize, n_max: usize) -> Result<()> {
    if n_max < n_min + 3 {
        return Err(Error::InvalidParameter(format!(
            "fit window [{n_min}, {n_max}] needs at least four points"
        )));
    }
    if n_max >= series.len() {
        return Err(Error::InvalidParameter(format!(
            "fit window ends at {n_max} but the series has {} points",
            series.len()
        )));
    }
    Ok(())
}

/// Least-squares slope of `y` against its index offset `x0`.
fn ls_slope(x0: usize, y: &[f64]) -> f64 {
    let m = y.len() as f64;
    let xs: Vec<f64> = (0..y.len()).map(|i| (x0 + i) as f64).collect();
    let xbar = xs.iter().sum::<f64>() / m;
    let ybar = y.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(y).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
    sxy / sxx
}

/// Least-squares slope of `ln |v_n|` for `n` in `[n_min, n_max]`.
pub fn fit_decay_rate(series: &TimeSeries, n_min: usize, n_max: usize) -> Result<f64> {
    check_window(series, n_min, n_max)?;
    let window = &series.values[n_min..=n_max];
    if let Some((i, &v)) = window.iter().enumerate().find(|(_, v)| !(v.abs() > 0.0 && v.is_finite())) {
        return Err(Error::NonPositiveValue {
            index: n_min + i,
            value: v,
        });
    }
    let logs: Vec<f64> = window.iter().map(|v| v.abs().ln()).collect();
    Ok(ls_slope(n_min, &logs))
}

/// Least-squares slope of the values themselves on `[n_min, n_max]`, for
/// series that are already logarithms (the entropies).
pub fn fit_linear_slope(series: &TimeSeries, n_min: usize, n_max: usize) -> Result<f64> {
    check_window(series, n_min, n_max)?;
    let window = &series.values[n_min..=n_max];
    if let Some((i, &v)) = window.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonPositiveValue {
            index: n_min + i,
            value: v,
        });
    }
    Ok(ls_slope(n_min, window))
}

/// Magnitudes below this count as underflowed when choosing fit windows.
pub const UNDERFLOW_FLOOR: f64 = 1e-280;

/// Steps `0..=n` with `S_n < 0.8 ln N` (unsubtracted entropy), as an
/// inclusive range; `None` if fewer than four steps qualify.
pub fn pre_saturation_window(entropy: &TimeSeries, n_dim: usize) -> Option<(usize, usize)> {
    let limit = 0.8 * (n_dim as f64).ln();
    let count = entropy.values.iter().take_while(|&&s| s < limit).count();
    (count >= 4).then(|| (0, count - 1))
}

/// Last third of the leading stretch of the series whose magnitudes stay
/// finite and above [`UNDERFLOW_FLOOR`]; `None` if it has fewer than four
/// points.
pub fn late_window(series: &TimeSeries) -> Option<(usize, usize)> {
    let valid = series
        .values
        .iter()
        .take_while(|v| v.is_finite() && v.abs() > UNDERFLOW_FLOOR)
        .count();
    if valid == 0 {
        return None;
    }
    let end = valid - 1;
    let start = (2 * valid) / 3;
    let start = start.min(end.saturating_sub(3));
    (end >= start + 3).then_some((start, end))
}

/// Late window for an already-logarithmic series: the last third of the
/// series.
pub fn late_window_log(series: &TimeSeries) -> Option<(usize, usize)> {
    let len = series.values.iter().take_while(|v| v.is_finite()).count();
    if len < 4 {
        return None;
    }
    let end = len - 1;
    let start = ((2 * len) / 3).min(end - 3);
    Some((start, end))
}

/// Coherent-state centers drawn uniformly on the torus from `seed`.
pub fn initial_centers(count: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| (rng.gen::<f64>(), rng.gen::<f64>())).collect()
}

/// Pointwise mean of `series_of(rho)` over `count` coherent states at
/// seeded random centers. Series of unequal length are cut to the shortest.
pub fn averaged_series<F>(prop: &CoarseGrainedPropagator, count: usize, seed: u64, series_of: F) -> Result<TimeSeries>
where
    F: Fn(&DensityMatrix) -> Result<TimeSeries>,
{
    if count == 0 {
        return Err(Error::InvalidParameter("need at least one initial state".into()));
    }
    let mut acc: Option<TimeSeries> = None;
    for (q, p) in initial_centers(count, seed) {
        let rho = coherent_state(prop.dim(), q, p)?;
        let s = series_of(&rho)?;
        acc = Some(match acc {
            None => s,
            Some(mut a) => {
                let len = a.len().min(s.len());
                a.truncated |= s.truncated || a.len() != s.len();
                a.values.truncate(len);
                a.values.iter_mut().zip(&s.values).for_each(|(x, y)| *x += y);
                a
            }
        });
    }
    let mut out = acc.expect("count >= 1");
    out.values.iter_mut().for_each(|v| *v /= count as f64);
    out.meta.states = count;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::noise_kernel_or_identity;
    use crate::maps::{quantize_perturbed_cat, PerturbedCatParams};
    use crate::torus::HilbertDim;
    use approx::assert_abs_diff_eq;

    fn prop(n: usize, eps: f64, k: f64) -> CoarseGrainedPropagator {
        let d = HilbertDim::new(n).unwrap();
        let u = quantize_perturbed_cat(d, PerturbedCatParams::new(k).unwrap()).unwrap();
        CoarseGrainedPropagator::new(u, noise_kernel_or_identity(d, eps).unwrap()).unwrap()
    }

    fn series(values: Vec<f64>) -> TimeSeries {
        TimeSeries {
            values,
            kind: SeriesKind::Autocorrelation,
            meta: SeriesMeta {
                n: 2,
                eps: 0.0,
                k: 0.0,
                k2: None,
                states: 1,
            },
            truncated: false,
        }
    }

    #[test]
    fn initial_values_for_pure_state() {
        let p = prop(16, 0.1, 0.01);
        let rho = coherent_state(p.dim(), 0.3, 0.7).unwrap();
        let c = autocorrelation_series(&rho, &p, 3).unwrap();
        assert_eq!(c.len(), 4);
        assert_abs_diff_eq!(c.values[0], 1.0 - 1.0 / 16.0, epsilon = 1e-12);
        let s = linear_entropy_series(&rho, &p, 3, false).unwrap();
        assert_abs_diff_eq!(s.values[0], 0.0, epsilon = 1e-12);
        let m = loschmidt_series(&rho, &p, &prop(16, 0.1, 0.02), 3).unwrap();
        assert_abs_diff_eq!(m.values[0], 1.0 - 1.0 / 16.0, epsilon = 1e-12);
    }

    #[test]
    fn autocorrelation_matches_direct_evolution() {
        let p = prop(12, 0.1, 0.01);
        let rho = coherent_state(p.dim(), 0.3, 0.7).unwrap();
        let c = autocorrelation_series(&rho, &p, 5).unwrap();
        let s = linear_entropy_series(&rho, &p, 5, false).unwrap();
        let mut r = rho.matrix().clone();
        for n in 0..=5 {
            let direct = hs_inner(rho.matrix(), &r).unwrap().re - 1.0 / 12.0;
            assert_abs_diff_eq!(c.values[n], direct, epsilon = 1e-12);
            let purity = hs_inner(&r, &r).unwrap().re;
            assert_abs_diff_eq!(s.values[n], -purity.ln(), epsilon = 1e-10);
            r = p.apply(&r);
        }
    }

    #[test]
    fn depolarized_correlation_vanishes() {
        let p = prop(8, 2.0, 0.01);
        let rho = coherent_state(p.dim(), 0.3, 0.7).unwrap();
        let c = autocorrelation_series(&rho, &p, 4).unwrap();
        assert!(c.values[1..].iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn identical_echo_is_subtracted_purity() {
        let p = prop(16, 0.1, 0.01);
        let rho = coherent_state(p.dim(), 0.2, 0.9).unwrap();
        let m = loschmidt_series(&rho, &p, &p, 8).unwrap();
        let s = linear_entropy_series(&rho, &p, 8, true).unwrap();
        for (mn, sn) in m.values.iter().zip(&s.values) {
            assert!((mn - (-sn).exp()).abs() <= 1e-12 * mn.abs().max(1e-300));
        }
    }

    #[test]
    fn entropy_monotone_and_bounds() {
        let p = prop(16, 0.1, 0.01);
        let rho = coherent_state(p.dim(), 0.3, 0.7).unwrap();
        let s = linear_entropy_series(&rho, &p, 20, false).unwrap();
        for w in s.values.windows(2) {
            assert!(w[1] >= w[0] - 1e-10);
        }
        assert!(*s.values.last().unwrap() <= (16f64).ln() + 1e-12);
        let c = autocorrelation_series(&rho, &p, 20).unwrap();
        let m = loschmidt_series(&rho, &p, &prop(16, 0.1, 0.02), 20).unwrap();
        for v in c.values.iter() {
            assert!(v.abs() <= c.values[0] + 1e-10);
        }
        for v in m.values.iter() {
            assert!(v.abs() <= m.values[0] + 1e-10);
        }
    }

    #[test]
    fn geometric_and_constant_fits() {
        let g = series((0..20).map(|n| 0.8f64.powi(n)).collect());
        assert_abs_diff_eq!(fit_decay_rate(&g, 2, 15).unwrap(), 0.8f64.ln(), epsilon = 1e-12);
        let c = series(vec![3.0; 10]);
        assert_abs_diff_eq!(fit_decay_rate(&c, 0, 9).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit_linear_slope(&c, 0, 9).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn noisy_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v = (0..40)
            .map(|n| 0.8f64.powi(n) * (1.0 + 0.01 * rng.gen_range(-1.0..1.0)))
            .collect();
        assert_abs_diff_eq!(fit_decay_rate(&series(v), 0, 39).unwrap(), 0.8f64.ln(), epsilon = 1e-2);
    }

    #[test]
    fn fit_rejects_zero_and_short_windows() {
        let mut v: Vec<f64> = (0..10).map(|n| 0.5f64.powi(n)).collect();
        v[6] = 0.0;
        match fit_decay_rate(&series(v.clone()), 2, 8) {
            Err(Error::NonPositiveValue { index, .. }) => assert_eq!(index, 6),
            other => panic!("unexpected {other:?}"),
        }
        assert!(fit_decay_rate(&series(v), 0, 2).is_err());
    }

    #[test]
    fn windows() {
        let s = series(vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0]);
        assert_eq!(pre_saturation_window(&s, 16), Some((0, 4)));
        assert_eq!(pre_saturation_window(&s, 2), None);
        let g = series((0..30).map(|n| 0.1f64.powi(n)).collect());
        let (a, b) = late_window(&g).unwrap();
        assert_eq!((a, b), (20, 29));
        let short = series((0..400).map(|n| 0.1f64.powi(n)).collect());
        let (_, b) = late_window(&short).unwrap();
        assert!(short.values[b].abs() > UNDERFLOW_FLOOR);
    }

    #[test]
    fn averaging() {
        let p = prop(12, 0.1, 0.01);
        let one = averaged_series(&p, 1, 5, |r| autocorrelation_series(r, &p, 6)).unwrap();
        let (q, pp) = initial_centers(1, 5)[0];
        let direct = autocorrelation_series(&coherent_state(p.dim(), q, pp).unwrap(), &p, 6).unwrap();
        assert_eq!(one.values, direct.values);
        let a = averaged_series(&p, 10, 5, |r| autocorrelation_series(r, &p, 6)).unwrap();
        let b = averaged_series(&p, 10, 5, |r| autocorrelation_series(r, &p, 6)).unwrap();
        assert_eq!(a.meta.states, 10);
        assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
        let rho = coherent_state(p.dim(), 0.4, 0.1).unwrap();
        let twice = averaged_series(&p, 2, 0, |_| autocorrelation_series(&rho, &p, 6)).unwrap();
        let single = autocorrelation_series(&rho, &p, 6).unwrap();
        for (x, y) in twice.values.iter().zip(&single.values) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-15);
        }
    }
}
