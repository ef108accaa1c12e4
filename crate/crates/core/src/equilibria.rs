//! Stationary points of the moment dynamics and the phase diagram.
//!
//! Every equilibrium is determined by its `m_sigma` component, which solves
//! the scalar self-consistency equation `m = Gamma(m)`. The remaining
//! components follow in closed form, except `m_sigma_omega` and
//! `m_sigma_omega_eta`, which solve a 2x2 linear system.

use nalgebra::{DMatrix, SMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fluctuations::drift_a2;
use crate::limit::rhs6;
use crate::model::{ModelParams, MomentVector};

pub type Matrix6 = SMatrix<f64, 6, 6>;

/// Number of grid cells used to bracket roots of `Gamma(m) - m` on `[0, 1]`.
pub const ROOT_GRID: usize = 10_000;
/// Roots closer than this are merged (and flagged as near-degenerate).
pub const ROOT_MERGE: f64 = 1e-6;
const STABILITY_TOL: f64 = 1e-9;

/// Self-consistency map
/// `Gamma(m) = tanh(b) sinh(g m) cosh(g m) / (cosh^2(g m) + sinh^2(g h))`.
pub fn gamma_map(m: f64, params: &ModelParams) -> f64 {
    let u = params.gamma * m;
    let (s, c) = (u.sinh(), u.cosh());
    let sh = (params.gamma * params.h).sinh();
    params.beta.tanh() * s * c / (c * c + sh * sh)
}

/// Closed-form derivative of [`gamma_map`] in `m`.
pub fn gamma_map_derivative(m: f64, params: &ModelParams) -> f64 {
    let u = params.gamma * m;
    let c2 = u.cosh().powi(2);
    let s2h = (params.gamma * params.h).sinh().powi(2);
    params.gamma * params.beta.tanh() * ((1.0 + 2.0 * s2h) * c2 - s2h) / (c2 + s2h).powi(2)
}

// In terms of C = cosh(2 g m), S = sinh(2 g m), K = cosh(2 g h):
//   Gamma = T S / (C + K),  Gamma' = 2 T g (1 + K C) / (C + K)^2.
fn gamma_second_derivative(m: f64, params: &ModelParams) -> f64 {
    let (g, t) = (params.gamma, params.beta.tanh());
    let (c, s) = ((2.0 * g * m).cosh(), (2.0 * g * m).sinh());
    let k = (2.0 * g * params.h).cosh();
    4.0 * t * g * g * s * (k * k - k * c - 2.0) / (c + k).powi(3)
}

fn gamma_dh(m: f64, params: &ModelParams) -> (f64, f64) {
    let (g, t) = (params.gamma, params.beta.tanh());
    let (c, s) = ((2.0 * g * m).cosh(), (2.0 * g * m).sinh());
    let k = (2.0 * g * params.h).cosh();
    let dk_dh = 2.0 * g * (2.0 * g * params.h).sinh();
    let dgamma_dk = -t * s / (c + k).powi(2);
    let dprime_dk = 2.0 * t * g * (c * c - k * c - 2.0) / (c + k).powi(3);
    (dgamma_dk * dk_dh, dprime_dk * dk_dh)
}

/// The curve `h = arccosh(sqrt(gamma tanh b)) / gamma` along which the
/// neutral equilibrium changes stability; `None` when `gamma tanh b < 1`.
pub fn critical_curve_h(beta: f64, gamma: f64) -> Option<f64> {
    let x = gamma * beta.tanh();
    if !(gamma > 0.0) || x < 1.0 {
        return None;
    }
    Some(x.sqrt().acosh() / gamma)
}

/// Point `(gamma_bar, h_bar)` at which the continuous and fold boundaries
/// separate: `gamma_bar = 3 / (2 tanh b)`.
pub fn tricritical_point(beta: f64) -> Result<(f64, f64)> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::InvalidParams(format!("beta must be positive, got {beta}")));
    }
    let g = 1.5 / beta.tanh();
    let h = critical_curve_h(beta, g).expect("gamma_bar tanh(beta) = 3/2 > 1");
    Ok((g, h))
}

/// Neutral equilibrium `m*0` (with `m_eta = 0`).
pub fn neutral_equilibrium(params: &ModelParams) -> MomentVector {
    let b = params.beta;
    let gh = params.gamma * params.h;
    let m_so = (b.tanh() * gh.tanh() * gh.sinh() + b.sinh()) / (b.cosh() + gh.cosh());
    MomentVector([0.0, 0.0, 0.0, m_so, b.tanh() * gh.tanh(), gh.tanh(), 0.0])
}

/// Full equilibrium with the given `m_sigma` root (and `m_eta = 0`).
pub fn reconstruct_equilibrium(m_sigma: f64, params: &ModelParams) -> MomentVector {
    let (b, g) = (params.beta, params.gamma);
    let gh = g * params.h;
    let (cb, sb) = (b.cosh(), b.sinh());
    let (ch, sh) = (gh.cosh(), gh.sinh());
    let a = g * m_sigma;
    let (ca, sa) = (a.cosh(), a.sinh());
    let denom = ca * ca + sh * sh;
    let m_w = sa * ca / denom;
    let m_we = gh.tanh() * ch * ch / denom;
    let m_se = b.tanh() * m_we;
    // stationarity of the sigma-omega and sigma-omega-eta rows:
    //   [d, sh sa; sh sa, d] (m_so, m_soe) = rhs,  d = cb + ch ca
    let d = cb + ch * ca;
    let r1 = m_sigma * ch * sa + m_se * sh * ca + sb;
    let r2 = m_sigma * sh * ca + m_se * ch * sa;
    let off = sh * sa;
    let det = d * d - off * off;
    let m_so = (d * r1 - off * r2) / det;
    let m_soe = (d * r2 - off * r1) / det;
    MomentVector([0.0, m_sigma, m_w, m_so, m_se, m_we, m_soe])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Unstable,
    Neutral,
}

fn classify(max_re: f64) -> Stability {
    if max_re > STABILITY_TOL {
        Stability::Unstable
    } else if max_re < -STABILITY_TOL {
        Stability::Stable
    } else {
        Stability::Neutral
    }
}

/// Where a stability label came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    /// Closed-form eigenvalues at the neutral equilibrium.
    Analytic,
    /// Eigenvalues of the Jacobian computed numerically.
    Numerical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Root {
    pub m_sigma: f64,
    pub equilibrium: MomentVector,
    pub stability: Stability,
    pub provenance: Provenance,
    /// Largest real part of the Jacobian spectrum.
    pub max_real_eigenvalue: f64,
    /// Set when another root was merged into this one.
    pub near_fold: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub params: ModelParams,
    /// Sorted by `m_sigma`; always contains 0, nonzero roots in ± pairs.
    pub roots: Vec<Root>,
    /// Number of strictly positive roots.
    pub phase: u8,
    /// Disagreements between root counting and the analytic criterion.
    pub diagnostics: Vec<String>,
}

impl PhasePoint {
    pub fn max_positive_root(&self) -> Option<f64> {
        self.roots.iter().map(|r| r.m_sigma).filter(|&m| m > 0.0).fold(None, |a, m| Some(a.map_or(m, |x: f64| x.max(m))))
    }
}

/// Jacobian of the six dynamic moments computed by central differences.
pub fn numerical_jacobian(m: &MomentVector, params: &ModelParams, step: f64) -> Matrix6 {
    let mut jac = Matrix6::zeros();
    let x0 = m.dynamic();
    let (mut fp, mut fm) = ([0.0; 6], [0.0; 6]);
    for j in 0..6 {
        let mut xp = x0;
        let mut xm = x0;
        xp[j] += step;
        xm[j] -= step;
        rhs6(m.eta(), &xp, params, &mut fp);
        rhs6(m.eta(), &xm, params, &mut fm);
        for i in 0..6 {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * step);
        }
    }
    jac
}

/// Largest real part of the eigenvalues of a 6x6 matrix.
pub fn max_real_eigenvalue(m: &Matrix6) -> f64 {
    m.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Roots of `f` in `(lo, hi]` bracketed on a uniform grid and refined by
/// bisection.
fn bracket_roots(f: impl Fn(f64) -> f64, lo: f64, hi: f64, cells: usize, tol: f64) -> Vec<f64> {
    let mut roots = Vec::new();
    let dx = (hi - lo) / cells as f64;
    let mut x_prev = lo + dx;
    let mut f_prev = f(x_prev);
    if f_prev == 0.0 {
        roots.push(x_prev);
    }
    for k in 2..=cells {
        let x = lo + k as f64 * dx;
        let fx = f(x);
        if fx == 0.0 {
            roots.push(x);
        } else if f_prev != 0.0 && f_prev.signum() != fx.signum() {
            let (mut a, mut b, mut fa) = (x_prev, x, f_prev);
            while b - a > tol {
                let mid = 0.5 * (a + b);
                let fm = f(mid);
                if fm == 0.0 {
                    a = mid;
                    b = mid;
                    break;
                }
                if fm.signum() == fa.signum() {
                    a = mid;
                    fa = fm;
                } else {
                    b = mid;
                }
            }
            roots.push(0.5 * (a + b));
        }
        x_prev = x;
        f_prev = fx;
    }
    roots
}

/// Finds every equilibrium, its stability, and the phase index.
pub fn solve_fixed_points(params: &ModelParams) -> Result<PhasePoint> {
    if !(params.beta > 0.0) || !(params.gamma > 0.0) {
        return Err(Error::InvalidParams("phase analysis needs beta > 0 and gamma > 0".into()));
    }
    let f = |m: f64| gamma_map(m, params) - m;
    let raw = bracket_roots(f, 0.0, 1.0, ROOT_GRID, 1e-12);

    let mut positive: Vec<(f64, bool)> = Vec::new();
    for r in raw {
        if r <= ROOT_MERGE {
            continue;
        }
        match positive.last_mut() {
            Some((prev, flag)) if r - *prev < ROOT_MERGE => {
                *prev = 0.5 * (*prev + r);
                *flag = true;
            }
            _ => positive.push((r, false)),
        }
    }

    let mut roots = Vec::with_capacity(2 * positive.len() + 1);
    let spectrum = jacobian_at_neutral(params);
    let neutral_max = spectrum.closed_form.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    roots.push(Root {
        m_sigma: 0.0,
        equilibrium: neutral_equilibrium(params),
        stability: classify(neutral_max),
        provenance: Provenance::Analytic,
        max_real_eigenvalue: neutral_max,
        near_fold: false,
    });
    for &(m, near_fold) in &positive {
        for sign in [1.0, -1.0] {
            let eq = reconstruct_equilibrium(sign * m, params);
            let jac = drift_a2(&eq, params) * 2.0;
            let max_re = max_real_eigenvalue(&jac);
            roots.push(Root {
                m_sigma: sign * m,
                equilibrium: eq,
                stability: classify(max_re),
                provenance: Provenance::Numerical,
                max_real_eigenvalue: max_re,
                near_fold,
            });
        }
    }
    roots.sort_by(|a, b| a.m_sigma.partial_cmp(&b.m_sigma).unwrap());

    let phase = positive.len() as u8;
    let mut diagnostics = Vec::new();
    let crit = params.criticality();
    if crit > 1e-10 && phase != 1 {
        diagnostics.push(format!("below the critical curve but found {phase} positive roots (expected 1)"));
    }
    if crit < -1e-10 && phase % 2 == 1 {
        diagnostics.push(format!("above the critical curve but found {phase} positive roots (expected 0 or 2)"));
    }
    if positive.iter().any(|r| r.1) {
        diagnostics.push("roots merged near a fold".into());
    }
    Ok(PhasePoint { params: *params, roots, phase, diagnostics })
}

/// Linearization at the neutral equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct NeutralSpectrum {
    /// `DV(m*0)` in the ordering `(sigma, omega, sigma omega, sigma eta,
    /// omega eta, sigma omega eta)`.
    pub jacobian: Matrix6,
    /// `lambda_1 .. lambda_6` of `DV(m*0)`.
    pub closed_form: [f64; 6],
    /// Real parts of the numerically computed eigenvalues, sorted
    /// descending.
    pub numerical: Vec<f64>,
    /// Largest imaginary part magnitude found numerically.
    pub max_imag: f64,
}

/// Builds `DV(m*0)` entry by entry and returns both the closed-form and the
/// numerically computed spectrum.
///
/// `lambda_1, lambda_2` are the eigenvalues of the upper-left 2x2 block
/// `2 [[-cb, sb], [g / ch, -ch]]`, i.e.
/// `-(cb + ch) ± sqrt((cb - ch)^2 + 4 g sb / ch)` scaled by the overall
/// factor 2 of the matrix.
pub fn jacobian_at_neutral(params: &ModelParams) -> NeutralSpectrum {
    let (b, g) = (params.beta, params.gamma);
    let gh = g * params.h;
    let (cb, sb) = (b.cosh(), b.sinh());
    let (ch, sh) = (gh.cosh(), gh.sinh());
    let mut j = Matrix6::zeros();
    j[(0, 0)] = -cb;
    j[(0, 1)] = sb;
    j[(1, 0)] = g / ch;
    j[(1, 1)] = -ch;
    j[(2, 2)] = -(cb + ch);
    j[(2, 3)] = sh;
    j[(3, 3)] = -cb;
    j[(3, 4)] = sb;
    j[(4, 4)] = -ch;
    j[(5, 0)] = sh + g * b.tanh() * gh.tanh() / (cb + ch);
    j[(5, 5)] = -(cb + ch);
    let jacobian = j * 2.0;

    let disc = ((cb - ch).powi(2) + 4.0 * g * sb / ch).sqrt();
    let closed_form = [
        2.0 * (-cb - ch + disc) / 2.0,
        2.0 * (-cb - ch - disc) / 2.0,
        -2.0 * (cb + ch),
        -2.0 * (cb + ch),
        -2.0 * ch,
        -2.0 * cb,
    ];
    let eig = jacobian.complex_eigenvalues();
    let mut numerical: Vec<f64> = eig.iter().map(|z| z.re).collect();
    numerical.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let max_imag = eig.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    NeutralSpectrum { jacobian, closed_form, numerical, max_imag }
}

impl NeutralSpectrum {
    /// `lambda_1`, the only eigenvalue whose sign depends on the parameters.
    pub fn lambda1(&self) -> f64 {
        self.closed_form[0]
    }

    /// Largest distance between the sorted closed-form and numerical
    /// spectra.
    pub fn mismatch(&self) -> f64 {
        let mut cf = self.closed_form.to_vec();
        cf.sort_by(|a, b| b.partial_cmp(a).unwrap());
        cf.iter().zip(&self.numerical).map(|(a, b)| (a - b).abs()).fold(self.max_imag, f64::max)
    }
}

/// Tangency point of `Gamma(m) = m` and `Gamma'(m) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldPoint {
    pub gamma: f64,
    pub h: f64,
    pub m: f64,
    pub residual_value: f64,
    pub residual_slope: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldOptions {
    /// Upper end of the `h` bracket.
    pub h_max: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for FoldOptions {
    fn default() -> Self {
        Self { h_max: 5.0, max_iter: 200, tol: 1e-12 }
    }
}

fn max_excess(params: &ModelParams) -> (f64, f64) {
    // maximize Gamma(m) - m over (0, 1]: coarse grid, then golden section
    let f = |m: f64| gamma_map(m, params) - m;
    let n = 2000;
    let (mut best_m, mut best) = (0.0, 0.0);
    for k in 1..=n {
        let m = k as f64 / n as f64;
        let v = f(m);
        if v > best {
            best = v;
            best_m = m;
        }
    }
    if best_m == 0.0 {
        return (0.0, f(1.0 / n as f64).max(f64::MIN));
    }
    let (mut a, mut b) = ((best_m - 1.0 / n as f64).max(0.0), (best_m + 1.0 / n as f64).min(1.0));
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let x1 = b - phi * (b - a);
        let x2 = a + phi * (b - a);
        if f(x1) > f(x2) {
            b = x2;
        } else {
            a = x1;
        }
    }
    let m = 0.5 * (a + b);
    (m, f(m))
}

/// Locates the fold (saddle-node) boundary at fixed `(beta, gamma)`.
///
/// For `1/tanh(b) <= gamma <= gamma_bar` the fold coincides with the
/// continuous curve and the returned tangency sits at `m = 0`. Past the
/// tricritical point the pair of positive roots is born at the returned
/// `(m, h)`, found by bisection on `h` of `max_m (Gamma(m) - m)` and polished
/// by damped Newton on the tangency system.
pub fn fold_boundary(beta: f64, gamma: f64, opts: FoldOptions) -> Result<Option<FoldPoint>> {
    let Some(h_c) = critical_curve_h(beta, gamma) else {
        return Ok(None);
    };
    let (g_bar, _) = tricritical_point(beta)?;
    let with_h = |h: f64| ModelParams::limit(beta, gamma, h);
    if gamma <= g_bar * (1.0 + 1e-12) {
        let p = with_h(h_c)?;
        return Ok(Some(FoldPoint {
            gamma,
            h: h_c,
            m: 0.0,
            residual_value: 0.0,
            residual_slope: gamma_map_derivative(0.0, &p) - 1.0,
        }));
    }

    // g(h) = max excess is >= 0 just above h_c and negative for large h
    let excess = |h: f64| -> Result<(f64, f64)> { Ok(max_excess(&with_h(h)?)) };
    let (mut lo, mut hi) = (h_c, opts.h_max.max(h_c));
    if excess(hi)?.1 >= 0.0 {
        return Ok(None);
    }
    if excess(lo * (1.0 + 1e-9) + 1e-12)?.1 <= 0.0 {
        return Ok(None);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if excess(mid)?.1 > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    let mut h = 0.5 * (lo + hi);
    let mut m = excess(lo)?.0;

    let residuals = |m: f64, h: f64| -> Result<(f64, f64)> {
        let p = with_h(h)?;
        Ok((gamma_map(m, &p) - m, gamma_map_derivative(m, &p) - 1.0))
    };
    let (mut r1, mut r2) = residuals(m, h)?;
    for _ in 0..opts.max_iter {
        if r1.abs() < opts.tol && r2.abs() < opts.tol {
            break;
        }
        let p = with_h(h)?;
        let (dg_dh, dgp_dh) = gamma_dh(m, &p);
        // J = [[Gamma' - 1, dGamma/dh], [Gamma'', dGamma'/dh]]
        let (a, b) = (gamma_map_derivative(m, &p) - 1.0, dg_dh);
        let (c, d) = (gamma_second_derivative(m, &p), dgp_dh);
        let det = a * d - b * c;
        if det.abs() < 1e-300 {
            break;
        }
        let dm = (d * r1 - b * r2) / det;
        let dh = (a * r2 - c * r1) / det;
        let norm0 = r1.hypot(r2);
        let mut lambda = 1.0;
        loop {
            let (m_new, h_new) = (m - lambda * dm, h - lambda * dh);
            if m_new > 0.0 && h_new >= 0.0 {
                let (n1, n2) = residuals(m_new, h_new)?;
                if n1.hypot(n2) < norm0 || lambda < 1e-6 {
                    m = m_new;
                    h = h_new;
                    r1 = n1;
                    r2 = n2;
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < 1e-6 {
                break;
            }
        }
    }
    if r1.abs() > 1e-10 || r2.abs() > 1e-10 {
        return Err(Error::NoConvergence {
            iterations: opts.max_iter,
            detail: format!("fold residuals {r1:.3e}, {r2:.3e} at m={m}, h={h}"),
        });
    }
    Ok(Some(FoldPoint { gamma, h, m, residual_value: r1, residual_slope: r2 }))
}

/// One cell of a phase-diagram scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub gamma: f64,
    pub h: f64,
    pub phase: Option<u8>,
    pub m_star_max: f64,
    pub lambda1: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub gamma: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseScan {
    pub beta: f64,
    pub points: Vec<ScanPoint>,
    pub continuous_curve: Vec<CurvePoint>,
    pub fold_curve: Vec<CurvePoint>,
    pub tricritical: CurvePoint,
}

/// Evaluates the phase index on a `resolution x resolution` grid (inclusive
/// of both range ends) and samples both boundary curves over the gamma
/// range.
pub fn phase_diagram_scan(beta: f64, gamma_range: (f64, f64), h_range: (f64, f64), resolution: usize) -> Result<PhaseScan> {
    if resolution < 2 || !(gamma_range.0 > 0.0) || gamma_range.1 <= gamma_range.0 || h_range.1 <= h_range.0 || h_range.0 < 0.0 {
        return Err(Error::InvalidParams("scan needs positive ranges and resolution >= 2".into()));
    }
    let lin = |r: (f64, f64), k: usize| r.0 + (r.1 - r.0) * k as f64 / (resolution - 1) as f64;
    let grid: Vec<(f64, f64)> = (0..resolution)
        .flat_map(|i| (0..resolution).map(move |j| (i, j)))
        .map(|(i, j)| (lin(gamma_range, i), lin(h_range, j)))
        .collect();
    let points: Vec<ScanPoint> = grid
        .par_iter()
        .map(|&(gamma, h)| {
            let res = ModelParams::limit(beta, gamma, h).and_then(|p| solve_fixed_points(&p).map(|pp| (p, pp)));
            match res {
                Ok((p, pp)) => ScanPoint {
                    gamma,
                    h,
                    phase: Some(pp.phase),
                    m_star_max: pp.max_positive_root().unwrap_or(0.0),
                    lambda1: jacobian_at_neutral(&p).lambda1(),
                    error: None,
                },
                Err(e) => ScanPoint { gamma, h, phase: None, m_star_max: f64::NAN, lambda1: f64::NAN, error: Some(e.to_string()) },
            }
        })
        .collect();

    let mut continuous_curve = Vec::new();
    let mut fold_curve = Vec::new();
    for i in 0..resolution {
        let gamma = lin(gamma_range, i);
        if let Some(h) = critical_curve_h(beta, gamma) {
            continuous_curve.push(CurvePoint { gamma, h });
        }
        if let Ok(Some(fp)) = fold_boundary(beta, gamma, FoldOptions::default()) {
            fold_curve.push(CurvePoint { gamma, h: fp.h });
        }
    }
    let (tg, th) = tricritical_point(beta)?;
    Ok(PhaseScan { beta, points, continuous_curve, fold_curve, tricritical: CurvePoint { gamma: tg, h: th } })
}

/// Spectrum of a dense matrix as (re, im) pairs; used by diagnostics.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<(f64, f64)> {
    m.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(b: f64, g: f64, h: f64) -> ModelParams {
        ModelParams::limit(b, g, h).unwrap()
    }

    #[test]
    fn gamma_map_basics() {
        let params = p(0.8, 2.3, 0.4);
        assert_eq!(gamma_map(0.0, &params), 0.0);
        assert!((gamma_map(40.0, &params) - 0.8f64.tanh()).abs() < 1e-12);
        assert!((gamma_map(-40.0, &params) + 0.8f64.tanh()).abs() < 1e-12);
        let h0 = p(0.8, 2.3, 0.0);
        for m in [0.1, 0.5, 0.9] {
            assert!((gamma_map(m, &h0) - 0.8f64.tanh() * (2.3 * m).tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn derivative_at_zero() {
        let params = p(0.8, 2.3, 0.4);
        let expected = 2.3 * 0.8f64.tanh() / (2.3f64 * 0.4).cosh().powi(2);
        assert!((gamma_map_derivative(0.0, &params) - expected).abs() < 1e-14);
        let h0 = p(0.8, 2.3, 0.0);
        assert!((gamma_map_derivative(0.0, &h0) - 2.3 * 0.8f64.tanh()).abs() < 1e-14);
    }

    #[test]
    fn second_derivative_and_h_partials_match_differences() {
        let params = p(1.1, 2.7, 0.35);
        for m in [0.05, 0.3, 0.7] {
            let e = 1e-5;
            let fd = (gamma_map_derivative(m + e, &params) - gamma_map_derivative(m - e, &params)) / (2.0 * e);
            assert!((gamma_second_derivative(m, &params) - fd).abs() < 1e-7);
            let (dg, dgp) = gamma_dh(m, &params);
            let up = p(1.1, 2.7, 0.35 + e);
            let dn = p(1.1, 2.7, 0.35 - e);
            assert!((dg - (gamma_map(m, &up) - gamma_map(m, &dn)) / (2.0 * e)).abs() < 1e-7);
            assert!((dgp - (gamma_map_derivative(m, &up) - gamma_map_derivative(m, &dn)) / (2.0 * e)).abs() < 1e-7);
        }
    }

    #[test]
    fn curve_domain_and_endpoint() {
        let b: f64 = 0.7;
        assert_eq!(critical_curve_h(b, 1.0 / b.tanh()), Some(0.0));
        assert_eq!(critical_curve_h(b, 0.5 / b.tanh()), None);
        let g = 2.5;
        let h = critical_curve_h(b, g).unwrap();
        let on = p(b, g, h);
        assert!((gamma_map_derivative(0.0, &on) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn tricritical_limits() {
        let (g, _) = tricritical_point(30.0).unwrap();
        assert!((g - 1.5).abs() < 1e-12);
        let (g1, h1) = tricritical_point(1.0).unwrap();
        assert!((g1 - 3.0 / (2.0 * 1f64.tanh())).abs() < 1e-15);
        assert_eq!(Some(h1), critical_curve_h(1.0, g1));
        assert!(tricritical_point(0.0).is_err());
    }

    #[test]
    fn cubic_coefficient_vanishes_at_tricritical() {
        // Gamma(m) - m ~ c3 m^3 on the critical curve; estimate c3 numerically
        let b = 1.0;
        let cubic = |g: f64| {
            let h = critical_curve_h(b, g).unwrap();
            let params = p(b, g, h);
            let m: f64 = 1e-3;
            (gamma_map(m, &params) - m) / m.powi(3)
        };
        let (g_bar, _) = tricritical_point(b).unwrap();
        let expected = |g: f64| g * (2.0 / 3.0 * g - 1.0 / b.tanh());
        for g in [1.5, 2.2, 3.0] {
            assert!((cubic(g) - expected(g)).abs() < 1e-4 * (1.0 + expected(g).abs()));
        }
        assert!(cubic(g_bar).abs() < 1e-4);
    }

    #[test]
    fn neutral_spectrum_closed_form() {
        let params = p(1.0, 1.8, 0.3);
        let s = jacobian_at_neutral(&params);
        assert!((s.closed_form[5] + 2.0 * 1f64.cosh()).abs() < 1e-15);
        assert!((s.closed_form[4] + 2.0 * (1.8f64 * 0.3).cosh()).abs() < 1e-15);
        assert!(s.mismatch() < 1e-9);
    }

    #[test]
    fn reconstructed_equilibria_are_stationary() {
        let params = p(1.0, 3.0, 0.2);
        let pp = solve_fixed_points(&params).unwrap();
        assert_eq!(pp.phase, 1);
        for r in &pp.roots {
            let d = crate::limit::mkv_rhs(&r.equilibrium, &params);
            assert!(d.iter().map(|x| x.abs()).fold(0.0, f64::max) < 1e-10);
            assert!((gamma_map(r.m_sigma, &params) - r.m_sigma).abs() < 1e-12);
        }
    }

    #[test]
    fn homogeneous_root_is_classical() {
        let params = p(1.0, 2.5, 0.0);
        let pp = solve_fixed_points(&params).unwrap();
        let m = pp.max_positive_root().unwrap();
        assert!((m - 1f64.tanh() * (2.5 * m).tanh()).abs() < 1e-12);
    }

    #[test]
    fn fold_at_and_past_tricritical() {
        let b = 1.0;
        let (g_bar, h_bar) = tricritical_point(b).unwrap();
        let f = fold_boundary(b, g_bar, FoldOptions::default()).unwrap().unwrap();
        assert!((f.h - h_bar).abs() < 1e-14);
        let g = g_bar * 1.05;
        let f = fold_boundary(b, g, FoldOptions::default()).unwrap().unwrap();
        let hc = critical_curve_h(b, g).unwrap();
        assert!(f.h > hc);
        assert!(f.h - hc < 0.05);
        assert!(f.m > 0.0);
        assert!(f.residual_value.abs() < 1e-10 && f.residual_slope.abs() < 1e-10);
    }

    #[test]
    fn root_counts_by_phase() {
        let b = 1.0;
        // phase 1: below the continuous curve
        let pp = solve_fixed_points(&p(b, 3.0, 0.1)).unwrap();
        assert_eq!(pp.phase, 1);
        assert_eq!(pp.roots.len(), 3);
        // phase 0: far above
        let pp = solve_fixed_points(&p(b, 3.0, 1.0)).unwrap();
        assert_eq!(pp.phase, 0);
        assert_eq!(pp.roots.len(), 1);
        // phase 2: between the continuous curve and the fold
        let g = 4.0;
        let hc = critical_curve_h(b, g).unwrap();
        let hf = fold_boundary(b, g, FoldOptions::default()).unwrap().unwrap().h;
        let pp = solve_fixed_points(&p(b, g, 0.5 * (hc + hf))).unwrap();
        assert_eq!(pp.phase, 2, "{pp:?}");
        assert_eq!(pp.roots.len(), 5);
        assert!(pp.diagnostics.is_empty());
    }
}
