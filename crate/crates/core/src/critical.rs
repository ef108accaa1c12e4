//! The critical curve `gamma tanh(b) = cosh^2(g h)`.
//!
//! On the curve the linearization at the neutral equilibrium has a zero
//! eigenvalue, and the Gaussian fluctuations grow without bound along one
//! direction. Rescaling space by `N^{1/4}` isolates that direction:
//!
//! * with `h > 0`, on the clock `N^{1/4} t`, the coordinate `xbar` moves
//!   linearly with the random slope `2 H sinh(b) sinh(g h)` where `H` is the
//!   limit of `r_N = sqrt(N) m_eta`, while `ybar .. wbar` collapse to zero;
//! * with `h = 0`, on the clock `N^{1/2} t`, `theta = N^{1/4}(m_s + sinh(b) m_w)`
//!   follows `d theta = -a theta^3 dt + b dB` (a non-Gaussian limit).
//!
//! The coordinates are a fixed linear map of the `(x .. w)` fluctuations; its
//! first row is the left null vector of `A2`.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibria::{neutral_equilibrium, Matrix6};
use crate::error::{Error, Result};
use crate::fluctuations::Vector6;
use crate::model::{moments_to_cell_probs, ModelParams, MomentVector};
use crate::rng::stream_rng;
use crate::sim::{simulate, InitialLaw, SimOptions};
use crate::stats;

/// Largest `|gamma tanh b - cosh^2(g h)|` accepted as critical.
pub const CRITICAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalSearch {
    /// Upper end of the scanned gamma bracket.
    pub gamma_max: f64,
    /// Grid cells used to bracket the first sign change.
    pub scan_points: usize,
}

impl Default for CriticalSearch {
    fn default() -> Self {
        Self { gamma_max: 100.0, scan_points: 100_000 }
    }
}

/// Smallest `gamma >= 1/tanh(b)` with `gamma tanh(b) = cosh^2(gamma h)`.
pub fn critical_params(beta: f64, h: f64) -> Result<Option<ModelParams>> {
    critical_params_with(beta, h, CriticalSearch::default())
}

pub fn critical_params_with(beta: f64, h: f64, search: CriticalSearch) -> Result<Option<ModelParams>> {
    if !(beta > 0.0) || !beta.is_finite() || !(h >= 0.0) || !h.is_finite() {
        return Err(Error::InvalidParams(format!("need beta > 0 and h >= 0, got {beta}, {h}")));
    }
    let t = beta.tanh();
    let f = |g: f64| g * t - (g * h).cosh().powi(2);
    let g0 = 1.0 / t;
    if h == 0.0 {
        return ModelParams::limit(beta, g0, 0.0).map(Some);
    }
    if search.gamma_max <= g0 || search.scan_points == 0 {
        return Err(Error::InvalidParams("empty gamma bracket".into()));
    }
    let dg = (search.gamma_max - g0) / search.scan_points as f64;
    let mut lo = g0;
    for k in 1..=search.scan_points {
        let hi = g0 + k as f64 * dg;
        let fhi = f(hi);
        if fhi >= 0.0 {
            // f(lo) < 0 <= f(hi)
            let (mut a, mut b) = (lo, hi);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                if f(mid) < 0.0 {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            let g = if f(a).abs() < f(b).abs() { a } else { b };
            return ModelParams::limit(beta, g, h).map(Some);
        }
        lo = hi;
    }
    Ok(None)
}

fn check_critical(params: &ModelParams) -> Result<()> {
    let c = params.criticality();
    if c.abs() >= CRITICAL_TOL {
        return Err(Error::InvalidParams(format!(
            "parameters are not critical: gamma tanh(beta) - cosh^2(gamma h) = {c:.3e}"
        )));
    }
    Ok(())
}

/// Stationary moments used for centering: the neutral equilibrium.
pub fn critical_moments(params: &ModelParams) -> MomentVector {
    neutral_equilibrium(params)
}

/// Single-site law on the eight cells whose moments are the stationary
/// values, with a symmetric environment.
pub fn critical_cell_law(params: &ModelParams) -> Result<[f64; 8]> {
    let mut p = moments_to_cell_probs(&critical_moments(params))?;
    for x in &mut p {
        *x = x.max(0.0);
    }
    let s: f64 = p.iter().sum();
    Ok(p.map(|x| x / s))
}

/// Rows express `(xbar, ybar, zbar, ubar, vbar, wbar)` in terms of the
/// `(x, y, z, u, v, w)` fluctuations (before the `N^{-1/4}` factor).
pub fn critical_transform(params: &ModelParams) -> Matrix6 {
    let (cb, sb, tb) = (params.beta.cosh(), params.beta.sinh(), params.beta.tanh());
    let gh = params.gamma * params.h;
    let (ch, sh, th) = (gh.cosh(), gh.sinh(), gh.tanh());
    let k = cb + 2.0 * ch;
    Matrix6::from_row_slice(&[
        ch, sb, 0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, ch - cb, sb, 0.0,
        0.0, 0.0, 0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 1.0, -th, tb * th, 0.0,
        2.0 * cb * sh * k, -2.0 * sb * sh * k, 0.0, 0.0, 0.0, 0.0,
        0.0, -tb * sh * k, 0.0, 0.0, 0.0, (cb + ch).powi(2),
    ])
}

/// Coefficients of `xbar`: `(cosh(g h), sinh(b), 0, 0, 0, 0)`.
pub fn null_direction(params: &ModelParams) -> Vector6 {
    critical_transform(params).row(0).transpose()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalCoordinates {
    pub r: f64,
    pub xbar: f64,
    pub ybar: f64,
    pub zbar: f64,
    pub ubar: f64,
    pub vbar: f64,
    pub wbar: f64,
}

impl CriticalCoordinates {
    pub fn to_array(&self) -> [f64; 7] {
        [self.r, self.xbar, self.ybar, self.zbar, self.ubar, self.vbar, self.wbar]
    }
}

/// Critical coordinates of the empirical moments `m` of an `n`-particle
/// system. Centering constants are the stationary moments.
pub fn critical_coords(m: &MomentVector, n: usize, params: &ModelParams) -> Result<CriticalCoordinates> {
    check_critical(params)?;
    if n == 0 {
        return Err(Error::InvalidParams("n must be positive".into()));
    }
    Ok(coords_unchecked(m, n, &critical_transform(params), &critical_moments(params)))
}

fn coords_unchecked(m: &MomentVector, n: usize, t: &Matrix6, center: &MomentVector) -> CriticalCoordinates {
    let nf = n as f64;
    let dev = Vector6::from_iterator((1..7).map(|i| m.0[i] - center.0[i]));
    let c = t * dev * nf.powf(0.25);
    CriticalCoordinates { r: nf.sqrt() * m.eta(), xbar: c[0], ybar: c[1], zbar: c[2], ubar: c[3], vbar: c[4], wbar: c[5] }
}

/// Time axis for the scaling experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Clock {
    /// Physical time `N^{1/4} t`.
    Dilated,
    /// Physical time `t` (no dilation).
    Clt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InhomogeneousConfig {
    pub beta: f64,
    pub h: f64,
    pub n_values: Vec<usize>,
    /// Horizon on the rescaled clock.
    pub t_end: f64,
    /// Sampling step on the rescaled clock.
    pub sample_dt: f64,
    pub replicas: usize,
    pub seed: u64,
    /// Fraction of `t_end` discarded before the slope fit.
    pub burn_in: f64,
    pub clock: Clock,
    pub max_events: u64,
}

impl Default for InhomogeneousConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            h: 0.3,
            n_values: vec![1_000, 4_000, 16_000],
            t_end: 4.0,
            sample_dt: 0.02,
            replicas: 200,
            seed: 1,
            burn_in: 0.05,
            clock: Clock::Dilated,
            max_events: SimOptions::default().max_events,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicaFit {
    pub replica: usize,
    pub r0: f64,
    pub fitted_slope: f64,
    pub predicted_slope: f64,
    pub rms_residual: f64,
    /// `sup_t |ybar|, .., sup_t |wbar|`.
    pub sup: [f64; 5],
    pub r_constant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InhomogeneousSummary {
    pub n: usize,
    /// Correlation of fitted and predicted slopes.
    pub correlation: f64,
    /// Median over replicas of `sup_t |ybar|, .., sup_t |wbar|`.
    pub median_sup: [f64; 5],
    pub median_abs_slope: f64,
    pub replicas: Vec<ReplicaFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InhomogeneousReport {
    pub params: ModelParams,
    pub config: InhomogeneousConfig,
    pub per_n: Vec<InhomogeneousSummary>,
}

/// Seed used for the `k`-th entry of an N list, so that different N use
/// unrelated streams.
pub fn seed_for_size(seed: u64, k: usize) -> u64 {
    seed.wrapping_add((k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Simulates the critical system from the stationary law and fits `xbar`
/// against the rescaled time in every replica.
pub fn run_inhomogeneous_critical(cfg: &InhomogeneousConfig) -> Result<InhomogeneousReport> {
    if !(cfg.t_end > 0.0) || !(cfg.sample_dt > 0.0) || cfg.replicas < 2 || cfg.n_values.is_empty() {
        return Err(Error::InvalidParams("need t_end, sample_dt > 0, replicas >= 2 and some N".into()));
    }
    if !(0.0..1.0).contains(&cfg.burn_in) {
        return Err(Error::InvalidParams("burn_in must lie in [0, 1)".into()));
    }
    let params = critical_params(cfg.beta, cfg.h)?
        .ok_or_else(|| Error::InvalidParams(format!("no critical gamma for beta={}, h={}", cfg.beta, cfg.h)))?;
    let law = InitialLaw::Cells(critical_cell_law(&params)?);
    let transform = critical_transform(&params);
    let center = critical_moments(&params);
    let slope_unit = 2.0 * params.beta.sinh() * (params.gamma * params.h).sinh();
    let opts = SimOptions { max_events: cfg.max_events };

    let mut per_n = Vec::with_capacity(cfg.n_values.len());
    for (k, &n) in cfg.n_values.iter().enumerate() {
        let pn = params.with_n(n)?;
        let scale = match cfg.clock {
            Clock::Dilated => (n as f64).powf(0.25),
            Clock::Clt => 1.0,
        };
        let seed = seed_for_size(cfg.seed, k);
        let fits: Vec<Result<ReplicaFit>> = (0..cfg.replicas)
            .into_par_iter()
            .map(|i| {
                let rec = simulate(pn, &law, scale * cfg.t_end, scale * cfg.sample_dt, seed, i as u64, opts)
                    .map_err(|e| Error::Replica { index: i, source: Box::new(e) })?;
                let coords: Vec<CriticalCoordinates> =
                    rec.moments.iter().map(|m| coords_unchecked(m, n, &transform, &center)).collect();
                let tau: Vec<f64> = rec.sample_times.iter().map(|t| t / scale).collect();
                let start = tau.iter().position(|&t| t >= cfg.burn_in * cfg.t_end - 1e-12).unwrap_or(0);
                let xs: Vec<f64> = coords[start..].iter().map(|c| c.xbar).collect();
                let fit = stats::least_squares(&tau[start..], &xs)?;
                let mut sup = [0.0f64; 5];
                for c in &coords {
                    for (s, v) in sup.iter_mut().zip([c.ybar, c.zbar, c.ubar, c.vbar, c.wbar]) {
                        *s = s.max(v.abs());
                    }
                }
                let r0 = coords[0].r;
                Ok(ReplicaFit {
                    replica: i,
                    r0,
                    fitted_slope: fit.slope,
                    predicted_slope: slope_unit * r0,
                    rms_residual: fit.rms_residual,
                    sup,
                    r_constant: coords.iter().all(|c| c.r == r0),
                })
            })
            .collect();
        let replicas: Vec<ReplicaFit> = fits.into_iter().collect::<Result<_>>()?;
        let fitted: Vec<f64> = replicas.iter().map(|r| r.fitted_slope).collect();
        let predicted: Vec<f64> = replicas.iter().map(|r| r.predicted_slope).collect();
        let mut median_sup = [0.0; 5];
        for (j, slot) in median_sup.iter_mut().enumerate() {
            *slot = stats::median(&replicas.iter().map(|r| r.sup[j]).collect::<Vec<_>>());
        }
        per_n.push(InhomogeneousSummary {
            n,
            correlation: stats::correlation(&fitted, &predicted),
            median_sup,
            median_abs_slope: stats::median(&fitted.iter().map(|s| s.abs()).collect::<Vec<_>>()),
            replicas,
        });
    }
    Ok(InhomogeneousReport { params, config: cfg.clone(), per_n })
}

pub const REPLICA_CSV_HEADER: [&str; 9] =
    ["replica", "r0", "fitted_slope", "predicted_slope", "sup_ybar", "sup_zbar", "sup_ubar", "sup_vbar", "sup_wbar"];

/// Rows for the per-replica CSV.
pub fn replica_rows(summary: &InhomogeneousSummary) -> Vec<Vec<String>> {
    use crate::io::fmt_f64;
    summary
        .replicas
        .iter()
        .map(|r| {
            let mut row = vec![r.replica.to_string(), fmt_f64(r.r0), fmt_f64(r.fitted_slope), fmt_f64(r.predicted_slope)];
            row.extend(r.sup.iter().map(|&s| fmt_f64(s)));
            row
        })
        .collect()
}

/// Coefficients of `d theta = -a theta^3 dt + b dB`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicSdeParams {
    /// `a = 2 cosh^3 b / (3 sinh^2 b (cosh b + 1)^3)`.
    pub drift_coeff: f64,
    /// `b = 2 cosh b`.
    pub noise_coeff: f64,
}

impl CubicSdeParams {
    pub fn from_beta(beta: f64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::InvalidParams(format!("beta must be positive, got {beta}")));
        }
        let (c, s) = (beta.cosh(), beta.sinh());
        Ok(Self { drift_coeff: 2.0 * c.powi(3) / (3.0 * s * s * (c + 1.0).powi(3)), noise_coeff: 2.0 * c })
    }

    /// Largest Euler step accepted by [`sde_oracle`]: `1e-3 b^2 / a`.
    pub fn max_dt(&self) -> f64 {
        if self.drift_coeff > 0.0 {
            1e-3 * self.noise_coeff.powi(2) / self.drift_coeff
        } else {
            f64::INFINITY
        }
    }
}

/// Paths whose `|theta|` exceeds this are aborted.
pub const BLOW_UP: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdeSamples {
    /// `theta(t_end)` of every completed replica, in replica order.
    pub terminal: Vec<f64>,
    /// One note per aborted replica.
    pub aborted: Vec<String>,
}

/// Euler–Maruyama for the cubic SDE from `theta(0) = 0`; replica `i` draws
/// from stream `i` of `seed`.
pub fn sde_oracle(params: &CubicSdeParams, t_end: f64, dt: f64, replicas: usize, seed: u64) -> Result<SdeSamples> {
    if !(dt > 0.0) || dt > params.max_dt() || !(t_end >= 0.0) {
        return Err(Error::InvalidParams(format!("dt must lie in (0, {}], got {dt}", params.max_dt())));
    }
    let steps = (t_end / dt).round() as usize;
    let (a, b) = (params.drift_coeff, params.noise_coeff);
    let sq = dt.sqrt();
    let paths: Vec<Result<f64>> = (0..replicas)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let mut x = 0.0f64;
            for k in 0..steps {
                let z: f64 = StandardNormal.sample(&mut rng);
                x += -a * x * x * x * dt + b * sq * z;
                if !(x.abs() <= BLOW_UP) {
                    return Err(Error::BlowUp { time: (k + 1) as f64 * dt, value: x.abs() });
                }
            }
            Ok(x)
        })
        .collect();
    let mut out = SdeSamples { terminal: Vec::with_capacity(replicas), aborted: Vec::new() };
    for (i, p) in paths.into_iter().enumerate() {
        match p {
            Ok(x) => out.terminal.push(x),
            Err(e) => out.aborted.push(format!("replica {i}: {e}")),
        }
    }
    Ok(out)
}

/// Second and fourth moments of the stationary density
/// `exp(-a theta^4 / (2 b^2))` by composite Simpson quadrature.
pub fn quartic_moments(params: &CubicSdeParams) -> (f64, f64) {
    let c = params.drift_coeff / (2.0 * params.noise_coeff.powi(2));
    // the density is below e^-60 past this point
    let l = (60.0 / c).powf(0.25);
    let n = 20_000;
    let dx = l / n as f64;
    let (mut z, mut m2, mut m4) = (0.0, 0.0, 0.0);
    for k in 0..=n {
        let x = k as f64 * dx;
        let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
        let d = w * (-c * x.powi(4)).exp();
        z += d;
        m2 += d * x * x;
        m4 += d * x.powi(4);
    }
    (m2 / z, m4 / z)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HomogeneousConfig {
    pub beta: f64,
    pub n_values: Vec<usize>,
    /// Horizon on the `N^{1/2}` clock.
    pub t_end: f64,
    pub sample_dt: f64,
    pub replicas: usize,
    pub seed: u64,
    pub sde_dt: f64,
    pub sde_replicas: usize,
    pub max_events: u64,
}

impl Default for HomogeneousConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            n_values: vec![1_000, 4_000],
            t_end: 5.0,
            sample_dt: 0.05,
            replicas: 1_000,
            seed: 1,
            sde_dt: 1e-3,
            sde_replicas: 100_000,
            max_events: SimOptions::default().max_events,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentStats {
    pub m2: f64,
    pub m4: f64,
    pub excess_kurtosis: f64,
    pub kurtosis_se: f64,
}

impl MomentStats {
    pub fn of(x: &[f64]) -> Self {
        let (k, se) = stats::excess_kurtosis(x);
        Self { m2: stats::raw_moment(x, 2), m4: stats::raw_moment(x, 4), excess_kurtosis: k, kurtosis_se: se }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogeneousSummary {
    pub n: usize,
    pub theta: MomentStats,
    /// `|m2 / m2_oracle - 1|` and `|m4 / m4_oracle - 1|`.
    pub m2_rel_err: f64,
    pub m4_rel_err: f64,
    pub median_sup_xi: f64,
    pub median_sup_zeta: f64,
    pub theta_terminal: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogeneousReport {
    pub params: ModelParams,
    pub sde: CubicSdeParams,
    pub oracle: MomentStats,
    pub oracle_aborted: usize,
    pub per_n: Vec<HomogeneousSummary>,
}

/// `(theta, xi, zeta)` of the `h = 0` regime.
pub fn homogeneous_coords(m: &MomentVector, n: usize, beta: f64) -> (f64, f64, f64) {
    let q = (n as f64).powf(0.25);
    let (cb, sb, tb) = (beta.cosh(), beta.sinh(), beta.tanh());
    (
        q * (m.sigma() + sb * m.omega()),
        q * (m.sigma() - tb * m.omega()),
        q * (m.sigma_omega() - sb / (cb + 1.0)),
    )
}

/// Simulates the `h = 0` critical system on the `N^{1/2}` clock and compares
/// the law of `theta(t_end)` with the cubic SDE.
pub fn run_homogeneous_critical(cfg: &HomogeneousConfig) -> Result<HomogeneousReport> {
    if !(cfg.t_end > 0.0) || !(cfg.sample_dt > 0.0) || cfg.replicas < 8 || cfg.n_values.is_empty() {
        return Err(Error::InvalidParams("need t_end, sample_dt > 0, replicas >= 8 and some N".into()));
    }
    let params = critical_params(cfg.beta, 0.0)?.expect("h = 0 always has a critical gamma");
    let sde = CubicSdeParams::from_beta(cfg.beta)?;
    let oracle_samples = sde_oracle(&sde, cfg.t_end, cfg.sde_dt, cfg.sde_replicas, cfg.seed)?;
    let oracle = MomentStats::of(&oracle_samples.terminal);
    let law = InitialLaw::Cells(critical_cell_law(&params)?);
    let opts = SimOptions { max_events: cfg.max_events };

    let mut per_n = Vec::new();
    for (k, &n) in cfg.n_values.iter().enumerate() {
        let pn = params.with_n(n)?;
        let scale = (n as f64).sqrt();
        let seed = seed_for_size(cfg.seed, k);
        let runs: Vec<Result<(f64, f64, f64)>> = (0..cfg.replicas)
            .into_par_iter()
            .map(|i| {
                let rec = simulate(pn, &law, scale * cfg.t_end, scale * cfg.sample_dt, seed, i as u64, opts)
                    .map_err(|e| Error::Replica { index: i, source: Box::new(e) })?;
                let (mut sup_xi, mut sup_zeta) = (0.0f64, 0.0f64);
                for m in &rec.moments {
                    let (_, xi, zeta) = homogeneous_coords(m, n, cfg.beta);
                    sup_xi = sup_xi.max(xi.abs());
                    sup_zeta = sup_zeta.max(zeta.abs());
                }
                let theta = homogeneous_coords(rec.moments.last().unwrap(), n, cfg.beta).0;
                Ok((theta, sup_xi, sup_zeta))
            })
            .collect();
        let runs: Vec<(f64, f64, f64)> = runs.into_iter().collect::<Result<_>>()?;
        let theta: Vec<f64> = runs.iter().map(|r| r.0).collect();
        let st = MomentStats::of(&theta);
        per_n.push(HomogeneousSummary {
            n,
            theta: st,
            m2_rel_err: (st.m2 / oracle.m2 - 1.0).abs(),
            m4_rel_err: (st.m4 / oracle.m4 - 1.0).abs(),
            median_sup_xi: stats::median(&runs.iter().map(|r| r.1).collect::<Vec<_>>()),
            median_sup_zeta: stats::median(&runs.iter().map(|r| r.2).collect::<Vec<_>>()),
            theta_terminal: theta,
        });
    }
    Ok(HomogeneousReport { params, sde, oracle, oracle_aborted: oracle_samples.aborted.len(), per_n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fluctuations::drift_a2;

    #[test]
    fn homogeneous_critical_gamma() {
        let p = critical_params(0.8, 0.0).unwrap().unwrap();
        assert_eq!(p.gamma, 1.0 / 0.8f64.tanh());
    }

    #[test]
    fn root_residual() {
        for (b, h) in [(1.0, 0.3), (0.5, 0.1), (2.0, 0.3)] {
            let p = critical_params(b, h).unwrap().unwrap();
            assert!(p.criticality().abs() < 1e-12, "{b} {h}: {}", p.criticality());
        }
    }

    #[test]
    fn no_root_for_large_field() {
        assert_eq!(critical_params(1.0, 5.0).unwrap(), None);
        assert!(critical_params(0.0, 0.1).is_err());
    }

    #[test]
    fn lambda1_vanishes() {
        let p = critical_params(1.0, 0.3).unwrap().unwrap();
        let s = crate::equilibria::jacobian_at_neutral(&p);
        assert!(s.lambda1().abs() < 1e-10);
    }

    #[test]
    fn coords_at_center_are_zero() {
        let p = critical_params(1.0, 0.3).unwrap().unwrap();
        let c = critical_coords(&critical_moments(&p), 10_000, &p).unwrap();
        assert!(c.to_array().iter().all(|x| x.abs() < 1e-12), "{c:?}");
    }

    #[test]
    fn sigma_perturbation() {
        let p = critical_params(1.0, 0.3).unwrap().unwrap();
        let mut m = critical_moments(&p);
        m.0[1] += 1e-3;
        let c = critical_coords(&m, 10_000, &p).unwrap();
        assert!((c.xbar - 10.0 * (p.gamma * p.h).cosh() * 1e-3).abs() < 1e-12);
    }

    #[test]
    fn rejects_noncritical() {
        let p = ModelParams::limit(1.0, 1.0, 0.3).unwrap();
        assert!(critical_coords(&MomentVector::zero(), 100, &p).is_err());
    }

    #[test]
    fn xbar_row_is_left_null() {
        for (b, h) in [(1.0, 0.3), (0.7, 0.0), (1.5, 0.2)] {
            let p = critical_params(b, h).unwrap().unwrap();
            let a2 = drift_a2(&critical_moments(&p), &p) * 2.0;
            let r = a2.transpose() * null_direction(&p);
            assert!(r.amax() < 1e-10, "{r}");
        }
    }

    #[test]
    fn cell_law_reproduces_moments() {
        let p = critical_params(1.0, 0.3).unwrap().unwrap();
        let law = critical_cell_law(&p).unwrap();
        let m = crate::model::cell_probs_to_moments(&law);
        let c = critical_moments(&p);
        for i in 0..7 {
            assert!((m.0[i] - c.0[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn sde_coefficients() {
        let s = CubicSdeParams::from_beta(1.0).unwrap();
        assert!((s.noise_coeff - 2.0 * 1f64.cosh()).abs() < 1e-15);
        assert!((s.drift_coeff - 0.10784).abs() < 1e-4);
    }

    #[test]
    fn quadrature_matches_gamma_functions() {
        use statrs::function::gamma::gamma;
        let s = CubicSdeParams::from_beta(1.0).unwrap();
        let c = s.drift_coeff / (2.0 * s.noise_coeff.powi(2));
        let (m2, m4) = quartic_moments(&s);
        let g = |k: f64| c.powf(-k / 4.0) * gamma((k + 1.0) / 4.0) / gamma(0.25);
        assert!((m2 / g(2.0) - 1.0).abs() < 1e-8);
        assert!((m4 / g(4.0) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn pure_brownian_oracle() {
        let s = CubicSdeParams { drift_coeff: 0.0, noise_coeff: 1.5 };
        let out = sde_oracle(&s, 2.0, 1e-2, 20_000, 3).unwrap();
        let v = stats::variance(&out.terminal);
        let expected = 1.5f64.powi(2) * 2.0;
        let se = expected * (2.0 / 20_000f64).sqrt();
        assert!((v - expected).abs() < 3.0 * se);
    }

    #[test]
    fn oracle_rejects_coarse_step() {
        let s = CubicSdeParams::from_beta(1.0).unwrap();
        assert!(sde_oracle(&s, 1.0, 2.0 * s.max_dt(), 10, 1).is_err());
    }
}
