//! The infinite-N moment dynamics.
//!
//! The law of a single site in the limit is a law on `{-1,+1}^3`, fully
//! described by its seven moments. They obey a closed system of ODEs in which
//! `m_eta` is frozen. The right-hand side below keeps the `m_eta` terms
//! generated by the flip rates; they vanish for the symmetric environment
//! (`m_eta = 0`), which is the case the limit theory describes, and their
//! derivative with respect to `m_eta` is the constant drift of the
//! fluctuation equation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, MomentVector, FRECHET_TOL};
use crate::ode::{self, Tolerances};
use crate::sim::{sample_grid, TrajectoryRecord};

/// Time derivative of the seven moments. The first entry (`m_eta`) is always
/// zero.
pub fn mkv_rhs(m: &MomentVector, params: &ModelParams) -> [f64; 7] {
    let mut out = [0.0; 7];
    let mut dyn6 = [0.0; 6];
    rhs6(m.eta(), &m.0[1..], params, &mut dyn6);
    out[1..].copy_from_slice(&dyn6);
    out
}

/// Right-hand side of the six dynamic moments at frozen `m_eta`.
pub fn rhs6(m_eta: f64, x: &[f64], params: &ModelParams, out: &mut [f64]) {
    let (cb, sb) = (params.beta.cosh(), params.beta.sinh());
    let gh = params.gamma * params.h;
    let (ch, sh) = (gh.cosh(), gh.sinh());
    let a = params.gamma * x[0];
    let (ca, sa) = (a.cosh(), a.sinh());
    let [ms, mw, mso, mse, mwe, msoe] = [x[0], x[1], x[2], x[3], x[4], x[5]];

    out[0] = -2.0 * ms * cb + 2.0 * mw * sb;
    out[1] = -2.0 * mw * ch * ca - 2.0 * mwe * sh * sa + 2.0 * ch * sa + 2.0 * m_eta * sh * ca;
    out[2] = 2.0 * ms * ch * sa - 2.0 * mso * (cb + ch * ca) + 2.0 * mse * sh * ca - 2.0 * msoe * sh * sa
        + 2.0 * sb;
    out[3] = -2.0 * mse * cb + 2.0 * mwe * sb;
    out[4] = -2.0 * mw * sh * sa - 2.0 * mwe * ch * ca + 2.0 * sh * ca + 2.0 * m_eta * ch * sa;
    out[5] = 2.0 * ms * sh * ca - 2.0 * mso * sh * sa + 2.0 * mse * ch * sa - 2.0 * msoe * (cb + ch * ca)
        + 2.0 * m_eta * sb;
}

/// Euclidean norm of the drift.
pub fn rhs_norm(m: &MomentVector, params: &ModelParams) -> f64 {
    mkv_rhs(m, params).iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// A solution of the moment ODE sampled on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdePath {
    pub times: Vec<f64>,
    pub states: Vec<MomentVector>,
    pub params: ModelParams,
    pub tolerances: Tolerances,
}

impl OdePath {
    /// State at an arbitrary time inside the grid, by cubic Hermite
    /// interpolation with the exact drift at the nodes.
    pub fn state_at(&self, t: f64) -> Result<MomentVector> {
        let (first, last) = (self.times[0], *self.times.last().unwrap());
        if t < first - 1e-12 || t > last + 1e-12 {
            return Err(Error::Mismatch(format!("time {t} outside path range [{first}, {last}]")));
        }
        let idx = match self.times.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(i) => return Ok(self.states[i]),
            Err(i) => i.clamp(1, self.times.len() - 1),
        };
        let (t0, t1) = (self.times[idx - 1], self.times[idx]);
        let (y0, y1) = (&self.states[idx - 1], &self.states[idx]);
        let (f0, f1) = (mkv_rhs(y0, &self.params), mkv_rhs(y1, &self.params));
        let h = t1 - t0;
        let s = (t - t0) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        let mut m = [0.0; 7];
        for i in 0..7 {
            m[i] = h00 * y0.0[i] + h10 * h * f0[i] + h01 * y1.0[i] + h11 * h * f1[i];
        }
        Ok(MomentVector(m))
    }

    pub fn last(&self) -> &MomentVector {
        self.states.last().unwrap()
    }
}

/// Integrates the moment ODE from `m0` and samples it at `times`.
pub fn integrate_at(m0: &MomentVector, params: &ModelParams, times: &[f64], tol: Tolerances) -> Result<OdePath> {
    let m_eta = m0.eta();
    let p = *params;
    let ys = ode::integrate(
        move |_, y, dy| rhs6(m_eta, y, &p, dy),
        0.0,
        &m0.0[1..],
        times,
        tol,
    )?;
    let states: Vec<MomentVector> = ys.iter().map(|y| MomentVector::from_parts(m_eta, y)).collect();
    if let Some((k, bad)) = states
        .iter()
        .enumerate()
        .find(|(_, s)| s.0.iter().any(|x| x.abs() > 1.0 + 1e3 * tol.abs.max(FRECHET_TOL)))
    {
        return Err(Error::Mismatch(format!("ODE state left [-1,1]^7 at t = {}: {:?}", times[k], bad.0)));
    }
    Ok(OdePath { times: times.to_vec(), states, params: *params, tolerances: tol })
}

/// Integrates on the grid `k * sample_dt` up to `t_end`.
pub fn integrate(
    m0: &MomentVector,
    params: &ModelParams,
    t_end: f64,
    sample_dt: f64,
    tol: Tolerances,
) -> Result<OdePath> {
    if !(t_end > 0.0) || !(sample_dt > 0.0) {
        return Err(Error::InvalidParams(format!(
            "t_end and sample_dt must be positive (got {t_end}, {sample_dt})"
        )));
    }
    integrate_at(m0, params, &sample_grid(t_end, sample_dt), tol)
}

/// Largest deviation over the record's sample times between each empirical
/// moment and the ODE path (interpolated to those times).
pub fn flow_comparison(record: &TrajectoryRecord, path: &OdePath) -> Result<[f64; 7]> {
    if !record.params.same_model(&path.params) {
        return Err(Error::Mismatch(format!(
            "record params {:?} differ from path params {:?}",
            record.params, path.params
        )));
    }
    let mut sup = [0.0f64; 7];
    for (t, emp) in record.sample_times.iter().zip(&record.moments) {
        let ode = path.state_at(*t)?;
        for i in 0..7 {
            sup[i] = sup[i].max((emp.0[i] - ode.0[i]).abs());
        }
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::neutral_equilibrium;

    fn p(b: f64, g: f64, h: f64) -> ModelParams {
        ModelParams::limit(b, g, h).unwrap()
    }

    #[test]
    fn neutral_point_is_stationary() {
        let params = p(1.0, 1.7, 0.45);
        let m = neutral_equilibrium(&params);
        assert!(rhs_norm(&m, &params) < 1e-14);
    }

    #[test]
    fn zero_state_drift() {
        let params = p(0.9, 1.4, 0.6);
        let d = mkv_rhs(&MomentVector::zero(), &params);
        let gh: f64 = 1.4 * 0.6;
        let expected = [0.0, 0.0, 0.0, 2.0 * 0.9f64.sinh(), 0.0, 2.0 * gh.sinh(), 0.0];
        for (a, b) in d.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn stationary_start_stays_put() {
        let params = p(1.0, 1.2, 0.3);
        let m0 = neutral_equilibrium(&params);
        let tol = Tolerances::default();
        let path = integrate(&m0, &params, 100.0, 1.0, tol).unwrap();
        for s in &path.states {
            for i in 0..7 {
                assert!((s.0[i] - m0.0[i]).abs() < tol.abs);
            }
        }
    }

    #[test]
    fn eta_is_frozen() {
        let params = p(1.0, 1.2, 0.3);
        let m0 = MomentVector([0.1, 0.2, 0.3, 0.1, 0.0, 0.05, 0.0]);
        let path = integrate(&m0, &params, 5.0, 0.5, Tolerances::default()).unwrap();
        assert!(path.states.iter().all(|s| s.eta() == 0.1));
    }

    #[test]
    fn frozen_linear_block_matches_closed_form() {
        // with m_omega and m_omega_eta frozen, m_sigma' = -2 cb m_sigma + 2 sb m_omega
        // is a scalar linear ODE with explicit solution
        let params = p(0.8, 1.0, 0.2);
        let (cb, sb) = (0.8f64.cosh(), 0.8f64.sinh());
        let (mw, mwe) = (0.35, -0.2);
        let (s0, se0) = (0.6, 0.1);
        let times: Vec<f64> = (0..=10).map(|k| 0.3 * k as f64).collect();
        let ys = crate::ode::integrate(
            |_, y, dy| {
                let x = [y[0], mw, 0.0, y[1], mwe, 0.0];
                let mut d = [0.0; 6];
                rhs6(0.0, &x, &params, &mut d);
                dy[0] = d[0];
                dy[1] = d[3];
            },
            0.0,
            &[s0, se0],
            &times,
            Tolerances::default(),
        )
        .unwrap();
        for (t, y) in times.iter().zip(ys) {
            let decay = (-2.0 * cb * t).exp();
            let s = s0 * decay + sb / cb * mw * (1.0 - decay);
            let se = se0 * decay + sb / cb * mwe * (1.0 - decay);
            assert!((y[0] - s).abs() < 1e-10, "{} {} {}", t, y[0], s);
            assert!((y[1] - se).abs() < 1e-10);
        }
    }

    #[test]
    fn subcritical_converges_to_neutral() {
        let params = p(1.0, 0.5, 0.2);
        assert!(params.criticality() < 0.0);
        let m0 = MomentVector([0.0, 0.8, -0.4, 0.1, 0.2, -0.3, 0.1]);
        let path = integrate(&m0, &params, 50.0, 50.0, Tolerances::default()).unwrap();
        assert!(rhs_norm(path.last(), &params) < 1e-10);
        let target = neutral_equilibrium(&params);
        for i in 0..7 {
            assert!((path.last().0[i] - target.0[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn linear_rows_superpose() {
        let params = p(1.1, 1.3, 0.4);
        let base = [0.2, 0.1, 0.3, -0.1, 0.2, 0.05];
        let d1 = [0.0, 0.3, 0.0, 0.0, -0.2, 0.0];
        let d2 = [0.1, 0.0, 0.0, 0.25, 0.0, 0.0];
        let eval = |x: [f64; 6]| {
            let mut o = [0.0; 6];
            rhs6(0.0, &x, &params, &mut o);
            o
        };
        let add = |a: [f64; 6], b: [f64; 6]| std::array::from_fn::<f64, 6, _>(|i| a[i] + b[i]);
        // rows 0 and 3 depend linearly on (m_sigma, m_omega) and (m_sigma_eta, m_omega_eta)
        let f0 = eval(base);
        let f1 = eval(add(base, d1));
        let f12 = eval(add(add(base, d1), d2));
        let f2 = eval(add(base, d2));
        for row in [0, 3] {
            let lhs = f12[row] - f0[row];
            let rhs = (f1[row] - f0[row]) + (f2[row] - f0[row]);
            assert!((lhs - rhs).abs() < 1e-14);
        }
        let _ = f12;
    }

    #[test]
    fn flow_comparison_rejects_mismatch() {
        let params = p(1.0, 1.0, 0.2).with_n(10).unwrap();
        let rec = crate::sim::simulate(
            params,
            &crate::sim::InitialLaw::product([0.25; 4]),
            1.0,
            0.5,
            1,
            0,
            Default::default(),
        )
        .unwrap();
        let path = integrate(&MomentVector::zero(), &p(1.0, 1.1, 0.2), 1.0, 0.5, Tolerances::default()).unwrap();
        assert!(flow_comparison(&rec, &path).is_err());
    }

    proptest::proptest! {
        #[test]
        fn sign_symmetry(
            b in 0.1f64..2.0, g in 0.1f64..3.0, h in 0.0f64..1.0,
            x in proptest::collection::vec(-1.0f64..1.0, 6)
        ) {
            let params = p(b, g, h);
            let m = MomentVector::from_parts(0.0, &x);
            let mut flipped = m;
            for i in [1, 2, 6] { flipped.0[i] = -flipped.0[i]; }
            let d = mkv_rhs(&m, &params);
            let df = mkv_rhs(&flipped, &params);
            for i in 0..7 {
                let expected = if [1, 2, 6].contains(&i) { -d[i] } else { d[i] };
                proptest::prop_assert!((df[i] - expected).abs() < 1e-12);
            }
        }
    }
}
