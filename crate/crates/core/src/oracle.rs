//! Exact transient law for two sites.
//!
//! With `N = 2` and the environment fixed to `(+1, -1)` the chain lives on
//! the 16 configurations of `(sigma_1, sigma_2, omega_1, omega_2)`; its law
//! at time `t` is `p0 exp(Q t)`. Because the two sites carry different
//! labels, the cell counts of the simulator determine the configuration, so
//! the two laws can be compared state by state.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Cell, CellCounts, ModelParams};
use crate::sim::{EtaMode, InitialLaw, SimState};

pub const ORACLE_ETA: [i8; 2] = [1, -1];
pub const ORACLE_STATES: usize = 16;

/// Spins of state `s`: bit 3 = sigma_1, bit 2 = sigma_2, bit 1 = omega_1,
/// bit 0 = omega_2 (a set bit means +1).
pub fn decode(s: usize) -> ([i8; 2], [i8; 2]) {
    let spin = |b: usize| if s >> b & 1 == 1 { 1 } else { -1 };
    ([spin(3), spin(2)], [spin(1), spin(0)])
}

pub fn encode(sigma: [i8; 2], omega: [i8; 2]) -> usize {
    let bit = |x: i8| usize::from(x > 0);
    bit(sigma[0]) << 3 | bit(sigma[1]) << 2 | bit(omega[0]) << 1 | bit(omega[1])
}

/// Generator on the 16 states (rows sum to zero).
pub fn generator(params: &ModelParams) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(ORACLE_STATES, ORACLE_STATES);
    for s in 0..ORACLE_STATES {
        let (sigma, omega) = decode(s);
        let m_sigma = f64::from(sigma[0] + sigma[1]) / 2.0;
        for site in 0..2 {
            let rs = (-params.beta * f64::from(sigma[site] * omega[site])).exp();
            let mut fs = sigma;
            fs[site] = -fs[site];
            q[(s, encode(fs, omega))] += rs;
            let rw = (-params.gamma * f64::from(omega[site]) * (m_sigma + f64::from(ORACLE_ETA[site]) * params.h)).exp();
            let mut fw = omega;
            fw[site] = -fw[site];
            q[(s, encode(sigma, fw))] += rw;
            q[(s, s)] -= rs + rw;
        }
    }
    q
}

/// Initial law when each site's `(sigma, omega)` is drawn from `lambda`
/// (ordered `(-,-), (-,+), (+,-), (+,+)`).
pub fn initial_law(lambda: &[f64; 4]) -> DVector<f64> {
    let pair = |sg: i8, om: i8| lambda[2 * usize::from(sg > 0) + usize::from(om > 0)];
    DVector::from_fn(ORACLE_STATES, |s, _| {
        let (sigma, omega) = decode(s);
        pair(sigma[0], omega[0]) * pair(sigma[1], omega[1])
    })
}

/// `p0 exp(Q t)`.
pub fn exact_law(params: &ModelParams, lambda: &[f64; 4], t: f64) -> DVector<f64> {
    let p0 = initial_law(lambda);
    let pt = (generator(params) * t).exp();
    pt.transpose() * p0
}

/// Configuration encoded by two-site cell counts with environment `(+, -)`.
pub fn state_from_cells(cells: &CellCounts) -> Result<usize> {
    let mut sigma = [0i8; 2];
    let mut omega = [0i8; 2];
    let mut seen = [false; 2];
    for (idx, &count) in cells.0.iter().enumerate() {
        let c = Cell::from_index(idx);
        let site = if c.eta > 0 { 0 } else { 1 };
        match count {
            0 => {}
            1 if !seen[site] => {
                seen[site] = true;
                sigma[site] = c.sigma;
                omega[site] = c.omega;
            }
            _ => return Err(Error::Mismatch(format!("cells {:?} are not a (+,-) two-site state", cells.0))),
        }
    }
    if !(seen[0] && seen[1]) {
        return Err(Error::Mismatch(format!("cells {:?} are not a (+,-) two-site state", cells.0)));
    }
    Ok(encode(sigma, omega))
}

/// Runs one replica to time `t` and returns its final cells.
pub fn simulate_to(params: ModelParams, law: &InitialLaw, t: f64, seed: u64, stream: u64) -> Result<CellCounts> {
    let mut state = SimState::new(params, law, seed, stream)?;
    loop {
        let ev = state.next_event()?;
        if state.time() + ev.waiting_time > t {
            return Ok(*state.cells());
        }
        state.apply(ev);
    }
}

/// Empirical and exact two-site laws at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleComparison {
    pub exact: Vec<f64>,
    pub empirical: Vec<f64>,
    pub replicas: usize,
}

impl OracleComparison {
    /// Largest `|empirical - exact| / stderr` over states with positive mass.
    pub fn max_z(&self) -> f64 {
        let n = self.replicas as f64;
        self.exact
            .iter()
            .zip(&self.empirical)
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, q)| (q - p).abs() / (p * (1.0 - p) / n).sqrt())
            .fold(0.0, f64::max)
    }

    pub fn total_variation(&self) -> f64 {
        0.5 * self.exact.iter().zip(&self.empirical).map(|(p, q)| (p - q).abs()).sum::<f64>()
    }
}

/// Runs `replicas` two-site simulations and tallies the final states.
pub fn compare(params: &ModelParams, lambda: [f64; 4], t: f64, replicas: usize, seed: u64) -> Result<OracleComparison> {
    if params.n != 2 {
        return Err(Error::InvalidParams(format!("the exact oracle needs N = 2, got {}", params.n)));
    }
    let law = InitialLaw::Product { lambda, eta: EtaMode::Fixed(ORACLE_ETA.to_vec()) };
    let states: Vec<Result<usize>> = (0..replicas)
        .into_par_iter()
        .map(|i| simulate_to(*params, &law, t, seed, i as u64).and_then(|c| state_from_cells(&c)))
        .collect();
    let mut counts = vec![0usize; ORACLE_STATES];
    for s in states {
        counts[s?] += 1;
    }
    let empirical = counts.iter().map(|&c| c as f64 / replicas as f64).collect();
    let exact = exact_law(params, &lambda, t).iter().copied().collect();
    Ok(OracleComparison { exact, empirical, replicas })
}
