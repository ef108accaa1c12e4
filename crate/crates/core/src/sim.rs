//! Exact event-driven simulation of the finite-N chain.
//!
//! All sites in a cell share the same two flip rates, so the chain is
//! simulated on the eight cell counts directly: sixteen channels (cell times
//! spin type), one exponential waiting time and one channel draw per event.
//! The sigma rates depend only on `beta` and are fixed for the whole run; the
//! omega rates are rebuilt every step from the current `m_sigma` through a
//! single exponential.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{moments_from_cells, Cell, CellCounts, ModelParams, MomentVector};
use crate::rng::stream_rng;

/// How the frozen environment is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EtaMode {
    /// Independent symmetric ±1 labels.
    IidSymmetric,
    /// A given realization; its length must equal N.
    Fixed(Vec<i8>),
    /// Every label is +1. Only meaningful with `h = 0`, where the
    /// environment does not enter the rates.
    Homogeneous,
}

/// Law of the initial configuration; sites are drawn independently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialLaw {
    /// `(sigma, omega) ~ lambda` on `{-1,+1}^2` in the order
    /// `(-,-), (-,+), (+,-), (+,+)`, with `eta` drawn independently.
    Product { lambda: [f64; 4], eta: EtaMode },
    /// Joint law of `(sigma, omega, eta)` on the eight cells.
    Cells([f64; 8]),
}

impl InitialLaw {
    /// Product law with symmetric i.i.d. environment.
    pub fn product(lambda: [f64; 4]) -> Self {
        Self::Product { lambda, eta: EtaMode::IidSymmetric }
    }

    fn validate(&self, n: usize) -> Result<()> {
        let check = |p: &[f64]| -> Result<()> {
            if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::InvalidLaw(format!("negative or non-finite entry in {p:?}")));
            }
            let s: f64 = p.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidLaw(format!("probabilities sum to {s}")));
            }
            Ok(())
        };
        match self {
            Self::Product { lambda, eta } => {
                check(lambda)?;
                if let EtaMode::Fixed(v) = eta {
                    if v.len() != n {
                        return Err(Error::InvalidLaw(format!(
                            "fixed eta has length {} but N = {n}",
                            v.len()
                        )));
                    }
                    if v.iter().any(|&s| s != 1 && s != -1) {
                        return Err(Error::InvalidLaw("fixed eta entries must be ±1".into()));
                    }
                }
                Ok(())
            }
            Self::Cells(p) => check(p),
        }
    }

    /// Expected moments of a single site under this law (`m_eta` is the law
    /// value, zero for a symmetric environment).
    pub fn moments(&self) -> MomentVector {
        match self {
            Self::Cells(p) => crate::model::cell_probs_to_moments(p),
            Self::Product { lambda, eta } => {
                let mean_eta = match eta {
                    EtaMode::IidSymmetric => 0.0,
                    EtaMode::Homogeneous => 1.0,
                    EtaMode::Fixed(v) => v.iter().map(|&s| f64::from(s)).sum::<f64>() / v.len().max(1) as f64,
                };
                let mut p = [0.0; 8];
                for (idx, slot) in p.iter_mut().enumerate() {
                    let c = Cell::from_index(idx);
                    let pair = 2 * usize::from(c.sigma > 0) + usize::from(c.omega > 0);
                    let pe = if c.eta > 0 { (1.0 + mean_eta) / 2.0 } else { (1.0 - mean_eta) / 2.0 };
                    *slot = lambda[pair] * pe;
                }
                crate::model::cell_probs_to_moments(&p)
            }
        }
    }
}

fn categorical<const K: usize>(p: &[f64; K], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    // rounding: fall back to the last state with positive mass
    p.iter().rposition(|&x| x > 0.0).unwrap_or(K - 1)
}

/// Which spin flips in an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpinKind {
    Sigma,
    Omega,
}

/// One of the sixteen transition channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Channel {
    pub cell: Cell,
    pub kind: SpinKind,
}

impl Channel {
    /// Channels `0..8` are sigma flips of cell `c`, `8..16` omega flips.
    pub fn from_index(idx: usize) -> Self {
        let kind = if idx < 8 { SpinKind::Sigma } else { SpinKind::Omega };
        Self { cell: Cell::from_index(idx % 8), kind }
    }

    pub fn index(self) -> usize {
        self.cell.index() + if self.kind == SpinKind::Omega { 8 } else { 0 }
    }

    pub fn target(self) -> Cell {
        match self.kind {
            SpinKind::Sigma => self.cell.flip_sigma(),
            SpinKind::Omega => self.cell.flip_omega(),
        }
    }
}

/// A drawn but not yet applied event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub channel: Channel,
    pub waiting_time: f64,
}

/// Mutable state of one replica.
#[derive(Debug, Clone)]
pub struct SimState {
    params: ModelParams,
    cells: CellCounts,
    sigma_sum: i64,
    time: f64,
    events: u64,
    initial_eta_sum: i64,
    rng: ChaCha8Rng,
    // exp(-beta i j), indexed by [i == j]
    sigma_rate: [f64; 2],
    // exp(-gamma j k h), indexed by [j > 0][k > 0]
    omega_field: [[f64; 2]; 2],
}

impl SimState {
    /// Draws the initial configuration and sets up the state.
    pub fn new(params: ModelParams, law: &InitialLaw, seed: u64, stream: u64) -> Result<Self> {
        let rng = stream_rng(seed, stream);
        Self::with_rng(params, law, rng)
    }

    pub fn with_rng(params: ModelParams, law: &InitialLaw, mut rng: ChaCha8Rng) -> Result<Self> {
        let n = params.n;
        law.validate(n)?;
        let mut counts = [0u64; 8];
        match law {
            InitialLaw::Product { lambda, eta } => {
                for d in 0..n {
                    let pair = categorical(lambda, &mut rng);
                    let e: i8 = match eta {
                        EtaMode::IidSymmetric => {
                            if rng.random::<bool>() {
                                1
                            } else {
                                -1
                            }
                        }
                        EtaMode::Fixed(v) => v[d],
                        EtaMode::Homogeneous => 1,
                    };
                    // pair index is 2*bit(sigma) + bit(omega)
                    counts[2 * pair + usize::from(e > 0)] += 1;
                }
            }
            InitialLaw::Cells(p) => {
                for _ in 0..n {
                    counts[categorical(p, &mut rng)] += 1;
                }
            }
        }
        Ok(Self::from_cells_with_rng(params, CellCounts(counts), rng))
    }

    /// Starts from given counts; `params.n` is replaced by their total.
    pub fn from_cells(params: ModelParams, cells: CellCounts, seed: u64, stream: u64) -> Result<Self> {
        if cells.total() == 0 {
            return Err(Error::InvalidConfig("empty cell counts".into()));
        }
        Ok(Self::from_cells_with_rng(params, cells, stream_rng(seed, stream)))
    }

    fn from_cells_with_rng(mut params: ModelParams, cells: CellCounts, rng: ChaCha8Rng) -> Self {
        params.n = cells.total() as usize;
        let (neg, pos) = cells.eta_marginal();
        let b = params.beta;
        let gh = params.gamma * params.h;
        Self {
            params,
            cells,
            sigma_sum: cells.sigma_sum(),
            time: 0.0,
            events: 0,
            initial_eta_sum: pos as i64 - neg as i64,
            rng,
            sigma_rate: [b.exp(), (-b).exp()],
            // j k = +1 on the diagonal
            omega_field: [[(-gh).exp(), gh.exp()], [gh.exp(), (-gh).exp()]],
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn cells(&self) -> &CellCounts {
        &self.cells
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    /// Cached `m_sigma`, maintained through the exact integer sum.
    pub fn m_sigma(&self) -> f64 {
        self.sigma_sum as f64 / self.params.n as f64
    }

    /// `m_sigma` recomputed from the cell counts.
    pub fn m_sigma_recomputed(&self) -> f64 {
        moments_from_cells(&self.cells).sigma()
    }

    pub fn moments(&self) -> MomentVector {
        moments_from_cells(&self.cells)
    }

    /// `r_N = sqrt(N) m_eta` of the frozen environment.
    pub fn r(&self) -> f64 {
        self.initial_eta_sum as f64 / (self.params.n as f64).sqrt()
    }

    /// Per-site rates of the sixteen channels at the current state.
    pub fn channel_rates(&self) -> [f64; 16] {
        let e = (-self.params.gamma * self.m_sigma()).exp();
        let mut rates = [0.0; 16];
        for idx in 0..8 {
            let c = Cell::from_index(idx);
            let same = usize::from(c.sigma == c.omega);
            rates[idx] = self.sigma_rate[same];
            let j = usize::from(c.omega > 0);
            let k = usize::from(c.eta > 0);
            let mean_field = if c.omega > 0 { e } else { 1.0 / e };
            rates[8 + idx] = mean_field * self.omega_field[j][k];
        }
        rates
    }

    /// Count-weighted channel rates: `n(cell) * rate(channel)`.
    pub fn channel_weights(&self) -> [f64; 16] {
        let mut w = self.channel_rates();
        for (idx, slot) in w.iter_mut().enumerate() {
            *slot *= self.cells.0[idx % 8] as f64;
        }
        w
    }

    /// Sum of all 2N flip rates.
    pub fn total_rate(&self) -> f64 {
        self.channel_weights().iter().sum()
    }

    /// Draws the waiting time and the channel of the next event without
    /// changing the configuration.
    pub fn next_event(&mut self) -> Result<Event> {
        let w = self.channel_weights();
        let total: f64 = w.iter().sum();
        if !(total > 0.0) {
            return Err(Error::EmptySelection);
        }
        let u: f64 = self.rng.random();
        let waiting_time = -(1.0 - u).ln() / total;
        let target = self.rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = None;
        for (idx, &wi) in w.iter().enumerate() {
            acc += wi;
            if target < acc && wi > 0.0 {
                chosen = Some(idx);
                break;
            }
        }
        let idx = match chosen {
            Some(i) => i,
            None => w.iter().rposition(|&x| x > 0.0).ok_or(Error::EmptySelection)?,
        };
        Ok(Event { channel: Channel::from_index(idx), waiting_time })
    }

    /// Applies a drawn event: moves one site between cells and advances time.
    pub fn apply(&mut self, ev: Event) {
        let from = ev.channel.cell;
        let to = ev.channel.target();
        debug_assert!(self.cells.0[from.index()] > 0);
        self.cells.0[from.index()] -= 1;
        self.cells.0[to.index()] += 1;
        if ev.channel.kind == SpinKind::Sigma {
            self.sigma_sum -= 2 * i64::from(from.sigma);
        }
        self.time += ev.waiting_time;
        self.events += 1;
    }

    pub fn step(&mut self) -> Result<Event> {
        let ev = self.next_event()?;
        self.apply(ev);
        Ok(ev)
    }
}

/// Limits for a single simulation run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub max_events: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { max_events: 5_000_000_000 }
    }
}

/// Sampled moment path of one replica.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub params: ModelParams,
    pub seed: u64,
    pub stream: u64,
    pub sample_times: Vec<f64>,
    pub moments: Vec<MomentVector>,
    pub events: u64,
    /// `sqrt(N) m_eta` of the drawn environment.
    pub r0: f64,
}

/// `0, dt, 2 dt, ...` up to `t_end` (inclusive up to rounding).
pub fn sample_grid(t_end: f64, sample_dt: f64) -> Vec<f64> {
    let steps = (t_end / sample_dt + 1e-9).floor() as usize;
    (0..=steps).map(|k| k as f64 * sample_dt).collect()
}

/// Runs one replica and records the moments on the grid `k * sample_dt`.
///
/// The value recorded at time `s` includes every event at times `<= s`.
pub fn simulate(
    params: ModelParams,
    law: &InitialLaw,
    t_end: f64,
    sample_dt: f64,
    seed: u64,
    stream: u64,
    opts: SimOptions,
) -> Result<TrajectoryRecord> {
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidParams(format!("t_end must be >= 0, got {t_end}")));
    }
    if !(sample_dt > 0.0) {
        return Err(Error::InvalidParams(format!("sample_dt must be > 0, got {sample_dt}")));
    }
    let state = SimState::new(params, law, seed, stream)?;
    run_state(state, t_end, sample_dt, seed, stream, opts)
}

/// Continues a prepared state and records it on the sample grid.
pub fn run_state(
    mut state: SimState,
    t_end: f64,
    sample_dt: f64,
    seed: u64,
    stream: u64,
    opts: SimOptions,
) -> Result<TrajectoryRecord> {
    let times = sample_grid(t_end, sample_dt);
    let mut moments = Vec::with_capacity(times.len());
    let mut k = 0;
    while k < times.len() {
        let ev = state.next_event()?;
        let t_next = state.time + ev.waiting_time;
        while k < times.len() && times[k] < t_next {
            moments.push(state.moments());
            k += 1;
        }
        if k == times.len() {
            break;
        }
        if state.events >= opts.max_events {
            return Err(Error::EventCap { cap: opts.max_events, time: state.time, t_end });
        }
        state.apply(ev);
    }
    Ok(TrajectoryRecord {
        params: state.params,
        seed,
        stream,
        sample_times: times,
        moments,
        events: state.events,
        r0: state.r(),
    })
}

/// Runs `n_replicas` independent replicas; replica `i` uses stream `i`.
/// Output order is replica order regardless of scheduling.
pub fn run_replicas(
    params: ModelParams,
    law: &InitialLaw,
    t_end: f64,
    sample_dt: f64,
    n_replicas: usize,
    base_seed: u64,
    opts: SimOptions,
) -> Result<Vec<TrajectoryRecord>> {
    if n_replicas == 0 {
        return Err(Error::InvalidParams("n_replicas must be >= 1".into()));
    }
    let results: Vec<Result<TrajectoryRecord>> = (0..n_replicas)
        .into_par_iter()
        .map(|i| {
            simulate(params, law, t_end, sample_dt, base_seed, i as u64, opts)
                .map_err(|e| Error::Replica { index: i, source: Box::new(e) })
        })
        .collect();
    // first failure by replica index, independent of scheduling
    results.into_iter().collect()
}
