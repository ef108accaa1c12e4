//! Parameters, spin configurations and the eight-cell sufficient statistic.
//!
//! Every site carries a triple `(sigma, omega, eta)` of ±1 spins. Because the
//! dynamics only sees a site through that triple and the global mean of
//! `sigma`, the configuration is summarized by the number of sites in each of
//! the eight cells of `{-1,+1}^3`.
//!
//! Cells are ordered lexicographically over `(sigma, omega, eta)` with
//! `-1 < +1`, so cell 0 is `(-,-,-)` and cell 7 is `(+,+,+)`. Moment vectors
//! are ordered `(eta, sigma, omega, sigma*omega, sigma*eta, omega*eta,
//! sigma*omega*eta)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on each cell probability when checking that a moment vector is
/// the moment vector of some law on `{-1,+1}^3`.
pub const FRECHET_TOL: f64 = 1e-12;

pub const ETA: usize = 0;
pub const SIGMA: usize = 1;
pub const OMEGA: usize = 2;
pub const SIGMA_OMEGA: usize = 3;
pub const SIGMA_ETA: usize = 4;
pub const OMEGA_ETA: usize = 5;
pub const SIGMA_OMEGA_ETA: usize = 6;

/// Column names for the moment components, in storage order.
pub const MOMENT_NAMES: [&str; 7] = [
    "m_eta",
    "m_sigma",
    "m_omega",
    "m_sigma_omega",
    "m_sigma_eta",
    "m_omega_eta",
    "m_sigma_omega_eta",
];

/// Model parameters plus the particle count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Perception noise inverse.
    pub beta: f64,
    /// Conformism strength.
    pub gamma: f64,
    /// Environment coupling.
    pub h: f64,
    /// Number of particles (ignored by the infinite-N analysis).
    pub n: usize,
}

impl ModelParams {
    /// Validates and builds a parameter set.
    ///
    /// `beta = 0` and `gamma = 0` are admitted: they give the free dynamics
    /// in which every spin flips at rate one, which several checks rely on.
    pub fn new(beta: f64, gamma: f64, h: f64, n: usize) -> Result<Self> {
        let finite_nonneg = |x: f64| x.is_finite() && x >= 0.0;
        if !finite_nonneg(beta) || !finite_nonneg(gamma) || !finite_nonneg(h) {
            return Err(Error::InvalidParams(format!(
                "beta, gamma, h must be finite and nonnegative (got {beta}, {gamma}, {h})"
            )));
        }
        if n == 0 {
            return Err(Error::InvalidParams("particle count must be at least 1".into()));
        }
        Ok(Self { beta, gamma, h, n })
    }

    /// Parameters for infinite-N computations; `n` is set to 1 and unused.
    pub fn limit(beta: f64, gamma: f64, h: f64) -> Result<Self> {
        Self::new(beta, gamma, h, 1)
    }

    pub fn with_n(self, n: usize) -> Result<Self> {
        Self::new(self.beta, self.gamma, self.h, n)
    }

    /// True when `(beta, gamma, h)` agree, regardless of `n`.
    pub fn same_model(&self, other: &Self) -> bool {
        self.beta == other.beta && self.gamma == other.gamma && self.h == other.h
    }

    /// `gamma * tanh(beta) - cosh^2(gamma h)`: positive below the critical
    /// curve, where the neutral equilibrium is unstable.
    pub fn criticality(&self) -> f64 {
        let c = (self.gamma * self.h).cosh();
        self.gamma * self.beta.tanh() - c * c
    }
}

/// Rate at which `sigma_j` flips: `exp(-beta sigma_j omega_j)`.
#[inline]
pub fn flip_rate_sigma(sigma: i8, omega: i8, params: &ModelParams) -> f64 {
    (-params.beta * f64::from(sigma * omega)).exp()
}

/// Rate at which `omega_j` flips: `exp(-gamma omega_j (m_sigma + h eta_j))`.
#[inline]
pub fn flip_rate_omega(omega: i8, eta: i8, m_sigma: f64, params: &ModelParams) -> f64 {
    (-params.gamma * f64::from(omega) * (m_sigma + params.h * f64::from(eta))).exp()
}

/// One of the eight cells of `{-1,+1}^3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Cell {
    pub sigma: i8,
    pub omega: i8,
    pub eta: i8,
}

#[inline]
fn bit(s: i8) -> usize {
    usize::from(s > 0)
}

#[inline]
fn spin(b: usize) -> i8 {
    if b & 1 == 1 {
        1
    } else {
        -1
    }
}

impl Cell {
    pub const ALL: [Cell; 8] = [
        Cell::new(-1, -1, -1),
        Cell::new(-1, -1, 1),
        Cell::new(-1, 1, -1),
        Cell::new(-1, 1, 1),
        Cell::new(1, -1, -1),
        Cell::new(1, -1, 1),
        Cell::new(1, 1, -1),
        Cell::new(1, 1, 1),
    ];

    pub const fn new(sigma: i8, omega: i8, eta: i8) -> Self {
        Self { sigma, omega, eta }
    }

    #[inline]
    pub fn index(self) -> usize {
        4 * bit(self.sigma) + 2 * bit(self.omega) + bit(self.eta)
    }

    #[inline]
    pub fn from_index(idx: usize) -> Self {
        debug_assert!(idx < 8);
        Self::new(spin(idx >> 2), spin(idx >> 1), spin(idx))
    }

    /// Values of the seven monomials `(eta, sigma, omega, sigma omega, ...)`
    /// on this cell.
    pub fn monomials(self) -> [f64; 7] {
        let (i, j, k) = (f64::from(self.sigma), f64::from(self.omega), f64::from(self.eta));
        [k, i, j, i * j, i * k, j * k, i * j * k]
    }

    pub fn flip_sigma(self) -> Self {
        Self::new(-self.sigma, self.omega, self.eta)
    }

    pub fn flip_omega(self) -> Self {
        Self::new(self.sigma, -self.omega, self.eta)
    }
}

fn check_spins(name: &str, v: &[i8]) -> Result<()> {
    if let Some(pos) = v.iter().position(|&s| s != 1 && s != -1) {
        return Err(Error::InvalidConfig(format!("{name}[{pos}] = {} is not ±1", v[pos])));
    }
    Ok(())
}

/// Site-resolved configuration. `eta` is frozen once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinConfig {
    sigma: Vec<i8>,
    omega: Vec<i8>,
    eta: Vec<i8>,
}

impl SpinConfig {
    pub fn new(sigma: Vec<i8>, omega: Vec<i8>, eta: Vec<i8>) -> Result<Self> {
        if sigma.len() != omega.len() || sigma.len() != eta.len() {
            return Err(Error::InvalidConfig(format!(
                "array lengths differ: {}, {}, {}",
                sigma.len(),
                omega.len(),
                eta.len()
            )));
        }
        if sigma.is_empty() {
            return Err(Error::InvalidConfig("empty configuration".into()));
        }
        check_spins("sigma", &sigma)?;
        check_spins("omega", &omega)?;
        check_spins("eta", &eta)?;
        Ok(Self { sigma, omega, eta })
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    pub fn sigma(&self) -> &[i8] {
        &self.sigma
    }

    pub fn omega(&self) -> &[i8] {
        &self.omega
    }

    pub fn eta(&self) -> &[i8] {
        &self.eta
    }

    pub fn flip_sigma(&mut self, site: usize) {
        self.sigma[site] = -self.sigma[site];
    }

    pub fn flip_omega(&mut self, site: usize) {
        self.omega[site] = -self.omega[site];
    }

    pub fn cell(&self, site: usize) -> Cell {
        Cell::new(self.sigma[site], self.omega[site], self.eta[site])
    }
}

/// Number of sites in each cell, in canonical cell order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CellCounts(pub [u64; 8]);

impl CellCounts {
    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    #[inline]
    pub fn get(&self, cell: Cell) -> u64 {
        self.0[cell.index()]
    }

    /// `sum_d sigma_d`, kept as an exact integer.
    pub fn sigma_sum(&self) -> i64 {
        self.0
            .iter()
            .enumerate()
            .map(|(idx, &n)| i64::from(Cell::from_index(idx).sigma) * n as i64)
            .sum()
    }

    /// Counts summed over sigma and omega for each eta: `(n(eta=-1), n(eta=+1))`.
    pub fn eta_marginal(&self) -> (u64, u64) {
        let mut out = (0, 0);
        for (idx, &n) in self.0.iter().enumerate() {
            if Cell::from_index(idx).eta > 0 {
                out.1 += n;
            } else {
                out.0 += n;
            }
        }
        out
    }
}

/// Tallies a configuration into cell counts.
pub fn cells_from_config(cfg: &SpinConfig) -> CellCounts {
    let mut counts = [0u64; 8];
    for d in 0..cfg.len() {
        counts[cfg.cell(d).index()] += 1;
    }
    CellCounts(counts)
}

/// The seven empirical or limiting moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentVector(pub [f64; 7]);

impl MomentVector {
    /// Checked constructor: components in `[-1, 1]` and every induced cell
    /// probability at least `-FRECHET_TOL`.
    pub fn new(m: [f64; 7]) -> Result<Self> {
        if let Some(pos) = m.iter().position(|x| !x.is_finite() || x.abs() > 1.0 + FRECHET_TOL) {
            return Err(Error::InvalidParams(format!(
                "moment component {} = {} outside [-1, 1]",
                MOMENT_NAMES[pos], m[pos]
            )));
        }
        let mv = Self(m);
        moments_to_cell_probs(&mv)?;
        Ok(mv)
    }

    pub const fn zero() -> Self {
        Self([0.0; 7])
    }

    #[inline]
    pub fn eta(&self) -> f64 {
        self.0[ETA]
    }
    #[inline]
    pub fn sigma(&self) -> f64 {
        self.0[SIGMA]
    }
    #[inline]
    pub fn omega(&self) -> f64 {
        self.0[OMEGA]
    }
    #[inline]
    pub fn sigma_omega(&self) -> f64 {
        self.0[SIGMA_OMEGA]
    }
    #[inline]
    pub fn sigma_eta(&self) -> f64 {
        self.0[SIGMA_ETA]
    }
    #[inline]
    pub fn omega_eta(&self) -> f64 {
        self.0[OMEGA_ETA]
    }
    #[inline]
    pub fn sigma_omega_eta(&self) -> f64 {
        self.0[SIGMA_OMEGA_ETA]
    }

    /// The six non-frozen components `(sigma, ..., sigma omega eta)`.
    pub fn dynamic(&self) -> [f64; 6] {
        let mut out = [0.0; 6];
        out.copy_from_slice(&self.0[1..]);
        out
    }

    /// Builds a moment vector from the frozen `m_eta` and the six dynamic
    /// components.
    pub fn from_parts(m_eta: f64, dynamic: &[f64]) -> Self {
        let mut m = [0.0; 7];
        m[0] = m_eta;
        m[1..].copy_from_slice(&dynamic[..6]);
        Self(m)
    }
}

/// Exact empirical moments of a cell-count vector.
pub fn moments_from_cells(cells: &CellCounts) -> MomentVector {
    let n = cells.total();
    assert!(n > 0, "moments of an empty configuration");
    let mut sums = [0i64; 7];
    for (idx, &count) in cells.0.iter().enumerate() {
        let cell = Cell::from_index(idx);
        let (i, j, k) = (i64::from(cell.sigma), i64::from(cell.omega), i64::from(cell.eta));
        let mono = [k, i, j, i * j, i * k, j * k, i * j * k];
        for (s, m) in sums.iter_mut().zip(mono) {
            *s += m * count as i64;
        }
    }
    let nf = n as f64;
    MomentVector(sums.map(|s| s as f64 / nf))
}

/// Cell probabilities `p(i,j,k) = (1 + i m_s + j m_w + k m_e + ...)/8`
/// induced by a moment vector, without clamping.
pub fn cell_probs_raw(m: &MomentVector) -> [f64; 8] {
    let mut p = [0.0; 8];
    for (idx, slot) in p.iter_mut().enumerate() {
        let mono = Cell::from_index(idx).monomials();
        let s: f64 = mono.iter().zip(m.0.iter()).map(|(a, b)| a * b).sum();
        *slot = (1.0 + s) / 8.0;
    }
    p
}

/// As [`cell_probs_raw`], but flags any probability below `-FRECHET_TOL`.
pub fn moments_to_cell_probs(m: &MomentVector) -> Result<[f64; 8]> {
    let p = cell_probs_raw(m);
    if let Some((cell, &prob)) = p.iter().enumerate().find(|(_, &x)| x < -FRECHET_TOL) {
        return Err(Error::Inconsistent { cell, prob });
    }
    Ok(p)
}

/// Moments of a law on the eight cells.
pub fn cell_probs_to_moments(p: &[f64; 8]) -> MomentVector {
    let mut m = [0.0; 7];
    for (idx, &prob) in p.iter().enumerate() {
        for (slot, mono) in m.iter_mut().zip(Cell::from_index(idx).monomials()) {
            *slot += prob * mono;
        }
    }
    MomentVector(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_config(n: usize, rng: &mut ChaCha8Rng) -> SpinConfig {
        let mut draw = || (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        let s = draw();
        let w = draw();
        let e = draw();
        SpinConfig::new(s, w, e).unwrap()
    }

    #[test]
    fn sigma_rate_examples() {
        let p0 = ModelParams::limit(0.0, 1.0, 0.0).unwrap();
        assert_eq!(flip_rate_sigma(1, 1, &p0), 1.0);
        let p = ModelParams::limit(0.7, 1.0, 0.0).unwrap();
        assert!((flip_rate_sigma(1, -1, &p) - 0.7f64.exp()).abs() < 1e-15);
        let p = ModelParams::limit(1.3, 1.0, 0.0).unwrap();
        assert!((flip_rate_sigma(-1, -1, &p) - (-1.3f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn omega_rate_examples() {
        let p = ModelParams::limit(1.0, 2.0, 0.0).unwrap();
        assert_eq!(flip_rate_omega(1, 1, 0.0, &p), 1.0);
        let p = ModelParams::limit(1.0, 1.0, 0.5).unwrap();
        assert_eq!(flip_rate_omega(1, -1, 0.5, &p), 1.0);
        let p = ModelParams::limit(1.0, 1.0, 1.0).unwrap();
        assert!((flip_rate_omega(-1, 1, 1.0, &p) - 2f64.exp()).abs() < 1e-14);
    }

    #[test]
    fn sigma_rates_are_reciprocal() {
        let p = ModelParams::limit(0.83, 1.0, 0.0).unwrap();
        for (s, w) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
            let fwd = flip_rate_sigma(s, w, &p);
            let back = flip_rate_sigma(-s, w, &p);
            assert!(fwd > 0.0);
            assert!((fwd * back - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_params() {
        assert!(ModelParams::new(-1.0, 1.0, 0.0, 1).is_err());
        assert!(ModelParams::new(1.0, f64::NAN, 0.0, 1).is_err());
        assert!(ModelParams::new(1.0, 1.0, 0.0, 0).is_err());
    }

    #[test]
    fn cell_index_roundtrip() {
        for idx in 0..8 {
            assert_eq!(Cell::from_index(idx).index(), idx);
            assert_eq!(Cell::ALL[idx].index(), idx);
        }
        assert_eq!(Cell::new(-1, -1, -1).index(), 0);
        assert_eq!(Cell::new(1, 1, 1).index(), 7);
    }

    #[test]
    fn config_validation() {
        assert!(SpinConfig::new(vec![1], vec![1, 1], vec![1]).is_err());
        assert!(SpinConfig::new(vec![1], vec![0], vec![1]).is_err());
        assert!(SpinConfig::new(vec![], vec![], vec![]).is_err());
    }

    #[test]
    fn single_site_cells() {
        let cfg = SpinConfig::new(vec![1], vec![-1], vec![1]).unwrap();
        let c = cells_from_config(&cfg);
        assert_eq!(c.get(Cell::new(1, -1, 1)), 1);
        assert_eq!(c.total(), 1);
    }

    #[test]
    fn two_site_cells_and_moments() {
        let cfg = SpinConfig::new(vec![1, -1], vec![1, 1], vec![1, -1]).unwrap();
        let c = cells_from_config(&cfg);
        assert_eq!(c.get(Cell::new(1, 1, 1)), 1);
        assert_eq!(c.get(Cell::new(-1, 1, -1)), 1);
        assert_eq!(c.total(), 2);
        let m = moments_from_cells(&c);
        assert_eq!(m.0, [0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn all_plus_moments() {
        let c = CellCounts([0, 0, 0, 0, 0, 0, 0, 5]);
        assert_eq!(moments_from_cells(&c).0, [1.0; 7]);
    }

    #[test]
    fn uniform_probs() {
        let p = moments_to_cell_probs(&MomentVector::zero()).unwrap();
        assert!(p.iter().all(|&x| x == 0.125));
    }

    #[test]
    fn random_configs_match_naive_tally() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = random_config(100, &mut rng);
        let c = cells_from_config(&cfg);
        for idx in 0..8 {
            let cell = Cell::from_index(idx);
            let naive = (0..100)
                .filter(|&d| {
                    cfg.sigma()[d] == cell.sigma && cfg.omega()[d] == cell.omega && cfg.eta()[d] == cell.eta
                })
                .count() as u64;
            assert_eq!(c.0[idx], naive);
        }
    }

    fn naive_moments(cfg: &SpinConfig) -> [f64; 7] {
        let n = cfg.len() as f64;
        let mut m = [0.0; 7];
        for d in 0..cfg.len() {
            let (s, w, e) = (f64::from(cfg.sigma()[d]), f64::from(cfg.omega()[d]), f64::from(cfg.eta()[d]));
            let vals = [e, s, w, s * w, s * e, w * e, s * w * e];
            for (a, v) in m.iter_mut().zip(vals) {
                *a += v / n;
            }
        }
        m
    }

    #[test]
    fn exhaustive_small_configs() {
        // every configuration with N <= 3
        for n in 1..=3usize {
            let sites = 3 * n;
            for code in 0u32..(1 << sites) {
                let s: Vec<i8> = (0..sites).map(|b| if code >> b & 1 == 1 { 1 } else { -1 }).collect();
                let cfg = SpinConfig::new(s[..n].to_vec(), s[n..2 * n].to_vec(), s[2 * n..].to_vec()).unwrap();
                let c = cells_from_config(&cfg);
                let m = moments_from_cells(&c);
                let naive = naive_moments(&cfg);
                for (a, b) in m.0.iter().zip(naive) {
                    assert!((a - b).abs() < 1e-15);
                }
                let p = moments_to_cell_probs(&m).unwrap();
                for idx in 0..8 {
                    assert!((p[idx] * n as f64 - c.0[idx] as f64).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn random_config_moments_match_site_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = random_config(50, &mut rng);
        let m = moments_from_cells(&cells_from_config(&cfg));
        for (a, b) in m.0.iter().zip(naive_moments(&cfg)) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn inconsistent_moments_flagged() {
        // all pairwise products +1 but sigma = -omega is impossible
        let m = MomentVector([0.0, 1.0, -1.0, 1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(moments_to_cell_probs(&m), Err(Error::Inconsistent { .. })));
        assert!(MomentVector::new(m.0).is_err());
        assert!(MomentVector::new([0.0, 1.5, 0.0, 0.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn neutral_point_probs_match_counter_expansion() {
        // neutral equilibrium moments, beta=1, gamma=1.2, h=0.4
        let (b, g, h): (f64, f64, f64) = (1.0, 1.2, 0.4);
        let gh = g * h;
        let m_so = (b.tanh() * gh.tanh() * gh.sinh() + b.sinh()) / (b.cosh() + gh.cosh());
        let m = MomentVector([0.0, 0.0, 0.0, m_so, b.tanh() * gh.tanh(), gh.tanh(), 0.0]);
        let p = moments_to_cell_probs(&m).unwrap();
        for (idx, &pi) in p.iter().enumerate() {
            let c = Cell::from_index(idx);
            let (i, j, k) = (f64::from(c.sigma), f64::from(c.omega), f64::from(c.eta));
            let expected = (1.0 + i * j * m.0[3] + i * k * m.0[4] + j * k * m.0[5]) / 8.0;
            assert!((pi - expected).abs() < 1e-15);
            assert!(pi > 0.0);
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    proptest::proptest! {
        #[test]
        fn probs_sum_to_one_and_invert(p in proptest::collection::vec(0.0f64..1.0, 8)) {
            let total: f64 = p.iter().sum();
            proptest::prop_assume!(total > 1e-6);
            let mut law = [0.0; 8];
            for (a, b) in law.iter_mut().zip(&p) { *a = b / total; }
            let m = cell_probs_to_moments(&law);
            let back = moments_to_cell_probs(&m).unwrap();
            for (a, b) in back.iter().zip(law) { proptest::prop_assert!((a - b).abs() < 1e-12); }
            proptest::prop_assert!((back.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
