//! Continuous-time Markov chain driving the topology mode `r(t)`.

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use thiserror::Error;

const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarkovError {
    #[error("generator must be square and non-empty, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("generator row {row}: off-diagonal rate at column {col} is {value} (must be >= 0)")]
    NegativeRate { row: usize, col: usize, value: f64 },
    #[error("generator row {row} sums to {sum:e}, expected 0")]
    RowSum { row: usize, sum: f64 },
    #[error("chain is reducible; stationary distribution is not unique and positive")]
    Reducible,
    #[error("stationary residual {residual:e} exceeds tolerance")]
    Residual { residual: f64 },
    #[error("initial distribution must have {expected} nonnegative entries with positive sum")]
    BadDistribution { expected: usize },
    #[error("horizon must be positive and finite, got {0}")]
    BadHorizon(f64),
}

/// Validated rate matrix `Υ = (γ_pq)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    rates: DMatrix<f64>,
}

impl GeneratorMatrix {
    pub fn new(rates: DMatrix<f64>) -> Result<Self, MarkovError> {
        validate_generator(rates)
    }

    pub fn rates(&self) -> &DMatrix<f64> {
        &self.rates
    }

    pub fn n_states(&self) -> usize {
        self.rates.nrows()
    }

    /// Total exit rate `-γ_pp` of state `p`.
    pub fn exit_rate(&self, p: usize) -> f64 {
        -self.rates[(p, p)]
    }
}

pub fn validate_generator(rates: DMatrix<f64>) -> Result<GeneratorMatrix, MarkovError> {
    let (rows, cols) = rates.shape();
    if rows != cols || rows == 0 {
        return Err(MarkovError::NotSquare { rows, cols });
    }
    for p in 0..rows {
        for q in 0..cols {
            let value = rates[(p, q)];
            if p != q && !(value >= 0.0 && value.is_finite()) {
                return Err(MarkovError::NegativeRate { row: p, col: q, value });
            }
        }
        let sum = rates.row(p).sum();
        let scale = rates.row(p).amax().max(1.0);
        if !(sum.abs() <= ROW_SUM_TOL * scale) {
            return Err(MarkovError::RowSum { row: p, sum });
        }
    }
    Ok(GeneratorMatrix { rates })
}

/// Unique `π > 0` with `πᵀΥ = 0`, `Σπ = 1`.
pub fn stationary_distribution(gen: &GeneratorMatrix) -> Result<DVector<f64>, MarkovError> {
    let s = gen.n_states();
    if !crate::graph::strongly_connected(&gen.rates.transpose()) {
        return Err(MarkovError::Reducible);
    }
    // Υᵀπ = 0 with the last equation replaced by the normalization.
    let mut sys = gen.rates.transpose();
    let mut rhs = DVector::zeros(s);
    sys.row_mut(s - 1).fill(1.0);
    rhs[s - 1] = 1.0;
    let pi = sys.lu().solve(&rhs).ok_or(MarkovError::Reducible)?;
    if pi.iter().any(|&p| !(p > 0.0)) {
        return Err(MarkovError::Reducible);
    }
    let residual = (gen.rates.transpose() * &pi).amax();
    if residual > 1e-10 {
        return Err(MarkovError::Residual { residual });
    }
    Ok(pi)
}

/// Normalizes a weight vector to a probability vector. The flag reports
/// whether the input needed rescaling (sum off by more than 1e-9).
pub fn normalize_distribution(weights: &[f64]) -> Result<(Vec<f64>, bool), MarkovError> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || weights.iter().any(|&w| !(w >= 0.0)) || !(sum > 0.0) {
        return Err(MarkovError::BadDistribution { expected: weights.len() });
    }
    let rescaled = (sum - 1.0).abs() > 1e-9;
    Ok((weights.iter().map(|w| w / sum).collect(), rescaled))
}

/// Piecewise-constant, right-continuous mode signal on `[0, horizon]`.
/// Mode ids are 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct ModePath {
    switch_times: Vec<f64>,
    modes: Vec<usize>,
    horizon: f64,
}

impl ModePath {
    /// A path that stays in `mode` for the whole horizon.
    pub fn constant(mode: usize, horizon: f64) -> Self {
        Self { switch_times: vec![0.0], modes: vec![mode], horizon }
    }

    pub fn switch_times(&self) -> &[f64] {
        &self.switch_times
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Mode active at time `t` (right-continuous).
    pub fn mode_at(&self, t: f64) -> usize {
        let idx = self.switch_times.partition_point(|&s| s <= t);
        self.modes[idx.saturating_sub(1)]
    }

    /// `(start, end, mode)` for each segment; ends sum to the horizon.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, usize)> + '_ {
        self.switch_times.iter().enumerate().map(move |(k, &start)| {
            let end = self.switch_times.get(k + 1).copied().unwrap_or(self.horizon);
            (start, end, self.modes[k])
        })
    }

    /// Fraction of `[0, horizon]` spent in each of `n_states` modes.
    pub fn occupation_fractions(&self, n_states: usize) -> Vec<f64> {
        let mut occ = vec![0.0; n_states];
        for (start, end, mode) in self.segments() {
            occ[mode] += end - start;
        }
        occ.iter().map(|o| o / self.horizon).collect()
    }
}

/// Samples `r(t)` on `[0, horizon]`: exponential holding times with rate
/// `-γ_pp`, jumps to `q` with probability `γ_pq / -γ_pp`.
pub fn sample_mode_path(
    gen: &GeneratorMatrix,
    initial: &[f64],
    horizon: f64,
    seed: u64,
) -> Result<ModePath, MarkovError> {
    let s = gen.n_states();
    if initial.len() != s {
        return Err(MarkovError::BadDistribution { expected: s });
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(MarkovError::BadHorizon(horizon));
    }
    let (initial, rescaled) = normalize_distribution(initial)?;
    if rescaled {
        log::warn!("initial mode distribution does not sum to 1; normalized to {initial:?}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = WeightedIndex::new(&initial).map_err(|_| MarkovError::BadDistribution { expected: s })?;
    let mut mode = first.sample(&mut rng);
    let mut t = 0.0;
    let mut switch_times = vec![0.0];
    let mut modes = vec![mode];
    loop {
        let rate = gen.exit_rate(mode);
        if rate <= 0.0 {
            break;
        }
        let hold: f64 = Exp::new(rate).expect("positive rate").sample(&mut rng);
        t += hold;
        if t >= horizon {
            break;
        }
        let jump: Vec<f64> = (0..s)
            .map(|q| if q == mode { 0.0 } else { gen.rates[(mode, q)] })
            .collect();
        mode = WeightedIndex::new(&jump).expect("positive exit rate").sample(&mut rng);
        switch_times.push(t);
        modes.push(mode);
    }
    Ok(ModePath { switch_times, modes, horizon })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn demo_generator() -> GeneratorMatrix {
        GeneratorMatrix::new(DMatrix::from_row_slice(
            3,
            3,
            &[-0.2, 0.1, 0.1, 0.2, -0.6, 0.4, 0.02, 0.08, -0.1],
        ))
        .unwrap()
    }

    #[test]
    fn validates_examples() {
        demo_generator();
        GeneratorMatrix::new(DMatrix::zeros(1, 1)).unwrap();
        let bad = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.5, -0.5]);
        assert!(matches!(GeneratorMatrix::new(bad), Err(MarkovError::RowSum { row: 0, .. })));
        let neg = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 0.5, -0.5]);
        assert!(matches!(GeneratorMatrix::new(neg), Err(MarkovError::NegativeRate { row: 0, col: 1, .. })));
    }

    #[test]
    fn stationary_examples() {
        let sym = GeneratorMatrix::new(DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0])).unwrap();
        let pi = stationary_distribution(&sym).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-15 && (pi[1] - 0.5).abs() < 1e-15);

        let single = GeneratorMatrix::new(DMatrix::zeros(1, 1)).unwrap();
        assert_eq!(stationary_distribution(&single).unwrap()[0], 1.0);

        let pi = stationary_distribution(&demo_generator()).unwrap();
        let exact = [14.0 / 73.0, 9.0 / 73.0, 50.0 / 73.0];
        for (p, e) in pi.iter().zip(exact) {
            assert!((p - e).abs() < 1e-12);
        }
    }

    #[test]
    fn reducible_chain_is_rejected() {
        let absorbing = GeneratorMatrix::new(DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, 0.0])).unwrap();
        assert_eq!(stationary_distribution(&absorbing), Err(MarkovError::Reducible));
    }

    #[test]
    fn single_state_path_has_one_segment() {
        let g = GeneratorMatrix::new(DMatrix::zeros(1, 1)).unwrap();
        let path = sample_mode_path(&g, &[1.0], 37.5, 3).unwrap();
        assert_eq!(path.modes(), &[0]);
        assert_eq!(path.segments().collect::<Vec<_>>(), vec![(0.0, 37.5, 0)]);
    }

    #[test]
    fn unnormalized_initial_distribution_is_accepted() {
        let (p, rescaled) = normalize_distribution(&[0.4772, 0.2612, 0.3235]).unwrap();
        assert!(rescaled);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        sample_mode_path(&demo_generator(), &[0.4772, 0.2612, 0.3235], 10.0, 1).unwrap();
    }

    #[test]
    fn mode_at_is_right_continuous() {
        let path = ModePath { switch_times: vec![0.0, 1.0, 2.5], modes: vec![2, 0, 1], horizon: 4.0 };
        assert_eq!(path.mode_at(0.0), 2);
        assert_eq!(path.mode_at(0.999), 2);
        assert_eq!(path.mode_at(1.0), 0);
        assert_eq!(path.mode_at(3.9), 1);
    }
}
