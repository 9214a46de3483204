use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use super::{DbnError, MomentumMode, TrainConfig};

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Bernoulli-Bernoulli restricted Boltzmann machine.
///
/// `weights` is hidden × visible, so `weights[[j, i]]` couples visible unit
/// `i` to hidden unit `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct RbmLayer {
    pub weights: Array2<f64>,
    pub visible_bias: Array1<f64>,
    pub hidden_bias: Array1<f64>,
    pub weight_velocity: Array2<f64>,
    pub visible_velocity: Array1<f64>,
    pub hidden_velocity: Array1<f64>,
}

impl RbmLayer {
    /// Weights uniform in (-0.01, 0.01), biases zero.
    pub fn new<R: Rng>(visible: usize, hidden: usize, rng: &mut R) -> Self {
        let weights = Array2::from_shape_fn((hidden, visible), |_| rng.random_range(-0.01..0.01));
        Self::from_parameters(weights, Array1::zeros(visible), Array1::zeros(hidden))
    }

    pub fn from_parameters(weights: Array2<f64>, visible_bias: Array1<f64>, hidden_bias: Array1<f64>) -> Self {
        let (j, i) = weights.dim();
        assert_eq!(visible_bias.len(), i, "visible bias length must match weight columns");
        assert_eq!(hidden_bias.len(), j, "hidden bias length must match weight rows");
        Self {
            weight_velocity: Array2::zeros((j, i)),
            visible_velocity: Array1::zeros(i),
            hidden_velocity: Array1::zeros(j),
            weights,
            visible_bias,
            hidden_bias,
        }
    }

    pub fn visible_len(&self) -> usize {
        self.visible_bias.len()
    }

    pub fn hidden_len(&self) -> usize {
        self.hidden_bias.len()
    }

    fn check(&self, expected: usize, found: usize) -> Result<(), DbnError> {
        if expected != found {
            return Err(DbnError::Shape { expected, found });
        }
        Ok(())
    }

    /// `E(v, h) = -a·v - b·h - hᵀ W v`.
    pub fn energy(&self, v: ArrayView1<'_, f64>, h: ArrayView1<'_, f64>) -> Result<f64, DbnError> {
        self.check(self.visible_len(), v.len())?;
        self.check(self.hidden_len(), h.len())?;
        Ok(-self.visible_bias.dot(&v) - self.hidden_bias.dot(&h) - h.dot(&self.weights.dot(&v)))
    }

    /// `P(h_j = 1 | v) = σ(b_j + Σ_i w_ji v_i)`.
    pub fn hidden_prob(&self, v: ArrayView1<'_, f64>) -> Result<Array1<f64>, DbnError> {
        self.check(self.visible_len(), v.len())?;
        Ok((self.weights.dot(&v) + &self.hidden_bias).mapv(sigmoid))
    }

    /// `P(v_i = 1 | h) = σ(a_i + Σ_j w_ji h_j)`.
    pub fn visible_prob(&self, h: ArrayView1<'_, f64>) -> Result<Array1<f64>, DbnError> {
        self.check(self.hidden_len(), h.len())?;
        Ok((self.weights.t().dot(&h) + &self.visible_bias).mapv(sigmoid))
    }

    /// Row-wise [`hidden_prob`](Self::hidden_prob) for an n × I batch.
    pub fn hidden_prob_batch(&self, v: ArrayView2<'_, f64>) -> Result<Array2<f64>, DbnError> {
        self.check(self.visible_len(), v.ncols())?;
        Ok((v.dot(&self.weights.t()) + &self.hidden_bias).mapv(sigmoid))
    }

    pub fn visible_prob_batch(&self, h: ArrayView2<'_, f64>) -> Result<Array2<f64>, DbnError> {
        self.check(self.hidden_len(), h.ncols())?;
        Ok((h.dot(&self.weights) + &self.visible_bias).mapv(sigmoid))
    }

    /// One contrastive-divergence step on `batch` (n × I). Returns the mean
    /// squared reconstruction error of the batch.
    ///
    /// Hidden states are sampled from `P(h | v)`; the reconstruction and the
    /// negative-phase hidden statistics use probabilities.
    pub fn cd1_update<R: Rng>(
        &mut self,
        batch: ArrayView2<'_, f64>,
        config: &TrainConfig,
        rng: &mut R,
    ) -> Result<f64, DbnError> {
        let n = batch.nrows();
        if n == 0 {
            return Err(DbnError::EmptyTrainingSet);
        }
        let h0 = self.hidden_prob_batch(batch)?;
        let h0_sample = h0.mapv(|p| if rng.random::<f64>() < p { 1.0 } else { 0.0 });
        let v1 = self.visible_prob_batch(h0_sample.view())?;
        let h1 = self.hidden_prob_batch(v1.view())?;

        let scale = 1.0 / n as f64;
        let weight_grad = (h0.t().dot(&batch) - h1.t().dot(&v1)) * scale;
        let visible_grad = (&batch - &v1).sum_axis(Axis(0)) * scale;
        let hidden_grad = (&h0 - &h1).sum_axis(Axis(0)) * scale;

        let (lr, beta) = (config.learning_rate, config.momentum);
        match config.momentum_mode {
            MomentumMode::Increment => {
                self.weight_velocity = &self.weight_velocity * beta + &weight_grad * lr;
                self.visible_velocity = &self.visible_velocity * beta + &visible_grad * lr;
                self.hidden_velocity = &self.hidden_velocity * beta + &hidden_grad * lr;
                self.weights += &self.weight_velocity;
                self.visible_bias += &self.visible_velocity;
                self.hidden_bias += &self.hidden_velocity;
            }
            MomentumMode::Literal => {
                self.weights = &self.weights * beta + &weight_grad * lr;
                self.visible_bias = &self.visible_bias * beta + &visible_grad * lr;
                self.hidden_bias = &self.hidden_bias * beta + &hidden_grad * lr;
            }
        }

        let finite = self
            .weights
            .iter()
            .chain(&self.visible_bias)
            .chain(&self.hidden_bias)
            .all(|x| x.is_finite());
        if !finite {
            return Err(DbnError::NonFinite("RBM parameters after CD-1 update".into()));
        }

        let recon = (&batch - &v1).mapv(|d| d * d).sum() / (n * self.visible_len()) as f64;
        Ok(recon)
    }
}

/// Exact joint distribution of a small RBM over all binary `(v, h)` states.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    visible: usize,
    hidden: usize,
    /// Indexed by `(v_bits << hidden) | h_bits`.
    probs: Vec<f64>,
}

/// Largest `I + J` accepted by [`joint_prob_bruteforce`].
pub const MAX_ENUMERATION_UNITS: usize = 20;

fn bits_to_vec(bits: usize, len: usize) -> Array1<f64> {
    Array1::from_shape_fn(len, |i| ((bits >> i) & 1) as f64)
}

/// Enumerates `P(v, h) = exp(-E(v, h)) / Z` over all `2^(I+J)` states.
pub fn joint_prob_bruteforce(rbm: &RbmLayer) -> Result<JointTable, DbnError> {
    let (visible, hidden) = (rbm.visible_len(), rbm.hidden_len());
    if visible + hidden > MAX_ENUMERATION_UNITS {
        return Err(DbnError::EnumerationTooLarge {
            units: visible + hidden,
            limit: MAX_ENUMERATION_UNITS,
        });
    }
    let mut neg_energy = Vec::with_capacity(1 << (visible + hidden));
    for v_bits in 0..1usize << visible {
        let v = bits_to_vec(v_bits, visible);
        for h_bits in 0..1usize << hidden {
            let h = bits_to_vec(h_bits, hidden);
            neg_energy.push(-rbm.energy(v.view(), h.view())?);
        }
    }
    let shift = neg_energy.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let unnorm: Vec<f64> = neg_energy.iter().map(|e| (e - shift).exp()).collect();
    let z: f64 = unnorm.iter().sum();
    Ok(JointTable {
        visible,
        hidden,
        probs: unnorm.into_iter().map(|p| p / z).collect(),
    })
}

impl JointTable {
    pub fn prob(&self, v_bits: usize, h_bits: usize) -> f64 {
        self.probs[(v_bits << self.hidden) | h_bits]
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// `P(h_j = 1 | v)` for every `j`, by marginalising the table.
    pub fn hidden_conditional(&self, v_bits: usize) -> Vec<f64> {
        let row: Vec<f64> = (0..1usize << self.hidden).map(|h| self.prob(v_bits, h)).collect();
        let norm: f64 = row.iter().sum();
        (0..self.hidden)
            .map(|j| {
                row.iter()
                    .enumerate()
                    .filter(|(h, _)| (h >> j) & 1 == 1)
                    .map(|(_, p)| p)
                    .sum::<f64>()
                    / norm
            })
            .collect()
    }

    /// `P(v_i = 1 | h)` for every `i`.
    pub fn visible_conditional(&self, h_bits: usize) -> Vec<f64> {
        let col: Vec<f64> = (0..1usize << self.visible).map(|v| self.prob(v, h_bits)).collect();
        let norm: f64 = col.iter().sum();
        (0..self.visible)
            .map(|i| {
                col.iter()
                    .enumerate()
                    .filter(|(v, _)| (v >> i) & 1 == 1)
                    .map(|(_, p)| p)
                    .sum::<f64>()
                    / norm
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rbm(visible: usize, hidden: usize, seed: u64) -> RbmLayer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RbmLayer::from_parameters(
            Array2::from_shape_fn((hidden, visible), |_| rng.random_range(-2.0..2.0)),
            Array1::from_shape_fn(visible, |_| rng.random_range(-1.0..1.0)),
            Array1::from_shape_fn(hidden, |_| rng.random_range(-1.0..1.0)),
        )
    }

    #[test]
    fn energy_examples() {
        let zero = RbmLayer::from_parameters(Array2::zeros((2, 3)), Array1::zeros(3), Array1::zeros(2));
        assert_eq!(
            zero.energy(array![1.0, 0.0, 1.0].view(), array![1.0, 1.0].view())
                .unwrap(),
            0.0
        );

        let rbm = RbmLayer::from_parameters(array![[2.0]], array![0.5], array![0.3]);
        let e = rbm.energy(array![1.0].view(), array![1.0].view()).unwrap();
        assert!((e - (-2.8)).abs() < 1e-12);

        let rbm = random_rbm(3, 2, 1);
        let h = array![1.0, 0.5];
        let e = rbm.energy(array![0.0, 0.0, 0.0].view(), h.view()).unwrap();
        assert!((e + rbm.hidden_bias.dot(&h)).abs() < 1e-12);

        assert!(matches!(
            rbm.energy(array![1.0].view(), h.view()),
            Err(DbnError::Shape { expected: 3, found: 1 })
        ));
    }

    #[test]
    fn conditional_examples() {
        let zero = RbmLayer::from_parameters(Array2::zeros((2, 3)), Array1::zeros(3), Array1::zeros(2));
        assert_eq!(
            zero.hidden_prob(array![1.0, 0.3, 0.0].view()).unwrap().to_vec(),
            vec![0.5, 0.5]
        );
        assert_eq!(
            zero.visible_prob(array![1.0, 0.0].view()).unwrap().to_vec(),
            vec![0.5; 3]
        );

        let rbm = RbmLayer::from_parameters(Array2::zeros((1, 1)), array![-(3f64.ln())], array![3f64.ln()]);
        assert!((rbm.hidden_prob(array![1.0].view()).unwrap()[0] - 0.75).abs() < 1e-15);
        assert!((rbm.visible_prob(array![1.0].view()).unwrap()[0] - 0.25).abs() < 1e-15);
        assert!(rbm.hidden_prob(array![1.0, 2.0].view()).is_err());
    }

    #[test]
    fn uniform_joint_for_zero_parameters() {
        let rbm = RbmLayer::from_parameters(Array2::zeros((1, 1)), Array1::zeros(1), Array1::zeros(1));
        let table = joint_prob_bruteforce(&rbm).unwrap();
        assert_eq!(table.len(), 4);
        for v in 0..2 {
            for h in 0..2 {
                assert!((table.prob(v, h) - 0.25).abs() < 1e-15);
            }
        }
        let big = RbmLayer::from_parameters(Array2::zeros((11, 10)), Array1::zeros(10), Array1::zeros(11));
        assert!(matches!(
            joint_prob_bruteforce(&big),
            Err(DbnError::EnumerationTooLarge { units: 21, .. })
        ));
    }

    #[test]
    fn two_visible_one_hidden_matches_table() {
        let rbm = random_rbm(2, 1, 42);
        let table = joint_prob_bruteforce(&rbm).unwrap();
        assert!((table.total() - 1.0).abs() < 1e-12);
        for v_bits in 0..4 {
            let v = bits_to_vec(v_bits, 2);
            let p = rbm.hidden_prob(v.view()).unwrap();
            assert!((p[0] - table.hidden_conditional(v_bits)[0]).abs() < 1e-10);
        }
        for h_bits in 0..2 {
            let h = bits_to_vec(h_bits, 1);
            let p = rbm.visible_prob(h.view()).unwrap();
            let exact = table.visible_conditional(h_bits);
            for i in 0..2 {
                assert!((p[i] - exact[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut rbm = random_rbm(4, 3, 9);
        let before = rbm.clone();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let batch = Array2::from_shape_fn((5, 4), |(i, j)| ((i + j) % 2) as f64);
        rbm.cd1_update(batch.view(), &cfg, &mut rng).unwrap();
        assert_eq!(rbm.weights, before.weights);
        assert_eq!(rbm.visible_bias, before.visible_bias);
        assert_eq!(rbm.hidden_bias, before.hidden_bias);
    }

    #[test]
    fn cd1_is_deterministic_per_seed() {
        let batch = Array2::from_shape_fn((8, 4), |(i, j)| ((i * 3 + j) % 5) as f64 / 4.0);
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let mut rbm = random_rbm(4, 3, 5);
            for _ in 0..5 {
                rbm.cd1_update(batch.view(), &TrainConfig::default(), &mut rng).unwrap();
            }
            rbm
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn reconstruction_improves_on_repeated_pattern() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut rbm = RbmLayer::new(4, 3, &mut rng);
        let pattern = array![1.0, 0.0, 1.0, 1.0];
        let batch = Array2::from_shape_fn((10, 4), |(_, j)| pattern[j]);
        let cfg = TrainConfig::default();
        let errors: Vec<f64> = (0..200)
            .map(|_| rbm.cd1_update(batch.view(), &cfg, &mut rng).unwrap())
            .collect();
        let head: f64 = errors[..20].iter().sum::<f64>() / 20.0;
        let tail: f64 = errors[180..].iter().sum::<f64>() / 20.0;
        assert!(tail < head, "first epochs {head}, last epochs {tail}");
        assert!(errors[199] < errors[0]);
    }

    #[test]
    fn literal_momentum_mode_shrinks_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut rbm = random_rbm(3, 2, 4);
        let cfg = TrainConfig {
            learning_rate: 0.0,
            momentum: 0.5,
            momentum_mode: MomentumMode::Literal,
            ..TrainConfig::default()
        };
        let before = rbm.weights.clone();
        rbm.cd1_update(Array2::zeros((2, 3)).view(), &cfg, &mut rng).unwrap();
        assert_eq!(rbm.weights, before * 0.5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn conditionals_match_enumeration(visible in 1usize..7, hidden in 1usize..6, seed in any::<u64>()) {
            let rbm = random_rbm(visible, hidden, seed);
            let table = joint_prob_bruteforce(&rbm).unwrap();
            prop_assert!((table.total() - 1.0).abs() < 1e-12);
            for v_bits in 0..1usize << visible {
                let p = rbm.hidden_prob(bits_to_vec(v_bits, visible).view()).unwrap();
                for (a, b) in p.iter().zip(table.hidden_conditional(v_bits)) {
                    prop_assert!((a - b).abs() < 1e-10);
                }
            }
            for h_bits in 0..1usize << hidden {
                let p = rbm.visible_prob(bits_to_vec(h_bits, hidden).view()).unwrap();
                for (a, b) in p.iter().zip(table.visible_conditional(h_bits)) {
                    prop_assert!((a - b).abs() < 1e-10);
                }
            }
        }
    }
}
