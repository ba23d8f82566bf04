//! Single-hidden-layer adaptive network with fixed random encoders and a
//! linear output layer trained online by the delta rule.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub const INPUT_DIM: usize = 8;
pub const DEFAULT_HIDDEN: usize = 1000;
pub const DEFAULT_GAMMA: f64 = 1e-4;
/// Velocities in m/s, angles over 0.5 rad, rates over 2 rad/s.
pub const DEFAULT_INPUT_SCALES: [f64; INPUT_DIM] = [1.0, 1.0, 1.0, 1.0, 0.5, 0.5, 2.0, 2.0];

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NetworkInput {
    pub v_x: f64,
    pub v_x_d: f64,
    pub v_y: f64,
    pub v_y_d: f64,
    pub phi: f64,
    pub phi_d: f64,
    pub phidot: f64,
    pub phidot_d: f64,
}

impl NetworkInput {
    pub fn to_array(&self) -> [f64; INPUT_DIM] {
        [
            self.v_x,
            self.v_x_d,
            self.v_y,
            self.v_y_d,
            self.phi,
            self.phi_d,
            self.phidot,
            self.phidot_d,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdaptiveNetwork {
    seed: u64,
    n_hidden: usize,
    output_dim: usize,
    /// Row-major `n_hidden x INPUT_DIM`, unit rows.
    encoders: Vec<f64>,
    gains_alpha: Vec<f64>,
    biases_b: Vec<f64>,
    /// Row-major `n_hidden x output_dim`.
    w_out: Vec<f64>,
    gamma: f64,
    mask: Vec<bool>,
    input_scales: [f64; INPUT_DIM],
}

impl AdaptiveNetwork {
    pub fn init(
        seed: u64,
        n_hidden: usize,
        output_dim: usize,
        gamma: f64,
        input_scales: [f64; INPUT_DIM],
    ) -> Result<Self> {
        if n_hidden == 0 {
            return Err(Error::InvalidSize("n_hidden must be at least 1".into()));
        }
        if output_dim == 0 {
            return Err(Error::InvalidSize("output_dim must be at least 1".into()));
        }
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::InvalidSize(format!("gamma must be finite and non-negative, got {gamma}")));
        }
        if input_scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidSize("input scales must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut encoders = Vec::with_capacity(n_hidden * INPUT_DIM);
        for _ in 0..n_hidden {
            let mut row = [0.0; INPUT_DIM];
            let mut norm2: f64 = 0.0;
            // A zero draw has probability zero, but loop rather than divide by it.
            while norm2 == 0.0 {
                for v in row.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                norm2 = row.iter().map(|v| v * v).sum();
            }
            let norm = norm2.sqrt();
            encoders.extend(row.iter().map(|v| v / norm));
        }
        let mut gains_alpha = Vec::with_capacity(n_hidden);
        let mut biases_b = Vec::with_capacity(n_hidden);
        for _ in 0..n_hidden {
            let xi: f64 = rng.random_range(-1.0..1.0);
            gains_alpha.push(1.0 / (1.0 - xi));
            biases_b.push(-xi / (1.0 - xi));
        }
        Ok(Self {
            seed,
            n_hidden,
            output_dim,
            encoders,
            gains_alpha,
            biases_b,
            w_out: vec![0.0; n_hidden * output_dim],
            gamma,
            mask: vec![false; output_dim],
            input_scales,
        })
    }

    pub fn with_defaults(seed: u64, output_dim: usize) -> Result<Self> {
        Self::init(seed, DEFAULT_HIDDEN, output_dim, DEFAULT_GAMMA, DEFAULT_INPUT_SCALES)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_hidden(&self) -> usize {
        self.n_hidden
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn encoder(&self, i: usize) -> &[f64] {
        &self.encoders[i * INPUT_DIM..(i + 1) * INPUT_DIM]
    }

    pub fn gain(&self, i: usize) -> f64 {
        self.gains_alpha[i]
    }

    pub fn bias(&self, i: usize) -> f64 {
        self.biases_b[i]
    }

    pub fn input_scales(&self) -> &[f64; INPUT_DIM] {
        &self.input_scales
    }

    pub fn weights(&self) -> &[f64] {
        &self.w_out
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.w_out
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.w_out[i * self.output_dim + j]
    }

    pub fn is_masked(&self, j: usize) -> bool {
        self.mask[j]
    }

    /// Euclidean norm of output column `j`.
    pub fn column_norm(&self, j: usize) -> f64 {
        (0..self.n_hidden)
            .map(|i| self.weight(i, j).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn hidden(&self, x: &NetworkInput) -> Vec<f64> {
        self.hidden_raw(&x.to_array())
    }

    pub fn hidden_raw(&self, x: &[f64; INPUT_DIM]) -> Vec<f64> {
        let mut xn = [0.0; INPUT_DIM];
        for (k, v) in xn.iter_mut().enumerate() {
            *v = x[k] / self.input_scales[k];
        }
        (0..self.n_hidden)
            .map(|i| {
                let proj: f64 = self.encoder(i).iter().zip(&xn).map(|(e, v)| e * v).sum();
                (self.gains_alpha[i] * proj + self.biases_b[i]).max(0.0)
            })
            .collect()
    }

    /// Output for a precomputed hidden vector.
    pub fn output(&self, h: &[f64]) -> Result<Vec<f64>> {
        if h.len() != self.n_hidden {
            return Err(Error::LayoutMismatch {
                expected: self.n_hidden,
                got: h.len(),
            });
        }
        let mut out = vec![0.0; self.output_dim];
        for (i, hi) in h.iter().enumerate() {
            if *hi == 0.0 {
                continue;
            }
            let row = &self.w_out[i * self.output_dim..(i + 1) * self.output_dim];
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * hi;
            }
        }
        for (o, m) in out.iter_mut().zip(&self.mask) {
            if *m {
                *o = 0.0;
            }
        }
        Ok(out)
    }

    pub fn forward(&self, x: &NetworkInput) -> Vec<f64> {
        self.output(&self.hidden(x)).expect("hidden layer has the right size")
    }

    /// Delta rule: `w[i][j] -= gamma * e[j] * h[i]` on unmasked columns.
    pub fn update(&mut self, e: &[f64], h: &[f64]) -> Result<()> {
        if e.len() != self.output_dim {
            return Err(Error::LayoutMismatch {
                expected: self.output_dim,
                got: e.len(),
            });
        }
        if h.len() != self.n_hidden {
            return Err(Error::LayoutMismatch {
                expected: self.n_hidden,
                got: h.len(),
            });
        }
        for (i, hi) in h.iter().enumerate() {
            for (j, ej) in e.iter().enumerate() {
                if !self.mask[j] {
                    self.w_out[i * self.output_dim + j] += -self.gamma * ej * hi;
                }
            }
        }
        Ok(())
    }

    pub fn mask_channel(&mut self, j: usize, on: bool) -> Result<()> {
        if j >= self.output_dim {
            return Err(Error::BadChannel {
                index: j,
                dim: self.output_dim,
            });
        }
        self.mask[j] = on;
        Ok(())
    }

    /// Header line with dimensions, seed and learning rate, then one line per
    /// hidden unit holding its output weights.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "# n_hidden={} output_dim={} seed={} gamma={:e}",
            self.n_hidden, self.output_dim, self.seed, self.gamma
        )?;
        for i in 0..self.n_hidden {
            let row: Vec<String> = (0..self.output_dim)
                .map(|j| format!("{:.17e}", self.weight(i, j)))
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small(seed: u64, out: usize) -> AdaptiveNetwork {
        AdaptiveNetwork::init(seed, 50, out, DEFAULT_GAMMA, DEFAULT_INPUT_SCALES).unwrap()
    }

    fn input(a: [f64; INPUT_DIM]) -> NetworkInput {
        NetworkInput {
            v_x: a[0],
            v_x_d: a[1],
            v_y: a[2],
            v_y_d: a[3],
            phi: a[4],
            phi_d: a[5],
            phidot: a[6],
            phidot_d: a[7],
        }
    }

    #[test]
    fn fresh_network_outputs_zero() {
        let net = AdaptiveNetwork::with_defaults(7, 2).unwrap();
        let x = input([0.5, 0.5, 0.1, 0.0, -0.06, 0.0, 0.3, 0.0]);
        assert_eq!(net.forward(&x), vec![0.0, 0.0]);
        assert!(net.weights().iter().all(|w| *w == 0.0));
    }

    #[test]
    fn encoders_are_unit_norm() {
        let net = AdaptiveNetwork::with_defaults(3, 1).unwrap();
        for i in 0..net.n_hidden() {
            let n: f64 = net.encoder(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_same_network() {
        let a = AdaptiveNetwork::with_defaults(11, 2).unwrap();
        let b = AdaptiveNetwork::with_defaults(11, 2).unwrap();
        assert_eq!(a, b);
        let c = AdaptiveNetwork::with_defaults(12, 2).unwrap();
        assert_ne!(a.encoders, c.encoders);
    }

    #[test]
    fn invalid_sizes() {
        assert!(AdaptiveNetwork::init(0, 0, 1, 1e-4, DEFAULT_INPUT_SCALES).is_err());
        assert!(AdaptiveNetwork::init(0, 10, 0, 1e-4, DEFAULT_INPUT_SCALES).is_err());
        let mut net = small(0, 2);
        assert!(matches!(net.update(&[0.1], &vec![0.0; 50]), Err(Error::LayoutMismatch { .. })));
        assert!(matches!(net.update(&[0.1, 0.1], &[0.0; 3]), Err(Error::LayoutMismatch { .. })));
        assert!(matches!(net.mask_channel(2, true), Err(Error::BadChannel { .. })));
    }

    #[test]
    fn hidden_unit_examples() {
        let net = small(5, 1);
        let h0 = net.hidden(&NetworkInput::default());
        for i in 0..net.n_hidden() {
            assert!(h0[i] >= 0.0);
            // Intercept positive means the bias is negative at the origin.
            if net.bias(i) < 0.0 {
                assert_eq!(h0[i], 0.0);
            }
        }
        // Input along the preferred direction with unit normalized length.
        for i in 0..5 {
            let e = net.encoder(i);
            let mut raw = [0.0; INPUT_DIM];
            for k in 0..INPUT_DIM {
                raw[k] = e[k] * DEFAULT_INPUT_SCALES[k];
            }
            let h = net.hidden_raw(&raw);
            assert!((h[i] - 1.0).abs() < 1e-12, "h = {}", h[i]);
        }
    }

    #[test]
    fn forward_arithmetic() {
        let mut net = AdaptiveNetwork::init(1, 1, 2, 1e-4, DEFAULT_INPUT_SCALES).unwrap();
        net.weights_mut()[0] = 0.02;
        assert!((net.output(&[0.5]).unwrap()[0] - 0.01).abs() < 1e-15);
        net.mask_channel(0, true).unwrap();
        assert_eq!(net.output(&[0.5]).unwrap()[0], 0.0);
    }

    #[test]
    fn update_examples() {
        let mut net = AdaptiveNetwork::init(1, 1, 1, 1e-4, DEFAULT_INPUT_SCALES).unwrap();
        net.update(&[0.0], &[0.5]).unwrap();
        assert_eq!(net.weight(0, 0), 0.0);
        net.update(&[0.1], &[0.5]).unwrap();
        assert!((net.weight(0, 0) + 5e-6).abs() < 1e-20);
    }

    #[test]
    fn masking_freezes_and_restores() {
        let mut net = small(9, 2);
        let x = input([0.6, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let h = net.hidden(&x);
        net.update(&[-0.1, -0.1], &h).unwrap();
        let learned = net.forward(&x)[0];
        assert!(learned != 0.0);
        net.mask_channel(0, true).unwrap();
        let before: Vec<f64> = (0..net.n_hidden()).map(|i| net.weight(i, 0)).collect();
        net.update(&[0.3, 0.3], &h).unwrap();
        let after: Vec<f64> = (0..net.n_hidden()).map(|i| net.weight(i, 0)).collect();
        assert_eq!(before, after);
        assert_eq!(net.forward(&x)[0], 0.0);
        net.mask_channel(0, false).unwrap();
        assert_eq!(net.forward(&x)[0], learned);
    }

    #[test]
    fn snapshot_layout() {
        let mut net = small(2, 2);
        let h = net.hidden(&input([0.4, 0.5, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0]));
        net.update(&[0.1, 0.1], &h).unwrap();
        let mut buf = Vec::new();
        net.write_snapshot(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "# n_hidden=50 output_dim=2 seed=2 gamma=1e-4");
        let rows: Vec<Vec<f64>> = lines
            .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
            .collect();
        assert_eq!(rows.len(), 50);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row, &vec![net.weight(i, 0), net.weight(i, 1)]);
        }
    }

    #[test]
    fn encoder_directions_are_broad() {
        let net = AdaptiveNetwork::with_defaults(2024, 1).unwrap();
        let n = net.n_hidden() as f64;
        let bound = 4.0 / n.sqrt();
        for axis in 0..INPUT_DIM {
            let mean: f64 = (0..net.n_hidden()).map(|i| net.encoder(i)[axis]).sum::<f64>() / n;
            assert!(mean.abs() <= bound, "axis {axis}: {mean}");
        }
        let u = [0.5, -0.5, 0.5, -0.5, 0.0, 0.0, 0.0, 0.0];
        let mean: f64 = (0..net.n_hidden())
            .map(|i| net.encoder(i).iter().zip(&u).map(|(e, v)| e * v).sum::<f64>())
            .sum::<f64>()
            / n;
        assert!(mean.abs() <= bound);
    }

    fn arb_input() -> impl Strategy<Value = [f64; INPUT_DIM]> {
        prop::array::uniform8(-1.0f64..1.0)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn delta_rule_is_exact(seed in 0u64..1000, x in arb_input(), e in prop::array::uniform2(-0.5f64..0.5)) {
            let mut net = small(seed, 2);
            let warm = net.hidden_raw(&[0.3; INPUT_DIM]);
            net.update(&[0.2, -0.1], &warm).unwrap();
            let before = net.weights().to_vec();
            let h = net.hidden_raw(&x);
            net.update(&e, &h).unwrap();
            for i in 0..net.n_hidden() {
                for j in 0..2 {
                    prop_assert_eq!(net.weight(i, j), before[i * 2 + j] + -net.gamma() * e[j] * h[i]);
                }
            }
        }

        #[test]
        fn forward_matches_naive_sum(seed in 0u64..1000, x in arb_input()) {
            let mut net = small(seed, 2);
            for (n, w) in net.weights_mut().iter_mut().enumerate() {
                *w = ((n as f64) * 0.37).sin() * 0.01;
            }
            let xn: Vec<f64> = x.iter().zip(&DEFAULT_INPUT_SCALES).map(|(v, s)| v / s).collect();
            let out = net.hidden_raw(&x);
            let y = net.output(&out).unwrap();
            for j in 0..2 {
                let mut oracle = 0.0;
                for i in 0..net.n_hidden() {
                    let proj: f64 = net.encoder(i).iter().zip(&xn).map(|(a, b)| a * b).sum();
                    let hi = (net.gain(i) * proj + net.bias(i)).max(0.0);
                    oracle += net.weight(i, j) * hi;
                }
                prop_assert!((y[j] - oracle).abs() <= 1e-12 * (1.0 + oracle.abs()));
            }
        }
    }
}
