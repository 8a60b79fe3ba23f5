//! Fully-connected tanh networks over a flat parameter vector, and the flat
//! parameter layout of the neural GP prior.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Shape of a fully-connected network with tanh hidden layers and a linear
/// output layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub output_dim: usize,
}

impl MlpSpec {
    pub fn new(input_dim: usize, output_dim: usize) -> Self {
        MlpSpec {
            input_dim,
            hidden_layers: 3,
            hidden_width: 32,
            output_dim,
        }
    }

    pub fn with_hidden(mut self, layers: usize, width: usize) -> Self {
        self.hidden_layers = layers;
        self.hidden_width = width;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0
            || self.output_dim == 0
            || (self.hidden_layers > 0 && self.hidden_width == 0)
        {
            return Err(Error::dims(format!("degenerate network shape {self:?}")));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of each affine layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![self.input_dim];
        widths.extend(std::iter::repeat_n(self.hidden_width, self.hidden_layers));
        widths.push(self.output_dim);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// Number of weights and biases. Each layer stores its weight matrix
    /// (fan_in x fan_out, row-major) followed by its bias.
    pub fn num_params(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }

    /// Fan-scaled uniform weights, zero biases.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (fan_in, fan_out) in self.layer_dims() {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            out.extend((0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)));
            out.extend(std::iter::repeat_n(0.0, fan_out));
        }
        out
    }
}

/// Batched forward pass. Rows of `inputs` are independent examples.
pub fn mlp_forward(spec: &MlpSpec, params: &[f64], inputs: &Matrix) -> Result<Matrix> {
    if params.len() != spec.num_params() {
        return Err(Error::dims(format!(
            "{} parameters for a network needing {}",
            params.len(),
            spec.num_params()
        )));
    }
    if inputs.cols() != spec.input_dim {
        return Err(Error::dims(format!(
            "inputs have {} columns, network expects {}",
            inputs.cols(),
            spec.input_dim
        )));
    }
    let layers = spec.layer_dims();
    let last = layers.len() - 1;
    let mut h = inputs.clone();
    let mut offset = 0;
    for (k, &(fan_in, fan_out)) in layers.iter().enumerate() {
        let w = Matrix::from_vec(
            fan_in,
            fan_out,
            params[offset..offset + fan_in * fan_out].to_vec(),
        )?;
        offset += fan_in * fan_out;
        let b = &params[offset..offset + fan_out];
        offset += fan_out;
        let mut z = h.matmul(&w)?;
        for r in 0..z.rows() {
            for (v, bias) in z.row_mut(r).iter_mut().zip(b) {
                *v += bias;
                if k < last {
                    *v = v.tanh();
                }
            }
        }
        h = z;
    }
    Ok(h)
}

/// Flat learnable vector of the neural GP prior:
/// `[mean net | feature net | ln ν | ln l | ln σ]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorParams {
    pub mean_spec: MlpSpec,
    pub feature_spec: MlpSpec,
    values: Vec<f64>,
}

pub const INIT_LOG_OUTPUTSCALE: f64 = 0.0;
pub const INIT_LOG_LENGTHSCALE: f64 = 0.0;

impl PriorParams {
    pub fn init<R: Rng + ?Sized>(mean_spec: MlpSpec, feature_spec: MlpSpec, rng: &mut R) -> Self {
        let mut values = mean_spec.init_params(rng);
        values.extend(feature_spec.init_params(rng));
        values.extend([INIT_LOG_OUTPUTSCALE, INIT_LOG_LENGTHSCALE, 0.1f64.ln()]);
        PriorParams {
            mean_spec,
            feature_spec,
            values,
        }
    }

    pub fn from_values(mean_spec: MlpSpec, feature_spec: MlpSpec, values: Vec<f64>) -> Result<Self> {
        let expected = mean_spec.num_params() + feature_spec.num_params() + 3;
        if values.len() != expected {
            return Err(Error::dims(format!(
                "{} prior parameters, layout needs {expected}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient(i));
        }
        Ok(PriorParams {
            mean_spec,
            feature_spec,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Vec<f64> {
        &mut self.values
    }

    pub fn mean_offset(&self) -> usize {
        0
    }

    pub fn feature_offset(&self) -> usize {
        self.mean_spec.num_params()
    }

    /// Index of `ln ν`; `ln l` and `ln σ` follow it.
    pub fn scalar_offset(&self) -> usize {
        self.mean_spec.num_params() + self.feature_spec.num_params()
    }

    pub fn mean_block(&self) -> &[f64] {
        &self.values[..self.feature_offset()]
    }

    pub fn feature_block(&self) -> &[f64] {
        &self.values[self.feature_offset()..self.scalar_offset()]
    }

    pub fn log_outputscale(&self) -> f64 {
        self.values[self.scalar_offset()]
    }

    pub fn log_lengthscale(&self) -> f64 {
        self.values[self.scalar_offset() + 1]
    }

    pub fn log_noise(&self) -> f64 {
        self.values[self.scalar_offset() + 2]
    }

    pub fn set_log_scalars(&mut self, outputscale: f64, lengthscale: f64, noise: f64) {
        let o = self.scalar_offset();
        self.values[o] = outputscale;
        self.values[o + 1] = lengthscale;
        self.values[o + 2] = noise;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_shape() {
        let s = MlpSpec::new(2, 1);
        assert_eq!(s.layer_dims(), vec![(2, 32), (32, 32), (32, 32), (32, 1)]);
        assert_eq!(s.num_params(), 2 * 32 + 32 + 2 * (32 * 32 + 32) + 32 + 1);
    }

    #[test]
    fn zero_params_give_zero_output() {
        let s = MlpSpec::new(3, 2);
        let x = Matrix::from_fn(5, 3, |i, j| (i + j) as f64 - 2.0);
        let out = mlp_forward(&s, &vec![0.0; s.num_params()], &x).unwrap();
        assert_eq!(out, Matrix::zeros(5, 2));
    }

    #[test]
    fn tiny_net_by_hand() {
        // 1 -> 1 (tanh) -> 1: w1, b1, w2, b2
        let s = MlpSpec::new(1, 1).with_hidden(1, 1);
        let p = [1.0, 0.5, 2.0, -0.25];
        let out = mlp_forward(&s, &p, &Matrix::scalar(0.0)).unwrap();
        assert!((out.as_scalar() - (2.0 * 0.5f64.tanh() - 0.25)).abs() < 1e-15);
        let out = mlp_forward(&s, &p, &Matrix::scalar(1.0)).unwrap();
        assert!((out.as_scalar() - (2.0 * 1.5f64.tanh() - 0.25)).abs() < 1e-15);
    }

    #[test]
    fn output_shape() {
        let s = MlpSpec::new(4, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = s.init_params(&mut rng);
        let out = mlp_forward(&s, &p, &Matrix::zeros(7, 4)).unwrap();
        assert_eq!(out.shape(), (7, 2));
        assert!(mlp_forward(&s, &p, &Matrix::zeros(7, 3)).is_err());
        assert!(mlp_forward(&s, &p[1..], &Matrix::zeros(7, 4)).is_err());
    }

    #[test]
    fn init_is_bounded_with_zero_bias() {
        let s = MlpSpec::new(2, 1).with_hidden(1, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = s.init_params(&mut rng);
        let bound = (6.0f64 / 6.0).sqrt();
        assert!(p[..8].iter().all(|w| w.abs() <= bound));
        assert!(p[8..12].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn single_layer_is_lipschitz() {
        // tanh is 1-Lipschitz, so ‖f(x) − f(x')‖ ≤ ‖W‖_F ‖x − x'‖ for one layer.
        let s = MlpSpec::new(3, 4).with_hidden(0, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let p = s.init_params(&mut rng);
            let w_norm = p[..12].iter().map(|v| v * v).sum::<f64>().sqrt();
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let dx: Vec<f64> = (0..3).map(|_| rng.random_range(-0.1..0.1)).collect();
            let x2: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
            let a = mlp_forward(&s, &p, &Matrix::from_rows(&[x]).unwrap()).unwrap();
            let b = mlp_forward(&s, &p, &Matrix::from_rows(&[x2]).unwrap()).unwrap();
            let out_d = a.sub(&b).unwrap().frobenius_sq().sqrt();
            let in_d = dx.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(out_d <= w_norm * in_d + 1e-12);
        }
    }

    #[test]
    fn prior_params_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = MlpSpec::new(2, 1).with_hidden(2, 8);
        let f = MlpSpec::new(2, 2).with_hidden(2, 8);
        let p = PriorParams::init(m, f, &mut rng);
        assert_eq!(p.len(), m.num_params() + f.num_params() + 3);
        assert_eq!(p.log_outputscale(), 0.0);
        assert_eq!(p.log_lengthscale(), 0.0);
        assert!((p.log_noise() - 0.1f64.ln()).abs() < 1e-15);
        assert_eq!(p.mean_block().len(), m.num_params());
        assert_eq!(p.feature_block().len(), f.num_params());
        assert!(PriorParams::from_values(m, f, vec![0.0; 3]).is_err());
    }
}
