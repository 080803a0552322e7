use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_shape, mse, mse_gradient, Regressor};
use crate::{Error, Result};

/// Feed-forward readout: tanh hidden layers, linear output layer.
///
/// Weights are stored `(fan_in, fan_out)` so a batch forward pass is
/// `x.dot(w) + b` with samples as rows. Biases are `(1, fan_out)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpReadout {
    weights: Vec<Array2<f64>>,
    biases: Vec<Array2<f64>>,
}

impl MlpReadout {
    /// Weights and biases drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new(input_dim: usize, hidden: &[usize], output_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims: Vec<usize> = std::iter::once(input_dim)
            .chain(hidden.iter().copied())
            .chain(std::iter::once(output_dim))
            .collect();
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in dims.windows(2) {
            let bound = 1.0 / (pair[0] as f64).sqrt();
            weights.push(Array2::from_shape_simple_fn((pair[0], pair[1]), || {
                rng.random_range(-bound..bound)
            }));
            biases.push(Array2::from_shape_simple_fn((1, pair[1]), || {
                rng.random_range(-bound..bound)
            }));
        }
        Self { weights, biases }
    }

    pub fn zeros(input_dim: usize, hidden: &[usize], output_dim: usize) -> Self {
        let mut model = Self::new(input_dim, hidden, output_dim, 0);
        for p in model.parameters_mut() {
            p.fill(0.0);
        }
        model
    }

    /// Build from explicit `(fan_in, fan_out)` weights and `(1, fan_out)` biases.
    pub fn from_layers(weights: Vec<Array2<f64>>, biases: Vec<Array2<f64>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::InvalidDimension("one bias per weight layer required".into()));
        }
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            check_shape("bias width", w.ncols(), b.ncols())?;
            check_shape("bias rows", 1, b.nrows())?;
            if l > 0 {
                check_shape("layer input", weights[l - 1].ncols(), w.nrows())?;
            }
        }
        Ok(Self { weights, biases })
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights[self.weights.len() - 1].ncols()
    }

    pub fn layer_count(&self) -> usize {
        self.weights.len()
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.weights.iter().map(|w| w.ncols()))
            .collect()
    }

    /// Activations of every layer; the first entry is the input, the last
    /// the linear output.
    fn activations(&self, x: &Array2<f64>) -> Result<Vec<Array2<f64>>> {
        check_shape("input dimension", self.input_dim(), x.ncols())?;
        let last = self.weights.len() - 1;
        let mut acts = Vec::with_capacity(self.weights.len() + 1);
        acts.push(x.clone());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = acts[l].dot(w);
            z += b;
            if l < last {
                z.mapv_inplace(f64::tanh);
            }
            acts.push(z);
        }
        Ok(acts)
    }

    /// Gradients of the batch MSE for every weight and bias.
    pub fn backward(&self, x: &Array2<f64>, y: &Array2<f64>) -> Result<(f64, Vec<Array2<f64>>)> {
        let acts = self.activations(x)?;
        let out = &acts[acts.len() - 1];
        check_shape("target dimension", out.ncols(), y.ncols())?;
        check_shape("target rows", out.nrows(), y.nrows())?;
        let loss = mse(out, y);
        let mut delta = mse_gradient(out, y);
        let layers = self.weights.len();
        let mut grads = vec![Array2::zeros((0, 0)); 2 * layers];
        for l in (0..layers).rev() {
            grads[2 * l] = acts[l].t().dot(&delta);
            grads[2 * l + 1] = delta.sum_axis(Axis(0)).insert_axis(Axis(0));
            if l > 0 {
                let mut upstream = delta.dot(&self.weights[l].t());
                upstream.zip_mut_with(&acts[l], |d, &a| *d *= 1.0 - a * a);
                delta = upstream;
            }
        }
        Ok((loss, grads))
    }
}

impl Regressor for MlpReadout {
    type Input = Array2<f64>;

    fn predict(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.activations(x)?.pop().expect("at least one layer"))
    }

    fn loss_and_gradients(&self, x: &Array2<f64>, y: &Array2<f64>) -> Result<(f64, Vec<Array2<f64>>)> {
        self.backward(x, y)
    }

    fn parameters(&self) -> Vec<&Array2<f64>> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Array2<f64>> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w, b])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::gradcheck::max_relative_error;
    use ndarray::array;

    fn random_batch(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((n, d), || rng.random_range(-1.0..1.0))
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let model = MlpReadout::zeros(5, &[4, 4], 3);
        let out = model.predict(&random_batch(7, 5, 1)).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_hidden_unit_by_hand() {
        let model = MlpReadout::from_layers(
            vec![array![[2.0]], array![[3.0]]],
            vec![array![[0.0]], array![[0.0]]],
        )
        .unwrap();
        let out = model.predict(&array![[1.0]]).unwrap();
        assert!((out[[0, 0]] - 3.0 * 2.0f64.tanh()).abs() < 1e-15);
        assert!((out[[0, 0]] - 2.89208).abs() < 1e-5);
    }

    #[test]
    fn full_profile_layers() {
        let model = MlpReadout::new(99, &[512, 512, 512], 27, 0);
        assert_eq!(model.layer_count(), 4);
        assert_eq!(model.layer_sizes(), vec![99, 512, 512, 512, 27]);
    }

    #[test]
    fn bounded_outputs_stay_finite() {
        let model = MlpReadout::new(6, &[8, 8], 3, 4);
        let out = model.predict(&random_batch(20, 6, 9)).unwrap();
        assert!(out.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let model = MlpReadout::new(4, &[3], 2, 0);
        assert!(matches!(model.predict(&random_batch(2, 5, 0)), Err(Error::Shape { .. })));
        assert!(MlpReadout::from_layers(vec![array![[1.0, 2.0]], array![[1.0]]], vec![array![[0.0, 0.0]], array![[0.0]]]).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let model = MlpReadout::new(4, &[5, 3], 2, 17);
        let x = random_batch(10, 4, 2);
        let y = random_batch(10, 2, 3);
        let err = max_relative_error(&model, &x, &y, 1e-5);
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn zero_residual_zero_gradient() {
        let model = MlpReadout::new(3, &[4], 2, 5);
        let x = random_batch(6, 3, 1);
        let y = model.predict(&x).unwrap();
        let (loss, grads) = model.backward(&x, &y).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.iter().all(|g| g.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn duplicated_batch_same_gradient() {
        let model = MlpReadout::new(3, &[4], 2, 5);
        let x = random_batch(6, 3, 1);
        let y = random_batch(6, 2, 8);
        let x2 = ndarray::concatenate(Axis(0), &[x.view(), x.view()]).unwrap();
        let y2 = ndarray::concatenate(Axis(0), &[y.view(), y.view()]).unwrap();
        let (l1, g1) = model.backward(&x, &y).unwrap();
        let (l2, g2) = model.backward(&x2, &y2).unwrap();
        assert!((l1 - l2).abs() < 1e-14);
        for (a, b) in g1.iter().zip(&g2) {
            for (p, q) in a.iter().zip(b.iter()) {
                assert!((p - q).abs() < 1e-14);
            }
        }
    }
}
