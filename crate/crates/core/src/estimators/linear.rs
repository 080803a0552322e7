use nalgebra::DMatrix;
use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{check_shape, mse, mse_gradient, Regressor};
use crate::{Error, Result};

/// `y = x W + b` with `W` stored `(input_dim, outputs)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearReadout {
    weights: Array2<f64>,
    bias: Array2<f64>,
}

impl LinearReadout {
    pub fn zeros(input_dim: usize, output_dim: usize) -> Self {
        Self {
            weights: Array2::zeros((input_dim, output_dim)),
            bias: Array2::zeros((1, output_dim)),
        }
    }

    pub fn from_parts(weights: Array2<f64>, bias: Array2<f64>) -> Result<Self> {
        check_shape("bias width", weights.ncols(), bias.ncols())?;
        check_shape("bias rows", 1, bias.nrows())?;
        Ok(Self { weights, bias })
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn bias(&self) -> &Array2<f64> {
        &self.bias
    }

    pub fn input_dim(&self) -> usize {
        self.weights.nrows()
    }
}

impl Regressor for LinearReadout {
    type Input = Array2<f64>;

    fn predict(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        check_shape("input dimension", self.weights.nrows(), x.ncols())?;
        Ok(x.dot(&self.weights) + &self.bias)
    }

    fn loss_and_gradients(&self, x: &Array2<f64>, y: &Array2<f64>) -> Result<(f64, Vec<Array2<f64>>)> {
        let out = self.predict(x)?;
        check_shape("target dimension", out.ncols(), y.ncols())?;
        let delta = mse_gradient(&out, y);
        let gw = x.t().dot(&delta);
        let gb = delta.sum_axis(Axis(0)).insert_axis(Axis(0));
        Ok((mse(&out, y), vec![gw, gb]))
    }

    fn parameters(&self) -> Vec<&Array2<f64>> {
        vec![&self.weights, &self.bias]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Array2<f64>> {
        vec![&mut self.weights, &mut self.bias]
    }
}

/// Closed-form ridge regression with an unpenalized intercept.
///
/// Inputs and targets are centred, `(Xc^T Xc + lambda I) W = Xc^T Yc` is
/// solved by Cholesky factorization, and the intercept absorbs the means.
pub fn ridge_fit(inputs: &Array2<f64>, targets: &Array2<f64>, lambda: f64) -> Result<LinearReadout> {
    let n = inputs.nrows();
    if n == 0 {
        return Err(Error::InsufficientData("ridge fit needs at least one sample".into()));
    }
    check_shape("target rows", n, targets.nrows())?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidConfig("ridge lambda must be finite and >= 0".into()));
    }
    let x_mean = inputs.mean_axis(Axis(0)).expect("non-empty");
    let y_mean = targets.mean_axis(Axis(0)).expect("non-empty");
    let xc = inputs - &x_mean;
    let yc = targets - &y_mean;
    let gram = xc.t().dot(&xc);
    let rhs = xc.t().dot(&yc);
    let d = gram.nrows();

    let mut normal = DMatrix::from_fn(d, d, |i, j| gram[[i, j]]);
    for i in 0..d {
        normal[(i, i)] += lambda;
    }
    let scale = (0..d).map(|i| normal[(i, i)]).fold(0.0, f64::max);
    let chol = normal.cholesky().ok_or(Error::Singular)?;
    let l = chol.l_dirty();
    // a numerically rank-deficient Gram matrix still factors; catch it by
    // the pivot size relative to the largest diagonal entry
    let min_pivot = (0..d).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    if !(min_pivot > 1e-12 * scale) {
        return Err(Error::Singular);
    }
    let b = DMatrix::from_fn(d, rhs.ncols(), |i, j| rhs[[i, j]]);
    let w = chol.solve(&b);
    let weights = Array2::from_shape_fn((d, rhs.ncols()), |(i, j)| w[(i, j)]);
    let bias = (&y_mean - &x_mean.dot(&weights)).insert_axis(Axis(0));
    LinearReadout::from_parts(weights, bias)
}
