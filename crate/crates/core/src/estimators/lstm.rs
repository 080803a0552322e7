use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_shape, mse, mse_gradient, Regressor};
use crate::Result;

/// Single-layer LSTM over the frame sequence with a linear head on the
/// final hidden state. Gate blocks along the `4 * hidden` axis are ordered
/// input, forget, cell candidate, output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmBaseline {
    input_weights: Array2<f64>,
    recurrent_weights: Array2<f64>,
    gate_bias: Array2<f64>,
    head_weights: Array2<f64>,
    head_bias: Array2<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct StepCache {
    input: Array2<f64>,
    h_prev: Array2<f64>,
    c_prev: Array2<f64>,
    i: Array2<f64>,
    f: Array2<f64>,
    g: Array2<f64>,
    o: Array2<f64>,
    tanh_c: Array2<f64>,
}

impl LstmBaseline {
    /// Every parameter drawn from `U(-1/sqrt(hidden), 1/sqrt(hidden))`.
    pub fn new(input_dim: usize, hidden: usize, output_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut draw = |shape: (usize, usize)| {
            Array2::from_shape_simple_fn(shape, || rng.random_range(-bound..bound))
        };
        Self {
            input_weights: draw((input_dim, 4 * hidden)),
            recurrent_weights: draw((hidden, 4 * hidden)),
            gate_bias: draw((1, 4 * hidden)),
            head_weights: draw((hidden, output_dim)),
            head_bias: draw((1, output_dim)),
        }
    }

    pub fn zeros(input_dim: usize, hidden: usize, output_dim: usize) -> Self {
        let mut model = Self::new(input_dim, hidden, output_dim, 0);
        for p in model.parameters_mut() {
            p.fill(0.0);
        }
        model
    }

    pub fn input_dim(&self) -> usize {
        self.input_weights.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.recurrent_weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.head_weights.ncols()
    }

    fn step(&self, x: ArrayView2<f64>, h: &Array2<f64>, c: &Array2<f64>) -> StepCache {
        let n_h = self.hidden();
        let mut z = x.dot(&self.input_weights) + h.dot(&self.recurrent_weights);
        z += &self.gate_bias;
        let mut i = z.slice(s![.., 0..n_h]).to_owned();
        let mut f = z.slice(s![.., n_h..2 * n_h]).to_owned();
        let mut g = z.slice(s![.., 2 * n_h..3 * n_h]).to_owned();
        let mut o = z.slice(s![.., 3 * n_h..]).to_owned();
        i.mapv_inplace(sigmoid);
        f.mapv_inplace(sigmoid);
        g.mapv_inplace(f64::tanh);
        o.mapv_inplace(sigmoid);
        let c_next = &f * c + &i * &g;
        let tanh_c = c_next.mapv(f64::tanh);
        StepCache {
            input: x.to_owned(),
            h_prev: h.clone(),
            c_prev: c.clone(),
            i,
            f,
            g,
            o,
            tanh_c,
        }
    }

    fn run(&self, x: &Array3<f64>) -> Result<(Vec<StepCache>, Array2<f64>)> {
        check_shape("frame dimension", self.input_dim(), x.shape()[2])?;
        let n = x.shape()[0];
        let steps = x.shape()[1];
        if steps == 0 {
            return Err(crate::Error::Window("sequence must have at least one frame".into()));
        }
        let mut h = Array2::zeros((n, self.hidden()));
        let mut c = Array2::zeros((n, self.hidden()));
        let mut caches = Vec::with_capacity(steps);
        for t in 0..steps {
            let cache = self.step(x.index_axis(Axis(1), t), &h, &c);
            c = &cache.f * &cache.c_prev + &cache.i * &cache.g;
            h = &cache.o * &cache.tanh_c;
            caches.push(cache);
        }
        Ok((caches, h))
    }

    /// Batch MSE and gradients by backpropagation through time.
    pub fn backward(&self, x: &Array3<f64>, y: &Array2<f64>) -> Result<(f64, Vec<Array2<f64>>)> {
        let (caches, h_last) = self.run(x)?;
        let out = h_last.dot(&self.head_weights) + &self.head_bias;
        check_shape("target dimension", out.ncols(), y.ncols())?;
        check_shape("target rows", out.nrows(), y.nrows())?;
        let loss = mse(&out, y);
        let d_out = mse_gradient(&out, y);

        let n_h = self.hidden();
        let g_head_w = h_last.t().dot(&d_out);
        let g_head_b = d_out.sum_axis(Axis(0)).insert_axis(Axis(0));
        let mut g_in = Array2::zeros(self.input_weights.raw_dim());
        let mut g_rec = Array2::zeros(self.recurrent_weights.raw_dim());
        let mut g_bias = Array2::zeros(self.gate_bias.raw_dim());

        let mut dh = d_out.dot(&self.head_weights.t());
        let mut dc = Array2::<f64>::zeros(dh.raw_dim());
        let mut dz = Array2::<f64>::zeros((dh.nrows(), 4 * n_h));
        for cache in caches.iter().rev() {
            // dc_t = dc_{t+1} f_{t+1} + dh_t o_t (1 - tanh^2 c_t)
            let d_cell = &dc + &(&dh * &cache.o * &cache.tanh_c.mapv(|v| 1.0 - v * v));
            let d_o = &dh * &cache.tanh_c;
            let d_i = &d_cell * &cache.g;
            let d_g = &d_cell * &cache.i;
            let d_f = &d_cell * &cache.c_prev;
            dc = &d_cell * &cache.f;

            dz.slice_mut(s![.., 0..n_h])
                .assign(&(d_i * &cache.i.mapv(|v| v * (1.0 - v))));
            dz.slice_mut(s![.., n_h..2 * n_h])
                .assign(&(d_f * &cache.f.mapv(|v| v * (1.0 - v))));
            dz.slice_mut(s![.., 2 * n_h..3 * n_h])
                .assign(&(d_g * &cache.g.mapv(|v| 1.0 - v * v)));
            dz.slice_mut(s![.., 3 * n_h..])
                .assign(&(d_o * &cache.o.mapv(|v| v * (1.0 - v))));

            g_in += &cache.input.t().dot(&dz);
            g_rec += &cache.h_prev.t().dot(&dz);
            g_bias += &dz.sum_axis(Axis(0)).insert_axis(Axis(0));
            dh = dz.dot(&self.recurrent_weights.t());
        }
        Ok((loss, vec![g_in, g_rec, g_bias, g_head_w, g_head_b]))
    }
}

impl Regressor for LstmBaseline {
    type Input = Array3<f64>;

    fn predict(&self, x: &Array3<f64>) -> Result<Array2<f64>> {
        let (_, h) = self.run(x)?;
        Ok(h.dot(&self.head_weights) + &self.head_bias)
    }

    fn loss_and_gradients(&self, x: &Array3<f64>, y: &Array2<f64>) -> Result<(f64, Vec<Array2<f64>>)> {
        self.backward(x, y)
    }

    fn parameters(&self) -> Vec<&Array2<f64>> {
        vec![
            &self.input_weights,
            &self.recurrent_weights,
            &self.gate_bias,
            &self.head_weights,
            &self.head_bias,
        ]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Array2<f64>> {
        vec![
            &mut self.input_weights,
            &mut self.recurrent_weights,
            &mut self.gate_bias,
            &mut self.head_weights,
            &mut self.head_bias,
        ]
    }
}
