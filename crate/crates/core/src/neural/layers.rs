//! Differentiable building blocks with hand-written backward passes.
//!
//! Every layer offers `infer(&self, ..)` (pure, evaluation mode) and
//! `forward(&mut self, .., mode, rng)` which caches what `backward` needs.
//! `backward` accumulates parameter gradients and returns the input gradient.

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type NetRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Array2<f64>,
    pub grad: Array2<f64>,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Array2<f64>) -> Self {
        let grad = Array2::zeros(value.raw_dim());
        Self {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Affine map `x W + b` with `W` stored as (in, out).
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
    input: Option<Array2<f64>>,
}

impl Linear {
    /// Uniform fan-in initialization, `U(-1/sqrt(in), 1/sqrt(in))` for
    /// weights and bias.
    pub fn new(name: &str, inputs: usize, outputs: usize, rng: &mut NetRng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let mut draw = |shape| Array2::from_shape_simple_fn(shape, || rng.random_range(-bound..bound));
        let weight = draw((inputs, outputs));
        let bias = draw((1, outputs));
        Self::from_values(name, weight, bias)
    }

    pub fn zeros(name: &str, inputs: usize, outputs: usize) -> Self {
        Self::from_values(name, Array2::zeros((inputs, outputs)), Array2::zeros((1, outputs)))
    }

    pub fn from_values(name: &str, weight: Array2<f64>, bias: Array2<f64>) -> Self {
        assert_eq!(bias.dim(), (1, weight.ncols()), "bias must be 1 x outputs");
        Self {
            weight: Param::new(format!("{name}.weight"), weight),
            bias: Param::new(format!("{name}.bias"), bias),
            input: None,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.value.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.value.ncols()
    }

    pub fn infer(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight.value) + &self.bias.value
    }

    pub fn forward(&mut self, x: &Array2<f64>) -> Array2<f64> {
        let y = self.infer(x);
        self.input = Some(x.clone());
        y
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Array2<f64> {
        let x = self.input.as_ref().expect("backward before forward");
        self.weight.grad += &x.t().dot(dy);
        self.bias.grad += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        dy.dot(&self.weight.value.t())
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact GELU, `x * Phi(x)`.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

pub fn gelu_derivative(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2));
    let pdf = FRAC_1_SQRT_2PI * (-0.5 * x * x).exp();
    cdf + x * pdf
}

#[derive(Debug, Clone, Default)]
pub struct Gelu {
    input: Option<Array2<f64>>,
}

impl Gelu {
    pub fn infer(&self, x: &Array2<f64>) -> Array2<f64> {
        x.mapv(gelu)
    }

    pub fn forward(&mut self, x: &Array2<f64>) -> Array2<f64> {
        self.input = Some(x.clone());
        self.infer(x)
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Array2<f64> {
        let x = self.input.as_ref().expect("backward before forward");
        dy * &x.mapv(gelu_derivative)
    }
}

/// Inverted dropout: survivors are scaled by `1 / (1 - p)` in training.
#[derive(Debug, Clone)]
pub struct Dropout {
    pub rate: f64,
    mask: Option<Array2<f64>>,
}

impl Dropout {
    pub fn new(rate: f64) -> Self {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
        Self { rate, mask: None }
    }

    pub fn forward(&mut self, x: &Array2<f64>, mode: Mode, rng: &mut NetRng) -> Array2<f64> {
        if mode == Mode::Eval || self.rate == 0.0 {
            self.mask = None;
            return x.clone();
        }
        let keep = 1.0 / (1.0 - self.rate);
        let mask = Array2::from_shape_simple_fn(x.raw_dim(), || {
            if rng.random::<f64>() < self.rate {
                0.0
            } else {
                keep
            }
        });
        let y = x * &mask;
        self.mask = Some(mask);
        y
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Array2<f64> {
        match &self.mask {
            Some(mask) => dy * mask,
            None => dy.clone(),
        }
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: Param,
    pub beta: Param,
    pub eps: f64,
    cache: Option<(Array2<f64>, Vec<f64>)>,
}

impl LayerNorm {
    pub fn new(name: &str, width: usize) -> Self {
        Self {
            gamma: Param::new(format!("{name}.gamma"), Array2::ones((1, width))),
            beta: Param::new(format!("{name}.beta"), Array2::zeros((1, width))),
            eps: LAYER_NORM_EPS,
            cache: None,
        }
    }

    /// Row-wise `(x - mean) / sqrt(var + eps)` before the affine part, plus
    /// the per-row `1 / sqrt(var + eps)`.
    pub fn normalize(&self, x: &Array2<f64>) -> (Array2<f64>, Vec<f64>) {
        let width = x.ncols() as f64;
        let mut xhat = x.clone();
        let mut inv_std = Vec::with_capacity(x.nrows());
        for mut row in xhat.rows_mut() {
            let mean = row.sum() / width;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / width;
            let inv = 1.0 / (var + self.eps).sqrt();
            row.mapv_inplace(|v| (v - mean) * inv);
            inv_std.push(inv);
        }
        (xhat, inv_std)
    }

    pub fn infer(&self, x: &Array2<f64>) -> Array2<f64> {
        let (xhat, _) = self.normalize(x);
        xhat * &self.gamma.value + &self.beta.value
    }

    pub fn forward(&mut self, x: &Array2<f64>) -> Array2<f64> {
        let (xhat, inv_std) = self.normalize(x);
        let y = &xhat * &self.gamma.value + &self.beta.value;
        self.cache = Some((xhat, inv_std));
        y
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Array2<f64> {
        let (xhat, inv_std) = self.cache.as_ref().expect("backward before forward");
        self.gamma.grad += &(dy * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
        self.beta.grad += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));

        let dxhat = dy * &self.gamma.value;
        let width = dy.ncols() as f64;
        let mut dx = Array2::zeros(dy.raw_dim());
        for (((mut out, g), h), &inv) in dx
            .rows_mut()
            .into_iter()
            .zip(dxhat.rows())
            .zip(xhat.rows())
            .zip(inv_std)
        {
            let sum_g = g.sum();
            let sum_gh = g.iter().zip(h.iter()).map(|(a, b)| a * b).sum::<f64>();
            for ((o, &gi), &hi) in out.iter_mut().zip(g.iter()).zip(h.iter()) {
                *o = inv / width * (width * gi - sum_g - hi * sum_gh);
            }
        }
        dx
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.gamma, &self.beta]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    /// Standard normal CDF by composite Simpson quadrature of the density.
    fn normal_cdf_oracle(x: f64) -> f64 {
        let steps = 20_000;
        let h = x / steps as f64;
        let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = pdf(0.0) + pdf(x);
        for i in 1..steps {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * pdf(i as f64 * h);
        }
        0.5 + s * h / 3.0
    }

    #[test]
    fn gelu_values() {
        assert_eq!(gelu(0.0), 0.0);
        assert!(gelu(-40.0).abs() < 1e-300);
        assert!((gelu(40.0) - 40.0).abs() < 1e-12);
        let phi1 = normal_cdf_oracle(1.0);
        assert!((phi1 - 0.841_344_746).abs() < 1e-9);
        assert!((gelu(1.0) - phi1).abs() < 1e-12);
        assert!((gelu(-1.5) - -1.5 * normal_cdf_oracle(-1.5)).abs() < 1e-12);
    }

    #[test]
    fn gelu_derivative_matches_central_difference() {
        for &x in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-5;
            let numeric = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((numeric - gelu_derivative(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn layer_norm_rows_are_standardized() {
        let mut rng = NetRng::seed_from_u64(5);
        let x = Array2::from_shape_simple_fn((16, 33), || rng.random_range(-4.0..9.0));
        let mut ln = LayerNorm::new("ln", 33);
        ln.eps = 0.0;
        let (xhat, _) = ln.normalize(&x);
        for row in xhat.rows() {
            let mean = row.sum() / 33.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 33.0;
            assert!(mean.abs() < 1e-6);
            assert!((var - 1.0).abs() < 1e-6);
        }
        // With the default eps the variance is var / (var + eps).
        let ln = LayerNorm::new("ln", 33);
        assert_eq!(ln.eps, 1e-5);
    }

    #[test]
    fn dropout_rate_and_scaling() {
        let p = 0.2;
        let mut rng = NetRng::seed_from_u64(11);
        let mut drop = Dropout::new(p);
        let x = Array2::ones((100, 1000));
        let y = drop.forward(&x, Mode::Train, &mut rng);
        let n = y.len() as f64;
        let zeros = y.iter().filter(|&&v| v == 0.0).count() as f64;
        let sigma = (p * (1.0 - p) / n).sqrt();
        assert!((zeros / n - p).abs() < 3.0 * sigma, "{}", zeros / n);
        assert!(y.iter().all(|&v| v == 0.0 || v == 1.0 / (1.0 - p)));
        assert_eq!(drop.forward(&x, Mode::Eval, &mut rng), x);
    }
}
