//! Fixed-topology dense networks with explicit forward caches and
//! reverse-mode gradients.
//!
//! A forward pass never mutates the model. Batch-norm running statistics
//! observed during a training-mode pass are carried in the [`ForwardCache`]
//! and folded into the model only by [`MlpModel::commit_batch_stats`], so a
//! network that is merely evaluated (e.g. the frozen generator during a
//! discriminator step) stays bit-identical.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;
pub const BATCHNORM_MOMENTUM: f64 = 0.1;
pub const BATCHNORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense { input: usize, output: usize },
    Relu,
    LeakyRelu { alpha: f64 },
    Sigmoid,
    Batchnorm { width: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Training,
    Inference,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    fn new(width: usize) -> Self {
        BatchNorm {
            gamma: vec![1.0; width],
            beta: vec![0.0; width],
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
            momentum: BATCHNORM_MOMENTUM,
            eps: BATCHNORM_EPS,
        }
    }

    pub fn width(&self) -> usize {
        self.gamma.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    /// `y = x·W + b` with `W` stored as (input × output).
    Dense { weights: Matrix, bias: Vec<f64> },
    Relu,
    LeakyRelu { alpha: f64 },
    Sigmoid,
    Batchnorm(BatchNorm),
}

impl Layer {
    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Dense { weights, .. } => LayerSpec::Dense {
                input: weights.rows(),
                output: weights.cols(),
            },
            Layer::Relu => LayerSpec::Relu,
            Layer::LeakyRelu { alpha } => LayerSpec::LeakyRelu { alpha: *alpha },
            Layer::Sigmoid => LayerSpec::Sigmoid,
            Layer::Batchnorm(bn) => LayerSpec::Batchnorm { width: bn.width() },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    input_width: usize,
    layers: Vec<Layer>,
}

/// Per-layer record of a forward pass.
#[derive(Clone, Debug)]
enum LayerCache {
    Dense,
    Relu,
    LeakyRelu,
    Sigmoid,
    Batchnorm {
        normalized: Matrix,
        inv_std: Vec<f64>,
        batch_mean: Vec<f64>,
        batch_var: Vec<f64>,
    },
}

/// Activation record of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    mode: Mode,
    // activations[i] is the input of layer i; the last entry is the output
    activations: Vec<Matrix>,
    layers: Vec<LayerCache>,
    fingerprint: Vec<LayerSpec>,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("cache always holds the input")
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerGrad {
    Dense { weights: Matrix, bias: Vec<f64> },
    Batchnorm { gamma: Vec<f64>, beta: Vec<f64> },
    None,
}

/// Parameter gradients laid out like the model's layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        let layers = model
            .layers
            .iter()
            .map(|l| match l {
                Layer::Dense { weights, bias } => LayerGrad::Dense {
                    weights: Matrix::zeros(weights.rows(), weights.cols()),
                    bias: vec![0.0; bias.len()],
                },
                Layer::Batchnorm(bn) => LayerGrad::Batchnorm {
                    gamma: vec![0.0; bn.width()],
                    beta: vec![0.0; bn.width()],
                },
                _ => LayerGrad::None,
            })
            .collect();
        Gradients { layers }
    }

    /// Slices in the same order as [`MlpModel::params_mut`].
    pub fn as_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for g in &self.layers {
            match g {
                LayerGrad::Dense { weights, bias } => {
                    out.push(weights.as_slice());
                    out.push(bias.as_slice());
                }
                LayerGrad::Batchnorm { gamma, beta } => {
                    out.push(gamma.as_slice());
                    out.push(beta.as_slice());
                }
                LayerGrad::None => {}
            }
        }
        out
    }

    fn as_mut_slices(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for g in &mut self.layers {
            match g {
                LayerGrad::Dense { weights, bias } => {
                    out.push(weights.as_mut_slice());
                    out.push(bias.as_mut_slice());
                }
                LayerGrad::Batchnorm { gamma, beta } => {
                    out.push(gamma.as_mut_slice());
                    out.push(beta.as_mut_slice());
                }
                LayerGrad::None => {}
            }
        }
        out
    }

    /// Elementwise `self += other`.
    pub fn accumulate(&mut self, other: &Gradients) -> Result<()> {
        let theirs = other.as_slices();
        let mut ours = self.as_mut_slices();
        if ours.len() != theirs.len() {
            return Err(Error::shape("Gradients::accumulate", ours.len(), theirs.len()));
        }
        for (a, b) in ours.iter_mut().zip(&theirs) {
            if a.len() != b.len() {
                return Err(Error::shape("Gradients::accumulate", a.len(), b.len()));
            }
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.as_slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }
}

impl MlpModel {
    /// Builds a model from a layer list; dense layers get Glorot-uniform
    /// weights and zero biases.
    pub fn new<R: Rng + ?Sized>(input_width: usize, specs: &[LayerSpec], rng: &mut R) -> Result<Self> {
        if input_width == 0 {
            return Err(Error::Config("model input width must be positive".into()));
        }
        let mut width = input_width;
        let mut layers = Vec::with_capacity(specs.len());
        for spec in specs {
            let layer = match *spec {
                LayerSpec::Dense { input, output } => {
                    if input != width {
                        return Err(Error::shape("MlpModel::new (dense input)", width, input));
                    }
                    if output == 0 {
                        return Err(Error::Config("dense output width must be positive".into()));
                    }
                    let limit = (6.0 / (input + output) as f64).sqrt();
                    let data = (0..input * output)
                        .map(|_| rng.random_range(-limit..limit))
                        .collect();
                    width = output;
                    Layer::Dense {
                        weights: Matrix::from_vec(input, output, data)?,
                        bias: vec![0.0; output],
                    }
                }
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::LeakyRelu { alpha } => {
                    if !(alpha > 0.0 && alpha < 1.0) {
                        return Err(Error::Config(format!("leaky slope {alpha} outside (0,1)")));
                    }
                    Layer::LeakyRelu { alpha }
                }
                LayerSpec::Sigmoid => Layer::Sigmoid,
                LayerSpec::Batchnorm { width: w } => {
                    if w != width {
                        return Err(Error::shape("MlpModel::new (batchnorm width)", width, w));
                    }
                    Layer::Batchnorm(BatchNorm::new(w))
                }
            };
            layers.push(layer);
        }
        Ok(MlpModel {
            input_width,
            layers,
        })
    }

    /// Dense stack `input → hidden… → output`. Each hidden dense layer is
    /// followed by an optional batch-norm and then `activation`.
    pub fn stack<R: Rng + ?Sized>(
        input: usize,
        hidden: &[usize],
        output: usize,
        activation: LayerSpec,
        batchnorm: bool,
        head: Option<LayerSpec>,
        rng: &mut R,
    ) -> Result<Self> {
        let mut specs = Vec::new();
        let mut width = input;
        for &h in hidden {
            specs.push(LayerSpec::Dense {
                input: width,
                output: h,
            });
            if batchnorm {
                specs.push(LayerSpec::Batchnorm { width: h });
            }
            specs.push(activation);
            width = h;
        }
        specs.push(LayerSpec::Dense {
            input: width,
            output,
        });
        specs.extend(head);
        MlpModel::new(input, &specs, rng)
    }

    /// Wraps explicit layers, validating that widths chain.
    pub fn from_layers(input_width: usize, layers: Vec<Layer>) -> Result<Self> {
        let model = MlpModel {
            input_width,
            layers,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let mut width = self.input_width;
        for layer in &self.layers {
            match layer {
                Layer::Dense { weights, bias } => {
                    if weights.rows() != width {
                        return Err(Error::shape("dense input", width, weights.rows()));
                    }
                    if bias.len() != weights.cols() {
                        return Err(Error::shape("dense bias", weights.cols(), bias.len()));
                    }
                    width = weights.cols();
                }
                Layer::Batchnorm(bn) => {
                    if bn.width() != width
                        || bn.beta.len() != width
                        || bn.running_mean.len() != width
                        || bn.running_var.len() != width
                    {
                        return Err(Error::shape("batchnorm width", width, bn.width()));
                    }
                    if bn.running_var.iter().any(|&v| !(v > 0.0)) {
                        return Err(Error::Config("batchnorm running variance must be > 0".into()));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn output_width(&self) -> usize {
        self.layers
            .iter()
            .rev()
            .find_map(|l| match l {
                Layer::Dense { weights, .. } => Some(weights.cols()),
                _ => None,
            })
            .unwrap_or(self.input_width)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    /// Shapes of every trainable parameter block, in [`Self::params_mut`] order.
    pub fn param_shapes(&self) -> Vec<usize> {
        self.params().iter().map(|p| p.len()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().sum()
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Dense { weights, bias } => {
                    out.push(weights.as_slice());
                    out.push(bias.as_slice());
                }
                Layer::Batchnorm(bn) => {
                    out.push(bn.gamma.as_slice());
                    out.push(bn.beta.as_slice());
                }
                _ => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Dense { weights, bias } => {
                    out.push(weights.as_mut_slice());
                    out.push(bias.as_mut_slice());
                }
                Layer::Batchnorm(bn) => {
                    out.push(bn.gamma.as_mut_slice());
                    out.push(bn.beta.as_mut_slice());
                }
                _ => {}
            }
        }
        out
    }

    pub fn forward(&self, batch: &Matrix, mode: Mode) -> Result<(Matrix, ForwardCache)> {
        if batch.cols() != self.input_width {
            return Err(Error::shape(
                "MlpModel::forward (batch width)",
                self.input_width,
                batch.cols(),
            ));
        }
        if mode == Mode::Training && batch.rows() < 2 && self.has_batchnorm() {
            return Err(Error::TooFewRows {
                context: "training-mode batch norm",
                needed: 2,
                found: batch.rows(),
            });
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut caches = Vec::with_capacity(self.layers.len());
        activations.push(batch.clone());
        for layer in &self.layers {
            let x = activations.last().expect("non-empty");
            let (y, cache) = match layer {
                Layer::Dense { weights, bias } => {
                    let mut y = x.matmul(weights)?;
                    y.add_row_vector(bias);
                    (y, LayerCache::Dense)
                }
                Layer::Relu => (x.map(|v| v.max(0.0)), LayerCache::Relu),
                Layer::LeakyRelu { alpha } => {
                    let a = *alpha;
                    (x.map(|v| if v > 0.0 { v } else { a * v }), LayerCache::LeakyRelu)
                }
                Layer::Sigmoid => (x.map(sigmoid), LayerCache::Sigmoid),
                Layer::Batchnorm(bn) => batchnorm_forward(bn, x, mode),
            };
            activations.push(y);
            caches.push(cache);
        }
        let output = activations.last().expect("non-empty").clone();
        Ok((
            output,
            ForwardCache {
                mode,
                activations,
                layers: caches,
                fingerprint: self.specs(),
            },
        ))
    }

    /// Inference-mode output only.
    pub fn predict(&self, batch: &Matrix) -> Result<Matrix> {
        Ok(self.forward(batch, Mode::Inference)?.0)
    }

    pub fn has_batchnorm(&self) -> bool {
        self.layers.iter().any(|l| matches!(l, Layer::Batchnorm(_)))
    }

    /// Folds the batch statistics of a training-mode pass into the running
    /// estimates (momentum update, unbiased variance).
    pub fn commit_batch_stats(&mut self, cache: &ForwardCache) -> Result<()> {
        self.check_cache(cache)?;
        if cache.mode != Mode::Training {
            return Ok(());
        }
        let n = cache.activations[0].rows() as f64;
        for (layer, lc) in self.layers.iter_mut().zip(&cache.layers) {
            if let (
                Layer::Batchnorm(bn),
                LayerCache::Batchnorm {
                    batch_mean,
                    batch_var,
                    ..
                },
            ) = (layer, lc)
            {
                let m = bn.momentum;
                let correction = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
                for j in 0..bn.width() {
                    bn.running_mean[j] = (1.0 - m) * bn.running_mean[j] + m * batch_mean[j];
                    bn.running_var[j] =
                        (1.0 - m) * bn.running_var[j] + m * batch_var[j] * correction;
                }
            }
        }
        Ok(())
    }

    fn check_cache(&self, cache: &ForwardCache) -> Result<()> {
        if cache.layers.len() != self.layers.len() {
            return Err(Error::StaleCache("layer count differs"));
        }
        if cache.fingerprint != self.specs() {
            return Err(Error::StaleCache("layer specs differ"));
        }
        Ok(())
    }

    /// Reverse pass. Returns parameter gradients and the gradient with
    /// respect to the batch input.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &Matrix) -> Result<(Gradients, Matrix)> {
        let (grads, dx) = self.backward_impl(cache, grad_output, true)?;
        Ok((grads.expect("requested"), dx))
    }

    /// Reverse pass computing only the input gradient (used when this
    /// network is frozen but sits between the loss and a trainable one).
    pub fn backward_input(&self, cache: &ForwardCache, grad_output: &Matrix) -> Result<Matrix> {
        Ok(self.backward_impl(cache, grad_output, false)?.1)
    }

    fn backward_impl(
        &self,
        cache: &ForwardCache,
        grad_output: &Matrix,
        want_params: bool,
    ) -> Result<(Option<Gradients>, Matrix)> {
        self.check_cache(cache)?;
        let out = cache.output();
        if grad_output.shape() != out.shape() {
            return Err(Error::shape(
                "MlpModel::backward (grad_output)",
                format!("{:?}", out.shape()),
                format!("{:?}", grad_output.shape()),
            ));
        }
        let mut grads = want_params.then(|| Gradients {
            layers: vec![LayerGrad::None; self.layers.len()],
        });
        let mut dy = grad_output.clone();
        for (idx, (layer, lc)) in self.layers.iter().zip(&cache.layers).enumerate().rev() {
            let x = &cache.activations[idx];
            let y = &cache.activations[idx + 1];
            dy = match (layer, lc) {
                (Layer::Dense { weights, .. }, LayerCache::Dense) => {
                    if let Some(g) = grads.as_mut() {
                        g.layers[idx] = LayerGrad::Dense {
                            weights: x.t_matmul(&dy)?,
                            bias: dy.column_sums(),
                        };
                    }
                    dy.matmul_t(weights)?
                }
                (Layer::Relu, LayerCache::Relu) => zip_map(&dy, x, |g, v| if v > 0.0 { g } else { 0.0 }),
                (Layer::LeakyRelu { alpha }, LayerCache::LeakyRelu) => {
                    let a = *alpha;
                    zip_map(&dy, x, |g, v| if v > 0.0 { g } else { a * g })
                }
                (Layer::Sigmoid, LayerCache::Sigmoid) => zip_map(&dy, y, |g, s| g * s * (1.0 - s)),
                (
                    Layer::Batchnorm(bn),
                    LayerCache::Batchnorm {
                        normalized,
                        inv_std,
                        ..
                    },
                ) => {
                    let (dx, dgamma, dbeta) =
                        batchnorm_backward(bn, normalized, inv_std, &dy, cache.mode);
                    if let Some(g) = grads.as_mut() {
                        g.layers[idx] = LayerGrad::Batchnorm {
                            gamma: dgamma,
                            beta: dbeta,
                        };
                    }
                    dx
                }
                _ => return Err(Error::StaleCache("layer kind differs from cache")),
            };
        }
        Ok((grads, dy))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: MlpModel = serde_json::from_str(s)?;
        model.validate()?;
        Ok(model)
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn zip_map(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let data = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Matrix::from_vec(a.rows(), a.cols(), data).expect("same shape")
}

fn batchnorm_forward(bn: &BatchNorm, x: &Matrix, mode: Mode) -> (Matrix, LayerCache) {
    let (n, w) = x.shape();
    let (mean, var) = match mode {
        Mode::Training => {
            let mut mean = x.column_sums();
            for m in &mut mean {
                *m /= n as f64;
            }
            let mut var = vec![0.0; w];
            for row in x.iter_rows() {
                for j in 0..w {
                    let d = row[j] - mean[j];
                    var[j] += d * d;
                }
            }
            for v in &mut var {
                *v /= n as f64;
            }
            (mean, var)
        }
        Mode::Inference => (bn.running_mean.clone(), bn.running_var.clone()),
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + bn.eps).sqrt()).collect();
    let mut normalized = Matrix::zeros(n, w);
    let mut y = Matrix::zeros(n, w);
    for i in 0..n {
        let xr = x.row(i);
        for j in 0..w {
            let h = (xr[j] - mean[j]) * inv_std[j];
            normalized[(i, j)] = h;
            y[(i, j)] = bn.gamma[j] * h + bn.beta[j];
        }
    }
    (
        y,
        LayerCache::Batchnorm {
            normalized,
            inv_std,
            batch_mean: mean,
            batch_var: var,
        },
    )
}

fn batchnorm_backward(
    bn: &BatchNorm,
    normalized: &Matrix,
    inv_std: &[f64],
    dy: &Matrix,
    mode: Mode,
) -> (Matrix, Vec<f64>, Vec<f64>) {
    let (n, w) = dy.shape();
    let mut dgamma = vec![0.0; w];
    let mut dbeta = vec![0.0; w];
    for i in 0..n {
        for j in 0..w {
            let g = dy[(i, j)];
            dgamma[j] += g * normalized[(i, j)];
            dbeta[j] += g;
        }
    }
    let mut dx = Matrix::zeros(n, w);
    match mode {
        Mode::Inference => {
            for i in 0..n {
                for j in 0..w {
                    dx[(i, j)] = dy[(i, j)] * bn.gamma[j] * inv_std[j];
                }
            }
        }
        Mode::Training => {
            // with dĥ = dy·γ: dx = inv_std/n · (n·dĥ − Σdĥ − ĥ·Σ(dĥ·ĥ))
            let nf = n as f64;
            let sum_dh: Vec<f64> = (0..w).map(|j| dbeta[j] * bn.gamma[j]).collect();
            let sum_dh_h: Vec<f64> = (0..w).map(|j| dgamma[j] * bn.gamma[j]).collect();
            for i in 0..n {
                for j in 0..w {
                    let dh = dy[(i, j)] * bn.gamma[j];
                    dx[(i, j)] = inv_std[j] / nf
                        * (nf * dh - sum_dh[j] - normalized[(i, j)] * sum_dh_h[j]);
                }
            }
        }
    }
    (dx, dgamma, dbeta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn identity_dense_is_identity() {
        let layers = vec![Layer::Dense {
            weights: Matrix::identity(3),
            bias: vec![0.0; 3],
        }];
        let model = MlpModel::from_layers(3, layers).unwrap();
        let x = Matrix::from_rows(&[[1.0, -2.0, 3.5], [0.0, 4.0, -1.0]]).unwrap();
        let (y, _) = model.forward(&x, Mode::Inference).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn leaky_relu_uses_slope() {
        let model = MlpModel::new(2, &[LayerSpec::LeakyRelu { alpha: 0.2 }], &mut rng()).unwrap();
        let x = Matrix::from_rows(&[[-1.0, 2.0]]).unwrap();
        let (y, _) = model.forward(&x, Mode::Inference).unwrap();
        assert!((y[(0, 0)] + 0.2).abs() < 1e-15);
        assert_eq!(y[(0, 1)], 2.0);
    }

    #[test]
    fn training_batchnorm_standardizes() {
        let model = MlpModel::new(1, &[LayerSpec::Batchnorm { width: 1 }], &mut rng()).unwrap();
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0]]).unwrap();
        let (y, _) = model.forward(&x, Mode::Training).unwrap();
        let mean: f64 = y.as_slice().iter().sum::<f64>() / 3.0;
        let var: f64 = y.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-6);
        // eps = 1e-5 against a batch variance of 2/3
        assert!((var - 1.0).abs() < 1e-4, "{var}");
        let stricter = (2.0 / 3.0) / (2.0 / 3.0 + BATCHNORM_EPS);
        assert!((var - stricter).abs() < 1e-6);
    }

    #[test]
    fn running_stats_change_only_on_commit() {
        let mut model = MlpModel::new(2, &[LayerSpec::Batchnorm { width: 2 }], &mut rng()).unwrap();
        let before = model.clone();
        let x = Matrix::from_rows(&[[1.0, 5.0], [3.0, 9.0]]).unwrap();
        let (_, cache) = model.forward(&x, Mode::Training).unwrap();
        assert_eq!(model, before);
        model.commit_batch_stats(&cache).unwrap();
        let Layer::Batchnorm(bn) = &model.layers()[0] else { unreachable!() };
        assert!((bn.running_mean[0] - 0.2).abs() < 1e-12);
        assert!((bn.running_mean[1] - 0.7).abs() < 1e-12);
        // unbiased batch variance of [1,3] is 2
        assert!((bn.running_var[0] - (0.9 + 0.1 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn width_mismatch_rejected() {
        let model = MlpModel::stack(3, &[4], 1, LayerSpec::Relu, false, None, &mut rng()).unwrap();
        assert!(model.forward(&Matrix::zeros(2, 2), Mode::Inference).is_err());
        assert!(MlpModel::new(3, &[LayerSpec::Dense { input: 2, output: 1 }], &mut rng()).is_err());
    }

    #[test]
    fn stale_cache_rejected() {
        let a = MlpModel::stack(3, &[4], 1, LayerSpec::Relu, false, None, &mut rng()).unwrap();
        let b = MlpModel::stack(3, &[5], 1, LayerSpec::Relu, false, None, &mut rng()).unwrap();
        let x = Matrix::filled(2, 3, 0.5);
        let (_, cache) = a.forward(&x, Mode::Training).unwrap();
        assert!(matches!(
            b.backward(&cache, &Matrix::zeros(2, 1)),
            Err(Error::StaleCache(_))
        ));
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let model =
            MlpModel::stack(3, &[4, 4], 2, LayerSpec::Relu, true, Some(LayerSpec::Sigmoid), &mut rng())
                .unwrap();
        let x = Matrix::from_rows(&[[0.1, 0.2, 0.3], [0.9, -0.4, 0.0], [0.3, 0.3, 1.0]]).unwrap();
        let (_, cache) = model.forward(&x, Mode::Training).unwrap();
        let (g, dx) = model.backward(&cache, &Matrix::zeros(3, 2)).unwrap();
        assert!(g.as_slices().iter().all(|s| s.iter().all(|&v| v == 0.0)));
        assert!(dx.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_dense_gradient_matches_hand_formula() {
        // y = x·w + b, L = Σ y  ⇒  dL/dw_j = Σ_i x_ij, dL/db = rows
        let model = MlpModel::new(2, &[LayerSpec::Dense { input: 2, output: 1 }], &mut rng()).unwrap();
        let x = Matrix::from_rows(&[[1.0, 2.0], [3.0, -1.0]]).unwrap();
        let (_, cache) = model.forward(&x, Mode::Training).unwrap();
        let (g, _) = model.backward(&cache, &Matrix::filled(2, 1, 1.0)).unwrap();
        let LayerGrad::Dense { weights, bias } = &g.layers[0] else { unreachable!() };
        assert_eq!(weights.as_slice(), &[4.0, 1.0]);
        assert_eq!(bias.as_slice(), &[2.0]);
    }

    #[test]
    fn inference_is_row_independent() {
        let model =
            MlpModel::stack(3, &[6, 5], 2, LayerSpec::Relu, true, None, &mut rng()).unwrap();
        let x = Matrix::from_rows(&[[0.1, 0.2, 0.3], [0.9, -0.4, 0.0], [0.3, 0.3, 1.0]]).unwrap();
        let full = model.predict(&x).unwrap();
        let rev = model.predict(&x.select_rows(&[2, 1, 0])).unwrap();
        for i in 0..3 {
            let single = model.predict(&x.select_rows(&[i])).unwrap();
            assert_eq!(single.row(0), full.row(i));
            assert_eq!(rev.row(2 - i), full.row(i));
        }
    }

    #[test]
    fn json_checkpoint_round_trips_exactly() {
        let mut model =
            MlpModel::stack(4, &[8, 3], 2, LayerSpec::LeakyRelu { alpha: 0.2 }, true, Some(LayerSpec::Sigmoid), &mut rng())
                .unwrap();
        let x = Matrix::filled(3, 4, 0.25);
        let (_, cache) = model.forward(&x, Mode::Training).unwrap();
        model.commit_batch_stats(&cache).unwrap();
        let back = MlpModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back, model);
    }
}
