//! Feed-forward MLPs over a flat parameter vector, with reverse-mode
//! gradients hand-chained through the static layer list.
//!
//! Parameter layout: for each layer in order, the weight matrix `W` (out x
//! in, row-major) followed by the bias vector. Keeping parameters flat makes
//! Adam, finite-difference checks, and checkpoints trivial.

use rand::Rng;

use crate::ops::sample_standard_normal;
use crate::tensor::Tensor;
use crate::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative as a function of the pre-activation.
    #[inline]
    pub fn deriv(&self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

/// Architecture: `widths` has one entry per interface, `acts` one per layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub acts: Vec<Activation>,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, acts: Vec<Activation>) -> Result<MlpSpec, NnError> {
        if widths.len() < 2 {
            return Err(NnError::Shape("an MLP needs at least one layer".into()));
        }
        if acts.len() != widths.len() - 1 {
            return Err(NnError::Shape(format!(
                "{} widths imply {} layers, got {} activations",
                widths.len(),
                widths.len() - 1,
                acts.len()
            )));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(NnError::Shape("zero-width layer".into()));
        }
        Ok(MlpSpec { widths, acts })
    }

    /// Hidden layers use `hidden`, the final layer `output`.
    pub fn with_acts(widths: Vec<usize>, hidden: Activation, output: Activation) -> Result<MlpSpec, NnError> {
        let n = widths.len().saturating_sub(1);
        let mut acts = vec![hidden; n];
        if let Some(last) = acts.last_mut() {
            *last = output;
        }
        MlpSpec::new(widths, acts)
    }

    pub fn layer_count(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.widths
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }
}

/// An MLP bound to its flat parameter vector.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub params: Vec<f64>,
}

/// Forward-pass bookkeeping needed by [`Mlp::backward`].
#[derive(Debug)]
pub struct MlpCache {
    batch: usize,
    /// Input to each layer (index 0 is the network input).
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    preacts: Vec<Vec<f64>>,
}

impl Mlp {
    /// He initialization for ReLU layers, Xavier otherwise; zero biases.
    pub fn init(spec: MlpSpec, rng: &mut impl Rng) -> Mlp {
        let mut params = vec![0.0; spec.param_count()];
        let mut off = 0;
        for l in 0..spec.layer_count() {
            let (fan_in, fan_out) = (spec.widths[l], spec.widths[l + 1]);
            let std = match spec.acts[l] {
                Activation::Relu => (2.0 / fan_in as f64).sqrt(),
                _ => (1.0 / fan_in as f64).sqrt(),
            };
            for w in &mut params[off..off + fan_in * fan_out] {
                *w = std * sample_standard_normal(rng);
            }
            off += fan_in * fan_out + fan_out;
        }
        Mlp { spec, params }
    }

    pub fn from_params(spec: MlpSpec, params: Vec<f64>) -> Result<Mlp, NnError> {
        if params.len() != spec.param_count() {
            return Err(NnError::Shape(format!(
                "spec wants {} parameters, got {}",
                spec.param_count(),
                params.len()
            )));
        }
        Ok(Mlp { spec, params })
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Batched forward pass; `x` is `batch` rows of `input_width`.
    pub fn forward_batch(&self, x: &[f64], batch: usize) -> Result<Vec<f64>, NnError> {
        let (out, _) = forward_impl(&self.spec, &self.params, x, batch, false)?;
        Ok(out)
    }

    pub fn forward_cached(&self, x: &[f64], batch: usize) -> Result<(Vec<f64>, MlpCache), NnError> {
        let (out, cache) = forward_impl(&self.spec, &self.params, x, batch, true)?;
        Ok((out, cache.expect("cache requested")))
    }

    /// Reverse pass. `grad_out` is dLoss/dOutput for the cached batch.
    /// Returns (parameter gradients in flat layout, gradient w.r.t. input).
    pub fn backward(&self, cache: &MlpCache, grad_out: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let spec = &self.spec;
        let batch = cache.batch;
        assert_eq!(grad_out.len(), batch * spec.output_width());
        let mut param_grads = vec![0.0; self.params.len()];
        let mut upstream = grad_out.to_vec();
        // Per-layer offsets, front to back.
        let mut offsets = Vec::with_capacity(spec.layer_count());
        let mut off = 0;
        for l in 0..spec.layer_count() {
            offsets.push(off);
            off += spec.widths[l] * spec.widths[l + 1] + spec.widths[l + 1];
        }
        for l in (0..spec.layer_count()).rev() {
            let (n_in, n_out) = (spec.widths[l], spec.widths[l + 1]);
            let w = &self.params[offsets[l]..offsets[l] + n_in * n_out];
            let x = &cache.inputs[l];
            let z = &cache.preacts[l];
            let act = spec.acts[l];
            // dZ = upstream ⊙ act'(z), written in place.
            let mut dz = upstream;
            for (d, &zv) in dz.iter_mut().zip(z.iter()) {
                *d *= act.deriv(zv);
            }
            let (wg, bg) = param_grads[offsets[l]..offsets[l] + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            let mut dx = vec![0.0; batch * n_in];
            for r in 0..batch {
                let dz_row = &dz[r * n_out..(r + 1) * n_out];
                let x_row = &x[r * n_in..(r + 1) * n_in];
                let dx_row = &mut dx[r * n_in..(r + 1) * n_in];
                for o in 0..n_out {
                    let g = dz_row[o];
                    if g == 0.0 {
                        continue;
                    }
                    bg[o] += g;
                    let w_row = &w[o * n_in..(o + 1) * n_in];
                    let wg_row = &mut wg[o * n_in..(o + 1) * n_in];
                    for i in 0..n_in {
                        wg_row[i] += g * x_row[i];
                        dx_row[i] += g * w_row[i];
                    }
                }
            }
            upstream = dx;
        }
        (param_grads, upstream)
    }
}

fn forward_impl(
    spec: &MlpSpec,
    params: &[f64],
    x: &[f64],
    batch: usize,
    want_cache: bool,
) -> Result<(Vec<f64>, Option<MlpCache>), NnError> {
    if params.len() != spec.param_count() {
        return Err(NnError::Shape(format!(
            "spec wants {} parameters, got {}",
            spec.param_count(),
            params.len()
        )));
    }
    if x.len() != batch * spec.input_width() {
        return Err(NnError::Shape(format!(
            "input of {} values is not {batch} rows of {}",
            x.len(),
            spec.input_width()
        )));
    }
    let mut inputs: Vec<Vec<f64>> = Vec::new();
    let mut preacts: Vec<Vec<f64>> = Vec::new();
    let mut cur = x.to_vec();
    let mut off = 0;
    for l in 0..spec.layer_count() {
        let (n_in, n_out) = (spec.widths[l], spec.widths[l + 1]);
        let w = &params[off..off + n_in * n_out];
        let b = &params[off + n_in * n_out..off + n_in * n_out + n_out];
        off += n_in * n_out + n_out;
        let mut z = vec![0.0; batch * n_out];
        for r in 0..batch {
            let x_row = &cur[r * n_in..(r + 1) * n_in];
            let z_row = &mut z[r * n_out..(r + 1) * n_out];
            for o in 0..n_out {
                let w_row = &w[o * n_in..(o + 1) * n_in];
                let mut acc = b[o];
                for i in 0..n_in {
                    acc += w_row[i] * x_row[i];
                }
                z_row[o] = acc;
            }
        }
        let act = spec.acts[l];
        let mut y = z.clone();
        for v in &mut y {
            *v = act.apply(*v);
        }
        if want_cache {
            inputs.push(cur);
            preacts.push(z);
        }
        cur = y;
    }
    let cache = want_cache.then_some(MlpCache {
        batch,
        inputs,
        preacts,
    });
    Ok((cur, cache))
}

/// Contract-level entry point: run `spec` with an explicit flat parameter
/// vector on a rank-1 or rank-2 input tensor.
pub fn mlp_forward(spec: &MlpSpec, params: &[f64], input: &Tensor) -> Result<Tensor, NnError> {
    let (batch, width, data) = input.as_batch()?;
    if width != spec.input_width() {
        return Err(NnError::Shape(format!(
            "input width {width} does not match first layer {}",
            spec.input_width()
        )));
    }
    let (out, _) = forward_impl(spec, params, data, batch, false)?;
    let shape = if input.shape.len() == 1 {
        vec![spec.output_width()]
    } else {
        vec![batch, spec.output_width()]
    };
    Tensor::new(shape, out)
}
