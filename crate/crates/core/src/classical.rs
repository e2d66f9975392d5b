//! Classical MLP aggregator with hand-written backpropagation.
//!
//! Parameters live in one flat vector: for each layer, the weight matrix in
//! row-major `(out, in)` order followed by its bias.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpLayout {
    sizes: Vec<usize>,
}

/// Pre-activations and activations of one forward pass.
#[derive(Clone, Debug)]
pub struct MlpCache {
    /// `activations[0]` is the input; the last entry is the output.
    activations: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> f64 {
        self.activations.last().expect("non-empty")[0]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrad {
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

impl MlpLayout {
    /// `sizes` runs from input width to a single output.
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidArchitecture(format!(
                "MLP needs at least two non-zero layer sizes, got {sizes:?}"
            )));
        }
        if *sizes.last().unwrap() != 1 {
            return Err(Error::InvalidArchitecture(format!(
                "MLP output width must be 1, got {sizes:?}"
            )));
        }
        Ok(Self { sizes })
    }

    pub fn with_hidden(input: usize, hidden: &[usize]) -> Result<Self> {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Self::new(sizes)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn layers(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.sizes.windows(2).scan(0, |offset, w| {
            let start = *offset;
            *offset += w[0] * w[1] + w[1];
            Some((start, w[0], w[1]))
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut params = vec![0.0; self.param_count()];
        for (start, fan_in, fan_out) in self.layers() {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in &mut params[start..start + fan_in * fan_out] {
                *w = rng.gen_range(-bound..bound);
            }
        }
        params
    }

    fn check(&self, params: &[f64], x: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::ParamCountMismatch {
                expected: self.param_count(),
                got: params.len(),
            });
        }
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward_cached(&self, params: &[f64], x: &[f64]) -> Result<MlpCache> {
        self.check(params, x)?;
        let n_layers = self.sizes.len() - 1;
        let mut activations = vec![x.to_vec()];
        for (l, (start, fan_in, fan_out)) in self.layers().enumerate() {
            let w = &params[start..start + fan_in * fan_out];
            let b = &params[start + fan_in * fan_out..start + fan_in * fan_out + fan_out];
            let a = activations.last().unwrap();
            let z: Vec<f64> = (0..fan_out)
                .map(|o| b[o] + dot(&w[o * fan_in..(o + 1) * fan_in], a))
                .collect();
            activations.push(if l + 1 < n_layers {
                z.into_iter().map(f64::tanh).collect()
            } else {
                z
            });
        }
        Ok(MlpCache { activations })
    }

    pub fn forward(&self, params: &[f64], x: &[f64]) -> Result<f64> {
        Ok(self.forward_cached(params, x)?.output())
    }

    /// Gradients of `upstream · output` with respect to parameters and input.
    pub fn backward(&self, params: &[f64], cache: &MlpCache, upstream: f64) -> MlpGrad {
        let mut grad = vec![0.0; self.param_count()];
        let n_layers = self.sizes.len() - 1;
        let layers: Vec<_> = self.layers().collect();
        // delta holds dL/dz for the current layer
        let mut delta = vec![upstream];
        for l in (0..n_layers).rev() {
            let (start, fan_in, fan_out) = layers[l];
            let a_in = &cache.activations[l];
            let w = &params[start..start + fan_in * fan_out];
            for o in 0..fan_out {
                for i in 0..fan_in {
                    grad[start + o * fan_in + i] = delta[o] * a_in[i];
                }
                grad[start + fan_in * fan_out + o] = delta[o];
            }
            let mut d_in: Vec<f64> = (0..fan_in)
                .map(|i| (0..fan_out).map(|o| w[o * fan_in + i] * delta[o]).sum())
                .collect();
            if l > 0 {
                for (d, a) in d_in.iter_mut().zip(a_in) {
                    *d *= 1.0 - a * a;
                }
            }
            delta = d_in;
        }
        MlpGrad {
            params: grad,
            input: delta,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Hidden sizes of the classical baseline for experiment case 1 or 2.
pub fn baseline_config(case: u8) -> Result<Vec<usize>> {
    match case {
        1 => Ok(vec![9, 2]),
        2 => Ok(vec![8, 4]),
        other => Err(Error::InvalidArgument(format!("unknown case {other}, expected 1 or 2"))),
    }
}
