use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelSpec, NnError, Scalar};

/// Weights and biases of one layer. Empty for pooling layers.
///
/// Convolution weights are laid out `[out][in][k]`, dense weights
/// `[out][in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

/// One [`LayerParams`] per layer of a [`ModelSpec`], in layer order.
#[derive(Clone, Debug, PartialEq)]
pub struct Params<T> {
    pub layers: Vec<LayerParams<T>>,
}

pub type ModelParams = Params<f32>;

impl<T: Scalar> Params<T> {
    pub fn zeros(spec: &ModelSpec) -> Self {
        Self {
            layers: spec
                .layers
                .iter()
                .map(|l| LayerParams { weight: vec![T::default(); l.weight_len()], bias: vec![T::default(); l.bias_len()] })
                .collect(),
        }
    }

    /// Fan-in-scaled uniform weights in `+-sqrt(6 / fan_in)`, zero biases.
    pub fn init(spec: &ModelSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(spec);
        for (lp, l) in p.layers.iter_mut().zip(&spec.layers) {
            if lp.weight.is_empty() {
                continue;
            }
            let fan_in = (l.in_channels * l.kernel) as f64;
            let bound = (6.0 / fan_in).sqrt();
            for w in lp.weight.iter_mut() {
                *w = T::from_f64(rng.gen_range(-bound..bound));
            }
        }
        p
    }

    /// Checks array lengths against `spec` and rejects non-finite values.
    pub fn check(&self, spec: &ModelSpec) -> Result<(), NnError> {
        if self.layers.len() != spec.layers.len() {
            return Err(NnError::InvalidSpec(format!(
                "{} parameter groups for {} layers",
                self.layers.len(),
                spec.layers.len()
            )));
        }
        for (i, (lp, l)) in self.layers.iter().zip(&spec.layers).enumerate() {
            if lp.weight.len() != l.weight_len() || lp.bias_len() != l.bias_len() {
                return Err(NnError::InvalidSpec(format!("layer {i}: parameter shape mismatch")));
            }
        }
        if !self.is_finite() {
            return Err(NnError::NonFinite);
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.arrays().map(|a| a.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.arrays().all(|a| a.iter().all(|v| v.is_finite()))
    }

    /// Weight then bias of every parameterized layer, in layer order. This
    /// is the serialization order.
    pub fn arrays(&self) -> impl Iterator<Item = &[T]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .filter(|a| !a.is_empty())
    }

    pub fn arrays_mut(&mut self) -> impl Iterator<Item = &mut Vec<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .filter(|a| !a.is_empty())
    }

    pub fn fill(&mut self, v: T) {
        for a in self.arrays_mut() {
            a.iter_mut().for_each(|x| *x = v);
        }
    }

    /// `self += other`, array by array.
    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.arrays_mut().zip(other.arrays()) {
            crate::kernels::axpy(T::from_f64(1.0), b, a);
        }
    }

    pub fn scale(&mut self, s: T) {
        for a in self.arrays_mut() {
            a.iter_mut().for_each(|x| *x = *x * s);
        }
    }

    /// All values concatenated in serialization order.
    pub fn to_flat(&self) -> Vec<T> {
        self.arrays().flat_map(|a| a.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[T]) {
        let mut off = 0;
        for a in self.arrays_mut() {
            let n = a.len();
            a.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        let conv = |v: &Vec<T>| v.iter().map(|x| U::from_f64(x.to_f64())).collect();
        Params {
            layers: self.layers.iter().map(|l| LayerParams { weight: conv(&l.weight), bias: conv(&l.bias) }).collect(),
        }
    }
}

impl<T> LayerParams<T> {
    fn bias_len(&self) -> usize {
        self.bias.len()
    }
}
