//! Forward and backward passes.
//!
//! Tensors are flat, channel-major `[channel][time]`. A [`Workspace`] keeps
//! every layer output for backpropagation; an [`Executor`] keeps only two
//! ping-pong buffers and is what a device would run.

use crate::dsp::DualChannelWindow;
use crate::kernels::{axpy, dot, sum};

use super::{LayerKind, LayerParams, LayerSpec, ModelParams, ModelSpec, NnError, Params, Scalar};

fn check_input(spec: &ModelSpec, got: usize) -> Result<(), NnError> {
    let expected = spec.input_values();
    if got != expected {
        return Err(NnError::ShapeMismatch { expected, got });
    }
    Ok(())
}

/// Valid output range `[t0, t1)` for tap offset `off` of a convolution.
#[inline]
fn tap_range(off: isize, stride: usize, len_in: usize, len_out: usize) -> (usize, usize) {
    let s = stride as isize;
    // smallest t with t*s + off >= 0
    let t0 = if off >= 0 { 0 } else { (-off + s - 1) / s };
    // largest t with t*s + off <= len_in - 1
    let last = len_in as isize - 1 - off;
    let t1 = if last < 0 { 0 } else { last / s + 1 };
    let t1 = t1.min(len_out as isize);
    (t0 as usize, (t1.max(t0)) as usize)
}

fn conv_forward<T: Scalar>(l: &LayerSpec, p: &LayerParams<T>, x: &[T], len_in: usize, y: &mut [T]) {
    let (cin, cout, k, s) = (l.in_channels, l.out_channels, l.kernel, l.stride);
    let len_out = l.out_len(len_in);
    let pad = l.pad_left(len_in) as isize;
    for o in 0..cout {
        let yo = &mut y[o * len_out..(o + 1) * len_out];
        yo.iter_mut().for_each(|v| *v = p.bias[o]);
        for c in 0..cin {
            let xc = &x[c * len_in..(c + 1) * len_in];
            let wrow = &p.weight[(o * cin + c) * k..(o * cin + c + 1) * k];
            for (j, &w) in wrow.iter().enumerate() {
                let off = j as isize - pad;
                let (t0, t1) = tap_range(off, s, len_in, len_out);
                if t0 >= t1 {
                    continue;
                }
                if s == 1 {
                    let a = (t0 as isize + off) as usize;
                    axpy(w, &xc[a..a + (t1 - t0)], &mut yo[t0..t1]);
                } else {
                    for t in t0..t1 {
                        let q = (t as isize * s as isize + off) as usize;
                        yo[t] += w * xc[q];
                    }
                }
            }
        }
        if l.relu {
            relu(yo);
        }
    }
}

/// Accumulates weight and bias gradients and, if `gx` is given, the input
/// gradient. `gy` must already be masked by the rectifier.
fn conv_backward<T: Scalar>(
    l: &LayerSpec,
    p: &LayerParams<T>,
    x: &[T],
    len_in: usize,
    gy: &[T],
    g: &mut LayerParams<T>,
    mut gx: Option<&mut [T]>,
) {
    let (cin, cout, k, s) = (l.in_channels, l.out_channels, l.kernel, l.stride);
    let len_out = l.out_len(len_in);
    let pad = l.pad_left(len_in) as isize;
    if let Some(gx) = gx.as_deref_mut() {
        gx.iter_mut().for_each(|v| *v = T::default());
    }
    for o in 0..cout {
        let gyo = &gy[o * len_out..(o + 1) * len_out];
        g.bias[o] += sum(gyo);
        for c in 0..cin {
            let xc = &x[c * len_in..(c + 1) * len_in];
            let base = (o * cin + c) * k;
            for j in 0..k {
                let off = j as isize - pad;
                let (t0, t1) = tap_range(off, s, len_in, len_out);
                if t0 >= t1 {
                    continue;
                }
                let w = p.weight[base + j];
                if s == 1 {
                    let a = (t0 as isize + off) as usize;
                    let n = t1 - t0;
                    g.weight[base + j] += dot(&gyo[t0..t1], &xc[a..a + n]);
                    if let Some(gx) = gx.as_deref_mut() {
                        axpy(w, &gyo[t0..t1], &mut gx[c * len_in + a..c * len_in + a + n]);
                    }
                } else {
                    let mut acc = T::default();
                    for t in t0..t1 {
                        let q = (t as isize * s as isize + off) as usize;
                        acc += gyo[t] * xc[q];
                    }
                    g.weight[base + j] += acc;
                    if let Some(gx) = gx.as_deref_mut() {
                        for t in t0..t1 {
                            let q = (t as isize * s as isize + off) as usize;
                            gx[c * len_in + q] += w * gyo[t];
                        }
                    }
                }
            }
        }
    }
}

fn maxpool_forward<T: Scalar>(l: &LayerSpec, x: &[T], len_in: usize, y: &mut [T], argmax: Option<&mut [u32]>) {
    let w = l.kernel;
    let len_out = l.out_len(len_in);
    let mut am = argmax;
    for c in 0..l.in_channels {
        for t in 0..len_out {
            let start = c * len_in + t * w;
            let mut best = start;
            for i in start + 1..start + w {
                if x[i] > x[best] {
                    best = i;
                }
            }
            y[c * len_out + t] = x[best];
            if let Some(am) = am.as_deref_mut() {
                am[c * len_out + t] = best as u32;
            }
        }
    }
}

fn gap_forward<T: Scalar>(l: &LayerSpec, x: &[T], len_in: usize, y: &mut [T]) {
    let inv = T::from_f64(1.0 / len_in as f64);
    for c in 0..l.in_channels {
        y[c] = sum(&x[c * len_in..(c + 1) * len_in]) * inv;
    }
}

fn dense_forward<T: Scalar>(l: &LayerSpec, p: &LayerParams<T>, x: &[T], y: &mut [T]) {
    let n = l.in_channels;
    for o in 0..l.out_channels {
        y[o] = p.bias[o] + dot(&p.weight[o * n..(o + 1) * n], x);
    }
    if l.relu {
        relu(y);
    }
}

#[inline]
fn relu<T: Scalar>(y: &mut [T]) {
    let z = T::default();
    for v in y.iter_mut() {
        if !(*v > z) {
            *v = z;
        }
    }
}

fn layer_forward<T: Scalar>(
    l: &LayerSpec,
    p: &LayerParams<T>,
    x: &[T],
    len_in: usize,
    y: &mut [T],
    argmax: Option<&mut [u32]>,
) {
    match l.kind {
        LayerKind::Conv2d | LayerKind::Conv1d => conv_forward(l, p, x, len_in, y),
        LayerKind::MaxPool => maxpool_forward(l, x, len_in, y, argmax),
        LayerKind::GlobalAvgPool => gap_forward(l, x, len_in, y),
        LayerKind::Dense => dense_forward(l, p, x, y),
    }
}

/// Numerically stable softmax.
fn softmax<T: Scalar>(z: &[T], out: &mut [T]) {
    let mut m = z[0];
    for &v in &z[1..] {
        if v > m {
            m = v;
        }
    }
    let mut total = T::default();
    for (o, &v) in out.iter_mut().zip(z) {
        *o = (v - m).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o = *o / total;
    }
}

/// Buffers for training: every layer output and pooling argmax is kept.
#[derive(Clone, Debug)]
pub struct Workspace<T> {
    shapes: Vec<(usize, usize)>,
    acts: Vec<Vec<T>>,
    argmax: Vec<Vec<u32>>,
    probs: Vec<T>,
    grad_a: Vec<T>,
    grad_b: Vec<T>,
}

impl<T: Scalar> Workspace<T> {
    pub fn new(spec: &ModelSpec) -> Self {
        let shapes = spec.shapes();
        let acts = shapes.iter().map(|(c, l)| vec![T::default(); c * l]).collect();
        let argmax = spec
            .layers
            .iter()
            .zip(&shapes[1..])
            .map(|(l, (c, n))| if l.kind == LayerKind::MaxPool { vec![0u32; c * n] } else { Vec::new() })
            .collect();
        let biggest = shapes.iter().map(|(c, l)| c * l).max().unwrap_or(0);
        let out = spec.output_len();
        Self {
            shapes,
            acts,
            argmax,
            probs: vec![T::default(); out],
            grad_a: vec![T::default(); biggest],
            grad_b: vec![T::default(); biggest],
        }
    }

    /// Runs the network and returns the softmax output.
    pub fn forward(&mut self, spec: &ModelSpec, params: &Params<T>, input: &[T]) -> Result<&[T], NnError> {
        check_input(spec, input.len())?;
        self.acts[0].copy_from_slice(input);
        for (i, l) in spec.layers.iter().enumerate() {
            let (head, tail) = self.acts.split_at_mut(i + 1);
            let am = if self.argmax[i].is_empty() { None } else { Some(self.argmax[i].as_mut_slice()) };
            layer_forward(l, &params.layers[i], &head[i], self.shapes[i].1, &mut tail[0], am);
        }
        softmax(self.acts.last().expect("output"), &mut self.probs);
        Ok(&self.probs)
    }

    /// Forward then backward for one example. Gradients of
    /// `weight * -ln p[label]` are added into `grads`; the weighted loss is
    /// returned.
    pub fn backward(
        &mut self,
        spec: &ModelSpec,
        params: &Params<T>,
        input: &[T],
        label: usize,
        weight: T,
        grads: &mut Params<T>,
    ) -> Result<T, NnError> {
        if label >= spec.output_len() {
            return Err(NnError::InvalidLabel(label));
        }
        self.forward(spec, params, input)?;
        let loss = -(self.probs[label].ln()) * weight;

        let n_out = self.probs.len();
        let mut gy = std::mem::take(&mut self.grad_a);
        let mut gx = std::mem::take(&mut self.grad_b);
        for (k, g) in gy[..n_out].iter_mut().enumerate() {
            let onehot = if k == label { T::from_f64(1.0) } else { T::default() };
            *g = (self.probs[k] - onehot) * weight;
        }

        for i in (0..spec.layers.len()).rev() {
            let l = &spec.layers[i];
            let (cin, len_in) = self.shapes[i];
            let (cout, len_out) = self.shapes[i + 1];
            let n_in = cin * len_in;
            let n_outv = cout * len_out;
            let y = &self.acts[i + 1];
            let x = &self.acts[i];
            if l.relu {
                let z = T::default();
                for (g, &v) in gy[..n_outv].iter_mut().zip(y) {
                    if !(v > z) {
                        *g = z;
                    }
                }
            }
            let need_gx = i > 0;
            match l.kind {
                LayerKind::Conv2d | LayerKind::Conv1d => {
                    let gxs = if need_gx { Some(&mut gx[..n_in]) } else { None };
                    conv_backward(l, &params.layers[i], x, len_in, &gy[..n_outv], &mut grads.layers[i], gxs);
                }
                LayerKind::Dense => {
                    let p = &params.layers[i];
                    let g = &mut grads.layers[i];
                    if need_gx {
                        gx[..n_in].iter_mut().for_each(|v| *v = T::default());
                    }
                    for o in 0..cout {
                        let go = gy[o];
                        g.bias[o] += go;
                        axpy(go, x, &mut g.weight[o * n_in..(o + 1) * n_in]);
                        if need_gx {
                            axpy(go, &p.weight[o * n_in..(o + 1) * n_in], &mut gx[..n_in]);
                        }
                    }
                }
                LayerKind::MaxPool => {
                    gx[..n_in].iter_mut().for_each(|v| *v = T::default());
                    for (&idx, &g) in self.argmax[i].iter().zip(&gy[..n_outv]) {
                        gx[idx as usize] += g;
                    }
                }
                LayerKind::GlobalAvgPool => {
                    let inv = T::from_f64(1.0 / len_in as f64);
                    for c in 0..cin {
                        let v = gy[c] * inv;
                        gx[c * len_in..(c + 1) * len_in].iter_mut().for_each(|e| *e = v);
                    }
                }
            }
            std::mem::swap(&mut gy, &mut gx);
        }
        self.grad_a = gy;
        self.grad_b = gx;
        Ok(loss)
    }

    /// Output of layer `i` from the last forward pass (`0` is the input).
    pub fn activation(&self, i: usize) -> &[T] {
        &self.acts[i]
    }

    /// Winning input index of every output of pooling layer `i` from the
    /// last forward pass; empty for other layers.
    pub fn pool_argmax(&self, i: usize) -> &[u32] {
        &self.argmax[i]
    }
}

/// Inference-only runner with two ping-pong activation buffers.
#[derive(Clone, Debug)]
pub struct Executor<T> {
    shapes: Vec<(usize, usize)>,
    a: Vec<T>,
    b: Vec<T>,
}

impl<T: Scalar> Executor<T> {
    pub fn new(spec: &ModelSpec) -> Self {
        let shapes = spec.shapes();
        let biggest = shapes.iter().map(|(c, l)| c * l).max().unwrap_or(0);
        Self { shapes, a: vec![T::default(); biggest], b: vec![T::default(); biggest] }
    }

    /// Bytes held by the activation buffers.
    pub fn buffer_bytes(&self) -> usize {
        (self.a.len() + self.b.len()) * std::mem::size_of::<T>()
    }

    pub fn run(&mut self, spec: &ModelSpec, params: &Params<T>, input: &[T]) -> Result<Vec<T>, NnError> {
        check_input(spec, input.len())?;
        self.a[..input.len()].copy_from_slice(input);
        for (i, l) in spec.layers.iter().enumerate() {
            let (c, n) = self.shapes[i];
            let (co, no) = self.shapes[i + 1];
            layer_forward(l, &params.layers[i], &self.a[..c * n], n, &mut self.b[..co * no], None);
            std::mem::swap(&mut self.a, &mut self.b);
        }
        let n_out = spec.output_len();
        let mut probs = vec![T::default(); n_out];
        softmax(&self.a[..n_out], &mut probs);
        Ok(probs)
    }
}

/// `(p_subject_cough, p_other)` for one window.
pub fn forward(spec: &ModelSpec, params: &ModelParams, window: &DualChannelWindow) -> Result<[f32; 2], NnError> {
    let p = Executor::new(spec).run(spec, params, window.as_slice())?;
    if p.len() != 2 {
        return Err(NnError::InvalidSpec("read-out is not two-way".into()));
    }
    Ok([p[0], p[1]])
}

/// Gradients of the cross-entropy loss for one window, and the loss.
pub fn backward(
    spec: &ModelSpec,
    params: &ModelParams,
    window: &DualChannelWindow,
    label: usize,
) -> Result<(ModelParams, f32), NnError> {
    let mut ws = Workspace::new(spec);
    let mut grads = ModelParams::zeros(spec);
    let loss = ws.backward(spec, params, window.as_slice(), label, 1.0, &mut grads)?;
    Ok((grads, loss))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{default_spec, reduced_spec};

    #[test]
    fn tap_ranges_respect_bounds() {
        // stride 2, offset -3, 10 inputs, 5 outputs: t*2-3 in [0, 9]
        assert_eq!(tap_range(-3, 2, 10, 5), (2, 5));
        assert_eq!(tap_range(4, 1, 10, 10), (0, 6));
        assert_eq!(tap_range(-4, 1, 10, 10), (4, 10));
        assert_eq!(tap_range(20, 1, 10, 10), (0, 0));
    }

    #[test]
    fn zero_params_give_uniform_output() {
        let spec = default_spec(8000).unwrap();
        let p = ModelParams::zeros(&spec);
        let x: Vec<f32> = (0..8000).map(|i| (i as f32).sin()).collect();
        let probs = Executor::new(&spec).run(&spec, &p, &x).unwrap();
        assert_eq!(probs, vec![0.5, 0.5]);
    }

    #[test]
    fn executor_matches_workspace() {
        let spec = reduced_spec(64).unwrap();
        let p = Params::<f32>::init(&spec, 9);
        let x: Vec<f32> = (0..128).map(|i| ((i * 7 % 13) as f32 - 6.0) / 3.0).collect();
        let a = Executor::new(&spec).run(&spec, &p, &x).unwrap();
        let mut ws = Workspace::new(&spec);
        let b = ws.forward(&spec, &p, &x).unwrap().to_vec();
        assert_eq!(a, b);
    }

    #[test]
    fn wrong_input_length_is_rejected() {
        let spec = reduced_spec(64).unwrap();
        let p = Params::<f32>::zeros(&spec);
        assert!(matches!(
            Executor::new(&spec).run(&spec, &p, &[0.0; 10]),
            Err(NnError::ShapeMismatch { expected: 128, got: 10 })
        ));
    }
}
