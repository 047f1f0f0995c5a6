//! Fixed-topology feed-forward networks: conv / relu / flatten / dense layers
//! with analytic backpropagation over NHWC activations.

use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::gemm::{gemm, gemm_at_accum, transpose};
use super::tensor::Tensor;
use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv { out_channels: usize, kernel: usize, stride: usize, padding: usize },
    Relu,
    Flatten,
    Dense { out: usize },
}

/// Network topology. `input` is `[height, width, channels]`; activations are
/// kept NHWC so flattening is a pure reshape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    pub input: [usize; 3],
    pub layers: Vec<LayerSpec>,
}

impl NetSpec {
    /// Image trunk used by both agents: three strided convs, one hidden dense
    /// layer, and a linear head of `head` outputs.
    pub fn conv_trunk(input: [usize; 3], head: usize) -> Self {
        Self {
            input,
            layers: vec![
                LayerSpec::Conv { out_channels: 8, kernel: 5, stride: 2, padding: 2 },
                LayerSpec::Relu,
                LayerSpec::Conv { out_channels: 16, kernel: 3, stride: 2, padding: 1 },
                LayerSpec::Relu,
                LayerSpec::Conv { out_channels: 32, kernel: 3, stride: 2, padding: 1 },
                LayerSpec::Relu,
                LayerSpec::Flatten,
                LayerSpec::Dense { out: 128 },
                LayerSpec::Relu,
                LayerSpec::Dense { out: head },
            ],
        }
    }

    /// Small dense net for tabular-scale inputs.
    pub fn dense_net(input: [usize; 3], hidden: usize, head: usize) -> Self {
        Self {
            input,
            layers: vec![
                LayerSpec::Flatten,
                LayerSpec::Dense { out: hidden },
                LayerSpec::Relu,
                LayerSpec::Dense { out: head },
            ],
        }
    }

    /// Per-layer output shapes, validating that the chain is consistent.
    pub fn chain(&self) -> Result<Vec<[usize; 3]>, NnError> {
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut cur = self.input;
        let mut flat = false;
        for (i, layer) in self.layers.iter().enumerate() {
            cur = match *layer {
                LayerSpec::Conv { out_channels, kernel, stride, padding } => {
                    if flat {
                        return Err(NnError::InvalidSpec(format!("layer {i}: conv after flatten")));
                    }
                    if stride == 0 || kernel == 0 || out_channels == 0 {
                        return Err(NnError::InvalidSpec(format!("layer {i}: zero conv parameter")));
                    }
                    let [h, w, _c] = cur;
                    if h + 2 * padding < kernel || w + 2 * padding < kernel {
                        return Err(NnError::InvalidSpec(format!(
                            "layer {i}: kernel {kernel} exceeds padded input {h}x{w}"
                        )));
                    }
                    let oh = (h + 2 * padding - kernel) / stride + 1;
                    let ow = (w + 2 * padding - kernel) / stride + 1;
                    [oh, ow, out_channels]
                }
                LayerSpec::Relu => cur,
                LayerSpec::Flatten => {
                    flat = true;
                    [1, 1, cur[0] * cur[1] * cur[2]]
                }
                LayerSpec::Dense { out } => {
                    if !flat {
                        return Err(NnError::InvalidSpec(format!(
                            "layer {i}: dense requires flattened input"
                        )));
                    }
                    if out == 0 {
                        return Err(NnError::InvalidSpec(format!("layer {i}: zero-width dense")));
                    }
                    [1, 1, out]
                }
            };
            shapes.push(cur);
        }
        Ok(shapes)
    }

    pub fn output_dim(&self) -> Result<usize, NnError> {
        let chain = self.chain()?;
        let last = chain.last().ok_or_else(|| NnError::InvalidSpec("empty net".into()))?;
        Ok(last[0] * last[1] * last[2])
    }
}

#[derive(Debug, Clone)]
struct ConvLayer<T> {
    w: Tensor<T>, // [kernel*kernel*in_c, out_c], patch order (ky, kx, c)
    b: Tensor<T>, // [out_c]
    kernel: usize,
    stride: usize,
    padding: usize,
    in_shape: [usize; 3],
    out_shape: [usize; 3],
}

#[derive(Debug, Clone)]
struct DenseLayer<T> {
    w: Tensor<T>, // [in_dim, out_dim]
    b: Tensor<T>, // [out_dim]
    in_dim: usize,
    out_dim: usize,
}

#[derive(Debug, Clone)]
enum Layer<T> {
    Conv(ConvLayer<T>),
    Relu,
    Flatten,
    Dense(DenseLayer<T>),
}

/// Runtime network: spec plus parameter tensors.
#[derive(Debug, Clone)]
pub struct Network<T> {
    spec: NetSpec,
    layers: Vec<Layer<T>>,
}

/// Activations captured by [`Network::forward_cached`], needed for backprop.
pub struct ForwardCache<T> {
    batch: usize,
    /// `acts[i]` is the input to layer `i`; `acts[len]` is the network output.
    acts: Vec<Tensor<T>>,
    /// im2col patch matrices per layer (conv layers only).
    patches: Vec<Option<Tensor<T>>>,
}

impl<T: Float> ForwardCache<T> {
    pub fn output(&self) -> &Tensor<T> {
        self.acts.last().expect("cache has output")
    }
}

/// Parameter gradients in the same order as [`Network::params`].
pub type Gradients<T> = Vec<Tensor<T>>;

impl<T: Float> Network<T> {
    /// Variance-scaling (fan-in) initialization; biases start at zero.
    pub fn init<R: Rng>(spec: NetSpec, rng: &mut R) -> Result<Self, NnError> {
        let shapes = spec.chain()?;
        let mut layers = Vec::with_capacity(spec.layers.len());
        let mut cur = spec.input;
        for (layer, &out_shape) in spec.layers.iter().zip(&shapes) {
            let built = match *layer {
                LayerSpec::Conv { out_channels, kernel, stride, padding } => {
                    let fan_in = kernel * kernel * cur[2];
                    let w = init_tensor(&[fan_in, out_channels], fan_in, rng);
                    Layer::Conv(ConvLayer {
                        w,
                        b: Tensor::zeros(&[out_channels]),
                        kernel,
                        stride,
                        padding,
                        in_shape: cur,
                        out_shape,
                    })
                }
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::Flatten => Layer::Flatten,
                LayerSpec::Dense { out } => {
                    let in_dim = cur[0] * cur[1] * cur[2];
                    Layer::Dense(DenseLayer {
                        w: init_tensor(&[in_dim, out], in_dim, rng),
                        b: Tensor::zeros(&[out]),
                        in_dim,
                        out_dim: out,
                    })
                }
            };
            layers.push(built);
            cur = out_shape;
        }
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim().expect("validated at init")
    }

    /// Parameter tensors in declared order (per layer: weights, then bias).
    pub fn params(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv(c) => {
                    out.push(&c.w);
                    out.push(&c.b);
                }
                Layer::Dense(d) => {
                    out.push(&d.w);
                    out.push(&d.b);
                }
                _ => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv(c) => {
                    out.push(&mut c.w);
                    out.push(&mut c.b);
                }
                Layer::Dense(d) => {
                    out.push(&mut d.w);
                    out.push(&mut d.b);
                }
                _ => {}
            }
        }
        out
    }

    pub fn n_param_scalars(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// All parameters concatenated in declared order.
    pub fn flat_params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.n_param_scalars());
        for p in self.params() {
            out.extend_from_slice(p.data());
        }
        out
    }

    pub fn load_flat_params(&mut self, flat: &[T]) -> Result<(), NnError> {
        if flat.len() != self.n_param_scalars() {
            return Err(NnError::ShapeMismatch {
                context: "load_flat_params".into(),
                expected: vec![self.n_param_scalars()],
                got: vec![flat.len()],
            });
        }
        let mut offset = 0;
        for p in self.params_mut() {
            let n = p.len();
            p.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn cast<U: Float>(&self) -> Network<U> {
        let layers = self
            .layers
            .iter()
            .map(|layer| match layer {
                Layer::Conv(c) => Layer::Conv(ConvLayer {
                    w: c.w.cast(),
                    b: c.b.cast(),
                    kernel: c.kernel,
                    stride: c.stride,
                    padding: c.padding,
                    in_shape: c.in_shape,
                    out_shape: c.out_shape,
                }),
                Layer::Relu => Layer::Relu,
                Layer::Flatten => Layer::Flatten,
                Layer::Dense(d) => Layer::Dense(DenseLayer {
                    w: d.w.cast(),
                    b: d.b.cast(),
                    in_dim: d.in_dim,
                    out_dim: d.out_dim,
                }),
            })
            .collect();
        Network { spec: self.spec.clone(), layers }
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<usize, NnError> {
        let s = input.shape();
        let ok = s.len() == 4 && s[1..] == self.spec.input;
        if !ok {
            return Err(NnError::ShapeMismatch {
                context: "network input".into(),
                expected: self.spec.input.to_vec(),
                got: s.to_vec(),
            });
        }
        Ok(s[0])
    }

    /// Forward pass returning the output tensor `[batch, out_dim]`.
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        Ok(self.forward_cached(input)?.1)
    }

    /// Forward pass that keeps per-layer activations for [`Self::backward`].
    pub fn forward_cached(&self, input: &Tensor<T>) -> Result<(ForwardCache<T>, Tensor<T>), NnError> {
        let batch = self.check_input(input)?;
        let mut acts: Vec<Tensor<T>> = Vec::with_capacity(self.layers.len() + 1);
        let mut patches: Vec<Option<Tensor<T>>> = Vec::with_capacity(self.layers.len());
        acts.push(input.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            let x = &acts[i];
            let (y, patch) = match layer {
                Layer::Conv(c) => {
                    let (y, p) = conv_forward(c, x, batch);
                    (y, Some(p))
                }
                Layer::Relu => {
                    let mut y = x.clone();
                    for v in y.data_mut() {
                        if *v < T::zero() {
                            *v = T::zero();
                        }
                    }
                    (y, None)
                }
                Layer::Flatten => {
                    let d: usize = x.shape()[1..].iter().product();
                    (x.clone().reshaped(&[batch, d])?, None)
                }
                Layer::Dense(dl) => {
                    let x_dim: usize = x.shape()[1..].iter().product();
                    if x_dim != dl.in_dim {
                        return Err(NnError::ShapeMismatch {
                            context: format!("dense layer {i}"),
                            expected: vec![dl.in_dim],
                            got: vec![x_dim],
                        });
                    }
                    (dense_forward(dl, x, batch), None)
                }
            };
            debug_assert!(y.all_finite(), "non-finite activation after layer {i}");
            acts.push(y);
            patches.push(patch);
        }
        let out_dim = self.output_dim();
        let out = acts.last().expect("output").clone().reshaped(&[batch, out_dim])?;
        *acts.last_mut().expect("output") = out.clone();
        Ok((ForwardCache { batch, acts, patches }, out))
    }

    /// Backpropagate `out_grad` (`[batch, out_dim]`, dLoss/dOutput) through the
    /// cached forward pass; returns parameter gradients in [`Self::params`] order.
    pub fn backward(&self, cache: &ForwardCache<T>, out_grad: &Tensor<T>) -> Result<Gradients<T>, NnError> {
        if cache.acts.len() != self.layers.len() + 1 {
            return Err(NnError::MissingCache);
        }
        let batch = cache.batch;
        if out_grad.shape() != [batch, self.output_dim()] {
            return Err(NnError::ShapeMismatch {
                context: "backward output grad".into(),
                expected: vec![batch, self.output_dim()],
                got: out_grad.shape().to_vec(),
            });
        }
        let mut grads_rev: Vec<Tensor<T>> = Vec::new();
        let mut dy = out_grad.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = &cache.acts[i];
            let y = &cache.acts[i + 1];
            // the input gradient of the first layer is never consumed
            let need_dx = i > 0;
            dy = match layer {
                Layer::Conv(c) => {
                    let patch = cache.patches[i].as_ref().ok_or(NnError::MissingCache)?;
                    let (dx, dw, db) = conv_backward(c, patch, &dy, batch, need_dx);
                    grads_rev.push(db);
                    grads_rev.push(dw);
                    dx
                }
                Layer::Relu => {
                    let mut dx = dy;
                    for (g, &o) in dx.data_mut().iter_mut().zip(y.data()) {
                        if o <= T::zero() {
                            *g = T::zero();
                        }
                    }
                    dx
                }
                Layer::Flatten => dy.reshaped(x.shape())?,
                Layer::Dense(dl) => {
                    let (dx, dw, db) = dense_backward(dl, x, &dy, batch, need_dx);
                    grads_rev.push(db);
                    grads_rev.push(dw);
                    dx
                }
            };
        }
        grads_rev.reverse();
        Ok(grads_rev)
    }
}

fn init_tensor<T: Float, R: Rng>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    let std = (2.0 / fan_in as f64).sqrt();
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        let sample: f64 = rng.sample(StandardNormal);
        *v = T::from(sample * std).expect("init cast");
    }
    t
}

fn im2col<T: Float>(c: &ConvLayer<T>, x: &[T], batch: usize, out: &mut [T]) {
    let [ih, iw, ic] = c.in_shape;
    let [oh, ow, _] = c.out_shape;
    let (k, s, p) = (c.kernel, c.stride, c.padding);
    let kdim = k * k * ic;
    let mut row = 0;
    for n in 0..batch {
        let base = n * ih * iw * ic;
        for oy in 0..oh {
            let iy0 = (oy * s) as isize - p as isize;
            for ox in 0..ow {
                let ix0 = (ox * s) as isize - p as isize;
                let dst = &mut out[row * kdim..(row + 1) * kdim];
                let mut d = 0;
                for ky in 0..k {
                    let iy = iy0 + ky as isize;
                    if iy < 0 || iy >= ih as isize {
                        for v in &mut dst[d..d + k * ic] {
                            *v = T::zero();
                        }
                        d += k * ic;
                        continue;
                    }
                    let row_base = base + iy as usize * iw * ic;
                    for kx in 0..k {
                        let ix = ix0 + kx as isize;
                        if ix < 0 || ix >= iw as isize {
                            for v in &mut dst[d..d + ic] {
                                *v = T::zero();
                            }
                        } else {
                            let src = row_base + ix as usize * ic;
                            dst[d..d + ic].copy_from_slice(&x[src..src + ic]);
                        }
                        d += ic;
                    }
                }
                row += 1;
            }
        }
    }
}

fn col2im_add<T: Float>(c: &ConvLayer<T>, dpatch: &[T], batch: usize, dx: &mut [T]) {
    let [ih, iw, ic] = c.in_shape;
    let [oh, ow, _] = c.out_shape;
    let (k, s, p) = (c.kernel, c.stride, c.padding);
    let kdim = k * k * ic;
    let mut row = 0;
    for n in 0..batch {
        let base = n * ih * iw * ic;
        for oy in 0..oh {
            let iy0 = (oy * s) as isize - p as isize;
            for ox in 0..ow {
                let ix0 = (ox * s) as isize - p as isize;
                let src_row = &dpatch[row * kdim..(row + 1) * kdim];
                let mut d = 0;
                for ky in 0..k {
                    let iy = iy0 + ky as isize;
                    if iy < 0 || iy >= ih as isize {
                        d += k * ic;
                        continue;
                    }
                    let row_base = base + iy as usize * iw * ic;
                    for kx in 0..k {
                        let ix = ix0 + kx as isize;
                        if ix >= 0 && ix < iw as isize {
                            let dst = row_base + ix as usize * ic;
                            for ch in 0..ic {
                                dx[dst + ch] = dx[dst + ch] + src_row[d + ch];
                            }
                        }
                        d += ic;
                    }
                }
                row += 1;
            }
        }
    }
}

fn conv_forward<T: Float>(c: &ConvLayer<T>, x: &Tensor<T>, batch: usize) -> (Tensor<T>, Tensor<T>) {
    let [oh, ow, oc] = c.out_shape;
    let kdim = c.kernel * c.kernel * c.in_shape[2];
    let m = batch * oh * ow;
    let mut patch = Tensor::zeros(&[m, kdim]);
    im2col(c, x.data(), batch, patch.data_mut());
    let mut y = Tensor::zeros(&[batch, oh, ow, oc]);
    gemm(m, kdim, oc, patch.data(), c.w.data(), y.data_mut());
    let bias = c.b.data();
    for row in y.data_mut().chunks_exact_mut(oc) {
        for (v, &b) in row.iter_mut().zip(bias) {
            *v = *v + b;
        }
    }
    (y, patch)
}

fn conv_backward<T: Float>(
    c: &ConvLayer<T>,
    patch: &Tensor<T>,
    dy: &Tensor<T>,
    batch: usize,
    need_dx: bool,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let [oh, ow, oc] = c.out_shape;
    let kdim = c.kernel * c.kernel * c.in_shape[2];
    let m = batch * oh * ow;

    let mut db = Tensor::zeros(&[oc]);
    for row in dy.data().chunks_exact(oc) {
        for (acc, &g) in db.data_mut().iter_mut().zip(row) {
            *acc = *acc + g;
        }
    }

    let mut dw = Tensor::zeros(&[kdim, oc]);
    gemm_at_accum(m, kdim, oc, patch.data(), dy.data(), dw.data_mut());

    let [ih, iw, ic] = c.in_shape;
    let mut dx = Tensor::zeros(&[if need_dx { batch } else { 0 }, ih, iw, ic]);
    if need_dx {
        let mut wt = vec![T::zero(); kdim * oc];
        transpose(kdim, oc, c.w.data(), &mut wt);
        let mut dpatch = vec![T::zero(); m * kdim];
        gemm(m, oc, kdim, dy.data(), &wt, &mut dpatch);
        col2im_add(c, &dpatch, batch, dx.data_mut());
    }
    (dx, dw, db)
}

fn dense_forward<T: Float>(d: &DenseLayer<T>, x: &Tensor<T>, batch: usize) -> Tensor<T> {
    let mut y = Tensor::zeros(&[batch, d.out_dim]);
    gemm(batch, d.in_dim, d.out_dim, x.data(), d.w.data(), y.data_mut());
    for row in y.data_mut().chunks_exact_mut(d.out_dim) {
        for (v, &b) in row.iter_mut().zip(d.b.data()) {
            *v = *v + b;
        }
    }
    y
}

fn dense_backward<T: Float>(
    d: &DenseLayer<T>,
    x: &Tensor<T>,
    dy: &Tensor<T>,
    batch: usize,
    need_dx: bool,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let mut db = Tensor::zeros(&[d.out_dim]);
    for row in dy.data().chunks_exact(d.out_dim) {
        for (acc, &g) in db.data_mut().iter_mut().zip(row) {
            *acc = *acc + g;
        }
    }
    let mut dw = Tensor::zeros(&[d.in_dim, d.out_dim]);
    gemm_at_accum(batch, d.in_dim, d.out_dim, x.data(), dy.data(), dw.data_mut());

    let mut dx = Tensor::zeros(&[if need_dx { batch } else { 0 }, d.in_dim]);
    if need_dx {
        let mut wt = vec![T::zero(); d.in_dim * d.out_dim];
        transpose(d.in_dim, d.out_dim, d.w.data(), &mut wt);
        gemm(batch, d.out_dim, d.in_dim, dy.data(), &wt, dx.data_mut());
    }
    (dx, dw, db)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn conv_trunk_chains_from_64x64x3() {
        let spec = NetSpec::conv_trunk([64, 64, 3], 8);
        let shapes = spec.chain().unwrap();
        assert_eq!(shapes[0], [32, 32, 8]);
        assert_eq!(shapes[2], [16, 16, 16]);
        assert_eq!(shapes[4], [8, 8, 32]);
        assert_eq!(spec.output_dim().unwrap(), 8);
    }

    #[test]
    fn dense_before_flatten_rejected() {
        let spec = NetSpec {
            input: [4, 4, 1],
            layers: vec![LayerSpec::Dense { out: 3 }],
        };
        assert!(matches!(spec.chain(), Err(NnError::InvalidSpec(_))));
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let spec = NetSpec::conv_trunk([16, 16, 3], 4);
        let mut net = Network::<f32>::init(spec, &mut rng).unwrap();
        for p in net.params_mut() {
            for v in p.data_mut() {
                *v = 0.0;
            }
        }
        let input = Tensor::from_vec(&[1, 16, 16, 3], vec![0.5; 16 * 16 * 3]).unwrap();
        let out = net.forward(&input).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_dense_layer_passes_input_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let spec = NetSpec {
            input: [1, 1, 3],
            layers: vec![LayerSpec::Flatten, LayerSpec::Dense { out: 3 }],
        };
        let mut net = Network::<f64>::init(spec, &mut rng).unwrap();
        {
            let mut params = net.params_mut();
            let w = params[0].data_mut();
            w.fill(0.0);
            w[0] = 1.0;
            w[4] = 1.0;
            w[8] = 1.0;
        }
        let input = Tensor::from_vec(&[1, 1, 1, 3], vec![0.3, -1.2, 2.5]).unwrap();
        let out = net.forward(&input).unwrap();
        assert_eq!(out.data(), &[0.3, -1.2, 2.5]);
    }

    #[test]
    fn forward_rejects_wrong_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Network::<f32>::init(NetSpec::conv_trunk([16, 16, 3], 4), &mut rng).unwrap();
        let bad = Tensor::zeros(&[1, 16, 16, 1]);
        assert!(matches!(net.forward(&bad), Err(NnError::ShapeMismatch { .. })));
    }

    #[test]
    fn flat_params_roundtrip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = NetSpec::conv_trunk([16, 16, 3], 4);
        let net = Network::<f32>::init(spec.clone(), &mut rng).unwrap();
        let flat = net.flat_params();
        let mut other = Network::<f32>::init(spec, &mut rng).unwrap();
        other.load_flat_params(&flat).unwrap();
        let input = Tensor::from_vec(&[1, 16, 16, 3], vec![0.25; 16 * 16 * 3]).unwrap();
        assert_eq!(net.forward(&input).unwrap(), other.forward(&input).unwrap());
        assert!(other.load_flat_params(&flat[1..]).is_err());
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = Network::<f32>::init(NetSpec::conv_trunk([32, 32, 3], 8), &mut rng).unwrap();
        let data: Vec<f32> = (0..32 * 32 * 3).map(|i| (i % 97) as f32 / 97.0).collect();
        let input = Tensor::from_vec(&[1, 32, 32, 3], data).unwrap();
        let a = net.forward(&input).unwrap();
        let b = net.forward(&input).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn linear_net_gradient_matches_closed_form() {
        // one dense layer, squared loss: dL/dW = x^T (Wx - y)
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = NetSpec {
            input: [1, 1, 2],
            layers: vec![LayerSpec::Flatten, LayerSpec::Dense { out: 2 }],
        };
        let net = Network::<f64>::init(spec, &mut rng).unwrap();
        let x = Tensor::from_vec(&[1, 1, 1, 2], vec![0.7, -0.4]).unwrap();
        let target = [0.2, 0.9];
        let (cache, out) = net.forward_cached(&x).unwrap();
        let resid: Vec<f64> = out.data().iter().zip(target).map(|(o, t)| o - t).collect();
        let dy = Tensor::from_vec(&[1, 2], resid.clone()).unwrap();
        let grads = net.backward(&cache, &dy).unwrap();
        // grads[0] = dW [2, 2], grads[1] = db [2]
        let xs = [0.7, -0.4];
        for i in 0..2 {
            for j in 0..2 {
                let expect = xs[i] * resid[j];
                assert!((grads[0].data()[i * 2 + j] - expect).abs() < 1e-12);
            }
            assert!((grads[1].data()[i] - resid[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_output_grad_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = Network::<f64>::init(NetSpec::conv_trunk([16, 16, 3], 4), &mut rng).unwrap();
        let input = Tensor::from_vec(&[2, 16, 16, 3], vec![0.1; 2 * 16 * 16 * 3]).unwrap();
        let (cache, _) = net.forward_cached(&input).unwrap();
        let dy = Tensor::zeros(&[2, 4]);
        let grads = net.backward(&cache, &dy).unwrap();
        for g in grads {
            assert!(g.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn batched_forward_matches_single() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = Network::<f32>::init(NetSpec::conv_trunk([16, 16, 3], 4), &mut rng).unwrap();
        let a: Vec<f32> = (0..16 * 16 * 3).map(|i| (i % 31) as f32 / 31.0).collect();
        let b: Vec<f32> = (0..16 * 16 * 3).map(|i| (i % 17) as f32 / 17.0).collect();
        let mut both = a.clone();
        both.extend_from_slice(&b);
        let batch = Tensor::from_vec(&[2, 16, 16, 3], both).unwrap();
        let out = net.forward(&batch).unwrap();
        let oa = net.forward(&Tensor::from_vec(&[1, 16, 16, 3], a).unwrap()).unwrap();
        let ob = net.forward(&Tensor::from_vec(&[1, 16, 16, 3], b).unwrap()).unwrap();
        assert_eq!(&out.data()[..4], oa.data());
        assert_eq!(&out.data()[4..], ob.data());
    }
}
