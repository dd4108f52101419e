//! Fully connected network with ReLU hidden layers and hand-written
//! backpropagation over row-major mini-batches.
//!
//! All parameters live in one flat vector so optimizers and target-network
//! blending can treat a network as a single slice. Layer `l` stores its
//! weight matrix (`n_in x n_out`, row-major, row = input unit) followed by
//! its bias vector.

use rand::Rng;

/// Activation applied to the final layer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OutputActivation {
    Identity,
    /// `mid + half * tanh(z)`, mapping onto `[mid - half, mid + half]`.
    BoundedTanh {
        mid: f64,
        half: f64,
    },
}

impl OutputActivation {
    #[inline]
    fn apply(&self, z: f64) -> f64 {
        match *self {
            OutputActivation::Identity => z,
            OutputActivation::BoundedTanh { mid, half } => mid + half * z.tanh(),
        }
    }

    #[inline]
    fn derivative(&self, z: f64) -> f64 {
        match *self {
            OutputActivation::Identity => 1.0,
            OutputActivation::BoundedTanh { half, .. } => {
                let t = z.tanh();
                half * (1.0 - t * t)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    pub params: Vec<f64>,
    pub output: OutputActivation,
}

/// Per-layer activations kept from a forward pass for the backward pass.
#[derive(Clone, Debug, Default)]
pub struct Workspace {
    batch: usize,
    /// `acts[0]` is the input; `acts[l + 1]` is layer `l`'s post-activation.
    acts: Vec<Vec<f64>>,
    /// Pre-activations of every layer.
    pre: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl Mlp {
    /// Zero-initialized network with the given layer widths, input first.
    pub fn zeros(sizes: &[usize], output: OutputActivation) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&n| n > 0));
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut off = 0;
        for w in sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        offsets.push(off);
        Mlp {
            sizes: sizes.to_vec(),
            offsets,
            params: vec![0.0; off],
            output,
        }
    }

    /// Hidden layers uniform in `+-1/sqrt(fan_in)`, the final layer uniform
    /// in `+-final_scale`.
    pub fn init<R: Rng>(sizes: &[usize], output: OutputActivation, final_scale: f64, rng: &mut R) -> Self {
        let mut net = Mlp::zeros(sizes, output);
        let n = net.num_layers();
        for l in 0..n {
            let bound = if l + 1 == n {
                final_scale
            } else {
                1.0 / (net.sizes[l] as f64).sqrt()
            };
            let range = net.offsets[l]..net.offsets[l + 1];
            for x in &mut net.params[range] {
                *x = if bound > 0.0 { rng.gen_range(-bound..bound) } else { 0.0 };
            }
        }
        net
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn n_in(&self) -> usize {
        self.sizes[0]
    }

    pub fn n_out(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Weight matrix and bias of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let o = self.offsets[l];
        let (w, rest) = self.params[o..].split_at(n_in * n_out);
        (w, &rest[..n_out])
    }

    pub fn layer_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let o = self.offsets[l];
        let (w, rest) = self.params[o..].split_at_mut(n_in * n_out);
        (w, &mut rest[..n_out])
    }

    /// Builds a network from explicit per-layer `(weights, bias)` arrays.
    pub fn from_layers(sizes: &[usize], output: OutputActivation, layers: &[(Vec<f64>, Vec<f64>)]) -> Option<Self> {
        if sizes.len() < 2 || sizes.contains(&0) || layers.len() != sizes.len() - 1 {
            return None;
        }
        let mut net = Mlp::zeros(sizes, output);
        for (l, (w, b)) in layers.iter().enumerate() {
            let (wd, bd) = net.layer_mut(l);
            if w.len() != wd.len() || b.len() != bd.len() {
                return None;
            }
            wd.copy_from_slice(w);
            bd.copy_from_slice(b);
        }
        Some(net)
    }

    /// Batched forward pass. `x` holds `batch` rows of `n_in` inputs; the
    /// returned slice holds `batch` rows of `n_out` outputs.
    pub fn forward<'w>(&self, x: &[f64], batch: usize, ws: &'w mut Workspace) -> &'w [f64] {
        debug_assert_eq!(x.len(), batch * self.n_in());
        let n = self.num_layers();
        ws.batch = batch;
        ws.acts.resize_with(n + 1, Vec::new);
        ws.pre.resize_with(n, Vec::new);
        ws.acts[0].clear();
        ws.acts[0].extend_from_slice(x);
        for l in 0..n {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w, b) = self.layer(l);
            let z = &mut ws.pre[l];
            z.clear();
            for _ in 0..batch {
                z.extend_from_slice(b);
            }
            gemm(
                batch,
                n_in,
                n_out,
                &ws.acts[l],
                Layout::Normal,
                w,
                Layout::Normal,
                z,
                1.0,
            );
            let out = &mut ws.acts[l + 1];
            out.clear();
            if l + 1 == n {
                out.extend(z.iter().map(|&v| self.output.apply(v)));
            } else {
                out.extend(z.iter().map(|&v| v.max(0.0)));
            }
        }
        &ws.acts[n]
    }

    /// Backward pass for the most recent `forward` on `ws`.
    ///
    /// `d_out` is the loss gradient with respect to the network output.
    /// Parameter gradients are accumulated into `grad` when given; the input
    /// gradient is written into `d_in` when given.
    pub fn backward(&self, ws: &mut Workspace, d_out: &[f64], mut grad: Option<&mut [f64]>, d_in: Option<&mut [f64]>) {
        let n = self.num_layers();
        let batch = ws.batch;
        debug_assert_eq!(d_out.len(), batch * self.n_out());
        let mut delta = std::mem::take(&mut ws.delta);
        let mut delta_prev = std::mem::take(&mut ws.delta_prev);
        delta.clear();
        delta.extend(
            d_out
                .iter()
                .zip(&ws.pre[n - 1])
                .map(|(&g, &z)| g * self.output.derivative(z)),
        );
        for l in (0..n).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w, _) = self.layer(l);
            if let Some(g) = grad.as_deref_mut() {
                let o = self.offsets[l];
                let (gw, rest) = g[o..].split_at_mut(n_in * n_out);
                // dW += X^T delta
                gemm(
                    n_in,
                    batch,
                    n_out,
                    &ws.acts[l],
                    Layout::Transposed(n_in),
                    &delta,
                    Layout::Normal,
                    gw,
                    1.0,
                );
                let gb = &mut rest[..n_out];
                for row in delta.chunks_exact(n_out) {
                    for (gbj, &dj) in gb.iter_mut().zip(row) {
                        *gbj += dj;
                    }
                }
            }
            if l == 0 && d_in.is_none() {
                break;
            }
            // dX = delta W^T
            delta_prev.clear();
            delta_prev.resize(batch * n_in, 0.0);
            gemm(
                batch,
                n_out,
                n_in,
                &delta,
                Layout::Normal,
                w,
                Layout::Transposed(n_out),
                &mut delta_prev,
                0.0,
            );
            if l > 0 {
                for (d, &z) in delta_prev.iter_mut().zip(&ws.pre[l - 1]) {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            std::mem::swap(&mut delta, &mut delta_prev);
        }
        if let Some(d_in) = d_in {
            d_in.copy_from_slice(&delta);
        }
        ws.delta = delta;
        ws.delta_prev = delta_prev;
    }

    /// Single-sample forward pass without a workspace.
    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n_in());
        let n = self.num_layers();
        let mut h = x.to_vec();
        for l in 0..n {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w, b) = self.layer(l);
            let mut z = b.to_vec();
            for i in 0..n_in {
                let xi = h[i];
                if xi == 0.0 {
                    continue;
                }
                for (zj, &wij) in z.iter_mut().zip(&w[i * n_out..(i + 1) * n_out]) {
                    *zj += xi * wij;
                }
            }
            h = if l + 1 == n {
                z.iter().map(|&v| self.output.apply(v)).collect()
            } else {
                z.iter().map(|&v| v.max(0.0)).collect()
            };
        }
        h
    }

    /// `self = c * online + (1 - c) * self`, element-wise.
    pub fn blend_from(&mut self, online: &Mlp, c: f64) {
        debug_assert_eq!(self.sizes, online.sizes);
        for (t, &o) in self.params.iter_mut().zip(&online.params) {
            *t = c * o + (1.0 - c) * *t;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|x| x.is_finite())
    }
}

#[derive(Clone, Copy)]
enum Layout {
    /// Row-major as stored.
    Normal,
    /// Use the transpose of a row-major matrix with the given row length.
    Transposed(usize),
}

/// `c = a * b + beta * c` for row-major `c` (`m x n`), `a` logically
/// `m x k` and `b` logically `k x n`.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], la: Layout, b: &[f64], lb: Layout, c: &mut [f64], beta: f64) {
    let (rsa, csa) = match la {
        Layout::Normal => (k as isize, 1),
        Layout::Transposed(cols) => (1, cols as isize),
    };
    let (rsb, csb) = match lb {
        Layout::Normal => (n as isize, 1),
        Layout::Transposed(cols) => (1, cols as isize),
    };
    debug_assert!(c.len() >= m * n);
    // SAFETY: strides describe in-bounds views of `a`, `b` and `c` for the
    // given dimensions, and `c` does not alias the inputs.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
