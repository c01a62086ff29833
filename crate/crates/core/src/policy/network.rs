//! Transformer track-prediction network with hand-written backpropagation.
//!
//! Token layout per sample: one token per keypoint (robot points first, then
//! object points), then a single gripper token. Keypoint tokens embed the
//! flattened `H×3` history through a shared two-layer MLP; the gripper token
//! embeds the current gripper state linearly. A learned positional embedding
//! is added per token slot. The trunk is a stack of pre-norm blocks with full
//! (non-causal) multi-head self-attention. Two MLP heads read the final robot
//! tokens (future track of that point, `L×3`) and the gripper token (`L`
//! logits).
//!
//! Activations are row-major `(rows, features)` matrices where row
//! `b·tokens + j` holds token `j` of sample `b`.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, ArrayViewD, ArrayViewMutD, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::PolicyError;

/// Floating-point element type of the network.
pub trait Scalar:
    ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + num_traits::Float
    + num_traits::FromPrimitive
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + std::ops::DivAssign
    + std::fmt::Debug
    + std::fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
    fn lit(v: f64) -> Self {
        <Self as num_traits::FromPrimitive>::from_f64(v).expect("representable literal")
    }
    fn to_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("finite value")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

const LN_EPS: f64 = 1e-5;

/// Shape hyper-parameters of a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkDims {
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn: usize,
    pub history: usize,
    pub chunk: usize,
    pub robot_points: usize,
    pub object_points: usize,
}

impl NetworkDims {
    pub fn keypoints(&self) -> usize {
        self.robot_points + self.object_points
    }

    /// Keypoint tokens plus the gripper token.
    pub fn tokens(&self) -> usize {
        self.keypoints() + 1
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let ok = self.hidden > 0
            && self.layers > 0
            && self.heads > 0
            && self.hidden % self.heads == 0
            && self.ffn > 0
            && self.history > 0
            && self.chunk > 0
            && self.robot_points > 0;
        if ok {
            Ok(())
        } else {
            Err(PolicyError::InvalidConfig(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    /// `(in, out)`.
    pub w: Array2<T>,
    pub b: Array1<T>,
}

impl<T: Scalar> Linear<T> {
    fn init<R: Rng>(fan_in: usize, fan_out: usize, std: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, std).expect("valid std");
        Self {
            w: Array2::from_shape_simple_fn((fan_in, fan_out), || T::lit(normal.sample(rng))),
            b: Array1::zeros(fan_out),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            w: Array2::zeros(self.w.raw_dim()),
            b: Array1::zeros(self.b.raw_dim()),
        }
    }

    fn forward(&self, x: &ArrayView2<T>) -> Array2<T> {
        let mut y = x.dot(&self.w);
        y += &self.b;
        y
    }

    /// Accumulates parameter gradients into `grad`; returns `dL/dx`.
    fn backward(&self, x: &ArrayView2<T>, dy: &Array2<T>, grad: &mut Linear<T>) -> Array2<T> {
        self.accumulate(x, dy, grad);
        dy.dot(&self.w.t())
    }

    fn accumulate(&self, x: &ArrayView2<T>, dy: &Array2<T>, grad: &mut Linear<T>) {
        general_mat_mul(T::one(), &x.t(), dy, T::one(), &mut grad.w);
        grad.b += &dy.sum_axis(Axis(0));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm<T> {
    pub gamma: Array1<T>,
    pub beta: Array1<T>,
}

struct LnCache<T> {
    xhat: Array2<T>,
    inv_std: Array1<T>,
}

impl<T: Scalar> LayerNorm<T> {
    fn new(width: usize) -> Self {
        Self {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            gamma: Array1::zeros(self.gamma.raw_dim()),
            beta: Array1::zeros(self.beta.raw_dim()),
        }
    }

    fn forward(&self, x: &Array2<T>) -> (Array2<T>, LnCache<T>) {
        let width = T::lit(x.ncols() as f64);
        let eps = T::lit(LN_EPS);
        let mut xhat = x.clone();
        let mut inv_std = Array1::zeros(x.nrows());
        for (mut row, inv) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
            let mean = row.sum() / width;
            row.mapv_inplace(|v| v - mean);
            let var = row.fold(T::zero(), |acc, v| acc + *v * *v) / width;
            let r = T::one() / (var + eps).sqrt();
            row.mapv_inplace(|v| v * r);
            *inv = r;
        }
        let mut y = &xhat * &self.gamma;
        y += &self.beta;
        (y, LnCache { xhat, inv_std })
    }

    fn backward(&self, cache: &LnCache<T>, dy: &Array2<T>, grad: &mut LayerNorm<T>) -> Array2<T> {
        grad.gamma += &(dy * &cache.xhat).sum_axis(Axis(0));
        grad.beta += &dy.sum_axis(Axis(0));
        let width = T::lit(dy.ncols() as f64);
        let mut dx = dy * &self.gamma;
        for ((mut row, xhat), inv) in dx
            .rows_mut()
            .into_iter()
            .zip(cache.xhat.rows())
            .zip(cache.inv_std.iter())
        {
            let mean_d = row.sum() / width;
            let mean_dx = row.iter().zip(xhat.iter()).fold(T::zero(), |acc, (a, b)| acc + *a * *b) / width;
            Zip::from(&mut row).and(&xhat).for_each(|d, &xh| {
                *d = (*d - mean_d - xh * mean_dx) * *inv;
            });
        }
        dx
    }
}

/// `tanh` through a single `exp` of a non-positive argument; several times
/// faster than the libm routine and accurate to a few ulps.
fn fast_tanh<T: Scalar>(u: T) -> T {
    let e = (T::lit(-2.0) * u.abs()).exp();
    ((T::one() - e) / (T::one() + e)).copysign(u)
}

fn gelu<T: Scalar>(x: T) -> T {
    let c = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let u = c * (x + T::lit(0.044715) * x * x * x);
    T::lit(0.5) * x * (T::one() + fast_tanh(u))
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let k = T::lit(0.044715);
    let u = c * (x + k * x * x * x);
    let t = fast_tanh(u);
    let half = T::lit(0.5);
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + T::lit(3.0) * k * x * x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block<T> {
    pub ln1: LayerNorm<T>,
    pub qkv: Linear<T>,
    pub proj: Linear<T>,
    pub ln2: LayerNorm<T>,
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
}

struct BlockCache<T> {
    ln1: LnCache<T>,
    h1: Array2<T>,
    qkv: Array2<T>,
    probs: Vec<Array2<T>>,
    attn: Array2<T>,
    ln2: LnCache<T>,
    h2: Array2<T>,
    pre: Array2<T>,
    act: Array2<T>,
}

impl<T: Scalar> Block<T> {
    fn init<R: Rng>(dims: &NetworkDims, rng: &mut R) -> Self {
        let d = dims.hidden;
        let out_std = 0.02 / (2.0 * dims.layers as f64).sqrt();
        Self {
            ln1: LayerNorm::new(d),
            qkv: Linear::init(d, 3 * d, 0.02, rng),
            proj: Linear::init(d, d, out_std, rng),
            ln2: LayerNorm::new(d),
            fc1: Linear::init(d, dims.ffn, 0.02, rng),
            fc2: Linear::init(dims.ffn, d, out_std, rng),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            ln1: self.ln1.zeros_like(),
            qkv: self.qkv.zeros_like(),
            proj: self.proj.zeros_like(),
            ln2: self.ln2.zeros_like(),
            fc1: self.fc1.zeros_like(),
            fc2: self.fc2.zeros_like(),
        }
    }

    fn forward(&self, x: &mut Array2<T>, batch: usize, tokens: usize, heads: usize) -> BlockCache<T> {
        let d = x.ncols();
        let dh = d / heads;
        let scale = T::lit(1.0 / (dh as f64).sqrt());

        let (h1, ln1) = self.ln1.forward(x);
        let qkv = self.qkv.forward(&h1.view());
        let mut attn = Array2::zeros((batch * tokens, d));
        let mut probs = Vec::with_capacity(batch * heads);
        for b in 0..batch {
            let rows = b * tokens..(b + 1) * tokens;
            for h in 0..heads {
                let q = qkv.slice(s![rows.clone(), h * dh..(h + 1) * dh]);
                let k = qkv.slice(s![rows.clone(), d + h * dh..d + (h + 1) * dh]);
                let v = qkv.slice(s![rows.clone(), 2 * d + h * dh..2 * d + (h + 1) * dh]);
                let mut a = q.dot(&k.t());
                for mut row in a.rows_mut() {
                    let max = row.fold(T::neg_infinity(), |m, v| m.max(*v));
                    row.mapv_inplace(|v| ((v - max) * scale).exp());
                    let sum = row.sum();
                    row.mapv_inplace(|v| v / sum);
                }
                attn.slice_mut(s![rows.clone(), h * dh..(h + 1) * dh])
                    .assign(&a.dot(&v));
                probs.push(a);
            }
        }
        *x += &self.proj.forward(&attn.view());

        let (h2, ln2) = self.ln2.forward(x);
        let pre = self.fc1.forward(&h2.view());
        let act = pre.mapv(gelu);
        *x += &self.fc2.forward(&act.view());

        BlockCache {
            ln1,
            h1,
            qkv,
            probs,
            attn,
            ln2,
            h2,
            pre,
            act,
        }
    }

    /// `dx` is the gradient w.r.t. the block output on entry and w.r.t. the
    /// block input on exit.
    fn backward(
        &self,
        cache: &BlockCache<T>,
        dx: &mut Array2<T>,
        grad: &mut Block<T>,
        batch: usize,
        tokens: usize,
        heads: usize,
    ) {
        let d = dx.ncols();
        let dh = d / heads;
        let scale = T::lit(1.0 / (dh as f64).sqrt());

        // feed-forward branch
        let d_act = self.fc2.backward(&cache.act.view(), dx, &mut grad.fc2);
        let mut d_pre = d_act;
        Zip::from(&mut d_pre)
            .and(&cache.pre)
            .for_each(|g, &p| *g = *g * gelu_grad(p));
        let d_h2 = self.fc1.backward(&cache.h2.view(), &d_pre, &mut grad.fc1);
        *dx += &self.ln2.backward(&cache.ln2, &d_h2, &mut grad.ln2);

        // attention branch
        let d_attn = self.proj.backward(&cache.attn.view(), dx, &mut grad.proj);
        let mut d_qkv = Array2::zeros(cache.qkv.raw_dim());
        for b in 0..batch {
            let rows = b * tokens..(b + 1) * tokens;
            for h in 0..heads {
                let a = &cache.probs[b * heads + h];
                let qc = h * dh..(h + 1) * dh;
                let kc = d + h * dh..d + (h + 1) * dh;
                let vc = 2 * d + h * dh..2 * d + (h + 1) * dh;
                let q = cache.qkv.slice(s![rows.clone(), qc.clone()]);
                let k = cache.qkv.slice(s![rows.clone(), kc.clone()]);
                let v = cache.qkv.slice(s![rows.clone(), vc.clone()]);
                let d_o = d_attn.slice(s![rows.clone(), qc.clone()]);

                let mut d_s = d_o.dot(&v.t());
                let d_v = a.t().dot(&d_o);
                for (mut ds_row, a_row) in d_s.rows_mut().into_iter().zip(a.rows()) {
                    let dot = ds_row.iter().zip(a_row.iter()).fold(T::zero(), |acc, (x, y)| acc + *x * *y);
                    Zip::from(&mut ds_row)
                        .and(&a_row)
                        .for_each(|g, &p| *g = p * (*g - dot) * scale);
                }
                d_qkv.slice_mut(s![rows.clone(), qc]).assign(&d_s.dot(&k));
                d_qkv.slice_mut(s![rows.clone(), kc]).assign(&d_s.t().dot(&q));
                d_qkv.slice_mut(s![rows.clone(), vc]).assign(&d_v);
            }
        }
        let d_h1 = self.qkv.backward(&cache.h1.view(), &d_qkv, &mut grad.qkv);
        *dx += &self.ln1.backward(&cache.ln1, &d_h1, &mut grad.ln1);
    }
}

/// A batch of normalized inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchInput<T> {
    /// `(batch·keypoints, 3·history)`; row `b·K + k` is keypoint `k` of sample `b`,
    /// flattened oldest-first as `[x₀, y₀, z₀, x₁, …]`.
    pub points: Array2<T>,
    /// Current gripper state per sample, `1` closed / `0` open.
    pub gripper: Array1<T>,
}

impl<T: Scalar> BatchInput<T> {
    pub fn batch_size(&self) -> usize {
        self.gripper.len()
    }
}

/// Raw network outputs for a batch (normalized track coordinates and gripper logits).
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutput<T> {
    /// `(batch·robot_points, 3·chunk)`; column `3l + a` is axis `a` at future step `l+1`.
    pub tracks: Array2<T>,
    /// `(batch, chunk)`.
    pub logits: Array2<T>,
}

pub struct ForwardCache<T> {
    enc_pre: Array2<T>,
    enc_act: Array2<T>,
    blocks: Vec<BlockCache<T>>,
    ln_f: LnCache<T>,
    z: Array2<T>,
    track_in: Array2<T>,
    track_pre: Array2<T>,
    track_act: Array2<T>,
    grip_in: Array2<T>,
    grip_pre: Array2<T>,
    grip_act: Array2<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNetwork<T> {
    pub dims: NetworkDims,
    pub enc1: Linear<T>,
    pub enc2: Linear<T>,
    pub grip_embed: Linear<T>,
    pub pos: Array2<T>,
    pub blocks: Vec<Block<T>>,
    pub ln_f: LayerNorm<T>,
    pub track1: Linear<T>,
    pub track2: Linear<T>,
    pub grip1: Linear<T>,
    pub grip2: Linear<T>,
}

impl<T: Scalar> PolicyNetwork<T> {
    pub fn init<R: Rng>(dims: NetworkDims, rng: &mut R) -> Result<Self, PolicyError> {
        dims.validate()?;
        let d = dims.hidden;
        let in_width = 3 * dims.history;
        let lecun = |fan_in: usize| 1.0 / (fan_in as f64).sqrt();
        let enc1 = Linear::init(in_width, d, lecun(in_width), rng);
        let enc2 = Linear::init(d, d, lecun(d), rng);
        let grip_embed = Linear::init(1, d, 0.02, rng);
        let normal = Normal::new(0.0, 0.02).expect("valid std");
        let pos = Array2::from_shape_simple_fn((dims.tokens(), d), || T::lit(normal.sample(rng)));
        let blocks = (0..dims.layers).map(|_| Block::init(&dims, rng)).collect();
        let track1 = Linear::init(d, d, lecun(d), rng);
        let track2 = Linear::init(d, 3 * dims.chunk, 0.02, rng);
        let grip1 = Linear::init(d, d, lecun(d), rng);
        let grip2 = Linear::init(d, dims.chunk, 0.02, rng);
        Ok(Self {
            dims,
            enc1,
            enc2,
            grip_embed,
            pos,
            blocks,
            ln_f: LayerNorm::new(d),
            track1,
            track2,
            grip1,
            grip2,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            dims: self.dims,
            enc1: self.enc1.zeros_like(),
            enc2: self.enc2.zeros_like(),
            grip_embed: self.grip_embed.zeros_like(),
            pos: Array2::zeros(self.pos.raw_dim()),
            blocks: self.blocks.iter().map(Block::zeros_like).collect(),
            ln_f: self.ln_f.zeros_like(),
            track1: self.track1.zeros_like(),
            track2: self.track2.zeros_like(),
            grip1: self.grip1.zeros_like(),
            grip2: self.grip2.zeros_like(),
        }
    }

    /// Named parameter tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(String, ArrayViewD<'_, T>)> {
        fn lin<'a, T>(name: &str, l: &'a Linear<T>, out: &mut Vec<(String, ArrayViewD<'a, T>)>) {
            out.push((format!("{name}.w"), l.w.view().into_dyn()));
            out.push((format!("{name}.b"), l.b.view().into_dyn()));
        }
        let mut out = Vec::new();
        lin("enc1", &self.enc1, &mut out);
        lin("enc2", &self.enc2, &mut out);
        lin("grip_embed", &self.grip_embed, &mut out);
        out.push(("pos".into(), self.pos.view().into_dyn()));
        for (i, blk) in self.blocks.iter().enumerate() {
            out.push((format!("blocks.{i}.ln1.gamma"), blk.ln1.gamma.view().into_dyn()));
            out.push((format!("blocks.{i}.ln1.beta"), blk.ln1.beta.view().into_dyn()));
            lin(&format!("blocks.{i}.qkv"), &blk.qkv, &mut out);
            lin(&format!("blocks.{i}.proj"), &blk.proj, &mut out);
            out.push((format!("blocks.{i}.ln2.gamma"), blk.ln2.gamma.view().into_dyn()));
            out.push((format!("blocks.{i}.ln2.beta"), blk.ln2.beta.view().into_dyn()));
            lin(&format!("blocks.{i}.fc1"), &blk.fc1, &mut out);
            lin(&format!("blocks.{i}.fc2"), &blk.fc2, &mut out);
        }
        out.push(("ln_f.gamma".into(), self.ln_f.gamma.view().into_dyn()));
        out.push(("ln_f.beta".into(), self.ln_f.beta.view().into_dyn()));
        lin("track1", &self.track1, &mut out);
        lin("track2", &self.track2, &mut out);
        lin("grip1", &self.grip1, &mut out);
        lin("grip2", &self.grip2, &mut out);
        out
    }

    /// Mutable views in the same order as [`tensors`](Self::tensors).
    pub fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, T>> {
        let mut out: Vec<ArrayViewMutD<'_, T>> = Vec::new();
        fn lin<'a, T>(l: &'a mut Linear<T>, out: &mut Vec<ArrayViewMutD<'a, T>>) {
            out.push(l.w.view_mut().into_dyn());
            out.push(l.b.view_mut().into_dyn());
        }
        lin(&mut self.enc1, &mut out);
        lin(&mut self.enc2, &mut out);
        lin(&mut self.grip_embed, &mut out);
        out.push(self.pos.view_mut().into_dyn());
        for blk in self.blocks.iter_mut() {
            out.push(blk.ln1.gamma.view_mut().into_dyn());
            out.push(blk.ln1.beta.view_mut().into_dyn());
            lin(&mut blk.qkv, &mut out);
            lin(&mut blk.proj, &mut out);
            out.push(blk.ln2.gamma.view_mut().into_dyn());
            out.push(blk.ln2.beta.view_mut().into_dyn());
            lin(&mut blk.fc1, &mut out);
            lin(&mut blk.fc2, &mut out);
        }
        out.push(self.ln_f.gamma.view_mut().into_dyn());
        out.push(self.ln_f.beta.view_mut().into_dyn());
        lin(&mut self.track1, &mut out);
        lin(&mut self.track2, &mut out);
        lin(&mut self.grip1, &mut out);
        lin(&mut self.grip2, &mut out);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// Embeds one keypoint's flattened normalized history (`3·H` values).
    pub fn encode_token(&self, history: &[T]) -> Result<Array1<T>, PolicyError> {
        let expected = 3 * self.dims.history;
        if history.len() != expected {
            return Err(PolicyError::ShapeMismatch {
                what: "token history",
                expected,
                got: history.len(),
            });
        }
        let x = ArrayView2::from_shape((1, expected), history).expect("contiguous slice");
        let pre = self.enc1.forward(&x);
        let act = pre.mapv(gelu);
        Ok(self.enc2.forward(&act.view()).row(0).to_owned())
    }

    fn check_input(&self, input: &BatchInput<T>) -> Result<usize, PolicyError> {
        let batch = input.batch_size();
        let k = self.dims.keypoints();
        if input.points.nrows() != batch * k {
            return Err(PolicyError::ShapeMismatch {
                what: "keypoint rows",
                expected: batch * k,
                got: input.points.nrows(),
            });
        }
        if input.points.ncols() != 3 * self.dims.history {
            return Err(PolicyError::ShapeMismatch {
                what: "history width",
                expected: 3 * self.dims.history,
                got: input.points.ncols(),
            });
        }
        Ok(batch)
    }

    pub fn forward(&self, input: &BatchInput<T>) -> Result<BatchOutput<T>, PolicyError> {
        self.forward_with_cache(input).map(|(out, _)| out)
    }

    pub fn forward_with_cache(
        &self,
        input: &BatchInput<T>,
    ) -> Result<(BatchOutput<T>, ForwardCache<T>), PolicyError> {
        let batch = self.check_input(input)?;
        let dims = &self.dims;
        let (k, tokens, nr) = (dims.keypoints(), dims.tokens(), dims.robot_points);
        let d = dims.hidden;

        let enc_pre = self.enc1.forward(&input.points.view());
        let enc_act = enc_pre.mapv(gelu);
        let enc = self.enc2.forward(&enc_act.view());

        let g = input.gripper.view().insert_axis(Axis(1));
        let grip = self.grip_embed.forward(&g);

        let mut x = Array2::zeros((batch * tokens, d));
        for b in 0..batch {
            x.slice_mut(s![b * tokens..b * tokens + k, ..])
                .assign(&enc.slice(s![b * k..(b + 1) * k, ..]));
            x.row_mut(b * tokens + k).assign(&grip.row(b));
            let mut sample = x.slice_mut(s![b * tokens..(b + 1) * tokens, ..]);
            sample += &self.pos;
        }

        let blocks = self
            .blocks
            .iter()
            .map(|blk| blk.forward(&mut x, batch, tokens, dims.heads))
            .collect();
        let (z, ln_f) = self.ln_f.forward(&x);

        let mut track_in = Array2::zeros((batch * nr, d));
        let mut grip_in = Array2::zeros((batch, d));
        for b in 0..batch {
            track_in
                .slice_mut(s![b * nr..(b + 1) * nr, ..])
                .assign(&z.slice(s![b * tokens..b * tokens + nr, ..]));
            grip_in.row_mut(b).assign(&z.row(b * tokens + k));
        }
        let track_pre = self.track1.forward(&track_in.view());
        let track_act = track_pre.mapv(gelu);
        let tracks = self.track2.forward(&track_act.view());
        let grip_pre = self.grip1.forward(&grip_in.view());
        let grip_act = grip_pre.mapv(gelu);
        let logits = self.grip2.forward(&grip_act.view());

        Ok((
            BatchOutput { tracks, logits },
            ForwardCache {
                enc_pre,
                enc_act,
                blocks,
                ln_f,
                z,
                track_in,
                track_pre,
                track_act,
                grip_in,
                grip_pre,
                grip_act,
            },
        ))
    }

    /// Gradients of a scalar loss w.r.t. every parameter, given `dL/d(outputs)`.
    pub fn backward(&self, input: &BatchInput<T>, cache: &ForwardCache<T>, d_out: &BatchOutput<T>) -> PolicyNetwork<T> {
        let mut grad = self.zeros_like();
        let dims = &self.dims;
        let batch = input.batch_size();
        let (k, tokens, nr) = (dims.keypoints(), dims.tokens(), dims.robot_points);

        let mut d_track_act = self.track2.backward(&cache.track_act.view(), &d_out.tracks, &mut grad.track2);
        Zip::from(&mut d_track_act)
            .and(&cache.track_pre)
            .for_each(|g, &p| *g = *g * gelu_grad(p));
        let d_track_in = self.track1.backward(&cache.track_in.view(), &d_track_act, &mut grad.track1);

        let mut d_grip_act = self.grip2.backward(&cache.grip_act.view(), &d_out.logits, &mut grad.grip2);
        Zip::from(&mut d_grip_act)
            .and(&cache.grip_pre)
            .for_each(|g, &p| *g = *g * gelu_grad(p));
        let d_grip_in = self.grip1.backward(&cache.grip_in.view(), &d_grip_act, &mut grad.grip1);

        let mut d_z = Array2::zeros(cache.z.raw_dim());
        for b in 0..batch {
            d_z.slice_mut(s![b * tokens..b * tokens + nr, ..])
                .assign(&d_track_in.slice(s![b * nr..(b + 1) * nr, ..]));
            d_z.row_mut(b * tokens + k).assign(&d_grip_in.row(b));
        }
        let mut dx = self.ln_f.backward(&cache.ln_f, &d_z, &mut grad.ln_f);
        for (i, blk) in self.blocks.iter().enumerate().rev() {
            blk.backward(&cache.blocks[i], &mut dx, &mut grad.blocks[i], batch, tokens, dims.heads);
        }

        let mut d_enc = Array2::zeros((batch * k, dims.hidden));
        let mut d_grip = Array2::zeros((batch, dims.hidden));
        for b in 0..batch {
            let sample = dx.slice(s![b * tokens..(b + 1) * tokens, ..]);
            grad.pos += &sample;
            d_enc
                .slice_mut(s![b * k..(b + 1) * k, ..])
                .assign(&sample.slice(s![..k, ..]));
            d_grip.row_mut(b).assign(&sample.row(k));
        }
        let g = input.gripper.view().insert_axis(Axis(1));
        self.grip_embed.accumulate(&g, &d_grip, &mut grad.grip_embed);

        let mut d_enc_act = self.enc2.backward(&cache.enc_act.view(), &d_enc, &mut grad.enc2);
        Zip::from(&mut d_enc_act)
            .and(&cache.enc_pre)
            .for_each(|g, &p| *g = *g * gelu_grad(p));
        self.enc1.accumulate(&input.points.view(), &d_enc_act, &mut grad.enc1);
        grad
    }

    /// Element-wise cast (used to promote trained `f32` weights for analysis).
    pub fn cast<U: Scalar>(&self) -> PolicyNetwork<U> {
        let c2 = |a: &Array2<T>| a.mapv(|v| U::lit(v.to_f64()));
        let c1 = |a: &Array1<T>| a.mapv(|v| U::lit(v.to_f64()));
        let lin = |l: &Linear<T>| Linear { w: c2(&l.w), b: c1(&l.b) };
        let ln = |l: &LayerNorm<T>| LayerNorm {
            gamma: c1(&l.gamma),
            beta: c1(&l.beta),
        };
        PolicyNetwork {
            dims: self.dims,
            enc1: lin(&self.enc1),
            enc2: lin(&self.enc2),
            grip_embed: lin(&self.grip_embed),
            pos: c2(&self.pos),
            blocks: self
                .blocks
                .iter()
                .map(|b| Block {
                    ln1: ln(&b.ln1),
                    qkv: lin(&b.qkv),
                    proj: lin(&b.proj),
                    ln2: ln(&b.ln2),
                    fc1: lin(&b.fc1),
                    fc2: lin(&b.fc2),
                })
                .collect(),
            ln_f: ln(&self.ln_f),
            track1: lin(&self.track1),
            track2: lin(&self.track2),
            grip1: lin(&self.grip1),
            grip2: lin(&self.grip2),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dims() -> NetworkDims {
        NetworkDims {
            hidden: 8,
            layers: 1,
            heads: 2,
            ffn: 16,
            history: 2,
            chunk: 3,
            robot_points: 2,
            object_points: 1,
        }
    }

    #[test]
    fn fast_tanh_agrees_with_libm() {
        for i in -4000..=4000 {
            let u = i as f64 * 0.005;
            assert!((fast_tanh(u) - u.tanh()).abs() < 1e-15, "u={u}");
            assert!((fast_tanh(u as f32) - (u as f32).tanh()).abs() < 1e-6, "u={u}");
        }
        assert_eq!(fast_tanh(0.0f64), 0.0);
        assert_eq!(fast_tanh(40.0f64), 1.0);
        assert_eq!(fast_tanh(-40.0f32), -1.0);
    }

    #[test]
    fn gelu_derivative_matches_difference() {
        for x in [-3.0f64, -1.0, -0.1, 0.0, 0.3, 1.7, 4.0] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8, "x={x}");
        }
    }

    #[test]
    fn output_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = PolicyNetwork::<f64>::init(dims(), &mut rng).unwrap();
        let input = BatchInput {
            points: Array2::zeros((2 * 3, 6)),
            gripper: Array1::from(vec![0.0, 1.0]),
        };
        let out = net.forward(&input).unwrap();
        assert_eq!(out.tracks.dim(), (4, 9));
        assert_eq!(out.logits.dim(), (2, 3));
        assert!(out.tracks.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn bad_history_width_is_a_shape_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = PolicyNetwork::<f64>::init(dims(), &mut rng).unwrap();
        let input = BatchInput {
            points: Array2::zeros((3, 5)),
            gripper: Array1::from(vec![0.0]),
        };
        assert!(matches!(net.forward(&input), Err(PolicyError::ShapeMismatch { .. })));
        assert!(net.encode_token(&[0.0; 5]).is_err());
        assert_eq!(net.encode_token(&[0.0; 6]).unwrap().len(), 8);
    }

    #[test]
    fn samples_in_a_batch_are_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = PolicyNetwork::<f64>::init(dims(), &mut rng).unwrap();
        let normal = Normal::new(0.0, 1.0).unwrap();
        let points = Array2::from_shape_simple_fn((6, 6), || normal.sample(&mut rng));
        let both = net
            .forward(&BatchInput { points: points.clone(), gripper: Array1::from(vec![1.0, 0.0]) })
            .unwrap();
        let second = net
            .forward(&BatchInput {
                points: points.slice(s![3.., ..]).to_owned(),
                gripper: Array1::from(vec![0.0]),
            })
            .unwrap();
        for (a, b) in both.tracks.slice(s![2.., ..]).iter().zip(second.tracks.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn tensor_lists_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = PolicyNetwork::<f32>::init(dims(), &mut rng).unwrap();
        let shapes: Vec<Vec<usize>> = net.tensors().iter().map(|(_, t)| t.shape().to_vec()).collect();
        let mut_shapes: Vec<Vec<usize>> = net.tensors_mut().iter().map(|t| t.shape().to_vec()).collect();
        assert_eq!(shapes, mut_shapes);
    }
}
