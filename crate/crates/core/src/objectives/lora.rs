use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;

use super::mlp::glorot;
use super::{softmax_xent, Mlp, Model};
use crate::params::{weight_view, weight_view_mut, Layout, SegmentKind};
use crate::rng::StreamRng;

/// Two-layer MLP whose weight matrices are `W₀ + B A`, with `W₀` frozen
/// and only the rank-`k` factors and the biases trainable.
///
/// Trainable layout:
/// `[a1: k×input, b1_lora: hidden×k, b1: hidden, a2: k×hidden, b2_lora: classes×k, b2: classes]`.
#[derive(Debug, Clone)]
pub struct LoraMlp {
    base: Mlp,
    base_theta: Vec<f64>,
    rank: usize,
    layout: Layout,
}

impl LoraMlp {
    /// Freezes `base_theta` (biases in it are ignored) and adds rank-`rank` adapters.
    pub fn new(base: Mlp, base_theta: Vec<f64>, rank: usize) -> Self {
        assert_eq!(base_theta.len(), base.layout().dim());
        let (input, hidden, classes) = (base.input_width(), base.hidden(), base.classes());
        let layout = Layout::new([
            ("a1", SegmentKind::Weight { out: rank, inp: input }),
            ("b1_lora", SegmentKind::Weight { out: hidden, inp: rank }),
            ("b1", SegmentKind::Bias { out: hidden }),
            ("a2", SegmentKind::Weight { out: rank, inp: hidden }),
            ("b2_lora", SegmentKind::Weight { out: classes, inp: rank }),
            ("b2", SegmentKind::Bias { out: classes }),
        ]);
        Self {
            base,
            base_theta,
            rank,
            layout,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    fn base_weight(&self, idx: usize) -> ArrayView2<'_, f64> {
        weight_view(&self.base_theta, &self.base.layout().segments()[idx])
    }

    /// `x W₀ᵀ + (x Aᵀ) Bᵀ + b`, also returning `x Aᵀ`.
    fn layer(
        &self,
        theta: &[f64],
        x: ArrayView2<'_, f64>,
        base_idx: usize,
        seg0: usize,
    ) -> (Array2<f64>, Array2<f64>) {
        let seg = self.layout.segments();
        let w0 = self.base_weight(base_idx);
        let a = weight_view(theta, &seg[seg0]);
        let b = weight_view(theta, &seg[seg0 + 1]);
        let bias = ArrayView1::from(&theta[seg[seg0 + 2].range()]);
        let mut xa = Array2::zeros((x.nrows(), self.rank));
        general_mat_mul(1.0, &x, &a.t(), 0.0, &mut xa);
        let mut out = Array2::zeros((x.nrows(), w0.nrows()));
        general_mat_mul(1.0, &x, &w0.t(), 0.0, &mut out);
        general_mat_mul(1.0, &xa, &b.t(), 1.0, &mut out);
        out += &bias;
        (out, xa)
    }

    /// Gradients of one adapted layer given its input `x`, `x Aᵀ` and the
    /// upstream gradient `dout`.
    fn layer_grads(
        &self,
        theta: &[f64],
        x: ArrayView2<'_, f64>,
        xa: &Array2<f64>,
        dout: &Array2<f64>,
        seg0: usize,
        grad: &mut [f64],
    ) {
        let seg = self.layout.segments();
        let b = weight_view(theta, &seg[seg0 + 1]);
        // dB = doutᵀ (x Aᵀ)
        {
            let mut gb = weight_view_mut(grad, &seg[seg0 + 1]);
            general_mat_mul(1.0, &dout.t(), xa, 0.0, &mut gb);
        }
        // dA = (dout B)ᵀ x
        let mut db = Array2::zeros((dout.nrows(), self.rank));
        general_mat_mul(1.0, dout, &b, 0.0, &mut db);
        {
            let mut ga = weight_view_mut(grad, &seg[seg0]);
            general_mat_mul(1.0, &db.t(), &x, 0.0, &mut ga);
        }
        for (dst, v) in grad[seg[seg0 + 2].range()]
            .iter_mut()
            .zip(dout.sum_axis(Axis(0)))
        {
            *dst = v;
        }
    }
}

impl Model for LoraMlp {
    fn layout(&self) -> &Layout {
        &self.layout
    }

    fn classes(&self) -> usize {
        self.base.classes()
    }

    fn input_width(&self) -> usize {
        self.base.input_width()
    }

    fn loss_grad(&self, theta: &[f64], x: ArrayView2<'_, f64>, y: &[u8], grad: Option<&mut [f64]>) -> f64 {
        let (h, xa1) = self.layer(theta, x, 0, 0);
        let act = h.mapv(|v| v.max(0.0));
        let (mut z, xa2) = self.layer(theta, act.view(), 2, 3);
        let loss = softmax_xent(&mut z, y);
        let Some(grad) = grad else {
            return loss;
        };
        self.layer_grads(theta, act.view(), &xa2, &z, 3, grad);

        // d(act) = dz (W₀ + B A) = dz W₀ + (dz B) A
        let seg = self.layout.segments();
        let a2 = weight_view(theta, &seg[3]);
        let b2 = weight_view(theta, &seg[4]);
        let mut dact = Array2::zeros((x.nrows(), self.base.hidden()));
        general_mat_mul(1.0, &z, &self.base_weight(2), 0.0, &mut dact);
        let mut zb = Array2::zeros((x.nrows(), self.rank));
        general_mat_mul(1.0, &z, &b2, 0.0, &mut zb);
        general_mat_mul(1.0, &zb, &a2, 1.0, &mut dact);
        Zip::from(&mut dact).and(&h).for_each(|d, &pre| {
            if pre <= 0.0 {
                *d = 0.0;
            }
        });
        self.layer_grads(theta, x, &xa1, &dact, 0, grad);
        loss
    }

    fn logits(&self, theta: &[f64], x: ArrayView2<'_, f64>) -> Array2<f64> {
        let (h, _) = self.layer(theta, x, 0, 0);
        let act = h.mapv(|v| v.max(0.0));
        self.layer(theta, act.view(), 2, 3).0
    }

    /// `A` uniform in `±1/√fan_in`, `B = 0`, biases zero, so the adapted
    /// network starts out equal to the frozen base.
    fn init(&self, rng: &mut StreamRng) -> Vec<f64> {
        let mut theta = vec![0.0; self.layout.dim()];
        for idx in [0, 3] {
            let seg = &self.layout.segments()[idx];
            if let SegmentKind::Weight { inp, .. } = seg.kind {
                let limit = 1.0 / (inp as f64).sqrt();
                theta[seg.range()]
                    .iter_mut()
                    .for_each(|x| *x = rng.random_range(-limit..limit));
            }
        }
        theta
    }
}

/// Frozen base weights for a LoRA model, drawn like a fresh MLP.
pub fn lora_base(base: &Mlp, rng: &mut StreamRng) -> Vec<f64> {
    let mut theta = vec![0.0; base.layout().dim()];
    for seg in base.layout().segments() {
        if let SegmentKind::Weight { out, inp } = seg.kind {
            glorot(out, inp, rng, &mut theta[seg.range()]);
        }
    }
    theta
}
