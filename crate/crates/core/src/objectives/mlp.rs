use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;

use super::{softmax_xent, Model};
use crate::params::{weight_view, weight_view_mut, Layout, SegmentKind};
use crate::rng::StreamRng;

/// `input → hidden (ReLU) → classes` with softmax cross-entropy.
///
/// Layout: `[w1: hidden×input, b1: hidden, w2: classes×hidden, b2: classes]`.
#[derive(Debug, Clone)]
pub struct Mlp {
    input: usize,
    hidden: usize,
    classes: usize,
    layout: Layout,
}

impl Mlp {
    pub fn new(input: usize, hidden: usize, classes: usize) -> Self {
        let layout = Layout::new([
            ("w1", SegmentKind::Weight { out: hidden, inp: input }),
            ("b1", SegmentKind::Bias { out: hidden }),
            ("w2", SegmentKind::Weight { out: classes, inp: hidden }),
            ("b2", SegmentKind::Bias { out: classes }),
        ]);
        Self {
            input,
            hidden,
            classes,
            layout,
        }
    }

    /// The 784-128-10 network used on MNIST.
    pub fn simple_mlp() -> Self {
        Self::new(784, 128, 10)
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    fn views<'a>(&self, theta: &'a [f64]) -> (ArrayView2<'a, f64>, ArrayView1<'a, f64>, ArrayView2<'a, f64>, ArrayView1<'a, f64>) {
        let seg = self.layout.segments();
        (
            weight_view(theta, &seg[0]),
            ArrayView1::from(&theta[seg[1].range()]),
            weight_view(theta, &seg[2]),
            ArrayView1::from(&theta[seg[3].range()]),
        )
    }

    /// Pre-activations of the hidden layer.
    fn hidden_pre(&self, theta: &[f64], x: ArrayView2<'_, f64>) -> Array2<f64> {
        let (w1, b1, _, _) = self.views(theta);
        let mut h = Array2::zeros((x.nrows(), self.hidden));
        general_mat_mul(1.0, &x, &w1.t(), 0.0, &mut h);
        h += &b1;
        h
    }

    fn output(&self, theta: &[f64], a: &Array2<f64>) -> Array2<f64> {
        let (_, _, w2, b2) = self.views(theta);
        let mut z = Array2::zeros((a.nrows(), self.classes));
        general_mat_mul(1.0, a, &w2.t(), 0.0, &mut z);
        z += &b2;
        z
    }
}

/// Uniform `±√(6/(fan_in + fan_out))`.
pub(crate) fn glorot(out: usize, inp: usize, rng: &mut StreamRng, dst: &mut [f64]) {
    let limit = (6.0 / (out + inp) as f64).sqrt();
    dst.iter_mut().for_each(|x| *x = rng.random_range(-limit..limit));
}

impl Model for Mlp {
    fn layout(&self) -> &Layout {
        &self.layout
    }

    fn classes(&self) -> usize {
        self.classes
    }

    fn input_width(&self) -> usize {
        self.input
    }

    fn loss_grad(&self, theta: &[f64], x: ArrayView2<'_, f64>, y: &[u8], grad: Option<&mut [f64]>) -> f64 {
        let h = self.hidden_pre(theta, x);
        let a = h.mapv(|v| v.max(0.0));
        let mut z = self.output(theta, &a);
        let loss = softmax_xent(&mut z, y);
        let Some(grad) = grad else {
            return loss;
        };
        // z now holds dL/dz.
        let seg = self.layout.segments().to_vec();
        let (_, _, w2, _) = self.views(theta);
        let mut da = Array2::zeros((x.nrows(), self.hidden));
        general_mat_mul(1.0, &z, &w2, 0.0, &mut da);
        Zip::from(&mut da).and(&h).for_each(|d, &pre| {
            if pre <= 0.0 {
                *d = 0.0;
            }
        });
        {
            let mut gw2 = weight_view_mut(grad, &seg[2]);
            general_mat_mul(1.0, &z.t(), &a, 0.0, &mut gw2);
        }
        for (dst, v) in grad[seg[3].range()].iter_mut().zip(z.sum_axis(Axis(0))) {
            *dst = v;
        }
        {
            let mut gw1 = weight_view_mut(grad, &seg[0]);
            general_mat_mul(1.0, &da.t(), &x, 0.0, &mut gw1);
        }
        for (dst, v) in grad[seg[1].range()].iter_mut().zip(da.sum_axis(Axis(0))) {
            *dst = v;
        }
        loss
    }

    fn logits(&self, theta: &[f64], x: ArrayView2<'_, f64>) -> Array2<f64> {
        let a = self.hidden_pre(theta, x).mapv(|v| v.max(0.0));
        self.output(theta, &a)
    }

    fn init(&self, rng: &mut StreamRng) -> Vec<f64> {
        let mut theta = vec![0.0; self.layout.dim()];
        for seg in self.layout.segments() {
            if let SegmentKind::Weight { out, inp } = seg.kind {
                glorot(out, inp, rng, &mut theta[seg.range()]);
            }
        }
        theta
    }
}
