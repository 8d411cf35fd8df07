use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use super::{softmax_xent, Model};
use crate::params::{weight_view, weight_view_mut, Layout, SegmentKind};
use crate::rng::StreamRng;

/// Multinomial logistic regression. Layout: `[w: classes×input, b: classes]`.
#[derive(Debug, Clone)]
pub struct Logistic {
    input: usize,
    classes: usize,
    layout: Layout,
}

impl Logistic {
    pub fn new(input: usize, classes: usize) -> Self {
        let layout = Layout::new([
            ("w", SegmentKind::Weight { out: classes, inp: input }),
            ("b", SegmentKind::Bias { out: classes }),
        ]);
        Self {
            input,
            classes,
            layout,
        }
    }
}

impl Model for Logistic {
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
        let mut z = self.logits(theta, x);
        let loss = softmax_xent(&mut z, y);
        if let Some(grad) = grad {
            let seg = &self.layout.segments();
            {
                let mut gw = weight_view_mut(grad, &seg[0]);
                general_mat_mul(1.0, &z.t(), &x, 0.0, &mut gw);
            }
            for (dst, v) in grad[seg[1].range()].iter_mut().zip(z.sum_axis(Axis(0))) {
                *dst = v;
            }
        }
        loss
    }

    fn logits(&self, theta: &[f64], x: ArrayView2<'_, f64>) -> Array2<f64> {
        let seg = self.layout.segments();
        let w = weight_view(theta, &seg[0]);
        let b = ArrayView1::from(&theta[seg[1].range()]);
        let mut z = Array2::zeros((x.nrows(), self.classes));
        general_mat_mul(1.0, &x, &w.t(), 0.0, &mut z);
        z += &b;
        z
    }

    fn init(&self, _rng: &mut StreamRng) -> Vec<f64> {
        vec![0.0; self.layout.dim()]
    }
}
