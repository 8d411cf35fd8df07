//! Flat parameter vectors and the layout that maps them onto layers.

use ndarray::{ArrayView2, ArrayViewMut2};

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    /// Row-major `out × in` weight matrix.
    Weight { out: usize, inp: usize },
    Bias { out: usize },
    /// Unstructured block (synthetic problems, logistic weights treated flat).
    Flat { len: usize },
}

impl SegmentKind {
    pub fn len(&self) -> usize {
        match *self {
            SegmentKind::Weight { out, inp } => out * inp,
            SegmentKind::Bias { out } => out,
            SegmentKind::Flat { len } => len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub name: String,
    pub kind: SegmentKind,
    pub offset: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.kind.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kind.is_empty()
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Ordered segments tiling `[0, d)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    segments: Vec<Segment>,
    dim: usize,
}

impl Layout {
    /// Builds a layout by laying the segments end to end.
    pub fn new<S: Into<String>>(parts: impl IntoIterator<Item = (S, SegmentKind)>) -> Self {
        let mut offset = 0;
        let segments = parts
            .into_iter()
            .map(|(name, kind)| {
                let seg = Segment {
                    name: name.into(),
                    kind,
                    offset,
                };
                offset += kind.len();
                seg
            })
            .collect();
        Self {
            segments,
            dim: offset,
        }
    }

    pub fn flat(d: usize) -> Self {
        Self::new([("theta", SegmentKind::Flat { len: d })])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }

    /// True when the segments are contiguous, non-overlapping and cover `[0, dim)`.
    pub fn tiles(&self) -> bool {
        let mut next = 0;
        for s in &self.segments {
            if s.offset != next {
                return false;
            }
            next += s.len();
        }
        next == self.dim
    }
}

/// Parameters `θ` together with their layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub layout: Layout,
}

impl ParamVector {
    pub fn zeros(layout: Layout) -> Self {
        Self {
            values: vec![0.0; layout.dim()],
            layout,
        }
    }

    pub fn new(values: Vec<f64>, layout: Layout) -> Result<Self> {
        check_len(layout.dim(), values.len())?;
        Ok(Self { values, layout })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.values.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite("parameters"))
        }
    }
}

/// Views a weight segment of `values` as an `out × in` matrix.
pub fn weight_view<'a>(values: &'a [f64], seg: &Segment) -> ArrayView2<'a, f64> {
    match seg.kind {
        SegmentKind::Weight { out, inp } => {
            ArrayView2::from_shape((out, inp), &values[seg.range()]).expect("segment in range")
        }
        _ => panic!("segment {} is not a weight matrix", seg.name),
    }
}

pub fn weight_view_mut<'a>(values: &'a mut [f64], seg: &Segment) -> ArrayViewMut2<'a, f64> {
    match seg.kind {
        SegmentKind::Weight { out, inp } => {
            ArrayViewMut2::from_shape((out, inp), &mut values[seg.range()]).expect("segment in range")
        }
        _ => panic!("segment {} is not a weight matrix", seg.name),
    }
}

/// `y += a·x`.
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += a * xi);
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn dist_sq(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}
