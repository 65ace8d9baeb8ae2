use ndarray::{Array1, Array2};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

const OUTPUT_BIAS_INIT: f64 = 0.1;

/// Architecture and loss hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyper {
    /// History length `e`; also the input feature width.
    pub history: usize,
    /// Number of stacked applications used at inference time.
    pub stacks: usize,
    /// Weight of the relative influence error in the loss.
    pub lambda: f64,
    /// Feature widths `d_0 = e, d_1, ..., d_l = 1`.
    pub dims: Vec<usize>,
}

impl Hyper {
    /// `layers` graph convolutions with `hidden` units between the input and the scalar output.
    pub fn new(history: usize, layers: usize, hidden: usize, stacks: usize, lambda: f64) -> Self {
        let mut dims = vec![history];
        dims.extend(std::iter::repeat_n(hidden, layers.saturating_sub(1)));
        dims.push(1);
        Hyper {
            history,
            stacks,
            lambda,
            dims,
        }
    }

    pub fn layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.history < 2 {
            return Err(Error::InvalidParameter(format!("history length must be >= 2, got {}", self.history)));
        }
        if self.dims.len() < 2 || self.dims[0] != self.history || *self.dims.last().unwrap() != 1 {
            return Err(Error::Dimension(format!(
                "dims {:?} must start at e = {} and end at 1",
                self.dims, self.history
            )));
        }
        if self.dims.contains(&0) {
            return Err(Error::Dimension("zero-width layer".into()));
        }
        if self.stacks == 0 {
            return Err(Error::InvalidParameter("stack count must be >= 1".into()));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper::new(4, 3, 16, 3, 0.3)
    }
}

/// One graph convolution: `w1: d x d`, `b1: d`, `w2: 2d x d'`, `b2: d'`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl LayerParams {
    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        LayerParams {
            w1: Array2::zeros((d_in, d_in)),
            b1: Array1::zeros(d_in),
            w2: Array2::zeros((2 * d_in, d_out)),
            b2: Array1::zeros(d_out),
        }
    }

    pub fn d_in(&self) -> usize {
        self.w1.nrows()
    }

    pub fn d_out(&self) -> usize {
        self.w2.ncols()
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2)
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub hyper: Hyper,
    pub layers: Vec<LayerParams>,
}

impl ModelParams {
    pub fn zeros(hyper: Hyper) -> Result<Self> {
        hyper.validate()?;
        let layers = hyper.dims.windows(2).map(|w| LayerParams::zeros(w[0], w[1])).collect();
        Ok(ModelParams { hyper, layers })
    }

    /// Uniform initialization in `[-sqrt(1/fan_in), sqrt(1/fan_in)]`, except the
    /// output bias, which starts at a small positive constant.
    pub fn init(hyper: Hyper, seed: u64) -> Result<Self> {
        let mut params = Self::zeros(hyper)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut params.layers {
            let d = layer.d_in();
            let bound1 = (1.0 / d as f64).sqrt();
            let bound2 = (1.0 / (2 * d) as f64).sqrt();
            let u1 = Uniform::new_inclusive(-bound1, bound1).expect("finite bound");
            let u2 = Uniform::new_inclusive(-bound2, bound2).expect("finite bound");
            layer.w1.iter_mut().chain(layer.b1.iter_mut()).for_each(|x| *x = u1.sample(&mut rng));
            layer.w2.iter_mut().chain(layer.b2.iter_mut()).for_each(|x| *x = u2.sample(&mut rng));
        }
        // a positive output bias keeps the final ReLU from starting dead
        if let Some(last) = params.layers.last_mut() {
            last.b2.fill(OUTPUT_BIAS_INIT);
        }
        Ok(params)
    }

    /// Same shapes, all zeros; used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        ModelParams {
            hyper: self.hyper.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams::zeros(l.d_in(), l.d_out()))
                .collect(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.values().count()).sum()
    }

    /// All parameters in a fixed order: per layer `w1`, `b1`, `w2`, `b2`, row-major.
    pub fn to_flat(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.values().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::LengthMismatch {
                expected: self.param_count(),
                actual: flat.len(),
            });
        }
        for (dst, &src) in self.layers.iter_mut().flat_map(|l| l.values_mut()).zip(flat) {
            *dst = src;
        }
        Ok(())
    }

    pub(crate) fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.values_mut())
    }

    pub(crate) fn add_assign(&mut self, other: &ModelParams) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w1 += &b.w1;
            a.b1 += &b.b1;
            a.w2 += &b.w2;
            a.b2 += &b.b2;
        }
    }

    pub(crate) fn scale(&mut self, factor: f64) {
        self.values_mut().for_each(|x| *x *= factor);
    }

    /// Error unless `self` has the given history length, layer count and widths.
    pub fn check_compatible(&self, expected: &Hyper) -> Result<()> {
        if self.hyper.history != expected.history || self.hyper.dims != expected.dims {
            return Err(Error::Dimension(format!(
                "model has e = {}, dims {:?}; expected e = {}, dims {:?}",
                self.hyper.history, self.hyper.dims, expected.history, expected.dims
            )));
        }
        Ok(())
    }

    pub(crate) fn validate_shapes(&self) -> Result<()> {
        self.hyper.validate()?;
        if self.layers.len() != self.hyper.layers() {
            return Err(Error::Dimension(format!(
                "{} layers but dims describe {}",
                self.layers.len(),
                self.hyper.layers()
            )));
        }
        for (i, (layer, w)) in self.layers.iter().zip(self.hyper.dims.windows(2)).enumerate() {
            let (d, d_out) = (w[0], w[1]);
            if layer.w1.dim() != (d, d)
                || layer.b1.len() != d
                || layer.w2.dim() != (2 * d, d_out)
                || layer.b2.len() != d_out
            {
                return Err(Error::Dimension(format!("layer {} does not match dims {d} -> {d_out}", i + 1)));
            }
        }
        Ok(())
    }
}
