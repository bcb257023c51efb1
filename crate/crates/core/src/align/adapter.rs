use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Semantic space to representation space.
    Down,
    /// Representation space to semantic space.
    Up,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    LeakyRelu(f64),
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::LeakyRelu(slope) if z < 0.0 => slope * z,
            _ => z,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::LeakyRelu(slope) if z < 0.0 => slope,
            _ => 1.0,
        }
    }
}

/// Two-layer perceptron `W2 · act(W1 · x + b1) + b2` bridging the semantic
/// and representation spaces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdapterNet {
    pub direction: Direction,
    pub activation: Activation,
    /// `hidden x in`
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// `out x hidden`
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// Forward intermediates needed by [`AdapterNet::backward`].
#[derive(Clone, Debug)]
pub struct AdapterCache {
    pub input: Array2<f64>,
    pub pre: Array2<f64>,
    pub hidden: Array2<f64>,
    pub output: Array2<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdapterGrads {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl AdapterGrads {
    pub fn scale(&mut self, c: f64) {
        self.w1 *= c;
        self.b1 *= c;
        self.w2 *= c;
        self.b2 *= c;
    }

    pub fn add_assign(&mut self, other: &AdapterGrads) {
        self.w1 += &other.w1;
        self.b1 += &other.b1;
        self.w2 += &other.w2;
        self.b2 += &other.b2;
    }

    pub fn slices(&self) -> [&[f64]; 4] {
        [
            self.w1.as_slice().unwrap(),
            self.b1.as_slice().unwrap(),
            self.w2.as_slice().unwrap(),
            self.b2.as_slice().unwrap(),
        ]
    }
}

fn standard(m: Array2<f64>) -> Array2<f64> {
    if m.is_standard_layout() {
        m
    } else {
        m.as_standard_layout().into_owned()
    }
}

pub fn hidden_width(d_s: usize, d_out: usize) -> usize {
    ((d_s + d_out) / 2).max(1)
}

impl AdapterNet {
    /// Xavier-uniform weights, zero biases, leaky rectifier.
    /// `d_out` is the backbone representation width.
    pub fn new<R: Rng + ?Sized>(direction: Direction, d_s: usize, d_out: usize, rng: &mut R) -> Self {
        let (din, dout) = match direction {
            Direction::Down => (d_s, d_out),
            Direction::Up => (d_out, d_s),
        };
        let h = hidden_width(d_s, d_out);
        let mut xavier = |rows: usize, cols: usize| {
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-limit..=limit))
        };
        let w1 = xavier(h, din);
        let w2 = xavier(dout, h);
        Self {
            direction,
            activation: Activation::LeakyRelu(LEAKY_SLOPE),
            w1,
            b1: Array1::zeros(h),
            w2,
            b2: Array1::zeros(dout),
        }
    }

    pub fn zeros(direction: Direction, d_s: usize, d_out: usize) -> Self {
        let (din, dout) = match direction {
            Direction::Down => (d_s, d_out),
            Direction::Up => (d_out, d_s),
        };
        let h = hidden_width(d_s, d_out);
        Self {
            direction,
            activation: Activation::LeakyRelu(LEAKY_SLOPE),
            w1: Array2::zeros((h, din)),
            b1: Array1::zeros(h),
            w2: Array2::zeros((dout, h)),
            b2: Array1::zeros(dout),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.w2.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    /// Row-batched forward pass over `input` (`n x in`).
    pub fn forward(&self, input: ArrayView2<'_, f64>) -> AdapterCache {
        assert_eq!(input.ncols(), self.in_dim(), "adapter input width mismatch");
        let pre = input.dot(&self.w1.t()) + &self.b1;
        let act = self.activation;
        let hidden = pre.mapv(|z| act.apply(z));
        let output = hidden.dot(&self.w2.t()) + &self.b2;
        AdapterCache {
            input: input.to_owned(),
            pre,
            hidden,
            output,
        }
    }

    pub fn apply(&self, input: ArrayView2<'_, f64>) -> Array2<f64> {
        self.forward(input).output
    }

    /// Parameter gradients and input gradient given `dL/d output`.
    pub fn backward(&self, cache: &AdapterCache, grad_out: ArrayView2<'_, f64>) -> (AdapterGrads, Array2<f64>) {
        // products of transposed views may come back column-major
        let w2 = standard(grad_out.t().dot(&cache.hidden));
        let b2 = grad_out.sum_axis(Axis(0));
        let act = self.activation;
        let mut grad_pre = grad_out.dot(&self.w2);
        ndarray::Zip::from(&mut grad_pre)
            .and(&cache.pre)
            .for_each(|g, &z| *g *= act.derivative(z));
        let w1 = standard(grad_pre.t().dot(&cache.input));
        let b1 = grad_pre.sum_axis(Axis(0));
        let grad_in = grad_pre.dot(&self.w1);
        (AdapterGrads { w1, b1, w2, b2 }, grad_in)
    }

    pub fn zero_grads(&self) -> AdapterGrads {
        AdapterGrads {
            w1: Array2::zeros(self.w1.raw_dim()),
            b1: Array1::zeros(self.b1.raw_dim()),
            w2: Array2::zeros(self.w2.raw_dim()),
            b2: Array1::zeros(self.b2.raw_dim()),
        }
    }

    pub fn params_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.as_slice_mut().unwrap(),
            self.b1.as_slice_mut().unwrap(),
            self.w2.as_slice_mut().unwrap(),
            self.b2.as_slice_mut().unwrap(),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.w1
            .iter()
            .chain(self.b1.iter())
            .chain(self.w2.iter())
            .chain(self.b2.iter())
            .all(|v| v.is_finite())
    }
}
