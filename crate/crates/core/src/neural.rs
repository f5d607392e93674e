//! Dense multilayer perceptrons with manual reverse-mode gradients, Adam,
//! soft target updates and multiply-accumulate accounting.
//!
//! Networks are generic over the float type: agents train in `f32`, gradient
//! checks run in `f64`.

use std::fmt::{Debug, Display};
use std::io::{BufRead, Write};
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::Rng;

use crate::error::{Error, Result};

pub trait Real:
    ndarray::LinalgScalar + Float + FromPrimitive + ToPrimitive + Debug + Display + FromStr + Send + Sync + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

fn cast<F: Real>(x: f64) -> F {
    F::from_f64(x).expect("float conversion")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

/// Output transform.
#[derive(Debug, Clone, PartialEq)]
pub enum Head {
    Identity,
    /// `scale[k] * tanh(z_k)`; bounds actor outputs by the action limits.
    Tanh(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<F> {
    /// `in x out`.
    pub w: Array2<F>,
    pub b: Array1<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<F> {
    layers: Vec<Layer<F>>,
    hidden: Activation,
    head: Head,
}

/// Per-parameter gradients, shaped like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<F> {
    pub w: Vec<Array2<F>>,
    pub b: Vec<Array1<F>>,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct Cache<F> {
    inputs: Vec<Array2<F>>,
    pre: Vec<Array2<F>>,
    output: Array2<F>,
}

impl<F> Cache<F> {
    pub fn output(&self) -> &Array2<F> {
        &self.output
    }
}

fn add_bias<F: Real>(z: &mut Array2<F>, b: &Array1<F>) {
    for mut row in z.rows_mut() {
        row.zip_mut_with(b, |a, &c| *a = *a + c);
    }
}

/// Weight multiply-accumulates of one forward pass: `Σ in·out` over layers.
pub fn count_macs(dims: &[usize]) -> u64 {
    dims.windows(2).map(|d| (d[0] * d[1]) as u64).sum()
}

impl<F: Real> Mlp<F> {
    /// Weights and biases drawn from `U(-1/√fan_in, 1/√fan_in)`.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], hidden: Activation, head: Head, rng: &mut R) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::config(format!("bad network dims {dims:?}")));
        }
        if let Head::Tanh(scale) = &head {
            if scale.len() != dims[dims.len() - 1] {
                return Err(Error::Dimension {
                    expected: dims[dims.len() - 1],
                    actual: scale.len(),
                });
            }
        }
        let layers = dims
            .windows(2)
            .map(|d| {
                let bound = 1.0 / (d[0] as f64).sqrt();
                let mut draw = || cast::<F>(rng.random_range(-bound..bound));
                let w = Array2::from_shape_simple_fn((d[0], d[1]), &mut draw);
                let b = Array1::from_shape_simple_fn(d[1], &mut draw);
                Layer { w, b }
            })
            .collect();
        Ok(Mlp { layers, hidden, head })
    }

    pub fn from_layers(layers: Vec<Layer<F>>, hidden: Activation, head: Head) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("network needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].w.ncols() != pair[1].w.nrows() {
                return Err(Error::Dimension {
                    expected: pair[0].w.ncols(),
                    actual: pair[1].w.nrows(),
                });
            }
        }
        for l in &layers {
            if l.b.len() != l.w.ncols() {
                return Err(Error::Dimension {
                    expected: l.w.ncols(),
                    actual: l.b.len(),
                });
            }
        }
        Ok(Mlp { layers, hidden, head })
    }

    pub fn layers(&self) -> &[Layer<F>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<F>] {
        &mut self.layers
    }

    pub fn head(&self) -> &Head {
        &self.head
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].w.nrows()];
        d.extend(self.layers.iter().map(|l| l.w.ncols()));
        d
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].w.ncols()
    }

    pub fn macs(&self) -> u64 {
        count_macs(&self.dims())
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    fn check_input(&self, x: &ArrayView2<F>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                actual: x.ncols(),
            });
        }
        Ok(())
    }

    fn apply_head(&self, z: &Array2<F>) -> Array2<F> {
        match &self.head {
            Head::Identity => z.clone(),
            Head::Tanh(scale) => {
                let mut out = z.mapv(|v| v.tanh());
                for (mut col, &s) in out.axis_iter_mut(Axis(1)).zip(scale) {
                    col.mapv_inplace(|v| v * cast(s));
                }
                out
            }
        }
    }

    /// Batched forward pass; one row per sample.
    pub fn forward(&self, x: ArrayView2<F>) -> Result<Array2<F>> {
        self.check_input(&x)?;
        let last = self.layers.len() - 1;
        let mut h = x.to_owned();
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = h.dot(&l.w);
            add_bias(&mut z, &l.b);
            if i < last && self.hidden == Activation::Relu {
                z.mapv_inplace(|v| v.max(F::zero()));
            }
            h = z;
        }
        Ok(self.apply_head(&h))
    }

    pub fn forward_cached(&self, x: ArrayView2<F>) -> Result<Cache<F>> {
        self.check_input(&x)?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = h.dot(&l.w);
            add_bias(&mut z, &l.b);
            inputs.push(h);
            h = if i < last && self.hidden == Activation::Relu {
                z.mapv(|v| v.max(F::zero()))
            } else {
                z.clone()
            };
            pre.push(z);
        }
        let output = self.apply_head(&h);
        Ok(Cache { inputs, pre, output })
    }

    /// Single-sample forward in `f64`.
    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let row = Array2::from_shape_fn((1, x.len()), |(_, j)| cast::<F>(x[j]));
        let out = self.forward(row.view())?;
        Ok(out.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect())
    }

    /// Reverse pass for `loss = Σ output_grad ⊙ output`. Returns parameter
    /// gradients and the gradient with respect to the input.
    pub fn backward(&self, cache: &Cache<F>, output_grad: ArrayView2<F>) -> Result<(Grads<F>, Array2<F>)> {
        let (grads, input_grad) = self.backward_impl(cache, output_grad, true)?;
        Ok((grads.expect("parameter gradients requested"), input_grad))
    }

    /// Input gradient only; skips the parameter gradient products.
    pub fn input_grad(&self, cache: &Cache<F>, output_grad: ArrayView2<F>) -> Result<Array2<F>> {
        Ok(self.backward_impl(cache, output_grad, false)?.1)
    }

    fn backward_impl(
        &self,
        cache: &Cache<F>,
        output_grad: ArrayView2<F>,
        params: bool,
    ) -> Result<(Option<Grads<F>>, Array2<F>)> {
        if output_grad.dim() != cache.output.dim() {
            return Err(Error::contract(format!(
                "output gradient shape {:?} does not match output {:?}",
                output_grad.dim(),
                cache.output.dim()
            )));
        }
        let n = self.layers.len();
        let mut g = output_grad.to_owned();
        if let Head::Tanh(scale) = &self.head {
            let z = &cache.pre[n - 1];
            for ((mut gc, zc), &s) in g.axis_iter_mut(Axis(1)).zip(z.axis_iter(Axis(1))).zip(scale) {
                Zip::from(&mut gc).and(&zc).for_each(|gv, &zv| {
                    let t = zv.tanh();
                    *gv = *gv * cast::<F>(s) * (F::one() - t * t);
                });
            }
        }
        let mut gw = Vec::with_capacity(if params { n } else { 0 });
        let mut gb = Vec::with_capacity(if params { n } else { 0 });
        for i in (0..n).rev() {
            if params {
                gw.push(cache.inputs[i].t().dot(&g));
                gb.push(g.sum_axis(Axis(0)));
            }
            let mut prev = g.dot(&self.layers[i].w.t());
            if i > 0 && self.hidden == Activation::Relu {
                Zip::from(&mut prev).and(&cache.pre[i - 1]).for_each(|p, &z| {
                    if z <= F::zero() {
                        *p = F::zero();
                    }
                });
            }
            g = prev;
        }
        let grads = params.then(|| {
            gw.reverse();
            gb.reverse();
            Grads { w: gw, b: gb }
        });
        Ok((grads, g))
    }

    /// `self ← (1 - rho) self + rho source`.
    pub fn soft_update(&mut self, source: &Mlp<F>, rho: f64) -> Result<()> {
        if self.dims() != source.dims() {
            return Err(Error::contract("soft update between differently shaped networks"));
        }
        if rho == 1.0 {
            self.layers.clone_from(&source.layers);
            return Ok(());
        }
        let rho: F = cast(rho);
        for (t, s) in self.layers.iter_mut().zip(&source.layers) {
            Zip::from(&mut t.w).and(&s.w).for_each(|a, &b| *a = *a + rho * (b - *a));
            Zip::from(&mut t.b).and(&s.b).for_each(|a, &b| *a = *a + rho * (b - *a));
        }
        Ok(())
    }

    /// Plain-text checkpoint: a header line
    /// `mlp v1 <relu|identity> <identity|tanh s0 s1 ..> dims d0 d1 ..`,
    /// then per layer one line per weight row followed by one bias line.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::io("<checkpoint>", e);
        let hidden = match self.hidden {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        };
        let head = match &self.head {
            Head::Identity => "identity".to_string(),
            Head::Tanh(s) => {
                let vals: Vec<String> = s.iter().map(|v| v.to_string()).collect();
                format!("tanh {}", vals.join(" "))
            }
        };
        let dims: Vec<String> = self.dims().iter().map(|d| d.to_string()).collect();
        writeln!(out, "mlp v1 {hidden} {head} dims {}", dims.join(" ")).map_err(io)?;
        for l in &self.layers {
            for row in l.w.rows() {
                let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                writeln!(out, "{}", vals.join(" ")).map_err(io)?;
            }
            let vals: Vec<String> = l.b.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", vals.join(" ")).map_err(io)?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Parse("checkpoint ended early".into()))?
                .map_err(|e| Error::io("<checkpoint>", e))
        };
        let header = next()?;
        let mut tok = header.split_whitespace();
        if tok.next() != Some("mlp") || tok.next() != Some("v1") {
            return Err(Error::Parse("not an mlp v1 checkpoint".into()));
        }
        let hidden = match tok.next() {
            Some("relu") => Activation::Relu,
            Some("identity") => Activation::Identity,
            other => return Err(Error::Parse(format!("bad activation {other:?}"))),
        };
        let rest: Vec<&str> = tok.collect();
        let dims_at = rest
            .iter()
            .position(|t| *t == "dims")
            .ok_or_else(|| Error::Parse("missing dims".into()))?;
        let head = match rest.first() {
            Some(&"identity") => Head::Identity,
            Some(&"tanh") => Head::Tanh(
                rest[1..dims_at]
                    .iter()
                    .map(|t| t.parse().map_err(|_| Error::Parse(format!("bad scale `{t}`"))))
                    .collect::<Result<_>>()?,
            ),
            other => return Err(Error::Parse(format!("bad head {other:?}"))),
        };
        let dims: Vec<usize> = rest[dims_at + 1..]
            .iter()
            .map(|t| t.parse().map_err(|_| Error::Parse(format!("bad dim `{t}`"))))
            .collect::<Result<_>>()?;
        let parse_row = |line: String, n: usize| -> Result<Vec<F>> {
            let vals: Vec<F> = line
                .split_whitespace()
                .map(|t| t.parse::<F>().map_err(|_| Error::Parse(format!("bad number `{t}`"))))
                .collect::<Result<_>>()?;
            if vals.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    actual: vals.len(),
                });
            }
            Ok(vals)
        };
        let mut layers = Vec::new();
        for d in dims.windows(2) {
            let mut w = Vec::with_capacity(d[0] * d[1]);
            for _ in 0..d[0] {
                w.extend(parse_row(next()?, d[1])?);
            }
            let b = parse_row(next()?, d[1])?;
            layers.push(Layer {
                w: Array2::from_shape_vec((d[0], d[1]), w).map_err(|e| Error::Parse(e.to_string()))?,
                b: Array1::from(b),
            });
        }
        Mlp::from_layers(layers, hidden, head)
    }
}

/// Bias-corrected Adam with β1 = 0.9, β2 = 0.999, ε = 1e-8.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Grads<F>,
    v: Grads<F>,
}

impl<F: Real> Adam<F> {
    pub fn new(net: &Mlp<F>, lr: f64) -> Self {
        let zeros = || Grads {
            w: net.layers.iter().map(|l| Array2::zeros(l.w.raw_dim())).collect(),
            b: net.layers.iter().map(|l| Array1::zeros(l.b.raw_dim())).collect(),
        };
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, net: &mut Mlp<F>, grads: &Grads<F>) -> Result<()> {
        if grads.w.len() != net.layers.len() {
            return Err(Error::Dimension {
                expected: net.layers.len(),
                actual: grads.w.len(),
            });
        }
        self.t += 1;
        let b1: F = cast(self.beta1);
        let b2: F = cast(self.beta2);
        let c1: F = cast(1.0 - self.beta1.powi(self.t as i32));
        let c2: F = cast(1.0 - self.beta2.powi(self.t as i32));
        let lr: F = cast(self.lr);
        let eps: F = cast(self.eps);
        let one = F::one();
        let update = |p: &mut F, m: &mut F, v: &mut F, &g: &F| {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let mh = *m / c1;
            let vh = *v / c2;
            *p = *p - lr * mh / (vh.sqrt() + eps);
        };
        for (i, l) in net.layers.iter_mut().enumerate() {
            if grads.w[i].dim() != l.w.dim() || grads.b[i].dim() != l.b.dim() {
                return Err(Error::contract("gradient shape does not match the network"));
            }
            Zip::from(&mut l.w)
                .and(&mut self.m.w[i])
                .and(&mut self.v.w[i])
                .and(&grads.w[i])
                .for_each(update);
            Zip::from(&mut l.b)
                .and(&mut self.m.b[i])
                .and(&mut self.v.b[i])
                .and(&grads.b[i])
                .for_each(update);
        }
        Ok(())
    }
}
