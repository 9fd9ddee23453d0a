//! Compact tanh MLPs with exact reverse-mode gradients, and the seven feature
//! networks that make up the model parameters.
//!
//! Weights are stored row-major as `out × in`. Hidden layers use `tanh`; the
//! output layer is linear.

use std::io::{Read, Write};

use rand::Rng;

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    in_dim: usize,
    out_dim: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    pub fn from_parts(
        in_dim: usize,
        out_dim: usize,
        weight: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        check_len("dense weight", in_dim * out_dim, weight.len())?;
        check_len("dense bias", out_dim, bias.len())?;
        if weight.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite parameter".into()));
        }
        Ok(Self {
            in_dim,
            out_dim,
            weight,
            bias,
        })
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weight = (0..in_dim * out_dim)
            .map(|_| rng.gen_range(-limit..=limit))
            .collect();
        Self {
            in_dim,
            out_dim,
            weight,
            bias: vec![0.0; out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.weight
            .chunks_exact(self.in_dim.max(1))
            .take(self.out_dim)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Parameter gradients of one [`Mlp`], laid out exactly like its layers.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGrads {
    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .flat_map(|v| v.iter_mut())
            .for_each(|x| *x *= c);
    }

    /// Flattened in parameter order: per layer, weight then bias.
    pub fn flatten(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b))
            .copied()
            .collect()
    }
}

impl Mlp {
    /// Builds a network from layer widths `[input, hidden..., output]`.
    pub fn new<R: Rng>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        Self::check_sizes(sizes)?;
        Ok(Self {
            layers: sizes
                .windows(2)
                .map(|w| Dense::glorot(w[0], w[1], rng))
                .collect(),
        })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        Self::check_sizes(sizes)?;
        Ok(Self {
            layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Argument("an MLP needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            check_len("layer chain", pair[0].out_dim, pair[1].in_dim)?;
        }
        Ok(Self { layers })
    }

    fn check_sizes(sizes: &[usize]) -> Result<()> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Argument(format!("invalid layer sizes {sizes:?}")));
        }
        Ok(())
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.out_dim))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("mlp input", self.input_dim(), x.len())?;
        let acts = self.activations(x);
        Ok(acts.into_iter().next_back().unwrap_or_default())
    }

    // acts[0] = x, acts[k] = output of layer k-1 (tanh applied for hidden layers)
    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for (k, layer) in self.layers.iter().enumerate() {
            let mut h = layer.apply(&acts[k]);
            if k < last {
                h.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(h);
        }
        acts
    }

    /// Gradients of `<grad_out, forward(x)>` with respect to every parameter and to `x`.
    pub fn backward(&self, x: &[f64], grad_out: &[f64]) -> Result<(MlpGrads, Vec<f64>)> {
        let mut grads = self.zero_grads();
        let gx = self.backward_into(x, grad_out, &mut grads)?;
        Ok((grads, gx))
    }

    /// Like [`Mlp::backward`] but accumulates parameter gradients into `grads`.
    pub fn backward_into(
        &self,
        x: &[f64],
        grad_out: &[f64],
        grads: &mut MlpGrads,
    ) -> Result<Vec<f64>> {
        check_len("mlp input", self.input_dim(), x.len())?;
        check_len("mlp grad_out", self.output_dim(), grad_out.len())?;
        let acts = self.activations(x);
        let last = self.layers.len() - 1;
        let mut delta = grad_out.to_vec();
        for k in (0..self.layers.len()).rev() {
            if k < last {
                // derivative of tanh at the stored activation
                for (d, a) in delta.iter_mut().zip(&acts[k + 1]) {
                    *d *= 1.0 - a * a;
                }
            }
            let layer = &self.layers[k];
            let input = &acts[k];
            let gw = &mut grads.weights[k];
            for (r, &d) in delta.iter().enumerate() {
                grads.biases[k][r] += d;
                if d != 0.0 {
                    let row = &mut gw[r * layer.in_dim..(r + 1) * layer.in_dim];
                    row.iter_mut().zip(input).for_each(|(g, v)| *g += d * v);
                }
            }
            let mut prev = vec![0.0; layer.in_dim];
            for (r, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    let row = &layer.weight[r * layer.in_dim..(r + 1) * layer.in_dim];
                    prev.iter_mut().zip(row).for_each(|(p, w)| *p += d * w);
                }
            }
            delta = prev;
        }
        Ok(delta)
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            weights: self
                .layers
                .iter()
                .map(|l| vec![0.0; l.weight.len()])
                .collect(),
            biases: self
                .layers
                .iter()
                .map(|l| vec![0.0; l.bias.len()])
                .collect(),
        }
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(&l.bias))
            .copied()
            .collect()
    }

    pub fn set_flat_params(&mut self, p: &[f64]) -> Result<()> {
        check_len("mlp flat params", self.num_params(), p.len())?;
        let mut it = p.iter().copied();
        for l in &mut self.layers {
            l.weight.iter_mut().chain(l.bias.iter_mut()).for_each(|w| {
                *w = it.next().unwrap_or_default();
            });
        }
        Ok(())
    }

    fn apply_update(&mut self, g: &MlpGrads, alpha: f64) {
        for (k, l) in self.layers.iter_mut().enumerate() {
            l.weight
                .iter_mut()
                .zip(&g.weights[k])
                .for_each(|(w, d)| *w -= alpha * d);
            l.bias
                .iter_mut()
                .zip(&g.biases[k])
                .for_each(|(w, d)| *w -= alpha * d);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(&l.bias).all(|v| v.is_finite()))
    }
}

/// Names of the seven feature networks, in storage order.
pub const NET_NAMES: [&str; 7] = ["h_o", "h_p", "g_op", "g_oo", "g_og", "g_po", "g_pg"];

macro_rules! seven {
    ($name:ident, $ty:ty) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            pub h_o: $ty,
            pub h_p: $ty,
            pub g_op: $ty,
            pub g_oo: $ty,
            pub g_og: $ty,
            pub g_po: $ty,
            pub g_pg: $ty,
        }

        impl $name {
            pub fn as_array(&self) -> [&$ty; 7] {
                [
                    &self.h_o, &self.h_p, &self.g_op, &self.g_oo, &self.g_og, &self.g_po,
                    &self.g_pg,
                ]
            }

            pub fn as_array_mut(&mut self) -> [&mut $ty; 7] {
                [
                    &mut self.h_o,
                    &mut self.h_p,
                    &mut self.g_op,
                    &mut self.g_oo,
                    &mut self.g_og,
                    &mut self.g_po,
                    &mut self.g_pg,
                ]
            }
        }
    };
}

seven!(ThetaParams, Mlp);
seven!(ThetaGrads, MlpGrads);

impl ThetaParams {
    /// Randomly initialised parameters. `hidden` lists hidden-layer widths and
    /// may be empty for purely affine feature functions.
    pub fn init<R: Rng>(
        d: usize,
        v_o: usize,
        v_p: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        let sizes = |input: usize, out: usize| -> Vec<usize> {
            std::iter::once(input)
                .chain(hidden.iter().copied())
                .chain([out])
                .collect()
        };
        Ok(Self {
            h_o: Mlp::new(&sizes(d, v_o), rng)?,
            h_p: Mlp::new(&sizes(d, v_p), rng)?,
            g_op: Mlp::new(&sizes(2 * d, v_o), rng)?,
            g_oo: Mlp::new(&sizes(2 * d, v_o), rng)?,
            g_og: Mlp::new(&sizes(2 * d, v_o), rng)?,
            g_po: Mlp::new(&sizes(2 * d, v_p), rng)?,
            g_pg: Mlp::new(&sizes(2 * d, v_p), rng)?,
        })
    }

    pub fn zeros(d: usize, v_o: usize, v_p: usize, hidden: &[usize]) -> Result<Self> {
        let sizes = |input: usize, out: usize| -> Vec<usize> {
            std::iter::once(input)
                .chain(hidden.iter().copied())
                .chain([out])
                .collect()
        };
        Ok(Self {
            h_o: Mlp::zeros(&sizes(d, v_o))?,
            h_p: Mlp::zeros(&sizes(d, v_p))?,
            g_op: Mlp::zeros(&sizes(2 * d, v_o))?,
            g_oo: Mlp::zeros(&sizes(2 * d, v_o))?,
            g_og: Mlp::zeros(&sizes(2 * d, v_o))?,
            g_po: Mlp::zeros(&sizes(2 * d, v_p))?,
            g_pg: Mlp::zeros(&sizes(2 * d, v_p))?,
        })
    }

    /// Checks the output and input widths implied by `(d, v_o, v_p)`.
    pub fn validate(&self, d: usize, v_o: usize, v_p: usize) -> Result<()> {
        let expect = [
            (d, v_o),
            (d, v_p),
            (2 * d, v_o),
            (2 * d, v_o),
            (2 * d, v_o),
            (2 * d, v_p),
            (2 * d, v_p),
        ];
        for (net, (i, o)) in self.as_array().into_iter().zip(expect) {
            check_len("network input width", i, net.input_dim())?;
            check_len("network output width", o, net.output_dim())?;
        }
        Ok(())
    }

    pub fn zero_grads(&self) -> ThetaGrads {
        let [a, b, c, d, e, f, g] = self.as_array().map(Mlp::zero_grads);
        ThetaGrads {
            h_o: a,
            h_p: b,
            g_op: c,
            g_oo: d,
            g_og: e,
            g_po: f,
            g_pg: g,
        }
    }

    pub fn num_params(&self) -> usize {
        self.as_array().iter().map(|n| n.num_params()).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.as_array()
            .iter()
            .flat_map(|n| n.flat_params())
            .collect()
    }

    pub fn set_flat_params(&mut self, p: &[f64]) -> Result<()> {
        check_len("theta flat params", self.num_params(), p.len())?;
        let mut offset = 0;
        for net in self.as_array_mut() {
            let k = net.num_params();
            net.set_flat_params(&p[offset..offset + k])?;
            offset += k;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|n| n.is_finite())
    }
}

impl ThetaGrads {
    pub fn add_assign(&mut self, other: &ThetaGrads) {
        for (a, b) in self.as_array_mut().into_iter().zip(other.as_array()) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.as_array_mut().into_iter().for_each(|g| g.scale(c));
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.as_array().iter().flat_map(|g| g.flatten()).collect()
    }

    pub fn norm(&self) -> f64 {
        self.flatten().iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Plain gradient step `p ← p − α·g` on every parameter.
pub fn sgd_step(params: &mut ThetaParams, grads: &ThetaGrads, alpha: f64) {
    for (net, g) in params.as_array_mut().into_iter().zip(grads.as_array()) {
        net.apply_update(g, alpha);
    }
}

// Checkpoint format (all integers little-endian):
//
//   magic    8 bytes  "IWSLCKPT"
//   version  u32      1
//   count    u32      number of tensors
//   per tensor:
//     name_len u32, name UTF-8 bytes
//     rank     u32, rank × u64 dims
//     payload  prod(dims) × f64 LE, row-major (rank 0 holds one value)
//
// Network tensors are named "<net>.<layer>.weight" (shape [out, in]) and
// "<net>.<layer>.bias" (shape [out]); extra scalars such as "tau" have rank 0.

const MAGIC: &[u8; 8] = b"IWSLCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// A parameter checkpoint: the seven networks plus named scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub theta: ThetaParams,
    pub scalars: Vec<(String, f64)>,
}

impl Checkpoint {
    pub fn scalar(&self, name: &str) -> Option<f64> {
        self.scalars
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }

    fn tensors(&self) -> Vec<Tensor> {
        let mut out = Vec::new();
        for (name, net) in NET_NAMES.iter().zip(self.theta.as_array()) {
            for (k, l) in net.layers.iter().enumerate() {
                out.push(Tensor {
                    name: format!("{name}.{k}.weight"),
                    shape: vec![l.out_dim, l.in_dim],
                    data: l.weight.clone(),
                });
                out.push(Tensor {
                    name: format!("{name}.{k}.bias"),
                    shape: vec![l.out_dim],
                    data: l.bias.clone(),
                });
            }
        }
        for (name, v) in &self.scalars {
            out.push(Tensor {
                name: name.clone(),
                shape: vec![],
                data: vec![*v],
            });
        }
        out
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let tensors = self.tensors();
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(tensors.len() as u32).to_le_bytes())?;
        for t in &tensors {
            w.write_all(&(t.name.len() as u32).to_le_bytes())?;
            w.write_all(t.name.as_bytes())?;
            w.write_all(&(t.shape.len() as u32).to_le_bytes())?;
            for &d in &t.shape {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for &v in &t.data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a checkpoint file".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let count = read_u32(&mut r)? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let len = read_u32(&mut r)? as usize;
            let mut name = vec![0u8; len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|e| Error::Format(e.to_string()))?;
            let rank = read_u32(&mut r)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                shape.push(u64::from_le_bytes(b) as usize);
            }
            let numel: usize = shape.iter().product();
            let mut data = Vec::with_capacity(numel);
            for _ in 0..numel {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                data.push(f64::from_le_bytes(b));
            }
            tensors.push(Tensor { name, shape, data });
        }
        Self::from_tensors(tensors)
    }

    fn from_tensors(tensors: Vec<Tensor>) -> Result<Self> {
        let mut nets: Vec<Vec<Dense>> = vec![Vec::new(); 7];
        let mut scalars = Vec::new();
        let mut iter = tensors.into_iter().peekable();
        while let Some(t) = iter.next() {
            let parts: Vec<&str> = t.name.split('.').collect();
            match parts.as_slice() {
                [net, layer, "weight"] => {
                    let idx = NET_NAMES
                        .iter()
                        .position(|n| n == net)
                        .ok_or_else(|| Error::Format(format!("unknown network {net}")))?;
                    let layer: usize = layer
                        .parse()
                        .map_err(|_| Error::Format(format!("bad layer index in {}", t.name)))?;
                    if layer != nets[idx].len() || t.shape.len() != 2 {
                        return Err(Error::Format(format!("unexpected tensor {}", t.name)));
                    }
                    let bias = iter
                        .next()
                        .filter(|b| {
                            b.name == format!("{net}.{layer}.bias") && b.shape == [t.shape[0]]
                        })
                        .ok_or_else(|| Error::Format(format!("missing bias after {}", t.name)))?;
                    nets[idx].push(Dense::from_parts(
                        t.shape[1], t.shape[0], t.data, bias.data,
                    )?);
                }
                [_] if t.shape.is_empty() => scalars.push((t.name, t.data[0])),
                _ => return Err(Error::Format(format!("unexpected tensor {}", t.name))),
            }
        }
        let mut built = nets.into_iter().map(Mlp::from_layers);
        let mut next = || {
            built
                .next()
                .unwrap_or_else(|| Err(Error::Format("missing network".into())))
        };
        let theta = ThetaParams {
            h_o: next()?,
            h_p: next()?,
            g_op: next()?,
            g_oo: next()?,
            g_og: next()?,
            g_po: next()?,
            g_pg: next()?,
        };
        Ok(Self { theta, scalars })
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
