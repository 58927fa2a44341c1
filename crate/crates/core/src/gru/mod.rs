//! Recurrent embedding network: two stacked GRU layers followed by a fully
//! connected projection of the last hidden state.
//!
//! Gates per step, with `h` the previous state:
//!
//! ```text
//! r = σ(W_r x + U_r h + b_r)
//! z = σ(W_z x + U_z h + b_z)
//! c = tanh(W x + U (r ⊙ h) + b)
//! y = z ⊙ h + (1 - z) ⊙ c
//! ```

mod adamax;
mod backprop;
mod train;

use std::io::{Read, Write};

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::features::FeatureSequence;
use crate::{seed, Error, Result};

pub use adamax::Adamax;
pub use backprop::{center_loss, total_loss, triplet_loss, Triplet};
pub use train::{
    sample_triplets, train, update_centers, ClientCenters, TrainConfig, TrainOutcome, TrainingClient, TrainingSet,
};

const MAGIC: &[u8; 4] = b"GRUM";
const VERSION: u32 = 1;

/// Parameters of one GRU layer. Input matrices are `hidden × input`,
/// recurrent matrices `hidden × hidden`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruLayerParams {
    pub w_reset: Array2<f64>,
    pub w_update: Array2<f64>,
    pub w_cand: Array2<f64>,
    pub u_reset: Array2<f64>,
    pub u_update: Array2<f64>,
    pub u_cand: Array2<f64>,
    pub b_reset: Array1<f64>,
    pub b_update: Array1<f64>,
    pub b_cand: Array1<f64>,
}

impl GruLayerParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let wi = || Array2::zeros((hidden, input));
        let wh = || Array2::zeros((hidden, hidden));
        let b = || Array1::zeros(hidden);
        GruLayerParams {
            w_reset: wi(),
            w_update: wi(),
            w_cand: wi(),
            u_reset: wh(),
            u_update: wh(),
            u_cand: wh(),
            b_reset: b(),
            b_update: b(),
            b_cand: b(),
        }
    }

    /// Matrices uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn init(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(input, hidden);
        for m in [&mut p.w_reset, &mut p.w_update, &mut p.w_cand] {
            fill_uniform(m, input, rng);
        }
        for m in [&mut p.u_reset, &mut p.u_update, &mut p.u_cand] {
            fill_uniform(m, hidden, rng);
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w_reset.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_reset.nrows()
    }

    fn tensors(&self) -> [&[f64]; 9] {
        [
            slice(&self.w_reset),
            slice(&self.w_update),
            slice(&self.w_cand),
            slice(&self.u_reset),
            slice(&self.u_update),
            slice(&self.u_cand),
            slice1(&self.b_reset),
            slice1(&self.b_update),
            slice1(&self.b_cand),
        ]
    }

    fn tensors_mut(&mut self) -> [&mut [f64]; 9] {
        [
            slice_mut(&mut self.w_reset),
            slice_mut(&mut self.w_update),
            slice_mut(&mut self.w_cand),
            slice_mut(&mut self.u_reset),
            slice_mut(&mut self.u_update),
            slice_mut(&mut self.u_cand),
            slice1_mut(&mut self.b_reset),
            slice1_mut(&mut self.b_update),
            slice1_mut(&mut self.b_cand),
        ]
    }
}

fn slice(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("parameters are stored in standard layout")
}

fn slice_mut(a: &mut Array2<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("parameters are stored in standard layout")
}

fn slice1(a: &Array1<f64>) -> &[f64] {
    a.as_slice().expect("parameters are stored in standard layout")
}

fn slice1_mut(a: &mut Array1<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("parameters are stored in standard layout")
}

fn fill_uniform(m: &mut Array2<f64>, fan_in: usize, rng: &mut impl Rng) {
    let s = 1.0 / (fan_in.max(1) as f64).sqrt();
    m.mapv_inplace(|_| rng.random_range(-s..=s));
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Layer sizes of a [`GruModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ModelDims {
    pub input: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub embedding: usize,
}

impl ModelDims {
    /// 128-128-64 network for the given input dimension.
    pub fn standard(input: usize) -> Self {
        ModelDims {
            input,
            hidden1: 128,
            hidden2: 128,
            embedding: 64,
        }
    }
}

/// Embedding network `G`. Also used as the container for its own gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct GruModel {
    pub layer1: GruLayerParams,
    pub layer2: GruLayerParams,
    /// `embedding × hidden2`.
    pub fc_weight: Array2<f64>,
    pub fc_bias: Array1<f64>,
}

impl GruModel {
    pub fn zeros(dims: ModelDims) -> Self {
        GruModel {
            layer1: GruLayerParams::zeros(dims.input, dims.hidden1),
            layer2: GruLayerParams::zeros(dims.hidden1, dims.hidden2),
            fc_weight: Array2::zeros((dims.embedding, dims.hidden2)),
            fc_bias: Array1::zeros(dims.embedding),
        }
    }

    /// Seeded random initialization.
    pub fn init(dims: ModelDims, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let mut fc_weight = Array2::zeros((dims.embedding, dims.hidden2));
        let layer1 = GruLayerParams::init(dims.input, dims.hidden1, &mut rng);
        let layer2 = GruLayerParams::init(dims.hidden1, dims.hidden2, &mut rng);
        fill_uniform(&mut fc_weight, dims.hidden2, &mut rng);
        GruModel {
            layer1,
            layer2,
            fc_weight,
            fc_bias: Array1::zeros(dims.embedding),
        }
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            input: self.layer1.input_dim(),
            hidden1: self.layer1.hidden_dim(),
            hidden2: self.layer2.hidden_dim(),
            embedding: self.fc_weight.nrows(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.dims())
    }

    /// Every parameter tensor in declaration order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(20);
        out.extend(self.layer1.tensors());
        out.extend(self.layer2.tensors());
        out.push(slice(&self.fc_weight));
        out.push(slice1(&self.fc_bias));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(20);
        out.extend(self.layer1.tensors_mut());
        out.extend(self.layer2.tensors_mut());
        out.push(slice_mut(&mut self.fc_weight));
        out.push(slice1_mut(&mut self.fc_bias));
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// All parameters concatenated in declaration order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn assign_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                found: values.len(),
            });
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&values[offset..offset + t.len()]);
            offset += t.len();
        }
        Ok(())
    }

    /// `self += other`, tensor by tensor.
    pub fn accumulate(&mut self, other: &GruModel) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        let d = self.dims();
        w.write_all(MAGIC)?;
        for v in [
            VERSION,
            d.input as u32,
            d.hidden1 as u32,
            d.hidden2 as u32,
            d.embedding as u32,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        for t in self.tensors() {
            for v in t {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    /// Reads a model, rejecting it when `expected_input` is given and differs
    /// from the stored input dimension.
    pub fn read_from(mut r: impl Read, expected_input: Option<usize>) -> Result<Self> {
        let truncated = |e: std::io::Error| Error::Format(format!("truncated model: {e}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic, expected GRUM".into()));
        }
        let mut header = [0u32; 5];
        for h in &mut header {
            let mut b = [0u8; 4];
            r.read_exact(&mut b).map_err(truncated)?;
            *h = u32::from_le_bytes(b);
        }
        let [version, input, hidden1, hidden2, embedding] = header.map(|v| v as usize);
        if version != VERSION as usize {
            return Err(Error::Format(format!("unsupported model version {version}")));
        }
        if let Some(expected) = expected_input {
            if expected != input {
                return Err(Error::DimensionMismatch { expected, found: input });
            }
        }
        if [input, hidden1, hidden2, embedding].contains(&0) {
            return Err(Error::Format("zero model dimension".into()));
        }
        let mut model = GruModel::zeros(ModelDims {
            input,
            hidden1,
            hidden2,
            embedding,
        });
        let mut b = [0u8; 8];
        for t in model.tensors_mut() {
            for v in t.iter_mut() {
                r.read_exact(&mut b).map_err(truncated)?;
                *v = f64::from_le_bytes(b);
            }
        }
        if !model.is_finite() {
            return Err(Error::NonFinite("model parameter".into()));
        }
        Ok(model)
    }
}

/// `out += m x` for a row-major `m`.
pub(crate) fn matvec_add(out: &mut [f64], m: &Array2<f64>, x: &[f64]) {
    let cols = x.len();
    for (o, row) in out.iter_mut().zip(slice(m).chunks_exact(cols)) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += mᵀ v` for a row-major `m`.
pub(crate) fn matvec_t_add(out: &mut [f64], m: &Array2<f64>, v: &[f64]) {
    for (row, &vi) in slice(m).chunks_exact(out.len()).zip(v) {
        if vi != 0.0 {
            for (o, a) in out.iter_mut().zip(row) {
                *o += vi * a;
            }
        }
    }
}

/// `m += a bᵀ`.
pub(crate) fn outer_add(m: &mut Array2<f64>, a: &[f64], b: &[f64]) {
    for (row, &ai) in slice_mut(m).chunks_exact_mut(b.len()).zip(a) {
        if ai != 0.0 {
            for (r, bj) in row.iter_mut().zip(b) {
                *r += ai * bj;
            }
        }
    }
}

/// Gate activations of one step, written into caller-owned buffers.
struct Gates<'a> {
    reset: &'a mut [f64],
    update: &'a mut [f64],
    cand: &'a mut [f64],
    scratch: &'a mut [f64],
}

fn cell(layer: &GruLayerParams, x: &[f64], h: &[f64], g: Gates<'_>, y: &mut [f64]) {
    g.reset.copy_from_slice(slice1(&layer.b_reset));
    matvec_add(g.reset, &layer.w_reset, x);
    matvec_add(g.reset, &layer.u_reset, h);
    g.reset.iter_mut().for_each(|v| *v = sigmoid(*v));

    g.update.copy_from_slice(slice1(&layer.b_update));
    matvec_add(g.update, &layer.w_update, x);
    matvec_add(g.update, &layer.u_update, h);
    g.update.iter_mut().for_each(|v| *v = sigmoid(*v));

    for ((s, r), hv) in g.scratch.iter_mut().zip(&*g.reset).zip(h) {
        *s = r * hv;
    }
    g.cand.copy_from_slice(slice1(&layer.b_cand));
    matvec_add(g.cand, &layer.w_cand, x);
    matvec_add(g.cand, &layer.u_cand, g.scratch);
    g.cand.iter_mut().for_each(|v| *v = v.tanh());

    for (i, yv) in y.iter_mut().enumerate() {
        *yv = g.update[i] * h[i] + (1.0 - g.update[i]) * g.cand[i];
    }
}

/// Activations recorded by a forward pass, enough to run it backwards.
/// Every field is row-major with one row per step.
#[derive(Debug, Clone)]
pub(crate) struct LayerTrace {
    pub steps: usize,
    pub hidden: usize,
    pub input_dim: usize,
    pub inputs: Vec<f64>,
    /// Row 0 is the initial state, row `t + 1` the output at step `t`.
    pub states: Vec<f64>,
    pub reset: Vec<f64>,
    pub update: Vec<f64>,
    pub cand: Vec<f64>,
}

impl LayerTrace {
    pub fn input(&self, t: usize) -> &[f64] {
        &self.inputs[t * self.input_dim..(t + 1) * self.input_dim]
    }

    /// State before step `t`; `state(steps)` is the final output.
    pub fn state(&self, t: usize) -> &[f64] {
        &self.states[t * self.hidden..(t + 1) * self.hidden]
    }

    pub fn row<'a>(&self, field: &'a [f64], t: usize) -> &'a [f64] {
        &field[t * self.hidden..(t + 1) * self.hidden]
    }

    /// Outputs of every step, row-major.
    pub fn outputs(&self) -> &[f64] {
        &self.states[self.hidden..]
    }
}

pub(crate) fn forward_traced(layer: &GruLayerParams, inputs: Vec<f64>, y0: &[f64]) -> LayerTrace {
    let (hd, id) = (layer.hidden_dim(), layer.input_dim());
    let steps = inputs.len() / id;
    let mut states = vec![0.0; (steps + 1) * hd];
    states[..hd].copy_from_slice(y0);
    let mut reset = vec![0.0; steps * hd];
    let mut update = vec![0.0; steps * hd];
    let mut cand = vec![0.0; steps * hd];
    let mut scratch = vec![0.0; hd];
    for t in 0..steps {
        let (prev, next) = states.split_at_mut((t + 1) * hd);
        let rows = t * hd..(t + 1) * hd;
        let gates = Gates {
            reset: &mut reset[rows.clone()],
            update: &mut update[rows.clone()],
            cand: &mut cand[rows],
            scratch: &mut scratch,
        };
        cell(
            layer,
            &inputs[t * id..(t + 1) * id],
            &prev[t * hd..],
            gates,
            &mut next[..hd],
        );
    }
    LayerTrace {
        steps,
        hidden: hd,
        input_dim: id,
        inputs,
        states,
        reset,
        update,
        cand,
    }
}

fn check_inputs(inputs: &[Array1<f64>], dim: usize) -> Result<()> {
    for x in inputs {
        if x.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("GRU input".into()));
        }
    }
    Ok(())
}

/// Runs one layer over `inputs` from state `y0`; returns the states after each step.
pub fn gru_forward(layer: &GruLayerParams, inputs: &[Array1<f64>], y0: &Array1<f64>) -> Result<Vec<Array1<f64>>> {
    check_inputs(inputs, layer.input_dim())?;
    if y0.len() != layer.hidden_dim() {
        return Err(Error::DimensionMismatch {
            expected: layer.hidden_dim(),
            found: y0.len(),
        });
    }
    let flat: Vec<f64> = inputs.iter().flatten().copied().collect();
    let trace = forward_traced(layer, flat, &y0.to_vec());
    Ok(trace
        .outputs()
        .chunks_exact(trace.hidden)
        .map(|s| Array1::from(s.to_vec()))
        .collect())
}

fn check_sequence(model: &GruModel, features: &FeatureSequence) -> Result<()> {
    if features.dim() != model.layer1.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.layer1.input_dim(),
            found: features.dim(),
        });
    }
    if features.is_empty() {
        return Err(Error::InvalidArgument("cannot embed an empty sequence".into()));
    }
    if features.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("GRU input".into()));
    }
    Ok(())
}

/// Both layer traces of a full forward pass plus the embedding.
pub(crate) struct ModelTrace {
    pub layer1: LayerTrace,
    pub layer2: LayerTrace,
    pub embedding: Array1<f64>,
}

fn project(model: &GruModel, last: &[f64]) -> Array1<f64> {
    let mut out = model.fc_bias.clone();
    matvec_add(slice1_mut(&mut out), &model.fc_weight, last);
    out
}

pub(crate) fn model_forward(model: &GruModel, features: &FeatureSequence) -> Result<ModelTrace> {
    check_sequence(model, features)?;
    let dims = model.dims();
    let layer1 = forward_traced(&model.layer1, features.as_slice().to_vec(), &vec![0.0; dims.hidden1]);
    let layer2 = forward_traced(&model.layer2, layer1.outputs().to_vec(), &vec![0.0; dims.hidden2]);
    let embedding = project(model, layer2.state(layer2.steps));
    Ok(ModelTrace {
        layer1,
        layer2,
        embedding,
    })
}

/// One step in place: `h` becomes the next state.
fn advance(layer: &GruLayerParams, x: &[f64], h: &mut [f64], next: &mut [f64], buf: &mut [f64]) {
    let hd = h.len();
    let (reset, rest) = buf.split_at_mut(hd);
    let (update, rest) = rest.split_at_mut(hd);
    let (cand, rest) = rest.split_at_mut(hd);
    let gates = Gates {
        reset,
        update,
        cand,
        scratch: &mut rest[..hd],
    };
    cell(layer, x, h, gates, next);
    h.copy_from_slice(next);
}

/// Embedding of a feature sequence: the projection of the second layer's
/// final hidden state.
pub fn embed(model: &GruModel, features: &FeatureSequence) -> Result<Array1<f64>> {
    check_sequence(model, features)?;
    let dims = model.dims();
    let mut h1 = vec![0.0; dims.hidden1];
    let mut h2 = vec![0.0; dims.hidden2];
    let mut next1 = h1.clone();
    let mut next2 = h2.clone();
    let width = dims.hidden1.max(dims.hidden2);
    let mut buf = vec![0.0; 4 * width];
    for x in features.rows() {
        advance(&model.layer1, x, &mut h1, &mut next1, &mut buf);
        advance(&model.layer2, &h1, &mut h2, &mut next2, &mut buf);
    }
    Ok(project(model, &h2))
}

pub fn euclidean(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    (a - b).mapv(|v| v * v).sum().sqrt()
}
