//! Declarative definition of the TinyDenoiser model family, parameter
//! storage, precision tagging, and the full-precision reference executor
//! used as the numerical oracle.
//!
//! Every variant is FC(257) -> RNN_0 -> RNN_1 -> FC(257) -> FC(257), with
//! BatchNorm+ReLU after the first two FC layers and a Sigmoid on the last.
//! The second RNN's input is the first RNN's output.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ElementFormat, QuantParams, Tensor};

pub const FEATURE_BINS: usize = 257;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    Fc,
    Lstm,
    Gru,
    Convert,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RnnKind {
    Lstm,
    Gru,
}

impl RnnKind {
    pub fn gates(self) -> usize {
        match self {
            RnnKind::Lstm => 4,
            RnnKind::Gru => 3,
        }
    }

    fn layer_kind(self) -> LayerKind {
        match self {
            RnnKind::Lstm => LayerKind::Lstm,
            RnnKind::Gru => LayerKind::Gru,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PostOp {
    BatchNormRelu,
    Sigmoid,
    None,
}

/// Quantization scheme selector for footprint accounting and PTQ plans.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    Fp32,
    Fp16,
    Int8,
    Mix,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Scheme::Fp32 => "fp32",
            Scheme::Fp16 => "fp16",
            Scheme::Int8 => "int8",
            Scheme::Mix => "mix",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Scheme> {
        match s.to_ascii_lowercase().as_str() {
            "fp32" => Ok(Scheme::Fp32),
            "fp16" => Ok(Scheme::Fp16),
            "int8" => Ok(Scheme::Int8),
            "mix" => Ok(Scheme::Mix),
            other => Err(Error::Config(format!("unknown scheme `{other}`"))),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VariantId {
    Lstm256,
    Gru256,
    Lstm128,
    Gru128,
}

impl VariantId {
    pub const ALL: [VariantId; 4] = [
        VariantId::Lstm256,
        VariantId::Gru256,
        VariantId::Lstm128,
        VariantId::Gru128,
    ];

    pub fn rnn_kind(self) -> RnnKind {
        match self {
            VariantId::Lstm256 | VariantId::Lstm128 => RnnKind::Lstm,
            VariantId::Gru256 | VariantId::Gru128 => RnnKind::Gru,
        }
    }

    pub fn hidden(self) -> usize {
        match self {
            VariantId::Lstm256 | VariantId::Gru256 => 256,
            VariantId::Lstm128 | VariantId::Gru128 => 128,
        }
    }
}

impl std::fmt::Display for VariantId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            VariantId::Lstm256 => "lstm256",
            VariantId::Gru256 => "gru256",
            VariantId::Lstm128 => "lstm128",
            VariantId::Gru128 => "gru128",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for VariantId {
    type Err = Error;
    fn from_str(s: &str) -> Result<VariantId> {
        match s.to_ascii_lowercase().as_str() {
            "lstm256" => Ok(VariantId::Lstm256),
            "gru256" => Ok(VariantId::Gru256),
            "lstm128" => Ok(VariantId::Lstm128),
            "gru128" => Ok(VariantId::Gru128),
            other => Err(Error::Config(format!("unknown variant `{other}`"))),
        }
    }
}

/// One node of the inference graph. Convert nodes are dimension-preserving
/// and carry no parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
    pub post: PostOp,
    pub precision: ElementFormat,
}

impl LayerSpec {
    pub fn is_rnn(&self) -> bool {
        matches!(self.kind, LayerKind::Lstm | LayerKind::Gru)
    }

    /// Parameter tensor names owned by this layer.
    pub fn param_names(&self) -> Vec<String> {
        match self.kind {
            LayerKind::Convert => vec![],
            LayerKind::Fc => {
                let mut v = vec![format!("{}.weight", self.name), format!("{}.bias", self.name)];
                if self.post == PostOp::BatchNormRelu {
                    v.push(format!("{}.bn_scale", self.name));
                    v.push(format!("{}.bn_shift", self.name));
                }
                v
            }
            LayerKind::Lstm | LayerKind::Gru => vec![
                format!("{}.weight", self.name),
                format!("{}.bias", self.name),
            ],
        }
    }

    /// Multiply-accumulates per inference for this layer.
    pub fn macs(&self) -> u64 {
        match self.kind {
            LayerKind::Fc => (self.in_dim * self.out_dim) as u64,
            LayerKind::Lstm => (4 * (self.in_dim + self.out_dim) * self.out_dim) as u64,
            LayerKind::Gru => (3 * (self.in_dim + self.out_dim) * self.out_dim) as u64,
            LayerKind::Convert => 0,
        }
    }

    /// Parameter element count: FC = in*out + out (+ 2*out BatchNorm),
    /// LSTM = 4*((in+hid)*hid + hid), GRU = 3*((in+hid)*hid + hid).
    pub fn param_elems(&self) -> u64 {
        match self.kind {
            LayerKind::Fc => {
                let mut n = (self.in_dim * self.out_dim + self.out_dim) as u64;
                if self.post == PostOp::BatchNormRelu {
                    n += 2 * self.out_dim as u64;
                }
                n
            }
            LayerKind::Lstm => (4 * ((self.in_dim + self.out_dim) * self.out_dim + self.out_dim)) as u64,
            LayerKind::Gru => (3 * ((self.in_dim + self.out_dim) * self.out_dim + self.out_dim)) as u64,
            LayerKind::Convert => 0,
        }
    }
}

/// Ordered layer list with named parameter and state tensors.
///
/// Immutable except the RNN state tensors; one inference stream owns one
/// graph instance, and cloning gives an independent stream.
#[derive(Clone, Debug)]
pub struct ModelGraph {
    pub variant: Option<VariantId>,
    pub scheme: Scheme,
    pub layers: Vec<LayerSpec>,
    pub params: BTreeMap<String, Tensor>,
    pub states: BTreeMap<String, Tensor>,
    /// Calibrated quantization parameters for activation tensors,
    /// populated by the PTQ pipeline for INT8-bearing schemes.
    pub act_params: BTreeMap<String, QuantParams>,
}

/// Build one of the four published variants with zero-initialized FP32
/// parameters (to be loaded or synthesized afterwards).
pub fn build_variant(v: VariantId) -> ModelGraph {
    let mut g = build_custom(v.rnn_kind(), FEATURE_BINS, v.hidden());
    g.variant = Some(v);
    g
}

/// Same topology at arbitrary dimensions, used for toy models and tests.
pub fn build_custom(kind: RnnKind, features: usize, hidden: usize) -> ModelGraph {
    let fc = |name: &str, ind: usize, outd: usize, post: PostOp| LayerSpec {
        name: name.to_string(),
        kind: LayerKind::Fc,
        in_dim: ind,
        out_dim: outd,
        post,
        precision: ElementFormat::Fp32,
    };
    let rnn = |name: &str, ind: usize, outd: usize| LayerSpec {
        name: name.to_string(),
        kind: kind.layer_kind(),
        in_dim: ind,
        out_dim: outd,
        post: PostOp::None,
        precision: ElementFormat::Fp32,
    };
    let layers = vec![
        fc("fc0", features, features, PostOp::BatchNormRelu),
        rnn("rnn0", features, hidden),
        rnn("rnn1", hidden, hidden),
        fc("fc1", hidden, features, PostOp::BatchNormRelu),
        fc("fc2", features, features, PostOp::Sigmoid),
    ];

    let mut params = BTreeMap::new();
    let mut states = BTreeMap::new();
    for layer in &layers {
        match layer.kind {
            LayerKind::Fc => {
                params.insert(
                    format!("{}.weight", layer.name),
                    Tensor::zeros_f32(vec![layer.out_dim, layer.in_dim]),
                );
                params.insert(
                    format!("{}.bias", layer.name),
                    Tensor::zeros_f32(vec![layer.out_dim]),
                );
                if layer.post == PostOp::BatchNormRelu {
                    params.insert(
                        format!("{}.bn_scale", layer.name),
                        Tensor::from_f32(vec![layer.out_dim], vec![1.0; layer.out_dim]),
                    );
                    params.insert(
                        format!("{}.bn_shift", layer.name),
                        Tensor::zeros_f32(vec![layer.out_dim]),
                    );
                }
            }
            LayerKind::Lstm | LayerKind::Gru => {
                let gates = kind.gates();
                params.insert(
                    format!("{}.weight", layer.name),
                    Tensor::zeros_f32(vec![gates * layer.out_dim, layer.in_dim + layer.out_dim]),
                );
                params.insert(
                    format!("{}.bias", layer.name),
                    Tensor::zeros_f32(vec![gates * layer.out_dim]),
                );
                states.insert(
                    format!("{}.h", layer.name),
                    Tensor::zeros_f32(vec![layer.out_dim]),
                );
                if kind == RnnKind::Lstm {
                    states.insert(
                        format!("{}.c", layer.name),
                        Tensor::zeros_f32(vec![layer.out_dim]),
                    );
                }
            }
            LayerKind::Convert => {}
        }
    }

    ModelGraph {
        variant: None,
        scheme: Scheme::Fp32,
        layers,
        params,
        states,
        act_params: BTreeMap::new(),
    }
}

impl ModelGraph {
    /// Exact parameter element count over all layers.
    pub fn param_count(&self) -> u64 {
        self.layers.iter().map(LayerSpec::param_elems).sum()
    }

    /// Fraction of parameters held by the recurrent layers.
    pub fn rnn_param_fraction(&self) -> f64 {
        let rnn: u64 = self
            .layers
            .iter()
            .filter(|l| l.is_rnn())
            .map(LayerSpec::param_elems)
            .sum();
        rnn as f64 / self.param_count() as f64
    }

    /// Total multiply-accumulates for one inference.
    pub fn total_macs(&self) -> u64 {
        self.layers.iter().map(LayerSpec::macs).sum()
    }

    /// Reset all RNN states to zero (stream start).
    pub fn reset_states(&mut self) {
        for t in self.states.values_mut() {
            *t = Tensor::zeros_f32(t.shape.clone());
        }
    }

    /// Validate dimension chaining and parameter presence/shapes.
    pub fn validate(&self) -> Result<()> {
        let name = self
            .variant
            .map(|v| v.to_string())
            .unwrap_or_else(|| "custom".into());
        let mut prev_out: Option<usize> = None;
        for layer in &self.layers {
            if layer.kind == LayerKind::Convert && layer.in_dim != layer.out_dim {
                return Err(Error::InvalidGraph {
                    graph: name.clone(),
                    reason: format!("convert layer `{}` changes dimensions", layer.name),
                });
            }
            if let Some(p) = prev_out {
                if layer.in_dim != p {
                    return Err(Error::InvalidGraph {
                        graph: name.clone(),
                        reason: format!(
                            "layer `{}` expects {} inputs after a {}-output layer",
                            layer.name, layer.in_dim, p
                        ),
                    });
                }
            }
            prev_out = Some(layer.out_dim);
            for pname in layer.param_names() {
                let t = self.params.get(&pname).ok_or_else(|| Error::InvalidGraph {
                    graph: name.clone(),
                    reason: format!("missing parameter `{pname}`"),
                })?;
                let expected = expected_shape(layer, &pname);
                if t.shape != expected {
                    return Err(Error::InvalidGraph {
                        graph: name.clone(),
                        reason: format!(
                            "parameter `{pname}` has shape {:?}, expected {:?}",
                            t.shape, expected
                        ),
                    });
                }
            }
        }
        let last = self.layers.iter().rev().find(|l| l.kind != LayerKind::Convert);
        if let Some(last) = last {
            if last.kind != LayerKind::Fc || last.post != PostOp::Sigmoid {
                return Err(Error::InvalidGraph {
                    graph: name,
                    reason: "last compute layer must be FC with Sigmoid".into(),
                });
            }
        }
        Ok(())
    }

    /// Storage bytes of all parameters under `scheme` accounting:
    /// FP32 = 4 B, FP16 = 2 B, INT8 = 1 B per element; Mix puts the RNN
    /// layers' tensors at 1 B and everything else at 2 B.
    pub fn footprint_bytes(&self, scheme: Scheme) -> u64 {
        self.layers
            .iter()
            .map(|l| {
                let per_elem = match scheme {
                    Scheme::Fp32 => 4,
                    Scheme::Fp16 => 2,
                    Scheme::Int8 => 1,
                    Scheme::Mix => {
                        if l.is_rnn() {
                            1
                        } else {
                            2
                        }
                    }
                };
                l.param_elems() * per_elem
            })
            .sum()
    }

    /// Footprint in MiB (the published tables use 2^20-byte units).
    pub fn footprint_mib(&self, scheme: Scheme) -> f64 {
        self.footprint_bytes(scheme) as f64 / (1u64 << 20) as f64
    }

    /// Full-precision forward pass for one frame, updating RNN states in
    /// place. Arithmetic runs in f64; this is the numerical oracle for the
    /// quantized paths.
    pub fn run_reference(&mut self, frame: &[f32]) -> Result<Vec<f32>> {
        self.forward_observed(frame, &mut |_, _| {})
    }

    /// Reference forward pass invoking `obs` with every observable tensor:
    /// "input", each layer's output under "<layer>.out", and LSTM cell
    /// states under "<layer>.c". Used by calibration.
    pub fn forward_observed(
        &mut self,
        frame: &[f32],
        obs: &mut dyn FnMut(&str, &[f64]),
    ) -> Result<Vec<f32>> {
        let first_in = self
            .layers
            .first()
            .map(|l| l.in_dim)
            .unwrap_or(frame.len());
        if frame.len() != first_in {
            return Err(Error::DimMismatch {
                context: "run_reference".into(),
                expected: first_in,
                actual: frame.len(),
            });
        }
        let mut act: Vec<f64> = frame.iter().map(|&x| x as f64).collect();
        obs("input", &act);

        // Borrow params immutably while mutating states: split maps.
        let params = &self.params;
        for layer in &self.layers {
            match layer.kind {
                LayerKind::Convert => continue,
                LayerKind::Fc => {
                    let w = param_f64(params, &format!("{}.weight", layer.name));
                    let b = param_f64(params, &format!("{}.bias", layer.name));
                    let mut y = matvec(&w, &act, layer.out_dim, layer.in_dim);
                    for (yi, bi) in y.iter_mut().zip(&b) {
                        *yi += bi;
                    }
                    match layer.post {
                        PostOp::BatchNormRelu => {
                            let a = param_f64(params, &format!("{}.bn_scale", layer.name));
                            let s = param_f64(params, &format!("{}.bn_shift", layer.name));
                            for i in 0..y.len() {
                                y[i] = (a[i] * y[i] + s[i]).max(0.0);
                            }
                        }
                        PostOp::Sigmoid => {
                            for v in y.iter_mut() {
                                *v = sigmoid(*v);
                            }
                        }
                        PostOp::None => {}
                    }
                    act = y;
                }
                LayerKind::Lstm => {
                    let w = param_f64(params, &format!("{}.weight", layer.name));
                    let b = param_f64(params, &format!("{}.bias", layer.name));
                    let hid = layer.out_dim;
                    let h_name = format!("{}.h", layer.name);
                    let c_name = format!("{}.c", layer.name);
                    let mut h = state_f64(&self.states, &h_name);
                    let mut c = state_f64(&self.states, &c_name);
                    lstm_step_f64(&w, &b, &act, &mut h, &mut c, layer.in_dim, hid);
                    obs(&c_name, &c);
                    store_state(&mut self.states, &h_name, &h);
                    store_state(&mut self.states, &c_name, &c);
                    act = h;
                }
                LayerKind::Gru => {
                    let w = param_f64(params, &format!("{}.weight", layer.name));
                    let b = param_f64(params, &format!("{}.bias", layer.name));
                    let hid = layer.out_dim;
                    let h_name = format!("{}.h", layer.name);
                    let mut h = state_f64(&self.states, &h_name);
                    gru_step_f64(&w, &b, &act, &mut h, layer.in_dim, hid);
                    store_state(&mut self.states, &h_name, &h);
                    act = h;
                }
            }
            obs(&format!("{}.out", layer.name), &act);
        }
        Ok(act.iter().map(|&x| x as f32).collect())
    }
}

/// Fill a zero-initialized graph with reproducible random weights:
/// weights ~ U(-a, a) with a = 1/sqrt(fan_in), biases zero, BatchNorm
/// scale 1 / shift 0. Sufficient for footprint, quantization-mechanics and
/// performance work; not a trained model.
pub fn synthesize_params(g: &mut ModelGraph, seed: u64) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let layers = g.layers.clone();
    for layer in &layers {
        for pname in layer.param_names() {
            let t = g.params.get(&pname).expect("validated graph");
            let fan_in = if layer.is_rnn() {
                layer.in_dim + layer.out_dim
            } else {
                layer.in_dim
            };
            let amp = 1.0 / (fan_in as f32).sqrt();
            let data: Vec<f32> = if pname.ends_with(".bn_scale") {
                vec![1.0; t.len()]
            } else if pname.ends_with(".weight") {
                (0..t.len()).map(|_| rng.gen_range(-amp..amp)).collect()
            } else {
                vec![0.0; t.len()]
            };
            let shape = t.shape.clone();
            g.params.insert(pname, Tensor::from_f32(shape, data));
        }
    }
}

fn expected_shape(layer: &LayerSpec, pname: &str) -> Vec<usize> {
    let gates = match layer.kind {
        LayerKind::Lstm => 4,
        LayerKind::Gru => 3,
        _ => 1,
    };
    if pname.ends_with(".weight") {
        if layer.is_rnn() {
            vec![gates * layer.out_dim, layer.in_dim + layer.out_dim]
        } else {
            vec![layer.out_dim, layer.in_dim]
        }
    } else if pname.ends_with(".bias") {
        if layer.is_rnn() {
            vec![gates * layer.out_dim]
        } else {
            vec![layer.out_dim]
        }
    } else {
        vec![layer.out_dim]
    }
}

fn param_f64(params: &BTreeMap<String, Tensor>, name: &str) -> Vec<f64> {
    params
        .get(name)
        .map(|t| t.to_f32_vec().iter().map(|&x| x as f64).collect())
        .unwrap_or_default()
}

fn state_f64(states: &BTreeMap<String, Tensor>, name: &str) -> Vec<f64> {
    states
        .get(name)
        .map(|t| t.to_f32_vec().iter().map(|&x| x as f64).collect())
        .unwrap_or_default()
}

fn store_state(states: &mut BTreeMap<String, Tensor>, name: &str, v: &[f64]) {
    states.insert(
        name.to_string(),
        Tensor::from_f32(vec![v.len()], v.iter().map(|&x| x as f32).collect()),
    );
}

fn matvec(w: &[f64], x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut y = vec![0.0; rows];
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for (wv, xv) in row.iter().zip(x) {
            acc += wv * xv;
        }
        y[r] = acc;
    }
    y
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Standard LSTM cell over the combined [x; h] input, gate order i,f,g,o:
/// c' = f*c + i*g, h' = o*tanh(c').
fn lstm_step_f64(
    w: &[f64],
    b: &[f64],
    x: &[f64],
    h: &mut Vec<f64>,
    c: &mut Vec<f64>,
    in_dim: usize,
    hid: usize,
) {
    let cols = in_dim + hid;
    let mut xh = Vec::with_capacity(cols);
    xh.extend_from_slice(x);
    xh.extend_from_slice(h);
    let pre = matvec(w, &xh, 4 * hid, cols);
    for u in 0..hid {
        let i = sigmoid(pre[u] + b[u]);
        let f = sigmoid(pre[hid + u] + b[hid + u]);
        let g = (pre[2 * hid + u] + b[2 * hid + u]).tanh();
        let o = sigmoid(pre[3 * hid + u] + b[3 * hid + u]);
        let cn = f * c[u] + i * g;
        c[u] = cn;
        h[u] = o * cn.tanh();
    }
}

/// Standard GRU cell, gate order r,z,n with
/// n = tanh(W_n x + r*(U_n h) + b_n) and h' = z*h + (1-z)*n.
fn gru_step_f64(w: &[f64], b: &[f64], x: &[f64], h: &mut Vec<f64>, in_dim: usize, hid: usize) {
    let cols = in_dim + hid;
    let old_h = h.clone();
    for u in 0..hid {
        // r and z rows consume the combined [x; h] vector directly.
        let dot = |gate: usize, part: &[f64], offset: usize| -> f64 {
            let row = &w[(gate * hid + u) * cols..];
            part.iter()
                .enumerate()
                .map(|(i, &v)| row[offset + i] * v)
                .sum()
        };
        let r = sigmoid(dot(0, x, 0) + dot(0, &old_h, in_dim) + b[u]);
        let z = sigmoid(dot(1, x, 0) + dot(1, &old_h, in_dim) + b[hid + u]);
        let n = (dot(2, x, 0) + r * dot(2, &old_h, in_dim) + b[2 * hid + u]).tanh();
        h[u] = z * old_h[u] + (1.0 - z) * n;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_param_counts_match_published_totals() {
        // (variant, exact count from the layer-shape arithmetic with
        // BatchNorm as 2*out, published approximate total, published rnn%)
        let cases = [
            (VariantId::Lstm256, 1_251_337u64, 1.24e6, 84.0),
            (VariantId::Gru256, 988_425, 0.985e6, 80.0),
            (VariantId::Lstm128, 496_009, 0.493e6, 66.5),
            (VariantId::Gru128, 413_705, 0.411e6, 59.8),
        ];
        for (v, exact, published, rnn_pct) in cases {
            let g = build_variant(v);
            g.validate().unwrap();
            assert_eq!(g.param_count(), exact, "{v}");
            let rel = (g.param_count() as f64 - published).abs() / published;
            assert!(rel < 0.01, "{v}: {} vs {published}", g.param_count());
            let frac = 100.0 * g.rnn_param_fraction();
            assert!((frac - rnn_pct).abs() < 1.0, "{v}: rnn% {frac}");
        }
    }

    #[test]
    fn single_lstm_layer_count() {
        let l = LayerSpec {
            name: "rnn".into(),
            kind: LayerKind::Lstm,
            in_dim: 257,
            out_dim: 256,
            post: PostOp::None,
            precision: ElementFormat::Fp32,
        };
        assert_eq!(l.param_elems(), 526_336);
    }

    #[test]
    fn empty_graph_counts_zero() {
        let g = ModelGraph {
            variant: None,
            scheme: Scheme::Fp32,
            layers: vec![],
            params: BTreeMap::new(),
            states: BTreeMap::new(),
            act_params: BTreeMap::new(),
        };
        assert_eq!(g.param_count(), 0);
    }

    #[test]
    fn footprints_match_published_table() {
        // MiB cells of the published footprint table for the three
        // quantized schemes, checked at 2%. The LSTM128/Mix cell printed
        // there (0.67) is arithmetically inconsistent with the variant's
        // own parameter count and is asserted at the derived value instead
        // (see the acceptance suite for the faithful check).
        let cells = [
            (VariantId::Lstm256, Scheme::Fp16, 2.37),
            (VariantId::Lstm256, Scheme::Int8, 1.18),
            (VariantId::Lstm256, Scheme::Mix, 1.37),
            (VariantId::Gru256, Scheme::Fp16, 1.88),
            (VariantId::Gru256, Scheme::Int8, 0.93),
            (VariantId::Gru256, Scheme::Mix, 1.13),
            (VariantId::Lstm128, Scheme::Fp16, 0.94),
            (VariantId::Lstm128, Scheme::Int8, 0.47),
            (VariantId::Gru128, Scheme::Fp16, 0.78),
            (VariantId::Gru128, Scheme::Int8, 0.39),
            (VariantId::Gru128, Scheme::Mix, 0.55),
        ];
        for (v, scheme, mib) in cells {
            let g = build_variant(v);
            let got = g.footprint_mib(scheme);
            assert!(
                (got - mib).abs() / mib < 0.02,
                "{v} {scheme:?}: {got} vs {mib}"
            );
        }
        let g = build_variant(VariantId::Lstm128);
        assert_eq!(g.footprint_bytes(Scheme::Mix), 662_802);
    }

    #[test]
    fn fp16_footprint_is_twice_int8() {
        for v in VariantId::ALL {
            let g = build_variant(v);
            assert_eq!(
                g.footprint_bytes(Scheme::Fp16),
                2 * g.footprint_bytes(Scheme::Int8)
            );
        }
    }

    #[test]
    fn zero_weights_give_half_gains() {
        let mut g = build_variant(VariantId::Gru128);
        let out = g.run_reference(&vec![0.5; 257]).unwrap();
        assert_eq!(out.len(), 257);
        for &o in &out {
            assert!((o - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn outputs_stay_in_unit_interval() {
        let mut g = build_variant(VariantId::Lstm128);
        synthesize_params(&mut g, 13);
        for t in 0..20 {
            let frame: Vec<f32> = (0..257).map(|i| ((i * t) as f32 * 0.01).sin().abs()).collect();
            let out = g.run_reference(&frame).unwrap();
            assert!(out.iter().all(|&o| (0.0..=1.0).contains(&o)), "frame {t}");
        }
    }

    #[test]
    fn matches_hand_written_gate_recurrence() {
        // 3-unit toy LSTM and GRU against an independently written
        // per-gate recurrence, agreement to 1e-12.
        for kind in [RnnKind::Lstm, RnnKind::Gru] {
            let mut g = build_custom(kind, 3, 3);
            synthesize_params(&mut g, 99);
            let w = g.params["rnn0.weight"].to_f32_vec();
            let b = g.params["rnn0.bias"].to_f32_vec();

            let mut h = vec![0.0f64; 3];
            let mut c = vec![0.0f64; 3];
            let frames = [[0.3f32, -0.2, 0.7], [0.1, 0.9, -0.5]];
            for frame in frames {
                // Drive only the first RNN by reading its observed output.
                let mut seen: Option<Vec<f64>> = None;
                g.forward_observed(&frame, &mut |name, v| {
                    if name == "rnn0.out" {
                        seen = Some(v.to_vec());
                    }
                })
                .unwrap();
                let seen = seen.unwrap();

                // fc0 on zero weights is bn_shift.max(0) = 0; the synth
                // params are nonzero though, so recompute fc0 output here.
                let fw = g.params["fc0.weight"].to_f32_vec();
                let fb = g.params["fc0.bias"].to_f32_vec();
                let fa = g.params["fc0.bn_scale"].to_f32_vec();
                let fs = g.params["fc0.bn_shift"].to_f32_vec();
                let mut x = vec![0.0f64; 3];
                for r in 0..3 {
                    let mut acc = fb[r] as f64;
                    for cc in 0..3 {
                        acc += fw[r * 3 + cc] as f64 * frame[cc] as f64;
                    }
                    x[r] = (fa[r] as f64 * acc + fs[r] as f64).max(0.0);
                }

                let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
                let mut hn = h.clone();
                match kind {
                    RnnKind::Lstm => {
                        for u in 0..3 {
                            let row = |gate: usize| {
                                let base = (gate * 3 + u) * 6;
                                let mut acc = b[gate * 3 + u] as f64;
                                for i in 0..3 {
                                    acc += w[base + i] as f64 * x[i];
                                    acc += w[base + 3 + i] as f64 * h[i];
                                }
                                acc
                            };
                            let i = sig(row(0));
                            let f = sig(row(1));
                            let gg = row(2).tanh();
                            let o = sig(row(3));
                            c[u] = f * c[u] + i * gg;
                            hn[u] = o * c[u].tanh();
                        }
                    }
                    RnnKind::Gru => {
                        for u in 0..3 {
                            let part = |gate: usize, v: &[f64], off: usize| {
                                let base = (gate * 3 + u) * 6;
                                v.iter()
                                    .enumerate()
                                    .map(|(i, &vv)| w[base + off + i] as f64 * vv)
                                    .sum::<f64>()
                            };
                            let r = sig(part(0, &x, 0) + part(0, &h, 3) + b[u] as f64);
                            let z = sig(part(1, &x, 0) + part(1, &h, 3) + b[3 + u] as f64);
                            let n = (part(2, &x, 0) + r * part(2, &h, 3) + b[6 + u] as f64).tanh();
                            hn[u] = z * h[u] + (1.0 - z) * n;
                        }
                    }
                }
                for u in 0..3 {
                    assert!(
                        (hn[u] - seen[u]).abs() < 1e-12,
                        "{kind:?} unit {u}: {} vs {}",
                        hn[u],
                        seen[u]
                    );
                }
                // The executor stores states as FP32 tensors between
                // frames; mirror that here.
                h = hn.iter().map(|&v| v as f32 as f64).collect();
                c = c.iter().map(|&v| v as f32 as f64).collect();
            }
        }
    }

    #[test]
    fn state_update_is_causal() {
        let mut a = build_variant(VariantId::Gru128);
        synthesize_params(&mut a, 5);
        let mut b = a.clone();
        let frame = |t: usize, bump: f32| -> Vec<f32> {
            (0..257)
                .map(|i| ((i + t) as f32 * 0.013).sin() * 0.3 + bump)
                .collect()
        };
        // Identical prefixes give identical outputs...
        for t in 0..5 {
            let oa = a.run_reference(&frame(t, 0.0)).unwrap();
            let ob = b.run_reference(&frame(t, 0.0)).unwrap();
            assert_eq!(oa, ob, "frame {t}");
        }
        // ...and outputs diverge only from the frame that differs.
        let oa = a.run_reference(&frame(5, 0.0)).unwrap();
        let ob = b.run_reference(&frame(5, 0.5)).unwrap();
        assert_ne!(oa, ob);
    }

}
