//! Tensors in the three element formats used by the inference stack, plus
//! the symmetric quantize/dequantize transforms.
//!
//! The INT8 scheme is symmetric with zero-point 0: the integer grid is
//! [-127, 127] (-128 is never produced) so that negation is exact, and the
//! scale is S = (q_max - q_min) / (2^n - 1).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fp16::F16;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ElementFormat {
    Fp32,
    Fp16,
    Int8,
}

impl ElementFormat {
    /// Storage bytes per element.
    pub fn size_bytes(self) -> usize {
        match self {
            ElementFormat::Fp32 => 4,
            ElementFormat::Fp16 => 2,
            ElementFormat::Int8 => 1,
        }
    }
}

impl std::fmt::Display for ElementFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ElementFormat::Fp32 => "fp32",
            ElementFormat::Fp16 => "fp16",
            ElementFormat::Int8 => "int8",
        };
        f.write_str(s)
    }
}

/// Per-tensor symmetric quantization parameters (range, bit-width, scale).
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantParams {
    pub q_min: f32,
    pub q_max: f32,
    pub n_bits: u32,
    pub scale: f32,
}

impl QuantParams {
    /// Symmetric 8-bit parameters for the range [-q_max, q_max].
    pub fn symmetric(q_max: f32) -> Result<QuantParams> {
        if !q_max.is_finite() || q_max <= 0.0 {
            return Err(Error::InvalidQuantParams(format!(
                "q_max must be finite and positive, got {q_max}"
            )));
        }
        let n_bits = 8;
        let q_min = -q_max;
        let scale = (q_max - q_min) / ((1u32 << n_bits) - 1) as f32;
        Ok(QuantParams {
            q_min,
            q_max,
            n_bits,
            scale,
        })
    }

    /// Symmetric parameters covering an observed [min, max] interval.
    pub fn from_min_max(min: f32, max: f32, name: &str) -> Result<QuantParams> {
        let q_max = min.abs().max(max.abs());
        if q_max == 0.0 || !q_max.is_finite() {
            return Err(Error::DegenerateRange {
                tensor: name.to_string(),
            });
        }
        QuantParams::symmetric(q_max)
    }

    pub fn validate(&self) -> Result<()> {
        if self.q_min != -self.q_max || self.n_bits != 8 || self.scale <= 0.0 {
            return Err(Error::InvalidQuantParams(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Flat element storage; the variant is the element format and INT8 data
/// always carries its QuantParams.
#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    Fp32(Vec<f32>),
    Fp16(Vec<F16>),
    Int8 { values: Vec<i8>, quant: QuantParams },
}

/// An n-dimensional numeric array; the universal value carrier.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: TensorData,
}

impl Tensor {
    pub fn from_f32(shape: Vec<usize>, data: Vec<f32>) -> Tensor {
        assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            shape,
            data: TensorData::Fp32(data),
        }
    }

    pub fn zeros_f32(shape: Vec<usize>) -> Tensor {
        let len = shape.iter().product();
        Tensor::from_f32(shape, vec![0.0; len])
    }

    pub fn from_f16(shape: Vec<usize>, data: Vec<F16>) -> Tensor {
        assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            shape,
            data: TensorData::Fp16(data),
        }
    }

    pub fn from_i8(shape: Vec<usize>, values: Vec<i8>, quant: QuantParams) -> Tensor {
        assert_eq!(shape.iter().product::<usize>(), values.len());
        debug_assert!(values.iter().all(|&v| v >= -127));
        Tensor {
            shape,
            data: TensorData::Int8 { values, quant },
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn format(&self) -> ElementFormat {
        match &self.data {
            TensorData::Fp32(_) => ElementFormat::Fp32,
            TensorData::Fp16(_) => ElementFormat::Fp16,
            TensorData::Int8 { .. } => ElementFormat::Int8,
        }
    }

    pub fn quant(&self) -> Option<&QuantParams> {
        match &self.data {
            TensorData::Int8 { quant, .. } => Some(quant),
            _ => None,
        }
    }

    pub fn as_f32(&self) -> Option<&[f32]> {
        match &self.data {
            TensorData::Fp32(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_f16(&self) -> Option<&[F16]> {
        match &self.data {
            TensorData::Fp16(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_i8(&self) -> Option<&[i8]> {
        match &self.data {
            TensorData::Int8 { values, .. } => Some(values),
            _ => None,
        }
    }

    /// Storage footprint of the element payload.
    pub fn byte_len(&self) -> usize {
        self.len() * self.format().size_bytes()
    }

    /// Widen any format to FP32 values (dequantizing INT8).
    pub fn to_f32_vec(&self) -> Vec<f32> {
        match &self.data {
            TensorData::Fp32(v) => v.clone(),
            TensorData::Fp16(v) => v.iter().map(|h| h.to_f32()).collect(),
            TensorData::Int8 { values, quant } => {
                values.iter().map(|&x| x as f32 * quant.scale).collect()
            }
        }
    }
}

/// Quantize a single value onto the symmetric integer grid.
#[inline]
pub fn quantize_value(x: f32, qp: &QuantParams) -> i8 {
    let clamped = x.clamp(qp.q_min, qp.q_max);
    let q = (clamped / qp.scale).round_ties_even();
    q.clamp(-127.0, 127.0) as i8
}

/// Quantize an FP32 tensor to INT8 under `qp`.
///
/// `name` is used only for diagnostics: non-finite elements are an error
/// naming the tensor and the offending index.
pub fn quantize(x: &Tensor, qp: &QuantParams, name: &str) -> Result<Tensor> {
    qp.validate()?;
    let data = x.as_f32().ok_or_else(|| {
        Error::DimMismatch {
            context: format!("quantize `{name}` expects FP32 input"),
            expected: 0,
            actual: 0,
        }
    })?;
    let mut out = Vec::with_capacity(data.len());
    for (i, &v) in data.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                tensor: name.to_string(),
                index: i,
            });
        }
        out.push(quantize_value(v, qp));
    }
    Ok(Tensor::from_i8(x.shape.clone(), out, *qp))
}

/// Map an INT8 tensor back to FP32 (x_i = X_i * scale).
pub fn dequantize(x: &Tensor) -> Result<Tensor> {
    match &x.data {
        TensorData::Int8 { values, quant } => {
            let out = values.iter().map(|&v| v as f32 * quant.scale).collect();
            Ok(Tensor::from_f32(x.shape.clone(), out))
        }
        _ => Err(Error::MissingQuantParams("dequantize input".to_string())),
    }
}

/// Indices whose values fell outside the binary16 range (or were NaN)
/// during a cast, reported as a warning record.
#[derive(Debug, Default, Clone)]
pub struct CastReport {
    pub overflow_indices: Vec<usize>,
}

impl CastReport {
    pub fn is_clean(&self) -> bool {
        self.overflow_indices.is_empty()
    }
}

/// Cast FP32 to FP16 with round-to-nearest-even; out-of-range values become
/// signed infinities and are listed in the report.
pub fn to_fp16(x: &Tensor) -> (Tensor, CastReport) {
    let data = x.as_f32().expect("to_fp16 expects FP32 input");
    let mut report = CastReport::default();
    let mut out = Vec::with_capacity(data.len());
    for (i, &v) in data.iter().enumerate() {
        let h = F16::from_f32(v);
        if !h.is_finite() {
            report.overflow_indices.push(i);
        }
        out.push(h);
    }
    (Tensor::from_f16(x.shape.clone(), out), report)
}
