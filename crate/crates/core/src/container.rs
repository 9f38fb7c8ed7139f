//! Self-describing binary model container: a header (magic, version,
//! variant, scheme, layer table, activation ranges) followed by named
//! tensors with dtype tag, shape, optional QuantParams and a little-endian
//! payload. A sidecar JSON manifest mirrors the header for inspection.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fp16::F16;
use crate::graph::{LayerKind, LayerSpec, ModelGraph, PostOp, Scheme, VariantId};
use crate::tensor::{ElementFormat, QuantParams, Tensor, TensorData};

const MAGIC: &[u8; 4] = b"TDKM";
const VERSION: u32 = 1;

pub fn save(g: &ModelGraph, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[variant_tag(g.variant), scheme_tag(g.scheme)])?;

    w.write_all(&(g.layers.len() as u32).to_le_bytes())?;
    for layer in &g.layers {
        write_str(&mut w, &layer.name)?;
        w.write_all(&[
            kind_tag(layer.kind),
            post_tag(layer.post),
            format_tag(layer.precision),
        ])?;
        w.write_all(&(layer.in_dim as u32).to_le_bytes())?;
        w.write_all(&(layer.out_dim as u32).to_le_bytes())?;
    }

    w.write_all(&(g.act_params.len() as u32).to_le_bytes())?;
    for (name, qp) in &g.act_params {
        write_str(&mut w, name)?;
        w.write_all(&qp.q_max.to_le_bytes())?;
    }

    write_tensor_table(&mut w, &g.params)?;
    write_tensor_table(&mut w, &g.states)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ModelGraph> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Container(format!(
            "{}: bad magic {:?}",
            path.display(),
            magic
        )));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Container(format!(
            "unsupported container version {version}"
        )));
    }
    let mut tags = [0u8; 2];
    r.read_exact(&mut tags)?;
    let variant = variant_from_tag(tags[0])?;
    let scheme = scheme_from_tag(tags[1])?;

    let n_layers = read_u32(&mut r)? as usize;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let name = read_str(&mut r)?;
        let mut t = [0u8; 3];
        r.read_exact(&mut t)?;
        let in_dim = read_u32(&mut r)? as usize;
        let out_dim = read_u32(&mut r)? as usize;
        layers.push(LayerSpec {
            name,
            kind: kind_from_tag(t[0])?,
            post: post_from_tag(t[1])?,
            precision: format_from_tag(t[2])?,
            in_dim,
            out_dim,
        });
    }

    let n_act = read_u32(&mut r)? as usize;
    let mut act_params = BTreeMap::new();
    for _ in 0..n_act {
        let name = read_str(&mut r)?;
        let q_max = read_f32(&mut r)?;
        act_params.insert(name, QuantParams::symmetric(q_max)?);
    }

    let params = read_tensor_table(&mut r)?;
    let states = read_tensor_table(&mut r)?;

    let g = ModelGraph {
        variant,
        scheme,
        layers,
        params,
        states,
        act_params,
    };
    g.validate()?;
    Ok(g)
}

/// Human-readable mirror of the container header.
#[derive(Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub variant: Option<String>,
    pub scheme: String,
    pub param_count: u64,
    pub footprint_bytes: u64,
    pub layers: Vec<ManifestLayer>,
    pub tensors: Vec<ManifestTensor>,
}

#[derive(Serialize, Deserialize)]
pub struct ManifestLayer {
    pub name: String,
    pub kind: String,
    pub in_dim: usize,
    pub out_dim: usize,
    pub post: String,
    pub precision: String,
}

#[derive(Serialize, Deserialize)]
pub struct ManifestTensor {
    pub name: String,
    pub dtype: String,
    pub shape: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_max: Option<f32>,
}

pub fn manifest(g: &ModelGraph) -> Manifest {
    Manifest {
        version: VERSION,
        variant: g.variant.map(|v| v.to_string()),
        scheme: g.scheme.to_string(),
        param_count: g.param_count(),
        footprint_bytes: g.footprint_bytes(g.scheme),
        layers: g
            .layers
            .iter()
            .map(|l| ManifestLayer {
                name: l.name.clone(),
                kind: format!("{:?}", l.kind),
                in_dim: l.in_dim,
                out_dim: l.out_dim,
                post: format!("{:?}", l.post),
                precision: l.precision.to_string(),
            })
            .collect(),
        tensors: g
            .params
            .iter()
            .map(|(name, t)| ManifestTensor {
                name: name.clone(),
                dtype: t.format().to_string(),
                shape: t.shape.clone(),
                q_max: t.quant().map(|q| q.q_max),
            })
            .collect(),
    }
}

/// Write the JSON manifest next to the container (`<path>.json`).
pub fn save_manifest(g: &ModelGraph, container_path: &Path) -> Result<()> {
    let mut p = container_path.as_os_str().to_owned();
    p.push(".json");
    let json = serde_json::to_string_pretty(&manifest(g))?;
    std::fs::write(std::path::PathBuf::from(p), json)?;
    Ok(())
}

fn write_tensor_table<W: Write>(w: &mut W, table: &BTreeMap<String, Tensor>) -> Result<()> {
    w.write_all(&(table.len() as u32).to_le_bytes())?;
    for (name, t) in table {
        write_str(w, name)?;
        w.write_all(&[format_tag(t.format())])?;
        w.write_all(&(t.shape.len() as u32).to_le_bytes())?;
        for &d in &t.shape {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        match &t.data {
            TensorData::Fp32(v) => {
                w.write_all(&[0u8])?;
                for x in v {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
            TensorData::Fp16(v) => {
                w.write_all(&[0u8])?;
                for x in v {
                    w.write_all(&x.0.to_le_bytes())?;
                }
            }
            TensorData::Int8 { values, quant } => {
                w.write_all(&[1u8])?;
                w.write_all(&quant.q_max.to_le_bytes())?;
                let bytes: Vec<u8> = values.iter().map(|&v| v as u8).collect();
                w.write_all(&bytes)?;
            }
        }
    }
    Ok(())
}

fn read_tensor_table<R: Read>(r: &mut R) -> Result<BTreeMap<String, Tensor>> {
    let n = read_u32(r)? as usize;
    let mut table = BTreeMap::new();
    for _ in 0..n {
        let name = read_str(r)?;
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let format = format_from_tag(tag[0])?;
        let ndim = read_u32(r)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(read_u32(r)? as usize);
        }
        let len: usize = shape.iter().product();
        let mut has_quant = [0u8; 1];
        r.read_exact(&mut has_quant)?;
        let quant = if has_quant[0] == 1 {
            Some(QuantParams::symmetric(read_f32(r)?)?)
        } else {
            None
        };
        let tensor = match format {
            ElementFormat::Fp32 => {
                let mut buf = vec![0u8; len * 4];
                r.read_exact(&mut buf)?;
                let data = buf
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                    .collect();
                Tensor::from_f32(shape, data)
            }
            ElementFormat::Fp16 => {
                let mut buf = vec![0u8; len * 2];
                r.read_exact(&mut buf)?;
                let data = buf
                    .chunks_exact(2)
                    .map(|b| F16(u16::from_le_bytes([b[0], b[1]])))
                    .collect();
                Tensor::from_f16(shape, data)
            }
            ElementFormat::Int8 => {
                let quant = quant.ok_or_else(|| {
                    Error::Container(format!("int8 tensor `{name}` without quant params"))
                })?;
                let mut buf = vec![0u8; len];
                r.read_exact(&mut buf)?;
                let values = buf.iter().map(|&b| b as i8).collect();
                Tensor::from_i8(shape, values, quant)
            }
        };
        table.insert(name, tensor);
    }
    Ok(table)
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = read_u32(r)? as usize;
    if len > 1 << 20 {
        return Err(Error::Container(format!("implausible string length {len}")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Container(e.to_string()))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f32<R: Read>(r: &mut R) -> Result<f32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(f32::from_le_bytes(b))
}

fn variant_tag(v: Option<VariantId>) -> u8 {
    match v {
        Some(VariantId::Lstm256) => 0,
        Some(VariantId::Gru256) => 1,
        Some(VariantId::Lstm128) => 2,
        Some(VariantId::Gru128) => 3,
        None => 255,
    }
}

fn variant_from_tag(t: u8) -> Result<Option<VariantId>> {
    Ok(match t {
        0 => Some(VariantId::Lstm256),
        1 => Some(VariantId::Gru256),
        2 => Some(VariantId::Lstm128),
        3 => Some(VariantId::Gru128),
        255 => None,
        other => return Err(Error::Container(format!("bad variant tag {other}"))),
    })
}

fn scheme_tag(s: Scheme) -> u8 {
    match s {
        Scheme::Fp32 => 0,
        Scheme::Fp16 => 1,
        Scheme::Int8 => 2,
        Scheme::Mix => 3,
    }
}

fn scheme_from_tag(t: u8) -> Result<Scheme> {
    Ok(match t {
        0 => Scheme::Fp32,
        1 => Scheme::Fp16,
        2 => Scheme::Int8,
        3 => Scheme::Mix,
        other => return Err(Error::Container(format!("bad scheme tag {other}"))),
    })
}

fn kind_tag(k: LayerKind) -> u8 {
    match k {
        LayerKind::Fc => 0,
        LayerKind::Lstm => 1,
        LayerKind::Gru => 2,
        LayerKind::Convert => 3,
    }
}

fn kind_from_tag(t: u8) -> Result<LayerKind> {
    Ok(match t {
        0 => LayerKind::Fc,
        1 => LayerKind::Lstm,
        2 => LayerKind::Gru,
        3 => LayerKind::Convert,
        other => return Err(Error::Container(format!("bad layer kind tag {other}"))),
    })
}

fn post_tag(p: PostOp) -> u8 {
    match p {
        PostOp::BatchNormRelu => 0,
        PostOp::Sigmoid => 1,
        PostOp::None => 2,
    }
}

fn post_from_tag(t: u8) -> Result<PostOp> {
    Ok(match t {
        0 => PostOp::BatchNormRelu,
        1 => PostOp::Sigmoid,
        2 => PostOp::None,
        other => return Err(Error::Container(format!("bad post-op tag {other}"))),
    })
}

fn format_tag(f: ElementFormat) -> u8 {
    match f {
        ElementFormat::Fp32 => 0,
        ElementFormat::Fp16 => 1,
        ElementFormat::Int8 => 2,
    }
}

fn format_from_tag(t: u8) -> Result<ElementFormat> {
    Ok(match t {
        0 => ElementFormat::Fp32,
        1 => ElementFormat::Fp16,
        2 => ElementFormat::Int8,
        other => return Err(Error::Container(format!("bad dtype tag {other}"))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_variant, synthesize_params};

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("tdk_container_test");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn round_trip_preserves_graph() {
        let mut g = build_variant(VariantId::Gru128);
        synthesize_params(&mut g, 7);
        let path = tmp("rt.tdkm");
        save(&g, &path).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(back.variant, g.variant);
        assert_eq!(back.layers.len(), g.layers.len());
        assert_eq!(back.params, g.params);
        assert_eq!(back.states, g.states);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn save_is_deterministic() {
        let mut g = build_variant(VariantId::Lstm128);
        synthesize_params(&mut g, 3);
        let p1 = tmp("d1.tdkm");
        let p2 = tmp("d2.tdkm");
        save(&g, &p1).unwrap();
        save(&g, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        std::fs::remove_file(&p1).ok();
        std::fs::remove_file(&p2).ok();
    }

    #[test]
    fn rejects_bad_magic() {
        let path = tmp("bad.tdkm");
        std::fs::write(&path, b"NOPEnope").unwrap();
        assert!(matches!(load(&path), Err(Error::Container(_))));
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn manifest_mirrors_header() {
        let g = build_variant(VariantId::Lstm256);
        let m = manifest(&g);
        assert_eq!(m.variant.as_deref(), Some("lstm256"));
        assert_eq!(m.layers.len(), 5);
        assert_eq!(m.param_count, 1_251_337);
    }
}
