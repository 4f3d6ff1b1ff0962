//! Little-endian binary container for SNN and ANN models.
//!
//! ```text
//! magic "SPKN" | version u16 | model type u8 (0 = SNN, 1 = ANN)
//! SNN header: T u32 | tau f64 | comparator u8 | rounding u8 | input encoding u8
//! layer count u32
//! per layer: kind u8 | activation u8 | 8 x u32 geometry | eps f64
//! then per layer its tensors, each u32 length + f32 values
//! ```
//!
//! Layer kinds: 0 dense, 1 conv2d, 2 batch norm, 3 average pool. Activations:
//! 0 identity, 1 ReLU, 2 sigmoid, 3 tanh, 4 SpikePack quantizer. SNN layers
//! carry weights, bias, theta_out and input_scale; ANN affine layers carry
//! weights and bias; batch norm carries gamma, beta, mean and var. Values are
//! held as f64 in memory and stored as f32.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::converter::{Activation, AnnLayer, AnnModel};
use crate::error::{Error, Result};
use crate::network::{Conv2dGeometry, InputEncoding, LayerShape, LayerSpec, NetworkSpec};
use crate::neurons::{Comparator, Rounding};

pub const MAGIC: &[u8; 4] = b"SPKN";
pub const VERSION: u16 = 1;
const MAX_TENSOR: u32 = 1 << 28;

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Snn(NetworkSpec),
    Ann(AnnModel),
}

struct LayerHeader {
    kind: u8,
    activation: u8,
    geometry: [u32; 8],
    eps: f64,
}

fn corrupt(e: impl std::fmt::Display) -> Error {
    Error::Corrupt(e.to_string())
}

fn io_corrupt(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Corrupt("container is truncated".into())
    } else {
        Error::Io(e)
    }
}

fn to_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Shape(format!("{v} does not fit the container's u32 fields")))
}

fn shape_geometry(shape: &LayerShape) -> Result<(u8, [u32; 8])> {
    Ok(match shape {
        LayerShape::Dense { inputs, outputs } => (0, [to_u32(*inputs)?, to_u32(*outputs)?, 0, 0, 0, 0, 0, 0]),
        LayerShape::Conv2d(g) => (
            1,
            [
                to_u32(g.in_channels)?,
                to_u32(g.in_height)?,
                to_u32(g.in_width)?,
                to_u32(g.out_channels)?,
                to_u32(g.kernel_h)?,
                to_u32(g.kernel_w)?,
                to_u32(g.stride)?,
                to_u32(g.padding)?,
            ],
        ),
    })
}

fn geometry_shape(kind: u8, g: [u32; 8]) -> Result<LayerShape> {
    let g = g.map(|v| v as usize);
    match kind {
        0 => Ok(LayerShape::Dense {
            inputs: g[0],
            outputs: g[1],
        }),
        1 => Ok(LayerShape::Conv2d(Conv2dGeometry {
            in_channels: g[0],
            in_height: g[1],
            in_width: g[2],
            out_channels: g[3],
            kernel_h: g[4],
            kernel_w: g[5],
            stride: g[6],
            padding: g[7],
        })),
        other => Err(corrupt(format!("layer kind {other} is not affine"))),
    }
}

fn activation_code(a: Activation) -> u8 {
    match a {
        Activation::Identity => 0,
        Activation::Relu => 1,
        Activation::Sigmoid => 2,
        Activation::Tanh => 3,
    }
}

fn code_activation(c: u8) -> Result<Activation> {
    Ok(match c {
        0 => Activation::Identity,
        1 => Activation::Relu,
        2 => Activation::Sigmoid,
        3 => Activation::Tanh,
        other => return Err(corrupt(format!("unknown ANN activation code {other}"))),
    })
}

fn write_header<W: Write>(w: &mut W, h: &LayerHeader) -> Result<()> {
    w.write_u8(h.kind)?;
    w.write_u8(h.activation)?;
    for g in h.geometry {
        w.write_u32::<LE>(g)?;
    }
    w.write_f64::<LE>(h.eps)?;
    Ok(())
}

fn read_header<R: Read>(r: &mut R) -> Result<LayerHeader> {
    let kind = r.read_u8().map_err(io_corrupt)?;
    let activation = r.read_u8().map_err(io_corrupt)?;
    let mut geometry = [0u32; 8];
    for g in &mut geometry {
        *g = r.read_u32::<LE>().map_err(io_corrupt)?;
    }
    let eps = r.read_f64::<LE>().map_err(io_corrupt)?;
    Ok(LayerHeader {
        kind,
        activation,
        geometry,
        eps,
    })
}

fn write_tensor<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    w.write_u32::<LE>(to_u32(values.len())?)?;
    for &v in values {
        w.write_f32::<LE>(v as f32)?;
    }
    Ok(())
}

fn read_tensor<R: Read>(r: &mut R) -> Result<Vec<f64>> {
    let len = r.read_u32::<LE>().map_err(io_corrupt)?;
    if len > MAX_TENSOR {
        return Err(corrupt(format!("tensor length {len} is implausible")));
    }
    let mut buf = vec![0f32; len as usize];
    r.read_f32_into::<LE>(&mut buf).map_err(io_corrupt)?;
    Ok(buf.into_iter().map(f64::from).collect())
}

pub fn write_model<W: Write>(mut w: W, model: &Model) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u16::<LE>(VERSION)?;
    match model {
        Model::Snn(net) => {
            net.validate()?;
            w.write_u8(0)?;
            w.write_u32::<LE>(to_u32(net.timesteps)?)?;
            w.write_f64::<LE>(net.tau)?;
            w.write_u8(match net.comparator {
                Comparator::AtLeast => 0,
                Comparator::StrictlyGreater => 1,
            })?;
            w.write_u8(match net.rounding {
                Rounding::GreedyFloor => 0,
                Rounding::Nearest => 1,
            })?;
            w.write_u8(match net.input_encoding {
                InputEncoding::AnalogDirect => 0,
            })?;
            w.write_u32::<LE>(to_u32(net.layers.len())?)?;
            let last = net.layers.len() - 1;
            for (l, layer) in net.layers.iter().enumerate() {
                let (kind, geometry) = shape_geometry(&layer.shape)?;
                let activation = if l == last { 0 } else { 4 };
                write_header(&mut w, &LayerHeader { kind, activation, geometry, eps: 0.0 })?;
            }
            for layer in &net.layers {
                for t in [&layer.weights, &layer.bias, &layer.theta_out, &layer.input_scale] {
                    write_tensor(&mut w, t)?;
                }
            }
        }
        Model::Ann(ann) => {
            ann.validate()?;
            w.write_u8(1)?;
            w.write_u32::<LE>(to_u32(ann.layers.len())?)?;
            for layer in &ann.layers {
                let header = match layer {
                    AnnLayer::Affine { shape, activation, .. } => {
                        let (kind, geometry) = shape_geometry(shape)?;
                        LayerHeader { kind, activation: activation_code(*activation), geometry, eps: 0.0 }
                    }
                    AnnLayer::BatchNorm {
                        channels,
                        spatial,
                        eps,
                        activation,
                        ..
                    } => LayerHeader {
                        kind: 2,
                        activation: activation_code(*activation),
                        geometry: [to_u32(*channels)?, to_u32(*spatial)?, 0, 0, 0, 0, 0, 0],
                        eps: *eps,
                    },
                    AnnLayer::AvgPool {
                        channels,
                        in_height,
                        in_width,
                        kernel,
                        stride,
                    } => LayerHeader {
                        kind: 3,
                        activation: 0,
                        geometry: [
                            to_u32(*channels)?,
                            to_u32(*in_height)?,
                            to_u32(*in_width)?,
                            to_u32(*kernel)?,
                            to_u32(*stride)?,
                            0,
                            0,
                            0,
                        ],
                        eps: 0.0,
                    },
                };
                write_header(&mut w, &header)?;
            }
            for layer in &ann.layers {
                match layer {
                    AnnLayer::Affine { weights, bias, .. } => {
                        write_tensor(&mut w, weights)?;
                        write_tensor(&mut w, bias)?;
                    }
                    AnnLayer::BatchNorm {
                        gamma, beta, mean, var, ..
                    } => {
                        for t in [gamma, beta, mean, var] {
                            write_tensor(&mut w, t)?;
                        }
                    }
                    AnnLayer::AvgPool { .. } => {}
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_model<R: Read>(mut r: R) -> Result<Model> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_corrupt)?;
    if &magic != MAGIC {
        return Err(corrupt("not a model container (bad magic)"));
    }
    let version = r.read_u16::<LE>().map_err(io_corrupt)?;
    if version != VERSION {
        return Err(corrupt(format!("unsupported container version {version}")));
    }
    match r.read_u8().map_err(io_corrupt)? {
        0 => {
            let timesteps = r.read_u32::<LE>().map_err(io_corrupt)? as usize;
            let tau = r.read_f64::<LE>().map_err(io_corrupt)?;
            let comparator = match r.read_u8().map_err(io_corrupt)? {
                0 => Comparator::AtLeast,
                1 => Comparator::StrictlyGreater,
                c => return Err(corrupt(format!("unknown comparator code {c}"))),
            };
            let rounding = match r.read_u8().map_err(io_corrupt)? {
                0 => Rounding::GreedyFloor,
                1 => Rounding::Nearest,
                c => return Err(corrupt(format!("unknown rounding code {c}"))),
            };
            let input_encoding = match r.read_u8().map_err(io_corrupt)? {
                0 => InputEncoding::AnalogDirect,
                c => return Err(corrupt(format!("unknown input encoding {c}"))),
            };
            let count = r.read_u32::<LE>().map_err(io_corrupt)?;
            let headers = (0..count).map(|_| read_header(&mut r)).collect::<Result<Vec<_>>>()?;
            let mut layers = Vec::with_capacity(headers.len());
            for h in &headers {
                let shape = geometry_shape(h.kind, h.geometry)?;
                layers.push(LayerSpec {
                    shape,
                    weights: read_tensor(&mut r)?,
                    bias: read_tensor(&mut r)?,
                    theta_out: read_tensor(&mut r)?,
                    input_scale: read_tensor(&mut r)?,
                });
            }
            let net = NetworkSpec {
                layers,
                timesteps,
                tau,
                comparator,
                rounding,
                input_encoding,
            };
            net.validate().map_err(corrupt)?;
            Ok(Model::Snn(net))
        }
        1 => {
            let count = r.read_u32::<LE>().map_err(io_corrupt)?;
            let headers = (0..count).map(|_| read_header(&mut r)).collect::<Result<Vec<_>>>()?;
            let mut layers = Vec::with_capacity(headers.len());
            for h in &headers {
                let g = h.geometry.map(|v| v as usize);
                let activation = code_activation(h.activation)?;
                layers.push(match h.kind {
                    0 | 1 => AnnLayer::Affine {
                        shape: geometry_shape(h.kind, h.geometry)?,
                        weights: read_tensor(&mut r)?,
                        bias: read_tensor(&mut r)?,
                        activation,
                    },
                    2 => AnnLayer::BatchNorm {
                        channels: g[0],
                        spatial: g[1],
                        gamma: read_tensor(&mut r)?,
                        beta: read_tensor(&mut r)?,
                        mean: read_tensor(&mut r)?,
                        var: read_tensor(&mut r)?,
                        eps: h.eps,
                        activation,
                    },
                    3 => AnnLayer::AvgPool {
                        channels: g[0],
                        in_height: g[1],
                        in_width: g[2],
                        kernel: g[3],
                        stride: g[4],
                    },
                    other => return Err(Error::UnsupportedLayer(format!("ANN layer kind {other}"))),
                });
            }
            let model = AnnModel { layers };
            model.validate().map_err(corrupt)?;
            Ok(Model::Ann(model))
        }
        other => Err(corrupt(format!("unknown model type {other}"))),
    }
}

pub fn save_model(path: &Path, model: &Model) -> Result<()> {
    write_model(BufWriter::new(File::create(path)?), model)
}

pub fn load_model(path: &Path) -> Result<Model> {
    read_model(BufReader::new(File::open(path)?))
}

/// Rounds every stored value through f32, matching what a save/load cycle yields.
pub fn round_trip_precision(model: &Model) -> Result<Model> {
    let mut buf = Vec::new();
    write_model(&mut buf, model)?;
    read_model(buf.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::init_dense_network;

    fn ann() -> AnnModel {
        AnnModel::new(vec![
            AnnLayer::Affine {
                shape: LayerShape::Conv2d(Conv2dGeometry {
                    in_channels: 1,
                    in_height: 4,
                    in_width: 4,
                    out_channels: 2,
                    kernel_h: 3,
                    kernel_w: 3,
                    stride: 1,
                    padding: 1,
                }),
                weights: (0..18).map(|i| i as f64 / 8.0).collect(),
                bias: vec![0.5, -0.25],
                activation: Activation::Identity,
            },
            AnnLayer::BatchNorm {
                channels: 2,
                spatial: 16,
                gamma: vec![1.0, 2.0],
                beta: vec![0.0, 0.5],
                mean: vec![0.25, 0.0],
                var: vec![1.0, 4.0],
                eps: 1e-5,
                activation: Activation::Relu,
            },
            AnnLayer::AvgPool {
                channels: 2,
                in_height: 4,
                in_width: 4,
                kernel: 2,
                stride: 2,
            },
            AnnLayer::Affine {
                shape: LayerShape::Dense { inputs: 8, outputs: 3 },
                weights: vec![0.125; 24],
                bias: vec![0.0; 3],
                activation: Activation::Identity,
            },
        ])
        .unwrap()
    }

    #[test]
    fn f32_exact_models_round_trip_unchanged() {
        let model = Model::Ann(ann());
        assert_eq!(round_trip_precision(&model).unwrap(), model);
        let mut net = init_dense_network(&[3, 4, 2], 8, 2.0, 0).unwrap();
        for l in &mut net.layers {
            for w in &mut l.weights {
                *w = (*w as f32) as f64;
            }
        }
        let model = Model::Snn(net);
        assert_eq!(round_trip_precision(&model).unwrap(), model);
    }

    #[test]
    fn truncation_and_bad_magic_are_corrupt() {
        let mut buf = Vec::new();
        write_model(&mut buf, &Model::Ann(ann())).unwrap();
        for cut in [0, 3, 7, 20, buf.len() - 1] {
            assert!(matches!(read_model(&buf[..cut]), Err(Error::Corrupt(_))), "cut {cut}");
        }
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_model(bad.as_slice()), Err(Error::Corrupt(_))));
        let mut wrong_version = buf;
        wrong_version[4] = 9;
        assert!(matches!(read_model(wrong_version.as_slice()), Err(Error::Corrupt(_))));
    }
}
