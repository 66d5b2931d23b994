//! Binary decoder checkpoints.
//!
//! Little-endian layout: magic `NSQL`, format version u32, layer count u32,
//! then per layer rows u32, cols u32, row-major f64 weights, f64 biases,
//! then the two activation enums as u8. Round-trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensorcore::{Activation, DecoderParams, Layer, OutputActivation, Tensor};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"NSQL";
pub const CHECKPOINT_VERSION: u32 = 1;

fn activation_code(a: Activation) -> u8 {
    match a {
        Activation::Relu => 0,
        Activation::Tanh => 1,
    }
}

fn activation_from(code: u8) -> Result<Activation> {
    match code {
        0 => Ok(Activation::Relu),
        1 => Ok(Activation::Tanh),
        other => Err(Error::Format(format!("unknown activation code {other}"))),
    }
}

fn output_activation_code(a: OutputActivation) -> u8 {
    match a {
        OutputActivation::Sigmoid => 0,
        OutputActivation::Identity => 1,
    }
}

fn output_activation_from(code: u8) -> Result<OutputActivation> {
    match code {
        0 => Ok(OutputActivation::Sigmoid),
        1 => Ok(OutputActivation::Identity),
        other => Err(Error::Format(format!(
            "unknown output activation code {other}"
        ))),
    }
}

pub fn save_decoder(path: &Path, params: &DecoderParams) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(params.layers.len() as u32).to_le_bytes())?;
    for layer in &params.layers {
        w.write_all(&(layer.out_dim() as u32).to_le_bytes())?;
        w.write_all(&(layer.in_dim() as u32).to_le_bytes())?;
        for v in layer.weight.data() {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in layer.bias.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.write_all(&[
        activation_code(params.activation),
        output_activation_code(params.output_activation),
    ])?;
    w.flush()?;
    Ok(())
}

pub fn load_decoder(path: &Path) -> Result<DecoderParams> {
    let mut r = BufReader::new(File::open(path)?);

    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Format(format!(
            "bad checkpoint magic {:02x?}, expected {:02x?}",
            magic, CHECKPOINT_MAGIC
        )));
    }
    let version = read_u32(&mut r, "version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let layer_count = read_u32(&mut r, "layer count")? as usize;
    let mut layers = Vec::with_capacity(layer_count);
    for l in 0..layer_count {
        let rows = read_u32(&mut r, "rows")? as usize;
        let cols = read_u32(&mut r, "cols")? as usize;
        let mut weight = vec![0.0f64; rows * cols];
        read_f64s(&mut r, &mut weight, l, "weights")?;
        let mut bias = vec![0.0f64; rows];
        read_f64s(&mut r, &mut bias, l, "biases")?;
        layers.push(Layer::new(
            Tensor::matrix(rows, cols, weight)?,
            Tensor::vector(bias)?,
        )?);
    }
    let mut codes = [0u8; 2];
    read_exact(&mut r, &mut codes, "activation codes")?;
    DecoderParams::new(
        layers,
        activation_from(codes[0])?,
        output_activation_from(codes[1])?,
    )
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Length(format!("checkpoint truncated while reading {what}")))
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf, what)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64s(r: &mut impl Read, out: &mut [f64], layer: usize, what: &str) -> Result<()> {
    let mut buf = [0u8; 8];
    for v in out.iter_mut() {
        read_exact(r, &mut buf, &format!("layer {layer} {what}"))?;
        *v = f64::from_le_bytes(buf);
    }
    Ok(())
}
