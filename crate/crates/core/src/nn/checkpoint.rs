//! Binary parameter checkpoints.
//!
//! A network record is
//!
//! ```text
//! b"PMICNET\x01"
//! u32  number of widths, then that many u32 widths
//! u8   hidden activation code, u8 output activation code
//! u64  parameter count, then that many f64
//! ```
//!
//! and an optimizer record is
//!
//! ```text
//! b"PMICADM\x01"
//! u64 step count, f64 lr, beta1, beta2, eps
//! u64 length, then first moments, then second moments (f64)
//! ```
//!
//! All integers and floats are little-endian.

use std::io::{Read, Write};

use super::adam::AdamState;
use super::mlp::{Activation, MlpSpec, ParamVector};
use crate::error::{Error, Result};

const NET_MAGIC: &[u8; 8] = b"PMICNET\x01";
const ADAM_MAGIC: &[u8; 8] = b"PMICADM\x01";

pub fn write_network<W: Write>(w: &mut W, spec: &MlpSpec, params: &ParamVector) -> Result<()> {
    if params.len() != spec.param_count() {
        return Err(Error::dims("checkpoint parameters", spec.param_count(), params.len()));
    }
    w.write_all(NET_MAGIC)?;
    w.write_all(&(spec.layer_widths.len() as u32).to_le_bytes())?;
    for &width in &spec.layer_widths {
        w.write_all(&(width as u32).to_le_bytes())?;
    }
    w.write_all(&[spec.hidden_activation.code(), spec.output_activation.code()])?;
    write_f64s(w, params.values())
}

pub fn read_network<R: Read>(r: &mut R) -> Result<(MlpSpec, ParamVector)> {
    expect_magic(r, NET_MAGIC)?;
    let n = read_u32(r)? as usize;
    if n > 1024 {
        return Err(Error::Checkpoint(format!("implausible layer count {n}")));
    }
    let widths = (0..n)
        .map(|_| read_u32(r).map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let mut codes = [0u8; 2];
    r.read_exact(&mut codes)?;
    let act = |c| {
        Activation::from_code(c).ok_or_else(|| Error::Checkpoint(format!("unknown activation code {c}")))
    };
    let spec = MlpSpec::new(widths, act(codes[0])?, act(codes[1])?)?;
    let values = read_f64s(r)?;
    let params = ParamVector::from_values(spec.layout(), values)?;
    Ok((spec, params))
}

pub fn write_adam<W: Write>(w: &mut W, adam: &AdamState) -> Result<()> {
    w.write_all(ADAM_MAGIC)?;
    w.write_all(&adam.step_count.to_le_bytes())?;
    for v in [adam.lr, adam.beta1, adam.beta2, adam.eps] {
        w.write_all(&v.to_le_bytes())?;
    }
    write_f64s(w, &adam.first_moment)?;
    w.write_all(&adam.second_moment.iter().flat_map(|v| v.to_le_bytes()).collect::<Vec<_>>())?;
    Ok(())
}

pub fn read_adam<R: Read>(r: &mut R) -> Result<AdamState> {
    expect_magic(r, ADAM_MAGIC)?;
    let step_count = read_u64(r)?;
    let lr = read_f64(r)?;
    let beta1 = read_f64(r)?;
    let beta2 = read_f64(r)?;
    let eps = read_f64(r)?;
    let first_moment = read_f64s(r)?;
    let second_moment = (0..first_moment.len())
        .map(|_| read_f64(r))
        .collect::<Result<Vec<_>>>()?;
    Ok(AdamState {
        first_moment,
        second_moment,
        step_count,
        lr,
        beta1,
        beta2,
        eps,
    })
}

pub fn save_network(path: &std::path::Path, spec: &MlpSpec, params: &ParamVector) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_network(&mut f, spec, params)?;
    f.flush()?;
    Ok(())
}

pub fn load_network(path: &std::path::Path) -> Result<(MlpSpec, ParamVector)> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_network(&mut f)
}

fn expect_magic<R: Read>(r: &mut R, magic: &[u8; 8]) -> Result<()> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    if &buf != magic {
        return Err(Error::Checkpoint(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&buf),
            String::from_utf8_lossy(magic)
        )));
    }
    Ok(())
}

fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    w.write_all(&(values.len() as u64).to_le_bytes())?;
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    w.write_all(&bytes)?;
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R) -> Result<Vec<f64>> {
    let n = read_u64(r)? as usize;
    if n > (1 << 32) {
        return Err(Error::Checkpoint(format!("implausible array length {n}")));
    }
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
