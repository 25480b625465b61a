//! Model checkpoint files: magic, spec JSON, named f64 parameter blocks and
//! the input scale.

use std::fs;
use std::path::Path;

use dyadkit_core::binio::{FormatError, Reader, Writer};

use crate::models::{Model, ModelSpec, ParamBlock};
use crate::NnError;

pub const MAGIC: &[u8; 8] = b"MODL0001";
const SCALE_BLOCK: &str = "input_scale";

fn write_block(w: &mut Writer, name: &str, shape: &[usize], data: &[f64]) {
    w.string(name);
    w.u32(shape.len() as u32);
    for d in shape {
        w.u32(*d as u32);
    }
    for v in data {
        w.f64(*v);
    }
}

pub fn encode(model: &Model) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(MAGIC);
    w.string(&serde_json::to_string(model.spec()).expect("spec serializes"));
    w.u32(model.blocks().len() as u32 + 1);
    for b in model.blocks() {
        write_block(&mut w, &b.name, &b.shape, &b.data);
    }
    write_block(&mut w, SCALE_BLOCK, &[model.input_scale().len()], model.input_scale());
    w.into_inner()
}

fn read_block(r: &mut Reader) -> Result<ParamBlock, FormatError> {
    let name = r.string()?;
    let ndim = r.count(4)?;
    let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
    let len = shape.iter().try_fold(1usize, |a, d| a.checked_mul(*d));
    let len = match len {
        Some(n) if n.saturating_mul(8) <= r.remaining() => n,
        _ => return Err(FormatError::Truncated { offset: r.position() }),
    };
    let data = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
    Ok(ParamBlock { name, shape, data })
}

pub fn decode(bytes: &[u8]) -> Result<Model, NnError> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    let spec: ModelSpec = serde_json::from_str(&r.string()?)
        .map_err(|e| FormatError::Invalid(format!("bad model spec: {e}")))?;
    spec.validate()?;
    let n = r.count(5)?;
    if n == 0 {
        return Err(FormatError::Invalid("checkpoint holds no blocks".into()).into());
    }
    let mut blocks = (0..n).map(|_| read_block(&mut r)).collect::<Result<Vec<_>, _>>()?;
    r.finish()?;
    let scale = blocks.pop().expect("n > 0");
    if scale.name != SCALE_BLOCK {
        return Err(FormatError::Invalid(format!("last block is {:?}, expected {SCALE_BLOCK:?}", scale.name)).into());
    }
    if blocks.iter().flat_map(|b| &b.data).any(|v| !v.is_finite()) {
        return Err(FormatError::Invalid("non-finite parameter".into()).into());
    }
    Model::from_parts(spec, blocks, scale.data)
}

pub fn save(model: &Model, path: &Path) -> Result<(), NnError> {
    fs::write(path, encode(model))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Model, NnError> {
    decode(&fs::read(path)?)
}
