//! Flat little-endian checkpoint format.
//!
//! ```text
//! magic        8 bytes  "T2MACNN\0"
//! version      u32      1
//! input_dim    u32
//! hidden       u32
//! n_agents     u32
//! n_actions    u32
//! cell         u32      0 = gru, 1 = tanh
//! q_head       u32      0 or 1
//! seed         u64
//! tensors      u32      count
//! per tensor:  u32 name length, name (utf-8), u64 value count, f64 values
//! ```
//!
//! Tensors appear in declaration order: encoder layers, recurrent cell,
//! evidence heads, selector, optional q head, mixer temperatures and bias.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{AgentNetwork, CellKind, NetworkShape, NeuralError, Parameters};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"T2MACNN\0";
const VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(net: &AgentNetwork, mut out: W) -> Result<(), NeuralError> {
    let s = &net.shape;
    out.write_all(CHECKPOINT_MAGIC)?;
    let cell = match s.cell {
        CellKind::Gru => 0u32,
        CellKind::Tanh => 1,
    };
    for v in [VERSION, s.input_dim as u32, s.hidden as u32, s.n_agents as u32, s.n_actions as u32, cell, s.q_head as u32] {
        out.write_all(&v.to_le_bytes())?;
    }
    out.write_all(&net.seed.to_le_bytes())?;
    let mut tensors: Vec<(String, Vec<f64>)> = Vec::new();
    net.visit(&mut |name, values| tensors.push((name.to_string(), values.to_vec())));
    out.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for (name, values) in tensors {
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&(values.len() as u64).to_le_bytes())?;
        for v in values {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<AgentNetwork, NeuralError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(NeuralError::Checkpoint("bad magic".into()));
    }
    let version = read_u32(&mut input)?;
    if version != VERSION {
        return Err(NeuralError::Checkpoint(format!("unsupported version {version}")));
    }
    let mut header = [0usize; 6];
    for slot in &mut header {
        *slot = read_u32(&mut input)? as usize;
    }
    let [input_dim, hidden, n_agents, n_actions, cell, q_head] = header;
    let cell = match cell {
        0 => CellKind::Gru,
        1 => CellKind::Tanh,
        other => return Err(NeuralError::Checkpoint(format!("unknown cell kind {other}"))),
    };
    let shape = NetworkShape {
        input_dim,
        hidden,
        n_agents,
        n_actions,
        cell,
        q_head: q_head != 0,
    };
    let mut buf8 = [0u8; 8];
    input.read_exact(&mut buf8)?;
    let seed = u64::from_le_bytes(buf8);
    let mut net = AgentNetwork::zeros(shape);
    net.seed = seed;
    let count = read_u32(&mut input)? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let len = read_u32(&mut input)? as usize;
        let mut name = vec![0u8; len];
        input.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
        input.read_exact(&mut buf8)?;
        let n = u64::from_le_bytes(buf8) as usize;
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            input.read_exact(&mut buf8)?;
            values.push(f64::from_le_bytes(buf8));
        }
        tensors.push((name, values));
    }
    let mut mismatch = None;
    let mut idx = 0;
    net.visit_mut(&mut |name, slot| {
        match tensors.get(idx) {
            Some((n, v)) if n == name && v.len() == slot.len() => slot.copy_from_slice(v),
            _ if mismatch.is_none() => mismatch = Some(name.to_string()),
            _ => {}
        }
        idx += 1;
    });
    if let Some(name) = mismatch {
        return Err(NeuralError::Checkpoint(format!("tensor `{name}` missing or mis-sized")));
    }
    if idx != tensors.len() {
        return Err(NeuralError::Checkpoint(format!("expected {idx} tensors, found {}", tensors.len())));
    }
    Ok(net)
}

pub fn save_checkpoint(net: &AgentNetwork, path: &Path) -> Result<(), NeuralError> {
    write_checkpoint(net, BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint(path: &Path) -> Result<AgentNetwork, NeuralError> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32, NeuralError> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut shape = NetworkShape::new(9, 2, 3);
        shape.q_head = true;
        let net = AgentNetwork::new(shape, 11, 2.5);
        let mut bytes = Vec::new();
        write_checkpoint(&net, &mut bytes).unwrap();
        let back = read_checkpoint(bytes.as_slice()).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_checkpoint(&b"NOTACKPT00000000"[..]).is_err());
        let net = AgentNetwork::new(NetworkShape::new(4, 2, 2), 0, 1.0);
        let mut bytes = Vec::new();
        write_checkpoint(&net, &mut bytes).unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(read_checkpoint(bytes.as_slice()).is_err());
    }
}
