//! Binary network checkpoints.
//!
//! Layout (little-endian):
//!
//! | field        | type              |
//! |--------------|-------------------|
//! | magic        | `b"HVQN"`         |
//! | version      | `u32`             |
//! | layer count  | `u32` (sizes, input included) |
//! | sizes        | `u64` each        |
//! | parameters   | `f64` each, in [`QNetwork::parameters`] order |

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::QNetwork;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"HVQN";
pub const CHECKPOINT_VERSION: u32 = 1;
const MAX_LAYERS: u32 = 64;
const MAX_WIDTH: u64 = 1 << 24;

pub fn write_checkpoint<W: Write>(net: &QNetwork, mut w: W) -> Result<()> {
    let sizes = net.sizes();
    w.write_all(&CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(sizes.len() as u32).to_le_bytes())?;
    for s in &sizes {
        w.write_all(&(*s as u64).to_le_bytes())?;
    }
    for p in net.parameters() {
        w.write_all(&p.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<QNetwork> {
    if read_array::<4, _>(&mut r)? != CHECKPOINT_MAGIC {
        return Err(Error::invalid("not a network checkpoint (bad magic)"));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != CHECKPOINT_VERSION {
        return Err(Error::invalid(format!("unsupported checkpoint version {version}")));
    }
    let n = u32::from_le_bytes(read_array(&mut r)?);
    if !(2..=MAX_LAYERS).contains(&n) {
        return Err(Error::invalid(format!("checkpoint lists {n} layer sizes")));
    }
    let mut sizes = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let s = u64::from_le_bytes(read_array(&mut r)?);
        if s == 0 || s > MAX_WIDTH {
            return Err(Error::invalid(format!("checkpoint layer width {s} out of range")));
        }
        sizes.push(s as usize);
    }
    let mut net = QNetwork::zeros(&sizes)?;
    let mut params = Vec::with_capacity(net.num_parameters());
    for _ in 0..net.num_parameters() {
        params.push(f64::from_le_bytes(read_array(&mut r)?));
    }
    let mut tail = [0u8; 1];
    if r.read(&mut tail)? != 0 {
        return Err(Error::invalid("trailing bytes after checkpoint parameters"));
    }
    net.set_parameters(&params)?;
    Ok(net)
}

pub fn save_checkpoint(net: &QNetwork, path: &Path) -> Result<()> {
    write_checkpoint(net, BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint(path: &Path) -> Result<QNetwork> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
