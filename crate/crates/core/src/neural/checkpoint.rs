//! Binary parameter checkpoints.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic    8 bytes  "NSERMLP1"
//! input    u32
//! hidden   u32
//! output   u32
//! count    u64      number of f64 values that follow
//! params   count × f64
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::Mlp;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"NSERMLP1";

pub fn write_mlp<W: Write>(net: &Mlp, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    for dim in [net.input_dim(), net.hidden_dim(), net.output_dim()] {
        let dim = u32::try_from(dim).map_err(|_| Error::contract("layer size exceeds u32"))?;
        w.write_all(&dim.to_le_bytes())?;
    }
    w.write_all(&(net.num_params() as u64).to_le_bytes())?;
    for p in net.params() {
        w.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_mlp<R: Read>(mut r: R) -> Result<Mlp> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Parse("not an mlp checkpoint (bad magic)".into()));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        let mut b = [0u8; 4];
        r.read_exact(&mut b)?;
        *d = u32::from_le_bytes(b) as usize;
    }
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    let count = u64::from_le_bytes(b) as usize;
    let [input, hidden, output] = dims;
    if input == 0 || hidden == 0 || output == 0 {
        return Err(Error::Parse("checkpoint declares a zero-sized layer".into()));
    }
    let expected = Mlp::param_count(input, hidden, output);
    if count != expected {
        return Err(Error::Parse(format!(
            "checkpoint shape header {input}x{hidden}x{output} needs {expected} values, declares {count}"
        )));
    }
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        r.read_exact(&mut b)?;
        params.push(f64::from_le_bytes(b));
    }
    Mlp::from_flat(input, hidden, output, params).map_err(|e| Error::Parse(e.to_string()))
}

pub fn save_mlp(net: &Mlp, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_mlp(net, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_mlp(path: &Path) -> Result<Mlp> {
    let f = std::fs::File::open(path)?;
    read_mlp(std::io::BufReader::new(f))
}
