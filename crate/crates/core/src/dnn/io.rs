//! Weight file: `VADW`, version byte, four LE u32 (input, hidden, output,
//! reserved), then W1, b1, W2, b2 as LE f32, row-major.

use std::io::{Read, Write};
use std::path::Path;

use super::{DnnError, DnnWeights, HIDDEN, OUTPUTS};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"VADW";
pub const WEIGHTS_VERSION: u8 = 0x01;
const HEADER_LEN: usize = 4 + 1 + 16;

pub fn write_weights<W: Write>(mut out: W, w: &DnnWeights) -> Result<(), DnnError> {
    out.write_all(WEIGHTS_MAGIC)?;
    out.write_all(&[WEIGHTS_VERSION])?;
    for v in [w.input_dim as u32, HIDDEN as u32, OUTPUTS as u32, 0] {
        out.write_all(&v.to_le_bytes())?;
    }
    for v in w.w1.iter().chain(&w.b1).chain(&w.w2).chain(&w.b2) {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_weights<R: Read>(mut input: R) -> Result<DnnWeights, DnnError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() < 4 || &bytes[..4] != WEIGHTS_MAGIC {
        return Err(DnnError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(DnnError::TruncatedFile { needed: HEADER_LEN, have: bytes.len() });
    }
    if bytes[4] != WEIGHTS_VERSION {
        return Err(DnnError::UnsupportedVersion(bytes[4]));
    }
    let field = |i: usize| u32::from_le_bytes(bytes[5 + 4 * i..9 + 4 * i].try_into().unwrap()) as usize;
    let (input_dim, hidden, outputs, reserved) = (field(0), field(1), field(2), field(3));
    if hidden != HIDDEN || outputs != OUTPUTS || reserved != 0 {
        return Err(DnnError::DimHeaderMismatch(format!(
            "hidden={hidden} output={outputs} reserved={reserved}, expected {HIDDEN}/{OUTPUTS}/0"
        )));
    }
    let mut w = DnnWeights::zeros(input_dim);
    let needed = HEADER_LEN + 4 * w.param_count();
    if bytes.len() < needed {
        return Err(DnnError::TruncatedFile { needed, have: bytes.len() });
    }
    if bytes.len() > needed {
        return Err(DnnError::DimHeaderMismatch(format!("{} trailing bytes after payload", bytes.len() - needed)));
    }
    let mut values = bytes[HEADER_LEN..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()));
    for v in w.w1.iter_mut().chain(w.b1.iter_mut()).chain(w.w2.iter_mut()).chain(w.b2.iter_mut()) {
        *v = values.next().expect("length checked");
    }
    if !w.is_finite() {
        return Err(DnnError::NonFinite);
    }
    Ok(w)
}

pub fn save_weights(w: &DnnWeights, path: impl AsRef<Path>) -> Result<(), DnnError> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * w.param_count());
    write_weights(&mut buf, w)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<DnnWeights, DnnError> {
    read_weights(std::fs::File::open(path)?)
}
