use std::path::Path;

use super::{NetworkParams, NetworkSpec};
use crate::{Error, Result};

/// First eight bytes of every checkpoint.
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MESCNET1";

/// Serialises the parameters as: magic, `u32` tensor-pair count, then per
/// layer five `u32` fields (kernel small channels, kernel large channels,
/// kernel height, kernel width, bias length), then every kernel and bias as
/// little-endian `f64`, encoder first.
pub fn write_checkpoint(params: &NetworkParams) -> Vec<u8> {
    let spec = &params.spec;
    let layers: Vec<_> = spec.encoder.iter().chain(&spec.decoder).collect();
    let mut out = Vec::with_capacity(12 + layers.len() * 20 + params.parameter_count() * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(layers.len() as u32).to_le_bytes());
    let encoder_depth = spec.encoder.len();
    for (i, l) in layers.iter().enumerate() {
        let (small, large) = if i < encoder_depth {
            (l.out_channels, l.in_channels)
        } else {
            (l.in_channels, l.out_channels)
        };
        for v in [
            small,
            large,
            l.kernel_height,
            l.kernel_width,
            l.out_channels,
        ] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
    }
    for t in params.tensors() {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn header_error(path: &Path, reason: impl Into<String>) -> Error {
    Error::MalformedHeader {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Parses a checkpoint written for `spec`. Any disagreement between the
/// stored layer shapes and `spec` is a header error.
pub fn read_checkpoint(bytes: &[u8], spec: &NetworkSpec, path: &Path) -> Result<NetworkParams> {
    spec.validate()?;
    if bytes.len() < 12 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(header_error(path, "not a network checkpoint"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
    let count = word(8);
    let expected = write_checkpoint(&NetworkParams::zeros(spec));
    let header_len = 12 + 20 * count;
    if bytes.len() < header_len {
        return Err(header_error(path, "truncated layer table"));
    }
    let expected_header = 12 + 20 * (spec.encoder.len() + spec.decoder.len());
    if header_len != expected_header || bytes[..header_len] != expected[..header_len] {
        return Err(header_error(path, "layer shapes do not match the network"));
    }
    if bytes.len() != expected.len() {
        return Err(Error::PayloadLength {
            path: path.to_path_buf(),
            expected: expected.len() as u64,
            actual: bytes.len() as u64,
        });
    }
    let mut params = NetworkParams::zeros(spec);
    let mut values = bytes[header_len..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            *v = values.next().expect("length checked");
            if !v.is_finite() {
                return Err(Error::Domain(format!(
                    "{}: non-finite parameter",
                    path.display()
                )));
            }
        }
    }
    Ok(params)
}

pub fn save_checkpoint(params: &NetworkParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_checkpoint(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>, spec: &NetworkSpec) -> Result<NetworkParams> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes, spec, path)
}
