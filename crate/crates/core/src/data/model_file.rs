//! Binary model file.
//!
//! ```text
//! "LSPM"                         4 bytes
//! format_version = 1             u32 LE
//! input_dim, z_s_dim, z_ns_dim,
//! n_sensitive_classes            4 × u32 LE
//! encoder hidden: count, widths  u32 LE each
//! decoder hidden: count, widths
//! discriminator hidden: count, widths
//! parameters                     f32 LE, row-major, in LspModel::params() order
//! CRC-32 of all preceding bytes  u32 LE
//! ```

use std::path::Path;

use super::DataError;
use crate::model::{init_model, LspModel, ModelSpec};

pub const MAGIC: &[u8; 4] = b"LSPM";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode_model(model: &LspModel) -> Vec<u8> {
    let spec = &model.spec;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let mut put = |v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
    put(FORMAT_VERSION as usize);
    put(spec.input_dim);
    put(spec.z_s_dim);
    put(spec.z_ns_dim);
    put(spec.n_sensitive_classes);
    for hidden in [&spec.encoder_hidden, &spec.decoder_hidden, &spec.disc_hidden] {
        put(hidden.len());
        hidden.iter().for_each(|&w| put(w));
    }
    for p in model.params() {
        for &v in p.value.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn u32(&mut self, what: &str) -> Result<u32, DataError> {
        let b = self
            .bytes
            .get(self.pos..self.pos + 4)
            .ok_or_else(|| DataError::Length(format!("file ends at byte {} while reading {what}", self.bytes.len())))?;
        self.pos += 4;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn widths(&mut self, what: &str) -> Result<Vec<usize>, DataError> {
        let n = self.u32(what)? as usize;
        if n > 64 {
            return Err(DataError::Format {
                offset: self.pos - 4,
                message: format!("{what}: implausible layer count {n}"),
            });
        }
        (0..n).map(|_| self.u32(what).map(|v| v as usize)).collect()
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<LspModel, DataError> {
    if bytes.len() < 12 {
        return Err(DataError::Length(format!(
            "{} bytes is shorter than the fixed header",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(DataError::Format {
            offset: 0,
            message: format!("bad magic {:02x?}", &bytes[..4]),
        });
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.u32("format version")?;
    if version > FORMAT_VERSION {
        return Err(DataError::UnsupportedVersion(version));
    }
    if version == 0 {
        return Err(DataError::Format {
            offset: 4,
            message: "format version 0 is invalid".into(),
        });
    }
    let input_dim = r.u32("input_dim")? as usize;
    let z_s_dim = r.u32("z_s_dim")? as usize;
    let z_ns_dim = r.u32("z_ns_dim")? as usize;
    let n_sensitive_classes = r.u32("n_sensitive_classes")? as usize;
    let spec = ModelSpec {
        input_dim,
        z_s_dim,
        z_ns_dim,
        n_sensitive_classes,
        encoder_hidden: r.widths("encoder widths")?,
        decoder_hidden: r.widths("decoder widths")?,
        disc_hidden: r.widths("discriminator widths")?,
    };
    spec.validate().map_err(|e| DataError::Format {
        offset: 8,
        message: e.to_string(),
    })?;
    let n_params = spec.param_count().ok_or_else(|| DataError::Format {
        offset: 8,
        message: "dimensions overflow the parameter count".into(),
    })?;
    let expected = n_params
        .checked_mul(4)
        .and_then(|b| b.checked_add(r.pos + 4))
        .filter(|&e| e == bytes.len())
        .ok_or_else(|| {
            DataError::Length(format!(
                "file has {} bytes, dimensions require {} parameters",
                bytes.len(),
                n_params
            ))
        })?;
    let body = &bytes[..expected - 4];
    let stored = u32::from_le_bytes(bytes[expected - 4..].try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(DataError::Checksum { stored, computed });
    }
    let mut model = init_model(&spec, 0).map_err(|e| DataError::Invalid(e.to_string()))?;

    let mut pos = r.pos;
    for p in model.params_mut() {
        for v in p.value.data_mut() {
            let b: [u8; 4] = bytes[pos..pos + 4].try_into().expect("4 bytes");
            *v = f32::from_le_bytes(b) as f64;
            pos += 4;
        }
    }
    Ok(model)
}

pub fn save_model(model: &LspModel, path: &Path) -> Result<(), DataError> {
    std::fs::write(path, encode_model(model)).map_err(|e| DataError::io(path, e))
}

pub fn load_model(path: &Path) -> Result<LspModel, DataError> {
    let bytes = std::fs::read(path).map_err(|e| DataError::io(path, e))?;
    decode_model(&bytes)
}
