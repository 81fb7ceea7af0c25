//! `TTP1` checkpoints: the magic bytes, a model descriptor (kind tag and
//! dimensions as little-endian `u64`), the parameter count, then the
//! parameters as little-endian `f64`.

use std::fs;
use std::path::Path;

use ttp_core::{ModelSpec, ParamVector};

use crate::FormatError;

pub const MAGIC: &[u8; 4] = b"TTP1";
const TAG_LOGREG: u64 = 0;
const TAG_MLP: u64 = 1;

pub fn encode(w: &ParamVector) -> Vec<u8> {
    let dims: Vec<u64> = match w.spec {
        ModelSpec::LogReg { d, k } => vec![TAG_LOGREG, d as u64, k as u64],
        ModelSpec::Mlp { d, h, k } => vec![TAG_MLP, d as u64, h as u64, k as u64],
    };
    let mut out = Vec::with_capacity(4 + 8 * (dims.len() + 1 + w.len()));
    out.extend_from_slice(MAGIC);
    for v in dims {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(w.len() as u64).to_le_bytes());
    for v in &w.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take8(&mut self, what: &str) -> Result<[u8; 8], FormatError> {
        let b = self.buf.get(self.pos..self.pos + 8).ok_or_else(|| {
            FormatError::at(self.pos, format!("truncated checkpoint reading {what}"))
        })?;
        self.pos += 8;
        Ok(b.try_into().expect("slice of length 8"))
    }

    fn u64(&mut self, what: &str) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take8(what)?))
    }

    fn dim(&mut self, what: &str) -> Result<usize, FormatError> {
        let at = self.pos;
        usize::try_from(self.u64(what)?)
            .map_err(|_| FormatError::at(at, format!("{what} does not fit in memory")))
    }
}

pub fn decode(buf: &[u8]) -> Result<ParamVector, FormatError> {
    if buf.get(..4) != Some(&MAGIC[..]) {
        return Err(FormatError::at(0, "missing TTP1 magic".into()));
    }
    let mut r = Reader { buf, pos: 4 };
    let spec = match r.u64("model tag")? {
        TAG_LOGREG => ModelSpec::LogReg {
            d: r.dim("input dimension")?,
            k: r.dim("class count")?,
        },
        TAG_MLP => ModelSpec::Mlp {
            d: r.dim("input dimension")?,
            h: r.dim("hidden width")?,
            k: r.dim("class count")?,
        },
        t => return Err(FormatError::at(4, format!("unknown model tag {t}"))),
    };
    spec.validate()
        .map_err(|e| FormatError::at(12, e.to_string()))?;
    let count_at = r.pos;
    let count = r.dim("parameter count")?;
    if count != spec.param_count() {
        return Err(FormatError::at(
            count_at,
            format!(
                "parameter count {count} does not match {} for {}",
                spec.param_count(),
                spec.name()
            ),
        ));
    }
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        values.push(f64::from_le_bytes(r.take8("parameters")?));
    }
    if r.pos != buf.len() {
        return Err(FormatError::at(
            r.pos,
            "trailing bytes after parameters".into(),
        ));
    }
    ParamVector::new(spec, values).map_err(|e| FormatError::at(count_at, e.to_string()))
}

pub fn save(path: &Path, w: &ParamVector) -> Result<(), FormatError> {
    fs::write(path, encode(w)).map_err(|e| FormatError::io(path, e))
}

pub fn load(path: &Path) -> Result<ParamVector, FormatError> {
    let buf = fs::read(path).map_err(|e| FormatError::io(path, e))?;
    decode(&buf).map_err(|e| e.in_file(path))
}
