//! Little-endian binary rasters: probability maps (`PMAPv001`), label maps
//! (`LMAPv001`) and instance maps (`IMAPv001`).
//!
//! Every file is an 8-byte magic, `u32` height and width (plus `u32` class
//! count for probability maps), then the row-major payload.

use std::fs;
use std::path::Path;

use crate::consequence::InstanceMap;
use crate::decision::{LabelMap, ProbabilityMap};
use crate::error::{Error, Result};

pub const PMAP_MAGIC: &[u8; 8] = b"PMAPv001";
pub const LMAP_MAGIC: &[u8; 8] = b"LMAPv001";
pub const IMAP_MAGIC: &[u8; 8] = b"IMAPv001";

struct Cursor<'a> {
    file: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(file: &'a str, bytes: &'a [u8]) -> Self {
        Self {
            file,
            bytes,
            pos: 0,
        }
    }

    fn take(&mut self, n: u64) -> Result<&'a [u8]> {
        let available = (self.bytes.len() - self.pos) as u64;
        if n > available {
            return Err(Error::TruncatedFile {
                file: self.file.to_string(),
                offset: self.pos as u64,
                needed: n,
            });
        }
        let out = &self.bytes[self.pos..self.pos + n as usize];
        self.pos += n as usize;
        Ok(out)
    }

    fn magic(&mut self, expected: &[u8; 8]) -> Result<()> {
        let mismatch = || Error::MagicMismatch {
            file: self.file.to_string(),
            expected: String::from_utf8_lossy(expected).into_owned(),
        };
        if self.bytes.len() < 8 {
            return Err(mismatch());
        }
        if self.take(8)? != expected {
            return Err(mismatch());
        }
        Ok(())
    }

    fn dim(&mut self, field: &str) -> Result<usize> {
        let raw = self.take(4)?;
        let v = u32::from_le_bytes(raw.try_into().expect("4 bytes"));
        if v == 0 {
            return Err(self.dim_error(field, "must be positive".into()));
        }
        Ok(v as usize)
    }

    fn payload(&mut self, elements: &[usize], elem_size: u64, field: &str) -> Result<&'a [u8]> {
        let n = elements
            .iter()
            .try_fold(elem_size, |acc, &d| acc.checked_mul(d as u64))
            .ok_or_else(|| self.dim_error(field, format!("{elements:?} overflows")))?;
        let data = self.take(n)?;
        if self.pos != self.bytes.len() {
            let extra = self.bytes.len() - self.pos;
            return Err(self.dim_error(field, format!("{extra} bytes beyond the declared size")));
        }
        Ok(data)
    }

    fn dim_error(&self, field: &str, detail: String) -> Error {
        Error::DimensionMismatch {
            file: self.file.to_string(),
            field: field.to_string(),
            detail,
        }
    }
}

fn header(out: &mut Vec<u8>, magic: &[u8; 8], dims: &[usize]) {
    out.extend_from_slice(magic);
    for &d in dims {
        out.extend_from_slice(
            &u32::try_from(d)
                .expect("dimension fits in u32")
                .to_le_bytes(),
        );
    }
}

pub fn encode_pmap(pm: &ProbabilityMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + 4 * pm.data().len());
    header(
        &mut out,
        PMAP_MAGIC,
        &[pm.height(), pm.width(), pm.n_classes()],
    );
    for v in pm.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// `file` names the source in error messages.
pub fn decode_pmap(bytes: &[u8], file: &str) -> Result<ProbabilityMap> {
    let mut c = Cursor::new(file, bytes);
    c.magic(PMAP_MAGIC)?;
    let h = c.dim("height")?;
    let w = c.dim("width")?;
    let n = c.dim("n_classes")?;
    let data = c
        .payload(&[h, w, n], 4, "payload")?
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    ProbabilityMap::new(h, w, n, data)
}

pub fn encode_lmap(lm: &LabelMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + lm.labels().len());
    header(&mut out, LMAP_MAGIC, &[lm.height(), lm.width()]);
    out.extend_from_slice(lm.labels());
    out
}

pub fn decode_lmap(bytes: &[u8], file: &str) -> Result<LabelMap> {
    let mut c = Cursor::new(file, bytes);
    c.magic(LMAP_MAGIC)?;
    let h = c.dim("height")?;
    let w = c.dim("width")?;
    let labels = c.payload(&[h, w], 1, "payload")?.to_vec();
    LabelMap::new(h, w, labels)
}

pub fn encode_imap(im: &InstanceMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 2 * im.ids().len());
    header(&mut out, IMAP_MAGIC, &[im.height(), im.width()]);
    for v in im.ids() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_imap(bytes: &[u8], file: &str) -> Result<InstanceMap> {
    let mut c = Cursor::new(file, bytes);
    c.magic(IMAP_MAGIC)?;
    let h = c.dim("height")?;
    let w = c.dim("width")?;
    let ids = c
        .payload(&[h, w], 2, "payload")?
        .chunks_exact(2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]))
        .collect();
    InstanceMap::new(h, w, ids)
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_pmap(path: impl AsRef<Path>) -> Result<ProbabilityMap> {
    let path = path.as_ref();
    decode_pmap(&read_bytes(path)?, &path.display().to_string())
}

pub fn write_pmap(path: impl AsRef<Path>, pm: &ProbabilityMap) -> Result<()> {
    write_bytes(path.as_ref(), &encode_pmap(pm))
}

pub fn read_lmap(path: impl AsRef<Path>) -> Result<LabelMap> {
    let path = path.as_ref();
    decode_lmap(&read_bytes(path)?, &path.display().to_string())
}

pub fn write_lmap(path: impl AsRef<Path>, lm: &LabelMap) -> Result<()> {
    write_bytes(path.as_ref(), &encode_lmap(lm))
}

pub fn read_imap(path: impl AsRef<Path>) -> Result<InstanceMap> {
    let path = path.as_ref();
    decode_imap(&read_bytes(path)?, &path.display().to_string())
}

pub fn write_imap(path: impl AsRef<Path>, im: &InstanceMap) -> Result<()> {
    write_bytes(path.as_ref(), &encode_imap(im))
}

/// Reads only the `(height, width)` header of any of the three formats.
pub fn read_dims(path: impl AsRef<Path>) -> Result<(usize, usize)> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let file = path.display().to_string();
    let mut c = Cursor::new(&file, &bytes);
    let magic = c.take(8).map_err(|_| Error::MagicMismatch {
        file: file.clone(),
        expected: "PMAPv001, LMAPv001 or IMAPv001".into(),
    })?;
    if ![PMAP_MAGIC, LMAP_MAGIC, IMAP_MAGIC]
        .iter()
        .any(|m| m.as_slice() == magic)
    {
        return Err(Error::MagicMismatch {
            file,
            expected: "PMAPv001, LMAPv001 or IMAPv001".into(),
        });
    }
    Ok((c.dim("height")?, c.dim("width")?))
}
