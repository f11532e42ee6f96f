//! Binary batch cache, version 1. All integers little-endian.
//!
//! ```text
//! magic "URGBATC1"
//! u32 steps, u32 batch, u32 channels
//! f64 inputs[steps][batch][channels]
//! u8 target kind: 0 = classes, 1 = regression
//! classes:    u32 classes, u32 k, u32 steps[k], u32 labels[k][batch]
//! regression: u32 step, f64 values[batch]
//! ```

use std::path::Path;

use super::{Target, TaskBatch};
use crate::error::{Error, Result};
use crate::ndmath::Matrix;

pub const BATCH_CACHE_MAGIC: &[u8; 8] = b"URGBATC1";

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn batch_cache_bytes(b: &TaskBatch) -> Vec<u8> {
    let mut out = BATCH_CACHE_MAGIC.to_vec();
    put_u32(&mut out, b.len());
    put_u32(&mut out, b.batch_size());
    put_u32(&mut out, b.channels());
    for m in &b.inputs {
        for &v in m.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    match &b.target {
        Target::Classes { steps, labels, classes } => {
            out.push(0);
            put_u32(&mut out, *classes);
            put_u32(&mut out, steps.len());
            steps.iter().for_each(|&s| put_u32(&mut out, s));
            labels.iter().flatten().for_each(|&l| put_u32(&mut out, l));
        }
        Target::Regression { step, values } => {
            out.push(1);
            put_u32(&mut out, *step);
            values.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        }
    }
    out
}

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.at < n {
            return Err(Error::Format {
                path: self.path.to_path_buf(),
                offset: self.at as u64,
                reason: format!("truncated while reading {what}"),
            });
        }
        self.at += n;
        Ok(&self.bytes[self.at - n..self.at])
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn parse_batch_cache(path: &Path, bytes: &[u8]) -> Result<TaskBatch> {
    let mut r = Reader { path, bytes, at: 0 };
    if r.take(8, "magic")? != BATCH_CACHE_MAGIC {
        return Err(Error::Format { path: path.into(), offset: 0, reason: "bad magic".into() });
    }
    let (steps, batch, ch) = (r.u32("steps")?, r.u32("batch")?, r.u32("channels")?);
    let mut inputs = Vec::with_capacity(steps);
    for _ in 0..steps {
        let data = (0..batch * ch).map(|_| r.f64("inputs")).collect::<Result<Vec<_>>>()?;
        inputs.push(Matrix::from_vec(batch, ch, data)?);
    }
    let kind_at = r.at;
    let target = match r.take(1, "target kind")?[0] {
        0 => {
            let classes = r.u32("classes")?;
            let k = r.u32("scored step count")?;
            let steps = (0..k).map(|_| r.u32("scored steps")).collect::<Result<Vec<_>>>()?;
            let labels = (0..k)
                .map(|_| (0..batch).map(|_| r.u32("labels")).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?;
            Target::Classes { steps, labels, classes }
        }
        1 => {
            let step = r.u32("target step")?;
            let values = (0..batch).map(|_| r.f64("targets")).collect::<Result<Vec<_>>>()?;
            Target::Regression { step, values }
        }
        k => {
            return Err(Error::Format {
                path: path.into(),
                offset: kind_at as u64,
                reason: format!("unknown target kind {k}"),
            })
        }
    };
    if r.at != bytes.len() {
        return Err(Error::Format { path: path.into(), offset: r.at as u64, reason: "trailing bytes".into() });
    }
    Ok(TaskBatch { inputs, target })
}

pub fn write_batch_cache(path: &Path, b: &TaskBatch) -> Result<()> {
    crate::io::write_atomic(path, &batch_cache_bytes(b))
}

pub fn read_batch_cache(path: &Path) -> Result<TaskBatch> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_batch_cache(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndmath::Rng;
    use crate::tasks::{gen_adding, gen_copy};

    #[test]
    fn round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let a = gen_copy(2, 3, &mut Rng::new(1, 0)).unwrap().to_task();
        let b = gen_adding(6, 4, &mut Rng::new(2, 0)).unwrap().to_task();
        for (name, t) in [("c.bin", a), ("a.bin", b)] {
            let p = dir.path().join(name);
            write_batch_cache(&p, &t).unwrap();
            assert_eq!(read_batch_cache(&p).unwrap(), t);
            let bytes = std::fs::read(&p).unwrap();
            assert!(parse_batch_cache(&p, &bytes[..bytes.len() - 1]).is_err());
        }
    }
}
