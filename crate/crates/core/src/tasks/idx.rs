//! IDX containers: big-endian magic `00 00 08 <ndims>`, one big-endian u32
//! per dimension, then unsigned bytes in row-major order.

use std::path::Path;

use crate::error::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Images stored as unsigned bytes, `count x rows x cols`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<u8>,
}

impl IdxImages {
    pub fn pixels(&self) -> usize {
        self.rows * self.cols
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.pixels();
        &self.data[i * n..(i + 1) * n]
    }

    /// Image `i` scaled to `[0, 1]`.
    pub fn image_f64(&self, i: usize) -> Vec<f64> {
        self.image(i).iter().map(|&b| b as f64 / 255.0).collect()
    }
}

fn fail(path: &Path, offset: usize, reason: impl Into<String>) -> Error {
    Error::Format { path: path.to_path_buf(), offset: offset as u64, reason: reason.into() }
}

fn read_u32(path: &Path, bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| fail(path, at, format!("truncated header: missing {what}")))
}

fn parse(path: &Path, bytes: &[u8], magic: u32) -> Result<(Vec<usize>, usize)> {
    let got = read_u32(path, bytes, 0, "magic")?;
    if got != magic {
        return Err(fail(path, 0, format!("bad magic 0x{got:08x}, expected 0x{magic:08x}")));
    }
    let ndims = (magic & 0xff) as usize;
    let dims = (0..ndims)
        .map(|d| read_u32(path, bytes, 4 + 4 * d, "dimension").map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let start = 4 + 4 * ndims;
    let need = dims.iter().product::<usize>();
    let have = bytes.len() - start;
    if have < need {
        return Err(fail(path, bytes.len(), format!("truncated payload: {need} bytes expected, {have} present")));
    }
    if have > need {
        return Err(fail(path, start + need, format!("{} trailing bytes", have - need)));
    }
    Ok((dims, start))
}

pub fn parse_idx_images(path: &Path, bytes: &[u8]) -> Result<IdxImages> {
    let (dims, start) = parse(path, bytes, IDX_IMAGES_MAGIC)?;
    Ok(IdxImages { count: dims[0], rows: dims[1], cols: dims[2], data: bytes[start..].to_vec() })
}

pub fn parse_idx_labels(path: &Path, bytes: &[u8]) -> Result<Vec<u8>> {
    let (_, start) = parse(path, bytes, IDX_LABELS_MAGIC)?;
    Ok(bytes[start..].to_vec())
}

pub fn read_idx_images(path: &Path) -> Result<IdxImages> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx_images(path, &bytes)
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx_labels(path, &bytes)
}

pub fn idx_images_bytes(img: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + img.data.len());
    for v in [IDX_IMAGES_MAGIC, img.count as u32, img.rows as u32, img.cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&img.data);
    out
}

pub fn idx_labels_bytes(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

pub fn write_idx_images(path: &Path, img: &IdxImages) -> Result<()> {
    crate::io::write_atomic(path, &idx_images_bytes(img))
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    crate::io::write_atomic(path, &idx_labels_bytes(labels))
}

/// Loads an image file and its label file, checking the counts agree.
pub fn load_idx(images: &Path, labels: &Path) -> Result<(IdxImages, Vec<u8>)> {
    let img = read_idx_images(images)?;
    let lab = read_idx_labels(labels)?;
    if img.count != lab.len() {
        return Err(Error::shape(
            "load_idx",
            format!("{} labels", img.count),
            format!("{} labels in {}", lab.len(), labels.display()),
        ));
    }
    Ok((img, lab))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_two() -> IdxImages {
        IdxImages { count: 2, rows: 2, cols: 2, data: vec![0, 64, 128, 255, 1, 2, 3, 4] }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("img.idx"), dir.path().join("lab.idx"));
        write_idx_images(&ip, &two_by_two()).unwrap();
        write_idx_labels(&lp, &[3, 7]).unwrap();
        let (img, lab) = load_idx(&ip, &lp).unwrap();
        assert_eq!(img, two_by_two());
        assert_eq!(lab, vec![3, 7]);
        assert_eq!(&std::fs::read(&ip).unwrap()[..4], &[0, 0, 8, 3]);
        assert_eq!(img.image_f64(0)[3], 1.0);
    }

    #[test]
    fn bad_inputs_report_offsets() {
        let p = Path::new("t.idx");
        let bytes = idx_images_bytes(&two_by_two());
        let err = parse_idx_images(p, &bytes[..bytes.len() - 1]).unwrap_err().to_string();
        assert!(err.contains("truncated payload") && err.contains("offset 23"), "{err}");
        let err = parse_idx_labels(p, &bytes).unwrap_err().to_string();
        assert!(err.contains("bad magic") && err.contains("offset 0"), "{err}");
        let err = parse_idx_images(p, &bytes[..10]).unwrap_err().to_string();
        assert!(err.contains("offset 8"), "{err}");
        let mut long = bytes.clone();
        long.push(9);
        assert!(parse_idx_images(p, &long).is_err());
    }

    #[test]
    fn count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        write_idx_images(&ip, &two_by_two()).unwrap();
        write_idx_labels(&lp, &[1]).unwrap();
        assert!(load_idx(&ip, &lp).is_err());
    }
}
