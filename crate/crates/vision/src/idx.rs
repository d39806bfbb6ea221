//! IDX image and label files, optionally gzip-compressed.

use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

#[derive(Debug, thiserror::Error)]
pub enum IdxError {
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bad IDX data: {0}")]
    Format(String),
    #[error("{0} not found; download the four MNIST files (train/t10k images and labels, .gz is fine) into that directory or point MNR_DATA_DIR at them")]
    Missing(PathBuf),
}

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageSet {
    pub rows: usize,
    pub cols: usize,
    /// row-major, one byte per pixel
    pub images: Vec<Vec<u8>>,
    pub labels: Vec<u8>,
}

impl ImageSet {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Indices per label.
    pub fn by_label(&self) -> [Vec<usize>; 10] {
        let mut out: [Vec<usize>; 10] = Default::default();
        for (i, &l) in self.labels.iter().enumerate() {
            out[l as usize].push(i);
        }
        out
    }
}

fn be_u32(b: &[u8], at: usize) -> Result<u32, IdxError> {
    b.get(at..at + 4)
        .map(|s| u32::from_be_bytes([s[0], s[1], s[2], s[3]]))
        .ok_or_else(|| IdxError::Format("truncated header".into()))
}

pub fn parse_images(b: &[u8]) -> Result<(usize, usize, Vec<Vec<u8>>), IdxError> {
    let magic = be_u32(b, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(IdxError::Format(format!("image magic {magic:#010x}")));
    }
    let (n, rows, cols) = (be_u32(b, 4)? as usize, be_u32(b, 8)? as usize, be_u32(b, 12)? as usize);
    let size = rows * cols;
    let body = &b[16..];
    if body.len() < n * size {
        return Err(IdxError::Format(format!("expected {} pixel bytes, found {}", n * size, body.len())));
    }
    Ok((rows, cols, body.chunks_exact(size.max(1)).take(n).map(<[u8]>::to_vec).collect()))
}

pub fn parse_labels(b: &[u8]) -> Result<Vec<u8>, IdxError> {
    let magic = be_u32(b, 0)?;
    if magic != LABELS_MAGIC {
        return Err(IdxError::Format(format!("label magic {magic:#010x}")));
    }
    let n = be_u32(b, 4)? as usize;
    let body = &b[8..];
    if body.len() < n {
        return Err(IdxError::Format(format!("expected {n} labels, found {}", body.len())));
    }
    if let Some(bad) = body[..n].iter().find(|&&l| l > 9) {
        return Err(IdxError::Format(format!("label {bad} out of range")));
    }
    Ok(body[..n].to_vec())
}

/// Reads `path`, or `path.gz` when only the compressed file exists.
pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>, IdxError> {
    let gz = PathBuf::from(format!("{}.gz", path.display()));
    let (p, zipped) = if path.exists() {
        (path.to_path_buf(), path.extension().is_some_and(|e| e == "gz"))
    } else if gz.exists() {
        (gz, true)
    } else {
        return Err(IdxError::Missing(path.to_path_buf()));
    };
    let io = |source| IdxError::Io { path: p.clone(), source };
    let raw = std::fs::read(&p).map_err(io)?;
    if !zipped {
        return Ok(raw);
    }
    let mut out = Vec::new();
    GzDecoder::new(&raw[..]).read_to_end(&mut out).map_err(io)?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// The standard MNIST file pair for `split` under `dir`.
pub fn load_mnist(dir: &Path, split: Split) -> Result<ImageSet, IdxError> {
    let prefix = match split {
        Split::Train => "train",
        Split::Test => "t10k",
    };
    let (rows, cols, images) = parse_images(&read_maybe_gz(&dir.join(format!("{prefix}-images-idx3-ubyte")))?)?;
    let labels = parse_labels(&read_maybe_gz(&dir.join(format!("{prefix}-labels-idx1-ubyte")))?)?;
    if labels.len() != images.len() {
        return Err(IdxError::Format(format!("{} images but {} labels", images.len(), labels.len())));
    }
    Ok(ImageSet { rows, cols, images, labels })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(magic: u32, dims: &[u32]) -> Vec<u8> {
        let mut v = magic.to_be_bytes().to_vec();
        for d in dims {
            v.extend(d.to_be_bytes());
        }
        v
    }

    #[test]
    fn round_trip_small_file() {
        let mut b = header(IMAGES_MAGIC, &[2, 2, 3]);
        b.extend(0..12u8);
        let (r, c, imgs) = parse_images(&b).unwrap();
        assert_eq!((r, c), (2, 3));
        assert_eq!(imgs, vec![vec![0, 1, 2, 3, 4, 5], vec![6, 7, 8, 9, 10, 11]]);
        let mut l = header(LABELS_MAGIC, &[3]);
        l.extend([0, 9, 4]);
        assert_eq!(parse_labels(&l).unwrap(), vec![0, 9, 4]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_images(&[]).is_err());
        assert!(parse_images(&header(LABELS_MAGIC, &[1, 1, 1])).is_err());
        let mut short = header(IMAGES_MAGIC, &[2, 2, 2]);
        short.extend([0; 5]);
        assert!(matches!(parse_images(&short), Err(IdxError::Format(_))));
        let mut l = header(LABELS_MAGIC, &[1]);
        l.push(10);
        assert!(parse_labels(&l).is_err());
    }

    #[test]
    fn missing_file_has_a_hint() {
        let e = read_maybe_gz(Path::new("/nonexistent/train-images-idx3-ubyte")).unwrap_err();
        assert!(e.to_string().contains("MNR_DATA_DIR"));
    }
}
