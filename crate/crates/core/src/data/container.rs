//! Binary dataset container.
//!
//! ```text
//! "DFT1" | count u32 | dim u32 | class_count u32 | paired u32
//! count × { dim × f32 features | u32 label | u32 attribute_tag }
//! ```
//!
//! All integers and floats are little-endian. In a paired file (`paired = 1`)
//! records alternate `x, x′`, so `count` is even. Attribute names live in a
//! sidecar text file next to the container (`<path>.attrs`, one
//! `tag<TAB>name` line per value).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{AttrTag, Dataset, Sample, SamplePair};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"DFT1";
const HEADER_LEN: usize = 20;

/// Contents of a paired container.
#[derive(Debug, Clone, PartialEq)]
pub struct PairFile {
    pub pairs: Vec<SamplePair>,
    pub dim: usize,
    pub class_count: usize,
    pub attributes: BTreeMap<AttrTag, String>,
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".attrs");
    PathBuf::from(s)
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Data(format!("{what} {v} does not fit in u32")))
}

struct Record<'a> {
    x: &'a [f64],
    label: usize,
    attr: AttrTag,
}

fn write_container<'a>(
    path: &Path,
    dim: usize,
    class_count: usize,
    paired: bool,
    attributes: &BTreeMap<AttrTag, String>,
    records: impl ExactSizeIterator<Item = Record<'a>>,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&to_u32(records.len(), "record count")?.to_le_bytes())?;
    out.write_all(&to_u32(dim, "dimension")?.to_le_bytes())?;
    out.write_all(&to_u32(class_count, "class count")?.to_le_bytes())?;
    out.write_all(&u32::from(paired).to_le_bytes())?;
    for r in records {
        for v in r.x {
            out.write_all(&(*v as f32).to_le_bytes())?;
        }
        out.write_all(&to_u32(r.label, "label")?.to_le_bytes())?;
        out.write_all(&r.attr.to_le_bytes())?;
    }
    out.flush()?;
    let mut names = String::new();
    for (tag, name) in attributes {
        names.push_str(&format!("{tag}\t{name}\n"));
    }
    std::fs::write(sidecar(path), names)?;
    Ok(())
}

pub fn write_dataset(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    write_container(
        path.as_ref(),
        dataset.dim(),
        dataset.class_count(),
        false,
        dataset.attributes(),
        dataset.samples().iter().map(|s| Record {
            x: &s.x,
            label: s.label,
            attr: s.attr,
        }),
    )
}

pub fn write_pairs(
    path: impl AsRef<Path>,
    pairs: &[SamplePair],
    dim: usize,
    class_count: usize,
    attributes: &BTreeMap<AttrTag, String>,
) -> Result<()> {
    if let Some(p) = pairs.iter().find(|p| p.dim() != dim) {
        return Err(Error::InputShape {
            expected: dim,
            actual: p.dim(),
        });
    }
    let records: Vec<Record> = pairs
        .iter()
        .flat_map(|p| {
            [
                Record { x: &p.x, label: p.label, attr: p.source_attr },
                Record { x: &p.x_prime, label: p.label, attr: p.target_attr },
            ]
        })
        .collect();
    write_container(path.as_ref(), dim, class_count, true, attributes, records.into_iter())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Parse {
                offset: self.pos,
                message: format!("truncated while reading {what}"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        let b = self.take(4, what)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

struct Raw {
    samples: Vec<Sample>,
    dim: usize,
    class_count: usize,
    paired: bool,
    attributes: BTreeMap<AttrTag, String>,
}

fn read_container(path: &Path) -> Result<Raw> {
    let bytes = std::fs::read(path)?;
    let mut r = Reader { bytes: &bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: "bad magic bytes, expected DFT1".into(),
        });
    }
    let count = r.u32("record count")? as usize;
    let dim = r.u32("dimension")? as usize;
    let class_count = r.u32("class count")? as usize;
    let flag_at = r.pos;
    let paired = match r.u32("paired flag")? {
        0 => false,
        1 => true,
        other => {
            return Err(Error::Parse {
                offset: flag_at,
                message: format!("paired flag must be 0 or 1, found {other}"),
            })
        }
    };
    let expected = HEADER_LEN + count * (dim * 4 + 8);
    if bytes.len() > expected {
        return Err(Error::Parse {
            offset: expected,
            message: format!("{} trailing bytes", bytes.len() - expected),
        });
    }
    let mut samples = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let mut x = Vec::with_capacity(dim);
        for _ in 0..dim {
            x.push(f64::from(r.f32("features")?));
        }
        let label = r.u32("label")? as usize;
        let attr = r.u32("attribute tag")?;
        samples.push(Sample { x, label, attr });
    }
    if paired && count % 2 != 0 {
        return Err(Error::Data(format!("paired container has odd record count {count}")));
    }
    let attributes = read_sidecar(path, &samples)?;
    Ok(Raw {
        samples,
        dim,
        class_count,
        paired,
        attributes,
    })
}

fn read_sidecar(path: &Path, samples: &[Sample]) -> Result<BTreeMap<AttrTag, String>> {
    let side = sidecar(path);
    if !side.exists() {
        // no names: fall back to the numeric tags themselves
        return Ok(samples.iter().map(|s| (s.attr, s.attr.to_string())).collect());
    }
    let text = std::fs::read_to_string(&side)?;
    let mut map = BTreeMap::new();
    let mut offset = 0;
    for line in text.lines() {
        if !line.trim().is_empty() {
            let (tag, name) = line.split_once('\t').ok_or_else(|| Error::Parse {
                offset,
                message: format!("attribute line without tab: {line:?}"),
            })?;
            let tag: AttrTag = tag.trim().parse().map_err(|_| Error::Parse {
                offset,
                message: format!("bad attribute tag {tag:?}"),
            })?;
            map.insert(tag, name.to_string());
        }
        offset += line.len() + 1;
    }
    Ok(map)
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let raw = read_container(path.as_ref())?;
    if raw.paired {
        return Err(Error::Data("expected an unpaired container, found paired=1".into()));
    }
    Dataset::new(raw.samples, raw.dim, raw.class_count, raw.attributes)
}

pub fn read_pairs(path: impl AsRef<Path>) -> Result<PairFile> {
    let raw = read_container(path.as_ref())?;
    if !raw.paired {
        return Err(Error::Data("expected a paired container, found paired=0".into()));
    }
    let mut pairs = Vec::with_capacity(raw.samples.len() / 2);
    let mut it = raw.samples.into_iter();
    while let (Some(a), Some(b)) = (it.next(), it.next()) {
        if a.label >= raw.class_count {
            return Err(Error::Label {
                label: a.label,
                class_count: raw.class_count,
            });
        }
        pairs.push(SamplePair::new(a.x, b.x, a.label, a.attr, b.attr)?);
    }
    Ok(PairFile {
        pairs,
        dim: raw.dim,
        class_count: raw.class_count,
        attributes: raw.attributes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{binary_attributes, generate_synthetic, pair_all, SyntheticSpec};

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.dft");
        let (d, _) = generate_synthetic(5, 8, 2, 10, &SyntheticSpec::default()).unwrap();
        write_dataset(&path, &d).unwrap();
        assert_eq!(read_dataset(&path).unwrap(), d);
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"DFT1");
        assert_eq!(bytes.len(), HEADER_LEN + 16 * (10 * 4 + 8));
    }

    #[test]
    fn pair_round_trip_and_flag() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.dft");
        let (d, t) = generate_synthetic(5, 4, 2, 10, &SyntheticSpec::default()).unwrap();
        let pairs = pair_all(&d, &t).unwrap();
        write_pairs(&path, &pairs, 10, 2, d.attributes()).unwrap();
        let back = read_pairs(&path).unwrap();
        assert_eq!(back.pairs, pairs);
        assert_eq!(back.attributes, binary_attributes());
        assert!(matches!(read_dataset(&path), Err(Error::Data(_))));
    }

    #[test]
    fn truncated_container_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.dft");
        let (d, _) = generate_synthetic(5, 8, 2, 10, &SyntheticSpec::default()).unwrap();
        write_dataset(&path, &d).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        match read_dataset(&path) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, bytes.len() - 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.dft");
        std::fs::write(&path, b"XXXX\0\0\0\0\0\0\0\0\0\0\0\0\0\0\0\0").unwrap();
        assert!(matches!(read_dataset(&path), Err(Error::Parse { offset: 0, .. })));
    }

    #[test]
    fn empty_pair_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.dft");
        write_pairs(&path, &[], 6, 2, &binary_attributes()).unwrap();
        let back = read_pairs(&path).unwrap();
        assert!(back.pairs.is_empty());
        assert_eq!(back.dim, 6);
    }
}
