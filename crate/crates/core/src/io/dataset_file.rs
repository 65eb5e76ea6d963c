//! Dataset file: `NPDT` magic, version, header, state payload, optional label payload, CRC32.
//!
//! Layout (all little-endian):
//!
//! ```text
//! magic "NPDT" | version u16 | equation u8 | label scheme u8 (0xFF = none)
//! n_x u32 | n_t u32 | n_samples u64 | length f64
//! times [n_t] f64 | coefficients [n_samples] f64 | seeds [n_samples] u64
//! states [n_samples × n_t × n_x] f64
//! labels [n_samples × n_t × n_x] f64          (only with a label scheme)
//! crc32 u32 over every preceding byte
//! ```

use std::fs::File;
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use tempfile::NamedTempFile;

use super::atomic::{commit, temp_beside};
use super::binary::{put_f64s, write_f64s, ByteReader};
use crate::error::{shape_err, Error, Result};
use crate::frames::Frames;
use crate::labels::{DerivativeField, LabelScheme};
use crate::pde_data::{Equation, PdeConfig, SpatialGrid, Trajectory};

pub const DATASET_MAGIC: &[u8; 4] = b"NPDT";
pub const DATASET_VERSION: u16 = 1;
const NO_LABELS: u8 = 0xFF;

/// Everything stored ahead of the payload, except the per-sample tables.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHeader {
    pub equation: Equation,
    pub grid: SpatialGrid,
    pub times: Vec<f64>,
    pub n_samples: usize,
    pub label_scheme: Option<LabelScheme>,
}

impl DatasetHeader {
    pub fn new(pde: PdeConfig, grid: SpatialGrid, n_samples: usize, label_scheme: Option<LabelScheme>) -> Self {
        Self {
            equation: pde.equation,
            grid,
            times: pde.times(),
            n_samples,
            label_scheme,
        }
    }

    fn frame_values(&self) -> usize {
        self.times.len() * self.grid.n_x()
    }

    fn fixed_len(&self) -> usize {
        4 + 2 + 1 + 1 + 4 + 4 + 8 + 8 + 8 * self.times.len() + 16 * self.n_samples
    }

    /// Exact size in bytes of a file with this header.
    pub fn file_len(&self) -> u64 {
        let sections = if self.label_scheme.is_some() { 2 } else { 1 };
        self.fixed_len() as u64 + (sections * self.n_samples * self.frame_values() * 8) as u64 + 4
    }

    fn encode(&self, coefficients: &[f64], seeds: &[u64]) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.fixed_len());
        out.extend_from_slice(DATASET_MAGIC);
        out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        out.push(self.equation.tag());
        out.push(self.label_scheme.map_or(NO_LABELS, LabelScheme::tag));
        out.extend_from_slice(&(self.grid.n_x() as u32).to_le_bytes());
        out.extend_from_slice(&(self.times.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_samples as u64).to_le_bytes());
        out.extend_from_slice(&self.grid.length().to_le_bytes());
        put_f64s(&mut out, &self.times);
        put_f64s(&mut out, coefficients);
        for s in seeds {
            out.extend_from_slice(&s.to_le_bytes());
        }
        debug_assert_eq!(out.len(), self.fixed_len());
        out
    }
}

/// In-memory contents of a dataset file.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetContents {
    pub header: DatasetHeader,
    pub trajectories: Vec<Trajectory<f64>>,
    pub labels: Option<Vec<DerivativeField<f64>>>,
}

/// Streaming writer: memory use is independent of the sample count. States go to the
/// destination's temp file, labels to an anonymous spill file appended on `finish`.
pub struct DatasetWriter {
    header: DatasetHeader,
    target: std::path::PathBuf,
    tmp: Option<NamedTempFile>,
    states: BufWriter<File>,
    labels: Option<BufWriter<File>>,
    state_crc: crc32fast::Hasher,
    label_crc: crc32fast::Hasher,
    coefficients: Vec<f64>,
    seeds: Vec<u64>,
}

impl DatasetWriter {
    pub fn create(path: &Path, header: DatasetHeader) -> Result<Self> {
        if header.n_samples == 0 {
            return Err(Error::Config("dataset must hold at least one sample".into()));
        }
        let tmp = temp_beside(path)?;
        let mut file = tmp.reopen()?;
        file.seek(SeekFrom::Start(header.fixed_len() as u64))?;
        let labels = match header.label_scheme {
            Some(_) => Some(BufWriter::new(tempfile::tempfile()?)),
            None => None,
        };
        Ok(Self {
            coefficients: Vec::with_capacity(header.n_samples),
            seeds: Vec::with_capacity(header.n_samples),
            header,
            target: path.to_path_buf(),
            tmp: Some(tmp),
            states: BufWriter::new(file),
            labels,
            state_crc: crc32fast::Hasher::new(),
            label_crc: crc32fast::Hasher::new(),
        })
    }

    pub fn push(&mut self, traj: &Trajectory<f64>, labels: Option<&DerivativeField<f64>>) -> Result<()> {
        let h = &self.header;
        if self.seeds.len() == h.n_samples {
            return Err(shape_err(format!("dataset declared {} samples", h.n_samples)));
        }
        if traj.equation != h.equation || traj.grid != h.grid || traj.times != h.times {
            return Err(shape_err("trajectory grid, times or equation differ from the dataset header"));
        }
        write_f64s(&mut self.states, &mut self.state_crc, traj.u.as_slice())?;
        match (&mut self.labels, labels, h.label_scheme) {
            (Some(w), Some(l), Some(scheme)) => {
                if !l.dudt.same_shape(&traj.u) || l.scheme != scheme {
                    return Err(shape_err("labels do not match the trajectory or declared scheme"));
                }
                write_f64s(w, &mut self.label_crc, l.dudt.as_slice())?;
            }
            (None, None, None) => {}
            _ => return Err(shape_err("labels must be given exactly when the header declares a scheme")),
        }
        self.coefficients.push(traj.coefficient);
        self.seeds.push(traj.seed);
        Ok(())
    }

    /// Writes the header and checksum, then renames the file into place.
    pub fn finish(mut self) -> Result<()> {
        if self.seeds.len() != self.header.n_samples {
            return Err(shape_err(format!(
                "dataset declared {} samples but {} were written",
                self.header.n_samples,
                self.seeds.len()
            )));
        }
        let head = self.header.encode(&self.coefficients, &self.seeds);
        let mut crc = crc32fast::Hasher::new();
        crc.update(&head);
        crc.combine(&self.state_crc);
        if let Some(w) = self.labels.take() {
            let mut spill = w.into_inner().map_err(|e| e.into_error())?;
            spill.seek(SeekFrom::Start(0))?;
            std::io::copy(&mut spill, &mut self.states)?;
            crc.combine(&self.label_crc);
        }
        self.states.write_all(&crc.finalize().to_le_bytes())?;
        let mut file = self.states.into_inner().map_err(|e| e.into_error())?;
        file.seek(SeekFrom::Start(0))?;
        file.write_all(&head)?;
        file.flush()?;
        commit(self.tmp.take().expect("present until finish"), &self.target)
    }
}

/// Writes a whole dataset; labels, if given, must share one scheme.
pub fn write_dataset(
    path: &Path,
    trajectories: &[Trajectory<f64>],
    labels: Option<&[DerivativeField<f64>]>,
) -> Result<()> {
    let first = trajectories
        .first()
        .ok_or_else(|| Error::Config("dataset must hold at least one sample".into()))?;
    if let Some(l) = labels {
        if l.len() != trajectories.len() {
            return Err(shape_err("one label field per trajectory required"));
        }
    }
    let header = DatasetHeader {
        equation: first.equation,
        grid: first.grid,
        times: first.times.clone(),
        n_samples: trajectories.len(),
        label_scheme: labels.and_then(|l| l.first()).map(|l| l.scheme),
    };
    let mut w = DatasetWriter::create(path, header)?;
    for (i, t) in trajectories.iter().enumerate() {
        w.push(t, labels.map(|l| &l[i]))?;
    }
    w.finish()
}

pub fn read_dataset(path: &Path) -> Result<DatasetContents> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    decode_dataset(&bytes)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<DatasetContents> {
    let mut r = ByteReader::new(bytes, "dataset file");
    if &r.array::<4>()? != DATASET_MAGIC {
        return Err(Error::BadMagic { expected: "NPDT" });
    }
    let version = r.u16()?;
    if version != DATASET_VERSION {
        return Err(Error::UnknownVersion(version));
    }
    let eq_tag = r.u8()?;
    let label_tag = r.u8()?;
    let n_x = r.u32()? as usize;
    let n_t = r.u32()? as usize;
    let n_samples = usize::try_from(r.u64()?).map_err(|_| Error::Truncated("sample count".into()))?;
    let length = r.f64()?;
    // Check the total size before trusting any count for allocation.
    let sections: u128 = if label_tag == NO_LABELS { 1 } else { 2 };
    let expected = 32u128 + 8 * n_t as u128 + 16 * n_samples as u128 + sections * 8 * (n_samples * n_t) as u128 * n_x as u128 + 4;
    if (bytes.len() as u128) < expected {
        return Err(Error::Truncated(format!(
            "dataset file holds {} bytes, header implies {expected}",
            bytes.len()
        )));
    }
    if (bytes.len() as u128) > expected {
        return Err(Error::Input(format!(
            "dataset file holds {} bytes, header implies {expected}",
            bytes.len()
        )));
    }
    let body = &bytes[..bytes.len() - 4];
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let equation = Equation::from_tag(eq_tag).ok_or_else(|| Error::Input(format!("unknown equation tag {eq_tag}")))?;
    let label_scheme = match label_tag {
        NO_LABELS => None,
        t => Some(LabelScheme::from_tag(t).ok_or_else(|| Error::Input(format!("unknown label scheme tag {t}")))?),
    };
    let grid = SpatialGrid::new(n_x, length)?;
    let times = r.f64_vec(n_t)?;
    let coefficients = r.f64_vec(n_samples)?;
    let seeds: Vec<u64> = (0..n_samples).map(|_| r.u64()).collect::<Result<_>>()?;
    let header = DatasetHeader {
        equation,
        grid,
        times,
        n_samples,
        label_scheme,
    };
    let trajectories = (0..n_samples)
        .map(|i| {
            let u = Frames::from_vec(n_t, n_x, r.f64_vec(n_t * n_x)?)?;
            Trajectory::new(grid, header.times.clone(), u, equation, coefficients[i], seeds[i])
        })
        .collect::<Result<Vec<_>>>()?;
    let labels = match label_scheme {
        Some(scheme) => {
            let dt = trajectories[0].uniform_dt()?;
            Some(
                (0..n_samples)
                    .map(|_| {
                        Ok(DerivativeField {
                            dudt: Frames::from_vec(n_t, n_x, r.f64_vec(n_t * n_x)?)?,
                            scheme,
                            source_dt: dt,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?,
            )
        }
        None => None,
    };
    debug_assert_eq!(r.position(), body.len());
    Ok(DatasetContents {
        header,
        trajectories,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::compute_derivative_labels;
    use crate::pde_data::{generate_trajectory, InitialConditionSpec};

    fn sample_set(n: usize) -> Vec<Trajectory<f64>> {
        let pde = PdeConfig {
            n_t: 12,
            ..PdeConfig::advection()
        };
        (0..n)
            .map(|i| generate_trajectory(&pde, &SpatialGrid::default(), &InitialConditionSpec::default(), 40 + i as u64).unwrap())
            .collect()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.npdt");
        let trajs = sample_set(3);
        write_dataset(&path, &trajs, None).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back.trajectories, trajs);
        assert!(back.labels.is_none());
        let len = std::fs::metadata(&path).unwrap().len();
        assert_eq!(len, back.header.file_len());
    }

    #[test]
    fn labels_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.npdt");
        let trajs = sample_set(2);
        let labels: Vec<_> = trajs
            .iter()
            .map(|t| compute_derivative_labels(t, LabelScheme::Central4).unwrap())
            .collect();
        write_dataset(&path, &trajs, Some(&labels)).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back.labels.unwrap(), labels);
        assert_eq!(back.header.label_scheme, Some(LabelScheme::Central4));
    }

    #[test]
    fn corruption_and_truncation_are_distinct_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.npdt");
        write_dataset(&path, &sample_set(1), None).unwrap();
        let good = std::fs::read(&path).unwrap();

        let mut flipped = good.clone();
        flipped[good.len() / 2] ^= 0x01;
        assert!(matches!(decode_dataset(&flipped), Err(Error::Checksum { .. })));

        assert!(matches!(decode_dataset(&good[..good.len() - 9]), Err(Error::Truncated(_))));

        let mut versioned = good.clone();
        versioned[4] = 9;
        assert!(matches!(decode_dataset(&versioned), Err(Error::UnknownVersion(9))));

        let mut magic = good;
        magic[0] = b'X';
        assert!(matches!(decode_dataset(&magic), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn writer_rejects_mismatched_samples() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.npdt");
        let trajs = sample_set(1);
        let mut header = DatasetHeader::new(
            PdeConfig {
                n_t: 12,
                ..PdeConfig::heat()
            },
            SpatialGrid::default(),
            1,
            None,
        );
        let mut w = DatasetWriter::create(&path, header.clone()).unwrap();
        assert!(w.push(&trajs[0], None).is_err());
        header.equation = Equation::Advection;
        header.n_samples = 2;
        let mut w = DatasetWriter::create(&path, header).unwrap();
        w.push(&trajs[0], None).unwrap();
        assert!(w.finish().is_err());
        assert!(!path.exists());
    }
}
