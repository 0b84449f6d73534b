use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::sequence::SampleId;

/// File-per-sample synthetic dataset: `root/00000042.bin`, every file exactly
/// `sample_bytes` long.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub root: PathBuf,
    pub n: u64,
    pub sample_bytes: usize,
}

/// File name of a sample: zero-padded decimal index, width 8, `.bin`.
pub fn sample_file_name(id: SampleId) -> String {
    format!("{:08}.bin", id.0)
}

/// Deterministic pseudo-random contents of one sample.
pub fn sample_contents(seed: u64, id: SampleId, bytes: usize) -> Vec<u8> {
    let mut buf = vec![0u8; bytes];
    rng::keyed(seed, rng::domain::DATASET_BYTES, id.0).fill_bytes(&mut buf);
    buf
}

impl DatasetSpec {
    pub fn new(root: impl Into<PathBuf>, n: u64, sample_bytes: usize) -> Self {
        Self {
            root: root.into(),
            n,
            sample_bytes,
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn sample_path(&self, id: SampleId) -> PathBuf {
        self.root.join(sample_file_name(id))
    }

    pub fn total_bytes(&self) -> u64 {
        self.n * self.sample_bytes as u64
    }

    fn check_shape(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidDataset("dataset has no samples".into()));
        }
        Ok(())
    }

    /// Writes all `n` sample files. Regenerating with the same seed yields
    /// byte-identical files.
    pub fn generate(&self, seed: u64) -> Result<()> {
        self.check_shape()?;
        fs::create_dir_all(&self.root)
            .map_err(|e| Error::io(format!("creating {}", self.root.display()), e))?;
        for i in 0..self.n {
            let id = SampleId(i);
            let path = self.sample_path(id);
            fs::write(&path, sample_contents(seed, id, self.sample_bytes))
                .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        }
        Ok(())
    }

    /// Checks that every sample file exists with the expected size.
    pub fn verify(&self) -> Result<()> {
        self.check_shape()?;
        (0..self.n).try_for_each(|i| self.check_file(SampleId(i)).map(|_| ()))
    }

    fn check_file(&self, id: SampleId) -> Result<PathBuf> {
        let path = self.sample_path(id);
        let meta = match fs::metadata(&path) {
            Ok(m) => m,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::MissingSample { id, path })
            }
            Err(e) => return Err(Error::io(format!("reading {}", path.display()), e)),
        };
        if meta.len() != self.sample_bytes as u64 {
            return Err(Error::TruncatedSample {
                id,
                path,
                expected: self.sample_bytes,
                found: meta.len(),
            });
        }
        Ok(path)
    }

    /// Reads one sample, failing on a missing or wrongly sized file.
    pub fn read_sample(&self, id: SampleId) -> Result<Vec<u8>> {
        let path = self.sample_path(id);
        let mut file = match fs::File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::MissingSample { id, path })
            }
            Err(e) => return Err(Error::io(format!("opening {}", path.display()), e)),
        };
        let mut buf = Vec::with_capacity(self.sample_bytes);
        file.read_to_end(&mut buf)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        if buf.len() != self.sample_bytes {
            return Err(Error::TruncatedSample {
                id,
                path,
                expected: self.sample_bytes,
                found: buf.len() as u64,
            });
        }
        Ok(buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_names_are_fixed_width() {
        assert_eq!(sample_file_name(SampleId(0)), "00000000.bin");
        assert_eq!(sample_file_name(SampleId(42)), "00000042.bin");
        assert_eq!(sample_file_name(SampleId(123_456_789)), "123456789.bin");
    }

    #[test]
    fn generates_exact_sizes() {
        let dir = tempfile::tempdir().unwrap();
        let spec = DatasetSpec::new(dir.path(), 100, 1024);
        spec.generate(1).unwrap();
        spec.verify().unwrap();
        let total: u64 = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().metadata().unwrap().len())
            .sum();
        assert_eq!(total, 102_400);
        assert_eq!(spec.total_bytes(), 102_400);
    }

    #[test]
    fn regeneration_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let spec = DatasetSpec::new(dir.path(), 8, 300);
        spec.generate(5).unwrap();
        let before: Vec<Vec<u8>> = (0..8).map(|i| spec.read_sample(SampleId(i)).unwrap()).collect();
        spec.generate(5).unwrap();
        for (i, b) in before.iter().enumerate() {
            assert_eq!(&spec.read_sample(SampleId(i as u64)).unwrap(), b);
            assert_eq!(b, &sample_contents(5, SampleId(i as u64), 300));
        }
        assert_ne!(before[0], before[1]);
    }

    #[test]
    fn missing_and_truncated_files() {
        let dir = tempfile::tempdir().unwrap();
        let spec = DatasetSpec::new(dir.path(), 4, 64);
        spec.generate(0).unwrap();
        fs::remove_file(spec.sample_path(SampleId(2))).unwrap();
        fs::write(spec.sample_path(SampleId(3)), [0u8; 10]).unwrap();
        assert!(matches!(
            spec.read_sample(SampleId(2)),
            Err(Error::MissingSample { id: SampleId(2), .. })
        ));
        assert!(matches!(
            spec.read_sample(SampleId(3)),
            Err(Error::TruncatedSample { id: SampleId(3), found: 10, .. })
        ));
        assert!(matches!(spec.verify(), Err(Error::MissingSample { .. })));
    }

    #[test]
    fn empty_dataset_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(DatasetSpec::new(dir.path(), 0, 8).generate(0).is_err());
    }
}
