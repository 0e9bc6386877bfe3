//! Labeled-cuboid dataset format "CUB1", little-endian:
//!
//! ```text
//! magic    4 bytes "CUB1"
//! version  u32     1
//! count    u32     number of samples
//! channels u16 | height u16 | width u16 | depth u16
//! dtype    u8      0 = unsigned 8-bit pixels
//! samples  count times: u8 label, then C*T*H*W pixel bytes in
//!          (c, t, h, w) row-major order
//! ```
//!
//! Pixels are stored 8-bit and scaled to [0,1] reals on load; writing
//! quantizes with round(v * 255). Note the file's (c,t,h,w) order differs
//! from the in-memory (c,h,w,t) cuboid layout.

use crate::data::{Cuboid, LabeledSample};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"CUB1";
pub const VERSION: u32 = 1;

/// Incremental writer so generators do not have to hold a whole dataset in
/// memory. Dims are (C, H, W, T); the declared count is enforced.
pub struct DatasetWriter {
    out: BufWriter<File>,
    dims: [usize; 4],
    declared: u32,
    written: u32,
}

impl DatasetWriter {
    pub fn create(path: &Path, dims: [usize; 4], count: u32) -> Result<Self> {
        for &d in &dims {
            if d > u16::MAX as usize {
                return Err(Error::Usage(format!(
                    "cuboid extent {d} exceeds the format's u16 limit"
                )));
            }
        }
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&count.to_le_bytes())?;
        for &d in &dims {
            out.write_all(&(d as u16).to_le_bytes())?;
        }
        out.write_all(&[0u8])?; // dtype 0: u8
        Ok(DatasetWriter {
            out,
            dims,
            declared: count,
            written: 0,
        })
    }

    pub fn append<T: Real>(&mut self, sample: &LabeledSample<T>) -> Result<()> {
        if self.written == self.declared {
            return Err(Error::Usage(format!(
                "dataset already holds the declared {} samples",
                self.declared
            )));
        }
        if sample.cuboid.data.shape() != self.dims {
            return Err(Error::Usage(format!(
                "sample extents {:?} do not match dataset dims {:?}",
                sample.cuboid.data.shape(),
                self.dims
            )));
        }
        self.out.write_all(&[sample.label])?;
        let [_, h, w, t] = self.dims;
        let data = sample.cuboid.data.data();
        // (c,h,w,t) memory order -> (c,t,h,w) file order.
        let mut bytes = Vec::with_capacity(data.len());
        let c_stride = h * w * t;
        for c_base in (0..data.len()).step_by(c_stride) {
            for ti in 0..t {
                for hi in 0..h {
                    let row = c_base + hi * w * t + ti;
                    for wi in 0..w {
                        bytes.push(quantize(data[row + wi * t]));
                    }
                }
            }
        }
        self.out.write_all(&bytes)?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        if self.written != self.declared {
            return Err(Error::Usage(format!(
                "dataset declared {} samples but {} were written",
                self.declared, self.written
            )));
        }
        self.out.flush()?;
        Ok(())
    }
}

fn quantize<T: Real>(v: T) -> u8 {
    (v.to_f64() * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Write a whole dataset. All cuboids must share one shape; an empty list
/// produces a header-only file with zero dims.
pub fn write_dataset<T: Real>(path: &Path, samples: &[LabeledSample<T>]) -> Result<()> {
    let dims = match samples.first() {
        None => [0, 0, 0, 0],
        Some(s) => {
            let shape = s.cuboid.data.shape();
            [shape[0], shape[1], shape[2], shape[3]]
        }
    };
    let mut writer = DatasetWriter::create(path, dims, samples.len() as u32)?;
    for sample in samples {
        writer.append(sample)?;
    }
    writer.finish()
}

pub fn read_dataset<T: Real>(path: &Path) -> Result<Vec<LabeledSample<T>>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("dataset truncated before magic".into()))?;
    if &magic != MAGIC {
        return Err(Error::Format(format!(
            "bad dataset magic {magic:?} (expected {MAGIC:?})"
        )));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported dataset version {version} (expected {VERSION})"
        )));
    }
    let count = read_u32(&mut r)? as usize;
    let mut dims = [0usize; 4];
    for d in dims.iter_mut() {
        let mut buf = [0u8; 2];
        r.read_exact(&mut buf)
            .map_err(|_| Error::Format("dataset truncated inside header".into()))?;
        *d = u16::from_le_bytes(buf) as usize;
    }
    let mut dtype = [0u8; 1];
    r.read_exact(&mut dtype)
        .map_err(|_| Error::Format("dataset truncated inside header".into()))?;
    if dtype[0] != 0 {
        return Err(Error::Format(format!("unknown dataset dtype {}", dtype[0])));
    }
    let mut samples = Vec::with_capacity(count);
    if count > 0 {
        let [c, h, w, t] = dims;
        if c == 0 || h == 0 || w == 0 || t == 0 {
            return Err(Error::Format(format!(
                "non-empty dataset with zero extent in dims {dims:?}"
            )));
        }
        let n = c * h * w * t;
        let mut bytes = vec![0u8; n];
        for _ in 0..count {
            let mut label = [0u8; 1];
            r.read_exact(&mut label)
                .map_err(|_| Error::Format("dataset truncated at sample label".into()))?;
            if label[0] > 1 {
                return Err(Error::Format(format!("label byte must be 0 or 1, got {}", label[0])));
            }
            r.read_exact(&mut bytes)
                .map_err(|_| Error::Format("dataset truncated inside sample pixels".into()))?;
            // (c,t,h,w) file order -> (c,h,w,t) memory order.
            let mut data = vec![T::ZERO; n];
            let mut src = 0;
            for ci in 0..c {
                for ti in 0..t {
                    for hi in 0..h {
                        for wi in 0..w {
                            let dst = ((ci * h + hi) * w + wi) * t + ti;
                            data[dst] = T::from_f64(bytes[src] as f64 / 255.0);
                            src += 1;
                        }
                    }
                }
            }
            samples.push(LabeledSample {
                cuboid: Cuboid {
                    data: Tensor::new(dims.to_vec(), data)?,
                    grid_x: 0,
                    grid_y: 0,
                    t0: 0,
                },
                label: label[0],
            });
        }
    }
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(Error::Format("trailing bytes after dataset payload".into()));
    }
    Ok(samples)
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Format("dataset truncated inside header".into()))?;
    Ok(u32::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn random_samples(n: usize, dims: [usize; 4], seed: u64) -> Vec<LabeledSample<f32>> {
        let mut rng = SplitMix64::new(seed);
        (0..n)
            .map(|i| {
                let len: usize = dims.iter().product();
                // Quantized grid so write(read(write)) is exercised honestly.
                let data: Vec<f32> = (0..len)
                    .map(|_| (rng.next_range(256) as f32) / 255.0)
                    .collect();
                LabeledSample {
                    cuboid: Cuboid {
                        data: Tensor::new(dims.to_vec(), data).unwrap(),
                        grid_x: i,
                        grid_y: 0,
                        t0: 0,
                    },
                    label: (i % 2) as u8,
                }
            })
            .collect()
    }

    #[test]
    fn round_trip_identity_on_quantized_pixels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.cub");
        let samples = random_samples(5, [2, 3, 4, 5], 1);
        write_dataset(&path, &samples).unwrap();
        let loaded: Vec<LabeledSample<f32>> = read_dataset(&path).unwrap();
        assert_eq!(loaded.len(), samples.len());
        for (a, b) in loaded.iter().zip(&samples) {
            assert_eq!(a.label, b.label);
            assert_eq!(a.cuboid.data.data(), b.cuboid.data.data());
        }
    }

    #[test]
    fn write_read_write_identical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.cub");
        let p2 = dir.path().join("b.cub");
        let samples = random_samples(4, [1, 4, 4, 3], 2);
        write_dataset(&p1, &samples).unwrap();
        let loaded: Vec<LabeledSample<f32>> = read_dataset(&p1).unwrap();
        write_dataset(&p2, &loaded).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn empty_dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.cub");
        write_dataset::<f32>(&path, &[]).unwrap();
        let loaded: Vec<LabeledSample<f32>> = read_dataset(&path).unwrap();
        assert!(loaded.is_empty());
        // Header-only: 4 + 4 + 4 + 8 + 1 bytes.
        assert_eq!(std::fs::read(&path).unwrap().len(), 21);
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.cub");
        std::fs::write(&path, b"XXXX").unwrap();
        assert!(matches!(read_dataset::<f32>(&path), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cut.cub");
        let samples = random_samples(2, [1, 2, 2, 2], 3);
        write_dataset(&path, &samples).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_dataset::<f32>(&path), Err(Error::Format(_))));
    }

    #[test]
    fn file_order_is_c_t_h_w() {
        // One sample, dims (1,1,2,2): memory (h=0,w=0..2,t=0..2) values
        // [a@t0, a@t1, b@t0, b@t1]; file stores t-major rows: a@t0 b@t0
        // then a@t1 b@t1.
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("order.cub");
        let data = vec![
            10.0 / 255.0, // (w0,t0)
            20.0 / 255.0, // (w0,t1)
            30.0 / 255.0, // (w1,t0)
            40.0 / 255.0, // (w1,t1)
        ];
        let samples = vec![LabeledSample {
            cuboid: Cuboid {
                data: Tensor::<f32>::new(vec![1, 1, 2, 2], data).unwrap(),
                grid_x: 0,
                grid_y: 0,
                t0: 0,
            },
            label: 1,
        }];
        write_dataset(&path, &samples).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let payload = &bytes[21..];
        assert_eq!(payload, &[1, 10, 30, 20, 40]);
    }

    #[test]
    fn mixed_extents_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mixed.cub");
        let mut samples = random_samples(2, [1, 2, 2, 2], 4);
        samples.push(random_samples(1, [1, 3, 3, 3], 5).pop().unwrap());
        assert!(matches!(
            write_dataset(&path, &samples),
            Err(Error::Usage(_))
        ));
    }
}
