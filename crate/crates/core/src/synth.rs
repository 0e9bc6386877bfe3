//! Deterministic synthetic crowd cuboids: a desk-scale stand-in for real
//! audience footage, separable by construction so end-to-end training tests
//! have something learnable.
//!
//! Construction, exactly (all draws from `SplitMix64::new(seed)`):
//!
//! 1. Per channel, a (cells+1)^2 lattice of uniforms in [0.3, 0.7], drawn
//!    row-major: the static crowd texture. Pixel values bilinearly
//!    interpolate the lattice.
//! 2. Calm class: one uniform per element in (c,h,w,t) index order;
//!    value = base + amp_calm * (2u - 1).
//! 3. Excited class: a single phase draw phi = tau * u, then the
//!    deterministic traveling wave
//!    value = base + amp_excited * sin(tau * (t/4 + 2h/H) + phi),
//!    spatially coherent along height with phase advancing per frame.
//!
//! Everything is clamped to [0,1]; with the default amplitudes the lattice
//! range already keeps values inside. Per-sample seeds in datasets are
//! `derive(master_seed, sample_index)`.

use crate::data::{Cuboid, DatasetWriter, LabeledSample};
use crate::error::{Error, Result};
use crate::rng::{derive, SplitMix64};
use crate::tensor::Tensor;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthClass {
    Calm,
    Excited,
}

#[derive(Debug, Clone, Copy)]
pub struct SynthConfig {
    /// (C, H, W, T).
    pub dims: [usize; 4],
    pub class: SynthClass,
    pub seed: u64,
    /// Per-frame noise amplitude of the calm class, in pixel-value units.
    pub amp_calm: f64,
    /// Oscillation amplitude of the excited class.
    pub amp_excited: f64,
    /// Lattice cells across the base texture.
    pub texture_cells: usize,
}

impl SynthConfig {
    pub fn new(dims: [usize; 4], class: SynthClass, seed: u64) -> Self {
        SynthConfig {
            dims,
            class,
            seed,
            amp_calm: 0.02,
            amp_excited: 0.25,
            texture_cells: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d == 0) {
            return Err(Error::Usage(format!(
                "cuboid dims must all be >= 1, got {:?}",
                self.dims
            )));
        }
        for amp in [self.amp_calm, self.amp_excited] {
            if !(0.0..=1.0).contains(&amp) {
                return Err(Error::Usage(format!("amplitude {amp} outside [0,1]")));
            }
        }
        if self.amp_excited <= self.amp_calm {
            return Err(Error::Usage(format!(
                "excited amplitude {} must exceed calm amplitude {}",
                self.amp_excited, self.amp_calm
            )));
        }
        if self.texture_cells == 0 {
            return Err(Error::Usage("texture needs at least 1 cell".into()));
        }
        Ok(())
    }
}

fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// Bilinear lookup into a (cells+1)^2 lattice at normalized position.
fn lattice_value(lattice: &[f64], cells: usize, u: f64, v: f64) -> f64 {
    let side = cells + 1;
    let x = u * cells as f64;
    let y = v * cells as f64;
    let x0 = (x.floor() as usize).min(cells);
    let y0 = (y.floor() as usize).min(cells);
    let x1 = (x0 + 1).min(cells);
    let y1 = (y0 + 1).min(cells);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let a = lattice[y0 * side + x0];
    let b = lattice[y0 * side + x1];
    let c = lattice[y1 * side + x0];
    let d = lattice[y1 * side + x1];
    a * (1.0 - fx) * (1.0 - fy) + b * fx * (1.0 - fy) + c * (1.0 - fx) * fy + d * fx * fy
}

pub fn gen_cuboid(cfg: &SynthConfig) -> Result<Cuboid<f64>> {
    cfg.validate()?;
    let [channels, height, width, depth] = cfg.dims;
    let mut rng = SplitMix64::new(cfg.seed);
    let cells = cfg.texture_cells;
    let side = cells + 1;
    let lattices: Vec<Vec<f64>> = (0..channels)
        .map(|_| (0..side * side).map(|_| rng.next_uniform(0.3, 0.7)).collect())
        .collect();
    let mut data = vec![0.0f64; channels * height * width * depth];
    match cfg.class {
        SynthClass::Calm => {
            let mut i = 0;
            for lattice in &lattices {
                for h in 0..height {
                    let v = if height > 1 { h as f64 / (height - 1) as f64 } else { 0.0 };
                    for w in 0..width {
                        let u = if width > 1 { w as f64 / (width - 1) as f64 } else { 0.0 };
                        let base = lattice_value(lattice, cells, u, v);
                        for _t in 0..depth {
                            let noise = cfg.amp_calm * (2.0 * rng.next_f64() - 1.0);
                            data[i] = clamp01(base + noise);
                            i += 1;
                        }
                    }
                }
            }
        }
        SynthClass::Excited => {
            let phase = std::f64::consts::TAU * rng.next_f64();
            let mut i = 0;
            for lattice in &lattices {
                for h in 0..height {
                    let v = if height > 1 { h as f64 / (height - 1) as f64 } else { 0.0 };
                    for w in 0..width {
                        let u = if width > 1 { w as f64 / (width - 1) as f64 } else { 0.0 };
                        let base = lattice_value(lattice, cells, u, v);
                        for t in 0..depth {
                            let arg = std::f64::consts::TAU
                                * (t as f64 / 4.0 + 2.0 * h as f64 / height as f64)
                                + phase;
                            data[i] = clamp01(base + cfg.amp_excited * arg.sin());
                            i += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(Cuboid {
        data: Tensor::new(cfg.dims.to_vec(), data)?,
        grid_x: 0,
        grid_y: 0,
        t0: 0,
    })
}

/// Mean absolute difference between consecutive frames, averaged over all
/// positions: the statistic that separates the two classes.
pub fn mean_abs_frame_delta(cuboid: &Cuboid<f64>) -> f64 {
    let shape = cuboid.data.shape();
    let depth = shape[3];
    if depth < 2 {
        return 0.0;
    }
    let data = cuboid.data.data();
    let mut sum = 0.0;
    let mut count = 0usize;
    for run in data.chunks_exact(depth) {
        for pair in run.windows(2) {
            sum += (pair[1] - pair[0]).abs();
            count += 1;
        }
    }
    sum / count as f64
}

/// Write a CUB1 dataset: `n_pos` excited cuboids (label 1) followed by
/// `n_neg` calm ones (label 0). Sample i draws from seed
/// `derive(master_seed, i)`, so the file bytes depend only on the
/// arguments.
pub fn gen_dataset(
    path: &Path,
    n_pos: usize,
    n_neg: usize,
    master_seed: u64,
    dims: [usize; 4],
    amp_calm: f64,
    amp_excited: f64,
) -> Result<()> {
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Usage(format!(
            "need at least one sample per class, got {n_pos}/{n_neg}"
        )));
    }
    let total = n_pos + n_neg;
    let mut writer = DatasetWriter::create(path, dims, total as u32)?;
    for i in 0..total {
        let class = if i < n_pos {
            SynthClass::Excited
        } else {
            SynthClass::Calm
        };
        let cfg = SynthConfig {
            amp_calm,
            amp_excited,
            ..SynthConfig::new(dims, class, derive(master_seed, i as u64))
        };
        let cuboid = gen_cuboid(&cfg)?;
        writer.append(&LabeledSample {
            cuboid,
            label: u8::from(class == SynthClass::Excited),
        })?;
    }
    writer.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    const DIMS: [usize; 4] = [1, 32, 32, 10];

    #[test]
    fn same_seed_bit_identical() {
        let cfg = SynthConfig::new(DIMS, SynthClass::Excited, 5);
        let a = gen_cuboid(&cfg).unwrap();
        let b = gen_cuboid(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_seeds_differ() {
        let a = gen_cuboid(&SynthConfig::new(DIMS, SynthClass::Calm, 7)).unwrap();
        let b = gen_cuboid(&SynthConfig::new(DIMS, SynthClass::Calm, 8)).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn requested_dims_respected() {
        let cuboid = gen_cuboid(&SynthConfig::new([1, 32, 32, 10], SynthClass::Calm, 1)).unwrap();
        assert_eq!(cuboid.data.shape(), &[1, 32, 32, 10]);
    }

    #[test]
    fn values_in_unit_interval() {
        for seed in 0..20 {
            for class in [SynthClass::Calm, SynthClass::Excited] {
                let cuboid = gen_cuboid(&SynthConfig::new(DIMS, class, seed)).unwrap();
                assert!(cuboid.data.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }
    }

    #[test]
    fn excited_moves_more_than_calm_across_seeds() {
        // Any pair of seeds: the activity statistic must separate classes.
        for seed in 0..100 {
            let calm = gen_cuboid(&SynthConfig::new(DIMS, SynthClass::Calm, seed)).unwrap();
            let excited =
                gen_cuboid(&SynthConfig::new(DIMS, SynthClass::Excited, seed + 1000)).unwrap();
            assert!(
                mean_abs_frame_delta(&excited) > mean_abs_frame_delta(&calm),
                "seed {seed}"
            );
        }
    }

    #[test]
    fn class_statistic_zero_overlap() {
        // 100 per class at default amplitudes: max calm < min excited.
        let mut max_calm = f64::MIN;
        let mut min_excited = f64::MAX;
        for seed in 0..100 {
            let calm = gen_cuboid(&SynthConfig::new(DIMS, SynthClass::Calm, seed)).unwrap();
            let excited = gen_cuboid(&SynthConfig::new(DIMS, SynthClass::Excited, 7000 + seed)).unwrap();
            max_calm = max_calm.max(mean_abs_frame_delta(&calm));
            min_excited = min_excited.min(mean_abs_frame_delta(&excited));
        }
        assert!(
            max_calm < min_excited,
            "overlap: calm up to {max_calm}, excited from {min_excited}"
        );
    }

    #[test]
    fn dataset_counts_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.cub");
        let p2 = dir.path().join("b.cub");
        let small = [1, 8, 8, 4];
        gen_dataset(&p1, 100, 100, 7, small, 0.02, 0.25).unwrap();
        gen_dataset(&p2, 100, 100, 7, small, 0.02, 0.25).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        let samples: Vec<LabeledSample<f32>> = crate::data::read_dataset(&p1).unwrap();
        assert_eq!(samples.len(), 200);
        assert_eq!(samples.iter().filter(|s| s.label == 1).count(), 100);
        // Seed sensitivity.
        let p3 = dir.path().join("c.cub");
        gen_dataset(&p3, 100, 100, 8, small, 0.02, 0.25).unwrap();
        assert_ne!(std::fs::read(&p1).unwrap(), std::fs::read(&p3).unwrap());
    }

    #[test]
    fn zero_count_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            gen_dataset(&dir.path().join("x.cub"), 0, 5, 1, DIMS, 0.02, 0.25),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn invalid_amplitudes_rejected() {
        let mut cfg = SynthConfig::new(DIMS, SynthClass::Calm, 1);
        cfg.amp_excited = 0.01; // below calm
        assert!(cfg.validate().is_err());
        let mut cfg = SynthConfig::new(DIMS, SynthClass::Calm, 1);
        cfg.amp_calm = 1.5;
        assert!(cfg.validate().is_err());
    }
}
