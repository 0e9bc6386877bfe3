//! Everything between raw frames and labeled cuboid datasets: ingestion,
//! temporal downsampling, ROI grid tiling, event labeling, flip
//! augmentation, class balancing, and the binary dataset format.

pub mod dataset;
pub mod manifest;
pub mod pnm;

pub use dataset::{read_dataset, write_dataset, DatasetWriter};
pub use manifest::{Event, EventManifest, Roi, EVENT_TYPES};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tensor::{Real, Tensor};
use serde::Deserialize;
use std::path::Path;

/// Uniform frames plus their rate. Frames are (C, H, W) tensors in [0,1].
pub struct FrameSequence<T> {
    pub frames: Vec<Tensor<T>>,
    pub fps: f64,
}

impl<T: Real> FrameSequence<T> {
    pub fn channels(&self) -> usize {
        self.frames[0].shape()[0]
    }

    pub fn height(&self) -> usize {
        self.frames[0].shape()[1]
    }

    pub fn width(&self) -> usize {
        self.frames[0].shape()[2]
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[derive(Deserialize)]
struct FrameMeta {
    fps: f64,
}

/// Load a directory of binary `.pgm`/`.ppm` frames (lexicographic file
/// order) plus `meta.json` ({"fps": real}).
pub fn read_frames<T: Real>(dir: &Path) -> Result<FrameSequence<T>> {
    let meta_path = dir.join("meta.json");
    let meta: FrameMeta = serde_json::from_str(&std::fs::read_to_string(&meta_path).map_err(
        |e| Error::Usage(format!("cannot read {}: {e}", meta_path.display())),
    )?)?;
    if !(meta.fps > 0.0) {
        return Err(Error::Format(format!("meta.json fps must be > 0, got {}", meta.fps)));
    }
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("pgm") | Some("ppm")
            )
        })
        .collect();
    if paths.is_empty() {
        return Err(Error::Usage(format!(
            "no .pgm/.ppm frames in {}",
            dir.display()
        )));
    }
    paths.sort();
    let mut frames = Vec::with_capacity(paths.len());
    for path in &paths {
        let frame: Tensor<T> = pnm::read_file(path)?;
        if let Some(first) = frames.first() {
            let first: &Tensor<T> = first;
            if frame.shape() != first.shape() {
                return Err(Error::Format(format!(
                    "frame {} is {:?} but earlier frames are {:?}",
                    path.display(),
                    frame.shape(),
                    first.shape()
                )));
            }
        }
        frames.push(frame);
    }
    Ok(FrameSequence { frames, fps: meta.fps })
}

/// Keep every k-th frame where k = fps / dst_fps, which must be a positive
/// integer.
pub fn downsample<T: Real>(seq: FrameSequence<T>, dst_fps: f64) -> Result<FrameSequence<T>> {
    if !(dst_fps > 0.0) {
        return Err(Error::Usage(format!("target fps must be > 0, got {dst_fps}")));
    }
    let ratio = seq.fps / dst_fps;
    let k = ratio.round();
    if k < 1.0 || (ratio - k).abs() > 1e-9 {
        return Err(Error::Usage(format!(
            "fps ratio {} / {dst_fps} is not a positive integer",
            seq.fps
        )));
    }
    let k = k as usize;
    let frames = seq
        .frames
        .into_iter()
        .step_by(k)
        .collect();
    Ok(FrameSequence {
        frames,
        fps: dst_fps,
    })
}

/// Crop grid over the audience ROI: square windows of `window` pixels,
/// stride `stride`, cuboid depth `depth` frames, consecutive cuboid start
/// times `hop` frames apart. Defaults are the production geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    pub roi: Roi,
    pub window: usize,
    pub stride: usize,
    pub depth: usize,
    pub hop: usize,
}

impl GridSpec {
    pub fn new(roi: Roi) -> Self {
        GridSpec {
            roi,
            window: 100,
            stride: 50,
            depth: 30,
            hop: 30,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.stride == 0 || self.depth == 0 || self.hop == 0 {
            return Err(Error::Usage(
                "grid window, stride, depth, and hop must all be >= 1".into(),
            ));
        }
        if self.window > self.roi.w || self.window > self.roi.h {
            return Err(Error::Usage(format!(
                "window {} does not fit the {}x{} roi",
                self.window, self.roi.w, self.roi.h
            )));
        }
        Ok(())
    }
}

/// Crop origins in pixels, row-major (y outer, x inner), with their grid
/// indices: (grid_x, grid_y, x, y).
pub fn grid_positions(spec: &GridSpec) -> Result<Vec<(usize, usize, usize, usize)>> {
    spec.validate()?;
    let nx = (spec.roi.w - spec.window) / spec.stride + 1;
    let ny = (spec.roi.h - spec.window) / spec.stride + 1;
    let mut out = Vec::with_capacity(nx * ny);
    for gy in 0..ny {
        for gx in 0..nx {
            out.push((
                gx,
                gy,
                spec.roi.x + gx * spec.stride,
                spec.roi.y + gy * spec.stride,
            ));
        }
    }
    Ok(out)
}

/// One audience crop: (C, window, window, depth) pixels in [0,1] plus its
/// grid position and start frame on the downsampled clock.
#[derive(Debug, Clone, PartialEq)]
pub struct Cuboid<T> {
    pub data: Tensor<T>,
    pub grid_x: usize,
    pub grid_y: usize,
    pub t0: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample<T> {
    pub cuboid: Cuboid<T>,
    /// 1 = highlight, 0 = standard play.
    pub label: u8,
}

/// Cut one cuboid per grid origin starting at frame `t0` of the
/// (downsampled) sequence.
pub fn extract_cuboids<T: Real>(
    seq: &FrameSequence<T>,
    spec: &GridSpec,
    t0: usize,
) -> Result<Vec<Cuboid<T>>> {
    spec.validate()?;
    if seq.is_empty() {
        return Err(Error::Usage("empty frame sequence".into()));
    }
    if t0 + spec.depth > seq.len() {
        return Err(Error::Bounds(format!(
            "cuboid needs frames {t0}..{} but the sequence has {}",
            t0 + spec.depth,
            seq.len()
        )));
    }
    let (fh, fw) = (seq.height(), seq.width());
    if spec.roi.x + spec.roi.w > fw || spec.roi.y + spec.roi.h > fh {
        return Err(Error::Bounds(format!(
            "roi {:?} exceeds the {fw}x{fh} frame",
            spec.roi
        )));
    }
    let channels = seq.channels();
    let positions = grid_positions(spec)?;
    let mut cuboids = Vec::with_capacity(positions.len());
    let win = spec.window;
    for (gx, gy, x, y) in positions {
        let mut data = vec![T::ZERO; channels * win * win * spec.depth];
        for (t, frame) in seq.frames[t0..t0 + spec.depth].iter().enumerate() {
            let fdata = frame.data();
            for c in 0..channels {
                for h in 0..win {
                    let src = (c * fh + y + h) * fw + x;
                    let dst = ((c * win + h) * win) * spec.depth + t;
                    for w in 0..win {
                        data[dst + w * spec.depth] = fdata[src + w];
                    }
                }
            }
        }
        cuboids.push(Cuboid {
            data: Tensor::new(vec![channels, win, win, spec.depth], data)?,
            grid_x: gx,
            grid_y: gy,
            t0,
        });
    }
    Ok(cuboids)
}

/// Start frames of every full-depth cuboid at the configured hop.
pub fn hop_starts(seq_len: usize, spec: &GridSpec) -> Vec<usize> {
    (0..)
        .step_by(spec.hop)
        .take_while(|t0| t0 + spec.depth <= seq_len)
        .collect()
}

/// Label cuboids against the manifest: positive when the start time falls
/// within `positive_window_s` after a goal, negative when at least
/// `guard_s` away from every annotated event, discarded otherwise. `fps` is
/// the downsampled rate the cuboid clock runs on.
pub fn label_samples<T: Real>(
    cuboids: Vec<Cuboid<T>>,
    manifest: &EventManifest,
    fps: f64,
    positive_window_s: f64,
    guard_s: f64,
) -> Result<Vec<LabeledSample<T>>> {
    if !(fps > 0.0) {
        return Err(Error::Usage(format!("fps must be > 0, got {fps}")));
    }
    manifest.validate_event_types()?;
    let goals = manifest.goal_times();
    let mut out = Vec::new();
    for cuboid in cuboids {
        let t_s = cuboid.t0 as f64 / fps;
        let positive = goals
            .iter()
            .any(|&g| t_s >= g && t_s <= g + positive_window_s);
        if positive {
            out.push(LabeledSample { cuboid, label: 1 });
            continue;
        }
        let clean_negative = manifest
            .events
            .iter()
            .all(|e| (t_s - e.time_s).abs() >= guard_s);
        if clean_negative {
            out.push(LabeledSample { cuboid, label: 0 });
        }
        // Neither positive nor a clean negative: ambiguous, dropped.
    }
    Ok(out)
}

/// Width-flipped copy; the label and provenance carry over.
pub fn augment_flip<T: Real>(sample: &LabeledSample<T>) -> Result<LabeledSample<T>> {
    Ok(LabeledSample {
        cuboid: Cuboid {
            data: sample.cuboid.data.flip_width()?,
            grid_x: sample.cuboid.grid_x,
            grid_y: sample.cuboid.grid_y,
            t0: sample.cuboid.t0,
        },
        label: sample.label,
    })
}

/// Subsample the majority class to the minority count, seeded. Returns the
/// shuffled-and-truncated classes as (positives, negatives).
pub fn balance_classes<T: Real>(
    samples: Vec<LabeledSample<T>>,
    seed: u64,
) -> Result<(Vec<LabeledSample<T>>, Vec<LabeledSample<T>>)> {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for s in samples {
        if s.label == 1 {
            pos.push(s);
        } else {
            neg.push(s);
        }
    }
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Usage(format!(
            "both classes must be present to balance ({} positive, {} negative)",
            pos.len(),
            neg.len()
        )));
    }
    let mut rng = SplitMix64::new(seed);
    rng.shuffle(&mut pos);
    rng.shuffle(&mut neg);
    let m = pos.len().min(neg.len());
    pos.truncate(m);
    neg.truncate(m);
    Ok((pos, neg))
}

/// Balance (see [`balance_classes`]), then split each class
/// train/validation by `train_fraction` (floor on the train side). Output
/// sets are disjoint and balanced.
pub fn balance_and_split<T: Real>(
    samples: Vec<LabeledSample<T>>,
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<LabeledSample<T>>, Vec<LabeledSample<T>>)> {
    if !(0.0..1.0).contains(&train_fraction) || train_fraction == 0.0 {
        return Err(Error::Usage(format!(
            "train fraction must be in (0,1), got {train_fraction}"
        )));
    }
    let (mut pos, mut neg) = balance_classes(samples, seed)?;
    let m = pos.len();
    let train_n = (m as f64 * train_fraction).floor() as usize;
    let mut train = Vec::with_capacity(2 * train_n);
    let mut val = Vec::with_capacity(2 * (m - train_n));
    val.extend(pos.split_off(train_n));
    val.extend(neg.split_off(train_n));
    train.extend(pos);
    train.extend(neg);
    Ok((train, val))
}
