//! The accumulator: per-crop highlight probabilities summed per time step
//! into a Highlight Likelihood timeline, bucketed into fixed slices, and
//! ranked.
//!
//! Accumulation order is pinned to sorted (t0, grid_y, grid_x), so
//! timelines are bit-reproducible however the scores were produced.

use crate::data::Cuboid;
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::nn::Model;
use crate::tensor::Real;
use std::io::Write;
use std::path::Path;

/// Positive-class probability of one crop at one time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropScore {
    pub grid_x: usize,
    pub grid_y: usize,
    pub t0: usize,
    pub p: f64,
}

/// One accumulated time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HlStep {
    pub t0: usize,
    pub time_s: f64,
    pub hl_sum: f64,
    pub hl_mean: f64,
    pub n_crops: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HlTimeline {
    pub steps: Vec<HlStep>,
}

/// Score every cuboid independently in inference mode; output order matches
/// input order. Scoring fans out over `exec`.
pub fn score_crops<T: Real>(
    model: &Model<T>,
    cuboids: &[Cuboid<T>],
    exec: &Executor,
) -> Result<Vec<CropScore>> {
    if cuboids.is_empty() {
        return Err(Error::Usage("no cuboids to score".into()));
    }
    let results: Vec<Result<CropScore>> = exec.map(cuboids, |_, cuboid| {
        let probs = model.forward_infer(&cuboid.data)?;
        Ok(CropScore {
            grid_x: cuboid.grid_x,
            grid_y: cuboid.grid_y,
            t0: cuboid.t0,
            p: probs.data()[1].to_f64(),
        })
    });
    results.into_iter().collect()
}

/// Group scores by start frame and accumulate. `fps` is the downsampled
/// clock the `t0` indices run on.
pub fn hl_accumulate(scores: &[CropScore], fps: f64) -> Result<HlTimeline> {
    if !(fps > 0.0) {
        return Err(Error::Usage(format!("fps must be > 0, got {fps}")));
    }
    let mut sorted: Vec<&CropScore> = scores.iter().collect();
    sorted.sort_by_key(|s| (s.t0, s.grid_y, s.grid_x));
    let mut steps: Vec<HlStep> = Vec::new();
    for score in sorted {
        match steps.last_mut() {
            Some(step) if step.t0 == score.t0 => {
                step.hl_sum += score.p;
                step.n_crops += 1;
            }
            _ => steps.push(HlStep {
                t0: score.t0,
                time_s: score.t0 as f64 / fps,
                hl_sum: score.p,
                hl_mean: 0.0,
                n_crops: 1,
            }),
        }
    }
    for step in &mut steps {
        step.hl_mean = step.hl_sum / step.n_crops as f64;
    }
    Ok(HlTimeline { steps })
}

/// One non-overlapping slice of the timeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceScore {
    pub start_s: f64,
    /// Sum of per-crop probabilities over all steps in the slice.
    pub hl_sum: f64,
    /// hl_sum over total crops in the slice; 0 for an empty slice.
    pub hl_mean: f64,
    pub n_crops: usize,
    /// Sum of per-step means within the slice: the ranking quantity.
    pub aggregate: f64,
}

/// Bucket steps by floor(time / slice_s). Every slice from 0 through the
/// last populated one is reported; empty slices carry zeros.
pub fn slice_aggregate(timeline: &HlTimeline, slice_s: f64) -> Result<Vec<SliceScore>> {
    if !(slice_s > 0.0) {
        return Err(Error::Usage(format!(
            "slice length must be > 0, got {slice_s}"
        )));
    }
    if timeline.steps.is_empty() {
        return Ok(Vec::new());
    }
    let last_idx = timeline
        .steps
        .iter()
        .map(|s| (s.time_s / slice_s).floor() as usize)
        .max()
        .unwrap();
    let mut slices: Vec<SliceScore> = (0..=last_idx)
        .map(|i| SliceScore {
            start_s: i as f64 * slice_s,
            hl_sum: 0.0,
            hl_mean: 0.0,
            n_crops: 0,
            aggregate: 0.0,
        })
        .collect();
    for step in &timeline.steps {
        let idx = (step.time_s / slice_s).floor() as usize;
        let slice = &mut slices[idx];
        slice.hl_sum += step.hl_sum;
        slice.n_crops += step.n_crops;
        slice.aggregate += step.hl_mean;
    }
    for slice in &mut slices {
        if slice.n_crops > 0 {
            slice.hl_mean = slice.hl_sum / slice.n_crops as f64;
        }
    }
    Ok(slices)
}

/// Top-k slices by aggregate, ties broken toward the earlier slice.
pub fn rank_slices(slices: &[SliceScore], k: usize) -> Result<Vec<SliceScore>> {
    if k == 0 {
        return Err(Error::Usage("k must be at least 1".into()));
    }
    let mut ranked: Vec<SliceScore> = slices.to_vec();
    ranked.sort_by(|a, b| {
        b.aggregate
            .total_cmp(&a.aggregate)
            .then(a.start_s.total_cmp(&b.start_s))
    });
    ranked.truncate(k);
    Ok(ranked)
}

/// CSV: `slice_start_s,hl_sum,hl_mean,n_crops,aggregate`.
pub fn write_timeline_csv(path: &Path, slices: &[SliceScore]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "slice_start_s,hl_sum,hl_mean,n_crops,aggregate")?;
    for s in slices {
        writeln!(
            f,
            "{},{},{},{},{}",
            s.start_s, s.hl_sum, s.hl_mean, s.n_crops, s.aggregate
        )?;
    }
    f.flush()?;
    Ok(())
}

/// CSV: `t0_s,grid_x,grid_y,p,decision` with decision = 1 iff p >= 0.5.
pub fn write_crops_csv(path: &Path, scores: &[CropScore], fps: f64) -> Result<()> {
    if !(fps > 0.0) {
        return Err(Error::Usage(format!("fps must be > 0, got {fps}")));
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "t0_s,grid_x,grid_y,p,decision")?;
    for s in scores {
        writeln!(
            f,
            "{},{},{},{},{}",
            s.t0 as f64 / fps,
            s.grid_x,
            s.grid_y,
            s.p,
            u8::from(s.p >= 0.5)
        )?;
    }
    f.flush()?;
    Ok(())
}
