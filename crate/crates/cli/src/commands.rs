//! Command implementations, generic over the working precision.

use crate::{Command, GridArgs};
use hlcnn_core::data::{self, EventManifest, GridSpec, LabeledSample};
use hlcnn_core::nn::{checkpoint, ArchConfig, Model};
use hlcnn_core::optim::{self, RmspropParams, TrainConfig};
use hlcnn_core::{eval, hl, synth, Error, Executor, Real, Result};
use std::path::{Path, PathBuf};

/// Input paths are checked up front so a typo fails fast as a usage error
/// instead of surfacing mid-pipeline.
fn require_inputs(paths: &[(&str, &Path)]) -> Result<()> {
    for (what, path) in paths {
        if !path.exists() {
            return Err(Error::Usage(format!(
                "{what} {} does not exist",
                path.display()
            )));
        }
    }
    Ok(())
}

pub fn run<T: Real>(command: Command, seed: u64, threads: usize) -> Result<()> {
    let exec = Executor::new(threads)?;
    match &command {
        Command::Build { frames, manifest, .. } => {
            require_inputs(&[("frames directory", frames), ("manifest", manifest)])?
        }
        Command::Synth { .. } => {}
        Command::Train { dataset, arch, .. } => {
            require_inputs(&[("dataset", dataset)])?;
            if let Some(arch) = arch {
                require_inputs(&[("architecture config", arch)])?;
            }
        }
        Command::Score {
            frames,
            manifest,
            checkpoint,
            ..
        } => require_inputs(&[
            ("frames directory", frames),
            ("manifest", manifest),
            ("checkpoint", checkpoint),
        ])?,
        Command::Eval {
            dataset, checkpoint, ..
        } => require_inputs(&[("dataset", dataset), ("checkpoint", checkpoint)])?,
    }
    match command {
        Command::Build {
            frames,
            manifest,
            out,
            grid,
            positive_window,
            guard,
            no_augment,
        } => build::<T>(&frames, &manifest, &out, &grid, positive_window, guard, !no_augment, seed),
        Command::Synth {
            n_pos,
            n_neg,
            dims,
            out,
            amp_calm,
            amp_excited,
        } => synth::gen_dataset(&out, n_pos, n_neg, seed, dims.0, amp_calm, amp_excited),
        Command::Train {
            dataset,
            arch,
            out,
            epochs,
            batch_size,
            lr,
            rho,
            eps,
            dropout,
            val_fraction,
        } => {
            let config = TrainConfig {
                batch_size,
                max_epochs: epochs,
                seed,
                dropout_override: dropout,
                rmsprop: RmspropParams {
                    learning_rate: lr,
                    rho,
                    epsilon: eps,
                },
                val_fraction,
            };
            train::<T>(&dataset, arch.as_deref(), &out, &config, &exec)
        }
        Command::Score {
            frames,
            manifest,
            checkpoint,
            out_prefix,
            grid,
            slice,
            top_k,
        } => score::<T>(&frames, &manifest, &checkpoint, &out_prefix, &grid, slice, top_k, &exec),
        Command::Eval {
            dataset,
            checkpoint,
            out_report,
            roc_csv,
            threshold,
        } => evaluate::<T>(&dataset, &checkpoint, &out_report, roc_csv.as_deref(), threshold, &exec),
    }
}

fn stage<V>(name: &str, result: Result<V>) -> Result<V> {
    result.map_err(|e| match e {
        Error::Usage(m) => Error::Usage(format!("{name}: {m}")),
        Error::Shape(m) => Error::Shape(format!("{name}: {m}")),
        Error::Bounds(m) => Error::Bounds(format!("{name}: {m}")),
        Error::Format(m) => Error::Format(format!("{name}: {m}")),
        Error::Numeric(m) => Error::Numeric(format!("{name}: {m}")),
        Error::Io(e) => Error::Format(format!("{name}: i/o error: {e}")),
    })
}

/// Load frames and manifest, cross-checking that the manifest's declared
/// fps matches the frame metadata, then downsample.
fn load_sequence<T: Real>(
    frames_dir: &Path,
    manifest_path: &Path,
    grid: &GridArgs,
) -> Result<(data::FrameSequence<T>, EventManifest, GridSpec)> {
    let manifest = stage("manifest", EventManifest::load(manifest_path))?;
    let seq: data::FrameSequence<T> = stage("read-frames", data::read_frames(frames_dir))?;
    if (seq.fps - manifest.fps).abs() > 1e-9 {
        return Err(Error::Format(format!(
            "manifest declares {} fps but frames carry {} fps",
            manifest.fps, seq.fps
        )));
    }
    let seq = stage("downsample", data::downsample(seq, grid.dst_fps))?;
    let spec = GridSpec {
        roi: manifest.roi,
        window: grid.window,
        stride: grid.stride,
        depth: grid.depth,
        hop: grid.hop,
    };
    Ok((seq, manifest, spec))
}

fn extract_all<T: Real>(
    seq: &data::FrameSequence<T>,
    spec: &GridSpec,
) -> Result<Vec<data::Cuboid<T>>> {
    let starts = data::hop_starts(seq.len(), spec);
    if starts.is_empty() {
        return Err(Error::Usage(format!(
            "sequence has {} frames after downsampling; cuboids need {}",
            seq.len(),
            spec.depth
        )));
    }
    let mut cuboids = Vec::new();
    for t0 in starts {
        cuboids.extend(stage("extract", data::extract_cuboids(seq, spec, t0))?);
    }
    Ok(cuboids)
}

#[allow(clippy::too_many_arguments)]
fn build<T: Real>(
    frames_dir: &Path,
    manifest_path: &Path,
    out: &Path,
    grid: &GridArgs,
    positive_window: f64,
    guard: f64,
    augment: bool,
    seed: u64,
) -> Result<()> {
    let (seq, manifest, spec) = load_sequence::<T>(frames_dir, manifest_path, grid)?;
    let cuboids = extract_all(&seq, &spec)?;
    let extracted = cuboids.len();
    let mut samples = stage(
        "label",
        data::label_samples(cuboids, &manifest, seq.fps, positive_window, guard),
    )?;
    let labeled = samples.len();
    if augment {
        let flipped: Vec<LabeledSample<T>> = samples
            .iter()
            .map(data::augment_flip)
            .collect::<Result<_>>()?;
        samples.extend(flipped);
    }
    let n_pos = samples.iter().filter(|s| s.label == 1).count();
    let n_neg = samples.len() - n_pos;
    eprintln!(
        "extracted {extracted} cuboids, labeled {labeled} ({} discarded), \
         after augmentation {n_pos} positive / {n_neg} negative",
        extracted - labeled
    );
    let (pos, neg) = stage("balance", data::balance_classes(samples, seed))?;
    eprintln!("balanced to {} per class", pos.len());
    let mut all = pos;
    all.extend(neg);
    stage("write-dataset", data::write_dataset(out, &all))?;
    eprintln!("wrote {} samples to {}", all.len(), out.display());
    Ok(())
}

fn train<T: Real>(
    dataset: &Path,
    arch_path: Option<&Path>,
    out: &Path,
    config: &TrainConfig,
    exec: &Executor,
) -> Result<()> {
    config.validate()?;
    let arch = match arch_path {
        Some(p) => stage(
            "arch-config",
            std::fs::read_to_string(p)
                .map_err(Error::from)
                .and_then(|text| ArchConfig::from_json(&text)),
        )?,
        None => ArchConfig::default_full(),
    };
    let samples: Vec<LabeledSample<T>> = stage("read-dataset", data::read_dataset(dataset))?;
    if samples.is_empty() {
        return Err(Error::Usage(format!(
            "dataset {} holds no samples",
            dataset.display()
        )));
    }
    let sample_dims = samples[0].cuboid.data.shape().to_vec();
    if sample_dims != arch.input.dims() {
        return Err(Error::Shape(format!(
            "dataset cuboids are {:?} but the architecture expects {:?}",
            sample_dims,
            arch.input.dims()
        )));
    }
    let (train_set, val_set) =
        data::balance_and_split(samples, 1.0 - config.val_fraction, config.seed)?;
    eprintln!(
        "training on {} samples, validating on {}",
        train_set.len(),
        val_set.len()
    );
    let mut model = Model::<T>::init(arch, config.seed)?;
    let history = optim::train(&mut model, config, &train_set, &val_set, exec)?;
    for record in &history.epochs {
        eprintln!(
            "epoch {}: train loss {:.4}, val loss {:.4}, val acc {:.4}",
            record.epoch, record.train_loss, record.val_loss, record.val_acc
        );
    }
    stage("write-checkpoint", checkpoint::write(out, &model))?;
    let history_path = out.with_extension("history.csv");
    stage("write-history", history.write_csv(&history_path))?;
    if let Some(last) = history.epochs.last() {
        eprintln!(
            "final validation accuracy {:.4}; checkpoint {}, history {}",
            last.val_acc,
            out.display(),
            history_path.display()
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn score<T: Real>(
    frames_dir: &Path,
    manifest_path: &Path,
    checkpoint_path: &Path,
    out_prefix: &str,
    grid: &GridArgs,
    slice_s: f64,
    top_k: usize,
    exec: &Executor,
) -> Result<()> {
    let model: Model<T> = stage("read-checkpoint", checkpoint::read(checkpoint_path))?;
    let (seq, _, spec) = load_sequence::<T>(frames_dir, manifest_path, grid)?;
    let expected = [seq.channels(), spec.window, spec.window, spec.depth];
    if expected != model.input_dims() {
        return Err(Error::Shape(format!(
            "extracted cuboids are {expected:?} but the checkpoint expects {:?}",
            model.input_dims()
        )));
    }
    let cuboids = extract_all(&seq, &spec)?;
    eprintln!("scoring {} cuboids", cuboids.len());
    let scores = hl::score_crops(&model, &cuboids, exec)?;
    let timeline = hl::hl_accumulate(&scores, seq.fps)?;
    let slices = hl::slice_aggregate(&timeline, slice_s)?;
    let timeline_path = PathBuf::from(format!("{out_prefix}_timeline.csv"));
    let crops_path = PathBuf::from(format!("{out_prefix}_crops.csv"));
    hl::write_timeline_csv(&timeline_path, &slices)?;
    hl::write_crops_csv(&crops_path, &scores, seq.fps)?;
    eprintln!(
        "wrote {} and {}",
        timeline_path.display(),
        crops_path.display()
    );
    for (rank, slice) in hl::rank_slices(&slices, top_k)?.iter().enumerate() {
        println!("{} {} {}", rank + 1, slice.start_s, slice.aggregate);
    }
    Ok(())
}

fn evaluate<T: Real>(
    dataset: &Path,
    checkpoint_path: &Path,
    out_report: &Path,
    roc_csv: Option<&Path>,
    threshold: f64,
    exec: &Executor,
) -> Result<()> {
    let model: Model<T> = stage("read-checkpoint", checkpoint::read(checkpoint_path))?;
    let samples: Vec<LabeledSample<T>> = stage("read-dataset", data::read_dataset(dataset))?;
    if samples.is_empty() {
        return Err(Error::Usage(format!(
            "dataset {} holds no samples",
            dataset.display()
        )));
    }
    if samples[0].cuboid.data.shape() != model.input_dims() {
        return Err(Error::Shape(format!(
            "dataset cuboids are {:?} but the checkpoint expects {:?}",
            samples[0].cuboid.data.shape(),
            model.input_dims()
        )));
    }
    let results: Vec<Result<f64>> = exec.map(&samples, |_, s| {
        Ok(model.forward_infer(&s.cuboid.data)?.data()[1].to_f64())
    });
    let scores = results.into_iter().collect::<Result<Vec<f64>>>()?;
    let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
    let curve = eval::roc_curve(&scores, &labels)?;
    let auc = eval::auc(&curve);
    let metrics = eval::binary_metrics(&scores, &labels, threshold)?;
    let report = eval::MetricsReport::new(auc, &metrics);
    report.write_json(out_report)?;
    let roc_path = roc_csv
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out_report.with_extension("roc.csv"));
    eval::write_roc_csv(&roc_path, &curve)?;
    eprintln!(
        "auc {:.4}, accuracy {:.4}, precision {:.4}, recall {:.4}; report {}, roc {}",
        report.auc,
        report.accuracy,
        report.precision,
        report.recall,
        out_report.display(),
        roc_path.display()
    );
    Ok(())
}
