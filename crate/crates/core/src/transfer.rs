//! Reusing a model trained at one airport for another: freeze the first
//! encoder layer, fine-tune the rest, and compare with training from scratch.

use std::io::Write;
use std::path::PathBuf;

use crate::autoencoder::{init_model, load_checkpoint, train, Autoencoder, ModelConfig, TrainOptions, TrainReport, FIRST_LAYER};
use crate::error::{Error, Result};
use crate::features::{apply_norm, fit_norm_stats, FeatureSeries};

#[derive(Debug, Clone, PartialEq)]
pub struct TransferSpec {
    pub source_checkpoint: PathBuf,
    pub freeze: Vec<String>,
    /// When set, the checkpoint's architecture must match it.
    pub expected_config: Option<ModelConfig>,
    pub train: TrainOptions,
}

impl TransferSpec {
    pub fn new(source_checkpoint: impl Into<PathBuf>, train: TrainOptions) -> Self {
        Self {
            source_checkpoint: source_checkpoint.into(),
            freeze: FIRST_LAYER.iter().map(|s| s.to_string()).collect(),
            expected_config: None,
            train,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferReport {
    pub loss_target: f64,
    pub fine_tune: TrainReport,
    pub from_scratch: Option<TrainReport>,
    /// First epoch (1-based) whose mean loss is at or below the target, or
    /// the budget plus one when it never is.
    pub finetune_epochs_to_target: usize,
    pub scratch_epochs_to_target: Option<usize>,
    pub speedup_ratio: Option<f64>,
}

/// Fine-tunes the checkpoint named in `spec` on raw (unnormalized) target
/// series. Normalization statistics are refitted on the target data.
pub fn fine_tune(spec: &TransferSpec, target_raw: &[FeatureSeries]) -> Result<(Autoencoder, TrainReport)> {
    let source = load_checkpoint(&spec.source_checkpoint)?.model;
    if let Some(expected) = &spec.expected_config {
        if !same_architecture(expected, &source.config) {
            return Err(Error::config(format!(
                "checkpoint {} architecture differs from the expected model config",
                spec.source_checkpoint.display()
            )));
        }
    }
    let freeze: Vec<&str> = spec.freeze.iter().map(String::as_str).collect();
    fine_tune_model(source, &freeze, target_raw, &spec.train)
}

fn same_architecture(a: &ModelConfig, b: &ModelConfig) -> bool {
    a.input_length == b.input_length
        && a.input_channels == b.input_channels
        && a.encoder_layers == b.encoder_layers
        && a.decoder_layers == b.decoder_layers
        && a.output_kernel == b.output_kernel
}

/// [`fine_tune`] on an in-memory source model.
pub fn fine_tune_model(
    mut model: Autoencoder,
    freeze: &[&str],
    target_raw: &[FeatureSeries],
    opts: &TrainOptions,
) -> Result<(Autoencoder, TrainReport)> {
    let target = prepare_target(&mut model, target_raw)?;
    model.freeze(freeze)?;
    let report = train(&mut model, &target, opts)?;
    Ok((model, report))
}

fn prepare_target(model: &mut Autoencoder, target_raw: &[FeatureSeries]) -> Result<Vec<FeatureSeries>> {
    if target_raw.is_empty() {
        return Err(Error::invalid("target training set is empty"));
    }
    if let Some(bad) = target_raw.iter().find(|s| s.len() != model.config.input_length) {
        return Err(Error::config(format!(
            "target series {} has length {}, the source model expects {}",
            bad.flight_id,
            bad.len(),
            model.config.input_length
        )));
    }
    model.norm_stats = fit_norm_stats(target_raw)?;
    Ok(target_raw.iter().map(|s| apply_norm(s, &model.norm_stats)).collect())
}

pub fn epochs_to_target(losses: &[f64], target: f64, budget: usize) -> usize {
    losses.iter().take(budget).position(|&l| l <= target).map_or(budget + 1, |i| i + 1)
}

/// Runs a fine-tune arm from `source` and a from-scratch arm with the same
/// architecture, data, and hyperparameters for `budget_epochs` each.
///
/// The scratch arm is initialized with `opts.seed`; both arms train on the
/// target data normalized with target statistics.
pub fn compare_transfer(
    source: &Autoencoder,
    freeze: &[&str],
    target_raw: &[FeatureSeries],
    loss_target: f64,
    budget_epochs: usize,
    opts: &TrainOptions,
) -> Result<TransferReport> {
    let opts = TrainOptions { epochs: budget_epochs, stop_at_loss: None, ..*opts };
    let scratch = init_model(source.config.clone().with_seed(opts.seed))?;
    let (tuned, scratch_run) = std::thread::scope(|s| {
        let tuned = s.spawn(|| fine_tune_model(source.clone(), freeze, target_raw, &opts));
        let scratch_run = fine_tune_model(scratch, &[], target_raw, &opts);
        (tuned.join().expect("fine-tune arm panicked"), scratch_run)
    });
    let (_, fine) = tuned?;
    let (_, scratch) = scratch_run?;
    let ft = epochs_to_target(&fine.epoch_losses, loss_target, budget_epochs);
    let sc = epochs_to_target(&scratch.epoch_losses, loss_target, budget_epochs);
    Ok(TransferReport {
        loss_target,
        fine_tune: fine,
        from_scratch: Some(scratch),
        finetune_epochs_to_target: ft,
        scratch_epochs_to_target: Some(sc),
        speedup_ratio: Some(sc as f64 / ft as f64),
    })
}

/// `epoch,finetune_loss,scratch_loss`, blank where an arm has no value.
pub fn write_transfer_csv<W: Write>(sink: W, report: &TransferReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["epoch", "finetune_loss", "scratch_loss"])?;
    let scratch = report.from_scratch.as_ref().map_or(&[][..], |r| &r.epoch_losses[..]);
    let rows = report.fine_tune.epoch_losses.len().max(scratch.len());
    let cell = |v: Option<&f64>| v.map(f64::to_string).unwrap_or_default();
    for i in 0..rows {
        w.write_record([(i + 1).to_string(), cell(report.fine_tune.epoch_losses.get(i)), cell(scratch.get(i))])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::{save_checkpoint, LayerSpec};

    fn config() -> ModelConfig {
        ModelConfig {
            input_length: 32,
            encoder_layers: vec![LayerSpec::new(6, 5, 2), LayerSpec::new(3, 5, 2)],
            decoder_layers: vec![LayerSpec::new(3, 5, 2), LayerSpec::new(6, 5, 2)],
            output_kernel: 5,
            seed: 4,
            ..ModelConfig::default()
        }
    }

    fn raw(n: usize, field: f64) -> Vec<FeatureSeries> {
        (0..n)
            .map(|k| {
                let alt = (0..32).map(|i| field + 300.0 * (31 - i) as f64 + 50.0 * ((i + k) as f64).sin()).collect();
                let gs = (0..32).map(|i| 140.0 + 3.0 * (31 - i) as f64 + (k as f64).cos()).collect();
                FeatureSeries::new(format!("t{k}"), alt, gs).unwrap()
            })
            .collect()
    }

    fn opts(epochs: usize) -> TrainOptions {
        TrainOptions { epochs, batch_size: 4, lr: 2e-3, seed: 6, stop_at_loss: None }
    }

    #[test]
    fn frozen_layer_is_bitwise_unchanged() {
        let source = init_model(config()).unwrap();
        let (tuned, report) = fine_tune_model(source.clone(), &FIRST_LAYER, &raw(8, 5000.0), &opts(5)).unwrap();
        assert_eq!(report.epochs_run, 5);
        for name in FIRST_LAYER {
            assert_eq!(tuned.param(name).unwrap().value, source.param(name).unwrap().value);
        }
        assert_ne!(tuned.param("enc1.weight").unwrap().value, source.param("enc1.weight").unwrap().value);
        assert!((tuned.norm_stats.mean[0] - fit_norm_stats(&raw(8, 5000.0)).unwrap().mean[0]).abs() < 1e-9);
    }

    #[test]
    fn zero_epochs_changes_only_norm_stats() {
        let source = init_model(config()).unwrap();
        let (tuned, _) = fine_tune_model(source.clone(), &FIRST_LAYER, &raw(4, 5000.0), &opts(0)).unwrap();
        for (a, b) in tuned.params().iter().zip(source.params()) {
            assert_eq!(a.value, b.value);
        }
        assert_ne!(tuned.norm_stats, source.norm_stats);
    }

    #[test]
    fn freezing_everything_keeps_loss_flat() {
        let source = init_model(config()).unwrap();
        let all: Vec<String> = source.params().iter().map(|p| p.name.clone()).collect();
        let all: Vec<&str> = all.iter().map(String::as_str).collect();
        let mut o = opts(3);
        o.lr = 1e-2;
        let (tuned, _) = fine_tune_model(source.clone(), &all, &raw(4, 5000.0), &o).unwrap();
        for (a, b) in tuned.params().iter().zip(source.params()) {
            assert_eq!(a.value, b.value);
        }
    }

    #[test]
    fn empty_freeze_matches_ordinary_training() {
        let data = raw(6, 3000.0);
        let (_, a) = fine_tune_model(init_model(config()).unwrap(), &[], &data, &opts(4)).unwrap();
        let mut m = init_model(config()).unwrap();
        m.norm_stats = fit_norm_stats(&data).unwrap();
        let normed: Vec<_> = data.iter().map(|s| apply_norm(s, &m.norm_stats)).collect();
        let b = train(&mut m, &normed, &opts(4)).unwrap();
        assert_eq!(a.epoch_losses, b.epoch_losses);
    }

    #[test]
    fn identical_arms_give_unit_speedup() {
        let source = init_model(config().with_seed(6)).unwrap();
        let data = raw(6, 3000.0);
        let r = compare_transfer(&source, &[], &data, 0.5, 5, &opts(0)).unwrap();
        assert_eq!(r.fine_tune.epoch_losses, r.from_scratch.as_ref().unwrap().epoch_losses);
        assert_eq!(r.speedup_ratio, Some(1.0));

        let r = compare_transfer(&source, &FIRST_LAYER, &data, -1.0, 3, &opts(0)).unwrap();
        assert_eq!((r.finetune_epochs_to_target, r.scratch_epochs_to_target), (4, Some(4)));
        assert_eq!(r.speedup_ratio, Some(1.0));
    }

    #[test]
    fn deterministic_reports() {
        let source = init_model(config()).unwrap();
        let data = raw(6, 3000.0);
        let a = compare_transfer(&source, &FIRST_LAYER, &data, 0.3, 3, &opts(0)).unwrap();
        let b = compare_transfer(&source, &FIRST_LAYER, &data, 0.3, 3, &opts(0)).unwrap();
        assert_eq!(a.fine_tune.epoch_losses, b.fine_tune.epoch_losses);
        assert_eq!(a.from_scratch.unwrap().epoch_losses, b.from_scratch.unwrap().epoch_losses);
    }

    #[test]
    fn checkpoint_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("src.ckpt");
        save_checkpoint(&init_model(config()).unwrap(), None, &path).unwrap();
        let mut spec = TransferSpec::new(&path, opts(1));
        spec.expected_config = Some(ModelConfig { output_kernel: 3, ..config() });
        assert!(matches!(fine_tune(&spec, &raw(4, 0.0)), Err(Error::InvalidConfig(_))));
        spec.expected_config = Some(config().with_seed(99));
        assert!(fine_tune(&spec, &raw(4, 0.0)).is_ok());
        let long = vec![FeatureSeries::new("x", vec![0.0; 64], vec![0.0; 64]).unwrap()];
        assert!(matches!(fine_tune(&spec, &long), Err(Error::InvalidConfig(_))));
        spec.freeze = vec!["nope".into()];
        let err = fine_tune(&spec, &raw(4, 0.0)).unwrap_err().to_string();
        assert!(err.contains("enc0.weight"), "{err}");
    }

    #[test]
    fn epochs_to_target_convention() {
        assert_eq!(epochs_to_target(&[0.9, 0.5, 0.2], 0.5, 3), 2);
        assert_eq!(epochs_to_target(&[0.9, 0.8], 0.1, 2), 3);
        assert_eq!(epochs_to_target(&[], 0.1, 0), 1);
    }

    #[test]
    fn csv_layout() {
        let tr = |l: Vec<f64>| TrainReport { epochs_run: l.len(), epoch_losses: l, wall_time_s: 0.0, final_train_mae: 0.0 };
        let r = TransferReport {
            loss_target: 0.1,
            fine_tune: tr(vec![0.5]),
            from_scratch: Some(tr(vec![0.75, 0.25])),
            finetune_epochs_to_target: 2,
            scratch_epochs_to_target: Some(3),
            speedup_ratio: Some(1.5),
        };
        let mut buf = Vec::new();
        write_transfer_csv(&mut buf, &r).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "epoch,finetune_loss,scratch_loss\n1,0.5,0.75\n2,,0.25\n");
    }
}
