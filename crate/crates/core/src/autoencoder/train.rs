use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Autoencoder, Mode};
use crate::error::{Error, Result};
use crate::features::{batch_tensor, FeatureSeries};
use crate::rng;
use crate::tensor::{AdamState, Tape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Stop after the first epoch whose mean loss is at or below this value.
    pub stop_at_loss: Option<f64>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { epochs: 30, batch_size: 32, lr: 2e-3, seed: 0, stop_at_loss: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean training-mode loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub wall_time_s: f64,
    pub epochs_run: usize,
    /// Eval-mode mean reconstruction MAE over the training set after the
    /// last epoch.
    pub final_train_mae: f64,
}

/// Minimizes reconstruction MAE over shuffled mini-batches with Adam.
///
/// `train_set` must already be normalized with the model's statistics.
/// Frozen parameters are left untouched.
pub fn train(model: &mut Autoencoder, train_set: &[FeatureSeries], opts: &TrainOptions) -> Result<TrainReport> {
    if train_set.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if opts.batch_size == 0 {
        return Err(Error::invalid("batch_size must be at least 1"));
    }
    if !(opts.lr > 0.0 && opts.lr.is_finite()) {
        return Err(Error::invalid(format!("learning rate must be positive, got {}", opts.lr)));
    }
    let started = Instant::now();
    let mut adam = AdamState::new(model.params(), opts.lr);
    let mut epoch_losses = Vec::with_capacity(opts.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 0..opts.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng::stream(&[opts.seed, 0x5f1e, epoch as u64]));
        let mut total = 0.0;
        for (bi, chunk) in order.chunks(opts.batch_size).enumerate() {
            let batch: Vec<&FeatureSeries> = chunk.iter().map(|&i| &train_set[i]).collect();
            let x = batch_tensor(&batch)?;
            let mut tape = Tape::new();
            let xv = tape.leaf(x);
            let seed = rng::derive_seed(&[opts.seed, 0xd209, epoch as u64, bi as u64]);
            let fwd = model.forward(&mut tape, xv, Mode::Train { seed })?;
            let loss = tape.mae(fwd.output, xv)?;
            let loss_value = tape.value(loss).data()[0];
            if !loss_value.is_finite() {
                return Err(Error::Numerical(format!(
                    "loss became {loss_value} at epoch {} batch {bi}; try a lower learning rate than {}",
                    epoch + 1,
                    opts.lr
                )));
            }
            let grads = tape.backward(loss)?;
            let grads: Vec<Tensor> = fwd
                .params
                .iter()
                .zip(model.params())
                .map(|(&v, p)| grads.get_or_zeros(v, &p.value))
                .collect();
            adam.step(model.params_mut(), &grads)?;
            total += loss_value * chunk.len() as f64;
        }
        let mean = total / train_set.len() as f64;
        epoch_losses.push(mean);
        if opts.stop_at_loss.is_some_and(|target| mean <= target) {
            break;
        }
    }

    let final_train_mae = mean_reconstruction_error(model, train_set)?;
    if !final_train_mae.is_finite() {
        return Err(Error::Numerical(format!("final reconstruction error is {final_train_mae}")));
    }
    Ok(TrainReport {
        epochs_run: epoch_losses.len(),
        epoch_losses,
        wall_time_s: started.elapsed().as_secs_f64(),
        final_train_mae,
    })
}

/// Eval-mode reconstruction MAE of every series, in order.
pub(crate) fn reconstruction_errors(model: &Autoencoder, set: &[FeatureSeries]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(set.len());
    for chunk in set.chunks(64) {
        let refs: Vec<&FeatureSeries> = chunk.iter().collect();
        out.extend(model.sample_errors(&batch_tensor(&refs)?)?);
    }
    Ok(out)
}

fn mean_reconstruction_error(model: &Autoencoder, set: &[FeatureSeries]) -> Result<f64> {
    let errs = reconstruction_errors(model, set)?;
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

/// Writes the `epoch,loss` table, epochs numbered from 1.
pub fn write_train_report<W: Write>(sink: W, report: &TrainReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["epoch", "loss"])?;
    for (i, l) in report.epoch_losses.iter().enumerate() {
        w.write_record([(i + 1).to_string(), l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::{init_model, LayerSpec, ModelConfig};

    fn small() -> ModelConfig {
        ModelConfig {
            input_length: 32,
            encoder_layers: vec![LayerSpec::new(8, 5, 2), LayerSpec::new(4, 5, 2)],
            decoder_layers: vec![LayerSpec::new(4, 5, 2), LayerSpec::new(8, 5, 2)],
            output_kernel: 5,
            dropout_rate: 0.1,
            seed: 11,
            ..ModelConfig::default()
        }
    }

    fn series(id: &str, phase: f64) -> FeatureSeries {
        let alt = (0..32).map(|i| 1.5 - i as f64 / 10.0 + 0.1 * (i as f64 * 0.4 + phase).sin()).collect();
        let gs = (0..32).map(|i| 1.0 - i as f64 / 16.0 + 0.1 * (i as f64 * 0.3 + phase).cos()).collect();
        FeatureSeries::new(id, alt, gs).unwrap()
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let mut m = init_model(small()).unwrap();
        let before = m.clone();
        let r = train(&mut m, &[series("a", 0.0)], &TrainOptions { epochs: 0, ..Default::default() }).unwrap();
        assert!(r.epoch_losses.is_empty());
        assert_eq!(r.epochs_run, 0);
        assert_eq!(m, before);
    }

    #[test]
    fn overfits_a_single_sample() {
        let mut m = init_model(small()).unwrap();
        let set = [series("a", 0.3)];
        let opts = TrainOptions { epochs: 200, batch_size: 1, lr: 3e-3, seed: 5, stop_at_loss: None };
        let initial = m.sample_errors(&batch_tensor(&[&set[0]]).unwrap()).unwrap()[0];
        let r = train(&mut m, &set, &opts).unwrap();
        assert_eq!(r.epoch_losses.len(), 200);
        assert!(r.final_train_mae < 0.2 * initial, "{} vs initial {initial}", r.final_train_mae);
    }

    #[test]
    fn same_seed_same_curve() {
        let set: Vec<_> = (0..6).map(|i| series(&format!("s{i}"), i as f64)).collect();
        let opts = TrainOptions { epochs: 5, batch_size: 4, lr: 1e-3, seed: 9, stop_at_loss: None };
        let mut a = init_model(small()).unwrap();
        let mut b = init_model(small()).unwrap();
        let ra = train(&mut a, &set, &opts).unwrap();
        let rb = train(&mut b, &set, &opts).unwrap();
        assert_eq!(ra.epoch_losses, rb.epoch_losses);
        assert_eq!(a, b);
    }

    #[test]
    fn errors() {
        let mut m = init_model(small()).unwrap();
        assert!(matches!(train(&mut m, &[], &TrainOptions::default()), Err(Error::InvalidArgument(_))));
        let opts = TrainOptions { epochs: 3, lr: 1e300, ..Default::default() };
        let mut huge = series("a", 0.0);
        huge.alt.iter_mut().for_each(|v| *v *= 1e300);
        assert!(matches!(train(&mut m, &[huge], &opts), Err(Error::Numerical(_))));
    }

    #[test]
    fn stops_at_target() {
        let mut m = init_model(small()).unwrap();
        let opts = TrainOptions { epochs: 50, batch_size: 1, lr: 3e-3, seed: 1, stop_at_loss: Some(f64::INFINITY) };
        let r = train(&mut m, &[series("a", 0.0)], &opts).unwrap();
        assert_eq!(r.epochs_run, 1);
    }

    #[test]
    fn report_csv() {
        let r = TrainReport { epoch_losses: vec![0.5, 0.25], wall_time_s: 1.0, epochs_run: 2, final_train_mae: 0.2 };
        let mut buf = Vec::new();
        write_train_report(&mut buf, &r).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "epoch,loss\n1,0.5\n2,0.25\n");
    }
}
