//! Single-network and two-network comparison trainers.

use crate::dataset::LabeledDataset;
use crate::error::Result;
use crate::loss::{
    cross_entropy, cross_entropy_grad, reduce_selected, select_small_loss, Selection,
};
use crate::nn::{argmax_rows, AdamConfig, MlpNetwork};

use super::{check_variant, run_epochs, Batch, StepOutcome, TrainRun, TrainerConfig, Variant};

/// Plain cross-entropy on every example. The reported label precision is
/// the clean fraction of each whole batch.
pub fn train_standard(
    data: &LabeledDataset,
    test: &LabeledDataset,
    cfg: &TrainerConfig,
) -> Result<TrainRun> {
    check_variant(cfg, &[Variant::Standard])?;
    run_epochs(data, test, cfg, |nets, batch, _rate, adam| {
        single_step(&mut nets[0], batch, None, adam)
    })
}

/// One network trained on the mean of its own `⌈R·batch⌉` smallest
/// cross-entropy losses.
pub fn train_standard_plus(
    data: &LabeledDataset,
    test: &LabeledDataset,
    cfg: &TrainerConfig,
) -> Result<TrainRun> {
    check_variant(cfg, &[Variant::StandardPlus])?;
    run_epochs(data, test, cfg, |nets, batch, rate, adam| {
        single_step(&mut nets[0], batch, Some(rate), adam)
    })
}

fn single_step(
    net: &mut MlpNetwork,
    batch: &Batch,
    rate: Option<f64>,
    adam: &AdamConfig,
) -> Result<StepOutcome> {
    let trace = net.forward(&batch.x)?;
    let ce = cross_entropy(&trace.probs, &batch.labels)?;
    let sel = match rate {
        Some(r) => select_small_loss(&ce, r)?,
        None => Selection::all(ce.len()),
    };
    let loss = reduce_selected(&ce, &sel)?;
    let grad = net.backward(
        &trace,
        &cross_entropy_grad(&trace.probs, &batch.labels, &sel)?,
    )?;
    net.adam_step(&grad, adam)?;
    Ok(StepOutcome {
        selections: vec![sel],
        loss: Some(loss),
    })
}

/// Update `net` on the mean cross-entropy over `sel`; returns that mean.
fn update_on(
    net: &mut MlpNetwork,
    trace: &crate::nn::ForwardTrace,
    ce: &[f64],
    labels: &[usize],
    sel: &Selection,
    adam: &AdamConfig,
) -> Result<f64> {
    let loss = reduce_selected(ce, sel)?;
    let grad = net.backward(trace, &cross_entropy_grad(&trace.probs, labels, sel)?)?;
    net.adam_step(&grad, adam)?;
    Ok(loss)
}

/// Cross-update: each network picks its own small-loss examples and its
/// peer trains on them. The two networks keep separate Adam states.
pub fn train_co_teaching(
    data: &LabeledDataset,
    test: &LabeledDataset,
    cfg: &TrainerConfig,
) -> Result<TrainRun> {
    check_variant(cfg, &[Variant::CoTeaching])?;
    run_epochs(data, test, cfg, |nets, batch, rate, adam| {
        let (first, second) = nets.split_at_mut(1);
        let (net1, net2) = (&mut first[0], &mut second[0]);
        let t1 = net1.forward(&batch.x)?;
        let t2 = net2.forward(&batch.x)?;
        let ce1 = cross_entropy(&t1.probs, &batch.labels)?;
        let ce2 = cross_entropy(&t2.probs, &batch.labels)?;
        let sel1 = select_small_loss(&ce1, rate)?;
        let sel2 = select_small_loss(&ce2, rate)?;
        let l1 = update_on(net1, &t1, &ce1, &batch.labels, &sel2, adam)?;
        let l2 = update_on(net2, &t2, &ce2, &batch.labels, &sel1, adam)?;
        Ok(StepOutcome {
            selections: vec![sel1, sel2],
            loss: Some(0.5 * (l1 + l2)),
        })
    })
}

/// Update both networks only on examples where their argmax predictions
/// disagree; batches without disagreement are skipped.
pub fn train_decoupling(
    data: &LabeledDataset,
    test: &LabeledDataset,
    cfg: &TrainerConfig,
) -> Result<TrainRun> {
    check_variant(cfg, &[Variant::Decoupling])?;
    run_epochs(data, test, cfg, |nets, batch, _rate, adam| {
        let (first, second) = nets.split_at_mut(1);
        let (net1, net2) = (&mut first[0], &mut second[0]);
        let t1 = net1.forward(&batch.x)?;
        let t2 = net2.forward(&batch.x)?;
        let pred1 = argmax_rows(&t1.probs);
        let pred2 = argmax_rows(&t2.probs);
        let disagree: Vec<usize> = (0..pred1.len()).filter(|&i| pred1[i] != pred2[i]).collect();
        if disagree.is_empty() {
            return Ok(StepOutcome::default());
        }
        let sel = Selection {
            keep_rate: disagree.len() as f64 / pred1.len() as f64,
            kept_indices: disagree,
        };
        let ce1 = cross_entropy(&t1.probs, &batch.labels)?;
        let ce2 = cross_entropy(&t2.probs, &batch.labels)?;
        let l1 = update_on(net1, &t1, &ce1, &batch.labels, &sel, adam)?;
        let l2 = update_on(net2, &t2, &ce2, &batch.labels, &sel, adam)?;
        Ok(StepOutcome {
            selections: vec![sel],
            loss: Some(0.5 * (l1 + l2)),
        })
    })
}
