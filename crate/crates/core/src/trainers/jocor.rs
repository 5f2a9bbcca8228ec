use crate::dataset::LabeledDataset;
use crate::error::Result;
use crate::loss::{joint_loss, joint_loss_grad, reduce_selected, select_small_loss};

use super::{check_variant, run_epochs, StepOutcome, TrainRun, TrainerConfig, Variant};

/// Joint training of two networks with co-regularization.
///
/// Per batch: both networks predict, the per-example joint loss
/// `(1-λ)(CE₁ + CE₂) + λ·symKL(p₁, p₂)` ranks the examples, the smallest
/// `⌈R·batch⌉` are kept, and the mean kept loss is differentiated through
/// both networks. The two networks together form one parameter set updated
/// by one Adam step; since Adam is element-wise, this is realized as two
/// moment buffers that always advance in lockstep.
///
/// Also serves `Variant::JointOnly`, which pins λ to 0.
pub fn train_jocor(
    data: &LabeledDataset,
    test: &LabeledDataset,
    cfg: &TrainerConfig,
) -> Result<TrainRun> {
    check_variant(cfg, &[Variant::Jocor, Variant::JointOnly])?;
    let lambda = cfg.effective_lambda();
    run_epochs(data, test, cfg, |nets, batch, rate, adam| {
        let (first, second) = nets.split_at_mut(1);
        let (net1, net2) = (&mut first[0], &mut second[0]);
        let t1 = net1.forward(&batch.x)?;
        let t2 = net2.forward(&batch.x)?;
        let losses = joint_loss(&t1.probs, &t2.probs, &batch.labels, lambda)?;
        let sel = select_small_loss(&losses.per_example_joint, rate)?;
        let loss = reduce_selected(&losses.per_example_joint, &sel)?;
        let (d1, d2) = joint_loss_grad(&t1.probs, &t2.probs, &batch.labels, lambda, &sel)?;
        let g1 = net1.backward(&t1, &d1)?;
        let g2 = net2.backward(&t2, &d2)?;
        net1.adam_step(&g1, adam)?;
        net2.adam_step(&g2, adam)?;
        debug_assert_eq!(net1.adam_state().step(), net2.adam_state().step());
        Ok(StepOutcome {
            selections: vec![sel],
            loss: Some(loss),
        })
    })
}
