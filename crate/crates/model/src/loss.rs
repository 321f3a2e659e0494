use std::rc::Rc;

use reldiff_tensor::{Tape, Tensor, Var};

use crate::denoiser::TableOutput;
use crate::schedule::NoiseSchedule;
use crate::state::CorruptedTable;

/// Loss inputs for one batch.
pub struct LossTargets<'a> {
    /// Per table (aligned with outputs): corruption record of the batch rows.
    pub corrupted: &'a [Option<CorruptedTable>],
    /// Per table: rows contributing to the loss (all rows when `None`).
    pub loss_mask: Option<&'a [Vec<bool>]>,
}

/// Tape version of the joint objective: per table, the mean squared error of
/// the noise prediction plus the time-weighted cross entropy over masked
/// categorical entries; tables are averaged internally then summed, so large
/// tables do not drown small ones.
pub fn joint_loss(
    tape: &mut Tape,
    outputs: &[Option<TableOutput>],
    targets: &LossTargets,
    t: f64,
    lambda_num: f64,
    schedule: &NoiseSchedule,
) -> Var {
    let mut total: Option<Var> = None;
    for (ti, output) in outputs.iter().enumerate() {
        let (Some(output), Some(corrupted)) = (output, &targets.corrupted[ti]) else {
            continue;
        };
        let n = corrupted.noisy.n;
        if n == 0 {
            continue;
        }
        let mask = targets.loss_mask.map(|m| &m[ti]);
        let counted = mask.map_or(n, |m| m.iter().filter(|&&b| b).count());
        if counted == 0 {
            continue;
        }
        let mut table_loss: Option<Var> = None;

        if let Some(eps_hat) = output.eps {
            let m_num = corrupted.noisy.num_width;
            let target = tape.constant(Tensor::new(
                vec![n, m_num],
                corrupted.eps.clone(),
            ));
            let mut diff = tape.sub(eps_hat, target);
            if let Some(mask) = mask {
                let w: Vec<f64> = mask
                    .iter()
                    .flat_map(|&b| std::iter::repeat(if b { 1.0 } else { 0.0 }).take(m_num))
                    .collect();
                let w = tape.constant(Tensor::new(vec![n, m_num], w));
                diff = tape.mul(diff, w);
            }
            let sq = tape.mul(diff, diff);
            let sum = tape.sum(sq);
            let mse = tape.scale(sum, lambda_num / (counted * m_num.max(1)) as f64);
            table_loss = Some(mse);
        }

        let mut masked_total = 0usize;
        let mut ce_sum: Option<Var> = None;
        for (slot, &logits) in output.cat_logits.iter().enumerate() {
            let cw = corrupted.noisy.cat_width;
            let targets_vec: Vec<i64> = (0..n)
                .map(|r| {
                    let include = mask.map_or(true, |m| m[r]);
                    let is_masked = corrupted.noisy.cats[r * cw + slot]
                        != corrupted.clean_cats[r * cw + slot];
                    if include && is_masked {
                        corrupted.clean_cats[r * cw + slot] as i64
                    } else {
                        -1
                    }
                })
                .collect();
            let count = targets_vec.iter().filter(|&&t| t >= 0).count();
            if count == 0 {
                continue;
            }
            masked_total += count;
            let logprobs = tape.log_softmax(logits);
            let nll = tape.pick_nll_sum(logprobs, Rc::new(targets_vec));
            ce_sum = Some(match ce_sum {
                Some(acc) => tape.add(acc, nll),
                None => nll,
            });
        }
        if let Some(ce) = ce_sum {
            let weight = schedule.lambda_cat * schedule.cat_weight(t) / masked_total as f64;
            let ce = tape.scale(ce, weight);
            table_loss = Some(match table_loss {
                Some(acc) => tape.add(acc, ce),
                None => ce,
            });
        }
        if let Some(tl) = table_loss {
            total = Some(match total {
                Some(acc) => tape.add(acc, tl),
                None => tl,
            });
        }
    }
    total.unwrap_or_else(|| tape.constant(Tensor::scalar(0.0)))
}

/// Pure version over plain arrays, used as the oracle for the tape
/// implementation and by checkpoint selection reporting.
pub fn joint_loss_value(
    eps_hat: &[Option<Vec<f64>>],
    cat_logits: &[Vec<Vec<f64>>],
    corrupted: &[Option<CorruptedTable>],
    t: f64,
    lambda_num: f64,
    schedule: &NoiseSchedule,
) -> f64 {
    let mut total = 0.0;
    for ti in 0..corrupted.len() {
        let Some(corr) = &corrupted[ti] else { continue };
        let n = corr.noisy.n;
        if n == 0 {
            continue;
        }
        if let Some(eps_hat) = &eps_hat[ti] {
            let m_num = corr.noisy.num_width;
            let mse: f64 = eps_hat
                .iter()
                .zip(&corr.eps)
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum::<f64>()
                / (n * m_num.max(1)) as f64;
            total += lambda_num * mse;
        }
        let cw = corr.noisy.cat_width;
        let mut ce = 0.0;
        let mut masked = 0usize;
        for (slot, logits) in cat_logits[ti].iter().enumerate() {
            let k = logits.len() / n.max(1);
            for r in 0..n {
                if corr.noisy.cats[r * cw + slot] == corr.clean_cats[r * cw + slot] {
                    continue;
                }
                masked += 1;
                let row = &logits[r * k..(r + 1) * k];
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = row.iter().map(|x| (x - max).exp()).sum::<f64>().ln() + max;
                ce -= row[corr.clean_cats[r * cw + slot] as usize] - lse;
            }
        }
        if masked > 0 {
            total += schedule.lambda_cat * schedule.cat_weight(t) * ce / masked as f64;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyper::HyperParams;
    use crate::state::TableState;

    fn schedule() -> NoiseSchedule {
        NoiseSchedule::from_hyper(&HyperParams::default())
    }

    fn table(n: usize, num_width: usize, cat_width: usize) -> CorruptedTable {
        CorruptedTable {
            noisy: TableState {
                n,
                num_width,
                cat_width,
                nums: vec![0.0; n * num_width],
                cats: vec![0; n * cat_width],
            },
            eps: vec![0.0; n * num_width],
            clean_cats: vec![0; n * cat_width],
        }
    }

    #[test]
    fn exact_prediction_nothing_masked_is_zero() {
        let corr = table(3, 2, 1);
        let loss = joint_loss_value(
            &[Some(vec![0.0; 6])],
            &[vec![vec![0.0; 12]]],
            &[Some(corr)],
            0.5,
            1.0,
            &schedule(),
        );
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn numeric_error_squared() {
        // One numeric attribute, eps_hat - eps = 0.3 everywhere: loss 0.09.
        let corr = table(4, 1, 0);
        let loss = joint_loss_value(
            &[Some(vec![0.3; 4])],
            &[vec![]],
            &[Some(corr)],
            0.5,
            1.0,
            &schedule(),
        );
        assert!((loss - 0.09).abs() < 1e-12);
    }

    #[test]
    fn masked_uniform_logits_weighted_ce() {
        // One masked categorical with uniform logits over K=4 at t=0.5:
        // loss = (1/0.5) * ln 4.
        let mut corr = table(1, 0, 1);
        corr.noisy.cats[0] = 4; // masked (K = 4)
        corr.clean_cats[0] = 2;
        let loss = joint_loss_value(
            &[None],
            &[vec![vec![0.0; 4]]],
            &[Some(corr)],
            0.5,
            1.0,
            &schedule(),
        );
        assert!((loss - 2.0 * 4.0f64.ln()).abs() < 1e-12, "loss {loss}");
    }

    #[test]
    fn tape_version_matches_pure_version() {
        let mut rng_state = 12345u64;
        let mut next = move || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((rng_state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let n = 5;
        let mut corr = table(n, 2, 2);
        for v in corr.eps.iter_mut() {
            *v = next();
        }
        // Mask a few entries (K = 3 for both slots).
        corr.noisy.cats = vec![0, 3, 3, 1, 0, 0, 3, 3, 2, 1];
        corr.clean_cats = vec![0, 1, 2, 1, 0, 0, 2, 0, 2, 1];
        let eps_hat: Vec<f64> = (0..n * 2).map(|_| next()).collect();
        let logits_a: Vec<f64> = (0..n * 3).map(|_| next()).collect();
        let logits_b: Vec<f64> = (0..n * 3).map(|_| next()).collect();

        let pure = joint_loss_value(
            &[Some(eps_hat.clone())],
            &[vec![logits_a.clone(), logits_b.clone()]],
            &[Some(corr.clone())],
            0.37,
            0.8,
            &schedule(),
        );

        let mut tape = Tape::new();
        let eps_var = tape.constant(Tensor::new(vec![n, 2], eps_hat));
        let la = tape.constant(Tensor::new(vec![n, 3], logits_a));
        let lb = tape.constant(Tensor::new(vec![n, 3], logits_b));
        let outputs = vec![Some(TableOutput {
            eps: Some(eps_var),
            cat_logits: vec![la, lb],
        })];
        let corrupted = vec![Some(corr)];
        let loss = joint_loss(
            &mut tape,
            &outputs,
            &LossTargets {
                corrupted: &corrupted,
                loss_mask: None,
            },
            0.37,
            0.8,
            &schedule(),
        );
        assert!((tape.value(loss).item() - pure).abs() < 1e-10);
    }
}
