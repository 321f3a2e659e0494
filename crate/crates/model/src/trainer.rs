use std::collections::BTreeMap;
use std::io::Write;

use reldiff_core::rng::named_stream;
use reldiff_core::{Database, EncoderSet};
use reldiff_tensor::{AdamW, AdamWConfig, Tensor};

use crate::batch::{GraphContext, SamplingMode};
use crate::denoiser::DenoiserModel;
use crate::hyper::HyperParams;
use crate::loss::{joint_loss, LossTargets};
use crate::schedule::NoiseSchedule;
use crate::state::{corrupt_table, CorruptedTable};
use crate::{ModelError, Result};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Components per batch in disjoint mode.
    pub subgraphs_per_batch: usize,
    /// Seed-node budget for the largest table in neighbor mode; other
    /// tables get proportional quotas.
    pub seeds_per_table: usize,
    pub mode: SamplingMode,
    pub seed: u64,
    /// Checkpoint cadence in steps.
    pub checkpoint_every: usize,
    /// Exponential-moving-average factor for checkpoint selection.
    pub ema: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            subgraphs_per_batch: 32,
            seeds_per_table: 64,
            mode: SamplingMode::Auto,
            seed: 0,
            checkpoint_every: 200,
            ema: 0.9,
        }
    }
}

pub struct TrainOutcome {
    pub model: DenoiserModel,
    pub final_loss_ema: f64,
    pub best_loss_ema: f64,
    pub steps: usize,
    /// (step, smoothed loss) of every recorded checkpoint; the returned
    /// parameters are from the smallest entry.
    pub checkpoints: Vec<(usize, f64)>,
}

/// Fit the denoiser on a database. Runs the corruption / denoise / gradient
/// loop over sampled subgraphs and returns the checkpoint with the lowest
/// smoothed training loss.
pub fn train(
    db: &Database,
    encoders: &EncoderSet,
    hyper: &HyperParams,
    cfg: &TrainConfig,
    mut progress: Option<&mut dyn Write>,
) -> Result<TrainOutcome> {
    let graph = reldiff_core::build_entity_graph(db);
    let ctx = GraphContext::build(db, encoders, graph)?;
    let schedule = NoiseSchedule::from_hyper(hyper);

    let mode = match cfg.mode {
        SamplingMode::Auto => {
            if ctx.components.len() > 1 {
                SamplingMode::DisjointComponents
            } else {
                SamplingMode::NeighborSampling
            }
        }
        m => {
            if m == SamplingMode::DisjointComponents && ctx.components.len() <= 1 {
                return Err(ModelError::Config(
                    "disjoint-component mode requires more than one weakly connected \
                     component"
                        .into(),
                ));
            }
            m
        }
    };
    let steps_per_epoch = match mode {
        SamplingMode::DisjointComponents => {
            ctx.components.len().div_ceil(cfg.subgraphs_per_batch.max(1))
        }
        _ => {
            let max_rows = ctx
                .graph
                .node_counts
                .iter()
                .enumerate()
                .filter(|(ti, _)| !ctx.schema.tables[*ti].dimension)
                .map(|(_, &n)| n)
                .max()
                .unwrap_or(1);
            max_rows.div_ceil(cfg.seeds_per_table.max(1)).max(1)
        }
    };
    let total_steps = (cfg.epochs * steps_per_epoch).max(1);

    let mut model = DenoiserModel::init(&db.schema, encoders, hyper.clone(), cfg.seed);
    let mut opt = AdamW::new(AdamWConfig {
        lr: hyper.lr,
        weight_decay: hyper.weight_decay,
        ..AdamWConfig::default()
    });

    let mut rng_batch = named_stream(cfg.seed, "training.batch");
    let mut rng_noise = named_stream(cfg.seed, "training.noise");
    let mut rng_time = named_stream(cfg.seed, "training.time");

    let mut ema: Option<f64> = None;
    let mut best: Option<(f64, BTreeMap<String, Tensor>, usize)> = None;
    let mut checkpoints = Vec::new();

    for step in 0..total_steps {
        let t = schedule.sample_timestep(step, &mut rng_time);
        let lambda_num = NoiseSchedule::lambda_num(step, total_steps);
        let batch = ctx.sample_subgraph(
            mode,
            cfg.subgraphs_per_batch,
            cfg.seeds_per_table,
            hyper.gnn_rounds,
            &mut rng_batch,
        )?;

        let corrupted: Vec<Option<CorruptedTable>> = batch
            .clean
            .iter()
            .enumerate()
            .map(|(ti, clean)| {
                clean.as_ref().map(|c| {
                    corrupt_table(c, &ctx.cardinalities[ti], t, &schedule, &mut rng_noise)
                })
            })
            .collect();
        let noisy: Vec<Option<crate::state::TableState>> = corrupted
            .iter()
            .map(|c| c.as_ref().map(|c| c.noisy.clone()))
            .collect();

        let mut tape = reldiff_tensor::Tape::new();
        let vars = model.insert_params(&mut tape);
        let outputs = model.forward(&mut tape, &vars, &batch.graph, &noisy, t);
        let loss = joint_loss(
            &mut tape,
            &outputs,
            &LossTargets {
                corrupted: &corrupted,
                loss_mask: Some(&batch.loss_mask),
            },
            t,
            lambda_num,
            &schedule,
        );
        let loss_value = tape.value(loss).item();
        if !loss_value.is_finite() {
            return Err(ModelError::Diverged { step });
        }
        let grads_by_var = tape.backward(loss);
        let mut grads = BTreeMap::new();
        for (name, var) in &vars {
            if let Some(g) = grads_by_var.get(*var) {
                if !g.all_finite() {
                    return Err(ModelError::Diverged { step });
                }
                grads.insert(name.clone(), g.clone());
            }
        }
        opt.step(&mut model.params, &grads);
        debug_assert!(model.params.values().all(|p| p.all_finite()));

        let e = match ema {
            None => loss_value,
            Some(prev) => cfg.ema * prev + (1.0 - cfg.ema) * loss_value,
        };
        ema = Some(e);

        if let Some(w) = progress.as_deref_mut() {
            writeln!(
                w,
                "{{\"step\":{step},\"loss\":{loss_value},\"lambda_num\":{lambda_num}}}"
            )?;
        }
        let last = step + 1 == total_steps;
        if (step + 1) % cfg.checkpoint_every.max(1) == 0 || last {
            checkpoints.push((step, e));
            if best.as_ref().map_or(true, |(b, _, _)| e < *b) {
                best = Some((e, model.params.clone(), step));
            }
        }
    }

    let final_ema = ema.unwrap_or(f64::NAN);
    let (best_ema, best_params, _) = best.expect("at least one checkpoint");
    model.params = best_params;
    Ok(TrainOutcome {
        model,
        final_loss_ema: final_ema,
        best_loss_ema: best_ema,
        steps: total_steps,
        checkpoints,
    })
}
