//! Hyperparameter grid: train one model per cell and report Top-1 on both
//! test splits, in a fixed cell order, as one TSV table.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Vocab};
use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::eval::{evaluate_answers_top1, evaluate_top1};
use crate::exec::ExecMode;
use crate::nn::OptimizerKind;
use crate::train::{ModelKind, TrainConfig, Trainer};

/// The axes the grid sweeps. Cells are visited in nesting order:
/// model, then optimizer, then learning rate, then region-size set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridAxes {
    pub models: Vec<ModelKind>,
    pub optimizers: Vec<OptimizerKind>,
    pub learning_rates: Vec<f64>,
    pub region_size_sets: Vec<Vec<usize>>,
}

impl GridAxes {
    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty()
            || self.optimizers.is_empty()
            || self.learning_rates.is_empty()
            || self.region_size_sets.is_empty()
        {
            return Err(Error::InvalidConfig("every grid axis needs at least one value".into()));
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.models.len()
            * self.optimizers.len()
            * self.learning_rates.len()
            * self.region_size_sets.len()
    }
}

/// One trained-and-evaluated grid cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridCell {
    pub model: ModelKind,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub region_sizes: Vec<usize>,
    /// Mean triple loss of the final training epoch.
    pub train_loss: f64,
    pub test1_top1: f64,
    pub test2_top1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridReport {
    pub k: usize,
    pub cells: Vec<GridCell>,
}

impl GridReport {
    /// One header line plus one line per cell, columns tab-separated,
    /// region sizes comma-joined.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(
            "model\toptimizer\tlearning_rate\tregion_sizes\ttrain_loss\ttest1_top1\ttest2_top1\n",
        );
        for c in &self.cells {
            let sizes = c
                .region_sizes
                .iter()
                .map(|m| m.to_string())
                .collect::<Vec<_>>()
                .join(",");
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                c.model, c.optimizer, c.learning_rate, sizes, c.train_loss, c.test1_top1,
                c.test2_top1
            ));
        }
        out
    }

    /// Best cell for a model, judged by the mean of the two test
    /// accuracies; `None` when the grid had no cell for that model.
    pub fn best_mean_top1(&self, model: ModelKind) -> Option<f64> {
        self.cells
            .iter()
            .filter(|c| c.model == model)
            .map(|c| (c.test1_top1 + c.test2_top1) / 2.0)
            .fold(None, |best, v| {
                Some(best.map_or(v, |b: f64| b.max(v)))
            })
    }
}

/// Train and evaluate every cell. `base` supplies everything the axes do
/// not sweep (epochs, batch size, seed, ...). Each cell trains for the
/// full `base.epochs` (no dev split, no early stopping) and is evaluated
/// with pools of size `k`: user pools for the user-ranking model, answer
/// pools for the answer-ranking model.
#[allow(clippy::too_many_arguments)]
pub fn run_grid(
    base: &TrainConfig,
    axes: &GridAxes,
    train: &Dataset,
    test1: &Dataset,
    test2: &Dataset,
    vocab: &Vocab,
    word_source: &EmbeddingTable,
    user_table: &EmbeddingTable,
    k: usize,
    eval_seed: u64,
    mode: ExecMode,
    mut progress: Option<&mut dyn Write>,
) -> Result<GridReport> {
    axes.validate()?;
    let mut cells = Vec::with_capacity(axes.cell_count());
    for &model in &axes.models {
        for &optimizer in &axes.optimizers {
            for &learning_rate in &axes.learning_rates {
                for region_sizes in &axes.region_size_sets {
                    let config = TrainConfig {
                        model,
                        optimizer,
                        learning_rate,
                        region_sizes: region_sizes.clone(),
                        ..base.clone()
                    };
                    let mut trainer =
                        Trainer::new(config, train, vocab, word_source, user_table)?;
                    let summary = trainer.fit(None, None, mode)?;
                    let train_loss = *summary
                        .epoch_losses
                        .last()
                        .expect("fit ran at least one epoch");

                    let eval = |split: &Dataset| -> Result<f64> {
                        let report = match model {
                            ModelKind::QUser => evaluate_top1(
                                &trainer.params,
                                split,
                                trainer.config.tokenize_mode,
                                k,
                                eval_seed,
                                false,
                                mode,
                            )?,
                            ModelKind::QAnswer => evaluate_answers_top1(
                                &trainer.params,
                                split,
                                trainer.config.tokenize_mode,
                                k,
                                eval_seed,
                                false,
                                mode,
                            )?,
                        };
                        Ok(report.top1_accuracy)
                    };
                    let cell = GridCell {
                        model,
                        optimizer,
                        learning_rate,
                        region_sizes: region_sizes.clone(),
                        train_loss,
                        test1_top1: eval(test1)?,
                        test2_top1: eval(test2)?,
                    };
                    if let Some(out) = progress.as_deref_mut() {
                        writeln!(
                            out,
                            "cell {}/{}: model={} optimizer={} lr={} regions={:?} \
                             test1={} test2={}",
                            cells.len() + 1,
                            axes.cell_count(),
                            cell.model,
                            cell.optimizer,
                            cell.learning_rate,
                            cell.region_sizes,
                            cell.test1_top1,
                            cell.test2_top1
                        )?;
                    }
                    cells.push(cell);
                }
            }
        }
    }
    Ok(GridReport { k, cells })
}
