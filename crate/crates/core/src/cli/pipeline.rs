//! Pipeline stages shared by the subcommands, examples and tests. Each
//! stage is a pure function of the run configuration and its inputs.

use crate::analysis::{
    ablation_grid, entropy_report, eval_suite, heatmap_export, AblationRow, AblationSetup, EntropyReport,
    EvalConfig, EvalError, EvalReport, HeatRecord,
};
use crate::minirtl::Vocab;
use crate::policy::{init_params, train_sft, PolicyError, PolicyParams, SftError, SftExample, SftLog};
use crate::rlcore::{train_rl, RlConfig, RlError, TrainLog};
use crate::seed::{mix, streams};
use crate::taskgen::{build_corpus, ConfigError, Corpus, Difficulty, Task, TaskKind};

use super::config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum StageError {
    #[error(transparent)]
    Corpus(#[from] ConfigError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Sft(#[from] SftError),
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Analysis(String),
}

pub fn gen_data(cfg: &RunConfig) -> Result<Corpus, StageError> {
    Ok(build_corpus(&cfg.corpus, cfg.seed)?)
}

/// Fresh parameters trained on every training task's reference.
pub fn run_sft(cfg: &RunConfig, corpus: &Corpus, vocab: &Vocab) -> Result<(PolicyParams, SftLog), StageError> {
    let mut params = init_params(vocab, cfg.policy, mix(cfg.seed, streams::INIT))?;
    let examples: Vec<SftExample> = corpus.train().map(|t| SftExample::from_task(t, vocab)).collect();
    let log = train_sft(&mut params, &examples, &cfg.sft, mix(cfg.seed, streams::SFT))?;
    Ok((params, log))
}

pub fn rl_config(cfg: &RunConfig) -> RlConfig {
    RlConfig {
        seed: cfg.seed,
        ..cfg.rl
    }
}

/// RL from `init`, which also serves as the KL reference.
pub fn run_rl(
    cfg: &RunConfig,
    corpus: &Corpus,
    init: &PolicyParams,
    vocab: &Vocab,
) -> Result<(PolicyParams, TrainLog), StageError> {
    let train: Vec<&Task> = corpus.train().collect();
    let mut params = init.clone();
    let log = train_rl(&rl_config(cfg), &mut params, init, &train, &cfg.reward, vocab)?;
    Ok((params, log))
}

pub fn run_eval(cfg: &RunConfig, corpus: &Corpus, params: &PolicyParams, vocab: &Vocab) -> Result<EvalReport, StageError> {
    let tasks: Vec<&Task> = corpus.heldout().collect();
    Ok(eval_suite(params, &tasks, &cfg.eval, &cfg.reward, vocab, cfg.seed)?)
}

/// The first ten heldout combinational tasks of each of easy and medium.
pub fn primary_suite(corpus: &Corpus) -> Vec<&Task> {
    [Difficulty::Easy, Difficulty::Medium]
        .iter()
        .flat_map(|&d| {
            corpus
                .heldout()
                .filter(move |t| t.kind == TaskKind::Combinational && t.difficulty == d)
                .take(10)
        })
        .collect()
}

pub struct Study {
    pub eval: EvalReport,
    pub report: EntropyReport,
    pub heatmaps: Vec<(String, Vec<HeatRecord>)>,
}

/// Entropy study over the rollouts of one heldout evaluation pass.
pub fn run_analysis(cfg: &RunConfig, corpus: &Corpus, params: &PolicyParams, vocab: &Vocab) -> Result<Study, StageError> {
    let tasks: Vec<&Task> = corpus.heldout().collect();
    let eval = eval_suite(params, &tasks, &cfg.eval, &cfg.reward, vocab, mix(cfg.seed, streams::ANALYSIS))?;
    let rollouts = eval.all_rollouts();
    let report = entropy_report(&rollouts, vocab, &cfg.analysis.study()).map_err(|e| StageError::Analysis(e.to_string()))?;
    let heatmaps = eval
        .tasks
        .iter()
        .take(cfg.analysis.heatmaps)
        .filter_map(|t| t.rollouts.first().map(|r| (t.task_id.clone(), heatmap_export(r, vocab))))
        .collect();
    Ok(Study { eval, report, heatmaps })
}

/// EARL over `cfg.ablation.rhos` from `init`, reporting pass@1/pass@5 on
/// [`primary_suite`] and syn@5/func@5 on the whole heldout split.
pub fn run_ablation(cfg: &RunConfig, corpus: &Corpus, init: &PolicyParams, vocab: &Vocab) -> Vec<AblationRow> {
    let mut rl = rl_config(cfg);
    if let Some(steps) = cfg.ablation.steps {
        rl.steps = steps;
    }
    let setup = AblationSetup {
        vocab,
        init,
        train: corpus.train().collect(),
        primary: primary_suite(corpus),
        secondary: corpus.heldout().collect(),
        rl,
        eval: EvalConfig {
            n: cfg.eval.n.max(5),
            ks: vec![1, 5],
            ..cfg.eval.clone()
        },
        schedule: cfg.reward,
    };
    let seeds = if cfg.ablation.seeds.is_empty() {
        vec![cfg.seed]
    } else {
        cfg.ablation.seeds.clone()
    };
    ablation_grid(&setup, &cfg.ablation.rhos, &seeds)
}
