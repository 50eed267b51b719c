use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::eval::{eval_suite, EvalConfig};
use crate::minirtl::Vocab;
use crate::policy::PolicyParams;
use crate::reward::RewardSchedule;
use crate::rlcore::{train_rl, RlConfig, Variant};
use crate::taskgen::Task;

pub const TABLE_RHOS: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 0.9];

pub const ABLATION_HEADER: &str = "rho,pass@1,pass@5,syn@5,func@5,gated_fraction,status";

/// Everything one grid cell needs besides `ρ` and the seed.
pub struct AblationSetup<'a> {
    pub vocab: &'a Vocab,
    /// Starting point and KL anchor of every cell.
    pub init: &'a PolicyParams,
    pub train: Vec<&'a Task>,
    /// Suite for `pass@1` / `pass@5`.
    pub primary: Vec<&'a Task>,
    /// Suite for `syn@5` / `func@5`.
    pub secondary: Vec<&'a Task>,
    pub rl: RlConfig,
    pub eval: EvalConfig,
    pub schedule: RewardSchedule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub rho: f64,
    pub pass1: f64,
    pub pass5: f64,
    pub syn5: f64,
    pub func5: f64,
    pub gated_fraction: f64,
    /// `ok`, or `failed:` followed by the first error message.
    pub status: String,
}

struct CellResult {
    pass1: f64,
    pass5: f64,
    syn5: f64,
    func5: f64,
    gated: f64,
}

fn run_cell(setup: &AblationSetup, rho: f64, seed: u64) -> Result<CellResult, String> {
    let rl = RlConfig {
        variant: Variant::Earl,
        rho,
        seed,
        ..setup.rl
    };
    let mut params = setup.init.clone();
    let log = train_rl(&rl, &mut params, setup.init, &setup.train, &setup.schedule, setup.vocab)
        .map_err(|e| e.to_string())?;
    let primary = eval_suite(&params, &setup.primary, &setup.eval, &setup.schedule, setup.vocab, seed)
        .map_err(|e| e.to_string())?;
    let secondary = eval_suite(&params, &setup.secondary, &setup.eval, &setup.schedule, setup.vocab, seed)
        .map_err(|e| e.to_string())?;
    Ok(CellResult {
        pass1: primary.pass(1),
        pass5: primary.pass(5),
        syn5: secondary.syntax_pass(5),
        func5: secondary.pass(5),
        gated: log.mean_gated_fraction(),
    })
}

/// Trains and evaluates one EARL run per `(ρ, seed)` and averages each row
/// over seeds. A failing cell is reported in its row's status; the other
/// rows still run.
pub fn ablation_grid(setup: &AblationSetup, rhos: &[f64], seeds: &[u64]) -> Vec<AblationRow> {
    rhos.iter()
        .map(|&rho| {
            let mut ok = Vec::new();
            let mut failure = None;
            for &seed in seeds {
                match run_cell(setup, rho, seed) {
                    Ok(c) => ok.push(c),
                    Err(e) => {
                        log::warn!("ablation cell rho={rho} seed={seed} failed: {e}");
                        failure.get_or_insert(e);
                    }
                }
            }
            let avg = |f: fn(&CellResult) -> f64| {
                if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().map(f).sum::<f64>() / ok.len() as f64
                }
            };
            AblationRow {
                rho,
                pass1: avg(|c| c.pass1),
                pass5: avg(|c| c.pass5),
                syn5: avg(|c| c.syn5),
                func5: avg(|c| c.func5),
                gated_fraction: avg(|c| c.gated),
                status: match (failure, seeds.is_empty()) {
                    (_, true) => "failed:no seeds".into(),
                    (Some(e), _) => format!("failed:{}", e.replace([',', '\n'], " ")),
                    (None, _) => "ok".into(),
                },
            }
        })
        .collect()
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from(ABLATION_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.rho, r.pass1, r.pass5, r.syn5, r.func5, r.gated_fraction, r.status
        );
    }
    s
}
