use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::eval::{EvalConfig, EvalMode};
use crate::envs::EnvId;
use crate::error::{Error, Result};
use crate::init::{ExecMode, StrategyConfig, StrategyKind};

pub const COST_FORMULA: &str = "cost = sum_{t=0}^{H-1} u_t' R u_t + sum_{t=1}^{H-1} e_t' Q e_t + e_H' Q_f e_H, \
e_t the tracking residual of x_t; one-off rows report the optimizer output cost, \
sequential rows average it over the executed steps of an episode and then over episodes";

/// One solve of one strategy on one instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub instance_id: u64,
    pub episode: Option<u64>,
    pub step: Option<usize>,
    pub strategy: String,
    pub kind: StrategyKind,
    #[serde(rename = "K")]
    pub k: usize,
    pub include_default: bool,
    pub cost: f64,
    /// Stage cost of the executed transition (sequential only).
    pub executed_cost: Option<f64>,
    pub selected_index: usize,
    pub selected_label: String,
    pub init_costs: Vec<f64>,
    pub final_costs: Option<Vec<f64>>,
    pub guarantee_ok: Option<bool>,
    pub monotone_ok: bool,
    pub feasible: bool,
    pub solve_time_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub episode: u64,
    pub steps: usize,
    /// Mean per-step solution cost, divergence penalty included.
    pub cost: f64,
    /// Mean executed stage cost.
    pub executed_cost: f64,
    pub diverged: bool,
    pub final_state: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub strategy: String,
    pub config: StrategyConfig,
    pub rows: Vec<EvalRow>,
    /// Sequential mode only.
    pub episodes: Vec<EpisodeRow>,
    pub mean_cost: f64,
    pub std_error: f64,
    /// Mean executed stage cost (sequential only).
    pub mean_executed_cost: Option<f64>,
    pub argmin_frequency: Vec<f64>,
    pub guarantee_violations: usize,
    pub monotone_violations: usize,
    pub feasibility_violations: usize,
    pub diverged_episodes: usize,
    pub warnings: Vec<String>,
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

impl StrategyReport {
    /// Aggregates rows (sorted by instance id) and, in sequential mode, episodes.
    pub fn build(
        config: StrategyConfig,
        candidates: usize,
        mut rows: Vec<EvalRow>,
        mut episodes: Vec<EpisodeRow>,
    ) -> Self {
        rows.sort_by_key(|r| r.instance_id);
        episodes.sort_by_key(|e| e.episode);
        let costs: Vec<f64> = if episodes.is_empty() {
            rows.iter().map(|r| r.cost).collect()
        } else {
            episodes.iter().map(|e| e.cost).collect()
        };
        let (mean_cost, std_error) = mean_and_se(&costs);
        let mean_executed_cost = (!episodes.is_empty())
            .then(|| episodes.iter().map(|e| e.executed_cost).sum::<f64>() / episodes.len() as f64);
        let mut counts = vec![0usize; candidates.max(1)];
        for r in &rows {
            if r.selected_index >= counts.len() {
                counts.resize(r.selected_index + 1, 0);
            }
            counts[r.selected_index] += 1;
        }
        let total = rows.len().max(1) as f64;
        let argmin_frequency: Vec<f64> = if rows.is_empty() {
            vec![0.0; counts.len()]
        } else {
            counts.iter().map(|c| *c as f64 / total).collect()
        };
        let mut warnings = Vec::new();
        let learned_heads = matches!(
            config.kind,
            StrategyKind::MisoPd | StrategyKind::MisoWta | StrategyKind::MisoMix | StrategyKind::MultiOutputRegression
        );
        if learned_heads && config.k >= 2 {
            let active = counts.iter().take(config.k).filter(|c| **c > 0).count();
            let want = config.k.min(3);
            if active < want {
                warnings.push(format!(
                    "only {active} of {} heads were ever selected (expected at least {want})",
                    config.k
                ));
            }
        }
        let diverged_episodes = episodes.iter().filter(|e| e.diverged).count();
        if diverged_episodes > 0 {
            warnings.push(format!("{diverged_episodes} episode(s) diverged"));
        }
        StrategyReport {
            strategy: config.name(),
            guarantee_violations: rows.iter().filter(|r| r.guarantee_ok == Some(false)).count(),
            monotone_violations: rows.iter().filter(|r| !r.monotone_ok).count(),
            feasibility_violations: rows.iter().filter(|r| !r.feasible).count(),
            config,
            rows,
            episodes,
            mean_cost,
            std_error,
            mean_executed_cost,
            argmin_frequency,
            diverged_episodes,
            warnings,
        }
    }

    /// Number of heads (or candidates) selected at least once.
    pub fn active_candidates(&self) -> usize {
        self.argmin_frequency.iter().filter(|f| **f > 0.0).count()
    }

    pub fn instance_ids(&self) -> Vec<u64> {
        self.rows.iter().map(|r| r.instance_id).collect()
    }

    /// Invariant failures; empty when every audit passes.
    pub fn audit(&self) -> Vec<String> {
        let mut out = Vec::new();
        let name = &self.strategy;
        if self.config.include_default && self.guarantee_violations > 0 {
            out.push(format!("{name}: {} guarantee violation(s)", self.guarantee_violations));
        }
        if self.monotone_violations > 0 {
            out.push(format!(
                "{name}: {} solve(s) ended above their initial cost",
                self.monotone_violations
            ));
        }
        if self.feasibility_violations > 0 {
            out.push(format!(
                "{name}: {} solve(s) left the control box",
                self.feasibility_violations
            ));
        }
        if !self.rows.is_empty() {
            let sum: f64 = self.argmin_frequency.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || self.argmin_frequency.iter().any(|f| *f < 0.0) {
                out.push(format!("{name}: argmin frequencies sum to {sum}"));
            }
        }
        let costs: Vec<f64> = if self.episodes.is_empty() {
            self.rows.iter().map(|r| r.cost).collect()
        } else {
            self.episodes.iter().map(|e| e.cost).collect()
        };
        let (mean, _) = mean_and_se(&costs);
        if !(mean == self.mean_cost || (mean - self.mean_cost).abs() <= 1e-12 * mean.abs().max(1.0)) {
            out.push(format!(
                "{name}: stored mean {} differs from recomputed {mean}",
                self.mean_cost
            ));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub exec_mode: ExecMode,
    pub env: EnvId,
    pub cost_formula: String,
    pub config: EvalConfig,
    pub strategies: Vec<StrategyReport>,
}

#[derive(Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line<'a> {
    Header {
        mode: EvalMode,
        exec_mode: ExecMode,
        env: EnvId,
        cost_formula: &'a str,
        config: &'a EvalConfig,
    },
    Row(&'a EvalRow),
    Episode {
        strategy: &'a str,
        #[serde(flatten)]
        row: &'a EpisodeRow,
    },
    Summary {
        strategy: &'a str,
        kind: StrategyKind,
        #[serde(rename = "K")]
        k: usize,
        include_default: bool,
        count: usize,
        mean_cost: f64,
        std_error: f64,
        mean_executed_cost: Option<f64>,
        argmin_frequency: &'a [f64],
        guarantee_violations: usize,
        monotone_violations: usize,
        feasibility_violations: usize,
        diverged_episodes: usize,
        warnings: &'a [String],
    },
}

impl EvalReport {
    pub fn strategy(&self, name: &str) -> Option<&StrategyReport> {
        self.strategies.iter().find(|s| s.strategy == name)
    }

    pub fn audit(&self) -> Vec<String> {
        self.strategies.iter().flat_map(|s| s.audit()).collect()
    }

    pub fn warnings(&self) -> Vec<String> {
        self.strategies
            .iter()
            .flat_map(|s| s.warnings.iter().map(move |w| format!("{}: {w}", s.strategy)))
            .collect()
    }

    /// One JSON object per line: a header, every row, every episode and one
    /// summary per strategy.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        let mut push = |l: Line<'_>| -> Result<()> {
            out.push_str(&serde_json::to_string(&l)?);
            out.push('\n');
            Ok(())
        };
        push(Line::Header {
            mode: self.mode,
            exec_mode: self.exec_mode,
            env: self.env,
            cost_formula: &self.cost_formula,
            config: &self.config,
        })?;
        for s in &self.strategies {
            for r in &s.rows {
                push(Line::Row(r))?;
            }
            for e in &s.episodes {
                push(Line::Episode {
                    strategy: &s.strategy,
                    row: e,
                })?;
            }
            push(Line::Summary {
                strategy: &s.strategy,
                kind: s.config.kind,
                k: s.config.k,
                include_default: s.config.include_default,
                count: if s.episodes.is_empty() {
                    s.rows.len()
                } else {
                    s.episodes.len()
                },
                mean_cost: s.mean_cost,
                std_error: s.std_error,
                mean_executed_cost: s.mean_executed_cost,
                argmin_frequency: &s.argmin_frequency,
                guarantee_violations: s.guarantee_violations,
                monotone_violations: s.monotone_violations,
                feasibility_violations: s.feasibility_violations,
                diverged_episodes: s.diverged_episodes,
                warnings: &s.warnings,
            })?;
        }
        Ok(out)
    }

    /// One line per strategy, for plotting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "strategy,kind,K,include_default,mode,exec_mode,count,mean_cost,std_error,mean_executed_cost,guarantee_violations,argmin_frequency\n",
        );
        for s in &self.strategies {
            let freq: Vec<String> = s.argmin_frequency.iter().map(|f| format!("{f}")).collect();
            let count = if s.episodes.is_empty() {
                s.rows.len()
            } else {
                s.episodes.len()
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                s.strategy,
                s.config.kind,
                s.config.k,
                s.config.include_default,
                serde_json::to_value(self.mode)
                    .ok()
                    .and_then(|v| v.as_str().map(String::from))
                    .unwrap_or_default(),
                serde_json::to_value(self.exec_mode)
                    .ok()
                    .and_then(|v| v.as_str().map(String::from))
                    .unwrap_or_default(),
                count,
                s.mean_cost,
                s.std_error,
                s.mean_executed_cost.map_or(String::new(), |v| v.to_string()),
                s.guarantee_violations,
                freq.join(";"),
            );
        }
        out
    }

    /// Writes `<path>` as JSON lines and `<path>` with a `.csv` extension.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<PathBuf> {
        let path = path.as_ref();
        crate::dataset::ensure_parent(path)?;
        std::fs::write(path, self.to_jsonl()?).map_err(|e| Error::io(path, e))?;
        let csv = path.with_extension("csv");
        std::fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        Ok(csv)
    }
}
