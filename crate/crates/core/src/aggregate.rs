//! Mean and sample standard deviation across prompt iterations.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::metrics::{MetricsReport, PersonaMetrics, ScenarioKey, TargetMetrics};
use crate::types::{ContextCondition, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample (n - 1) standard deviation; 0 for a single value.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<MeanStd> {
        if values.is_empty() {
            return None;
        }
        if values.iter().all(|v| *v == values[0]) {
            return Some(MeanStd {
                mean: values[0],
                std: 0.0,
            });
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Some(MeanStd { mean, std })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedTarget {
    pub n_appearances: u64,
    pub tb: MeanStd,
    pub bamt: MeanStd,
    pub positive: MeanStd,
    pub negative: MeanStd,
    pub positive_frac: MeanStd,
    pub neutral_frac: MeanStd,
    pub negative_frac: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedPersona {
    pub persona_id: String,
    pub is_default: bool,
    pub targets: BTreeMap<String, AggregatedTarget>,
    pub tb_overall: MeanStd,
    pub bamt_overall: MeanStd,
    pub pb: Option<MeanStd>,
    pub accuracy: MeanStd,
    pub bias_score: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedReport {
    pub model_id: String,
    pub domain: Domain,
    pub condition: ContextCondition,
    pub iterations: Vec<u32>,
    /// Default persona first, in the order of the input reports.
    pub personas: Vec<AggregatedPersona>,
    pub pb: Option<MeanStd>,
}

impl AggregatedReport {
    pub fn scenario(&self) -> ScenarioKey {
        ScenarioKey {
            model_id: self.model_id.clone(),
            domain: self.domain.clone(),
            condition: self.condition,
        }
    }

    pub fn default_persona(&self) -> Option<&AggregatedPersona> {
        self.personas.iter().find(|p| p.is_default)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AggregateError {
    #[error("{scenario}: iteration {iteration} appears more than once")]
    DuplicateIteration { scenario: String, iteration: u32 },
    #[error("{scenario}: iteration {iteration} has a different persona list")]
    InconsistentPersonas { scenario: String, iteration: u32 },
    #[error("{scenario}: persona {persona} has a different target set in iteration {iteration}")]
    InconsistentTargets {
        scenario: String,
        persona: String,
        iteration: u32,
    },
    #[error("{scenario}: PB is defined in some iterations but not others")]
    InconsistentPb { scenario: String },
}

fn label(key: &ScenarioKey) -> String {
    format!("{}/{}/{}", key.model_id, key.domain, key.condition)
}

/// Groups per-iteration reports by scenario and reduces each group to
/// mean/std. Output is ordered by scenario key.
pub fn aggregate_iterations(reports: &[MetricsReport]) -> Result<Vec<AggregatedReport>, AggregateError> {
    let mut groups: BTreeMap<ScenarioKey, Vec<&MetricsReport>> = BTreeMap::new();
    for r in reports {
        groups.entry(r.scenario()).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(key, mut group)| {
            group.sort_by_key(|r| r.iteration);
            aggregate_group(&key, &group)
        })
        .collect()
}

fn aggregate_group(key: &ScenarioKey, group: &[&MetricsReport]) -> Result<AggregatedReport, AggregateError> {
    let scenario = label(key);
    let first = group[0];
    let persona_ids: Vec<&str> = first.personas.iter().map(|p| p.persona_id.as_str()).collect();
    let mut seen = BTreeSet::new();
    for r in group {
        if !seen.insert(r.iteration) {
            return Err(AggregateError::DuplicateIteration {
                scenario,
                iteration: r.iteration,
            });
        }
        let ids: Vec<&str> = r.personas.iter().map(|p| p.persona_id.as_str()).collect();
        if ids != persona_ids {
            return Err(AggregateError::InconsistentPersonas {
                scenario,
                iteration: r.iteration,
            });
        }
        if r.pb.is_some() != first.pb.is_some() {
            return Err(AggregateError::InconsistentPb { scenario });
        }
    }

    let mut personas = Vec::with_capacity(persona_ids.len());
    for (idx, id) in persona_ids.iter().enumerate() {
        let rows: Vec<&PersonaMetrics> = group.iter().map(|r| &r.personas[idx]).collect();
        let target_ids: Vec<&String> = rows[0].targets.keys().collect();
        for (r, row) in group.iter().zip(&rows) {
            if row.targets.keys().collect::<Vec<_>>() != target_ids || row.pb.is_some() != rows[0].pb.is_some() {
                return Err(AggregateError::InconsistentTargets {
                    scenario,
                    persona: id.to_string(),
                    iteration: r.iteration,
                });
            }
        }
        let stat = |f: &dyn Fn(&PersonaMetrics) -> f64| {
            MeanStd::of(&rows.iter().map(|p| f(p)).collect::<Vec<_>>()).expect("non-empty group")
        };
        let mut targets = BTreeMap::new();
        for t in target_ids {
            let cells: Vec<&TargetMetrics> = rows.iter().map(|p| &p.targets[t]).collect();
            let tstat = |f: &dyn Fn(&TargetMetrics) -> f64| {
                MeanStd::of(&cells.iter().map(|c| f(c)).collect::<Vec<_>>()).expect("non-empty group")
            };
            targets.insert(
                t.clone(),
                AggregatedTarget {
                    n_appearances: cells[0].n_appearances,
                    tb: tstat(&|c| c.tb),
                    bamt: tstat(&|c| c.bamt),
                    positive: tstat(&|c| c.positive),
                    negative: tstat(&|c| c.negative),
                    positive_frac: tstat(&|c| c.positive_frac),
                    neutral_frac: tstat(&|c| c.neutral_frac),
                    negative_frac: tstat(&|c| c.negative_frac),
                },
            );
        }
        personas.push(AggregatedPersona {
            persona_id: id.to_string(),
            is_default: rows[0].is_default,
            targets,
            tb_overall: stat(&|p| p.tb_overall),
            bamt_overall: stat(&|p| p.bamt_overall),
            pb: rows[0].pb.map(|_| stat(&|p| p.pb.unwrap_or_default())),
            accuracy: stat(&|p| p.accuracy),
            bias_score: stat(&|p| p.bias_score),
        });
    }

    let pb = first.pb.map(|_| {
        MeanStd::of(&group.iter().map(|r| r.pb.unwrap_or_default()).collect::<Vec<_>>()).expect("non-empty group")
    });
    Ok(AggregatedReport {
        model_id: key.model_id.clone(),
        domain: key.domain.clone(),
        condition: key.condition,
        iterations: group.iter().map(|r| r.iteration).collect(),
        personas,
        pb,
    })
}
