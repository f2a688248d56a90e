//! Synthetic responders with known ground-truth bias.
//!
//! With probability `compliance` the responder answers the gold option.
//! Otherwise it follows its policy; for a preference matrix that means the
//! option whose target the persona likes more on a positive question, the one
//! it likes less on a negative question, and UNKNOWN on ties.

use std::collections::BTreeMap;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendKind, RawResponse};
use crate::dataset::QuestionRecord;
use crate::types::{OptionLabel, Polarity};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SyntheticError {
    #[error("preference matrix has no entry for {persona:?} -> {target:?}")]
    MissingEntry { persona: String, target: String },
    #[error("compliance {0} outside [0, 1]")]
    Compliance(String),
    #[error("bias value {0} outside [-1, 1]")]
    BiasRange(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceMatrix {
    /// `bias[persona][target]` in [-1, 1].
    pub bias: BTreeMap<String, BTreeMap<String, f64>>,
    /// Probability of answering the gold option.
    pub compliance: f64,
}

impl PreferenceMatrix {
    pub fn new(
        bias: BTreeMap<String, BTreeMap<String, f64>>,
        compliance: f64,
    ) -> Result<PreferenceMatrix, SyntheticError> {
        let m = PreferenceMatrix { bias, compliance };
        m.validate()?;
        Ok(m)
    }

    /// `own` on the diagonal (persona id equal to target id), `other`
    /// elsewhere, and `default_value` everywhere on the default persona's row.
    pub fn in_group(
        personas: &[String],
        default_persona: Option<&str>,
        targets: &[String],
        own: f64,
        other: f64,
        default_value: f64,
        compliance: f64,
    ) -> Result<PreferenceMatrix, SyntheticError> {
        let mut bias = BTreeMap::new();
        for p in personas {
            let row = targets
                .iter()
                .map(|t| {
                    let v = if Some(p.as_str()) == default_persona {
                        default_value
                    } else if p == t {
                        own
                    } else {
                        other
                    };
                    (t.clone(), v)
                })
                .collect();
            bias.insert(p.clone(), row);
        }
        PreferenceMatrix::new(bias, compliance)
    }

    pub fn validate(&self) -> Result<(), SyntheticError> {
        check_compliance(self.compliance)?;
        for row in self.bias.values() {
            for v in row.values() {
                if !(-1.0..=1.0).contains(v) {
                    return Err(SyntheticError::BiasRange(v.to_string()));
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, persona: &str, target: &str) -> Result<f64, SyntheticError> {
        self.bias
            .get(persona)
            .and_then(|row| row.get(target))
            .copied()
            .ok_or_else(|| SyntheticError::MissingEntry {
                persona: persona.to_string(),
                target: target.to_string(),
            })
    }
}

fn check_compliance(c: f64) -> Result<(), SyntheticError> {
    if (0.0..=1.0).contains(&c) {
        Ok(())
    } else {
        Err(SyntheticError::Compliance(c.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum SyntheticPolicy {
    Preference(PreferenceMatrix),
    /// Wrong answers are drawn uniformly from the two non-gold options.
    UniformIncorrect {
        compliance: f64,
    },
}

impl SyntheticPolicy {
    pub fn compliance(&self) -> f64 {
        match self {
            SyntheticPolicy::Preference(m) => m.compliance,
            SyntheticPolicy::UniformIncorrect { compliance } => *compliance,
        }
    }
}

/// Option picked by a preference-matrix responder.
pub fn biased_choice<R: Rng + ?Sized>(
    matrix: &PreferenceMatrix,
    persona: &str,
    question: &QuestionRecord,
    rng: &mut R,
) -> Result<OptionLabel, SyntheticError> {
    let [a, b] = question.target_labels();
    let bias_a = matrix.get(persona, question.target_of(a).expect("target slot"))?;
    let bias_b = matrix.get(persona, question.target_of(b).expect("target slot"))?;
    if rng.gen_bool(matrix.compliance) {
        return Ok(question.gold);
    }
    let (liked, disliked) = if bias_a > bias_b {
        (a, b)
    } else if bias_b > bias_a {
        (b, a)
    } else {
        return Ok(question.unknown_label());
    };
    Ok(match question.polarity {
        Polarity::Positive => liked,
        Polarity::Negative => disliked,
    })
}

pub fn uniform_incorrect_choice<R: Rng + ?Sized>(
    compliance: f64,
    question: &QuestionRecord,
    rng: &mut R,
) -> Result<OptionLabel, SyntheticError> {
    check_compliance(compliance)?;
    if rng.gen_bool(compliance) {
        return Ok(question.gold);
    }
    let wrong: Vec<OptionLabel> = OptionLabel::ALL.into_iter().filter(|l| *l != question.gold).collect();
    Ok(wrong[rng.gen_range(0..wrong.len())])
}

/// Preference-matrix responder emitting the bare option letter.
pub fn biased_complete<R: Rng + ?Sized>(
    matrix: &PreferenceMatrix,
    persona: &str,
    question: &QuestionRecord,
    rng: &mut R,
) -> Result<RawResponse, SyntheticError> {
    let label = biased_choice(matrix, persona, question, rng)?;
    Ok(letter_response(
        label,
        "synthetic",
        &cell_digest(persona, &question.id, 0),
    ))
}

fn letter_response(label: OptionLabel, model_id: &str, digest: &str) -> RawResponse {
    RawResponse {
        text: label.to_string(),
        model_id: model_id.to_string(),
        latency: Duration::ZERO,
        backend: BackendKind::Synthetic,
        request_digest: digest.to_string(),
        retries: 0,
        cached: false,
    }
}

fn cell_digest(persona: &str, question_id: &str, iteration: u32) -> String {
    let mut h = Sha256::new();
    h.update(persona.as_bytes());
    h.update([0]);
    h.update(question_id.as_bytes());
    h.update([0]);
    h.update(iteration.to_le_bytes());
    hex::encode(h.finalize())
}

/// Seeded responder. Each (persona, question, iteration) cell draws from its
/// own stream derived from the seed, so results do not depend on the order
/// in which cells are evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticResponder {
    pub model_id: String,
    pub policy: SyntheticPolicy,
    pub seed: u64,
}

impl SyntheticResponder {
    pub fn new(model_id: impl Into<String>, policy: SyntheticPolicy, seed: u64) -> SyntheticResponder {
        SyntheticResponder {
            model_id: model_id.into(),
            policy,
            seed,
        }
    }

    fn rng_for(&self, digest: &str) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(digest.as_bytes());
        let bytes: [u8; 32] = h.finalize().into();
        ChaCha8Rng::from_seed(bytes)
    }

    pub fn choose(
        &self,
        persona: &str,
        question: &QuestionRecord,
        iteration: u32,
    ) -> Result<OptionLabel, SyntheticError> {
        let digest = cell_digest(persona, &question.id, iteration);
        let mut rng = self.rng_for(&digest);
        match &self.policy {
            SyntheticPolicy::Preference(m) => biased_choice(m, persona, question, &mut rng),
            SyntheticPolicy::UniformIncorrect { compliance } => {
                uniform_incorrect_choice(*compliance, question, &mut rng)
            }
        }
    }

    pub fn respond(
        &self,
        persona: &str,
        question: &QuestionRecord,
        iteration: u32,
    ) -> Result<RawResponse, SyntheticError> {
        let label = self.choose(persona, question, iteration)?;
        Ok(letter_response(
            label,
            &self.model_id,
            &cell_digest(persona, &question.id, iteration),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic_dataset, SyntheticSpec};
    use crate::types::{ContextCondition, Domain, SlotKind};

    fn questions(condition: ContextCondition) -> Vec<QuestionRecord> {
        generate_synthetic_dataset(&SyntheticSpec {
            domain: Domain::Custom("toy".into()),
            n_questions: 200,
            targets: vec!["a".into(), "b".into()],
            polarity_mix: 0.5,
            condition,
            seed: 1,
        })
        .unwrap()
    }

    fn matrix(a: f64, b: f64, compliance: f64) -> PreferenceMatrix {
        let mut row = BTreeMap::new();
        row.insert("a".to_string(), a);
        row.insert("b".to_string(), b);
        PreferenceMatrix::new(BTreeMap::from([("p".to_string(), row)]), compliance).unwrap()
    }

    #[test]
    fn full_compliance_answers_gold() {
        let m = matrix(0.9, -0.9, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for cond in ContextCondition::ALL {
            for q in questions(cond) {
                assert_eq!(biased_choice(&m, "p", &q, &mut rng).unwrap(), q.gold);
            }
        }
    }

    #[test]
    fn zero_compliance_follows_preference() {
        let m = matrix(0.9, -0.9, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for q in questions(ContextCondition::Ambiguous) {
            let pick = biased_choice(&m, "p", &q, &mut rng).unwrap();
            let expected = match q.polarity {
                Polarity::Positive => "a",
                Polarity::Negative => "b",
            };
            assert_eq!(q.target_of(pick), Some(expected));
        }
    }

    #[test]
    fn ties_go_to_unknown() {
        let m = matrix(0.3, 0.3, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for q in questions(ContextCondition::Disambiguated) {
            let pick = biased_choice(&m, "p", &q, &mut rng).unwrap();
            assert_eq!(q.slot(pick).kind, SlotKind::Unknown);
        }
    }

    #[test]
    fn missing_entry_errors() {
        let m = matrix(0.3, 0.3, 0.0);
        let q = &questions(ContextCondition::Ambiguous)[0];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            biased_choice(&m, "nobody", q, &mut rng),
            Err(SyntheticError::MissingEntry { .. })
        ));
    }

    #[test]
    fn responder_is_reproducible_and_order_free() {
        let r = SyntheticResponder::new("syn", SyntheticPolicy::Preference(matrix(1.0, -1.0, 0.4)), 99);
        let qs = questions(ContextCondition::Ambiguous);
        let forward: Vec<String> = qs.iter().map(|q| r.respond("p", q, 0).unwrap().text).collect();
        let mut backward: Vec<String> = qs.iter().rev().map(|q| r.respond("p", q, 0).unwrap().text).collect();
        backward.reverse();
        assert_eq!(forward, backward);
        assert!(forward.iter().all(|t| t.len() == 1));
    }

    #[test]
    fn uniform_incorrect_never_answers_gold_at_zero_compliance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for q in questions(ContextCondition::Ambiguous) {
            assert_ne!(uniform_incorrect_choice(0.0, &q, &mut rng).unwrap(), q.gold);
        }
    }

    #[test]
    fn validation() {
        assert!(PreferenceMatrix::new(BTreeMap::new(), 1.5).is_err());
        let mut row = BTreeMap::new();
        row.insert("a".to_string(), 2.0);
        assert!(PreferenceMatrix::new(BTreeMap::from([("p".to_string(), row)]), 0.5).is_err());
    }
}
