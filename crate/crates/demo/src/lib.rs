//! Browser demo: three JSON-in, JSON-out operations over the core metrics.
//!
//! * [`simulate_heatmap`] runs an in-group synthetic responder and returns the
//!   persona x target TB matrix with an SVG heatmap.
//! * [`tb_calculator`] turns per-target TB values into TB_{p->T} and PB.
//! * [`interpret_answer`] resolves a free-form answer and scores it.
//!
//! Each has a plain Rust twin (`*_json`) so the logic is testable natively.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use persona_bias::dataset::{generate_synthetic_dataset, slice_statistics, SyntheticSpec};
use persona_bias::exact::{self, Exact};
use persona_bias::gateway::synthetic::{PreferenceMatrix, SyntheticPolicy, SyntheticResponder};
use persona_bias::interpret::{Choice, Resolved};
use persona_bias::metrics::{accumulate, exact_metrics, persona_bias, profile_overall, BiasScoreConfig, Outcome};
use persona_bias::{
    extract_choice, score_response, ContextCondition, Domain, OptionLabel, OptionSlot, Polarity, QuestionRecord,
    ScoringConfig, SlotKind,
};

const DEFAULT_PERSONA: &str = "default";
const MAX_QUESTIONS: usize = 20_000;

fn fixed(x: &Exact) -> String {
    exact::format_fixed(x, 2)
}

// ---------------------------------------------------------------------------
// Heatmap

#[derive(Debug, Clone, Deserialize)]
pub struct HeatmapInput {
    pub targets: Vec<String>,
    /// Preference of a persona for its own group, in [-1, 1].
    pub own: f64,
    /// Preference for every other group, in [-1, 1].
    pub other: f64,
    pub compliance: f64,
    pub n_questions: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "ambiguous")]
    pub condition: ContextCondition,
}

fn ambiguous() -> ContextCondition {
    ContextCondition::Ambiguous
}

#[derive(Debug, Clone, Serialize)]
pub struct HeatmapOutput {
    pub personas: Vec<String>,
    pub targets: Vec<String>,
    /// `tb[i][j]`: persona i toward target j.
    pub tb: Vec<Vec<f64>>,
    pub tb_overall: BTreeMap<String, String>,
    pub bamt_overall: BTreeMap<String, String>,
    pub pb: BTreeMap<String, String>,
    pub accuracy: BTreeMap<String, String>,
    pub svg: String,
}

pub fn simulate_heatmap_json(input: &str) -> Result<String, String> {
    let input: HeatmapInput = serde_json::from_str(input).map_err(|e| e.to_string())?;
    let out = simulate(&input)?;
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

pub fn simulate(input: &HeatmapInput) -> Result<HeatmapOutput, String> {
    if input.targets.len() < 2 {
        return Err("need at least two targets".into());
    }
    if input.n_questions == 0 || input.n_questions > MAX_QUESTIONS {
        return Err(format!("n_questions must be in 1..={MAX_QUESTIONS}"));
    }
    let records = generate_synthetic_dataset(&SyntheticSpec {
        domain: Domain::Custom("demo".into()),
        n_questions: input.n_questions,
        targets: input.targets.clone(),
        polarity_mix: 0.5,
        condition: input.condition,
        seed: input.seed,
    })
    .map_err(|e| e.to_string())?;

    let mut personas = vec![DEFAULT_PERSONA.to_string()];
    personas.extend(input.targets.iter().cloned());
    let matrix = PreferenceMatrix::in_group(
        &personas,
        Some(DEFAULT_PERSONA),
        &input.targets,
        input.own,
        input.other,
        0.0,
        input.compliance,
    )
    .map_err(|e| e.to_string())?;
    let responder = SyntheticResponder::new("demo", SyntheticPolicy::Preference(matrix), input.seed);

    let mut cells = Vec::with_capacity(personas.len() * records.len());
    for p in &personas {
        for r in &records {
            let text = responder.respond(p, r, 0).map_err(|e| e.to_string())?.text;
            cells.push((p.as_str(), r, extract_choice(&text, r)));
        }
    }
    let config = ScoringConfig::default();
    let mut events = Vec::new();
    for (p, r, a) in &cells {
        events.extend(score_response(r, a, p, &config).map_err(|e| e.to_string())?);
    }
    let outcomes: Vec<Outcome> = cells
        .iter()
        .map(|(p, r, a)| Outcome {
            persona_id: p,
            question: r,
            answer: a,
        })
        .collect();
    let acc = accumulate(&events, &outcomes, &slice_statistics(&records)).map_err(|e| e.to_string())?;
    let metrics = exact_metrics(
        &acc,
        &personas,
        DEFAULT_PERSONA,
        input.condition,
        &BiasScoreConfig::default(),
    )
    .map_err(|e| e.to_string())?;

    let tb: Vec<Vec<f64>> = personas
        .iter()
        .map(|p| input.targets.iter().map(|t| exact::to_f64(&metrics[p].tb[t])).collect())
        .collect();
    let pick = |f: &dyn Fn(&persona_bias::metrics::ExactPersonaMetrics) -> Option<String>| {
        personas
            .iter()
            .filter_map(|p| f(&metrics[p]).map(|v| (p.clone(), v)))
            .collect::<BTreeMap<_, _>>()
    };
    let svg = heatmap_svg(&personas, &input.targets, &tb, exact::to_f64(config.max_weight()));
    Ok(HeatmapOutput {
        tb_overall: pick(&|m| Some(fixed(&m.tb_overall))),
        bamt_overall: pick(&|m| Some(fixed(&m.bamt_overall))),
        pb: pick(&|m| m.pb.as_ref().map(fixed)),
        accuracy: pick(&|m| Some(fixed(&m.accuracy))),
        personas,
        targets: input.targets.clone(),
        tb,
        svg,
    })
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Diverging scale: blue for positive TB, red for negative.
fn color(value: f64, bound: f64) -> String {
    let t = (value / bound).clamp(-1.0, 1.0);
    let fade = |c: f64| (255.0 - (255.0 - c) * t.abs()).round() as u8;
    let (r, g, b) = if t >= 0.0 {
        (33.0, 102.0, 172.0)
    } else {
        (178.0, 24.0, 43.0)
    };
    format!("#{:02x}{:02x}{:02x}", fade(r), fade(g), fade(b))
}

pub fn heatmap_svg(rows: &[String], cols: &[String], values: &[Vec<f64>], bound: f64) -> String {
    const CELL: usize = 56;
    const LEFT: usize = 110;
    const TOP: usize = 90;
    let width = LEFT + CELL * cols.len() + 10;
    let height = TOP + CELL * rows.len() + 10;
    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    for (j, c) in cols.iter().enumerate() {
        let x = LEFT + CELL * j + CELL / 2;
        let _ = write!(
            svg,
            r#"<text x="{x}" y="{}" transform="rotate(-40 {x} {})" text-anchor="start">{}</text>"#,
            TOP - 8,
            TOP - 8,
            escape(c)
        );
    }
    for (i, r) in rows.iter().enumerate() {
        let y = TOP + CELL * i;
        let _ = write!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            LEFT - 8,
            y + CELL / 2 + 4,
            escape(r)
        );
        for (j, v) in values[i].iter().enumerate() {
            let x = LEFT + CELL * j;
            let ink = if (v / bound).abs() > 0.5 { "#fff" } else { "#222" };
            let _ = write!(
                svg,
                r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{}" stroke="#fff"><title>{} -> {}: {v:.4}</title></rect><text x="{}" y="{}" text-anchor="middle" fill="{ink}">{v:.2}</text>"##,
                color(*v, bound),
                escape(r),
                escape(&cols[j]),
                x + CELL / 2,
                y + CELL / 2 + 4
            );
        }
    }
    svg.push_str("</svg>");
    svg
}

// ---------------------------------------------------------------------------
// TB / PB calculator

#[derive(Debug, Clone, Deserialize)]
pub struct CalculatorInput {
    /// Target -> TB for the default persona. Numbers or decimal/fraction strings.
    pub default: BTreeMap<String, serde_json::Value>,
    pub personas: BTreeMap<String, BTreeMap<String, serde_json::Value>>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CalculatorRow {
    pub persona: String,
    pub tb_overall: String,
    pub tb_overall_exact: String,
    pub pb: Option<String>,
    pub pb_exact: Option<String>,
}

fn exact_value(v: &serde_json::Value) -> Result<Exact, String> {
    let text = match v {
        serde_json::Value::String(s) => s.clone(),
        // Keeps the decimal as written, e.g. 0.19 stays 19/100.
        serde_json::Value::Number(n) => n.to_string(),
        other => return Err(format!("not a number: {other}")),
    };
    exact::parse(&text).map_err(|e| e.to_string())
}

fn profile(values: &BTreeMap<String, serde_json::Value>) -> Result<BTreeMap<String, Exact>, String> {
    values.iter().map(|(t, v)| Ok((t.clone(), exact_value(v)?))).collect()
}

pub fn tb_calculator_json(input: &str) -> Result<String, String> {
    let input: CalculatorInput = serde_json::from_str(input).map_err(|e| e.to_string())?;
    serde_json::to_string(&calculate(&input)?).map_err(|e| e.to_string())
}

pub fn calculate(input: &CalculatorInput) -> Result<Vec<CalculatorRow>, String> {
    let default = profile(&input.default)?;
    let mut rows = vec![CalculatorRow {
        persona: DEFAULT_PERSONA.into(),
        tb_overall: fixed(&profile_overall(&default)),
        tb_overall_exact: profile_overall(&default).to_string(),
        pb: None,
        pb_exact: None,
    }];
    for (name, values) in &input.personas {
        let p = profile(values)?;
        let overall = profile_overall(&p);
        let pb = persona_bias(&p, &default).map_err(|e| format!("{name}: {e}"))?;
        rows.push(CalculatorRow {
            persona: name.clone(),
            tb_overall: fixed(&overall),
            tb_overall_exact: overall.to_string(),
            pb: Some(fixed(&pb)),
            pb_exact: Some(pb.to_string()),
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Answer interpretation

#[derive(Debug, Clone, Deserialize)]
pub struct InterpretInput {
    /// Option texts for (A), (B), (C); (C) is the UNKNOWN option.
    pub options: [String; 3],
    /// Targets named by options (A) and (B).
    pub targets: [String; 2],
    pub polarity: Polarity,
    pub condition: ContextCondition,
    pub gold: OptionLabel,
    pub answer: String,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct InterpretOutput {
    pub chosen: Option<String>,
    pub resolved: String,
    pub correct: bool,
    pub events: Vec<(String, String)>,
}

pub fn interpret_answer_json(input: &str) -> Result<String, String> {
    let input: InterpretInput = serde_json::from_str(input).map_err(|e| e.to_string())?;
    serde_json::to_string(&interpret(&input)?).map_err(|e| e.to_string())
}

pub fn interpret(input: &InterpretInput) -> Result<InterpretOutput, String> {
    let slot = |i: usize| OptionSlot {
        label: OptionLabel::ALL[i],
        text: input.options[i].clone(),
        kind: if i < 2 { SlotKind::Target } else { SlotKind::Unknown },
        target_id: input.targets.get(i).cloned(),
    };
    let record = QuestionRecord {
        id: "demo".into(),
        domain: Domain::Custom("demo".into()),
        context_condition: input.condition,
        polarity: input.polarity,
        source_polarity: format!("{:?}", input.polarity),
        context: String::new(),
        question: String::new(),
        options: [slot(0), slot(1), slot(2)],
        gold: input.gold,
        bias_aligned_option: OptionLabel::B,
    };
    record.validate().map_err(|e| e.to_string())?;
    let answer = extract_choice(&input.answer, &record);
    let events = score_response(&record, &answer, DEFAULT_PERSONA, &ScoringConfig::default())
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|e| (e.target_id, e.value.0.to_string()))
        .collect();
    Ok(InterpretOutput {
        chosen: match answer.chosen {
            Choice::Option(l) => Some(l.to_string()),
            Choice::Refusal => None,
        },
        resolved: match answer.resolved {
            Resolved::Target(t) => t,
            Resolved::Unknown => "UNKNOWN".into(),
        },
        correct: answer.correct,
        events,
    })
}

// ---------------------------------------------------------------------------
// wasm bindings

#[wasm_bindgen]
pub fn simulate_heatmap(input: &str) -> Result<String, JsValue> {
    simulate_heatmap_json(input).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn tb_calculator(input: &str) -> Result<String, JsValue> {
    tb_calculator_json(input).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn interpret_answer(input: &str) -> Result<String, JsValue> {
    interpret_answer_json(input).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calculator_reproduces_the_age_rows() {
        let input = r#"{
            "default": {"nonOld": 0.19, "Old": -0.11},
            "personas": {"kid": {"nonOld": 0.13, "Old": -0.11}, "elder": {"nonOld": "-0.08", "Old": "0.14"}}
        }"#;
        let rows: Vec<serde_json::Value> = serde_json::from_str(&tb_calculator_json(input).unwrap()).unwrap();
        assert_eq!(rows[0]["tb_overall"], "0.15");
        let elder = rows.iter().find(|r| r["persona"] == "elder").unwrap();
        assert_eq!(elder["tb_overall"], "0.11");
        assert_eq!(elder["pb"], "0.26");
        let kid = rows.iter().find(|r| r["persona"] == "kid").unwrap();
        assert_eq!(kid["pb_exact"], "3/100");
    }

    #[test]
    fn calculator_rejects_mismatched_targets() {
        let input = r#"{"default": {"a": 1}, "personas": {"p": {"b": 1}}}"#;
        assert!(tb_calculator_json(input).is_err());
    }

    fn interpret_case(answer: &str, polarity: &str, condition: &str, gold: &str) -> InterpretOutput {
        let json = format!(
            r#"{{"options": ["The grandson", "The grandfather", "Can't be determined"],
                 "targets": ["nonOld", "Old"], "polarity": "{polarity}", "condition": "{condition}",
                 "gold": "{gold}", "answer": {answer:?}}}"#
        );
        serde_json::from_str::<serde_json::Value>(&interpret_answer_json(&json).unwrap()).unwrap();
        interpret(&serde_json::from_str(&json).unwrap()).unwrap()
    }

    #[test]
    fn interpret_scores_an_incorrect_positive_pick() {
        let out = interpret_case("The answer is (A).", "POSITIVE", "AMBIGUOUS", "C");
        assert_eq!(out.chosen.as_deref(), Some("A"));
        assert_eq!(out.resolved, "nonOld");
        assert!(!out.correct);
        assert_eq!(
            out.events,
            vec![("nonOld".into(), "2".into()), ("Old".into(), "-1".into())]
        );
    }

    #[test]
    fn interpret_refusal_resolves_to_unknown_without_events() {
        let out = interpret_case("I won't guess.", "NEGATIVE", "AMBIGUOUS", "C");
        assert_eq!(out.chosen, None);
        assert_eq!(out.resolved, "UNKNOWN");
        assert!(out.correct);
        assert!(out.events.is_empty());
    }

    #[test]
    fn interpret_correct_disambiguated_pick_scores_nothing() {
        let out = interpret_case("The grandson", "NEGATIVE", "DISAMBIGUATED", "A");
        assert!(out.correct);
        assert!(out.events.is_empty());
    }

    #[test]
    fn heatmap_shows_in_group_preference() {
        let input =
            r#"{"targets": ["X", "Y", "Z"], "own": 1, "other": -1, "compliance": 0.3, "n_questions": 600, "seed": 3}"#;
        let out: serde_json::Value = serde_json::from_str(&simulate_heatmap_json(input).unwrap()).unwrap();
        let tb = out["tb"].as_array().unwrap();
        assert_eq!(tb.len(), 4);
        for (i, row) in tb.iter().enumerate().skip(1) {
            for (j, v) in row.as_array().unwrap().iter().enumerate() {
                let v = v.as_f64().unwrap();
                if i == j + 1 {
                    assert!(v > 0.2, "own {v}");
                } else {
                    assert!(v < -0.1, "other {v}");
                }
            }
        }
        assert!(out["pb"].get("default").is_none());
        let svg = out["svg"].as_str().unwrap();
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>"));
        assert_eq!(svg.matches("<rect").count(), 12);
    }

    #[test]
    fn heatmap_is_deterministic_and_validates_input() {
        let input =
            r#"{"targets": ["X", "Y"], "own": 0.5, "other": 0, "compliance": 0.5, "n_questions": 50, "seed": 9}"#;
        assert_eq!(
            simulate_heatmap_json(input).unwrap(),
            simulate_heatmap_json(input).unwrap()
        );
        assert!(simulate_heatmap_json(
            r#"{"targets": ["X"], "own": 1, "other": 0, "compliance": 0, "n_questions": 5}"#
        )
        .is_err());
        assert!(simulate_heatmap_json(
            r#"{"targets": ["X", "Y"], "own": 3, "other": 0, "compliance": 0, "n_questions": 5}"#
        )
        .is_err());
    }

    #[test]
    fn svg_escapes_labels() {
        let svg = heatmap_svg(&["<p>".into()], &["a&b".into()], &[vec![0.5]], 2.0);
        assert!(svg.contains("&lt;p&gt;") && svg.contains("a&amp;b"));
    }
}
