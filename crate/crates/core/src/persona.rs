//! Persona catalogs and prompt rendering.
//!
//! Catalogs and templates ship as JSON data files (`data/personas.json`,
//! `data/templates.json`) and can be replaced or extended at load time.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::QuestionRecord;
use crate::types::Domain;

pub const DEFAULT_PERSONA_ID: &str = "default";

const BUILTIN_PERSONAS: &str = include_str!("../data/personas.json");
const BUILTIN_TEMPLATES: &str = include_str!("../data/templates.json");

#[derive(Debug, thiserror::Error)]
pub enum PersonaError {
    #[error("unknown domain {0}")]
    UnknownDomain(Domain),
    #[error("template index {index} out of range (have {available})")]
    TemplateIndex { index: usize, available: usize },
    #[error("template {name} is missing placeholder {{{placeholder}}}")]
    MissingPlaceholder { name: String, placeholder: String },
    #[error("expected {expected} persona templates, found {found}")]
    TemplateCount { expected: usize, found: usize },
    #[error("catalog for {0} lists no targets")]
    EmptyTargets(Domain),
    #[error("invalid catalog file: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaSpec {
    pub id: String,
    /// Text substituted into the persona templates.
    pub display_name: String,
    pub domain: Domain,
    pub is_default: bool,
    /// Optional grouping (the SES occupations are grouped high/low).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

impl PersonaSpec {
    pub fn default_for(domain: &Domain) -> PersonaSpec {
        PersonaSpec {
            id: DEFAULT_PERSONA_ID.to_string(),
            display_name: String::new(),
            domain: domain.clone(),
            is_default: true,
            group: None,
        }
    }
}

#[derive(Debug, Deserialize)]
struct CatalogFile {
    domains: Vec<DomainEntry>,
}

#[derive(Debug, Deserialize)]
struct DomainEntry {
    domain: Domain,
    personas: Vec<PersonaEntry>,
    targets: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct PersonaEntry {
    name: String,
    #[serde(default)]
    group: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomainCatalog {
    /// Default persona first, then the catalog order.
    pub personas: Vec<PersonaSpec>,
    pub targets: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PersonaCatalog {
    domains: BTreeMap<Domain, DomainCatalog>,
}

impl PersonaCatalog {
    pub fn builtin() -> PersonaCatalog {
        PersonaCatalog::from_json(BUILTIN_PERSONAS).expect("bundled persona catalog is valid")
    }

    pub fn from_json(text: &str) -> Result<PersonaCatalog, PersonaError> {
        let file: CatalogFile = serde_json::from_str(text)?;
        let mut catalog = PersonaCatalog {
            domains: BTreeMap::new(),
        };
        catalog.extend(file)?;
        Ok(catalog)
    }

    /// Adds or replaces domains from another catalog file.
    pub fn extend_from_json(&mut self, text: &str) -> Result<(), PersonaError> {
        let file: CatalogFile = serde_json::from_str(text)?;
        self.extend(file)
    }

    fn extend(&mut self, file: CatalogFile) -> Result<(), PersonaError> {
        for entry in file.domains {
            if entry.targets.is_empty() {
                return Err(PersonaError::EmptyTargets(entry.domain));
            }
            let mut personas = vec![PersonaSpec::default_for(&entry.domain)];
            personas.extend(entry.personas.into_iter().map(|p| PersonaSpec {
                id: p.name.clone(),
                display_name: p.name,
                domain: entry.domain.clone(),
                is_default: false,
                group: p.group,
            }));
            self.domains.insert(
                entry.domain,
                DomainCatalog {
                    personas,
                    targets: entry.targets,
                },
            );
        }
        Ok(())
    }

    pub fn domains(&self) -> impl Iterator<Item = &Domain> {
        self.domains.keys()
    }

    pub fn domain(&self, domain: &Domain) -> Result<&DomainCatalog, PersonaError> {
        self.domains
            .get(domain)
            .ok_or_else(|| PersonaError::UnknownDomain(domain.clone()))
    }

    /// The default persona followed by the domain's personas.
    pub fn persona_catalog(&self, domain: &Domain) -> Result<Vec<PersonaSpec>, PersonaError> {
        Ok(self.domain(domain)?.personas.clone())
    }

    pub fn persona(&self, domain: &Domain, id: &str) -> Option<&PersonaSpec> {
        self.domains.get(domain)?.personas.iter().find(|p| p.id == id)
    }

    /// Target ids of a domain; empty for unknown domains.
    pub fn target_ids(&self, domain: &Domain) -> Vec<String> {
        self.domains.get(domain).map(|d| d.targets.clone()).unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplateSet {
    pub persona_templates: Vec<String>,
    pub qa_template: String,
    pub qa_reasoning_template: String,
}

pub const PERSONA_TEMPLATE_COUNT: usize = 5;
const QA_PLACEHOLDERS: [&str; 5] = ["context", "question", "option_a", "option_b", "option_c"];

impl Default for PromptTemplateSet {
    fn default() -> Self {
        PromptTemplateSet::from_json(BUILTIN_TEMPLATES).expect("bundled templates are valid")
    }
}

impl PromptTemplateSet {
    pub fn from_json(text: &str) -> Result<PromptTemplateSet, PersonaError> {
        let set: PromptTemplateSet = serde_json::from_str(text)?;
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), PersonaError> {
        if self.persona_templates.len() != PERSONA_TEMPLATE_COUNT {
            return Err(PersonaError::TemplateCount {
                expected: PERSONA_TEMPLATE_COUNT,
                found: self.persona_templates.len(),
            });
        }
        let require = |name: String, template: &str, key: &str| {
            if template.contains(&format!("{{{key}}}")) {
                Ok(())
            } else {
                Err(PersonaError::MissingPlaceholder {
                    name,
                    placeholder: key.to_string(),
                })
            }
        };
        for (i, t) in self.persona_templates.iter().enumerate() {
            require(format!("persona_templates[{i}]"), t, "persona")?;
        }
        for key in QA_PLACEHOLDERS {
            require("qa_template".into(), &self.qa_template, key)?;
            require("qa_reasoning_template".into(), &self.qa_reasoning_template, key)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptStyle {
    /// Insert "a"/"an" before the persona name ("Speak like an elder.").
    #[serde(default)]
    pub with_article: bool,
}

/// Single-pass placeholder substitution; substituted values are never rescanned.
fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let hit = after.find('}').and_then(|close| {
            let key = &after[..close];
            values.iter().find(|(k, _)| *k == key).map(|(_, v)| (close, *v))
        });
        match hit {
            Some((close, value)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

fn with_article(name: &str) -> String {
    let vowel = name
        .chars()
        .next()
        .is_some_and(|c| matches!(c.to_ascii_lowercase(), 'a' | 'e' | 'i' | 'o' | 'u'));
    if vowel {
        format!("an {name}")
    } else {
        format!("a {name}")
    }
}

/// Persona system prompt for one iteration; `None` for the default persona.
pub fn render_system_prompt(
    persona: &PersonaSpec,
    template_index: usize,
    templates: &PromptTemplateSet,
    style: PromptStyle,
) -> Result<Option<String>, PersonaError> {
    let template = templates
        .persona_templates
        .get(template_index)
        .ok_or(PersonaError::TemplateIndex {
            index: template_index,
            available: templates.persona_templates.len(),
        })?;
    if persona.is_default {
        return Ok(None);
    }
    let name = if style.with_article {
        with_article(&persona.display_name)
    } else {
        persona.display_name.clone()
    };
    Ok(Some(fill(template, &[("persona", &name)])))
}

/// QA user prompt with the options in stored order.
pub fn render_user_prompt(question: &QuestionRecord, reasoning: bool, templates: &PromptTemplateSet) -> String {
    let template = if reasoning {
        &templates.qa_reasoning_template
    } else {
        &templates.qa_template
    };
    fill(
        template,
        &[
            ("context", &question.context),
            ("question", &question.question),
            ("option_a", &question.options[0].text),
            ("option_b", &question.options[1].text),
            ("option_c", &question.options[2].text),
        ],
    )
}

/// How the persona prompt reached the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PersonaMode {
    /// Default persona: no persona text at all.
    None,
    /// Sent as a `system` role message.
    System,
    /// Prefixed to the user prompt, for backends without a system role.
    Inline,
}

/// Places the persona prompt either in the system slot or in front of the
/// user prompt separated by a blank line.
pub fn compose_prompts(
    system: Option<String>,
    user: String,
    system_role_supported: bool,
) -> (Option<String>, String, PersonaMode) {
    match system {
        None => (None, user, PersonaMode::None),
        Some(s) if system_role_supported => (Some(s), user, PersonaMode::System),
        Some(s) => (None, format!("{s}\n\n{user}"), PersonaMode::Inline),
    }
}
