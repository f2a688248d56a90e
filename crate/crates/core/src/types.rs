use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Social domain a question (and its persona/target catalog) belongs to.
///
/// The five BBQ domains are built in; `Custom` carries user-defined domains
/// loaded from catalog files.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Domain {
    Age,
    RaceEthnicity,
    Religion,
    Ses,
    SexualOrientation,
    Custom(String),
}

impl Domain {
    pub const BUILTIN: [Domain; 5] = [
        Domain::Age,
        Domain::RaceEthnicity,
        Domain::Religion,
        Domain::Ses,
        Domain::SexualOrientation,
    ];

    pub fn as_str(&self) -> &str {
        match self {
            Domain::Age => "Age",
            Domain::RaceEthnicity => "RaceEthnicity",
            Domain::Religion => "Religion",
            Domain::Ses => "SES",
            Domain::SexualOrientation => "SexualOrientation",
            Domain::Custom(name) => name,
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Ok(match key.as_str() {
            "age" => Domain::Age,
            "raceethnicity" | "race" => Domain::RaceEthnicity,
            "religion" => Domain::Religion,
            "ses" | "socioeconomicstatus" => Domain::Ses,
            "sexualorientation" => Domain::SexualOrientation,
            _ => Domain::Custom(s.to_string()),
        })
    }
}

impl Serialize for Domain {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Domain {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(s.parse().unwrap_or_else(|never| match never {}))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ContextCondition {
    #[serde(alias = "ambig", alias = "ambiguous")]
    Ambiguous,
    #[serde(alias = "disambig", alias = "disambiguated")]
    Disambiguated,
}

impl ContextCondition {
    pub const ALL: [ContextCondition; 2] = [ContextCondition::Ambiguous, ContextCondition::Disambiguated];

    pub fn as_str(self) -> &'static str {
        match self {
            ContextCondition::Ambiguous => "AMBIGUOUS",
            ContextCondition::Disambiguated => "DISAMBIGUATED",
        }
    }
}

impl fmt::Display for ContextCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Question polarity. BBQ's "non-negative" questions map to `Positive`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Polarity {
    #[serde(alias = "nonneg", alias = "positive")]
    Positive,
    #[serde(alias = "neg", alias = "negative")]
    Negative,
}

impl Polarity {
    pub fn flipped(self) -> Polarity {
        match self {
            Polarity::Positive => Polarity::Negative,
            Polarity::Negative => Polarity::Positive,
        }
    }

    /// Parses both the native spelling and BBQ's `neg` / `nonneg`.
    pub fn parse_loose(s: &str) -> Option<Polarity> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" | "nonneg" | "non-negative" | "non_negative" => Some(Polarity::Positive),
            "negative" | "neg" => Some(Polarity::Negative),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OptionLabel {
    A,
    B,
    C,
}

impl OptionLabel {
    pub const ALL: [OptionLabel; 3] = [OptionLabel::A, OptionLabel::B, OptionLabel::C];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<OptionLabel> {
        Self::ALL.get(index).copied()
    }

    pub fn as_char(self) -> char {
        match self {
            OptionLabel::A => 'A',
            OptionLabel::B => 'B',
            OptionLabel::C => 'C',
        }
    }

    pub fn from_char(c: char) -> Option<OptionLabel> {
        match c.to_ascii_uppercase() {
            'A' => Some(OptionLabel::A),
            'B' => Some(OptionLabel::B),
            'C' => Some(OptionLabel::C),
            _ => None,
        }
    }
}

impl fmt::Display for OptionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotKind {
    Target,
    Unknown,
}
