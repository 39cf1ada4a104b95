//! Artifact document types, JSON extraction, and schema validation.
//!
//! Each of the five pipeline stages produces one artifact kind. Documents keep
//! unknown fields (models routinely emit more than the required minimum), so a
//! validated document round-trips through [`canonical_serialize`] without loss.

mod extract;
pub mod validate;

pub use extract::{extract_json, ExtractError};
pub use validate::validate;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The five generation stages, in pipeline order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    World,
    NpcRoster,
    Player,
    QuestSet,
    ExtendedQuest,
}

impl StageKind {
    pub const ALL: [StageKind; 5] = [
        StageKind::World,
        StageKind::NpcRoster,
        StageKind::Player,
        StageKind::QuestSet,
        StageKind::ExtendedQuest,
    ];

    /// Stable lowercase identifier used in file names and fixture tags.
    pub fn slug(self) -> &'static str {
        match self {
            StageKind::World => "world",
            StageKind::NpcRoster => "npc_roster",
            StageKind::Player => "player",
            StageKind::QuestSet => "quest_set",
            StageKind::ExtendedQuest => "extended_quest",
        }
    }

    pub fn from_slug(slug: &str) -> Option<StageKind> {
        StageKind::ALL.into_iter().find(|s| s.slug() == slug)
    }

    /// Position in the fixed execution order.
    pub fn order_index(self) -> usize {
        StageKind::ALL.iter().position(|s| *s == self).unwrap()
    }
}

impl fmt::Display for StageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

type ExtraFields = BTreeMap<String, serde_json::Value>;

/// A location surrounding the main city.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surrounding {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: String,
    pub resources: String,
    pub dependencies: String,
    pub related_factions: Vec<String>,
    #[serde(flatten)]
    pub extra: ExtraFields,
}

/// A notable building inside the city.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: String,
    pub district: String,
    pub controlled_by: String,
    #[serde(flatten)]
    pub extra: ExtraFields,
}

/// A political faction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Faction {
    pub name: String,
    #[serde(rename = "type")]
    pub kind: String,
    pub goals: String,
    pub rivals: String,
    #[serde(flatten)]
    pub extra: ExtraFields,
}

/// The world artifact: city, surroundings, buildings, and factions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldDocument {
    pub city: String,
    pub surroundings: Vec<Surrounding>,
    pub buildings: Vec<Building>,
    pub politics: Vec<Faction>,
    #[serde(flatten)]
    pub extra: ExtraFields,
}

/// A directed social link from one NPC to another.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationLink {
    pub npc_name: String,
    pub relation_type: String,
}

/// A single non-player character within a roster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpcDocument {
    pub name: String,
    pub role: String,
    pub traits: Vec<String>,
    pub skills: Vec<String>,
    pub flaws: Vec<String>,
    pub secrets: Vec<String>,
    pub relations: Vec<RelationLink>,
    #[serde(flatten)]
    pub extra: ExtraFields,
}

/// The player character artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerDocument {
    pub name: String,
    pub class: String,
    pub background: String,
    pub main_attributes: BTreeMap<String, i64>,
    /// NPC name -> relation label.
    pub relationships: BTreeMap<String, String>,
    #[serde(flatten)]
    pub extra: ExtraFields,
}

/// Forward links to successor quests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestConnection {
    pub next: Vec<String>,
    #[serde(flatten)]
    pub extra: ExtraFields,
}

/// One line of quest dialogue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueTurn {
    pub speaker: String,
    pub content: String,
}

/// A quest, in either campaign-level (lightweight) or extended form.
///
/// The extended form reuses the same shape with `dialogue` and richer optional
/// fields populated; it must keep the id of the campaign quest it expands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestDocument {
    pub id: String,
    pub title: String,
    pub quest_giver: String,
    pub objectives: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub connections: Option<QuestConnection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rewards: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dialogue: Option<Vec<DialogueTurn>>,
    #[serde(flatten)]
    pub extra: ExtraFields,
}

/// Severity of a validation or lint finding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
    Info,
}

/// One schema violation (or advisory) located at a field path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    pub code: String,
    pub path: String,
    pub message: String,
}

/// The outcome of validating one candidate document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    /// True iff no finding has error severity.
    pub fn valid(&self) -> bool {
        self.findings.iter().all(|f| f.severity != Severity::Error)
    }

    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings
            .iter()
            .filter(|f| f.severity == Severity::Error)
    }

    pub fn push(&mut self, severity: Severity, code: &str, path: String, message: String) {
        self.findings.push(Finding {
            severity,
            code: code.to_string(),
            path,
            message,
        });
    }
}

/// A stage-typed, schema-valid artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "doc", rename_all = "snake_case")]
pub enum ArtifactDocument {
    World(WorldDocument),
    NpcRoster(Vec<NpcDocument>),
    Player(PlayerDocument),
    QuestSet(Vec<QuestDocument>),
    ExtendedQuest(QuestDocument),
}

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("document failed {kind} validation: {first}")]
    Invalid {
        kind: StageKind,
        report: ValidationReport,
        first: String,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl ArtifactDocument {
    pub fn kind(&self) -> StageKind {
        match self {
            ArtifactDocument::World(_) => StageKind::World,
            ArtifactDocument::NpcRoster(_) => StageKind::NpcRoster,
            ArtifactDocument::Player(_) => StageKind::Player,
            ArtifactDocument::QuestSet(_) => StageKind::QuestSet,
            ArtifactDocument::ExtendedQuest(_) => StageKind::ExtendedQuest,
        }
    }

    /// Validate `value` as a `kind` document and, if valid, build the typed
    /// artifact. The report is returned in both cases.
    pub fn from_value(
        kind: StageKind,
        value: &serde_json::Value,
    ) -> (ValidationReport, Result<ArtifactDocument, SchemaError>) {
        let report = validate(kind, value);
        if !report.valid() {
            let first = report
                .errors()
                .next()
                .map(|f| format!("{} at {}", f.code, f.path))
                .unwrap_or_default();
            let err = SchemaError::Invalid {
                kind,
                report: report.clone(),
                first,
            };
            return (report, Err(err));
        }
        let parsed = match kind {
            StageKind::World => serde_json::from_value(value.clone()).map(ArtifactDocument::World),
            StageKind::NpcRoster => {
                serde_json::from_value(value.clone()).map(ArtifactDocument::NpcRoster)
            }
            StageKind::Player => {
                serde_json::from_value(value.clone()).map(ArtifactDocument::Player)
            }
            StageKind::QuestSet => {
                serde_json::from_value(value.clone()).map(ArtifactDocument::QuestSet)
            }
            StageKind::ExtendedQuest => {
                serde_json::from_value(value.clone()).map(ArtifactDocument::ExtendedQuest)
            }
        };
        (report, parsed.map_err(SchemaError::from))
    }

    pub fn to_value(&self) -> serde_json::Value {
        match self {
            ArtifactDocument::World(d) => serde_json::to_value(d),
            ArtifactDocument::NpcRoster(d) => serde_json::to_value(d),
            ArtifactDocument::Player(d) => serde_json::to_value(d),
            ArtifactDocument::QuestSet(d) => serde_json::to_value(d),
            ArtifactDocument::ExtendedQuest(d) => serde_json::to_value(d),
        }
        .expect("artifact documents always serialize")
    }
}

/// Serialize a JSON value with lexicographic key order and 2-space indentation.
///
/// `serde_json`'s map type keeps keys sorted, so converting through a `Value`
/// yields deterministic output; array order is preserved as-is.
pub fn canonical_serialize_value(value: &serde_json::Value) -> String {
    let mut out = serde_json::to_string_pretty(value).expect("json value always serializes");
    out.push('\n');
    out
}

/// Canonical text form of a validated artifact. Parsing it back yields a
/// structurally equal document.
pub fn canonical_serialize(doc: &ArtifactDocument) -> String {
    let value = match doc {
        ArtifactDocument::World(d) => serde_json::to_value(d),
        ArtifactDocument::NpcRoster(d) => serde_json::to_value(d),
        ArtifactDocument::Player(d) => serde_json::to_value(d),
        ArtifactDocument::QuestSet(d) => serde_json::to_value(d),
        ArtifactDocument::ExtendedQuest(d) => serde_json::to_value(d),
    }
    .expect("artifact documents always serialize");
    canonical_serialize_value(&value)
}

/// Relation labels observed in generated content. Unknown labels are legal;
/// the linter reports them at info severity.
pub const KNOWN_RELATION_LABELS: [&str; 5] =
    ["Conflict", "Rivalry", "Cooperation", "Mentor", "Rival"];

/// True when `id` is one or more letters followed by one or more digits
/// ("M1", "SQ12", ...).
pub fn is_quest_id(id: &str) -> bool {
    let letters: String = id.chars().take_while(|c| c.is_ascii_alphabetic()).collect();
    let rest = &id[letters.len()..];
    !letters.is_empty() && !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit())
}
