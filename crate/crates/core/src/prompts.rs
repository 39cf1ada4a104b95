//! Stage prompt assembly: conditioning rules and template rendering.
//!
//! Each stage owns a system/user template pair with `{{name}}` placeholders.
//! [`build_context`] applies the fixed conditioning table — every stage sees
//! exactly the artifact kinds produced before it — and [`render`] substitutes
//! serialized JSON context into the templates.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::pipeline::RunState;
use crate::schema::{canonical_serialize, ArtifactDocument, StageKind};

/// Placeholder names a user template may reference.
pub const PLACEHOLDERS: [&str; 6] = [
    "world",
    "npcs",
    "player",
    "quests",
    "target_quest",
    "user_intent",
];

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("stage {stage} requires a prior {missing} artifact")]
    MissingDependency {
        stage: StageKind,
        missing: StageKind,
    },
    #[error("template references unbound placeholder '{{{{{0}}}}}'")]
    UnboundPlaceholder(String),
    #[error("template for {stage} uses unknown placeholder '{{{{{name}}}}}'")]
    UnknownPlaceholder { stage: StageKind, name: String },
    #[error("subset policy FirstK requires k >= 1")]
    InvalidSubsetPolicy,
    #[error("subset policy names unknown NPC '{0}'")]
    UnknownNpc(String),
    #[error("failed to read template {path}: {message}")]
    TemplateIo { path: String, message: String },
}

/// Which NPCs to inject into the player-generation context.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum SubsetPolicy {
    #[default]
    All,
    FirstK(usize),
    Named(Vec<String>),
}

/// Serialized structured context for one stage's prompt.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContextBundle {
    pub world: Option<String>,
    pub npcs: Option<String>,
    pub player: Option<String>,
    pub quests: Option<String>,
    pub target_quest: Option<String>,
    pub user_intent: Option<String>,
}

impl ContextBundle {
    fn get(&self, name: &str) -> Option<&str> {
        match name {
            "world" => self.world.as_deref(),
            "npcs" => self.npcs.as_deref(),
            "player" => self.player.as_deref(),
            "quests" => self.quests.as_deref(),
            "target_quest" => self.target_quest.as_deref(),
            "user_intent" => self.user_intent.as_deref(),
            _ => None,
        }
    }

    /// The artifact kinds this bundle carries (user_intent is not an artifact).
    pub fn artifact_kinds(&self) -> BTreeSet<StageKind> {
        let mut kinds = BTreeSet::new();
        if self.world.is_some() {
            kinds.insert(StageKind::World);
        }
        if self.npcs.is_some() {
            kinds.insert(StageKind::NpcRoster);
        }
        if self.player.is_some() {
            kinds.insert(StageKind::Player);
        }
        if self.quests.is_some() {
            kinds.insert(StageKind::QuestSet);
        }
        if self.target_quest.is_some() {
            kinds.insert(StageKind::ExtendedQuest);
        }
        kinds
    }
}

/// A system/user template pair for one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub stage: StageKind,
    pub system_text: String,
    pub user_text: String,
}

impl PromptTemplate {
    pub fn new(stage: StageKind, system_text: &str, user_text: &str) -> Result<Self, PromptError> {
        for name in placeholder_names(user_text).chain(placeholder_names(system_text)) {
            if !PLACEHOLDERS.contains(&name.as_str()) {
                return Err(PromptError::UnknownPlaceholder { stage, name });
            }
        }
        Ok(PromptTemplate {
            stage,
            system_text: system_text.to_string(),
            user_text: user_text.to_string(),
        })
    }
}

/// The default templates compiled into the binary; identical to the files
/// under `templates/`.
pub fn default_template(stage: StageKind) -> PromptTemplate {
    let (system_text, user_text) = match stage {
        StageKind::World => (
            include_str!("../templates/world/system.txt"),
            include_str!("../templates/world/user.txt"),
        ),
        StageKind::NpcRoster => (
            include_str!("../templates/npc_roster/system.txt"),
            include_str!("../templates/npc_roster/user.txt"),
        ),
        StageKind::Player => (
            include_str!("../templates/player/system.txt"),
            include_str!("../templates/player/user.txt"),
        ),
        StageKind::QuestSet => (
            include_str!("../templates/quest_set/system.txt"),
            include_str!("../templates/quest_set/user.txt"),
        ),
        StageKind::ExtendedQuest => (
            include_str!("../templates/extended_quest/system.txt"),
            include_str!("../templates/extended_quest/user.txt"),
        ),
    };
    PromptTemplate::new(stage, system_text, user_text).expect("bundled templates are well-formed")
}

/// Load a stage's template pair from `<dir>/<stage>/{system,user}.txt`.
pub fn load_template(dir: &Path, stage: StageKind) -> Result<PromptTemplate, PromptError> {
    let read = |name: &str| -> Result<String, PromptError> {
        let path = dir.join(stage.slug()).join(name);
        fs::read_to_string(&path).map_err(|source| PromptError::TemplateIo {
            path: path.display().to_string(),
            message: source.to_string(),
        })
    };
    PromptTemplate::new(stage, &read("system.txt")?, &read("user.txt")?)
}

/// All placeholder names referenced by a template string, in order.
fn placeholder_names(text: &str) -> impl Iterator<Item = String> + '_ {
    let mut rest = text;
    std::iter::from_fn(move || {
        while let Some(start) = rest.find("{{") {
            let after = &rest[start + 2..];
            if let Some(end) = after.find("}}") {
                let name = after[..end].to_string();
                rest = &after[end + 2..];
                return Some(name);
            }
            rest = after;
        }
        None
    })
}

/// A rendered prompt ready for a chat-completion request.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedPrompt {
    pub system_message: String,
    pub user_message: String,
}

/// Assemble the context for `stage` from prior validated artifacts.
///
/// World sees only the user intent; NPC roster sees the world; player sees the
/// world plus an NPC subset per `policy`; quest set sees world, full roster,
/// and player; extended quest additionally sees the full quest set and the
/// single target quest (supplied by the pipeline via `target_quest`).
pub fn build_context(
    stage: StageKind,
    state: &RunState,
    policy: &SubsetPolicy,
    user_intent: Option<&str>,
) -> Result<ContextBundle, PromptError> {
    let missing = |missing| PromptError::MissingDependency { stage, missing };

    let world = || -> Result<String, PromptError> {
        state
            .world
            .as_ref()
            .map(|d| canonical_serialize(&ArtifactDocument::World(d.clone())))
            .ok_or_else(|| missing(StageKind::World))
    };
    let npcs = |policy: &SubsetPolicy| -> Result<String, PromptError> {
        let roster = state
            .npcs
            .as_ref()
            .ok_or_else(|| missing(StageKind::NpcRoster))?;
        let subset: Vec<_> = match policy {
            SubsetPolicy::All => roster.clone(),
            SubsetPolicy::FirstK(0) => return Err(PromptError::InvalidSubsetPolicy),
            SubsetPolicy::FirstK(k) => roster.iter().take(*k).cloned().collect(),
            SubsetPolicy::Named(names) => names
                .iter()
                .map(|name| {
                    roster
                        .iter()
                        .find(|npc| &npc.name == name)
                        .cloned()
                        .ok_or_else(|| PromptError::UnknownNpc(name.clone()))
                })
                .collect::<Result<_, _>>()?,
        };
        Ok(canonical_serialize(&ArtifactDocument::NpcRoster(subset)))
    };
    let player = || -> Result<String, PromptError> {
        state
            .player
            .as_ref()
            .map(|d| canonical_serialize(&ArtifactDocument::Player(d.clone())))
            .ok_or_else(|| missing(StageKind::Player))
    };
    let quests = || -> Result<String, PromptError> {
        state
            .quests
            .as_ref()
            .map(|q| canonical_serialize(&ArtifactDocument::QuestSet(q.clone())))
            .ok_or_else(|| missing(StageKind::QuestSet))
    };

    let mut bundle = ContextBundle {
        user_intent: user_intent.map(str::to_string),
        ..ContextBundle::default()
    };
    match stage {
        StageKind::World => {}
        StageKind::NpcRoster => {
            bundle.world = Some(world()?);
        }
        StageKind::Player => {
            bundle.world = Some(world()?);
            bundle.npcs = Some(npcs(policy)?);
        }
        StageKind::QuestSet => {
            bundle.world = Some(world()?);
            bundle.npcs = Some(npcs(&SubsetPolicy::All)?);
            bundle.player = Some(player()?);
        }
        StageKind::ExtendedQuest => {
            bundle.world = Some(world()?);
            bundle.npcs = Some(npcs(&SubsetPolicy::All)?);
            bundle.player = Some(player()?);
            bundle.quests = Some(quests()?);
            // target_quest is filled per expansion by the pipeline.
        }
    }
    Ok(bundle)
}

/// Substitute bundle fields into the template. Deterministic; errors if the
/// template references a placeholder the bundle does not populate.
pub fn render(
    template: &PromptTemplate,
    bundle: &ContextBundle,
) -> Result<RenderedPrompt, PromptError> {
    Ok(RenderedPrompt {
        system_message: substitute(&template.system_text, bundle)?,
        user_message: substitute(&template.user_text, bundle)?,
    })
}

fn substitute(text: &str, bundle: &ContextBundle) -> Result<String, PromptError> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                let name = &after[..end];
                match bundle.get(name) {
                    Some(value) => out.push_str(value),
                    None => return Err(PromptError::UnboundPlaceholder(name.to_string())),
                }
                rest = &after[end + 2..];
            }
            None => {
                out.push_str("{{");
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}
