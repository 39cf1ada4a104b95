//! Deterministic sample content for offline runs and tests.
//!
//! One complete, internally linked bundle: a world, a ten-NPC roster, a player
//! character, ten campaign quests in a forward chain, and their extended
//! forms. Every cross-artifact reference resolves, so a run built from this
//! content lints clean.

use std::collections::BTreeMap;

use crate::pipeline::RunState;
use crate::schema::{
    canonical_serialize, ArtifactDocument, Building, DialogueTurn, Faction, NpcDocument,
    PlayerDocument, QuestConnection, QuestDocument, RelationLink, Surrounding, WorldDocument,
};

pub fn world() -> WorldDocument {
    WorldDocument {
        city: "Marinth Vell, the Tideglass Metropolis".into(),
        surroundings: vec![
            Surrounding {
                name: "Storm-Kiln Caldera".into(),
                kind: "volcanic caldera and storm-factory".into(),
                resources: "Storm energy, fulgurites".into(),
                dependencies: "Storm access required for tideglass production".into(),
                related_factions: vec![
                    "Glassworkers' Concord".into(),
                    "Conclave of Prismancers".into(),
                    "House Saltvein".into(),
                ],
                extra: BTreeMap::new(),
            },
            Surrounding {
                name: "Chainmouth Shallows".into(),
                kind: "tidal harbor flats".into(),
                resources: "Salvage, brine-iron".into(),
                dependencies: "Dredging crews from the city docks".into(),
                related_factions: vec!["Dockers' Syndicate".into(), "River Wardens".into()],
                extra: BTreeMap::new(),
            },
        ],
        buildings: vec![
            Building {
                name: "Beacon of Myr Sal".into(),
                kind: "living lighthouse".into(),
                district: "Glassward".into(),
                controlled_by: "Conclave of Prismancers".into(),
                extra: BTreeMap::new(),
            },
            Building {
                name: "Chainhouse Exchange".into(),
                kind: "lift-and-ledger hall".into(),
                district: "Chainmouth".into(),
                controlled_by: "Dockers' Syndicate".into(),
                extra: BTreeMap::new(),
            },
        ],
        politics: vec![
            Faction {
                name: "Glassworkers' Concord".into(),
                kind: "craft guild".into(),
                goals: "Maintain control over tideglass craft".into(),
                rivals: "Conclave of Prismancers".into(),
                extra: BTreeMap::new(),
            },
            Faction {
                name: "Conclave of Prismancers".into(),
                kind: "arcane order".into(),
                goals: "Keep the Beacon singing and the storms charted".into(),
                rivals: "Glassworkers' Concord".into(),
                extra: BTreeMap::new(),
            },
            Faction {
                name: "House Saltvein".into(),
                kind: "merchant house".into(),
                goals: "Corner the brine-iron trade".into(),
                rivals: "Dockers' Syndicate".into(),
                extra: BTreeMap::new(),
            },
            Faction {
                name: "Dockers' Syndicate".into(),
                kind: "labor union".into(),
                goals: "Fair wages and control of the chainlifts".into(),
                rivals: "House Saltvein".into(),
                extra: BTreeMap::new(),
            },
            Faction {
                name: "River Wardens".into(),
                kind: "river militia".into(),
                goals: "Police the shallows and the smuggling lanes".into(),
                rivals: "Dockers' Syndicate".into(),
                extra: BTreeMap::new(),
            },
            Faction {
                name: "Faith of Azerene".into(),
                kind: "temple congregation".into(),
                goals: "Tend the drowned shrines beneath the city".into(),
                rivals: "Conclave of Prismancers".into(),
                extra: BTreeMap::new(),
            },
        ],
        extra: BTreeMap::new(),
    }
}

fn npc(
    name: &str,
    role: &str,
    traits: &[&str],
    skills: &[&str],
    flaws: &[&str],
    secrets: &[&str],
    relations: &[(&str, &str)],
) -> NpcDocument {
    NpcDocument {
        name: name.into(),
        role: role.into(),
        traits: traits.iter().map(|s| s.to_string()).collect(),
        skills: skills.iter().map(|s| s.to_string()).collect(),
        flaws: flaws.iter().map(|s| s.to_string()).collect(),
        secrets: secrets.iter().map(|s| s.to_string()).collect(),
        relations: relations
            .iter()
            .map(|(npc_name, relation_type)| RelationLink {
                npc_name: npc_name.to_string(),
                relation_type: relation_type.to_string(),
            })
            .collect(),
        extra: BTreeMap::new(),
    }
}

pub fn npcs() -> Vec<NpcDocument> {
    vec![
        npc(
            "Isha Brinehand",
            "Foreman-Keeper of the Dockers' Syndicate",
            &["charismatic", "protective", "combative"],
            &[
                "strike organization",
                "crowd speaking",
                "contract bargaining",
            ],
            &["impulsive", "holds grudges"],
            &[
                "Funded lantern blackouts during labor negotiations",
                "Shelters a deserter Warden under a false docker's name",
            ],
            &[
                ("Sorev Katch", "Conflict"),
                ("Sel Var Saltvein", "Rivalry"),
                ("Nerey Alis", "Cooperation"),
            ],
        ),
        npc(
            "Sorev Katch",
            "Captain-Major of the River Wardens",
            &["disciplined", "suspicious"],
            &["patrol command", "interrogation"],
            &["inflexible"],
            &["Takes House Saltvein coin to overlook certain barges"],
            &[("Isha Brinehand", "Conflict")],
        ),
        npc(
            "Sel Var Saltvein",
            "Trade envoy of House Saltvein",
            &["urbane", "calculating"],
            &["ledger work", "bribery"],
            &["vain"],
            &["Forged the caldera access charters"],
            &[("Isha Brinehand", "Rivalry")],
        ),
        npc(
            "Nerey Alis",
            "Lamplighter of the Glassward",
            &["observant", "soft-spoken"],
            &["night navigation", "signal codes"],
            &["timid"],
            &["Keeps a ledger of every blackout she was paid to cause"],
            &[("Isha Brinehand", "Cooperation")],
        ),
        npc(
            "Maren Duskwell",
            "Archivist of the Chainhouse Exchange",
            &["meticulous", "dry-humored"],
            &["record keeping", "contract law"],
            &["hoards information"],
            &["Holds the original Beacon maintenance deeds"],
            &[("Cassian Vere", "Mentor")],
        ),
        npc(
            "Cassian Vere",
            "Adept of the Conclave of Prismancers",
            &["curious", "reckless"],
            &["storm charting", "prism tuning"],
            &["overconfident"],
            &["Caused the last Beacon dissonance during an experiment"],
            &[("Brother Emeth", "Conflict")],
        ),
        npc(
            "Ophira Senn",
            "Glasswright of the Glassworkers' Concord",
            &["proud", "exacting"],
            &["tideglass blowing", "kiln repair"],
            &["distrusts outsiders"],
            &["Sells rejected glass to smugglers"],
            &[("Dren Okhart", "Rivalry")],
        ),
        npc(
            "Dren Okhart",
            "Forgeman of the Storm-Kiln Caldera",
            &["stoic", "patient"],
            &["fulgurite casting", "storm timing"],
            &["gambling debts"],
            &["Owes House Saltvein more than his forge is worth"],
            &[("Ophira Senn", "Rival")],
        ),
        npc(
            "Lysa Quayhollow",
            "Dock clerk at Chainmouth",
            &["quick", "cheerful"],
            &["tally work", "rumor trading"],
            &["cannot keep a secret"],
            &["Copies manifests for Isha's stewards"],
            &[("Isha Brinehand", "Cooperation")],
        ),
        npc(
            "Brother Emeth",
            "Acolyte of the Faith of Azerene",
            &["devout", "gentle"],
            &["shrine rites", "tide lore"],
            &["fears deep water"],
            &["Heard the Beacon answer a prayer it should not have"],
            &[("Cassian Vere", "Conflict")],
        ),
    ]
}

pub fn player() -> PlayerDocument {
    PlayerDocument {
        name: "Tairn Latch".into(),
        class: "WARRIOR".into(),
        background:
            "Marsh-born chainhouse rigger who climbed out of the shallows one contract at a time"
                .into(),
        main_attributes: BTreeMap::from([
            ("strength".to_string(), 16),
            ("constitution".to_string(), 15),
            ("dexterity".to_string(), 14),
        ]),
        relationships: BTreeMap::from([
            ("Isha Brinehand".to_string(), "Mentor".to_string()),
            ("Sel Var Saltvein".to_string(), "Rival".to_string()),
        ]),
        extra: BTreeMap::new(),
    }
}

pub fn quests() -> Vec<QuestDocument> {
    let specs: [(&str, &str, &str, [&str; 2]); 10] = [
        (
            "M1",
            "When the Beacon Keens on a Clear Sky",
            "Isha Brinehand",
            [
                "Stabilize the chainlift at Chainmouth",
                "Meet Captain-Major Sorev Katch",
            ],
        ),
        (
            "M2",
            "Manifest of the Silent Barge",
            "Sorev Katch",
            [
                "Board the unregistered barge in the shallows",
                "Recover its sealed manifest",
            ],
        ),
        (
            "M3",
            "Deeds Beneath the Chainhouse",
            "Maren Duskwell",
            [
                "Search the Exchange archive for the Beacon deeds",
                "Confront the archivist who misfiled them",
            ],
        ),
        (
            "M4",
            "A Dissonance in the Prisms",
            "Cassian Vere",
            [
                "Carry a tuning prism up the Beacon of Myr Sal",
                "Record the dissonant tone at the crown",
            ],
        ),
        (
            "M5",
            "Glass That Remembers",
            "Ophira Senn",
            [
                "Retrieve rejected tideglass from the smugglers' cache",
                "Return it to the Concord kilns unbroken",
            ],
        ),
        (
            "M6",
            "The Forgeman's Ledger",
            "Dren Okhart",
            [
                "Buy back Dren's debt marker from House Saltvein",
                "Deliver it to the caldera forge",
            ],
        ),
        (
            "M7",
            "Charters Written in Brine",
            "Sel Var Saltvein",
            [
                "Authenticate the caldera access charters",
                "Present the findings at the Chainhouse Exchange",
            ],
        ),
        (
            "M8",
            "Lamps Out Over Glassward",
            "Nerey Alis",
            [
                "Follow the lamplighter's blackout ledger",
                "Identify who paid for the darkened quarter",
            ],
        ),
        (
            "M9",
            "The Clerk Who Counted Twice",
            "Lysa Quayhollow",
            [
                "Compare the duplicate manifests at the docks",
                "Expose the short-weighted shipments",
            ],
        ),
        (
            "M10",
            "What the Drowned Shrines Answer",
            "Brother Emeth",
            [
                "Descend to the drowned shrine below the city",
                "Witness what answers the Beacon's song",
            ],
        ),
    ];
    specs
        .iter()
        .enumerate()
        .map(|(i, (id, title, giver, objectives))| QuestDocument {
            id: id.to_string(),
            title: title.to_string(),
            quest_giver: giver.to_string(),
            objectives: objectives.iter().map(|s| s.to_string()).collect(),
            connections: if i + 1 < specs.len() {
                Some(QuestConnection {
                    next: vec![format!("M{}", i + 2)],
                    extra: BTreeMap::new(),
                })
            } else {
                None
            },
            rewards: None,
            dialogue: None,
            extra: BTreeMap::new(),
        })
        .collect()
}

/// Extended form of one campaign quest: same id, added dialogue and rewards.
pub fn extended_quest(quest: &QuestDocument) -> QuestDocument {
    let mut extended = quest.clone();
    extended.dialogue = Some(if quest.id == "M1" {
        vec![
            DialogueTurn {
                speaker: "Isha Brinehand".into(),
                content: "The Beacon shouldn't sing when the sky is clean...".into(),
            },
            DialogueTurn {
                speaker: "Tairn Latch".into(),
                content: "I'll climb and listen if the Conclave will let me.".into(),
            },
            DialogueTurn {
                speaker: "Sorev Katch".into(),
                content: "Bring me something I can act on.".into(),
            },
        ]
    } else {
        vec![
            DialogueTurn {
                speaker: quest.quest_giver.clone(),
                content: format!("There is work for you: {}.", quest.title),
            },
            DialogueTurn {
                speaker: "Tairn Latch".into(),
                content: "Tell me where to start.".into(),
            },
        ]
    });
    extended.rewards = Some(vec![
        "Dockers' Syndicate hazard pay".into(),
        "River Wardens access pass".into(),
    ]);
    extended
}

/// A fully populated run state, as produced by a successful pipeline run over
/// the sample content.
pub fn run_state() -> RunState {
    let quests = quests();
    let extended = quests
        .iter()
        .map(|q| (q.id.clone(), extended_quest(q)))
        .collect();
    RunState {
        world: Some(world()),
        npcs: Some(npcs()),
        player: Some(player()),
        quests: Some(quests),
        extended,
    }
}

/// One fixture entry as serialized into fixture files.
fn entry(stage: &str, text: String) -> serde_json::Value {
    serde_json::json!({ "stage": stage, "text": text })
}

/// The scripted responses for one full 14-invocation run: world, roster,
/// player, quest set, then one extended reply per quest. The world reply is
/// fenced to exercise extraction end to end.
pub fn full_fixture() -> serde_json::Value {
    let quests = quests();
    let mut entries = vec![
        entry(
            "world",
            format!(
                "```json\n{}```",
                canonical_serialize(&ArtifactDocument::World(world()))
            ),
        ),
        entry(
            "npc_roster",
            canonical_serialize(&ArtifactDocument::NpcRoster(npcs())),
        ),
        entry(
            "player",
            canonical_serialize(&ArtifactDocument::Player(player())),
        ),
        entry(
            "quest_set",
            canonical_serialize(&ArtifactDocument::QuestSet(quests.clone())),
        ),
    ];
    for quest in &quests {
        entries.push(entry(
            "extended_quest",
            canonical_serialize(&ArtifactDocument::ExtendedQuest(extended_quest(quest))),
        ));
    }
    serde_json::Value::Array(entries)
}

/// Like [`full_fixture`], but the first reply is not JSON at all.
pub fn halt_world_fixture() -> serde_json::Value {
    let mut fixture = full_fixture();
    fixture[0] = entry(
        "world",
        "I would rather describe the world in prose.".into(),
    );
    fixture
}

/// Like [`full_fixture`], but the extended reply for the quest at `index`
/// (0-based) is malformed JSON.
pub fn broken_extended_fixture(index: usize) -> serde_json::Value {
    let mut fixture = full_fixture();
    fixture[4 + index] = entry("extended_quest", "{\"id\": \"M?\", \"title\": ".into());
    fixture
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{validate, StageKind};

    #[test]
    fn sample_documents_validate() {
        assert!(validate(StageKind::World, &serde_json::to_value(world()).unwrap()).valid());
        assert!(validate(StageKind::NpcRoster, &serde_json::to_value(npcs()).unwrap()).valid());
        assert!(validate(StageKind::Player, &serde_json::to_value(player()).unwrap()).valid());
        assert!(validate(
            StageKind::QuestSet,
            &serde_json::to_value(quests()).unwrap()
        )
        .valid());
        for quest in quests() {
            let ext = serde_json::to_value(extended_quest(&quest)).unwrap();
            assert!(validate(StageKind::ExtendedQuest, &ext).valid());
        }
    }

    #[test]
    fn full_fixture_has_fourteen_entries() {
        assert_eq!(full_fixture().as_array().unwrap().len(), 14);
    }

    #[test]
    fn roster_relation_targets_all_exist() {
        let roster = npcs();
        let names: Vec<&str> = roster.iter().map(|n| n.name.as_str()).collect();
        for npc in &roster {
            for rel in &npc.relations {
                assert!(names.contains(&rel.npc_name.as_str()), "{}", rel.npc_name);
            }
        }
    }
}
