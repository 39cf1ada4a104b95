//! Cross-artifact consistency lint over a completed (or partial) run.
//!
//! The linter never mutates artifacts. It rebuilds the reference structure
//! from whatever the run state holds and reports findings with a closed set
//! of codes, ordered deterministically by (artifact, path).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::pipeline::RunState;
use crate::schema::{is_quest_id, Severity, KNOWN_RELATION_LABELS};

/// The closed set of lint codes.
pub mod codes {
    pub const DANGLING_NPC_REF: &str = "DanglingNpcRef";
    pub const DANGLING_QUEST_REF: &str = "DanglingQuestRef";
    pub const QUEST_CYCLE: &str = "QuestCycle";
    pub const UNKNOWN_FACTION: &str = "UnknownFaction";
    pub const UNKNOWN_SPEAKER: &str = "UnknownSpeaker";
    pub const ID_MISMATCH: &str = "IdMismatch";
    pub const UNKNOWN_RELATION_LABEL: &str = "UnknownRelationLabel";
    pub const COUNT_MISMATCH: &str = "CountMismatch";
}

/// One lint finding. `artifact` names the offending document ("world",
/// "npc_roster", "player", "quest_set", or "extended_quest_<id>").
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LintFinding {
    pub artifact: String,
    pub path: String,
    pub code: String,
    pub severity: Severity,
    pub message: String,
}

/// Directed NPC relation graph. Names referenced but not present in the
/// roster become phantom nodes, so the graph is total over mentions.
#[derive(Debug, Clone, Default)]
pub struct RelationGraph {
    /// Node name -> whether it exists in the roster (false = phantom).
    pub nodes: BTreeMap<String, bool>,
    /// (from, to, label) edges in roster order.
    pub edges: Vec<(String, String, String)>,
}

impl RelationGraph {
    pub fn phantoms(&self) -> impl Iterator<Item = &str> {
        self.nodes
            .iter()
            .filter(|(_, real)| !**real)
            .map(|(name, _)| name.as_str())
    }
}

/// Build the NPC relation graph from the roster plus the player's
/// relationship map.
pub fn build_relation_graph(state: &RunState) -> RelationGraph {
    let mut graph = RelationGraph::default();
    let touch = |graph: &mut RelationGraph, name: &str, real: bool| {
        let entry = graph.nodes.entry(name.to_string()).or_insert(real);
        *entry |= real;
    };
    if let Some(npcs) = &state.npcs {
        for npc in npcs {
            touch(&mut graph, &npc.name, true);
        }
        for npc in npcs {
            for rel in &npc.relations {
                touch(&mut graph, &rel.npc_name, false);
                graph.edges.push((
                    npc.name.clone(),
                    rel.npc_name.clone(),
                    rel.relation_type.clone(),
                ));
            }
        }
    }
    if let Some(player) = &state.player {
        touch(&mut graph, &player.name, true);
        for (target, label) in &player.relationships {
            touch(&mut graph, target, false);
            graph
                .edges
                .push((player.name.clone(), target.clone(), label.clone()));
        }
    }
    graph
}

/// Quest progression DAG candidate: ids plus `connections.next` edges.
/// Extended quests override the campaign entry of the same id.
#[derive(Debug, Clone, Default)]
pub struct QuestDag {
    pub ids: Vec<String>,
    /// from id -> successor ids, insertion order preserved per node.
    pub edges: BTreeMap<String, Vec<String>>,
}

pub fn build_quest_dag(state: &RunState) -> QuestDag {
    let mut dag = QuestDag::default();
    let Some(quests) = &state.quests else {
        return dag;
    };
    for quest in quests {
        dag.ids.push(quest.id.clone());
        let effective = state.extended.get(&quest.id).unwrap_or(quest);
        let next = effective
            .connections
            .as_ref()
            .map(|c| c.next.clone())
            .unwrap_or_default();
        dag.edges.insert(quest.id.clone(), next);
    }
    dag
}

/// All ids that sit on at least one cycle. A node is a cycle member exactly
/// when its strongly connected component has more than one node, or it
/// carries a self-loop; computed with an iterative Tarjan SCC pass.
/// Returned sorted for determinism.
pub fn cycle_members(dag: &QuestDag) -> Vec<String> {
    let index_of: BTreeMap<&str, usize> = dag
        .ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let n = dag.ids.len();
    // Adjacency over known ids only; dangling refs are reported separately.
    let adj: Vec<Vec<usize>> = dag
        .ids
        .iter()
        .map(|id| {
            dag.edges
                .get(id)
                .map(|succs| {
                    succs
                        .iter()
                        .filter_map(|s| index_of.get(s.as_str()).copied())
                        .collect()
                })
                .unwrap_or_default()
        })
        .collect();

    const UNVISITED: usize = usize::MAX;
    let mut index = vec![UNVISITED; n];
    let mut lowlink = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut scc_stack: Vec<usize> = Vec::new();
    let mut next_index = 0usize;
    let mut members: BTreeSet<String> = BTreeSet::new();

    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        // (node, next successor position) frames emulate Tarjan's recursion.
        let mut call_stack: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next_index;
        lowlink[root] = next_index;
        next_index += 1;
        scc_stack.push(root);
        on_stack[root] = true;

        while let Some(&(v, pos)) = call_stack.last() {
            if pos < adj[v].len() {
                call_stack.last_mut().expect("non-empty stack").1 += 1;
                let w = adj[v][pos];
                if index[w] == UNVISITED {
                    index[w] = next_index;
                    lowlink[w] = next_index;
                    next_index += 1;
                    scc_stack.push(w);
                    on_stack[w] = true;
                    call_stack.push((w, 0));
                } else if on_stack[w] {
                    lowlink[v] = lowlink[v].min(index[w]);
                }
                continue;
            }
            call_stack.pop();
            if let Some(&(parent, _)) = call_stack.last() {
                lowlink[parent] = lowlink[parent].min(lowlink[v]);
            }
            if lowlink[v] == index[v] {
                // v is an SCC root; pop the component.
                let mut component = Vec::new();
                loop {
                    let w = scc_stack.pop().expect("component member on stack");
                    on_stack[w] = false;
                    component.push(w);
                    if w == v {
                        break;
                    }
                }
                let self_loop = component.len() == 1 && adj[v].contains(&v);
                if component.len() > 1 || self_loop {
                    for w in component {
                        members.insert(dag.ids[w].clone());
                    }
                }
            }
        }
    }
    members.into_iter().collect()
}

/// Run every lint rule against `state`. `expected` gives the requested
/// roster/quest counts when known.
pub fn lint_run(state: &RunState, expected: Option<crate::pipeline::Counts>) -> Vec<LintFinding> {
    let mut findings = Vec::new();
    fn push(
        findings: &mut Vec<LintFinding>,
        artifact: &str,
        path: String,
        code: &str,
        severity: Severity,
        message: String,
    ) {
        findings.push(LintFinding {
            artifact: artifact.to_string(),
            path,
            code: code.to_string(),
            severity,
            message,
        });
    }

    let faction_names: BTreeSet<&str> = state
        .world
        .iter()
        .flat_map(|w| w.politics.iter().map(|f| f.name.as_str()))
        .collect();
    let npc_names: BTreeSet<&str> = state
        .npcs
        .iter()
        .flatten()
        .map(|n| n.name.as_str())
        .collect();
    let mut cast: BTreeSet<&str> = npc_names.clone();
    if let Some(player) = &state.player {
        cast.insert(player.name.as_str());
    }

    // World: surroundings/buildings must reference declared factions.
    if let Some(world) = &state.world {
        for (i, s) in world.surroundings.iter().enumerate() {
            for (j, f) in s.related_factions.iter().enumerate() {
                if !faction_names.contains(f.as_str()) {
                    push(
                        &mut findings,
                        "world",
                        format!("surroundings[{i}].related_factions[{j}]"),
                        codes::UNKNOWN_FACTION,
                        Severity::Warning,
                        format!("faction '{f}' is not declared in politics"),
                    );
                }
            }
        }
        for (i, b) in world.buildings.iter().enumerate() {
            if !faction_names.contains(b.controlled_by.as_str()) {
                push(
                    &mut findings,
                    "world",
                    format!("buildings[{i}].controlled_by"),
                    codes::UNKNOWN_FACTION,
                    Severity::Warning,
                    format!("faction '{}' is not declared in politics", b.controlled_by),
                );
            }
        }
    }

    // Roster: relation targets must exist; labels should be known.
    if let Some(npcs) = &state.npcs {
        for (i, npc) in npcs.iter().enumerate() {
            for (j, rel) in npc.relations.iter().enumerate() {
                if !npc_names.contains(rel.npc_name.as_str()) {
                    push(
                        &mut findings,
                        "npc_roster",
                        format!("[{i}].relations[{j}].npc_name"),
                        codes::DANGLING_NPC_REF,
                        Severity::Error,
                        format!("'{}' relates to unknown NPC '{}'", npc.name, rel.npc_name),
                    );
                }
                if !KNOWN_RELATION_LABELS.contains(&rel.relation_type.as_str()) {
                    push(
                        &mut findings,
                        "npc_roster",
                        format!("[{i}].relations[{j}].relation_type"),
                        codes::UNKNOWN_RELATION_LABEL,
                        Severity::Info,
                        format!(
                            "relation label '{}' is outside the known set",
                            rel.relation_type
                        ),
                    );
                }
            }
        }
        if let Some(expected) = expected {
            if npcs.len() != expected.npcs {
                push(
                    &mut findings,
                    "npc_roster",
                    String::new(),
                    codes::COUNT_MISMATCH,
                    Severity::Warning,
                    format!("expected {} NPCs, found {}", expected.npcs, npcs.len()),
                );
            }
        }
    }

    // Player: relationship targets must be roster NPCs; labels should be
    // known.
    if let Some(player) = &state.player {
        for (target, label) in &player.relationships {
            if !npc_names.contains(target.as_str()) {
                push(
                    &mut findings,
                    "player",
                    format!("relationships.{target}"),
                    codes::DANGLING_NPC_REF,
                    Severity::Error,
                    format!("player relates to unknown NPC '{target}'"),
                );
            }
            if !KNOWN_RELATION_LABELS.contains(&label.as_str()) {
                push(
                    &mut findings,
                    "player",
                    format!("relationships.{target}"),
                    codes::UNKNOWN_RELATION_LABEL,
                    Severity::Info,
                    format!("relation label '{label}' is outside the known set"),
                );
            }
        }
    }

    // Quests: givers, successors, cycles, counts.
    if let Some(quests) = &state.quests {
        let quest_ids: BTreeSet<&str> = quests.iter().map(|q| q.id.as_str()).collect();
        for (i, quest) in quests.iter().enumerate() {
            if !npc_names.contains(quest.quest_giver.as_str()) {
                push(
                    &mut findings,
                    "quest_set",
                    format!("[{i}].quest_giver"),
                    codes::DANGLING_NPC_REF,
                    Severity::Error,
                    format!(
                        "quest '{}' is given by unknown NPC '{}'",
                        quest.id, quest.quest_giver
                    ),
                );
            }
            check_successors(
                "quest_set",
                &format!("[{i}]"),
                quest,
                &quest_ids,
                &mut findings,
            );
        }
        if let Some(expected) = expected {
            if quests.len() != expected.quests {
                push(
                    &mut findings,
                    "quest_set",
                    String::new(),
                    codes::COUNT_MISMATCH,
                    Severity::Warning,
                    format!(
                        "expected {} quests, found {}",
                        expected.quests,
                        quests.len()
                    ),
                );
            }
        }

        for id in cycle_members(&build_quest_dag(state)) {
            push(
                &mut findings,
                "quest_set",
                format!("connections:{id}"),
                codes::QUEST_CYCLE,
                Severity::Error,
                format!("quest '{id}' participates in a progression cycle"),
            );
        }

        // Extended quests: id agreement with source, speakers, giver,
        // successors.
        for (source_id, ext) in &state.extended {
            let artifact = format!("extended_quest_{source_id}");
            if &ext.id != source_id {
                findings.push(LintFinding {
                    artifact: artifact.clone(),
                    path: "id".to_string(),
                    code: codes::ID_MISMATCH.to_string(),
                    severity: Severity::Error,
                    message: format!(
                        "extended quest id '{}' does not match source quest '{source_id}'",
                        ext.id
                    ),
                });
            }
            if !npc_names.contains(ext.quest_giver.as_str()) {
                findings.push(LintFinding {
                    artifact: artifact.clone(),
                    path: "quest_giver".to_string(),
                    code: codes::DANGLING_NPC_REF.to_string(),
                    severity: Severity::Error,
                    message: format!("quest giver '{}' is not in the roster", ext.quest_giver),
                });
            }
            for (j, turn) in ext.dialogue.iter().flatten().enumerate() {
                if !cast.contains(turn.speaker.as_str()) {
                    findings.push(LintFinding {
                        artifact: artifact.clone(),
                        path: format!("dialogue[{j}].speaker"),
                        code: codes::UNKNOWN_SPEAKER.to_string(),
                        severity: Severity::Warning,
                        message: format!(
                            "speaker '{}' is neither a roster NPC nor the player",
                            turn.speaker
                        ),
                    });
                }
            }
            check_successors(&artifact, "", ext, &quest_ids, &mut findings);
        }
    }

    findings.sort();
    findings
}

fn check_successors(
    artifact: &str,
    prefix: &str,
    quest: &crate::schema::QuestDocument,
    quest_ids: &BTreeSet<&str>,
    findings: &mut Vec<LintFinding>,
) {
    for (j, next) in quest
        .connections
        .iter()
        .flat_map(|c| c.next.iter())
        .enumerate()
    {
        let dangling = !quest_ids.contains(next.as_str());
        // Ill-formed ids get one finding, not two.
        if dangling && !is_quest_id(next) {
            findings.push(LintFinding {
                artifact: artifact.to_string(),
                path: format!("{prefix}.connections.next[{j}]"),
                code: codes::DANGLING_QUEST_REF.to_string(),
                severity: Severity::Error,
                message: format!("'{next}' is not a well-formed quest id"),
            });
        } else if dangling {
            findings.push(LintFinding {
                artifact: artifact.to_string(),
                path: format!("{prefix}.connections.next[{j}]"),
                code: codes::DANGLING_QUEST_REF.to_string(),
                severity: Severity::Error,
                message: format!("successor '{next}' is not in the quest set"),
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::Counts;
    use crate::sample;
    use crate::schema::{QuestConnection, RelationLink};

    #[test]
    fn clean_sample_state_lints_quiet() {
        let state = sample::run_state();
        let findings = lint_run(&state, Some(Counts::default()));
        assert!(findings.is_empty(), "unexpected findings: {findings:?}");
    }

    #[test]
    fn relation_graph_marks_phantoms() {
        let mut state = sample::run_state();
        state.npcs.as_mut().unwrap()[0]
            .relations
            .push(RelationLink {
                npc_name: "Ghost of Nobody".into(),
                relation_type: "Rivalry".into(),
            });
        let graph = build_relation_graph(&state);
        let phantoms: Vec<&str> = graph.phantoms().collect();
        assert_eq!(phantoms, vec!["Ghost of Nobody"]);
        let findings = lint_run(&state, None);
        assert!(findings
            .iter()
            .any(|f| f.code == codes::DANGLING_NPC_REF && f.artifact == "npc_roster"));
    }

    #[test]
    fn unknown_relation_label_is_info() {
        let mut state = sample::run_state();
        let roster = state.npcs.as_mut().unwrap();
        let other = roster[1].name.clone();
        roster[0].relations.push(RelationLink {
            npc_name: other,
            relation_type: "Frenemy".into(),
        });
        let findings = lint_run(&state, None);
        let hit = findings
            .iter()
            .find(|f| f.code == codes::UNKNOWN_RELATION_LABEL)
            .unwrap();
        assert_eq!(hit.severity, Severity::Info);
    }

    #[test]
    fn dangling_successor_and_bad_id_reported() {
        let mut state = sample::run_state();
        let quests = state.quests.as_mut().unwrap();
        quests[0].connections = Some(QuestConnection {
            next: vec!["Z9".into(), "not an id".into()],
            extra: Default::default(),
        });
        let findings = lint_run(&state, None);
        let dangling: Vec<_> = findings
            .iter()
            .filter(|f| f.code == codes::DANGLING_QUEST_REF)
            .collect();
        assert_eq!(dangling.len(), 2);
        assert!(dangling.iter().any(|f| f.message.contains("well-formed")));
    }

    #[test]
    fn two_node_cycle_detected() {
        let mut state = sample::run_state();
        state.extended.clear();
        let quests = state.quests.as_mut().unwrap();
        quests[1].connections = Some(QuestConnection {
            next: vec!["M1".into()],
            extra: Default::default(),
        });
        let findings = lint_run(&state, None);
        let cyc: Vec<_> = findings
            .iter()
            .filter(|f| f.code == codes::QUEST_CYCLE)
            .collect();
        assert_eq!(cyc.len(), 2);
        assert!(cyc.iter().any(|f| f.path.contains("M1")));
        assert!(cyc.iter().any(|f| f.path.contains("M2")));
    }

    #[test]
    fn self_loop_is_a_cycle() {
        let mut dag = QuestDag {
            ids: vec!["A1".into()],
            ..Default::default()
        };
        dag.edges.insert("A1".into(), vec!["A1".into()]);
        assert_eq!(cycle_members(&dag), vec!["A1".to_string()]);
    }

    #[test]
    fn acyclic_chain_has_no_cycle_members() {
        let state = sample::run_state();
        assert!(cycle_members(&build_quest_dag(&state)).is_empty());
    }

    #[test]
    fn extended_connections_override_campaign_edges() {
        let mut state = sample::run_state();
        // Campaign chain is acyclic, but the extended form of M2 loops back.
        state.extended.get_mut("M2").unwrap().connections = Some(QuestConnection {
            next: vec!["M1".into()],
            extra: Default::default(),
        });
        let findings = lint_run(&state, None);
        assert!(findings.iter().any(|f| f.code == codes::QUEST_CYCLE));
    }

    #[test]
    fn unknown_speaker_is_warning() {
        let mut state = sample::run_state();
        let ext = state.extended.get_mut("M1").unwrap();
        ext.dialogue.as_mut().unwrap()[0].speaker = "A Stranger".into();
        let findings = lint_run(&state, None);
        let hit = findings
            .iter()
            .find(|f| f.code == codes::UNKNOWN_SPEAKER)
            .unwrap();
        assert_eq!(hit.severity, Severity::Warning);
        assert_eq!(hit.artifact, "extended_quest_M1");
    }

    #[test]
    fn player_speaker_is_allowed() {
        let state = sample::run_state();
        // Sample M1 dialogue includes the player by name; no finding.
        assert!(lint_run(&state, None)
            .iter()
            .all(|f| f.code != codes::UNKNOWN_SPEAKER));
    }

    #[test]
    fn count_mismatch_when_expectations_given() {
        let state = sample::run_state();
        let findings = lint_run(
            &state,
            Some(Counts {
                npcs: 12,
                quests: 10,
            }),
        );
        let hit = findings
            .iter()
            .find(|f| f.code == codes::COUNT_MISMATCH)
            .unwrap();
        assert_eq!(hit.severity, Severity::Warning);
        assert_eq!(hit.artifact, "npc_roster");
    }

    #[test]
    fn unknown_faction_reference_is_warning() {
        let mut state = sample::run_state();
        state.world.as_mut().unwrap().buildings[0].controlled_by = "The Unseen Hand".into();
        let findings = lint_run(&state, None);
        let hit = findings
            .iter()
            .find(|f| f.code == codes::UNKNOWN_FACTION)
            .unwrap();
        assert_eq!(hit.severity, Severity::Warning);
    }

    #[test]
    fn findings_sorted_by_artifact_then_path() {
        let mut state = sample::run_state();
        state.world.as_mut().unwrap().buildings[0].controlled_by = "Nobody".into();
        state.npcs.as_mut().unwrap()[0]
            .relations
            .push(RelationLink {
                npc_name: "Missing".into(),
                relation_type: "Rivalry".into(),
            });
        let findings = lint_run(&state, None);
        let mut sorted = findings.clone();
        sorted.sort();
        assert_eq!(findings, sorted);
    }
}
