//! Five-stage orchestration with dependency conditioning and failure policy.
//!
//! Stages run strictly in order: world, NPC roster, player, quest set, then
//! one extended-quest invocation per campaign quest. A content failure (no
//! extractable JSON, or schema-invalid JSON) at any foundational stage —
//! world, roster, player, and by this engine's reading the quest set — halts
//! the run after bounded retries. Extended-quest failures never halt: the
//! quest is marked skipped and its raw text kept for inspection.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompts::{self, PromptError, SubsetPolicy};
use crate::provider::{
    ChatProvider, ChatRequest, ProviderError, DEFAULT_MAX_OUTPUT_TOKENS, DEFAULT_MODEL,
    DEFAULT_TEMPERATURE,
};
use crate::schema::{
    canonical_serialize_value, validate::codes, ArtifactDocument, NpcDocument, PlayerDocument,
    QuestDocument, Severity, StageKind, ValidationReport, WorldDocument,
};
use crate::store::{RunStore, StoreError};

/// How many artifacts the roster and quest-set stages are asked to produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub npcs: usize,
    pub quests: usize,
}

impl Default for Counts {
    fn default() -> Self {
        Counts {
            npcs: 10,
            quests: 10,
        }
    }
}

/// Configuration of one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub run_id: String,
    pub counts: Counts,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub model_name: String,
    pub subset_policy: SubsetPolicy,
    pub user_intent: Option<String>,
    pub extended_parallelism: usize,
    pub retries_per_stage: u32,
    /// Escalate roster/quest-set count mismatches from warning to error.
    pub strict_counts: bool,
}

impl RunConfig {
    pub fn new(run_id: impl Into<String>) -> Self {
        RunConfig {
            run_id: run_id.into(),
            counts: Counts::default(),
            temperature: DEFAULT_TEMPERATURE,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            model_name: DEFAULT_MODEL.to_string(),
            subset_policy: SubsetPolicy::All,
            user_intent: None,
            extended_parallelism: 1,
            retries_per_stage: 1,
            strict_counts: false,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |msg: &str| Err(PipelineError::Config(msg.to_string()));
        if self.run_id.is_empty() {
            return fail("run_id must be non-empty");
        }
        if self.counts.npcs < 1 || self.counts.quests < 1 {
            return fail("counts must be >= 1");
        }
        if self.extended_parallelism < 1 {
            return fail("extended_parallelism must be >= 1");
        }
        if self.temperature < 0.0 {
            return fail("temperature must be >= 0");
        }
        if self.max_output_tokens < 1 {
            return fail("max_output_tokens must be >= 1");
        }
        Ok(())
    }
}

/// A unique run identifier: UTC timestamp plus a short random suffix.
pub fn generate_run_id() -> String {
    use rand::Rng;
    let suffix: String = rand::thread_rng()
        .sample_iter(rand::distributions::Alphanumeric)
        .take(6)
        .map(char::from)
        .collect();
    format!(
        "{}-{}",
        Utc::now().format("%Y%m%dT%H%M%S"),
        suffix.to_lowercase()
    )
}

/// The accumulating bundle of validated artifacts; the only carrier of
/// inter-stage context.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunState {
    pub world: Option<WorldDocument>,
    pub npcs: Option<Vec<NpcDocument>>,
    pub player: Option<PlayerDocument>,
    pub quests: Option<Vec<QuestDocument>>,
    /// Source quest id -> accepted extended quest.
    pub extended: BTreeMap<String, QuestDocument>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disposition {
    Accepted,
    HaltedPipeline,
    SkippedPreservedRaw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "result", content = "error")]
pub enum ExtractionOutcome {
    Success,
    Failed(String),
}

/// Per-invocation record: what came back, how it was judged, what happened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub stage: StageKind,
    pub quest_id: Option<String>,
    pub attempt_count: u32,
    /// Raw text of the final attempt; every attempt's text is persisted
    /// before extraction or validation runs.
    pub raw_text: String,
    pub extraction: ExtractionOutcome,
    pub validation: Option<ValidationReport>,
    pub disposition: Disposition,
}

/// One extended-quest result: the outcome plus, when accepted, the artifact
/// and its persisted path.
pub type QuestExpansion = (StageOutcome, Option<(ArtifactDocument, String)>);

/// Compact per-outcome entry embedded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSummary {
    pub stage: StageKind,
    pub quest_id: Option<String>,
    pub attempt_count: u32,
    pub disposition: Disposition,
    pub extraction: ExtractionOutcome,
    pub error_codes: Vec<String>,
}

impl From<&StageOutcome> for OutcomeSummary {
    fn from(outcome: &StageOutcome) -> Self {
        OutcomeSummary {
            stage: outcome.stage,
            quest_id: outcome.quest_id.clone(),
            attempt_count: outcome.attempt_count,
            disposition: outcome.disposition,
            extraction: outcome.extraction.clone(),
            error_codes: outcome
                .validation
                .iter()
                .flat_map(|r| r.errors().map(|f| f.code.clone()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "stage")]
pub enum RunStatus {
    Complete,
    CompleteWithSkips,
    Halted(StageKind),
}

impl RunStatus {
    /// Process exit code contract: 0 success, 2 halted, 3 completed with
    /// skipped extended quests.
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Complete => 0,
            RunStatus::CompleteWithSkips => 3,
            RunStatus::Halted(_) => 2,
        }
    }
}

/// Traceability record of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config: RunConfig,
    pub status: RunStatus,
    pub outcomes: Vec<OutcomeSummary>,
    /// file key (stage[_qid]) -> structured artifact path.
    pub artifact_paths: BTreeMap<String, String>,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub total_invocations: usize,
}

impl RunManifest {
    pub fn empty(run_id: &str) -> Self {
        let now = Utc::now();
        RunManifest {
            run_id: run_id.to_string(),
            config: RunConfig::new(run_id),
            status: RunStatus::Complete,
            outcomes: Vec::new(),
            artifact_paths: BTreeMap::new(),
            started_at: now,
            finished_at: now,
            total_invocations: 0,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("pipeline halted at {stage} stage: {cause}")]
    Halted {
        stage: StageKind,
        cause: String,
        manifest: Box<RunManifest>,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

struct StageContext<'a> {
    config: &'a RunConfig,
    provider: &'a dyn ChatProvider,
    store: &'a RunStore,
    invocations: &'a AtomicUsize,
}

/// Execute a complete run: all five stages against `provider`, artifacts and
/// manifest persisted through `store`.
pub fn execute_run(
    config: &RunConfig,
    provider: &dyn ChatProvider,
    store: &RunStore,
) -> Result<RunManifest, PipelineError> {
    config.validate()?;
    store.init_run(&config.run_id)?;
    let started_at = Utc::now();
    let invocations = AtomicUsize::new(0);
    let ctx = StageContext {
        config,
        provider,
        store,
        invocations: &invocations,
    };

    let mut state = RunState::default();
    let mut summaries = Vec::new();
    let mut artifact_paths = BTreeMap::new();

    for stage in [
        StageKind::World,
        StageKind::NpcRoster,
        StageKind::Player,
        StageKind::QuestSet,
    ] {
        let (outcome, path) = match run_stage_attempts(&ctx, stage, &state, None) {
            Ok(result) => result,
            Err(e) => {
                let manifest = finish_manifest(
                    config,
                    RunStatus::Halted(stage),
                    summaries,
                    artifact_paths,
                    started_at,
                    invocations.load(Ordering::SeqCst),
                );
                let _ = store.persist_manifest(&manifest);
                return Err(PipelineError::Halted {
                    stage,
                    cause: e.to_string(),
                    manifest: Box::new(manifest),
                });
            }
        };
        summaries.push(OutcomeSummary::from(&outcome));
        if let Some((doc, path)) = path {
            artifact_paths.insert(key_of(stage, None), path);
            apply_artifact(&mut state, doc);
        }
        if outcome.disposition != Disposition::Accepted {
            let cause = failure_cause(&outcome);
            let manifest = finish_manifest(
                config,
                RunStatus::Halted(stage),
                summaries,
                artifact_paths,
                started_at,
                invocations.load(Ordering::SeqCst),
            );
            store.persist_manifest(&manifest)?;
            return Err(PipelineError::Halted {
                stage,
                cause,
                manifest: Box::new(manifest),
            });
        }
    }

    let extended = expand_quests_with(&ctx, &mut state)?;
    let mut skipped = false;
    for (outcome, path) in extended {
        if outcome.disposition == Disposition::SkippedPreservedRaw {
            skipped = true;
        }
        if let Some((_, path)) = &path {
            artifact_paths.insert(
                key_of(outcome.stage, outcome.quest_id.as_deref()),
                path.clone(),
            );
        }
        summaries.push(OutcomeSummary::from(&outcome));
    }

    let status = if skipped {
        RunStatus::CompleteWithSkips
    } else {
        RunStatus::Complete
    };
    let manifest = finish_manifest(
        config,
        status,
        summaries,
        artifact_paths,
        started_at,
        invocations.load(Ordering::SeqCst),
    );
    store.persist_manifest(&manifest)?;
    Ok(manifest)
}

/// Execute a single non-extended stage against `state`, updating it on
/// acceptance. Provider and precondition failures surface as errors; content
/// failures are reported through the outcome's disposition.
pub fn execute_stage(
    stage: StageKind,
    state: &mut RunState,
    config: &RunConfig,
    provider: &dyn ChatProvider,
    store: &RunStore,
) -> Result<StageOutcome, PipelineError> {
    assert!(
        stage != StageKind::ExtendedQuest,
        "use expand_quests for the extended stage"
    );
    let invocations = AtomicUsize::new(0);
    let ctx = StageContext {
        config,
        provider,
        store,
        invocations: &invocations,
    };
    let (outcome, accepted) = run_stage_attempts(&ctx, stage, state, None)?;
    if let Some((doc, _)) = accepted {
        apply_artifact(state, doc);
    }
    Ok(outcome)
}

/// Expand every campaign quest into its extended form, one invocation per
/// quest, in quest-set order (concurrently when `extended_parallelism` > 1).
/// Per-quest failures become skipped outcomes and never halt the run.
pub fn expand_quests(
    state: &mut RunState,
    config: &RunConfig,
    provider: &dyn ChatProvider,
    store: &RunStore,
) -> Result<Vec<QuestExpansion>, PipelineError> {
    let invocations = AtomicUsize::new(0);
    let ctx = StageContext {
        config,
        provider,
        store,
        invocations: &invocations,
    };
    expand_quests_with(&ctx, state)
}

fn expand_quests_with(
    ctx: &StageContext<'_>,
    state: &mut RunState,
) -> Result<Vec<QuestExpansion>, PipelineError> {
    let quests = state.quests.clone().ok_or(PromptError::MissingDependency {
        stage: StageKind::ExtendedQuest,
        missing: StageKind::QuestSet,
    })?;

    let workers = ctx.config.extended_parallelism.min(quests.len().max(1));
    let results: Vec<QuestExpansion> = if workers <= 1 {
        let mut results = Vec::with_capacity(quests.len());
        for quest in &quests {
            results.push(expand_one(ctx, state, quest));
        }
        results
    } else {
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<_>>> = quests.iter().map(|_| Mutex::new(None)).collect();
        let state_ref = &*state;
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(quest) = quests.get(i) else { break };
                    *slots[i].lock().unwrap() = Some(expand_one(ctx, state_ref, quest));
                });
            }
        });
        slots
            .into_iter()
            .map(|slot| slot.into_inner().unwrap().expect("every quest processed"))
            .collect()
    };

    for (_, accepted) in &results {
        if let Some((ArtifactDocument::ExtendedQuest(doc), _)) = accepted {
            state.extended.insert(doc.id.clone(), doc.clone());
        }
    }
    Ok(results)
}

fn expand_one(
    ctx: &StageContext<'_>,
    state: &RunState,
    quest: &QuestDocument,
) -> (StageOutcome, Option<(ArtifactDocument, String)>) {
    match run_stage_attempts(ctx, StageKind::ExtendedQuest, state, Some(quest)) {
        Ok(result) => result,
        // Provider/store trouble for one quest skips it rather than halting.
        Err(e) => (
            StageOutcome {
                stage: StageKind::ExtendedQuest,
                quest_id: Some(quest.id.clone()),
                attempt_count: 0,
                raw_text: String::new(),
                extraction: ExtractionOutcome::Failed(e.to_string()),
                validation: None,
                disposition: Disposition::SkippedPreservedRaw,
            },
            None,
        ),
    }
}

fn apply_artifact(state: &mut RunState, doc: ArtifactDocument) {
    match doc {
        ArtifactDocument::World(d) => state.world = Some(d),
        ArtifactDocument::NpcRoster(d) => state.npcs = Some(d),
        ArtifactDocument::Player(d) => state.player = Some(d),
        ArtifactDocument::QuestSet(d) => state.quests = Some(d),
        ArtifactDocument::ExtendedQuest(d) => {
            state.extended.insert(d.id.clone(), d);
        }
    }
}

fn key_of(stage: StageKind, quest_id: Option<&str>) -> String {
    match quest_id {
        Some(qid) => format!("{}_{qid}", stage.slug()),
        None => stage.slug().to_string(),
    }
}

fn failure_cause(outcome: &StageOutcome) -> String {
    if let ExtractionOutcome::Failed(e) = &outcome.extraction {
        return e.clone();
    }
    outcome
        .validation
        .as_ref()
        .and_then(|r| r.errors().next())
        .map(|f| format!("{} at {}", f.code, f.path))
        .unwrap_or_else(|| "content failure".to_string())
}

fn finish_manifest(
    config: &RunConfig,
    status: RunStatus,
    outcomes: Vec<OutcomeSummary>,
    artifact_paths: BTreeMap<String, String>,
    started_at: DateTime<Utc>,
    total_invocations: usize,
) -> RunManifest {
    RunManifest {
        run_id: config.run_id.clone(),
        config: config.clone(),
        status,
        outcomes,
        artifact_paths,
        started_at,
        finished_at: Utc::now(),
        total_invocations,
    }
}

/// The attempt loop shared by all stages: build context, render, invoke,
/// persist raw, extract, validate, persist structured.
fn run_stage_attempts(
    ctx: &StageContext<'_>,
    stage: StageKind,
    state: &RunState,
    target_quest: Option<&QuestDocument>,
) -> Result<(StageOutcome, Option<(ArtifactDocument, String)>), PipelineError> {
    let config = ctx.config;
    let quest_id = target_quest.map(|q| q.id.clone());
    let template = prompts::default_template(stage);

    let mut bundle = prompts::build_context(
        stage,
        state,
        &config.subset_policy,
        config.user_intent.as_deref(),
    )?;
    if let Some(quest) = target_quest {
        let value = serde_json::to_value(quest).expect("quest serializes");
        bundle.target_quest = Some(canonical_serialize_value(&value));
    }
    // Templates always bind {{user_intent}}; absent intent renders empty.
    if bundle.user_intent.is_none() {
        bundle.user_intent = Some(String::new());
    }
    let rendered = prompts::render(&template, &bundle)?;

    let mut user_message = rendered.user_message;
    match stage {
        StageKind::NpcRoster => {
            user_message.push_str(&format!(
                "\n\nProduce exactly {} characters.",
                config.counts.npcs
            ));
        }
        StageKind::QuestSet => {
            user_message.push_str(&format!(
                "\n\nProduce exactly {} quests.",
                config.counts.quests
            ));
        }
        _ => {}
    }

    let request = ChatRequest {
        system_message: rendered.system_message,
        user_message,
        temperature: config.temperature,
        max_output_tokens: config.max_output_tokens,
        model_name: config.model_name.clone(),
        stage: Some(stage),
    };

    let max_attempts = config.retries_per_stage + 1;
    let mut last_raw = String::new();
    let mut last_extraction = ExtractionOutcome::Failed("no attempt made".to_string());
    let mut last_validation: Option<ValidationReport> = None;

    for attempt in 1..=max_attempts {
        let response = ctx.provider.complete(&request)?;
        ctx.invocations.fetch_add(1, Ordering::SeqCst);
        // Raw before structured: the verbatim text is on disk before any
        // parsing happens.
        ctx.store.persist_raw(
            &config.run_id,
            stage,
            quest_id.as_deref(),
            attempt,
            &response.text,
        )?;
        last_raw = response.text.clone();

        let candidate = match crate::schema::extract_json(&response.text) {
            Ok(text) => text,
            Err(e) => {
                last_extraction = ExtractionOutcome::Failed(e.to_string());
                last_validation = None;
                continue;
            }
        };
        let value: serde_json::Value = match serde_json::from_str(&candidate) {
            Ok(v) => v,
            Err(e) => {
                last_extraction = ExtractionOutcome::Failed(format!("json parse: {e}"));
                last_validation = None;
                continue;
            }
        };
        last_extraction = ExtractionOutcome::Success;

        let mut report = crate::schema::validate(stage, &value);
        check_counts(ctx.config, stage, &value, &mut report);
        if let Some(quest) = target_quest {
            check_id_preserved(quest, &value, &mut report);
        }

        if !report.valid() {
            last_validation = Some(report);
            continue;
        }

        let (report, doc) = ArtifactDocument::from_value(stage, &value);
        match doc {
            Ok(doc) => {
                let record =
                    ctx.store
                        .persist_structured(&config.run_id, quest_id.as_deref(), &doc)?;
                let outcome = StageOutcome {
                    stage,
                    quest_id,
                    attempt_count: attempt,
                    raw_text: last_raw,
                    extraction: ExtractionOutcome::Success,
                    validation: Some(report),
                    disposition: Disposition::Accepted,
                };
                let path = record.path.display().to_string();
                return Ok((outcome, Some((doc, path))));
            }
            Err(e) => {
                let mut report = report;
                report.push(
                    Severity::Error,
                    codes::WRONG_TYPE,
                    String::new(),
                    e.to_string(),
                );
                last_validation = Some(report);
                continue;
            }
        }
    }

    let disposition = if stage == StageKind::ExtendedQuest {
        Disposition::SkippedPreservedRaw
    } else {
        Disposition::HaltedPipeline
    };
    Ok((
        StageOutcome {
            stage,
            quest_id,
            attempt_count: max_attempts,
            raw_text: last_raw,
            extraction: last_extraction,
            validation: last_validation,
            disposition,
        },
        None,
    ))
}

/// Roster/quest-set length vs the requested counts: warning by default,
/// error under `strict_counts`.
fn check_counts(
    config: &RunConfig,
    stage: StageKind,
    value: &serde_json::Value,
    report: &mut ValidationReport,
) {
    let expected = match stage {
        StageKind::NpcRoster => config.counts.npcs,
        StageKind::QuestSet => config.counts.quests,
        _ => return,
    };
    let Some(actual) = value.as_array().map(Vec::len) else {
        return;
    };
    if actual != expected {
        let severity = if config.strict_counts {
            Severity::Error
        } else {
            Severity::Warning
        };
        report.push(
            severity,
            codes::COUNT_MISMATCH,
            String::new(),
            format!("requested {expected} entries, model produced {actual}"),
        );
    }
}

/// Extended documents must keep the id of the quest they expand.
fn check_id_preserved(
    source: &QuestDocument,
    value: &serde_json::Value,
    report: &mut ValidationReport,
) {
    if let Some(id) = value.get("id").and_then(|v| v.as_str()) {
        if id != source.id {
            report.push(
                Severity::Error,
                "IdMismatch",
                "id".to_string(),
                format!(
                    "extended quest id '{id}' does not match source quest '{}'",
                    source.id
                ),
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::{FixtureEntry, FixtureScript, ScriptedProvider};
    use crate::sample;

    fn scripted(fixture: serde_json::Value) -> ScriptedProvider {
        let entries: Vec<FixtureEntry> = serde_json::from_value(fixture).unwrap();
        ScriptedProvider::new(FixtureScript { entries })
    }

    fn test_store() -> (tempfile::TempDir, RunStore) {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::new(dir.path());
        (dir, store)
    }

    #[test]
    fn full_fixture_run_accepts_everything() {
        let (_dir, store) = test_store();
        let provider = scripted(sample::full_fixture());
        let config = RunConfig::new("full");
        let manifest = execute_run(&config, &provider, &store).unwrap();

        assert_eq!(manifest.status, RunStatus::Complete);
        assert_eq!(manifest.total_invocations, 14);
        assert_eq!(manifest.outcomes.len(), 14);
        assert!(manifest
            .outcomes
            .iter()
            .all(|o| o.disposition == Disposition::Accepted));

        let (state, _) = store.load_run("full").unwrap();
        assert!(state.world.is_some());
        assert_eq!(state.npcs.unwrap().len(), 10);
        assert!(state.player.is_some());
        assert_eq!(state.quests.unwrap().len(), 10);
        assert_eq!(state.extended.len(), 10);
    }

    #[test]
    fn malformed_world_halts_with_raw_preserved() {
        let (_dir, store) = test_store();
        let provider = scripted(sample::halt_world_fixture());
        let mut config = RunConfig::new("halt");
        config.retries_per_stage = 0;
        let err = execute_run(&config, &provider, &store).unwrap_err();

        match err {
            PipelineError::Halted {
                stage, manifest, ..
            } => {
                assert_eq!(stage, StageKind::World);
                assert_eq!(manifest.status, RunStatus::Halted(StageKind::World));
                assert_eq!(manifest.status.exit_code(), 2);
            }
            other => panic!("expected halt, got {other}"),
        }
        // Raw preserved, zero structured artifacts downstream.
        assert_eq!(store.raw_keys("halt").unwrap().len(), 1);
        assert!(store.artifact_keys("halt").unwrap().is_empty());
    }

    #[test]
    fn broken_extended_quest_is_skipped_not_fatal() {
        let (_dir, store) = test_store();
        let provider = scripted(sample::broken_extended_fixture(2));
        let mut config = RunConfig::new("skip");
        config.retries_per_stage = 0;
        let manifest = execute_run(&config, &provider, &store).unwrap();

        assert_eq!(manifest.status, RunStatus::CompleteWithSkips);
        assert_eq!(manifest.status.exit_code(), 3);
        let skipped: Vec<_> = manifest
            .outcomes
            .iter()
            .filter(|o| o.disposition == Disposition::SkippedPreservedRaw)
            .collect();
        assert_eq!(skipped.len(), 1);
        assert_eq!(skipped[0].quest_id.as_deref(), Some("M3"));

        let (state, _) = store.load_run("skip").unwrap();
        assert_eq!(state.extended.len(), 9);
        assert!(!state.extended.contains_key("M3"));
        // The failed quest still has its raw text on disk.
        assert!(store
            .raw_keys("skip")
            .unwrap()
            .contains("extended_quest_M3"));
    }

    #[test]
    fn retry_consumes_an_extra_scripted_entry() {
        let (_dir, store) = test_store();
        let mut fixture = sample::full_fixture();
        // First world reply bad, second good: default retries=1 recovers.
        let good = fixture[0].clone();
        fixture[0] = serde_json::json!({"stage": "world", "text": "nope"});
        fixture.as_array_mut().unwrap().insert(1, good);
        let provider = scripted(fixture);
        let config = RunConfig::new("retry");
        let manifest = execute_run(&config, &provider, &store).unwrap();
        assert_eq!(manifest.status, RunStatus::Complete);
        assert_eq!(manifest.total_invocations, 15);
        assert_eq!(manifest.outcomes[0].attempt_count, 2);
    }

    #[test]
    fn id_mismatch_in_extended_is_skipped() {
        let (_dir, store) = test_store();
        let mut fixture = sample::full_fixture();
        let quests = sample::quests();
        let mut wrong = sample::extended_quest(&quests[0]);
        wrong.id = "Q9".into();
        let text = crate::schema::canonical_serialize(&ArtifactDocument::ExtendedQuest(wrong));
        fixture[4] = serde_json::json!({"stage": "extended_quest", "text": text});
        let provider = scripted(fixture);
        let mut config = RunConfig::new("mismatch");
        config.retries_per_stage = 0;
        let manifest = execute_run(&config, &provider, &store).unwrap();

        let m1 = manifest
            .outcomes
            .iter()
            .find(|o| o.quest_id.as_deref() == Some("M1"))
            .unwrap();
        assert_eq!(m1.disposition, Disposition::SkippedPreservedRaw);
        assert!(m1.error_codes.iter().any(|c| c == "IdMismatch"));
    }

    #[test]
    fn quest_set_failure_halts_like_foundational_stages() {
        let (_dir, store) = test_store();
        let mut fixture = sample::full_fixture();
        fixture[3] = serde_json::json!({"stage": "quest_set", "text": "not a quest set"});
        let provider = scripted(fixture);
        let mut config = RunConfig::new("qhalt");
        config.retries_per_stage = 0;
        let err = execute_run(&config, &provider, &store).unwrap_err();
        match err {
            PipelineError::Halted { stage, .. } => assert_eq!(stage, StageKind::QuestSet),
            other => panic!("expected halt, got {other}"),
        }
    }

    #[test]
    fn strict_counts_escalates_mismatch() {
        let (_dir, store) = test_store();
        let provider = scripted(sample::full_fixture());
        let mut config = RunConfig::new("strict");
        config.counts.npcs = 7; // fixture has 10
        config.retries_per_stage = 0;
        config.strict_counts = true;
        let err = execute_run(&config, &provider, &store).unwrap_err();
        assert!(matches!(
            err,
            PipelineError::Halted {
                stage: StageKind::NpcRoster,
                ..
            }
        ));
    }

    #[test]
    fn lenient_counts_warn_only() {
        let (_dir, store) = test_store();
        let provider = scripted(sample::full_fixture());
        let mut config = RunConfig::new("lenient");
        config.counts.npcs = 7;
        let manifest = execute_run(&config, &provider, &store).unwrap();
        assert_eq!(manifest.status, RunStatus::Complete);
    }

    #[test]
    fn invalid_config_rejected_before_side_effects() {
        let (_dir, store) = test_store();
        let provider = scripted(sample::full_fixture());
        let mut config = RunConfig::new("bad");
        config.counts.npcs = 0;
        assert!(matches!(
            execute_run(&config, &provider, &store),
            Err(PipelineError::Config(_))
        ));
        assert!(!store.run_dir("bad").join("manifest.json").exists());
    }

    #[test]
    fn execute_stage_respects_dependency_order() {
        let (_dir, store) = test_store();
        store.init_run("dep").unwrap();
        let provider = scripted(serde_json::json!([]));
        let config = RunConfig::new("dep");
        let mut state = RunState::default();
        let err =
            execute_stage(StageKind::Player, &mut state, &config, &provider, &store).unwrap_err();
        assert!(matches!(
            err,
            PipelineError::Prompt(PromptError::MissingDependency { .. })
        ));
    }

    #[test]
    fn execute_stage_world_accepts_and_updates_state() {
        let (_dir, store) = test_store();
        store.init_run("w").unwrap();
        let text = crate::schema::canonical_serialize(&ArtifactDocument::World(sample::world()));
        let provider = scripted(serde_json::json!([{ "text": text }]));
        let config = RunConfig::new("w");
        let mut state = RunState::default();
        let outcome =
            execute_stage(StageKind::World, &mut state, &config, &provider, &store).unwrap();
        assert_eq!(outcome.disposition, Disposition::Accepted);
        assert!(state.world.is_some());
    }

    /// Serves foundational stages from a script and extended requests by the
    /// target quest id parsed from the prompt, so any thread interleaving
    /// gets the right reply.
    struct PerQuestProvider {
        foundational: ScriptedProvider,
        by_id: BTreeMap<String, String>,
    }

    impl ChatProvider for PerQuestProvider {
        fn complete(
            &self,
            request: &ChatRequest,
        ) -> Result<crate::provider::ChatResponse, ProviderError> {
            if request.stage != Some(StageKind::ExtendedQuest) {
                return self.foundational.complete(request);
            }
            // The first "id" after the target-quest heading belongs to the
            // quest being expanded.
            let section = request
                .user_message
                .split("Target quest to expand:")
                .nth(1)
                .unwrap();
            let marker = "\"id\": \"";
            let start = section.find(marker).unwrap() + marker.len();
            let id = &section[start..];
            let id = &id[..id.find('"').unwrap()];
            Ok(crate::provider::ChatResponse {
                text: self.by_id[id].clone(),
                usage: None,
                provider_meta: BTreeMap::new(),
            })
        }
    }

    #[test]
    fn parallel_expansion_matches_sequential_results() {
        let (_dir, store) = test_store();
        let mut fixture = sample::full_fixture();
        fixture.as_array_mut().unwrap().truncate(4);
        let by_id: BTreeMap<String, String> = sample::quests()
            .iter()
            .map(|q| {
                let ext = ArtifactDocument::ExtendedQuest(sample::extended_quest(q));
                (q.id.clone(), crate::schema::canonical_serialize(&ext))
            })
            .collect();
        let provider = PerQuestProvider {
            foundational: scripted(fixture),
            by_id,
        };
        let mut config = RunConfig::new("par");
        config.extended_parallelism = 4;
        let manifest = execute_run(&config, &provider, &store).unwrap();
        assert_eq!(manifest.status, RunStatus::Complete);
        assert_eq!(manifest.total_invocations, 14);
        let (state, _) = store.load_run("par").unwrap();
        assert_eq!(state.extended.len(), 10);

        // Same inputs run sequentially produce the same accepted artifacts.
        let provider_seq = scripted(sample::full_fixture());
        let config_seq = RunConfig::new("seq");
        execute_run(&config_seq, &provider_seq, &store).unwrap();
        let (state_seq, _) = store.load_run("seq").unwrap();
        assert_eq!(state.extended, state_seq.extended);
    }

    #[test]
    fn no_cross_run_leakage() {
        let (_dir, store) = test_store();
        let p1 = scripted(sample::full_fixture());
        let p2 = scripted(sample::broken_extended_fixture(0));
        let mut c1 = RunConfig::new("run-a");
        c1.retries_per_stage = 0;
        let mut c2 = RunConfig::new("run-b");
        c2.retries_per_stage = 0;
        execute_run(&c1, &p1, &store).unwrap();
        execute_run(&c2, &p2, &store).unwrap();
        let (a, _) = store.load_run("run-a").unwrap();
        let (b, _) = store.load_run("run-b").unwrap();
        assert_eq!(a.extended.len(), 10);
        assert_eq!(b.extended.len(), 9);
    }
}
