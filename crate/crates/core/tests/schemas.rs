//! Keeps the published JSON Schema files in step with what the engine
//! actually writes: every required key listed in a schema must be present in
//! the corresponding real artifact.

use std::path::Path;

use questline::pipeline::{execute_run, RunConfig};
use questline::provider::{FixtureEntry, FixtureScript, ScriptedProvider};
use questline::sample;
use questline::store::RunStore;

fn schema(name: &str) -> serde_json::Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("schemas")
        .join(name);
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap())
        .unwrap_or_else(|e| panic!("{name} is not valid JSON: {e}"))
}

fn required_keys(schema: &serde_json::Value) -> Vec<String> {
    schema["required"]
        .as_array()
        .map(|keys| {
            keys.iter()
                .map(|k| k.as_str().unwrap().to_string())
                .collect()
        })
        .unwrap_or_default()
}

fn assert_required_present(instance: &serde_json::Value, schema: &serde_json::Value, what: &str) {
    for key in required_keys(schema) {
        assert!(
            instance.get(&key).is_some(),
            "{what}: missing required key '{key}'"
        );
    }
}

#[test]
fn published_schemas_match_generated_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let store = RunStore::new(dir.path());
    let entries: Vec<FixtureEntry> = serde_json::from_value(sample::full_fixture()).unwrap();
    let provider = ScriptedProvider::new(FixtureScript { entries });
    execute_run(&RunConfig::new("schema-check"), &provider, &store).unwrap();

    let artifact = |name: &str| -> serde_json::Value {
        let path = dir.path().join("runs/schema-check/artifacts").join(name);
        serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
    };

    assert_required_present(
        &artifact("world.json"),
        &schema("world.schema.json"),
        "world",
    );

    let roster = artifact("npc_roster.json");
    let npc_schema = schema("npc_roster.schema.json");
    for (i, npc) in roster.as_array().unwrap().iter().enumerate() {
        assert_required_present(npc, &npc_schema["items"], &format!("npc[{i}]"));
    }

    assert_required_present(
        &artifact("player.json"),
        &schema("player.schema.json"),
        "player",
    );

    let quest_required = &schema("quest.schema.json")["definitions"]["quest"];
    for (i, quest) in artifact("quest_set.json")
        .as_array()
        .unwrap()
        .iter()
        .enumerate()
    {
        assert_required_present(quest, quest_required, &format!("quest[{i}]"));
    }
    assert_required_present(
        &artifact("extended_quest_M1.json"),
        quest_required,
        "extended M1",
    );

    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("runs/schema-check/manifest.json")).unwrap(),
    )
    .unwrap();
    let manifest_schema = schema("manifest.schema.json");
    assert_required_present(&manifest, &manifest_schema, "manifest");
    for (i, outcome) in manifest["outcomes"].as_array().unwrap().iter().enumerate() {
        assert_required_present(
            outcome,
            &manifest_schema["properties"]["outcomes"]["items"],
            &format!("outcome[{i}]"),
        );
    }
    let status = manifest["status"]["status"].as_str().unwrap();
    assert!(["complete", "complete_with_skips", "halted"].contains(&status));

    // The remaining schema files exist and parse.
    schema("quest_set.schema.json");
    schema("extended_quest.schema.json");
}
