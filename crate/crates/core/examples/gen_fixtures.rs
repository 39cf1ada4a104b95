//! Regenerates the checked-in fixture files under `fixtures/` from the
//! deterministic sample corpus, so they stay derivable from code.
//!
//! Run with: cargo run -p questline --example gen_fixtures

use std::fs;
use std::path::Path;

fn write_json(path: &Path, value: &serde_json::Value) {
    let text = serde_json::to_string_pretty(value).expect("serializes") + "\n";
    fs::write(path, text).expect("fixture written");
    println!("wrote {}", path.display());
}

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    fs::create_dir_all(&dir).expect("fixtures dir");

    write_json(
        &dir.join("full_run.json"),
        &questline::sample::full_fixture(),
    );
    write_json(
        &dir.join("halt_world.json"),
        &questline::sample::halt_world_fixture(),
    );
    write_json(
        &dir.join("broken_extended.json"),
        &questline::sample::broken_extended_fixture(2),
    );

    // Each published per-criterion cell expanded into five integer Likert
    // scores whose mean equals the cell, one evaluator per score.
    let published: [(&str, [f64; 5]); 5] = [
        ("World", [5.00, 4.20, 4.40, 4.60, 4.80]),
        ("NPCs", [5.00, 4.20, 3.60, 4.60, 4.00]),
        ("Player Character", [4.80, 3.80, 4.00, 4.60, 3.80]),
        ("Quests", [4.40, 4.40, 4.40, 4.20, 3.40]),
        ("Extended Quests", [3.60, 4.20, 4.20, 4.00, 4.60]),
    ];
    let criteria = [
        "StructuralCompleteness",
        "InternalConsistency",
        "NarrativeCoherence",
        "Diversity",
        "Actionability",
    ];
    let mut csv = String::from("evaluator,run,category,artifact,criterion,score,note\n");
    for (category, means) in published {
        for (ci, mean) in means.iter().enumerate() {
            let total = (mean * 5.0).round() as i64;
            let base = total / 5;
            let extra = (total % 5) as usize;
            for k in 0..5usize {
                let score = base + if k < extra { 1 } else { 0 };
                csv.push_str(&format!(
                    "e{},r1,{category},{category}-{ci},{},{score},\n",
                    k + 1,
                    criteria[ci]
                ));
            }
        }
    }
    let path = dir.join("table1_means.csv");
    fs::write(&path, csv).expect("csv written");
    println!("wrote {}", path.display());
}
