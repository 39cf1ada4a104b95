//! Likert score ingestion and category-level aggregation.
//!
//! Scores arrive per evaluator, per artifact, per criterion (five-point
//! scale). Aggregation pools all scores of a (category, criterion) cell and
//! takes the arithmetic mean; a category's overall average is the unweighted
//! mean of its five criterion means. Rounding to two decimals (half-up)
//! happens only at presentation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Content categories, in the fixed report row order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    World,
    Npcs,
    PlayerCharacter,
    Quests,
    ExtendedQuests,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::World,
        Category::Npcs,
        Category::PlayerCharacter,
        Category::Quests,
        Category::ExtendedQuests,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Category::World => "World",
            Category::Npcs => "NPCs",
            Category::PlayerCharacter => "Player Character",
            Category::Quests => "Quests",
            Category::ExtendedQuests => "Extended Quests",
        }
    }

    pub fn parse(s: &str) -> Option<Category> {
        match s.trim() {
            "World" | "world" => Some(Category::World),
            "NPCs" | "Npcs" | "npcs" => Some(Category::Npcs),
            "PlayerCharacter" | "Player Character" | "player_character" => {
                Some(Category::PlayerCharacter)
            }
            "Quests" | "quests" => Some(Category::Quests),
            "ExtendedQuests" | "Extended Quests" | "extended_quests" => {
                Some(Category::ExtendedQuests)
            }
            _ => None,
        }
    }
}

/// Evaluation criteria, in the fixed report column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Criterion {
    StructuralCompleteness,
    InternalConsistency,
    NarrativeCoherence,
    Diversity,
    Actionability,
}

impl Criterion {
    pub const ALL: [Criterion; 5] = [
        Criterion::StructuralCompleteness,
        Criterion::InternalConsistency,
        Criterion::NarrativeCoherence,
        Criterion::Diversity,
        Criterion::Actionability,
    ];

    pub fn short_label(self) -> &'static str {
        match self {
            Criterion::StructuralCompleteness => "Struct.",
            Criterion::InternalConsistency => "Consist.",
            Criterion::NarrativeCoherence => "Coher.",
            Criterion::Diversity => "Divers.",
            Criterion::Actionability => "Action.",
        }
    }

    pub fn parse(s: &str) -> Option<Criterion> {
        match s.trim() {
            "StructuralCompleteness" | "structural_completeness" => {
                Some(Criterion::StructuralCompleteness)
            }
            "InternalConsistency" | "internal_consistency" => Some(Criterion::InternalConsistency),
            "NarrativeCoherence" | "narrative_coherence" => Some(Criterion::NarrativeCoherence),
            "Diversity" | "diversity" => Some(Criterion::Diversity),
            "Actionability" | "actionability" => Some(Criterion::Actionability),
            _ => None,
        }
    }
}

/// One evaluator's score for one artifact under one criterion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub evaluator_id: String,
    pub run_id: String,
    pub category: Category,
    pub artifact_ref: String,
    pub criterion: Criterion,
    pub score: u8,
    pub note: Option<String>,
}

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("row {row}: score {score} outside the 1..=5 Likert range")]
    Range { row: usize, score: i64 },
    #[error("row {row}: duplicate (evaluator, artifact, criterion) key")]
    DuplicateKey { row: usize },
    #[error("no records for category {}", .0.label())]
    EmptyCategory(Category),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Required CSV header, also the implied JSON-lines field set.
pub const CSV_HEADER: &str = "evaluator,run,category,artifact,criterion,score,note";

/// Read scores from a `.csv` file (with header) or a `.jsonl` file (one
/// object per line). Duplicate (evaluator, artifact, criterion) keys are
/// rejected with their row number.
pub fn ingest_scores(path: &Path) -> Result<Vec<ScoreRecord>, ScoreError> {
    let is_jsonl = path
        .extension()
        .map(|e| e == "jsonl" || e == "ndjson")
        .unwrap_or(false);
    let records = if is_jsonl {
        ingest_jsonl(path)?
    } else {
        ingest_csv(path)?
    };
    check_duplicates(&records)?;
    Ok(records)
}

fn check_duplicates(records: &[ScoreRecord]) -> Result<(), ScoreError> {
    let mut seen = BTreeSet::new();
    for (i, r) in records.iter().enumerate() {
        let key = (r.evaluator_id.clone(), r.artifact_ref.clone(), r.criterion);
        if !seen.insert(key) {
            // Row numbers are 1-based and count the CSV header.
            return Err(ScoreError::DuplicateKey { row: i + 2 });
        }
    }
    Ok(())
}

fn ingest_csv(path: &Path) -> Result<Vec<ScoreRecord>, ScoreError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| ScoreError::Parse {
            row: 1,
            message: e.to_string(),
        })?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| ScoreError::Parse {
            row: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let expected: Vec<&str> = CSV_HEADER.split(',').collect();
    if header != expected {
        return Err(ScoreError::Parse {
            row: 1,
            message: format!(
                "expected header '{CSV_HEADER}', found '{}'",
                header.join(",")
            ),
        });
    }

    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 2;
        let row = row.map_err(|e| ScoreError::Parse {
            row: row_no,
            message: e.to_string(),
        })?;
        let field = |idx: usize| row.get(idx).unwrap_or("").to_string();
        let category = Category::parse(&field(2)).ok_or_else(|| ScoreError::Parse {
            row: row_no,
            message: format!("unknown category '{}'", field(2)),
        })?;
        let criterion = Criterion::parse(&field(4)).ok_or_else(|| ScoreError::Parse {
            row: row_no,
            message: format!("unknown criterion '{}'", field(4)),
        })?;
        let score: i64 = field(5).parse().map_err(|_| ScoreError::Parse {
            row: row_no,
            message: format!("score '{}' is not an integer", field(5)),
        })?;
        if !(1..=5).contains(&score) {
            return Err(ScoreError::Range { row: row_no, score });
        }
        let note = field(6);
        records.push(ScoreRecord {
            evaluator_id: field(0),
            run_id: field(1),
            category,
            artifact_ref: field(3),
            criterion,
            score: score as u8,
            note: if note.is_empty() { None } else { Some(note) },
        });
    }
    Ok(records)
}

fn ingest_jsonl(path: &Path) -> Result<Vec<ScoreRecord>, ScoreError> {
    #[derive(Deserialize)]
    struct Row {
        evaluator: String,
        run: String,
        category: String,
        artifact: String,
        criterion: String,
        score: i64,
        #[serde(default)]
        note: Option<String>,
    }
    let file = std::fs::File::open(path)?;
    let mut records = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let row_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Row = serde_json::from_str(&line).map_err(|e| ScoreError::Parse {
            row: row_no,
            message: e.to_string(),
        })?;
        let category = Category::parse(&row.category).ok_or_else(|| ScoreError::Parse {
            row: row_no,
            message: format!("unknown category '{}'", row.category),
        })?;
        let criterion = Criterion::parse(&row.criterion).ok_or_else(|| ScoreError::Parse {
            row: row_no,
            message: format!("unknown criterion '{}'", row.criterion),
        })?;
        if !(1..=5).contains(&row.score) {
            return Err(ScoreError::Range {
                row: row_no,
                score: row.score,
            });
        }
        records.push(ScoreRecord {
            evaluator_id: row.evaluator,
            run_id: row.run,
            category,
            artifact_ref: row.artifact,
            criterion,
            score: row.score as u8,
            note: row.note.filter(|n| !n.is_empty()),
        });
    }
    Ok(records)
}

/// How scores within one (category, criterion) cell are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PoolingMode {
    /// Pool every (evaluator x artifact) score, then take one mean.
    #[default]
    Pooled,
    /// Mean per evaluator first, then mean across evaluators.
    PerEvaluator,
}

/// One aggregated category row: full-precision criterion means plus overall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub category: Category,
    /// Criterion -> mean; absent cells stay absent, never imputed.
    pub means: BTreeMap<Criterion, f64>,
    /// Unweighted mean of the present criterion means.
    pub overall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateTable {
    pub rows: Vec<CategoryRow>,
    pub pooling: PoolingMode,
}

/// Aggregate records into the category table. Only categories present in
/// the input appear; `require` lists categories that must be present.
pub fn aggregate(
    records: &[ScoreRecord],
    mode: PoolingMode,
    require: &[Category],
) -> Result<AggregateTable, ScoreError> {
    let present: BTreeSet<Category> = records.iter().map(|r| r.category).collect();
    for wanted in require {
        if !present.contains(wanted) {
            return Err(ScoreError::EmptyCategory(*wanted));
        }
    }

    let mut rows = Vec::new();
    for category in Category::ALL {
        if !present.contains(&category) {
            continue;
        }
        let mut means = BTreeMap::new();
        for criterion in Criterion::ALL {
            let cell: Vec<&ScoreRecord> = records
                .iter()
                .filter(|r| r.category == category && r.criterion == criterion)
                .collect();
            if cell.is_empty() {
                continue;
            }
            let mean = match mode {
                PoolingMode::Pooled => {
                    cell.iter().map(|r| r.score as f64).sum::<f64>() / cell.len() as f64
                }
                PoolingMode::PerEvaluator => {
                    let mut per: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
                    for r in &cell {
                        let e = per.entry(r.evaluator_id.as_str()).or_insert((0.0, 0));
                        e.0 += r.score as f64;
                        e.1 += 1;
                    }
                    per.values().map(|(sum, n)| sum / *n as f64).sum::<f64>() / per.len() as f64
                }
            };
            means.insert(criterion, mean);
        }
        let overall = means.values().sum::<f64>() / means.len() as f64;
        rows.push(CategoryRow {
            category,
            means,
            overall,
        });
    }
    Ok(AggregateTable {
        rows,
        pooling: mode,
    })
}

/// Half-up rounding to two decimals, applied only when formatting.
pub fn round2(x: f64) -> f64 {
    (x * 100.0 + 0.5).floor() / 100.0
}

fn fmt2(x: f64) -> String {
    format!("{:.2}", round2(x))
}

/// Render the aggregate table as fixed-layout text (one row per category,
/// one column per criterion, trailing Avg. column).
pub fn render_table(table: &AggregateTable) -> String {
    let name_width = Category::ALL
        .iter()
        .map(|c| c.label().len())
        .max()
        .unwrap_or(0)
        .max("Content Category".len());
    let mut out = String::new();
    write!(out, "{:<name_width$}", "Content Category").unwrap();
    for criterion in Criterion::ALL {
        write!(out, "  {:>8}", criterion.short_label()).unwrap();
    }
    writeln!(out, "  {:>8}", "Avg.").unwrap();
    for row in &table.rows {
        write!(out, "{:<name_width$}", row.category.label()).unwrap();
        for criterion in Criterion::ALL {
            match row.means.get(&criterion) {
                Some(mean) => write!(out, "  {:>8}", fmt2(*mean)).unwrap(),
                None => write!(out, "  {:>8}", "-").unwrap(),
            }
        }
        writeln!(out, "  {:>8}", fmt2(row.overall)).unwrap();
    }
    out
}

/// Machine-readable companion to the text table: means rounded as presented.
pub fn table_json(table: &AggregateTable) -> serde_json::Value {
    let rows: Vec<serde_json::Value> = table
        .rows
        .iter()
        .map(|row| {
            let means: BTreeMap<&str, f64> = row
                .means
                .iter()
                .map(|(c, m)| (c.short_label(), round2(*m)))
                .collect();
            serde_json::json!({
                "category": row.category.label(),
                "means": means,
                "overall": round2(row.overall),
            })
        })
        .collect();
    serde_json::json!({ "pooling": table.pooling, "rows": rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    /// Published per-criterion means, used as synthetic single records.
    pub const PUBLISHED: [(Category, [f64; 5], f64); 5] = [
        (Category::World, [5.00, 4.20, 4.40, 4.60, 4.80], 4.60),
        (Category::Npcs, [5.00, 4.20, 3.60, 4.60, 4.00], 4.28),
        (
            Category::PlayerCharacter,
            [4.80, 3.80, 4.00, 4.60, 3.80],
            4.20,
        ),
        (Category::Quests, [4.40, 4.40, 4.40, 4.20, 3.40], 4.16),
        (
            Category::ExtendedQuests,
            [3.60, 4.20, 4.20, 4.00, 4.60],
            4.12,
        ),
    ];

    /// Expand each published criterion mean into five integer Likert scores
    /// with that exact mean (e.g. 4.20 -> 4,4,4,4,5).
    pub fn published_as_records() -> Vec<ScoreRecord> {
        let mut records = Vec::new();
        for (category, means, _) in PUBLISHED {
            for (ci, mean) in means.iter().enumerate() {
                let total = (mean * 5.0).round() as i64;
                let base = total / 5;
                let extra = (total % 5) as usize;
                for k in 0..5usize {
                    let score = base + if k < extra { 1 } else { 0 };
                    records.push(ScoreRecord {
                        evaluator_id: format!("e{}", k + 1),
                        run_id: "r1".into(),
                        category,
                        artifact_ref: format!("{:?}-{ci}", category),
                        criterion: Criterion::ALL[ci],
                        score: score as u8,
                        note: None,
                    });
                }
            }
        }
        records
    }

    #[test]
    fn published_rows_reproduced_from_likert_scores() {
        let records = published_as_records();
        let table = aggregate(&records, PoolingMode::Pooled, &Category::ALL).unwrap();
        assert_eq!(table.rows.len(), 5);
        for (row, (category, means, avg)) in table.rows.iter().zip(PUBLISHED) {
            assert_eq!(row.category, category);
            for (criterion, want) in Criterion::ALL.iter().zip(means) {
                assert_eq!(round2(row.means[criterion]), want);
            }
            assert_eq!(round2(row.overall), avg);
        }
    }

    #[test]
    fn overall_is_unweighted_mean_of_criterion_means() {
        let records = published_as_records();
        let table = aggregate(&records, PoolingMode::Pooled, &[]).unwrap();
        for row in &table.rows {
            let manual = row.means.values().sum::<f64>() / row.means.len() as f64;
            assert!((row.overall - manual).abs() < 1e-12);
        }
    }

    #[test]
    fn permutation_invariance() {
        let mut records = published_as_records();
        let table1 = aggregate(&records, PoolingMode::Pooled, &[]).unwrap();
        records.reverse();
        records.rotate_left(7);
        let table2 = aggregate(&records, PoolingMode::Pooled, &[]).unwrap();
        assert_eq!(table1, table2);
    }

    #[test]
    fn constant_scores_give_constant_means() {
        let records: Vec<ScoreRecord> = Criterion::ALL
            .iter()
            .map(|&criterion| ScoreRecord {
                evaluator_id: "e1".into(),
                run_id: "r1".into(),
                category: Category::World,
                artifact_ref: format!("w-{criterion:?}"),
                criterion,
                score: 3,
                note: None,
            })
            .collect();
        let table = aggregate(&records, PoolingMode::Pooled, &[]).unwrap();
        assert_eq!(round2(table.rows[0].overall), 3.00);
    }

    #[test]
    fn missing_required_category_errors() {
        let records = published_as_records();
        let only_world: Vec<ScoreRecord> = records
            .into_iter()
            .filter(|r| r.category == Category::World)
            .collect();
        let err = aggregate(&only_world, PoolingMode::Pooled, &Category::ALL).unwrap_err();
        assert!(matches!(err, ScoreError::EmptyCategory(Category::Npcs)));
    }

    #[test]
    fn missing_cell_stays_absent() {
        let records = vec![ScoreRecord {
            evaluator_id: "e1".into(),
            run_id: "r1".into(),
            category: Category::World,
            artifact_ref: "w".into(),
            criterion: Criterion::Diversity,
            score: 4,
            note: None,
        }];
        let table = aggregate(&records, PoolingMode::Pooled, &[]).unwrap();
        let row = &table.rows[0];
        assert_eq!(row.means.len(), 1);
        assert!(render_table(&table).contains('-'));
    }

    #[test]
    fn per_evaluator_mode_weights_evaluators_equally() {
        // e1 scores twice (5, 5), e2 once (1). Pooled mean 11/3; nested
        // mean (5 + 1) / 2 = 3.
        let mk = |evaluator: &str, artifact: &str, score: u8| ScoreRecord {
            evaluator_id: evaluator.into(),
            run_id: "r1".into(),
            category: Category::Quests,
            artifact_ref: artifact.into(),
            criterion: Criterion::Actionability,
            score,
            note: None,
        };
        let records = vec![mk("e1", "a", 5), mk("e1", "b", 5), mk("e2", "a", 1)];
        let pooled = aggregate(&records, PoolingMode::Pooled, &[]).unwrap();
        let nested = aggregate(&records, PoolingMode::PerEvaluator, &[]).unwrap();
        assert_eq!(round2(pooled.rows[0].overall), 3.67);
        assert_eq!(round2(nested.rows[0].overall), 3.00);
    }

    #[test]
    fn half_up_rounding() {
        assert_eq!(round2(4.125), 4.13);
        assert_eq!(round2(4.124), 4.12);
        assert_eq!(round2(4.115), 4.12);
    }

    fn write_temp(name: &str, contents: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        (dir, path)
    }

    #[test]
    fn csv_round_trip() {
        let csv = format!(
            "{CSV_HEADER}\n\
             e1,r1,World,w,NarrativeCoherence,4,\n\
             e2,r1,Extended Quests,extended_quest_M1,Actionability,5,strong hook\n"
        );
        let (_dir, path) = write_temp("scores.csv", &csv);
        let records = ingest_scores(&path).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].criterion, Criterion::NarrativeCoherence);
        assert_eq!(records[1].category, Category::ExtendedQuests);
        assert_eq!(records[1].note.as_deref(), Some("strong hook"));
    }

    #[test]
    fn empty_csv_gives_empty_list() {
        let (_dir, path) = write_temp("scores.csv", &format!("{CSV_HEADER}\n"));
        assert!(ingest_scores(&path).unwrap().is_empty());
    }

    #[test]
    fn out_of_range_score_reports_row() {
        let csv = format!("{CSV_HEADER}\ne1,r1,World,w,Diversity,6,\n");
        let (_dir, path) = write_temp("scores.csv", &csv);
        match ingest_scores(&path).unwrap_err() {
            ScoreError::Range { row, score } => {
                assert_eq!(row, 2);
                assert_eq!(score, 6);
            }
            other => panic!("expected range error, got {other}"),
        }
    }

    #[test]
    fn duplicate_key_reports_row() {
        let csv = format!(
            "{CSV_HEADER}\n\
             e1,r1,World,w,Diversity,4,\n\
             e1,r1,World,w,Diversity,5,\n"
        );
        let (_dir, path) = write_temp("scores.csv", &csv);
        assert!(matches!(
            ingest_scores(&path).unwrap_err(),
            ScoreError::DuplicateKey { row: 3 }
        ));
    }

    #[test]
    fn bad_header_rejected() {
        let (_dir, path) = write_temp("scores.csv", "a,b,c\n1,2,3\n");
        assert!(matches!(
            ingest_scores(&path).unwrap_err(),
            ScoreError::Parse { row: 1, .. }
        ));
    }

    #[test]
    fn jsonl_ingest() {
        let jsonl = concat!(
            r#"{"evaluator":"e1","run":"r1","category":"World","artifact":"w","criterion":"Diversity","score":4}"#,
            "\n",
            r#"{"evaluator":"e1","run":"r1","category":"NPCs","artifact":"n","criterion":"Diversity","score":2,"note":"flat"}"#,
            "\n"
        );
        let (_dir, path) = write_temp("scores.jsonl", jsonl);
        let records = ingest_scores(&path).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[1].note.as_deref(), Some("flat"));
    }

    #[test]
    fn rendered_table_matches_published_numbers() {
        let table = aggregate(&published_as_records(), PoolingMode::Pooled, &[]).unwrap();
        let text = render_table(&table);
        for line in ["World", "5.00", "4.60", "4.28", "4.20", "4.16", "4.12"] {
            assert!(text.contains(line), "missing '{line}' in:\n{text}");
        }
        let json = table_json(&table);
        assert_eq!(json["rows"][4]["overall"], 4.12);
    }
}
