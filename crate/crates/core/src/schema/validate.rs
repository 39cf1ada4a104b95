//! Hand-rolled structural validation of candidate documents.
//!
//! Violations are data, not failures: every check appends a finding and the
//! report's validity is derived from the absence of error-severity findings.
//! Unknown extra fields are warnings — generated documents legitimately carry
//! more fields than the required minimum.

use serde_json::Value;

use super::{is_quest_id, Severity, StageKind, ValidationReport};

/// Machine-readable finding codes emitted by the validator.
pub mod codes {
    pub const MISSING_FIELD: &str = "MissingField";
    pub const WRONG_TYPE: &str = "WrongType";
    pub const EMPTY_STRING: &str = "EmptyString";
    pub const EMPTY_LIST: &str = "EmptyList";
    pub const EMPTY_MAP: &str = "EmptyMap";
    pub const DUPLICATE_NAME: &str = "DuplicateName";
    pub const DUPLICATE_ID: &str = "DuplicateId";
    pub const DUPLICATE_ENTRY: &str = "DuplicateEntry";
    pub const SELF_RELATION: &str = "SelfRelation";
    pub const BAD_QUEST_ID: &str = "BadQuestId";
    pub const NON_POSITIVE_ATTRIBUTE: &str = "NonPositiveAttribute";
    pub const ATTRIBUTE_ABOVE_TYPICAL_RANGE: &str = "AttributeAboveTypicalRange";
    pub const UNKNOWN_FIELD: &str = "UnknownField";
    pub const COUNT_MISMATCH: &str = "CountMismatch";
}

/// Validate a parsed JSON value as a `kind` document.
///
/// Pure and deterministic: the same `(kind, value)` always yields the same
/// report, findings in document order.
pub fn validate(kind: StageKind, value: &Value) -> ValidationReport {
    let mut report = ValidationReport::default();
    match kind {
        StageKind::World => validate_world(value, &mut report),
        StageKind::NpcRoster => validate_roster(value, &mut report),
        StageKind::Player => validate_player(value, &mut report),
        StageKind::QuestSet => validate_quest_set(value, &mut report),
        StageKind::ExtendedQuest => validate_quest(value, "", true, &mut report),
    }
    report
}

fn path_join(base: &str, key: &str) -> String {
    if base.is_empty() {
        key.to_string()
    } else {
        format!("{base}.{key}")
    }
}

fn expect_object<'a>(
    value: &'a Value,
    path: &str,
    report: &mut ValidationReport,
) -> Option<&'a serde_json::Map<String, Value>> {
    match value.as_object() {
        Some(map) => Some(map),
        None => {
            report.push(
                Severity::Error,
                codes::WRONG_TYPE,
                path.to_string(),
                format!("expected object, found {}", type_name(value)),
            );
            None
        }
    }
}

fn type_name(value: &Value) -> &'static str {
    match value {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn require_string(
    obj: &serde_json::Map<String, Value>,
    key: &str,
    base: &str,
    non_empty: bool,
    report: &mut ValidationReport,
) -> Option<String> {
    let path = path_join(base, key);
    match obj.get(key) {
        None => {
            report.push(
                Severity::Error,
                codes::MISSING_FIELD,
                path,
                format!("required field '{key}' is missing"),
            );
            None
        }
        Some(Value::String(s)) => {
            if non_empty && s.trim().is_empty() {
                report.push(
                    Severity::Error,
                    codes::EMPTY_STRING,
                    path,
                    format!("field '{key}' must be a non-empty string"),
                );
                None
            } else {
                Some(s.clone())
            }
        }
        Some(other) => {
            report.push(
                Severity::Error,
                codes::WRONG_TYPE,
                path,
                format!("field '{key}' must be a string, found {}", type_name(other)),
            );
            None
        }
    }
}

fn require_array<'a>(
    obj: &'a serde_json::Map<String, Value>,
    key: &str,
    base: &str,
    non_empty: bool,
    report: &mut ValidationReport,
) -> Option<&'a Vec<Value>> {
    let path = path_join(base, key);
    match obj.get(key) {
        None => {
            report.push(
                Severity::Error,
                codes::MISSING_FIELD,
                path,
                format!("required field '{key}' is missing"),
            );
            None
        }
        Some(Value::Array(items)) => {
            if non_empty && items.is_empty() {
                report.push(
                    Severity::Error,
                    codes::EMPTY_LIST,
                    path,
                    format!("field '{key}' must contain at least one entry"),
                );
                None
            } else {
                Some(items)
            }
        }
        Some(other) => {
            report.push(
                Severity::Error,
                codes::WRONG_TYPE,
                path,
                format!("field '{key}' must be an array, found {}", type_name(other)),
            );
            None
        }
    }
}

fn string_list(
    items: &[Value],
    base: &str,
    non_empty_entries: bool,
    report: &mut ValidationReport,
) {
    for (i, item) in items.iter().enumerate() {
        let path = format!("{base}[{i}]");
        match item {
            Value::String(s) => {
                if non_empty_entries && s.trim().is_empty() {
                    report.push(
                        Severity::Error,
                        codes::EMPTY_STRING,
                        path,
                        "entry must be a non-empty string".to_string(),
                    );
                }
            }
            other => report.push(
                Severity::Error,
                codes::WRONG_TYPE,
                path,
                format!("entry must be a string, found {}", type_name(other)),
            ),
        }
    }
}

fn warn_unknown_fields(
    obj: &serde_json::Map<String, Value>,
    known: &[&str],
    base: &str,
    report: &mut ValidationReport,
) {
    for key in obj.keys() {
        if !known.contains(&key.as_str()) {
            report.push(
                Severity::Warning,
                codes::UNKNOWN_FIELD,
                path_join(base, key),
                format!("field '{key}' is not part of the schema; kept as-is"),
            );
        }
    }
}

fn check_unique_names(
    items: &[Value],
    base: &str,
    code: &str,
    key: &str,
    report: &mut ValidationReport,
) {
    let mut seen: std::collections::BTreeMap<&str, usize> = Default::default();
    for (i, item) in items.iter().enumerate() {
        if let Some(name) = item.get(key).and_then(Value::as_str) {
            if let Some(first) = seen.get(name) {
                report.push(
                    Severity::Error,
                    code,
                    format!("{base}[{i}].{key}"),
                    format!("'{name}' duplicates entry at {base}[{first}]"),
                );
            } else {
                seen.insert(name, i);
            }
        }
    }
}

fn validate_world(value: &Value, report: &mut ValidationReport) {
    let Some(obj) = expect_object(value, "", report) else {
        return;
    };
    require_string(obj, "city", "", true, report);

    if let Some(items) = require_array(obj, "surroundings", "", true, report) {
        for (i, item) in items.iter().enumerate() {
            let base = format!("surroundings[{i}]");
            let Some(entry) = expect_object(item, &base, report) else {
                continue;
            };
            require_string(entry, "name", &base, true, report);
            require_string(entry, "type", &base, false, report);
            require_string(entry, "resources", &base, false, report);
            require_string(entry, "dependencies", &base, false, report);
            if let Some(factions) = require_array(entry, "related_factions", &base, false, report) {
                string_list(
                    factions,
                    &path_join(&base, "related_factions"),
                    true,
                    report,
                );
            }
            warn_unknown_fields(
                entry,
                &[
                    "name",
                    "type",
                    "resources",
                    "dependencies",
                    "related_factions",
                ],
                &base,
                report,
            );
        }
        check_unique_names(items, "surroundings", codes::DUPLICATE_NAME, "name", report);
    }

    if let Some(items) = require_array(obj, "buildings", "", true, report) {
        for (i, item) in items.iter().enumerate() {
            let base = format!("buildings[{i}]");
            let Some(entry) = expect_object(item, &base, report) else {
                continue;
            };
            require_string(entry, "name", &base, true, report);
            require_string(entry, "type", &base, false, report);
            require_string(entry, "district", &base, false, report);
            require_string(entry, "controlled_by", &base, false, report);
            warn_unknown_fields(
                entry,
                &["name", "type", "district", "controlled_by"],
                &base,
                report,
            );
        }
        check_unique_names(items, "buildings", codes::DUPLICATE_NAME, "name", report);
    }

    if let Some(items) = require_array(obj, "politics", "", true, report) {
        for (i, item) in items.iter().enumerate() {
            let base = format!("politics[{i}]");
            let Some(entry) = expect_object(item, &base, report) else {
                continue;
            };
            require_string(entry, "name", &base, true, report);
            require_string(entry, "type", &base, false, report);
            require_string(entry, "goals", &base, false, report);
            require_string(entry, "rivals", &base, false, report);
            warn_unknown_fields(entry, &["name", "type", "goals", "rivals"], &base, report);
        }
        check_unique_names(items, "politics", codes::DUPLICATE_NAME, "name", report);
    }

    warn_unknown_fields(
        obj,
        &["city", "surroundings", "buildings", "politics"],
        "",
        report,
    );
}

fn validate_npc(value: &Value, base: &str, report: &mut ValidationReport) {
    let Some(obj) = expect_object(value, base, report) else {
        return;
    };
    let npc_name = require_string(obj, "name", base, true, report);
    require_string(obj, "role", base, false, report);
    for key in ["traits", "skills", "flaws", "secrets"] {
        if let Some(items) = require_array(obj, key, base, false, report) {
            string_list(items, &path_join(base, key), false, report);
        }
    }
    if let Some(relations) = require_array(obj, "relations", base, false, report) {
        for (i, rel) in relations.iter().enumerate() {
            let rel_base = format!("{}[{i}]", path_join(base, "relations"));
            let Some(rel_obj) = expect_object(rel, &rel_base, report) else {
                continue;
            };
            let target = require_string(rel_obj, "npc_name", &rel_base, true, report);
            require_string(rel_obj, "relation_type", &rel_base, true, report);
            if let (Some(name), Some(target)) = (&npc_name, &target) {
                if name == target {
                    report.push(
                        Severity::Error,
                        codes::SELF_RELATION,
                        path_join(&rel_base, "npc_name"),
                        format!("'{name}' lists itself in relations"),
                    );
                }
            }
            warn_unknown_fields(rel_obj, &["npc_name", "relation_type"], &rel_base, report);
        }
    }
    warn_unknown_fields(
        obj,
        &[
            "name",
            "role",
            "traits",
            "skills",
            "flaws",
            "secrets",
            "relations",
        ],
        base,
        report,
    );
}

fn validate_roster(value: &Value, report: &mut ValidationReport) {
    let Some(items) = value.as_array() else {
        report.push(
            Severity::Error,
            codes::WRONG_TYPE,
            String::new(),
            format!("NPC roster must be an array, found {}", type_name(value)),
        );
        return;
    };
    for (i, item) in items.iter().enumerate() {
        validate_npc(item, &format!("[{i}]"), report);
    }
    check_unique_names(items, "", codes::DUPLICATE_NAME, "name", report);
}

fn validate_player(value: &Value, report: &mut ValidationReport) {
    let Some(obj) = expect_object(value, "", report) else {
        return;
    };
    require_string(obj, "name", "", true, report);
    require_string(obj, "class", "", true, report);
    require_string(obj, "background", "", false, report);

    match obj.get("main_attributes") {
        None => report.push(
            Severity::Error,
            codes::MISSING_FIELD,
            "main_attributes".to_string(),
            "required field 'main_attributes' is missing".to_string(),
        ),
        Some(Value::Object(attrs)) => {
            if attrs.is_empty() {
                report.push(
                    Severity::Error,
                    codes::EMPTY_MAP,
                    "main_attributes".to_string(),
                    "main_attributes must contain at least one attribute".to_string(),
                );
            }
            for (attr, v) in attrs {
                let path = format!("main_attributes.{attr}");
                match v.as_i64() {
                    Some(n) if n >= 1 => {
                        if n > 30 {
                            report.push(
                                Severity::Warning,
                                codes::ATTRIBUTE_ABOVE_TYPICAL_RANGE,
                                path,
                                format!("attribute value {n} exceeds the typical range"),
                            );
                        }
                    }
                    Some(n) => report.push(
                        Severity::Error,
                        codes::NON_POSITIVE_ATTRIBUTE,
                        path,
                        format!("attribute value {n} must be >= 1"),
                    ),
                    None => report.push(
                        Severity::Error,
                        codes::WRONG_TYPE,
                        path,
                        format!("attribute must be an integer, found {}", type_name(v)),
                    ),
                }
            }
        }
        Some(other) => report.push(
            Severity::Error,
            codes::WRONG_TYPE,
            "main_attributes".to_string(),
            format!(
                "main_attributes must be an object, found {}",
                type_name(other)
            ),
        ),
    }

    match obj.get("relationships") {
        None => report.push(
            Severity::Error,
            codes::MISSING_FIELD,
            "relationships".to_string(),
            "required field 'relationships' is missing".to_string(),
        ),
        Some(Value::Object(rels)) => {
            for (npc, label) in rels {
                let path = format!("relationships.{npc}");
                if npc.trim().is_empty() {
                    report.push(
                        Severity::Error,
                        codes::EMPTY_STRING,
                        path.clone(),
                        "relationship key must be a non-empty NPC name".to_string(),
                    );
                }
                match label {
                    Value::String(s) if !s.trim().is_empty() => {}
                    Value::String(_) => report.push(
                        Severity::Error,
                        codes::EMPTY_STRING,
                        path,
                        "relationship label must be non-empty".to_string(),
                    ),
                    other => report.push(
                        Severity::Error,
                        codes::WRONG_TYPE,
                        path,
                        format!(
                            "relationship label must be a string, found {}",
                            type_name(other)
                        ),
                    ),
                }
            }
        }
        Some(other) => report.push(
            Severity::Error,
            codes::WRONG_TYPE,
            "relationships".to_string(),
            format!(
                "relationships must be an object, found {}",
                type_name(other)
            ),
        ),
    }

    warn_unknown_fields(
        obj,
        &[
            "name",
            "class",
            "background",
            "main_attributes",
            "relationships",
        ],
        "",
        report,
    );
}

fn validate_quest(value: &Value, base: &str, extended: bool, report: &mut ValidationReport) {
    let Some(obj) = expect_object(value, base, report) else {
        return;
    };
    if let Some(id) = require_string(obj, "id", base, true, report) {
        if !is_quest_id(&id) {
            report.push(
                Severity::Error,
                codes::BAD_QUEST_ID,
                path_join(base, "id"),
                format!("quest id '{id}' must be letters followed by digits"),
            );
        }
    }
    require_string(obj, "title", base, true, report);
    require_string(obj, "quest_giver", base, true, report);
    if let Some(objectives) = require_array(obj, "objectives", base, true, report) {
        string_list(objectives, &path_join(base, "objectives"), true, report);
    }

    // Optional on both forms: the campaign excerpts omit it, the extended one
    // carries it.
    if let Some(conn) = obj.get("connections") {
        let conn_base = path_join(base, "connections");
        if let Some(conn_obj) = expect_object(conn, &conn_base, report) {
            if let Some(next) = require_array(conn_obj, "next", &conn_base, false, report) {
                let next_base = path_join(&conn_base, "next");
                string_list(next, &next_base, true, report);
                let mut seen = std::collections::BTreeSet::new();
                for (i, id) in next.iter().enumerate() {
                    if let Some(id) = id.as_str() {
                        if !seen.insert(id) {
                            report.push(
                                Severity::Error,
                                codes::DUPLICATE_ENTRY,
                                format!("{next_base}[{i}]"),
                                format!("duplicate successor '{id}'"),
                            );
                        }
                    }
                }
            }
            warn_unknown_fields(conn_obj, &["next"], &conn_base, report);
        }
    }

    if let Some(rewards) = obj.get("rewards") {
        let rewards_base = path_join(base, "rewards");
        match rewards {
            Value::Array(items) => string_list(items, &rewards_base, false, report),
            other => report.push(
                Severity::Error,
                codes::WRONG_TYPE,
                rewards_base,
                format!("rewards must be an array, found {}", type_name(other)),
            ),
        }
    }

    let mut known = vec![
        "id",
        "title",
        "quest_giver",
        "objectives",
        "connections",
        "rewards",
    ];
    if extended {
        known.push("dialogue");
        if let Some(dialogue) = obj.get("dialogue") {
            let dlg_base = path_join(base, "dialogue");
            match dialogue {
                Value::Array(turns) => {
                    for (i, turn) in turns.iter().enumerate() {
                        let turn_base = format!("{dlg_base}[{i}]");
                        if let Some(turn_obj) = expect_object(turn, &turn_base, report) {
                            require_string(turn_obj, "speaker", &turn_base, true, report);
                            require_string(turn_obj, "content", &turn_base, true, report);
                            warn_unknown_fields(
                                turn_obj,
                                &["speaker", "content"],
                                &turn_base,
                                report,
                            );
                        }
                    }
                }
                other => report.push(
                    Severity::Error,
                    codes::WRONG_TYPE,
                    dlg_base,
                    format!("dialogue must be an array, found {}", type_name(other)),
                ),
            }
        }
    }
    warn_unknown_fields(obj, &known, base, report);
}

fn validate_quest_set(value: &Value, report: &mut ValidationReport) {
    let Some(items) = value.as_array() else {
        report.push(
            Severity::Error,
            codes::WRONG_TYPE,
            String::new(),
            format!("quest set must be an array, found {}", type_name(value)),
        );
        return;
    };
    for (i, item) in items.iter().enumerate() {
        validate_quest(item, &format!("[{i}]"), false, report);
    }
    check_unique_names(items, "", codes::DUPLICATE_ID, "id", report);
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn listing_npc() -> Value {
        json!({
            "name": "Isha Brinehand",
            "role": "Foreman-Keeper of the Dockers' Syndicate",
            "traits": ["charismatic", "protective", "combative"],
            "skills": ["strike organization", "crowd speaking", "contract bargaining"],
            "flaws": ["impulsive", "holds grudges"],
            "secrets": [
                "Funded lantern blackouts during labor negotiations",
                "Shelters a deserter Warden under a false docker's name"
            ],
            "relations": [
                { "npc_name": "Sorev Katch", "relation_type": "Conflict" },
                { "npc_name": "Sel Var Saltvein", "relation_type": "Rivalry" },
                { "npc_name": "Nerey Alis", "relation_type": "Cooperation" }
            ]
        })
    }

    #[test]
    fn listing_npc_roster_is_valid() {
        let report = validate(StageKind::NpcRoster, &json!([listing_npc()]));
        assert!(report.valid(), "{:?}", report.findings);
    }

    #[test]
    fn listing_campaign_quest_is_valid() {
        let quest = json!([{
            "id": "M1",
            "title": "When the Beacon Keens on a Clear Sky",
            "quest_giver": "Isha Brinehand",
            "objectives": [
                "Stabilize the chainlift at Chainmouth",
                "Meet Captain-Major Sorev Katch"
            ]
        }]);
        let report = validate(StageKind::QuestSet, &quest);
        assert!(report.valid(), "{:?}", report.findings);
    }

    #[test]
    fn empty_relation_target_is_an_error() {
        let mut npc = listing_npc();
        npc["relations"][0] = json!({ "npc_name": "", "relation_type": "Conflict" });
        let report = validate(StageKind::NpcRoster, &json!([npc]));
        assert!(!report.valid());
        let finding = report.errors().next().unwrap();
        assert_eq!(finding.path, "[0].relations[0].npc_name");
        assert_eq!(finding.code, codes::EMPTY_STRING);
    }

    #[test]
    fn self_relation_is_an_error() {
        let mut npc = listing_npc();
        npc["relations"][0] = json!({ "npc_name": "Isha Brinehand", "relation_type": "Rival" });
        let report = validate(StageKind::NpcRoster, &json!([npc]));
        assert!(report.errors().any(|f| f.code == codes::SELF_RELATION));
    }

    #[test]
    fn duplicate_roster_name_is_an_error() {
        let report = validate(StageKind::NpcRoster, &json!([listing_npc(), listing_npc()]));
        assert!(report.errors().any(|f| f.code == codes::DUPLICATE_NAME));
    }

    #[test]
    fn unknown_fields_warn_but_do_not_invalidate() {
        let mut npc = listing_npc();
        npc["appearance"] = json!("tall, rope-burned hands");
        let report = validate(StageKind::NpcRoster, &json!([npc]));
        assert!(report.valid());
        assert!(report
            .findings
            .iter()
            .any(|f| f.code == codes::UNKNOWN_FIELD && f.severity == Severity::Warning));
    }

    #[test]
    fn player_attribute_bounds() {
        let player = json!({
            "name": "Tairn Latch",
            "class": "WARRIOR",
            "background": "Marsh-born chainhouse rigger",
            "main_attributes": { "strength": 0 },
            "relationships": {}
        });
        let report = validate(StageKind::Player, &player);
        assert!(report
            .errors()
            .any(|f| f.code == codes::NON_POSITIVE_ATTRIBUTE));

        let player = json!({
            "name": "Tairn Latch",
            "class": "WARRIOR",
            "background": "Marsh-born chainhouse rigger",
            "main_attributes": { "strength": 45 },
            "relationships": { "Isha Brinehand": "Mentor" }
        });
        let report = validate(StageKind::Player, &player);
        assert!(report.valid());
        assert!(report
            .findings
            .iter()
            .any(|f| f.code == codes::ATTRIBUTE_ABOVE_TYPICAL_RANGE));
    }

    #[test]
    fn empty_main_attributes_is_an_error() {
        let player = json!({
            "name": "T", "class": "C", "background": "",
            "main_attributes": {}, "relationships": {}
        });
        let report = validate(StageKind::Player, &player);
        assert!(report.errors().any(|f| f.code == codes::EMPTY_MAP));
    }

    #[test]
    fn bad_quest_id_and_duplicate_next() {
        let quests = json!([{
            "id": "quest-one",
            "title": "T",
            "quest_giver": "G",
            "objectives": ["o"],
            "connections": { "next": ["M2", "M2"] }
        }]);
        let report = validate(StageKind::QuestSet, &quests);
        assert!(report.errors().any(|f| f.code == codes::BAD_QUEST_ID));
        assert!(report.errors().any(|f| f.code == codes::DUPLICATE_ENTRY));
    }

    #[test]
    fn extended_quest_dialogue_checked() {
        let quest = json!({
            "id": "M1",
            "title": "T",
            "quest_giver": "G",
            "objectives": ["o"],
            "dialogue": [{ "speaker": "", "content": "hi" }]
        });
        let report = validate(StageKind::ExtendedQuest, &quest);
        assert!(report
            .errors()
            .any(|f| f.code == codes::EMPTY_STRING && f.path == "dialogue[0].speaker"));
    }

    #[test]
    fn missing_required_fields_reported_per_field() {
        let report = validate(StageKind::World, &json!({}));
        let missing: Vec<_> = report
            .errors()
            .filter(|f| f.code == codes::MISSING_FIELD)
            .map(|f| f.path.clone())
            .collect();
        assert_eq!(
            missing,
            vec!["city", "surroundings", "buildings", "politics"]
        );
    }

    #[test]
    fn validation_is_deterministic() {
        let value = json!([listing_npc(), { "name": "", "role": 3 }]);
        let a = validate(StageKind::NpcRoster, &value);
        let b = validate(StageKind::NpcRoster, &value);
        assert_eq!(a, b);
    }
}
