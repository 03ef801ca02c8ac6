//! Ingestion of CamRest676-format files: the dialogue file (a JSON array
//! of `{dialogue_id, goal, dial}` records) and the restaurant database (a
//! JSON array of venue objects, optionally preceded by `#` comment lines).

use std::path::Path;

use serde::Deserialize;

use crate::kb::{Dialogue, KbError, Speaker, TableKb, Turn};
use crate::tquery::{CmpOp, Constraint, Selection, TableQuery};

/// Dialogues in the conventional training split (the first 406).
pub const TRAIN_DIALOGUES: usize = 406;

pub const ATTRIBUTES: [&str; 7] = ["name", "food", "area", "pricerange", "phone", "address", "postcode"];

#[derive(Deserialize)]
struct RawDialogue {
    dialogue_id: u64,
    goal: RawGoal,
    dial: Vec<RawTurn>,
}

#[derive(Deserialize)]
struct RawGoal {
    #[serde(default)]
    constraints: Vec<(String, String)>,
    #[serde(default, rename = "request-slots")]
    request_slots: Vec<String>,
}

#[derive(Deserialize)]
struct RawTurn {
    usr: RawUsr,
    sys: RawSys,
}

#[derive(Deserialize)]
struct RawUsr {
    transcript: String,
}

#[derive(Deserialize)]
struct RawSys {
    sent: String,
}

#[derive(Clone, Debug)]
pub struct GoalDialogue {
    pub dialogue: Dialogue,
    /// Goal query built from the annotated constraints and requests.
    pub query: String,
}

fn strip_comments(text: &str) -> String {
    text.lines()
        .filter(|l| !l.trim_start().starts_with('#') && !l.trim_start().starts_with("//"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn parse_err(path: &Path, e: impl std::fmt::Display) -> KbError {
    KbError::Parse {
        path: path.to_path_buf(),
        line: 0,
        reason: e.to_string(),
    }
}

/// Venue table named `restaurant` over [`ATTRIBUTES`]; missing fields are
/// empty strings and non-string fields are ignored.
pub fn load_kb(path: &Path) -> Result<TableKb, KbError> {
    let text = std::fs::read_to_string(path).map_err(|e| KbError::io(path, e))?;
    let venues: Vec<serde_json::Map<String, serde_json::Value>> =
        serde_json::from_str(&strip_comments(&text)).map_err(|e| parse_err(path, e))?;
    let rows = venues
        .iter()
        .map(|v| {
            ATTRIBUTES
                .iter()
                .map(|a| v.get(*a).and_then(|x| x.as_str()).unwrap_or("").to_string())
                .collect()
        })
        .collect();
    TableKb::new("restaurant", ATTRIBUTES.iter().map(|a| a.to_string()).collect(), rows)
}

/// Dialogues with their goal queries. A dialogue with an empty turn is
/// dropped with a warning.
pub fn load_dialogues(path: &Path) -> Result<Vec<GoalDialogue>, KbError> {
    let text = std::fs::read_to_string(path).map_err(|e| KbError::io(path, e))?;
    let raw: Vec<RawDialogue> = serde_json::from_str(&text).map_err(|e| parse_err(path, e))?;
    let mut out = Vec::with_capacity(raw.len());
    for r in raw {
        let id = format!("camrest-{}", r.dialogue_id);
        let turns: Option<Vec<Turn>> = r
            .dial
            .iter()
            .flat_map(|t| [Turn::new(Speaker::Usr, &t.usr.transcript), Turn::new(Speaker::Sys, &t.sys.sent)])
            .collect();
        let Some(turns) = turns else {
            log::warn!("{id}: empty turn; dropped");
            continue;
        };
        let dialogue = Dialogue::new(id, turns)?;
        out.push(GoalDialogue {
            query: goal_query(&r.goal),
            dialogue,
        });
    }
    Ok(out)
}

fn goal_query(goal: &RawGoal) -> String {
    let mut select = vec!["name".to_string()];
    let mut constraints = Vec::new();
    for (slot, value) in &goal.constraints {
        if value.eq_ignore_ascii_case("dontcare") {
            continue;
        }
        if !select.contains(slot) {
            select.push(slot.clone());
        }
        constraints.push(Constraint {
            op: CmpOp::Eq,
            attribute: slot.clone(),
            value: value.clone(),
        });
    }
    for slot in &goal.request_slots {
        if !select.contains(slot) {
            select.push(slot.clone());
        }
    }
    TableQuery {
        select: Selection::Attributes(select),
        from: "restaurant".into(),
        constraints,
        group_by: None,
        having: None,
    }
    .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_both_files() {
        let dir = tempfile::tempdir().unwrap();
        let db = dir.path().join("CamRestDB.json");
        std::fs::write(
            &db,
            "# venue database\n[{\"name\": \"golden wok\", \"food\": \"chinese\", \"area\": \"north\", \"location\": [52.2, 0.1]}]",
        )
        .unwrap();
        let kb = load_kb(&db).unwrap();
        assert_eq!(kb.rows()[0][..3], ["golden wok", "chinese", "north"]);
        assert_eq!(kb.rows()[0][4], "");

        let dial = dir.path().join("CamRest676.json");
        std::fs::write(
            &dial,
            r#"[{"dialogue_id": 3, "finished": true,
                "goal": {"constraints": [["food", "chinese"], ["area", "dontcare"]], "request-slots": ["phone"]},
                "dial": [{"turn": 0, "usr": {"transcript": "chinese food please", "slu": []},
                          "sys": {"sent": "golden wok is nice", "DA": []}}]}]"#,
        )
        .unwrap();
        let ds = load_dialogues(&dial).unwrap();
        assert_eq!(ds[0].dialogue.id, "camrest-3");
        assert_eq!(ds[0].query, "SELECT name, food, phone FROM restaurant WHERE food = chinese");
    }
}
