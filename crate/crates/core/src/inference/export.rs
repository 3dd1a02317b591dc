use super::search::{ScoreEntry, SearchResult};
use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

pub fn search_result_json(result: &SearchResult) -> Result<String> {
    Ok(serde_json::to_string_pretty(result)?)
}

/// Score table as CSV with header `x,y,theta,alpha`.
pub fn score_table_csv(table: &[ScoreEntry]) -> String {
    let mut out = String::from("x,y,theta,alpha\n");
    for e in table {
        writeln!(out, "{},{},{},{}", e.x, e.y, e.theta, e.alpha).unwrap();
    }
    out
}

pub fn write_search_result(path: &Path, result: &SearchResult) -> Result<()> {
    std::fs::write(path, search_result_json(result)?).map_err(|e| Error::io(path, e))
}

pub fn write_score_table(path: &Path, table: &[ScoreEntry]) -> Result<()> {
    std::fs::write(path, score_table_csv(table)).map_err(|e| Error::io(path, e))
}
