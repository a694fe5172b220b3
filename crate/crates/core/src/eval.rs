//! Accuracy metrics over answered queries, per-movie report tables, and
//! clean-versus-perturbed comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{read_json, write_json};
use crate::query::{QaAnswer, RankedAnswer};

/// Movie id used when a result carries none.
pub const DEFAULT_MOVIE: &str = "movie";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gold {
    Option(usize),
    Entity(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Entity ids, best first.
    Ranking(Vec<String>),
    ChosenOption(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub query_id: String,
    pub movie_id: String,
    pub outcome: Outcome,
    pub gold: Gold,
}

impl QueryResult {
    pub fn ranked(movie_id: &str, answer: &RankedAnswer, gold: &str) -> Self {
        Self {
            query_id: answer.query_id.clone(),
            movie_id: movie_id.to_string(),
            outcome: Outcome::Ranking(answer.ranking.iter().map(|r| r.entity_id.clone()).collect()),
            gold: Gold::Entity(gold.to_string()),
        }
    }

    pub fn choice(movie_id: &str, answer: &QaAnswer, gold: usize) -> Self {
        Self {
            query_id: answer.query_id.clone(),
            movie_id: movie_id.to_string(),
            outcome: Outcome::ChosenOption(answer.chosen_option),
            gold: Gold::Option(gold),
        }
    }

    /// 1-based position of the gold answer, if it was returned at all. A
    /// multiple-choice answer has a single slot.
    pub fn gold_rank(&self) -> Option<usize> {
        match (&self.outcome, &self.gold) {
            (Outcome::Ranking(r), Gold::Entity(g)) => r.iter().position(|e| e == g).map(|p| p + 1),
            (Outcome::ChosenOption(c), Gold::Option(g)) => (c == g).then_some(1),
            _ => None,
        }
    }

    fn check(&self) -> Result<()> {
        match (&self.outcome, &self.gold) {
            (Outcome::Ranking(r), Gold::Entity(_)) if r.is_empty() => Err(Error::Eval(format!(
                "query {}: empty ranking",
                self.query_id
            ))),
            (Outcome::Ranking(_), Gold::Entity(_)) | (Outcome::ChosenOption(_), Gold::Option(_)) => Ok(()),
            _ => Err(Error::Eval(format!(
                "query {}: gold kind does not match the answer kind",
                self.query_id
            ))),
        }
    }
}

/// `100 * hits / total` rounded half-up to two decimals, computed in
/// integers so that exact halves round the same way every time.
pub fn percentage(hits: usize, total: usize) -> f64 {
    assert!(total > 0, "percentage of an empty set");
    let (h, t) = (hits as u128, total as u128);
    let hundredths = (20_000 * h + t) / (2 * t);
    hundredths as f64 / 100.0
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn checked(results: &[QueryResult]) -> Result<()> {
    if results.is_empty() {
        return Err(Error::Eval("no results to evaluate".into()));
    }
    results.iter().try_for_each(QueryResult::check)
}

/// Percentage of queries whose gold answer is among the first `n` entries.
pub fn acc_at_n(results: &[QueryResult], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Eval("Acc@n needs n >= 1".into()));
    }
    checked(results)?;
    let hits = results
        .iter()
        .filter(|r| r.gold_rank().is_some_and(|k| k <= n))
        .count();
    Ok(percentage(hits, results.len()))
}

/// Plain accuracy: percentage of queries whose top answer is the gold one.
pub fn qa_accuracy(results: &[QueryResult]) -> Result<f64> {
    checked(results)?;
    Ok(percentage(correct(results), results.len()))
}

fn correct(results: &[QueryResult]) -> usize {
    results.iter().filter(|r| r.gold_rank() == Some(1)).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Graph,
    Qa,
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "graph" => Ok(Task::Graph),
            "qa" => Ok(Task::Qa),
            other => Err(format!("unknown task {other:?} (graph or qa)")),
        }
    }
}

/// Acc@n columns reported for graph queries.
pub const GRAPH_DEPTHS: [usize; 3] = [1, 2, 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub movie: String,
    pub n_queries: usize,
    pub n_correct: usize,
    /// `acc@1`, `acc@2`, `acc@3` for graph queries, `acc` for QA.
    pub metrics: BTreeMap<String, f64>,
    pub query_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub task: Task,
    pub rows: Vec<ReportRow>,
    pub total: ReportRow,
}

fn row(task: Task, movie: &str, results: &[QueryResult]) -> Result<ReportRow> {
    let metrics = match task {
        Task::Graph => GRAPH_DEPTHS
            .iter()
            .map(|&n| Ok((format!("acc@{n}"), acc_at_n(results, n)?)))
            .collect::<Result<_>>()?,
        Task::Qa => BTreeMap::from([("acc".to_string(), qa_accuracy(results)?)]),
    };
    let mut query_ids: Vec<String> = results.iter().map(|r| r.query_id.clone()).collect();
    query_ids.sort();
    Ok(ReportRow {
        movie: movie.to_string(),
        n_queries: results.len(),
        n_correct: correct(results),
        metrics,
        query_ids,
    })
}

/// Groups results by movie (sorted by movie id) and adds a total row
/// computed over all results together.
pub fn build_report(task: Task, results: &[QueryResult]) -> Result<Report> {
    checked(results)?;
    let mut by_movie: BTreeMap<&str, Vec<QueryResult>> = BTreeMap::new();
    for r in results {
        by_movie.entry(&r.movie_id).or_default().push(r.clone());
    }
    for (movie, rs) in &by_movie {
        let mut seen = BTreeSet::new();
        if let Some(dup) = rs.iter().find(|r| !seen.insert(&r.query_id)) {
            return Err(Error::Eval(format!(
                "movie {movie}: query {} appears twice",
                dup.query_id
            )));
        }
    }
    let rows = by_movie
        .iter()
        .map(|(m, rs)| row(task, m, rs))
        .collect::<Result<Vec<_>>>()?;
    let total = row(task, "Total", results)?;
    Ok(Report { task, rows, total })
}

fn fmt_pct(x: f64) -> String {
    format!("{x:.2}")
}

fn columns(task: Task) -> Vec<&'static str> {
    match task {
        Task::Graph => vec!["Movie", "No.queries", "Acc@1", "Acc@2", "Acc@3"],
        Task::Qa => vec!["Movie", "No.queries", "No.correct", "Acc"],
    }
}

fn row_cells(task: Task, r: &ReportRow) -> Vec<String> {
    let m = |k: &str| fmt_pct(r.metrics.get(k).copied().unwrap_or(f64::NAN));
    match task {
        Task::Graph => vec![r.movie.clone(), r.n_queries.to_string(), m("acc@1"), m("acc@2"), m("acc@3")],
        Task::Qa => vec![r.movie.clone(), r.n_queries.to_string(), r.n_correct.to_string(), m("acc")],
    }
}

fn render_table(header: &[&str], body: &[Vec<String>], total: &[String]) -> String {
    let ncol = header.len();
    let mut width: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for cells in body.iter().chain(std::iter::once(&total.to_vec())) {
        for (w, c) in width.iter_mut().zip(cells) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (i, c) in cells.iter().enumerate() {
            if i == 0 {
                let _ = write!(s, "{:<w$}", c, w = width[0]);
            } else {
                let _ = write!(s, "  {:>w$}", c, w = width[i]);
            }
        }
        s.trim_end().to_string()
    };
    let rule = "-".repeat(width.iter().sum::<usize>() + 2 * (ncol - 1));
    let mut out = String::new();
    let header: Vec<String> = header.iter().map(|h| h.to_string()).collect();
    let _ = writeln!(out, "{}", line(&header));
    let _ = writeln!(out, "{rule}");
    for cells in body {
        let _ = writeln!(out, "{}", line(cells));
    }
    let _ = writeln!(out, "{rule}");
    let _ = writeln!(out, "{}", line(total));
    out
}

impl Report {
    /// Aligned plain-text table, one row per movie plus the total.
    pub fn render_text(&self) -> String {
        let body: Vec<Vec<String>> = self.rows.iter().map(|r| row_cells(self.task, r)).collect();
        render_table(&columns(self.task), &body, &row_cells(self.task, &self.total))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path.as_ref())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub movie: String,
    pub n_queries: usize,
    pub clean: BTreeMap<String, f64>,
    pub noisy: BTreeMap<String, f64>,
    /// `noisy - clean` per metric.
    pub delta: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub task: Task,
    pub rows: Vec<DeltaRow>,
    pub total: DeltaRow,
}

fn delta_row(clean: &ReportRow, noisy: &ReportRow) -> Result<DeltaRow> {
    if clean.query_ids != noisy.query_ids {
        return Err(Error::Eval(format!(
            "movie {}: clean and noisy runs cover different queries",
            clean.movie
        )));
    }
    let mut delta = BTreeMap::new();
    for (k, c) in &clean.metrics {
        let n = noisy
            .metrics
            .get(k)
            .ok_or_else(|| Error::Eval(format!("movie {}: noisy report lacks {k}", clean.movie)))?;
        delta.insert(k.clone(), round2(n - c));
    }
    Ok(DeltaRow {
        movie: clean.movie.clone(),
        n_queries: clean.n_queries,
        clean: clean.metrics.clone(),
        noisy: noisy.metrics.clone(),
        delta,
    })
}

/// Per-movie and total metric deltas between a clean run and a perturbed
/// run over the same queries.
pub fn robustness_compare(clean: &Report, noisy: &Report) -> Result<DeltaReport> {
    if clean.task != noisy.task {
        return Err(Error::Eval("reports are for different tasks".into()));
    }
    let movies = |r: &Report| r.rows.iter().map(|x| x.movie.clone()).collect::<Vec<_>>();
    if movies(clean) != movies(noisy) {
        return Err(Error::Eval("reports cover different movies".into()));
    }
    let rows = clean
        .rows
        .iter()
        .zip(&noisy.rows)
        .map(|(c, n)| delta_row(c, n))
        .collect::<Result<Vec<_>>>()?;
    let total = delta_row(&clean.total, &noisy.total)?;
    Ok(DeltaReport {
        task: clean.task,
        rows,
        total,
    })
}

impl DeltaReport {
    /// Table with `clean / noisy (delta)` cells.
    pub fn render_text(&self) -> String {
        let cells = |r: &DeltaRow| {
            let mut v = vec![r.movie.clone(), r.n_queries.to_string()];
            for (k, d) in &r.delta {
                v.push(format!(
                    "{} / {} ({:+.2})",
                    fmt_pct(r.clean[k]),
                    fmt_pct(r.noisy[k]),
                    d
                ));
            }
            v
        };
        let mut header = vec!["Movie", "No.queries"];
        match self.task {
            Task::Graph => header.extend(["Acc@1", "Acc@2", "Acc@3"]),
            Task::Qa => header.push("Acc"),
        }
        let body: Vec<Vec<String>> = self.rows.iter().map(cells).collect();
        render_table(&header, &body, &cells(&self.total))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }
}

/// Gold-file record. QA query files can be used directly as gold files
/// since `answer_index` is accepted in place of `gold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldRecord {
    pub query_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub movie_id: Option<String>,
    #[serde(alias = "answer_index")]
    pub gold: Gold,
}

pub fn read_gold(path: impl AsRef<Path>) -> Result<Vec<GoldRecord>> {
    read_json(path.as_ref())
}

pub fn write_gold(path: impl AsRef<Path>, gold: &[GoldRecord]) -> Result<()> {
    write_json(path.as_ref(), gold)
}

/// One line of an answer file, graph or QA.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
enum AnswerRecord {
    Graph(RankedAnswer),
    Qa(QaAnswer),
}

/// Joins an answer file with gold records by `query_id`. Every answer
/// needs a gold entry; gold entries without an answer are an error too,
/// since a missing answer would otherwise inflate accuracy.
pub fn join_results(answers_path: impl AsRef<Path>, gold: &[GoldRecord]) -> Result<Vec<QueryResult>> {
    let answers: Vec<AnswerRecord> = read_json(answers_path.as_ref())?;
    let mut by_id: BTreeMap<&str, &GoldRecord> = BTreeMap::new();
    for g in gold {
        if by_id.insert(&g.query_id, g).is_some() {
            return Err(Error::Eval(format!("gold lists query {} twice", g.query_id)));
        }
    }
    let mut used = BTreeSet::new();
    let mut out = Vec::with_capacity(answers.len());
    for a in &answers {
        let (qid, outcome) = match a {
            AnswerRecord::Graph(r) => (
                &r.query_id,
                Outcome::Ranking(r.ranking.iter().map(|e| e.entity_id.clone()).collect()),
            ),
            AnswerRecord::Qa(q) => (&q.query_id, Outcome::ChosenOption(q.chosen_option)),
        };
        let g = by_id
            .get(qid.as_str())
            .ok_or_else(|| Error::Eval(format!("no gold answer for query {qid}")))?;
        used.insert(qid.clone());
        out.push(QueryResult {
            query_id: qid.clone(),
            movie_id: g.movie_id.clone().unwrap_or_else(|| DEFAULT_MOVIE.to_string()),
            outcome,
            gold: g.gold.clone(),
        });
    }
    if let Some(missing) = gold.iter().find(|g| !used.contains(&g.query_id)) {
        return Err(Error::Eval(format!("query {} has no answer", missing.query_id)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ranked(id: &str, movie: &str, gold_rank: usize, len: usize) -> QueryResult {
        let ranking: Vec<String> = (1..=len).map(|i| format!("e{i}")).collect();
        QueryResult {
            query_id: id.into(),
            movie_id: movie.into(),
            outcome: Outcome::Ranking(ranking),
            gold: Gold::Entity(format!("e{gold_rank}")),
        }
    }

    fn choice(id: &str, movie: &str, correct: bool) -> QueryResult {
        QueryResult {
            query_id: id.into(),
            movie_id: movie.into(),
            outcome: Outcome::ChosenOption(if correct { 2 } else { 0 }),
            gold: Gold::Option(2),
        }
    }

    fn from_ranks(ranks: &[usize]) -> Vec<QueryResult> {
        ranks
            .iter()
            .enumerate()
            .map(|(i, &r)| ranked(&format!("q{i}"), "m", r, 5))
            .collect()
    }

    #[test]
    fn percentage_rounds_half_up() {
        assert_eq!(percentage(57, 151), 37.75);
        assert_eq!(percentage(52, 151), 34.44);
        assert_eq!(percentage(1, 8), 12.5);
        // 1/3 = 33.333.. and 2/3 = 66.666..
        assert_eq!(percentage(1, 3), 33.33);
        assert_eq!(percentage(2, 3), 66.67);
        // 1/16 = 6.25 exactly, 1/32 = 3.125 -> half-up 3.13
        assert_eq!(percentage(1, 32), 3.13);
        assert_eq!(percentage(0, 10), 0.0);
    }

    #[test]
    fn rank_multiset_metrics() {
        let mut ranks = vec![1; 12];
        ranks.extend([2; 3]);
        ranks.extend([3; 2]);
        ranks.extend([4; 3]);
        let rs = from_ranks(&ranks);
        assert_eq!(acc_at_n(&rs, 1).unwrap(), 60.0);
        assert_eq!(acc_at_n(&rs, 2).unwrap(), 75.0);
        assert_eq!(acc_at_n(&rs, 3).unwrap(), 85.0);
    }

    #[test]
    fn saturation_and_absent_gold() {
        let rs = from_ranks(&[1, 1, 1]);
        for n in 1..5 {
            assert_eq!(acc_at_n(&rs, n).unwrap(), 100.0);
        }
        let mut rs = from_ranks(&[1, 2]);
        rs.push(ranked("qx", "m", 9, 3));
        assert_eq!(acc_at_n(&rs, 3).unwrap(), 66.67);
        assert_eq!(acc_at_n(&rs, 100).unwrap(), 66.67);
    }

    #[test]
    fn qa_accuracy_examples() {
        let mk = |k: usize, n: usize| -> Vec<QueryResult> {
            (0..n).map(|i| choice(&format!("q{i}"), "m", i < k)).collect()
        };
        assert_eq!(qa_accuracy(&mk(57, 151)).unwrap(), 37.75);
        assert_eq!(qa_accuracy(&mk(52, 151)).unwrap(), 34.44);
        assert_eq!(qa_accuracy(&mk(0, 10)).unwrap(), 0.0);
    }

    #[test]
    fn empty_and_malformed_inputs() {
        assert!(acc_at_n(&[], 1).is_err());
        assert!(qa_accuracy(&[]).is_err());
        assert!(acc_at_n(&from_ranks(&[1]), 0).is_err());
        let mut r = ranked("q", "m", 1, 1);
        r.outcome = Outcome::Ranking(vec![]);
        assert!(acc_at_n(&[r], 1).is_err());
        let mut r = ranked("q", "m", 1, 1);
        r.gold = Gold::Option(0);
        assert!(acc_at_n(&[r], 1).is_err());
    }

    #[test]
    fn report_total_matches_concatenation() {
        let mut rs = vec![];
        for (m, ranks) in [("b", vec![1, 2, 4]), ("a", vec![1, 1])] {
            for (i, r) in ranks.into_iter().enumerate() {
                rs.push(ranked(&format!("{m}{i}"), m, r, 5));
            }
        }
        let rep = build_report(Task::Graph, &rs).unwrap();
        assert_eq!(rep.rows[0].movie, "a");
        assert_eq!(rep.rows[1].movie, "b");
        assert_eq!(rep.total.n_queries, 5);
        assert_eq!(rep.total.metrics["acc@1"], acc_at_n(&rs, 1).unwrap());
        assert_eq!(rep.total.metrics["acc@3"], 80.0);
        let text = rep.render_text();
        assert!(text.lines().next().unwrap().starts_with("Movie"));
        assert!(text.contains("Total"));
    }

    #[test]
    fn duplicate_query_in_movie_rejected() {
        let rs = vec![ranked("q", "m", 1, 2), ranked("q", "m", 2, 2)];
        assert!(build_report(Task::Graph, &rs).is_err());
    }

    #[test]
    fn identical_reports_have_zero_delta() {
        let rs = from_ranks(&[1, 2, 3, 1]);
        let rep = build_report(Task::Graph, &rs).unwrap();
        let d = robustness_compare(&rep, &rep).unwrap();
        assert!(d.total.delta.values().all(|v| *v == 0.0));
    }

    #[test]
    fn mismatched_query_sets_rejected() {
        let a = build_report(Task::Graph, &from_ranks(&[1, 2])).unwrap();
        let b = build_report(Task::Graph, &from_ranks(&[1, 2, 3])).unwrap();
        assert!(robustness_compare(&a, &b).is_err());
        let q = build_report(Task::Qa, &[choice("q0", "m", true)]).unwrap();
        assert!(robustness_compare(&a, &q).is_err());
    }

    #[test]
    fn gold_accepts_answer_index_alias() {
        let g: GoldRecord =
            serde_json::from_str(r#"{"query_id":"q1","question":"?","options":["a"],"answer_index":0}"#)
                .unwrap();
        assert_eq!(g.gold, Gold::Option(0));
        let g: GoldRecord = serde_json::from_str(r#"{"query_id":"q1","gold":"ruth"}"#).unwrap();
        assert_eq!(g.gold, Gold::Entity("ruth".into()));
    }
}
