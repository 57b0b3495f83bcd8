//! User-study analytics: review records, Mann-Whitney U tests, medians by
//! condition, acceptance rate and box-plot summaries of quality rankings.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Assisted,
    Unassisted,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Assisted => "assisted",
            Condition::Unassisted => "unassisted",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One confirmed review of one sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewRecord {
    pub session_id: String,
    pub reviewer_id: String,
    pub sentence_id: String,
    pub condition: Condition,
    pub suggestion_available: bool,
    pub suggestion_shown: bool,
    #[serde(default)]
    pub accepted: Option<bool>,
    pub review_time_ms: u64,
    pub insert_count: u64,
    pub delete_count: u64,
    pub levenshtein_orig_to_final: u64,
    pub final_text: String,
    /// Characters in the original translation; the denominator of every
    /// length-normalized quantity. Filled in by the service.
    #[serde(default)]
    pub original_length: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub submitted_at: Option<String>,
}

/// A violated record invariant, naming the offending field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl ReviewRecord {
    pub fn validate(&self) -> std::result::Result<(), FieldError> {
        let err = |field, message: &str| {
            Err(FieldError {
                field,
                message: message.to_owned(),
            })
        };
        if self.suggestion_shown && self.condition != Condition::Assisted {
            return err("suggestion_shown", "a suggestion cannot be shown in the unassisted condition");
        }
        if self.suggestion_shown && !self.suggestion_available {
            return err("suggestion_shown", "no suggestion was available to show");
        }
        match (self.suggestion_shown, self.accepted) {
            (true, None) => err("accepted", "required when a suggestion was shown"),
            (false, Some(_)) => err("accepted", "only defined when a suggestion was shown"),
            _ => Ok(()),
        }
    }

    pub fn group(&self) -> Option<Group> {
        if !self.suggestion_available {
            return None;
        }
        if self.suggestion_shown {
            Some(Group::Shown)
        } else if self.condition == Condition::Unassisted {
            Some(Group::Hidden)
        } else {
            None
        }
    }
}

/// Reads JSON-lines review records, skipping blank lines.
pub fn parse_records(text: &str) -> Result<Vec<ReviewRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: ReviewRecord = serde_json::from_str(line)
            .map_err(|e| Error::invalid(format!("record line {}: {e}", i + 1)))?;
        r.validate()
            .map_err(|e| Error::invalid(format!("record line {}: {e}", i + 1)))?;
        out.push(r);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MwOptions {
    /// Largest combined sample size tested by full enumeration.
    pub exact_max: usize,
    pub continuity: bool,
}

impl Default for MwOptions {
    fn default() -> Self {
        Self {
            exact_max: 16,
            continuity: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MwResult {
    pub u_x: f64,
    pub u_y: f64,
    /// Two-sided.
    pub p: f64,
    #[serde(skip)]
    pub method: Method,
    /// Every value in both samples is equal.
    pub degenerate: bool,
}

/// Ranks starting at 1, ties sharing the mean of their positions.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn mann_whitney_u(x: &[f64], y: &[f64]) -> Result<MwResult> {
    mann_whitney_u_with(x, y, MwOptions::default())
}

pub fn mann_whitney_u_with(x: &[f64], y: &[f64], opts: MwOptions) -> Result<MwResult> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::invalid("Mann-Whitney needs two non-empty samples"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("Mann-Whitney samples must be finite"));
    }
    let (n1, n2) = (x.len(), y.len());
    let nn = (n1 * n2) as f64;
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let ranks = midranks(&pooled);
    let r1: f64 = ranks[..n1].iter().sum();
    let u_x = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    let u_y = nn - u_x;
    let method = if n1 + n2 <= opts.exact_max { Method::Exact } else { Method::Normal };
    if pooled.iter().all(|&v| v == pooled[0]) {
        return Ok(MwResult { u_x, u_y, p: 1.0, method, degenerate: true });
    }
    let mean = nn / 2.0;
    let p = match method {
        Method::Exact => exact_p(&ranks, n1, u_x),
        Method::Normal => {
            let n = (n1 + n2) as f64;
            let mut counts: HashMap<u64, usize> = HashMap::new();
            for v in &pooled {
                *counts.entry(v.to_bits()).or_default() += 1;
            }
            let ties: f64 = counts.values().map(|&t| (t * t * t - t) as f64).sum();
            let var = nn / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
            let cc = if opts.continuity { 0.5 } else { 0.0 };
            let z = ((u_x - mean).abs() - cc).max(0.0) / var.sqrt();
            let normal = Normal::new(0.0, 1.0).expect("unit normal");
            (2.0 * normal.sf(z)).min(1.0)
        }
    };
    Ok(MwResult { u_x, u_y, p, method, degenerate: false })
}

/// Two-sided p by enumerating every way to pick `n1` of the pooled ranks.
fn exact_p(ranks: &[f64], n1: usize, u_obs: f64) -> f64 {
    let n = ranks.len();
    let offset = (n1 * (n1 + 1)) as f64 / 2.0;
    let mean = (n1 * (n - n1)) as f64 / 2.0;
    let dev_obs = (u_obs - mean).abs();
    let (mut total, mut extreme) = (0u64, 0u64);
    let mut chosen = Vec::with_capacity(n1);
    fn walk(
        ranks: &[f64],
        start: usize,
        left: usize,
        sum: f64,
        chosen: &mut Vec<usize>,
        f: &mut dyn FnMut(f64),
    ) {
        if left == 0 {
            f(sum);
            return;
        }
        for i in start..=ranks.len() - left {
            chosen.push(i);
            walk(ranks, i + 1, left - 1, sum + ranks[i], chosen, f);
            chosen.pop();
        }
    }
    walk(ranks, 0, n1, 0.0, &mut chosen, &mut |sum| {
        total += 1;
        if ((sum - offset) - mean).abs() >= dev_obs - 1e-9 {
            extreme += 1;
        }
    });
    extreme as f64 / total as f64
}

/// Middle value, or the mean of the two middle values.
pub fn median(values: &[f64]) -> Option<f64> {
    quantile(values, 0.5)
}

/// Inclusive linear-interpolation quantile (position `q·(n−1)`).
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxSummary {
    pub n: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    /// `q3 + 1.5·iqr`.
    pub upper_fence: f64,
    pub max: f64,
}

pub fn box_summary(values: &[f64]) -> Option<BoxSummary> {
    let q1 = quantile(values, 0.25)?;
    let q3 = quantile(values, 0.75)?;
    Some(BoxSummary {
        n: values.len(),
        median: quantile(values, 0.5)?,
        q1,
        q3,
        iqr: q3 - q1,
        upper_fence: q3 + 1.5 * (q3 - q1),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Analysis groups over items that had a suggestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    /// Unassisted items whose suggestion was withheld.
    Hidden,
    Shown,
    Accepted,
    Declined,
}

impl Group {
    pub const ALL: [Group; 4] = [Group::Hidden, Group::Shown, Group::Accepted, Group::Declined];

    pub fn label(self) -> &'static str {
        match self {
            Group::Hidden => "Hidden",
            Group::Shown => "Shown (Overall)",
            Group::Accepted => "  Accepted",
            Group::Declined => "  Declined",
        }
    }

    fn contains(self, r: &ReviewRecord) -> bool {
        match (self, r.group()) {
            (Group::Hidden, Some(Group::Hidden)) | (Group::Shown, Some(Group::Shown)) => true,
            (Group::Accepted, Some(Group::Shown)) => r.accepted == Some(true),
            (Group::Declined, Some(Group::Shown)) => r.accepted == Some(false),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Time,
    Inserts,
    Deletes,
    InsertsDeletes,
    Levenshtein,
}

impl Quantity {
    pub const ALL: [Quantity; 5] = [
        Quantity::Time,
        Quantity::Inserts,
        Quantity::Deletes,
        Quantity::InsertsDeletes,
        Quantity::Levenshtein,
    ];

    pub fn raw(self, r: &ReviewRecord) -> f64 {
        match self {
            Quantity::Time => r.review_time_ms as f64,
            Quantity::Inserts => r.insert_count as f64,
            Quantity::Deletes => r.delete_count as f64,
            Quantity::InsertsDeletes => (r.insert_count + r.delete_count) as f64,
            Quantity::Levenshtein => r.levenshtein_orig_to_final as f64,
        }
    }

    /// Per character of the original translation; absent for empty originals.
    pub fn normalized(self, r: &ReviewRecord) -> Option<f64> {
        (r.original_length > 0).then(|| self.raw(r) / r.original_length as f64)
    }

    pub fn label(self) -> &'static str {
        match self {
            Quantity::Time => "Review Time",
            Quantity::Inserts => "Inserts",
            Quantity::Deletes => "Deletes",
            Quantity::InsertsDeletes => "Inserts+Deletes",
            Quantity::Levenshtein => "Levenshtein Dist",
        }
    }

    /// Cell text for a length-normalized median.
    pub fn format_normalized(self, v: f64) -> String {
        match self {
            Quantity::Time => format!("{v:.0}"),
            _ => trim_decimals(v, 4),
        }
    }

    /// Cell text for a raw median, with units.
    pub fn format_raw(self, v: f64) -> String {
        match self {
            Quantity::Time => format!("{} sec", trim_decimals(v / 1000.0, 4)),
            _ if v == 1.0 => "1 char".to_owned(),
            _ => format!("{} chars", trim_decimals(v, 4)),
        }
    }
}

impl FromStr for Quantity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "time" => Ok(Quantity::Time),
            "inserts" => Ok(Quantity::Inserts),
            "deletes" => Ok(Quantity::Deletes),
            "inserts+deletes" | "inserts_deletes" => Ok(Quantity::InsertsDeletes),
            "levenshtein" => Ok(Quantity::Levenshtein),
            _ => Err(Error::invalid(format!("unknown quantity `{s}`"))),
        }
    }
}

fn trim_decimals(v: f64, places: usize) -> String {
    let s = format!("{v:.places$}");
    let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.') } else { &s };
    if s == "-0" { "0".to_owned() } else { s.to_owned() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MedianCell {
    pub n: usize,
    pub raw: Option<f64>,
    pub normalized: Option<f64>,
}

/// Raw and length-normalized medians of one quantity per group. Empty groups
/// have absent values.
pub fn length_normalized_medians(records: &[ReviewRecord], quantity: Quantity) -> BTreeMap<Group, MedianCell> {
    Group::ALL
        .into_iter()
        .map(|g| {
            let members: Vec<&ReviewRecord> = records.iter().filter(|r| g.contains(r)).collect();
            let raw: Vec<f64> = members.iter().map(|r| quantity.raw(r)).collect();
            let norm: Vec<f64> = members.iter().filter_map(|r| quantity.normalized(r)).collect();
            (
                g,
                MedianCell {
                    n: members.len(),
                    raw: median(&raw),
                    normalized: median(&norm),
                },
            )
        })
        .collect()
}

/// Accepted over shown; `None` when nothing was shown.
pub fn acceptance_rate(records: &[ReviewRecord]) -> Option<f64> {
    let shown = records.iter().filter(|r| r.suggestion_shown).count();
    let accepted = records
        .iter()
        .filter(|r| r.suggestion_shown && r.accepted == Some(true))
        .count();
    (shown > 0).then(|| accepted as f64 / shown as f64)
}

/// One judge's rank of one reviewer's version of a sentence (1 = best).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankEntry {
    pub sentence_id: String,
    pub reviewer_id: String,
    pub rank: u32,
}

/// Ranks grouped by sentence.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct QualityRanking(pub BTreeMap<String, Vec<(String, u32)>>);

impl QualityRanking {
    pub fn from_entries(entries: impl IntoIterator<Item = RankEntry>) -> Result<Self> {
        let mut map: BTreeMap<String, Vec<(String, u32)>> = BTreeMap::new();
        for e in entries {
            map.entry(e.sentence_id).or_default().push((e.reviewer_id, e.rank));
        }
        let q = QualityRanking(map);
        q.validate()?;
        Ok(q)
    }

    pub fn parse_jsonl(text: &str) -> Result<Self> {
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| {
                serde_json::from_str::<RankEntry>(l).map_err(|e| Error::invalid(format!("ranking line {}: {e}", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_entries(entries)
    }

    pub fn validate(&self) -> Result<()> {
        for (sentence, ranks) in &self.0 {
            let n = ranks.len() as u32;
            if let Some((reviewer, rank)) = ranks.iter().find(|(_, r)| *r == 0 || *r > n) {
                return Err(Error::invalid(format!(
                    "sentence {sentence}: reviewer {reviewer} has rank {rank}, expected 1..={n}"
                )));
            }
            let mut seen: Vec<&str> = ranks.iter().map(|(r, _)| r.as_str()).collect();
            seen.sort_unstable();
            if seen.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::invalid(format!("sentence {sentence}: a reviewer is ranked twice")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestRow {
    pub quantity: String,
    pub groups: (Group, Group),
    pub n: (usize, usize),
    pub u: f64,
    pub p: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualitySection {
    pub hidden: Option<BoxSummary>,
    pub shown: Option<BoxSummary>,
    pub test: Option<TestRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyReport {
    pub n_records: usize,
    pub acceptance_rate: Option<f64>,
    pub medians: BTreeMap<Quantity, BTreeMap<Group, MedianCell>>,
    pub tests: Vec<TestRow>,
    pub quality: Option<QualitySection>,
}

fn group_values(records: &[ReviewRecord], g: Group, f: impl Fn(&ReviewRecord) -> Option<f64>) -> Vec<f64> {
    records.iter().filter(|r| g.contains(r)).filter_map(f).collect()
}

fn test_row(name: &str, a: Group, b: Group, x: &[f64], y: &[f64], opts: MwOptions) -> Option<TestRow> {
    let r = mann_whitney_u_with(x, y, opts).ok()?;
    Some(TestRow {
        quantity: name.to_owned(),
        groups: (a, b),
        n: (x.len(), y.len()),
        u: r.u_x,
        p: r.p,
        degenerate: r.degenerate,
    })
}

/// Runs the full battery: length-normalized time, inserts+deletes and
/// Levenshtein distance for hidden vs shown and accepted vs declined, plus
/// quality ranks hidden vs shown when rankings are given. Comparisons with
/// an empty side are left out.
pub fn study_summary(records: &[ReviewRecord], rankings: Option<&QualityRanking>) -> StudyReport {
    study_summary_with(records, rankings, MwOptions::default())
}

pub fn study_summary_with(
    records: &[ReviewRecord],
    rankings: Option<&QualityRanking>,
    opts: MwOptions,
) -> StudyReport {
    let medians = Quantity::ALL
        .into_iter()
        .map(|q| (q, length_normalized_medians(records, q)))
        .collect();
    let mut tests = Vec::new();
    for q in [Quantity::Time, Quantity::InsertsDeletes, Quantity::Levenshtein] {
        for (a, b) in [(Group::Hidden, Group::Shown), (Group::Accepted, Group::Declined)] {
            let x = group_values(records, a, |r| q.normalized(r));
            let y = group_values(records, b, |r| q.normalized(r));
            let name = format!("{} (length-norm)", q.label());
            tests.extend(test_row(&name, a, b, &x, &y, opts));
        }
    }
    let quality = rankings.map(|rk| {
        let by_key: HashMap<(&str, &str), &ReviewRecord> = records
            .iter()
            .map(|r| ((r.reviewer_id.as_str(), r.sentence_id.as_str()), r))
            .collect();
        let (mut hidden, mut shown) = (Vec::new(), Vec::new());
        for (sentence, ranks) in &rk.0 {
            for (reviewer, rank) in ranks {
                match by_key.get(&(reviewer.as_str(), sentence.as_str())).and_then(|r| r.group()) {
                    Some(Group::Hidden) => hidden.push(*rank as f64),
                    Some(Group::Shown) => shown.push(*rank as f64),
                    _ => {}
                }
            }
        }
        QualitySection {
            hidden: box_summary(&hidden),
            shown: box_summary(&shown),
            test: test_row("Quality rank", Group::Hidden, Group::Shown, &hidden, &shown, opts),
        }
    });
    StudyReport {
        n_records: records.len(),
        acceptance_rate: acceptance_rate(records),
        medians,
        tests,
        quality,
    }
}

impl StudyReport {
    /// Length-normalized medians laid out with groups as rows.
    pub fn medians_table(&self) -> String {
        let cols = [Quantity::Time, Quantity::InsertsDeletes, Quantity::Levenshtein];
        let mut s = format!("{:<18}{:>14}{:>18}{:>18}\n", "Suggestions", "Review Time", "Inserts", "Levenshtein");
        s += &format!("{:<18}{:>14}{:>18}{:>18}\n", "", "(ms/char)", "+ Deletes", "Distance");
        for g in Group::ALL {
            s += &format!("{:<18}", g.label());
            for (q, w) in cols.iter().zip([14, 18, 18]) {
                let cell = self.medians[q][&g].normalized.map_or("-".to_owned(), |v| q.format_normalized(v));
                s += &format!("{cell:>w$}");
            }
            s.push('\n');
        }
        s
    }

    /// Raw and normalized medians for every quantity, groups as columns.
    pub fn full_table(&self) -> String {
        let mut s = format!("{:<40}", "");
        for g in Group::ALL {
            s += &format!("{:>18}", g.label().trim());
        }
        s.push('\n');
        for q in Quantity::ALL {
            let unit = if q == Quantity::Time { "ms/char" } else { "" };
            for normalized in [false, true] {
                let name = if normalized {
                    format!("{} (length-norm, median)", q.label())
                } else {
                    format!("{} (median)", q.label())
                };
                s += &format!("{name:<40}");
                for g in Group::ALL {
                    let c = &self.medians[&q][&g];
                    let cell = if normalized {
                        c.normalized.map(|v| {
                            let t = q.format_normalized(v);
                            if unit.is_empty() { t } else { format!("{t} {unit}") }
                        })
                    } else {
                        c.raw.map(|v| q.format_raw(v))
                    };
                    s += &format!("{:>18}", cell.unwrap_or_else(|| "-".to_owned()));
                }
                s.push('\n');
            }
        }
        s
    }

    pub fn tests_table(&self) -> String {
        let mut s = format!("{:<34}{:>22}{:>12}{:>10}\n", "Quantity", "Groups", "U", "p");
        let rows = self.tests.iter().chain(self.quality.iter().filter_map(|q| q.test.as_ref()));
        for t in rows {
            let groups = format!("{:?} vs {:?}", t.groups.0, t.groups.1);
            s += &format!("{:<34}{:>22}{:>12.1}{:>10.4}\n", t.quantity, groups, t.u, t.p);
        }
        s
    }
}

impl fmt::Display for StudyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.acceptance_rate {
            Some(a) => writeln!(f, "Accepted suggestions: {:.0}%", a * 100.0)?,
            None => writeln!(f, "Accepted suggestions: undefined (none shown)")?,
        }
        writeln!(f)?;
        write!(f, "{}", self.medians_table())?;
        writeln!(f)?;
        write!(f, "{}", self.full_table())?;
        writeln!(f)?;
        write!(f, "{}", self.tests_table())?;
        if let Some(q) = &self.quality {
            writeln!(f)?;
            writeln!(f, "{:<10}{:>6}{:>9}{:>9}{:>9}{:>9}", "Quality", "n", "median", "Q1", "Q3", "fence")?;
            for (name, b) in [("Hidden", &q.hidden), ("Shown", &q.shown)] {
                if let Some(b) = b {
                    writeln!(f, "{name:<10}{:>6}{:>9.2}{:>9.2}{:>9.2}{:>9.2}", b.n, b.median, b.q1, b.q3, b.upper_fence)?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn rec(cond: Condition, avail: bool, shown: bool, accepted: Option<bool>, time: u64, len: u64) -> ReviewRecord {
        ReviewRecord {
            session_id: "s".into(),
            reviewer_id: "r".into(),
            sentence_id: format!("x{time}"),
            condition: cond,
            suggestion_available: avail,
            suggestion_shown: shown,
            accepted,
            review_time_ms: time,
            insert_count: 0,
            delete_count: 0,
            levenshtein_orig_to_final: 0,
            final_text: String::new(),
            original_length: len,
            submitted_at: None,
        }
    }

    #[test]
    fn record_invariants() {
        use Condition::*;
        assert!(rec(Assisted, true, true, Some(true), 1, 1).validate().is_ok());
        assert_eq!(rec(Unassisted, true, true, Some(true), 1, 1).validate().unwrap_err().field, "suggestion_shown");
        assert_eq!(rec(Assisted, false, true, Some(true), 1, 1).validate().unwrap_err().field, "suggestion_shown");
        assert_eq!(rec(Assisted, true, true, None, 1, 1).validate().unwrap_err().field, "accepted");
        assert_eq!(rec(Assisted, true, false, Some(false), 1, 1).validate().unwrap_err().field, "accepted");
    }

    #[test]
    fn small_separated_samples() {
        let r = mann_whitney_u(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(r.u_x, 0.0);
        assert_eq!(r.u_y, 4.0);
        // Two of the six equally likely arrangements are this extreme.
        assert!((r.p - 2.0 / 6.0).abs() < 1e-12);
        assert_eq!(r.method, Method::Exact);
    }

    #[test]
    fn identical_multisets_are_centered() {
        let x = [1.0, 3.0, 3.0, 7.0];
        let r = mann_whitney_u(&x, &x).unwrap();
        assert_eq!(r.u_x, 8.0);
        assert_eq!(r.p, 1.0);
    }

    #[test]
    fn all_equal_is_degenerate() {
        let r = mann_whitney_u(&[2.0; 20], &[2.0; 5]).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p, 1.0);
        assert!(mann_whitney_u(&[], &[1.0]).is_err());
    }

    #[test]
    fn midranks_share_ties() {
        assert_eq!(midranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn quantiles_interpolate_inclusively() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(median(&v), Some(2.5));
        assert_eq!(quantile(&v, 0.25), Some(1.75));
        assert_eq!(quantile(&v, 0.75), Some(3.25));
        let b = box_summary(&v).unwrap();
        assert!((b.upper_fence - (3.25 + 1.5 * 1.5)).abs() < 1e-12);
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn hand_computed_group_medians() {
        use Condition::*;
        let recs = vec![
            rec(Unassisted, true, false, None, 300, 10),
            rec(Unassisted, true, false, None, 100, 10),
            rec(Unassisted, true, false, None, 200, 10),
            rec(Assisted, true, true, Some(true), 40, 2),
            rec(Assisted, true, true, Some(true), 60, 2),
            rec(Assisted, true, true, Some(false), 90, 3),
            // No suggestion: belongs to no analysis group.
            rec(Unassisted, false, false, None, 5000, 1),
        ];
        let m = length_normalized_medians(&recs, Quantity::Time);
        assert_eq!(m[&Group::Hidden].raw, Some(200.0));
        assert_eq!(m[&Group::Hidden].normalized, Some(20.0));
        assert_eq!(m[&Group::Shown].normalized, Some(30.0));
        assert_eq!(m[&Group::Accepted].normalized, Some(25.0));
        assert_eq!(m[&Group::Declined].n, 1);
        let mut rev = recs.clone();
        rev.reverse();
        assert_eq!(length_normalized_medians(&rev, Quantity::Time), m);
    }

    #[test]
    fn acceptance_counts() {
        use Condition::*;
        let mut recs: Vec<ReviewRecord> = (0..3).map(|i| rec(Assisted, true, true, Some(true), i, 1)).collect();
        recs.push(rec(Assisted, true, true, Some(false), 9, 1));
        recs.push(rec(Unassisted, true, false, None, 9, 1));
        assert_eq!(acceptance_rate(&recs), Some(0.75));
        assert_eq!(acceptance_rate(&recs[4..]), None);
    }

    #[test]
    fn number_formatting() {
        assert_eq!(Quantity::Time.format_normalized(361.2), "361");
        assert_eq!(Quantity::InsertsDeletes.format_normalized(0.0625), "0.0625");
        assert_eq!(Quantity::InsertsDeletes.format_normalized(0.0), "0");
        assert_eq!(Quantity::Time.format_raw(34047.5), "34.0475 sec");
        assert_eq!(Quantity::Inserts.format_raw(1.5), "1.5 chars");
        assert_eq!(Quantity::Levenshtein.format_raw(1.0), "1 char");
    }

    #[test]
    fn rankings_are_validated() {
        let e = |s: &str, r: &str, k| RankEntry { sentence_id: s.into(), reviewer_id: r.into(), rank: k };
        assert!(QualityRanking::from_entries([e("a", "r1", 1), e("a", "r2", 1)]).is_ok());
        assert!(QualityRanking::from_entries([e("a", "r1", 3), e("a", "r2", 1)]).is_err());
        assert!(QualityRanking::from_entries([e("a", "r1", 1), e("a", "r1", 2)]).is_err());
    }
}
