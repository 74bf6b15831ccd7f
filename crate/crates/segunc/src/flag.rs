//! Flag policies: threshold rules over the case-level measures that route
//! cases to human review.
//!
//! ```toml
//! mode = "any"          # or "all"
//!
//! [[rule]]
//! measure = "d_pw"      # cv | d_pw | u_labelled
//! comparator = "below"  # above | below (strict)
//! cutoff = 0.9
//! ```

use std::fmt;
use std::fs;
use std::path::Path;

use segunc_core::{CaseReport, Measure};
use serde::Deserialize;

use crate::{Error, Result};

/// Reason attached to every case whose `u_labelled` is undefined.
pub const UNDEFINED_MEASURE: &str = "undefined-measure";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Flag when at least one rule fires.
    #[default]
    Any,
    /// Flag when every rule fires.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Comparator {
    Above,
    Below,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rule {
    pub measure: Measure,
    pub comparator: Comparator,
    pub cutoff: f64,
}

impl Rule {
    /// Whether the rule fires; `None` when the measure is undefined.
    pub fn fires(&self, report: &CaseReport) -> Option<bool> {
        let v = self.measure.value(report)?;
        Some(match self.comparator {
            Comparator::Above => v > self.cutoff,
            Comparator::Below => v < self.cutoff,
        })
    }

    /// Whether the comparator points towards "more uncertain" for this measure.
    pub fn is_oriented(&self) -> bool {
        let above = self.comparator == Comparator::Above;
        above == self.measure.higher_is_uncertain()
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.comparator {
            Comparator::Above => '>',
            Comparator::Below => '<',
        };
        write!(f, "{}{op}{}", self.measure, self.cutoff)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlagPolicy {
    pub mode: Mode,
    pub rules: Vec<Rule>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyFile {
    #[serde(default)]
    mode: Mode,
    #[serde(default, rename = "rule")]
    rules: Vec<RuleEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleEntry {
    measure: String,
    comparator: Comparator,
    cutoff: f64,
}

impl FlagPolicy {
    /// Reads a policy file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Parses and validates policy text.
    pub fn parse(text: &str) -> Result<Self> {
        let file: PolicyFile = toml::from_str(text).map_err(|e| Error::Policy(e.message().to_owned()))?;
        let rules = file
            .rules
            .into_iter()
            .map(|r| {
                let measure = Measure::from_name(&r.measure).ok_or_else(|| {
                    Error::Policy(format!(
                        "unknown measure `{}` (expected cv, d_pw or u_labelled)",
                        r.measure
                    ))
                })?;
                if !r.cutoff.is_finite() {
                    return Err(Error::Policy(format!("cutoff for `{}` must be finite", r.measure)));
                }
                Ok(Rule {
                    measure,
                    comparator: r.comparator,
                    cutoff: r.cutoff,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if rules.is_empty() {
            return Err(Error::Policy("at least one [[rule]] is required".into()));
        }
        Ok(Self { mode: file.mode, rules })
    }

    /// Messages for rules whose comparator looks reversed.
    pub fn warnings(&self) -> Vec<String> {
        self.rules
            .iter()
            .filter(|r| !r.is_oriented())
            .map(|r| {
                let usual = if r.measure.higher_is_uncertain() {
                    "above"
                } else {
                    "below"
                };
                format!(
                    "rule `{r}` flags confident cases; {} usually flags `{usual}`",
                    r.measure
                )
            })
            .collect()
    }

    /// Reasons a case is flagged; empty when it is not.
    pub fn evaluate(&self, report: &CaseReport) -> Vec<String> {
        let mut reasons = Vec::new();
        if report.u_labelled.is_none() {
            reasons.push(UNDEFINED_MEASURE.to_owned());
        }
        let fired: Vec<&Rule> = self.rules.iter().filter(|r| r.fires(report) == Some(true)).collect();
        let triggered = match self.mode {
            Mode::Any => !fired.is_empty(),
            Mode::All => fired.len() == self.rules.len(),
        };
        if triggered {
            reasons.extend(fired.iter().map(|r| r.to_string()));
        }
        reasons
    }

    /// Flagged cases with their reasons, in input order.
    pub fn apply(&self, reports: &[CaseReport]) -> Vec<(String, Vec<String>)> {
        reports
            .iter()
            .filter_map(|r| {
                let reasons = self.evaluate(r);
                (!reasons.is_empty()).then(|| (r.case_id.clone(), reasons))
            })
            .collect()
    }
}
