//! Spearman rank correlation between uncertainty measures and segmentation quality.
//!
//! Ties receive average ranks and rho is the Pearson correlation of the rank
//! vectors. The two-sided p-value uses `t = rho * sqrt((n - 2) / (1 - rho^2))`
//! against Student's t with `n - 2` degrees of freedom. `|rho| = 1` saturates
//! to `p = 0`. An exact permutation p-value is available for `n <= 10`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::{CaseReport, Error, Result};

/// Spearman statistic for one pair of columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spearman {
    /// Rank correlation in `[-1, 1]`.
    pub rho: f64,
    /// Two-sided p-value in `[0, 1]`.
    pub p_value: f64,
    /// Pairs used after dropping missing values.
    pub n: usize,
    /// Pairs dropped because either member was missing.
    pub dropped: usize,
}

/// One row of a measure-vs-quality correlation table.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationResult {
    /// Uncertainty measure on the x side.
    pub measure: Measure,
    /// Quality column on the y side.
    pub quality: String,
    /// Rank correlation in `[-1, 1]`.
    pub rho: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    /// Cases used.
    pub n: usize,
    /// Cases dropped for an undefined measure or quality value.
    pub dropped: usize,
}

/// The three case-level uncertainty measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Measure {
    /// Coefficient of variation of sample volumes.
    Cv,
    /// Mean pairwise Dice.
    DPw,
    /// Mean uncertainty over the consensus foreground.
    ULabelled,
}

impl Measure {
    /// Table order: CV, D_pw, U_labelled.
    pub const ALL: [Measure; 3] = [Measure::Cv, Measure::DPw, Measure::ULabelled];

    /// Column name used in CSV files.
    pub fn name(self) -> &'static str {
        match self {
            Measure::Cv => "cv",
            Measure::DPw => "d_pw",
            Measure::ULabelled => "u_labelled",
        }
    }

    /// Parses a column name.
    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }

    /// The measure's value in `report`, `None` when undefined.
    pub fn value(self, report: &CaseReport) -> Option<f64> {
        match self {
            Measure::Cv => Some(report.cv),
            Measure::DPw => Some(report.d_pw),
            Measure::ULabelled => report.u_labelled,
        }
    }

    /// Whether a larger value means more uncertainty (false only for D_pw).
    pub fn higher_is_uncertain(self) -> bool {
        !matches!(self, Measure::DPw)
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    (sab, saa, sbb)
}

fn rank_correlation(rx: &[f64], ry: &[f64]) -> Result<f64> {
    let (sxy, sxx, syy) = pearson(rx, ry);
    if sxx == 0.0 {
        return Err(Error::UndefinedCorrelation("x"));
    }
    if syy == 0.0 {
        return Err(Error::UndefinedCorrelation("y"));
    }
    Ok((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// Spearman correlation; non-finite entries count as missing and drop their pair.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Spearman> {
    let keep = |v: &f64| v.is_finite().then_some(*v);
    let xs: Vec<Option<f64>> = x.iter().map(keep).collect();
    let ys: Vec<Option<f64>> = y.iter().map(keep).collect();
    spearman_with_missing(&xs, &ys)
}

fn complete_pairs(x: &[Option<f64>], y: &[Option<f64>]) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    if x.len() != y.len() {
        return Err(Error::UnequalLengths { x: x.len(), y: y.len() });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = x.iter().zip(y).filter_map(|(a, b)| Some(((*a)?, (*b)?))).unzip();
    let dropped = x.len() - xs.len();
    if xs.len() < 3 {
        return Err(Error::TooFewObservations { n: xs.len() });
    }
    Ok((xs, ys, dropped))
}

/// Spearman correlation with pairwise deletion of `None` entries.
pub fn spearman_with_missing(x: &[Option<f64>], y: &[Option<f64>]) -> Result<Spearman> {
    let (xs, ys, dropped) = complete_pairs(x, y)?;
    let rho = rank_correlation(&average_ranks(&xs), &average_ranks(&ys))?;
    let n = xs.len();
    Ok(Spearman {
        rho,
        p_value: t_test_p_value(rho, n),
        n,
        dropped,
    })
}

/// Two-sided p-value of a correlation `rho` over `n >= 3` pairs via the t approximation.
pub fn t_test_p_value(rho: f64, n: usize) -> f64 {
    if rho.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = rho * libm::sqrt(df / (1.0 - rho * rho));
    student_t_two_sided(t, df)
}

/// `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    let x = df / (df + t * t);
    regularized_incomplete_beta(x, df / 2.0, 0.5).clamp(0.0, 1.0)
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b) + a * libm::log(x) + b * libm::log1p(-x);
    let front = libm::exp(ln_front);
    // The continued fraction converges fast for x < (a + 1) / (a + b + 2).
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

/// Modified Lentz evaluation of the incomplete beta continued fraction.
fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Largest sample size accepted by [`spearman_exact`].
pub const EXACT_MAX_N: usize = 10;

/// Spearman correlation with an exact permutation p-value.
///
/// Enumerates all `n!` orderings of the y ranks, so `n` is limited to
/// [`EXACT_MAX_N`]. Meant for verifying the t approximation on small samples.
pub fn spearman_exact(x: &[f64], y: &[f64]) -> Result<Spearman> {
    let keep = |v: &f64| v.is_finite().then_some(*v);
    let xs: Vec<Option<f64>> = x.iter().map(keep).collect();
    let ys: Vec<Option<f64>> = y.iter().map(keep).collect();
    let (xs, ys, dropped) = complete_pairs(&xs, &ys)?;
    if xs.len() > EXACT_MAX_N {
        return Err(Error::InvalidParameter(
            "exact permutation test supports at most 10 pairs",
        ));
    }
    let rx = average_ranks(&xs);
    let mut ry = average_ranks(&ys);
    let rho = rank_correlation(&rx, &ry)?;

    // Centered ranks make rho proportional to a dot product; compare those.
    let n = rx.len();
    let mean = (n + 1) as f64 / 2.0;
    let cx: Vec<f64> = rx.iter().map(|r| r - mean).collect();
    for r in &mut ry {
        *r -= mean;
    }
    let observed = libm::fabs(dot(&cx, &ry));
    let tolerance = 1e-9 * (1.0 + observed);
    let (mut hits, mut total) = (0u64, 0u64);
    heap_permutations(&mut ry, &mut |perm| {
        total += 1;
        if libm::fabs(dot(&cx, perm)) >= observed - tolerance {
            hits += 1;
        }
    });
    Ok(Spearman {
        rho,
        p_value: hits as f64 / total as f64,
        n,
        dropped,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Visits every permutation of `items` (Heap's algorithm, iterative).
fn heap_permutations(items: &mut [f64], visit: &mut impl FnMut(&[f64])) {
    let n = items.len();
    let mut c = vec![0usize; n];
    visit(items);
    let mut i = 1;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                items.swap(0, i);
            } else {
                items.swap(c[i], i);
            }
            visit(items);
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// Correlates every measure with `dice` across `reports`, in table order.
///
/// Every report must carry a dice value. Cases with an undefined measure are
/// dropped for that row only.
pub fn correlation_table(reports: &[CaseReport]) -> Result<Vec<CorrelationResult>> {
    if let Some(r) = reports.iter().find(|r| r.dice.is_none()) {
        return Err(Error::MissingDice(r.case_id.clone()));
    }
    correlation_table_pairwise(reports)
}

/// Like [`correlation_table`], but a case without dice is dropped from every
/// row instead of being an error.
pub fn correlation_table_pairwise(reports: &[CaseReport]) -> Result<Vec<CorrelationResult>> {
    let dice: Vec<Option<f64>> = reports.iter().map(|r| r.dice).collect();
    Measure::ALL
        .iter()
        .map(|&measure| {
            let x: Vec<Option<f64>> = reports.iter().map(|r| measure.value(r)).collect();
            let s = spearman_with_missing(&x, &dice)?;
            Ok(CorrelationResult {
                measure,
                quality: "dice".into(),
                rho: s.rho,
                p_value: s.p_value,
                n: s.n,
                dropped: s.dropped,
            })
        })
        .collect()
}
