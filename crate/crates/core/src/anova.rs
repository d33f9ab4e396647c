//! Two-group F-test over confusion cost matrices with permutation
//! ("bootstrap") p-values.
//!
//! Every off-diagonal cell `(target k, confused j)` is one response variable.
//! With `n_{l,k}` answers of group `l` for target `k`:
//!
//! ```text
//! MS_B = sum_k sum_j sum_l n_{l,k} (mean_{l,k,j} - mean_{.,k,j})^2
//! MS_W = sum over answers and cells (x - mean_{l,k,j})^2 / (n_answers - 2 N (N - 1))
//! F    = MS_B / MS_W
//! ```
//!
//! The p-value is the fraction of label permutations whose F strictly exceeds
//! the observed F. Permutation `i` draws from a ChaCha8 stream `i` keyed by the
//! seed, so results do not depend on how iterations are spread over threads.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costmatrix::{AnswerRecord, Gender, MeanLogCostMatrix};
use crate::error::{Error, Result};

/// Attribute used to split answers into two groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    /// passenger vs. external
    Perspective,
    /// female vs. male; answers without either are excluded
    Gender,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "perspective" => Ok(Split::Perspective),
            "gender" => Ok(Split::Gender),
            other => Err(Error::InvalidGrouping(format!("unknown split {other:?}"))),
        }
    }
}

/// What the permutation keeps fixed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShuffleMode {
    /// Answer labels permuted freely; per-group totals preserved.
    #[default]
    GroupTotals,
    /// Answer labels permuted within each target class; every `n_{l,k}` preserved.
    TargetCounts,
    /// Participants reassigned as blocks; per-group participant counts preserved.
    Participant,
}

impl std::str::FromStr for ShuffleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "group_totals" | "group-totals" => Ok(ShuffleMode::GroupTotals),
            "target_counts" | "target-counts" => Ok(ShuffleMode::TargetCounts),
            "participant" => Ok(ShuffleMode::Participant),
            other => Err(Error::InvalidGrouping(format!(
                "unknown shuffle mode {other:?}"
            ))),
        }
    }
}

/// Answers labelled with one of exactly two groups, in dense form.
#[derive(Debug, Clone)]
pub struct GroupedAnswers {
    n_classes: usize,
    labels: [String; 2],
    targets: Vec<usize>,
    // n_answers x n_classes, 0 at the target column
    levels: Vec<u8>,
    groups: Vec<u8>,
    participants: Vec<usize>,
    n_participants: usize,
}

impl GroupedAnswers {
    /// `group_of` returns 0, 1, or `None` to exclude an answer.
    pub fn new<F>(answers: &[AnswerRecord], labels: [&str; 2], group_of: F) -> Result<Self>
    where
        F: Fn(&AnswerRecord) -> Option<usize>,
    {
        let mut n_classes = None;
        let mut targets = Vec::new();
        let mut levels = Vec::new();
        let mut groups = Vec::new();
        let mut participants = Vec::new();
        let mut participant_ids: HashMap<&str, usize> = HashMap::new();
        for answer in answers {
            let Some(group) = group_of(answer) else {
                continue;
            };
            if group > 1 {
                return Err(Error::InvalidGrouping(format!("group index {group}")));
            }
            let n = *n_classes.get_or_insert(answer.n_classes());
            if answer.n_classes() != n {
                return Err(Error::shape(
                    format!("{n} classes"),
                    format!("{} classes", answer.n_classes()),
                ));
            }
            let next = participant_ids.len();
            participants.push(
                *participant_ids
                    .entry(answer.participant_id.as_str())
                    .or_insert(next),
            );
            targets.push(answer.target());
            levels.extend_from_slice(answer.levels());
            groups.push(group as u8);
        }
        let g = Self {
            n_classes: n_classes.unwrap_or(0),
            labels: labels.map(str::to_string),
            targets,
            levels,
            groups,
            participants,
            n_participants: participant_ids.len(),
        };
        for (l, label) in g.labels.iter().enumerate() {
            if g.group_size(l) == 0 {
                return Err(Error::InvalidGrouping(format!("group {label:?} is empty")));
            }
        }
        let df = g.df();
        if df <= 0 {
            return Err(Error::InsufficientData {
                answers: g.n_answers(),
                df,
            });
        }
        Ok(g)
    }

    pub fn by_split(answers: &[AnswerRecord], split: Split) -> Result<Self> {
        use crate::costmatrix::Perspective;
        match split {
            Split::Perspective => Self::new(answers, ["passenger", "external"], |a| {
                Some(match a.perspective {
                    Perspective::Passenger => 0,
                    Perspective::External => 1,
                })
            }),
            Split::Gender => Self::new(answers, ["female", "male"], |a| match a.gender {
                Some(Gender::Female) => Some(0),
                Some(Gender::Male) => Some(1),
                _ => None,
            }),
        }
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_answers(&self) -> usize {
        self.targets.len()
    }

    pub fn labels(&self) -> [&str; 2] {
        [&self.labels[0], &self.labels[1]]
    }

    pub fn group_size(&self, group: usize) -> usize {
        self.groups
            .iter()
            .filter(|&&g| usize::from(g) == group)
            .count()
    }

    /// `n_{l,k}`: answers of `group` whose target is `target`.
    pub fn count(&self, group: usize, target: usize) -> usize {
        self.targets
            .iter()
            .zip(&self.groups)
            .filter(|&(&t, &g)| t == target && usize::from(g) == group)
            .count()
    }

    /// Free cells across both matrices: `2 N (N - 1)` (60 for six classes).
    pub fn free_cells(&self) -> usize {
        2 * self.n_classes * self.n_classes.saturating_sub(1)
    }

    /// Degrees of freedom of the within-group term.
    pub fn df(&self) -> i64 {
        self.n_answers() as i64 - self.free_cells() as i64
    }

    /// Mean exponent matrices per group, indexed `(confused, target)` like
    /// every other cost matrix.
    pub fn group_means(&self) -> [MeanLogCostMatrix; 2] {
        let stats = CellStats::new(self, &self.groups);
        [0, 1].map(|l| stats.mean_matrix(self.n_classes, l))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FStatistic {
    pub ms_between: f64,
    pub ms_within: f64,
    pub f: f64,
}

/// Per-cell sums and counts under one group assignment. Levels are small
/// integers, so the sums are exact.
struct CellStats {
    n: usize,
    // [group][target * n + confused]
    sums: [Vec<u64>; 2],
    // [group][target]
    counts: [Vec<u64>; 2],
}

impl CellStats {
    fn new(g: &GroupedAnswers, groups: &[u8]) -> Self {
        let n = g.n_classes;
        let mut stats = Self {
            n,
            sums: [vec![0; n * n], vec![0; n * n]],
            counts: [vec![0; n], vec![0; n]],
        };
        stats.fill(g, groups);
        stats
    }

    fn fill(&mut self, g: &GroupedAnswers, groups: &[u8]) {
        let n = self.n;
        for l in 0..2 {
            self.sums[l].iter_mut().for_each(|s| *s = 0);
            self.counts[l].iter_mut().for_each(|c| *c = 0);
        }
        for (a, (&target, &group)) in g.targets.iter().zip(groups).enumerate() {
            let l = usize::from(group);
            self.counts[l][target] += 1;
            let row = &g.levels[a * n..(a + 1) * n];
            let sums = &mut self.sums[l][target * n..(target + 1) * n];
            for (s, &x) in sums.iter_mut().zip(row) {
                *s += u64::from(x);
            }
        }
    }

    fn group_mean(&self, l: usize, target: usize, confused: usize) -> f64 {
        self.sums[l][target * self.n + confused] as f64 / self.counts[l][target] as f64
    }

    fn statistic(&self, g: &GroupedAnswers, groups: &[u8]) -> (f64, f64) {
        let n = self.n;
        let mut ms_between = 0.0;
        for k in 0..n {
            let n0 = self.counts[0][k];
            let n1 = self.counts[1][k];
            if n0 + n1 == 0 {
                continue;
            }
            for j in (0..n).filter(|&j| j != k) {
                let idx = k * n + j;
                let pooled = (self.sums[0][idx] + self.sums[1][idx]) as f64 / (n0 + n1) as f64;
                let mut cell = 0.0;
                for (l, n_l) in [(0, n0), (1, n1)] {
                    if n_l > 0 {
                        let d = self.group_mean(l, k, j) - pooled;
                        cell += n_l as f64 * d * d;
                    }
                }
                ms_between += cell;
            }
        }
        let mut ss_within = 0.0;
        for (a, (&k, &group)) in g.targets.iter().zip(groups).enumerate() {
            let l = usize::from(group);
            let row = &g.levels[a * n..(a + 1) * n];
            for (j, &x) in row.iter().enumerate() {
                if j != k {
                    let d = f64::from(x) - self.group_mean(l, k, j);
                    ss_within += d * d;
                }
            }
        }
        (ms_between, ss_within / g.df() as f64)
    }

    fn mean_matrix(&self, n: usize, l: usize) -> MeanLogCostMatrix {
        let mut entries = vec![None; n * n];
        let mut counts = vec![0; n * n];
        for k in 0..n {
            for j in (0..n).filter(|&j| j != k) {
                // stored as (row = confused j, col = target k)
                counts[j * n + k] = self.counts[l][k];
                if self.counts[l][k] > 0 {
                    entries[j * n + k] = Some(self.group_mean(l, k, j));
                }
            }
        }
        MeanLogCostMatrix::from_entries(n, entries, counts).expect("consistent shape")
    }
}

/// F for an arbitrary assignment; `None` when MS_W vanishes while MS_B does not.
fn f_for(stats: &mut CellStats, g: &GroupedAnswers, groups: &[u8]) -> (f64, f64, Option<f64>) {
    stats.fill(g, groups);
    let (ms_between, ms_within) = stats.statistic(g, groups);
    let f = if ms_between == 0.0 {
        Some(0.0)
    } else if ms_within == 0.0 {
        None
    } else {
        Some(ms_between / ms_within)
    };
    (ms_between, ms_within, f)
}

/// Between/within mean squares and their ratio for the observed grouping.
///
/// `F = 0` whenever MS_B is exactly zero, including the fully degenerate case
/// where every answer is identical.
pub fn f_statistic(g: &GroupedAnswers) -> Result<FStatistic> {
    let mut stats = CellStats::new(g, &g.groups);
    match f_for(&mut stats, g, &g.groups) {
        (ms_between, ms_within, Some(f)) => Ok(FStatistic {
            ms_between,
            ms_within,
            f,
        }),
        (_, _, None) => Err(Error::ZeroWithinVariance),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FTestResult {
    pub ms_between: f64,
    pub ms_within: f64,
    pub f: f64,
    pub p_value: f64,
    pub shuffles: u64,
    pub seed: u64,
    pub exceed_count: u64,
    pub mode: ShuffleMode,
    pub group_labels: [String; 2],
    pub group_sizes: [usize; 2],
    pub degrees_of_freedom: i64,
    /// Per-group mean exponents, `(confused, target)` indexed.
    pub group_means: [MeanLogCostMatrix; 2],
}

/// Options for [`bootstrap_p`].
#[derive(Debug, Clone, Copy)]
pub struct BootstrapConfig {
    pub shuffles: u64,
    pub seed: u64,
    pub mode: ShuffleMode,
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
}

impl BootstrapConfig {
    pub fn new(shuffles: u64, seed: u64) -> Self {
        Self {
            shuffles,
            seed,
            mode: ShuffleMode::default(),
            workers: None,
        }
    }

    pub fn mode(mut self, mode: ShuffleMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn workers(mut self, workers: usize) -> Self {
        self.workers = Some(workers);
        self
    }
}

/// Observed F plus the fraction of `shuffles` label permutations whose F
/// strictly exceeds it.
pub fn bootstrap_p(g: &GroupedAnswers, config: BootstrapConfig) -> Result<FTestResult> {
    if config.shuffles == 0 {
        return Err(Error::InvalidShuffleCount);
    }
    let observed = f_statistic(g)?;
    let shuffler = Shuffler::new(g, config.mode)?;

    let run = || -> u64 {
        (0..config.shuffles)
            .into_par_iter()
            .map_init(
                || (CellStats::new(g, &g.groups), g.groups.clone()),
                |(stats, groups), i| {
                    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                    rng.set_stream(i);
                    shuffler.permute(&mut rng, groups);
                    match f_for(stats, g, groups).2 {
                        Some(f) => u64::from(f > observed.f),
                        // zero within-variance with separated groups: F = +inf
                        None => 1,
                    }
                },
            )
            .sum()
    };
    let exceed_count = match config.workers {
        Some(workers) => rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| Error::InvalidGrouping(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };

    Ok(FTestResult {
        ms_between: observed.ms_between,
        ms_within: observed.ms_within,
        f: observed.f,
        p_value: exceed_count as f64 / config.shuffles as f64,
        shuffles: config.shuffles,
        seed: config.seed,
        exceed_count,
        mode: config.mode,
        group_labels: g.labels.clone(),
        group_sizes: [g.group_size(0), g.group_size(1)],
        degrees_of_freedom: g.df(),
        group_means: g.group_means(),
    })
}

struct Shuffler {
    mode: ShuffleMode,
    base: Vec<u8>,
    // answer indices per target class
    strata: Vec<Vec<usize>>,
    // group of each participant, and the participant of each answer
    participant_groups: Vec<u8>,
    participants: Vec<usize>,
}

impl Shuffler {
    fn new(g: &GroupedAnswers, mode: ShuffleMode) -> Result<Self> {
        let mut strata = vec![Vec::new(); g.n_classes];
        let mut participant_groups = vec![u8::MAX; g.n_participants];
        if mode == ShuffleMode::TargetCounts {
            for (a, &t) in g.targets.iter().enumerate() {
                strata[t].push(a);
            }
        }
        if mode == ShuffleMode::Participant {
            for (&p, &group) in g.participants.iter().zip(&g.groups) {
                if participant_groups[p] != u8::MAX && participant_groups[p] != group {
                    return Err(Error::InvalidGrouping(
                        "a participant has answers in both groups; participant shuffling needs a fixed group per participant".into(),
                    ));
                }
                participant_groups[p] = group;
            }
        }
        Ok(Self {
            mode,
            base: g.groups.clone(),
            strata,
            participant_groups,
            participants: g.participants.clone(),
        })
    }

    fn permute(&self, rng: &mut ChaCha8Rng, groups: &mut [u8]) {
        match self.mode {
            ShuffleMode::GroupTotals => {
                groups.copy_from_slice(&self.base);
                groups.shuffle(rng);
            }
            ShuffleMode::TargetCounts => {
                let mut labels = Vec::new();
                for stratum in &self.strata {
                    labels.clear();
                    labels.extend(stratum.iter().map(|&a| self.base[a]));
                    labels.shuffle(rng);
                    for (&a, &l) in stratum.iter().zip(&labels) {
                        groups[a] = l;
                    }
                }
            }
            ShuffleMode::Participant => {
                let mut labels = self.participant_groups.clone();
                labels.shuffle(rng);
                for (g, &p) in groups.iter_mut().zip(&self.participants) {
                    *g = labels[p];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costmatrix::Perspective;
    use rand::Rng;

    fn answer(id: &str, p: Perspective, target: usize, levels: Vec<u8>) -> AnswerRecord {
        AnswerRecord::new(id, p, "img", target, levels).unwrap()
    }

    fn noisy_corpus(n: usize, effect: u8, seed: u64) -> Vec<AnswerRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let p = if i % 2 == 0 {
                    Perspective::Passenger
                } else {
                    Perspective::External
                };
                let shift = if p == Perspective::External {
                    effect
                } else {
                    0
                };
                let levels = (0..6).map(|_| rng.random_range(0..=2u8) + shift).collect();
                answer(&format!("p{i}"), p, (i / 2) % 6, levels)
            })
            .collect()
    }

    #[test]
    fn identical_groups_give_zero() {
        let base = noisy_corpus(40, 0, 3);
        let mut answers = Vec::new();
        for a in &base {
            let mut x = a.clone();
            x.perspective = Perspective::Passenger;
            let mut y = a.clone();
            y.perspective = Perspective::External;
            answers.push(x);
            answers.push(y);
        }
        let g = GroupedAnswers::by_split(&answers, Split::Perspective).unwrap();
        let f = f_statistic(&g).unwrap();
        assert_eq!(f.ms_between, 0.0);
        assert_eq!(f.f, 0.0);
        assert!(f.ms_within > 0.0);
    }

    #[test]
    fn constant_groups_have_zero_within_variance() {
        let mut answers = Vec::new();
        for i in 0..31 {
            answers.push(answer(
                &format!("a{i}"),
                Perspective::Passenger,
                0,
                vec![0, 2, 2, 2, 2, 2],
            ));
            answers.push(answer(
                &format!("b{i}"),
                Perspective::External,
                0,
                vec![0, 4, 4, 4, 4, 4],
            ));
        }
        let g = GroupedAnswers::by_split(&answers, Split::Perspective).unwrap();
        assert_eq!(g.df(), 2);
        assert!(matches!(f_statistic(&g), Err(Error::ZeroWithinVariance)));
        assert!(matches!(
            bootstrap_p(&g, BootstrapConfig::new(10, 1)),
            Err(Error::ZeroWithinVariance)
        ));
    }

    #[test]
    fn all_identical_answers_give_zero_p() {
        let answers: Vec<_> = (0..80)
            .map(|i| {
                let p = if i % 2 == 0 {
                    Perspective::Passenger
                } else {
                    Perspective::External
                };
                answer(&format!("p{i}"), p, i % 6, vec![3; 6])
            })
            .collect();
        let g = GroupedAnswers::by_split(&answers, Split::Perspective).unwrap();
        let r = bootstrap_p(&g, BootstrapConfig::new(200, 9)).unwrap();
        assert_eq!(r.f, 0.0);
        assert_eq!(r.exceed_count, 0);
        assert_eq!(r.p_value, 0.0);
    }

    #[test]
    fn too_few_answers() {
        let answers = noisy_corpus(60, 0, 1);
        assert!(matches!(
            GroupedAnswers::by_split(&answers, Split::Perspective),
            Err(Error::InsufficientData { df: 0, .. })
        ));
        assert!(GroupedAnswers::by_split(&noisy_corpus(61, 0, 1), Split::Perspective).is_ok());
    }

    #[test]
    fn empty_group_rejected() {
        let answers: Vec<_> = noisy_corpus(100, 0, 1)
            .into_iter()
            .map(|a| a.with_gender(Some(Gender::Female)))
            .collect();
        assert!(matches!(
            GroupedAnswers::by_split(&answers, Split::Gender),
            Err(Error::InvalidGrouping(_))
        ));
    }

    #[test]
    fn gender_split_excludes_unknown() {
        let answers: Vec<_> = noisy_corpus(200, 0, 5)
            .into_iter()
            .enumerate()
            .map(|(i, a)| {
                a.with_gender(match i % 3 {
                    0 => Some(Gender::Female),
                    1 => Some(Gender::Male),
                    _ => None,
                })
            })
            .collect();
        let g = GroupedAnswers::by_split(&answers, Split::Gender).unwrap();
        assert_eq!(g.n_answers(), 134);
        assert_eq!(g.labels(), ["female", "male"]);
    }

    #[test]
    fn zero_shuffles_rejected() {
        let g = GroupedAnswers::by_split(&noisy_corpus(120, 1, 2), Split::Perspective).unwrap();
        assert!(matches!(
            bootstrap_p(&g, BootstrapConfig::new(0, 1)),
            Err(Error::InvalidShuffleCount)
        ));
    }

    #[test]
    fn strong_effect_is_significant_in_every_mode() {
        let g = GroupedAnswers::by_split(&noisy_corpus(240, 2, 11), Split::Perspective).unwrap();
        for mode in [
            ShuffleMode::GroupTotals,
            ShuffleMode::TargetCounts,
            ShuffleMode::Participant,
        ] {
            let r = bootstrap_p(&g, BootstrapConfig::new(500, 4).mode(mode)).unwrap();
            assert!(r.p_value < 0.01, "{mode:?}: {}", r.p_value);
            assert_eq!(r.mode, mode);
        }
    }

    #[test]
    fn target_count_mode_preserves_cell_counts() {
        let g = GroupedAnswers::by_split(&noisy_corpus(150, 0, 8), Split::Perspective).unwrap();
        let shuffler = Shuffler::new(&g, ShuffleMode::TargetCounts).unwrap();
        let mut groups = g.groups.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        shuffler.permute(&mut rng, &mut groups);
        for k in 0..6 {
            let count = |gs: &[u8]| {
                g.targets
                    .iter()
                    .zip(gs)
                    .filter(|&(&t, &l)| t == k && l == 0)
                    .count()
            };
            assert_eq!(count(&groups), count(&g.groups));
        }
    }

    #[test]
    fn participant_mode_requires_consistent_groups() {
        let mut answers = noisy_corpus(100, 0, 2);
        answers[1].participant_id = answers[0].participant_id.clone();
        let g = GroupedAnswers::by_split(&answers, Split::Perspective).unwrap();
        assert!(bootstrap_p(
            &g,
            BootstrapConfig::new(10, 1).mode(ShuffleMode::Participant)
        )
        .is_err());
    }

    #[test]
    fn group_means_match_aggregation() {
        let answers = noisy_corpus(150, 1, 21);
        let g = GroupedAnswers::by_split(&answers, Split::Perspective).unwrap();
        let [passenger, external] = g.group_means();
        let direct = crate::costmatrix::aggregate_answers(&answers, |a| {
            a.perspective == Perspective::External
        })
        .unwrap();
        assert_eq!(external.entries(), direct.entries());
        assert!(passenger.is_complete());
    }
}
