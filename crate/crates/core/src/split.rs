//! Stratified partitions of sample indices.

use rand::seq::SliceRandom;

use crate::rng;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SplitError {
    #[error("{folds} folds requested for {samples} samples")]
    TooManyFolds { folds: usize, samples: usize },
    #[error("at least 2 folds are required")]
    TooFewFolds,
    #[error("holdout fraction {0} must lie in (0, 1)")]
    Fraction(f64),
    #[error("class {class} has {size} samples, fewer than the {folds} folds; lower the fold count or drop the class")]
    ClassTooSmall { class: usize, size: usize, folds: usize },
    #[error("holdout would leave one side empty")]
    EmptySide,
}

/// Indices of each class (by label id), shuffled with the given seed.
fn shuffled_classes(labels: &[usize], seed: u64) -> Vec<Vec<usize>> {
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class = vec![Vec::new(); classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    let mut r = rng::seeded(seed);
    for members in &mut by_class {
        members.shuffle(&mut r);
    }
    by_class
}

/// Sorted `(train, test)` positions of one fold.
pub type Fold = (Vec<usize>, Vec<usize>);

/// `k` (train, test) pairs whose test sides partition `0..labels.len()`.
/// Every class needs at least `k` members.
/// Each class is shuffled and then dealt round-robin with a counter that
/// carries over between classes, so fold sizes differ by at most one and
/// every class is spread as evenly as possible.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<Vec<Fold>, SplitError> {
    if k < 2 {
        return Err(SplitError::TooFewFolds);
    }
    if k > labels.len() {
        return Err(SplitError::TooManyFolds { folds: k, samples: labels.len() });
    }
    let classes = shuffled_classes(labels, seed);
    if let Some((class, members)) = classes.iter().enumerate().find(|(_, m)| !m.is_empty() && m.len() < k) {
        return Err(SplitError::ClassTooSmall { class, size: members.len(), folds: k });
    }
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for members in classes {
        for i in members {
            folds[next % k].push(i);
            next += 1;
        }
    }
    Ok((0..k)
        .map(|f| {
            let mut test = folds[f].clone();
            test.sort_unstable();
            let mut train: Vec<usize> =
                folds.iter().enumerate().filter(|(g, _)| *g != f).flat_map(|(_, v)| v.iter().copied()).collect();
            train.sort_unstable();
            (train, test)
        })
        .collect())
}

/// Stratified (train, holdout) split of the positions `0..labels.len()`.
/// Every class with at least two members contributes
/// `round(fraction * size)` (at least one) holdout samples.
pub fn stratified_holdout(labels: &[usize], fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), SplitError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(SplitError::Fraction(fraction));
    }
    let mut train = Vec::new();
    let mut hold = Vec::new();
    for members in shuffled_classes(labels, seed) {
        let n = members.len();
        let take = if n < 2 { 0 } else { ((fraction * n as f64).round() as usize).clamp(1, n - 1) };
        hold.extend_from_slice(&members[..take]);
        train.extend_from_slice(&members[take..]);
    }
    if train.is_empty() || hold.is_empty() {
        return Err(SplitError::EmptySide);
    }
    train.sort_unstable();
    hold.sort_unstable();
    Ok((train, hold))
}
