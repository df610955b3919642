//! Stratified k-fold partitions.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub num_folds: usize,
    /// Fold of each sample.
    pub assignments: Vec<usize>,
    pub seed: u64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl FoldPlan {
    /// Sample indices validated in fold `f`, ascending.
    pub fn fold(&self, f: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] == f).collect()
    }

    /// Sample indices trained on when validating fold `f`, ascending.
    pub fn complement(&self, f: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] != f).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_folds];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }
}

fn check(n: usize, num_folds: usize) -> Result<()> {
    if num_folds < 2 {
        return Err(Error::Invalid(format!("at least 2 folds are required, got {num_folds}")));
    }
    if num_folds > n {
        return Err(Error::Invalid(format!("{num_folds} folds exceed the {n} samples")));
    }
    Ok(())
}

fn small_class_warnings(labels: &[usize], num_folds: usize) -> Vec<String> {
    let mut counts = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_insert(0usize) += 1;
    }
    counts
        .into_iter()
        .filter(|&(_, c)| c < num_folds)
        .map(|(l, c)| {
            let w = format!("class {l} has {c} sample(s), fewer than {num_folds} folds");
            log::warn!("{w}");
            w
        })
        .collect()
}

/// Shuffles each class with `seed`, lists the classes one after another and
/// deals the list round-robin over the folds. Every fold then holds
/// `floor` or `ceil` of its proportional share of each class, and fold sizes
/// differ by at most one.
pub fn stratified_folds(labels: &[usize], num_folds: usize, seed: u64) -> Result<FoldPlan> {
    check(labels.len(), num_folds)?;
    let warnings = small_class_warnings(labels, num_folds);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut assignments = vec![0; labels.len()];
    let mut next = 0;
    for members in by_class.values_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            assignments[i] = next % num_folds;
            next += 1;
        }
    }
    Ok(FoldPlan {
        num_folds,
        assignments,
        seed,
        warnings,
    })
}

/// Like [`stratified_folds`], but samples sharing a group id stay together.
/// Groups are labelled by their most common class and placed, largest
/// first, on the fold holding the fewest of that class (then the fewest
/// samples, then the lowest index). Ungrouped samples form singleton groups.
pub fn stratified_folds_grouped(
    labels: &[usize],
    groups: &[Option<String>],
    num_folds: usize,
    seed: u64,
) -> Result<FoldPlan> {
    if groups.len() != labels.len() {
        return Err(Error::Invalid(format!(
            "{} group ids for {} samples",
            groups.len(),
            labels.len()
        )));
    }
    if groups.iter().all(Option::is_none) {
        return stratified_folds(labels, num_folds, seed);
    }
    check(labels.len(), num_folds)?;
    let mut warnings = small_class_warnings(labels, num_folds);
    let mut named: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let mut units: Vec<Vec<usize>> = Vec::new();
    for (i, g) in groups.iter().enumerate() {
        match g {
            Some(g) => named.entry(g.as_str()).or_default().push(i),
            None => units.push(vec![i]),
        }
    }
    units.extend(named.into_values());
    if units.len() < num_folds {
        return Err(Error::Invalid(format!(
            "{} groups cannot fill {num_folds} folds",
            units.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    units.shuffle(&mut rng);
    units.sort_by_key(|u| std::cmp::Reverse(u.len()));

    let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut class_counts = vec![vec![0usize; num_classes]; num_folds];
    let mut sizes = vec![0usize; num_folds];
    let mut assignments = vec![0; labels.len()];
    for unit in &units {
        let mut votes = vec![0usize; num_classes];
        for &i in unit {
            votes[labels[i]] += 1;
        }
        let label = (0..num_classes).max_by_key(|&c| (votes[c], std::cmp::Reverse(c))).unwrap_or(0);
        if votes[label] < unit.len() {
            let w = format!("a group mixes classes; placed by its majority class {label}");
            log::warn!("{w}");
            warnings.push(w);
        }
        let fold = (0..num_folds)
            .min_by_key(|&f| (class_counts[f][label], sizes[f], f))
            .expect("at least two folds");
        for &i in unit {
            assignments[i] = fold;
            class_counts[fold][labels[i]] += 1;
        }
        sizes[fold] += unit.len();
    }
    Ok(FoldPlan {
        num_folds,
        assignments,
        seed,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_balanced_samples() {
        let labels = [0, 1, 2, 0, 1, 2, 0, 1, 2];
        let plan = stratified_folds(&labels, 3, 4).unwrap();
        for f in 0..3 {
            let mut classes: Vec<usize> = plan.fold(f).iter().map(|&i| labels[i]).collect();
            classes.sort();
            assert_eq!(classes, vec![0, 1, 2]);
        }
    }

    #[test]
    fn single_member_class_warns() {
        let labels = [0, 0, 0, 0, 0, 1];
        let plan = stratified_folds(&labels, 3, 0).unwrap();
        assert_eq!(plan.warnings.len(), 1);
        assert_eq!(plan.fold_sizes().iter().sum::<usize>(), 6);
    }

    #[test]
    fn errors() {
        assert!(stratified_folds(&[0, 1], 3, 0).is_err());
        assert!(stratified_folds(&[0, 1, 0], 1, 0).is_err());
    }

    #[test]
    fn groups_stay_together() {
        let labels = [0, 0, 1, 1, 0, 1, 0, 1, 0, 1];
        let groups: Vec<Option<String>> = ["a", "a", "b", "b", "", "", "", "", "", ""]
            .iter()
            .map(|g| (!g.is_empty()).then(|| g.to_string()))
            .collect();
        let plan = stratified_folds_grouped(&labels, &groups, 3, 1).unwrap();
        assert_eq!(plan.assignments[0], plan.assignments[1]);
        assert_eq!(plan.assignments[2], plan.assignments[3]);
        assert!(plan.fold_sizes().iter().all(|&s| s >= 2));
    }
}
