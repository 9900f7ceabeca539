use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Group counts for the train/validation/test roles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitScheme {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitScheme {
    pub fn new(train: usize, val: usize, test: usize) -> Self {
        Self { train, val, test }
    }
}

impl std::str::FromStr for SplitScheme {
    type Err = Error;

    /// Parses `a-b-c`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split('-')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::config("scheme", format!("expected a-b-c, got `{s}`")))?;
        match parts[..] {
            [a, b, c] => Ok(Self::new(a, b, c)),
            _ => Err(Error::config("scheme", format!("expected a-b-c, got `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub groups: usize,
    pub scheme: SplitScheme,
    pub folds: Vec<Fold>,
}

fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    if items.len() < k {
        return Vec::new();
    }
    let mut out = Vec::new();
    for (i, &first) in items.iter().enumerate() {
        for mut rest in combinations(&items[i + 1..], k - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Every assignment of groups to (train, val, test) sets of the scheme's sizes.
pub fn make_splits(groups: usize, scheme: SplitScheme) -> Result<SplitPlan> {
    let need = scheme.train + scheme.val + scheme.test;
    if scheme.train == 0 || scheme.test == 0 {
        return Err(Error::config("scheme", "train and test need at least one group"));
    }
    if groups < need {
        return Err(Error::config(
            "groups",
            format!("{groups} groups cannot fill a {need}-group scheme"),
        ));
    }
    let all: Vec<usize> = (0..groups).collect();
    let mut folds = Vec::new();
    for train in combinations(&all, scheme.train) {
        let rest: Vec<usize> = all.iter().copied().filter(|g| !train.contains(g)).collect();
        for val in combinations(&rest, scheme.val) {
            let rest2: Vec<usize> = rest.iter().copied().filter(|g| !val.contains(g)).collect();
            for test in combinations(&rest2, scheme.test) {
                folds.push(Fold {
                    train: train.clone(),
                    val: val.clone(),
                    test,
                });
            }
        }
    }
    Ok(SplitPlan {
        groups,
        scheme,
        folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_counts() {
        assert_eq!(make_splits(4, SplitScheme::new(2, 1, 1)).unwrap().folds.len(), 12);
        assert_eq!(make_splits(3, SplitScheme::new(1, 1, 1)).unwrap().folds.len(), 6);
        assert!(make_splits(3, SplitScheme::new(2, 1, 1)).is_err());
    }

    #[test]
    fn folds_are_disjoint_and_cover() {
        let plan = make_splits(4, "2-1-1".parse().unwrap()).unwrap();
        for f in &plan.folds {
            let mut all: Vec<usize> = f.train.iter().chain(&f.val).chain(&f.test).copied().collect();
            all.sort_unstable();
            assert_eq!(all, vec![0, 1, 2, 3]);
        }
        assert!("2-1".parse::<SplitScheme>().is_err());
    }
}
