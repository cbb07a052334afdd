use std::collections::{BTreeMap, HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Case, CaseSet};
use crate::error::{Error, Result};

/// Balances the groups on `axis` by resampling minority groups with
/// replacement up to the majority count.
///
/// Original cases keep their order and come first; duplicates are appended
/// with ids of the form `<id>#dup<N>`. Cases without the axis attribute pass
/// through untouched.
pub fn oversample(cases: &CaseSet, axis: &str, seed: u64) -> Result<CaseSet> {
    let mut groups: BTreeMap<&str, Vec<&Case>> = BTreeMap::new();
    for case in cases {
        if let Some(value) = case.attr(axis) {
            groups.entry(value).or_default().push(case);
        }
    }
    if groups.is_empty() {
        return Err(Error::UnknownAxis(axis.to_string()));
    }
    if groups.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "axis {axis:?} has a single value; nothing to balance"
        )));
    }
    let target = groups.values().map(Vec::len).max().unwrap_or(0);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut taken: HashSet<String> = cases.iter().map(|c| c.id.clone()).collect();
    let mut dup_counts: HashMap<String, usize> = HashMap::new();
    let mut out: Vec<Case> = cases.cases().to_vec();
    for members in groups.values() {
        for _ in members.len()..target {
            let source = members[rng.random_range(0..members.len())];
            let counter = dup_counts.entry(source.id.clone()).or_insert(0);
            let id = loop {
                *counter += 1;
                let candidate = format!("{}#dup{}", source.id, counter);
                if !taken.contains(&candidate) {
                    break candidate;
                }
            };
            taken.insert(id.clone());
            let mut copy = source.clone();
            copy.id = id;
            out.push(copy);
        }
    }
    CaseSet::new(
        out,
        format!("{}+oversample({axis},{seed})", cases.provenance()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{partition, GroupSpec};

    fn sized(sizes: &[(&str, usize)]) -> CaseSet {
        let mut cases = Vec::new();
        for (value, n) in sizes {
            for i in 0..*n {
                cases.push(
                    Case::new(format!("{value}{i}"), format!("ref {value} {i}"))
                        .with_attr("g", *value),
                );
            }
        }
        CaseSet::new(cases, "test").unwrap()
    }

    fn counts(cs: &CaseSet) -> Vec<usize> {
        partition(cs, &GroupSpec::parse("g").unwrap())
            .unwrap()
            .groups
            .values()
            .map(Vec::len)
            .collect()
    }

    #[test]
    fn upsamples_minority_to_majority() {
        let out = oversample(&sized(&[("f", 3), ("m", 1)]), "g", 1).unwrap();
        assert_eq!(counts(&out), vec![3, 3]);
        assert!(out.get("m0#dup1").is_some());
        assert!(out.get("m0#dup2").is_some());
    }

    #[test]
    fn balanced_input_is_unchanged() {
        let input = sized(&[("f", 2), ("m", 2)]);
        let out = oversample(&input, "g", 1).unwrap();
        assert_eq!(out.cases(), input.cases());
    }

    #[test]
    fn three_groups() {
        let out = oversample(&sized(&[("a", 5), ("b", 2), ("c", 1)]), "g", 9).unwrap();
        assert_eq!(counts(&out), vec![5, 5, 5]);
        // 3 duplicates for b, 4 for c
        assert_eq!(out.len(), 8 + 3 + 4);
    }

    #[test]
    fn copies_keep_text_and_labels() {
        let input = sized(&[("a", 4), ("b", 1)]);
        let out = oversample(&input, "g", 3).unwrap();
        for case in out.iter().skip(input.len()) {
            let orig = input.get(case.id.split('#').next().unwrap()).unwrap();
            assert_eq!(case.reference, orig.reference);
            assert_eq!(case.attributes, orig.attributes);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let input = sized(&[("a", 6), ("b", 2)]);
        assert_eq!(
            oversample(&input, "g", 5).unwrap(),
            oversample(&input, "g", 5).unwrap()
        );
    }

    #[test]
    fn single_value_axis_is_an_error() {
        assert!(oversample(&sized(&[("a", 3)]), "g", 0).is_err());
        assert!(oversample(&sized(&[("a", 3)]), "missing", 0).is_err());
    }
}
