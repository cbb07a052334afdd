use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::CaseSet;
use crate::error::{Error, Result};

/// Attributes to group by: one axis for a plain subgroup, two for an
/// intersectional group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSpec {
    axes: Vec<String>,
}

impl GroupSpec {
    pub fn new<S: Into<String>>(axes: impl IntoIterator<Item = S>) -> Result<Self> {
        let axes: Vec<String> = axes.into_iter().map(Into::into).collect();
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::InvalidGroupSpec(format!(
                "expected 1 or 2 axes, got {}",
                axes.len()
            )));
        }
        if axes.iter().any(|a| a.is_empty()) {
            return Err(Error::InvalidGroupSpec("empty axis name".into()));
        }
        if axes.len() == 2 && axes[0] == axes[1] {
            return Err(Error::InvalidGroupSpec(format!(
                "axis {:?} listed twice",
                axes[0]
            )));
        }
        Ok(Self { axes })
    }

    /// Parses a comma-separated axis list such as `sex,race`.
    pub fn parse(list: &str) -> Result<Self> {
        Self::new(list.split(',').map(str::trim))
    }

    pub fn axes(&self) -> &[String] {
        &self.axes
    }
}

impl fmt::Display for GroupSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.axes.join(","))
    }
}

/// One group's attribute values, in the axis order of its [`GroupSpec`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupKey {
    values: Vec<(String, String)>,
}

impl GroupKey {
    pub fn new(values: Vec<(String, String)>) -> Self {
        Self { values }
    }

    pub fn single(axis: impl Into<String>, value: impl Into<String>) -> Self {
        Self::new(vec![(axis.into(), value.into())])
    }

    pub fn values(&self) -> &[(String, String)] {
        &self.values
    }
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (axis, value)) in self.values.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{axis}={value}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    /// Case ids per group, groups in lexicographic key order, ids in set order.
    pub groups: BTreeMap<GroupKey, Vec<String>>,
    /// Cases missing at least one axis attribute.
    pub unassigned: Vec<String>,
}

pub fn partition(cases: &CaseSet, spec: &GroupSpec) -> Result<Partition> {
    for axis in spec.axes() {
        if !cases.iter().any(|c| c.attributes.contains_key(axis)) {
            return Err(Error::UnknownAxis(axis.clone()));
        }
    }
    let mut groups: BTreeMap<GroupKey, Vec<String>> = BTreeMap::new();
    let mut unassigned = Vec::new();
    for case in cases {
        let values: Option<Vec<(String, String)>> = spec
            .axes()
            .iter()
            .map(|axis| case.attr(axis).map(|v| (axis.clone(), v.to_string())))
            .collect();
        match values {
            Some(values) => groups
                .entry(GroupKey::new(values))
                .or_default()
                .push(case.id.clone()),
            None => unassigned.push(case.id.clone()),
        }
    }
    Ok(Partition { groups, unassigned })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Case;

    fn set(cases: Vec<Case>) -> CaseSet {
        CaseSet::new(cases, "test").unwrap()
    }

    #[test]
    fn buckets_by_single_axis() {
        let cs = set(vec![
            Case::new("c1", "r").with_attr("sex", "f"),
            Case::new("c2", "r").with_attr("sex", "f"),
            Case::new("c3", "r").with_attr("sex", "m"),
            Case::new("c4", "r").with_attr("sex", "m"),
        ]);
        let p = partition(&cs, &GroupSpec::parse("sex").unwrap()).unwrap();
        let groups: Vec<_> = p.groups.iter().collect();
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].0, &GroupKey::single("sex", "f"));
        assert_eq!(groups[0].1, &vec!["c1".to_string(), "c2".to_string()]);
        assert_eq!(groups[1].1, &vec!["c3".to_string(), "c4".to_string()]);
        assert!(p.unassigned.is_empty());
    }

    #[test]
    fn intersectional_key_follows_axis_order() {
        let cs = set(vec![Case::new("c1", "r")
            .with_attr("sex", "f")
            .with_attr("race", "black")]);
        let p = partition(&cs, &GroupSpec::parse("sex,race").unwrap()).unwrap();
        let key = p.groups.keys().next().unwrap();
        assert_eq!(key.to_string(), "sex=f;race=black");
    }

    #[test]
    fn missing_attribute_goes_to_unassigned() {
        let cs = set(vec![
            Case::new("c1", "r").with_attr("race", "white"),
            Case::new("c2", "r").with_attr("sex", "m"),
        ]);
        let p = partition(&cs, &GroupSpec::parse("race").unwrap()).unwrap();
        assert_eq!(p.unassigned, vec!["c2".to_string()]);
    }

    #[test]
    fn axis_absent_everywhere_is_an_error() {
        let cs = set(vec![Case::new("c1", "r").with_attr("sex", "m")]);
        let err = partition(&cs, &GroupSpec::parse("race").unwrap()).unwrap_err();
        assert!(matches!(err, Error::UnknownAxis(ref a) if a == "race"));
    }

    #[test]
    fn spec_validation() {
        assert!(GroupSpec::new(Vec::<String>::new()).is_err());
        assert!(GroupSpec::parse("a,b,c").is_err());
        assert!(GroupSpec::parse("sex,sex").is_err());
        assert!(GroupSpec::parse("sex,").is_err());
    }
}
