//! Partitions of the ensemble into exchangeable groups.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// How to split an M-member ensemble into exchangeable groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GroupingKind {
    /// Control member alone, all perturbed members together.
    TwoGroup,
    /// Control, odd-numbered perturbed members, even-numbered perturbed members.
    ThreeGroup,
    /// Explicit 1-based index sets.
    Custom(Vec<Vec<usize>>),
}

impl fmt::Display for GroupingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupingKind::TwoGroup => f.write_str("two_group"),
            GroupingKind::ThreeGroup => f.write_str("three_group"),
            GroupingKind::Custom(sets) => write!(f, "custom:{}", format_index_sets(sets)),
        }
    }
}

impl FromStr for GroupingKind {
    type Err = Error;

    /// Accepts `two_group`, `three_group` or `custom:1;2,3;4` (groups separated
    /// by `;`, 1-based members by `,`).
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "two_group" => Ok(GroupingKind::TwoGroup),
            "three_group" => Ok(GroupingKind::ThreeGroup),
            other => match other.strip_prefix("custom:") {
                Some(sets) => Ok(GroupingKind::Custom(parse_index_sets(sets)?)),
                None => Err(Error::Grouping(format!("unknown grouping `{other}`"))),
            },
        }
    }
}

pub(crate) fn format_index_sets(sets: &[Vec<usize>]) -> String {
    sets.iter()
        .map(|g| {
            g.iter()
                .map(|i| i.to_string())
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join(";")
}

pub(crate) fn parse_index_sets(s: &str) -> Result<Vec<Vec<usize>>> {
    s.split(';')
        .map(|group| {
            group
                .split(',')
                .map(|i| {
                    i.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::Grouping(format!("bad member index `{i}`")))
                })
                .collect()
        })
        .collect()
}

/// Validated partition of member indices into `m` groups.
///
/// Indices are stored 0-based. Besides the partition itself the scheme fixes a
/// canonical layout used by every fitter: members are arranged group by group,
/// sorted by value inside each group (see [`GroupingScheme::arrange`]). Since
/// members of one group are exchangeable this loses nothing, and it makes all
/// sums independent of the within-group member order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupingScheme {
    groups: Vec<Vec<usize>>,
    group_of_slot: Vec<usize>,
    offsets: Vec<usize>,
}

impl GroupingScheme {
    /// Builds a scheme from 1-based index sets over `1..=members`.
    pub fn from_index_sets(sets: &[Vec<usize>], members: usize) -> Result<Self> {
        if members < 2 {
            return Err(Error::Grouping(format!("need M >= 2, got {members}")));
        }
        let mut seen = vec![false; members];
        let mut groups = Vec::with_capacity(sets.len());
        for (k, set) in sets.iter().enumerate() {
            if set.is_empty() {
                return Err(Error::Grouping(format!("group {} is empty", k + 1)));
            }
            let mut group = Vec::with_capacity(set.len());
            for &i in set {
                if i == 0 || i > members {
                    return Err(Error::Grouping(format!(
                        "member index {i} outside 1..={members}"
                    )));
                }
                if std::mem::replace(&mut seen[i - 1], true) {
                    return Err(Error::Grouping(format!("member {i} appears in two groups")));
                }
                group.push(i - 1);
            }
            group.sort_unstable();
            groups.push(group);
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Grouping(format!("member {} is in no group", i + 1)));
        }

        let mut offsets = vec![0];
        let mut group_of_slot = Vec::with_capacity(members);
        for (k, g) in groups.iter().enumerate() {
            offsets.push(offsets[k] + g.len());
            group_of_slot.extend(std::iter::repeat_n(k, g.len()));
        }
        Ok(GroupingScheme {
            groups,
            group_of_slot,
            offsets,
        })
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn member_count(&self) -> usize {
        self.group_of_slot.len()
    }

    /// Sizes M_1, ..., M_m.
    pub fn sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }

    pub fn size(&self, group: usize) -> usize {
        self.groups[group].len()
    }

    /// 0-based member indices of each group.
    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    /// 1-based index sets, as accepted by [`GroupingScheme::from_index_sets`].
    pub fn index_sets(&self) -> Vec<Vec<usize>> {
        self.groups
            .iter()
            .map(|g| g.iter().map(|i| i + 1).collect())
            .collect()
    }

    /// Group owning each slot of the canonical layout.
    pub fn group_of_slot(&self) -> &[usize] {
        &self.group_of_slot
    }

    /// Slot range of `group` in the canonical layout.
    pub fn slots(&self, group: usize) -> std::ops::Range<usize> {
        self.offsets[group]..self.offsets[group + 1]
    }

    /// Arranges members group by group, ascending within each group.
    pub fn arrange(&self, members: &[f64]) -> Result<Vec<f64>> {
        if members.len() != self.member_count() {
            return Err(Error::Shape(format!(
                "case has {} members, grouping expects {}",
                members.len(),
                self.member_count()
            )));
        }
        let mut out = Vec::with_capacity(members.len());
        for g in &self.groups {
            let start = out.len();
            out.extend(g.iter().map(|&i| members[i]));
            out[start..].sort_unstable_by(f64::total_cmp);
        }
        Ok(out)
    }

    /// Sum of the members of each group, accumulated in canonical order.
    pub fn group_sums(&self, members: &[f64]) -> Result<Vec<f64>> {
        let arranged = self.arrange(members)?;
        Ok((0..self.group_count())
            .map(|k| arranged[self.slots(k)].iter().sum())
            .collect())
    }
}

impl fmt::Display for GroupingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_index_sets(&self.index_sets()))
    }
}

/// Builds the grouping for an ensemble of `members` runs; member 1 is the control.
pub fn make_grouping(kind: &GroupingKind, members: usize) -> Result<GroupingScheme> {
    if members < 2 {
        return Err(Error::Grouping(format!("need M >= 2, got {members}")));
    }
    let sets = match kind {
        GroupingKind::TwoGroup => vec![vec![1], (2..=members).collect()],
        GroupingKind::ThreeGroup => {
            if members < 3 {
                return Err(Error::Grouping(
                    "three groups need at least 3 members".into(),
                ));
            }
            // Perturbed member j (1-based among perturbed) is ensemble member j + 1.
            let odd = (1..members).filter(|j| j % 2 == 1).map(|j| j + 1).collect();
            let even = (1..members).filter(|j| j % 2 == 0).map(|j| j + 1).collect();
            vec![vec![1], odd, even]
        }
        GroupingKind::Custom(sets) => sets.clone(),
    };
    GroupingScheme::from_index_sets(&sets, members)
}
