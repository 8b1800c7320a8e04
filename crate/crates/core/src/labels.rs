//! Behavior code taxonomy and the merged three-class target space.

use core::fmt;
use core::ops::{Add, AddAssign, Index, IndexMut};
use core::str::FromStr;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// A per-turn communication code. The first five variants are the ordinal
/// subset, in order from most negative to most positive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum BehaviorCode {
    HighHostile,
    LowHostile,
    ConstructiveProblemDiscussion,
    LowPositive,
    HighPositive,
    DysphoricAffect,
    Other,
}

impl BehaviorCode {
    pub const ALL: [BehaviorCode; 7] = [
        BehaviorCode::HighHostile,
        BehaviorCode::LowHostile,
        BehaviorCode::ConstructiveProblemDiscussion,
        BehaviorCode::LowPositive,
        BehaviorCode::HighPositive,
        BehaviorCode::DysphoricAffect,
        BehaviorCode::Other,
    ];

    pub const ORDINAL: [BehaviorCode; 5] = [
        BehaviorCode::HighHostile,
        BehaviorCode::LowHostile,
        BehaviorCode::ConstructiveProblemDiscussion,
        BehaviorCode::LowPositive,
        BehaviorCode::HighPositive,
    ];

    /// Name used in turn files.
    pub fn as_str(self) -> &'static str {
        match self {
            BehaviorCode::HighHostile => "High_Hostile",
            BehaviorCode::LowHostile => "Low_Hostile",
            BehaviorCode::ConstructiveProblemDiscussion => "Constructive_Problem_Discussion",
            BehaviorCode::LowPositive => "Low_Positive",
            BehaviorCode::HighPositive => "High_Positive",
            BehaviorCode::DysphoricAffect => "Dysphoric_Affect",
            BehaviorCode::Other => "Other",
        }
    }

    /// The merged class, or `None` for codes outside the ordinal subset.
    pub fn class(self) -> Option<BehaviorClass> {
        match self {
            BehaviorCode::HighHostile | BehaviorCode::LowHostile => Some(BehaviorClass::Hostile),
            BehaviorCode::ConstructiveProblemDiscussion => Some(BehaviorClass::Constructive),
            BehaviorCode::LowPositive | BehaviorCode::HighPositive => Some(BehaviorClass::Positive),
            BehaviorCode::DysphoricAffect | BehaviorCode::Other => None,
        }
    }

    pub fn is_ordinal(self) -> bool {
        self.class().is_some()
    }
}

impl fmt::Display for BehaviorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("unknown label `{0}`")]
pub struct UnknownLabel(pub alloc::string::String);

impl FromStr for BehaviorCode {
    type Err = UnknownLabel;

    /// Accepts only the exact underscored names.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BehaviorCode::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| UnknownLabel(s.into()))
    }
}

/// Merged target class. Discriminants are the class indices used in
/// probability rows and confusion matrices; ties between classes resolve to
/// the lower index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum BehaviorClass {
    Hostile = 0,
    Constructive = 1,
    Positive = 2,
}

pub const NUM_CLASSES: usize = 3;

impl BehaviorClass {
    pub const ALL: [BehaviorClass; NUM_CLASSES] = [
        BehaviorClass::Hostile,
        BehaviorClass::Constructive,
        BehaviorClass::Positive,
    ];

    /// Classes scored with tolerance windows.
    pub const TARGETS: [BehaviorClass; 2] = [BehaviorClass::Hostile, BehaviorClass::Positive];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<BehaviorClass> {
        BehaviorClass::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BehaviorClass::Hostile => "Hostile",
            BehaviorClass::Constructive => "Constructive",
            BehaviorClass::Positive => "Positive",
        }
    }

    pub fn is_target(self) -> bool {
        self != BehaviorClass::Constructive
    }
}

impl fmt::Display for BehaviorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BehaviorClass {
    type Err = UnknownLabel;

    /// Accepts class names case-insensitively, and ordinal code names, which
    /// are mapped to their class.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(c) = BehaviorClass::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
        {
            return Ok(c);
        }
        s.parse::<BehaviorCode>()
            .ok()
            .and_then(BehaviorCode::class)
            .ok_or_else(|| UnknownLabel(s.into()))
    }
}

/// Per-class sample counts, indexed by [`BehaviorClass`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ClassCounts(pub [u64; NUM_CLASSES]);

impl ClassCounts {
    /// Builds counts from (hostile, constructive, positive).
    pub fn new(hostile: u64, constructive: u64, positive: u64) -> Self {
        ClassCounts([hostile, constructive, positive])
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn get(&self, class: BehaviorClass) -> u64 {
        self.0[class.index()]
    }

    pub fn missing(&self) -> impl Iterator<Item = BehaviorClass> + '_ {
        BehaviorClass::ALL.into_iter().filter(|&c| self.get(c) == 0)
    }

    pub fn covers_all(&self) -> bool {
        self.0.iter().all(|&n| n > 0)
    }

    /// Relative frequencies; all zero for an empty count.
    pub fn priors(&self) -> [f64; NUM_CLASSES] {
        let total = self.total();
        if total == 0 {
            return [0.0; NUM_CLASSES];
        }
        self.0.map(|n| n as f64 / total as f64)
    }
}

impl Index<BehaviorClass> for ClassCounts {
    type Output = u64;
    fn index(&self, c: BehaviorClass) -> &u64 {
        &self.0[c.index()]
    }
}

impl IndexMut<BehaviorClass> for ClassCounts {
    fn index_mut(&mut self, c: BehaviorClass) -> &mut u64 {
        &mut self.0[c.index()]
    }
}

impl Add for ClassCounts {
    type Output = ClassCounts;
    fn add(mut self, rhs: ClassCounts) -> ClassCounts {
        self += rhs;
        self
    }
}

impl AddAssign for ClassCounts {
    fn add_assign(&mut self, rhs: ClassCounts) {
        for (a, b) in self.0.iter_mut().zip(rhs.0) {
            *a += b;
        }
    }
}

impl FromIterator<BehaviorClass> for ClassCounts {
    fn from_iter<I: IntoIterator<Item = BehaviorClass>>(iter: I) -> Self {
        let mut counts = ClassCounts::default();
        for c in iter {
            counts[c] += 1;
        }
        counts
    }
}

impl core::iter::Sum for ClassCounts {
    fn sum<I: Iterator<Item = ClassCounts>>(iter: I) -> Self {
        iter.fold(ClassCounts::default(), Add::add)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seven_codes_five_ordinal() {
        assert_eq!(BehaviorCode::ALL.len(), 7);
        assert_eq!(&BehaviorCode::ALL[..5], &BehaviorCode::ORDINAL[..]);
        assert!(BehaviorCode::ORDINAL.iter().all(|c| c.is_ordinal()));
        assert!(!BehaviorCode::DysphoricAffect.is_ordinal());
        assert!(!BehaviorCode::Other.is_ordinal());
    }

    #[test]
    fn merge_map() {
        use BehaviorClass::*;
        assert_eq!(BehaviorCode::HighHostile.class(), Some(Hostile));
        assert_eq!(BehaviorCode::LowHostile.class(), Some(Hostile));
        assert_eq!(BehaviorCode::ConstructiveProblemDiscussion.class(), Some(Constructive));
        assert_eq!(BehaviorCode::LowPositive.class(), Some(Positive));
        assert_eq!(BehaviorCode::HighPositive.class(), Some(Positive));
    }

    #[test]
    fn code_names_round_trip() {
        for c in BehaviorCode::ALL {
            assert_eq!(c.as_str().parse::<BehaviorCode>().unwrap(), c);
        }
        assert!("high_hostile".parse::<BehaviorCode>().is_err());
        assert!("High Hostile".parse::<BehaviorCode>().is_err());
    }

    #[test]
    fn class_parse_accepts_codes() {
        assert_eq!("hostile".parse::<BehaviorClass>().unwrap(), BehaviorClass::Hostile);
        assert_eq!("Low_Positive".parse::<BehaviorClass>().unwrap(), BehaviorClass::Positive);
        assert!("Other".parse::<BehaviorClass>().is_err());
    }

    #[test]
    fn counts_collect() {
        use BehaviorClass::*;
        let c: ClassCounts = [Hostile, Constructive, Positive].into_iter().collect();
        assert_eq!(c, ClassCounts::new(1, 1, 1));
        assert_eq!(ClassCounts::default().total(), 0);
        assert_eq!(c.missing().count(), 0);
    }
}
