//! Benchmark fixtures.

use enscal::grouping::{make_grouping, GroupingKind};
use enscal::synth::{generate, Scenario, SynthConfig};
use enscal::TrainingSet;

/// Pooled training set of `n_dates` dates at ten stations, two-group split.
pub fn training_set(scenario: Scenario, seed: u64, n_dates: usize) -> TrainingSet {
    let out = generate(&SynthConfig::new(scenario, seed, n_dates, 10)).expect("valid scenario");
    let grouping =
        make_grouping(&GroupingKind::TwoGroup, out.dataset.member_count()).expect("M >= 2");
    TrainingSet::new(out.dataset.cases().iter(), &grouping).expect("complete cases")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_size() {
        let set = training_set(Scenario::EmosNormal, 1, 3);
        assert_eq!(set.len(), 30);
        assert_eq!(set.members(), 11);
    }
}
