use proptest::prelude::*;
use specdrift::dataset::{generate, split_by_subject, DriftSpec, Part, SplitPolicy, TimeSeriesBatch};

fn small(subjects: usize, seed: u64) -> TimeSeriesBatch {
    let spec = DriftSpec { num_subjects: subjects, samples_per_subject: 3, length: 64, channels: 2, ..DriftSpec::default() };
    generate(&spec, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn count_splits_are_disjoint_and_cover(subjects in 3usize..14, seed in any::<u64>(), a in 1usize..5, b in 1usize..5) {
        prop_assume!(a + b < subjects);
        let data = small(subjects, seed);
        let plan = split_by_subject(&data, &SplitPolicy::Counts { train: subjects - a - b, val: a, test: b }, seed).unwrap();
        plan.check_disjoint().unwrap();
        let mut all: Vec<usize> = plan.train.iter().chain(&plan.val).chain(&plan.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..subjects).collect::<Vec<_>>());
        for (part, ids) in [(Part::Train, &plan.train), (Part::Val, &plan.val), (Part::Test, &plan.test)] {
            let sel = plan.select(&data, part);
            prop_assert!(sel.subjects.iter().all(|s| ids.contains(s)));
            prop_assert_eq!(sel.len(), 3 * ids.len());
        }
    }

    #[test]
    fn ratio_splits_never_share_subjects(subjects in 5usize..20, seed in any::<u64>()) {
        let data = small(subjects, seed);
        let plan = split_by_subject(&data, &SplitPolicy::Ratios { train: 0.6, val: 0.2, test: 0.2 }, seed).unwrap();
        prop_assert!(plan.train.iter().all(|s| !plan.test.contains(s) && !plan.val.contains(s)));
        prop_assert!(plan.val.iter().all(|s| !plan.test.contains(s)));
        prop_assert!(!plan.test.is_empty());
    }

    #[test]
    fn splits_are_seed_deterministic(subjects in 4usize..10, seed in any::<u64>()) {
        let data = small(subjects, 0);
        let policy = SplitPolicy::Counts { train: subjects - 2, val: 1, test: 1 };
        prop_assert_eq!(split_by_subject(&data, &policy, seed).unwrap(), split_by_subject(&data, &policy, seed).unwrap());
    }
}

#[test]
fn overlapping_explicit_split_is_rejected() {
    let data = small(4, 0);
    let policy = SplitPolicy::Explicit { train: vec![0, 1], val: vec![2], test: vec![1, 3] };
    assert!(split_by_subject(&data, &policy, 0).is_err());
}

#[test]
fn counts_beyond_the_subject_pool_are_rejected() {
    let data = small(4, 0);
    assert!(split_by_subject(&data, &SplitPolicy::Counts { train: 3, val: 1, test: 1 }, 0).is_err());
}
