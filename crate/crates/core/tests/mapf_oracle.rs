mod common;

use std::time::Duration;

use cipher_core::mapf::{find_first_mapf_conflict, region_path_is_valid, solve_mapf, MapfOptions};
use proptest::prelude::*;

use common::{joint_optimum, mapf_instance};

/// CBS cannot prove every infeasible instance infeasible, so those only get
/// a short budget and must end in an error.
fn opts(feasible: bool) -> MapfOptions {
    MapfOptions {
        budget: Duration::from_millis(if feasible { 5000 } else { 200 }),
        ..MapfOptions::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn sum_of_costs_matches_joint_search(seed in any::<u64>()) {
        let inst = mapf_instance(seed);
        let expected = joint_optimum(&inst.graph, &inst.starts, &inst.goals);
        match solve_mapf(&inst.graph, &inst.starts, &inst.goals, &opts(expected.is_some())) {
            Ok(sol) => {
                prop_assert_eq!(Some(sol.sum_of_costs), expected, "{}x{}", inst.w, inst.h);
                prop_assert!(find_first_mapf_conflict(&sol.paths, 1).is_none());
                for (i, p) in sol.paths.iter().enumerate() {
                    prop_assert!(region_path_is_valid(&inst.graph, p, &inst.starts[i], &inst.goals[i]));
                }
            }
            Err(e) => prop_assert!(expected.is_none(), "solver failed with {} but optimum is {:?}", e, expected),
        }
    }

    #[test]
    fn solutions_are_deterministic(seed in any::<u64>()) {
        let inst = mapf_instance(seed);
        let feasible = joint_optimum(&inst.graph, &inst.starts, &inst.goals).is_some();
        prop_assume!(feasible);
        let a = solve_mapf(&inst.graph, &inst.starts, &inst.goals, &opts(true)).map(|s| s.paths);
        let b = solve_mapf(&inst.graph, &inst.starts, &inst.goals, &opts(true)).map(|s| s.paths);
        prop_assert_eq!(a, b);
    }
}
