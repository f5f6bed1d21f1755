mod common;

use proptest::prelude::*;

use common::*;
use ridematch_core::fleet::try_insert;
use ridematch_core::matching::{hungarian, max_weight_matching, max_weight_matching_int};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn hungarian_matches_exhaustive_search(seed in any::<u64>()) {
        let m = random_matrix(&mut rng(seed), 7, 0.3);
        let a = hungarian(&m);
        let (count, cost) = assignment_oracle(&m);
        prop_assert_eq!(a.row_to_col.len(), m.rows());
        let mut used = vec![false; m.cols()];
        let mut total = 0.0;
        for (r, c) in a.row_to_col.iter().enumerate() {
            if let Some(c) = *c {
                prop_assert!(!used[c], "column {} used twice", c);
                used[c] = true;
                total += m.get(r, c).expect("assigned an infeasible entry");
            }
        }
        prop_assert_eq!(a.matched(), count);
        prop_assert!((total - cost).abs() < 1e-6, "total {} vs oracle {}", total, cost);
        prop_assert!((a.total_cost - total).abs() < 1e-6);
    }

    #[test]
    fn blossom_matches_subset_dp(seed in any::<u64>()) {
        let (n, edges) = random_graph(&mut rng(seed), 10);
        let pairs = max_weight_matching_int(n, &edges);
        let w = matching_weight(n, &edges, &pairs);
        prop_assert!(w.is_some(), "invalid matching {:?}", pairs);
        prop_assert_eq!(w.unwrap(), matching_oracle(n, &edges));
        prop_assert!(pairs.windows(2).all(|p| p[0] < p[1]));
        prop_assert!(pairs.iter().all(|&(a, b)| a < b));
    }

    #[test]
    fn float_weights_agree_with_integer_weights(seed in any::<u64>()) {
        let (n, edges) = random_graph(&mut rng(seed), 8);
        let float: Vec<(usize, usize, f64)> =
            edges.iter().map(|&(a, b, w)| (a, b, w as f64 * 0.25)).collect();
        let pairs = max_weight_matching(n, &float);
        prop_assert_eq!(matching_weight(n, &edges, &pairs), Some(matching_oracle(n, &edges)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn insertion_matches_exhaustive_placement(seed in any::<u64>()) {
        let mut r = rng(seed);
        let net = random_network(&mut r);
        let times = Times::new(&net);
        let (v, req, c, now) = random_insertion_case(&mut r, &net);
        let got = try_insert(&v, &req, &net, &c, now);
        let want = insertion_oracle(&times, &net, &v, &req, &c, now);
        prop_assert_eq!(got.feasible, want.is_some(), "route {:?}", v.route);
        if let Some(w) = want {
            prop_assert!((got.added_travel_time - w.added).abs() < 1e-6,
                "added {} vs {}", got.added_travel_time, w.added);
            prop_assert!((got.pickup_time - w.pickup_time).abs() < 1e-6,
                "pickup {} vs {}", got.pickup_time, w.pickup_time);
            prop_assert_eq!(got.new_route.len(), v.route.len() + 2);
        }
        let n = v.route.len();
        prop_assert_eq!(got.positions_scanned, (n + 1) * (n + 2) / 2);
    }
}
