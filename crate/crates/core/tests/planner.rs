use std::cmp::Ordering;
use std::collections::BinaryHeap;

use footprints::planner::{astar, astar_traced, CostMap, Pixel, DEFAULT_EPS_FLOOR};
use footprints::Raster;
use proptest::prelude::*;

#[derive(PartialEq)]
struct Node(f64, usize);

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

/// Exact cost-to-go from every pixel to `goal`, by Dijkstra over reversed edges.
fn cost_to_go(costs: &CostMap, goal: Pixel) -> Vec<f64> {
    let (h, w) = costs.shape();
    let mut dist = vec![f64::INFINITY; h * w];
    let mut heap = BinaryHeap::new();
    dist[goal.0 * w + goal.1] = 0.0;
    heap.push(Node(0.0, goal.0 * w + goal.1));
    while let Some(Node(d, i)) = heap.pop() {
        if d > dist[i] {
            continue;
        }
        let here = (i / w, i % w);
        for prev in costs.neighbors(here) {
            let j = prev.0 * w + prev.1;
            let candidate = d + costs.step_cost(prev, here);
            if candidate < dist[j] {
                dist[j] = candidate;
                heap.push(Node(candidate, j));
            }
        }
    }
    dist
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn heuristic_never_overestimates_on_expanded_nodes(
        values in prop::collection::vec(0.0..=1.0f64, 20 * 24),
        start in (0usize..20, 0usize..24),
        goal in (0usize..20, 0usize..24),
    ) {
        prop_assume!(start != goal);
        let s_star = Raster::from_vec(20, 24, values).unwrap();
        let costs = CostMap::from_s_star(&s_star, DEFAULT_EPS_FLOOR).unwrap();
        let exact = cost_to_go(&costs, goal);
        let mut expanded = 0;
        let planned = astar_traced(&costs, start, goal, |p, _| {
            expanded += 1;
            assert!(costs.heuristic(p, goal) <= exact[p.0 * 24 + p.1] + 1e-12);
        })
        .unwrap()
        .unwrap();
        prop_assert!(expanded > 0);
        prop_assert!((planned.total_cost - exact[start.0 * 24 + start.1]).abs() <= 1e-9);
        prop_assert_eq!(planned.path.first(), Some(&start));
        prop_assert_eq!(planned.path.last(), Some(&goal));
        for pair in planned.path.windows(2) {
            let (dr, dc) = (pair[0].0.abs_diff(pair[1].0), pair[0].1.abs_diff(pair[1].1));
            prop_assert!(dr <= 1 && dc <= 1 && (dr, dc) != (0, 0));
        }
    }
}

#[test]
fn planning_is_deterministic_with_ties() {
    let flat = Raster::filled(15, 15, 0.5);
    let costs = CostMap::from_s_star(&flat, DEFAULT_EPS_FLOOR).unwrap();
    let a = astar(&costs, (0, 0), (14, 9)).unwrap().unwrap();
    let b = astar(&costs, (0, 0), (14, 9)).unwrap().unwrap();
    assert_eq!(a, b);
}
