use std::collections::VecDeque;

use patrol_core::map::{load_map, DEMO_MAP};
use patrol_core::{Cell, Checkpoint, SemanticMap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SIZE: u32 = 20;

/// Plain breadth-first distances from `from` to every cell.
fn bfs(map: &SemanticMap, from: Cell) -> Vec<Option<u32>> {
    let w = map.width() as usize;
    let mut dist = vec![None; w * map.height() as usize];
    let idx = |c: Cell| c.y as usize * w + c.x as usize;
    let mut queue = VecDeque::new();
    dist[idx(from)] = Some(0);
    queue.push_back(from);
    while let Some(c) = queue.pop_front() {
        let d = dist[idx(c)].unwrap();
        let around = [
            (c.x.wrapping_sub(1), c.y),
            (c.x + 1, c.y),
            (c.x, c.y.wrapping_sub(1)),
            (c.x, c.y + 1),
        ];
        for (x, y) in around {
            let n = Cell::new(x, y);
            if x < map.width() && y < map.height() && map.is_walkable(n) && dist[idx(n)].is_none() {
                dist[idx(n)] = Some(d + 1);
                queue.push_back(n);
            }
        }
    }
    dist
}

fn random_map(rng: &mut ChaCha8Rng) -> (SemanticMap, Vec<Cell>) {
    let density = rng.random_range(0.1..0.4);
    let mut text = format!("map {SIZE} {SIZE}\n");
    let mut open = Vec::new();
    for y in 0..SIZE {
        for x in 0..SIZE {
            if rng.random_bool(density) {
                text.push_str(&format!("wall {x} {y} {x} {y}\n"));
            } else {
                open.push(Cell::new(x, y));
            }
        }
    }
    if open.is_empty() {
        text.push_str("wall 0 0 0 0\n");
    }
    let home = open[rng.random_range(0..open.len())];
    text.push_str(&format!("home {} {}\n", home.x, home.y));
    (load_map(&text).unwrap(), open)
}

#[test]
fn astar_matches_bfs_on_random_maps() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    for _ in 0..50 {
        let (map, open) = random_map(&mut rng);
        for _ in 0..20 {
            let a = open[rng.random_range(0..open.len())];
            let b = open[rng.random_range(0..open.len())];
            let want = bfs(&map, a)[(b.y * SIZE + b.x) as usize];
            match (map.plan_path(a, b), want) {
                (Ok(path), Some(d)) => {
                    assert_eq!(path.length(), d, "{a} -> {b}");
                    assert_eq!(path.cells.first(), Some(&a));
                    assert_eq!(path.cells.last(), Some(&b));
                    for pair in path.cells.windows(2) {
                        assert_eq!(pair[0].manhattan(pair[1]), 1);
                        assert!(map.is_walkable(pair[1]));
                    }
                }
                (Err(_), None) => {}
                (got, want) => panic!("{a} -> {b}: planner {got:?}, oracle {want:?}"),
            }
            checked += 1;
        }
    }
    assert_eq!(checked, 1000);
}

#[test]
fn walls_and_off_map_cells_are_rejected() {
    let map = load_map(DEMO_MAP).unwrap();
    assert!(map.plan_path(Cell::new(0, 0), Cell::new(1, 1)).is_err());
    assert!(map.plan_path(Cell::new(1, 1), Cell::new(99, 1)).is_err());
    assert_eq!(
        map.plan_path(Cell::new(1, 1), Cell::new(1, 1))
            .unwrap()
            .length(),
        0
    );
}

fn distance_table(map: &SemanticMap, points: &[Cell]) -> Vec<Vec<u32>> {
    points
        .iter()
        .map(|&p| {
            let d = bfs(map, p);
            points
                .iter()
                .map(|q| d[(q.y * map.width() + q.x) as usize].unwrap())
                .collect()
        })
        .collect()
}

/// Shortest open walk from node 0 through every other node, by trying
/// every ordering.
fn brute_force(dist: &[Vec<u32>]) -> u32 {
    fn go(dist: &[Vec<u32>], at: usize, left: &mut Vec<usize>, so_far: u32, best: &mut u32) {
        if left.is_empty() {
            *best = (*best).min(so_far);
            return;
        }
        for i in 0..left.len() {
            let next = left.swap_remove(i);
            go(dist, next, left, so_far + dist[at][next], best);
            left.push(next);
            let last = left.len() - 1;
            left.swap(i, last);
        }
    }
    let mut left: Vec<usize> = (1..dist.len()).collect();
    let mut best = u32::MAX;
    go(dist, 0, &mut left, 0, &mut best);
    best
}

#[test]
fn greedy_tour_within_twice_optimal_on_demo_map() {
    let map = load_map(DEMO_MAP).unwrap();
    let regular: Vec<Checkpoint> = map.regular_checkpoints().cloned().collect();
    assert_eq!(regular.len(), 9);
    let mut sets = vec![regular.clone()];
    for e in map.event_checkpoints() {
        let mut s = regular.clone();
        s.insert(0, e.clone());
        sets.push(s);
    }
    for targets in sets {
        let tour = map.plan_patrol(&targets).unwrap();
        assert_eq!(tour.order.len(), targets.len());
        let mut points = vec![map.home()];
        points.extend(targets.iter().map(|c| c.cell));
        let optimal = brute_force(&distance_table(&map, &points));
        assert!(
            tour.total_length <= 2 * optimal,
            "greedy {} vs optimal {optimal}",
            tour.total_length
        );
        let legs: u32 = tour.legs.iter().map(|l| l.length()).sum();
        assert_eq!(legs, tour.total_length);
    }
}

#[test]
fn brute_force_oracle_sanity() {
    let d = vec![vec![0, 1, 5], vec![1, 0, 1], vec![5, 1, 0]];
    assert_eq!(brute_force(&d), 2);
}
