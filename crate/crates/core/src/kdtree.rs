//! Minimal 3D k-d tree for distance-gated nearest-neighbor queries.
//!
//! Alignment results must be bit-identical across runs and thread counts, so
//! both construction (full sorts with a total key) and search (fixed
//! traversal order, strict-less replacement) are deterministic by design.

const NONE: u32 = u32::MAX;

struct Node {
    point: u32,
    left: u32,
    right: u32,
    axis: u8,
}

pub(crate) struct KdTree3 {
    nodes: Vec<Node>,
    points: Vec<[f64; 3]>,
    root: u32,
}

impl KdTree3 {
    pub fn build(points: Vec<[f64; 3]>) -> Self {
        let mut ids: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::with_capacity(points.len());
        let root = Self::build_node(&points, &mut ids, &mut nodes);
        Self {
            nodes,
            points,
            root,
        }
    }

    #[cfg(test)]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    fn build_node(points: &[[f64; 3]], ids: &mut [u32], nodes: &mut Vec<Node>) -> u32 {
        if ids.is_empty() {
            return NONE;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &id in ids.iter() {
            let p = points[id as usize];
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let mut axis = 0;
        for a in 1..3 {
            if hi[a] - lo[a] > hi[axis] - lo[axis] {
                axis = a;
            }
        }
        ids.sort_unstable_by(|&p, &q| {
            points[p as usize][axis]
                .total_cmp(&points[q as usize][axis])
                .then(p.cmp(&q))
        });
        let mid = ids.len() / 2;
        let node_id = nodes.len() as u32;
        nodes.push(Node {
            point: ids[mid],
            left: NONE,
            right: NONE,
            axis: axis as u8,
        });
        let (left_ids, rest) = ids.split_at_mut(mid);
        let left = Self::build_node(points, left_ids, nodes);
        let right = Self::build_node(points, &mut rest[1..], nodes);
        nodes[node_id as usize].left = left;
        nodes[node_id as usize].right = right;
        node_id
    }

    /// Index and squared distance of the nearest point no farther than
    /// `max_dist` from `query`, or `None` when nothing is in range.
    pub fn nearest_within(&self, query: [f64; 3], max_dist: f64) -> Option<(u32, f64)> {
        let mut best = NONE;
        let mut best_d2 = max_dist * max_dist;
        self.search(self.root, query, &mut best, &mut best_d2);
        if best == NONE {
            None
        } else {
            Some((best, best_d2))
        }
    }

    fn search(&self, node: u32, query: [f64; 3], best: &mut u32, best_d2: &mut f64) {
        if node == NONE {
            return;
        }
        let n = &self.nodes[node as usize];
        let p = self.points[n.point as usize];
        let d2 = dist2(p, query);
        if d2 < *best_d2 || (*best == NONE && d2 <= *best_d2) {
            *best = n.point;
            *best_d2 = d2;
        }
        let delta = query[n.axis as usize] - p[n.axis as usize];
        let (near, far) = if delta < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.search(near, query, best, best_d2);
        if delta * delta <= *best_d2 {
            self.search(far, query, best, best_d2);
        }
    }
}

fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(points: &[[f64; 3]], query: [f64; 3], max_dist: f64) -> Option<(u32, f64)> {
        let mut best: Option<(u32, f64)> = None;
        for (i, &p) in points.iter().enumerate() {
            let d2 = dist2(p, query);
            if d2 <= max_dist * max_dist && best.map_or(true, |(_, bd)| d2 < bd) {
                best = Some((i as u32, d2));
            }
        }
        best
    }

    #[test]
    fn empty_tree_finds_nothing() {
        let tree = KdTree3::build(Vec::new());
        assert!(tree.nearest_within([0.0, 0.0, 0.0], 10.0).is_none());
    }

    #[test]
    fn single_point() {
        let tree = KdTree3::build(vec![[1.0, 2.0, 3.0]]);
        let (id, d2) = tree.nearest_within([1.0, 2.0, 2.0], 2.0).unwrap();
        assert_eq!(id, 0);
        assert_eq!(d2, 1.0);
        assert!(tree.nearest_within([1.0, 2.0, 2.0], 0.5).is_none());
    }

    #[test]
    fn gate_is_inclusive() {
        let tree = KdTree3::build(vec![[3.0, 0.0, 0.0]]);
        let hit = tree.nearest_within([0.0, 0.0, 0.0], 3.0);
        assert_eq!(hit, Some((0, 9.0)));
    }

    #[test]
    fn matches_brute_force_on_random_clouds() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let points: Vec<[f64; 3]> = (0..1500)
            .map(|_| {
                [
                    rng.gen_range(-5.0..5.0),
                    rng.gen_range(-5.0..5.0),
                    rng.gen_range(-1.0..1.0),
                ]
            })
            .collect();
        let tree = KdTree3::build(points.clone());
        assert_eq!(tree.len(), points.len());
        for _ in 0..300 {
            let q = [
                rng.gen_range(-6.0..6.0),
                rng.gen_range(-6.0..6.0),
                rng.gen_range(-2.0..2.0),
            ];
            for max_dist in [0.2, 1.0, 50.0] {
                assert_eq!(
                    tree.nearest_within(q, max_dist),
                    brute_force(&points, q, max_dist),
                    "query {q:?} gate {max_dist}"
                );
            }
        }
    }
}
