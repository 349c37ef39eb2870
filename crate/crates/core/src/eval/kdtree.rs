//! Static 3-d tree for nearest-neighbour queries.

use crate::geometry::Vec3;

const LEAF: usize = 12;

enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

pub struct KdTree {
    points: Vec<Vec3>,
    /// Original index of each entry of `points`.
    ids: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn new(points: &[Vec3]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::new();
        if !points.is_empty() {
            build(points, &mut order, 0, points.len(), &mut nodes);
        }
        KdTree {
            points: order.iter().map(|&i| points[i]).collect(),
            ids: order,
            nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index (into the construction slice) and squared distance of the nearest point.
    pub fn nearest(&self, q: &Vec3) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(0, q, &mut best);
        Some((self.ids[best.0], best.1))
    }

    fn search(&self, node: usize, q: &Vec3, best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for i in start..end {
                    let d = (self.points[i] - q).norm_squared();
                    if d < best.1 {
                        *best = (i, d);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                if diff * diff <= best.1 {
                    self.search(far, q, best);
                }
            }
        }
    }
}

fn build(points: &[Vec3], order: &mut [usize], start: usize, end: usize, nodes: &mut Vec<Node>) -> usize {
    let id = nodes.len();
    if end - start <= LEAF {
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    let slice = &order[start..end];
    let (mut lo, mut hi) = (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY));
    for &i in slice {
        lo = lo.inf(&points[i]);
        hi = hi.sup(&points[i]);
    }
    let axis = (hi - lo).imax();
    let mid = (end - start) / 2;
    order[start..end].select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
    let value = points[order[start + mid]][axis];
    nodes.push(Node::Leaf { start, end });
    let left = build(points, order, start, start + mid, nodes);
    let right = build(points, order, start + mid, end, nodes);
    nodes[id] = Node::Split { axis, value, left, right };
    id
}

/// Linear-scan nearest neighbour; lowest index wins ties.
pub fn nearest_brute_force(points: &[Vec3], q: &Vec3) -> Option<(usize, f64)> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| (i, (p - q).norm_squared()))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn agrees_with_brute_force(seed in any::<u64>(), n in 1usize..400) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            // coarse grid values force ties
            let mut pt = || Vec3::new(
                rng.random_range(0..8) as f64 * 0.1,
                rng.random_range(0..8) as f64 * 0.1,
                rng.random::<f64>(),
            );
            let pts: Vec<Vec3> = (0..n).map(|_| pt()).collect();
            let tree = KdTree::new(&pts);
            for _ in 0..50 {
                let q = pt();
                let (_, d) = tree.nearest(&q).unwrap();
                let (_, e) = nearest_brute_force(&pts, &q).unwrap();
                prop_assert_eq!(d, e);
            }
        }
    }

    #[test]
    fn empty_tree() {
        assert!(KdTree::new(&[]).nearest(&Vec3::zeros()).is_none());
    }
}
