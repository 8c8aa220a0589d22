use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::geom::Point3;

const LEAF_SIZE: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    /// Insertion index of the point in the indexed set.
    pub index: usize,
    pub distance: f64,
}

/// Static kd-tree over a fixed point set. Exact k-NN, ties broken by insertion order.
#[derive(Clone, Debug)]
pub struct NeighborIndex {
    points: Vec<Point3>,
    order: Vec<u32>,
    nodes: Vec<Node>,
}

#[derive(Clone, Copy, Debug)]
enum Node {
    Leaf { start: u32, end: u32 },
    Split { axis: u8, value: f64, left: u32, right: u32 },
}

/// Max-heap entry keyed on (squared distance, index).
#[derive(Clone, Copy, PartialEq)]
struct Candidate {
    d2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2
            .total_cmp(&other.d2)
            .then_with(|| self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl NeighborIndex {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("cannot index an empty point set".into()));
        }
        if points.len() > u32::MAX as usize {
            return Err(Error::InvalidInput("too many points to index".into()));
        }
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut nodes = Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1);
        build(&points, &mut order, 0, &mut nodes);
        Ok(Self { points, order, nodes })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    /// The `k` nearest points, ascending by distance.
    pub fn nearest(&self, query: &Point3, k: usize) -> Result<Vec<Neighbor>> {
        if k > self.points.len() {
            return Err(Error::InvalidInput(format!(
                "asked for {k} neighbors of a {}-point index",
                self.points.len()
            )));
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        if k > 0 {
            self.search(0, query, k, &mut heap);
        }
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort();
        Ok(out
            .into_iter()
            .map(|c| Neighbor {
                index: c.index,
                distance: c.d2.sqrt(),
            })
            .collect())
    }

    pub fn nearest_one(&self, query: &Point3) -> Neighbor {
        self.nearest(query, 1).expect("index is non-empty")[0]
    }

    fn search(&self, node: usize, q: &Point3, k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start as usize..end as usize] {
                    let c = Candidate {
                        d2: self.points[i as usize].distance_squared(q),
                        index: i as usize,
                    };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q.coord(axis as usize) - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near as usize, q, k, heap);
                // Equal-distance points on the far side can still win on index.
                if heap.len() < k || diff * diff <= heap.peek().unwrap().d2 {
                    self.search(far as usize, q, k, heap);
                }
            }
        }
    }
}

fn build(points: &[Point3], order: &mut [u32], offset: usize, nodes: &mut Vec<Node>) -> u32 {
    let id = nodes.len() as u32;
    if order.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            start: offset as u32,
            end: (offset + order.len()) as u32,
        });
        return id;
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in order.iter() {
        let p = &points[i as usize];
        for a in 0..3 {
            lo[a] = lo[a].min(p.coord(a));
            hi[a] = hi[a].max(p.coord(a));
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap();
    if hi[axis] - lo[axis] == 0.0 {
        // All points coincide; a single leaf is as good as any split.
        nodes.push(Node::Leaf {
            start: offset as u32,
            end: (offset + order.len()) as u32,
        });
        return id;
    }
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a as usize]
            .coord(axis)
            .total_cmp(&points[b as usize].coord(axis))
    });
    let value = points[order[mid] as usize].coord(axis);
    nodes.push(Node::Split {
        axis: axis as u8,
        value,
        left: 0,
        right: 0,
    });
    let (l, r) = order.split_at_mut(mid);
    let left = build(points, l, offset, nodes);
    let right = build(points, r, offset + mid, nodes);
    if let Node::Split {
        left: ref mut lref,
        right: ref mut rref,
        ..
    } = nodes[id as usize]
    {
        *lref = left;
        *rref = right;
    }
    id
}
