//! Static kd-tree for fixed-radius neighbor queries on translational
//! coordinates. Rebuilt wholesale whenever the point set changes.

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, Default)]
pub struct KdTree {
    dim: usize,
    /// Points in tree order, `dim` coordinates each.
    points: Vec<f64>,
    ids: Vec<u32>,
    nodes: Vec<Node>,
}

impl KdTree {
    /// Builds over `count` points taken from `coords` with the given stride;
    /// only the first `dim` coordinates of each point are indexed.
    pub fn build(coords: &[f64], stride: usize, dim: usize) -> Self {
        assert!(dim <= stride && stride > 0);
        let count = coords.len() / stride;
        let mut ids: Vec<u32> = (0..count as u32).collect();
        let mut nodes = Vec::new();
        if count > 0 {
            build_node(coords, stride, dim, &mut ids, 0, count, &mut nodes);
        }
        let mut points = Vec::with_capacity(count * dim);
        for &id in &ids {
            let base = id as usize * stride;
            points.extend_from_slice(&coords[base..base + dim]);
        }
        Self { dim, points, ids, nodes }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Ids of all points within Euclidean distance `radius` (closed ball) of
    /// `query`, appended to `out` in unspecified order.
    pub fn within_radius(&self, query: &[f64], radius: f64, out: &mut Vec<u32>) {
        if self.nodes.is_empty() {
            return;
        }
        let r2 = radius * radius;
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            match self.nodes[n] {
                Node::Leaf { start, end } => {
                    for i in start..end {
                        let p = &self.points[i * self.dim..(i + 1) * self.dim];
                        let mut d2 = 0.0;
                        for (a, b) in p.iter().zip(query) {
                            d2 += (a - b) * (a - b);
                        }
                        if d2 <= r2 {
                            out.push(self.ids[i]);
                        }
                    }
                }
                Node::Split { axis, value, left, right } => {
                    let diff = query[axis] - value;
                    if diff <= radius {
                        stack.push(left);
                    }
                    if diff >= -radius {
                        stack.push(right);
                    }
                }
            }
        }
    }
}

fn build_node(
    coords: &[f64],
    stride: usize,
    dim: usize,
    ids: &mut [u32],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let index = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { start, end });
        return index;
    }
    // Split along the axis of widest spread.
    let mut best_axis = 0;
    let mut best_spread = -1.0;
    for axis in 0..dim {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &id in &ids[start..end] {
            let v = coords[id as usize * stride + axis];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi - lo > best_spread {
            best_spread = hi - lo;
            best_axis = axis;
        }
    }
    let mid = (start + end) / 2;
    let key = |id: &u32| coords[*id as usize * stride + best_axis];
    ids[start..end].select_nth_unstable_by(mid - start, |a, b| key(a).total_cmp(&key(b)));
    let value = key(&ids[mid]);
    nodes.push(Node::Leaf { start, end });
    // Left holds coordinates <= value, right holds coordinates >= value.
    let left = build_node(coords, stride, dim, ids, start, mid, nodes);
    let right = build_node(coords, stride, dim, ids, mid, end, nodes);
    nodes[index] = Node::Split { axis: best_axis, value, left, right };
    index
}
