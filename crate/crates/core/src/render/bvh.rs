use crate::octree::{Mesh, Vec3};

#[derive(Debug, Clone, Copy)]
struct Aabb {
    lo: Vec3,
    hi: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Aabb { lo: Vec3::repeat(f64::INFINITY), hi: Vec3::repeat(f64::NEG_INFINITY) }
    }

    fn grow(&mut self, p: &Vec3) {
        self.lo = self.lo.inf(p);
        self.hi = self.hi.sup(p);
    }

    /// True if the ray meets the box within `[0, t_max]`.
    fn hit(&self, origin: &Vec3, inv: &Vec3, t_max: f64) -> bool {
        let mut t0: f64 = 0.0;
        let mut t1 = t_max;
        for a in 0..3 {
            let near = (self.lo[a] - origin[a]) * inv[a];
            let far = (self.hi[a] - origin[a]) * inv[a];
            // 0 * inf gives NaN when the ray lies in a slab plane.
            if near.is_nan() || far.is_nan() {
                continue;
            }
            t0 = t0.max(near.min(far));
            t1 = t1.min(near.max(far));
            if t0 > t1 {
                return false;
            }
        }
        true
    }
}

struct Node {
    bounds: Aabb,
    /// Leaf: triangle range. Inner: `first` is the right child, the left
    /// child follows the node directly.
    first: usize,
    count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub t: f64,
    pub triangle: usize,
}

/// Bounding-volume hierarchy over a mesh's triangles, split at the median
/// centroid of the widest axis.
pub struct Bvh {
    triangles: Vec<[Vec3; 3]>,
    ids: Vec<usize>,
    nodes: Vec<Node>,
}

const LEAF_SIZE: usize = 4;

impl Bvh {
    pub fn new(mesh: &Mesh) -> Self {
        let all: Vec<[Vec3; 3]> = (0..mesh.triangles().len()).map(|i| mesh.triangle(i)).collect();
        let mut ids: Vec<usize> = (0..all.len()).collect();
        let mut nodes = Vec::new();
        if !all.is_empty() {
            build(&all, &mut ids, 0, &mut nodes);
        }
        let triangles = ids.iter().map(|&i| all[i]).collect();
        Bvh { triangles, ids, nodes }
    }

    /// Closest hit with `t > 0`, both triangle sides counted.
    pub fn intersect(&self, origin: Vec3, dir: Vec3) -> Option<RayHit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = dir.map(|d| 1.0 / d);
        let mut best: Option<RayHit> = None;
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            let t_max = best.map_or(f64::INFINITY, |h| h.t);
            if !node.bounds.hit(&origin, &inv, t_max) {
                continue;
            }
            if node.count > 0 {
                for i in node.first..node.first + node.count {
                    if let Some(t) = ray_triangle(&origin, &dir, &self.triangles[i]) {
                        // Ties go to the lower mesh index so results do not
                        // depend on the tree layout.
                        let better = match best {
                            None => true,
                            Some(b) => t < b.t || (t == b.t && self.ids[i] < b.triangle),
                        };
                        if better {
                            best = Some(RayHit { t, triangle: self.ids[i] });
                        }
                    }
                }
            } else {
                stack.push(node.first);
                stack.push(n + 1);
            }
        }
        best
    }
}

fn build(all: &[[Vec3; 3]], ids: &mut [usize], offset: usize, nodes: &mut Vec<Node>) -> usize {
    let mut bounds = Aabb::empty();
    let mut centroids = Aabb::empty();
    for &i in ids.iter() {
        for p in &all[i] {
            bounds.grow(p);
        }
        centroids.grow(&((all[i][0] + all[i][1] + all[i][2]) / 3.0));
    }
    let index = nodes.len();
    nodes.push(Node { bounds, first: offset, count: ids.len() });
    if ids.len() <= LEAF_SIZE {
        return index;
    }
    let extent = centroids.hi - centroids.lo;
    let axis = extent.imax();
    if extent[axis] <= 0.0 {
        return index;
    }
    let mid = ids.len() / 2;
    let key = |i: &usize| (all[*i][0][axis] + all[*i][1][axis] + all[*i][2][axis], *i);
    ids.select_nth_unstable_by(mid, |a, b| key(a).partial_cmp(&key(b)).unwrap());
    let (left, right) = ids.split_at_mut(mid);
    build(all, left, offset, nodes);
    let r = build(all, right, offset + mid, nodes);
    nodes[index].first = r;
    nodes[index].count = 0;
    index
}

/// Möller–Trumbore intersection distance.
pub fn ray_triangle(origin: &Vec3, dir: &Vec3, [a, b, c]: &[Vec3; 3]) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = origin - a;
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > 1e-9).then_some(t)
}
