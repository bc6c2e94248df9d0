//! Separating-axis overlap test between a triangle and a closed axis-aligned
//! box. Touching counts as overlap.

use super::mesh::Vec3;

pub fn triangle_box_overlap(center: Vec3, half: f64, tri: &[Vec3; 3]) -> bool {
    let v = tri.map(|p| p - center);
    let e = [v[1] - v[0], v[2] - v[1], v[0] - v[2]];
    let axes = [Vec3::x(), Vec3::y(), Vec3::z()];

    for a in 0..3 {
        let (lo, hi) = extent(&v, |p| p[a]);
        if lo > half || hi < -half {
            return false;
        }
    }

    let n = e[0].cross(&e[1]);
    let d = n.dot(&v[0]);
    let r = half * (n.x.abs() + n.y.abs() + n.z.abs());
    if d.abs() > r {
        return false;
    }

    for edge in &e {
        for axis in &axes {
            let l = axis.cross(edge);
            if l.norm_squared() == 0.0 {
                continue;
            }
            let (lo, hi) = extent(&v, |p| p.dot(&l));
            let r = half * (l.x.abs() + l.y.abs() + l.z.abs());
            if lo > r || hi < -r {
                return false;
            }
        }
    }
    true
}

fn extent(v: &[Vec3; 3], f: impl Fn(&Vec3) -> f64) -> (f64, f64) {
    let p = v.each_ref().map(f);
    (p[0].min(p[1]).min(p[2]), p[0].max(p[1]).max(p[2]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Clips the triangle against the box's six closed half-spaces.
    fn clip_oracle(center: Vec3, half: f64, tri: &[Vec3; 3]) -> bool {
        let mut poly: Vec<Vec3> = tri.to_vec();
        for axis in 0..3 {
            for sign in [1.0, -1.0] {
                let dist = |p: &Vec3| sign * (p[axis] - center[axis]) - half;
                let mut next = Vec::new();
                for i in 0..poly.len() {
                    let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
                    let (da, db) = (dist(&a), dist(&b));
                    if da <= 0.0 {
                        next.push(a);
                    }
                    if (da < 0.0 && db > 0.0) || (da > 0.0 && db < 0.0) {
                        next.push(a + (b - a) * (da / (da - db)));
                    }
                }
                poly = next;
                if poly.is_empty() {
                    return false;
                }
            }
        }
        true
    }

    fn point() -> impl Strategy<Value = Vec3> {
        (-1.0f64..2.0, -1.0f64..2.0, -1.0f64..2.0).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn agrees_with_polygon_clipping(a in point(), b in point(), c in point(), cx in 0.0f64..1.0, cy in 0.0f64..1.0, cz in 0.0f64..1.0, half in 0.05f64..0.5) {
            let tri = [a, b, c];
            let center = Vec3::new(cx, cy, cz);
            prop_assert_eq!(triangle_box_overlap(center, half, &tri), clip_oracle(center, half, &tri));
        }
    }

    #[test]
    fn obvious_cases() {
        let c = Vec3::new(0.5, 0.5, 0.5);
        let inside = [Vec3::new(0.4, 0.4, 0.5), Vec3::new(0.6, 0.4, 0.5), Vec3::new(0.5, 0.6, 0.5)];
        assert!(triangle_box_overlap(c, 0.25, &inside));
        let far = inside.map(|p| p + Vec3::new(2.0, 0.0, 0.0));
        assert!(!triangle_box_overlap(c, 0.25, &far));
        // Large triangle slicing through the box with all vertices outside.
        let slicer = [Vec3::new(-5.0, -5.0, 0.5), Vec3::new(5.0, -5.0, 0.5), Vec3::new(0.0, 5.0, 0.5)];
        assert!(triangle_box_overlap(c, 0.25, &slicer));
        // Diagonal edge near a corner: only the cross-product axes separate it.
        let corner = [Vec3::new(1.0, 0.2, 0.0), Vec3::new(0.2, 1.0, 0.0), Vec3::new(1.0, 1.0, 2.0)];
        assert_eq!(triangle_box_overlap(c, 0.25, &corner), clip_oracle(c, 0.25, &corner));
    }
}
