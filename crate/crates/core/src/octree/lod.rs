use super::mesh::Vec3;
use super::tree::{cell_center, unit_or_default, tangent_for, AngularFactors, OctreeBtf};
use crate::btf::CompressedBtf;
use crate::error::{Error, Result};

/// Uniform bucket grid over the unit cube for nearest-point queries.
/// Points outside the cube fall into the boundary buckets.
pub struct PointIndex<'a> {
    points: &'a [[f64; 3]],
    n: usize,
    buckets: Vec<Vec<u32>>,
}

impl<'a> PointIndex<'a> {
    pub fn new(points: &'a [[f64; 3]]) -> Self {
        let n = ((points.len() as f64).cbrt().ceil() as usize).clamp(1, 128);
        let mut buckets = vec![Vec::new(); n * n * n];
        for (i, p) in points.iter().enumerate() {
            let b = Self::bucket(n, p);
            buckets[(b[2] * n + b[1]) * n + b[0]].push(i as u32);
        }
        PointIndex { points, n, buckets }
    }

    fn bucket(n: usize, p: &[f64; 3]) -> [usize; 3] {
        p.map(|v| ((v.clamp(0.0, 1.0) * n as f64) as usize).min(n - 1))
    }

    /// Index of the closest point; ties go to the lower index.
    pub fn nearest(&self, q: [f64; 3]) -> u32 {
        let n = self.n as isize;
        let h = 1.0 / self.n as f64;
        let home = Self::bucket(self.n, &q).map(|v| v as isize);
        let mut best: Option<(f64, u32)> = None;
        for r in 0..n {
            for z in home[2] - r..=home[2] + r {
                for y in home[1] - r..=home[1] + r {
                    for x in home[0] - r..=home[0] + r {
                        let on_shell = (x - home[0]).abs() == r || (y - home[1]).abs() == r || (z - home[2]).abs() == r;
                        if !on_shell || x < 0 || y < 0 || z < 0 || x >= n || y >= n || z >= n {
                            continue;
                        }
                        for &i in &self.buckets[((z * n + y) * n + x) as usize] {
                            let p = self.points[i as usize];
                            let d = (0..3).map(|a| (p[a] - q[a]).powi(2)).sum::<f64>();
                            if best.is_none_or(|(bd, bi)| d < bd || (d == bd && i < bi)) {
                                best = Some((d, i));
                            }
                        }
                    }
                }
            }
            // Buckets beyond shell r are at least r * h away along some axis.
            if let Some((d, _)) = best {
                let reach = r as f64 * h;
                if d < reach * reach {
                    break;
                }
            }
        }
        best.expect("index holds at least one point").1
    }
}

impl OctreeBtf {
    /// Gives every finest voxel the spatial rows of its nearest source point
    /// and attaches the shared angular factors.
    pub fn assign_spatial(&mut self, btf: &CompressedBtf, points: &[[f64; 3]]) -> Result<()> {
        if points.is_empty() {
            return Err(Error::invalid("no source points"));
        }
        if points.len() != btf.point_count() {
            return Err(Error::invalid(format!(
                "{} positions for {} factorized points",
                points.len(),
                btf.point_count()
            )));
        }
        let index = PointIndex::new(points);
        let d_max = self.d_max;
        let components = btf.components();
        let finest = &mut self.levels[d_max as usize];
        let mut rows: [Vec<f32>; 3] = components.map(|k| Vec::with_capacity(k * finest.len()));
        for v in &mut finest.voxels {
            let src = index.nearest(cell_center(v.code, d_max));
            v.source = Some(src);
            for ch in 0..3 {
                rows[ch].extend_from_slice(btf.channels[ch].spatial_row(src as usize));
            }
        }
        finest.spatial = rows;
        for level in &mut self.levels[..d_max as usize] {
            level.spatial = Default::default();
        }
        self.components = components;
        self.angular = Some(AngularFactors {
            light_res: btf.light_res,
            view_res: btf.view_res,
            channels: btf.channels.each_ref().map(|c| c.angular.clone()),
        });
        Ok(())
    }

    /// Fills depths `d_max - 1` down to `d_min` with the mean rows and
    /// renormalized mean normals of each voxel's present children. Voxels
    /// without children keep zero rows and the default normal; depths below
    /// `d_min` stay as filler.
    pub fn build_lod(&mut self) -> Result<()> {
        let d_max = self.d_max as usize;
        if self.levels[d_max].spatial.iter().any(Vec::is_empty) {
            return Err(Error::Ordering("finest level has no spatial rows".into()));
        }
        let ks = self.components;
        for depth in (self.d_min as usize..d_max).rev() {
            let (coarse, fine) = self.levels.split_at_mut(depth + 1);
            let (parent, child) = (&mut coarse[depth], &fine[0]);
            let mut sums: [Vec<f64>; 3] = ks.map(|k| vec![0.0; k * parent.len()]);
            let mut normals = vec![Vec3::zeros(); parent.len()];
            let mut counts = vec![0u32; parent.len()];
            let mut p = 0;
            for (ci, cv) in child.voxels.iter().enumerate() {
                while parent.voxels[p].code != cv.code >> 3 {
                    p += 1;
                }
                counts[p] += 1;
                normals[p] += Vec3::new(cv.normal[0] as f64, cv.normal[1] as f64, cv.normal[2] as f64);
                for ch in 0..3 {
                    let k = ks[ch];
                    for (s, &r) in sums[ch][p * k..(p + 1) * k].iter_mut().zip(child.spatial_row(ch, ci, k)) {
                        *s += r as f64;
                    }
                }
            }
            for (i, v) in parent.voxels.iter_mut().enumerate() {
                v.normal = unit_or_default(normals[i]);
                v.tangent = tangent_for(v.normal);
            }
            for ch in 0..3 {
                let k = ks[ch];
                parent.spatial[ch] = sums[ch]
                    .iter()
                    .enumerate()
                    .map(|(j, &s)| match counts[j / k.max(1)] {
                        0 => 0.0,
                        c => (s / c as f64) as f32,
                    })
                    .collect();
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::btf::CompressedChannel;
    use crate::octree::mesh::Mesh;
    use crate::octree::tree::voxelize;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_nearest(points: &[[f64; 3]], q: [f64; 3]) -> u32 {
        let mut best = (f64::INFINITY, 0);
        for (i, p) in points.iter().enumerate() {
            let d = (0..3).map(|a| (p[a] - q[a]).powi(2)).sum::<f64>();
            if d < best.0 {
                best = (d, i as u32);
            }
        }
        best.1
    }

    fn random_btf(points: usize, ks: [usize; 3], rng: &mut ChaCha8Rng) -> CompressedBtf {
        let channel = |k: usize, rng: &mut ChaCha8Rng| CompressedChannel {
            angular: DMatrix::from_fn(4, k, |_, _| rng.random_range(-1.0..1.0)),
            spatial: DMatrix::from_fn(k, points, |_, _| rng.random_range(-1.0..1.0)),
        };
        CompressedBtf {
            light_res: 1,
            view_res: 2,
            channels: [channel(ks[0], rng), channel(ks[1], rng), channel(ks[2], rng)],
        }
    }

    #[test]
    fn bucket_search_matches_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for count in [1, 7, 300] {
            let mut points: Vec<[f64; 3]> = (0..count).map(|_| [0; 3].map(|_: i32| rng.random_range(-0.2..1.2))).collect();
            if count > 1 {
                points[1] = points[0];
            }
            let index = PointIndex::new(&points);
            for _ in 0..500 {
                let q = [0; 3].map(|_: i32| rng.random_range(0.0..1.0));
                assert_eq!(index.nearest(q), brute_nearest(&points, q));
            }
        }
    }

    #[test]
    fn one_point_feeds_every_voxel() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut t = voxelize(&Mesh::placeholder_sphere(), 1, 3).unwrap();
        let btf = random_btf(1, [4, 4, 4], &mut rng);
        t.assign_spatial(&btf, &[[0.3, 0.3, 0.3]]).unwrap();
        let leaf = t.level(3);
        for i in 0..leaf.len() {
            assert_eq!(leaf.spatial_row(0, i, 4), btf.channels[0].spatial_row(0));
        }
    }

    #[test]
    fn centered_points_map_identically() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut t = voxelize(&Mesh::placeholder_sphere(), 1, 3).unwrap();
        let points: Vec<[f64; 3]> = t.level(3).voxels.iter().map(|v| cell_center(v.code, 3)).collect();
        let btf = random_btf(points.len(), [4, 8, 4], &mut rng);
        t.assign_spatial(&btf, &points).unwrap();
        for (i, v) in t.level(3).voxels.iter().enumerate() {
            assert_eq!(v.source, Some(i as u32));
        }
        assert!(matches!(t.assign_spatial(&btf, &[]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn two_children_average() {
        let m = Mesh::new(vec![[0.05, 0.05, 0.1], [0.45, 0.05, 0.1], [0.05, 0.45, 0.1]], vec![[0, 1, 2]]).unwrap();
        let mut t = voxelize(&m, 1, 2).unwrap();
        let n = t.level(2).len();
        assert!(n >= 2);
        t.levels[2].spatial = [(0..n).map(|i| if i == 0 { 1.0 } else { 3.0 }).collect(), vec![0.0; n], vec![0.0; n]];
        t.components = [1, 1, 1];
        t.build_lod().unwrap();
        let expected = (1.0 + 3.0 * (n - 1) as f64) / n as f64;
        assert!((t.level(1).spatial[0][0] as f64 - expected).abs() < 1e-6);
        assert_eq!(&t.level(1).spatial[0][1..], &[0.0; 7]);
        assert_eq!(t.level(1).voxels[0].normal, [0.0, 0.0, 1.0]);
        assert!(t.level(0).spatial[0].is_empty());
    }

    #[test]
    fn unpopulated_finest_level_is_an_ordering_error() {
        let mut t = voxelize(&Mesh::placeholder_sphere(), 1, 2).unwrap();
        assert!(matches!(t.build_lod(), Err(Error::Ordering(_))));
    }

    #[test]
    fn identical_leaves_give_identical_ancestors() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut t = voxelize(&Mesh::placeholder_sphere(), 1, 4).unwrap();
        let btf = random_btf(1, [8, 4, 4], &mut rng);
        t.assign_spatial(&btf, &[[0.5; 3]]).unwrap();
        t.build_lod().unwrap();
        for depth in 1..4 {
            let level = t.level(depth);
            for i in 0..level.len() {
                let row = level.spatial_row(0, i, 8);
                for (a, b) in row.iter().zip(btf.channels[0].spatial_row(0)) {
                    assert!((a - b).abs() < 1e-6);
                }
            }
        }
        t.validate().unwrap();
    }
}
