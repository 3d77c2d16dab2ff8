//! Uniform hash grid for radius and nearest-neighbour queries.

use std::collections::HashMap;

use crate::math::Vec3;

pub type CellKey = [i64; 3];

#[derive(Debug, Clone)]
pub struct HashGrid {
    cell: f64,
    cells: HashMap<CellKey, Vec<u32>>,
}

impl HashGrid {
    pub fn new(points: &[Vec3], cell: f64) -> Self {
        assert!(cell > 0.0, "hash grid cell must be positive");
        let mut cells: HashMap<CellKey, Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(key(p, cell)).or_default().push(i as u32);
        }
        Self { cell, cells }
    }

    pub fn cell(&self) -> f64 {
        self.cell
    }

    /// Calls `f(index)` for every point within distance `r` of `p`.
    pub fn for_each_within(&self, points: &[Vec3], p: &Vec3, r: f64, mut f: impl FnMut(usize)) {
        let reach = (r / self.cell).ceil() as i64;
        let c = key(p, self.cell);
        let r2 = r * r;
        for dz in -reach..=reach {
            for dy in -reach..=reach {
                for dx in -reach..=reach {
                    if let Some(list) = self.cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                        for &i in list {
                            if (points[i as usize] - p).norm_squared() <= r2 {
                                f(i as usize);
                            }
                        }
                    }
                }
            }
        }
    }

    /// The `k` nearest points to `p` as `(index, distance)`, nearest first,
    /// ties broken by index.
    pub fn knn(&self, points: &[Vec3], p: &Vec3, k: usize) -> Vec<(usize, f64)> {
        let k = k.min(points.len());
        if k == 0 {
            return Vec::new();
        }
        let c = key(p, self.cell);
        let mut ring = 1i64;
        loop {
            let mut found: Vec<(usize, f64)> = Vec::new();
            for dz in -ring..=ring {
                for dy in -ring..=ring {
                    for dx in -ring..=ring {
                        if let Some(list) = self.cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                            for &i in list {
                                found.push((i as usize, (points[i as usize] - p).norm()));
                            }
                        }
                    }
                }
            }
            // Everything within `ring` cells of distance is guaranteed seen.
            let safe = ring as f64 * self.cell;
            found.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            let certain = found.iter().take_while(|e| e.1 <= safe).count();
            if certain >= k || found.len() == points.len() {
                found.truncate(k);
                return found;
            }
            ring *= 2;
        }
    }
}

#[inline]
pub fn key(p: &Vec3, cell: f64) -> CellKey {
    [
        (p.x / cell).floor() as i64,
        (p.y / cell).floor() as i64,
        (p.z / cell).floor() as i64,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn knn_matches_brute_force() {
        let pts: Vec<Vec3> = (0..500)
            .map(|i| {
                let f = i as f64;
                Vec3::new((f * 0.37).sin(), (f * 0.91).cos(), (f * 0.13).sin() * 0.5)
            })
            .collect();
        let grid = HashGrid::new(&pts, 0.05);
        let q = Vec3::new(0.1, -0.2, 0.05);
        let got: Vec<usize> = grid.knn(&pts, &q, 8).into_iter().map(|e| e.0).collect();
        let mut all: Vec<(usize, f64)> = pts.iter().enumerate().map(|(i, p)| (i, (p - q).norm())).collect();
        all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let want: Vec<usize> = all[..8].iter().map(|e| e.0).collect();
        assert_eq!(got, want);
    }

    #[test]
    fn radius_query_is_inclusive() {
        let pts = vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.5, 0.0, 0.0)];
        let grid = HashGrid::new(&pts, 0.7);
        let mut hit = Vec::new();
        grid.for_each_within(&pts, &Vec3::zeros(), 1.0, |i| hit.push(i));
        hit.sort();
        assert_eq!(hit, vec![0, 1]);
    }
}
