use std::collections::HashMap;

use crate::math::Vec3;

/// Cell of the downsampling lattice; cells are centered on `i * cell`.
#[inline]
pub fn voxel_index(p: &Vec3, cell: f64) -> [i64; 3] {
    [
        (p.x / cell).round() as i64,
        (p.y / cell).round() as i64,
        (p.z / cell).round() as i64,
    ]
}

/// Keeps one point per cell, preferring surface points, then the point
/// nearest the cell center, then the lower index. Returns the kept indices
/// ordered by cell index.
pub fn voxel_downsample(points: &[Vec3], surface: &[bool], cell: f64) -> Vec<usize> {
    assert!(cell > 0.0, "cell must be positive");
    assert_eq!(points.len(), surface.len());
    let mut best: HashMap<[i64; 3], (usize, bool, f64)> = HashMap::with_capacity(points.len() / 4);
    for (i, p) in points.iter().enumerate() {
        let key = voxel_index(p, cell);
        let center = Vec3::new(key[0] as f64, key[1] as f64, key[2] as f64) * cell;
        let d = (p - center).norm_squared();
        let s = surface[i];
        best.entry(key)
            .and_modify(|e| {
                let better = (s && !e.1) || (s == e.1 && d < e.2);
                if better {
                    *e = (i, s, d);
                }
            })
            .or_insert((i, s, d));
    }
    let mut kept: Vec<([i64; 3], usize)> = best.into_iter().map(|(k, e)| (k, e.0)).collect();
    kept.sort_unstable();
    kept.into_iter().map(|e| e.1).collect()
}
