use crate::math::Vec3;
use crate::spatial::HashGrid;

fn find(parent: &mut [u32], mut i: u32) -> u32 {
    while parent[i as usize] != i {
        let p = parent[i as usize];
        parent[i as usize] = parent[p as usize];
        i = p;
    }
    i
}

/// Single-linkage cluster label per point (points closer than
/// `link_radius` share a cluster). Labels are the smallest member index.
pub fn cluster_labels(points: &[Vec3], link_radius: f64) -> Vec<u32> {
    let n = points.len();
    let mut parent: Vec<u32> = (0..n as u32).collect();
    if n == 0 {
        return parent;
    }
    let grid = HashGrid::new(points, link_radius);
    for i in 0..n {
        grid.for_each_within(points, &points[i], link_radius, |j| {
            if j > i {
                let ri = find(&mut parent, i as u32);
                let rj = find(&mut parent, j as u32);
                if ri != rj {
                    let (lo, hi) = if ri < rj { (ri, rj) } else { (rj, ri) };
                    parent[hi as usize] = lo;
                }
            }
        });
    }
    (0..n as u32).map(|i| find(&mut parent, i)).collect()
}

/// Which points survive floating-cluster removal: clusters smaller than
/// `min_fraction` times the largest cluster are dropped.
pub fn floating_cluster_keep(points: &[Vec3], link_radius: f64, min_fraction: f64) -> Vec<bool> {
    assert!(link_radius > 0.0, "link_radius must be positive");
    assert!(min_fraction > 0.0 && min_fraction <= 1.0, "min_fraction must lie in (0, 1]");
    let labels = cluster_labels(points, link_radius);
    let mut size = vec![0usize; points.len()];
    for &l in &labels {
        size[l as usize] += 1;
    }
    let largest = size.iter().copied().max().unwrap_or(0);
    let threshold = min_fraction * largest as f64;
    labels.iter().map(|&l| size[l as usize] as f64 >= threshold).collect()
}

/// The points that belong to large enough clusters, in input order.
pub fn remove_floating_clusters(points: &[Vec3], link_radius: f64, min_fraction: f64) -> Vec<Vec3> {
    let keep = floating_cluster_keep(points, link_radius, min_fraction);
    points.iter().zip(keep).filter(|(_, k)| *k).map(|(p, _)| *p).collect()
}
