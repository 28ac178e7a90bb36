//! Representative-day reduction: Ward-linkage agglomerative clustering on
//! z-normalized day vectors (demand and renewable availability stacked),
//! with the medoid of each cluster as its representative. Tie-breaking is
//! by earliest index everywhere, so the reduction is deterministic.

use crate::model::raw::{RawInstance, RawRepDays};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("cannot form {k} clusters from {days} days")]
    TooManyClusters { k: usize, days: usize },
    #[error("no day vectors given")]
    Empty,
    #[error("series of {id} has length {len}, expected a multiple of {hours} hours")]
    BadSeries { id: String, len: usize, hours: usize },
    #[error("instance has no raw series section")]
    NoSeries,
}

#[derive(Debug, Clone)]
pub struct ClusterReport {
    /// Cluster index per day, 0..k.
    pub assignments: Vec<usize>,
    /// Representative (medoid) day per cluster, ordered by medoid index.
    pub medoids: Vec<usize>,
    /// Cluster probability = size / total days, aligned with `medoids`.
    pub weights: Vec<f64>,
}

/// Ward-linkage agglomerative clustering of day vectors into `k` groups.
/// Columns are z-normalized first so demand and availability features weigh
/// equally regardless of units.
pub fn cluster_representative_days(
    day_vectors: &[Vec<f64>],
    k: usize,
) -> Result<ClusterReport, ClusterError> {
    let n = day_vectors.len();
    if n == 0 {
        return Err(ClusterError::Empty);
    }
    if k == 0 || k > n {
        return Err(ClusterError::TooManyClusters { k, days: n });
    }
    let dim = day_vectors[0].len();
    let norm = z_normalize(day_vectors, dim);

    // Squared euclidean distances; Ward's increase-of-variance criterion is
    // maintained on these via the Lance-Williams update.
    let mut dist = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d2: f64 = (0..dim).map(|c| (norm[i][c] - norm[j][c]).powi(2)).sum();
            // Initial Ward distance between singletons is d^2 / 2.
            dist[i][j] = d2 / 2.0;
            dist[j][i] = dist[i][j];
        }
    }

    let mut active: Vec<bool> = vec![true; n];
    let mut size: Vec<f64> = vec![1.0; n];
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut clusters = n;
    while clusters > k {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in i + 1..n {
                if !active[j] {
                    continue;
                }
                let d = dist[i][j];
                match best {
                    Some((bd, _, _)) if d >= bd => {}
                    _ => best = Some((d, i, j)),
                }
            }
        }
        let (_, a, b) = best.expect("more than k active clusters");
        // Lance-Williams Ward update of distances to the merged cluster.
        let (na, nb) = (size[a], size[b]);
        for c in 0..n {
            if !active[c] || c == a || c == b {
                continue;
            }
            let nc = size[c];
            let upd = ((na + nc) * dist[a][c] + (nb + nc) * dist[b][c] - nc * dist[a][b])
                / (na + nb + nc);
            dist[a][c] = upd;
            dist[c][a] = upd;
        }
        active[b] = false;
        size[a] += size[b];
        let moved = std::mem::take(&mut members[b]);
        members[a].extend(moved);
        clusters -= 1;
    }

    // Medoid per cluster on the normalized vectors, earliest day on ties.
    let mut reps: Vec<(usize, Vec<usize>)> = Vec::new();
    for i in 0..n {
        if !active[i] {
            continue;
        }
        let mut group = members[i].clone();
        group.sort_unstable();
        let mut medoid = group[0];
        let mut best = f64::INFINITY;
        for &cand in &group {
            let total: f64 = group
                .iter()
                .map(|&other| {
                    (0..dim)
                        .map(|c| (norm[cand][c] - norm[other][c]).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .sum();
            if total < best - 1e-15 {
                best = total;
                medoid = cand;
            }
        }
        reps.push((medoid, group));
    }
    reps.sort_by_key(|(m, _)| *m);

    let mut assignments = vec![0; n];
    let mut medoids = Vec::with_capacity(k);
    let mut weights = Vec::with_capacity(k);
    for (ci, (medoid, group)) in reps.iter().enumerate() {
        for &d in group {
            assignments[d] = ci;
        }
        medoids.push(*medoid);
        weights.push(group.len() as f64 / n as f64);
    }
    Ok(ClusterReport {
        assignments,
        medoids,
        weights,
    })
}

fn z_normalize(rows: &[Vec<f64>], dim: usize) -> Vec<Vec<f64>> {
    let n = rows.len() as f64;
    let mut mean = vec![0.0; dim];
    for r in rows {
        for (c, &v) in r.iter().enumerate() {
            mean[c] += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut sd = vec![0.0; dim];
    for r in rows {
        for (c, &v) in r.iter().enumerate() {
            sd[c] += (v - mean[c]).powi(2);
        }
    }
    for s in sd.iter_mut() {
        *s = (*s / n).sqrt();
    }
    rows.iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .map(|(c, &v)| if sd[c] > 1e-12 { (v - mean[c]) / sd[c] } else { 0.0 })
                .collect()
        })
        .collect()
}

/// Replaces the raw hourly series of an instance document by `k` clustered
/// representative days. Day vectors stack every node's demand profile and
/// every renewable unit's availability profile for that day.
pub fn reduce_series_instance(
    raw: &RawInstance,
    k: usize,
) -> Result<(RawInstance, ClusterReport), ClusterError> {
    let series = raw.series.as_ref().ok_or(ClusterError::NoSeries)?;
    let hours = series.hours_per_day;
    let mut n_days = None;
    for (id, s) in series.demand.iter().chain(series.forecast.iter()) {
        if hours == 0 || s.len() % hours != 0 {
            return Err(ClusterError::BadSeries {
                id: id.clone(),
                len: s.len(),
                hours,
            });
        }
        let d = s.len() / hours;
        match n_days {
            None => n_days = Some(d),
            Some(prev) if prev != d => {
                return Err(ClusterError::BadSeries {
                    id: id.clone(),
                    len: s.len(),
                    hours,
                })
            }
            _ => {}
        }
    }
    let n_days = n_days.ok_or(ClusterError::Empty)?;

    let mut day_vectors = vec![Vec::new(); n_days];
    for s in series.demand.values() {
        for (d, v) in day_vectors.iter_mut().enumerate() {
            v.extend_from_slice(&s[d * hours..(d + 1) * hours]);
        }
    }
    for s in series.forecast.values() {
        for (d, v) in day_vectors.iter_mut().enumerate() {
            v.extend_from_slice(&s[d * hours..(d + 1) * hours]);
        }
    }
    let report = cluster_representative_days(&day_vectors, k)?;

    let mut out = raw.clone();
    out.series = None;
    out.repdays = Some(RawRepDays {
        weights: report.weights.clone(),
        hours,
        hour_labels: Some((0..hours as u32).collect()),
    });
    let slice = |s: &[f64], day: usize| s[day * hours..(day + 1) * hours].to_vec();
    let mut inflexible = std::collections::BTreeMap::new();
    for (node, s) in &series.demand {
        inflexible.insert(
            node.clone(),
            report.medoids.iter().map(|&d| slice(s, d)).collect::<Vec<_>>(),
        );
    }
    out.demand.inflexible = Some(inflexible);
    for g in out.generators.iter_mut() {
        if let Some(s) = series.forecast.get(&g.id) {
            g.forecast = Some(report.medoids.iter().map(|&d| slice(s, d)).collect());
        }
    }
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_day_its_own_cluster() {
        let days = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        let rep = cluster_representative_days(&days, 3).unwrap();
        assert_eq!(rep.medoids, vec![0, 1, 2]);
        for w in &rep.weights {
            assert!((w - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicate_days_cluster_together() {
        // Two copies of day A and one day B: weights 2/3, 1/3.
        let a = vec![10.0, 20.0, 30.0];
        let b = vec![5.0, 1.0, 0.0];
        let rep = cluster_representative_days(&[a.clone(), a.clone(), b.clone()], 2).unwrap();
        assert_eq!(rep.assignments[0], rep.assignments[1]);
        assert_ne!(rep.assignments[0], rep.assignments[2]);
        assert_eq!(rep.medoids, vec![0, 2]);
        assert_eq!(rep.weights, vec![2.0 / 3.0, 1.0 / 3.0]);
    }

    #[test]
    fn single_cluster_takes_global_medoid() {
        let days = vec![
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![0.9, 1.1],
            vec![5.0, 5.0],
        ];
        let rep = cluster_representative_days(&days, 1).unwrap();
        assert_eq!(rep.weights, vec![1.0]);
        // Exhaustive check of the medoid definition.
        let norm: Vec<Vec<f64>> = super::z_normalize(&days, 2);
        let total = |c: usize| -> f64 {
            norm.iter()
                .map(|o| {
                    (0..2)
                        .map(|k| (norm[c][k] - o[k]).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .sum()
        };
        let best = (0..4).min_by(|&a, &b| total(a).partial_cmp(&total(b)).unwrap()).unwrap();
        assert_eq!(rep.medoids, vec![best]);
    }

    #[test]
    fn too_many_clusters_is_an_error() {
        let days = vec![vec![1.0], vec![2.0]];
        assert!(matches!(
            cluster_representative_days(&days, 3),
            Err(ClusterError::TooManyClusters { .. })
        ));
    }

    #[test]
    fn clustering_is_deterministic() {
        let days: Vec<Vec<f64>> = (0..12)
            .map(|i| {
                (0..6)
                    .map(|j| ((i * 7 + j * 3) % 10) as f64 + 0.1 * (i as f64))
                    .collect()
            })
            .collect();
        let a = cluster_representative_days(&days, 4).unwrap();
        let b = cluster_representative_days(&days, 4).unwrap();
        assert_eq!(a.assignments, b.assignments);
        assert_eq!(a.medoids, b.medoids);
        assert_eq!(a.weights, b.weights);
    }
}
