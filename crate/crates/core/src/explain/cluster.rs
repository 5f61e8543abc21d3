use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BeatMatrix, ExplainError, BEAT_LEN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub k_min: usize,
    pub k_max: usize,
    pub min_cluster: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Silhouettes are computed on a seeded subsample of at most this many beats.
    pub silhouette_sample: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            k_min: 2,
            k_max: 8,
            min_cluster: 30,
            seed: 0,
            max_iter: 300,
            silhouette_sample: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub k: usize,
    pub centroids: Vec<f64>,
    pub assign: Vec<usize>,
    /// Within-cluster sum of squares after each assignment step.
    pub inertia: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm from k-means++ seeds. `None` when the data has fewer
/// than `k` distinct points.
pub fn kmeans(data: &[f64], dim: usize, k: usize, seed: u64, max_iter: usize) -> Option<KMeans> {
    let n = data.len() / dim;
    if k == 0 || n < k {
        return None;
    }
    let row = |i: usize| &data[i * dim..(i + 1) * dim];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = row(rng.random_range(0..n)).to_vec();
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(row(i), &centroids)).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            return None;
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = n - 1;
        for (i, &d) in d2.iter().enumerate() {
            if target < d {
                pick = i;
                break;
            }
            target -= d;
        }
        let c = row(pick).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(row(i), &c));
        }
        centroids.extend(c);
    }

    let mut assign = vec![usize::MAX; n];
    let mut inertia = Vec::new();
    for _ in 0..max_iter.max(1) {
        let mut changed = false;
        let mut wss = 0.0;
        for (i, a) in assign.iter_mut().enumerate() {
            let (best, d) = (0..k)
                .map(|c| (c, sq_dist(row(i), &centroids[c * dim..(c + 1) * dim])))
                .min_by(|x, y| x.1.total_cmp(&y.1))
                .expect("k > 0");
            wss += d;
            if *a != best {
                *a = best;
                changed = true;
            }
        }
        inertia.push(wss);
        if !changed {
            break;
        }
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &a) in assign.iter().enumerate() {
            counts[a] += 1;
            sums[a * dim..(a + 1) * dim].iter_mut().zip(row(i)).for_each(|(s, &x)| *s += x);
        }
        for c in 0..k {
            // An emptied cluster keeps its previous centroid.
            if counts[c] > 0 {
                for j in 0..dim {
                    centroids[c * dim + j] = sums[c * dim + j] / counts[c] as f64;
                }
            }
        }
    }
    Some(KMeans {
        k,
        centroids,
        assign,
        inertia,
    })
}

/// Mean silhouette from a precomputed `n × n` distance matrix. Points in
/// singleton clusters score 0. `None` with fewer than two non-empty clusters.
pub fn silhouette(dist: &[f64], assign: &[usize], k: usize) -> Option<f64> {
    let n = assign.len();
    let mut counts = vec![0usize; k];
    assign.iter().for_each(|&a| counts[a] += 1);
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return None;
    }
    let mut total = 0.0;
    for i in 0..n {
        let own = assign[i];
        if counts[own] == 1 {
            continue;
        }
        let mut sums = vec![0.0; k];
        for j in 0..n {
            sums[assign[j]] += dist[i * n + j];
        }
        let a = sums[own] / (counts[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && counts[c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Some(total / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterSummary {
    pub id: usize,
    pub size: usize,
    pub mean_beat: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BeatClusterResult {
    pub k: usize,
    /// Cluster per beat; `None` for beats whose cluster was too small.
    pub assignments: Vec<Option<usize>>,
    /// Mean silhouette for each k tried; `None` where undefined.
    pub silhouette: Vec<(usize, Option<f64>)>,
    /// Retained clusters only.
    pub clusters: Vec<ClusterSummary>,
}

impl BeatClusterResult {
    /// `clusters.json`: k, sizes, silhouettes and averaged beats.
    pub fn write_json(&self, path: &Path) -> Result<(), ExplainError> {
        let sizes: Vec<usize> = self.clusters.iter().map(|c| c.size).collect();
        let v = serde_json::json!({
            "k": self.k,
            "sizes": sizes,
            "silhouette": self.silhouette,
            "clusters": self.clusters,
        });
        let text = serde_json::to_string_pretty(&v).expect("json value");
        std::fs::write(path, text).map_err(|e| ExplainError::io(path, e))
    }
}

/// k-means for every k in range; the k with the best mean silhouette wins and
/// its clusters under `min_cluster` beats are dropped.
pub fn cluster_beats(beats: &BeatMatrix, cfg: &ClusterConfig) -> Result<BeatClusterResult, ExplainError> {
    let n = beats.rows();
    let needed = 2 * cfg.min_cluster;
    if n < needed || n < cfg.k_min {
        return Err(ExplainError::TooFewBeats { found: n, needed });
    }
    let sub: Vec<usize> = if n > cfg.silhouette_sample {
        let mut s = sample(&mut ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x51), n, cfg.silhouette_sample).into_vec();
        s.sort_unstable();
        s
    } else {
        (0..n).collect()
    };
    let m = sub.len();
    let mut dist = vec![0.0; m * m];
    for a in 0..m {
        for b in a + 1..m {
            let d = sq_dist(beats.row(sub[a]), beats.row(sub[b])).sqrt();
            dist[a * m + b] = d;
            dist[b * m + a] = d;
        }
    }

    let mut tried = Vec::new();
    let mut best: Option<(f64, KMeans)> = None;
    for k in cfg.k_min..=cfg.k_max {
        let Some(km) = kmeans(&beats.data, BEAT_LEN, k, cfg.seed, cfg.max_iter) else {
            tried.push((k, None));
            continue;
        };
        let sub_assign: Vec<usize> = sub.iter().map(|&i| km.assign[i]).collect();
        let s = silhouette(&dist, &sub_assign, k);
        tried.push((k, s));
        if let Some(s) = s {
            if best.as_ref().is_none_or(|(b, _)| s > *b) {
                best = Some((s, km));
            }
        }
    }
    let (_, km) = best.ok_or(ExplainError::DegenerateClusters)?;

    let mut clusters = Vec::new();
    let mut keep = vec![false; km.k];
    for c in 0..km.k {
        let members: Vec<usize> = (0..n).filter(|&i| km.assign[i] == c).collect();
        if members.len() < cfg.min_cluster {
            continue;
        }
        keep[c] = true;
        let mut mean = vec![0.0; BEAT_LEN];
        for &i in &members {
            mean.iter_mut().zip(beats.row(i)).for_each(|(m, &x)| *m += x);
        }
        mean.iter_mut().for_each(|m| *m /= members.len() as f64);
        clusters.push(ClusterSummary {
            id: c,
            size: members.len(),
            mean_beat: mean,
        });
    }
    Ok(BeatClusterResult {
        k: km.k,
        assignments: km.assign.iter().map(|&a| keep[a].then_some(a)).collect(),
        silhouette: tried,
        clusters,
    })
}
