//! Reference clustering baselines: K-means on raw coordinates and a
//! supervised K-nearest-neighbour classifier.
//!
//! Both operate on the same `(x, y)` points the mixture fit sees. K-means is
//! plain Lloyd iteration with distance-weighted (k-means++ style) seeding;
//! KNN classifies each query point by majority vote among its k nearest
//! labelled points. These exist to quantify how much the line structure
//! helps, so they deliberately know nothing about lines.

use crate::eval::Labeling;
use crate::model::{Dataset, Measurement};
use crate::rng::CounterRng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("k must be >= 1")]
    ZeroK,
    #[error("k = {k} exceeds the number of available points {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("dataset has no ground-truth labels to split on")]
    NoTruth,
    #[error("train_fraction {0} outside (0, 1)")]
    BadFraction(f64),
    #[error("training set is empty")]
    EmptyTrain,
    #[error("test set is empty")]
    EmptyTest,
}

#[derive(Debug, Clone)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iterations: usize,
    /// Stop when no centroid moves farther than this between iterations.
    pub tolerance: f64,
    pub seed: u64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansConfig {
            k,
            max_iterations: 300,
            tolerance: 1e-6,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub labeling: Labeling,
    pub centroids: Vec<(f64, f64)>,
    /// Within-cluster sum of squares after each Lloyd iteration.
    pub wcss_trace: Vec<f64>,
    pub iterations: usize,
}

fn dist2(p: Measurement, c: (f64, f64)) -> f64 {
    let dx = p.x - c.0;
    let dy = p.y - c.1;
    dx * dx + dy * dy
}

/// Lloyd's K-means. Seeding picks the first centroid uniformly and each
/// further one with probability proportional to the squared distance from
/// the nearest centroid chosen so far. A cluster that ends an assignment
/// pass empty is re-seeded on the point farthest from its own centroid.
pub fn kmeans(d: &Dataset, cfg: &KMeansConfig) -> Result<KMeansFit, BaselineError> {
    let pts = d.points();
    let n = pts.len();
    if cfg.k == 0 {
        return Err(BaselineError::ZeroK);
    }
    if cfg.k > n {
        return Err(BaselineError::KTooLarge { k: cfg.k, n });
    }
    let mut rng = CounterRng::new(cfg.seed);
    let mut centroids: Vec<(f64, f64)> = Vec::with_capacity(cfg.k);
    let first = rng.uniform_int(0, n as u64 - 1) as usize;
    centroids.push((pts[first].x, pts[first].y));
    let mut nearest = vec![f64::INFINITY; n];
    while centroids.len() < cfg.k {
        let last = *centroids.last().expect("non-empty");
        let mut total = 0.0;
        for (i, &p) in pts.iter().enumerate() {
            nearest[i] = nearest[i].min(dist2(p, last));
            total += nearest[i];
        }
        let pick = if total > 0.0 {
            let mut u = rng.next_f64() * total;
            let mut chosen = n - 1;
            for (i, &w) in nearest.iter().enumerate() {
                u -= w;
                if u <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // all remaining points coincide with a centroid
            rng.uniform_int(0, n as u64 - 1) as usize
        };
        centroids.push((pts[pick].x, pts[pick].y));
    }

    let mut assign = vec![0usize; n];
    let mut wcss_trace = Vec::new();
    let mut iterations = 0;
    for _ in 0..cfg.max_iterations {
        iterations += 1;
        // assignment, ties to the lowest cluster index
        for (i, &p) in pts.iter().enumerate() {
            let mut best = 0usize;
            let mut best_d = dist2(p, centroids[0]);
            for (c, &cen) in centroids.iter().enumerate().skip(1) {
                let dd = dist2(p, cen);
                if dd < best_d {
                    best = c;
                    best_d = dd;
                }
            }
            assign[i] = best;
        }
        // any empty cluster grabs the point farthest from its own centroid
        loop {
            let mut counts = vec![0usize; cfg.k];
            for &a in &assign {
                counts[a] += 1;
            }
            let Some(empty) = counts.iter().position(|&c| c == 0) else {
                break;
            };
            let far = (0..n)
                .max_by(|&i, &j| {
                    let di = dist2(pts[i], centroids[assign[i]]);
                    let dj = dist2(pts[j], centroids[assign[j]]);
                    di.partial_cmp(&dj)
                        .expect("finite distances")
                        .then(j.cmp(&i)) // ties: lowest index wins
                })
                .expect("n >= k >= 1");
            centroids[empty] = (pts[far].x, pts[far].y);
            assign[far] = empty;
        }
        // update
        let mut sums = vec![(0.0, 0.0, 0usize); cfg.k];
        for (i, &p) in pts.iter().enumerate() {
            let s = &mut sums[assign[i]];
            s.0 += p.x;
            s.1 += p.y;
            s.2 += 1;
        }
        let mut moved: f64 = 0.0;
        for (c, &(sx, sy, cnt)) in sums.iter().enumerate() {
            let new = (sx / cnt as f64, sy / cnt as f64);
            let shift = dist2(
                Measurement {
                    x: new.0,
                    y: new.1,
                },
                centroids[c],
            )
            .sqrt();
            moved = moved.max(shift);
            centroids[c] = new;
        }
        let wcss: f64 = (0..n).map(|i| dist2(pts[i], centroids[assign[i]])).sum();
        wcss_trace.push(wcss);
        if moved < cfg.tolerance {
            break;
        }
    }

    let labeling = Labeling::new(assign.iter().map(|&a| a + 1).collect())
        .expect("labels 1-based by construction");
    Ok(KMeansFit {
        labeling,
        centroids,
        wcss_trace,
        iterations,
    })
}

#[derive(Debug, Clone)]
pub struct KnnConfig {
    pub k: usize,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for KnnConfig {
    fn default() -> Self {
        KnnConfig {
            k: 50,
            train_fraction: 0.4,
            seed: 0,
        }
    }
}

/// Classifies each test point by majority label among its `k` nearest
/// training points (Euclidean). Distance ties resolve toward the earlier
/// training point, vote ties toward the smaller label.
pub fn knn(
    train: &[(Measurement, usize)],
    test: &[Measurement],
    k: usize,
) -> Result<Labeling, BaselineError> {
    if k == 0 {
        return Err(BaselineError::ZeroK);
    }
    if train.is_empty() {
        return Err(BaselineError::EmptyTrain);
    }
    if test.is_empty() {
        return Err(BaselineError::EmptyTest);
    }
    if k > train.len() {
        return Err(BaselineError::KTooLarge {
            k,
            n: train.len(),
        });
    }
    let max_label = train.iter().map(|&(_, l)| l).max().expect("non-empty");
    let mut dists: Vec<(f64, usize)> = Vec::with_capacity(train.len());
    let mut labels = Vec::with_capacity(test.len());
    for &q in test {
        dists.clear();
        for (i, &(p, _)) in train.iter().enumerate() {
            dists.push((dist2(p, (q.x, q.y)), i));
        }
        dists.sort_unstable_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .expect("finite distances")
                .then(a.1.cmp(&b.1))
        });
        let mut votes = vec![0usize; max_label + 1];
        for &(_, i) in &dists[..k] {
            votes[train[i].1] += 1;
        }
        let mut best = 1usize;
        for l in 2..=max_label {
            if votes[l] > votes[best] {
                best = l;
            }
        }
        labels.push(best);
    }
    Ok(Labeling::new(labels).expect("non-empty, labels >= 1"))
}

/// Splits a labelled dataset into train and test index sets, sampling
/// `ceil(train_fraction * N_t)` points from every target so each one is
/// represented in training. Returns `(train_indices, test_indices)`, both
/// sorted.
pub fn stratified_split(
    d: &Dataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), BaselineError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(BaselineError::BadFraction(train_fraction));
    }
    let truth = d.truth().ok_or(BaselineError::NoTruth)?;
    let max_label = *truth.iter().max().expect("non-empty dataset");
    let mut rng = CounterRng::new(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for label in 1..=max_label {
        let mut idx: Vec<usize> = (0..truth.len()).filter(|&i| truth[i] == label).collect();
        if idx.is_empty() {
            continue;
        }
        // Fisher-Yates with the deterministic stream
        for i in (1..idx.len()).rev() {
            let j = rng.uniform_int(0, i as u64) as usize;
            idx.swap(i, j);
        }
        let take = (train_fraction * idx.len() as f64).ceil() as usize;
        let take = take.clamp(1, idx.len());
        train.extend_from_slice(&idx[..take]);
        test.extend_from_slice(&idx[take..]);
    }
    if test.is_empty() {
        return Err(BaselineError::EmptyTest);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}
