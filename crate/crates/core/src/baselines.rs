//! Heuristic subsamplers used as comparison points: uniform random selection,
//! k-means centroid-nearest selection and greedy radius thinning.
//!
//! Every method returns exactly `budget` distinct row indices, sorted ascending.

use std::cmp::Ordering;

use kdtree::distance::squared_euclidean;
use kdtree::KdTree;
use ndarray::ArrayView2;
use rand::seq::{index, IndexedRandom, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubsampleMethod {
    Random,
    Kmeans,
    NnThinning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsampleSpec {
    pub method: SubsampleMethod,
    pub budget: usize,
    pub seed: u64,
}

impl SubsampleSpec {
    fn check(&self, n: usize) -> Result<()> {
        if self.budget == 0 || self.budget > n {
            return Err(Error::invalid(format!(
                "budget {} must be in 1..={n}",
                self.budget
            )));
        }
        Ok(())
    }
}

/// Dispatches on `spec.method`.
pub fn subsample(dataset: &Dataset, spec: &SubsampleSpec) -> Result<Vec<usize>> {
    match spec.method {
        SubsampleMethod::Random => random_subsample(dataset, spec),
        SubsampleMethod::Kmeans => kmeans_select(dataset, spec),
        SubsampleMethod::NnThinning => nn_thinning(dataset, spec),
    }
}

/// Budget for a ratio of `n` rows, rounded up.
pub fn budget_for_ratio(n: usize, ratio: f64) -> usize {
    // guard against 0.3 * 10 = 3.0000000000000004
    let exact = ratio * n as f64;
    let rounded = exact.round();
    if (exact - rounded).abs() < 1e-9 {
        rounded as usize
    } else {
        exact.ceil() as usize
    }
}

pub fn random_subsample(dataset: &Dataset, spec: &SubsampleSpec) -> Result<Vec<usize>> {
    let n = dataset.len();
    spec.check(n)?;
    let mut rng = seed::rng(spec.seed);
    let mut chosen = index::sample(&mut rng, n, spec.budget).into_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Row-major copy of a feature matrix for cheap row slicing.
struct Rows {
    data: Vec<f64>,
    d: usize,
}

impl Rows {
    fn new(x: ArrayView2<f64>) -> Self {
        Rows {
            data: x.as_standard_layout().iter().copied().collect(),
            d: x.ncols(),
        }
    }

    fn n(&self) -> usize {
        if self.d == 0 {
            0
        } else {
            self.data.len() / self.d
        }
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }
}

#[inline]
fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

// ---------------------------------------------------------------------------
// k-means

type Tree<'a> = KdTree<f64, usize, &'a [f64]>;

fn build_tree<'a>(d: usize, points: impl Iterator<Item = (usize, &'a [f64])>) -> Tree<'a> {
    let mut tree = KdTree::new(d);
    for (i, p) in points {
        tree.add(p, i)
            .expect("finite coordinates of matching width");
    }
    tree
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub centroids: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    /// Inertia after each centroid update.
    pub inertia_history: Vec<f64>,
}

pub const KMEANS_MAX_ITER: usize = 100;
pub const KMEANS_TOL: f64 = 1e-4;

/// k-means++ seeding. Rows are grouped by their nearest centre so far; a whole
/// group is skipped when the new centre is at least twice the group's reach away
/// from the group's centre, since no member can then move closer.
fn kmeans_pp_seed<R: Rng>(rows: &Rows, k: usize, rng: &mut R) -> Vec<usize> {
    let n = rows.n();
    let first = rng.random_range(0..n);
    let mut centres = vec![first];
    let mut is_center = vec![false; n];
    is_center[first] = true;
    let mut mind: Vec<f64> = (0..n)
        .map(|i| dist2(rows.row(i), rows.row(first)))
        .collect();
    let mut members: Vec<Vec<usize>> = vec![(0..n).collect()];
    let mut reach: Vec<f64> = vec![mind.iter().copied().fold(0.0, f64::max).sqrt()];
    while centres.len() < k {
        let total: f64 = mind.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &m) in mind.iter().enumerate() {
                if m <= 0.0 {
                    continue;
                }
                acc += m;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total has a positive entry")
        } else {
            // every remaining row coincides with a centre
            let free: Vec<usize> = (0..n).filter(|&i| !is_center[i]).collect();
            *free.choose(rng).expect("k <= n")
        };
        let c = rows.row(next);
        let mut taken = Vec::new();
        for j in 0..centres.len() {
            let gap = dist2(c, rows.row(centres[j])).sqrt();
            if gap >= 2.0 * reach[j] {
                continue;
            }
            let mut r = 0.0f64;
            members[j].retain(|&i| {
                let d = dist2(rows.row(i), c);
                if d < mind[i] {
                    mind[i] = d;
                    taken.push(i);
                    false
                } else {
                    r = r.max(mind[i]);
                    true
                }
            });
            reach[j] = r.sqrt();
        }
        reach.push(taken.iter().map(|&i| mind[i]).fold(0.0, f64::max).sqrt());
        members.push(taken);
        centres.push(next);
        is_center[next] = true;
    }
    centres
}

/// Moves every row to its nearest centre, keeping the current one on ties.
/// Returns how many rows changed centre.
fn assign(rows: &Rows, centroids: &[Vec<f64>], assignment: &mut [usize]) -> usize {
    let tree = build_tree(rows.d, centroids.iter().map(Vec::as_slice).enumerate());
    assignment
        .par_iter_mut()
        .enumerate()
        .map(|(i, a)| {
            let x = rows.row(i);
            let hits = tree
                .nearest(x, 1, &squared_euclidean)
                .expect("width checked");
            let (best_d, &best) = hits[0];
            let stay = *a != usize::MAX && (*a == best || dist2(x, &centroids[*a]) <= best_d);
            if stay {
                0
            } else {
                *a = best;
                1
            }
        })
        .sum()
}

/// Lloyd's algorithm with k-means++ seeding.
///
/// Stops after `max_iter` centroid updates, when no row changes centre, or when
/// the relative inertia change drops below `tol`. Empty clusters keep their
/// previous centre.
pub fn lloyd_kmeans(
    features: ArrayView2<f64>,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<KMeansFit> {
    let rows = Rows::new(features);
    let n = rows.n();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k = {k} must be in 1..={n}")));
    }
    let d = rows.d;
    let mut rng = seed::rng(seed);
    let mut centroids: Vec<Vec<f64>> = kmeans_pp_seed(&rows, k, &mut rng)
        .into_iter()
        .map(|i| rows.row(i).to_vec())
        .collect();
    let mut assignment = vec![usize::MAX; n];
    assign(&rows, &centroids, &mut assignment);

    let mut history: Vec<f64> = Vec::new();
    loop {
        let mut sums = vec![0.0f64; k * d];
        let mut counts = vec![0usize; k];
        for (i, &a) in assignment.iter().enumerate() {
            counts[a] += 1;
            for (s, v) in sums[a * d..(a + 1) * d].iter_mut().zip(rows.row(i)) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                let inv = 1.0 / counts[j] as f64;
                for (c, s) in centroids[j].iter_mut().zip(&sums[j * d..(j + 1) * d]) {
                    *c = s * inv;
                }
            }
        }
        let inertia: f64 = (0..n)
            .map(|i| dist2(rows.row(i), &centroids[assignment[i]]))
            .sum();
        let prev = history.last().copied();
        history.push(inertia);
        if let Some(prev) = prev {
            if prev <= 0.0 || (prev - inertia).abs() / prev < tol {
                break;
            }
        }
        if history.len() >= max_iter.max(1) || assign(&rows, &centroids, &mut assignment) == 0 {
            break;
        }
    }
    Ok(KMeansFit {
        centroids,
        assignment,
        inertia_history: history,
    })
}

const NEAREST_CANDIDATES: usize = 16;

fn by_distance(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// For each centroid in order, claims the nearest row not yet claimed.
fn claim_nearest_rows(rows: &Rows, centroids: &[Vec<f64>]) -> Vec<usize> {
    let n = rows.n();
    let tree = build_tree(rows.d, (0..n).map(|i| (i, rows.row(i))));
    let keep = NEAREST_CANDIDATES.min(n);
    let candidates: Vec<Vec<(f64, usize)>> = centroids
        .par_iter()
        .map(|c| {
            let mut v: Vec<(f64, usize)> = tree
                .nearest(c, keep, &squared_euclidean)
                .expect("width checked")
                .into_iter()
                .map(|(d, &i)| (d, i))
                .collect();
            v.sort_by(by_distance);
            v
        })
        .collect();

    let mut claimed = vec![false; n];
    let mut picked = Vec::with_capacity(centroids.len());
    for (c, cands) in centroids.iter().zip(&candidates) {
        let hit = cands.iter().find(|(_, i)| !claimed[*i]).map(|&(_, i)| i);
        let row = hit.unwrap_or_else(|| {
            tree.iter_nearest(c, &squared_euclidean)
                .expect("width checked")
                .map(|(_, &i)| i)
                .find(|&i| !claimed[i])
                .expect("fewer centroids than rows")
        });
        claimed[row] = true;
        picked.push(row);
    }
    picked
}

/// k-means with `k = budget`; each centroid contributes its nearest unclaimed row.
pub fn kmeans_select(dataset: &Dataset, spec: &SubsampleSpec) -> Result<Vec<usize>> {
    spec.check(dataset.len())?;
    let fit = lloyd_kmeans(
        dataset.features.view(),
        spec.budget,
        spec.seed,
        KMEANS_MAX_ITER,
        KMEANS_TOL,
    )?;
    let rows = Rows::new(dataset.features.view());
    let mut chosen = claim_nearest_rows(&rows, &fit.centroids);
    chosen.sort_unstable();
    Ok(chosen)
}

// ---------------------------------------------------------------------------
// Radius thinning

fn thinning_pass_rows(rows: &Rows, order: &[usize], radius: f64) -> Vec<usize> {
    let r2 = radius * radius;
    let mut tree: Tree = KdTree::new(rows.d);
    let mut kept = Vec::new();
    for &i in order {
        let x = rows.row(i);
        let blocked = tree.size() > 0
            && tree
                .nearest(x, 1, &squared_euclidean)
                .expect("width checked")[0]
                .0
                <= r2;
        if !blocked {
            tree.add(x, i).expect("finite coordinates");
            kept.push(i);
        }
    }
    kept
}

/// One greedy pass: visit rows in `order`, keeping a row iff it lies farther than
/// `radius` from every row kept so far. Returns kept rows in visiting order.
pub fn thinning_pass(features: ArrayView2<f64>, order: &[usize], radius: f64) -> Vec<usize> {
    thinning_pass_rows(&Rows::new(features), order, radius)
}

/// Largest Euclidean distance between any two rows.
///
/// Rows are scanned in decreasing distance from the column mean; a pair can be
/// no farther apart than the sum of those distances, which bounds the search.
pub fn max_pairwise_distance(features: ArrayView2<f64>) -> f64 {
    let rows = Rows::new(features);
    let n = rows.n();
    if n < 2 {
        return 0.0;
    }
    let mean: Vec<f64> = (0..rows.d)
        .map(|j| (0..n).map(|i| rows.row(i)[j]).sum::<f64>() / n as f64)
        .collect();
    let mut by_reach: Vec<(f64, usize)> = (0..n)
        .map(|i| (dist2(rows.row(i), &mean).sqrt(), i))
        .collect();
    by_reach.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    // slack keeps rounding in the bound from pruning the true maximum
    let bound = |a: f64, b: f64| (a + b) * (1.0 + 1e-9);
    let mut best = 0.0f64;
    for a in 0..n - 1 {
        let (ra, i) = by_reach[a];
        if bound(ra, by_reach[a + 1].0) < best {
            break;
        }
        for &(rb, j) in &by_reach[a + 1..] {
            if bound(ra, rb) < best {
                break;
            }
            best = best.max(dist2(rows.row(i), rows.row(j)).sqrt());
        }
    }
    best
}

pub const THINNING_BISECTION_STEPS: usize = 20;

/// Radius thinning tuned to the budget.
///
/// The scan order is a seeded permutation. The radius is bisected over
/// `[0, max pairwise distance]` for the largest value whose pass still keeps at
/// least `budget` rows, and the kept list is cut to `budget` in scan order. If
/// even radius 0 keeps too few rows (exact duplicates), the remaining slots are
/// filled with the first unkept rows in scan order.
pub fn nn_thinning(dataset: &Dataset, spec: &SubsampleSpec) -> Result<Vec<usize>> {
    let n = dataset.len();
    spec.check(n)?;
    let m = spec.budget;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(spec.seed));

    let rows = Rows::new(dataset.features.view());
    let pass = |r: f64| thinning_pass_rows(&rows, &order, r);

    let mut best = pass(0.0);
    if best.len() < m {
        let mut taken = vec![false; n];
        for &i in &best {
            taken[i] = true;
        }
        best.extend(
            order
                .iter()
                .copied()
                .filter(|&i| !taken[i])
                .take(m - best.len()),
        );
    } else {
        let mut lo = 0.0;
        let mut hi = max_pairwise_distance(dataset.features.view());
        for _ in 0..THINNING_BISECTION_STEPS {
            if best.len() == m {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let kept = pass(mid);
            if kept.len() >= m {
                lo = mid;
                best = kept;
            } else {
                hi = mid;
            }
        }
    }
    best.truncate(m);
    best.sort_unstable();
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::distr::{Distribution, Uniform};

    fn dataset(x: Array2<f64>) -> Dataset {
        let n = x.nrows();
        let d = x.ncols();
        let labels = (0..n).map(|i| i % 2).collect();
        Dataset::new(
            x,
            labels,
            vec!["a".into(), "b".into()],
            (0..d).map(|j| format!("x{j}")).collect(),
            "t",
        )
        .unwrap()
    }

    fn random_points(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = seed::rng(seed);
        let u = Uniform::new(-3.0, 3.0).unwrap();
        Array2::from_shape_simple_fn((n, d), || u.sample(&mut rng))
    }

    fn spec(method: SubsampleMethod, budget: usize, seed: u64) -> SubsampleSpec {
        SubsampleSpec {
            method,
            budget,
            seed,
        }
    }

    #[test]
    fn budget_rounding() {
        assert_eq!(budget_for_ratio(10, 0.3), 3);
        assert_eq!(budget_for_ratio(46400, 0.3), 13920);
        assert_eq!(budget_for_ratio(11, 0.3), 4);
        assert_eq!(budget_for_ratio(7, 1.0), 7);
    }

    #[test]
    fn random_examples() {
        let ds = dataset(random_points(10, 2, 1));
        let s = random_subsample(&ds, &spec(SubsampleMethod::Random, 3, 4)).unwrap();
        assert_eq!(s.len(), 3);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        let all = random_subsample(&ds, &spec(SubsampleMethod::Random, 10, 4)).unwrap();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert!(random_subsample(&ds, &spec(SubsampleMethod::Random, 11, 4)).is_err());
        assert!(random_subsample(&ds, &spec(SubsampleMethod::Random, 0, 4)).is_err());
    }

    #[test]
    fn random_inclusion_is_uniform() {
        let ds = dataset(random_points(20, 1, 2));
        let (m, reps) = (6usize, 10_000usize);
        let mut hits = [0usize; 20];
        for s in 0..reps {
            for i in random_subsample(&ds, &spec(SubsampleMethod::Random, m, s as u64)).unwrap() {
                hits[i] += 1;
            }
        }
        let p = m as f64 / 20.0;
        let se = (p * (1.0 - p) / reps as f64).sqrt();
        for h in hits {
            let f = h as f64 / reps as f64;
            assert!((f - p).abs() <= 3.5 * se, "frequency {f}");
        }
    }

    #[test]
    fn kmeans_full_budget_selects_everything() {
        let ds = dataset(random_points(25, 3, 5));
        let s = kmeans_select(&ds, &spec(SubsampleMethod::Kmeans, 25, 1)).unwrap();
        assert_eq!(s, (0..25).collect::<Vec<_>>());
    }

    #[test]
    fn kmeans_two_pairs() {
        let x = ndarray::array![[0.0, 0.0], [0.1, 0.0], [10.0, 10.0], [10.0, 10.1]];
        // Exhaustive oracle: of the 7 two-cluster partitions of 4 points the
        // minimum-inertia one is {0,1} | {2,3}, so each centroid sits inside a pair.
        let pts: Vec<[f64; 2]> = x.rows().into_iter().map(|r| [r[0], r[1]]).collect();
        let inertia = |mask: u32| {
            let mut total = 0.0;
            for side in [true, false] {
                let members: Vec<&[f64; 2]> = (0..4)
                    .filter(|i| ((mask >> i) & 1 == 1) == side)
                    .map(|i| &pts[i])
                    .collect();
                let c = [
                    members.iter().map(|p| p[0]).sum::<f64>() / members.len() as f64,
                    members.iter().map(|p| p[1]).sum::<f64>() / members.len() as f64,
                ];
                total += members
                    .iter()
                    .map(|p| (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2))
                    .sum::<f64>();
            }
            total
        };
        let best = (1u32..8)
            .min_by(|&a, &b| inertia(a).total_cmp(&inertia(b)))
            .unwrap();
        assert_eq!(best, 0b0011);

        let ds = dataset(x);
        for seed in 0..20 {
            let s = kmeans_select(&ds, &spec(SubsampleMethod::Kmeans, 2, seed)).unwrap();
            assert_eq!(s.len(), 2);
            assert!(s[0] < 2 && s[1] >= 2, "seed {seed}: {s:?}");
        }
    }

    #[test]
    fn kmeans_inertia_monotone_and_matches_plain_lloyd() {
        let x = random_points(300, 4, 8);
        for k in [1, 5, 40, 150] {
            let fit = lloyd_kmeans(x.view(), k, 3, 100, 0.0).unwrap();
            for w in fit.inertia_history.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", fit.inertia_history);
            }
            // every point is at its nearest centre
            for (i, &a) in fit.assignment.iter().enumerate() {
                let x = x.row(i).to_vec();
                let da = dist2(&x, &fit.centroids[a]);
                assert!(fit.centroids.iter().all(|c| dist2(&x, c) >= da - 1e-12));
            }
        }
    }

    #[test]
    fn kmeans_handles_duplicates() {
        let mut x = random_points(12, 2, 4);
        for i in 6..12 {
            let row = x.row(i - 6).to_owned();
            x.row_mut(i).assign(&row);
        }
        let ds = dataset(x);
        let s = kmeans_select(&ds, &spec(SubsampleMethod::Kmeans, 10, 2)).unwrap();
        assert_eq!(s.len(), 10);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn thinning_hand_trace() {
        let x = Array2::from_shape_vec((10, 1), (0..10).map(|v| v as f64).collect()).unwrap();
        let order: Vec<usize> = (0..10).collect();
        assert_eq!(thinning_pass(x.view(), &order, 1.5), vec![0, 2, 4, 6, 8]);
        assert_eq!(thinning_pass(x.view(), &order, 0.0), order);
        // distance exactly r blocks
        assert_eq!(thinning_pass(x.view(), &order, 1.0), vec![0, 2, 4, 6, 8]);
    }

    #[test]
    fn thinning_pass_is_maximal_and_separated() {
        let x = random_points(200, 3, 17);
        let mut order: Vec<usize> = (0..200).collect();
        order.shuffle(&mut seed::rng(2));
        for r in [0.3, 0.8, 2.0] {
            let kept = thinning_pass(x.view(), &order, r);
            let dist = |a: usize, b: usize| dist2(&x.row(a).to_vec(), &x.row(b).to_vec()).sqrt();
            for (ai, &a) in kept.iter().enumerate() {
                for &b in &kept[ai + 1..] {
                    assert!(dist(a, b) > r);
                }
            }
            for i in 0..200 {
                if !kept.contains(&i) {
                    assert!(kept.iter().any(|&k| dist(i, k) <= r));
                }
            }
        }
    }

    #[test]
    fn thinning_meets_budget() {
        let ds = dataset(random_points(150, 2, 3));
        for m in [1, 7, 45, 150] {
            let s = nn_thinning(&ds, &spec(SubsampleMethod::NnThinning, m, 9)).unwrap();
            assert_eq!(s.len(), m);
            assert!(s.windows(2).all(|w| w[0] < w[1]));
        }
        let mut x = random_points(10, 2, 1);
        for i in 5..10 {
            let row = x.row(0).to_owned();
            x.row_mut(i).assign(&row);
        }
        let s = nn_thinning(&dataset(x), &spec(SubsampleMethod::NnThinning, 8, 1)).unwrap();
        assert_eq!(s.len(), 8);
    }

    #[test]
    fn max_pairwise_brute_force() {
        let x = random_points(40, 3, 6);
        let mut best: f64 = 0.0;
        for i in 0..40 {
            for j in 0..40 {
                let d: f64 = (0..3)
                    .map(|c| (x[[i, c]] - x[[j, c]]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                best = best.max(d);
            }
        }
        assert_eq!(max_pairwise_distance(x.view()), best);
    }

    #[test]
    fn all_methods_deterministic_and_exact() {
        let ds = dataset(random_points(120, 3, 10));
        for method in [
            SubsampleMethod::Random,
            SubsampleMethod::Kmeans,
            SubsampleMethod::NnThinning,
        ] {
            for m in [1, 13, 36, 120] {
                let sp = spec(method, m, 21);
                let a = subsample(&ds, &sp).unwrap();
                assert_eq!(a, subsample(&ds, &sp).unwrap());
                assert_eq!(a.len(), m);
                assert!(a.windows(2).all(|w| w[0] < w[1]));
                assert!(a.iter().all(|&i| i < 120));
            }
            assert!(subsample(&ds, &spec(method, 121, 0)).is_err());
        }
    }
}
