//! OSPA between point sets, OSPA(2) between track sets, and the rectangular
//! assignment solver both rely on.

use std::collections::{BTreeMap, HashMap};
use std::ops::RangeInclusive;

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::glmb::ScanReport;
use crate::models::Label;
use crate::scenario::ScenarioTruth;

pub type Point = Vector2<f64>;

/// Positions keyed by scan.
pub type Trajectory = BTreeMap<u32, Point>;

/// Minimum-cost assignment of every row of a `rows x cols` cost matrix
/// (row-major, `rows <= cols`) to a distinct column. Returns the column of
/// each row and the total cost.
///
/// Shortest augmenting paths with potentials, `O(rows^2 cols)`.
pub fn solve_assignment(cost: &[f64], rows: usize, cols: usize) -> (Vec<usize>, f64) {
    assert!(rows <= cols, "more rows than columns");
    assert_eq!(cost.len(), rows * cols);
    if rows == 0 {
        return (Vec::new(), 0.0);
    }
    // 1-based arrays with a virtual column 0, as in the classic formulation.
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for i in 1..=rows {
        owner[0] = i;
        let mut j0 = 0;
        let mut min_to = vec![f64::INFINITY; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let reduced = cost[(i0 - 1) * cols + j - 1] - u[i0] - v[j];
                if reduced < min_to[j] {
                    min_to[j] = reduced;
                    way[j] = j0;
                }
                if min_to[j] < delta {
                    delta = min_to[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; rows];
    for j in 1..=cols {
        if owner[j] > 0 {
            assign[owner[j] - 1] = j - 1;
        }
    }
    let total = assign.iter().enumerate().map(|(i, &j)| cost[i * cols + j]).sum();
    (assign, total)
}

fn check_params(p: f64, c: f64) -> Result<()> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::domain(format!("order p = {p} must be at least 1")));
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::domain(format!("cutoff c = {c} must be positive")));
    }
    Ok(())
}

/// OSPA for sets of sizes `nx`, `ny` given cut-off base distances
/// `dist(i, j) <= c`.
fn ospa_with(nx: usize, ny: usize, p: f64, c: f64, dist: impl Fn(usize, usize) -> f64) -> f64 {
    let n = nx.max(ny);
    if n == 0 {
        return 0.0;
    }
    let m = nx.min(ny);
    let cost: Vec<f64> = if nx <= ny {
        (0..nx).flat_map(|i| (0..ny).map(move |j| (i, j))).map(|(i, j)| dist(i, j).powf(p)).collect()
    } else {
        (0..ny).flat_map(|j| (0..nx).map(move |i| (i, j))).map(|(i, j)| dist(i, j).powf(p)).collect()
    };
    let (_, total) = solve_assignment(&cost, m, n);
    ((total + c.powf(p) * (n - m) as f64) / n as f64).powf(1.0 / p)
}

/// OSPA distance of order `p` and cutoff `c`; zero when both sets are empty.
pub fn ospa(x: &[Point], y: &[Point], p: f64, c: f64) -> Result<f64> {
    check_params(p, c)?;
    Ok(ospa_with(x.len(), y.len(), p, c, |i, j| (x[i] - y[j]).norm().min(c)))
}

/// Time-averaged cut-off distance between two tracks over `window`, taken
/// over the scans where at least one of them exists.
pub fn track_distance(a: &Trajectory, b: &Trajectory, window: &RangeInclusive<u32>, p: f64, c: f64) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    let scans = a.range(window.clone()).map(|(k, _)| *k).chain(b.range(window.clone()).map(|(k, _)| *k));
    let mut seen: Vec<u32> = scans.collect();
    seen.sort_unstable();
    seen.dedup();
    for k in seen {
        let d = match (a.get(&k), b.get(&k)) {
            (Some(x), Some(y)) => (x - y).norm().min(c),
            _ => c,
        };
        sum += d.powf(p);
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        (sum / count as f64).powf(1.0 / p)
    }
}

/// OSPA(2) between track sets over `window`; tracks with no point in the
/// window are ignored.
pub fn ospa2(a: &[Trajectory], b: &[Trajectory], window: RangeInclusive<u32>, p: f64, c: f64) -> Result<f64> {
    check_params(p, c)?;
    let live = |s: &[Trajectory]| -> Vec<Trajectory> {
        s.iter().filter(|t| t.range(window.clone()).next().is_some()).cloned().collect()
    };
    let (a, b) = (live(a), live(b));
    Ok(ospa_with(a.len(), b.len(), p, c, |i, j| track_distance(&a[i], &b[j], &window, p, c)))
}

pub fn truth_trajectories(truth: &ScenarioTruth) -> Vec<Trajectory> {
    truth
        .tracks
        .iter()
        .map(|t| {
            t.states
                .iter()
                .enumerate()
                .map(|(k, x)| (t.label.birth_time + k as u32, Point::new(x[0], x[2])))
                .collect()
        })
        .collect()
}

/// Per-label estimated positions, ordered by label.
pub fn estimate_trajectories(reports: &[ScanReport]) -> Vec<Trajectory> {
    let mut by_label: HashMap<Label, Trajectory> = HashMap::new();
    for r in reports {
        for (l, x) in &r.estimates {
            by_label.entry(*l).or_default().insert(r.scan, Point::new(x[0], x[2]));
        }
    }
    let mut labels: Vec<_> = by_label.into_iter().collect();
    labels.sort_by_key(|(l, _)| *l);
    labels.into_iter().map(|(_, t)| t).collect()
}

/// OSPA between truth and estimated positions at every reported scan.
pub fn ospa_series(truth: &ScenarioTruth, reports: &[ScanReport], p: f64, c: f64) -> Result<Vec<f64>> {
    reports
        .iter()
        .map(|r| {
            let x: Vec<Point> = truth.states_at(r.scan).iter().map(|(_, s)| Point::new(s[0], s[2])).collect();
            let y: Vec<Point> = r.estimates.iter().map(|(_, s)| Point::new(s[0], s[2])).collect();
            ospa(&x, &y, p, c)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    fn brute_force(cost: &[f64], rows: usize, cols: usize) -> f64 {
        fn go(cost: &[f64], rows: usize, cols: usize, i: usize, used: &mut Vec<bool>) -> f64 {
            if i == rows {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for j in 0..cols {
                if !used[j] {
                    used[j] = true;
                    best = best.min(cost[i * cols + j] + go(cost, rows, cols, i + 1, used));
                    used[j] = false;
                }
            }
            best
        }
        go(cost, rows, cols, 0, &mut vec![false; cols])
    }

    #[test]
    fn assignment_matches_brute_force() {
        let mut rng = stream(11, &[]);
        for _ in 0..300 {
            let rows = rng.random_range(0..=5);
            let cols = rng.random_range(rows.max(1)..=6);
            let cost: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(0.0..100.0)).collect();
            let (assign, total) = solve_assignment(&cost, rows, cols);
            let mut cols_used = assign.clone();
            cols_used.sort_unstable();
            cols_used.dedup();
            assert_eq!(cols_used.len(), rows);
            assert!((total - brute_force(&cost, rows, cols)).abs() < 1e-9);
        }
    }

    #[test]
    fn ospa_examples() {
        let x = vec![Point::new(0.0, 0.0), Point::new(5.0, 5.0)];
        assert_eq!(ospa(&x, &x, 1.0, 100.0).unwrap(), 0.0);
        assert_eq!(ospa(&x[..1], &[], 1.0, 100.0).unwrap(), 100.0);
        assert_eq!(ospa(&[], &[], 1.0, 100.0).unwrap(), 0.0);
        let d = ospa(&[Point::new(0.0, 0.0)], &[Point::new(30.0, 40.0)], 1.0, 100.0).unwrap();
        assert!((d - 50.0).abs() < 1e-12);
        assert!(ospa(&x, &x, 0.5, 100.0).is_err());
        assert!(ospa(&x, &x, 1.0, 0.0).is_err());
    }

    #[test]
    fn ospa_is_bounded_symmetric_and_triangular() {
        let mut rng = stream(12, &[]);
        let set = |rng: &mut crate::rng::ChainRng| -> Vec<Point> {
            let n = rng.random_range(0..5);
            (0..n).map(|_| Point::new(rng.random_range(0.0..300.0), rng.random_range(0.0..300.0))).collect()
        };
        for _ in 0..500 {
            let (a, b, c) = (set(&mut rng), set(&mut rng), set(&mut rng));
            for p in [1.0, 2.0] {
                let ab = ospa(&a, &b, p, 100.0).unwrap();
                assert!((ab - ospa(&b, &a, p, 100.0).unwrap()).abs() < 1e-9);
                assert!(ab <= 100.0 + 1e-9);
                let ac = ospa(&a, &c, p, 100.0).unwrap();
                let cb = ospa(&c, &b, p, 100.0).unwrap();
                assert!(ab <= ac + cb + 1e-9);
            }
        }
    }

    fn static_track(x: f64, scans: RangeInclusive<u32>) -> Trajectory {
        scans.map(|k| (k, Point::new(x, 0.0))).collect()
    }

    #[test]
    fn ospa2_examples() {
        let a = vec![static_track(0.0, 0..=9), static_track(500.0, 3..=9)];
        assert_eq!(ospa2(&a, &a, 0..=9, 1.0, 100.0).unwrap(), 0.0);
        assert_eq!(ospa2(&a[..1], &[], 0..=9, 1.0, 100.0).unwrap(), 100.0);
        let b = vec![static_track(60.0, 0..=9)];
        let d = ospa2(&a[..1], &b, 0..=9, 1.0, 100.0).unwrap();
        assert!((d - 60.0).abs() < 1e-12);
        // per-scan OSPA average agrees for this aligned case
        let avg: f64 = (0..=9)
            .map(|k| ospa(&[a[0][&k]], &[b[0][&k]], 1.0, 100.0).unwrap())
            .sum::<f64>()
            / 10.0;
        assert!((d - avg).abs() < 1e-12);
    }

    #[test]
    fn ospa2_half_overlap() {
        // present together for 5 scans at 60 m, estimate missing for 5 more
        let a = vec![static_track(0.0, 0..=9)];
        let b = vec![static_track(60.0, 0..=4)];
        let d = ospa2(&a, &b, 0..=9, 1.0, 100.0).unwrap();
        assert!((d - 80.0).abs() < 1e-12);
    }

    #[test]
    fn ospa2_single_scan_is_ospa() {
        let mut rng = stream(13, &[]);
        for _ in 0..100 {
            let tracks = |rng: &mut crate::rng::ChainRng| -> Vec<Trajectory> {
                let n = rng.random_range(0..4);
                (0..n)
                    .map(|_| {
                        let s = rng.random_range(0..3u32);
                        let e = rng.random_range(s..4);
                        (s..=e).map(|k| (k, Point::new(rng.random_range(0.0..200.0), rng.random_range(0.0..200.0)))).collect()
                    })
                    .collect()
            };
            let (a, b) = (tracks(&mut rng), tracks(&mut rng));
            let at = |s: &[Trajectory]| -> Vec<Point> { s.iter().filter_map(|t| t.get(&2).copied()).collect() };
            let d2 = ospa2(&a, &b, 2..=2, 2.0, 100.0).unwrap();
            let d1 = ospa(&at(&a), &at(&b), 2.0, 100.0).unwrap();
            assert!((d1 - d2).abs() < 1e-9);
        }
    }
}
