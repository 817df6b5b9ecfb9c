//! Association maps, cost matrices and the stationary assignment distribution.
//!
//! An association map assigns each of `P` hypothesised labels a value in
//! `{-1, 0, 1, ..., M}`: `-1` means the label does not exist, `0` that it is
//! undetected and `j >= 1` that it generated measurement `j`. A map is valid
//! when it is *positive 1-1*, i.e. no positive value is used twice.
//!
//! The cost matrix `eta` holds one row per label with `M + 2` strictly
//! positive entries ordered `j = -1, 0, 1, ..., M`. The unnormalised
//! probability of a valid map is the product of the selected entries.
//!
//! Coordinates are 0-based in the API; the text formats use the natural
//! `-1..=M` entry values.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Log-probability assigned to maps that violate the positive 1-1 constraint.
pub const LOG_ZERO: f64 = f64::NEG_INFINITY;

/// Upper bound on `(M + 2)^P` for exhaustive enumeration.
pub const ENUMERATION_LIMIT: u64 = 10_000_000;

pub const NONEXISTENT: i32 = -1;
pub const UNDETECTED: i32 = 0;

#[inline]
pub(crate) fn col(j: i32) -> usize {
    (j + 1) as usize
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AssociationMap(Vec<i32>);

impl AssociationMap {
    pub fn new(entries: Vec<i32>) -> Self {
        AssociationMap(entries)
    }

    /// Every label undetected; valid for any `M`.
    pub fn undetected(p: usize) -> Self {
        AssociationMap(vec![UNDETECTED; p])
    }

    pub fn entries(&self) -> &[i32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> i32 {
        self.0[i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: i32) {
        self.0[i] = j;
    }

    /// Checks the positive 1-1 property against `m` measurements.
    ///
    /// Fails with a domain error when an entry lies outside `-1..=m`.
    pub fn is_positive_one_to_one(&self, m: usize) -> Result<bool> {
        let mut used = vec![false; m + 1];
        let mut ok = true;
        for (i, &j) in self.0.iter().enumerate() {
            if j < NONEXISTENT || j > m as i32 {
                return Err(Error::domain(format!(
                    "entry {i} = {j} outside -1..={m}"
                )));
            }
            if j > 0 {
                let slot = &mut used[j as usize];
                if *slot {
                    ok = false;
                }
                *slot = true;
            }
        }
        Ok(ok)
    }

    /// Labels with a non-negative entry, i.e. the live labels of the map.
    pub fn live(&self) -> impl Iterator<Item = usize> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &j)| j >= UNDETECTED)
            .map(|(i, _)| i)
    }
}

impl fmt::Display for AssociationMap {
    /// Semicolon-joined entries, e.g. `2;-1;0`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, j) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(";")?;
            }
            write!(f, "{j}")?;
        }
        Ok(())
    }
}

impl FromStr for AssociationMap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(AssociationMap(Vec::new()));
        }
        s.split(';')
            .map(|t| {
                t.trim().parse::<i32>().map_err(|e| Error::Parse {
                    line: 0,
                    message: format!("bad map entry {t:?}: {e}"),
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(AssociationMap)
    }
}

pub fn is_positive_one_to_one(map: &AssociationMap, m: usize) -> Result<bool> {
    map.is_positive_one_to_one(m)
}

/// `P x (M + 2)` table of strictly positive, finite likelihood ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    p: usize,
    m: usize,
    values: Vec<f64>,
}

impl CostMatrix {
    /// Builds a matrix from row-major `values` laid out as `j = -1..=m` per row.
    pub fn new(p: usize, m: usize, values: Vec<f64>) -> Result<Self> {
        if p == 0 {
            return Err(Error::domain("cost matrix needs at least one row"));
        }
        if values.len() != p * (m + 2) {
            return Err(Error::domain(format!(
                "expected {} entries for a {p}x{} matrix, got {}",
                p * (m + 2),
                m + 2,
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::domain(format!(
                "entry ({}, {}) = {} is not strictly positive and finite",
                k / (m + 2),
                (k % (m + 2)) as i64 - 1,
                values[k]
            )));
        }
        Ok(CostMatrix { p, m, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if width < 2 {
            return Err(Error::domain("rows need at least the j = -1 and j = 0 columns"));
        }
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::domain("ragged cost matrix"));
        }
        Self::new(p, width - 2, rows.concat())
    }

    /// Number of labels `P`.
    #[inline]
    pub fn rows(&self) -> usize {
        self.p
    }

    /// Number of measurements `M`.
    #[inline]
    pub fn measurements(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.m + 2
    }

    /// Entry `eta_i(j)` for `j` in `-1..=M`.
    #[inline]
    pub fn get(&self, i: usize, j: i32) -> f64 {
        self.values[i * (self.m + 2) + col(j)]
    }

    /// Row `i`, indexed by `j + 1`.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.m + 2;
        &self.values[i * w..(i + 1) * w]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Entry-wise power, used for the tempered conditionals.
    pub fn powf(&self, beta: f64) -> Vec<f64> {
        self.values.iter().map(|v| v.powf(beta)).collect()
    }

    /// Parses the text format: a `P M` header line followed by `P` lines of
    /// `M + 2` whitespace-separated positive numbers.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(n, l)| (n + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "missing `P M` header".into(),
        })?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: hline,
                message: format!("bad header: {e}"),
            })?;
        let [p, m] = dims[..] else {
            return Err(Error::Parse {
                line: hline,
                message: format!("header must be `P M`, got {header:?}"),
            });
        };
        let mut values = Vec::with_capacity(p * (m + 2));
        let mut nrows = 0;
        for (n, line) in lines {
            let row: Vec<f64> = line
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    line: n,
                    message: format!("bad number: {e}"),
                })?;
            if row.len() != m + 2 {
                return Err(Error::Parse {
                    line: n,
                    message: format!("expected {} columns, got {}", m + 2, row.len()),
                });
            }
            values.extend(row);
            nrows += 1;
        }
        if nrows != p {
            return Err(Error::Parse {
                line: hline,
                message: format!("header declares {p} rows, found {nrows}"),
            });
        }
        Self::new(p, m, values)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.p, self.m);
        for i in 0..self.p {
            let row: Vec<String> = self.row(i).iter().map(|v| format!("{v}")).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }
}

/// A valid map with its unnormalised log-probability.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedAssignment {
    pub map: AssociationMap,
    pub log_weight: f64,
}

/// `sum_i ln eta_i(map[i])`, or [`LOG_ZERO`] for maps that are not positive
/// 1-1 or do not fit the matrix.
pub fn joint_log_weight(map: &AssociationMap, eta: &CostMatrix) -> f64 {
    if map.len() != eta.rows() {
        return LOG_ZERO;
    }
    match map.is_positive_one_to_one(eta.measurements()) {
        Ok(true) => map
            .entries()
            .iter()
            .enumerate()
            .map(|(i, &j)| eta.get(i, j).ln())
            .sum(),
        _ => LOG_ZERO,
    }
}

/// Lexicographic stream of every positive 1-1 map in `{-1..M}^P`, first
/// coordinate most significant and `-1 < 0 < 1 < ...`.
pub struct ValidMaps {
    current: Vec<i32>,
    m: i32,
    done: bool,
}

impl Iterator for ValidMaps {
    type Item = AssociationMap;

    fn next(&mut self) -> Option<AssociationMap> {
        while !self.done {
            let candidate = AssociationMap(self.current.clone());
            self.advance();
            if has_distinct_positives(candidate.entries(), self.m as usize) {
                return Some(candidate);
            }
        }
        None
    }
}

impl ValidMaps {
    fn advance(&mut self) {
        for k in (0..self.current.len()).rev() {
            if self.current[k] < self.m {
                self.current[k] += 1;
                return;
            }
            self.current[k] = NONEXISTENT;
        }
        self.done = true;
    }
}

fn has_distinct_positives(entries: &[i32], m: usize) -> bool {
    let mut used = vec![false; m + 1];
    for &j in entries {
        if j > 0 {
            if used[j as usize] {
                return false;
            }
            used[j as usize] = true;
        }
    }
    true
}

fn check_enumerable(p: usize, m: usize) -> Result<()> {
    let requested = ((m + 2) as f64).powi(p as i32);
    if requested > ENUMERATION_LIMIT as f64 {
        return Err(Error::Capacity {
            requested,
            limit: ENUMERATION_LIMIT,
        });
    }
    Ok(())
}

pub fn enumerate_valid_maps(p: usize, m: usize) -> Result<ValidMaps> {
    check_enumerable(p, m)?;
    Ok(ValidMaps {
        current: vec![NONEXISTENT; p],
        m: m as i32,
        done: false,
    })
}

/// Exact stationary distribution by enumeration, in lexicographic order.
pub fn brute_force_distribution(eta: &CostMatrix) -> Result<Vec<(AssociationMap, f64)>> {
    let weighted: Vec<(AssociationMap, f64)> = enumerate_valid_maps(eta.rows(), eta.measurements())?
        .map(|map| {
            let lw = joint_log_weight(&map, eta);
            (map, lw)
        })
        .collect();
    let max = weighted
        .iter()
        .map(|(_, lw)| *lw)
        .fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = weighted.iter().map(|(_, lw)| (lw - max).exp()).sum();
    Ok(weighted
        .into_iter()
        .map(|(map, lw)| (map, (lw - max).exp() / total))
        .collect())
}

/// Writes the unnormalised `i`-th conditional into `out` and returns its sum.
///
/// Entries `j >= 1` held by another coordinate are zeroed. The membership
/// test scans the other coordinates for every `j`, so the cost is `O(PM)`;
/// the generic samplers rely on this to serve as complexity baselines.
pub fn masked_row_into(i: usize, map: &AssociationMap, eta: &CostMatrix, out: &mut [f64]) -> f64 {
    let row = eta.row(i);
    let entries = map.entries();
    let mut total = 0.0;
    for (c, (&v, o)) in row.iter().zip(out.iter_mut()).enumerate() {
        let j = c as i32 - 1;
        let taken = j > 0
            && entries
                .iter()
                .enumerate()
                .any(|(k, &other)| k != i && other == j);
        *o = if taken { 0.0 } else { v };
        total += *o;
    }
    total
}

/// Normalised `i`-th conditional over `j = -1..=M`, recomputed from scratch.
pub fn conditional_direct(i: usize, map: &AssociationMap, eta: &CostMatrix) -> Result<Vec<f64>> {
    if i >= eta.rows() || map.len() != eta.rows() {
        return Err(Error::domain(format!(
            "coordinate {i} / map length {} incompatible with {} rows",
            map.len(),
            eta.rows()
        )));
    }
    let mut out = vec![0.0; eta.width()];
    let total = masked_row_into(i, map, eta, &mut out);
    out.iter_mut().for_each(|v| *v /= total);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small() -> CostMatrix {
        CostMatrix::from_rows(&[vec![1.0, 1.0, 2.0], vec![1.0, 1.0, 3.0]]).unwrap()
    }

    fn m(v: &[i32]) -> AssociationMap {
        AssociationMap::new(v.to_vec())
    }

    #[test]
    fn positive_one_to_one_examples() {
        assert!(m(&[0, 0, 0]).is_positive_one_to_one(0).unwrap());
        assert!(!m(&[1, 1]).is_positive_one_to_one(1).unwrap());
        assert!(m(&[2, -1, 1]).is_positive_one_to_one(2).unwrap());
        assert!(m(&[3]).is_positive_one_to_one(2).is_err());
        assert!(m(&[-2]).is_positive_one_to_one(2).is_err());
    }

    #[test]
    fn joint_log_weight_examples() {
        let eta = small();
        assert!((joint_log_weight(&m(&[1, -1]), &eta) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(joint_log_weight(&m(&[1, 1]), &eta), LOG_ZERO);
        assert_eq!(joint_log_weight(&m(&[1]), &eta), LOG_ZERO);
    }

    #[test]
    fn enumeration_counts() {
        let all: Vec<_> = enumerate_valid_maps(1, 0).unwrap().collect();
        assert_eq!(all, vec![m(&[-1]), m(&[0])]);
        assert_eq!(enumerate_valid_maps(2, 1).unwrap().count(), 8);
        assert_eq!(enumerate_valid_maps(2, 2).unwrap().count(), 14);
        let lex: Vec<_> = enumerate_valid_maps(2, 1).unwrap().collect();
        let mut sorted = lex.clone();
        sorted.sort();
        assert_eq!(lex, sorted);
        assert!(matches!(
            enumerate_valid_maps(12, 6),
            Err(Error::Capacity { .. })
        ));
    }

    /// Counts positive 1-1 maps by choosing which `k` labels take distinct
    /// positive values: sum_k C(P,k) * M!/(M-k)! * 2^(P-k).
    fn count_valid(p: u64, mm: u64) -> u64 {
        let choose = |n: u64, k: u64| (0..k).fold(1u64, |a, t| a * (n - t) / (t + 1));
        (0..=p.min(mm))
            .map(|k| choose(p, k) * (0..k).map(|t| mm - t).product::<u64>() * 2u64.pow((p - k) as u32))
            .sum()
    }

    #[test]
    fn enumeration_matches_closed_form_count() {
        for p in 1..=5 {
            for mm in 0..=4 {
                assert_eq!(
                    enumerate_valid_maps(p, mm).unwrap().count() as u64,
                    count_valid(p as u64, mm as u64),
                    "P={p} M={mm}"
                );
            }
        }
    }

    #[test]
    fn brute_force_examples() {
        let eta = small();
        let dist = brute_force_distribution(&eta).unwrap();
        assert_eq!(dist.len(), 8);
        let total_mass: f64 = enumerate_valid_maps(2, 1)
            .unwrap()
            .map(|g| joint_log_weight(&g, &eta).exp())
            .sum();
        assert!((total_mass - 14.0).abs() < 1e-12);
        let get = |g: &[i32]| dist.iter().find(|(k, _)| k.entries() == g).unwrap().1;
        assert!((get(&[1, -1]) - 2.0 / 14.0).abs() < 1e-12);
        assert!((get(&[0, 1]) - 3.0 / 14.0).abs() < 1e-12);

        let two = CostMatrix::from_rows(&[vec![0.3, 1.7]]).unwrap();
        let d = brute_force_distribution(&two).unwrap();
        assert!((d[0].1 - 0.15).abs() < 1e-15 && (d[1].1 - 0.85).abs() < 1e-15);

        let ones = CostMatrix::new(2, 1, vec![1.0; 6]).unwrap();
        for (_, pr) in brute_force_distribution(&ones).unwrap() {
            assert!((pr - 0.125).abs() < 1e-15);
        }
    }

    #[test]
    fn conditional_examples() {
        let eta = small();
        let c = conditional_direct(0, &m(&[0, 1]), &eta).unwrap();
        assert_eq!(c, vec![0.5, 0.5, 0.0]);

        let no_meas = CostMatrix::from_rows(&[vec![1.0, 3.0], vec![2.0, 2.0]]).unwrap();
        let c = conditional_direct(1, &m(&[0, -1]), &no_meas).unwrap();
        assert_eq!(c, vec![0.5, 0.5]);

        let single = CostMatrix::from_rows(&[vec![1.0, 2.0, 3.0, 4.0]]).unwrap();
        let c = conditional_direct(0, &m(&[2]), &single).unwrap();
        for (k, v) in c.iter().enumerate() {
            assert!((v - (k + 1) as f64 / 10.0).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_matrices() {
        assert!(CostMatrix::new(1, 0, vec![1.0, 0.0]).is_err());
        assert!(CostMatrix::new(1, 0, vec![1.0, f64::INFINITY]).is_err());
        assert!(CostMatrix::new(0, 0, vec![]).is_err());
        assert!(CostMatrix::new(1, 1, vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn text_format() {
        let eta = CostMatrix::parse("2 1\n1 1 2\n# note\n1 1 3\n").unwrap();
        assert_eq!(eta, small());
        assert_eq!(CostMatrix::parse(&eta.to_text()).unwrap(), eta);
        assert!(CostMatrix::parse("2 1\n1 1 2\n").is_err());
        assert!(CostMatrix::parse("1 1\n1 1\n").is_err());
        assert!(CostMatrix::parse("1 0\n1 -1\n").is_err());
        assert_eq!("2;-1;0".parse::<AssociationMap>().unwrap(), m(&[2, -1, 0]));
        assert_eq!(m(&[2, -1, 0]).to_string(), "2;-1;0");
    }

    fn matrix_strategy() -> impl Strategy<Value = CostMatrix> {
        (1usize..=4, 0usize..=3).prop_flat_map(|(p, mm)| {
            prop::collection::vec(0.01f64..10.0, p * (mm + 2))
                .prop_map(move |v| CostMatrix::new(p, mm, v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn brute_force_is_normalised_enumeration(eta in matrix_strategy()) {
            let dist = brute_force_distribution(&eta).unwrap();
            let total: f64 = enumerate_valid_maps(eta.rows(), eta.measurements())
                .unwrap()
                .map(|g| joint_log_weight(&g, &eta).exp())
                .sum();
            let mass: f64 = dist.iter().map(|(_, p)| p).sum();
            prop_assert!((mass - 1.0).abs() < 1e-12);
            for (g, pr) in &dist {
                prop_assert!((joint_log_weight(g, &eta).exp() / total - pr).abs() < 1e-12);
            }
        }

        #[test]
        fn masking_zeroes_exactly_the_taken_indices(eta in matrix_strategy(), pick in 0usize..1000) {
            let maps: Vec<_> = enumerate_valid_maps(eta.rows(), eta.measurements()).unwrap().collect();
            let map = &maps[pick % maps.len()];
            for i in 0..eta.rows() {
                let cond = conditional_direct(i, map, &eta).unwrap();
                for (c, &pr) in cond.iter().enumerate() {
                    let j = c as i32 - 1;
                    let taken = j > 0 && map.entries().iter().enumerate().any(|(k, &o)| k != i && o == j);
                    prop_assert_eq!(pr == 0.0, taken);
                    if pr > 0.0 {
                        let mut next = map.clone();
                        next.set(i, j);
                        prop_assert!(next.is_positive_one_to_one(eta.measurements()).unwrap());
                    }
                }
            }
        }

        #[test]
        fn row_rescaling_leaves_distribution_unchanged(eta in matrix_strategy(), row in 0usize..4, scale in 0.01f64..100.0) {
            let row = row % eta.rows();
            let mut values = eta.values().to_vec();
            let w = eta.width();
            values[row * w..(row + 1) * w].iter_mut().for_each(|v| *v *= scale);
            let scaled = CostMatrix::new(eta.rows(), eta.measurements(), values).unwrap();
            let a = brute_force_distribution(&eta).unwrap();
            let b = brute_force_distribution(&scaled).unwrap();
            for ((ga, pa), (gb, pb)) in a.iter().zip(&b) {
                prop_assert_eq!(ga, gb);
                prop_assert!((pa - pb).abs() < 1e-12);
            }
        }
    }
}
