//! Wall-clock timing of the sampling kernels on synthetic cost matrices.

use std::io::Write;
use std::time::Instant;

use rand::Rng;

use crate::assignment::{AssociationMap, CostMatrix};
use crate::error::Result;
use crate::gibbs::{run_into, CountingSink, SamplerConfig, Variant};
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub variant: Variant,
    pub p: usize,
    pub m: usize,
    pub iterations: usize,
    pub reps: usize,
    /// Median over repetitions of elapsed time divided by iterations.
    pub seconds_per_iteration: f64,
}

/// `P x (M + 2)` matrix with entries uniform on `[0.01, 10)`.
pub fn random_cost_matrix(p: usize, m: usize, seed: u64) -> CostMatrix {
    let mut rng = stream(seed, &[p as u64, m as u64]);
    let values = (0..p * (m + 2)).map(|_| rng.random_range(0.01..10.0)).collect();
    CostMatrix::new(p, m, values).expect("positive entries")
}

/// Times `reps` runs of `iterations` iterates (sweeps for the systematic
/// variants) after one untimed warm-up run.
pub fn bench_kernel(variant: Variant, p: usize, m: usize, iterations: usize, reps: usize, seed: u64) -> Result<BenchRecord> {
    let eta = random_cost_matrix(p, m, seed);
    let gamma0 = AssociationMap::undetected(p);
    let reps = reps.max(1);
    let cfg = SamplerConfig::new(variant, iterations).with_seed(seed);
    let mut sink = CountingSink::default();
    run_into(&gamma0, &eta, &cfg, &mut sink)?;
    let mut times = Vec::with_capacity(reps);
    for r in 0..reps {
        let cfg = cfg.clone().with_seed(seed.wrapping_add(r as u64 + 1));
        let mut sink = CountingSink::default();
        let start = Instant::now();
        run_into(&gamma0, &eta, &cfg, &mut sink)?;
        times.push(start.elapsed().as_secs_f64() / iterations as f64);
        std::hint::black_box(sink.checksum);
    }
    times.sort_by(f64::total_cmp);
    Ok(BenchRecord {
        variant,
        p,
        m,
        iterations,
        reps,
        seconds_per_iteration: times[reps / 2],
    })
}

/// [`bench_kernel`] over every variant and `(P, M)` in `ps x ms`.
pub fn bench_kernels(
    ps: &[usize],
    ms: &[usize],
    iterations: usize,
    variants: &[Variant],
    reps: usize,
    seed: u64,
) -> Result<Vec<BenchRecord>> {
    let mut out = Vec::new();
    for &v in variants {
        for &p in ps {
            for &m in ms {
                out.push(bench_kernel(v, p, m, iterations, reps, seed)?);
            }
        }
    }
    Ok(out)
}

pub fn write_bench_csv<W: Write>(out: &mut W, records: &[BenchRecord]) -> std::io::Result<()> {
    writeln!(out, "variant,p,m,iterations,reps,seconds_per_iteration")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.variant, r.p, r.m, r.iterations, r.reps, r.seconds_per_iteration
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_cover_the_grid() {
        let recs = bench_kernels(&[3, 5], &[2], 50, &[Variant::TgsPlus, Variant::SgsGeneric], 5, 1).unwrap();
        assert_eq!(recs.len(), 4);
        assert!(recs.iter().all(|r| r.seconds_per_iteration > 0.0 && r.reps == 5));
        let mut buf = Vec::new();
        write_bench_csv(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.lines().nth(1).unwrap().starts_with("tgs+,3,2,50,5,"));
    }

    #[test]
    fn synthetic_matrix_is_reproducible() {
        let a = random_cost_matrix(4, 3, 9);
        assert_eq!(a, random_cost_matrix(4, 3, 9));
        assert!(a.values().iter().all(|&v| (0.01..10.0).contains(&v)));
    }
}
