//! Timing of the full spectrum against the tensor-train spectrum, with the
//! padded parameter counts that determine the memory footprint.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::random::{random_kernel, random_tt_kernel};
use crate::spectrum::spectrum;
use crate::tt::tt_spectrum;

/// A rank given either directly or as a fraction of the channel count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankSpec {
    Fixed(usize),
    /// `c / d`, rounded down.
    Fraction(usize),
}

impl RankSpec {
    pub fn resolve(self, c: usize) -> Result<usize> {
        let r = match self {
            RankSpec::Fixed(r) => r,
            RankSpec::Fraction(d) => c / d,
        };
        if r == 0 || r > c {
            return Err(Error::Rank(format!(
                "rank {self} resolves to {r} for c={c}"
            )));
        }
        Ok(r)
    }
}

impl FromStr for RankSpec {
    type Err = Error;

    /// Accepts `"32"` or `"c/2"`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidArgument(format!("rank must be an integer or c/<d>, got {s:?}"));
        match s.strip_prefix("c/") {
            Some(d) => match d.parse::<usize>() {
                Ok(d) if d > 0 => Ok(RankSpec::Fraction(d)),
                _ => Err(bad()),
            },
            None => s.parse().map(RankSpec::Fixed).map_err(|_| bad()),
        }
    }
}

impl fmt::Display for RankSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RankSpec::Fixed(r) => write!(f, "{r}"),
            RankSpec::Fraction(d) => write!(f, "c/{d}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Full,
    Tt,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Full => "full",
            Method::Tt => "tt",
        }
    }
}

/// Parameters of the full kernel zero-padded to `n x n`: `n^2 c_in c_out`.
pub fn full_padded_params(n: usize, c_in: usize, c_out: usize) -> usize {
    n * n * c_in * c_out
}

/// Padded parameters of a tensor-train layer: `c_in r1 + n^2 r1 r2 + r2 c_out`.
pub fn tt_padded_params(n: usize, c_in: usize, c_out: usize, r1: usize, r2: usize) -> usize {
    c_in * r1 + n * n * r1 * r2 + r2 * c_out
}

/// `full_padded_params / tt_padded_params` for a square layer with equal ranks.
pub fn memory_ratio(n: usize, c: usize, r: usize) -> f64 {
    full_padded_params(n, c, c) as f64 / tt_padded_params(n, c, c, r, r) as f64
}

/// One timed method at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRecord {
    pub method: Method,
    pub n: usize,
    pub k: usize,
    pub c: usize,
    /// Equal to `c` for the full method.
    pub r: usize,
    pub s: usize,
    /// Median over repetitions.
    pub wall_seconds: f64,
    pub params: usize,
    /// Full-method time over this method's time at the same `c`.
    pub speedup: f64,
    /// Full-method padded parameters over this method's.
    pub memory_ratio: f64,
}

impl BenchRecord {
    pub fn bytes_f32(&self) -> usize {
        4 * self.params
    }

    pub fn bytes_f64(&self) -> usize {
        8 * self.params
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub n: usize,
    pub s: usize,
    pub k: usize,
    pub c_list: Vec<usize>,
    pub r_list: Vec<RankSpec>,
    pub reps: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n: 16,
            s: 1,
            k: 3,
            c_list: vec![64, 128],
            r_list: vec![RankSpec::Fraction(2), RankSpec::Fraction(3)],
            reps: 5,
            seed: 0,
        }
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

fn time_median(reps: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        f()?;
        times.push(start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE));
    }
    Ok(median(&mut times))
}

/// Times the full spectrum once per `c` and the tensor-train spectrum per
/// `(c, r)`. Records are emitted in grid order, the full record first.
pub fn run_bench(cfg: &BenchConfig) -> Result<Vec<BenchRecord>> {
    if cfg.reps == 0 {
        return Err(Error::InvalidArgument(
            "need at least one repetition".into(),
        ));
    }
    let mut out = Vec::new();
    for &c in &cfg.c_list {
        let ranks = cfg
            .r_list
            .iter()
            .map(|spec| spec.resolve(c))
            .collect::<Result<Vec<_>>>()?;
        let kern = random_kernel(cfg.k, c, c, cfg.s, cfg.n, cfg.seed)?;
        let full_time = time_median(cfg.reps, || spectrum(&kern).map(drop))?;
        let full_params = full_padded_params(cfg.n, c, c);
        out.push(BenchRecord {
            method: Method::Full,
            n: cfg.n,
            k: cfg.k,
            c,
            r: c,
            s: cfg.s,
            wall_seconds: full_time,
            params: full_params,
            speedup: 1.0,
            memory_ratio: 1.0,
        });
        for r in ranks {
            let tt = random_tt_kernel(cfg.k, c, c, r, r, cfg.s, cfg.n, cfg.seed)?;
            let tt_time = time_median(cfg.reps, || tt_spectrum(&tt).map(drop))?;
            out.push(BenchRecord {
                method: Method::Tt,
                n: cfg.n,
                k: cfg.k,
                c,
                r,
                s: cfg.s,
                wall_seconds: tt_time,
                params: tt_padded_params(cfg.n, c, c, r, r),
                speedup: full_time / tt_time,
                memory_ratio: memory_ratio(cfg.n, c, r),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_tokens() {
        assert_eq!("32".parse::<RankSpec>().unwrap(), RankSpec::Fixed(32));
        assert_eq!(" c/3 ".parse::<RankSpec>().unwrap(), RankSpec::Fraction(3));
        assert!("c/0".parse::<RankSpec>().is_err());
        assert!("half".parse::<RankSpec>().is_err());
        assert_eq!(RankSpec::Fraction(3).resolve(64).unwrap(), 21);
        assert!(RankSpec::Fraction(3).resolve(2).is_err());
        assert!(RankSpec::Fixed(9).resolve(8).is_err());
        assert_eq!(RankSpec::Fraction(2).to_string(), "c/2");
    }

    #[test]
    fn padded_counts() {
        assert_eq!(full_padded_params(16, 64, 64), 16 * 16 * 64 * 64);
        assert_eq!(
            tt_padded_params(16, 64, 64, 32, 32),
            2 * 64 * 32 + 256 * 32 * 32
        );
        // large-n limit of c^2 / r^2
        assert!((memory_ratio(1 << 12, 64, 32) - 4.0).abs() < 1e-4);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn small_run_layout() {
        let cfg = BenchConfig {
            n: 4,
            c_list: vec![4],
            r_list: vec![RankSpec::Fraction(2), RankSpec::Fixed(1)],
            reps: 1,
            ..BenchConfig::default()
        };
        let recs = run_bench(&cfg).unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[0].method, Method::Full);
        assert_eq!((recs[1].r, recs[2].r), (2, 1));
        assert!(recs.iter().all(|r| r.wall_seconds > 0.0));
        assert_eq!(recs[1].bytes_f64(), 2 * recs[1].bytes_f32());
    }
}
