//! Index-ordered map helpers.
//!
//! Every helper returns results in index order, so any reduction done
//! afterwards sees the same sequence whether or not the map ran on the
//! rayon pool. Reductions are never performed inside the parallel region.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Sequential map over `0..n`.
pub fn map_seq<R, F>(n: usize, f: F) -> Vec<R>
where
    F: Fn(usize) -> R,
{
    (0..n).map(f).collect()
}

/// Map over `0..n`, on the rayon pool when the `parallel` feature is on.
#[cfg(feature = "parallel")]
pub fn map<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    map_seq(n, f)
}

/// Map over a slice, preserving order.
pub fn map_slice<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    map(items.len(), |i| f(&items[i]))
}

/// Fill `out[i] = f(i)` for every index.
#[cfg(feature = "parallel")]
pub fn fill<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    out.par_iter_mut().enumerate().for_each(|(i, v)| *v = f(i));
}

#[cfg(not(feature = "parallel"))]
pub fn fill<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    for (i, v) in out.iter_mut().enumerate() {
        *v = f(i);
    }
}

/// Left-to-right sum. All reductions in the crate go through here.
pub fn sum(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, |acc, v| acc + v)
}

/// Maximum absolute value, 0 for an empty input.
pub fn max_abs(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_maps_agree_bitwise() {
        let f = |i: usize| ((i as f64) * 0.37).sin() / (1.0 + i as f64);
        let a = map(10_000, f);
        let b = map_seq(10_000, f);
        assert_eq!(sum(a.iter().copied()).to_bits(), sum(b.iter().copied()).to_bits());
    }

    #[test]
    fn fill_matches_sequential() {
        let mut out = vec![0.0; 257];
        fill(&mut out, |i| (i as f64).sqrt());
        for (i, v) in out.iter().enumerate() {
            assert_eq!(*v, (i as f64).sqrt());
        }
    }
}
