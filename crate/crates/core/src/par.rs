//! Data-parallel primitives.
//!
//! With the `parallel` feature these run on the rayon pool; without it they
//! fall back to plain sequential iteration. Every reduction here is
//! order-fixed, so results do not depend on the number of worker threads.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Partition size for order-fixed floating point reductions.
const SUM_CHUNK: usize = 4096;

/// Evaluates `f` on `0..n` and collects the results in index order.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Runs `f` on consecutive mutable chunks of `slice`, passing the chunk index.
#[cfg(feature = "parallel")]
pub fn for_each_chunk_mut<T, F>(slice: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    slice
        .par_chunks_mut(chunk)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
}

#[cfg(not(feature = "parallel"))]
pub fn for_each_chunk_mut<T, F>(slice: &mut [T], chunk: usize, f: F)
where
    F: Fn(usize, &mut [T]),
{
    slice
        .chunks_mut(chunk)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
}

/// Applies `f` to every element with its index.
#[cfg(feature = "parallel")]
pub fn for_each_mut<T, F>(slice: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    slice.par_iter_mut().enumerate().for_each(|(i, v)| f(i, v));
}

#[cfg(not(feature = "parallel"))]
pub fn for_each_mut<T, F>(slice: &mut [T], f: F)
where
    F: Fn(usize, &mut T),
{
    slice.iter_mut().enumerate().for_each(|(i, v)| f(i, v));
}

/// Sum of `f(i)` over `0..n`: fixed-size partial sums, combined in order.
pub fn sum_indexed<T, F>(n: usize, f: F) -> T
where
    T: Send + std::iter::Sum<T>,
    F: Fn(usize) -> T + Sync + Send,
{
    let chunks = n.div_ceil(SUM_CHUNK);
    let partials = map_indexed(chunks, |c| {
        let lo = c * SUM_CHUNK;
        let hi = (lo + SUM_CHUNK).min(n);
        (lo..hi).map(&f).sum::<T>()
    });
    partials.into_iter().sum()
}

/// Smallest index in `0..n` satisfying `pred`.
#[cfg(feature = "parallel")]
pub fn find_first<F>(n: usize, pred: F) -> Option<usize>
where
    F: Fn(usize) -> bool + Sync + Send,
{
    (0..n).into_par_iter().find_first(|&i| pred(i))
}

#[cfg(not(feature = "parallel"))]
pub fn find_first<F>(n: usize, pred: F) -> Option<usize>
where
    F: Fn(usize) -> bool,
{
    (0..n).find(|&i| pred(i))
}

/// Index and value of the largest `f(i)`; ties go to the smallest index.
pub fn argmax_indexed<F>(n: usize, f: F) -> Option<(usize, f64)>
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let chunks = n.div_ceil(SUM_CHUNK);
    let partials = map_indexed(chunks, |c| {
        let lo = c * SUM_CHUNK;
        let hi = (lo + SUM_CHUNK).min(n);
        let mut best: Option<(usize, f64)> = None;
        for i in lo..hi {
            let v = f(i);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        best
    });
    partials
        .into_iter()
        .flatten()
        .fold(None, |acc: Option<(usize, f64)>, (i, v)| match acc {
            Some((_, b)) if v <= b => acc,
            _ => Some((i, v)),
        })
}

/// Runs `f` inside a pool with exactly `threads` workers.
#[cfg(feature = "parallel")]
pub fn with_threads<R: Send, F: FnOnce() -> R + Send>(threads: usize, f: F) -> R {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .expect("thread pool")
        .install(f)
}

#[cfg(not(feature = "parallel"))]
pub fn with_threads<R, F: FnOnce() -> R>(_threads: usize, f: F) -> R {
    f()
}

/// Number of workers the current pool would use.
pub fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_is_thread_count_independent() {
        let f = |i: usize| ((i as f64) * 0.37).sin() * 1e-3 + 1.0 / (i as f64 + 1.0);
        let a = with_threads(1, || sum_indexed(100_003, f));
        let b = with_threads(4, || sum_indexed(100_003, f));
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn argmax_prefers_smallest_index() {
        let v = [1.0, 3.0, 2.0, 3.0];
        assert_eq!(argmax_indexed(4, |i| v[i]), Some((1, 3.0)));
        assert_eq!(argmax_indexed(0, |_| 0.0), None);
        let big = argmax_indexed(20_000, |i| if i % 5000 == 7 { 9.0 } else { 0.0 });
        assert_eq!(big, Some((7, 9.0)));
    }

    #[test]
    fn find_first_is_ordered() {
        assert_eq!(find_first(50_000, |i| i >= 777 && i % 2 == 1), Some(777));
        assert_eq!(find_first(10, |_| false), None);
    }
}
