//! Data-parallel helpers with a sequential fallback.
//!
//! Compiled without the `parallel` feature every helper degrades to a
//! plain ordered loop. With the feature, `parallel = true` fans work out
//! over rayon but always returns results in input order, so callers that
//! reduce sequentially afterwards stay bit-deterministic regardless of
//! thread count.

/// Worker-thread cap, read from `SAFCAR_THREADS` (0 or unset = number of
/// cores).
pub fn thread_cap_from_env() -> Option<usize> {
    std::env::var("SAFCAR_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Install a global rayon pool honoring the env cap. Call once at
/// startup; later calls are no-ops.
#[cfg(feature = "parallel")]
pub fn init_thread_pool() {
    if let Some(n) = thread_cap_from_env() {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

#[cfg(not(feature = "parallel"))]
pub fn init_thread_pool() {}

/// Map `f` over `0..n`, preserving index order in the output.
#[cfg(feature = "parallel")]
pub fn maybe_par_map<U, F>(parallel: bool, n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    if parallel && n > 1 {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

#[cfg(not(feature = "parallel"))]
pub fn maybe_par_map<U, F>(_parallel: bool, n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordered_output_both_paths() {
        let seq = maybe_par_map(false, 64, |i| i * i);
        let par = maybe_par_map(true, 64, |i| i * i);
        assert_eq!(seq, par);
        assert_eq!(seq[10], 100);
    }
}
