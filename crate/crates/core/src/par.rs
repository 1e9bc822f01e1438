//! Index-ordered parallel map.
//!
//! Work items fan out across threads when the `parallel` feature is enabled,
//! but results always come back in input order, so every downstream reduction
//! is bitwise independent of thread count.

#[cfg(feature = "parallel")]
pub fn map_indexed<I, R, F>(items: Vec<I>, jobs: Option<usize>, f: F) -> Vec<R>
where
    I: Send,
    R: Send,
    F: Fn(usize, I) -> R + Sync + Send,
{
    use rayon::prelude::*;
    let run = || {
        items
            .into_par_iter()
            .enumerate()
            .map(|(i, item)| f(i, item))
            .collect()
    };
    match jobs {
        Some(n) if n >= 1 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(run),
        _ => run(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<I, R, F>(items: Vec<I>, _jobs: Option<usize>, f: F) -> Vec<R>
where
    I: Send,
    R: Send,
    F: Fn(usize, I) -> R + Sync + Send,
{
    items
        .into_iter()
        .enumerate()
        .map(|(i, item)| f(i, item))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_come_back_in_input_order() {
        let out = map_indexed((0..100).collect(), None, |i, x: i32| (i, x * 2));
        for (i, (idx, v)) in out.iter().enumerate() {
            assert_eq!(*idx, i);
            assert_eq!(*v, 2 * i as i32);
        }
    }
}
