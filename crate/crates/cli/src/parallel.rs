//! Fan-out of independent trials over scoped threads.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use crate::CliError;

/// Caps the number of worker threads.
pub const THREADS_ENV: &str = "CAPBENCH_THREADS";

/// Worker count from [`THREADS_ENV`], defaulting to the available cores.
pub fn thread_cap() -> Result<usize, CliError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => parse_threads(&v),
        Err(std::env::VarError::NotPresent) => Ok(thread::available_parallelism().map_or(1, |n| n.get())),
        Err(e) => Err(CliError::Config(format!("{THREADS_ENV}: {e}"))),
    }
}

fn parse_threads(v: &str) -> Result<usize, CliError> {
    v.trim()
        .parse::<usize>()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))
}

/// `(0..n).map(f)` evaluated on up to `threads` workers; results keep index order.
pub fn map_indexed<T, F>(n: usize, threads: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = threads.clamp(1, n.max(1));
    if workers == 1 {
        return (0..n).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let v = f(i);
                slots.lock().expect("worker panicked")[i] = Some(v);
            });
        }
    });
    slots
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|v| v.expect("every index was processed"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_index_order() {
        for threads in [1, 3, 16] {
            assert_eq!(map_indexed(10, threads, |i| i * i), (0..10).map(|i| i * i).collect::<Vec<_>>());
        }
        assert!(map_indexed(0, 4, |i| i).is_empty());
    }

    #[test]
    fn thread_values() {
        assert_eq!(parse_threads(" 4 ").unwrap(), 4);
        assert!(parse_threads("0").is_err());
        assert!(parse_threads("many").is_err());
    }
}
