//! Parallel map whose side effects are applied in input order.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

struct Commit<R, C> {
    next: usize,
    pending: BTreeMap<usize, R>,
    sink: C,
}

/// Runs `work` over `tasks` on up to `workers` threads and feeds each
/// result to `commit` in task order, one at a time. Results that finish
/// early wait in memory until their predecessors have been committed.
pub fn run_ordered<T, R, F, C>(tasks: &[T], workers: usize, work: F, commit: C)
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
    C: FnMut(usize, R) + Send,
{
    let next_task = AtomicUsize::new(0);
    let state = Mutex::new(Commit {
        next: 0,
        pending: BTreeMap::new(),
        sink: commit,
    });
    let workers = workers.clamp(1, tasks.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next_task.fetch_add(1, Ordering::Relaxed);
                if i >= tasks.len() {
                    break;
                }
                let r = work(i, &tasks[i]);
                let mut st = state.lock().expect("commit lock poisoned");
                st.pending.insert(i, r);
                loop {
                    let n = st.next;
                    let Some(r) = st.pending.remove(&n) else { break };
                    (st.sink)(n, r);
                    st.next += 1;
                }
            });
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Duration;

    #[test]
    fn commits_in_order() {
        let tasks: Vec<u64> = (0..40).collect();
        let mut seen = Vec::new();
        run_ordered(
            &tasks,
            8,
            |_, &t| {
                // later tasks finish first
                std::thread::sleep(Duration::from_micros((40 - t) * 200));
                t * t
            },
            |i, r| seen.push((i, r)),
        );
        let expected: Vec<_> = (0..40).map(|i| (i as usize, i * i)).collect();
        assert_eq!(seen, expected);
    }

    #[test]
    fn empty_input() {
        let mut n = 0;
        run_ordered(&Vec::<u8>::new(), 4, |_, _| (), |_, _| n += 1);
        assert_eq!(n, 0);
    }
}
