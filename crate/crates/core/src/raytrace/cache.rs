use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

/// Small FIFO cache keyed by the exact bits of a parameter vector.
///
/// Left and right projections of a chart, and repeated jet evaluations at
/// the same point, hit the same ray solves; this keeps them from being redone.
#[derive(Debug)]
pub(crate) struct EvalCache<T> {
    entries: Mutex<VecDeque<(Vec<u64>, Arc<T>)>>,
    cap: usize,
}

pub(crate) fn key_of(p: &[f64]) -> Vec<u64> {
    p.iter().map(|v| v.to_bits()).collect()
}

impl<T> EvalCache<T> {
    pub fn new(cap: usize) -> Self {
        Self { entries: Mutex::new(VecDeque::with_capacity(cap)), cap }
    }

    pub fn get(&self, key: &[u64]) -> Option<Arc<T>> {
        let g = self.entries.lock().expect("cache lock");
        g.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.clone())
    }

    pub fn insert(&self, key: Vec<u64>, value: Arc<T>) {
        let mut g = self.entries.lock().expect("cache lock");
        if g.len() >= self.cap {
            g.pop_front();
        }
        g.push_back((key, value));
    }

    /// Entry minimizing `dist` over the cached keys, decoded back to floats.
    pub fn nearest(&self, dist: impl Fn(&[f64]) -> f64) -> Option<(f64, Arc<T>)> {
        let g = self.entries.lock().expect("cache lock");
        g.iter()
            .map(|(k, v)| {
                let p: Vec<f64> = k.iter().map(|b| f64::from_bits(*b)).collect();
                (dist(&p), v.clone())
            })
            .min_by(|a, b| a.0.total_cmp(&b.0))
    }
}
