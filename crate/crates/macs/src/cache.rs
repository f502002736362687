//! Memoization of deterministic evaluators, keyed by evaluator id and
//! sequence digest.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use macs_core::eval::{digest, Evaluator, EvaluatorSpec};

pub struct CachedEvaluator {
    inner: Arc<dyn Evaluator>,
    values: RwLock<HashMap<String, f64>>,
    misses: AtomicU64,
}

impl CachedEvaluator {
    /// Non-deterministic evaluators are returned unwrapped.
    pub fn wrap(inner: Arc<dyn Evaluator>) -> Arc<dyn Evaluator> {
        if inner.spec().deterministic {
            Arc::new(Self::new(inner))
        } else {
            inner
        }
    }

    pub fn new(inner: Arc<dyn Evaluator>) -> Self {
        Self {
            inner,
            values: RwLock::new(HashMap::new()),
            misses: AtomicU64::new(0),
        }
    }

    /// Sequences sent to the wrapped evaluator so far.
    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.values.read().unwrap_or_else(|p| p.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Evaluator for CachedEvaluator {
    fn spec(&self) -> &EvaluatorSpec {
        self.inner.spec()
    }

    fn raw_batch(&self, seqs: &[&str]) -> macs_core::Result<Vec<f64>> {
        let keys: Vec<String> = seqs.iter().map(|s| digest(s)).collect();
        let mut out: Vec<Option<f64>> = {
            let values = self.values.read().unwrap_or_else(|p| p.into_inner());
            keys.iter().map(|k| values.get(k).copied()).collect()
        };
        let mut missing: Vec<usize> = Vec::new();
        let mut seen = HashMap::new();
        for (i, v) in out.iter().enumerate() {
            if v.is_none() && seen.insert(keys[i].as_str(), i).is_none() {
                missing.push(i);
            }
        }
        if !missing.is_empty() {
            let batch: Vec<&str> = missing.iter().map(|&i| seqs[i]).collect();
            // Values are stored clamped so cached and uncached calls agree.
            let fresh = self.inner.evaluate_batch(&batch)?;
            self.misses.fetch_add(batch.len() as u64, Ordering::Relaxed);
            let mut values = self.values.write().unwrap_or_else(|p| p.into_inner());
            for (&i, v) in missing.iter().zip(fresh) {
                values.insert(keys[i].clone(), v);
            }
            for (slot, key) in out.iter_mut().zip(&keys) {
                if slot.is_none() {
                    *slot = values.get(key).copied();
                }
            }
        }
        Ok(out.into_iter().map(|v| v.expect("every key filled")).collect())
    }
}
