use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::nn::{Adam, StepOutcome};

struct Inner {
    params: Vec<f64>,
    adam: Adam,
    version: u64,
}

/// Global parameter vector with a shared Adam optimizer. Updates are
/// applied one writer at a time; the version counter advances once per
/// accepted update.
pub struct SharedParams {
    inner: Mutex<Inner>,
    version: AtomicU64,
    skipped: AtomicU64,
}

impl SharedParams {
    pub fn new(params: Vec<f64>, lr: f64) -> Self {
        let adam = Adam::new(params.len(), lr);
        Self {
            inner: Mutex::new(Inner {
                params,
                adam,
                version: 0,
            }),
            version: AtomicU64::new(0),
            skipped: AtomicU64::new(0),
        }
    }

    pub fn version(&self) -> u64 {
        self.version.load(Ordering::Acquire)
    }

    /// Number of pushes rejected for non-finite gradients.
    pub fn skipped(&self) -> u64 {
        self.skipped.load(Ordering::Acquire)
    }

    pub fn snapshot(&self) -> (Vec<f64>, u64) {
        let inner = self.inner.lock().expect("shared params lock poisoned");
        (inner.params.clone(), inner.version)
    }

    /// Applies one Adam step with `grad` and copies the updated vector into
    /// `local`. Returns the post-update version, or `None` if the gradient
    /// was rejected (the local copy is still refreshed).
    pub fn push_pull(&self, grad: &[f64], local: &mut Vec<f64>) -> Result<Option<u64>> {
        let mut inner = self.inner.lock().expect("shared params lock poisoned");
        let Inner {
            params,
            adam,
            version,
        } = &mut *inner;
        let outcome = adam.step(params, grad)?;
        let applied = match outcome {
            StepOutcome::Applied => {
                if params.iter().any(|p| !p.is_finite()) {
                    return Err(Error::NonFinite("shared parameters"));
                }
                *version += 1;
                self.version.store(*version, Ordering::Release);
                Some(*version)
            }
            StepOutcome::SkippedNonFinite => {
                self.skipped.fetch_add(1, Ordering::AcqRel);
                None
            }
        };
        local.clear();
        local.extend_from_slice(params);
        Ok(applied)
    }

    pub fn into_params(self) -> Vec<f64> {
        self.inner
            .into_inner()
            .expect("shared params lock poisoned")
            .params
    }
}
