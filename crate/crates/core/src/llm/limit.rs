//! Run-wide cap on concurrent provider calls.
//!
//! The limit counts in-flight provider calls, not problems: a batch of
//! twenty problems each fanning out to seven judges still holds at most
//! `limit` requests open at any instant.

use super::{ChatRequest, ChatResponse, LlmError, Provider};
use async_trait::async_trait;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use tokio::sync::Semaphore;

pub struct ConcurrencyLimited {
    inner: Arc<dyn Provider>,
    permits: Arc<Semaphore>,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
}

impl ConcurrencyLimited {
    /// Wrap `inner`, allowing at most `limit` calls in flight at once.
    pub fn new(inner: Arc<dyn Provider>, limit: usize) -> ConcurrencyLimited {
        assert!(limit > 0, "concurrency limit must be positive");
        ConcurrencyLimited {
            inner,
            permits: Arc::new(Semaphore::new(limit)),
            in_flight: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        }
    }

    /// Highest number of simultaneously in-flight calls observed.
    pub fn peak_in_flight(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }
}

#[async_trait]
impl Provider for ConcurrencyLimited {
    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let _permit = self
            .permits
            .acquire()
            .await
            .map_err(|_| LlmError::Transport("concurrency gate closed".to_string()))?;

        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        let result = self.inner.complete(request).await;
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        result
    }
}
