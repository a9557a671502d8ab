//! Fixed-capacity experience replay.

use crate::envs::Transition;
use crate::error::{Error, Result};
use crate::rng::SplitRng;

/// Ring buffer with FIFO eviction. Batches are drawn uniformly without
/// replacement.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> ReplayBuffer {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            items: Vec::new(),
            cursor: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    pub fn sample(&self, batch: usize, rng: &mut SplitRng) -> Result<Vec<&Transition>> {
        if batch > self.items.len() {
            return Err(Error::contract(format!(
                "batch {batch} exceeds buffer size {}",
                self.items.len()
            )));
        }
        Ok(rng
            .sample_indices(self.items.len(), batch)
            .into_iter()
            .map(|i| &self.items[i])
            .collect())
    }

    /// Flat serialization. All stored transitions must share field widths.
    pub fn flatten(&self) -> Vec<f64> {
        let (sd, cd, ad) = self
            .items
            .first()
            .map(|t| (t.state.len(), t.condition.len(), t.action.len()))
            .unwrap_or((0, 0, 0));
        let mut out = vec![
            self.items.len() as f64,
            self.cursor as f64,
            sd as f64,
            cd as f64,
            ad as f64,
        ];
        for t in &self.items {
            out.extend_from_slice(&t.state);
            out.extend_from_slice(&t.condition);
            out.extend_from_slice(&t.action);
            out.push(t.reward);
            out.extend_from_slice(&t.next_state);
            out.push(if t.done { 1.0 } else { 0.0 });
        }
        out
    }

    pub fn restore(&mut self, blob: &[f64]) -> Result<()> {
        if blob.len() < 5 {
            return Err(Error::Checkpoint("replay blob too short".into()));
        }
        let n = blob[0] as usize;
        let cursor = blob[1] as usize;
        let (sd, cd, ad) = (blob[2] as usize, blob[3] as usize, blob[4] as usize);
        let rec = 2 * sd + cd + ad + 2;
        if blob.len() != 5 + n * rec || n > self.capacity {
            return Err(Error::Checkpoint("replay blob layout mismatch".into()));
        }
        self.items.clear();
        let mut off = 5;
        for _ in 0..n {
            let f = &blob[off..off + rec];
            self.items.push(Transition {
                state: f[..sd].to_vec(),
                condition: f[sd..sd + cd].to_vec(),
                action: f[sd + cd..sd + cd + ad].to_vec(),
                reward: f[sd + cd + ad],
                next_state: f[sd + cd + ad + 1..sd + cd + ad + 1 + sd].to_vec(),
                done: f[rec - 1] == 1.0,
            });
            off += rec;
        }
        self.cursor = cursor;
        Ok(())
    }
}
