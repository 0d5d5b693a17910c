//! Shared replay memory: a bounded ring with uniform sampling.

use crate::train::Transition;
use rand::Rng;

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    data: Vec<Transition>,
    capacity: usize,
    write: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayBuffer { data: Vec::new(), capacity, write: 0 }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.data.len() < self.capacity {
            self.data.push(t);
        } else {
            self.data[self.write] = t;
            self.write = (self.write + 1) % self.capacity;
        }
    }

    /// Uniform sample of `k` transitions (with replacement).
    pub fn sample<'a>(&'a self, rng: &mut impl Rng, k: usize) -> Vec<&'a Transition> {
        (0..k).map(|_| &self.data[rng.gen_range(0..self.data.len())]).collect()
    }

    pub fn sample_indices(&self, rng: &mut impl Rng, k: usize) -> Vec<usize> {
        (0..k).map(|_| rng.gen_range(0..self.data.len())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use buslab_sim::AgentObservation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn transition(tag: f64) -> Transition {
        let obs = AgentObservation {
            h_fwd_same: tag,
            h_bwd_same: 0.0,
            h_fwd_other: 0.0,
            h_bwd_other: 0.0,
            n_onboard: 0.0,
            holding_elapsed: 0.0,
        };
        Transition { state: obs, action: 1, reward: 0.0, next_state: obs }
    }

    #[test]
    fn ring_evicts_oldest_when_full() {
        let mut buf = ReplayBuffer::new(3);
        for i in 0..5 {
            buf.push(transition(i as f64));
        }
        assert_eq!(buf.len(), 3);
        let tags: Vec<f64> = buf.data.iter().map(|t| t.state.h_fwd_same).collect();
        // slots overwritten in ring order: 3, 4 replaced 0, 1
        assert_eq!(tags, vec![3.0, 4.0, 2.0]);
    }

    #[test]
    fn sampling_is_uniform_within_three_sigma() {
        let n = 100;
        let mut buf = ReplayBuffer::new(n);
        for i in 0..n {
            buf.push(transition(i as f64));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let draws = 100_000;
        let mut counts = vec![0usize; n];
        for idx in buf.sample_indices(&mut rng, draws) {
            counts[idx] += 1;
        }
        let p = 1.0 / n as f64;
        let expect = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for (i, c) in counts.iter().enumerate() {
            assert!(
                (*c as f64 - expect).abs() <= 3.0 * sigma,
                "index {i} drawn {c} times, expected {expect:.0} +/- {:.0}",
                3.0 * sigma
            );
        }
    }
}
