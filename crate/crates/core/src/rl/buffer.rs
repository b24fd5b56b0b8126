//! Replay storage. Agent experience lives in a capacity-bounded ring that
//! overwrites oldest-first; expert demonstrations live in an immutable store
//! loaded once at trainer construction. Every stored transition is tagged
//! with its provenance and the tag is asserted on every draw, so expert and
//! agent data can never silently mix.

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use super::featurize::Feat;
use super::RlError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Agent,
    Expert,
}

/// One featurized transition as the agent's networks consume it. Actions are
/// the performed environment-unit commands; rewards are unscaled.
#[derive(Debug, Clone)]
pub struct StoredTransition {
    pub obs: Feat,
    pub action: [f64; 6],
    pub reward: f64,
    pub next: Feat,
    pub done: bool,
    pub src: Source,
}

/// Oldest-first overwriting ring of agent transitions.
#[derive(Debug)]
pub struct ReplayRing {
    buf: Vec<StoredTransition>,
    cap: usize,
    write: usize,
}

impl ReplayRing {
    pub fn new(cap: usize) -> ReplayRing {
        assert!(cap > 0, "replay capacity must be positive");
        ReplayRing { buf: Vec::new(), cap, write: 0 }
    }

    pub fn push(&mut self, t: StoredTransition) {
        if self.buf.len() < self.cap {
            self.buf.push(t);
        } else {
            self.buf[self.write] = t;
        }
        self.write = (self.write + 1) % self.cap;
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn get(&self, i: usize) -> &StoredTransition {
        &self.buf[i]
    }
}

/// Expert/agent pair of stores with ratio-controlled joint sampling.
#[derive(Debug)]
pub struct HybridBuffer {
    agent: ReplayRing,
    expert: Vec<StoredTransition>,
}

impl HybridBuffer {
    pub fn new(cap: usize) -> HybridBuffer {
        HybridBuffer { agent: ReplayRing::new(cap), expert: Vec::new() }
    }

    pub fn with_expert(cap: usize, expert: Vec<StoredTransition>) -> HybridBuffer {
        assert!(expert.iter().all(|t| t.src == Source::Expert), "expert store provenance");
        HybridBuffer { agent: ReplayRing::new(cap), expert }
    }

    pub fn push_agent(&mut self, t: StoredTransition) {
        assert_eq!(t.src, Source::Agent, "agent ring provenance");
        self.agent.push(t);
    }

    pub fn agent_len(&self) -> usize {
        self.agent.len()
    }

    pub fn expert_len(&self) -> usize {
        self.expert.len()
    }

    /// Draws a batch with exactly ⌊ratio·batch⌋ expert transitions and the
    /// remainder from the agent ring, uniformly with replacement within each
    /// store. Provenance is asserted per draw.
    pub fn sample<'a>(
        &'a self,
        batch: usize,
        ratio: f64,
        rng: &mut ChaCha12Rng,
    ) -> Result<Vec<&'a StoredTransition>, RlError> {
        let n_expert = ((ratio.clamp(0.0, 1.0)) * batch as f64).floor() as usize;
        let n_agent = batch - n_expert;
        if n_expert > 0 && self.expert.is_empty() {
            return Err(RlError::EmptyStore("expert"));
        }
        if n_agent > 0 && self.agent.is_empty() {
            return Err(RlError::EmptyStore("agent"));
        }
        let mut out = Vec::with_capacity(batch);
        for _ in 0..n_expert {
            let t = &self.expert[rng.gen_range(0..self.expert.len())];
            assert_eq!(t.src, Source::Expert);
            out.push(t);
        }
        for _ in 0..n_agent {
            let t = self.agent.get(rng.gen_range(0..self.agent.len()));
            assert_eq!(t.src, Source::Agent);
            out.push(t);
        }
        Ok(out)
    }

    /// Draws from the expert store only, for behavior-cloning refreshes.
    pub fn sample_expert<'a>(
        &'a self,
        batch: usize,
        rng: &mut ChaCha12Rng,
    ) -> Result<Vec<&'a StoredTransition>, RlError> {
        if self.expert.is_empty() {
            return Err(RlError::EmptyStore("expert"));
        }
        let mut out = Vec::with_capacity(batch);
        for _ in 0..batch {
            let t = &self.expert[rng.gen_range(0..self.expert.len())];
            assert_eq!(t.src, Source::Expert);
            out.push(t);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn tr(tag: f64, src: Source) -> StoredTransition {
        StoredTransition {
            obs: Feat::from_vec(vec![tag]),
            action: [0.0; 6],
            reward: tag,
            next: Feat::from_vec(vec![tag]),
            done: false,
            src,
        }
    }

    #[test]
    fn ring_overwrites_oldest_first() {
        let mut ring = ReplayRing::new(3);
        for i in 0..5 {
            ring.push(tr(i as f64, Source::Agent));
        }
        assert_eq!(ring.len(), 3);
        let rewards: Vec<f64> = (0..3).map(|i| ring.get(i).reward).collect();
        // Slots 0 and 1 hold the two newest items; slot 2 still holds item 2.
        assert_eq!(rewards, vec![3.0, 4.0, 2.0]);
    }

    #[test]
    fn batch_composition_is_exactly_floor_of_ratio() {
        let expert: Vec<_> = (0..10).map(|i| tr(i as f64, Source::Expert)).collect();
        let mut buf = HybridBuffer::with_expert(100, expert);
        for i in 0..50 {
            buf.push_agent(tr(100.0 + i as f64, Source::Agent));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for &(ratio, batch) in &[(0.3, 64usize), (0.29, 64), (0.0, 64), (1.0, 64), (0.5, 7)] {
            let want = (ratio * batch as f64).floor() as usize;
            let got = buf.sample(batch, ratio, &mut rng).unwrap();
            let experts = got.iter().filter(|t| t.src == Source::Expert).count();
            assert_eq!(experts, want, "ratio {ratio} batch {batch}");
            assert_eq!(got.len(), batch);
        }
    }

    #[test]
    fn empty_stores_are_refused_when_drawn_from() {
        let buf = HybridBuffer::new(10);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        assert!(matches!(
            buf.sample(8, 0.5, &mut rng),
            Err(RlError::EmptyStore("expert"))
        ));
        assert!(matches!(
            buf.sample(8, 0.0, &mut rng),
            Err(RlError::EmptyStore("agent"))
        ));
        assert!(matches!(buf.sample_expert(8, &mut rng), Err(RlError::EmptyStore("expert"))));
    }

    #[test]
    fn uniform_sampling_covers_both_stores() {
        let expert: Vec<_> = (0..4).map(|i| tr(i as f64, Source::Expert)).collect();
        let mut buf = HybridBuffer::with_expert(8, expert);
        for i in 0..4 {
            buf.push_agent(tr(10.0 + i as f64, Source::Agent));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..200 {
            for t in buf.sample(4, 0.5, &mut rng).unwrap() {
                seen.insert(t.reward as i64);
            }
        }
        // Every element of both stores shows up under uniform draws.
        assert_eq!(seen.len(), 8);
    }
}
