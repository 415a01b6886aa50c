//! Class-balanced memory of strong-view embeddings.
//!
//! Each class owns a cell of fixed capacity. Under the confidence-decay
//! policy a full cell admits a newcomer only when its confidence strictly
//! exceeds the cell minimum, which it then replaces; every `decay_interval`
//! ticks all stored confidences are multiplied by `beta`. Since decay scales
//! every stored confidence by the same factor, a cell always holds the
//! `capacity` highest current confidences among everything ever offered to
//! it (ties keep the earlier entry).

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BankEntry {
    pub embedding: Vec<f64>,
    pub confidence: f64,
    /// Global insertion counter, used to break confidence ties.
    pub seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BankPolicy {
    /// Confidence-gated replacement with periodic decay.
    ConfidenceDecay,
    /// Plain per-class FIFO queue: always accept, evict the oldest, never
    /// decay. Used when the confidence-decay bank is ablated.
    Fifo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank {
    cells: Vec<Vec<BankEntry>>,
    capacity: usize,
    beta: f64,
    decay_interval: usize,
    steps: usize,
    next_seq: u64,
    policy: BankPolicy,
}

/// Per-class means of the stored embeddings. Classes with an empty cell
/// have a zero center and `valid = false`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prototypes {
    pub centers: Vec<Vec<f64>>,
    pub valid: Vec<bool>,
}

impl Prototypes {
    pub fn any_valid(&self) -> bool {
        self.valid.iter().any(|v| *v)
    }
}

impl MemoryBank {
    pub fn new(k: usize, capacity: usize, beta: f64, decay_interval: usize) -> Self {
        Self::with_policy(k, capacity, beta, decay_interval, BankPolicy::ConfidenceDecay)
    }

    pub fn with_policy(
        k: usize,
        capacity: usize,
        beta: f64,
        decay_interval: usize,
        policy: BankPolicy,
    ) -> Self {
        MemoryBank {
            cells: vec![Vec::with_capacity(capacity); k],
            capacity,
            beta,
            decay_interval: decay_interval.max(1),
            steps: 0,
            next_seq: 0,
            policy,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.cells.len()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn policy(&self) -> BankPolicy {
        self.policy
    }

    pub fn cell(&self, k: usize) -> &[BankEntry] {
        &self.cells[k]
    }

    pub fn len(&self) -> usize {
        self.cells.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Offers an embedding to class `k`; returns whether it was stored.
    pub fn insert(&mut self, k: usize, embedding: &[f64], confidence: f64) -> Result<bool> {
        if k >= self.cells.len() {
            return Err(Error::invalid(format!("class {k} out of range for the memory bank")));
        }
        if !(confidence > 0.0 && confidence <= 1.0) {
            return Err(Error::invalid(format!("bank confidence {confidence} outside (0, 1]")));
        }
        let entry = BankEntry { embedding: embedding.to_vec(), confidence, seq: self.next_seq };
        let cell = &mut self.cells[k];
        if cell.len() < self.capacity {
            cell.push(entry);
            self.next_seq += 1;
            return Ok(true);
        }
        let victim = match self.policy {
            BankPolicy::Fifo => {
                let (idx, _) = cell.iter().enumerate().min_by_key(|(_, e)| e.seq).expect("full cell");
                idx
            }
            BankPolicy::ConfidenceDecay => {
                // Lowest confidence; among equals, the most recent entry.
                let mut idx = 0;
                for (i, e) in cell.iter().enumerate().skip(1) {
                    let cur = &cell[idx];
                    if e.confidence < cur.confidence
                        || (e.confidence == cur.confidence && e.seq > cur.seq)
                    {
                        idx = i;
                    }
                }
                if confidence <= cell[idx].confidence {
                    return Ok(false);
                }
                idx
            }
        };
        cell[victim] = entry;
        self.next_seq += 1;
        Ok(true)
    }

    /// Multiplies every stored confidence by `beta`.
    pub fn decay(&mut self) {
        if self.policy == BankPolicy::Fifo {
            return;
        }
        for cell in &mut self.cells {
            for e in cell {
                e.confidence *= self.beta;
            }
        }
    }

    /// Advances the step counter, decaying on every `decay_interval`-th call.
    /// Returns whether a decay happened.
    pub fn tick(&mut self) -> bool {
        self.steps += 1;
        if self.steps % self.decay_interval == 0 {
            self.decay();
            true
        } else {
            false
        }
    }

    pub fn prototypes(&self) -> Prototypes {
        let dim = self
            .cells
            .iter()
            .flat_map(|c| c.first())
            .map(|e| e.embedding.len())
            .next()
            .unwrap_or(0);
        let mut centers = Vec::with_capacity(self.cells.len());
        let mut valid = Vec::with_capacity(self.cells.len());
        for cell in &self.cells {
            let mut c = vec![0.0; dim];
            for e in cell {
                for (a, b) in c.iter_mut().zip(&e.embedding) {
                    *a += b;
                }
            }
            if !cell.is_empty() {
                let n = cell.len() as f64;
                for a in &mut c {
                    *a /= n;
                }
            }
            centers.push(c);
            valid.push(!cell.is_empty());
        }
        Prototypes { centers, valid }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn confidences(bank: &MemoryBank, k: usize) -> Vec<f64> {
        let mut v: Vec<f64> = bank.cell(k).iter().map(|e| e.confidence).collect();
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }

    #[test]
    fn replacement_rule() {
        let mut bank = MemoryBank::new(2, 3, 0.999, 50);
        for c in [0.9, 0.8, 0.7] {
            assert!(bank.insert(0, &[c], c).unwrap());
        }
        assert!(bank.insert(0, &[0.75], 0.75).unwrap());
        assert_eq!(confidences(&bank, 0), vec![0.9, 0.8, 0.75]);
        assert!(!bank.insert(0, &[0.65], 0.65).unwrap());
        assert!(!bank.insert(0, &[0.75], 0.75).unwrap(), "ties are rejected");
        assert!(bank.insert(1, &[0.01], 0.01).unwrap());
    }

    #[test]
    fn insert_validates() {
        let mut bank = MemoryBank::new(2, 3, 0.9, 1);
        assert!(bank.insert(2, &[0.0], 0.5).is_err());
        assert!(bank.insert(0, &[0.0], 0.0).is_err());
        assert!(bank.insert(0, &[0.0], 1.5).is_err());
        assert!(bank.insert(0, &[0.0], 1.0).unwrap());
    }

    #[test]
    fn decay_arithmetic_and_order() {
        let mut bank = MemoryBank::new(1, 4, 0.999, 1);
        bank.insert(0, &[1.0, 2.0], 0.99).unwrap();
        bank.insert(0, &[3.0, 4.0], 0.5).unwrap();
        bank.decay();
        assert!((bank.cell(0)[0].confidence - 0.98901).abs() < 1e-15);
        bank.decay();
        assert!((bank.cell(0)[0].confidence - 0.99 * 0.999 * 0.999).abs() < 1e-15);
        assert!(bank.cell(0)[0].confidence > bank.cell(0)[1].confidence);
        assert_eq!(bank.cell(0)[1].embedding, vec![3.0, 4.0]);
    }

    #[test]
    fn tick_decays_on_interval() {
        let mut bank = MemoryBank::new(1, 2, 0.5, 3);
        bank.insert(0, &[0.0], 0.8).unwrap();
        assert!(!bank.tick());
        assert!(!bank.tick());
        assert!(bank.tick());
        assert_eq!(bank.cell(0)[0].confidence, 0.4);
    }

    #[test]
    fn fifo_policy_evicts_oldest() {
        let mut bank = MemoryBank::with_policy(1, 2, 0.5, 1, BankPolicy::Fifo);
        bank.insert(0, &[1.0], 0.9).unwrap();
        bank.insert(0, &[2.0], 0.8).unwrap();
        assert!(bank.insert(0, &[3.0], 0.1).unwrap());
        let embs: Vec<f64> = bank.cell(0).iter().map(|e| e.embedding[0]).collect();
        assert_eq!(embs, vec![3.0, 2.0]);
        bank.decay();
        assert_eq!(bank.cell(0)[1].confidence, 0.8);
    }

    #[test]
    fn prototype_means() {
        let mut bank = MemoryBank::new(3, 4, 0.9, 1);
        bank.insert(0, &[1.0, 0.0], 0.5).unwrap();
        bank.insert(0, &[0.0, 1.0], 0.6).unwrap();
        bank.insert(1, &[0.3, -0.2], 0.6).unwrap();
        let p = bank.prototypes();
        assert_eq!(p.centers[0], vec![0.5, 0.5]);
        assert_eq!(p.centers[1], vec![0.3, -0.2]);
        assert_eq!(p.centers[2], vec![0.0, 0.0]);
        assert_eq!(p.valid, vec![true, true, false]);
        assert!(!MemoryBank::new(2, 1, 0.9, 1).prototypes().any_valid());
    }

    #[test]
    fn prototype_matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut bank = MemoryBank::new(1, 16, 0.9, 1);
        for _ in 0..40 {
            let e: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            bank.insert(0, &e, rng.random_range(0.01..1.0)).unwrap();
        }
        let cell = bank.cell(0);
        for j in 0..5 {
            let direct = cell.iter().map(|e| e.embedding[j]).sum::<f64>() / cell.len() as f64;
            assert!((bank.prototypes().centers[0][j] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn capacity_is_never_exceeded() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut bank = MemoryBank::new(3, 5, 0.95, 7);
        for _ in 0..2000 {
            let k = rng.random_range(0..3);
            bank.insert(k, &[0.0], rng.random_range(0.001..=1.0)).unwrap();
            bank.tick();
            assert!((0..3).all(|k| bank.cell(k).len() <= 5));
            assert!((0..3).all(|k| bank.cell(k).iter().all(|e| e.confidence > 0.0 && e.confidence <= 1.0)));
        }
    }
}
