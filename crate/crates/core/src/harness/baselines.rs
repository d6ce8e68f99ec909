use std::collections::HashMap;

use super::metrics::Recommender;
use crate::error::{Error, Result};
use crate::session_graph::Session;

/// Global popularity ranking. Ties go to the lower item id.
#[derive(Debug, Clone, PartialEq)]
pub struct Pop {
    counts: Vec<u64>,
    order: Vec<usize>,
    position: Vec<usize>,
}

impl Pop {
    pub fn new(num_items: usize) -> Self {
        let mut pop = Pop {
            counts: vec![0; num_items],
            order: Vec::new(),
            position: Vec::new(),
        };
        pop.reorder();
        pop
    }

    pub fn fit(sessions: &[Session], num_items: usize) -> Self {
        let mut pop = Pop::new(num_items);
        pop.observe(sessions);
        pop
    }

    /// Adds click counts, growing the catalog to cover new items.
    pub fn observe(&mut self, sessions: &[Session]) {
        for s in sessions {
            for &i in &s.items {
                if i >= self.counts.len() {
                    self.counts.resize(i + 1, 0);
                }
                self.counts[i] += 1;
            }
        }
        self.reorder();
    }

    /// Extends the catalog with zero-count items.
    pub fn grow(&mut self, num_items: usize) {
        if num_items > self.counts.len() {
            self.counts.resize(num_items, 0);
            self.reorder();
        }
    }

    fn reorder(&mut self) {
        let mut order: Vec<usize> = (0..self.counts.len()).collect();
        order.sort_by(|&a, &b| self.counts[b].cmp(&self.counts[a]).then(a.cmp(&b)));
        let mut position = vec![0; order.len()];
        for (pos, &i) in order.iter().enumerate() {
            position[i] = pos;
        }
        self.order = order;
        self.position = position;
    }

    pub fn num_items(&self) -> usize {
        self.counts.len()
    }

    pub fn recommend(&self, k: usize) -> Vec<usize> {
        self.order.iter().take(k).copied().collect()
    }

    fn check(&self, item: usize) -> Result<()> {
        if item >= self.counts.len() {
            return Err(Error::CatalogViolation {
                kind: "item",
                id: item,
                size: self.counts.len(),
            });
        }
        Ok(())
    }
}

impl Recommender for Pop {
    fn rank(&self, _user: usize, _prefix: &[usize], target: usize) -> Result<usize> {
        self.check(target)?;
        Ok(self.position[target] + 1)
    }
}

/// Session popularity: items of the current prefix by in-session count,
/// ties and the tail in global popularity order.
#[derive(Debug, Clone, Copy)]
pub struct SPop<'a> {
    pub pop: &'a Pop,
}

impl SPop<'_> {
    fn session_order(&self, prefix: &[usize]) -> Vec<usize> {
        let mut counts: HashMap<usize, u32> = HashMap::new();
        for &i in prefix {
            *counts.entry(i).or_default() += 1;
        }
        let mut items: Vec<usize> = counts.keys().copied().collect();
        items.sort_by(|a, b| {
            counts[b]
                .cmp(&counts[a])
                .then(self.pop.position[*a].cmp(&self.pop.position[*b]))
        });
        items
    }

    pub fn recommend(&self, prefix: &[usize], k: usize) -> Vec<usize> {
        let head = self.session_order(prefix);
        let tail = self.pop.order.iter().filter(|i| !head.contains(i)).copied();
        head.iter().copied().chain(tail).take(k).collect()
    }
}

impl Recommender for SPop<'_> {
    fn rank(&self, _user: usize, prefix: &[usize], target: usize) -> Result<usize> {
        self.pop.check(target)?;
        for &i in prefix {
            self.pop.check(i)?;
        }
        let head = self.session_order(prefix);
        if let Some(pos) = head.iter().position(|&i| i == target) {
            return Ok(pos + 1);
        }
        let target_pos = self.pop.position[target];
        let ahead_in_head = head
            .iter()
            .filter(|&&i| self.pop.position[i] < target_pos)
            .count();
        Ok(head.len() + target_pos - ahead_in_head + 1)
    }
}
