use std::collections::HashSet;

use log::warn;
use rand::Rng;
use rayon::prelude::*;

use super::distance::{distribution_distance, DistanceKind};
use super::sampling::weighted_sample_without_replacement;
use super::Reservoir;
use crate::error::Result;
use crate::model::{last_click_example, prefix_examples, GagModel};
use crate::session_graph::Session;

/// Items and users the model has already been trained on.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnownEntities {
    items: HashSet<usize>,
    users: HashSet<usize>,
}

impl KnownEntities {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, session: &Session) {
        self.users.insert(session.user_id);
        self.items.extend(session.items.iter().copied());
    }

    pub fn observe_all<'a>(&mut self, sessions: impl IntoIterator<Item = &'a Session>) {
        for s in sessions {
            self.observe(s);
        }
    }

    pub fn knows_item(&self, item: usize) -> bool {
        self.items.contains(&item)
    }

    pub fn knows_user(&self, user: usize) -> bool {
        self.users.contains(&user)
    }

    /// True when the session mentions an item or user not seen before.
    pub fn is_novel(&self, session: &Session) -> bool {
        !self.knows_user(session.user_id) || session.items.iter().any(|&i| !self.knows_item(i))
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }
}

/// How the non-forced part of the update set is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingRule {
    /// Proportional to the chosen distance between prediction and truth.
    Weighted(DistanceKind),
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpdatePolicy {
    /// Put every session with a new item or user into the set unconditionally.
    pub forced_inclusion: bool,
    pub sampling: SamplingRule,
}

impl Default for UpdatePolicy {
    fn default() -> Self {
        UpdatePolicy {
            forced_inclusion: true,
            sampling: SamplingRule::Weighted(DistanceKind::Wasserstein),
        }
    }
}

/// Sessions selected for one online update.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateSet {
    pub sessions: Vec<Session>,
    pub forced_count: usize,
    pub window_size: usize,
}

/// Distance of each session's last-click prediction from its true last click.
/// Sessions with fewer than two clicks score zero.
pub fn session_distances(
    model: &GagModel,
    sessions: &[&Session],
    kind: DistanceKind,
) -> Result<Vec<f64>> {
    sessions
        .par_iter()
        .map(|s| match last_click_example(s) {
            Some(example) => {
                let trace = model.forward_example(&example)?;
                distribution_distance(kind, example.target, &trace.prediction)
            }
            None => Ok(0.0),
        })
        .collect()
}

/// Assembles the training set for one online update from the reservoir and
/// the newly arrived sessions.
///
/// Novel sessions (when forced inclusion is on) go in first, even if they
/// overflow the window. The remaining slots are drawn without replacement
/// from reservoir entries plus the other new sessions.
#[allow(clippy::too_many_arguments)]
pub fn build_update_set<R: Rng + ?Sized>(
    reservoir: &Reservoir,
    new_sessions: &[Session],
    model: &GagModel,
    window_size: usize,
    known: &KnownEntities,
    policy: UpdatePolicy,
    rng: &mut R,
) -> Result<UpdateSet> {
    let mut selected: Vec<Session> = Vec::new();
    let mut pool: Vec<&Session> = reservoir.entries().iter().collect();
    for s in new_sessions {
        if policy.forced_inclusion && known.is_novel(s) {
            selected.push(s.clone());
        } else {
            pool.push(s);
        }
    }
    let forced_count = selected.len();
    let slots = window_size.saturating_sub(forced_count);
    if slots > 0 && !pool.is_empty() {
        let weights = match policy.sampling {
            SamplingRule::Weighted(kind) => session_distances(model, &pool, kind)?,
            SamplingRule::Uniform => vec![1.0; pool.len()],
        };
        for idx in weighted_sample_without_replacement(&weights, slots, rng) {
            selected.push(pool[idx].clone());
        }
    }
    Ok(UpdateSet {
        sessions: selected,
        forced_count,
        window_size,
    })
}

/// Result status of [`online_update`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateOutcome {
    Trained {
        epochs: usize,
        final_loss: f64,
    },
    /// The update set was empty; the model is untouched.
    EmptyUpdateSet,
}

/// Trains the model on the update set for `online_epochs` shuffled passes.
pub fn online_update<R: Rng + ?Sized>(
    model: &mut GagModel,
    update_set: &UpdateSet,
    online_epochs: usize,
    rng: &mut R,
) -> Result<UpdateOutcome> {
    let examples: Vec<_> = update_set
        .sessions
        .iter()
        .flat_map(prefix_examples)
        .collect();
    if examples.is_empty() {
        warn!("online update skipped: empty update set");
        return Ok(UpdateOutcome::EmptyUpdateSet);
    }
    let mut final_loss = f64::NAN;
    for _ in 0..online_epochs {
        final_loss = model.train_epoch(&examples, rng)?;
    }
    Ok(UpdateOutcome::Trained {
        epochs: online_epochs,
        final_loss,
    })
}
