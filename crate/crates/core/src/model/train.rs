use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::backward::cross_entropy;
use super::forward::ForwardTrace;
use super::params::GagModel;
use crate::error::Result;
use crate::session_graph::{Session, SessionGraph};

/// One next-item prediction: the clicks so far and the click that followed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub user: usize,
    pub prefix: Vec<usize>,
    pub target: usize,
}

/// Every prefix of `session` paired with its successor; a session of
/// length `l` yields `l - 1` examples.
pub fn prefix_examples(session: &Session) -> Vec<Example> {
    (1..session.items.len())
        .map(|p| Example {
            user: session.user_id,
            prefix: session.items[..p].to_vec(),
            target: session.items[p],
        })
        .collect()
}

/// The example that predicts the final click from everything before it.
pub fn last_click_example(session: &Session) -> Option<Example> {
    let l = session.items.len();
    (l >= 2).then(|| Example {
        user: session.user_id,
        prefix: session.items[..l - 1].to_vec(),
        target: session.items[l - 1],
    })
}

impl GagModel {
    pub fn forward_example(&self, example: &Example) -> Result<ForwardTrace> {
        let graph = SessionGraph::from_items(example.user, &example.prefix, self.num_items())?;
        self.forward(&graph)
    }

    pub fn forward_batch(&self, examples: &[Example]) -> Result<Vec<ForwardTrace>> {
        examples
            .par_iter()
            .map(|e| self.forward_example(e))
            .collect()
    }

    /// Summed cross-entropy over `examples`.
    pub fn batch_loss(&self, examples: &[Example]) -> Result<f64> {
        let traces = self.forward_batch(examples)?;
        let preds: Vec<_> = traces.iter().map(|t| &t.prediction).collect();
        let targets: Vec<usize> = examples.iter().map(|e| e.target).collect();
        cross_entropy(&preds, &targets)
    }

    /// Forward, backward and one Adam step on a minibatch. Returns the
    /// loss measured before the step.
    pub fn train_batch(&mut self, examples: &[Example]) -> Result<f64> {
        let traces = self.forward_batch(examples)?;
        let targets: Vec<usize> = examples.iter().map(|e| e.target).collect();
        let loss = {
            let preds: Vec<_> = traces.iter().map(|t| &t.prediction).collect();
            cross_entropy(&preds, &targets)?
        };
        let grads = self.backward(&traces, &targets)?;
        self.adam_step(&grads)?;
        Ok(loss)
    }

    /// One shuffled pass over `examples` in minibatches. Returns the mean
    /// per-example loss.
    pub fn train_epoch<R: Rng + ?Sized>(
        &mut self,
        examples: &[Example],
        rng: &mut R,
    ) -> Result<f64> {
        if examples.is_empty() {
            return Ok(0.0);
        }
        let mut order: Vec<usize> = (0..examples.len()).collect();
        order.shuffle(rng);
        let mut total = 0.0;
        for batch in order.chunks(self.config.batch_size) {
            let batch: Vec<Example> = batch.iter().map(|&i| examples[i].clone()).collect();
            total += self.train_batch(&batch)?;
        }
        Ok(total / examples.len() as f64)
    }
}
