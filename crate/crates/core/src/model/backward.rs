use rayon::prelude::*;

use super::forward::{ForwardTrace, LayerActivations, PredictionDistribution};
use super::params::{axpy, dot, GagModel, LayerWeights, Weights};
use crate::error::{Error, Result};

/// Probabilities below this are clamped before taking the log.
pub const LOG_CLAMP: f64 = 1e-12;

/// Summed cross-entropy `-sum log y_hat[target]` over a batch.
pub fn cross_entropy(preds: &[&PredictionDistribution], targets: &[usize]) -> Result<f64> {
    if preds.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} targets",
            preds.len(),
            targets.len()
        )));
    }
    preds
        .iter()
        .zip(targets)
        .map(|(p, &t)| {
            let prob = p.probs.get(t).ok_or(Error::CatalogViolation {
                kind: "item",
                id: t,
                size: p.len(),
            })?;
            Ok(-prob.max(LOG_CLAMP).ln())
        })
        .sum()
}

// Sessions per partial sum. Fixed so the reduction order never depends on
// the thread count.
const REDUCE_CHUNK: usize = 8;

struct Partial {
    layers: Vec<LayerWeights>,
    item_rows: Vec<(usize, Vec<f64>)>,
    user_rows: Vec<(usize, Vec<f64>)>,
    /// (d loss / d scores, final global attribute) per session.
    scoring: Vec<(Vec<f64>, Vec<f64>)>,
}

impl GagModel {
    /// Exact gradient of the summed cross-entropy of a batch of traces.
    pub fn backward(&self, traces: &[ForwardTrace], targets: &[usize]) -> Result<Weights> {
        if traces.len() != targets.len() {
            return Err(Error::Shape(format!(
                "{} traces for {} targets",
                traces.len(),
                targets.len()
            )));
        }
        for (trace, &target) in traces.iter().zip(targets) {
            if trace.version != self.version {
                return Err(Error::Contract(
                    "activations were produced by a different weight state".into(),
                ));
            }
            if target >= self.num_items() || trace.prediction.len() != self.num_items() {
                return Err(Error::CatalogViolation {
                    kind: "item",
                    id: target,
                    size: self.num_items(),
                });
            }
        }

        let pairs: Vec<(&ForwardTrace, usize)> =
            traces.iter().zip(targets.iter().copied()).collect();
        let partials: Vec<Partial> = pairs
            .par_chunks(REDUCE_CHUNK)
            .map(|chunk| {
                let mut partial = Partial {
                    layers: self
                        .weights
                        .layers
                        .iter()
                        .map(|_| LayerWeights::zeros(self.embed_dim()))
                        .collect(),
                    item_rows: Vec::new(),
                    user_rows: Vec::new(),
                    scoring: Vec::with_capacity(chunk.len()),
                };
                for &(trace, target) in chunk {
                    self.session_backward(trace, target, &mut partial);
                }
                partial
            })
            .collect();

        let mut grads = self.weights.zeros_like();
        for partial in partials {
            for (acc, g) in grads.layers.iter_mut().zip(&partial.layers) {
                add_layer(acc, g);
            }
            for (item, row) in &partial.item_rows {
                axpy(1.0, row, grads.items.row_mut(*item));
            }
            for (user, row) in &partial.user_rows {
                axpy(1.0, row, grads.users.row_mut(*user));
            }
            for (dscores, global) in &partial.scoring {
                grads.items.add_outer(1.0, dscores, global);
            }
        }
        Ok(grads)
    }

    fn session_backward(&self, trace: &ForwardTrace, target: usize, partial: &mut Partial) {
        let w = &self.weights;
        let mut dscores = trace.prediction.probs.clone();
        dscores[target] -= 1.0;

        let mut dglobal = vec![0.0; self.embed_dim()];
        w.items.add_transpose_matvec(&dscores, &mut dglobal);
        partial
            .scoring
            .push((dscores, trace.final_global().to_vec()));

        let mut dnodes = vec![vec![0.0; self.embed_dim()]; trace.graph.num_nodes()];
        for (k, acts) in trace.layers.iter().enumerate().rev() {
            let (dn, du) = self.layer_backward(
                trace,
                &w.layers[k],
                acts,
                &dnodes,
                &dglobal,
                &mut partial.layers[k],
            );
            dnodes = dn;
            dglobal = du;
        }
        for (node, grad) in trace.graph.nodes.iter().zip(dnodes) {
            partial.item_rows.push((*node, grad));
        }
        partial.user_rows.push((trace.graph.user_id, dglobal));
    }

    /// Backpropagates through one layer. Returns gradients with respect to
    /// the layer's node inputs and global input.
    fn layer_backward(
        &self,
        trace: &ForwardTrace,
        layer: &LayerWeights,
        acts: &LayerActivations,
        dnodes_out: &[Vec<f64>],
        dglobal_out: &[f64],
        grads: &mut LayerWeights,
    ) -> (Vec<Vec<f64>>, Vec<f64>) {
        let graph = &trace.graph;
        let d = self.embed_dim();
        let n = graph.num_nodes();
        let updated = &acts.nodes.updated;
        let u = &acts.global_input;
        let last = graph.last_node;

        // u' = readout + u
        let mut dglobal_in = dglobal_out.to_vec();
        let dreadout = dglobal_out;

        // readout = sum alpha_i v'_i ; alpha_i = att([v'_last ; v'_i ; u])
        let mut dupdated: Vec<Vec<f64>> = dnodes_out.to_vec();
        let att_row = layer.att.weight.row(0);
        for i in 0..n {
            let dalpha = dot(dreadout, &updated[i]);
            axpy(acts.global.alpha[i], dreadout, &mut dupdated[i]);
            if dalpha == 0.0 {
                continue;
            }
            let gw = grads.att.weight.row_mut(0);
            axpy(dalpha, &updated[last], &mut gw[..d]);
            axpy(dalpha, &updated[i], &mut gw[d..2 * d]);
            axpy(dalpha, u, &mut gw[2 * d..]);
            grads.att.bias[0] += dalpha;
            axpy(dalpha, &att_row[..d], &mut dupdated[last]);
            axpy(dalpha, &att_row[d..2 * d], &mut dupdated[i]);
            axpy(dalpha, &att_row[2 * d..], &mut dglobal_in);
        }

        // v'_i = node([v_in_i ; v_out_i])
        let mut dv_in = vec![vec![0.0; d]; n];
        let mut dv_out = vec![vec![0.0; d]; n];
        for i in 0..n {
            let input: Vec<f64> = acts.nodes.v_in[i]
                .iter()
                .chain(&acts.nodes.v_out[i])
                .copied()
                .collect();
            grads.node.weight.add_outer(1.0, &dupdated[i], &input);
            axpy(1.0, &dupdated[i], &mut grads.node.bias);
            let mut dinput = vec![0.0; 2 * d];
            layer
                .node
                .weight
                .add_transpose_matvec(&dupdated[i], &mut dinput);
            dv_in[i].copy_from_slice(&dinput[..d]);
            dv_out[i].copy_from_slice(&dinput[d..]);
        }

        // messages and the edge maps
        let mut dnodes_in = vec![vec![0.0; d]; n];
        let feats = &acts.node_inputs;
        for edge in &graph.edges {
            let w = f64::from(edge.weight);
            let norm = graph.edge_norm(edge);
            let dincoming: Vec<f64> = dv_out[edge.sender].iter().map(|x| x / norm).collect();
            let doutgoing: Vec<f64> = dv_in[edge.receiver].iter().map(|x| x / norm).collect();

            let sender_input: Vec<f64> = feats[edge.sender].iter().chain(u).copied().collect();
            grads.edge_in.weight.add_outer(w, &dincoming, &sender_input);
            axpy(w, &dincoming, &mut grads.edge_in.bias);
            let mut da = vec![0.0; 2 * d];
            layer
                .edge_in
                .weight
                .add_transpose_matvec(&dincoming, &mut da);
            axpy(w, &da[..d], &mut dnodes_in[edge.sender]);
            axpy(w, &da[d..], &mut dglobal_in);

            let out_node = if self.config.edge_out_uses_receiver {
                edge.receiver
            } else {
                edge.sender
            };
            let out_input: Vec<f64> = feats[out_node].iter().chain(u).copied().collect();
            grads.edge_out.weight.add_outer(w, &doutgoing, &out_input);
            axpy(w, &doutgoing, &mut grads.edge_out.bias);
            let mut da = vec![0.0; 2 * d];
            layer
                .edge_out
                .weight
                .add_transpose_matvec(&doutgoing, &mut da);
            axpy(w, &da[..d], &mut dnodes_in[out_node]);
            axpy(w, &da[d..], &mut dglobal_in);
        }
        (dnodes_in, dglobal_in)
    }
}

fn add_layer(acc: &mut LayerWeights, g: &LayerWeights) {
    for (a, b) in [
        (&mut acc.edge_in, &g.edge_in),
        (&mut acc.edge_out, &g.edge_out),
        (&mut acc.node, &g.node),
        (&mut acc.att, &g.att),
    ] {
        axpy(1.0, &b.weight.data, &mut a.weight.data);
        axpy(1.0, &b.bias, &mut a.bias);
    }
}
