//! The truncated simulation-error loss over data subsections.
//!
//! Each subsection contributes `Σ_k ‖y_{τ+k} − ŷ_{τ+k|τ}‖²` with the
//! predictions produced by encoder → integrator rollout → output map, all
//! on one computation graph so a single backward pass yields exact
//! gradients for every model and encoder parameter.
//!
//! Batches are cut into fixed-size shards. Shards may be evaluated on
//! worker threads; the reduction always runs in shard order, so the result
//! is bit-identical no matter how many threads participate.

use rayon::prelude::*;

use crate::autodiff::{Graph, NodeId, Tensor};
use crate::datagen::Dataset;
use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::integrator::{step_graph, IntegratorScheme};
use crate::phcore::PhModel;
use crate::training::{leaf_count, Subsection};

/// Fixed shard width; the partition must not depend on the thread count or
/// the evaluation is no longer reproducible across machines.
const SHARD: usize = 128;

struct ShardOutcome {
    sse: f64,
    grad: Vec<f64>,
}

/// Builds the graph for one shard and returns the sum-of-squares node plus
/// the parameter leaves in canonical order.
fn build_shard(
    model: &PhModel,
    encoder: &Encoder,
    ds: &Dataset,
    subs: &[Subsection],
    scheme: &IntegratorScheme,
    ts: f64,
    t_trunc: usize,
) -> Result<(Graph, NodeId, Vec<NodeId>)> {
    let s = subs.len();
    let n_u = ds.n_u();
    let n_y = ds.n_y();
    let width = encoder.spec.input_width();

    let mut g = Graph::with_capacity(64 + s.min(1) * t_trunc * 64);
    let ph_leaves = model.leaves(&mut g);
    let enc_leaves = encoder.leaves(&mut g);
    let mut leaf_ids = Vec::with_capacity(leaf_count(model, encoder));
    for net in [&ph_leaves.h, &ph_leaves.a, &ph_leaves.b, &ph_leaves.g, &enc_leaves] {
        for l in 0..net.w.len() {
            leaf_ids.push(net.w[l]);
            leaf_ids.push(net.b[l]);
        }
    }

    // encoder windows, one row per subsection
    let mut windows = Vec::with_capacity(s * width);
    for sub in subs {
        let (u_past, y_past) = crate::encoder::window_slice(ds, sub.start, &encoder.spec)?;
        windows.extend_from_slice(&u_past);
        windows.extend_from_slice(&y_past);
    }
    let window_node = g.leaf(Tensor::matrix(s, width, windows)?);
    let mut x = encoder.encode_graph(&mut g, &enc_leaves, window_node)?;

    let mut sse: Option<NodeId> = None;
    for k in 0..t_trunc {
        // gather u_{τ+k} and y_{τ+k} across the shard
        let mut u_k = Vec::with_capacity(s * n_u);
        let mut y_k = Vec::with_capacity(s * n_y);
        for sub in subs {
            u_k.extend_from_slice(ds.u.row(sub.start + k));
            y_k.extend_from_slice(ds.y.row(sub.start + k));
        }
        let y_node = g.leaf(Tensor::matrix(s, n_y, y_k)?);

        let yhat = if k + 1 < t_trunc {
            let u_node = g.leaf(Tensor::matrix(s, n_u, u_k)?);
            let (k1, yhat) = model.f_and_h_graph(&mut g, &ph_leaves, x, u_node)?;
            x = step_graph(&mut g, scheme, ts, x, u_node, Some(k1), |g, xs, us| {
                model.f_theta_graph(g, &ph_leaves, xs, us)
            })?;
            yhat
        } else {
            // final sample: only the output is needed
            model.h_theta_graph(&mut g, &ph_leaves, x)?
        };

        let diff = g.sub(yhat, y_node)?;
        let sq = g.square(diff);
        let step_sse = g.sum(sq);
        sse = Some(match sse {
            None => step_sse,
            Some(acc) => g.add(acc, step_sse)?,
        });
    }
    Ok((g, sse.unwrap(), leaf_ids))
}

/// Locates the first subsection whose own loss is non-finite, for the
/// divergence diagnostic.
fn locate_bad_subsection(
    model: &PhModel,
    encoder: &Encoder,
    ds: &Dataset,
    subs: &[Subsection],
    scheme: &IntegratorScheme,
    ts: f64,
    t_trunc: usize,
) -> usize {
    for sub in subs {
        if let Ok((g, sse, _)) =
            build_shard(model, encoder, ds, std::slice::from_ref(sub), scheme, ts, t_trunc)
        {
            if !g.value(sse).item().is_finite() {
                return sub.start;
            }
        } else {
            return sub.start;
        }
    }
    subs.first().map_or(0, |s| s.start)
}

/// Mean truncated simulation error of a batch of subsections:
/// `Σ ‖y − ŷ‖² / (batch · T)` on normalized data.
pub fn subnet_loss(
    model: &PhModel,
    encoder: &Encoder,
    ds: &Dataset,
    batch: &[Subsection],
    scheme: &IntegratorScheme,
    ts: f64,
    t_trunc: usize,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("subnet loss: empty batch"));
    }
    let mut total = 0.0;
    for shard in batch.chunks(SHARD) {
        let (g, sse, _) = build_shard(model, encoder, ds, shard, scheme, ts, t_trunc)?;
        total += g.value(sse).item();
    }
    if !total.is_finite() {
        let tau = locate_bad_subsection(model, encoder, ds, batch, scheme, ts, t_trunc);
        return Err(Error::non_finite(format!("subnet loss at subsection τ={tau}")));
    }
    Ok(total / (batch.len() * t_trunc) as f64)
}

/// Loss and its gradient with respect to every model and encoder
/// parameter, flattened in the canonical order of
/// [`crate::training::flatten_params`].
pub fn subnet_loss_grad(
    model: &PhModel,
    encoder: &Encoder,
    ds: &Dataset,
    batch: &[Subsection],
    scheme: &IntegratorScheme,
    ts: f64,
    t_trunc: usize,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::invalid("subnet loss: empty batch"));
    }
    let n_params = crate::training::param_count(model, encoder);

    let shard_results: Vec<Result<ShardOutcome>> = batch
        .par_chunks(SHARD)
        .map(|shard| {
            let (g, sse, leaf_ids) = build_shard(model, encoder, ds, shard, scheme, ts, t_trunc)?;
            let mut grads = g.backward(sse)?;
            let mut grad = Vec::with_capacity(n_params);
            for id in leaf_ids {
                grad.extend_from_slice(grads.take_for_leaf(&g, id).data());
            }
            Ok(ShardOutcome {
                sse: g.value(sse).item(),
                grad,
            })
        })
        .collect();

    let mut total = 0.0;
    let mut grad = vec![0.0; n_params];
    for outcome in shard_results {
        let outcome = outcome?;
        total += outcome.sse;
        crate::autodiff::matops::axpy(1.0, &outcome.grad, &mut grad);
    }
    let denom = (batch.len() * t_trunc) as f64;
    if !total.is_finite() || !grad.iter().all(|v| v.is_finite()) {
        let tau = locate_bad_subsection(model, encoder, ds, batch, scheme, ts, t_trunc);
        return Err(Error::non_finite(format!("subnet loss at subsection τ={tau}")));
    }
    for v in &mut grad {
        *v /= denom;
    }
    Ok((total / denom, grad))
}
