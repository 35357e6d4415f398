//! Reverse-mode gradients against central finite differences.
//!
//! Builds a two-hidden-layer network loss, differentiates it with the
//! graph engine, and prints the elementwise agreement with the
//! finite-difference oracle — including the second-derivative path used by
//! the Hamiltonian gradient.
//!
//! ```bash
//! cargo run --release --example gradient_check
//! ```

use ophnn::autodiff::{finite_difference_gradient, max_rel_err, Graph, Tensor};
use ophnn::nn::{FinalAct, Mlp, MlpSpec};
use ophnn::training::{flatten_model_params, load_model_params};
use ophnn::phcore::{PhArchitecture, PhDims, PhModel};

fn main() -> ophnn::Result<()> {
    // plain network loss: sum(tanh(W2 tanh(W1 x + b1) + b2))
    let net = Mlp::init(MlpSpec::new(4, vec![8, 8], 3, FinalAct::Linear)?, 11);
    let x = [0.3, -0.9, 1.4, 0.2];

    let flat: Vec<f64> = net
        .layers
        .iter()
        .flat_map(|l| l.w.data().iter().chain(l.b.data()).copied())
        .collect();

    let mut g = Graph::new();
    let leaves = net.leaves(&mut g);
    let xn = g.leaf(Tensor::matrix(1, 4, x.to_vec())?);
    let out = net.forward_graph(&mut g, &leaves, xn)?;
    let t = g.tanh(out);
    let loss = g.sum(t);
    let grads = g.backward(loss)?;
    let mut got = Vec::new();
    for l in 0..net.layers.len() {
        got.extend_from_slice(grads.for_leaf(&g, leaves.w[l]).data());
        got.extend_from_slice(grads.for_leaf(&g, leaves.b[l]).data());
    }

    let rebuild = |p: &[f64]| {
        let mut at = 0;
        let layers = net
            .layers
            .iter()
            .map(|l| {
                let w = Tensor::matrix(l.w.shape()[0], l.w.shape()[1], p[at..at + l.w.len()].to_vec()).unwrap();
                at += l.w.len();
                let b = Tensor::vector(&p[at..at + l.b.len()]);
                at += l.b.len();
                ophnn::nn::DenseLayer { w, b }
            })
            .collect();
        Mlp::from_layers(net.spec.clone(), layers).unwrap()
    };
    let want = finite_difference_gradient(
        |p| {
            let n2 = rebuild(p);
            Ok(n2.forward_plain(&x).iter().map(|v| v.tanh()).sum())
        },
        &flat,
        1e-5,
    )?;
    println!("mlp loss gradient vs finite differences:");
    println!("  {} coordinates, max relative error {:.3e}", got.len(), max_rel_err(&got, &want));

    // the same check through a full model derivative f(x, u), which runs
    // backward through the analytic Hamiltonian gradient
    let model = PhModel::init(PhDims::new(3, 1)?, &PhArchitecture::default(), 0.0, 5);
    let xs = [0.4, -0.2, 0.7];
    let us = [0.9];
    let proj = [1.0, -0.5, 0.25];
    let flat = flatten_model_params(&model);

    let mut g = Graph::new();
    let leaves = model.leaves(&mut g);
    let xn = g.leaf(Tensor::matrix(1, 3, xs.to_vec())?);
    let un = g.leaf(Tensor::matrix(1, 1, us.to_vec())?);
    let f = model.f_theta_graph(&mut g, &leaves, xn, un)?;
    let pn = g.leaf(Tensor::matrix(3, 1, proj.to_vec())?);
    let s = g.matmul(f, pn)?;
    let loss = g.sum(s);
    let grads = g.backward(loss)?;
    let mut got = Vec::new();
    for net_leaves in [&leaves.h, &leaves.a, &leaves.b, &leaves.g] {
        for l in 0..net_leaves.w.len() {
            got.extend_from_slice(grads.for_leaf(&g, net_leaves.w[l]).data());
            got.extend_from_slice(grads.for_leaf(&g, net_leaves.b[l]).data());
        }
    }
    let want = finite_difference_gradient(
        |p| {
            let mut m = model.clone();
            load_model_params(&mut m, p);
            let f = m.f_theta(&xs, &us)?;
            Ok(f.iter().zip(&proj).map(|(a, b)| a * b).sum())
        },
        &flat,
        1e-4,
    )?;
    println!("state-derivative gradient (second-derivative path of H):");
    println!("  {} coordinates, max relative error {:.3e}", got.len(), max_rel_err(&got, &want));
    Ok(())
}
