//! The structured port-Hamiltonian model class.
//!
//! Four networks of the state assemble the dynamics: `J = B − Bᵀ` is
//! skew-symmetric, `R = A·Aᵀ` positive semidefinite, `G` the input map, and
//! the Hamiltonian `H = elu(z) + c + 1` is bounded below by `c`. Those
//! constructions make every instance cyclo-passive regardless of the
//! parameter values, so the property survives training.

use crate::autodiff::matops;
use crate::autodiff::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};
use crate::nn::{FinalAct, Mlp, MlpLeaves, MlpSpec};

/// State and port dimensions. The output dimension equals the input
/// dimension: the output map `Gᵀ ∂H/∂x` is collocated with the input port.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhDims {
    pub n_x: usize,
    pub n_u: usize,
}

impl PhDims {
    pub fn new(n_x: usize, n_u: usize) -> Result<Self> {
        if n_x == 0 || n_u == 0 {
            return Err(Error::invalid("dimensions must be >= 1"));
        }
        Ok(Self { n_x, n_u })
    }

    pub fn n_y(&self) -> usize {
        self.n_u
    }
}

/// Hidden-layer widths for the four networks.
#[derive(Debug, Clone, PartialEq)]
pub struct PhArchitecture {
    pub h_hidden: Vec<usize>,
    pub a_hidden: Vec<usize>,
    pub b_hidden: Vec<usize>,
    pub g_hidden: Vec<usize>,
}

impl Default for PhArchitecture {
    fn default() -> Self {
        Self {
            h_hidden: vec![16, 16],
            a_hidden: vec![8],
            b_hidden: vec![8],
            g_hidden: vec![8],
        }
    }
}

/// A complete parameterized model: dimensions, the four networks, and the
/// Hamiltonian lower bound `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhModel {
    pub dims: PhDims,
    /// n_x → 1, ELU final layer.
    pub h_net: Mlp,
    /// n_x → n_x² (row-major reshape), `R = A·Aᵀ`.
    pub a_net: Mlp,
    /// n_x → n_x² (row-major reshape), `J = B − Bᵀ`.
    pub b_net: Mlp,
    /// n_x → n_x·n_u (row-major reshape).
    pub g_net: Mlp,
    /// Lower bound on the Hamiltonian.
    pub h_lower_bound: f64,
}

/// Parameter leaves of all four networks inside one graph.
#[derive(Debug, Clone)]
pub struct PhLeaves {
    pub h: MlpLeaves,
    pub a: MlpLeaves,
    pub b: MlpLeaves,
    pub g: MlpLeaves,
}

impl PhModel {
    /// Random initialization; the four networks draw from seeds derived
    /// from `seed`, so one value pins the whole model.
    pub fn init(dims: PhDims, arch: &PhArchitecture, h_lower_bound: f64, seed: u64) -> Self {
        let nx = dims.n_x;
        let h_net = Mlp::init(
            MlpSpec::new(nx, arch.h_hidden.clone(), 1, FinalAct::Elu).unwrap(),
            seed,
        );
        let a_net = Mlp::init(
            MlpSpec::new(nx, arch.a_hidden.clone(), nx * nx, FinalAct::Linear).unwrap(),
            seed.wrapping_add(1),
        );
        let b_net = Mlp::init(
            MlpSpec::new(nx, arch.b_hidden.clone(), nx * nx, FinalAct::Linear).unwrap(),
            seed.wrapping_add(2),
        );
        let g_net = Mlp::init(
            MlpSpec::new(nx, arch.g_hidden.clone(), nx * dims.n_u, FinalAct::Linear).unwrap(),
            seed.wrapping_add(3),
        );
        Self {
            dims,
            h_net,
            a_net,
            b_net,
            g_net,
            h_lower_bound,
        }
    }

    /// Builds a model from pre-existing networks, validating every shape.
    pub fn from_nets(
        dims: PhDims,
        h_net: Mlp,
        a_net: Mlp,
        b_net: Mlp,
        g_net: Mlp,
        h_lower_bound: f64,
    ) -> Result<Self> {
        let nx = dims.n_x;
        let check = |name: &str, net: &Mlp, out: usize, final_act: FinalAct| -> Result<()> {
            if net.spec.input_dim != nx || net.spec.output_dim != out || net.spec.final_act != final_act
            {
                return Err(Error::invalid(format!(
                    "{name}: expected {nx}→{out} with {} final layer, got {}→{} with {}",
                    final_act.name(),
                    net.spec.input_dim,
                    net.spec.output_dim,
                    net.spec.final_act.name(),
                )));
            }
            Ok(())
        };
        check("h_net", &h_net, 1, FinalAct::Elu)?;
        check("a_net", &a_net, nx * nx, FinalAct::Linear)?;
        check("b_net", &b_net, nx * nx, FinalAct::Linear)?;
        check("g_net", &g_net, nx * dims.n_u, FinalAct::Linear)?;
        Ok(Self {
            dims,
            h_net,
            a_net,
            b_net,
            g_net,
            h_lower_bound,
        })
    }

    pub fn n_params(&self) -> usize {
        self.h_net.n_params()
            + self.a_net.n_params()
            + self.b_net.n_params()
            + self.g_net.n_params()
    }

    fn check_state(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dims.n_x {
            return Err(Error::invalid(format!(
                "state length {} does not match n_x {}",
                x.len(),
                self.dims.n_x
            )));
        }
        Ok(())
    }

    // ── plain evaluation ─────────────────────────────────────────────

    /// Interconnection matrix `J(x) = B(x) − B(x)ᵀ`, exactly skew-symmetric.
    pub fn assemble_j(&self, x: &[f64]) -> Result<Tensor> {
        self.check_state(x)?;
        let nx = self.dims.n_x;
        let b = self.b_net.forward_plain(x);
        let mut j = vec![0.0; nx * nx];
        for r in 0..nx {
            for c in 0..nx {
                j[r * nx + c] = b[r * nx + c] - b[c * nx + r];
            }
        }
        Tensor::matrix(nx, nx, j)
    }

    /// Dissipation matrix `R(x) = A(x)·A(x)ᵀ`, symmetric PSD.
    pub fn assemble_r(&self, x: &[f64]) -> Result<Tensor> {
        self.check_state(x)?;
        let nx = self.dims.n_x;
        let a = self.a_net.forward_plain(x);
        let mut r = vec![0.0; nx * nx];
        matops::gemm_nt(nx, nx, nx, &a, &a, &mut r);
        Tensor::matrix(nx, nx, r)
    }

    /// Input matrix `G(x)`, `n_x × n_u` row-major.
    pub fn assemble_g(&self, x: &[f64]) -> Result<Tensor> {
        self.check_state(x)?;
        Tensor::matrix(self.dims.n_x, self.dims.n_u, self.g_net.forward_plain(x))
    }

    /// `H(x) = elu(z) + c + 1 ≥ c`.
    pub fn hamiltonian(&self, x: &[f64]) -> Result<f64> {
        self.check_state(x)?;
        Ok(self.h_net.forward_plain(x)[0] + self.h_lower_bound + 1.0)
    }

    /// `∂H/∂x`, the analytic input gradient of the Hamiltonian network.
    pub fn grad_h(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_state(x)?;
        Ok(self.h_net.input_gradient_plain(x))
    }

    /// State derivative `f(x, u) = (J − R) ∂H/∂x + G·u`.
    pub fn f_theta(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.check_state(x)?;
        if u.len() != self.dims.n_u {
            return Err(Error::invalid(format!(
                "input length {} does not match n_u {}",
                u.len(),
                self.dims.n_u
            )));
        }
        let nx = self.dims.n_x;
        let grad = self.h_net.input_gradient_plain(x);
        let a = self.a_net.forward_plain(x);
        let b = self.b_net.forward_plain(x);
        let gm = self.g_net.forward_plain(x);

        // J·g = B·g − Bᵀ·g
        let mut out = vec![0.0; nx];
        matops::matvec(nx, nx, &b, &grad, &mut out);
        let mut bt_g = vec![0.0; nx];
        matops::matvec_t(nx, nx, &b, &grad, &mut bt_g);
        // R·g = A·(Aᵀ·g)
        let mut at_g = vec![0.0; nx];
        matops::matvec_t(nx, nx, &a, &grad, &mut at_g);
        let mut r_g = vec![0.0; nx];
        matops::matvec(nx, nx, &a, &at_g, &mut r_g);
        for i in 0..nx {
            out[i] -= bt_g[i] + r_g[i];
        }
        matops::matvec(nx, self.dims.n_u, &gm, u, &mut out);
        Ok(out)
    }

    /// Output map `h(x) = G(x)ᵀ ∂H/∂x`.
    pub fn h_theta(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_state(x)?;
        let grad = self.h_net.input_gradient_plain(x);
        let gm = self.g_net.forward_plain(x);
        let mut y = vec![0.0; self.dims.n_u];
        matops::matvec_t(self.dims.n_x, self.dims.n_u, &gm, &grad, &mut y);
        Ok(y)
    }

    /// Energy rate and supplied power: `(dH/dt, yᵀu)`. Cyclo-passivity
    /// guarantees `dH/dt ≤ yᵀu` up to roundoff.
    pub fn power_balance(&self, x: &[f64], u: &[f64]) -> Result<(f64, f64)> {
        let grad = self.grad_h(x)?;
        let f = self.f_theta(x, u)?;
        let y = self.h_theta(x)?;
        Ok((matops::dot(&grad, &f), matops::dot(&y, u)))
    }

    // ── graph construction ───────────────────────────────────────────

    /// Registers all four networks' parameters as graph leaves.
    pub fn leaves(&self, g: &mut Graph) -> PhLeaves {
        PhLeaves {
            h: self.h_net.leaves(g),
            a: self.a_net.leaves(g),
            b: self.b_net.leaves(g),
            g: self.g_net.leaves(g),
        }
    }

    /// Shared per-state subgraph: `(∂H/∂x, flattened G)`.
    fn state_bundle(
        &self,
        g: &mut Graph,
        leaves: &PhLeaves,
        x: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        let (_, grad_h) = self.h_net.forward_with_input_grad(g, &leaves.h, x)?;
        let g_flat = self.g_net.forward_graph(g, &leaves.g, x)?;
        Ok((grad_h, g_flat))
    }

    fn f_from_bundle(
        &self,
        g: &mut Graph,
        leaves: &PhLeaves,
        x: NodeId,
        u: NodeId,
        grad_h: NodeId,
        g_flat: NodeId,
    ) -> Result<NodeId> {
        let nx = self.dims.n_x;
        let a_flat = self.a_net.forward_graph(g, &leaves.a, x)?;
        let b_flat = self.b_net.forward_graph(g, &leaves.b, x)?;
        let b_g = g.batch_matvec(b_flat, grad_h, nx, nx)?;
        let bt_g = g.batch_matvec_t(b_flat, grad_h, nx, nx)?;
        let j_g = g.sub(b_g, bt_g)?;
        let at_g = g.batch_matvec_t(a_flat, grad_h, nx, nx)?;
        let r_g = g.batch_matvec(a_flat, at_g, nx, nx)?;
        let jr_g = g.sub(j_g, r_g)?;
        let g_u = g.batch_matvec(g_flat, u, nx, self.dims.n_u)?;
        g.add(jr_g, g_u)
    }

    /// `f(x, u)` on the graph for a batch of states `x:[B×n_x]`,
    /// `u:[B×n_u]`; differentiable w.r.t. all parameters.
    pub fn f_theta_graph(
        &self,
        g: &mut Graph,
        leaves: &PhLeaves,
        x: NodeId,
        u: NodeId,
    ) -> Result<NodeId> {
        let (grad_h, g_flat) = self.state_bundle(g, leaves, x)?;
        self.f_from_bundle(g, leaves, x, u, grad_h, g_flat)
    }

    /// Batched output map on the graph.
    pub fn h_theta_graph(&self, g: &mut Graph, leaves: &PhLeaves, x: NodeId) -> Result<NodeId> {
        let (grad_h, g_flat) = self.state_bundle(g, leaves, x)?;
        g.batch_matvec_t(g_flat, grad_h, self.dims.n_x, self.dims.n_u)
    }

    /// `(f(x,u), h(x))` sharing the Hamiltonian gradient and `G` forward
    /// pass between the two maps.
    pub fn f_and_h_graph(
        &self,
        g: &mut Graph,
        leaves: &PhLeaves,
        x: NodeId,
        u: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        let (grad_h, g_flat) = self.state_bundle(g, leaves, x)?;
        let y = g.batch_matvec_t(g_flat, grad_h, self.dims.n_x, self.dims.n_u)?;
        let f = self.f_from_bundle(g, leaves, x, u, grad_h, g_flat)?;
        Ok((f, y))
    }

    /// Batched Hamiltonian on the graph (scalar per row, `[B×1]`).
    pub fn hamiltonian_graph(&self, g: &mut Graph, leaves: &PhLeaves, x: NodeId) -> Result<NodeId> {
        let out = self.h_net.forward_graph(g, &leaves.h, x)?;
        Ok(g.affine_scalar(out, 1.0, self.h_lower_bound + 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{finite_difference_gradient, max_rel_err};
    use crate::nn::DenseLayer;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_model(seed: u64) -> PhModel {
        let arch = PhArchitecture {
            h_hidden: vec![6],
            a_hidden: vec![5],
            b_hidden: vec![5],
            g_hidden: vec![4],
        };
        PhModel::init(PhDims::new(3, 2).unwrap(), &arch, 0.0, seed)
    }

    /// Replaces a net with a constant map (zero weights, fixed bias).
    fn constant_net(input_dim: usize, out: &[f64], final_act: FinalAct) -> Mlp {
        let spec = MlpSpec::new(input_dim, vec![], out.len(), final_act).unwrap();
        Mlp::from_layers(
            spec,
            vec![DenseLayer {
                w: Tensor::zeros(&[out.len(), input_dim]),
                b: Tensor::vector(out),
            }],
        )
        .unwrap()
    }

    #[test]
    fn j_from_forced_b_matrix() {
        let arch = PhArchitecture {
            h_hidden: vec![4],
            a_hidden: vec![],
            b_hidden: vec![],
            g_hidden: vec![],
        };
        let mut m = PhModel::init(PhDims::new(2, 2).unwrap(), &arch, 0.0, 1);
        m.b_net = constant_net(2, &[1.0, 2.0, 3.0, 4.0], FinalAct::Linear);
        let j = m.assemble_j(&[0.3, -0.4]).unwrap();
        assert_eq!(j.data(), &[0.0, -1.0, 1.0, 0.0]);
    }

    #[test]
    fn j_is_exactly_skew_and_quadratic_form_vanishes() {
        let m = small_model(7);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let j = m.assemble_j(&x).unwrap();
            for r in 0..3 {
                for c in 0..3 {
                    assert!((j.at(r, c) + j.at(c, r)).abs() <= 1e-14);
                }
            }
            let v: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut jv = vec![0.0; 3];
            matops::matvec(3, 3, j.data(), &v, &mut jv);
            let norm2 = matops::dot(&v, &v);
            assert!(matops::dot(&v, &jv).abs() <= 1e-12 * norm2.max(1e-12));
        }
    }

    #[test]
    fn r_from_forced_a_matrix() {
        let arch = PhArchitecture {
            h_hidden: vec![4],
            a_hidden: vec![],
            b_hidden: vec![],
            g_hidden: vec![],
        };
        let mut m = PhModel::init(PhDims::new(2, 2).unwrap(), &arch, 0.0, 2);
        m.a_net = constant_net(2, &[1.0, 0.0, 1.0, 1.0], FinalAct::Linear);
        let r = m.assemble_r(&[5.0, -5.0]).unwrap();
        assert_eq!(r.data(), &[1.0, 1.0, 1.0, 2.0]);
    }

    #[test]
    fn r_is_psd_and_zero_a_gives_lossless() {
        let m = small_model(11);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let r = m.assemble_r(&x).unwrap();
            let v: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut rv = vec![0.0; 3];
            matops::matvec(3, 3, r.data(), &v, &mut rv);
            let norm2 = matops::dot(&v, &v);
            assert!(matops::dot(&v, &rv) >= -1e-12 * norm2);
        }

        let mut lossless = small_model(12);
        lossless.a_net = constant_net(3, &[0.0; 9], FinalAct::Linear);
        let r = lossless.assemble_r(&[0.1, 0.2, 0.3]).unwrap();
        assert!(r.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hamiltonian_shift_and_lower_bound() {
        // zero-weight H net: pre-activation 0 → H = elu(0) + c + 1 = 1 at c=0
        let mut m = small_model(3);
        m.h_net = constant_net(3, &[0.0], FinalAct::Elu);
        assert_eq!(m.hamiltonian(&[9.0, 9.0, 9.0]).unwrap(), 1.0);

        let m = small_model(21);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..10_000 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-5.0..5.0)).collect();
            assert!(m.hamiltonian(&x).unwrap() >= m.h_lower_bound);
        }
    }

    #[test]
    fn f_theta_ignores_input_when_g_is_zero() {
        let mut m = small_model(4);
        m.g_net = constant_net(3, &[0.0; 6], FinalAct::Linear);
        let x = [0.2, -0.7, 1.1];
        let f0 = m.f_theta(&x, &[0.0, 0.0]).unwrap();
        let f1 = m.f_theta(&x, &[3.5, -2.0]).unwrap();
        assert_eq!(f0, f1);
    }

    #[test]
    fn lossless_flow_preserves_energy_direction() {
        // A ≡ 0 and u = 0: dH/dt = gᵀJg = 0
        let mut m = small_model(8);
        m.a_net = constant_net(3, &[0.0; 9], FinalAct::Linear);
        let x = [0.4, 0.1, -0.9];
        let grad = m.grad_h(&x).unwrap();
        let f = m.f_theta(&x, &[0.0, 0.0]).unwrap();
        assert!(matops::dot(&grad, &f).abs() <= 1e-12);
    }

    #[test]
    fn h_theta_zero_g_and_selector() {
        let mut m = small_model(5);
        m.g_net = constant_net(3, &[0.0; 6], FinalAct::Linear);
        assert_eq!(m.h_theta(&[0.5, 0.5, 0.5]).unwrap(), vec![0.0, 0.0]);

        // G = e₁ (single input column picks the first gradient entry)
        let arch = PhArchitecture {
            h_hidden: vec![],
            a_hidden: vec![],
            b_hidden: vec![],
            g_hidden: vec![],
        };
        let mut m = PhModel::init(PhDims::new(3, 1).unwrap(), &arch, 0.0, 17);
        m.g_net = constant_net(3, &[1.0, 0.0, 0.0], FinalAct::Linear);
        // affine H with elu final; pick x with positive pre-activation so the
        // gradient is exactly the weight row
        let w = [0.7, -0.2, 0.4];
        m.h_net = Mlp::from_layers(
            MlpSpec::new(3, vec![], 1, FinalAct::Elu).unwrap(),
            vec![DenseLayer {
                w: Tensor::matrix(1, 3, w.to_vec()).unwrap(),
                b: Tensor::vector(&[2.0]),
            }],
        )
        .unwrap();
        let y = m.h_theta(&[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(y.len(), 1);
        assert!((y[0] - w[0]).abs() <= 1e-15);
    }

    #[test]
    fn power_balance_dissipation_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(321);
        // pure dissipation at u = 0
        for seed in 0..20 {
            let m = small_model(1000 + seed);
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let (dh, supplied) = m.power_balance(&x, &[0.0, 0.0]).unwrap();
            assert_eq!(supplied, 0.0);
            assert!(dh <= 1e-12);
        }
        // lossless autonomous case
        let mut m = small_model(2000);
        m.a_net = constant_net(3, &[0.0; 9], FinalAct::Linear);
        let (dh, _) = m.power_balance(&[0.3, -0.3, 0.8], &[0.0, 0.0]).unwrap();
        assert!(dh.abs() <= 1e-12);
        // random draws
        for seed in 0..500 {
            let m = small_model(3000 + seed);
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let u: Vec<f64> = (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let (dh, supplied) = m.power_balance(&x, &u).unwrap();
            assert!(
                dh <= supplied + 1e-9 * (1.0 + supplied.abs()),
                "dissipation inequality violated: dH/dt {dh} > supplied {supplied}"
            );
        }
    }

    #[test]
    fn graph_routes_match_plain_routes() {
        let m = small_model(42);
        let x = [0.25, -0.5, 0.75];
        let u = [0.6, -1.2];
        let mut g = Graph::new();
        let leaves = m.leaves(&mut g);
        let xn = g.leaf(Tensor::matrix(1, 3, x.to_vec()).unwrap());
        let un = g.leaf(Tensor::matrix(1, 2, u.to_vec()).unwrap());
        let (fn_, hn) = m.f_and_h_graph(&mut g, &leaves, xn, un).unwrap();
        let f_plain = m.f_theta(&x, &u).unwrap();
        let h_plain = m.h_theta(&x).unwrap();
        for (a, b) in g.value(fn_).data().iter().zip(&f_plain) {
            assert!((a - b).abs() <= 1e-12);
        }
        for (a, b) in g.value(hn).data().iter().zip(&h_plain) {
            assert!((a - b).abs() <= 1e-12);
        }
        let ham = m.hamiltonian_graph(&mut g, &leaves, xn).unwrap();
        assert!((g.value(ham).item() - m.hamiltonian(&x).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn f_theta_gradients_match_fd() {
        let m = small_model(31);
        let x = [0.2, 0.4, -0.6];
        let u = [0.9, -0.3];
        let proj = [0.5, -1.0, 0.25];

        // ∂(projᵀ f)/∂x via the graph, against finite differences in x
        let scalar_at = |xv: &[f64]| -> crate::error::Result<f64> {
            let f = m.f_theta(xv, &u)?;
            Ok(matops::dot(&f, &proj))
        };
        let want_x = finite_difference_gradient(|p| scalar_at(p), &x, 1e-5).unwrap();

        let mut g = Graph::new();
        let leaves = m.leaves(&mut g);
        let xn = g.param(Tensor::matrix(1, 3, x.to_vec()).unwrap());
        let un = g.leaf(Tensor::matrix(1, 2, u.to_vec()).unwrap());
        let f = m.f_theta_graph(&mut g, &leaves, xn, un).unwrap();
        let pn = g.leaf(Tensor::matrix(3, 1, proj.to_vec()).unwrap());
        let s = g.matmul(f, pn).unwrap();
        let loss = g.sum(s);
        let grads = g.backward(loss).unwrap();
        let got_x = grads.for_leaf(&g, xn);
        let err = max_rel_err(got_x.data(), &want_x);
        assert!(err <= 1e-4, "df/dx rel err {err}");

        // ∂(projᵀ f)/∂θ for every model parameter
        let flat = crate::training::flatten_model_params(&m);
        let rebuild = |p: &[f64]| {
            let mut m2 = m.clone();
            crate::training::load_model_params(&mut m2, p);
            m2
        };
        let want_th = finite_difference_gradient(
            |p| {
                let m2 = rebuild(p);
                let f = m2.f_theta(&x, &u)?;
                Ok(matops::dot(&f, &proj))
            },
            &flat,
            1e-4,
        )
        .unwrap();
        let mut got_th = Vec::new();
        for mlp_leaves in [&leaves.h, &leaves.a, &leaves.b, &leaves.g] {
            for l in 0..mlp_leaves.w.len() {
                got_th.extend_from_slice(grads.for_leaf(&g, mlp_leaves.w[l]).data());
                got_th.extend_from_slice(grads.for_leaf(&g, mlp_leaves.b[l]).data());
            }
        }
        let err = max_rel_err(&got_th, &want_th);
        assert!(err <= 1e-4, "df/dθ rel err {err}");
    }
}
