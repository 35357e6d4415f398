//! Explicit single-step integration under zero-order-hold inputs.
//!
//! One scheme container covers forward Euler and the classic fourth-order
//! Runge–Kutta method; the same stage recursion runs either on plain `f64`
//! vectors (truth simulation, evaluation) or on the autodiff graph
//! (training). An empirical convergence-order estimator backs the
//! integration-accuracy claims with measurements instead of proofs.

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::phcore::PhModel;
use crate::signal::Channels;

/// Explicit Runge–Kutta scheme: lower-triangular stage coefficients
/// `a[i][j]`, time nodes `c`, and weights `b` with `Σb = 1` (the absolute
/// weights are `b·Ts`).
#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorScheme {
    name: &'static str,
    order: usize,
    c: Vec<f64>,
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl IntegratorScheme {
    /// Forward Euler (order 1).
    pub fn euler() -> Self {
        Self {
            name: "euler",
            order: 1,
            c: vec![0.0],
            a: vec![vec![]],
            b: vec![1.0],
        }
    }

    /// Classic fourth-order Runge–Kutta.
    pub fn rk4() -> Self {
        Self {
            name: "rk4",
            order: 4,
            c: vec![0.0, 0.5, 0.5, 1.0],
            a: vec![vec![], vec![0.5], vec![0.0, 0.5], vec![0.0, 0.0, 1.0]],
            b: vec![1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0],
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "euler" => Ok(Self::euler()),
            "rk4" => Ok(Self::rk4()),
            other => Err(Error::invalid(format!(
                "unknown integrator scheme '{other}' (expected euler or rk4)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    /// Classical order of the scheme.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }

    /// Absolute stage weights `b·Ts`; they sum to `Ts`.
    pub fn weights(&self, ts: f64) -> Vec<f64> {
        self.b.iter().map(|w| w * ts).collect()
    }

    /// Normalized time nodes of the stages.
    pub fn nodes(&self) -> &[f64] {
        &self.c
    }
}

/// One integration step of `ẋ = f(x, u)` with `u` held constant (ZOH).
pub fn step(
    scheme: &IntegratorScheme,
    f: impl Fn(&[f64], &[f64]) -> Vec<f64>,
    ts: f64,
    x: &[f64],
    u: &[f64],
) -> Result<Vec<f64>> {
    if ts <= 0.0 {
        return Err(Error::invalid(format!("step size {ts} must be > 0")));
    }
    let s = scheme.stages();
    let mut ks: Vec<Vec<f64>> = Vec::with_capacity(s);
    for i in 0..s {
        let mut xi = x.to_vec();
        for (j, &aij) in scheme.a[i].iter().enumerate() {
            if aij != 0.0 {
                crate::autodiff::matops::axpy(ts * aij, &ks[j], &mut xi);
            }
        }
        let ki = f(&xi, u);
        if !ki.iter().all(|v| v.is_finite()) {
            return Err(Error::non_finite(format!(
                "integration step, stage {} of {}",
                i + 1,
                scheme.name
            )));
        }
        ks.push(ki);
    }
    let mut out = x.to_vec();
    for (i, &bi) in scheme.b.iter().enumerate() {
        crate::autodiff::matops::axpy(ts * bi, &ks[i], &mut out);
    }
    Ok(out)
}

/// Integrates one sampling period with `substeps` internal steps of the
/// given scheme; the truth/reference integration path.
pub fn substep_integrate(
    scheme: &IntegratorScheme,
    f: impl Fn(&[f64], &[f64]) -> Vec<f64>,
    ts: f64,
    substeps: usize,
    x: &[f64],
    u: &[f64],
) -> Result<Vec<f64>> {
    let h = ts / substeps as f64;
    let mut state = x.to_vec();
    for _ in 0..substeps {
        state = step(scheme, &f, h, &state, u)?;
    }
    Ok(state)
}

/// Rolls the state forward over an input sequence; returns `K+1` states
/// including the initial one.
pub fn rollout_states(
    scheme: &IntegratorScheme,
    f: impl Fn(&[f64], &[f64]) -> Vec<f64>,
    ts: f64,
    x0: &[f64],
    u_seq: &Channels,
) -> Result<Vec<Vec<f64>>> {
    if u_seq.is_empty() {
        return Err(Error::invalid("rollout: input sequence is empty"));
    }
    let mut states = Vec::with_capacity(u_seq.len() + 1);
    states.push(x0.to_vec());
    for k in 0..u_seq.len() {
        let next = step(scheme, &f, ts, states.last().unwrap(), u_seq.row(k)).map_err(|e| {
            Error::invalid(format!("rollout failed at step {k}: {e}"))
        })?;
        states.push(next);
    }
    Ok(states)
}

/// Simulated outputs of a model: `ŷ_k = h(x_k)` at the pre-update state,
/// one output per input sample.
pub fn rollout_outputs(
    scheme: &IntegratorScheme,
    model: &PhModel,
    ts: f64,
    x0: &[f64],
    u_seq: &Channels,
) -> Result<Channels> {
    rollout_outputs_with(
        scheme,
        ts,
        x0,
        u_seq,
        |x, u| model.f_theta(x, u).expect("validated dims"),
        |x| model.h_theta(x).expect("validated dims"),
    )
}

/// Generic output rollout over arbitrary dynamics and output maps. States
/// advance one step per input sample; outputs are read before each update.
pub fn rollout_outputs_with(
    scheme: &IntegratorScheme,
    ts: f64,
    x0: &[f64],
    u_seq: &Channels,
    f: impl Fn(&[f64], &[f64]) -> Vec<f64>,
    h: impl Fn(&[f64]) -> Vec<f64>,
) -> Result<Channels> {
    if u_seq.is_empty() {
        return Err(Error::invalid("rollout: input sequence is empty"));
    }
    let n_y = h(x0).len();
    let mut out = Channels::with_capacity(n_y, u_seq.len());
    let mut x = x0.to_vec();
    for k in 0..u_seq.len() {
        let y = h(&x);
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::non_finite(format!("rollout output at step {k}")));
        }
        out.push_row(&y);
        if k + 1 < u_seq.len() {
            x = step(scheme, &f, ts, &x, u_seq.row(k))
                .map_err(|e| Error::invalid(format!("rollout failed at step {k}: {e}")))?;
        }
    }
    Ok(out)
}

/// One scheme step on the autodiff graph. `x:[B×n_x]`, `u:[B×n_u]`;
/// `k1` may carry a stage-1 derivative that was already built (shared with
/// the output map). `f_builder` appends `f(x, u)` for arbitrary state nodes.
pub fn step_graph(
    g: &mut Graph,
    scheme: &IntegratorScheme,
    ts: f64,
    x: NodeId,
    u: NodeId,
    k1: Option<NodeId>,
    mut f_builder: impl FnMut(&mut Graph, NodeId, NodeId) -> Result<NodeId>,
) -> Result<NodeId> {
    let s = scheme.stages();
    let mut ks: Vec<NodeId> = Vec::with_capacity(s);
    for i in 0..s {
        if i == 0 {
            ks.push(match k1 {
                Some(node) => node,
                None => f_builder(g, x, u)?,
            });
            continue;
        }
        let mut xi = x;
        for (j, &aij) in scheme.a[i].iter().enumerate() {
            if aij != 0.0 {
                let scaled = g.scalar_mul(ks[j], ts * aij);
                xi = g.add(xi, scaled)?;
            }
        }
        ks.push(f_builder(g, xi, u)?);
    }
    let mut out = x;
    for (i, &bi) in scheme.b.iter().enumerate() {
        let scaled = g.scalar_mul(ks[i], ts * bi);
        out = g.add(out, scaled)?;
    }
    Ok(out)
}

/// Result of [`empirical_order`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OrderEstimate {
    /// All one-step errors vanished (e.g. `f ≡ 0`); no slope to fit.
    Exact,
    /// Least-squares slope of `log(error)` against `log(Ts)`; estimates the
    /// local order (classical order + 1).
    Slope(f64),
}

impl OrderEstimate {
    pub fn slope(&self) -> Option<f64> {
        match self {
            OrderEstimate::Exact => None,
            OrderEstimate::Slope(s) => Some(*s),
        }
    }
}

/// Estimates the local convergence order of a scheme by fitting the decay
/// of the one-step error against a finely substepped reference solution
/// (RK4 at `Ts/100` internal steps).
pub fn empirical_order(
    scheme: &IntegratorScheme,
    f: impl Fn(&[f64], &[f64]) -> Vec<f64>,
    ts_list: &[f64],
    x0: &[f64],
    u: &[f64],
) -> Result<OrderEstimate> {
    if ts_list.len() < 3 {
        return Err(Error::invalid("empirical_order: need at least 3 step sizes"));
    }
    for pair in ts_list.windows(2) {
        if pair[0] <= 0.0 || (pair[1] / pair[0] - 0.5).abs() > 1e-9 {
            return Err(Error::invalid(
                "empirical_order: step sizes must be positive and halve each time",
            ));
        }
    }
    let reference = IntegratorScheme::rk4();
    let scale = 1.0 + x0.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut points = Vec::with_capacity(ts_list.len());
    let mut all_tiny = true;
    for &ts in ts_list {
        let got = step(scheme, &f, ts, x0, u)?;
        let want = substep_integrate(&reference, &f, ts, 100, x0, u)?;
        let err = got
            .iter()
            .zip(&want)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if err > 1e-14 * scale {
            all_tiny = false;
        }
        points.push((ts.ln(), err));
    }
    if all_tiny {
        return Ok(OrderEstimate::Exact);
    }
    // least-squares slope of ln(err) vs ln(ts)
    let logs: Vec<(f64, f64)> = points
        .iter()
        .map(|&(lt, err)| (lt, err.max(1e-300).ln()))
        .collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Ok(OrderEstimate::Slope(sxy / sxx))
}
