//! Initial-state encoder: an MLP from a window of past inputs and outputs
//! to the estimated state at the window's end.
//!
//! Window convention (0-based sample indices, start index τ):
//! inputs cover `τ−n_b … τ−1`, outputs cover `τ−n_a+1 … τ` — the output
//! window includes the current sample, the input window excludes it. The
//! earliest valid start is `τ = max(n_a, n_b)`.

use crate::autodiff::{Graph, NodeId};
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::nn::{FinalAct, Mlp, MlpLeaves, MlpSpec};

/// Encoder architecture: window lengths, state dimension and net widths.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderSpec {
    /// Output-window length, counting the current sample.
    pub n_a: usize,
    /// Input-window length.
    pub n_b: usize,
    pub n_x: usize,
    pub n_u: usize,
    pub n_y: usize,
    pub hidden: Vec<usize>,
}

impl EncoderSpec {
    pub fn new(n_a: usize, n_b: usize, n_x: usize, n_u: usize, n_y: usize, hidden: Vec<usize>) -> Result<Self> {
        if n_a == 0 || n_b == 0 {
            return Err(Error::invalid("encoder lags must be >= 1"));
        }
        if n_x == 0 || n_u == 0 || n_y == 0 {
            return Err(Error::invalid("encoder dimensions must be >= 1"));
        }
        Ok(Self {
            n_a,
            n_b,
            n_x,
            n_u,
            n_y,
            hidden,
        })
    }

    /// Width of the flattened window fed to the net.
    pub fn input_width(&self) -> usize {
        self.n_a * self.n_y + self.n_b * self.n_u
    }

    /// Longest lag; subsection starts must be at least this.
    pub fn max_lag(&self) -> usize {
        self.n_a.max(self.n_b)
    }
}

/// The encoder network with its window specification.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub spec: EncoderSpec,
    pub net: Mlp,
}

impl Encoder {
    pub fn init(spec: EncoderSpec, seed: u64) -> Self {
        let net = Mlp::init(
            MlpSpec::new(spec.input_width(), spec.hidden.clone(), spec.n_x, FinalAct::Linear)
                .unwrap(),
            seed,
        );
        Self { spec, net }
    }

    pub fn from_net(spec: EncoderSpec, net: Mlp) -> Result<Self> {
        if net.spec.input_dim != spec.input_width() || net.spec.output_dim != spec.n_x {
            return Err(Error::invalid(format!(
                "encoder net {}→{} does not match window width {} and n_x {}",
                net.spec.input_dim,
                net.spec.output_dim,
                spec.input_width(),
                spec.n_x
            )));
        }
        Ok(Self { spec, net })
    }

    pub fn n_params(&self) -> usize {
        self.net.n_params()
    }

    pub fn leaves(&self, g: &mut Graph) -> MlpLeaves {
        self.net.leaves(g)
    }

    /// Estimated state from flattened windows (inputs chronologically,
    /// then outputs chronologically).
    pub fn encode(&self, u_past: &[f64], y_past: &[f64]) -> Result<Vec<f64>> {
        if u_past.len() != self.spec.n_b * self.spec.n_u {
            return Err(Error::invalid(format!(
                "encoder input window has {} values, expected n_b·n_u = {}",
                u_past.len(),
                self.spec.n_b * self.spec.n_u
            )));
        }
        if y_past.len() != self.spec.n_a * self.spec.n_y {
            return Err(Error::invalid(format!(
                "encoder output window has {} values, expected n_a·n_y = {}",
                y_past.len(),
                self.spec.n_a * self.spec.n_y
            )));
        }
        let mut joined = Vec::with_capacity(self.spec.input_width());
        joined.extend_from_slice(u_past);
        joined.extend_from_slice(y_past);
        Ok(self.net.forward_plain(&joined))
    }

    /// Graph-side encoding of a batch of pre-gathered windows
    /// (`[B × input_width]`, layout as in [`Encoder::encode`]).
    pub fn encode_graph(&self, g: &mut Graph, leaves: &MlpLeaves, windows: NodeId) -> Result<NodeId> {
        self.net.forward_graph(g, leaves, windows)
    }
}

/// Extracts the encoder windows for a subsection starting at sample `tau`
/// (0-based). Returns flattened `(u_past, y_past)`, both chronological.
pub fn window_slice(ds: &Dataset, tau: usize, spec: &EncoderSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    let lag = spec.max_lag();
    if tau < lag || tau >= ds.len() {
        return Err(Error::invalid(format!(
            "window start {tau} outside the valid range [{lag}, {}]",
            ds.len().saturating_sub(1)
        )));
    }
    let mut u_past = Vec::with_capacity(spec.n_b * spec.n_u);
    for k in tau - spec.n_b..tau {
        u_past.extend_from_slice(ds.u.row(k));
    }
    let mut y_past = Vec::with_capacity(spec.n_a * spec.n_y);
    for k in tau + 1 - spec.n_a..=tau {
        y_past.extend_from_slice(ds.y.row(k));
    }
    Ok((u_past, y_past))
}
