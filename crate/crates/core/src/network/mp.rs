//! Manifold projection gate: for each plane β the in-plane coordinates
//! S_β(p) are scaled by a learned scalar LeakyReLU(Q(x, y, z, onehot(β))).

use ndarray::{s, Array2};
use rand_chacha::ChaCha8Rng;

use super::layers::{leaky_relu, leaky_relu_backward, Linear, LEAKY_SLOPE};
use super::Param;
use crate::error::{Error, Result};
use crate::projection::{axis_planes, project_point};

/// Hidden width of the gate perceptron.
pub const GATE_HIDDEN: usize = 16;

/// Gated projections onto a subset of the coordinate planes (indices into
/// [`axis_planes`]).
#[derive(Debug, Clone)]
pub struct MpGate {
    pub planes: Vec<usize>,
    pub hidden: Linear,
    pub output: Linear,
    cache: Option<GateCache>,
}

#[derive(Debug, Clone)]
struct GateCache {
    inputs: Array2<f64>,
    hidden_pre: Array2<f64>,
    hidden_act: Array2<f64>,
    gate_pre: Array2<f64>,
    uv: Array2<f64>,
}

impl MpGate {
    pub fn new(planes: Vec<usize>, hidden: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if planes.is_empty() || planes.iter().any(|&p| p > 2) {
            return Err(Error::InvalidInput(format!(
                "invalid projection planes {planes:?}"
            )));
        }
        Ok(MpGate {
            planes,
            hidden: Linear::new(6, hidden, true, rng),
            output: Linear::new(hidden, 1, true, rng),
            cache: None,
        })
    }

    /// Number of output channels (two per plane).
    pub fn width(&self) -> usize {
        2 * self.planes.len()
    }

    /// Maps n×3 points to n×(2·planes) gated in-plane coordinates.
    pub fn forward(&mut self, points: &Array2<f64>) -> Result<Array2<f64>> {
        if points.ncols() != 3 {
            return Err(Error::contract(
                "mp_gate",
                format!("expected 3 coordinates, got {}", points.ncols()),
            ));
        }
        let n = points.nrows();
        let p = self.planes.len();
        let all = axis_planes();

        // plane-major stacking: rows [k*n, (k+1)*n) belong to plane k
        let mut inputs = Array2::zeros((p * n, 6));
        let mut uv = Array2::zeros((n, 2 * p));
        for (k, &plane) in self.planes.iter().enumerate() {
            for i in 0..n {
                let pt = [points[[i, 0]], points[[i, 1]], points[[i, 2]]];
                let row = k * n + i;
                inputs.slice_mut(s![row, 0..3]).assign(&points.row(i));
                inputs[[row, 3 + plane]] = 1.0;
                let r = project_point(&all[plane], pt);
                uv[[i, 2 * k]] = r.uv[0];
                uv[[i, 2 * k + 1]] = r.uv[1];
            }
        }
        let hidden_pre = self.hidden.forward(&inputs)?;
        let hidden_act = leaky_relu(&hidden_pre, LEAKY_SLOPE);
        let gate_pre = self.output.forward(&hidden_act)?;
        let gate = leaky_relu(&gate_pre, LEAKY_SLOPE);

        let mut out = uv.clone();
        for k in 0..p {
            for i in 0..n {
                let g = gate[[k * n + i, 0]];
                out[[i, 2 * k]] *= g;
                out[[i, 2 * k + 1]] *= g;
            }
        }
        self.cache = Some(GateCache {
            inputs,
            hidden_pre,
            hidden_act,
            gate_pre,
            uv,
        });
        Ok(out)
    }

    /// Accumulates gate-perceptron gradients. Points are data, so no input
    /// gradient is returned.
    pub fn backward(&mut self, grad_out: &Array2<f64>) -> Result<()> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::InvalidState("mp_gate backward without forward".into()))?;
        let n = cache.uv.nrows();
        let p = self.planes.len();
        let mut d_gate = Array2::zeros((p * n, 1));
        for k in 0..p {
            for i in 0..n {
                d_gate[[k * n + i, 0]] = grad_out[[i, 2 * k]] * cache.uv[[i, 2 * k]]
                    + grad_out[[i, 2 * k + 1]] * cache.uv[[i, 2 * k + 1]];
            }
        }
        let d_gate_pre = leaky_relu_backward(&cache.gate_pre, &d_gate, LEAKY_SLOPE);
        let d_hidden_act = self.output.backward(&cache.hidden_act, &d_gate_pre);
        let d_hidden_pre = leaky_relu_backward(&cache.hidden_pre, &d_hidden_act, LEAKY_SLOPE);
        self.hidden.backward(&cache.inputs, &d_hidden_pre);
        self.cache = Some(cache);
        Ok(())
    }

    /// Sign pattern of the pre-activations from the last forward pass.
    pub fn last_preactivations(&self) -> Option<(&Array2<f64>, &Array2<f64>)> {
        self.cache.as_ref().map(|c| (&c.hidden_pre, &c.gate_pre))
    }

    pub fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.hidden.visit(&format!("{prefix}.hidden"), f);
        self.output.visit(&format!("{prefix}.output"), f);
    }
}
