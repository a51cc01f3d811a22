use crate::error::{check_dim, Result};

use super::bundle::ExportBundle;

/// Reference interpreter for a validated bundle.
///
/// Accumulates in `f64` over the `f32` payload. All buffers are sized at
/// construction or supplied by the caller, so calls do not allocate.
#[derive(Clone, Debug)]
pub struct Interpreter {
    bundle: ExportBundle,
    offsets: Vec<usize>,
}

/// Per-caller scratch space; one per thread.
#[derive(Clone, Debug)]
pub struct Workspace {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl Interpreter {
    pub fn new(bundle: ExportBundle) -> Result<Self> {
        bundle.validate()?;
        let mut offsets = Vec::with_capacity(bundle.layers.len());
        let mut off = 0;
        for l in &bundle.layers {
            offsets.push(off);
            off += l.param_count();
        }
        Ok(Interpreter { bundle, offsets })
    }

    pub fn bundle(&self) -> &ExportBundle {
        &self.bundle
    }

    pub fn workspace(&self) -> Workspace {
        let w = self.bundle.max_width();
        Workspace {
            a: vec![0.0; w],
            b: vec![0.0; w],
        }
    }

    /// One forward pass from a raw observation to a physical-unit action.
    pub fn run(&self, obs: &[f64], ws: &mut Workspace, out: &mut [f64]) -> Result<()> {
        let b = &self.bundle;
        check_dim("interpreter input", b.input_dim, obs.len())?;
        check_dim("interpreter output", b.output_dim, out.len())?;
        for i in 0..b.input_dim {
            ws.a[i] = (obs[i] - b.obs_mean[i] as f64) / b.obs_std[i] as f64;
        }
        for (l, &off) in b.layers.iter().zip(&self.offsets) {
            let w = &b.weights[off..off + l.in_dim * l.out_dim];
            let bias = &b.weights[off + l.in_dim * l.out_dim..off + l.param_count()];
            for o in 0..l.out_dim {
                let mut acc = bias[o] as f64;
                for i in 0..l.in_dim {
                    acc += ws.a[i] * w[i * l.out_dim + o] as f64;
                }
                ws.b[o] = match l.activation.as_str() {
                    "relu" => acc.max(0.0),
                    "tanh" => acc.tanh(),
                    _ => acc,
                };
            }
            std::mem::swap(&mut ws.a, &mut ws.b);
        }
        for k in 0..b.output_dim {
            let lo = b.action_low[k] as f64;
            let hi = b.action_high[k] as f64;
            let half = 0.5 * (hi - lo);
            out[k] = (lo + half + half * ws.a[k].tanh()).clamp(lo, hi);
        }
        Ok(())
    }

    /// Allocating convenience wrapper around [`run`](Self::run).
    pub fn interpret(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let mut ws = self.workspace();
        let mut out = vec![0.0; self.bundle.output_dim];
        self.run(obs, &mut ws, &mut out)?;
        Ok(out)
    }
}
