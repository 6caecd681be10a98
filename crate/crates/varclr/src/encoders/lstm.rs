//! Bidirectional LSTM over embedded subword sequences, with exact
//! analytic gradients.
//!
//! Per timestep, with gates stacked in i, f, g, o order:
//!
//! ```text
//! z = W_in x_t + W_rec h_{t-1} + b
//! i = σ(z₀..h)   f = σ(z_h..2h)   g = tanh(z_2h..3h)   o = σ(z_3h..4h)
//! c_t = f ⊙ c_{t-1} + i ⊙ g
//! h_t = o ⊙ tanh(c_t)
//! ```
//!
//! The per-step forward and backward hidden states are concatenated,
//! mean-pooled over the true sequence length, and linearly projected to the
//! output dimension.

use rand::Rng;

use super::linalg::{matvec, matvec_transpose_acc, outer_acc, sigmoid};

/// Weights for one scan direction.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmDirection {
    pub(crate) w_in: Vec<f64>,  // 4h × d
    pub(crate) w_rec: Vec<f64>, // 4h × h
    pub(crate) bias: Vec<f64>,  // 4h
}

impl LstmDirection {
    fn random<R: Rng>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut sample = |n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.random_range(-bound..bound)).collect()
        };
        let w_in = sample(4 * hidden * input_dim);
        let w_rec = sample(4 * hidden * hidden);
        let mut bias = vec![0.0; 4 * hidden];
        // Forget gate opens at init so early gradients flow through time.
        bias[hidden..2 * hidden].fill(1.0);
        LstmDirection { w_in, w_rec, bias }
    }

    fn zeros(input_dim: usize, hidden: usize) -> Self {
        LstmDirection {
            w_in: vec![0.0; 4 * hidden * input_dim],
            w_rec: vec![0.0; 4 * hidden * hidden],
            bias: vec![0.0; 4 * hidden],
        }
    }
}

/// All trainable weights of the bidirectional encoder, excluding the
/// embedding table.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub(crate) input_dim: usize,
    pub(crate) hidden: usize,
    pub(crate) out_dim: usize,
    pub(crate) fwd: LstmDirection,
    pub(crate) bwd: LstmDirection,
    pub(crate) proj: Vec<f64>, // out_dim × 2h
}

impl LstmParams {
    pub fn random<R: Rng>(input_dim: usize, hidden: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let fwd = LstmDirection::random(input_dim, hidden, rng);
        let bwd = LstmDirection::random(input_dim, hidden, rng);
        let proj = (0..out_dim * 2 * hidden)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        LstmParams {
            input_dim,
            hidden,
            out_dim,
            fwd,
            bwd,
            proj,
        }
    }

    pub fn zeros(input_dim: usize, hidden: usize, out_dim: usize) -> Self {
        LstmParams {
            input_dim,
            hidden,
            out_dim,
            fwd: LstmDirection::zeros(input_dim, hidden),
            bwd: LstmDirection::zeros(input_dim, hidden),
            proj: vec![0.0; out_dim * 2 * hidden],
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }
}

/// Recorded activations for one timestep, kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct StepState {
    pub(crate) i: Vec<f64>,
    pub(crate) f: Vec<f64>,
    pub(crate) g: Vec<f64>,
    pub(crate) o: Vec<f64>,
    pub(crate) c: Vec<f64>,
    pub(crate) tanh_c: Vec<f64>,
    pub(crate) h: Vec<f64>,
}

/// Run one direction over `xs` (already in processing order), recording
/// every step.
pub(crate) fn run_direction(dir: &LstmDirection, hidden: usize, xs: &[&[f64]]) -> Vec<StepState> {
    let mut steps: Vec<StepState> = Vec::with_capacity(xs.len());
    let zero = vec![0.0; hidden];
    for (t, x) in xs.iter().enumerate() {
        let h_prev = if t == 0 { &zero } else { &steps[t - 1].h };
        let c_prev = if t == 0 { &zero } else { &steps[t - 1].c };

        let mut z = matvec(&dir.w_in, 4 * hidden, x.len(), x);
        let rec = matvec(&dir.w_rec, 4 * hidden, hidden, h_prev);
        for (zv, rv) in z.iter_mut().zip(&rec) {
            *zv += rv;
        }
        for (zv, bv) in z.iter_mut().zip(&dir.bias) {
            *zv += bv;
        }

        let mut i = vec![0.0; hidden];
        let mut f = vec![0.0; hidden];
        let mut g = vec![0.0; hidden];
        let mut o = vec![0.0; hidden];
        for k in 0..hidden {
            i[k] = sigmoid(z[k]);
            f[k] = sigmoid(z[hidden + k]);
            g[k] = z[2 * hidden + k].tanh();
            o[k] = sigmoid(z[3 * hidden + k]);
        }
        let mut c = vec![0.0; hidden];
        let mut tanh_c = vec![0.0; hidden];
        let mut h = vec![0.0; hidden];
        for k in 0..hidden {
            c[k] = f[k] * c_prev[k] + i[k] * g[k];
            tanh_c[k] = c[k].tanh();
            h[k] = o[k] * tanh_c[k];
        }
        steps.push(StepState {
            i,
            f,
            g,
            o,
            c,
            tanh_c,
            h,
        });
    }
    steps
}

/// Gradient buffers matching [`LstmDirection`].
#[derive(Debug, Clone)]
pub(crate) struct DirectionGrads {
    pub(crate) w_in: Vec<f64>,
    pub(crate) w_rec: Vec<f64>,
    pub(crate) bias: Vec<f64>,
}

impl DirectionGrads {
    pub(crate) fn zeros(input_dim: usize, hidden: usize) -> Self {
        DirectionGrads {
            w_in: vec![0.0; 4 * hidden * input_dim],
            w_rec: vec![0.0; 4 * hidden * hidden],
            bias: vec![0.0; 4 * hidden],
        }
    }
}

/// Backpropagate one direction. `dh_list` carries the upstream gradient on
/// each step's hidden state (processing order); `dx_list` receives the
/// gradient on each step's input vector.
pub(crate) fn backprop_direction(
    dir: &LstmDirection,
    hidden: usize,
    xs: &[&[f64]],
    steps: &[StepState],
    dh_list: &[Vec<f64>],
    grads: &mut DirectionGrads,
    dx_list: &mut [Vec<f64>],
) {
    let n = xs.len();
    let zero = vec![0.0; hidden];
    let mut dh_carry = vec![0.0; hidden];
    let mut dc_carry = vec![0.0; hidden];

    for t in (0..n).rev() {
        let step = &steps[t];
        let h_prev = if t == 0 { &zero } else { &steps[t - 1].h };
        let c_prev = if t == 0 { &zero } else { &steps[t - 1].c };

        let mut dz = vec![0.0; 4 * hidden];
        for k in 0..hidden {
            let dh = dh_list[t][k] + dh_carry[k];
            let d_o = dh * step.tanh_c[k];
            let dc = dc_carry[k] + dh * step.o[k] * (1.0 - step.tanh_c[k] * step.tanh_c[k]);
            let di = dc * step.g[k];
            let dg = dc * step.i[k];
            let df = dc * c_prev[k];
            dc_carry[k] = dc * step.f[k];

            dz[k] = di * step.i[k] * (1.0 - step.i[k]);
            dz[hidden + k] = df * step.f[k] * (1.0 - step.f[k]);
            dz[2 * hidden + k] = dg * (1.0 - step.g[k] * step.g[k]);
            dz[3 * hidden + k] = d_o * step.o[k] * (1.0 - step.o[k]);
        }

        outer_acc(&mut grads.w_in, &dz, xs[t]);
        outer_acc(&mut grads.w_rec, &dz, h_prev);
        for (b, d) in grads.bias.iter_mut().zip(&dz) {
            *b += d;
        }
        matvec_transpose_acc(&dir.w_in, 4 * hidden, xs[t].len(), &dz, &mut dx_list[t]);
        dh_carry.fill(0.0);
        matvec_transpose_acc(&dir.w_rec, 4 * hidden, hidden, &dz, &mut dh_carry);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_keep_state_at_zero() {
        let dir = LstmDirection::zeros(3, 2);
        let x1 = [0.4, -0.2, 0.9];
        let x2 = [1.0, 1.0, 1.0];
        let xs: Vec<&[f64]> = vec![&x1, &x2];
        let steps = run_direction(&dir, 2, &xs);
        for step in steps {
            assert_eq!(step.h, vec![0.0, 0.0]);
            assert_eq!(step.c, vec![0.0, 0.0]);
            // Gates sit at sigmoid(0) = 0.5 and the cell candidate at 0.
            assert_eq!(step.i, vec![0.5, 0.5]);
            assert_eq!(step.g, vec![0.0, 0.0]);
        }
    }

    /// Scalar gate-by-gate oracle, written with plain loops and no shared
    /// helpers, for a single step at d = 2, h = 2.
    #[test]
    fn single_step_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let dir = LstmDirection::random(2, 2, &mut rng);
        let x = [0.3, -0.7];
        let xs: Vec<&[f64]> = vec![&x];
        let steps = run_direction(&dir, 2, &xs);

        for k in 0..2 {
            let zi = dir.w_in[k * 2] * x[0] + dir.w_in[k * 2 + 1] * x[1] + dir.bias[k];
            let zf = dir.w_in[(2 + k) * 2] * x[0] + dir.w_in[(2 + k) * 2 + 1] * x[1] + dir.bias[2 + k];
            let zg = dir.w_in[(4 + k) * 2] * x[0] + dir.w_in[(4 + k) * 2 + 1] * x[1] + dir.bias[4 + k];
            let zo = dir.w_in[(6 + k) * 2] * x[0] + dir.w_in[(6 + k) * 2 + 1] * x[1] + dir.bias[6 + k];
            let i = 1.0 / (1.0 + (-zi).exp());
            let f = 1.0 / (1.0 + (-zf).exp());
            let g = zg.tanh();
            let o = 1.0 / (1.0 + (-zo).exp());
            let c = i * g; // c_prev = 0, so f contributes nothing
            let h = o * c.tanh();
            let _ = f;
            assert!((steps[0].h[k] - h).abs() < 1e-12, "h[{k}]");
            assert!((steps[0].c[k] - c).abs() < 1e-12, "c[{k}]");
        }
    }
}
