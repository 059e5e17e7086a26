//! Flat-parameter networks with hand-written reverse-mode gradients: an
//! affine layer and a single-layer LSTM followed by an affine head.

use rand::Rng;
use serde::{Deserialize, Serialize};

fn sigmoid(x: f64) -> f64 {
    crate::util::sigmoid(x)
}

/// `y = W x + b` with `W` row-major `out × inp`, parameters `[W, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearShape {
    pub input: usize,
    pub output: usize,
}

impl LinearShape {
    pub fn len(&self) -> usize {
        self.output * (self.input + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn forward(&self, params: &[f64], x: &[f64], y: &mut [f64]) {
        let (w, b) = params.split_at(self.output * self.input);
        for (r, out) in y.iter_mut().enumerate() {
            let row = &w[r * self.input..(r + 1) * self.input];
            *out = b[r] + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>();
        }
    }

    /// Accumulates `∂L/∂params` into `grad` and `∂L/∂x` into `dx`.
    pub fn backward(&self, params: &[f64], x: &[f64], dy: &[f64], grad: &mut [f64], dx: Option<&mut [f64]>) {
        let n_w = self.output * self.input;
        let (gw, gb) = grad.split_at_mut(n_w);
        for (r, &d) in dy.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            gb[r] += d;
            let row = &mut gw[r * self.input..(r + 1) * self.input];
            for (g, v) in row.iter_mut().zip(x) {
                *g += d * v;
            }
        }
        if let Some(dx) = dx {
            let w = &params[..n_w];
            for (r, &d) in dy.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (o, a) in dx.iter_mut().zip(&w[r * self.input..(r + 1) * self.input]) {
                    *o += d * a;
                }
            }
        }
    }
}

/// Recurrent state `(h, c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl CellState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// LSTM cell (gates input, forget, candidate, output) plus an affine head
/// on the hidden state. Parameter layout: `W_x (4H × I)`, `W_h (4H × H)`,
/// `b (4H)`, `W_out (O × H)`, `b_out (O)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LstmShape {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

/// Forward activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmTrace {
    steps: Vec<StepCache>,
    pub outputs: Vec<Vec<f64>>,
    /// State after the last step.
    pub final_state: CellState,
}

#[derive(Debug, Clone)]
struct StepCache {
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Gate activations `[i, f, g, o]`, each `H` long.
    gates: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
    /// The incoming state was injected rather than carried from the
    /// previous step, so no gradient flows back past this step.
    injected: bool,
}

impl LstmShape {
    fn n_wx(&self) -> usize {
        4 * self.hidden * self.input
    }

    fn n_wh(&self) -> usize {
        4 * self.hidden * self.hidden
    }

    fn head(&self) -> LinearShape {
        LinearShape {
            input: self.hidden,
            output: self.output,
        }
    }

    fn head_offset(&self) -> usize {
        self.n_wx() + self.n_wh() + 4 * self.hidden
    }

    pub fn len(&self) -> usize {
        self.head_offset() + self.head().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Uniform `±1/sqrt(fan_in)` weights, forget-gate bias 1, head scaled by
    /// `head_scale`.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R, head_scale: f64) -> Vec<f64> {
        let mut p = vec![0.0; self.len()];
        let k_in = 1.0 / ((self.input + self.hidden) as f64).sqrt();
        for v in &mut p[..self.n_wx() + self.n_wh()] {
            *v = rng.random_range(-k_in..k_in);
        }
        let b0 = self.n_wx() + self.n_wh();
        for v in &mut p[b0 + self.hidden..b0 + 2 * self.hidden] {
            *v = 1.0;
        }
        let k_out = head_scale / (self.hidden as f64).sqrt();
        let h0 = self.head_offset();
        for v in &mut p[h0..h0 + self.output * self.hidden] {
            *v = rng.random_range(-k_out..k_out);
        }
        p
    }

    /// One step from `state`; returns the head output and the cache.
    fn step(&self, params: &[f64], x: &[f64], state: &CellState, injected: bool) -> (Vec<f64>, StepCache) {
        let hd = self.hidden;
        let wx = &params[..self.n_wx()];
        let wh = &params[self.n_wx()..self.n_wx() + self.n_wh()];
        let b = &params[self.n_wx() + self.n_wh()..self.head_offset()];
        let mut gates = vec![0.0; 4 * hd];
        for (r, z) in gates.iter_mut().enumerate() {
            let rx = &wx[r * self.input..(r + 1) * self.input];
            let rh = &wh[r * hd..(r + 1) * hd];
            *z = b[r]
                + rx.iter().zip(x).map(|(a, v)| a * v).sum::<f64>()
                + rh.iter().zip(&state.h).map(|(a, v)| a * v).sum::<f64>();
        }
        for (r, z) in gates.iter_mut().enumerate() {
            *z = if (2 * hd..3 * hd).contains(&r) { z.tanh() } else { sigmoid(*z) };
        }
        let mut c = vec![0.0; hd];
        let mut tanh_c = vec![0.0; hd];
        let mut h = vec![0.0; hd];
        for k in 0..hd {
            let (i, f, g, o) = (gates[k], gates[hd + k], gates[2 * hd + k], gates[3 * hd + k]);
            c[k] = f * state.c[k] + i * g;
            tanh_c[k] = c[k].tanh();
            h[k] = o * tanh_c[k];
        }
        let mut y = vec![0.0; self.output];
        self.head().forward(&params[self.head_offset()..], &h, &mut y);
        let cache = StepCache {
            h_prev: state.h.clone(),
            c_prev: state.c.clone(),
            gates,
            c,
            tanh_c,
            h,
            injected,
        };
        (y, cache)
    }

    /// Single step without a cache, for acting.
    pub fn step_forward(&self, params: &[f64], x: &[f64], state: &CellState) -> (Vec<f64>, CellState) {
        let (y, cache) = self.step(params, x, state, true);
        (y, CellState { h: cache.h, c: cache.c })
    }

    /// Runs a sequence. `inject[t] = Some(state)` replaces the carried state
    /// before step `t` (and cuts the gradient there); step 0 must inject.
    pub fn forward(&self, params: &[f64], xs: &[&[f64]], inject: &[Option<&CellState>]) -> LstmTrace {
        assert_eq!(xs.len(), inject.len(), "one injection slot per step");
        assert!(xs.is_empty() || inject[0].is_some(), "first step needs a state");
        let mut state = CellState::zeros(self.hidden);
        let mut steps = Vec::with_capacity(xs.len());
        let mut outputs = Vec::with_capacity(xs.len());
        for (x, inj) in xs.iter().zip(inject) {
            let injected = inj.is_some();
            if let Some(s) = inj {
                state = (*s).clone();
            }
            let (y, cache) = self.step(params, x, &state, injected);
            state = CellState {
                h: cache.h.clone(),
                c: cache.c.clone(),
            };
            steps.push(cache);
            outputs.push(y);
        }
        LstmTrace {
            steps,
            outputs,
            final_state: state,
        }
    }

    /// Backpropagation through time given `∂L/∂output` per step; returns
    /// `∂L/∂params` and `∂L/∂x` per step.
    pub fn backward(&self, params: &[f64], xs: &[&[f64]], trace: &LstmTrace, d_out: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let hd = self.hidden;
        let mut grad = vec![0.0; self.len()];
        let mut dxs = vec![vec![0.0; self.input]; xs.len()];
        let head = self.head();
        let ho = self.head_offset();
        let (n_wx, n_wh) = (self.n_wx(), self.n_wh());
        let wx = &params[..n_wx];
        let wh = &params[n_wx..n_wx + n_wh];
        let mut dh_next = vec![0.0; hd];
        let mut dc_next = vec![0.0; hd];
        let mut dz = vec![0.0; 4 * hd];
        for t in (0..trace.steps.len()).rev() {
            let s = &trace.steps[t];
            let mut dh = dh_next.clone();
            head.backward(&params[ho..], &s.h, &d_out[t], &mut grad[ho..], Some(&mut dh));
            let mut dc_prev = vec![0.0; hd];
            for k in 0..hd {
                let (i, f, g, o) = (s.gates[k], s.gates[hd + k], s.gates[2 * hd + k], s.gates[3 * hd + k]);
                let tc = s.tanh_c[k];
                let dc = dh[k] * o * (1.0 - tc * tc) + dc_next[k];
                dz[k] = dc * g * i * (1.0 - i);
                dz[hd + k] = dc * s.c_prev[k] * f * (1.0 - f);
                dz[2 * hd + k] = dc * i * (1.0 - g * g);
                dz[3 * hd + k] = dh[k] * tc * o * (1.0 - o);
                dc_prev[k] = dc * f;
            }
            let mut dh_prev = vec![0.0; hd];
            {
                let (gwx, rest) = grad.split_at_mut(n_wx);
                let (gwh, gb) = rest.split_at_mut(n_wh);
                for (r, &d) in dz.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    gb[r] += d;
                    let x = xs[t];
                    for (g, v) in gwx[r * self.input..(r + 1) * self.input].iter_mut().zip(x) {
                        *g += d * v;
                    }
                    for (g, v) in gwh[r * hd..(r + 1) * hd].iter_mut().zip(&s.h_prev) {
                        *g += d * v;
                    }
                    for (o, a) in dxs[t].iter_mut().zip(&wx[r * self.input..(r + 1) * self.input]) {
                        *o += d * a;
                    }
                    for (o, a) in dh_prev.iter_mut().zip(&wh[r * hd..(r + 1) * hd]) {
                        *o += d * a;
                    }
                }
            }
            if s.injected {
                dh_next.iter_mut().for_each(|v| *v = 0.0);
                dc_next.iter_mut().for_each(|v| *v = 0.0);
            } else {
                dh_next = dh_prev;
                dc_next = dc_prev;
            }
        }
        (grad, dxs)
    }
}
