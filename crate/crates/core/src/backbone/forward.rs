//! Masked forward pass and hand-derived backward pass.
//!
//! ```text
//! z_k = MLP_k(x)                      tanh hidden layers, linear scalar head
//! y   = W_out (drop(z) * g)           g = binary gates or sigmoid(logits)
//! ```
//!
//! Neurons whose gate is exactly zero are never evaluated: their output
//! cannot reach `y`, and their gradients are exactly zero. Work is spread
//! over neurons; every reduction runs in a fixed order.

use ndarray::{s, Array1, Array2, Array3, ArrayView2, Axis};

use super::bank::{BankTensors, NeuronBank};
use super::mask::Mask;
use crate::error::{FtnError, Result};
use crate::numcore::activation::tanh_in_place;
use crate::numcore::RngStream;
use crate::parallel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    /// Inverted dropout on the neuron outputs with drop probability `dropout`.
    Train {
        dropout: f64,
    },
    Eval,
}

/// Gate vector fed to the readout.
#[derive(Debug, Clone, PartialEq)]
pub enum Gates {
    /// Explicit gate values in `[0, 1]`; binary masks are the usual case.
    Fixed(Vec<f64>),
    /// Mask logits, gated through a sigmoid. Backward also returns the
    /// gradient w.r.t. these logits.
    Relaxed(Vec<f64>),
}

impl Gates {
    pub fn from_mask(mask: &Mask) -> Self {
        Gates::Fixed(mask.gate_values())
    }

    pub fn all_on(neurons: usize) -> Self {
        Gates::Fixed(vec![1.0; neurons])
    }

    pub fn len(&self) -> usize {
        match self {
            Gates::Fixed(v) | Gates::Relaxed(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            Gates::Fixed(v) => v.clone(),
            Gates::Relaxed(logits) => logits.iter().map(|&l| sigmoid(l)).collect(),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// How per-sample gradient contributions are combined over the batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    /// Ordinary gradient: sum of per-sample contributions.
    Sum,
    /// Sum of squared per-sample contributions (diagonal empirical Fisher).
    SumOfSquares,
}

/// Post-activation outputs of every hidden layer of one neuron, and its
/// scalar output.
#[derive(Debug, Clone)]
struct NeuronTrace {
    acts: Vec<Array2<f64>>,
    z: Array1<f64>,
}

/// Everything backward needs from a forward call.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    x: Array2<f64>,
    active: Vec<usize>,
    traces: Vec<NeuronTrace>,
    /// Dropout multipliers `[n_active, B]`; `None` in eval mode.
    drop_scale: Option<Array2<f64>>,
    /// Dropped outputs `[n_active, B]`.
    dropped: Array2<f64>,
    gate_values: Vec<f64>,
    logits: Option<Vec<f64>>,
}

impl ForwardCache {
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    /// Raw neuron outputs `z` for the active neurons, `[n_active, B]`.
    pub fn outputs(&self) -> Array2<f64> {
        let b = self.x.nrows();
        let mut out = Array2::zeros((self.active.len(), b));
        for (a, t) in self.traces.iter().enumerate() {
            out.row_mut(a).assign(&t.z);
        }
        out
    }

    pub fn dropped_outputs(&self) -> &Array2<f64> {
        &self.dropped
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: BankTensors,
    /// Present only for relaxed gates.
    pub mask_logits: Option<Vec<f64>>,
}

/// Per-neuron gradient pieces before they are scattered into full tensors.
struct NeuronGrads {
    w_in: Array2<f64>,
    b_in: Array1<f64>,
    w_hidden: Array3<f64>,
    b_hidden: Array2<f64>,
    w_head: Array1<f64>,
    b_head: f64,
    w_out: Array1<f64>,
    gate: f64,
}

fn combine(dpre: &Array2<f64>, input: &ArrayView2<f64>, red: Reduction) -> (Array2<f64>, Array1<f64>) {
    match red {
        Reduction::Sum => (dpre.t().dot(input), dpre.sum_axis(Axis(0))),
        Reduction::SumOfSquares => {
            let d2 = dpre.mapv(|v| v * v);
            let i2 = input.mapv(|v| v * v);
            (d2.t().dot(&i2), d2.sum_axis(Axis(0)))
        }
    }
}

impl NeuronBank {
    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.shape().d_in {
            return Err(FtnError::Config(format!(
                "input has {} features, model expects {}",
                x.ncols(),
                self.shape().d_in
            )));
        }
        if x.nrows() == 0 {
            return Err(FtnError::Data("empty input batch".into()));
        }
        Ok(())
    }

    fn trace_neuron(&self, k: usize, x: &ArrayView2<f64>) -> NeuronTrace {
        let p = self.params();
        let layers = self.shape().layers;
        let mut acts = Vec::with_capacity(layers);
        let mut h = x.dot(&p.w_in.index_axis(Axis(0), k).t());
        h += &p.b_in.row(k);
        tanh_in_place(h.as_slice_mut().expect("fresh array"));
        acts.push(h);
        for l in 0..layers - 1 {
            let prev = acts.last().expect("at least one layer");
            let mut h = prev.dot(&p.w_hidden.slice(s![k, l, .., ..]).t());
            h += &p.b_hidden.slice(s![k, l, ..]);
            tanh_in_place(h.as_slice_mut().expect("fresh array"));
            acts.push(h);
        }
        let last = acts.last().expect("at least one layer");
        let z = last.dot(&p.w_head.row(k)) + p.b_head[k];
        NeuronTrace { acts, z }
    }

    /// Outputs `z_k(x)` for the listed neurons, `[active.len(), B]`.
    pub fn neuron_outputs(&self, x: ArrayView2<f64>, active: &[usize]) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let zs = parallel::map_ordered(active, |&k| self.trace_neuron(k, &x).z);
        let mut out = Array2::zeros((active.len(), x.nrows()));
        for (a, z) in zs.into_iter().enumerate() {
            out.row_mut(a).assign(&z);
        }
        Ok(out)
    }

    /// `y[b, o] = sum_a W_out[o, active[a]] * outputs[a, b] * gates[active[a]]`,
    /// summed in ascending `a`.
    pub fn readout(&self, outputs: &Array2<f64>, active: &[usize], gates: &[f64]) -> Array2<f64> {
        let w_out = &self.params().w_out;
        let (d_out, b) = (w_out.nrows(), outputs.ncols());
        let mut y = Array2::zeros((b, d_out));
        for i in 0..b {
            for o in 0..d_out {
                let mut acc = 0.0;
                for (a, &k) in active.iter().enumerate() {
                    acc += w_out[[o, k]] * (outputs[[a, i]] * gates[k]);
                }
                y[[i, o]] = acc;
            }
        }
        y
    }

    /// Eval-mode prediction without a cache.
    pub fn predict(&self, x: ArrayView2<f64>, gates: &Gates) -> Result<Array2<f64>> {
        let g = self.gate_values_checked(gates)?;
        let active = active_set(&g);
        let z = self.neuron_outputs(x, &active)?;
        Ok(self.readout(&z, &active, &g))
    }

    fn gate_values_checked(&self, gates: &Gates) -> Result<Vec<f64>> {
        if gates.len() != self.neurons() {
            return Err(FtnError::Config(format!(
                "gate vector of length {} for {} neurons",
                gates.len(),
                self.neurons()
            )));
        }
        Ok(gates.values())
    }

    /// Forward pass with a cache for [`NeuronBank::backward`]. Train mode
    /// consumes `neurons * B` words from `rng`; eval mode leaves it alone.
    pub fn forward(
        &self,
        x: ArrayView2<f64>,
        gates: &Gates,
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(&x)?;
        let g = self.gate_values_checked(gates)?;
        let active = active_set(&g);
        let b = x.nrows();

        let traces = parallel::map_ordered(&active, |&k| self.trace_neuron(k, &x));

        let drop_scale = match mode {
            Mode::Eval => None,
            Mode::Train { dropout } => {
                if !(0.0..1.0).contains(&dropout) {
                    return Err(FtnError::Config(format!("dropout {dropout} outside [0, 1)")));
                }
                let base = rng.position();
                let keep_scale = 1.0 / (1.0 - dropout);
                let rows = parallel::map_ordered(&active, |&k| {
                    let mut cursor = rng.fork_at(base + (k * b) as u128);
                    (0..b)
                        .map(|_| if cursor.next_unit_u32() < dropout { 0.0 } else { keep_scale })
                        .collect::<Vec<f64>>()
                });
                rng.seek(base + (self.neurons() * b) as u128);
                let mut scale = Array2::zeros((active.len(), b));
                for (a, row) in rows.into_iter().enumerate() {
                    scale.row_mut(a).assign(&Array1::from(row));
                }
                Some(scale)
            }
        };

        let mut dropped = Array2::zeros((active.len(), b));
        for (a, t) in traces.iter().enumerate() {
            match &drop_scale {
                Some(s) => dropped.row_mut(a).assign(&(&t.z * &s.row(a))),
                None => dropped.row_mut(a).assign(&t.z),
            }
        }
        let y = self.readout(&dropped, &active, &g);
        let logits = match gates {
            Gates::Relaxed(l) => Some(l.clone()),
            Gates::Fixed(_) => None,
        };
        let cache = ForwardCache {
            version: self.version(),
            x: x.to_owned(),
            active,
            traces,
            drop_scale,
            dropped,
            gate_values: g,
            logits,
        };
        Ok((y, cache))
    }

    pub fn backward(&self, cache: &ForwardCache, grad_out: ArrayView2<f64>) -> Result<Gradients> {
        self.backward_reduced(cache, grad_out, Reduction::Sum)
    }

    /// Backward pass with a choice of batch reduction. With
    /// [`Reduction::SumOfSquares`], `grad_out` must hold per-sample loss
    /// gradients and the result is the sum over samples of squared
    /// per-sample parameter gradients; mask-logit gradients are omitted.
    pub fn backward_reduced(
        &self,
        cache: &ForwardCache,
        grad_out: ArrayView2<f64>,
        red: Reduction,
    ) -> Result<Gradients> {
        if cache.version != self.version() {
            return Err(FtnError::Usage(format!(
                "stale forward cache (model version {} vs cache {})",
                self.version(),
                cache.version
            )));
        }
        let b = cache.x.nrows();
        let d_out = self.shape().d_out;
        if grad_out.dim() != (b, d_out) {
            return Err(FtnError::Config(format!(
                "output gradient shape {:?} does not match [{b}, {d_out}]",
                grad_out.dim()
            )));
        }
        let p = self.params();
        let layers = self.shape().layers;
        let x = cache.x.view();
        let positions: Vec<usize> = (0..cache.active.len()).collect();

        let per_neuron = parallel::map_ordered(&positions, |&a| {
            let k = cache.active[a];
            let gate = cache.gate_values[k];
            let trace = &cache.traces[a];
            let dropped = cache.dropped.row(a);

            // dL/du for u = drop(z) * g, and the readout column gradient
            let mut d_u = Array1::<f64>::zeros(b);
            let mut w_out = Array1::<f64>::zeros(d_out);
            for o in 0..d_out {
                let w = p.w_out[[o, k]];
                let mut acc = 0.0;
                for i in 0..b {
                    let g = grad_out[[i, o]];
                    d_u[i] += g * w;
                    let term = g * (dropped[i] * gate);
                    acc += match red {
                        Reduction::Sum => term,
                        Reduction::SumOfSquares => term * term,
                    };
                }
                w_out[o] = acc;
            }
            let gate_grad = d_u.iter().zip(dropped.iter()).map(|(du, zd)| du * zd).sum::<f64>();

            let mut dz = &d_u * gate;
            if let Some(scale) = &cache.drop_scale {
                dz = dz * &scale.row(a);
            }

            let last = &trace.acts[layers - 1];
            let (w_head, b_head) = match red {
                Reduction::Sum => (last.t().dot(&dz), dz.sum()),
                Reduction::SumOfSquares => {
                    let dz2 = dz.mapv(|v| v * v);
                    (last.mapv(|v| v * v).t().dot(&dz2), dz2.sum())
                }
            };

            // dL/dh_L = dz outer w_head
            let head = p.w_head.row(k);
            let mut dh = Array2::<f64>::zeros((b, self.shape().inner));
            for i in 0..b {
                for j in 0..head.len() {
                    dh[[i, j]] = dz[i] * head[j];
                }
            }

            let inner = self.shape().inner;
            let mut w_hidden = Array3::<f64>::zeros((layers - 1, inner, inner));
            let mut b_hidden = Array2::<f64>::zeros((layers - 1, inner));
            let mut w_in = Array2::<f64>::zeros((inner, self.shape().d_in));
            let mut b_in = Array1::<f64>::zeros(inner);
            for l in (0..layers).rev() {
                let act = &trace.acts[l];
                let dpre = &dh * &act.mapv(|h| 1.0 - h * h);
                if l == 0 {
                    let (dw, db) = combine(&dpre, &x, red);
                    w_in = dw;
                    b_in = db;
                } else {
                    let input = trace.acts[l - 1].view();
                    let (dw, db) = combine(&dpre, &input, red);
                    w_hidden.index_axis_mut(Axis(0), l - 1).assign(&dw);
                    b_hidden.row_mut(l - 1).assign(&db);
                    dh = dpre.dot(&p.w_hidden.slice(s![k, l - 1, .., ..]));
                }
            }
            NeuronGrads { w_in, b_in, w_hidden, b_hidden, w_head, b_head, w_out, gate: gate_grad }
        });

        let mut params = BankTensors::zeros(self.shape());
        let mut gate_grads = vec![0.0; self.neurons()];
        for (a, ng) in per_neuron.into_iter().enumerate() {
            let k = cache.active[a];
            params.w_in.index_axis_mut(Axis(0), k).assign(&ng.w_in);
            params.b_in.row_mut(k).assign(&ng.b_in);
            params.w_hidden.index_axis_mut(Axis(0), k).assign(&ng.w_hidden);
            params.b_hidden.index_axis_mut(Axis(0), k).assign(&ng.b_hidden);
            params.w_head.row_mut(k).assign(&ng.w_head);
            params.b_head[k] = ng.b_head;
            params.w_out.column_mut(k).assign(&ng.w_out);
            gate_grads[k] = ng.gate;
        }

        let mask_logits = match (&cache.logits, red) {
            (Some(logits), Reduction::Sum) => Some(
                logits
                    .iter()
                    .zip(&gate_grads)
                    .map(|(&l, &gg)| {
                        let s = sigmoid(l);
                        gg * s * (1.0 - s)
                    })
                    .collect(),
            ),
            _ => None,
        };
        Ok(Gradients { params, mask_logits })
    }
}

/// Indices with a nonzero gate, ascending.
pub fn active_set(gates: &[f64]) -> Vec<usize> {
    gates.iter().enumerate().filter(|(_, &g)| g != 0.0).map(|(k, _)| k).collect()
}
