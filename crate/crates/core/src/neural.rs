//! Feed-forward Q-networks with an optional LSTM hidden layer, trained by plain backprop.
//!
//! The first layer takes sparse input (placement vectors are mostly zero) and the output
//! layer can be evaluated one unit at a time, which keeps large action spaces affordable.

use std::io::{BufRead, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(T::zero()),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation `x` and output `y`.
    pub fn derivative<T: Scalar>(self, x: T, y: T) -> T {
        match self {
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Tanh => T::one() - y * y,
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Identity => T::one(),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [Activation::Sigmoid, Activation::Tanh, Activation::Relu, Activation::Identity].into_iter().find(|a| a.name() == s)
    }
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Sparse vector: sorted indices of nonzero entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVec<T> {
    pub dim: usize,
    pub idx: Vec<u32>,
    pub val: Vec<T>,
}

impl<T: Scalar> SparseVec<T> {
    pub fn from_dense(x: &[T]) -> Self {
        let mut idx = Vec::new();
        let mut val = Vec::new();
        for (k, &v) in x.iter().enumerate() {
            if v != T::zero() {
                idx.push(k as u32);
                val.push(v);
            }
        }
        SparseVec { dim: x.len(), idx, val }
    }

    pub fn from_f64(x: &[f64]) -> Self {
        let mut idx = Vec::new();
        let mut val = Vec::new();
        for (k, &v) in x.iter().enumerate() {
            if v != 0.0 {
                idx.push(k as u32);
                val.push(T::of(v));
            }
        }
        SparseVec { dim: x.len(), idx, val }
    }

    pub fn to_dense(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim];
        for (&k, &v) in self.idx.iter().zip(&self.val) {
            out[k as usize] = v;
        }
        out
    }
}

/// Dot product with eight independent accumulators so the loop vectorizes.
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 8];
    let chunks = n / 8;
    for c in 0..chunks {
        let (x, y) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = T::zero();
    for k in chunks * 8..n {
        tail += a[k] * b[k];
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

fn axpy<T: Scalar>(a: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn glorot<T: Scalar, R: Rng + ?Sized>(len: usize, fan_in: usize, fan_out: usize, rng: &mut R) -> Vec<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..len).map(|_| T::of(rng.random_range(-limit..=limit))).collect()
}

/// Storage order of a dense weight matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// Rows (one per output unit) are contiguous; cheap single-unit evaluation.
    RowMajor,
    /// Columns (one per input) are contiguous; cheap sparse input.
    ColMajor,
}

/// Fully connected layer with an `outputs x inputs` weight matrix stored per `layout`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub w: Vec<T>,
    pub b: Vec<T>,
    pub act: Activation,
    pub layout: Layout,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize, act: Activation) -> Self {
        Dense { inputs, outputs, w: vec![T::zero(); inputs * outputs], b: vec![T::zero(); outputs], act, layout: Layout::RowMajor }
    }

    pub fn random<R: Rng + ?Sized>(inputs: usize, outputs: usize, act: Activation, rng: &mut R) -> Self {
        Dense {
            inputs,
            outputs,
            w: glorot(inputs * outputs, inputs, outputs, rng),
            b: vec![T::zero(); outputs],
            act,
            layout: Layout::RowMajor,
        }
    }

    pub fn with_layout(mut self, layout: Layout) -> Self {
        if layout != self.layout {
            let mut w = vec![T::zero(); self.w.len()];
            for r in 0..self.outputs {
                for c in 0..self.inputs {
                    let (from, to) = match layout {
                        Layout::ColMajor => (r * self.inputs + c, c * self.outputs + r),
                        Layout::RowMajor => (c * self.outputs + r, r * self.inputs + c),
                    };
                    w[to] = self.w[from];
                }
            }
            self.w = w;
            self.layout = layout;
        }
        self
    }

    /// Storage index of weight (row `r`, column `c`).
    #[inline]
    pub fn at(&self, r: usize, c: usize) -> usize {
        match self.layout {
            Layout::RowMajor => r * self.inputs + c,
            Layout::ColMajor => c * self.outputs + r,
        }
    }

    fn pre_dense(&self, x: &[T]) -> Vec<T> {
        match self.layout {
            Layout::RowMajor => {
                (0..self.outputs).map(|r| self.b[r] + dot(&self.w[r * self.inputs..(r + 1) * self.inputs], x)).collect()
            }
            Layout::ColMajor => {
                let mut out = self.b.clone();
                for (c, &v) in x.iter().enumerate() {
                    if v != T::zero() {
                        axpy(v, &self.w[c * self.outputs..(c + 1) * self.outputs], &mut out);
                    }
                }
                out
            }
        }
    }

    fn pre_sparse(&self, x: &SparseVec<T>) -> Vec<T> {
        match self.layout {
            Layout::RowMajor => (0..self.outputs)
                .map(|r| {
                    let row = &self.w[r * self.inputs..(r + 1) * self.inputs];
                    x.idx.iter().zip(&x.val).fold(self.b[r], |acc, (&k, &v)| acc + row[k as usize] * v)
                })
                .collect(),
            Layout::ColMajor => {
                let mut out = self.b.clone();
                for (&k, &v) in x.idx.iter().zip(&x.val) {
                    let c = k as usize;
                    axpy(v, &self.w[c * self.outputs..(c + 1) * self.outputs], &mut out);
                }
                out
            }
        }
    }

    fn unit(&self, r: usize, x: &[T]) -> T {
        self.act.apply(self.unit_pre(r, x))
    }

    fn unit_pre(&self, r: usize, x: &[T]) -> T {
        match self.layout {
            Layout::RowMajor => self.b[r] + dot(&self.w[r * self.inputs..(r + 1) * self.inputs], x),
            Layout::ColMajor => x.iter().enumerate().fold(self.b[r], |acc, (c, &v)| acc + self.w[c * self.outputs + r] * v),
        }
    }

    /// Row `r` of the weight matrix.
    fn row(&self, r: usize) -> Vec<T> {
        (0..self.inputs).map(|c| self.w[self.at(r, c)]).collect()
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.inputs {
            return Err(Error::Dimension(format!("dense layer expects {} inputs, got {}", self.inputs, x.len())));
        }
        Ok(self.pre_dense(x).into_iter().map(|p| self.act.apply(p)).collect())
    }
}

/// Gate order in the parameter arrays.
pub const GATE_F: usize = 0;
pub const GATE_I: usize = 1;
pub const GATE_O: usize = 2;
pub const GATE_C: usize = 3;

/// LSTM cell; each gate matrix is `hidden x (hidden + inputs)` acting on `[y_prev, x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell<T> {
    pub inputs: usize,
    pub hidden: usize,
    pub w: [Vec<T>; 4],
    pub b: [Vec<T>; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState<T> {
    pub m: Vec<T>,
    pub y: Vec<T>,
}

impl<T: Scalar> LstmState<T> {
    pub fn zeros(hidden: usize) -> Self {
        LstmState { m: vec![T::zero(); hidden], y: vec![T::zero(); hidden] }
    }
}

/// Everything the backward pass needs from one cell step.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmStep<T> {
    pub z: Vec<T>,
    pub gates: [Vec<T>; 4],
    pub m_prev: Vec<T>,
    pub m: Vec<T>,
    pub y: Vec<T>,
}

impl<T: Scalar> LstmCell<T> {
    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        let wz = vec![T::zero(); hidden * (hidden + inputs)];
        let bz = vec![T::zero(); hidden];
        LstmCell {
            inputs,
            hidden,
            w: [wz.clone(), wz.clone(), wz.clone(), wz],
            b: [bz.clone(), bz.clone(), bz.clone(), bz],
        }
    }

    pub fn random<R: Rng + ?Sized>(inputs: usize, hidden: usize, rng: &mut R) -> Self {
        let cols = hidden + inputs;
        let mut cell = Self::zeros(inputs, hidden);
        for g in 0..4 {
            cell.w[g] = glorot(hidden * cols, cols, hidden, rng);
        }
        cell
    }

    pub fn step(&self, x: &[T], prev: &LstmState<T>) -> Result<LstmStep<T>> {
        if x.len() != self.inputs || prev.m.len() != self.hidden || prev.y.len() != self.hidden {
            return Err(Error::Dimension(format!(
                "lstm expects {} inputs and {} hidden, got {} and {}",
                self.inputs,
                self.hidden,
                x.len(),
                prev.m.len()
            )));
        }
        let cols = self.hidden + self.inputs;
        let mut z = prev.y.clone();
        z.extend_from_slice(x);
        let gates: [Vec<T>; 4] = std::array::from_fn(|g| {
            (0..self.hidden)
                .map(|r| {
                    let a = self.b[g][r] + dot(&self.w[g][r * cols..(r + 1) * cols], &z);
                    if g == GATE_C { a.tanh() } else { sigmoid(a) }
                })
                .collect()
        });
        let m: Vec<T> = (0..self.hidden)
            .map(|r| prev.m[r] * gates[GATE_F][r] + gates[GATE_I][r] * gates[GATE_C][r])
            .collect();
        let y: Vec<T> = (0..self.hidden).map(|r| m[r].tanh() * gates[GATE_O][r]).collect();
        Ok(LstmStep { z, gates, m_prev: prev.m.clone(), m, y })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Dense(Dense<T>),
    Lstm(LstmCell<T>),
}

impl<T: Scalar> Layer<T> {
    fn inputs(&self) -> usize {
        match self {
            Layer::Dense(d) => d.inputs,
            Layer::Lstm(c) => c.inputs,
        }
    }
    fn outputs(&self) -> usize {
        match self {
            Layer::Dense(d) => d.outputs,
            Layer::Lstm(c) => c.hidden,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Selection,
    Evaluation,
}

#[derive(Debug, Clone, PartialEq)]
enum LayerTrace<T> {
    Dense { input: Vec<T>, pre: Vec<T>, post: Vec<T> },
    Lstm(LstmStep<T>),
}

impl<T: Scalar> LayerTrace<T> {
    fn output(&self) -> &[T] {
        match self {
            LayerTrace::Dense { post, .. } => post,
            LayerTrace::Lstm(s) => &s.y,
        }
    }
}

/// Hidden activations of one forward pass, up to (not including) the output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace<T> {
    input: SparseVec<T>,
    /// Dense copy of the input, kept only when the output layer reads it directly.
    flat: Vec<T>,
    layers: Vec<LayerTrace<T>>,
}

impl<T: Scalar> Trace<T> {
    pub fn hidden(&self) -> &[T] {
        self.layers.last().map(|l| l.output()).unwrap_or(&self.flat)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum LayerGrad<T> {
    Dense { w: Vec<T>, b: Vec<T> },
    Lstm { w: [Vec<T>; 4], b: [Vec<T>; 4] },
}

/// Gradient buffers shaped like a network. Only columns of the first layer touched by
/// nonzero inputs and rows of the output layer touched by a selected action are tracked.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet<T> {
    layers: Vec<LayerGrad<T>>,
    first_cols: Vec<usize>,
    last_rows: Vec<usize>,
}

impl<T: Scalar> GradientSet<T> {
    pub fn zeros_like(net: &QNetwork<T>) -> Self {
        let layers = net
            .layers
            .iter()
            .map(|l| match l {
                Layer::Dense(d) => LayerGrad::Dense { w: vec![T::zero(); d.w.len()], b: vec![T::zero(); d.b.len()] },
                Layer::Lstm(c) => LayerGrad::Lstm {
                    w: std::array::from_fn(|g| vec![T::zero(); c.w[g].len()]),
                    b: std::array::from_fn(|g| vec![T::zero(); c.b[g].len()]),
                },
            })
            .collect();
        GradientSet { layers, first_cols: Vec::new(), last_rows: Vec::new() }
    }

    /// All entries in the order of [`QNetwork::params`].
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::new();
        for l in &self.layers {
            match l {
                LayerGrad::Dense { w, b } => {
                    out.extend_from_slice(w);
                    out.extend_from_slice(b);
                }
                LayerGrad::Lstm { w, b } => {
                    for g in 0..4 {
                        out.extend_from_slice(&w[g]);
                        out.extend_from_slice(&b[g]);
                    }
                }
            }
        }
        out
    }

    /// Zeroes buffers of layers outside `lowest..=highest` and forgets the touched sets.
    fn clear_outside(&mut self, lowest: usize, highest: usize, net: &QNetwork<T>) {
        let last = self.layers.len() - 1;
        for k in (0..self.layers.len()).filter(|&k| k < lowest || k > highest) {
            let inputs = net.layers[k].inputs();
            match &mut self.layers[k] {
                LayerGrad::Dense { w, b } => {
                    let Layer::Dense(d) = &net.layers[k] else { unreachable!("gradients mirror layers") };
                    if k == last {
                        for &r in &self.last_rows {
                            (0..inputs).for_each(|c| w[d.at(r, c)] = T::zero());
                        }
                    } else if k == 0 {
                        for &c in &self.first_cols {
                            (0..b.len()).for_each(|r| w[d.at(r, c)] = T::zero());
                        }
                    } else {
                        w.iter_mut().for_each(|v| *v = T::zero());
                    }
                    b.iter_mut().for_each(|v| *v = T::zero());
                }
                LayerGrad::Lstm { w, b } => {
                    for g in w.iter_mut().chain(b.iter_mut()) {
                        g.iter_mut().for_each(|v| *v = T::zero());
                    }
                }
            }
        }
        self.first_cols.clear();
        self.last_rows.clear();
    }

    pub fn is_finite(&self) -> bool {
        self.flatten().iter().all(|v| v.is_finite())
    }
}

/// Plateau learning-rate schedule: halves the rate when the mean error over a window fails
/// to improve by the given fraction on the previous window.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauSchedule {
    pub rate: f64,
    pub window: usize,
    pub min_improvement: f64,
    pub factor: f64,
    pub floor: f64,
    sum: f64,
    count: usize,
    previous: Option<f64>,
}

impl PlateauSchedule {
    pub fn new(rate: f64) -> Self {
        PlateauSchedule { rate, window: 200, min_improvement: 0.01, factor: 0.5, floor: 1e-5, sum: 0.0, count: 0, previous: None }
    }

    /// Records one batch error and returns the (possibly reduced) rate.
    pub fn record(&mut self, error: f64) -> f64 {
        self.sum += error;
        self.count += 1;
        if self.count >= self.window {
            let mean = self.sum / self.count as f64;
            if let Some(prev) = self.previous {
                if mean > prev * (1.0 - self.min_improvement) {
                    self.rate = (self.rate * self.factor).max(self.floor);
                }
            }
            self.previous = Some(mean);
            self.sum = 0.0;
            self.count = 0;
        }
        self.rate
    }
}

/// A stack of layers mapping a state vector to one value per action.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork<T> {
    pub role: Role,
    pub layers: Vec<Layer<T>>,
    memory: Option<LstmState<T>>,
}

impl<T: Scalar> QNetwork<T> {
    /// First and last layers must be dense; at most one LSTM layer.
    pub fn from_layers(role: Role, layers: Vec<Layer<T>>) -> Result<Self> {
        if !matches!(layers.first(), Some(Layer::Dense(_))) || !matches!(layers.last(), Some(Layer::Dense(_))) {
            return Err(Error::Dimension("first and last layers must be dense".into()));
        }
        let lstm: Vec<&LstmCell<T>> =
            layers.iter().filter_map(|l| if let Layer::Lstm(c) = l { Some(c) } else { None }).collect();
        if lstm.len() > 1 {
            return Err(Error::Dimension("at most one lstm layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::Dimension(format!(
                    "layer widths {} -> {} do not chain",
                    pair[0].outputs(),
                    pair[1].inputs()
                )));
            }
        }
        let memory = lstm.first().map(|c| LstmState::zeros(c.hidden));
        Ok(QNetwork { role, layers, memory })
    }

    /// input -> dense(relu) -> lstm or dense(relu) -> dense(relu) -> linear output.
    pub fn standard<R: Rng + ?Sized>(
        role: Role,
        inputs: usize,
        actions: usize,
        hidden: usize,
        use_lstm: bool,
        rng: &mut R,
    ) -> Self {
        let middle = if role == Role::Evaluation && use_lstm {
            Layer::Lstm(LstmCell::random(hidden, hidden, rng))
        } else {
            Layer::Dense(Dense::random(hidden, hidden, Activation::Relu, rng))
        };
        let layers = vec![
            Layer::Dense(Dense::random(inputs, hidden, Activation::Relu, rng).with_layout(Layout::ColMajor)),
            middle,
            Layer::Dense(Dense::random(hidden, hidden, Activation::Relu, rng)),
            Layer::Dense(Dense::random(hidden, actions, Activation::Identity, rng)),
        ];
        Self::from_layers(role, layers).expect("standard shapes chain")
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn has_lstm(&self) -> bool {
        self.memory.is_some()
    }

    pub fn memory(&self) -> Option<&LstmState<T>> {
        self.memory.as_ref()
    }

    pub fn set_memory(&mut self, m: LstmState<T>) -> Result<()> {
        match &self.memory {
            Some(cur) if cur.m.len() == m.m.len() && cur.y.len() == m.y.len() => {
                self.memory = Some(m);
                Ok(())
            }
            _ => Err(Error::Dimension("memory shape does not match the lstm layer".into())),
        }
    }

    pub fn reset_memory(&mut self) {
        if let Some(m) = &mut self.memory {
            *m = LstmState::zeros(m.m.len());
        }
    }

    /// Hidden pass with the current memory as the previous LSTM state; memory is not advanced.
    pub fn trace(&self, x: &SparseVec<T>) -> Result<Trace<T>> {
        if x.dim != self.input_width() {
            return Err(Error::Dimension(format!("network expects {} inputs, got {}", self.input_width(), x.dim)));
        }
        let mut layers: Vec<LayerTrace<T>> = Vec::with_capacity(self.layers.len() - 1);
        for (k, layer) in self.layers[..self.layers.len() - 1].iter().enumerate() {
            let t = match layer {
                Layer::Dense(d) => {
                    let (input, pre) = if k == 0 {
                        (Vec::new(), d.pre_sparse(x))
                    } else {
                        let input = layers[k - 1].output().to_vec();
                        let pre = d.pre_dense(&input);
                        (input, pre)
                    };
                    let post = pre.iter().map(|&p| d.act.apply(p)).collect();
                    LayerTrace::Dense { input, pre, post }
                }
                Layer::Lstm(c) => {
                    let prev = self.memory.as_ref().expect("lstm network keeps memory");
                    let input = if k == 0 { x.to_dense() } else { layers[k - 1].output().to_vec() };
                    LayerTrace::Lstm(c.step(&input, prev)?)
                }
            };
            layers.push(t);
        }
        let flat = if self.layers.len() == 1 { x.to_dense() } else { Vec::new() };
        Ok(Trace { input: x.clone(), flat, layers })
    }

    fn out_layer(&self) -> &Dense<T> {
        match self.layers.last() {
            Some(Layer::Dense(d)) => d,
            _ => unreachable!("validated at construction"),
        }
    }

    pub fn q_all(&self, trace: &Trace<T>) -> Vec<T> {
        let d = self.out_layer();
        let h = trace.hidden();
        (0..d.outputs).map(|r| d.unit(r, h)).collect()
    }

    /// Highest-valued legal output, evaluating only legal units; ties go to the lowest index.
    pub fn greedy(&self, trace: &Trace<T>, legal: impl Fn(usize) -> bool) -> Option<(usize, T)> {
        let d = self.out_layer();
        let h = trace.hidden();
        let mut best: Option<(usize, T)> = None;
        for r in (0..d.outputs).filter(|&r| legal(r)) {
            let v = d.unit(r, h);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((r, v));
            }
        }
        best
    }

    pub fn q_one(&self, trace: &Trace<T>, action: usize) -> T {
        self.out_layer().unit(action, trace.hidden())
    }

    pub fn forward(&self, x: &SparseVec<T>) -> Result<Vec<T>> {
        Ok(self.q_all(&self.trace(x)?))
    }

    /// Runs the LSTM (if any) on `x` and keeps the resulting state as the new memory.
    pub fn advance(&mut self, x: &SparseVec<T>) -> Result<()> {
        if self.memory.is_none() {
            return Ok(());
        }
        let trace = self.trace(x)?;
        for t in trace.layers {
            if let LayerTrace::Lstm(step) = t {
                self.memory = Some(LstmState { m: step.m, y: step.y });
            }
        }
        Ok(())
    }

    /// Accumulates `dq * dq[action]/dθ` into `grads` for layers at index ≥ `lowest`.
    pub fn backward(&self, trace: &Trace<T>, action: usize, dq: T, lowest: usize, grads: &mut GradientSet<T>) {
        let last = self.layers.len() - 1;
        let out = self.out_layer();
        let h = trace.hidden();
        let pre = out.unit_pre(action, h);
        let dpre = dq * out.act.derivative(pre, out.act.apply(pre));
        if let LayerGrad::Dense { w, b } = &mut grads.layers[last] {
            for (c, &v) in h.iter().enumerate() {
                w[out.at(action, c)] += dpre * v;
            }
            b[action] += dpre;
        }
        grads.last_rows.push(action);
        if lowest >= last {
            return;
        }
        let mut dout: Vec<T> = out.row(action).into_iter().map(|w| w * dpre).collect();
        for k in (lowest..last).rev() {
            let need_input = k > lowest;
            dout = match (&self.layers[k], &trace.layers[k], &mut grads.layers[k]) {
                (Layer::Dense(d), LayerTrace::Dense { input, pre, post }, LayerGrad::Dense { w, b }) => {
                    let dpre: Vec<T> = (0..d.outputs).map(|r| dout[r] * d.act.derivative(pre[r], post[r])).collect();
                    if k == 0 {
                        for r in 0..d.outputs {
                            if dpre[r] == T::zero() {
                                continue;
                            }
                            for (&c, &v) in trace.input.idx.iter().zip(&trace.input.val) {
                                w[d.at(r, c as usize)] += dpre[r] * v;
                            }
                            b[r] += dpre[r];
                        }
                        grads.first_cols.extend(trace.input.idx.iter().map(|&c| c as usize));
                        Vec::new()
                    } else {
                        let mut din = vec![T::zero(); if need_input { d.inputs } else { 0 }];
                        for r in 0..d.outputs {
                            if dpre[r] == T::zero() {
                                continue;
                            }
                            for c in 0..d.inputs {
                                let i = d.at(r, c);
                                w[i] += dpre[r] * input[c];
                                if need_input {
                                    din[c] += d.w[i] * dpre[r];
                                }
                            }
                            b[r] += dpre[r];
                        }
                        din
                    }
                }
                (Layer::Lstm(cell), LayerTrace::Lstm(s), LayerGrad::Lstm { w, b }) => {
                    lstm_backward(cell, s, &dout, w, b, need_input)
                }
                _ => unreachable!("trace mirrors layers"),
            };
        }
    }

    /// θ ← θ − rate · grads, then clears the buffers. Fails without touching the network if
    /// any gradient is non-finite.
    pub fn apply_gradients(&mut self, grads: &mut GradientSet<T>, rate: T, lowest: usize) -> Result<()> {
        let last = self.layers.len() - 1;
        self.apply_gradients_to(grads, rate, lowest, last)
    }

    /// Like [`apply_gradients`](Self::apply_gradients) restricted to layers `lowest..=highest`;
    /// buffers of all layers are cleared.
    pub fn apply_gradients_to(&mut self, grads: &mut GradientSet<T>, rate: T, lowest: usize, highest: usize) -> Result<()> {
        grads.first_cols.sort_unstable();
        grads.first_cols.dedup();
        grads.last_rows.sort_unstable();
        grads.last_rows.dedup();
        let last = self.layers.len() - 1;
        let highest = highest.min(last);
        for k in lowest..=highest {
            let ok = match &grads.layers[k] {
                LayerGrad::Dense { w, b } => {
                    let Layer::Dense(d) = &self.layers[k] else { unreachable!("gradients mirror layers") };
                    let w_ok = if k == last {
                        grads.last_rows.iter().all(|&r| (0..d.inputs).all(|c| w[d.at(r, c)].is_finite()))
                    } else if k == 0 {
                        grads.first_cols.iter().all(|&c| (0..b.len()).all(|r| w[d.at(r, c)].is_finite()))
                    } else {
                        w.iter().all(|v| v.is_finite())
                    };
                    w_ok && b.iter().all(|v| v.is_finite())
                }
                LayerGrad::Lstm { w, b } => w.iter().chain(b.iter()).all(|v| v.iter().all(|x| x.is_finite())),
            };
            if !ok {
                return Err(Error::NonFinite(format!("gradient of layer {k} is not finite")));
            }
        }
        for k in lowest..=highest {
            match (&mut self.layers[k], &mut grads.layers[k]) {
                (Layer::Dense(d), LayerGrad::Dense { w, b }) => {
                    if k == last {
                        for &r in &grads.last_rows {
                            for c in 0..d.inputs {
                                let i = d.at(r, c);
                                d.w[i] -= rate * w[i];
                                w[i] = T::zero();
                            }
                        }
                    } else if k == 0 {
                        for &c in &grads.first_cols {
                            for r in 0..d.outputs {
                                let i = d.at(r, c);
                                d.w[i] -= rate * w[i];
                                w[i] = T::zero();
                            }
                        }
                    } else {
                        for (p, g) in d.w.iter_mut().zip(w.iter_mut()) {
                            *p -= rate * *g;
                            *g = T::zero();
                        }
                    }
                    for (p, g) in d.b.iter_mut().zip(b.iter_mut()) {
                        *p -= rate * *g;
                        *g = T::zero();
                    }
                }
                (Layer::Lstm(c), LayerGrad::Lstm { w, b }) => {
                    for g in 0..4 {
                        for (p, d) in c.w[g].iter_mut().zip(w[g].iter_mut()) {
                            *p -= rate * *d;
                            *d = T::zero();
                        }
                        for (p, d) in c.b[g].iter_mut().zip(b[g].iter_mut()) {
                            *p -= rate * *d;
                            *d = T::zero();
                        }
                    }
                }
                _ => unreachable!("gradients mirror layers"),
            }
        }
        grads.clear_outside(lowest, highest, self);
        Ok(())
    }

    /// One sample of gradient descent on ½(target − q[action])².
    pub fn backward_and_update(&mut self, x: &SparseVec<T>, action: usize, target: T, rate: T) -> Result<()> {
        if !target.is_finite() {
            return Err(Error::NonFinite("target".into()));
        }
        let trace = self.trace(x)?;
        let q = self.q_one(&trace, action);
        let mut grads = GradientSet::zeros_like(self);
        self.backward(&trace, action, q - target, 0, &mut grads);
        self.apply_gradients(&mut grads, rate, 0)
    }

    /// Index of the first LSTM layer, if any.
    pub fn lstm_index(&self) -> Option<usize> {
        self.layers.iter().position(|l| matches!(l, Layer::Lstm(_)))
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Dense(d) => d.w.len() + d.b.len(),
                Layer::Lstm(c) => c.w.iter().chain(c.b.iter()).map(Vec::len).sum(),
            })
            .sum()
    }

    /// Mutable references to every parameter, in checkpoint order.
    pub fn params_mut(&mut self) -> Vec<&mut T> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            match l {
                Layer::Dense(d) => {
                    out.extend(d.w.iter_mut());
                    out.extend(d.b.iter_mut());
                }
                Layer::Lstm(c) => {
                    let (w, b) = (&mut c.w, &mut c.b);
                    for (wg, bg) in w.iter_mut().zip(b.iter_mut()) {
                        out.extend(wg.iter_mut());
                        out.extend(bg.iter_mut());
                    }
                }
            }
        }
        out
    }

    pub fn params(&self) -> Vec<T> {
        self.clone().params_mut().into_iter().map(|p| *p).collect()
    }

    /// Writes a versioned text dump with shapes and raw bit patterns.
    pub fn save<W: Write>(&self, mut out: W) -> Result<()> {
        let role = match self.role {
            Role::Selection => "selection",
            Role::Evaluation => "evaluation",
        };
        writeln!(out, "edgecdn-qnet 1 {} {} {}", T::TAG, role, self.layers.len())?;
        for l in &self.layers {
            match l {
                Layer::Dense(d) => {
                    let layout = if d.layout == Layout::ColMajor { "col" } else { "row" };
                    writeln!(out, "dense {} {} {} {layout}", d.inputs, d.outputs, d.act.name())?;
                    write_values(&mut out, &d.w)?;
                    write_values(&mut out, &d.b)?;
                }
                Layer::Lstm(c) => {
                    writeln!(out, "lstm {} {}", c.inputs, c.hidden)?;
                    for g in 0..4 {
                        write_values(&mut out, &c.w[g])?;
                        write_values(&mut out, &c.b[g])?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn load<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let mut next = || -> Result<String> {
            lines.next().ok_or_else(|| Error::Checkpoint("unexpected end of file".into()))?.map_err(Error::from)
        };
        let head = next()?;
        let h: Vec<&str> = head.split_whitespace().collect();
        if h.len() != 5 || h[0] != "edgecdn-qnet" || h[1] != "1" {
            return Err(Error::Checkpoint(format!("bad header {head:?}")));
        }
        if h[2] != T::TAG {
            return Err(Error::Checkpoint(format!("checkpoint holds {} values, expected {}", h[2], T::TAG)));
        }
        let role = match h[3] {
            "selection" => Role::Selection,
            "evaluation" => Role::Evaluation,
            r => return Err(Error::Checkpoint(format!("unknown role {r}"))),
        };
        let count: usize = h[4].parse().map_err(|_| Error::Checkpoint("bad layer count".into()))?;
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let spec = next()?;
            let s: Vec<&str> = spec.split_whitespace().collect();
            let num = |k: usize| -> Result<usize> {
                s.get(k).and_then(|v| v.parse().ok()).ok_or_else(|| Error::Checkpoint(format!("bad layer line {spec:?}")))
            };
            match s.first().copied() {
                Some("dense") => {
                    let (i, o) = (num(1)?, num(2)?);
                    let act = s
                        .get(3)
                        .and_then(|a| Activation::parse(a))
                        .ok_or_else(|| Error::Checkpoint(format!("bad activation in {spec:?}")))?;
                    let layout = match s.get(4).copied() {
                        Some("row") => Layout::RowMajor,
                        Some("col") => Layout::ColMajor,
                        _ => return Err(Error::Checkpoint(format!("bad layout in {spec:?}"))),
                    };
                    let w = read_values(&next()?, i * o)?;
                    let b = read_values(&next()?, o)?;
                    layers.push(Layer::Dense(Dense { inputs: i, outputs: o, w, b, act, layout }));
                }
                Some("lstm") => {
                    let (i, hd) = (num(1)?, num(2)?);
                    let mut cell = LstmCell::zeros(i, hd);
                    for g in 0..4 {
                        cell.w[g] = read_values(&next()?, hd * (hd + i))?;
                        cell.b[g] = read_values(&next()?, hd)?;
                    }
                    layers.push(Layer::Lstm(cell));
                }
                _ => return Err(Error::Checkpoint(format!("bad layer line {spec:?}"))),
            }
        }
        QNetwork::from_layers(role, layers).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

fn write_values<T: Scalar, W: Write>(out: &mut W, v: &[T]) -> Result<()> {
    let s: Vec<String> = v.iter().map(|x| format!("{:x}", x.to_bits_u64())).collect();
    writeln!(out, "{}", s.join(" "))?;
    Ok(())
}

fn read_values<T: Scalar>(line: &str, expect: usize) -> Result<Vec<T>> {
    let v: Vec<T> = line
        .split_whitespace()
        .map(|t| u64::from_str_radix(t, 16).map(T::from_bits_u64))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Checkpoint(format!("bad value: {e}")))?;
    if v.len() != expect {
        return Err(Error::Checkpoint(format!("expected {expect} values, found {}", v.len())));
    }
    Ok(v)
}

/// One-step LSTM backward with the previous state held fixed. Returns dL/dx when asked.
fn lstm_backward<T: Scalar>(
    cell: &LstmCell<T>,
    s: &LstmStep<T>,
    dy: &[T],
    gw: &mut [Vec<T>; 4],
    gb: &mut [Vec<T>; 4],
    need_input: bool,
) -> Vec<T> {
    let h = cell.hidden;
    let cols = h + cell.inputs;
    let one = T::one();
    let mut dz = vec![T::zero(); cols];
    for r in 0..h {
        let (f, i, o, c) = (s.gates[GATE_F][r], s.gates[GATE_I][r], s.gates[GATE_O][r], s.gates[GATE_C][r]);
        let tm = s.m[r].tanh();
        let dm = dy[r] * o * (one - tm * tm);
        let da = [
            dm * s.m_prev[r] * f * (one - f),
            dm * c * i * (one - i),
            dy[r] * tm * o * (one - o),
            dm * i * (one - c * c),
        ];
        for g in 0..4 {
            if da[g] == T::zero() {
                continue;
            }
            let row = r * cols;
            for k in 0..cols {
                gw[g][row + k] += da[g] * s.z[k];
                if need_input {
                    dz[k] += cell.w[g][row + k] * da[g];
                }
            }
            gb[g][r] += da[g];
        }
    }
    if need_input { dz.split_off(h) } else { Vec::new() }
}

/// Copies every parameter tensor whose layer shape matches from `selection` into
/// `evaluation`. LSTM parameters and memory of the evaluation net are left alone.
pub fn sync_target_params<T: Scalar>(selection: &QNetwork<T>, evaluation: &mut QNetwork<T>) -> Result<()> {
    if selection.layers.len() != evaluation.layers.len() {
        return Err(Error::Dimension("networks differ in depth".into()));
    }
    for (k, (s, e)) in selection.layers.iter().zip(evaluation.layers.iter_mut()).enumerate() {
        match (s, e) {
            (Layer::Dense(sd), Layer::Dense(ed)) => {
                if sd.inputs != ed.inputs || sd.outputs != ed.outputs || sd.layout != ed.layout {
                    return Err(Error::Dimension(format!("layer {k} shapes differ")));
                }
                ed.w.copy_from_slice(&sd.w);
                ed.b.copy_from_slice(&sd.b);
                ed.act = sd.act;
            }
            (Layer::Lstm(sc), Layer::Lstm(ec)) => {
                if sc.inputs != ec.inputs || sc.hidden != ec.hidden {
                    return Err(Error::Dimension(format!("layer {k} shapes differ")));
                }
                *ec = sc.clone();
            }
            (a, b) => {
                if a.inputs() != b.inputs() || a.outputs() != b.outputs() {
                    return Err(Error::Dimension(format!("layer {k} shapes differ")));
                }
            }
        }
    }
    Ok(())
}

/// Per-sample error ½(target − q[action])² with the network's current memory.
pub fn sample_error<T: Scalar>(net: &QNetwork<T>, x: &SparseVec<T>, action: usize, target: T) -> Result<T> {
    let trace = net.trace(x)?;
    let d = target - net.q_one(&trace, action);
    Ok(T::of(0.5) * d * d)
}

/// Analytic gradient of the per-sample error, flattened in parameter order.
pub fn analytic_gradient<T: Scalar>(net: &QNetwork<T>, x: &SparseVec<T>, action: usize, target: T) -> Result<Vec<T>> {
    let trace = net.trace(x)?;
    let q = net.q_one(&trace, action);
    let mut g = GradientSet::zeros_like(net);
    net.backward(&trace, action, q - target, 0, &mut g);
    Ok(g.flatten())
}

/// Max relative error between the analytic gradient and central differences.
pub fn finite_difference_check<T: Scalar>(
    net: &QNetwork<T>,
    x: &SparseVec<T>,
    action: usize,
    target: T,
    epsilon: T,
) -> Result<f64> {
    let analytic = analytic_gradient(net, x, action, target)?;
    compare_with_numeric(net, x, action, target, epsilon, &analytic)
}

/// Compares a supplied gradient against central differences.
pub fn compare_with_numeric<T: Scalar>(
    net: &QNetwork<T>,
    x: &SparseVec<T>,
    action: usize,
    target: T,
    epsilon: T,
    analytic: &[T],
) -> Result<f64> {
    let mut probe = net.clone();
    let n = probe.param_count();
    if analytic.len() != n {
        return Err(Error::Dimension(format!("gradient has {} entries for {n} parameters", analytic.len())));
    }
    let mut worst = 0.0f64;
    for k in 0..n {
        let orig = *probe.params_mut()[k];
        *probe.params_mut()[k] = orig + epsilon;
        let up = sample_error(&probe, x, action, target)?;
        *probe.params_mut()[k] = orig - epsilon;
        let down = sample_error(&probe, x, action, target)?;
        *probe.params_mut()[k] = orig;
        let numeric = ((up - down) / (epsilon + epsilon)).to_f64_lossy();
        let a = analytic[k].to_f64_lossy();
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12);
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// Outcome of [`gradient_check_suite`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientReport {
    pub configurations: usize,
    pub max_relative_error: f64,
}

/// Random small networks of every activation, with and without an LSTM layer and with a
/// random previous memory, each compared against central differences.
pub fn gradient_check_suite<R: Rng + ?Sized>(configurations: usize, epsilon: f64, rng: &mut R) -> Result<GradientReport> {
    const ACTS: [Activation; 4] = [Activation::Sigmoid, Activation::Tanh, Activation::Relu, Activation::Identity];
    let mut worst = 0.0f64;
    for k in 0..configurations {
        let inputs = rng.random_range(2..=5);
        let hidden = rng.random_range(2..=4);
        let outputs = rng.random_range(2..=4);
        let act = ACTS[k % ACTS.len()];
        let layout = if k % 3 == 0 { Layout::ColMajor } else { Layout::RowMajor };
        let mut layers = vec![Layer::Dense(Dense::<f64>::random(inputs, hidden, act, rng).with_layout(layout))];
        let with_lstm = k % 2 == 1;
        if with_lstm {
            let mut cell = LstmCell::random(hidden, hidden, rng);
            for g in 0..4 {
                cell.b[g] = (0..hidden).map(|_| rng.random_range(-0.5..0.5)).collect();
            }
            layers.push(Layer::Lstm(cell));
        } else {
            layers.push(Layer::Dense(Dense::random(hidden, hidden, ACTS[(k / 2) % ACTS.len()], rng)));
        }
        layers.push(Layer::Dense(Dense::random(hidden, outputs, Activation::Identity, rng)));
        for l in &mut layers {
            if let Layer::Dense(d) = l {
                d.b = (0..d.outputs).map(|_| rng.random_range(-0.5..0.5)).collect();
            }
        }
        let mut net = QNetwork::from_layers(Role::Evaluation, layers)?;
        if with_lstm {
            let m = LstmState {
                m: (0..hidden).map(|_| rng.random_range(-1.0..1.0)).collect(),
                y: (0..hidden).map(|_| rng.random_range(-0.7..0.7)).collect(),
            };
            net.set_memory(m)?;
        }
        let x: Vec<f64> = (0..inputs).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = SparseVec::from_dense(&x);
        let action = rng.random_range(0..outputs);
        let q = net.forward(&x)?[action];
        let target = q + rng.random_range(0.5..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let err = finite_difference_check(&net, &x, action, target, epsilon)?;
        log::debug!("gradient config {k}: {act:?}, lstm {with_lstm}, max relative error {err:.3e}");
        worst = worst.max(err);
    }
    Ok(GradientReport { configurations, max_relative_error: worst })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single(act: Activation, w: Vec<f64>, inputs: usize, outputs: usize) -> QNetwork<f64> {
        let d = Dense { inputs, outputs, w, b: vec![0.0; outputs], act, layout: Layout::RowMajor };
        QNetwork::from_layers(Role::Selection, vec![Layer::Dense(d)]).unwrap()
    }

    #[test]
    fn lstm_hand_example() {
        let mut cell = LstmCell::<f64>::zeros(1, 1);
        cell.w[GATE_C] = vec![0.0, 1.0];
        let step = cell.step(&[1.0], &LstmState::zeros(1)).unwrap();
        assert!((step.gates[GATE_F][0] - 0.5).abs() < 1e-12);
        assert!((step.m[0] - 0.5 * 1f64.tanh()).abs() < 1e-12);
        assert!((step.m[0] - 0.3808).abs() < 1e-4);
        assert!((step.y[0] - 0.1817).abs() < 1e-4);
        let zero = LstmCell::<f64>::zeros(3, 2).step(&[1.0, -2.0, 3.0], &LstmState::zeros(2)).unwrap();
        assert_eq!(zero.m, vec![0.0, 0.0]);
        assert_eq!(zero.y, vec![0.0, 0.0]);
    }

    #[test]
    fn saturated_forget_keeps_memory() {
        let mut cell = LstmCell::<f64>::zeros(1, 1);
        cell.b[GATE_F] = vec![50.0];
        let prev = LstmState { m: vec![0.7], y: vec![0.0] };
        let step = cell.step(&[2.0], &prev).unwrap();
        assert!((step.m[0] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn linear_unit_update() {
        let mut net = single(Activation::Identity, vec![1.0], 1, 1);
        let x = SparseVec::from_dense(&[2.0]);
        let g = analytic_gradient(&net, &x, 0, 5.0).unwrap();
        assert_eq!(g[0], -6.0);
        net.backward_and_update(&x, 0, 5.0, 0.1).unwrap();
        assert!((net.params()[0] - 1.6).abs() < 1e-12);
        let before = net.params();
        let q = net.forward(&x).unwrap()[0];
        net.backward_and_update(&x, 0, q, 0.1).unwrap();
        assert_eq!(net.params(), before);
    }

    #[test]
    fn sigmoid_steps_are_not_linear() {
        let x = SparseVec::from_dense(&[1.0]);
        let mut twice = single(Activation::Sigmoid, vec![0.3], 1, 1);
        twice.backward_and_update(&x, 0, 1.0, 0.5).unwrap();
        twice.backward_and_update(&x, 0, 1.0, 0.5).unwrap();
        let mut once = single(Activation::Sigmoid, vec![0.3], 1, 1);
        once.backward_and_update(&x, 0, 1.0, 1.0).unwrap();
        assert_ne!(twice.params(), once.params());
    }

    #[test]
    fn hand_set_two_layer_net() {
        let l1 = Dense { inputs: 3, outputs: 2, w: vec![1.0, 0.0, -1.0, 0.5, 0.5, 0.5], b: vec![0.0, -1.0], act: Activation::Relu, layout: Layout::RowMajor };
        let l2 = Dense { inputs: 2, outputs: 1, w: vec![2.0, -1.0], b: vec![0.5], act: Activation::Identity, layout: Layout::RowMajor };
        let net = QNetwork::from_layers(Role::Selection, vec![Layer::Dense(l1), Layer::Dense(l2)]).unwrap();
        // hidden = relu([1-3, 0.5*(1+2+3)-1]) = [0, 2]
        let q = net.forward(&SparseVec::from_dense(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(q, vec![0.5 - 2.0]);
        let id = single(Activation::Identity, vec![1.0, 0.0, 0.0, 1.0], 2, 2);
        assert_eq!(id.forward(&SparseVec::from_dense(&[3.0, -4.0])).unwrap(), vec![3.0, -4.0]);
    }

    #[test]
    fn layouts_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = Dense::<f64>::random(5, 3, Activation::Tanh, &mut rng);
        let c = d.clone().with_layout(Layout::ColMajor);
        let x = [0.5, 0.0, -1.0, 2.0, 0.0];
        let sx = SparseVec::from_dense(&x);
        assert_eq!(d.forward(&x).unwrap().len(), 3);
        for (a, b) in d.pre_dense(&x).iter().zip(c.pre_sparse(&sx)) {
            assert!((a - b).abs() < 1e-12);
        }
        for r in 0..3 {
            assert!((d.unit(r, &x) - c.unit(r, &x)).abs() < 1e-12);
        }
        assert_eq!(c.with_layout(Layout::RowMajor), d);
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = QNetwork::<f64>::standard(Role::Evaluation, 4, 3, 3, true, &mut rng);
        let x = SparseVec::from_dense(&[0.5, -1.0, 0.25, 1.0]);
        let mut g = analytic_gradient(&net, &x, 1, 2.0).unwrap();
        let k = g.iter().position(|v| v.abs() > 1e-3).unwrap();
        g[k] = -g[k];
        let err = compare_with_numeric(&net, &x, 1, 2.0, 1e-4, &g).unwrap();
        assert!((err - 2.0).abs() < 1e-3, "{err}");
    }

    #[test]
    fn sync_copies_dense_and_keeps_lstm() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sel = QNetwork::<f64>::standard(Role::Selection, 6, 4, 5, true, &mut rng);
        let mut ev = QNetwork::<f64>::standard(Role::Evaluation, 6, 4, 5, true, &mut rng);
        let lstm_before = ev.layers[1].clone();
        sync_target_params(&sel, &mut ev).unwrap();
        assert_eq!(ev.layers[0], sel.layers[0]);
        assert_eq!(ev.layers[2], sel.layers[2]);
        assert_eq!(ev.layers[3], sel.layers[3]);
        assert_eq!(ev.layers[1], lstm_before);
        let mut copy = sel.clone();
        sync_target_params(&sel, &mut copy).unwrap();
        assert_eq!(copy, sel);
        let wide = QNetwork::<f64>::standard(Role::Evaluation, 7, 4, 5, true, &mut rng);
        assert!(sync_target_params(&wide, &mut ev).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = QNetwork::<f64>::standard(Role::Evaluation, 5, 4, 3, true, &mut rng);
        let mut buf = Vec::new();
        net.save(&mut buf).unwrap();
        let back = QNetwork::<f64>::load(&buf[..]).unwrap();
        assert_eq!(back.params().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), net.params().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert!(QNetwork::<f32>::load(&buf[..]).is_err());
        let small = QNetwork::<f32>::standard(Role::Selection, 5, 4, 3, false, &mut rng);
        let mut buf = Vec::new();
        small.save(&mut buf).unwrap();
        assert_eq!(QNetwork::<f32>::load(&buf[..]).unwrap(), small);
    }

    #[test]
    fn plateau_halves_rate() {
        let mut s = PlateauSchedule::new(0.01);
        s.window = 2;
        s.record(1.0);
        assert_eq!(s.record(1.0), 0.01);
        s.record(0.5);
        assert_eq!(s.record(0.5), 0.01);
        s.record(0.5);
        assert_eq!(s.record(0.5), 0.005);
    }
}
