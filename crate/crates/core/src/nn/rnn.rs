use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{gemm, Matrix, Module, Parameter, View};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RnnKind {
    Lstm,
    Gru,
}

impl RnnKind {
    /// Number of gate blocks stacked in the weight matrices.
    pub fn gates(self) -> usize {
        match self {
            RnnKind::Lstm => 4,
            RnnKind::Gru => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RnnKind::Lstm => "lstm",
            RnnKind::Gru => "gru",
        }
    }
}

/// Recurrent memory of a single sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct RnnState {
    pub hidden: Vec<f64>,
    /// Present iff the cell is an LSTM.
    pub cell: Option<Vec<f64>>,
}

impl RnnState {
    pub fn zeros(kind: RnnKind, hidden: usize) -> Self {
        RnnState {
            hidden: vec![0.0; hidden],
            cell: (kind == RnnKind::Lstm).then(|| vec![0.0; hidden]),
        }
    }
}

/// Recurrent memory of a batch, one row per sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchState {
    pub h: Matrix,
    pub c: Option<Matrix>,
}

impl BatchState {
    pub fn zeros(kind: RnnKind, batch: usize, hidden: usize) -> Self {
        BatchState {
            h: Matrix::zeros(batch, hidden),
            c: (kind == RnnKind::Lstm).then(|| Matrix::zeros(batch, hidden)),
        }
    }

    pub fn from_state(state: &RnnState) -> Self {
        BatchState {
            h: Matrix::row_vector(&state.hidden),
            c: state.cell.as_deref().map(Matrix::row_vector),
        }
    }

    pub fn row(&self, b: usize) -> RnnState {
        RnnState {
            hidden: self.h.row(b).to_vec(),
            cell: self.c.as_ref().map(|c| c.row(b).to_vec()),
        }
    }
}

/// LSTM or GRU cell.
///
/// Gate blocks are stacked row-wise: `[i; f; g; o]` for the LSTM and
/// `[z; r; n]` for the GRU. The GRU candidate uses a single bias outside the
/// reset product: `n = tanh(W_n x + r * (U_n h) + b_n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RnnCell {
    pub kind: RnnKind,
    /// `G*H x in`
    pub w_x: Parameter,
    /// `G*H x H`
    pub w_h: Parameter,
    /// `1 x G*H`
    pub bias: Parameter,
}

/// Everything the backward pass needs from a forward unroll.
#[derive(Clone, Debug)]
pub struct SeqCache {
    steps: usize,
    batch: usize,
    x: Matrix,
    /// Post-activation gate values, `T*B x G*H`.
    gates: Matrix,
    /// `h_{t-1}` for every step, `T*B x H`.
    h_prev: Matrix,
    /// LSTM: `c_t`, `T*B x H`.
    cells: Option<Matrix>,
    /// LSTM: `c_{-1}`, `B x H`.
    c0: Option<Matrix>,
    /// GRU: `U_n h_{t-1}`, `T*B x H`.
    hu_n: Option<Matrix>,
    /// Rows processed at each step (a prefix of the batch).
    active: Vec<usize>,
}

impl SeqCache {
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl RnnCell {
    /// Uniform initialisation in `±1/sqrt(H)`.
    pub fn new(kind: RnnKind, input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let g = kind.gates() * hidden;
        let bound = 1.0 / (hidden.max(1) as f64).sqrt();
        RnnCell {
            kind,
            w_x: Parameter::uniform(g, input, bound, rng),
            w_h: Parameter::uniform(g, hidden, bound, rng),
            bias: Parameter::uniform(1, g, bound, rng),
        }
    }

    pub fn zeros(kind: RnnKind, input: usize, hidden: usize) -> Self {
        let g = kind.gates() * hidden;
        RnnCell {
            kind,
            w_x: Parameter::zeros(g, input),
            w_h: Parameter::zeros(g, hidden),
            bias: Parameter::zeros(1, g),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_x.value.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_h.value.cols()
    }

    fn check_state(&self, has_cell: bool) -> Result<()> {
        match (self.kind, has_cell) {
            (RnnKind::Lstm, false) => Err(Error::config("LSTM step requires a cell state")),
            (RnnKind::Gru, true) => Err(Error::config("GRU step must not be given a cell state")),
            _ => Ok(()),
        }
    }

    /// Unrolls over `x` laid out time-major (`row = t * batch + b`) from
    /// `init` (zeros when `None`). Returns the hidden output of every step.
    pub fn forward_seq(
        &self,
        x: &Matrix,
        batch: usize,
        init: Option<&BatchState>,
    ) -> Result<(Matrix, SeqCache)> {
        let steps = if batch == 0 { 0 } else { x.rows() / batch };
        self.forward_packed(x, batch, init, &vec![batch; steps])
    }

    /// Like [`Self::forward_seq`], but step `t` only updates the first
    /// `active[t]` sequences; the rest keep their state and must carry no
    /// loss from that step on. `active` must be non-increasing, so callers
    /// sort sequences by length, longest first.
    pub fn forward_packed(
        &self,
        x: &Matrix,
        batch: usize,
        init: Option<&BatchState>,
        active: &[usize],
    ) -> Result<(Matrix, SeqCache)> {
        let in_dim = self.input_dim();
        let hd = self.hidden_dim();
        let gw = self.kind.gates() * hd;
        if x.cols() != in_dim {
            return Err(Error::config(format!(
                "{} expects input width {}, got {}",
                self.kind.name(),
                in_dim,
                x.cols()
            )));
        }
        if batch == 0 || x.rows() % batch != 0 {
            return Err(Error::config(format!(
                "{} rows are not a multiple of batch {}",
                x.rows(),
                batch
            )));
        }
        if let Some(s) = init {
            self.check_state(s.c.is_some())?;
            if s.h.shape() != (batch, hd) {
                return Err(Error::config("initial state shape mismatch"));
            }
        }
        let steps = x.rows() / batch;
        let tb = steps * batch;
        if active.len() != steps
            || active.iter().any(|&n| n > batch)
            || active.windows(2).any(|w| w[1] > w[0])
        {
            return Err(Error::config("active counts must be non-increasing and at most the batch"));
        }

        // Input projections for every step in one product.
        let mut gates = Matrix::zeros(tb, gw);
        for r in 0..tb {
            gates.row_mut(r).copy_from_slice(self.bias.value.as_slice());
        }
        gemm(
            1.0,
            View::new(x.as_slice(), tb, in_dim),
            View::new(self.w_x.value.as_slice(), gw, in_dim).t(),
            1.0,
            gates.as_mut_slice(),
        );

        let mut out = Matrix::zeros(tb, hd);
        let mut h_prev = Matrix::zeros(tb, hd);
        let mut hu = Matrix::zeros(batch, gw);
        let mut h: Matrix = init.map_or_else(|| Matrix::zeros(batch, hd), |s| s.h.clone());
        let lstm = self.kind == RnnKind::Lstm;
        let c0 = if lstm {
            Some(
                init.and_then(|s| s.c.clone())
                    .unwrap_or_else(|| Matrix::zeros(batch, hd)),
            )
        } else {
            None
        };
        let mut c = c0.clone();
        let mut cells = lstm.then(|| Matrix::zeros(tb, hd));
        let mut hu_n = (!lstm).then(|| Matrix::zeros(tb, hd));

        for t in 0..steps {
            let r0 = t * batch;
            let nb = active[t];
            h_prev.row_block_mut(r0, r0 + batch).copy_from_slice(h.as_slice());
            if nb > 0 {
                gemm(
                    1.0,
                    View::new(&h.as_slice()[..nb * hd], nb, hd),
                    View::new(self.w_h.value.as_slice(), gw, hd).t(),
                    0.0,
                    &mut hu.as_mut_slice()[..nb * gw],
                );
            }
            for b in 0..nb {
                let row = r0 + b;
                let g = gates.row_mut(row);
                let u = hu.row(b);
                match self.kind {
                    RnnKind::Lstm => {
                        for (gv, uv) in g.iter_mut().zip(u) {
                            *gv += uv;
                        }
                        for j in 0..hd {
                            g[j] = sigmoid(g[j]);
                            g[hd + j] = sigmoid(g[hd + j]);
                            g[2 * hd + j] = g[2 * hd + j].tanh();
                            g[3 * hd + j] = sigmoid(g[3 * hd + j]);
                        }
                        let cm = c.as_mut().expect("lstm cell");
                        let cr = cm.row_mut(b);
                        let hr = h.row_mut(b);
                        for j in 0..hd {
                            let cn = g[hd + j] * cr[j] + g[j] * g[2 * hd + j];
                            cr[j] = cn;
                            hr[j] = g[3 * hd + j] * cn.tanh();
                        }
                        cells
                            .as_mut()
                            .expect("lstm cells")
                            .row_mut(row)
                            .copy_from_slice(cr);
                    }
                    RnnKind::Gru => {
                        let hn = hu_n.as_mut().expect("gru cache").row_mut(row);
                        hn.copy_from_slice(&u[2 * hd..]);
                        let hr = h.row_mut(b);
                        for j in 0..hd {
                            let z = sigmoid(g[j] + u[j]);
                            let r = sigmoid(g[hd + j] + u[hd + j]);
                            let n = (g[2 * hd + j] + r * hn[j]).tanh();
                            g[j] = z;
                            g[hd + j] = r;
                            g[2 * hd + j] = n;
                            hr[j] = (1.0 - z) * n + z * hr[j];
                        }
                    }
                }
            }
            out.row_block_mut(r0, r0 + batch).copy_from_slice(h.as_slice());
        }

        Ok((
            out,
            SeqCache {
                steps,
                batch,
                x: x.clone(),
                gates,
                h_prev,
                cells,
                c0,
                hu_n,
                active: active.to_vec(),
            },
        ))
    }

    /// Backpropagation through time.
    ///
    /// `d_out` is the loss gradient w.r.t. every step's hidden output
    /// (`T*B x H`, zero where a step carries no loss). Parameter gradients are
    /// accumulated; the input gradient is returned when `need_dx` is set.
    pub fn backward_seq(
        &mut self,
        cache: &SeqCache,
        d_out: &Matrix,
        need_dx: bool,
    ) -> Result<Option<Matrix>> {
        let hd = self.hidden_dim();
        let gw = self.kind.gates() * hd;
        let in_dim = self.input_dim();
        let (steps, batch) = (cache.steps, cache.batch);
        let tb = steps * batch;
        debug_assert_eq!(d_out.shape(), (tb, hd));

        // Gradients w.r.t. the pre-activations fed by x (d_a) and by h (d_hu).
        // They coincide for the LSTM; for the GRU they differ in the n block.
        let mut d_a = Matrix::zeros(tb, gw);
        let mut d_hu = match self.kind {
            RnnKind::Gru => Some(Matrix::zeros(tb, gw)),
            RnnKind::Lstm => None,
        };
        let mut dh_next = Matrix::zeros(batch, hd);
        let mut dc_next = Matrix::zeros(batch, hd);
        let mut dh_direct = vec![0.0; batch * hd];

        for t in (0..steps).rev() {
            let r0 = t * batch;
            let nb = cache.active[t];
            for b in 0..nb {
                let row = r0 + b;
                let g = cache.gates.row(row);
                let dout = d_out.row(row);
                let dhn = dh_next.row(b);
                let da = d_a.row_mut(row);
                let hp = cache.h_prev.row(row);
                let dd = &mut dh_direct[b * hd..(b + 1) * hd];
                match self.kind {
                    RnnKind::Lstm => {
                        let c = cache.cells.as_ref().expect("lstm cells").row(row);
                        let c_prev = if t == 0 {
                            cache.c0.as_ref().expect("lstm c0").row(b)
                        } else {
                            cache.cells.as_ref().expect("lstm cells").row(row - batch)
                        };
                        let dcn = dc_next.row_mut(b);
                        for j in 0..hd {
                            let (i, f, gg, o) = (g[j], g[hd + j], g[2 * hd + j], g[3 * hd + j]);
                            let dh = dout[j] + dhn[j];
                            let tc = c[j].tanh();
                            let d_o = dh * tc;
                            let dc = dcn[j] + dh * o * (1.0 - tc * tc);
                            da[j] = dc * gg * i * (1.0 - i);
                            da[hd + j] = dc * c_prev[j] * f * (1.0 - f);
                            da[2 * hd + j] = dc * i * (1.0 - gg * gg);
                            da[3 * hd + j] = d_o * o * (1.0 - o);
                            dcn[j] = dc * f;
                            dd[j] = 0.0;
                        }
                    }
                    RnnKind::Gru => {
                        let hun = cache.hu_n.as_ref().expect("gru cache").row(row);
                        let dhu = d_hu.as_mut().expect("gru d_hu").row_mut(row);
                        for j in 0..hd {
                            let (z, r, n) = (g[j], g[hd + j], g[2 * hd + j]);
                            let dh = dout[j] + dhn[j];
                            let dn = dh * (1.0 - z);
                            let dz = dh * (hp[j] - n);
                            let dan = dn * (1.0 - n * n);
                            let dr = dan * hun[j];
                            let daz = dz * z * (1.0 - z);
                            let dar = dr * r * (1.0 - r);
                            da[j] = daz;
                            da[hd + j] = dar;
                            da[2 * hd + j] = dan;
                            dhu[j] = daz;
                            dhu[hd + j] = dar;
                            dhu[2 * hd + j] = dan * r;
                            dd[j] = dh * z;
                        }
                    }
                }
            }
            // Rows past `nb` are inactive here and at every later step, so
            // their gradients stay zero.
            let src = match &d_hu {
                Some(m) => m.row_block(r0, r0 + nb),
                None => d_a.row_block(r0, r0 + nb),
            };
            if src.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    step: t as u64,
                    what: format!("non-finite {} gradient at timestep {t}", self.kind.name()),
                });
            }
            let dhn = dh_next.as_mut_slice();
            dhn.copy_from_slice(&dh_direct);
            if nb > 0 {
                gemm(
                    1.0,
                    View::new(src, nb, gw),
                    View::new(self.w_h.value.as_slice(), gw, hd),
                    1.0,
                    &mut dhn[..nb * hd],
                );
            }
        }

        let d_h_mat = d_hu.as_ref().unwrap_or(&d_a);
        gemm(
            1.0,
            View::new(d_h_mat.as_slice(), tb, gw).t(),
            View::new(cache.h_prev.as_slice(), tb, hd),
            1.0,
            self.w_h.grad.as_mut_slice(),
        );
        gemm(
            1.0,
            View::new(d_a.as_slice(), tb, gw).t(),
            View::new(cache.x.as_slice(), tb, in_dim),
            1.0,
            self.w_x.grad.as_mut_slice(),
        );
        let db = self.bias.grad.as_mut_slice();
        for r in 0..tb {
            for (g, d) in db.iter_mut().zip(d_a.row(r)) {
                *g += d;
            }
        }
        Ok(need_dx.then(|| d_a.matmul(&self.w_x.value)))
    }

    /// One step for a batch, without caching.
    pub fn step_batch(&self, x: &Matrix, state: &BatchState) -> Result<BatchState> {
        let batch = x.rows();
        let (out, cache) = self.forward_seq(x, batch, Some(state))?;
        Ok(BatchState {
            h: out,
            c: cache.cells,
        })
    }

    fn step_single(&self, x: &[f64], state: &RnnState) -> Result<RnnState> {
        self.check_state(state.cell.is_some())?;
        let next = self.step_batch(&Matrix::row_vector(x), &BatchState::from_state(state))?;
        Ok(next.row(0))
    }
}

impl Module for RnnCell {
    fn params(&self) -> Vec<&Parameter> {
        vec![&self.w_x, &self.w_h, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.w_x, &mut self.w_h, &mut self.bias]
    }
}

/// One LSTM step: `c' = f*c + i*g`, `h' = o*tanh(c')`.
pub fn lstm_cell_step(x: &[f64], state: &RnnState, cell: &RnnCell) -> Result<RnnState> {
    if cell.kind != RnnKind::Lstm {
        return Err(Error::config("lstm_cell_step called with a GRU cell"));
    }
    cell.step_single(x, state)
}

/// One GRU step: `h' = (1-z)*n + z*h`.
pub fn gru_cell_step(x: &[f64], state: &RnnState, cell: &RnnCell) -> Result<RnnState> {
    if cell.kind != RnnKind::Gru {
        return Err(Error::config("gru_cell_step called with an LSTM cell"));
    }
    cell.step_single(x, state)
}

/// Result of [`unroll_and_backprop`].
#[derive(Clone, Debug)]
pub struct Unrolled {
    pub outputs: Vec<Vec<f64>>,
    pub loss: f64,
}

/// Unrolls `cell` over a single sequence, evaluates `loss(t, h_t)` on every
/// step whose mask is 1, and accumulates parameter gradients of the masked
/// loss sum into the cell.
///
/// `loss` returns the step loss and its gradient w.r.t. `h_t`. Steps with mask
/// 0 never call `loss`, so their gradient contribution is exactly zero.
pub fn unroll_and_backprop(
    cell: &mut RnnCell,
    inputs: &[Vec<f64>],
    init: &RnnState,
    mask: &[f64],
    mut loss: impl FnMut(usize, &[f64]) -> (f64, Vec<f64>),
) -> Result<Unrolled> {
    if inputs.len() != mask.len() {
        return Err(Error::config(format!(
            "mask length {} does not match sequence length {}",
            mask.len(),
            inputs.len()
        )));
    }
    if inputs.is_empty() {
        return Ok(Unrolled {
            outputs: Vec::new(),
            loss: 0.0,
        });
    }
    cell.check_state(init.cell.is_some())?;
    let in_dim = cell.input_dim();
    let mut x = Matrix::zeros(inputs.len(), in_dim);
    for (t, v) in inputs.iter().enumerate() {
        if v.len() != in_dim {
            return Err(Error::config(format!(
                "input {t} has width {}, expected {in_dim}",
                v.len()
            )));
        }
        x.row_mut(t).copy_from_slice(v);
    }
    let (out, cache) = cell.forward_seq(&x, 1, Some(&BatchState::from_state(init)))?;
    let hd = cell.hidden_dim();
    let mut d_out = Matrix::zeros(inputs.len(), hd);
    let mut total = 0.0;
    for (t, &m) in mask.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        let (l, g) = loss(t, out.row(t));
        total += m * l;
        for (d, gv) in d_out.row_mut(t).iter_mut().zip(&g) {
            *d = m * gv;
        }
    }
    cell.backward_seq(&cache, &d_out, false)?;
    Ok(Unrolled {
        outputs: (0..inputs.len()).map(|t| out.row(t).to_vec()).collect(),
        loss: total,
    })
}
