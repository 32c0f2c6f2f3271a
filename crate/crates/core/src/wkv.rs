//! The WKV operator family: exponentially decayed key-weighted averages of
//! value vectors, in every variant the architecture uses.
//!
//! Two execution forms compute the same causal quantity:
//!
//! * [`wkv_parallel`] sweeps a whole `T×d` sequence and returns one output
//!   row per position (the training form);
//! * [`wkv_sequential_step`] advances a [`WkvState`] by one token in O(d)
//!   (the inference form).
//!
//! Sign convention: the decay `w >= 0` enters as `exp(-w)` in the
//! recurrence, which makes the two forms equivalent — the per-position
//! output is `sum_{i<=t} exp(k_i - (t-i)w) v_i / sum_{i<=t} exp(k_i - (t-i)w)`.
//!
//! All accumulators are kept scaled by a running per-channel maximum `p`,
//! so no intermediate ever exponentiates a raw key: the operator stays
//! finite for keys far beyond the ~710 overflow point of the literal
//! recurrence.
//!
//! The remaining variants are bidirectional decay ([`wkv_bidirectional`]),
//! its m-fold recurrent application ([`re_wkv`]), weighted combinations of
//! scan directions ([`multi_directional_wkv`]), the matrix-valued state
//! update ([`matrix_state_step`]) and input-dependent decay
//! ([`dynamic_decay_update`]).

use alloc::format;
use alloc::vec;

use crate::error::{Error, Result};
use crate::fmath;
use crate::tensor::{matmul, Tensor};

/// Per-channel decay rates, non-negative by construction.
///
/// Larger entries forget faster; `w = 0` averages the whole prefix
/// uniformly. A scalar decay is the `splat` special case.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayVector {
    w: Tensor,
}

impl DecayVector {
    pub fn new(w: Tensor) -> Result<Self> {
        if w.rank() != 1 {
            return Err(Error::Dimension(format!(
                "decay vector must be rank-1, got shape {:?}",
                w.shape()
            )));
        }
        if w.data().iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::Parameter(
                "decay entries must be finite and >= 0".into(),
            ));
        }
        Ok(DecayVector { w })
    }

    /// Scalar decay broadcast across `d` channels.
    pub fn splat(d: usize, value: f64) -> Result<Self> {
        DecayVector::new(Tensor::filled(&[d], value))
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        self.w.data()
    }

    pub fn tensor(&self) -> &Tensor {
        &self.w
    }

    pub fn min(&self) -> f64 {
        self.w.data().iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }
}

/// Running state of the sequential WKV recurrence.
///
/// `a` and `b` are the denominator/numerator accumulators stored scaled by
/// `exp(-p)`, where `p` is the running maximum of the log-domain weights.
/// The representable output is `b / a`; it is finite whenever every
/// ingested key was.
#[derive(Debug, Clone, PartialEq)]
pub struct WkvState {
    pub a: Tensor,
    pub b: Tensor,
    pub p: Tensor,
}

impl WkvState {
    /// Fresh empty state: zero accumulators, `p = -inf`.
    pub fn new(d: usize) -> Self {
        WkvState {
            a: Tensor::zeros(&[d]),
            b: Tensor::zeros(&[d]),
            p: Tensor::filled(&[d], f64::NEG_INFINITY),
        }
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }
}

/// One scaled recurrence step for a single channel.
///
/// Both execution forms go through this function, so they agree not just
/// within tolerance but in exact arithmetic order.
#[inline(always)]
fn step_channel(a: f64, b: f64, p: f64, k: f64, v: f64, w: f64) -> (f64, f64, f64, f64) {
    let q = (p - w).max(k);
    let scale_state = fmath::exp(p - w - q); // 0 when p = -inf
    let scale_in = fmath::exp(k - q);
    let a_next = scale_state * a + scale_in;
    let b_next = scale_state * b + scale_in * v;
    (a_next, b_next, q, b_next / a_next)
}

fn check_sequence_shapes(k: &Tensor, v: &Tensor, w: &DecayVector) -> Result<(usize, usize)> {
    if k.rank() != 2 || v.rank() != 2 {
        return Err(Error::Dimension(format!(
            "expected rank-2 K and V, got {:?} and {:?}",
            k.shape(),
            v.shape()
        )));
    }
    if k.shape() != v.shape() {
        return Err(Error::Dimension(format!(
            "K shape {:?} and V shape {:?} differ",
            k.shape(),
            v.shape()
        )));
    }
    let (t, d) = (k.dim(0), k.dim(1));
    if t == 0 {
        return Err(Error::EmptySequence);
    }
    if w.len() != d {
        return Err(Error::Dimension(format!(
            "decay has {} channels, sequence has {d}",
            w.len()
        )));
    }
    Ok((t, d))
}

/// Causal WKV over a whole sequence: one output row per position, each the
/// decayed key-weighted average of the value prefix. O(T·d).
pub fn wkv_parallel(k: &Tensor, v: &Tensor, w: &DecayVector) -> Result<Tensor> {
    let (t_len, d) = check_sequence_shapes(k, v, w)?;
    let wv = w.values();
    let mut a = vec![0.0; d];
    let mut b = vec![0.0; d];
    let mut p = vec![f64::NEG_INFINITY; d];
    let mut out = Tensor::zeros(&[t_len, d]);
    for t in 0..t_len {
        let krow = k.row(t);
        let vrow = v.row(t);
        let orow = out.row_mut(t);
        for c in 0..d {
            let (an, bn, pn, y) = step_channel(a[c], b[c], p[c], krow[c], vrow[c], wv[c]);
            a[c] = an;
            b[c] = bn;
            p[c] = pn;
            orow[c] = y;
        }
    }
    Ok(out)
}

/// Advances the recurrence by one token and returns this position's WKV.
///
/// Matches the corresponding row of [`wkv_parallel`] on the same prefix.
pub fn wkv_sequential_step(
    state: &mut WkvState,
    k_t: &Tensor,
    v_t: &Tensor,
    w: &DecayVector,
) -> Result<Tensor> {
    let d = state.dim();
    if k_t.len() != d || v_t.len() != d || w.len() != d {
        return Err(Error::Dimension(format!(
            "state dim {d} vs k {} / v {} / w {}",
            k_t.len(),
            v_t.len(),
            w.len()
        )));
    }
    if !k_t.all_finite() || !v_t.all_finite() {
        return Err(Error::Numeric("non-finite key or value".into()));
    }
    let wv = w.values();
    let mut out = Tensor::zeros(&[d]);
    let (a, b, p) = (state.a.data_mut(), state.b.data_mut(), state.p.data_mut());
    for c in 0..d {
        let (an, bn, pn, y) = step_channel(a[c], b[c], p[c], k_t.data()[c], v_t.data()[c], wv[c]);
        a[c] = an;
        b[c] = bn;
        p[c] = pn;
        out.data_mut()[c] = y;
    }
    Ok(out)
}

/// Exact gradients of [`wkv_parallel`] with respect to keys, values and the
/// decay, contracted against `upstream`.
///
/// Runs in O(T·d) using one forward scan (re-deriving the scaled
/// accumulators) and one suffix scan; every exponent is kept <= 0 by the
/// same running-maximum bookkeeping as the forward pass.
pub fn wkv_parallel_backward(
    k: &Tensor,
    v: &Tensor,
    w: &DecayVector,
    upstream: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (t_len, d) = check_sequence_shapes(k, v, w)?;
    if upstream.shape() != k.shape() {
        return Err(Error::Dimension(format!(
            "upstream shape {:?} does not match sequence shape {:?}",
            upstream.shape(),
            k.shape()
        )));
    }
    let wv = w.values();
    let n = t_len * d;

    // Forward scan, caching the scaled accumulators per position.
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    {
        let mut ca = vec![0.0; d];
        let mut cb = vec![0.0; d];
        let mut cp = vec![f64::NEG_INFINITY; d];
        for t in 0..t_len {
            let krow = k.row(t);
            let vrow = v.row(t);
            for c in 0..d {
                let (an, bn, pn, yv) =
                    step_channel(ca[c], cb[c], cp[c], krow[c], vrow[c], wv[c]);
                ca[c] = an;
                cb[c] = bn;
                cp[c] = pn;
                let idx = t * d + c;
                a[idx] = an;
                b[idx] = bn;
                p[idx] = pn;
                y[idx] = yv;
            }
        }
    }

    // Decay gradient: forward scan of the lag-weighted sums
    //   D_t = sum_{i<=t} (t-i) e^{k_i-(t-i)w} v_i,  E_t likewise without v,
    // kept scaled by e^{p_t}; each position contributes
    //   -g_t (D_t - y_t E_t) / A_t.
    let mut gw = Tensor::zeros(&[d]);
    {
        let mut dd = vec![0.0; d];
        let mut ee = vec![0.0; d];
        let gw_data = gw.data_mut();
        for t in 0..t_len {
            for c in 0..d {
                let idx = t * d + c;
                if t > 0 {
                    let prev = (t - 1) * d + c;
                    let rescale = fmath::exp(p[prev] - wv[c] - p[idx]);
                    dd[c] = (dd[c] + b[prev]) * rescale;
                    ee[c] = (ee[c] + a[prev]) * rescale;
                }
                let g = upstream.data()[idx];
                gw_data[c] -= g * (dd[c] - y[idx] * ee[c]) / a[idx];
            }
        }
    }

    // Key/value gradients: suffix scans of
    //   S_i = sum_{t>=i} (g_t / A_t) e^{-(t-i)w},
    //   R_i = sum_{t>=i} (g_t y_t / A_t) e^{-(t-i)w},
    // scaled by a suffix running maximum q. Then
    //   gV_i = e^{k_i + q_i} s_i,  gK_i = e^{k_i + q_i} (v_i s_i - r_i),
    // with k_i + q_i <= 0 by construction.
    let mut gk = Tensor::zeros(&[t_len, d]);
    let mut gv = Tensor::zeros(&[t_len, d]);
    {
        let mut s = vec![0.0; d];
        let mut r = vec![0.0; d];
        let mut q = vec![f64::NEG_INFINITY; d];
        for t in (0..t_len).rev() {
            let krow = k.row(t);
            let vrow = v.row(t);
            for c in 0..d {
                let idx = t * d + c;
                let q_next = (q[c] - wv[c]).max(-p[idx]);
                let carry = fmath::exp(q[c] - wv[c] - q_next); // 0 on first step
                let inject = upstream.data()[idx] / a[idx] * fmath::exp(-p[idx] - q_next);
                s[c] = s[c] * carry + inject;
                r[c] = r[c] * carry + inject * y[idx];
                q[c] = q_next;
                let scale = fmath::exp(krow[c] + q[c]);
                gv.data_mut()[idx] = scale * s[c];
                gk.data_mut()[idx] = scale * (vrow[c] * s[c] - r[c]);
            }
        }
    }

    Ok((gk, gv, gw))
}

/// Symmetric-decay WKV: every position attends to the whole sequence with
/// weight `exp(k_i - |t-i| w)`.
///
/// Computed as two causal scans (forward and reversed) merged per
/// position, which keeps it O(T·d) and makes reversal equivariance exact:
/// reversing the input rows of K and V reverses the output rows bit for
/// bit.
pub fn wkv_bidirectional(k: &Tensor, v: &Tensor, w: &DecayVector) -> Result<Tensor> {
    let (t_len, d) = check_sequence_shapes(k, v, w)?;
    let wv = w.values();
    let n = t_len * d;

    let mut fa = vec![0.0; n];
    let mut fb = vec![0.0; n];
    let mut fp = vec![0.0; n];
    {
        let mut a = vec![0.0; d];
        let mut b = vec![0.0; d];
        let mut p = vec![f64::NEG_INFINITY; d];
        for t in 0..t_len {
            let krow = k.row(t);
            let vrow = v.row(t);
            for c in 0..d {
                let (an, bn, pn, _) = step_channel(a[c], b[c], p[c], krow[c], vrow[c], wv[c]);
                a[c] = an;
                b[c] = bn;
                p[c] = pn;
                let idx = t * d + c;
                fa[idx] = an;
                fb[idx] = bn;
                fp[idx] = pn;
            }
        }
    }

    let mut out = Tensor::zeros(&[t_len, d]);
    {
        let mut a = vec![0.0; d];
        let mut b = vec![0.0; d];
        let mut p = vec![f64::NEG_INFINITY; d];
        for t in (0..t_len).rev() {
            let krow = k.row(t);
            let vrow = v.row(t);
            for c in 0..d {
                let (an, bn, pn, _) = step_channel(a[c], b[c], p[c], krow[c], vrow[c], wv[c]);
                a[c] = an;
                b[c] = bn;
                p[c] = pn;
                let idx = t * d + c;
                // Merge the two causal scans; position t is in both, so its
                // own term is subtracted once.
                let merged_p = fp[idx].max(pn);
                let sf = fmath::exp(fp[idx] - merged_p);
                let sb = fmath::exp(pn - merged_p);
                let center = fmath::exp(krow[c] - merged_p);
                let den = fa[idx] * sf + an * sb - center;
                let num = fb[idx] * sf + bn * sb - center * vrow[c];
                out.data_mut()[idx] = num / den;
            }
        }
    }
    Ok(out)
}

/// Recurrent bidirectional WKV: applies [`wkv_bidirectional`] `m` times,
/// feeding each pass's output back in as the values.
pub fn re_wkv(k: &Tensor, v: &Tensor, w: &DecayVector, m: usize) -> Result<Tensor> {
    if m == 0 {
        return Err(Error::Parameter("re_wkv recurrence count m must be >= 1".into()));
    }
    let mut values = v.clone();
    for _ in 0..m {
        values = wkv_bidirectional(k, &values, w)?;
    }
    Ok(values)
}

/// Weighted sum of directional WKV scans over a 1-D sequence.
///
/// The direction set is {forward, backward}: the forward term is the
/// causal scan, the backward term the causal scan of the time-reversed
/// sequence, re-reversed.
pub fn multi_directional_wkv(
    k: &Tensor,
    v: &Tensor,
    w: &DecayVector,
    direction_weights: &Tensor,
) -> Result<Tensor> {
    if direction_weights.len() != 2 {
        return Err(Error::Dimension(format!(
            "1-D input has 2 scan directions, got {} weights",
            direction_weights.len()
        )));
    }
    let forward = wkv_parallel(k, v, w)?;
    let backward = reverse_rows(&wkv_parallel(&reverse_rows(k), &reverse_rows(v), w)?);
    let wf = direction_weights.data()[0];
    let wb = direction_weights.data()[1];
    forward.scale(wf).add(&backward.scale(wb))
}

/// Reverses the row order of a rank-2 tensor.
pub fn reverse_rows(x: &Tensor) -> Tensor {
    let (t_len, d) = (x.dim(0), x.dim(1));
    let mut out = Tensor::zeros(&[t_len, d]);
    for t in 0..t_len {
        out.row_mut(t).copy_from_slice(x.row(t_len - 1 - t));
    }
    out
}

/// Matrix-valued recurrent state and the decay gate applied at the last
/// step.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixState {
    /// `d_k × d_v` state matrix.
    pub s: Tensor,
    /// Gate applied at the most recent update (kept for gate recurrences).
    pub alpha: Tensor,
}

impl MatrixState {
    /// Zero state with a unit gate.
    pub fn new(d_k: usize, d_v: usize) -> Self {
        MatrixState {
            s: Tensor::zeros(&[d_k, d_v]),
            alpha: Tensor::filled(&[d_k], 1.0),
        }
    }
}

/// One step of the matrix-state recurrence:
/// `S_t = alpha_t ⊙ S_{t-1} + k_tᵀ v_t`, output `o_t = r_t ⊙ (S_t v_t)`.
///
/// `alpha_t` is either `d_k × d_v` (full elementwise gate) or `d_k`
/// (broadcast across each row). The readout multiplies the state by the
/// value vector and gates elementwise with the receptance, exactly in
/// that order.
pub fn matrix_state_step(
    state: &mut MatrixState,
    k_t: &Tensor,
    v_t: &Tensor,
    r_t: &Tensor,
    alpha_t: &Tensor,
) -> Result<Tensor> {
    let (d_k, d_v) = (state.s.dim(0), state.s.dim(1));
    if k_t.len() != d_k || v_t.len() != d_v || r_t.len() != d_k {
        return Err(Error::Dimension(format!(
            "matrix state is {d_k}x{d_v}, got k {} / v {} / r {}",
            k_t.len(),
            v_t.len(),
            r_t.len()
        )));
    }
    let broadcast_rows = match alpha_t.shape() {
        s if s == [d_k, d_v] => false,
        s if s == [d_k] => true,
        other => {
            return Err(Error::Dimension(format!(
                "alpha shape {other:?} is neither [{d_k}, {d_v}] nor [{d_k}]"
            )))
        }
    };
    let mut out = Tensor::zeros(&[d_k]);
    for i in 0..d_k {
        let ki = k_t.data()[i];
        let row = state.s.row_mut(i);
        let mut acc = 0.0;
        for j in 0..d_v {
            let gate = if broadcast_rows {
                alpha_t.data()[i]
            } else {
                alpha_t.data()[i * d_v + j]
            };
            row[j] = gate * row[j] + ki * v_t.data()[j];
            acc += row[j] * v_t.data()[j];
        }
        out.data_mut()[i] = r_t.data()[i] * acc;
    }
    state.alpha = alpha_t.clone();
    Ok(out)
}

/// Learned affine maps behind the input-dependent decay and gate updates.
///
/// `w_t = softplus(x_t·A_w + u_w ⊙ w_{t-1} + b_w)` keeps the decay
/// non-negative; `alpha_t = sigmoid(x_t·A_g + u_g ⊙ alpha_{t-1} + b_g)`
/// keeps the gate in (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicDecayParams {
    pub a_w: Tensor,
    pub u_w: Tensor,
    pub b_w: Tensor,
    pub a_g: Tensor,
    pub u_g: Tensor,
    pub b_g: Tensor,
}

impl DynamicDecayParams {
    pub fn zeros(d: usize) -> Self {
        DynamicDecayParams {
            a_w: Tensor::zeros(&[d, d]),
            u_w: Tensor::zeros(&[d]),
            b_w: Tensor::zeros(&[d]),
            a_g: Tensor::zeros(&[d, d]),
            u_g: Tensor::zeros(&[d]),
            b_g: Tensor::zeros(&[d]),
        }
    }

    pub fn dim(&self) -> usize {
        self.u_w.len()
    }
}

/// Updates the decay rate and state gate from the current input and their
/// previous values.
pub fn dynamic_decay_update(
    x_t: &Tensor,
    w_prev: &DecayVector,
    alpha_prev: &Tensor,
    params: &DynamicDecayParams,
) -> Result<(DecayVector, Tensor)> {
    let d = params.dim();
    if x_t.len() != d || w_prev.len() != d || alpha_prev.len() != d {
        return Err(Error::Dimension(format!(
            "dynamic decay dim {d} vs x {} / w {} / alpha {}",
            x_t.len(),
            w_prev.len(),
            alpha_prev.len()
        )));
    }
    let x_row = Tensor::matrix(1, d, x_t.data().to_vec())?;
    let wx = matmul(&x_row, &params.a_w)?;
    let gx = matmul(&x_row, &params.a_g)?;
    let mut w_next = Tensor::zeros(&[d]);
    let mut alpha_next = Tensor::zeros(&[d]);
    for c in 0..d {
        let w_pre = wx.data()[c] + params.u_w.data()[c] * w_prev.values()[c] + params.b_w.data()[c];
        w_next.data_mut()[c] = fmath::softplus(w_pre);
        let g_pre =
            gx.data()[c] + params.u_g.data()[c] * alpha_prev.data()[c] + params.b_g.data()[c];
        alpha_next.data_mut()[c] = fmath::sigmoid(g_pre);
    }
    Ok((DecayVector::new(w_next)?, alpha_next))
}

/// Horizon beyond which decayed attention weights drop below `epsilon`:
/// `min(n, -ln(epsilon) / min(w))`.
///
/// Natural logarithm, consistent with the `exp`-based weights.
pub fn effective_context(w: &DecayVector, epsilon: f64, n: usize) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Parameter(format!("epsilon {epsilon} must lie in (0, 1)")));
    }
    if n == 0 {
        return Err(Error::Parameter("sequence length n must be positive".into()));
    }
    let min_w = w.min();
    if min_w <= 0.0 {
        return Err(Error::DegenerateDecay { min_decay: min_w });
    }
    Ok((n as f64).min(-fmath::ln(epsilon) / min_w))
}
