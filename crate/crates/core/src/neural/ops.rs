//! Forward and backward passes for the tagger's layer primitives.
//!
//! Backward functions take the upstream gradient and return gradients for
//! every input; parameter gradients are accumulated by the caller.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use super::{sigmoid_arr1, sigmoid_arr2};
use crate::error::{Error, Result};

fn shape_err(msg: String) -> Error {
    Error::Shape(msg)
}

// ---------------------------------------------------------------------------
// Narrow convolution with tanh (one filter)
// ---------------------------------------------------------------------------

/// Feature map of a narrow convolution between a d x l character matrix
/// and a d x u filter: `f[i] = tanh(<Cw[:, i..i+u], H> + b)` with the
/// Frobenius inner product, for i in 0..l-u+1.
pub fn narrow_conv_tanh(
    cw: ArrayView2<f64>,
    h: ArrayView2<f64>,
    b: f64,
) -> Result<Array1<f64>> {
    let (d, l) = cw.dim();
    let (dh, u) = h.dim();
    if d != dh {
        return Err(shape_err(format!(
            "filter rows {dh} do not match character dim {d}"
        )));
    }
    if l < u || u == 0 {
        return Err(shape_err(format!(
            "word length {l} shorter than filter width {u}"
        )));
    }
    let mut f = Array1::zeros(l - u + 1);
    for i in 0..=(l - u) {
        let window = cw.slice(s![.., i..i + u]);
        let mut acc = b;
        for (a, w) in window.iter().zip(h.iter()) {
            acc += a * w;
        }
        f[i] = acc.tanh();
    }
    Ok(f)
}

/// Gradients of [`narrow_conv_tanh`]; `f` is the forward output.
pub fn narrow_conv_tanh_backward(
    cw: ArrayView2<f64>,
    h: ArrayView2<f64>,
    f: &Array1<f64>,
    d_f: ArrayView1<f64>,
) -> (Array2<f64>, Array2<f64>, f64) {
    let (_, u) = h.dim();
    let mut d_cw = Array2::zeros(cw.dim());
    let mut d_h = Array2::zeros(h.dim());
    let mut d_b = 0.0;
    for (i, (&fv, &dv)) in f.iter().zip(d_f.iter()).enumerate() {
        let d_pre = dv * (1.0 - fv * fv);
        if d_pre == 0.0 {
            continue;
        }
        d_b += d_pre;
        let window = cw.slice(s![.., i..i + u]);
        let mut d_window = d_cw.slice_mut(s![.., i..i + u]);
        ndarray::Zip::from(&mut d_window)
            .and(&h)
            .for_each(|dw, &hw| *dw += d_pre * hw);
        ndarray::Zip::from(&mut d_h)
            .and(&window)
            .for_each(|dh, &cv| *dh += d_pre * cv);
    }
    (d_cw, d_h, d_b)
}

/// Sliding windows of width `u` flattened into rows: (l-u+1) x (d*u).
/// Shared by every filter of the same width, turning the filter bank into
/// one matrix product.
pub fn conv_windows(cw: ArrayView2<f64>, u: usize) -> Result<Array2<f64>> {
    let (d, l) = cw.dim();
    if l < u || u == 0 {
        return Err(shape_err(format!(
            "word length {l} shorter than filter width {u}"
        )));
    }
    let positions = l - u + 1;
    let mut windows = Array2::zeros((positions, d * u));
    for i in 0..positions {
        for (k, &v) in cw.slice(s![.., i..i + u]).iter().enumerate() {
            windows[(i, k)] = v;
        }
    }
    Ok(windows)
}

/// All feature maps of a same-width filter bank at once:
/// returns tanh(windows . filters^T + bias), shape (positions x m).
/// `filters` holds one row-major flattened d x u filter per row.
pub fn conv_bank_forward(
    windows: &Array2<f64>,
    filters: ArrayView2<f64>,
    bias: ArrayView1<f64>,
) -> Array2<f64> {
    let mut pre = windows.dot(&filters.t());
    pre += &bias;
    pre.mapv_inplace(f64::tanh);
    pre
}

// ---------------------------------------------------------------------------
// Max-over-time pooling
// ---------------------------------------------------------------------------

/// Maximum of a feature map and the first index attaining it. The
/// backward pass routes the gradient only to that index.
pub fn max_over_time(f: ArrayView1<f64>) -> Result<(f64, usize)> {
    if f.is_empty() {
        return Err(shape_err("max_over_time on an empty feature map".into()));
    }
    let mut best = f[0];
    let mut arg = 0;
    for (i, &v) in f.iter().enumerate().skip(1) {
        if v > best {
            best = v;
            arg = i;
        }
    }
    Ok((best, arg))
}

// ---------------------------------------------------------------------------
// Highway layer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct HighwayCache {
    /// Transform gate sigma(y W_T^T + b_T), B x N.
    pub t_gate: Array2<f64>,
    /// Pre-activation y W^T + b.
    pub lin: Array2<f64>,
    /// ReLU(lin).
    pub relu: Array2<f64>,
}

/// Batched highway layer: `x = T * relu(y W^T + b) + (1 - T) * y` with
/// `T = sigmoid(y W_T^T + b_T)`. Weight matrices are (N x N).
pub fn highway_forward_batch(
    y: ArrayView2<f64>,
    w: ArrayView2<f64>,
    b: ArrayView1<f64>,
    w_t: ArrayView2<f64>,
    b_t: ArrayView1<f64>,
) -> Result<(Array2<f64>, HighwayCache)> {
    let n = y.ncols();
    if w.dim() != (n, n) || w_t.dim() != (n, n) || b.len() != n || b_t.len() != n {
        return Err(shape_err(format!(
            "highway parameter shapes do not match input width {n}"
        )));
    }
    let mut lin = y.dot(&w.t());
    lin += &b;
    let relu = lin.mapv(|v| v.max(0.0));
    let mut gate_pre = y.dot(&w_t.t());
    gate_pre += &b_t;
    let t_gate = sigmoid_arr2(&gate_pre);
    let x = &t_gate * &relu + (1.0 - &t_gate) * &y;
    Ok((
        x,
        HighwayCache {
            t_gate,
            lin,
            relu,
        },
    ))
}

#[derive(Debug, Clone)]
pub struct HighwayGrads {
    pub d_y: Array2<f64>,
    pub d_w: Array2<f64>,
    pub d_b: Array1<f64>,
    pub d_w_t: Array2<f64>,
    pub d_b_t: Array1<f64>,
}

pub fn highway_backward_batch(
    y: ArrayView2<f64>,
    w: ArrayView2<f64>,
    w_t: ArrayView2<f64>,
    cache: &HighwayCache,
    d_x: ArrayView2<f64>,
) -> HighwayGrads {
    let t = &cache.t_gate;
    let d_relu = &d_x * t;
    let d_lin = &d_relu * &cache.lin.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
    let d_t = &d_x * &(&cache.relu - &y);
    let d_gate_pre = &d_t * t * (1.0 - t);

    let d_y = d_lin.dot(&w) + d_gate_pre.dot(&w_t) + &d_x * &(1.0 - t);
    HighwayGrads {
        d_y,
        d_w: d_lin.t().dot(&y),
        d_b: d_lin.sum_axis(Axis(0)),
        d_w_t: d_gate_pre.t().dot(&y),
        d_b_t: d_gate_pre.sum_axis(Axis(0)),
    }
}

/// Single-sample highway layer (spec form).
pub fn highway_forward(
    y: ArrayView1<f64>,
    w: ArrayView2<f64>,
    b: ArrayView1<f64>,
    w_t: ArrayView2<f64>,
    b_t: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    let y2 = y.insert_axis(Axis(0));
    let (x, _) = highway_forward_batch(y2, w, b, w_t, b_t)?;
    Ok(x.row(0).to_owned())
}

// ---------------------------------------------------------------------------
// LSTM cell
// ---------------------------------------------------------------------------

/// Post-activation gate values kept for the backward pass; all B x H.
#[derive(Debug, Clone)]
pub struct LstmCache {
    pub i: Array2<f64>,
    pub f: Array2<f64>,
    pub g: Array2<f64>,
    pub o: Array2<f64>,
    pub tanh_c: Array2<f64>,
}

/// One batched LSTM step. Gate packing along the 4H axis is
/// input / forget / candidate / output. `wx` is (4H x In), `wh` (4H x H).
pub fn lstm_step_batch(
    x: ArrayView2<f64>,
    h_prev: ArrayView2<f64>,
    c_prev: ArrayView2<f64>,
    wx: ArrayView2<f64>,
    wh: ArrayView2<f64>,
    b: ArrayView1<f64>,
) -> Result<(Array2<f64>, Array2<f64>, LstmCache)> {
    let hidden = wh.ncols();
    if wx.nrows() != 4 * hidden || wh.nrows() != 4 * hidden || b.len() != 4 * hidden {
        return Err(shape_err("LSTM parameter shapes disagree".into()));
    }
    if x.ncols() != wx.ncols() || h_prev.ncols() != hidden || c_prev.ncols() != hidden {
        return Err(shape_err(format!(
            "LSTM input shapes ({}, {}, {}) do not match parameters ({}, {})",
            x.ncols(),
            h_prev.ncols(),
            c_prev.ncols(),
            wx.ncols(),
            hidden
        )));
    }
    let mut gates = x.dot(&wx.t()) + h_prev.dot(&wh.t());
    gates += &b;

    let i = sigmoid_arr2(&gates.slice(s![.., 0..hidden]).to_owned());
    let f = sigmoid_arr2(&gates.slice(s![.., hidden..2 * hidden]).to_owned());
    let g = gates.slice(s![.., 2 * hidden..3 * hidden]).mapv(f64::tanh);
    let o = sigmoid_arr2(&gates.slice(s![.., 3 * hidden..4 * hidden]).to_owned());

    let c = &f * &c_prev + &i * &g;
    let tanh_c = c.mapv(f64::tanh);
    let h = &o * &tanh_c;
    Ok((
        h,
        c,
        LstmCache {
            i,
            f,
            g,
            o,
            tanh_c,
        },
    ))
}

#[derive(Debug)]
pub struct LstmStepGrads {
    pub d_x: Array2<f64>,
    pub d_h_prev: Array2<f64>,
    pub d_c_prev: Array2<f64>,
    pub d_wx: Array2<f64>,
    pub d_wh: Array2<f64>,
    pub d_b: Array1<f64>,
}

pub fn lstm_step_backward_batch(
    x: ArrayView2<f64>,
    h_prev: ArrayView2<f64>,
    c_prev: ArrayView2<f64>,
    wx: ArrayView2<f64>,
    wh: ArrayView2<f64>,
    cache: &LstmCache,
    d_h: ArrayView2<f64>,
    d_c: ArrayView2<f64>,
) -> LstmStepGrads {
    let (batch, hidden) = cache.i.dim();
    let d_o = &d_h * &cache.tanh_c;
    let d_c_total = &d_c + &(&d_h * &cache.o * (1.0 - &cache.tanh_c * &cache.tanh_c));
    let d_f = &d_c_total * &c_prev;
    let d_c_prev = &d_c_total * &cache.f;
    let d_i = &d_c_total * &cache.g;
    let d_g = &d_c_total * &cache.i;

    let mut d_gates = Array2::zeros((batch, 4 * hidden));
    d_gates
        .slice_mut(s![.., 0..hidden])
        .assign(&(&d_i * &cache.i * (1.0 - &cache.i)));
    d_gates
        .slice_mut(s![.., hidden..2 * hidden])
        .assign(&(&d_f * &cache.f * (1.0 - &cache.f)));
    d_gates
        .slice_mut(s![.., 2 * hidden..3 * hidden])
        .assign(&(&d_g * (1.0 - &cache.g * &cache.g)));
    d_gates
        .slice_mut(s![.., 3 * hidden..4 * hidden])
        .assign(&(&d_o * &cache.o * (1.0 - &cache.o)));

    LstmStepGrads {
        d_x: d_gates.dot(&wx),
        d_h_prev: d_gates.dot(&wh),
        d_c_prev,
        d_wx: d_gates.t().dot(&x),
        d_wh: d_gates.t().dot(&h_prev),
        d_b: d_gates.sum_axis(Axis(0)),
    }
}

/// Single-sample LSTM step (spec form).
pub fn lstm_step(
    x: ArrayView1<f64>,
    h_prev: ArrayView1<f64>,
    c_prev: ArrayView1<f64>,
    wx: ArrayView2<f64>,
    wh: ArrayView2<f64>,
    b: ArrayView1<f64>,
) -> Result<(Array1<f64>, Array1<f64>)> {
    let (h, c, _) = lstm_step_batch(
        x.insert_axis(Axis(0)),
        h_prev.insert_axis(Axis(0)),
        c_prev.insert_axis(Axis(0)),
        wx,
        wh,
        b,
    )?;
    Ok((h.row(0).to_owned(), c.row(0).to_owned()))
}

// ---------------------------------------------------------------------------
// Sigmoid readout
// ---------------------------------------------------------------------------

/// P(label = Customer) from a hidden state: sigmoid(w . h + b).
pub fn sigmoid_readout(h: ArrayView1<f64>, w: ArrayView1<f64>, b: f64) -> Result<f64> {
    if h.len() != w.len() {
        return Err(shape_err(format!(
            "readout weight length {} does not match hidden size {}",
            w.len(),
            h.len()
        )));
    }
    Ok(super::sigmoid(h.dot(&w) + b))
}

pub fn sigmoid_readout_batch(
    h: ArrayView2<f64>,
    w: ArrayView1<f64>,
    b: f64,
) -> Result<Array1<f64>> {
    if h.ncols() != w.len() {
        return Err(shape_err("readout shape mismatch".into()));
    }
    Ok(sigmoid_arr1(&(h.dot(&w) + b)))
}

// ---------------------------------------------------------------------------
// Dropout
// ---------------------------------------------------------------------------

/// Inverted-dropout mask: entries are 0 with probability p, otherwise
/// 1/(1-p), so the masked value has the unmasked expectation.
pub fn dropout_mask(
    rows: usize,
    cols: usize,
    p: f64,
    rng: &mut impl Rng,
) -> Result<Array2<f64>> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Config(format!(
            "dropout probability must be in [0, 1), got {p}"
        )));
    }
    let keep = 1.0 / (1.0 - p);
    let mut mask = Array2::zeros((rows, cols));
    for v in mask.iter_mut() {
        if rng.random::<f64>() >= p {
            *v = keep;
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn conv_output_length_is_l_minus_u_plus_1() {
        let cw = Array2::from_shape_fn((4, 5), |(i, j)| (i + j) as f64 * 0.1);
        let h = Array2::from_elem((4, 3), 0.2);
        let f = narrow_conv_tanh(cw.view(), h.view(), 0.1).unwrap();
        assert_eq!(f.len(), 3);
    }

    #[test]
    fn zero_filter_and_bias_give_zero_map() {
        let cw = Array2::from_elem((3, 6), 1.5);
        let h = Array2::zeros((3, 2));
        let f = narrow_conv_tanh(cw.view(), h.view(), 0.0).unwrap();
        assert!(f.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_matches_double_loop_oracle() {
        // d=2, l=3, u=2 with small integers, against a direct summation.
        let cw = arr2(&[[1.0, 2.0, -1.0], [0.0, 1.0, 3.0]]);
        let h = arr2(&[[1.0, -2.0], [2.0, 1.0]]);
        let b = 0.5;
        let f = narrow_conv_tanh(cw.view(), h.view(), b).unwrap();
        for i in 0..2 {
            let mut acc = b;
            for r in 0..2 {
                for c in 0..2 {
                    acc += cw[(r, i + c)] * h[(r, c)];
                }
            }
            assert!((f[i] - acc.tanh()).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_width_longer_than_word_is_a_shape_error() {
        let cw = Array2::zeros((3, 2));
        let h = Array2::zeros((3, 4));
        assert!(narrow_conv_tanh(cw.view(), h.view(), 0.0).is_err());
    }

    #[test]
    fn conv_bank_agrees_with_per_filter_primitive() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (d, l, u, m) = (3, 7, 2, 4);
        let cw = Array2::from_shape_fn((d, l), |_| rng.random_range(-1.0..1.0));
        let filters = Array2::from_shape_fn((m, d * u), |_| rng.random_range(-1.0..1.0));
        let bias = Array1::from_shape_fn(m, |_| rng.random_range(-0.5..0.5));

        let windows = conv_windows(cw.view(), u).unwrap();
        let bank = conv_bank_forward(&windows, filters.view(), bias.view());
        for fi in 0..m {
            let h = Array2::from_shape_vec((d, u), filters.row(fi).to_vec()).unwrap();
            let f = narrow_conv_tanh(cw.view(), h.view(), bias[fi]).unwrap();
            for p in 0..f.len() {
                assert!((bank[(p, fi)] - f[p]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn max_over_time_examples() {
        assert_eq!(
            max_over_time(arr1(&[0.1, -0.2, 0.7]).view()).unwrap(),
            (0.7, 2)
        );
        assert_eq!(max_over_time(arr1(&[0.3, 0.3]).view()).unwrap(), (0.3, 0));
        assert!(max_over_time(arr1(&[]).view()).is_err());
    }

    #[test]
    fn highway_gate_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 4;
        let y = Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0));
        let w = Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0));
        let b = Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0));
        let w_t = Array2::zeros((n, n));

        // Carry gate: T -> 0 reproduces y.
        let b_t = Array1::from_elem(n, -1e9);
        let x = highway_forward(y.view(), w.view(), b.view(), w_t.view(), b_t.view()).unwrap();
        for (a, e) in x.iter().zip(y.iter()) {
            assert!((a - e).abs() < 1e-12);
        }

        // Transform gate: T -> 1 reproduces relu(Wy + b).
        let b_t = Array1::from_elem(n, 1e9);
        let x = highway_forward(y.view(), w.view(), b.view(), w_t.view(), b_t.view()).unwrap();
        let expected = (y.dot(&w.t()) + &b).mapv(|v| v.max(0.0));
        for (a, e) in x.iter().zip(expected.iter()) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn highway_matches_elementwise_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 4;
        let y = Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0));
        let w = Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0));
        let b = Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0));
        let w_t = Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0));
        let b_t = Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0));
        let x = highway_forward(y.view(), w.view(), b.view(), w_t.view(), b_t.view()).unwrap();

        for i in 0..n {
            let mut lin = b[i];
            let mut gate = b_t[i];
            for j in 0..n {
                lin += w[(i, j)] * y[j];
                gate += w_t[(i, j)] * y[j];
            }
            let t = crate::neural::sigmoid(gate);
            let expected = t * lin.max(0.0) + (1.0 - t) * y[i];
            assert!((x[i] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn lstm_zero_everything_stays_zero() {
        let hidden = 3;
        let input = 2;
        let (h, c) = lstm_step(
            Array1::zeros(input).view(),
            Array1::zeros(hidden).view(),
            Array1::zeros(hidden).view(),
            Array2::zeros((4 * hidden, input)).view(),
            Array2::zeros((4 * hidden, hidden)).view(),
            Array1::zeros(4 * hidden).view(),
        )
        .unwrap();
        assert!(h.iter().all(|&v| v == 0.0));
        assert!(c.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lstm_matches_gate_equation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let hidden = 3;
        let input = 2;
        let x = Array1::from_shape_fn(input, |_| rng.random_range(-1.0..1.0));
        let h_prev = Array1::from_shape_fn(hidden, |_| rng.random_range(-1.0..1.0));
        let c_prev = Array1::from_shape_fn(hidden, |_| rng.random_range(-1.0..1.0));
        let wx = Array2::from_shape_fn((4 * hidden, input), |_| rng.random_range(-1.0..1.0));
        let wh = Array2::from_shape_fn((4 * hidden, hidden), |_| rng.random_range(-1.0..1.0));
        let b = Array1::from_shape_fn(4 * hidden, |_| rng.random_range(-1.0..1.0));

        let (h, c) =
            lstm_step(x.view(), h_prev.view(), c_prev.view(), wx.view(), wh.view(), b.view())
                .unwrap();

        for j in 0..hidden {
            let gate = |row: usize| {
                let mut acc = b[row];
                for k in 0..input {
                    acc += wx[(row, k)] * x[k];
                }
                for k in 0..hidden {
                    acc += wh[(row, k)] * h_prev[k];
                }
                acc
            };
            let i_g = crate::neural::sigmoid(gate(j));
            let f_g = crate::neural::sigmoid(gate(hidden + j));
            let g_g = gate(2 * hidden + j).tanh();
            let o_g = crate::neural::sigmoid(gate(3 * hidden + j));
            let c_j = f_g * c_prev[j] + i_g * g_g;
            assert!((c[j] - c_j).abs() < 1e-12);
            assert!((h[j] - o_g * c_j.tanh()).abs() < 1e-12);
        }
    }

    #[test]
    fn readout_examples() {
        let h = arr1(&[1.0, 2.0]);
        assert_eq!(
            sigmoid_readout(h.view(), arr1(&[0.0, 0.0]).view(), 0.0).unwrap(),
            0.5
        );
        let p = sigmoid_readout(h.view(), arr1(&[0.0, 0.0]).view(), 9f64.ln()).unwrap();
        assert!((p - 0.9).abs() < 1e-12);
        let p = sigmoid_readout(h.view(), arr1(&[0.0, 0.0]).view(), 1e9).unwrap();
        assert!(p > 1.0 - 1e-12);
    }

    #[test]
    fn dropout_p0_is_identity_and_seeded_masks_repeat() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = dropout_mask(3, 4, 0.0, &mut rng).unwrap();
        assert!(m.iter().all(|&v| v == 1.0));

        let mut a = ChaCha8Rng::seed_from_u64(2);
        let mut b = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(
            dropout_mask(5, 5, 0.5, &mut a).unwrap(),
            dropout_mask(5, 5, 0.5, &mut b).unwrap()
        );
        assert!(dropout_mask(2, 2, 1.0, &mut a).is_err());
    }

    #[test]
    fn dropout_preserves_expectation() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = 0.5;
        let mask = dropout_mask(200, 200, p, &mut rng).unwrap();
        let mean = mask.sum() / (200.0 * 200.0);
        assert!((mean - 1.0).abs() < 0.02, "mask mean {mean}");
    }

    // Central finite differences over a scalar loss built from each
    // primitive. Relative error floor keeps tiny gradients from blowing
    // up the ratio.
    fn rel_err(a: f64, n: f64) -> f64 {
        (a - n).abs() / a.abs().max(n.abs()).max(1e-4)
    }

    fn fd_grad(mut f: impl FnMut(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
        let eps = 1e-5;
        let mut g = vec![0.0; x.len()];
        let mut xp = x.to_vec();
        for i in 0..x.len() {
            xp[i] = x[i] + eps;
            let fp = f(&xp);
            xp[i] = x[i] - eps;
            let fm = f(&xp);
            xp[i] = x[i];
            g[i] = (fp - fm) / (2.0 * eps);
        }
        g
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let (d, l, u) = (3, 6, 2);
        let cw0: Vec<f64> = (0..d * l).map(|_| rng.random_range(-0.8..0.8)).collect();
        let h0: Vec<f64> = (0..d * u).map(|_| rng.random_range(-0.8..0.8)).collect();
        let b0 = 0.3;
        let loss_w: Vec<f64> = (0..l - u + 1).map(|_| rng.random_range(-1.0..1.0)).collect();

        let loss = |cw: &[f64], h: &[f64], b: f64| {
            let cw = Array2::from_shape_vec((d, l), cw.to_vec()).unwrap();
            let h = Array2::from_shape_vec((d, u), h.to_vec()).unwrap();
            let f = narrow_conv_tanh(cw.view(), h.view(), b).unwrap();
            f.iter().zip(&loss_w).map(|(a, w)| a * w).sum::<f64>()
        };

        let cw = Array2::from_shape_vec((d, l), cw0.clone()).unwrap();
        let h = Array2::from_shape_vec((d, u), h0.clone()).unwrap();
        let f = narrow_conv_tanh(cw.view(), h.view(), b0).unwrap();
        let (d_cw, d_h, d_b) = narrow_conv_tanh_backward(
            cw.view(),
            h.view(),
            &f,
            Array1::from_vec(loss_w.clone()).view(),
        );

        let n_cw = fd_grad(|v| loss(v, &h0, b0), &cw0);
        for (a, n) in d_cw.iter().zip(&n_cw) {
            assert!(rel_err(*a, *n) < 1e-4);
        }
        let n_h = fd_grad(|v| loss(&cw0, v, b0), &h0);
        for (a, n) in d_h.iter().zip(&n_h) {
            assert!(rel_err(*a, *n) < 1e-4);
        }
        let n_b = fd_grad(|v| loss(&cw0, &h0, v[0]), &[b0]);
        assert!(rel_err(d_b, n_b[0]) < 1e-4);
    }

    #[test]
    fn highway_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let n = 4;
        let y0: Vec<f64> = (0..n).map(|_| rng.random_range(-0.8..0.8)).collect();
        let w0: Vec<f64> = (0..n * n).map(|_| rng.random_range(-0.8..0.8)).collect();
        let b0: Vec<f64> = (0..n).map(|_| rng.random_range(-0.4..0.4)).collect();
        let wt0: Vec<f64> = (0..n * n).map(|_| rng.random_range(-0.8..0.8)).collect();
        let bt0: Vec<f64> = (0..n).map(|_| rng.random_range(-0.4..0.4)).collect();
        let lw: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();

        let loss = |y: &[f64], w: &[f64], b: &[f64], wt: &[f64], bt: &[f64]| {
            let x = highway_forward(
                Array1::from_vec(y.to_vec()).view(),
                Array2::from_shape_vec((n, n), w.to_vec()).unwrap().view(),
                Array1::from_vec(b.to_vec()).view(),
                Array2::from_shape_vec((n, n), wt.to_vec()).unwrap().view(),
                Array1::from_vec(bt.to_vec()).view(),
            )
            .unwrap();
            x.iter().zip(&lw).map(|(a, w)| a * w).sum::<f64>()
        };

        let y = Array2::from_shape_vec((1, n), y0.clone()).unwrap();
        let w = Array2::from_shape_vec((n, n), w0.clone()).unwrap();
        let b = Array1::from_vec(b0.clone());
        let wt = Array2::from_shape_vec((n, n), wt0.clone()).unwrap();
        let bt = Array1::from_vec(bt0.clone());
        let (_, cache) =
            highway_forward_batch(y.view(), w.view(), b.view(), wt.view(), bt.view()).unwrap();
        let d_x = Array2::from_shape_vec((1, n), lw.clone()).unwrap();
        let grads = highway_backward_batch(y.view(), w.view(), wt.view(), &cache, d_x.view());

        for (a, nm) in grads
            .d_y
            .iter()
            .zip(fd_grad(|v| loss(v, &w0, &b0, &wt0, &bt0), &y0))
        {
            assert!(rel_err(*a, nm) < 1e-4);
        }
        for (a, nm) in grads
            .d_w
            .iter()
            .zip(fd_grad(|v| loss(&y0, v, &b0, &wt0, &bt0), &w0))
        {
            assert!(rel_err(*a, nm) < 1e-4);
        }
        for (a, nm) in grads
            .d_b_t
            .iter()
            .zip(fd_grad(|v| loss(&y0, &w0, &b0, &wt0, v), &bt0))
        {
            assert!(rel_err(*a, nm) < 1e-4);
        }
    }

    #[test]
    fn lstm_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let (hidden, input) = (3, 2);
        let sizes = [
            input,
            hidden,
            hidden,
            4 * hidden * input,
            4 * hidden * hidden,
            4 * hidden,
        ];
        let vals: Vec<Vec<f64>> = sizes
            .iter()
            .map(|&s| (0..s).map(|_| rng.random_range(-0.7..0.7)).collect())
            .collect();
        let lw: Vec<f64> = (0..hidden).map(|_| rng.random_range(-1.0..1.0)).collect();

        let loss = |x: &[f64], hp: &[f64], cp: &[f64], wx: &[f64], wh: &[f64], b: &[f64]| {
            let (h, _) = lstm_step(
                Array1::from_vec(x.to_vec()).view(),
                Array1::from_vec(hp.to_vec()).view(),
                Array1::from_vec(cp.to_vec()).view(),
                Array2::from_shape_vec((4 * hidden, input), wx.to_vec())
                    .unwrap()
                    .view(),
                Array2::from_shape_vec((4 * hidden, hidden), wh.to_vec())
                    .unwrap()
                    .view(),
                Array1::from_vec(b.to_vec()).view(),
            )
            .unwrap();
            h.iter().zip(&lw).map(|(a, w)| a * w).sum::<f64>()
        };

        let x = Array2::from_shape_vec((1, input), vals[0].clone()).unwrap();
        let hp = Array2::from_shape_vec((1, hidden), vals[1].clone()).unwrap();
        let cp = Array2::from_shape_vec((1, hidden), vals[2].clone()).unwrap();
        let wx = Array2::from_shape_vec((4 * hidden, input), vals[3].clone()).unwrap();
        let wh = Array2::from_shape_vec((4 * hidden, hidden), vals[4].clone()).unwrap();
        let b = Array1::from_vec(vals[5].clone());
        let (_, _, cache) =
            lstm_step_batch(x.view(), hp.view(), cp.view(), wx.view(), wh.view(), b.view())
                .unwrap();
        let d_h = Array2::from_shape_vec((1, hidden), lw.clone()).unwrap();
        let d_c = Array2::zeros((1, hidden));
        let grads = lstm_step_backward_batch(
            x.view(),
            hp.view(),
            cp.view(),
            wx.view(),
            wh.view(),
            &cache,
            d_h.view(),
            d_c.view(),
        );

        let checks: [(&[f64], Vec<f64>, Vec<f64>); 4] = [
            (
                &vals[0],
                grads.d_x.iter().copied().collect(),
                fd_grad(|v| loss(v, &vals[1], &vals[2], &vals[3], &vals[4], &vals[5]), &vals[0]),
            ),
            (
                &vals[2],
                grads.d_c_prev.iter().copied().collect(),
                fd_grad(|v| loss(&vals[0], &vals[1], v, &vals[3], &vals[4], &vals[5]), &vals[2]),
            ),
            (
                &vals[3],
                grads.d_wx.iter().copied().collect(),
                fd_grad(|v| loss(&vals[0], &vals[1], &vals[2], v, &vals[4], &vals[5]), &vals[3]),
            ),
            (
                &vals[5],
                grads.d_b.iter().copied().collect(),
                fd_grad(|v| loss(&vals[0], &vals[1], &vals[2], &vals[3], &vals[4], v), &vals[5]),
            ),
        ];
        for (_, analytic, numeric) in checks {
            for (a, n) in analytic.iter().zip(&numeric) {
                assert!(rel_err(*a, *n) < 1e-4, "analytic {a} vs fd {n}");
            }
        }
    }
}
