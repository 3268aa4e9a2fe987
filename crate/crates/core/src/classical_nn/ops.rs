//! Differentiable ops recorded on a [`Tape`].

use std::sync::Arc;

use rayon::prelude::*;

use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::qnn::{QnnConfig, QnnGradients, QnnLayer};
use crate::quantum_sim::Statevector;
use crate::rng::SeedStream;

fn dims<const N: usize>(t: &Tensor, what: &str) -> Result<[usize; N]> {
    t.shape().try_into().map_err(|_| {
        Error::Shape(format!("{what} expects a rank-{N} tensor, got {:?}", t.shape()))
    })
}

/// Sum of all elements.
pub fn sum(tape: &mut Tape, x: Var) -> Result<Var> {
    let v = tape.value(x).data().iter().sum();
    tape.push_op(
        Tensor::scalar(v),
        vec![x],
        Box::new(|g, parents, _| {
            let mut d = Tensor::zeros(parents[0].shape());
            d.data_mut().fill(g.data()[0]);
            Ok(vec![d])
        }),
    )
}

/// Elementwise `sum_i w_i * x_i` against a constant weight tensor.
pub fn weighted_sum(tape: &mut Tape, x: Var, weights: Tensor) -> Result<Var> {
    let xv = tape.value(x);
    if xv.shape() != weights.shape() {
        return Err(Error::Shape(format!(
            "weights {:?} vs input {:?}",
            weights.shape(),
            xv.shape()
        )));
    }
    let v = xv.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum();
    tape.push_op(
        Tensor::scalar(v),
        vec![x],
        Box::new(move |g, _, _| {
            let mut d = weights.clone();
            let s = g.data()[0];
            d.data_mut().iter_mut().for_each(|x| *x *= s);
            Ok(vec![d])
        }),
    )
}

/// `y = x W^T + b` with `x: [B, I]`, `W: [O, I]`, `b: [O]`.
pub fn linear(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let [batch, inp] = dims::<2>(tape.value(x), "linear input")?;
    let [out, w_in] = dims::<2>(tape.value(w), "linear weight")?;
    let [b_out] = dims::<1>(tape.value(b), "linear bias")?;
    if w_in != inp || b_out != out {
        return Err(Error::Shape(format!(
            "linear: input width {inp}, weight {out}x{w_in}, bias {b_out}"
        )));
    }
    let mut y = vec![0.0; batch * out];
    {
        let (xv, wv, bv) = (tape.value(x).data(), tape.value(w).data(), tape.value(b).data());
        y.par_chunks_mut(out).enumerate().for_each(|(r, yr)| {
            let xr = &xv[r * inp..(r + 1) * inp];
            for (o, yo) in yr.iter_mut().enumerate() {
                let wr = &wv[o * inp..(o + 1) * inp];
                *yo = bv[o] + xr.iter().zip(wr).map(|(a, b)| a * b).sum::<f64>();
            }
        });
    }
    tape.push_op(
        Tensor::new(vec![batch, out], y)?,
        vec![x, w, b],
        Box::new(move |g, parents, _| {
            let (xv, wv) = (parents[0].data(), parents[1].data());
            let g = g.data();
            let mut dx = vec![0.0; batch * inp];
            dx.par_chunks_mut(inp).enumerate().for_each(|(r, dxr)| {
                for o in 0..out {
                    let go = g[r * out + o];
                    if go == 0.0 {
                        continue;
                    }
                    for (d, wv) in dxr.iter_mut().zip(&wv[o * inp..(o + 1) * inp]) {
                        *d += go * wv;
                    }
                }
            });
            let mut dw = vec![0.0; out * inp];
            dw.par_chunks_mut(inp).enumerate().for_each(|(o, dwr)| {
                for r in 0..batch {
                    let go = g[r * out + o];
                    if go == 0.0 {
                        continue;
                    }
                    for (d, xv) in dwr.iter_mut().zip(&xv[r * inp..(r + 1) * inp]) {
                        *d += go * xv;
                    }
                }
            });
            let mut db = vec![0.0; out];
            for r in 0..batch {
                for (d, go) in db.iter_mut().zip(&g[r * out..(r + 1) * out]) {
                    *d += go;
                }
            }
            Ok(vec![
                Tensor::new(vec![batch, inp], dx)?,
                Tensor::new(vec![out, inp], dw)?,
                Tensor::new(vec![out], db)?,
            ])
        }),
    )
}

pub fn leaky_relu(tape: &mut Tape, x: Var, slope: f64) -> Result<Var> {
    let xv = tape.value(x);
    let y: Vec<f64> = xv
        .data()
        .iter()
        .map(|&v| if v >= 0.0 { v } else { slope * v })
        .collect();
    let shape = xv.shape().to_vec();
    tape.push_op(
        Tensor::new(shape.clone(), y)?,
        vec![x],
        Box::new(move |g, parents, _| {
            let d: Vec<f64> = g
                .data()
                .iter()
                .zip(parents[0].data())
                .map(|(g, &v)| if v >= 0.0 { *g } else { slope * g })
                .collect();
            Ok(vec![Tensor::new(shape.clone(), d)?])
        }),
    )
}

/// Collapses every axis after the first.
pub fn flatten(tape: &mut Tape, x: Var) -> Result<Var> {
    let xv = tape.value(x);
    let shape = xv.shape().to_vec();
    let batch = shape[0];
    let rest = xv.len() / batch.max(1);
    let y = xv.clone().reshape(vec![batch, rest])?;
    tape.push_op(
        y,
        vec![x],
        Box::new(move |g, _, _| Ok(vec![g.clone().reshape(shape.clone())?])),
    )
}

#[derive(Debug, Clone, Copy)]
struct ConvGeom {
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeom {
    /// Output columns `ox` for which `ox*stride + kx - pad` lands in `[0, w)`.
    fn ox_range(&self, kx: usize) -> (usize, usize) {
        let lo = if kx >= self.pad {
            0
        } else {
            (self.pad - kx).div_ceil(self.stride)
        };
        let hi = if self.w + self.pad > kx {
            ((self.w - 1 + self.pad - kx) / self.stride + 1).min(self.ow)
        } else {
            0
        };
        (lo, hi.max(lo))
    }

    fn iy(&self, oy: usize, ky: usize) -> Option<usize> {
        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
        (iy >= 0 && (iy as usize) < self.h).then_some(iy as usize)
    }
}

fn conv_forward_sample(geo: &ConvGeom, x: &[f64], w: &[f64], b: &[f64], out: &mut [f64]) {
    let ConvGeom { c, h, w: iw, o, k, stride, pad, oh, ow } = *geo;
    for oc in 0..o {
        let plane = &mut out[oc * oh * ow..(oc + 1) * oh * ow];
        plane.fill(b[oc]);
        for ic in 0..c {
            let xin = &x[ic * h * iw..(ic + 1) * h * iw];
            for ky in 0..k {
                for kx in 0..k {
                    let wv = w[((oc * c + ic) * k + ky) * k + kx];
                    let (lo, hi) = geo.ox_range(kx);
                    for oy in 0..oh {
                        let Some(iy) = geo.iy(oy, ky) else { continue };
                        let xrow = &xin[iy * iw..(iy + 1) * iw];
                        let orow = &mut plane[oy * ow..(oy + 1) * ow];
                        for ox in lo..hi {
                            orow[ox] += wv * xrow[ox * stride + kx - pad];
                        }
                    }
                }
            }
        }
    }
}

/// Returns `(dx, dw, db)` for one sample.
fn conv_backward_sample(geo: &ConvGeom, x: &[f64], w: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let ConvGeom { c, h, w: iw, o, k, stride, pad, oh, ow } = *geo;
    let mut dx = vec![0.0; c * h * iw];
    let mut dw = vec![0.0; o * c * k * k];
    let mut db = vec![0.0; o];
    for oc in 0..o {
        let gplane = &g[oc * oh * ow..(oc + 1) * oh * ow];
        db[oc] = gplane.iter().sum();
        for ic in 0..c {
            let xin = &x[ic * h * iw..(ic + 1) * h * iw];
            let dxin = &mut dx[ic * h * iw..(ic + 1) * h * iw];
            for ky in 0..k {
                for kx in 0..k {
                    let widx = ((oc * c + ic) * k + ky) * k + kx;
                    let wv = w[widx];
                    let (lo, hi) = geo.ox_range(kx);
                    let mut acc = 0.0;
                    for oy in 0..oh {
                        let Some(iy) = geo.iy(oy, ky) else { continue };
                        let grow = &gplane[oy * ow..(oy + 1) * ow];
                        let xrow = &xin[iy * iw..(iy + 1) * iw];
                        let dxrow = &mut dxin[iy * iw..(iy + 1) * iw];
                        for ox in lo..hi {
                            let ix = ox * stride + kx - pad;
                            acc += grow[ox] * xrow[ix];
                            dxrow[ix] += wv * grow[ox];
                        }
                    }
                    dw[widx] += acc;
                }
            }
        }
    }
    (dx, dw, db)
}

/// 2-D convolution, `x: [B, C, H, W]`, `w: [O, C, K, K]`, `b: [O]`, zero
/// padding `K / 2`.
pub fn conv2d(tape: &mut Tape, x: Var, w: Var, b: Var, stride: usize) -> Result<Var> {
    let [batch, c, h, iw] = dims::<4>(tape.value(x), "conv2d input")?;
    let [o, wc, k, k2] = dims::<4>(tape.value(w), "conv2d weight")?;
    let [bo] = dims::<1>(tape.value(b), "conv2d bias")?;
    if wc != c || k != k2 || bo != o || stride == 0 || k == 0 {
        return Err(Error::Shape(format!(
            "conv2d: input channels {c}, weight {o}x{wc}x{k}x{k2}, bias {bo}, stride {stride}"
        )));
    }
    let pad = k / 2;
    if h + 2 * pad < k || iw + 2 * pad < k {
        return Err(Error::Shape(format!("conv2d: {h}x{iw} input smaller than kernel {k}")));
    }
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (iw + 2 * pad - k) / stride + 1;
    let geo = ConvGeom { c, h, w: iw, o, k, stride, pad, oh, ow };
    let mut y = vec![0.0; batch * o * oh * ow];
    {
        let (xv, wv, bv) = (tape.value(x).data(), tape.value(w).data(), tape.value(b).data());
        y.par_chunks_mut(o * oh * ow).enumerate().for_each(|(s, out)| {
            conv_forward_sample(&geo, &xv[s * c * h * iw..(s + 1) * c * h * iw], wv, bv, out)
        });
    }
    tape.push_op(
        Tensor::new(vec![batch, o, oh, ow], y)?,
        vec![x, w, b],
        Box::new(move |g, parents, _| {
            let (xv, wv) = (parents[0].data(), parents[1].data());
            let per_sample: Vec<_> = (0..batch)
                .into_par_iter()
                .map(|s| {
                    conv_backward_sample(
                        &geo,
                        &xv[s * c * h * iw..(s + 1) * c * h * iw],
                        wv,
                        &g.data()[s * o * oh * ow..(s + 1) * o * oh * ow],
                    )
                })
                .collect();
            let mut dx = Vec::with_capacity(batch * c * h * iw);
            let mut dw = vec![0.0; o * c * k * k];
            let mut db = vec![0.0; o];
            // Fixed-order reduction keeps results independent of scheduling.
            for (sdx, sdw, sdb) in per_sample {
                dx.extend_from_slice(&sdx);
                dw.iter_mut().zip(&sdw).for_each(|(a, b)| *a += b);
                db.iter_mut().zip(&sdb).for_each(|(a, b)| *a += b);
            }
            Ok(vec![
                Tensor::new(vec![batch, c, h, iw], dx)?,
                Tensor::new(vec![o, c, k, k], dw)?,
                Tensor::new(vec![o], db)?,
            ])
        }),
    )
}

/// 2x2 average pooling with stride 2 (odd trailing rows/columns dropped).
pub fn avg_pool2(tape: &mut Tape, x: Var) -> Result<Var> {
    let [batch, c, h, w] = dims::<4>(tape.value(x), "avg_pool2 input")?;
    let (oh, ow) = (h / 2, w / 2);
    if oh == 0 || ow == 0 {
        return Err(Error::Shape(format!("avg_pool2: {h}x{w} input too small")));
    }
    let xv = tape.value(x).data();
    let mut y = vec![0.0; batch * c * oh * ow];
    for plane in 0..batch * c {
        let src = &xv[plane * h * w..(plane + 1) * h * w];
        let dst = &mut y[plane * oh * ow..(plane + 1) * oh * ow];
        for oy in 0..oh {
            for ox in 0..ow {
                let (iy, ix) = (2 * oy, 2 * ox);
                dst[oy * ow + ox] = 0.25
                    * (src[iy * w + ix]
                        + src[iy * w + ix + 1]
                        + src[(iy + 1) * w + ix]
                        + src[(iy + 1) * w + ix + 1]);
            }
        }
    }
    tape.push_op(
        Tensor::new(vec![batch, c, oh, ow], y)?,
        vec![x],
        Box::new(move |g, _, _| {
            let mut dx = vec![0.0; batch * c * h * w];
            let gv = g.data();
            for plane in 0..batch * c {
                let src = &gv[plane * oh * ow..(plane + 1) * oh * ow];
                let dst = &mut dx[plane * h * w..(plane + 1) * h * w];
                for oy in 0..oh {
                    for ox in 0..ow {
                        let v = 0.25 * src[oy * ow + ox];
                        let (iy, ix) = (2 * oy, 2 * ox);
                        dst[iy * w + ix] += v;
                        dst[iy * w + ix + 1] += v;
                        dst[(iy + 1) * w + ix] += v;
                        dst[(iy + 1) * w + ix + 1] += v;
                    }
                }
            }
            Ok(vec![Tensor::new(vec![batch, c, h, w], dx)?])
        }),
    )
}

/// Mean softmax cross-entropy of `logits: [B, C]` against integer labels.
pub fn softmax_cross_entropy(tape: &mut Tape, logits: Var, labels: &[usize]) -> Result<Var> {
    let [batch, classes] = dims::<2>(tape.value(logits), "cross-entropy logits")?;
    if labels.len() != batch {
        return Err(Error::Shape(format!("{} labels for {batch} rows", labels.len())));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::InvalidArgument(format!("label {l} outside [0, {classes})")));
    }
    let lv = tape.value(logits).data();
    let mut probs = vec![0.0; batch * classes];
    let mut loss = 0.0;
    for r in 0..batch {
        let row = &lv[r * classes..(r + 1) * classes];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
        for (p, v) in probs[r * classes..(r + 1) * classes].iter_mut().zip(row) {
            *p = (v - m).exp() / z;
        }
        loss += m + z.ln() - row[labels[r]];
    }
    let labels = labels.to_vec();
    tape.push_op(
        Tensor::scalar(loss / batch as f64),
        vec![logits],
        Box::new(move |g, _, _| {
            let s = g.data()[0] / batch as f64;
            let mut d = probs.clone();
            for (r, &l) in labels.iter().enumerate() {
                d[r * classes + l] -= 1.0;
            }
            d.iter_mut().for_each(|v| *v *= s);
            Ok(vec![Tensor::new(vec![batch, classes], d)?])
        }),
    )
}

/// Per-row QNN evaluation: `x: [B, W]` raw inputs, `theta: [P]` angles.
///
/// On a gradient-enabled tape the parameter-shift Jacobians are computed
/// eagerly and become this node's local derivatives. Row `r` draws shots
/// from `stream/r`. Returns the exact pre-measurement states as well.
pub fn quantum_layer(
    tape: &mut Tape,
    x: Var,
    theta: Var,
    config: QnnConfig,
    stream: SeedStream,
) -> Result<(Var, Vec<Statevector>)> {
    let [batch, width] = dims::<2>(tape.value(x), "quantum layer input")?;
    if width != config.width {
        return Err(Error::Shape(format!(
            "quantum layer of width {} fed {width} features",
            config.width
        )));
    }
    let layer = QnnLayer::new(config, tape.value(theta).data().to_vec())?;
    let want_grad = tape.grad_enabled();
    let xv = tape.value(x).data();
    let rows: Vec<(Vec<f64>, Statevector, Option<QnnGradients>)> = (0..batch)
        .into_par_iter()
        .map(|r| {
            let input = &xv[r * width..(r + 1) * width];
            let row_stream = stream.child(r as u64);
            let eval = layer.evaluate(input, row_stream)?;
            let jac = if want_grad {
                Some(layer.gradients(input, row_stream)?)
            } else {
                None
            };
            Ok((eval.outputs, eval.state, jac))
        })
        .collect::<Result<_>>()?;

    let mut y = Vec::with_capacity(batch * width);
    let mut states = Vec::with_capacity(batch);
    let mut jacobians = Vec::with_capacity(batch);
    for (out, st, jac) in rows {
        y.extend(out);
        states.push(st);
        jacobians.push(jac);
    }
    let jacobians: Option<Arc<Vec<QnnGradients>>> =
        jacobians.into_iter().collect::<Option<Vec<_>>>().map(Arc::new);
    let num_params = layer.params().len();

    let var = tape.push_op(
        Tensor::new(vec![batch, width], y)?,
        vec![x, theta],
        Box::new(move |g, _, _| {
            let jac = jacobians.as_ref().ok_or_else(|| {
                Error::Autodiff("missing QNN Jacobian at quantum/classical boundary".into())
            })?;
            let gv = g.data();
            let mut dx = vec![0.0; batch * width];
            let mut dtheta = vec![0.0; num_params];
            for (r, j) in jac.iter().enumerate() {
                let gr = &gv[r * width..(r + 1) * width];
                for (out, &go) in gr.iter().enumerate() {
                    if go == 0.0 {
                        continue;
                    }
                    for (d, jv) in dtheta.iter_mut().zip(j.d_params_row(out)) {
                        *d += go * jv;
                    }
                    for (d, jv) in dx[r * width..(r + 1) * width]
                        .iter_mut()
                        .zip(j.d_inputs_row(out))
                    {
                        *d += go * jv;
                    }
                }
            }
            Ok(vec![
                Tensor::new(vec![batch, width], dx)?,
                Tensor::new(vec![num_params], dtheta)?,
            ])
        }),
    )?;
    Ok((var, states))
}
