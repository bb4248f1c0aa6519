//! Forward and backward kernels behind the graph operations.
//!
//! Unit-stride convolutions run through row-level `axpy`/`dot` kernels; the
//! generic strided path is a plain gather used only by small test tensors.
//! All accumulation orders are fixed, so results are reproducible run to run.

use super::graph::{BinaryKind, UnaryKind};
use super::scalar::Scalar;
use super::ConvSpec;
use std::cmp::Ordering;

/// Deterministic pairwise summation; error grows O(log n) instead of O(n).
pub(crate) fn pairwise_sum<T: Scalar>(values: &[T]) -> T {
    match values.len() {
        0 => T::ZERO,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

/// Lexicographic total order on value buffers; canonicalizes set averaging.
pub(crate) fn lex_cmp<T: Scalar>(a: &[T], b: &[T]) -> Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

// ---- conv3d ----

/// The accelerated path handles 3x3x3 unit-stride kernels whose padding
/// equals the dilation rate (output extents == input extents).
fn conv3_fast_eligible(spec: &ConvSpec) -> bool {
    spec.kernel == [3; 3] && spec.stride == [1; 3] && spec.padding == spec.dilation
}

/// Clip the output index range so `i_in = i_out * stride + k * dil - pad`
/// stays inside `[0, in_extent)`. Returns `(out_lo, out_hi)`.
fn valid_out_range(
    in_extent: usize,
    out_extent: usize,
    stride: usize,
    pad: usize,
    tap: usize,
) -> (usize, usize) {
    let shift = tap as isize - pad as isize;
    // i_out*stride + shift >= 0
    let lo = if shift >= 0 {
        0
    } else {
        ((-shift) as usize).div_ceil(stride)
    };
    // i_out*stride + shift < in_extent
    let hi_num = in_extent as isize - shift;
    if hi_num <= 0 {
        return (0, 0);
    }
    let hi = ((hi_num - 1) as usize / stride + 1).min(out_extent);
    (lo.min(hi), hi)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv3d_forward<T: Scalar>(
    input: &[T],
    in_shape: [usize; 5],
    weights: &[T],
    bias: Option<&[T]>,
    spec: &ConvSpec,
    out_sp: [usize; 3],
    out: &mut [T],
) {
    if conv3_fast_eligible(spec)
        && T::conv3_fast_forward(
            input,
            in_shape,
            spec.out_channels,
            spec.dilation,
            weights,
            bias,
            out,
        )
    {
        return;
    }
    let [n, cin, d, h, w] = in_shape;
    let cout = spec.out_channels;
    let [odn, ohn, own] = out_sp;
    let [kd, kh, kw] = spec.kernel;
    let [sd, sh, sw] = spec.stride;
    let [pd, ph, pw] = spec.padding;
    let [dd, dh, dw] = spec.dilation;
    let unit_w = sw == 1;

    let in_ch = d * h * w;
    let out_ch = odn * ohn * own;
    let k_vol = kd * kh * kw;

    for b in 0..n {
        let in_base = b * cin * in_ch;
        let out_base = b * cout * out_ch;
        for oc in 0..cout {
            let out_oc = &mut out[out_base + oc * out_ch..out_base + (oc + 1) * out_ch];
            for ic in 0..cin {
                let in_ic = &input[in_base + ic * in_ch..in_base + (ic + 1) * in_ch];
                let w_base = (oc * cin + ic) * k_vol;
                for od in 0..odn {
                    for zk in 0..kd {
                        let id = od as isize * sd as isize + (zk * dd) as isize - pd as isize;
                        if id < 0 || id >= d as isize {
                            continue;
                        }
                        let id = id as usize;
                        for oh in 0..ohn {
                            for yk in 0..kh {
                                let ih = oh as isize * sh as isize + (yk * dh) as isize
                                    - ph as isize;
                                if ih < 0 || ih >= h as isize {
                                    continue;
                                }
                                let ih = ih as usize;
                                let in_row = &in_ic[(id * h + ih) * w..(id * h + ih + 1) * w];
                                let orow0 = (od * ohn + oh) * own;
                                for xk in 0..kw {
                                    let wv = weights[w_base + (zk * kh + yk) * kw + xk];
                                    let (lo, hi) =
                                        valid_out_range(w, own, sw, pw, xk * dw);
                                    if lo >= hi {
                                        continue;
                                    }
                                    if unit_w {
                                        let iw0 = (lo as isize + (xk * dw) as isize
                                            - pw as isize)
                                            as usize;
                                        T::axpy(
                                            &mut out_oc[orow0 + lo..orow0 + hi],
                                            &in_row[iw0..iw0 + (hi - lo)],
                                            wv,
                                        );
                                    } else {
                                        for ow in lo..hi {
                                            let iw = (ow * sw + xk * dw) as isize - pw as isize;
                                            out_oc[orow0 + ow] += wv * in_row[iw as usize];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            if let Some(bias) = bias {
                let bv = bias[oc];
                for o in out_oc.iter_mut() {
                    *o += bv;
                }
            }
        }
    }
}

pub(crate) fn conv3d_backward_input<T: Scalar>(
    grad_in: &mut [T],
    grad_out: &[T],
    weights: &[T],
    in_shape: [usize; 5],
    spec: &ConvSpec,
    out_sp: [usize; 3],
) {
    let [n, cin, d, h, w] = in_shape;
    let cout = spec.out_channels;
    let [odn, ohn, own] = out_sp;
    if conv3_fast_eligible(spec) {
        // The adjoint of a unit-stride 3x3x3 conv with pad == dilation is the
        // same conv over the output gradient with a channel-transposed,
        // spatially flipped kernel.
        let mut flipped = vec![T::ZERO; weights.len()];
        for oc in 0..cout {
            for ic in 0..cin {
                for j in 0..27 {
                    flipped[(ic * cout + oc) * 27 + (26 - j)] =
                        weights[(oc * cin + ic) * 27 + j];
                }
            }
        }
        if T::conv3_fast_forward(
            grad_out,
            [n, cout, odn, ohn, own],
            cin,
            spec.dilation,
            &flipped,
            None,
            grad_in,
        ) {
            return;
        }
    }
    let [kd, kh, kw] = spec.kernel;
    let [sd, sh, sw] = spec.stride;
    let [pd, ph, pw] = spec.padding;
    let [dd, dh, dw] = spec.dilation;
    let in_ch = d * h * w;
    let out_ch = odn * ohn * own;
    let k_vol = kd * kh * kw;
    let unit = sd == 1 && sh == 1 && sw == 1;

    if unit {
        // grad_in[iw] += w * grad_out[ow], ow = iw + pad - tap
        for b in 0..n {
            for ic in 0..cin {
                let gin_ic =
                    &mut grad_in[(b * cin + ic) * in_ch..(b * cin + ic + 1) * in_ch];
                for oc in 0..cout {
                    let gout_oc =
                        &grad_out[(b * cout + oc) * out_ch..(b * cout + oc + 1) * out_ch];
                    let w_base = (oc * cin + ic) * k_vol;
                    for id in 0..d {
                        for zk in 0..kd {
                            let od = id as isize + pd as isize - (zk * dd) as isize;
                            if od < 0 || od >= odn as isize {
                                continue;
                            }
                            let od = od as usize;
                            for ih in 0..h {
                                for yk in 0..kh {
                                    let oh =
                                        ih as isize + ph as isize - (yk * dh) as isize;
                                    if oh < 0 || oh >= ohn as isize {
                                        continue;
                                    }
                                    let oh = oh as usize;
                                    let grow0 = (od * ohn + oh) * own;
                                    let irow0 = (id * h + ih) * w;
                                    for xk in 0..kw {
                                        let wv = weights[w_base + (zk * kh + yk) * kw + xk];
                                        // iw range with ow = iw + pw - xk*dw in [0, own)
                                        let shift = pw as isize - (xk * dw) as isize;
                                        let lo = (-shift).max(0) as usize;
                                        let hi_num = own as isize - shift;
                                        if hi_num <= 0 {
                                            continue;
                                        }
                                        let hi = (hi_num as usize).min(w);
                                        if lo >= hi {
                                            continue;
                                        }
                                        let ow0 = (lo as isize + shift) as usize;
                                        T::axpy(
                                            &mut gin_ic[irow0 + lo..irow0 + hi],
                                            &gout_oc[grow0 + ow0..grow0 + ow0 + (hi - lo)],
                                            wv,
                                        );
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    } else {
        // Generic strided gather, one output element at a time.
        for b in 0..n {
            for oc in 0..cout {
                let gout_oc = &grad_out[(b * cout + oc) * out_ch..(b * cout + oc + 1) * out_ch];
                for ic in 0..cin {
                    let gin_ic =
                        &mut grad_in[(b * cin + ic) * in_ch..(b * cin + ic + 1) * in_ch];
                    let w_base = (oc * cin + ic) * k_vol;
                    for od in 0..odn {
                        for oh in 0..ohn {
                            for ow in 0..own {
                                let g = gout_oc[(od * ohn + oh) * own + ow];
                                for zk in 0..kd {
                                    let id = (od * sd + zk * dd) as isize - pd as isize;
                                    if id < 0 || id >= d as isize {
                                        continue;
                                    }
                                    for yk in 0..kh {
                                        let ih = (oh * sh + yk * dh) as isize - ph as isize;
                                        if ih < 0 || ih >= h as isize {
                                            continue;
                                        }
                                        for xk in 0..kw {
                                            let iw =
                                                (ow * sw + xk * dw) as isize - pw as isize;
                                            if iw < 0 || iw >= w as isize {
                                                continue;
                                            }
                                            let wi = w_base + (zk * kh + yk) * kw + xk;
                                            gin_ic[(id as usize * h + ih as usize) * w
                                                + iw as usize] += weights[wi] * g;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv3d_backward_weights<T: Scalar>(
    grad_w: &mut [T],
    grad_out: &[T],
    input: &[T],
    in_shape: [usize; 5],
    spec: &ConvSpec,
    out_sp: [usize; 3],
) {
    if conv3_fast_eligible(spec)
        && T::conv3_fast_backward_weights(
            grad_w,
            grad_out,
            input,
            in_shape,
            spec.out_channels,
            spec.dilation,
        )
    {
        return;
    }
    let [n, cin, d, h, w] = in_shape;
    let cout = spec.out_channels;
    let [odn, ohn, own] = out_sp;
    let [kd, kh, kw] = spec.kernel;
    let [sd, sh, sw] = spec.stride;
    let [pd, ph, pw] = spec.padding;
    let [dd, dh, dw] = spec.dilation;
    let in_ch = d * h * w;
    let out_ch = odn * ohn * own;
    let k_vol = kd * kh * kw;
    let unit_w = sw == 1;

    for b in 0..n {
        for oc in 0..cout {
            let gout_oc = &grad_out[(b * cout + oc) * out_ch..(b * cout + oc + 1) * out_ch];
            for ic in 0..cin {
                let in_ic = &input[(b * cin + ic) * in_ch..(b * cin + ic + 1) * in_ch];
                let w_base = (oc * cin + ic) * k_vol;
                for zk in 0..kd {
                    for yk in 0..kh {
                        for xk in 0..kw {
                            let mut acc = T::ZERO;
                            let (lo, hi) = valid_out_range(w, own, sw, pw, xk * dw);
                            for od in 0..odn {
                                let id =
                                    (od * sd + zk * dd) as isize - pd as isize;
                                if id < 0 || id >= d as isize {
                                    continue;
                                }
                                for oh in 0..ohn {
                                    let ih =
                                        (oh * sh + yk * dh) as isize - ph as isize;
                                    if ih < 0 || ih >= h as isize {
                                        continue;
                                    }
                                    if lo >= hi {
                                        continue;
                                    }
                                    let grow0 = (od * ohn + oh) * own;
                                    let irow0 = (id as usize * h + ih as usize) * w;
                                    if unit_w {
                                        let iw0 = (lo as isize + (xk * dw) as isize
                                            - pw as isize)
                                            as usize;
                                        acc += T::dot(
                                            &gout_oc[grow0 + lo..grow0 + hi],
                                            &in_ic[irow0 + iw0..irow0 + iw0 + (hi - lo)],
                                        );
                                    } else {
                                        for ow in lo..hi {
                                            let iw = (ow * sw + xk * dw) as isize
                                                - pw as isize;
                                            acc += gout_oc[grow0 + ow]
                                                * in_ic[irow0 + iw as usize];
                                        }
                                    }
                                }
                            }
                            grad_w[w_base + (zk * kh + yk) * kw + xk] += acc;
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv3d_backward_bias<T: Scalar>(grad_b: &mut [T], grad_out: &[T], cout: usize) {
    let out_ch = grad_out.len() / cout;
    for oc in 0..cout {
        grad_b[oc] += pairwise_sum(&grad_out[oc * out_ch..(oc + 1) * out_ch]);
    }
}

// ---- maxpool ----

#[allow(clippy::too_many_arguments)]
pub(crate) fn maxpool3d_forward<T: Scalar>(
    input: &[T],
    in_shape: [usize; 5],
    window: [usize; 3],
    stride: [usize; 3],
    out_sp: [usize; 3],
    out: &mut [T],
    argmax: &mut [u32],
) {
    let [n, c, d, h, w] = in_shape;
    let [odn, ohn, own] = out_sp;
    let in_ch = d * h * w;
    let out_ch = odn * ohn * own;
    for bc in 0..n * c {
        let in_b = &input[bc * in_ch..(bc + 1) * in_ch];
        let base_in = bc * in_ch;
        let out_b = &mut out[bc * out_ch..(bc + 1) * out_ch];
        let arg_b = &mut argmax[bc * out_ch..(bc + 1) * out_ch];
        for od in 0..odn {
            for oh in 0..ohn {
                for ow in 0..own {
                    let (z0, y0, x0) = (od * stride[0], oh * stride[1], ow * stride[2]);
                    let mut best = in_b[(z0 * h + y0) * w + x0];
                    let mut best_idx = (z0 * h + y0) * w + x0;
                    // First occurrence in scan order wins ties.
                    for zk in 0..window[0] {
                        for yk in 0..window[1] {
                            let row = ((z0 + zk) * h + y0 + yk) * w + x0;
                            for xk in 0..window[2] {
                                let v = in_b[row + xk];
                                if v > best {
                                    best = v;
                                    best_idx = row + xk;
                                }
                            }
                        }
                    }
                    out_b[(od * ohn + oh) * own + ow] = best;
                    arg_b[(od * ohn + oh) * own + ow] = (base_in + best_idx) as u32;
                }
            }
        }
    }
}

// ---- group norm ----

#[allow(clippy::too_many_arguments)]
pub(crate) fn group_norm_forward<T: Scalar>(
    input: &[T],
    in_shape: [usize; 5],
    groups: usize,
    gamma: &[T],
    beta: &[T],
    eps: T,
    out: &mut [T],
    mean: &mut [T],
    inv_std: &mut [T],
) {
    let [n, c, d, h, w] = in_shape;
    let sp = d * h * w;
    let cg = c / groups;
    let m = cg * sp;
    for b in 0..n {
        for g in 0..groups {
            let start = (b * c + g * cg) * sp;
            let block = &input[start..start + m];
            let mu = pairwise_sum(block) * T::from_f64(1.0 / m as f64);
            // Two-pass variance, pairwise over chunked squared deviations.
            const CHUNK: usize = 256;
            let mut chunk_sums: Vec<T> = Vec::with_capacity(m.div_ceil(CHUNK));
            let mut buf = [T::ZERO; CHUNK];
            for ch in block.chunks(CHUNK) {
                for (slot, &x) in buf.iter_mut().zip(ch.iter()) {
                    let dev = x - mu;
                    *slot = dev * dev;
                }
                chunk_sums.push(pairwise_sum(&buf[..ch.len()]));
            }
            let var = pairwise_sum(&chunk_sums) * T::from_f64(1.0 / m as f64);
            let istd = T::ONE / (var + eps).sqrt();
            mean[b * groups + g] = mu;
            inv_std[b * groups + g] = istd;
            for cc in 0..cg {
                let ch = g * cg + cc;
                let (ga, be) = (gamma[ch], beta[ch]);
                let cstart = (b * c + ch) * sp;
                for i in 0..sp {
                    let xhat = (input[cstart + i] - mu) * istd;
                    out[cstart + i] = ga * xhat + be;
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn group_norm_backward<T: Scalar>(
    gout: &[T],
    input: &[T],
    in_shape: [usize; 5],
    groups: usize,
    gamma: &[T],
    mean: &[T],
    inv_std: &[T],
    mut grad_in: Option<&mut Vec<T>>,
    grad_gamma: &mut [T],
    grad_beta: &mut [T],
) {
    let [n, c, d, h, w] = in_shape;
    let sp = d * h * w;
    let cg = c / groups;
    let m = cg * sp;
    let inv_m = T::from_f64(1.0 / m as f64);
    for b in 0..n {
        for g in 0..groups {
            let mu = mean[b * groups + g];
            let istd = inv_std[b * groups + g];
            // sum1 = sum(g*gamma), sum2 = sum(g*gamma*xhat) over the group
            let mut sum1 = T::ZERO;
            let mut sum2 = T::ZERO;
            for cc in 0..cg {
                let ch = g * cg + cc;
                let ga = gamma[ch];
                let cstart = (b * c + ch) * sp;
                let mut s1 = T::ZERO;
                let mut s2 = T::ZERO;
                let mut gg = T::ZERO;
                let mut gb = T::ZERO;
                for i in 0..sp {
                    let go = gout[cstart + i];
                    let xhat = (input[cstart + i] - mu) * istd;
                    let gxh = go * ga;
                    s1 += gxh;
                    s2 += gxh * xhat;
                    gg += go * xhat;
                    gb += go;
                }
                sum1 += s1;
                sum2 += s2;
                grad_gamma[ch] += gg;
                grad_beta[ch] += gb;
            }
            if let Some(gi) = grad_in.as_deref_mut() {
                for cc in 0..cg {
                    let ch = g * cg + cc;
                    let ga = gamma[ch];
                    let cstart = (b * c + ch) * sp;
                    for i in 0..sp {
                        let go = gout[cstart + i];
                        let xhat = (input[cstart + i] - mu) * istd;
                        let gxh = go * ga;
                        gi[cstart + i] += istd * (gxh - (sum1 + xhat * sum2) * inv_m);
                    }
                }
            }
        }
    }
}

// ---- pointwise ----

pub(crate) fn unary_forward<T: Scalar>(input: &[T], kind: UnaryKind) -> Vec<T> {
    match kind {
        UnaryKind::Relu => input
            .iter()
            .map(|&x| if x > T::ZERO { x } else { T::ZERO })
            .collect(),
        UnaryKind::Tanh => input.iter().map(|&x| x.tanh()).collect(),
        UnaryKind::Sigmoid => input
            .iter()
            .map(|&x| T::ONE / (T::ONE + (-x).exp()))
            .collect(),
        UnaryKind::Neg => input.iter().map(|&x| -x).collect(),
    }
}

pub(crate) fn unary_backward<T: Scalar>(
    gout: &[T],
    output: &[T],
    _input: &[T],
    kind: UnaryKind,
) -> Vec<T> {
    match kind {
        UnaryKind::Relu => gout
            .iter()
            .zip(output.iter())
            .map(|(&g, &y)| if y > T::ZERO { g } else { T::ZERO })
            .collect(),
        UnaryKind::Tanh => gout
            .iter()
            .zip(output.iter())
            .map(|(&g, &y)| g * (T::ONE - y * y))
            .collect(),
        UnaryKind::Sigmoid => gout
            .iter()
            .zip(output.iter())
            .map(|(&g, &y)| g * y * (T::ONE - y))
            .collect(),
        UnaryKind::Neg => gout.iter().map(|&g| -g).collect(),
    }
}

pub(crate) fn binary_forward<T: Scalar>(lhs: &[T], rhs: &[T], kind: BinaryKind) -> Vec<T> {
    let zip = lhs.iter().zip(rhs.iter());
    match kind {
        BinaryKind::Add => zip.map(|(&a, &b)| a + b).collect(),
        BinaryKind::Sub => zip.map(|(&a, &b)| a - b).collect(),
        BinaryKind::Mul => zip.map(|(&a, &b)| a * b).collect(),
        BinaryKind::Div => zip.map(|(&a, &b)| a / b).collect(),
    }
}

#[allow(clippy::type_complexity)]
pub(crate) fn binary_backward<T: Scalar>(
    gout: &[T],
    lhs: &[T],
    rhs: &[T],
    kind: BinaryKind,
    wants_lhs: bool,
    wants_rhs: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let gl = wants_lhs.then(|| match kind {
        BinaryKind::Add | BinaryKind::Sub => gout.to_vec(),
        BinaryKind::Mul => gout.iter().zip(rhs.iter()).map(|(&g, &b)| g * b).collect(),
        BinaryKind::Div => gout.iter().zip(rhs.iter()).map(|(&g, &b)| g / b).collect(),
    });
    let gr = wants_rhs.then(|| match kind {
        BinaryKind::Add => gout.to_vec(),
        BinaryKind::Sub => gout.iter().map(|&g| -g).collect(),
        BinaryKind::Mul => gout.iter().zip(lhs.iter()).map(|(&g, &a)| g * a).collect(),
        BinaryKind::Div => gout
            .iter()
            .zip(lhs.iter().zip(rhs.iter()))
            .map(|(&g, (&a, &b))| -g * a / (b * b))
            .collect(),
    });
    (gl, gr)
}

// ---- concat / slice ----

pub(crate) fn concat_channels_forward<T: Scalar>(
    a: &[T],
    ca: usize,
    b: &[T],
    cb: usize,
    n: usize,
    sp: usize,
    out: &mut [T],
) {
    let c = ca + cb;
    for bi in 0..n {
        out[bi * c * sp..bi * c * sp + ca * sp].copy_from_slice(&a[bi * ca * sp..(bi + 1) * ca * sp]);
        out[bi * c * sp + ca * sp..(bi + 1) * c * sp]
            .copy_from_slice(&b[bi * cb * sp..(bi + 1) * cb * sp]);
    }
}

/// Accumulate the slice of the concat gradient belonging to one part.
/// `c_self` channels of this part, `c_other` of the sibling, part channels
/// start at `offset` in the concatenated tensor.
pub(crate) fn concat_backward_part<T: Scalar>(
    gpart: &mut [T],
    gout: &[T],
    n: usize,
    c_self: usize,
    c_other: usize,
    sp: usize,
    offset: usize,
    _len: usize,
) {
    let c = c_self + c_other;
    for bi in 0..n {
        let src = &gout[(bi * c + offset) * sp..(bi * c + offset + c_self) * sp];
        let dst = &mut gpart[bi * c_self * sp..(bi + 1) * c_self * sp];
        for (d, s) in dst.iter_mut().zip(src.iter()) {
            *d += *s;
        }
    }
}

pub(crate) fn slice_channels_forward<T: Scalar>(
    input: &[T],
    shape: [usize; 3],
    start: usize,
    len: usize,
    out: &mut [T],
) {
    let [n, c, sp] = shape;
    for bi in 0..n {
        out[bi * len * sp..(bi + 1) * len * sp]
            .copy_from_slice(&input[(bi * c + start) * sp..(bi * c + start + len) * sp]);
    }
}

pub(crate) fn slice_channels_backward<T: Scalar>(
    gin: &mut [T],
    gout: &[T],
    shape: [usize; 3],
    start: usize,
    len: usize,
) {
    let [n, c, sp] = shape;
    for bi in 0..n {
        let dst = &mut gin[(bi * c + start) * sp..(bi * c + start + len) * sp];
        let src = &gout[bi * len * sp..(bi + 1) * len * sp];
        for (d, s) in dst.iter_mut().zip(src.iter()) {
            *d += *s;
        }
    }
}

// ---- trilinear upsample x2, align_corners = false ----

/// Per output index: source taps (i0, i1) and the weight of i1.
fn upsample_taps(out_extent: usize, in_extent: usize) -> Vec<(usize, usize, f64)> {
    (0..out_extent)
        .map(|o| {
            let s = (0.5 * o as f64 - 0.25).max(0.0);
            let floor = s.floor();
            let i0 = (floor as usize).min(in_extent - 1);
            let i1 = (i0 + 1).min(in_extent - 1);
            (i0, i1, s - floor)
        })
        .collect()
}

pub(crate) fn upsample2x_forward<T: Scalar>(input: &[T], in_shape: [usize; 5], out: &mut [T]) {
    let [n, c, d, h, w] = in_shape;
    let (od, oh, ow) = (2 * d, 2 * h, 2 * w);
    let taps_d = upsample_taps(od, d);
    let taps_h = upsample_taps(oh, h);
    let taps_w = upsample_taps(ow, w);
    let in_ch = d * h * w;
    let out_ch = od * oh * ow;
    for bc in 0..n * c {
        let src = &input[bc * in_ch..(bc + 1) * in_ch];
        let dst = &mut out[bc * out_ch..(bc + 1) * out_ch];
        for (oz, &(z0, z1, tz)) in taps_d.iter().enumerate() {
            let (wz0, wz1) = (T::from_f64(1.0 - tz), T::from_f64(tz));
            for (oy, &(y0, y1, ty)) in taps_h.iter().enumerate() {
                let (wy0, wy1) = (T::from_f64(1.0 - ty), T::from_f64(ty));
                let row = (oz * oh + oy) * ow;
                for (ox, &(x0, x1, tx)) in taps_w.iter().enumerate() {
                    let (wx0, wx1) = (T::from_f64(1.0 - tx), T::from_f64(tx));
                    let c00 = src[(z0 * h + y0) * w + x0] * wx0 + src[(z0 * h + y0) * w + x1] * wx1;
                    let c01 = src[(z0 * h + y1) * w + x0] * wx0 + src[(z0 * h + y1) * w + x1] * wx1;
                    let c10 = src[(z1 * h + y0) * w + x0] * wx0 + src[(z1 * h + y0) * w + x1] * wx1;
                    let c11 = src[(z1 * h + y1) * w + x0] * wx0 + src[(z1 * h + y1) * w + x1] * wx1;
                    dst[row + ox] = (c00 * wy0 + c01 * wy1) * wz0 + (c10 * wy0 + c11 * wy1) * wz1;
                }
            }
        }
    }
}

pub(crate) fn upsample2x_backward<T: Scalar>(gin: &mut [T], gout: &[T], in_shape: [usize; 5]) {
    let [n, c, d, h, w] = in_shape;
    let (od, oh, ow) = (2 * d, 2 * h, 2 * w);
    let taps_d = upsample_taps(od, d);
    let taps_h = upsample_taps(oh, h);
    let taps_w = upsample_taps(ow, w);
    let in_ch = d * h * w;
    let out_ch = od * oh * ow;
    for bc in 0..n * c {
        let dst = &mut gin[bc * in_ch..(bc + 1) * in_ch];
        let src = &gout[bc * out_ch..(bc + 1) * out_ch];
        for (oz, &(z0, z1, tz)) in taps_d.iter().enumerate() {
            let (wz0, wz1) = (T::from_f64(1.0 - tz), T::from_f64(tz));
            for (oy, &(y0, y1, ty)) in taps_h.iter().enumerate() {
                let (wy0, wy1) = (T::from_f64(1.0 - ty), T::from_f64(ty));
                let row = (oz * oh + oy) * ow;
                for (ox, &(x0, x1, tx)) in taps_w.iter().enumerate() {
                    let (wx0, wx1) = (T::from_f64(1.0 - tx), T::from_f64(tx));
                    let g = src[row + ox];
                    dst[(z0 * h + y0) * w + x0] += g * wz0 * wy0 * wx0;
                    dst[(z0 * h + y0) * w + x1] += g * wz0 * wy0 * wx1;
                    dst[(z0 * h + y1) * w + x0] += g * wz0 * wy1 * wx0;
                    dst[(z0 * h + y1) * w + x1] += g * wz0 * wy1 * wx1;
                    dst[(z1 * h + y0) * w + x0] += g * wz1 * wy0 * wx0;
                    dst[(z1 * h + y0) * w + x1] += g * wz1 * wy0 * wx1;
                    dst[(z1 * h + y1) * w + x0] += g * wz1 * wy1 * wx0;
                    dst[(z1 * h + y1) * w + x1] += g * wz1 * wy1 * wx1;
                }
            }
        }
    }
}
