//! AVX2+FMA fast path for 3x3x3 unit-stride convolutions (plain or dilated
//! with padding equal to the dilation rate). The input is copied into a
//! zero-padded scratch buffer once, after which every row pass runs without
//! bounds handling: nine fused multiply-adds per output element.
//!
//! Accumulation order is fixed, so results are reproducible per machine.

#![cfg(target_arch = "x86_64")]

use std::sync::OnceLock;

pub fn available() -> bool {
    static AVAILABLE: OnceLock<bool> = OnceLock::new();
    *AVAILABLE.get_or_init(|| {
        std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma")
    })
}

/// out += conv3x3(input, weights) (+ bias); `out` is not cleared here.
pub fn conv3_forward(
    input: &[f32],
    in_shape: [usize; 5],
    cout: usize,
    dil: [usize; 3],
    weights: &[f32],
    bias: Option<&[f32]>,
    out: &mut [f32],
) {
    debug_assert!(available());
    // SAFETY: caller checked `available()` via the Scalar hook.
    unsafe { conv3_forward_inner(input, in_shape, cout, dil, weights, bias, out) }
}

/// grad_w += correlation of grad_out with the padded input.
pub fn conv3_backward_weights(
    grad_w: &mut [f32],
    grad_out: &[f32],
    input: &[f32],
    in_shape: [usize; 5],
    cout: usize,
    dil: [usize; 3],
) {
    debug_assert!(available());
    // SAFETY: caller checked `available()` via the Scalar hook.
    unsafe { conv3_backward_weights_inner(grad_w, grad_out, input, in_shape, cout, dil) }
}

/// Copy one channel into the zero-padded scratch plane.
#[inline(always)]
fn pad_channel(
    src: &[f32],
    (d, h, w): (usize, usize, usize),
    (dd, dh, dw): (usize, usize, usize),
    dst: &mut [f32],
) {
    let hp = h + 2 * dh;
    let wp = w + 2 * dw;
    dst.fill(0.0);
    for z in 0..d {
        for y in 0..h {
            let s = &src[(z * h + y) * w..(z * h + y + 1) * w];
            let o = ((z + dd) * hp + y + dh) * wp + dw;
            dst[o..o + w].copy_from_slice(s);
        }
    }
}

#[target_feature(enable = "avx2,fma")]
unsafe fn conv3_forward_inner(
    input: &[f32],
    in_shape: [usize; 5],
    cout: usize,
    dil: [usize; 3],
    weights: &[f32],
    bias: Option<&[f32]>,
    out: &mut [f32],
) {
    let [n, cin, d, h, w] = in_shape;
    let [dd, dh, dw] = dil;
    let (dp, hp, wp) = (d + 2 * dd, h + 2 * dh, w + 2 * dw);
    let pch = dp * hp * wp;
    let ch = d * h * w;
    let mut padded = vec![0f32; cin * pch];
    for b in 0..n {
        for ic in 0..cin {
            pad_channel(
                &input[(b * cin + ic) * ch..(b * cin + ic + 1) * ch],
                (d, h, w),
                (dd, dh, dw),
                &mut padded[ic * pch..(ic + 1) * pch],
            );
        }
        for oc in 0..cout {
            let out_ch = &mut out[(b * cout + oc) * ch..(b * cout + oc + 1) * ch];
            for ic in 0..cin {
                let w27 = &weights[(oc * cin + ic) * 27..(oc * cin + ic) * 27 + 27];
                let pc = &padded[ic * pch..(ic + 1) * pch];
                for od in 0..d {
                    for kd in 0..3 {
                        let pplane = &pc[(od + kd * dd) * hp * wp..(od + kd * dd + 1) * hp * wp];
                        let w9 = &w27[kd * 9..kd * 9 + 9];
                        for oh in 0..h {
                            row9(
                                &mut out_ch[(od * h + oh) * w..(od * h + oh + 1) * w],
                                &pplane[oh * wp..oh * wp + wp],
                                &pplane[(oh + dh) * wp..(oh + dh) * wp + wp],
                                &pplane[(oh + 2 * dh) * wp..(oh + 2 * dh) * wp + wp],
                                w9,
                                dw,
                            );
                        }
                    }
                }
            }
            if let Some(bv) = bias {
                let b0 = bv[oc];
                for o in out_ch.iter_mut() {
                    *o += b0;
                }
            }
        }
    }
}

/// One output row: nine taps from three padded rows at offsets 0, dx, 2dx.
#[inline(always)]
unsafe fn row9(out: &mut [f32], r0: &[f32], r1: &[f32], r2: &[f32], w9: &[f32], dx: usize) {
    let n = out.len();
    debug_assert!(r0.len() >= n + 2 * dx && r1.len() >= n + 2 * dx && r2.len() >= n + 2 * dx);
    let (w0, w1, w2) = (w9[0], w9[1], w9[2]);
    let (w3, w4, w5) = (w9[3], w9[4], w9[5]);
    let (w6, w7, w8) = (w9[6], w9[7], w9[8]);
    for x in 0..n {
        let mut acc = *out.get_unchecked(x);
        acc = r0.get_unchecked(x).mul_add(w0, acc);
        acc = r0.get_unchecked(x + dx).mul_add(w1, acc);
        acc = r0.get_unchecked(x + 2 * dx).mul_add(w2, acc);
        acc = r1.get_unchecked(x).mul_add(w3, acc);
        acc = r1.get_unchecked(x + dx).mul_add(w4, acc);
        acc = r1.get_unchecked(x + 2 * dx).mul_add(w5, acc);
        acc = r2.get_unchecked(x).mul_add(w6, acc);
        acc = r2.get_unchecked(x + dx).mul_add(w7, acc);
        acc = r2.get_unchecked(x + 2 * dx).mul_add(w8, acc);
        *out.get_unchecked_mut(x) = acc;
    }
}

#[target_feature(enable = "avx2,fma")]
unsafe fn conv3_backward_weights_inner(
    grad_w: &mut [f32],
    grad_out: &[f32],
    input: &[f32],
    in_shape: [usize; 5],
    cout: usize,
    dil: [usize; 3],
) {
    let [n, cin, d, h, w] = in_shape;
    let [dd, dh, dw] = dil;
    let (dp, hp, wp) = (d + 2 * dd, h + 2 * dh, w + 2 * dw);
    let pch = dp * hp * wp;
    let ch = d * h * w;
    let mut padded = vec![0f32; cin * pch];
    for b in 0..n {
        for ic in 0..cin {
            pad_channel(
                &input[(b * cin + ic) * ch..(b * cin + ic + 1) * ch],
                (d, h, w),
                (dd, dh, dw),
                &mut padded[ic * pch..(ic + 1) * pch],
            );
        }
        for oc in 0..cout {
            let go_ch = &grad_out[(b * cout + oc) * ch..(b * cout + oc + 1) * ch];
            for ic in 0..cin {
                let pc = &padded[ic * pch..(ic + 1) * pch];
                for kd in 0..3 {
                    let mut lanes = [[0f32; 8]; 9];
                    let mut tail = [0f32; 9];
                    for od in 0..d {
                        let pplane =
                            &pc[(od + kd * dd) * hp * wp..(od + kd * dd + 1) * hp * wp];
                        for oh in 0..h {
                            rowdot9(
                                &go_ch[(od * h + oh) * w..(od * h + oh + 1) * w],
                                &pplane[oh * wp..oh * wp + wp],
                                &pplane[(oh + dh) * wp..(oh + dh) * wp + wp],
                                &pplane[(oh + 2 * dh) * wp..(oh + 2 * dh) * wp + wp],
                                dw,
                                &mut lanes,
                                &mut tail,
                            );
                        }
                    }
                    let base = (oc * cin + ic) * 27 + kd * 9;
                    for j in 0..9 {
                        let l = lanes[j];
                        let lane_sum =
                            ((l[0] + l[4]) + (l[1] + l[5])) + ((l[2] + l[6]) + (l[3] + l[7]));
                        grad_w[base + j] += lane_sum + tail[j];
                    }
                }
            }
        }
    }
}

/// Nine simultaneous row dot products against one gradient row.
#[inline(always)]
unsafe fn rowdot9(
    go: &[f32],
    r0: &[f32],
    r1: &[f32],
    r2: &[f32],
    dx: usize,
    lanes: &mut [[f32; 8]; 9],
    tail: &mut [f32; 9],
) {
    let n = go.len();
    let chunks = n / 8;
    for c in 0..chunks {
        let x0 = c * 8;
        macro_rules! tap {
            ($j:expr, $row:expr, $off:expr) => {
                for l in 0..8 {
                    lanes[$j][l] = go
                        .get_unchecked(x0 + l)
                        .mul_add(*$row.get_unchecked(x0 + l + $off), lanes[$j][l]);
                }
            };
        }
        tap!(0, r0, 0);
        tap!(1, r0, dx);
        tap!(2, r0, 2 * dx);
        tap!(3, r1, 0);
        tap!(4, r1, dx);
        tap!(5, r1, 2 * dx);
        tap!(6, r2, 0);
        tap!(7, r2, dx);
        tap!(8, r2, 2 * dx);
    }
    for x in chunks * 8..n {
        let g = *go.get_unchecked(x);
        tail[0] += g * r0.get_unchecked(x);
        tail[1] += g * r0.get_unchecked(x + dx);
        tail[2] += g * r0.get_unchecked(x + 2 * dx);
        tail[3] += g * r1.get_unchecked(x);
        tail[4] += g * r1.get_unchecked(x + dx);
        tail[5] += g * r1.get_unchecked(x + 2 * dx);
        tail[6] += g * r2.get_unchecked(x);
        tail[7] += g * r2.get_unchecked(x + dx);
        tail[8] += g * r2.get_unchecked(x + 2 * dx);
    }
}
