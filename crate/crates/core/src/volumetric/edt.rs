//! Exact Euclidean distance transform via the per-axis lower-envelope
//! (parabola) method, with anisotropic spacing folded in as per-axis weights
//! on the squared distance.

use super::{BinaryMask, Volume};

/// Sentinel for "no foreground anywhere": the largest finite f64.
pub const EDT_INFINITY: f64 = f64::MAX;

/// Squared distance (mm^2) from every voxel center to the nearest foreground
/// voxel center; `EDT_INFINITY` everywhere when the mask is empty.
pub fn edt_squared(mask: &BinaryMask) -> Vec<f64> {
    let [dx, dy, dz] = mask.geometry().extents;
    let [sx, sy, sz] = mask.geometry().spacing;
    let n = mask.geometry().voxel_count();
    if mask.is_empty() {
        return vec![EDT_INFINITY; n];
    }

    let mut dist: Vec<f64> = mask
        .values()
        .iter()
        .map(|&fg| if fg { 0.0 } else { f64::INFINITY })
        .collect();

    let mut line = vec![0.0f64; dx.max(dy).max(dz)];
    let mut out_line = vec![0.0f64; line.len()];
    let mut scratch = EnvelopeScratch::new(line.len());

    // x axis
    let wx = (sx as f64) * (sx as f64);
    for z in 0..dz {
        for y in 0..dy {
            let base = dx * (y + dy * z);
            line[..dx].copy_from_slice(&dist[base..base + dx]);
            envelope_pass(&line[..dx], wx, &mut out_line[..dx], &mut scratch);
            dist[base..base + dx].copy_from_slice(&out_line[..dx]);
        }
    }
    // y axis
    let wy = (sy as f64) * (sy as f64);
    for z in 0..dz {
        for x in 0..dx {
            for y in 0..dy {
                line[y] = dist[x + dx * (y + dy * z)];
            }
            envelope_pass(&line[..dy], wy, &mut out_line[..dy], &mut scratch);
            for y in 0..dy {
                dist[x + dx * (y + dy * z)] = out_line[y];
            }
        }
    }
    // z axis
    let wz = (sz as f64) * (sz as f64);
    for y in 0..dy {
        for x in 0..dx {
            for z in 0..dz {
                line[z] = dist[x + dx * (y + dy * z)];
            }
            envelope_pass(&line[..dz], wz, &mut out_line[..dz], &mut scratch);
            for z in 0..dz {
                dist[x + dx * (y + dy * z)] = out_line[z];
            }
        }
    }
    dist
}

/// Unsigned distance (mm) to the nearest foreground voxel center; zero on
/// foreground, `EDT_INFINITY` everywhere when the mask is empty.
pub fn edt(mask: &BinaryMask) -> Volume<f64> {
    let sq = edt_squared(mask);
    let values = if mask.is_empty() {
        sq
    } else {
        sq.into_iter().map(f64::sqrt).collect()
    };
    Volume::new(*mask.geometry(), values).expect("extent-preserving by construction")
}

/// Unsigned distance (mm) to the mask boundary: distance to the nearest
/// foreground center outside the mask, to the nearest background center
/// inside it. Degenerate all-foreground or all-background sides contribute
/// zeros, keeping losses finite.
pub fn boundary_distance(mask: &BinaryMask) -> Vec<f64> {
    let n = mask.geometry().voxel_count();
    let outside = if mask.is_empty() {
        vec![0.0; n]
    } else {
        edt(mask).into_values()
    };
    let complement = mask.complement();
    let inside = if complement.is_empty() {
        vec![0.0; n]
    } else {
        edt(&complement).into_values()
    };
    mask.values()
        .iter()
        .enumerate()
        .map(|(i, &fg)| if fg { inside[i] } else { outside[i] })
        .collect()
}

struct EnvelopeScratch {
    /// Parabola apex indices.
    v: Vec<usize>,
    /// Domain boundaries between parabolas.
    z: Vec<f64>,
}

impl EnvelopeScratch {
    fn new(n: usize) -> Self {
        EnvelopeScratch {
            v: vec![0; n],
            z: vec![0.0; n + 1],
        }
    }
}

/// One 1-D pass of the lower-envelope method over `f`, squared-distance
/// weight `w` per index step. Infinite entries (no source yet) are skipped.
fn envelope_pass(f: &[f64], w: f64, out: &mut [f64], s: &mut EnvelopeScratch) {
    let n = f.len();
    let (v, z) = (&mut s.v, &mut s.z);
    let mut k: isize = -1;
    for (q, &fq) in f.iter().enumerate() {
        if fq.is_infinite() {
            continue;
        }
        let qf = q as f64;
        loop {
            if k < 0 {
                k = 0;
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
                break;
            }
            let p = v[k as usize];
            let pf = p as f64;
            let sep = ((fq + w * qf * qf) - (f[p] + w * pf * pf)) / (2.0 * w * (qf - pf));
            if sep <= z[k as usize] {
                k -= 1;
            } else {
                k += 1;
                v[k as usize] = q;
                z[k as usize] = sep;
                z[k as usize + 1] = f64::INFINITY;
                break;
            }
        }
    }
    if k < 0 {
        out[..n].copy_from_slice(f);
        return;
    }
    let mut j = 0usize;
    for (i, o) in out.iter_mut().enumerate().take(n) {
        let fi = i as f64;
        while z[j + 1] < fi {
            j += 1;
        }
        let p = v[j] as f64;
        *o = w * (fi - p) * (fi - p) + f[v[j]];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volumetric::{BinaryMask, Geometry};

    fn brute_force_sq(mask: &BinaryMask) -> Vec<f64> {
        let g = mask.geometry();
        let [sx, sy, sz] = g.spacing.map(|s| s as f64);
        let fg: Vec<[usize; 3]> = mask.foreground().collect();
        (0..g.voxel_count())
            .map(|i| {
                let [x, y, z] = g.coords(i);
                fg.iter()
                    .map(|&[fx, fy, fz]| {
                        let dx = (x as f64 - fx as f64) * sx;
                        let dy = (y as f64 - fy as f64) * sy;
                        let dz = (z as f64 - fz as f64) * sz;
                        dx * dx + dy * dy + dz * dz
                    })
                    .fold(EDT_INFINITY, f64::min)
            })
            .collect()
    }

    #[test]
    fn all_foreground_is_zero() {
        let g = Geometry::new([4, 3, 2], [1.0, 1.0, 1.0]).unwrap();
        let m = BinaryMask::from_fn(g, |_, _, _| true).unwrap();
        assert!(edt(&m).values().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn all_background_returns_sentinel() {
        let g = Geometry::new([3, 3, 3], [1.0, 1.0, 1.0]).unwrap();
        let m = BinaryMask::empty(g).unwrap();
        assert!(edt(&m).values().iter().all(|&d| d == EDT_INFINITY));
    }

    #[test]
    fn single_voxel_isotropic_distances() {
        let g = Geometry::new([5, 5, 5], [1.0, 1.0, 1.0]).unwrap();
        let mut m = BinaryMask::empty(g).unwrap();
        m.set(2, 2, 2, true);
        let d = edt(&m);
        assert_eq!(d.at(2, 2, 2), 0.0);
        assert_eq!(d.at(3, 2, 2), 1.0);
        assert_eq!(d.at(3, 3, 2), 2.0f64.sqrt());
        assert_eq!(d.at(3, 3, 3), 3.0f64.sqrt());
    }

    #[test]
    fn anisotropic_z_spacing() {
        let g = Geometry::new([3, 3, 3], [1.0, 1.0, 2.0]).unwrap();
        let mut m = BinaryMask::empty(g).unwrap();
        m.set(1, 1, 1, true);
        let d = edt(&m);
        assert_eq!(d.at(1, 1, 2), 2.0, "z neighbor at 2 mm spacing");
        assert_eq!(d.at(0, 1, 1), 1.0);
    }

    #[test]
    fn matches_brute_force_on_random_masks() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(5);
        for trial in 0..30 {
            let extents = [
                rng.gen_range(1..=9),
                rng.gen_range(1..=9),
                rng.gen_range(1..=9),
            ];
            let spacing = [
                *[1.0f32, 2.0, 0.7].get(rng.gen_range(0..3)).unwrap(),
                1.0,
                *[1.0f32, 2.0].get(rng.gen_range(0..2)).unwrap(),
            ];
            let g = Geometry::new(extents, spacing).unwrap();
            let density = rng.gen_range(0.0..0.4);
            let m = BinaryMask::from_fn(g, |_, _, _| rng.gen_bool(density)).unwrap();
            let got = edt_squared(&m);
            let want = brute_force_sq(&m);
            for (a, b) in got.iter().zip(want.iter()) {
                assert!((a - b).abs() <= 1e-9, "trial {trial}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn boundary_distance_is_zeroless_only_off_boundary() {
        let g = Geometry::new([7, 7, 7], [1.0, 1.0, 1.0]).unwrap();
        let m = BinaryMask::from_fn(g, |x, y, z| {
            (2..=4).contains(&x) && (2..=4).contains(&y) && (2..=4).contains(&z)
        })
        .unwrap();
        let d = boundary_distance(&m);
        // A surface voxel of the cube is 1 mm from the nearest background
        // center; the cube core is 2 mm deep; far corners are further out.
        assert_eq!(d[g.index(2, 2, 2)], 1.0);
        assert_eq!(d[g.index(3, 3, 3)], 2.0);
        assert_eq!(d[g.index(3, 3, 5)], 1.0);
        assert!(d[g.index(0, 0, 0)] > 2.0);
    }
}
