//! Case generation: deterministic in (seed, index), validated against the
//! anatomical-relation guarantees, retried with fresh jitter on failure.

use super::{
    Case, CaseMeta, OrganDraw, OrganSpec, PhantomSpec, APPENDAGE, ORGAN_A, ORGAN_B, TARGET,
};
use crate::error::{DdlError, Result};
use crate::rng::{indexed_stream, standard_normal, uniform_in};
use crate::volumetric::{combine, dilate, BinaryMask, Geometry, SetOp, VoxelGrid};
use rand_chacha::ChaCha12Rng;
use std::collections::BTreeMap;

/// Voxel center position in mm along one axis.
#[inline]
fn pos(index: usize, spacing: f32) -> f64 {
    index as f64 * spacing as f64
}

fn rasterize(geometry: &Geometry, draw: &OrganDraw) -> BinaryMask {
    let [sx, sy, sz] = geometry.spacing;
    let [cx, cy, cz] = draw.center_mm;
    let [ax, ay, az] = draw.semi_axes_mm;
    BinaryMask::from_fn(*geometry, |x, y, z| {
        let dx = (pos(x, sx) - cx) / ax;
        let dy = (pos(y, sy) - cy) / ay;
        let dz = (pos(z, sz) - cz) / az;
        dx * dx + dy * dy + dz * dz <= 1.0
    })
    .expect("geometry validated by spec")
}

fn draw_semi_axes(rng: &mut ChaCha12Rng, organ: &OrganSpec) -> [f64; 3] {
    [
        uniform_in(rng, organ.semi_axes_mm[0]),
        uniform_in(rng, organ.semi_axes_mm[1]),
        uniform_in(rng, organ.semi_axes_mm[2]),
    ]
}

fn jitter(rng: &mut ChaCha12Rng, half_width: f64) -> f64 {
    uniform_in(rng, [-half_width, half_width])
}

struct DrawnAnatomy {
    organs: BTreeMap<String, OrganDraw>,
}

fn draw_anatomy(spec: &PhantomSpec, rng: &mut ChaCha12Rng) -> DrawnAnatomy {
    let [ex, ey, ez] = spec.extents;
    let [sx, sy, sz] = spec.spacing_mm;
    let mid = [
        pos(ex - 1, sx) / 2.0,
        pos(ey - 1, sy) / 2.0,
        pos(ez - 1, sz) / 2.0,
    ];

    // Target: centered with jitter.
    let t_semi = draw_semi_axes(rng, &spec.target);
    let t_center = [
        mid[0] + jitter(rng, spec.target.center_jitter_mm),
        mid[1] + jitter(rng, spec.target.center_jitter_mm),
        mid[2] + jitter(rng, spec.target.center_jitter_mm),
    ];

    // Organ A above the target, reaching down into it by the drawn depth.
    let a_semi = draw_semi_axes(rng, &spec.organ_a);
    let a_depth = uniform_in(rng, spec.a_overlap_depth_mm);
    let a_center = [
        t_center[0] + jitter(rng, spec.organ_a.center_jitter_mm),
        t_center[1] + jitter(rng, spec.organ_a.center_jitter_mm),
        t_center[2] + t_semi[2] + a_semi[2] - a_depth,
    ];

    // Organ B behind the target along +y, slightly above center.
    let b_semi = draw_semi_axes(rng, &spec.organ_b);
    let b_depth = uniform_in(rng, spec.b_overlap_depth_mm);
    let b_center = [
        t_center[0] + jitter(rng, spec.organ_b.center_jitter_mm),
        t_center[1] + t_semi[1] + b_semi[1] - b_depth,
        t_center[2] + uniform_in(rng, spec.b_center_z_offset_mm),
    ];

    // Two appendage lobes straddling the target boundary at +/- x.
    let offset = t_semi[0] * spec.appendage_offset_frac;
    let lobe_left = OrganDraw {
        semi_axes_mm: draw_semi_axes(rng, &spec.appendage),
        center_mm: [
            t_center[0] - offset + jitter(rng, spec.appendage.center_jitter_mm),
            t_center[1] + jitter(rng, spec.appendage.center_jitter_mm),
            t_center[2] - spec.appendage_drop_mm,
        ],
    };
    let lobe_right = OrganDraw {
        semi_axes_mm: draw_semi_axes(rng, &spec.appendage),
        center_mm: [
            t_center[0] + offset + jitter(rng, spec.appendage.center_jitter_mm),
            t_center[1] + jitter(rng, spec.appendage.center_jitter_mm),
            t_center[2] - spec.appendage_drop_mm,
        ],
    };

    let mut organs = BTreeMap::new();
    organs.insert(
        TARGET.to_string(),
        OrganDraw {
            center_mm: t_center,
            semi_axes_mm: t_semi,
        },
    );
    organs.insert(
        ORGAN_A.to_string(),
        OrganDraw {
            center_mm: a_center,
            semi_axes_mm: a_semi,
        },
    );
    organs.insert(
        ORGAN_B.to_string(),
        OrganDraw {
            center_mm: b_center,
            semi_axes_mm: b_semi,
        },
    );
    organs.insert(format!("{APPENDAGE}:left"), lobe_left);
    organs.insert(format!("{APPENDAGE}:right"), lobe_right);
    DrawnAnatomy { organs }
}

fn check_invariants(
    spec: &PhantomSpec,
    structures: &BTreeMap<String, BinaryMask>,
) -> std::result::Result<(), String> {
    let target = &structures[TARGET];
    if target.is_empty() {
        return Err("target is empty".into());
    }
    let overlap = |name: &str| -> usize {
        combine(target, &structures[name], SetOp::Intersect)
            .map(|m| m.count())
            .unwrap_or(0)
    };
    let req = &spec.min_overlap_voxels;
    let got_a = overlap(ORGAN_A);
    if got_a < req.target_a {
        return Err(format!("target/organ_a overlap {got_a} < {}", req.target_a));
    }
    let got_b = overlap(ORGAN_B);
    if got_b < req.target_b {
        return Err(format!("target/organ_b overlap {got_b} < {}", req.target_b));
    }
    let got_c = overlap(APPENDAGE);
    if got_c < req.target_appendage {
        return Err(format!(
            "target/appendage overlap {got_c} < {}",
            req.target_appendage
        ));
    }
    // Appendage attachment: within 2 mm of the target.
    let attached = dilate(target, 2.0)
        .and_then(|d| combine(&structures[APPENDAGE], &d, SetOp::Intersect))
        .map(|m| !m.is_empty())
        .unwrap_or(false);
    if !attached {
        return Err("appendage detached from target".into());
    }
    Ok(())
}

/// Deterministic case generation; bit-identical for the same (seed, index).
pub fn generate_case(spec: &PhantomSpec, index: usize) -> Result<Case> {
    spec.validate()?;
    let geometry = Geometry::new(spec.extents, spec.spacing_mm)?;
    let mut rng = indexed_stream(spec.seed, "phantom", index as u64);

    let mut last_failure = String::new();
    for attempt in 1..=spec.max_attempts {
        let anatomy = draw_anatomy(spec, &mut rng);
        let target = rasterize(&geometry, &anatomy.organs[TARGET]);
        let organ_a = rasterize(&geometry, &anatomy.organs[ORGAN_A]);
        let organ_b = rasterize(&geometry, &anatomy.organs[ORGAN_B]);
        let lobes = combine(
            &rasterize(&geometry, &anatomy.organs[&format!("{APPENDAGE}:left")]),
            &rasterize(&geometry, &anatomy.organs[&format!("{APPENDAGE}:right")]),
            SetOp::Union,
        )?;

        let mut structures = BTreeMap::new();
        structures.insert(TARGET.to_string(), target);
        structures.insert(ORGAN_A.to_string(), organ_a);
        structures.insert(ORGAN_B.to_string(), organ_b);
        structures.insert(APPENDAGE.to_string(), lobes);

        match check_invariants(spec, &structures) {
            Ok(()) => {
                let image = render_image(spec, &geometry, &structures, &mut rng)?;
                return Ok(Case {
                    meta: CaseMeta {
                        id: format!("case_{index:04}"),
                        seed: spec.seed,
                        index,
                        attempts: attempt,
                        organs: anatomy.organs,
                        config_hash: None,
                    },
                    image,
                    structures,
                    general_prediction: None,
                });
            }
            Err(reason) => last_failure = reason,
        }
    }
    Err(DdlError::Phantom(format!(
        "case {index}: invariants unsatisfiable after {} attempts; last failure: {last_failure}",
        spec.max_attempts
    )))
}

fn render_image(
    spec: &PhantomSpec,
    geometry: &Geometry,
    structures: &BTreeMap<String, BinaryMask>,
    rng: &mut ChaCha12Rng,
) -> Result<VoxelGrid> {
    let n = geometry.voxel_count();
    let mut values = vec![0f32; n];
    for (name, intensity) in [
        (TARGET, spec.target.intensity),
        (ORGAN_A, spec.organ_a.intensity),
        (ORGAN_B, spec.organ_b.intensity),
        (APPENDAGE, spec.appendage.intensity),
    ] {
        for (v, &fg) in values.iter_mut().zip(structures[name].values().iter()) {
            if fg {
                *v += intensity;
            }
        }
    }
    if spec.noise_sigma > 0.0 {
        for v in values.iter_mut() {
            *v += spec.noise_sigma * standard_normal(rng) as f32;
        }
    }
    VoxelGrid::new(*geometry, values)
}

/// Cases indexed 0..n-1 via [`generate_case`].
pub fn generate_dataset(spec: &PhantomSpec, n: usize) -> Result<Vec<Case>> {
    if n == 0 {
        return Err(DdlError::InvalidArgument(
            "dataset size must be at least 1".into(),
        ));
    }
    (0..n).map(|i| generate_case(spec, i)).collect()
}
