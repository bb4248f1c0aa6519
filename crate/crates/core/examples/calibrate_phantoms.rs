use ddl_core::phantoms::{generate_case, PhantomSpec, TARGET};
use ddl_core::styles::{build_library, apply_style, StyleLibraryConfig};
use ddl_core::volumetric::dsc;

fn main() {
    let spec = PhantomSpec::default();
    let lib = build_library(&StyleLibraryConfig::default()).unwrap();
    let n = 30;
    let cases: Vec<_> = (0..n).map(|i| generate_case(&spec, i).unwrap()).collect();
    println!("target voxels: {:?}", cases.iter().take(5).map(|c| c.target().count()).collect::<Vec<_>>());
    for p in lib.held_out.iter().chain(lib.train.iter()) {
        let mut ds = Vec::new();
        let mut changed = 0;
        let mut empty = 0;
        for c in &cases {
            let stylized = apply_style(p, c, TARGET).unwrap();
            let d = dsc(&stylized, c.target()).unwrap();
            if d < 1.0 { changed += 1; }
            if stylized.is_empty() { empty += 1; }
            ds.push(d);
        }
        let mean = ds.iter().sum::<f64>() / ds.len() as f64;
        let min = ds.iter().cloned().fold(f64::INFINITY, f64::min);
        println!("{:24} mean_dsc_vs_whole={:.3} min={:.3} changed={}/{} empty={}", p.name, mean, min, changed, n, empty);
    }
}
