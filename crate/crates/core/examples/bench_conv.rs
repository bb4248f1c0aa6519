use ddl_core::tensor::{ConvSpec, Graph, Shape};
use std::time::Instant;

fn main() {
    // Encoder stage-1 second conv at full desk resolution: 8->8, 48x48x32.
    let spec = ConvSpec::unit(8, 8, 3, 1);
    let n_in = 8 * 32 * 48 * 48;
    let input: Vec<f32> = (0..n_in).map(|i| ((i % 97) as f32) * 0.01).collect();
    let weights: Vec<f32> = (0..spec.weight_shape().numel()).map(|i| ((i % 13) as f32) * 0.02 - 0.1).collect();
    let bias = vec![0.1f32; 8];

    let macs = 8f64 * 8.0 * 27.0 * 32.0 * 48.0 * 48.0;
    // forward only
    let t0 = Instant::now();
    let reps = 20;
    for _ in 0..reps {
        let mut g: Graph<f32> = Graph::inference();
        let x = g.leaf(Shape::new(vec![1, 8, 32, 48, 48]), input.clone(), false).unwrap();
        let w = g.leaf(spec.weight_shape(), weights.clone(), false).unwrap();
        let b = g.leaf(Shape::new(vec![8]), bias.clone(), false).unwrap();
        let y = g.conv3d(x, w, Some(b), &spec).unwrap();
        std::hint::black_box(g.value(y)[0]);
    }
    let dt = t0.elapsed().as_secs_f64() / reps as f64;
    println!("forward: {:.1} ms, {:.1} GMAC/s", dt * 1e3, macs / dt / 1e9);

    // forward+backward through conv (weights+input grads)
    let t0 = Instant::now();
    for _ in 0..reps {
        let mut g: Graph<f32> = Graph::new();
        let x = g.leaf(Shape::new(vec![1, 8, 32, 48, 48]), input.clone(), true).unwrap();
        let w = g.leaf(spec.weight_shape(), weights.clone(), true).unwrap();
        let b = g.leaf(Shape::new(vec![8]), bias.clone(), true).unwrap();
        let y = g.conv3d(x, w, Some(b), &spec).unwrap();
        let s = g.sum(y);
        g.backward(s).unwrap();
        std::hint::black_box(g.grad(w).unwrap()[0]);
    }
    let dt = t0.elapsed().as_secs_f64() / reps as f64;
    println!("fwd+bwd: {:.1} ms, {:.1} GMAC/s effective(3x)", dt * 1e3, 3.0 * macs / dt / 1e9);
}
