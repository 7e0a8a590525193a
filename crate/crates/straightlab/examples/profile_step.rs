use std::time::Instant;
use straightlab::datagen::{generate_dataset, DatagenConfig, SourcePool, TrackStyle};
use straightlab::netcore::{backward_from_taps_into, forward, forward_only, init_params, NetworkSpec, ParamSet};
use straightlab::rng::{stream, StreamKind};

fn main() {
    let cfg = DatagenConfig::preset(TrackStyle::Mnist, 4);
    let pool = SourcePool::Synthetic { size: 28, channels: 1 };
    let ds = generate_dataset(1, &cfg, &pool).unwrap();
    let spec = NetworkSpec::encoder([1, 64, 64], 128).unwrap();
    let params = init_params(&spec, &mut stream(1, StreamKind::ParamInit, 0)).unwrap();
    let frame = &ds[0].frames[0];
    let reps = 100;

    let t0 = Instant::now();
    for _ in 0..reps { let _ = forward_only(&spec, &params, frame).unwrap(); }
    println!("forward_only: {:.2} ms", t0.elapsed().as_secs_f64() * 1000.0 / reps as f64);

    let t0 = Instant::now();
    let mut traces = Vec::new();
    for _ in 0..reps { traces.push(forward(&spec, &params, frame).unwrap().1); }
    println!("forward+trace: {:.2} ms", t0.elapsed().as_secs_f64() * 1000.0 / reps as f64);

    let g = vec![0.1; 128];
    let mut acc = ParamSet::zeros_like(&spec).unwrap();
    let t0 = Instant::now();
    for trace in &traces {
        backward_from_taps_into(&spec, &params, trace, &[(13, &g[..])], &mut acc).unwrap();
    }
    println!("backward_into: {:.2} ms", t0.elapsed().as_secs_f64() * 1000.0 / reps as f64);
}
