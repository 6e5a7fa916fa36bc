//! Wall-clock scaling checks. Kept in one test function inside a dedicated
//! binary so no sibling test competes for cores while timing runs.

use std::time::Instant;

use pathgcn_core::model::{ConvMode, ModelConfig, PathGcnModel};
use pathgcn_core::sampler::{PathSet, WalkConfig};
use pathgcn_core::synth;

fn median(samples: &mut [f64]) -> f64 {
    samples.sort_by(|a, b| a.total_cmp(b));
    samples[samples.len() / 2]
}

#[test]
fn sampling_scales_with_p_and_train_step_with_k() {
    let g = synth::erdos_renyi(2000, 0.004, 42);

    // Sampling cost is ~n*p*k walk steps, so doubling the walk budget
    // should roughly double the time. Interleave the two measurements so
    // clock drift hits both alike; medians absorb scheduler noise.
    let cfg5 = WalkConfig { length: 10, walks_per_node: 5, seed: 7 };
    let cfg10 = WalkConfig { length: 10, walks_per_node: 10, seed: 7 };
    std::hint::black_box(PathSet::sample(&g, &cfg5));
    std::hint::black_box(PathSet::sample(&g, &cfg10));
    let reps = 31;
    let (mut t5, mut t10) = (Vec::with_capacity(reps), Vec::with_capacity(reps));
    for _ in 0..reps {
        let start = Instant::now();
        std::hint::black_box(PathSet::sample(&g, &cfg5));
        t5.push(start.elapsed().as_secs_f64());
        let start = Instant::now();
        std::hint::black_box(PathSet::sample(&g, &cfg10));
        t10.push(start.elapsed().as_secs_f64());
    }
    let ratio = median(&mut t10) / median(&mut t5);
    assert!(
        (1.5..=3.0).contains(&ratio),
        "sampling time ratio p=10/p=5 was {ratio:.3}, expected [1.5, 3.0]"
    );

    // A longer kernel means more walk steps per convolution at fixed p,
    // so the optimizer step gets strictly slower from k=2 to k=5. Narrow
    // channels keep the k-independent dense work from drowning the signal.
    let d = synth::two_cliques(250, 0.1, 3);
    let step_ms = |k: usize| {
        let cfg = ModelConfig {
            channels: 16,
            layers: 2,
            path_length: k,
            paths_per_node: 20,
            max_epochs: 1,
            mode: ConvMode::Stochastic,
            ..ModelConfig::default()
        };
        let model = PathGcnModel::new(cfg, d.features.cols(), d.num_classes).unwrap();
        let report = model
            .benchmark(&d.graph, &d.features, &d.labels, &d.split(), 21)
            .unwrap();
        report.train_step_ms
    };
    let (ms_k2, ms_k5) = (step_ms(2), step_ms(5));
    assert!(
        ms_k5 > ms_k2,
        "train step should slow down with k: k=2 {ms_k2:.3}ms, k=5 {ms_k5:.3}ms"
    );
}
