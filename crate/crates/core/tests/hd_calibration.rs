use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use ridgeshrink::hd::{hd_test_statistic, HdOptions, PartitionedData, TraceEstimator};

fn null_draw(seed: u64) -> PartitionedData {
    let (n, pa, q) = (100, 5, 200);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xa = DMatrix::from_fn(n, pa, |_, _| StandardNormal.sample(&mut rng));
    let xb = DMatrix::from_fn(n, q, |_, _| StandardNormal.sample(&mut rng));
    let e = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    let y = &xa * DVector::from_element(pa, 1.0) + e;
    PartitionedData::new(xa, xb, y).unwrap()
}

fn size(opts: HdOptions, reps: u64) -> f64 {
    let rej = (0..reps)
        .filter(|&r| hd_test_statistic(&null_draw(5000 + r), 0.05, opts).unwrap().rejects())
        .count();
    rej as f64 / reps as f64
}

#[test]
fn null_size_is_calibrated() {
    let s = size(HdOptions::default(), 500);
    println!("size (df-corrected trace) = {s}");
    assert!((0.02..=0.10).contains(&s), "empirical size {s}");
}

#[test]
fn plug_in_trace_is_undersized_at_this_aspect_ratio() {
    let s = size(HdOptions { trace: TraceEstimator::PlugIn, ..Default::default() }, 300);
    println!("size (plug-in trace) = {s}");
    assert!(s < 0.02, "plug-in size {s}");
}
