use carbonfl_core::fedsim::{exact_gradient, generate_task, probe_gradient, ModelState, SyntheticTask};
use carbonfl_core::rng::{stream, Purpose};
use rand::Rng;

/// Subsampled gradients average to the full-data gradient: every component
/// of the Monte Carlo mean lies within three standard errors.
#[test]
fn probe_is_unbiased() {
    let data = generate_task(&SyntheticTask {
        n_centers: 1,
        n_classes: 4,
        dim: 6,
        samples_per_center: 200,
        ..SyntheticTask::default()
    })
    .unwrap();
    let ds = &data.centers[0];
    let mut model = ModelState::zeros(4, 6);
    let mut rng = stream(3, Purpose::Instance, &[]);
    model
        .weights
        .iter_mut()
        .for_each(|w| *w = rng.random_range(-0.3..0.3));
    let exact = exact_gradient(&model, ds);
    let runs = 200;
    let samples: Vec<Vec<f64>> = (0..runs).map(|s| probe_gradient(&model, ds, 0.05, s)).collect();
    let mut zmax = 0.0f64;
    for k in 0..exact.len() {
        let mean = samples.iter().map(|g| g[k]).sum::<f64>() / runs as f64;
        let var = samples.iter().map(|g| (g[k] - mean).powi(2)).sum::<f64>() / (runs as f64 - 1.0);
        let z = (mean - exact[k]) / (var / runs as f64).sqrt();
        zmax = zmax.max(z.abs());
    }
    assert!(zmax <= 3.0, "max z {zmax}");
}

#[test]
fn probe_depends_only_on_seed() {
    let data = generate_task(&SyntheticTask {
        n_centers: 1,
        ..SyntheticTask::default()
    })
    .unwrap();
    let model = ModelState::zeros(data.n_classes, data.dim());
    let ds = &data.centers[0];
    assert_eq!(
        probe_gradient(&model, ds, 0.1, 5),
        probe_gradient(&model, ds, 0.1, 5)
    );
    assert_ne!(
        probe_gradient(&model, ds, 0.1, 5),
        probe_gradient(&model, ds, 0.1, 6)
    );
}
