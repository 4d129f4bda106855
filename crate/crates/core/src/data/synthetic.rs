use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::split::stratified_split;
use super::{Dataset, Task, TaskSequence};
use crate::error::{Error, Result};
use crate::Real;

/// Parameters of a sequence of Gaussian-blob classification tasks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianTaskSpec {
    pub n_tasks: usize,
    pub classes_per_task: usize,
    pub dim: usize,
    /// Radius of the sphere the class means are drawn on.
    pub separation: f64,
    /// Training plus validation samples per class; the test set draws the
    /// same number again.
    pub n_per_class: usize,
    pub seed: u64,
}

/// Each class is an isotropic unit-variance Gaussian whose mean is drawn
/// uniformly on a sphere of radius `separation`. Labels are global:
/// task `t`, class `c` has label `t * classes_per_task + c`.
pub fn synthetic_gaussian_tasks(spec: GaussianTaskSpec) -> Result<TaskSequence> {
    if !(spec.separation > 0.0) {
        return Err(Error::Config(format!(
            "separation must be positive, got {}",
            spec.separation
        )));
    }
    let mut rng = crate::seeded_rng(spec.seed);
    let mut tasks = Vec::with_capacity(spec.n_tasks);
    for t in 0..spec.n_tasks {
        let classes: Vec<usize> = (0..spec.classes_per_task)
            .map(|c| t * spec.classes_per_task + c)
            .collect();
        let means: Vec<Vec<Real>> = classes
            .iter()
            .map(|_| {
                let dir: Vec<f64> = (0..spec.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                dir.iter().map(|v| (v / norm * spec.separation) as Real).collect()
            })
            .collect();
        let draw = |rng: &mut crate::Rng| -> Result<Dataset> {
            let n = spec.n_per_class * classes.len();
            let labels: Vec<usize> = (0..n).map(|i| classes[i / spec.n_per_class]).collect();
            let features = Array2::from_shape_fn((n, spec.dim), |(i, j)| {
                let noise: f64 = StandardNormal.sample(rng);
                means[i / spec.n_per_class][j] + noise as Real
            });
            Dataset::new(features, labels)
        };
        let pool = draw(&mut rng)?;
        let test = draw(&mut rng)?;
        let (train, val) = stratified_split(&pool, 0.1, &mut rng);
        tasks.push(Task {
            train,
            val,
            test,
            classes,
        });
    }
    Ok(TaskSequence { tasks })
}
