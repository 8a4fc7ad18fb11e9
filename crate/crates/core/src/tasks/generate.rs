use rand_distr::{Distribution, StandardNormal};

use crate::linalg::DenseMatrix;
use crate::seed::substream;

use super::{ConflictSpec, Dataset, Provenance, SplitIndices, TaskData, TaskError, TaskPair};

/// Class-mean magnitude on signal-carrying coordinates.
const SIGNAL: f64 = 1.0;

const PRIMARY_SPLIT: [f64; 3] = [0.5, 0.2, 0.3];
const AUX_SPLIT: [f64; 3] = [0.8, 0.1, 0.1];

/// Generates a binary primary/auxiliary classification pair over a shared
/// feature space. On the helpful block both tasks place class means along
/// the same direction; on the conflicting block the auxiliary task's means
/// point the opposite way, so auxiliary gradients on those trunk weights
/// oppose the primary ones. The remainder of the feature block is pure
/// noise. Deterministic per seed; labels balanced within one example.
pub fn generate_conflict_pair(spec: &ConflictSpec, seed: u64) -> Result<TaskPair, TaskError> {
    spec.validate()?;
    let d = spec.shared_feature_dim;
    let n_helpful = (spec.helpful_fraction * d as f64).round() as usize;
    let n_conflict = ((spec.conflicting_fraction * d as f64).round() as usize).min(d - n_helpful);

    let make = |n: usize, conflict_sign: f64, stream: &str, split: [f64; 3], split_stream: u64| {
        let mut rng = substream(seed, stream, 0);
        let mut data = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let label = i % 2;
            let s = if label == 0 { 1.0 } else { -1.0 };
            labels.push(label);
            for j in 0..d {
                let noise: f64 = StandardNormal.sample(&mut rng);
                let mean = if j < n_helpful {
                    s * SIGNAL
                } else if j < n_helpful + n_conflict {
                    conflict_sign * s * SIGNAL
                } else {
                    0.0
                };
                data.push(mean + spec.noise_scale * noise);
            }
        }
        let features = DenseMatrix::new(n, d, data).expect("generator shape");
        let dataset = Dataset::new(features, labels, 2)?;
        let split = SplitIndices::random(n, split, crate::seed::derive_seed(seed, "task-split", split_stream))?;
        Ok::<TaskData, TaskError>(TaskData { dataset, split })
    };

    let primary = make(spec.n_primary, 1.0, "primary-data", PRIMARY_SPLIT, 0)?;
    let auxiliary = make(spec.n_aux, -1.0, "aux-data", AUX_SPLIT, 1)?;

    Ok(TaskPair {
        primary,
        auxiliary,
        provenance: Provenance::Generator {
            name: "conflict-pair".into(),
            seed,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> ConflictSpec {
        ConflictSpec {
            shared_feature_dim: 10,
            helpful_fraction: 0.4,
            conflicting_fraction: 0.4,
            noise_scale: 0.5,
            n_primary: 40,
            n_aux: 60,
        }
    }

    #[test]
    fn same_seed_same_datasets() {
        let a = generate_conflict_pair(&spec(), 11).unwrap();
        let b = generate_conflict_pair(&spec(), 11).unwrap();
        assert_eq!(a.primary.dataset, b.primary.dataset);
        assert_eq!(a.auxiliary.dataset, b.auxiliary.dataset);
        assert_eq!(a.primary.split, b.primary.split);
        let c = generate_conflict_pair(&spec(), 12).unwrap();
        assert_ne!(a.primary.dataset, c.primary.dataset);
    }

    #[test]
    fn labels_balanced_within_one() {
        let pair = generate_conflict_pair(&spec(), 3).unwrap();
        for data in [&pair.primary.dataset, &pair.auxiliary.dataset] {
            let ones = data.labels.iter().filter(|&&l| l == 1).count();
            let zeros = data.len() - ones;
            assert!(ones.abs_diff(zeros) <= 1);
        }
    }

    #[test]
    fn helpful_block_aligned_conflict_block_opposed() {
        // Class-0 mean of each task, estimated from the data: the helpful
        // block should agree in sign between tasks, the conflict block
        // should oppose.
        let mut s = spec();
        s.noise_scale = 0.1;
        s.n_primary = 400;
        s.n_aux = 400;
        let pair = generate_conflict_pair(&s, 5).unwrap();
        let class0_mean = |ds: &Dataset| -> Vec<f64> {
            let rows: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == 0).collect();
            ds.features.select_rows(&rows).row_mean()
        };
        let pm = class0_mean(&pair.primary.dataset);
        let am = class0_mean(&pair.auxiliary.dataset);
        for j in 0..4 {
            assert!(pm[j] > 0.5 && am[j] > 0.5, "helpful coord {j}: {} {}", pm[j], am[j]);
        }
        for j in 4..8 {
            assert!(pm[j] > 0.5 && am[j] < -0.5, "conflict coord {j}: {} {}", pm[j], am[j]);
        }
        for j in 8..10 {
            assert!(pm[j].abs() < 0.2 && am[j].abs() < 0.2, "noise coord {j}");
        }
    }

    #[test]
    fn invalid_fractions_rejected() {
        let mut s = spec();
        s.helpful_fraction = 0.8;
        s.conflicting_fraction = 0.5;
        assert!(matches!(
            generate_conflict_pair(&s, 0).unwrap_err(),
            TaskError::SpecInvalid(_)
        ));
    }
}
