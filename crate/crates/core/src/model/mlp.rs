use std::sync::Arc;

use rand::Rng;

use crate::linalg::{all_finite, DenseMatrix};
use crate::seed::substream;

use super::{
    Activation, Batch, LayoutEntry, MlpConfig, ModelError, ParamLayout, ParamVector, TaskId,
};

/// Default upper bound on per-example Jacobian rows. The sketched path
/// exists so that full Jacobians are only ever formed at test scale.
pub const DEFAULT_JACOBIAN_CAP: usize = 256;

/// Shared-trunk MLP with per-task linear heads.
#[derive(Debug, Clone)]
pub struct MlpModel {
    config: MlpConfig,
    layout: Arc<ParamLayout>,
    params: ParamVector,
}

/// Per-unit Bernoulli keep/drop masks for the trunk activations of one
/// batch, pre-scaled by `1/(1-rate)` (inverted dropout). Sampling is a pure
/// function of the seed, so training steps stay reproducible.
#[derive(Debug, Clone)]
pub struct DropoutMask {
    rate: f64,
    layers: Vec<DenseMatrix>, // one m x width scale matrix per trunk layer
}

impl DropoutMask {
    pub fn sample(config: &MlpConfig, batch_rows: usize, seed: u64) -> Self {
        let rate = config.dropout;
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0,1)");
        let mut rng = substream(seed, "dropout", 0);
        let keep_scale = 1.0 / (1.0 - rate);
        let layers = config
            .hidden
            .iter()
            .map(|&width| {
                let data: Vec<f64> = (0..batch_rows * width)
                    .map(|_| {
                        if rng.random::<f64>() < rate {
                            0.0
                        } else {
                            keep_scale
                        }
                    })
                    .collect();
                DenseMatrix::new(batch_rows, width, data).expect("mask shape")
            })
            .collect();
        DropoutMask { rate, layers }
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }
}

struct ForwardTrace {
    /// Post-activation (and post-dropout) outputs; index 0 is the input.
    activations: Vec<DenseMatrix>,
    /// Pre-activation values per trunk layer.
    preacts: Vec<DenseMatrix>,
    logits: DenseMatrix,
}

impl MlpModel {
    /// Builds a model with seeded uniform Glorot initialization:
    /// each layer draws from `U(-a, a)` with `a = sqrt(6/(fan_in+fan_out))`.
    pub fn new(config: MlpConfig, seed: u64) -> Self {
        let layout = Arc::new(Self::build_layout(&config));
        let mut params = ParamVector::zeros(layout.clone());
        let mut rng = substream(seed, "init", 0);
        for entry in &layout.entries {
            if entry.name.ends_with(".bias") {
                continue; // biases start at zero
            }
            let fan_out = entry.rows as f64;
            let fan_in = entry.cols as f64;
            let a = (6.0 / (fan_in + fan_out)).sqrt();
            for v in &mut params.values_mut()[entry.range()] {
                *v = rng.random::<f64>() * 2.0 * a - a;
            }
        }
        MlpModel {
            config,
            layout,
            params,
        }
    }

    pub fn from_parts(config: MlpConfig, params: ParamVector) -> Result<Self, ModelError> {
        let layout = Arc::new(Self::build_layout(&config));
        if params.len() != layout.total {
            return Err(ModelError::DimensionMismatch {
                expected: layout.total,
                got: params.len(),
            });
        }
        let params = ParamVector::new(params.into_values(), layout.clone())?;
        Ok(MlpModel {
            config,
            layout,
            params,
        })
    }

    fn build_layout(config: &MlpConfig) -> ParamLayout {
        let mut entries = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, rows: usize, cols: usize, offset: &mut usize| {
            entries.push(LayoutEntry {
                name,
                rows,
                cols,
                offset: *offset,
            });
            *offset += rows * cols;
        };
        let mut fan_in = config.input_dim;
        for (i, &width) in config.hidden.iter().enumerate() {
            push(format!("trunk.{i}.weight"), width, fan_in, &mut offset);
            push(format!("trunk.{i}.bias"), width, 1, &mut offset);
            fan_in = width;
        }
        push("head.primary.weight".into(), config.primary_classes, fan_in, &mut offset);
        push("head.primary.bias".into(), config.primary_classes, 1, &mut offset);
        push("head.aux.weight".into(), config.aux_classes, fan_in, &mut offset);
        push("head.aux.bias".into(), config.aux_classes, 1, &mut offset);
        ParamLayout::from_entries(entries)
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn layout(&self) -> &Arc<ParamLayout> {
        &self.layout
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.layout.total
    }

    pub fn classes(&self, task: TaskId) -> usize {
        match task {
            TaskId::Primary => self.config.primary_classes,
            TaskId::Auxiliary => self.config.aux_classes,
        }
    }

    fn head_names(task: TaskId) -> (&'static str, &'static str) {
        match task {
            TaskId::Primary => ("head.primary.weight", "head.primary.bias"),
            TaskId::Auxiliary => ("head.aux.weight", "head.aux.bias"),
        }
    }

    fn span(&self, name: &str) -> &[f64] {
        self.params.span(name).expect("layout entry")
    }

    /// `x * W^T + b` for a weight entry of shape (out, in).
    fn affine(&self, x: &DenseMatrix, weight: &str, bias: &str) -> DenseMatrix {
        let w_entry = self.layout.entry(weight).expect("weight entry");
        let w = self.span(weight);
        let b = self.span(bias);
        let (out_dim, in_dim) = (w_entry.rows, w_entry.cols);
        debug_assert_eq!(x.cols(), in_dim);
        let mut z = DenseMatrix::zeros(x.rows(), out_dim);
        for i in 0..x.rows() {
            let xi = x.row(i);
            let zi = z.row_mut(i);
            for u in 0..out_dim {
                zi[u] = crate::linalg::dot(&w[u * in_dim..(u + 1) * in_dim], xi) + b[u];
            }
        }
        z
    }

    fn activate(&self, z: &DenseMatrix) -> DenseMatrix {
        let mut a = z.clone();
        match self.config.activation {
            Activation::Tanh => {
                for i in 0..a.rows() {
                    for v in a.row_mut(i) {
                        *v = v.tanh();
                    }
                }
            }
            Activation::Relu => {
                for i in 0..a.rows() {
                    for v in a.row_mut(i) {
                        *v = v.max(0.0);
                    }
                }
            }
        }
        a
    }

    fn forward(
        &self,
        inputs: &DenseMatrix,
        task: TaskId,
        dropout: Option<&DropoutMask>,
    ) -> Result<ForwardTrace, ModelError> {
        if inputs.cols() != self.config.input_dim {
            return Err(ModelError::DimensionMismatch {
                expected: self.config.input_dim,
                got: inputs.cols(),
            });
        }
        if let Some(mask) = dropout {
            if mask.layers.len() != self.config.hidden.len()
                || mask.layers.first().is_some_and(|l| l.rows() != inputs.rows())
            {
                return Err(ModelError::DimensionMismatch {
                    expected: self.config.hidden.len(),
                    got: mask.layers.len(),
                });
            }
        }
        let mut activations = vec![inputs.clone()];
        let mut preacts = Vec::with_capacity(self.config.hidden.len());
        for l in 0..self.config.hidden.len() {
            let z = self.affine(
                activations.last().expect("input present"),
                &format!("trunk.{l}.weight"),
                &format!("trunk.{l}.bias"),
            );
            let mut a = self.activate(&z);
            if let Some(mask) = dropout {
                let scales = &mask.layers[l];
                for i in 0..a.rows() {
                    let s = scales.row(i);
                    for (v, &si) in a.row_mut(i).iter_mut().zip(s) {
                        *v *= si;
                    }
                }
            }
            preacts.push(z);
            activations.push(a);
        }
        let (w, b) = Self::head_names(task);
        let logits = self.affine(activations.last().expect("trunk output"), w, b);
        if !logits.is_finite() {
            return Err(ModelError::NonFiniteActivation);
        }
        Ok(ForwardTrace {
            activations,
            preacts,
            logits,
        })
    }

    fn check_labels(&self, batch: &Batch) -> Result<(), ModelError> {
        let classes = self.classes(batch.task);
        for (index, &label) in batch.labels.iter().enumerate() {
            if label >= classes {
                return Err(ModelError::LabelOutOfRange {
                    index,
                    label,
                    classes,
                });
            }
        }
        Ok(())
    }

    /// Row-wise softmax cross-entropy terms and probability rows.
    fn softmax_losses(
        logits: &DenseMatrix,
        labels: &[usize],
    ) -> Result<(Vec<f64>, DenseMatrix), ModelError> {
        let mut probs = DenseMatrix::zeros(logits.rows(), logits.cols());
        let mut losses = Vec::with_capacity(logits.rows());
        for i in 0..logits.rows() {
            let row = logits.row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for &v in row {
                sum += (v - max).exp();
            }
            let log_z = max + sum.ln();
            let p_row = probs.row_mut(i);
            for (j, &v) in row.iter().enumerate() {
                p_row[j] = (v - log_z).exp();
            }
            let loss_i = log_z - row[labels[i]];
            if !loss_i.is_finite() {
                return Err(ModelError::NonFiniteActivation);
            }
            losses.push(loss_i);
        }
        Ok((losses, probs))
    }

    /// Loss and gradient of `sum_i weights[i] * L_i` in one reverse pass.
    ///
    /// This is the engine behind all gradient entry points; with Gaussian
    /// sketch rows as weights it computes rows of `Pi * J` without forming
    /// the Jacobian.
    pub fn weighted_loss_and_gradient(
        &self,
        batch: &Batch,
        weights: &[f64],
        dropout: Option<&DropoutMask>,
    ) -> Result<(f64, ParamVector), ModelError> {
        if weights.len() != batch.len() {
            return Err(ModelError::DimensionMismatch {
                expected: batch.len(),
                got: weights.len(),
            });
        }
        self.check_labels(batch)?;
        let trace = self.forward(&batch.inputs, batch.task, dropout)?;
        let (losses, probs) = Self::softmax_losses(&trace.logits, &batch.labels)?;
        let total: f64 = losses.iter().zip(weights).map(|(l, w)| l * w).sum();

        let m = batch.len();
        let classes = self.classes(batch.task);
        let mut grad = ParamVector::zeros(self.layout.clone());

        // d(total)/d(logits): weights fold in here and flow through the
        // whole reverse pass.
        let mut dlogits = probs;
        for i in 0..m {
            let w = weights[i];
            let row = dlogits.row_mut(i);
            row[batch.labels[i]] -= 1.0;
            for v in row.iter_mut() {
                *v *= w;
            }
        }

        let (head_w_name, head_b_name) = Self::head_names(batch.task);
        let head_entry = self.layout.entry(head_w_name).expect("head entry").clone();
        let bias_entry = self.layout.entry(head_b_name).expect("bias entry").clone();
        let a_last = trace.activations.last().expect("trunk output");
        let hidden_dim = a_last.cols();
        {
            let gw = &mut grad.values_mut()[head_entry.range()];
            for i in 0..m {
                let d = dlogits.row(i);
                let a = a_last.row(i);
                for c in 0..classes {
                    crate::linalg::axpy(d[c], a, &mut gw[c * hidden_dim..(c + 1) * hidden_dim]);
                }
            }
        }
        {
            let gb = &mut grad.values_mut()[bias_entry.range()];
            for i in 0..m {
                crate::linalg::axpy(1.0, dlogits.row(i), gb);
            }
        }

        // d(total)/d(a_last)
        let head_w = self.span(head_w_name).to_vec();
        let mut da = DenseMatrix::zeros(m, hidden_dim);
        for i in 0..m {
            let d = dlogits.row(i);
            let da_row = da.row_mut(i);
            for c in 0..classes {
                crate::linalg::axpy(d[c], &head_w[c * hidden_dim..(c + 1) * hidden_dim], da_row);
            }
        }

        for l in (0..self.config.hidden.len()).rev() {
            let z = &trace.preacts[l];
            let width = z.cols();
            let mut dz = da;
            for i in 0..m {
                let z_row = z.row(i);
                let dz_row = dz.row_mut(i);
                if let Some(mask) = dropout {
                    let s = mask.layers[l].row(i);
                    for (v, &si) in dz_row.iter_mut().zip(s) {
                        *v *= si;
                    }
                }
                match self.config.activation {
                    Activation::Tanh => {
                        for (v, &zi) in dz_row.iter_mut().zip(z_row) {
                            let t = zi.tanh();
                            *v *= 1.0 - t * t;
                        }
                    }
                    Activation::Relu => {
                        for (v, &zi) in dz_row.iter_mut().zip(z_row) {
                            if zi <= 0.0 {
                                *v = 0.0;
                            }
                        }
                    }
                }
            }

            let a_prev = &trace.activations[l];
            let in_dim = a_prev.cols();
            let w_entry = self
                .layout
                .entry(&format!("trunk.{l}.weight"))
                .expect("trunk weight")
                .clone();
            let b_entry = self
                .layout
                .entry(&format!("trunk.{l}.bias"))
                .expect("trunk bias")
                .clone();
            {
                let gw = &mut grad.values_mut()[w_entry.range()];
                for i in 0..m {
                    let d = dz.row(i);
                    let a = a_prev.row(i);
                    for u in 0..width {
                        crate::linalg::axpy(d[u], a, &mut gw[u * in_dim..(u + 1) * in_dim]);
                    }
                }
            }
            {
                let gb = &mut grad.values_mut()[b_entry.range()];
                for i in 0..m {
                    crate::linalg::axpy(1.0, dz.row(i), gb);
                }
            }

            let w = self.span(&format!("trunk.{l}.weight"));
            let mut da_prev = DenseMatrix::zeros(m, in_dim);
            for i in 0..m {
                let d = dz.row(i);
                let da_row = da_prev.row_mut(i);
                for u in 0..width {
                    crate::linalg::axpy(d[u], &w[u * in_dim..(u + 1) * in_dim], da_row);
                }
            }
            da = da_prev;
        }

        if !all_finite(grad.values()) {
            return Err(ModelError::NonFiniteActivation);
        }
        Ok((total, grad))
    }

    /// Mean cross-entropy over the batch.
    pub fn loss(&self, batch: &Batch) -> Result<f64, ModelError> {
        self.check_labels(batch)?;
        let trace = self.forward(&batch.inputs, batch.task, None)?;
        let (losses, _) = Self::softmax_losses(&trace.logits, &batch.labels)?;
        Ok(losses.iter().sum::<f64>() / batch.len() as f64)
    }

    /// Mean loss and classification accuracy in one forward pass.
    pub fn evaluate(&self, batch: &Batch) -> Result<(f64, f64), ModelError> {
        self.check_labels(batch)?;
        let trace = self.forward(&batch.inputs, batch.task, None)?;
        let (losses, _) = Self::softmax_losses(&trace.logits, &batch.labels)?;
        let mut correct = 0usize;
        for i in 0..batch.len() {
            let row = trace.logits.row(i);
            let mut best = 0usize;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            if best == batch.labels[i] {
                correct += 1;
            }
        }
        Ok((
            losses.iter().sum::<f64>() / batch.len() as f64,
            correct as f64 / batch.len() as f64,
        ))
    }

    /// Gradient of the mean batch loss.
    pub fn batch_gradient(&self, batch: &Batch) -> Result<ParamVector, ModelError> {
        let w = vec![1.0 / batch.len() as f64; batch.len()];
        Ok(self.weighted_loss_and_gradient(batch, &w, None)?.1)
    }

    /// Gradient of the mean batch loss with dropout masks applied.
    pub fn batch_gradient_with_dropout(
        &self,
        batch: &Batch,
        dropout: Option<&DropoutMask>,
    ) -> Result<ParamVector, ModelError> {
        let w = vec![1.0 / batch.len() as f64; batch.len()];
        Ok(self.weighted_loss_and_gradient(batch, &w, dropout)?.1)
    }

    /// Gradient of `sum_i weights[i] * L_i`, i.e. `weights^T J` computed
    /// without materializing the Jacobian.
    pub fn weighted_batch_gradient(
        &self,
        batch: &Batch,
        weights: &[f64],
    ) -> Result<ParamVector, ModelError> {
        Ok(self.weighted_loss_and_gradient(batch, weights, None)?.1)
    }

    /// The `m x D` matrix of per-example loss gradients.
    pub fn per_example_jacobian(&self, batch: &Batch) -> Result<DenseMatrix, ModelError> {
        self.per_example_jacobian_with_cap(batch, DEFAULT_JACOBIAN_CAP)
    }

    pub fn per_example_jacobian_with_cap(
        &self,
        batch: &Batch,
        cap: usize,
    ) -> Result<DenseMatrix, ModelError> {
        let m = batch.len();
        if m > cap {
            return Err(ModelError::JacobianTooLarge { m, cap });
        }
        let mut rows = Vec::with_capacity(m);
        for i in 0..m {
            let single = Batch::new(
                batch.inputs.select_rows(&[i]),
                vec![batch.labels[i]],
                batch.task,
            )?;
            let (_, g) = self.weighted_loss_and_gradient(&single, &[1.0], None)?;
            rows.push(g.into_values());
        }
        DenseMatrix::from_rows(&rows).map_err(|_| ModelError::DimensionMismatch {
            expected: self.layout.total,
            got: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm;

    fn tiny_config() -> MlpConfig {
        MlpConfig {
            input_dim: 3,
            hidden: vec![4],
            activation: Activation::Tanh,
            primary_classes: 2,
            aux_classes: 3,
            dropout: 0.0,
        }
    }

    fn random_batch(model: &MlpModel, m: usize, task: TaskId, seed: u64) -> Batch {
        let mut rng = substream(seed, "batch", 0);
        let d = model.config().input_dim;
        let data: Vec<f64> = (0..m * d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let classes = model.classes(task);
        let labels: Vec<usize> = (0..m).map(|_| rng.random_range(0..classes)).collect();
        Batch::new(DenseMatrix::new(m, d, data).unwrap(), labels, task).unwrap()
    }

    #[test]
    fn uniform_logits_loss_is_ln_c() {
        // Zero weights and biases produce identical logits for every class.
        let config = tiny_config();
        let layout = MlpModel::new(config.clone(), 0).layout().clone();
        let model =
            MlpModel::from_parts(config, ParamVector::zeros(layout)).unwrap();
        let batch = random_batch(&model, 5, TaskId::Auxiliary, 1);
        let loss = model.loss(&batch).unwrap();
        assert!((loss - 3.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_logits_drive_loss_down() {
        // Scale the primary head bias toward the true class; loss must fall
        // monotonically toward zero as the margin grows.
        let config = tiny_config();
        let mut model = MlpModel::new(config, 3);
        let batch = random_batch(&model, 4, TaskId::Primary, 2);
        let mut last = f64::INFINITY;
        for scale in [1.0, 4.0, 16.0, 64.0] {
            let entry = model.layout().entry("head.primary.bias").unwrap().clone();
            // All labels 0 in this constructed batch.
            let labels = vec![0; batch.len()];
            let batch = Batch::new(batch.inputs.clone(), labels, TaskId::Primary).unwrap();
            model.params_mut().values_mut()[entry.range()][0] = scale;
            let loss = model.loss(&batch).unwrap();
            assert!(loss < last, "loss {loss} did not fall below {last}");
            last = loss;
        }
        assert!(last < 1e-10);
    }

    #[test]
    fn duplicated_batch_keeps_mean_loss() {
        let model = MlpModel::new(tiny_config(), 5);
        let batch = random_batch(&model, 6, TaskId::Primary, 7);
        let doubled_inputs = DenseMatrix::from_rows(
            &(0..12)
                .map(|i| batch.inputs.row(i % 6).to_vec())
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let mut labels = batch.labels.clone();
        labels.extend_from_slice(&batch.labels);
        let doubled = Batch::new(doubled_inputs, labels, TaskId::Primary).unwrap();
        let a = model.loss(&batch).unwrap();
        let b = model.loss(&doubled).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn batch_gradient_equals_jacobian_row_mean() {
        let model = MlpModel::new(tiny_config(), 11);
        let batch = random_batch(&model, 8, TaskId::Auxiliary, 13);
        let g = model.batch_gradient(&batch).unwrap();
        let j = model.per_example_jacobian(&batch).unwrap();
        let mean = j.row_mean();
        let max_diff = g
            .values()
            .iter()
            .zip(&mean)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_diff <= 1e-10, "max diff {max_diff}");
    }

    #[test]
    fn batch_of_copies_matches_single_example_gradient() {
        let model = MlpModel::new(tiny_config(), 17);
        let single = random_batch(&model, 1, TaskId::Primary, 19);
        let copies = Batch::new(
            DenseMatrix::from_rows(&vec![single.inputs.row(0).to_vec(); 7]).unwrap(),
            vec![single.labels[0]; 7],
            TaskId::Primary,
        )
        .unwrap();
        let g1 = model.batch_gradient(&single).unwrap();
        let g7 = model.batch_gradient(&copies).unwrap();
        let max_diff = g1
            .values()
            .iter()
            .zip(g7.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_diff <= 1e-12, "max diff {max_diff}");
    }

    #[test]
    fn jacobian_rows_permute_with_batch() {
        let model = MlpModel::new(tiny_config(), 23);
        let batch = random_batch(&model, 5, TaskId::Primary, 29);
        let perm = [3usize, 0, 4, 1, 2];
        let permuted = Batch::new(
            batch.inputs.select_rows(&perm),
            perm.iter().map(|&i| batch.labels[i]).collect(),
            TaskId::Primary,
        )
        .unwrap();
        let j = model.per_example_jacobian(&batch).unwrap();
        let jp = model.per_example_jacobian(&permuted).unwrap();
        for (new_row, &old_row) in perm.iter().enumerate() {
            assert_eq!(jp.row(new_row), j.row(old_row));
        }
    }

    #[test]
    fn jacobian_cap_enforced() {
        let model = MlpModel::new(tiny_config(), 31);
        let batch = random_batch(&model, 5, TaskId::Primary, 37);
        let err = model.per_example_jacobian_with_cap(&batch, 4).unwrap_err();
        assert!(matches!(err, ModelError::JacobianTooLarge { m: 5, cap: 4 }));
    }

    #[test]
    fn uniform_weights_recover_batch_gradient() {
        let model = MlpModel::new(tiny_config(), 41);
        let batch = random_batch(&model, 6, TaskId::Auxiliary, 43);
        let w = vec![1.0 / 6.0; 6];
        let a = model.weighted_batch_gradient(&batch, &w).unwrap();
        let b = model.batch_gradient(&batch).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn unit_weight_selects_jacobian_row() {
        let model = MlpModel::new(tiny_config(), 47);
        let batch = random_batch(&model, 4, TaskId::Primary, 53);
        let j = model.per_example_jacobian(&batch).unwrap();
        for i in 0..4 {
            let mut w = vec![0.0; 4];
            w[i] = 1.0;
            let g = model.weighted_batch_gradient(&batch, &w).unwrap();
            let diff: f64 = g
                .values()
                .iter()
                .zip(j.row(i))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(diff <= 1e-12, "row {i} diff {diff}");
        }
    }

    #[test]
    fn weighted_gradient_is_linear_in_weights() {
        let model = MlpModel::new(tiny_config(), 59);
        let batch = random_batch(&model, 5, TaskId::Auxiliary, 61);
        let mut rng = substream(67, "weights", 0);
        let w1: Vec<f64> = (0..5).map(|_| rng.random::<f64>() - 0.5).collect();
        let w2: Vec<f64> = (0..5).map(|_| rng.random::<f64>() - 0.5).collect();
        let (a, b) = (1.7, -0.4);
        let combo: Vec<f64> = w1.iter().zip(&w2).map(|(x, y)| a * x + b * y).collect();
        let g_combo = model.weighted_batch_gradient(&batch, &combo).unwrap();
        let g1 = model.weighted_batch_gradient(&batch, &w1).unwrap();
        let g2 = model.weighted_batch_gradient(&batch, &w2).unwrap();
        let max_diff = g_combo
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| (v - (a * g1.values()[i] + b * g2.values()[i])).abs())
            .fold(0.0f64, f64::max);
        assert!(max_diff <= 1e-10, "max diff {max_diff}");
    }

    #[test]
    fn gradients_are_deterministic() {
        let model = MlpModel::new(tiny_config(), 71);
        let batch = random_batch(&model, 6, TaskId::Primary, 73);
        let a = model.batch_gradient(&batch).unwrap();
        let b = model.batch_gradient(&batch).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn near_minimum_gradient_is_tiny() {
        // Drive a one-example batch to (near) zero loss; the gradient norm
        // must fall with it.
        let mut model = MlpModel::new(tiny_config(), 79);
        let batch = random_batch(&model, 1, TaskId::Primary, 83);
        // Normalized steps: plain GD stalls on the exponential tail of the
        // cross-entropy.
        for _ in 0..3000 {
            let g = model.batch_gradient(&batch).unwrap();
            let n = norm(g.values());
            if n <= 1e-12 {
                break;
            }
            let step = 0.05 / n;
            let params = model.params_mut().values_mut();
            for (p, gi) in params.iter_mut().zip(g.values()) {
                *p -= step * gi;
            }
        }
        let g = model.batch_gradient(&batch).unwrap();
        assert!(norm(g.values()) <= 1e-8, "norm {}", norm(g.values()));
    }

    #[test]
    fn dropout_zero_matches_no_dropout() {
        let model = MlpModel::new(tiny_config(), 89);
        let batch = random_batch(&model, 4, TaskId::Primary, 97);
        let mask = DropoutMask::sample(model.config(), 4, 5);
        let a = model.batch_gradient_with_dropout(&batch, Some(&mask)).unwrap();
        let b = model.batch_gradient(&batch).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn dropout_masks_are_seed_deterministic() {
        let mut config = tiny_config();
        config.dropout = 0.4;
        let model = MlpModel::new(config, 101);
        let batch = random_batch(&model, 4, TaskId::Primary, 103);
        let m1 = DropoutMask::sample(model.config(), 4, 9);
        let m2 = DropoutMask::sample(model.config(), 4, 9);
        let a = model.batch_gradient_with_dropout(&batch, Some(&m1)).unwrap();
        let b = model.batch_gradient_with_dropout(&batch, Some(&m2)).unwrap();
        assert_eq!(a.values(), b.values());
        let m3 = DropoutMask::sample(model.config(), 4, 10);
        let c = model.batch_gradient_with_dropout(&batch, Some(&m3)).unwrap();
        assert_ne!(a.values(), c.values());
    }
}
