//! Feature vectors and the frozen layout contract.
//!
//! Each (layer kind, task, mode) combination has its own fixed-width
//! layout; serialized models depend on the ordering below, so it is a
//! compatibility contract and must never change:
//!
//! - conv2d: `batch_size, matrix_size, kernel_size, channels_in,
//!   channels_out, strides, padding, activation, bias`
//! - pooling: `batch_size, matrix_size, channels_in, strides, padding,
//!   activation, pool_size`
//! - dense: `batch_size, dim_input, dim_output, activation, bias`
//!
//! Training layouts append the one-hot optimizer block
//! (`sgd, adagrad, rmsprop, adam`); unseen-device layouts append the five
//! hardware features (`basic_clock_mhz, cuda_cores, memory_clock_mhz,
//! memory_bandwidth_gbs, peak_tflops`) after any optimizer block.
//!
//! Padding, activation, and bias encode as 0/1 reals. Each kind has its
//! own layout; features irrelevant to a kind never appear, so there is no
//! zero-padding across kinds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netspec::{DeviceSpec, LayerKind, LayerOp, LayerSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Inference,
    Training,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Inference => "inference",
            Task::Training => "training",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inference" => Ok(Task::Inference),
            "training" => Ok(Task::Training),
            other => Err(Error::Usage(format!(
                "unknown task `{other}` (expected inference or training)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    PerDevice,
    Unseen,
}

/// The gradient-descent algorithm of the workload being predicted. These
/// are features of the benchmarked job, not trainer options.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    AdaGrad,
    RmsProp,
    Adam,
}

impl Optimizer {
    pub const ALL: [Optimizer; 4] = [
        Optimizer::Sgd,
        Optimizer::AdaGrad,
        Optimizer::RmsProp,
        Optimizer::Adam,
    ];
}

impl std::str::FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Optimizer::Sgd),
            "adagrad" => Ok(Optimizer::AdaGrad),
            "rmsprop" => Ok(Optimizer::RmsProp),
            "adam" => Ok(Optimizer::Adam),
            other => Err(Error::Usage(format!(
                "unknown optimizer `{other}` (expected sgd, adagrad, rmsprop, or adam)"
            ))),
        }
    }
}

/// One-hot optimizer block as it appears in training feature vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptimizerFlags {
    pub sgd: bool,
    pub adagrad: bool,
    pub rmsprop: bool,
    pub adam: bool,
}

impl OptimizerFlags {
    pub fn validate(&self) -> Result<()> {
        let set = [self.sgd, self.adagrad, self.rmsprop, self.adam]
            .iter()
            .filter(|&&b| b)
            .count();
        if set != 1 {
            return Err(Error::Validation(format!(
                "optimizer flags must be one-hot, {set} flags set"
            )));
        }
        Ok(())
    }

    pub fn as_features(&self) -> [f64; 4] {
        [
            f64::from(u8::from(self.sgd)),
            f64::from(u8::from(self.adagrad)),
            f64::from(u8::from(self.rmsprop)),
            f64::from(u8::from(self.adam)),
        ]
    }
}

impl From<Optimizer> for OptimizerFlags {
    fn from(opt: Optimizer) -> Self {
        OptimizerFlags {
            sgd: opt == Optimizer::Sgd,
            adagrad: opt == Optimizer::AdaGrad,
            rmsprop: opt == Optimizer::RmsProp,
            adam: opt == Optimizer::Adam,
        }
    }
}

/// What a sample or prediction is for: inference vs. training jobs, and
/// per-device vs. unseen-device feature layouts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub task: Task,
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerFlags>,
}

impl Scenario {
    pub fn inference(mode: Mode) -> Scenario {
        Scenario {
            task: Task::Inference,
            mode,
            optimizer: None,
        }
    }

    pub fn training(mode: Mode, optimizer: Optimizer) -> Scenario {
        Scenario {
            task: Task::Training,
            mode,
            optimizer: Some(optimizer.into()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.task, &self.optimizer) {
            (Task::Training, Some(flags)) => flags.validate(),
            (Task::Training, None) => Err(Error::Validation(
                "training scenario requires an optimizer".into(),
            )),
            (Task::Inference, Some(_)) => Err(Error::Validation(
                "inference scenario must not carry an optimizer".into(),
            )),
            (Task::Inference, None) => Ok(()),
        }
    }

    pub fn layout(&self, kind: LayerKind) -> LayoutId {
        LayoutId {
            kind,
            task: self.task,
            mode: self.mode,
        }
    }
}

/// Identifies one frozen feature layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LayoutId {
    pub kind: LayerKind,
    pub task: Task,
    pub mode: Mode,
}

impl LayoutId {
    pub const ALL: [LayoutId; 12] = {
        let mut all = [LayoutId {
            kind: LayerKind::Conv2d,
            task: Task::Inference,
            mode: Mode::PerDevice,
        }; 12];
        let kinds = [LayerKind::Conv2d, LayerKind::Pooling, LayerKind::Dense];
        let tasks = [Task::Inference, Task::Training];
        let modes = [Mode::PerDevice, Mode::Unseen];
        let mut i = 0;
        while i < 12 {
            all[i] = LayoutId {
                kind: kinds[i / 4],
                task: tasks[(i / 2) % 2],
                mode: modes[i % 2],
            };
            i += 1;
        }
        all
    };

    pub fn width(&self) -> usize {
        let base = match self.kind {
            LayerKind::Conv2d => 9,
            LayerKind::Pooling => 7,
            LayerKind::Dense => 5,
        };
        let optim = match self.task {
            Task::Training => 4,
            Task::Inference => 0,
        };
        let hardware = match self.mode {
            Mode::Unseen => 5,
            Mode::PerDevice => 0,
        };
        base + optim + hardware
    }

    /// Promotes a per-device layout to the matching unseen layout.
    pub fn as_unseen(&self) -> LayoutId {
        LayoutId {
            mode: Mode::Unseen,
            ..*self
        }
    }
}

impl std::fmt::Display for LayoutId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mode = match self.mode {
            Mode::PerDevice => "per-device",
            Mode::Unseen => "unseen",
        };
        write!(f, "{}/{}/{}", self.kind, self.task.as_str(), mode)
    }
}

/// Ordered feature values for one layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub layout: LayoutId,
    pub values: Vec<f64>,
}

/// Column names for a layout, in vector order.
pub fn feature_names(layout: LayoutId) -> Vec<&'static str> {
    let mut names: Vec<&'static str> = match layout.kind {
        LayerKind::Conv2d => vec![
            "batch_size",
            "matrix_size",
            "kernel_size",
            "channels_in",
            "channels_out",
            "strides",
            "padding",
            "activation",
            "bias",
        ],
        LayerKind::Pooling => vec![
            "batch_size",
            "matrix_size",
            "channels_in",
            "strides",
            "padding",
            "activation",
            "pool_size",
        ],
        LayerKind::Dense => vec![
            "batch_size",
            "dim_input",
            "dim_output",
            "activation",
            "bias",
        ],
    };
    if layout.task == Task::Training {
        names.extend(["sgd", "adagrad", "rmsprop", "adam"]);
    }
    if layout.mode == Mode::Unseen {
        names.extend([
            "basic_clock_mhz",
            "cuda_cores",
            "memory_clock_mhz",
            "memory_bandwidth_gbs",
            "peak_tflops",
        ]);
    }
    names
}

/// Encodes a layer (plus scenario and, in unseen mode, device) as a
/// feature vector in the frozen layout order.
pub fn featurize(
    layer: &LayerSpec,
    scenario: &Scenario,
    device: Option<&DeviceSpec>,
) -> Result<FeatureVector> {
    scenario.validate()?;
    match (scenario.mode, device) {
        (Mode::Unseen, None) => {
            return Err(Error::Validation(
                "unseen mode requires a device spec".into(),
            ))
        }
        (Mode::PerDevice, Some(_)) => {
            return Err(Error::Validation(
                "per-device mode must not take a device spec; its models are device-bound".into(),
            ))
        }
        _ => {}
    }

    let layout = scenario.layout(layer.kind());
    let mut values = Vec::with_capacity(layout.width());
    values.push(f64::from(layer.batch_size));
    match &layer.op {
        LayerOp::Conv2d(c) => {
            values.extend([
                f64::from(c.matrix_size),
                f64::from(c.kernel_size),
                f64::from(c.channels_in),
                f64::from(c.channels_out),
                f64::from(c.strides),
                c.padding.as_feature(),
                c.activation.as_feature(),
                f64::from(u8::from(c.use_bias)),
            ]);
        }
        LayerOp::Pooling(p) => {
            values.extend([
                f64::from(p.matrix_size),
                f64::from(p.channels_in),
                f64::from(p.strides),
                p.padding.as_feature(),
                p.activation.as_feature(),
                f64::from(p.pool_size),
            ]);
        }
        LayerOp::Dense(d) => {
            values.extend([
                f64::from(d.dim_input),
                f64::from(d.dim_output),
                d.activation.as_feature(),
                f64::from(u8::from(d.use_bias)),
            ]);
        }
    }
    if let Some(flags) = &scenario.optimizer {
        values.extend(flags.as_features());
    }
    if scenario.mode == Mode::Unseen {
        let device = device.expect("checked above");
        values.extend(device.feature_values());
    }
    debug_assert_eq!(values.len(), layout.width());
    Ok(FeatureVector { layout, values })
}

/// Appends the hardware block of `device` to a per-device vector,
/// producing the matching unseen-layout vector.
pub fn promote_to_unseen(fv: &FeatureVector, device: &DeviceSpec) -> Result<FeatureVector> {
    if fv.layout.mode != Mode::PerDevice {
        return Err(Error::Validation(format!(
            "cannot promote layout {} to unseen",
            fv.layout
        )));
    }
    let mut values = fv.values.clone();
    values.extend(device.feature_values());
    Ok(FeatureVector {
        layout: fv.layout.as_unseen(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netspec::{
        builtin_devices, find_device, Activation, ConvParams, DenseParams, Padding, PoolParams,
    };

    fn conv_layer() -> LayerSpec {
        LayerSpec {
            batch_size: 1,
            op: LayerOp::Conv2d(ConvParams {
                matrix_size: 32,
                kernel_size: 5,
                channels_in: 1,
                channels_out: 6,
                strides: 1,
                padding: Padding::Valid,
                activation: Activation::Relu,
                use_bias: true,
            }),
        }
    }

    fn dense_layer() -> LayerSpec {
        LayerSpec {
            batch_size: 1,
            op: LayerOp::Dense(DenseParams {
                dim_input: 120,
                dim_output: 84,
                activation: Activation::Relu,
                use_bias: true,
            }),
        }
    }

    #[test]
    fn conv_inference_layout() {
        let fv = featurize(&conv_layer(), &Scenario::inference(Mode::PerDevice), None).unwrap();
        assert_eq!(
            fv.values,
            vec![1.0, 32.0, 5.0, 1.0, 6.0, 1.0, 0.0, 1.0, 1.0]
        );
    }

    #[test]
    fn dense_inference_layout() {
        let fv = featurize(&dense_layer(), &Scenario::inference(Mode::PerDevice), None).unwrap();
        assert_eq!(fv.values, vec![1.0, 120.0, 84.0, 1.0, 1.0]);
    }

    #[test]
    fn dense_unseen_appends_p5000_features() {
        let devices = builtin_devices();
        let p5000 = find_device(&devices, "P5000").unwrap();
        let fv = featurize(
            &dense_layer(),
            &Scenario::inference(Mode::Unseen),
            Some(p5000),
        )
        .unwrap();
        assert_eq!(
            fv.values,
            vec![1.0, 120.0, 84.0, 1.0, 1.0, 1607.0, 2560.0, 1127.0, 288.5, 8.873]
        );
    }

    #[test]
    fn names_match_widths_for_all_layouts() {
        for layout in LayoutId::ALL {
            let names = feature_names(layout);
            assert_eq!(names.len(), layout.width(), "{layout}");
        }
        // Spot-check the documented widths.
        let w = |kind, task, mode| LayoutId { kind, task, mode }.width();
        assert_eq!(w(LayerKind::Conv2d, Task::Inference, Mode::PerDevice), 9);
        assert_eq!(w(LayerKind::Pooling, Task::Inference, Mode::PerDevice), 7);
        assert_eq!(w(LayerKind::Dense, Task::Inference, Mode::PerDevice), 5);
        assert_eq!(w(LayerKind::Conv2d, Task::Training, Mode::Unseen), 18);
    }

    #[test]
    fn dense_training_names() {
        let names = feature_names(LayoutId {
            kind: LayerKind::Dense,
            task: Task::Training,
            mode: Mode::PerDevice,
        });
        assert_eq!(
            names,
            vec![
                "batch_size",
                "dim_input",
                "dim_output",
                "activation",
                "bias",
                "sgd",
                "adagrad",
                "rmsprop",
                "adam"
            ]
        );
    }

    #[test]
    fn pooling_unseen_names() {
        let names = feature_names(LayoutId {
            kind: LayerKind::Pooling,
            task: Task::Inference,
            mode: Mode::Unseen,
        });
        assert_eq!(names.len(), 12);
        assert_eq!(&names[7..], &[
            "basic_clock_mhz",
            "cuda_cores",
            "memory_clock_mhz",
            "memory_bandwidth_gbs",
            "peak_tflops"
        ]);
    }

    #[test]
    fn featurize_and_names_agree_on_length() {
        let devices = builtin_devices();
        let device = &devices[0];
        let layers = [
            conv_layer(),
            dense_layer(),
            LayerSpec {
                batch_size: 4,
                op: LayerOp::Pooling(PoolParams {
                    matrix_size: 28,
                    channels_in: 6,
                    pool_size: 2,
                    strides: 2,
                    padding: Padding::Valid,
                    activation: Activation::Relu,
                }),
            },
        ];
        for layer in &layers {
            for task in [Task::Inference, Task::Training] {
                for mode in [Mode::PerDevice, Mode::Unseen] {
                    let scenario = match task {
                        Task::Inference => Scenario::inference(mode),
                        Task::Training => Scenario::training(mode, Optimizer::Adam),
                    };
                    let dev = (mode == Mode::Unseen).then_some(device);
                    let fv = featurize(layer, &scenario, dev).unwrap();
                    assert_eq!(fv.values.len(), feature_names(fv.layout).len());
                }
            }
        }
    }

    #[test]
    fn optimizer_swap_changes_exactly_two_coordinates() {
        let layer = dense_layer();
        for a in Optimizer::ALL {
            for b in Optimizer::ALL {
                if a == b {
                    continue;
                }
                let fa = featurize(
                    &layer,
                    &Scenario::training(Mode::PerDevice, a),
                    None,
                )
                .unwrap();
                let fb = featurize(
                    &layer,
                    &Scenario::training(Mode::PerDevice, b),
                    None,
                )
                .unwrap();
                let differing = fa
                    .values
                    .iter()
                    .zip(&fb.values)
                    .filter(|(x, y)| x != y)
                    .count();
                assert_eq!(differing, 2, "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn distinct_layers_produce_distinct_vectors() {
        use rand::Rng;
        let mut rng = crate::seed::rng(7);
        let scenario = Scenario::inference(Mode::PerDevice);
        for _ in 0..200 {
            let a = random_conv(&mut rng);
            let b = random_conv(&mut rng);
            let fa = featurize(&a, &scenario, None).unwrap();
            let fb = featurize(&b, &scenario, None).unwrap();
            assert_eq!(a == b, fa.values == fb.values);
        }

        fn random_conv(rng: &mut impl Rng) -> LayerSpec {
            LayerSpec {
                batch_size: rng.gen_range(1..=4),
                op: LayerOp::Conv2d(ConvParams {
                    matrix_size: rng.gen_range(8..=10),
                    kernel_size: rng.gen_range(1..=3),
                    channels_in: rng.gen_range(1..=2),
                    channels_out: rng.gen_range(1..=2),
                    strides: rng.gen_range(1..=2),
                    padding: if rng.gen_bool(0.5) {
                        Padding::Valid
                    } else {
                        Padding::Same
                    },
                    activation: Activation::Relu,
                    use_bias: rng.gen_bool(0.5),
                }),
            }
        }
    }

    #[test]
    fn missing_device_in_unseen_mode_errors() {
        let err = featurize(&dense_layer(), &Scenario::inference(Mode::Unseen), None).unwrap_err();
        assert!(err.to_string().contains("device"));
    }

    #[test]
    fn missing_optimizer_in_training_errors() {
        let scenario = Scenario {
            task: Task::Training,
            mode: Mode::PerDevice,
            optimizer: None,
        };
        let err = featurize(&dense_layer(), &scenario, None).unwrap_err();
        assert!(err.to_string().contains("optimizer"));
    }
}
