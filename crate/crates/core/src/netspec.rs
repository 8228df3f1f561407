//! Networks, layers, devices, and their JSON file formats.
//!
//! A [`NetworkSpec`] is an ordered list of layers plus a batch size; it is
//! the unit of whole-network prediction. A [`LayerSpec`] is the unit of
//! featurization and microbenchmarking. Every numeric field is validated
//! against the documented feature ranges (see [`ranges`]); device features
//! only warn when outside their ranges, since extrapolating to new
//! hardware is an intended use.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Current version of the network / device JSON formats.
pub const FORMAT_VERSION: u32 = 1;

/// Validation ranges for layer and device features.
///
/// Layer ranges are hard limits: values outside them are rejected. Device
/// ranges delimit the region covered by the hardware features during
/// training; values outside them produce warnings, not errors.
pub mod ranges {
    pub const BATCH: (u32, u32) = (1, 64);
    pub const MATRIX: (u32, u32) = (1, 512);
    pub const KERNEL: (u32, u32) = (1, 7);
    pub const CHANNELS: (u32, u32) = (1, 9999);
    pub const STRIDES: (u32, u32) = (1, 4);
    pub const DIMS: (u32, u32) = (1, 4096);
    pub const POOL: (u32, u32) = (1, 7);

    pub const DEV_CLOCK_MHZ: (f64, f64) = (1076.0, 1607.0);
    pub const DEV_CORES: (f64, f64) = (640.0, 3584.0);
    pub const DEV_MEM_CLOCK_MHZ: (f64, f64) = (1127.0, 1901.0);
    pub const DEV_BANDWIDTH_GBS: (f64, f64) = (80.19, 484.4);
    pub const DEV_TFLOPS: (f64, f64) = (1.894, 11.34);
}

fn check_range(field: &str, value: u32, (lo, hi): (u32, u32)) -> Result<()> {
    if value < lo || value > hi {
        return Err(Error::Validation(format!(
            "field `{field}` = {value} outside range {lo}-{hi}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    Valid,
    Same,
}

impl Padding {
    /// Numeric encoding used in feature vectors: 0 = valid, 1 = same.
    pub fn as_feature(self) -> f64 {
        match self {
            Padding::Valid => 0.0,
            Padding::Same => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    None,
    Relu,
}

impl Activation {
    /// Numeric encoding used in feature vectors: 0 = none, 1 = relu.
    pub fn as_feature(self) -> f64 {
        match self {
            Activation::None => 0.0,
            Activation::Relu => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv2d,
    Pooling,
    Dense,
}

impl LayerKind {
    pub const ALL: [LayerKind; 3] = [LayerKind::Conv2d, LayerKind::Pooling, LayerKind::Dense];

    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Conv2d => "conv2d",
            LayerKind::Pooling => "pooling",
            LayerKind::Dense => "dense",
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for LayerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conv2d" => Ok(LayerKind::Conv2d),
            "pooling" => Ok(LayerKind::Pooling),
            "dense" => Ok(LayerKind::Dense),
            other => Err(Error::Usage(format!(
                "unknown layer kind `{other}` (expected conv2d, pooling, or dense)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvParams {
    pub matrix_size: u32,
    pub kernel_size: u32,
    pub channels_in: u32,
    pub channels_out: u32,
    pub strides: u32,
    pub padding: Padding,
    pub activation: Activation,
    pub use_bias: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolParams {
    pub matrix_size: u32,
    pub channels_in: u32,
    pub pool_size: u32,
    pub strides: u32,
    pub padding: Padding,
    pub activation: Activation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenseParams {
    pub dim_input: u32,
    pub dim_output: u32,
    pub activation: Activation,
    pub use_bias: bool,
}

/// Kind-specific layer parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerOp {
    Conv2d(ConvParams),
    Pooling(PoolParams),
    Dense(DenseParams),
}

/// One benchmarkable layer: the kind-specific parameters plus the batch
/// size it runs at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub batch_size: u32,
    #[serde(flatten)]
    pub op: LayerOp,
}

impl LayerSpec {
    pub fn kind(&self) -> LayerKind {
        match self.op {
            LayerOp::Conv2d(_) => LayerKind::Conv2d,
            LayerOp::Pooling(_) => LayerKind::Pooling,
            LayerOp::Dense(_) => LayerKind::Dense,
        }
    }

    /// Checks every field against its documented range plus the geometric
    /// constraint that a valid-padding window fits in the input.
    pub fn validate(&self) -> Result<()> {
        check_range("batch_size", self.batch_size, ranges::BATCH)?;
        match &self.op {
            LayerOp::Conv2d(c) => {
                check_range("matrix_size", c.matrix_size, ranges::MATRIX)?;
                check_range("kernel_size", c.kernel_size, ranges::KERNEL)?;
                check_range("channels_in", c.channels_in, ranges::CHANNELS)?;
                check_range("channels_out", c.channels_out, ranges::CHANNELS)?;
                check_range("strides", c.strides, ranges::STRIDES)?;
                if c.padding == Padding::Valid && c.kernel_size > c.matrix_size {
                    return Err(Error::Validation(format!(
                        "kernel_size {} exceeds matrix_size {} with valid padding",
                        c.kernel_size, c.matrix_size
                    )));
                }
            }
            LayerOp::Pooling(p) => {
                check_range("matrix_size", p.matrix_size, ranges::MATRIX)?;
                check_range("channels_in", p.channels_in, ranges::CHANNELS)?;
                check_range("pool_size", p.pool_size, ranges::POOL)?;
                check_range("strides", p.strides, ranges::STRIDES)?;
                if p.padding == Padding::Valid && p.pool_size > p.matrix_size {
                    return Err(Error::Validation(format!(
                        "pool_size {} exceeds matrix_size {} with valid padding",
                        p.pool_size, p.matrix_size
                    )));
                }
            }
            LayerOp::Dense(d) => {
                check_range("dim_input", d.dim_input, ranges::DIMS)?;
                check_range("dim_output", d.dim_output, ranges::DIMS)?;
            }
        }
        Ok(())
    }

    /// The input shape this layer declares through its own fields.
    pub fn declared_input_shape(&self) -> TensorShape {
        match &self.op {
            LayerOp::Conv2d(c) => TensorShape::Spatial {
                height: c.matrix_size,
                width: c.matrix_size,
                channels: c.channels_in,
            },
            LayerOp::Pooling(p) => TensorShape::Spatial {
                height: p.matrix_size,
                width: p.matrix_size,
                channels: p.channels_in,
            },
            LayerOp::Dense(d) => TensorShape::Flat { dim: d.dim_input },
        }
    }
}

/// Shape of the data flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TensorShape {
    Spatial { height: u32, width: u32, channels: u32 },
    Flat { dim: u32 },
}

impl TensorShape {
    pub fn elements(&self) -> u64 {
        match *self {
            TensorShape::Spatial {
                height,
                width,
                channels,
            } => u64::from(height) * u64::from(width) * u64::from(channels),
            TensorShape::Flat { dim } => u64::from(dim),
        }
    }
}

impl fmt::Display for TensorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            TensorShape::Spatial {
                height,
                width,
                channels,
            } => write!(f, "{height}x{width}x{channels}"),
            TensorShape::Flat { dim } => write!(f, "{dim}"),
        }
    }
}

fn window_output(input: u32, window: u32, stride: u32, padding: Padding) -> Result<u32> {
    match padding {
        Padding::Valid => {
            if window > input {
                return Err(Error::Validation(format!(
                    "window {window} larger than input {input} with valid padding"
                )));
            }
            Ok((input - window) / stride + 1)
        }
        Padding::Same => Ok(input.div_ceil(stride)),
    }
}

/// Output shape of `layer` applied to `input`.
///
/// Valid padding: `floor((in - window) / stride) + 1` per spatial
/// dimension; same padding: `ceil(in / stride)`. A dense layer following a
/// spatial shape implies flattening.
pub fn infer_output_shape(layer: &LayerSpec, input: &TensorShape) -> Result<TensorShape> {
    match (&layer.op, input) {
        (LayerOp::Conv2d(c), TensorShape::Spatial { height, width, channels }) => {
            if *channels != c.channels_in {
                return Err(Error::ShapeMismatch(format!(
                    "conv2d expects {} input channels, got {}",
                    c.channels_in, channels
                )));
            }
            Ok(TensorShape::Spatial {
                height: window_output(*height, c.kernel_size, c.strides, c.padding)?,
                width: window_output(*width, c.kernel_size, c.strides, c.padding)?,
                channels: c.channels_out,
            })
        }
        (LayerOp::Pooling(p), TensorShape::Spatial { height, width, channels }) => {
            if *channels != p.channels_in {
                return Err(Error::ShapeMismatch(format!(
                    "pooling expects {} input channels, got {}",
                    p.channels_in, channels
                )));
            }
            Ok(TensorShape::Spatial {
                height: window_output(*height, p.pool_size, p.strides, p.padding)?,
                width: window_output(*width, p.pool_size, p.strides, p.padding)?,
                channels: *channels,
            })
        }
        (LayerOp::Dense(d), input) => {
            let flat = input.elements();
            if flat != u64::from(d.dim_input) {
                return Err(Error::ShapeMismatch(format!(
                    "dense expects dim_input {}, got {} ({} elements)",
                    d.dim_input, input, flat
                )));
            }
            Ok(TensorShape::Flat { dim: d.dim_output })
        }
        (op, TensorShape::Flat { dim }) => {
            let kind = match op {
                LayerOp::Conv2d(_) => "conv2d",
                LayerOp::Pooling(_) => "pooling",
                LayerOp::Dense(_) => unreachable!(),
            };
            Err(Error::ShapeMismatch(format!(
                "{kind} layer cannot consume flat input of dim {dim}"
            )))
        }
    }
}

/// A layer inside a network, with the display name used in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedLayer {
    pub name: String,
    #[serde(flatten)]
    pub spec: LayerSpec,
}

/// An ordered, shape-checked sequence of layers; the unit of whole-network
/// prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    pub batch_size: u32,
    pub layers: Vec<NamedLayer>,
}

impl NetworkSpec {
    /// Validates field ranges, batch consistency, and adjacent-layer shape
    /// compatibility.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Validation(format!(
                "network `{}` has no layers",
                self.name
            )));
        }
        check_range("batch_size", self.batch_size, ranges::BATCH)?;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.spec.validate().map_err(|e| {
                Error::Validation(format!("layer {i} (`{}`): {e}", layer.name))
            })?;
            if layer.spec.batch_size != self.batch_size {
                return Err(Error::Validation(format!(
                    "layer {i} (`{}`) batch_size {} differs from network batch_size {}",
                    layer.name, layer.spec.batch_size, self.batch_size
                )));
            }
        }
        let mut shape = self.layers[0].spec.declared_input_shape();
        for (i, layer) in self.layers.iter().enumerate() {
            let declared = layer.spec.declared_input_shape();
            if !shapes_compatible(&shape, &declared) {
                return Err(Error::ShapeMismatch(format!(
                    "layer {} (`{}`) declares input {} but layer {} produces {}",
                    i,
                    layer.name,
                    declared,
                    i.saturating_sub(1),
                    shape,
                )));
            }
            shape = infer_output_shape(&layer.spec, &shape).map_err(|e| {
                Error::ShapeMismatch(format!("layer {i} (`{}`): {e}", layer.name))
            })?;
        }
        Ok(())
    }

    /// Input shape of every layer followed by the network's output shape.
    pub fn shape_chain(&self) -> Result<Vec<TensorShape>> {
        let mut chain = Vec::with_capacity(self.layers.len() + 1);
        let mut shape = self.layers[0].spec.declared_input_shape();
        for layer in &self.layers {
            chain.push(shape);
            shape = infer_output_shape(&layer.spec, &shape)?;
        }
        chain.push(shape);
        Ok(chain)
    }

    /// Copy of the network running at a different batch size.
    pub fn with_batch_size(&self, batch_size: u32) -> Result<NetworkSpec> {
        check_range("batch_size", batch_size, ranges::BATCH)?;
        let mut out = self.clone();
        out.batch_size = batch_size;
        for layer in &mut out.layers {
            layer.spec.batch_size = batch_size;
        }
        Ok(out)
    }
}

/// A dense layer consuming a spatial shape implies flattening.
fn shapes_compatible(produced: &TensorShape, declared: &TensorShape) -> bool {
    match (produced, declared) {
        (TensorShape::Spatial { .. }, TensorShape::Flat { dim }) => {
            produced.elements() == u64::from(*dim)
        }
        (a, b) => a == b,
    }
}

/// The five hardware features describing a device, used both for reports
/// and as model inputs in unseen-device mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub name: String,
    pub basic_clock_mhz: f64,
    pub cuda_cores: u32,
    pub memory_clock_mhz: f64,
    pub memory_bandwidth_gbs: f64,
    pub peak_tflops: f64,
}

impl DeviceSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("basic_clock_mhz", self.basic_clock_mhz),
            ("memory_clock_mhz", self.memory_clock_mhz),
            ("memory_bandwidth_gbs", self.memory_bandwidth_gbs),
            ("peak_tflops", self.peak_tflops),
        ];
        for (field, value) in positive {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::Validation(format!(
                    "device `{}`: field `{field}` = {value} must be strictly positive",
                    self.name
                )));
            }
        }
        if self.cuda_cores == 0 {
            return Err(Error::Validation(format!(
                "device `{}`: field `cuda_cores` must be strictly positive",
                self.name
            )));
        }
        Ok(())
    }

    /// Warnings for hardware features outside the trained feature ranges.
    /// Extrapolation is allowed, so these never become errors.
    pub fn range_warnings(&self) -> Vec<String> {
        let checks = [
            ("basic_clock_mhz", self.basic_clock_mhz, ranges::DEV_CLOCK_MHZ),
            ("cuda_cores", f64::from(self.cuda_cores), ranges::DEV_CORES),
            (
                "memory_clock_mhz",
                self.memory_clock_mhz,
                ranges::DEV_MEM_CLOCK_MHZ,
            ),
            (
                "memory_bandwidth_gbs",
                self.memory_bandwidth_gbs,
                ranges::DEV_BANDWIDTH_GBS,
            ),
            ("peak_tflops", self.peak_tflops, ranges::DEV_TFLOPS),
        ];
        checks
            .iter()
            .filter(|(_, v, (lo, hi))| v < lo || v > hi)
            .map(|(field, v, (lo, hi))| {
                format!(
                    "device `{}`: {field} = {v} outside trained range {lo}-{hi}; \
                     predictions extrapolate",
                    self.name
                )
            })
            .collect()
    }

    /// The five hardware feature values in layout order.
    pub fn feature_values(&self) -> [f64; 5] {
        [
            self.basic_clock_mhz,
            f64::from(self.cuda_cores),
            self.memory_clock_mhz,
            self.memory_bandwidth_gbs,
            self.peak_tflops,
        ]
    }
}

/// The reference devices shipped with the tool.
pub fn builtin_devices() -> Vec<DeviceSpec> {
    let rows: [(&str, f64, u32, f64, f64, f64); 5] = [
        ("P1000", 1266.0, 640, 1253.0, 80.19, 1.894),
        ("P2000", 1076.0, 1024, 1752.0, 140.2, 3.031),
        ("P4000", 1202.0, 1792, 1901.0, 243.3, 5.304),
        ("P5000", 1607.0, 2560, 1127.0, 288.5, 8.873),
        ("GTX1080Ti", 1481.0, 3584, 1376.0, 484.4, 11.34),
    ];
    rows.iter()
        .map(|&(name, clock, cores, mem_clock, bw, tflops)| DeviceSpec {
            name: name.to_string(),
            basic_clock_mhz: clock,
            cuda_cores: cores,
            memory_clock_mhz: mem_clock,
            memory_bandwidth_gbs: bw,
            peak_tflops: tflops,
        })
        .collect()
}

/// Looks a device up by name (case-insensitive) in `devices`.
pub fn find_device<'a>(devices: &'a [DeviceSpec], name: &str) -> Result<&'a DeviceSpec> {
    devices
        .iter()
        .find(|d| d.name.eq_ignore_ascii_case(name))
        .ok_or_else(|| {
            let known: Vec<&str> = devices.iter().map(|d| d.name.as_str()).collect();
            Error::Usage(format!(
                "unknown device `{name}` (known: {})",
                known.join(", ")
            ))
        })
}

// ---------------------------------------------------------------------------
// Network file format
// ---------------------------------------------------------------------------

/// Raw layer object as it appears in a network file. All fields optional so
/// per-kind requirements produce precise errors instead of serde's.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLayer {
    name: Option<String>,
    kind: Option<String>,
    matrix_size: Option<u32>,
    kernel_size: Option<u32>,
    channels_in: Option<u32>,
    channels_out: Option<u32>,
    strides: Option<u32>,
    padding: Option<Padding>,
    activation: Option<Activation>,
    use_bias: Option<bool>,
    dim_input: Option<u32>,
    dim_output: Option<u32>,
    pool_size: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetworkFile {
    format_version: u32,
    name: String,
    batch_size: u32,
    layers: Vec<RawLayer>,
}

struct LayerBuilder<'a> {
    index: usize,
    raw: &'a RawLayer,
}

impl<'a> LayerBuilder<'a> {
    fn required<T: Copy>(&self, field: &str, value: Option<T>) -> Result<T> {
        value.ok_or_else(|| {
            Error::Validation(format!(
                "layer {}: missing required field `{field}`",
                self.index
            ))
        })
    }

    fn forbid<T>(&self, kind: &str, field: &str, value: &Option<T>) -> Result<()> {
        if value.is_some() {
            return Err(Error::Validation(format!(
                "layer {}: field `{field}` does not apply to kind `{kind}`",
                self.index
            )));
        }
        Ok(())
    }

    fn build(&self, batch_size: u32) -> Result<LayerSpec> {
        let raw = self.raw;
        let kind = self.required("kind", raw.kind.as_deref())?;
        let op = match kind {
            "conv2d" => {
                self.forbid(kind, "dim_input", &raw.dim_input)?;
                self.forbid(kind, "dim_output", &raw.dim_output)?;
                self.forbid(kind, "pool_size", &raw.pool_size)?;
                LayerOp::Conv2d(ConvParams {
                    matrix_size: self.required("matrix_size", raw.matrix_size)?,
                    kernel_size: self.required("kernel_size", raw.kernel_size)?,
                    channels_in: self.required("channels_in", raw.channels_in)?,
                    channels_out: self.required("channels_out", raw.channels_out)?,
                    strides: self.required("strides", raw.strides)?,
                    padding: self.required("padding", raw.padding)?,
                    activation: raw.activation.unwrap_or(Activation::Relu),
                    use_bias: raw.use_bias.unwrap_or(true),
                })
            }
            "pooling" => {
                self.forbid(kind, "kernel_size", &raw.kernel_size)?;
                self.forbid(kind, "channels_out", &raw.channels_out)?;
                self.forbid(kind, "use_bias", &raw.use_bias)?;
                self.forbid(kind, "dim_input", &raw.dim_input)?;
                self.forbid(kind, "dim_output", &raw.dim_output)?;
                let pool_size = self.required("pool_size", raw.pool_size)?;
                LayerOp::Pooling(PoolParams {
                    matrix_size: self.required("matrix_size", raw.matrix_size)?,
                    channels_in: self.required("channels_in", raw.channels_in)?,
                    pool_size,
                    // Pooling strides default to the pool size when omitted.
                    strides: raw.strides.unwrap_or(pool_size),
                    padding: self.required("padding", raw.padding)?,
                    activation: raw.activation.unwrap_or(Activation::Relu),
                })
            }
            "dense" => {
                self.forbid(kind, "matrix_size", &raw.matrix_size)?;
                self.forbid(kind, "kernel_size", &raw.kernel_size)?;
                self.forbid(kind, "channels_in", &raw.channels_in)?;
                self.forbid(kind, "channels_out", &raw.channels_out)?;
                self.forbid(kind, "strides", &raw.strides)?;
                self.forbid(kind, "padding", &raw.padding)?;
                self.forbid(kind, "pool_size", &raw.pool_size)?;
                LayerOp::Dense(DenseParams {
                    dim_input: self.required("dim_input", raw.dim_input)?,
                    dim_output: self.required("dim_output", raw.dim_output)?,
                    activation: raw.activation.unwrap_or(Activation::Relu),
                    use_bias: raw.use_bias.unwrap_or(true),
                })
            }
            other => {
                return Err(Error::Validation(format!(
                    "layer {}: unknown kind `{other}`",
                    self.index
                )))
            }
        };
        Ok(LayerSpec { batch_size, op })
    }
}

fn default_layer_name(kind: LayerKind, ordinal: usize) -> String {
    format!("{}{}", kind.as_str(), ordinal)
}

/// Parses and validates a network description file.
pub fn parse_network_file(path: impl AsRef<Path>) -> Result<NetworkSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_network_str(&text).map_err(|e| match e {
        Error::Parse { detail, .. } => Error::Parse {
            path: path.to_path_buf(),
            detail,
        },
        other => other,
    })
}

/// Parses and validates a network description from JSON text.
pub fn parse_network_str(text: &str) -> Result<NetworkSpec> {
    let raw: RawNetworkFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: "<string>".into(),
        detail: e.to_string(),
    })?;
    if raw.format_version != FORMAT_VERSION {
        return Err(Error::Version {
            found: raw.format_version,
            expected: FORMAT_VERSION,
        });
    }
    let mut counters = std::collections::BTreeMap::new();
    let mut layers = Vec::with_capacity(raw.layers.len());
    for (index, raw_layer) in raw.layers.iter().enumerate() {
        let builder = LayerBuilder {
            index,
            raw: raw_layer,
        };
        let spec = builder.build(raw.batch_size)?;
        let name = raw_layer.name.clone().unwrap_or_else(|| {
            let n = counters.entry(spec.kind()).or_insert(0usize);
            *n += 1;
            default_layer_name(spec.kind(), *n)
        });
        layers.push(NamedLayer { name, spec });
    }
    let network = NetworkSpec {
        name: raw.name,
        batch_size: raw.batch_size,
        layers,
    };
    network.validate()?;
    Ok(network)
}

/// Serializes a network to the documented JSON format. The output parses
/// back to an identical [`NetworkSpec`].
pub fn network_to_json(network: &NetworkSpec) -> Result<String> {
    let mut layers = Vec::with_capacity(network.layers.len());
    for layer in &network.layers {
        let mut obj = serde_json::Map::new();
        obj.insert("name".into(), layer.name.clone().into());
        obj.insert("kind".into(), layer.spec.kind().as_str().into());
        let value = serde_json::to_value(&layer.spec.op)
            .map_err(|e| Error::Internal(format!("layer serialization: {e}")))?;
        if let serde_json::Value::Object(fields) = value {
            for (k, v) in fields {
                if k != "kind" {
                    obj.insert(k, v);
                }
            }
        }
        layers.push(serde_json::Value::Object(obj));
    }
    let doc = serde_json::json!({
        "format_version": FORMAT_VERSION,
        "name": network.name,
        "batch_size": network.batch_size,
        "layers": layers,
    });
    serde_json::to_string_pretty(&doc).map_err(|e| Error::Internal(e.to_string()))
}

/// Writes a network file; see [`network_to_json`].
pub fn save_network_file(network: &NetworkSpec, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = network_to_json(network)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct DeviceFile {
    format_version: u32,
    devices: Vec<DeviceSpec>,
}

/// Parses a device spec file and validates every entry.
pub fn parse_devices_file(path: impl AsRef<Path>) -> Result<Vec<DeviceSpec>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: DeviceFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::Version {
            found: file.format_version,
            expected: FORMAT_VERSION,
        });
    }
    for device in &file.devices {
        device.validate()?;
    }
    Ok(file.devices)
}

// ---------------------------------------------------------------------------
// Random valid networks (fuzzing and property tests)
// ---------------------------------------------------------------------------

/// Generates a random shape-consistent network with a layer count in
/// `[min_layers, max_layers]`. Deterministic in `seed`. Field values stay
/// in small sub-ranges so generated networks remain cheap to process.
pub fn random_network(seed: u64, min_layers: usize, max_layers: usize) -> NetworkSpec {
    use rand::Rng;

    assert!(min_layers >= 1 && min_layers <= max_layers);
    let mut rng = seed::rng(seed);
    let batch_size = rng.gen_range(ranges::BATCH.0..=ranges::BATCH.1);
    let n_layers = rng.gen_range(min_layers..=max_layers);

    let mut layers: Vec<NamedLayer> = Vec::with_capacity(n_layers);
    // Start either spatially or flat.
    let mut shape = if rng.gen_bool(0.8) {
        TensorShape::Spatial {
            height: rng.gen_range(4..=64),
            width: 0, // replaced below; inputs are square
            channels: rng.gen_range(1..=8),
        }
    } else {
        TensorShape::Flat {
            dim: rng.gen_range(1..=512),
        }
    };
    if let TensorShape::Spatial { height, width, .. } = &mut shape {
        *width = *height;
    }

    for i in 0..n_layers {
        let op = match shape {
            TensorShape::Flat { dim } => LayerOp::Dense(DenseParams {
                dim_input: dim,
                dim_output: rng.gen_range(1..=512),
                activation: if rng.gen_bool(0.5) {
                    Activation::Relu
                } else {
                    Activation::None
                },
                use_bias: rng.gen_bool(0.5),
            }),
            TensorShape::Spatial {
                height, channels, ..
            } => {
                let can_flatten = shape.elements() <= u64::from(ranges::DIMS.1);
                let choice = rng.gen_range(0..if can_flatten { 3 } else { 2 });
                match choice {
                    0 => {
                        let padding = if rng.gen_bool(0.5) {
                            Padding::Valid
                        } else {
                            Padding::Same
                        };
                        let max_k = match padding {
                            Padding::Valid => ranges::KERNEL.1.min(height),
                            Padding::Same => ranges::KERNEL.1,
                        };
                        LayerOp::Conv2d(ConvParams {
                            matrix_size: height,
                            kernel_size: rng.gen_range(1..=max_k),
                            channels_in: channels,
                            channels_out: rng.gen_range(1..=16),
                            strides: rng.gen_range(ranges::STRIDES.0..=ranges::STRIDES.1),
                            padding,
                            activation: Activation::Relu,
                            use_bias: rng.gen_bool(0.8),
                        })
                    }
                    1 => {
                        let padding = if rng.gen_bool(0.5) {
                            Padding::Valid
                        } else {
                            Padding::Same
                        };
                        let max_p = match padding {
                            Padding::Valid => ranges::POOL.1.min(height),
                            Padding::Same => ranges::POOL.1,
                        };
                        LayerOp::Pooling(PoolParams {
                            matrix_size: height,
                            channels_in: channels,
                            pool_size: rng.gen_range(1..=max_p),
                            strides: rng.gen_range(ranges::STRIDES.0..=ranges::STRIDES.1),
                            padding,
                            activation: Activation::Relu,
                        })
                    }
                    _ => LayerOp::Dense(DenseParams {
                        dim_input: shape.elements() as u32,
                        dim_output: rng.gen_range(1..=512),
                        activation: Activation::Relu,
                        use_bias: true,
                    }),
                }
            }
        };
        let spec = LayerSpec { batch_size, op };
        shape = infer_output_shape(&spec, &shape)
            .expect("random_network produced an invalid layer");
        layers.push(NamedLayer {
            name: default_layer_name(spec.kind(), i + 1),
            spec,
        });
    }

    let network = NetworkSpec {
        name: format!("random-{seed}"),
        batch_size,
        layers,
    };
    network.validate().expect("random_network must validate");
    network
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lenet5_json() -> String {
        serde_json::json!({
            "format_version": 1,
            "name": "lenet5",
            "batch_size": 1,
            "layers": [
                {"name": "conv1", "kind": "conv2d", "matrix_size": 32, "kernel_size": 5,
                 "channels_in": 1, "channels_out": 6, "strides": 1, "padding": "valid"},
                {"name": "pool1", "kind": "pooling", "matrix_size": 28, "channels_in": 6,
                 "pool_size": 2, "strides": 2, "padding": "valid"},
                {"name": "conv2", "kind": "conv2d", "matrix_size": 14, "kernel_size": 5,
                 "channels_in": 6, "channels_out": 16, "strides": 1, "padding": "valid"},
                {"name": "pool2", "kind": "pooling", "matrix_size": 10, "channels_in": 16,
                 "pool_size": 2, "strides": 2, "padding": "valid"},
                {"name": "fc1", "kind": "dense", "dim_input": 400, "dim_output": 120},
                {"name": "fc2", "kind": "dense", "dim_input": 120, "dim_output": 84},
                {"name": "out", "kind": "dense", "dim_input": 84, "dim_output": 10}
            ]
        })
        .to_string()
    }

    #[test]
    fn parses_lenet5() {
        let net = parse_network_str(&lenet5_json()).unwrap();
        assert_eq!(net.layers.len(), 7);
        assert_eq!(net.batch_size, 1);
        let chain = net.shape_chain().unwrap();
        let expected = [
            "32x32x1", "28x28x6", "14x14x6", "10x10x16", "5x5x16", "120", "84", "10",
        ];
        let rendered: Vec<String> = chain.iter().map(|s| s.to_string()).collect();
        assert_eq!(rendered, expected);
    }

    #[test]
    fn single_dense_layer_is_valid() {
        let text = serde_json::json!({
            "format_version": 1,
            "name": "tiny",
            "batch_size": 1,
            "layers": [{"kind": "dense", "dim_input": 1, "dim_output": 1}]
        })
        .to_string();
        let net = parse_network_str(&text).unwrap();
        assert_eq!(net.layers.len(), 1);
        assert_eq!(net.layers[0].name, "dense1");
    }

    #[test]
    fn rejects_out_of_range_kernel() {
        let text = serde_json::json!({
            "format_version": 1,
            "name": "bad",
            "batch_size": 1,
            "layers": [
                {"kind": "conv2d", "matrix_size": 32, "kernel_size": 9,
                 "channels_in": 1, "channels_out": 6, "strides": 1, "padding": "valid"}
            ]
        })
        .to_string();
        let err = parse_network_str(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("kernel_size"), "got: {msg}");
        assert!(msg.contains("layer 0"), "got: {msg}");
    }

    #[test]
    fn rejects_shape_mismatch_naming_layers() {
        let text = serde_json::json!({
            "format_version": 1,
            "name": "bad",
            "batch_size": 1,
            "layers": [
                {"kind": "conv2d", "matrix_size": 32, "kernel_size": 5,
                 "channels_in": 1, "channels_out": 6, "strides": 1, "padding": "valid"},
                {"kind": "pooling", "matrix_size": 27, "channels_in": 6,
                 "pool_size": 2, "padding": "valid"}
            ]
        })
        .to_string();
        let err = parse_network_str(&text).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch(_)), "got: {err}");
    }

    #[test]
    fn rejects_irrelevant_field() {
        let text = serde_json::json!({
            "format_version": 1,
            "name": "bad",
            "batch_size": 1,
            "layers": [
                {"kind": "dense", "dim_input": 4, "dim_output": 2, "kernel_size": 3}
            ]
        })
        .to_string();
        let err = parse_network_str(&text).unwrap_err();
        assert!(err.to_string().contains("kernel_size"), "got: {err}");
    }

    #[test]
    fn pooling_strides_default_to_pool_size() {
        let text = serde_json::json!({
            "format_version": 1,
            "name": "p",
            "batch_size": 2,
            "layers": [
                {"kind": "pooling", "matrix_size": 28, "channels_in": 3,
                 "pool_size": 2, "padding": "valid"}
            ]
        })
        .to_string();
        let net = parse_network_str(&text).unwrap();
        match net.layers[0].spec.op {
            LayerOp::Pooling(p) => assert_eq!(p.strides, 2),
            _ => panic!("expected pooling"),
        }
    }

    #[test]
    fn shape_arithmetic_matches_convolution_rules() {
        let conv = LayerSpec {
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
        };
        let out = infer_output_shape(
            &conv,
            &TensorShape::Spatial {
                height: 32,
                width: 32,
                channels: 1,
            },
        )
        .unwrap();
        assert_eq!(
            out,
            TensorShape::Spatial {
                height: 28,
                width: 28,
                channels: 6
            }
        );

        // Same padding: ceil(in / stride).
        let mut same = conv;
        if let LayerOp::Conv2d(c) = &mut same.op {
            c.padding = Padding::Same;
            c.strides = 3;
        }
        let out = infer_output_shape(
            &same,
            &TensorShape::Spatial {
                height: 32,
                width: 32,
                channels: 1,
            },
        )
        .unwrap();
        assert_eq!(
            out,
            TensorShape::Spatial {
                height: 11,
                width: 11,
                channels: 6
            }
        );
    }

    #[test]
    fn validation_rejects_every_range_boundary() {
        // For each field: min-1 and max+1 rejected, min and max accepted.
        type Build = Box<dyn Fn(u32) -> LayerSpec>;
        let conv = |f: Box<dyn Fn(u32, &mut ConvParams)>| -> Build {
            Box::new(move |v| {
                let mut params = ConvParams {
                    matrix_size: 64,
                    kernel_size: 3,
                    channels_in: 4,
                    channels_out: 4,
                    strides: 1,
                    padding: Padding::Same,
                    activation: Activation::Relu,
                    use_bias: true,
                };
                f(v, &mut params);
                LayerSpec {
                    batch_size: 1,
                    op: LayerOp::Conv2d(params),
                }
            })
        };
        let cases: Vec<(&str, (u32, u32), Build)> = vec![
            (
                "batch_size",
                ranges::BATCH,
                Box::new(|v| LayerSpec {
                    batch_size: v,
                    op: LayerOp::Dense(DenseParams {
                        dim_input: 8,
                        dim_output: 8,
                        activation: Activation::Relu,
                        use_bias: true,
                    }),
                }),
            ),
            ("matrix_size", ranges::MATRIX, conv(Box::new(|v, p| p.matrix_size = v))),
            ("kernel_size", ranges::KERNEL, conv(Box::new(|v, p| p.kernel_size = v))),
            ("channels_in", ranges::CHANNELS, conv(Box::new(|v, p| p.channels_in = v))),
            ("channels_out", ranges::CHANNELS, conv(Box::new(|v, p| p.channels_out = v))),
            ("strides", ranges::STRIDES, conv(Box::new(|v, p| p.strides = v))),
            (
                "dim_input",
                ranges::DIMS,
                Box::new(|v| LayerSpec {
                    batch_size: 1,
                    op: LayerOp::Dense(DenseParams {
                        dim_input: v,
                        dim_output: 8,
                        activation: Activation::Relu,
                        use_bias: true,
                    }),
                }),
            ),
            (
                "dim_output",
                ranges::DIMS,
                Box::new(|v| LayerSpec {
                    batch_size: 1,
                    op: LayerOp::Dense(DenseParams {
                        dim_input: 8,
                        dim_output: v,
                        activation: Activation::Relu,
                        use_bias: true,
                    }),
                }),
            ),
            (
                "pool_size",
                ranges::POOL,
                Box::new(|v| LayerSpec {
                    batch_size: 1,
                    op: LayerOp::Pooling(PoolParams {
                        matrix_size: 64,
                        channels_in: 4,
                        pool_size: v,
                        strides: 2,
                        padding: Padding::Same,
                        activation: Activation::Relu,
                    }),
                }),
            ),
        ];
        for (field, (lo, hi), build) in cases {
            if lo > 0 {
                let err = build(lo - 1).validate().unwrap_err();
                assert!(err.to_string().contains(field), "{field} lo-1: {err}");
            }
            let err = build(hi + 1).validate().unwrap_err();
            assert!(err.to_string().contains(field), "{field} hi+1: {err}");
            build(lo).validate().unwrap_or_else(|e| panic!("{field} lo: {e}"));
            build(hi).validate().unwrap_or_else(|e| panic!("{field} hi: {e}"));
        }
    }

    #[test]
    fn network_round_trips_through_json() {
        for seed in 0..100 {
            let net = random_network(seed, 1, 12);
            let json = network_to_json(&net).unwrap();
            let parsed = parse_network_str(&json).unwrap();
            assert_eq!(net, parsed, "seed {seed}");
        }
    }

    #[test]
    fn builtin_devices_validate_and_p5000_matches() {
        let devices = builtin_devices();
        assert_eq!(devices.len(), 5);
        for d in &devices {
            d.validate().unwrap();
            assert!(d.range_warnings().is_empty(), "{}", d.name);
        }
        let p5000 = find_device(&devices, "p5000").unwrap();
        assert_eq!(
            p5000.feature_values(),
            [1607.0, 2560.0, 1127.0, 288.5, 8.873]
        );
    }

    #[test]
    fn device_outside_range_warns_but_validates() {
        let device = DeviceSpec {
            name: "FUTURE".into(),
            basic_clock_mhz: 2500.0,
            cuda_cores: 10000,
            memory_clock_mhz: 1500.0,
            memory_bandwidth_gbs: 900.0,
            peak_tflops: 40.0,
        };
        device.validate().unwrap();
        let warnings = device.range_warnings();
        assert_eq!(warnings.len(), 4);
    }

    #[test]
    fn batch_sweep_rebuilds_layers() {
        let net = parse_network_str(&lenet5_json()).unwrap();
        let swept = net.with_batch_size(16).unwrap();
        assert_eq!(swept.batch_size, 16);
        assert!(swept.layers.iter().all(|l| l.spec.batch_size == 16));
        swept.validate().unwrap();
    }
}
