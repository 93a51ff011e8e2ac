use leapfactual::codec::{GenerativeCodec, IdentityCodec};
use leapfactual::data::toy::{CENTERS, CLASS_NAMES};
use leapfactual::data::{LabeledSet, SampleShape};
use leapfactual::experiments::toy::NearestCenterOracle;
use leapfactual::flow::FlowField;
use leapfactual::oracle::ClassifierOracle;
use leapfactual::transport::LeapFactualConfig;

use crate::store::OracleKind;

pub type SharedCodec = Box<dyn GenerativeCodec<f32> + Send + Sync>;
pub type SharedOracle = Box<dyn ClassifierOracle<f32> + Send + Sync>;

/// Everything a session needs: codec, flow, an optional automatic oracle and
/// an optional catalogue of source samples addressable by index.
pub struct ModelSet {
    pub codec: SharedCodec,
    pub field: FlowField<f32>,
    pub local_oracle: Option<SharedOracle>,
    pub class_names: Vec<String>,
    pub sources: Option<LabeledSet<f32>>,
    /// Class centres drawn by point-world clients.
    pub centers: Vec<Vec<f64>>,
    pub default_config: LeapFactualConfig,
    /// Oracle used when a creation request does not name one.
    pub default_oracle: OracleKind,
}

impl ModelSet {
    pub fn new(codec: SharedCodec, field: FlowField<f32>) -> Self {
        let n = field.n_classes();
        Self {
            codec,
            field,
            local_oracle: None,
            class_names: (0..n).map(|c| c.to_string()).collect(),
            sources: None,
            centers: Vec::new(),
            default_config: LeapFactualConfig::default(),
            default_oracle: OracleKind::Human,
        }
    }

    /// Four-square world with an exact nearest-centre oracle for automatic
    /// sessions.
    pub fn toy(field: FlowField<f32>) -> Self {
        Self {
            local_oracle: Some(Box::new(NearestCenterOracle)),
            class_names: CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
            centers: CENTERS.iter().map(|c| c.to_vec()).collect(),
            ..Self::new(Box::new(IdentityCodec { dim: 2 }), field)
        }
    }

    pub fn n_classes(&self) -> usize {
        self.field.n_classes()
    }

    pub fn input_shape(&self) -> SampleShape {
        self.codec.input_shape()
    }
}
