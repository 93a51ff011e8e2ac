#![allow(dead_code)]

use std::sync::{Arc, OnceLock};

use leapfactual::experiments::toy::{toy_flow_config, train_toy_field, NearestCenterOracle, ToyPipelineConfig};
use leapfactual::flow::FlowField;
use leapfactual::oracle::ClassifierOracle;
use leapfactual::transport::{LeapFactualConfig, TrajectoryRecord};
use leapfactual::Seed;
use leapfactual_service::session::{CreateSession, SessionManager};
use leapfactual_service::store::OracleKind;
use leapfactual_service::ModelSet;

/// A small four-square field, trained once per test binary.
pub fn toy_field() -> FlowField<f32> {
    static FIELD: OnceLock<FlowField<f32>> = OnceLock::new();
    FIELD
        .get_or_init(|| {
            let cfg = ToyPipelineConfig {
                n_per_class: 500,
                flow: leapfactual::flow::CfmTrainConfig {
                    epochs: 30,
                    hidden: vec![32, 32],
                    ..toy_flow_config()
                },
                ..Default::default()
            };
            train_toy_field(&cfg, Seed(7)).unwrap().0
        })
        .clone()
}

pub fn toy_models() -> Arc<ModelSet> {
    let mut models = ModelSet::toy(toy_field());
    models.default_config = LeapFactualConfig {
        n_blend: 6,
        n_inject: 3,
        gamma_inject_land: 0.5,
        euler_steps: 40,
        ..LeapFactualConfig::morpho()
    };
    Arc::new(models)
}

pub fn request(source: [f32; 2], target: usize, oracle: OracleKind) -> CreateSession {
    CreateSession {
        source_id: None,
        source_inline: Some(source.to_vec()),
        target_label: target,
        config: None,
        mode: None,
        oracle: Some(oracle),
    }
}

/// Answers every query of a human session with the nearest-centre label.
pub fn answer_like_local(manager: &SessionManager, id: &str) -> Vec<usize> {
    let mut labels = Vec::new();
    while let Ok(q) = manager.pending(id) {
        let x = manager.models().codec.decode_one(&q.z).unwrap();
        let label = NearestCenterOracle.predict(&x).unwrap();
        manager.submit_label(id, q.seq, label).unwrap();
        labels.push(label);
    }
    labels
}

pub fn records(manager: &SessionManager, id: &str) -> Vec<TrajectoryRecord> {
    let text = manager.trajectory_jsonl(id).unwrap();
    leapfactual::transport::parse_trajectory_jsonl(text.as_bytes()).unwrap()
}

/// Records with timestamps cleared; everything else must match bit for bit.
pub fn untimed(mut records: Vec<TrajectoryRecord>) -> Vec<TrajectoryRecord> {
    for r in &mut records {
        r.wall_ms = 0;
    }
    records
}

pub fn bits(records: &[TrajectoryRecord]) -> Vec<Vec<u32>> {
    records.iter().map(|r| r.z.iter().map(|v| v.to_bits()).collect()).collect()
}
