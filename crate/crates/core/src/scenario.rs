//! One epoch of a constellation: positions, link graph and its cliques.

use crate::cliques::{list_k_cliques, Clique, CliqueSchedule};
use crate::constellation::{propagate, ConstellationConfig, PositionSet};
use crate::error::Result;
use crate::linkgraph::{build_visibility_graph, VisibilityGraph};

/// Clique size used for detection.
pub const DETECTION_CLIQUE_SIZE: usize = 6;

#[derive(Debug, Clone)]
pub struct EpochScene {
    pub positions: PositionSet,
    pub graph: VisibilityGraph,
    pub cliques: Vec<Clique>,
}

impl EpochScene {
    pub fn t(&self) -> f64 {
        self.positions.t
    }
}

pub fn scene_at(config: &ConstellationConfig, t: f64, k: usize) -> Result<EpochScene> {
    let positions = propagate(config, t)?;
    let graph = build_visibility_graph(&positions, config.body.radius);
    let cliques = list_k_cliques(&graph, k);
    Ok(EpochScene {
        positions,
        graph,
        cliques,
    })
}

/// Scenes at `t0, t0 + step, ...` (`count` epochs).
pub fn scenes_from(
    config: &ConstellationConfig,
    t0: f64,
    step: f64,
    count: usize,
    k: usize,
) -> Result<Vec<EpochScene>> {
    (0..count)
        .map(|j| scene_at(config, t0 + step * j as f64, k))
        .collect()
}

pub fn schedule_of(scenes: &[EpochScene]) -> Result<CliqueSchedule> {
    let mut schedule = CliqueSchedule::new();
    for s in scenes {
        schedule.push(s.t(), s.cliques.clone())?;
    }
    Ok(schedule)
}
