use serde::{Deserialize, Serialize};

use super::{csv, ExperimentConfig, ExperimentKind, Report};
use crate::dynamics::initial_state;
use crate::forces::{enumerate_partitions, full_interaction_force, mean_partition_force, partition_count};
use crate::rng::StreamRole;
use crate::Result;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UnbiasednessRow {
    pub n_particles: usize,
    pub batch_size: usize,
    /// `N! / (q! (p!)^q)`.
    pub partitions: u64,
    /// Number produced by enumeration.
    pub enumerated: u64,
    pub n_states: usize,
    /// Largest `|mean batch force - full force|` over states and coordinates.
    pub max_deviation: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UnbiasednessReport {
    pub rows: Vec<UnbiasednessRow>,
    pub max_deviation: f64,
    pub warnings: Vec<String>,
}

/// Exact average of the batch force over all partitions against the full
/// force at random states.
pub fn run_unbiasedness(cfg: &ExperimentConfig) -> Result<UnbiasednessReport> {
    cfg.validate_for(ExperimentKind::Unbiasedness)?;
    let u = &cfg.unbiasedness;
    let field = cfg.field()?;
    let mut rows = Vec::new();
    for &(n, p) in &u.cases {
        let params = cfg.params(n, p, cfg.sim.batch_period);
        let mut worst = 0.0f64;
        for k in 0..u.n_states {
            let state = initial_state(&params, &u.init, k as u64, StreamRole::Init)?;
            let full = full_interaction_force(&state, &field)?;
            let mean = mean_partition_force(&state, &field, p)?;
            for (a, b) in full.iter().zip(&mean) {
                worst = worst.max((a - b).abs());
            }
        }
        rows.push(UnbiasednessRow {
            n_particles: n,
            batch_size: p,
            partitions: partition_count(n, p)? as u64,
            enumerated: enumerate_partitions(n, p)?.len() as u64,
            n_states: u.n_states,
            max_deviation: worst,
        });
    }
    let max_deviation = rows.iter().map(|r| r.max_deviation).fold(0.0, f64::max);
    let warnings = rows
        .iter()
        .filter(|r| r.partitions != r.enumerated)
        .map(|r| format!("N = {}, p = {}: enumerated {} of {} partitions", r.n_particles, r.batch_size, r.enumerated, r.partitions))
        .collect();
    Ok(UnbiasednessReport { rows, max_deviation, warnings })
}

impl Report for UnbiasednessReport {
    fn csv_files(&self) -> Vec<(String, String)> {
        vec![(
            "unbiasedness.csv".into(),
            csv(
                "n,p,partitions,enumerated,n_states,max_deviation",
                self.rows.iter().map(|r| {
                    vec![
                        r.n_particles.to_string(),
                        r.batch_size.to_string(),
                        r.partitions.to_string(),
                        r.enumerated.to_string(),
                        r.n_states.to_string(),
                        format!("{:e}", r.max_deviation),
                    ]
                }),
            ),
        )]
    }

    fn warnings(&self) -> Vec<String> {
        self.warnings.clone()
    }
}
