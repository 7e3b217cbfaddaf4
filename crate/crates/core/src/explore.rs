//! Enumerates tilings for a problem, scores them analytically and ranks them.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{validate, KernelKind, MachineConfig, ProblemShape, SubTileConfig, TileConfig};
use crate::cost_model::EnergyCoefficients;
use crate::sim::{map_exec, predict, CostOptions, Exec, Prediction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankBy {
    /// Lowest energy estimate first.
    Energy,
    /// Highest arithmetic intensity first.
    Ai,
    /// Fewest memory ↔ register-file transfers first.
    Transfers,
}

/// Candidate values per dimension. MX candidates use every sub-tile
/// combination whose `n'` divides the tile `n`; baseline candidates use
/// `k = 1` with every `(m, n)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub tile_m: Vec<usize>,
    pub tile_n: Vec<usize>,
    pub tile_k: Vec<usize>,
    pub sub_m: Vec<usize>,
    pub sub_n: Vec<usize>,
    pub sub_k: Vec<usize>,
    pub kinds: Vec<KernelKind>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            tile_m: vec![4, 8],
            tile_n: vec![4, 8, 16, 32],
            tile_k: vec![4, 8],
            sub_m: vec![4, 8],
            sub_n: vec![4, 8],
            sub_k: vec![4, 8],
            kinds: vec![KernelKind::Mx],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExploreError {
    #[error("no valid configuration in the search space")]
    EmptySpace,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub tile: TileConfig,
    pub sub: Option<SubTileConfig>,
    pub prediction: Prediction,
}

impl Candidate {
    fn score(&self, rank: RankBy) -> f64 {
        match rank {
            RankBy::Energy => self.prediction.energy,
            RankBy::Ai => -self.prediction.arithmetic_intensity,
            RankBy::Transfers => self.prediction.mem_vrf_total as f64,
        }
    }

    fn key(&self) -> (KernelKind, TileConfig, Option<SubTileConfig>) {
        (self.prediction.kind, self.tile, self.sub)
    }
}

fn sort_key(kind: KernelKind) -> u8 {
    match kind {
        KernelKind::Baseline => 0,
        KernelKind::Mx => 1,
    }
}

fn compare(x: &Candidate, y: &Candidate, rank: RankBy) -> Ordering {
    x.score(rank).total_cmp(&y.score(rank)).then(x.prediction.mem_vrf_total.cmp(&y.prediction.mem_vrf_total)).then_with(
        || {
            let (kx, tx, sx) = x.key();
            let (ky, ty, sy) = y.key();
            (sort_key(kx), tx, sx).cmp(&(sort_key(ky), ty, sy))
        },
    )
}

/// Every valid configuration of `space` for `problem` on `machine`.
pub fn enumerate(
    problem: ProblemShape,
    machine: &MachineConfig,
    space: &SearchSpace,
) -> Vec<(TileConfig, Option<SubTileConfig>)> {
    let mut out = Vec::new();
    if space.kinds.contains(&KernelKind::Baseline) {
        for &m in &space.tile_m {
            for &n in &space.tile_n {
                let tile = TileConfig::new(m, n, 1);
                if validate(problem, tile, None, machine).is_ok() {
                    out.push((tile, None));
                }
            }
        }
    }
    if space.kinds.contains(&KernelKind::Mx) {
        for &m in &space.tile_m {
            for &n in &space.tile_n {
                for &k in &space.tile_k {
                    for &sm in &space.sub_m {
                        for &sn in &space.sub_n {
                            for &sk in &space.sub_k {
                                if sn == 0 || n % sn != 0 {
                                    continue;
                                }
                                let tile = TileConfig::new(m, n, k);
                                let sub = SubTileConfig::new(sm, sn, sk, n / sn);
                                if validate(problem, tile, Some(sub), machine).is_ok() {
                                    out.push((tile, Some(sub)));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out.sort_by_key(|&(t, s)| (s.is_some(), t, s));
    out.dedup();
    out
}

/// Ranks all valid candidates; ties break on fewer memory transfers, then
/// on the configuration itself.
pub fn explore(
    problem: ProblemShape,
    machine: &MachineConfig,
    space: &SearchSpace,
    rank: RankBy,
    coeffs: &EnergyCoefficients,
    exec: Exec,
) -> Result<Vec<Candidate>, ExploreError> {
    let configs = enumerate(problem, machine, space);
    if configs.is_empty() {
        return Err(ExploreError::EmptySpace);
    }
    let mut candidates = map_exec(exec, configs, |(tile, sub)| {
        let v = validate(problem, tile, sub, machine).expect("enumerated configurations are valid");
        Candidate { tile, sub, prediction: predict(&v, &CostOptions::default(), coeffs) }
    });
    candidates.sort_by(|x, y| compare(x, y, rank));
    Ok(candidates)
}
