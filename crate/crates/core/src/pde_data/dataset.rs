use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{
    sample_initial_condition, solve_advection, solve_heat, solve_ks, Equation,
    InitialConditionSpec, PdeConfig, SpatialGrid, Trajectory,
};
use crate::error::{config_err, Result};
use crate::io::{DatasetHeader, DatasetWriter};

/// Everything needed to regenerate a dataset bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub pde: PdeConfig,
    pub grid: SpatialGrid,
    pub initial: InitialConditionSpec,
    pub n_samples: usize,
    pub base_seed: u64,
}

/// Per-sample coefficient draw; uses its own ChaCha stream so it never correlates
/// with the initial-condition draw of the same seed.
fn sample_coefficient(equation: Equation, seed: u64) -> f64 {
    match equation.coefficient_range() {
        Some((lo, hi)) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1);
            lo + (hi - lo) * rng.random::<f64>()
        }
        None => 0.0,
    }
}

/// One ground-truth trajectory for `seed`.
pub fn generate_trajectory(
    pde: &PdeConfig,
    grid: &SpatialGrid,
    initial: &InitialConditionSpec,
    seed: u64,
) -> Result<Trajectory<f64>> {
    pde.validate()?;
    let u0: Vec<f64> = sample_initial_condition(&initial.with_seed(seed), grid)?;
    let coefficient = sample_coefficient(pde.equation, seed);
    let times = pde.times();
    let mut traj = match pde.equation {
        Equation::Advection => solve_advection(&u0, coefficient, &times, grid)?,
        Equation::Heat => solve_heat(&u0, coefficient, &times, grid)?,
        Equation::KuramotoSivashinsky => solve_ks(&u0, pde, grid)?,
    };
    traj.seed = seed;
    Ok(traj)
}

/// Generates all samples in memory. Samples are independent; the parallel and serial
/// orders produce identical results.
pub fn generate_trajectories(spec: &DatasetSpec) -> Result<Vec<Trajectory<f64>>> {
    if spec.n_samples == 0 {
        return Err(config_err("n_samples must be >= 1"));
    }
    (0..spec.n_samples)
        .into_par_iter()
        .map(|i| {
            generate_trajectory(
                &spec.pde,
                &spec.grid,
                &spec.initial,
                spec.base_seed.wrapping_add(i as u64),
            )
        })
        .collect()
}

const CHUNK: usize = 64;

/// Generates a dataset straight to `path` in the binary dataset format, `CHUNK`
/// samples at a time.
pub fn generate_dataset(spec: &DatasetSpec, path: &Path) -> Result<()> {
    if spec.n_samples == 0 {
        return Err(config_err("n_samples must be >= 1"));
    }
    spec.pde.validate()?;
    let header = DatasetHeader::new(spec.pde, spec.grid, spec.n_samples, None);
    let mut writer = DatasetWriter::create(path, header)?;
    let mut start = 0;
    while start < spec.n_samples {
        let end = (start + CHUNK).min(spec.n_samples);
        let chunk: Vec<Trajectory<f64>> = (start..end)
            .into_par_iter()
            .map(|i| {
                generate_trajectory(
                    &spec.pde,
                    &spec.grid,
                    &spec.initial,
                    spec.base_seed.wrapping_add(i as u64),
                )
            })
            .collect::<Result<_>>()?;
        for traj in &chunk {
            writer.push(traj, None)?;
        }
        start = end;
    }
    writer.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn advection_coefficients_within_range() {
        let spec = DatasetSpec {
            pde: PdeConfig {
                n_t: 4,
                ..PdeConfig::advection()
            },
            grid: SpatialGrid::default(),
            initial: InitialConditionSpec::default(),
            n_samples: 256,
            base_seed: 100,
        };
        let trajs = generate_trajectories(&spec).unwrap();
        assert_eq!(trajs.len(), 256);
        assert!(trajs.iter().all(|t| (0.1..=2.5).contains(&t.coefficient)));
        assert_eq!(trajs[7].seed, 107);
    }

    #[test]
    fn heat_coefficients_within_range() {
        for seed in 0..100 {
            let nu = sample_coefficient(Equation::Heat, seed);
            assert!((0.1..=0.8).contains(&nu));
        }
        assert_eq!(sample_coefficient(Equation::KuramotoSivashinsky, 3), 0.0);
    }

    #[test]
    fn generation_is_pure_in_seed() {
        let pde = PdeConfig {
            n_t: 10,
            ..PdeConfig::heat()
        };
        let g = SpatialGrid::default();
        let ic = InitialConditionSpec::default();
        let a = generate_trajectory(&pde, &g, &ic, 77).unwrap();
        let b = generate_trajectory(&pde, &g, &ic, 77).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_samples_rejected() {
        let spec = DatasetSpec {
            pde: PdeConfig::advection(),
            grid: SpatialGrid::default(),
            initial: InitialConditionSpec::default(),
            n_samples: 0,
            base_seed: 0,
        };
        assert!(generate_trajectories(&spec).is_err());
    }
}
