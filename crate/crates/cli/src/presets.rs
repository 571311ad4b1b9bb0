//! Built-in scenario families.

use std::f64::consts::FRAC_1_SQRT_2;

use covertime::scenario::CoverMethod;

use crate::config::{
    DomainConfig, DynamicsConfig, NumericsConfig, OutputConfig, ScenarioConfig, StartConfig,
    SubdiffusionConfig, TargetConfig,
};

pub const PRESET_NAMES: &[&str] = &[
    "fig2-torus2d",
    "fig3-disk-target",
    "fig4-multi-disk",
    "fig5-left-dim-ratio",
    "fig5-right-subdiffusion",
];

pub const DEFAULT_N_LIST: &[u64] = &[1, 10, 100, 1_000, 10_000];
pub const DEFAULT_REPLICAS: usize = 100;
pub const DEFAULT_SEED: u64 = 2024;

/// Disk radii of the single-disk sweep; the last one covers the whole torus.
pub const DISK_RADII: &[f64] = &[0.1, 0.2, 0.3, 0.5, FRAC_1_SQRT_2];

/// Radii of the multi-disk sweep.
pub const MULTI_DISK_RADII: &[f64] = &[0.05, 0.1, 0.15];

/// Disk centers of the multi-disk sweep. One sits on the corner, so the
/// farthest target point does not move with the radius.
pub const MULTI_DISK_CENTERS: &[[f64; 2]] = &[
    [0.0, 0.0],
    [0.31, 0.12],
    [0.83, 0.37],
    [0.18, 0.71],
    [0.62, 0.88],
];

fn base(id: &str, dim: usize, diameter: f64) -> ScenarioConfig {
    ScenarioConfig {
        scenario_id: Some(id.to_string()),
        domain: DomainConfig::Torus {
            dim,
            diameter: Some(diameter),
            side: None,
        },
        target: TargetConfig::Full,
        start: StartConfig::Center,
        dynamics: Some(DynamicsConfig {
            diffusivity: 1.0,
            drift: Default::default(),
            dispersion: Default::default(),
        }),
        subdiffusion: None,
        detection_radius: 0.3,
        n_list: DEFAULT_N_LIST.to_vec(),
        replicas: DEFAULT_REPLICAS,
        seed: DEFAULT_SEED,
        method: CoverMethod::Auto,
        numerics: NumericsConfig::default(),
        output: OutputConfig::default(),
    }
}

fn disks(centers: Vec<Vec<f64>>, radius: f64) -> TargetConfig {
    TargetConfig::Balls { centers, radius }
}

/// Scenarios of a preset, in output order.
pub fn preset(name: &str) -> Option<Vec<ScenarioConfig>> {
    let configs = match name {
        "fig2-torus2d" => vec![base("fig2-torus2d", 2, FRAC_1_SQRT_2)],
        "fig3-disk-target" => DISK_RADII
            .iter()
            .map(|&rt| {
                let mut c = base(&format!("fig3-disk-target/R_T={rt:.4}"), 2, FRAC_1_SQRT_2);
                c.target = disks(vec![vec![0.0, 0.0]], rt);
                c
            })
            .collect(),
        "fig4-multi-disk" => MULTI_DISK_RADII
            .iter()
            .map(|&rt| {
                let mut c = base(&format!("fig4-multi-disk/R_T={rt}"), 2, FRAC_1_SQRT_2);
                c.target = disks(MULTI_DISK_CENTERS.iter().map(|p| p.to_vec()).collect(), rt);
                c
            })
            .collect(),
        "fig5-left-dim-ratio" => vec![
            base("fig5-left-dim-ratio/d=1", 1, 1.3),
            base("fig5-left-dim-ratio/d=2", 2, 1.3),
        ],
        "fig5-right-subdiffusion" => {
            let diffusive = base("fig5-right-subdiffusion/diffusive", 1, 1.3);
            let mut sub = base("fig5-right-subdiffusion/alpha=0.5", 1, 1.3);
            sub.dynamics = None;
            sub.subdiffusion = Some(SubdiffusionConfig {
                alpha: 0.5,
                diffusivity: 1.0,
            });
            // the time-changed clock needs N > 1/alpha for a finite mean
            sub.n_list = DEFAULT_N_LIST
                .iter()
                .copied()
                .filter(|&n| n >= 10)
                .collect();
            vec![diffusive, sub]
        }
        _ => return None,
    };
    Some(configs)
}
