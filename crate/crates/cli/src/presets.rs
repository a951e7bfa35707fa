//! Named parameter sets for the reference figures.

use crate::config::Experiment;

#[derive(Debug)]
pub struct Preset {
    pub name: &'static str,
    pub experiment: Experiment,
    pub params: &'static [(&'static str, f64)],
    pub description: &'static str,
}

pub static PRESETS: &[Preset] = &[
    Preset {
        name: "fig1a",
        experiment: Experiment::Rabi2d,
        params: &[("omega", 1.0), ("omega_r", 1e-4), ("t_end", 80.0), ("include_1d", 1.0)],
        description: "excited-state population in 1D and 2D cavities, ω_r = 1e-4 Ω, t ∈ [0, 80]/Ω",
    },
    Preset {
        name: "fig1b",
        experiment: Experiment::Walk,
        params: &[("dims", 1.0), ("omega", 1.0), ("omega_r", 1e-4), ("t_end", 80.0)],
        description: "1D momentum walk at Ωt = 80",
    },
    Preset {
        name: "fig1c",
        experiment: Experiment::Walk,
        params: &[("dims", 2.0), ("omega", 1.0), ("omega_r", 1e-4), ("t_end", 80.0), ("l_max", 64.0)],
        description: "2D momentum walk at Ωt = 80, joint distribution",
    },
    Preset {
        name: "fig1d",
        experiment: Experiment::Walk,
        params: &[("dims", 2.0), ("omega", 1.0), ("omega_r", 1e-4), ("t_end", 80.0), ("l_max", 64.0)],
        description: "2D momentum walk at Ωt = 80, correlated and anticorrelated marginals",
    },
    Preset {
        name: "fig2",
        experiment: Experiment::MaskedGround,
        params: &[("dims", 1.0), ("omega", 1.0), ("omega_r", 1e-4), ("l_max", 40.0)],
        description: "masked ground-state doublet and its position densities",
    },
    Preset {
        name: "fig3",
        experiment: Experiment::MeanfieldSweep,
        params: &[
            ("kappa", 1.0),
            ("omega", 20.0),
            ("omega_r", 0.25),
            ("ratio_min", 0.0),
            ("ratio_max", 1.5),
            ("points", 61.0),
        ],
        description: "mean-field fixed points and stability versus ε/ε_crit",
    },
    Preset {
        name: "fig4a",
        experiment: Experiment::WignerSteady,
        params: &[("omega", 20.0), ("omega_r", 0.25), ("epsilon_ratio", 0.125), ("sector", -1.0), ("n_max", 40.0), ("grid_half_width", 3.0)],
        description: "steady-state cavity Wigner function at ε = ε_crit/8",
    },
    Preset {
        name: "fig4b",
        experiment: Experiment::WignerSteady,
        params: &[("omega", 20.0), ("omega_r", 0.25), ("epsilon_ratio", 1.0), ("sector", -1.0), ("n_max", 120.0), ("grid_half_width", 12.0)],
        description: "steady-state cavity Wigner function at ε = ε_crit",
    },
    Preset {
        name: "fig5",
        experiment: Experiment::WignerSteady,
        params: &[
            ("omega", 20.0),
            ("omega_r", 0.25),
            ("epsilon_ratio", 1.0),
            ("sector", -1.0),
            ("n_max", 120.0),
            ("grid_half_width", 12.0),
            ("log_scale", 1.0),
        ],
        description: "steady-state Wigner function on a logarithmic scale at ε = ε_crit",
    },
    Preset {
        name: "fig6",
        experiment: Experiment::Trajectory,
        params: &[
            ("omega", 20.0),
            ("omega_r", 0.25),
            ("epsilon_ratio", 1.0),
            ("sector", 0.0),
            ("n_max", 160.0),
            ("dt", 1e-3),
            ("t_end", 2000.0),
            ("kappa_d", 0.25),
        ],
        description: "heterodyne trajectory at ε = ε_crit from the mixed-parity state",
    },
    Preset {
        name: "unravel",
        experiment: Experiment::Ensemble,
        params: &[
            ("omega", 4.0),
            ("omega_r", 0.25),
            ("epsilon", 1.0),
            ("sector", 0.0),
            ("n_max", 20.0),
            ("dt", 5e-4),
            ("t_end", 10.0),
            ("trajectories", 100.0),
            ("compare_master", 1.0),
        ],
        description: "trajectory ensemble against the master equation on a small system",
    },
];

pub fn find(name: &str) -> Option<&'static Preset> {
    let norm = name.to_ascii_lowercase();
    PRESETS.iter().find(|p| p.name == norm)
}
