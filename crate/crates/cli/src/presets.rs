//! Carrier-frequency presets and the built-in figure sweeps.

use pcp_mmwave::model::{free_space_intercept, AntennaPattern, AssociationModel, NetworkConfig};

use crate::config::RunConfig;
use crate::sweep::{Axis, Engine, McVariant, Quantity, Series, SweepSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyPreset {
    pub carrier_hz: f64,
    pub alpha_los: f64,
    pub alpha_nlos: f64,
    pub antenna_elements: u32,
}

impl FrequencyPreset {
    pub const ALL: [FrequencyPreset; 4] = [
        FrequencyPreset {
            carrier_hz: 28e9,
            alpha_los: 2.0,
            alpha_nlos: 3.0,
            antenna_elements: 10,
        },
        FrequencyPreset {
            carrier_hz: 38e9,
            alpha_los: 2.0,
            alpha_nlos: 3.71,
            antenna_elements: 20,
        },
        FrequencyPreset {
            carrier_hz: 60e9,
            alpha_los: 2.25,
            alpha_nlos: 3.76,
            antenna_elements: 40,
        },
        FrequencyPreset {
            carrier_hz: 73e9,
            alpha_los: 2.0,
            alpha_nlos: 3.4,
            antenna_elements: 80,
        },
    ];

    pub fn from_ghz(ghz: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.carrier_hz == ghz as f64 * 1e9)
    }

    pub fn ghz(&self) -> u32 {
        (self.carrier_hz / 1e9).round() as u32
    }

    /// Sets carrier, exponents, antenna elements and the free-space intercepts.
    pub fn apply(&self, cfg: &mut NetworkConfig) {
        cfg.carrier_hz = self.carrier_hz;
        cfg.channel.alpha_los = self.alpha_los;
        cfg.channel.alpha_nlos = self.alpha_nlos;
        cfg.antenna_elements = self.antenna_elements;
        let c = free_space_intercept(self.carrier_hz);
        cfg.channel.intercept_los = c;
        cfg.channel.intercept_nlos = c;
    }
}

pub const FIGURES: [&str; 10] = ["2a", "2b", "3a", "3b", "4a", "4b", "5a", "5b", "2a-approx", "4a-los"];

fn range(lo: u32, hi: u32) -> Vec<f64> {
    (lo..=hi).map(f64::from).collect()
}

fn db_steps(lo: i32, hi: i32, step: usize) -> Vec<f64> {
    (lo..=hi).step_by(step).map(f64::from).collect()
}

/// Built-in sweep for a figure id, applied on top of `base`.
pub fn figure(id: &str, base: &RunConfig) -> Option<SweepSpec> {
    let all = AssociationModel::ALL.to_vec();
    let uniform = vec![AssociationModel::Uniform];
    let mut spec = match id {
        "2a" => SweepSpec::new(
            Axis::MeanActive,
            range(1, 10),
            all,
            vec![Engine::Analytical, Engine::MonteCarlo(McVariant::Full)],
        )
        .with_series(vec![Series::new("", |c| {
            c.network.scatter_std = 20.0;
            c.gamma_th_db = 20.0;
        })]),
        "2a-approx" => SweepSpec::new(
            Axis::MeanActive,
            range(1, 10),
            all,
            vec![Engine::Analytical, Engine::AnalyticalApprox],
        )
        .with_series(vec![Series::new("", |c| {
            c.network.scatter_std = 20.0;
            c.gamma_th_db = 20.0;
        })]),
        "2b" => SweepSpec::new(
            Axis::GammaThDb,
            db_steps(0, 40, 5),
            uniform,
            vec![
                Engine::LowerBound,
                Engine::AnalyticalLosIntra,
                Engine::AnalyticalLosIntraApprox,
                Engine::MonteCarlo(McVariant::LosIntra),
            ],
        )
        .with_series(vec![Series::new("", |c| {
            FrequencyPreset::from_ghz(60).expect("preset").apply(&mut c.network);
            c.network.scatter_std = 10.0;
            c.network.mean_active = 10.0;
        })]),
        "3a" => SweepSpec::new(
            Axis::MeanActive,
            range(1, 10),
            uniform,
            vec![
                Engine::MonteCarlo(McVariant::IntraOnly),
                Engine::MonteCarlo(McVariant::InterOnly),
                Engine::MonteCarlo(McVariant::Full),
            ],
        )
        .with_series(
            [10.0, 20.0, 30.0]
                .map(|s| {
                    Series::new(&format!("sigma={s}"), move |c| {
                        c.network.scatter_std = s;
                        c.gamma_th_db = 10.0;
                    })
                })
                .to_vec(),
        ),
        "3b" => SweepSpec::new(
            Axis::MeanActive,
            range(1, 10),
            uniform,
            vec![
                Engine::MonteCarlo(McVariant::Full),
                Engine::MonteCarlo(McVariant::LosBall),
                Engine::MonteCarlo(McVariant::NoNoise),
            ],
        )
        .with_series(
            [10.0, 20.0]
                .map(|s| {
                    Series::new(&format!("sigma={s}"), move |c| {
                        c.network.scatter_std = s;
                        c.gamma_th_db = 10.0;
                    })
                })
                .to_vec(),
        ),
        "4a" => SweepSpec::new(
            Axis::MeanActive,
            range(1, 10),
            all,
            vec![
                Engine::MonteCarlo(McVariant::Full),
                Engine::MonteCarlo(McVariant::LosInterference),
                Engine::MonteCarlo(McVariant::NlosInterference),
                Engine::MonteCarlo(McVariant::NoInterference),
            ],
        )
        .with_series(vec![Series::new("", |c| {
            c.network.scatter_std = 20.0;
            c.gamma_th_db = 20.0;
        })]),
        "4a-los" => SweepSpec::new(
            Axis::MeanActive,
            range(1, 10),
            all,
            vec![Engine::Analytical],
        )
        .with_series(
            [30.0, 60.0, 120.0]
                .map(|d| {
                    Series::new(&format!("avg_los={d}"), move |c| {
                        c.network.scatter_std = 20.0;
                        c.network.channel.blockage_rate = pcp_mmwave::model::blockage_rate_from_avg_los(d);
                        c.gamma_th_db = 20.0;
                    })
                })
                .to_vec(),
        ),
        "4b" => SweepSpec::new(Axis::GammaThDb, db_steps(-10, 30, 5), all, vec![Engine::Analytical]).with_series(
            [(10.0, 90.0), (15.0, 90.0), (10.0, 60.0)]
                .map(|(main_db, width)| {
                    Series::new(&format!("rx={main_db}dB/{width}deg"), move |c| {
                        c.network.scatter_std = 10.0;
                        c.network.mean_active = 3.0;
                        let side = c.network.rx_pattern.side_lobe_gain;
                        c.network.rx_pattern =
                            AntennaPattern::from_db_deg(main_db, 10.0 * side.log10(), width).expect("valid pattern");
                    })
                })
                .to_vec(),
        ),
        "5a" => SweepSpec::new(Axis::MeanActive, range(1, 40), all, vec![Engine::Analytical])
            .with_quantity(Quantity::Ase)
            .with_series(vec![Series::new("", |c| c.gamma_th_db = 20.0)]),
        "5b" => {
            let mut series = Vec::new();
            for s_bar in [1.0, 3.0] {
                for p in FrequencyPreset::ALL {
                    series.push(Series::new(&format!("{}GHz/s={s_bar}", p.ghz()), move |c| {
                        p.apply(&mut c.network);
                        c.network.scatter_std = 30.0;
                        c.network.mean_active = s_bar;
                    }));
                }
            }
            SweepSpec::new(Axis::GammaThDb, db_steps(-10, 30, 5), uniform, vec![Engine::Analytical]).with_series(series)
        }
        _ => return None,
    };
    spec.base = *base;
    Some(spec)
}
