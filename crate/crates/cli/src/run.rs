//! Command execution.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use twostep::bandwidth::cross_validate;
use twostep::estimators::{
    matching_estimate, ols_no_correction, selection_estimate, EstimateReport, MatchingSample,
    SelectionSample,
};
use twostep::montecarlo::{
    bahadur_check, generate, run_table, selection_bandwidths, theorem1_gap, Arm, BahadurRow,
    BandwidthPolicy, DgpSpec, GapRow, McConfig, McResult,
};
use twostep::rank::{ranks, IndexValues};
use twostep::snn::Conditioning;
use twostep::{max_score, probit_mle, IndexFit, Kernel, SearchConfig};

use crate::config::{Command, FirstStage, RunConfig};
use crate::data::{load_csv, write_selection_csv, Sample};
use crate::{usage, Result};

/// One second-stage fit in an estimation run.
#[derive(Debug, Clone)]
pub struct EstimateRow {
    /// First-stage label, or `ols` for the uncorrected regression.
    pub method: String,
    pub report: EstimateReport,
}

#[derive(Debug, Clone)]
pub enum Outcome {
    Table(Vec<McResult>),
    Coverage(Vec<McResult>),
    Gap {
        compare: Arm,
        seed: u64,
        rows: Vec<(DgpSpec, Vec<GapRow>)>,
    },
    Bahadur {
        seed: u64,
        rows: Vec<BahadurRow>,
    },
    Estimates {
        matching: bool,
        n: usize,
        selected: usize,
        terms: Vec<String>,
        rows: Vec<EstimateRow>,
        warnings: Vec<String>,
    },
    Generated {
        path: PathBuf,
        n: usize,
        selected: usize,
    },
}

fn specs(cfg: &RunConfig) -> Result<Vec<DgpSpec>> {
    let mut out = Vec::new();
    for &family in &cfg.families {
        for &k in &cfg.ks {
            for &n in &cfg.ns {
                out.push(DgpSpec::new(family, k, n)?);
            }
        }
    }
    Ok(out)
}

fn search(cfg: &RunConfig) -> SearchConfig {
    SearchConfig {
        n_starts: cfg.n_starts,
        seed: cfg.seed.unwrap_or(SearchConfig::default().seed),
        ..SearchConfig::default()
    }
}

fn mc_config(cfg: &RunConfig) -> McConfig {
    McConfig {
        bandwidth: cfg.bandwidth,
        search: search(cfg),
        kernel: Kernel::Quartic,
    }
}

pub fn execute(cfg: &RunConfig) -> Result<Outcome> {
    let seed = cfg.seed;
    match cfg.command {
        Command::McTable | Command::McCoverage => {
            let results = run_table(&specs(cfg)?, &cfg.arms, cfg.reps, seed.unwrap(), &mc_config(cfg))?;
            Ok(if cfg.command == Command::McTable {
                Outcome::Table(results)
            } else {
                Outcome::Coverage(results)
            })
        }
        Command::Theorem1Gap => {
            let mut rows = Vec::new();
            for &family in &cfg.families {
                for &k in &cfg.ks {
                    let spec = DgpSpec::new(family, k, cfg.ns[0])?;
                    let r = theorem1_gap(&spec, &cfg.ns, cfg.reps, seed.unwrap(), cfg.compare, &mc_config(cfg))?;
                    rows.push((spec, r));
                }
            }
            Ok(Outcome::Gap {
                compare: cfg.compare,
                seed: seed.unwrap(),
                rows,
            })
        }
        Command::Bahadur => {
            let h = match cfg.bandwidth {
                BandwidthPolicy::Fixed(h) => Some(h),
                BandwidthPolicy::Cv { .. } => None,
            };
            let rows = cfg
                .ns
                .iter()
                .map(|&n| bahadur_check(n, cfg.reps, h, seed.unwrap()))
                .collect::<twostep::Result<Vec<_>>>()?;
            Ok(Outcome::Bahadur {
                seed: seed.unwrap(),
                rows,
            })
        }
        Command::Generate => {
            let spec = specs(cfg)?.remove(0);
            let s = generate(&spec, seed.unwrap());
            let path = cfg.output.clone().unwrap();
            let mut w = BufWriter::new(File::create(&path)?);
            write_selection_csv(&s, &mut w)?;
            Ok(Outcome::Generated {
                path,
                n: s.len(),
                selected: s.selected(),
            })
        }
        Command::EstimateSelection | Command::EstimateMatching => {
            let loaded = load_csv(cfg.input.as_ref().unwrap(), &cfg.roles)?;
            match loaded.sample {
                Sample::Selection(s) => {
                    let mut rows = Vec::new();
                    for stage in &cfg.first_stages {
                        rows.push(selection_row(cfg, &s, stage)?);
                    }
                    rows.push(EstimateRow {
                        method: "ols".into(),
                        report: ols_no_correction(&s)?,
                    });
                    Ok(Outcome::Estimates {
                        matching: false,
                        n: s.len(),
                        selected: s.selected(),
                        terms: cfg.roles.z.clone(),
                        rows,
                        warnings: loaded.warnings,
                    })
                }
                Sample::Matching(s) => {
                    let rows = cfg
                        .first_stages
                        .iter()
                        .map(|stage| matching_row(cfg, &s, stage))
                        .collect::<Result<Vec<_>>>()?;
                    Ok(Outcome::Estimates {
                        matching: true,
                        n: s.y.len(),
                        selected: s.z.iter().filter(|&&t| t).count(),
                        terms: vec!["att".into()],
                        rows,
                        warnings: loaded.warnings,
                    })
                }
            }
        }
    }
}

fn first_stage(
    cfg: &RunConfig,
    stage: &FirstStage,
    x: &nalgebra::DMatrix<f64>,
    d: &[bool],
) -> Result<IndexFit> {
    Ok(match stage {
        FirstStage::MaxScore => max_score(x, d, &search(cfg))?,
        FirstStage::Probit => probit_mle(x, d)?,
        FirstStage::Fixed(v) => {
            if v.len() != x.ncols() {
                return usage(format!(
                    "fixed first stage has {} values but there are {} x columns",
                    v.len(),
                    x.ncols()
                ));
            }
            IndexFit::fixed(v)?
        }
    })
}

fn selection_row(cfg: &RunConfig, s: &SelectionSample, stage: &FirstStage) -> Result<EstimateRow> {
    let theta = first_stage(cfg, stage, &s.x, &s.d)?;
    let (h_y, h_z) = selection_bandwidths(s, &theta, cfg.bandwidth, Kernel::Quartic)?;
    Ok(EstimateRow {
        method: stage.label(),
        report: selection_estimate(s, &theta, h_y, &h_z)?,
    })
}

/// Cross-validated bandwidth of the untreated outcome regression, shared by
/// the three SNN fits of the matching estimator.
fn matching_bandwidth(cfg: &RunConfig, s: &MatchingSample, theta: &IndexFit) -> Result<f64> {
    match cfg.bandwidth {
        BandwidthPolicy::Fixed(h) => Ok(h),
        BandwidthPolicy::Cv { grid } => {
            let u = ranks(&IndexValues::from_design(&s.x, &theta.theta)?);
            let cond = Conditioning::new(s.z.clone(), false);
            Ok(cross_validate(&u, &s.y, Some(&cond), Kernel::Quartic, grid)?.h_star)
        }
    }
}

fn matching_row(cfg: &RunConfig, s: &MatchingSample, stage: &FirstStage) -> Result<EstimateRow> {
    let theta = first_stage(cfg, stage, &s.x, &s.z)?;
    let h = matching_bandwidth(cfg, s, &theta)?;
    Ok(EstimateRow {
        method: stage.label(),
        report: matching_estimate(s, &theta, h, cfg.trim)?,
    })
}
