//! Experiment runner for the income-dynamics model: configuration, presets,
//! CSV/SVG output and reproducible run manifests.

pub mod config;
pub mod output;
pub mod svg;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use incomedyn::ensemble::{EnsembleReport, SweepResult};
use incomedyn::{
    correction_matrix, gini, run_ensemble, run_trajectory, sweep_mu, ConservationMode, Model,
    SimulationConfig,
};

use config::{ConfigError, RunConfig};
use output::{num, opt, write_file, Csv, Manifest, MANIFEST_FILE};
use svg::Series;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] incomedyn::Error),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for configuration problems, 3 for everything that fails at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Model(_) | Self::Io { .. } => 3,
        }
    }
}

/// A runnable experiment, as recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
pub enum Task {
    Coefficients { matrix_a: bool },
    Equilibrate,
    Simulate,
    Ensemble,
    Sweep,
    Figures,
}

/// Fixed experiment grids behind the `figures` preset.
pub mod presets {
    pub const EQUILIBRIUM_MU: f64 = 27.0;
    pub const TRAJECTORY_MU: [f64; 3] = [24.5, 27.0, 29.5];
    pub const CORRELATION_MU: [f64; 3] = [24.5, 27.0, 29.5];
    /// Independent ensembles per table cell, with seeds `seed + k`.
    pub const REPEATS: u64 = 3;
    pub const MOBILITY_MU: [f64; 5] = [22.0, 24.5, 27.0, 29.5, 32.0];
    pub const M_PLOT_SCALE: f64 = 800.0;
    pub const MU_PLOT_SCALE: f64 = 1.0 / 80.0;
}

/// Validates `cfg`, runs `task`, writes its outputs plus `manifest.json`
/// into `cfg.output_dir`, and returns the files written (CSV, SVG, manifest).
pub fn execute(task: &Task, cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    cfg.validate()?;
    let model = cfg.model()?;
    let mut out = Outputs::new(&cfg.output_dir);
    match task {
        Task::Coefficients { matrix_a } => coefficients(&model, *matrix_a, &mut out)?,
        Task::Equilibrate => {
            equilibrate(&model, cfg.mu0, "equilibrium", &mut out)?;
        }
        Task::Simulate => {
            simulate(
                &model,
                cfg,
                cfg.mu0,
                &cfg.simulation(),
                "trajectory",
                &mut out,
            )?;
        }
        Task::Ensemble => {
            let report = ensemble_at(&model, cfg, cfg.mu0, &cfg.simulation())?;
            write_ensemble(&report, cfg, "ensemble.csv", &mut out)?;
            write_closeness(&report, "closeness.csv", &mut out)?;
            print_report(&report);
        }
        Task::Sweep => {
            let result = sweep_mu(
                &model,
                &cfg.simulation(),
                &cfg.mu_grid(),
                &cfg.ensemble_options(),
            )?;
            write_sweep(&result, "sweep", &mut out)?;
        }
        Task::Figures => figures(&model, cfg, &mut out)?,
    }
    let manifest = Manifest::new(task.clone(), cfg, out.relative());
    out.text(MANIFEST_FILE, &manifest.to_json())?;
    Ok(out.written)
}

/// Re-runs a recorded manifest, with `adjust` applied to its configuration
/// (typically a new output directory).
pub fn replay(
    path: &Path,
    adjust: impl FnOnce(&mut RunConfig) -> Result<(), ConfigError>,
) -> Result<Vec<PathBuf>, CliError> {
    let manifest = Manifest::load(path)?;
    let mut cfg = manifest.config;
    adjust(&mut cfg)?;
    execute(&manifest.task, &cfg)
}

struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_owned(),
            written: Vec::new(),
        }
    }

    fn csv(&mut self, name: &str, csv: &Csv) -> Result<(), CliError> {
        self.text(name, csv.as_str())
    }

    fn text(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        write_file(&path, contents)?;
        self.written.push(path);
        Ok(())
    }

    fn relative(&self) -> Vec<PathBuf> {
        self.written
            .iter()
            .map(|p| p.strip_prefix(&self.dir).unwrap_or(p).to_owned())
            .collect()
    }
}

fn coefficients(model: &Model, matrix_a: bool, out: &mut Outputs) -> Result<(), CliError> {
    let n = model.n();
    let mut p = Csv::with_header(&["h", "k", "p"]);
    let mut c = Csv::with_header(&["i", "h", "k", "c"]);
    for h in 0..n {
        for k in 0..n {
            p.row(&[
                (h + 1).to_string(),
                (k + 1).to_string(),
                num(model.payments.get(h, k)),
            ]);
        }
    }
    for i in 0..n {
        for h in 0..n {
            for k in 0..n {
                c.row(&[
                    (i + 1).to_string(),
                    (h + 1).to_string(),
                    (k + 1).to_string(),
                    num(model.coefficients.get(i, h, k)),
                ]);
            }
        }
    }
    out.csv("payments.csv", &p)?;
    out.csv("coefficients.csv", &c)?;
    if matrix_a {
        let a = correction_matrix(model.ladder.incomes())?;
        let mut csv = Csv::with_header(&["j", "i", "a"]);
        for j in 0..n {
            for i in 0..n {
                csv.row(&[(j + 1).to_string(), (i + 1).to_string(), num(a.get(j, i))]);
            }
        }
        out.csv("matrix_a.csv", &csv)?;
    }
    Ok(())
}

fn equilibrate(model: &Model, mu: f64, stem: &str, out: &mut Outputs) -> Result<(), CliError> {
    let x = model.equilibrium_for_income(mu)?;
    let r = model.ladder.incomes();
    let mut csv = Csv::with_header(&["i", "r", "x"]);
    for (i, (&ri, &xi)) in r.iter().zip(x.as_slice()).enumerate() {
        csv.row(&[(i + 1).to_string(), num(ri), num(xi)]);
    }
    out.csv(&format!("{stem}.csv"), &csv)?;
    let bars: Vec<(String, f64)> = x
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, v)| ((i + 1).to_string(), *v))
        .collect();
    let g = gini(&x, r)?;
    let title = format!("Stationary distribution, mu = {mu}, G = {g:.4}");
    out.text(
        &format!("{stem}.svg"),
        &svg::bar_chart(&title, "income class", "population share", &bars),
    )?;
    println!("equilibrium at mu = {mu}: G = {g:.6}");
    Ok(())
}

fn simulate(
    model: &Model,
    cfg: &RunConfig,
    mu: f64,
    sim: &SimulationConfig,
    stem: &str,
    out: &mut Outputs,
) -> Result<(), CliError> {
    let x0 = model.equilibrium_for_income(mu)?;
    let traj = run_trajectory(&x0, model, sim, 0)?;
    let n = model.n();
    let mut header = vec!["t".to_owned()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend(["G", "M", "mu"].map(String::from));
    let mut csv = Csv::with_header(&header);
    let mut series = [Vec::new(), Vec::new(), Vec::new()];
    for (t, x) in &traj.samples {
        let s = model.indicators(x, *t)?;
        let mut row = vec![num(*t)];
        row.extend(x.as_slice().iter().map(|v| num(*v)));
        row.extend([num(s.g), num(s.m), num(s.mu)]);
        csv.row(&row);
        series[0].push((*t, s.g));
        series[1].push((*t, s.m * presets::M_PLOT_SCALE));
        series[2].push((*t, s.mu * presets::MU_PLOT_SCALE));
    }
    out.csv(&format!("{stem}.csv"), &csv)?;
    let [g, m, m_u] = series;
    let plot = svg::line_chart(
        &format!("Time series from mu(0) = {mu}"),
        "t",
        "value",
        &[
            Series {
                name: "G",
                points: g,
            },
            Series {
                name: "M x 800",
                points: m,
            },
            Series {
                name: "mu / 80",
                points: m_u,
            },
        ],
    );
    out.text(&format!("{stem}.svg"), &plot)?;
    if traj.recovery_events > 0 {
        log::info!(
            "{} recovery events over {} steps",
            traj.recovery_events,
            cfg.steps
        );
    }
    Ok(())
}

fn ensemble_at(
    model: &Model,
    cfg: &RunConfig,
    mu: f64,
    sim: &SimulationConfig,
) -> Result<EnsembleReport, CliError> {
    let x0 = model.equilibrium_for_income(mu)?;
    Ok(run_ensemble(model, &x0, sim, &cfg.ensemble_options())?)
}

fn spread_label(cfg: &RunConfig) -> &'static str {
    match cfg.spread {
        incomedyn::Spread::StandardError => "se",
        incomedyn::Spread::StandardDeviation => "sd",
    }
}

fn write_ensemble(
    report: &EnsembleReport,
    cfg: &RunConfig,
    name: &str,
    out: &mut Outputs,
) -> Result<(), CliError> {
    let mut csv = Csv::with_header(&["realization", "R_GM", "R_Gmu", "R_Mmu"]);
    for s in &report.per_realization {
        csv.row(&[
            s.realization.to_string(),
            num(s.r_gm),
            opt(s.r_gmu),
            opt(s.r_mmu),
        ]);
    }
    let means = [
        Some(report.r_gm.mean),
        report.r_gmu.map(|s| s.mean),
        report.r_mmu.map(|s| s.mean),
    ];
    let spreads = [
        Some(report.r_gm.spread),
        report.r_gmu.map(|s| s.spread),
        report.r_mmu.map(|s| s.spread),
    ];
    csv.row(&[
        "mean".to_owned(),
        opt(means[0]),
        opt(means[1]),
        opt(means[2]),
    ]);
    csv.row(&[
        spread_label(cfg).to_owned(),
        opt(spreads[0]),
        opt(spreads[1]),
        opt(spreads[2]),
    ]);
    out.csv(name, &csv)
}

fn write_closeness(report: &EnsembleReport, name: &str, out: &mut Outputs) -> Result<(), CliError> {
    let c = report.mean_closeness();
    let mut csv = Csv::with_header(&["i", "x0", "abs_mean_offset", "std_dev", "relative_std_dev"]);
    for i in 0..c.mean_offset.len() {
        csv.row(&[
            (i + 1).to_string(),
            num(report.initial[i]),
            num(c.mean_offset[i]),
            num(c.std_dev[i]),
            num(c.relative_std_dev[i]),
        ]);
    }
    out.csv(name, &csv)
}

fn print_report(report: &EnsembleReport) {
    println!(
        "mu0 = {:.6}, {} realizations",
        report.mu0,
        report.per_realization.len()
    );
    println!("{}", output::summary_line("R_GM", &report.r_gm));
    if let Some(s) = &report.r_gmu {
        println!("{}", output::summary_line("R_Gmu", s));
    }
    if let Some(s) = &report.r_mmu {
        println!("{}", output::summary_line("R_Mmu", s));
    }
    if !report.failures.is_empty() {
        println!("{} realizations failed", report.failures.len());
    }
}

fn write_sweep(result: &SweepResult, stem: &str, out: &mut Outputs) -> Result<(), CliError> {
    let mut csv = Csv::with_header(&[
        "mu0", "G_eq", "R_MG", "se_MG", "R_muG", "se_muG", "R_Mmu", "se_Mmu",
    ]);
    for r in &result.rows {
        csv.row(&[
            num(r.mu0),
            num(r.g_eq),
            num(r.r_mg.mean),
            num(r.r_mg.spread),
            num(r.r_mug.mean),
            num(r.r_mug.spread),
            num(r.r_mmu.mean),
            num(r.r_mmu.spread),
        ]);
    }
    out.csv(&format!("{stem}.csv"), &csv)?;
    let curve = |f: fn(&incomedyn::SweepRow) -> f64| {
        result
            .rows
            .iter()
            .map(|r| (r.g_eq, f(r)))
            .collect::<Vec<_>>()
    };
    let vs_g = svg::line_chart(
        "Correlations with inequality",
        "G",
        "correlation",
        &[
            Series {
                name: "R_MG",
                points: curve(|r| r.r_mg.mean),
            },
            Series {
                name: "R_muG",
                points: curve(|r| r.r_mug.mean),
            },
        ],
    );
    out.text(&format!("{stem}_r_g.svg"), &vs_g)?;
    let mobility = svg::line_chart(
        "Mobility and total income",
        "G",
        "R_Mmu",
        &[Series {
            name: "R_Mmu",
            points: curve(|r| r.r_mmu.mean),
        }],
    );
    out.text(&format!("{stem}_r_mmu.svg"), &mobility)?;
    for (label, zeros) in [
        ("R_MG", result.sign_changes(|r| r.r_mg.mean)),
        ("R_muG", result.sign_changes(|r| r.r_mug.mean)),
    ] {
        let at: Vec<String> = zeros.iter().map(|g| format!("{g:.4}")).collect();
        println!("{label} changes sign at G = [{}]", at.join(", "));
    }
    Ok(())
}

/// All tables and figures in one go.
fn figures(model: &Model, cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    use presets::*;
    let base = cfg.simulation();
    let income = SimulationConfig {
        mode: ConservationMode::PopulationAndIncome,
        ..base.clone()
    };
    let population = SimulationConfig {
        mode: ConservationMode::Population,
        ..base.clone()
    };

    equilibrate(
        model,
        EQUILIBRIUM_MU,
        &format!("equilibrium_mu{EQUILIBRIUM_MU}"),
        out,
    )?;
    for mu in TRAJECTORY_MU {
        simulate(
            model,
            cfg,
            mu,
            &population,
            &format!("trajectory_mu{mu}"),
            out,
        )?;
    }

    let label = spread_label(cfg);
    let mut income_tab = Csv::with_header(&[
        "mu0".to_owned(),
        "seed".into(),
        "R_GM".into(),
        format!("{label}_GM"),
    ]);
    let mut population_tab = Csv::with_header(&[
        "mu0".to_owned(),
        "seed".into(),
        "R_GM".into(),
        format!("{label}_GM"),
        "R_Gmu".into(),
        format!("{label}_Gmu"),
    ]);
    for mu in CORRELATION_MU {
        for k in 0..REPEATS {
            let seed = cfg.seed + k;
            let rep = ensemble_at(
                model,
                cfg,
                mu,
                &SimulationConfig {
                    seed,
                    ..income.clone()
                },
            )?;
            income_tab.row(&[
                num(mu),
                seed.to_string(),
                num(rep.r_gm.mean),
                num(rep.r_gm.spread),
            ]);
            if mu == EQUILIBRIUM_MU && k == 0 {
                write_closeness(&rep, &format!("closeness_mu{mu}.csv"), out)?;
            }
            let rep = ensemble_at(
                model,
                cfg,
                mu,
                &SimulationConfig {
                    seed,
                    ..population.clone()
                },
            )?;
            let gmu = rep.r_gmu.expect("population mode");
            population_tab.row(&[
                num(mu),
                seed.to_string(),
                num(rep.r_gm.mean),
                num(rep.r_gm.spread),
                num(gmu.mean),
                num(gmu.spread),
            ]);
        }
    }
    out.csv("r_gm_income_conserving.csv", &income_tab)?;
    out.csv("r_gm_gmu_population.csv", &population_tab)?;

    let mut mobility_tab =
        Csv::with_header(&["mu0".to_owned(), "R_Mmu".into(), format!("{label}_Mmu")]);
    for mu in MOBILITY_MU {
        let rep = ensemble_at(model, cfg, mu, &population)?;
        let mmu = rep.r_mmu.expect("population mode");
        mobility_tab.row(&[num(mu), num(mmu.mean), num(mmu.spread)]);
    }
    out.csv("r_mmu_population.csv", &mobility_tab)?;

    let result = sweep_mu(model, &population, &cfg.mu_grid(), &cfg.ensemble_options())?;
    write_sweep(&result, "sweep", out)?;
    Ok(())
}
