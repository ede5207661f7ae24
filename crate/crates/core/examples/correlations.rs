//! Prints ensemble correlations at a few initial incomes.
//!
//! cargo run --release --example correlations

use incomedyn::*;

fn main() -> Result<()> {
    let model = Model::new(IncomeLadder::new(10, 10.0, 1.0)?)?;
    let opts = EnsembleOptions::default();
    println!(
        "{:>6} {:>16} {:>16} {:>16} {:>16}",
        "mu0", "R_GM (income)", "R_GM", "R_Gmu", "R_Mmu"
    );
    for mu in [22.0, 24.5, 27.0, 29.5, 32.0] {
        let x0 = model.equilibrium_for_income(mu)?;
        let income = run_ensemble(&model, &x0, &SimulationConfig::default(), &opts)?;
        let pop_cfg = SimulationConfig {
            mode: ConservationMode::Population,
            ..Default::default()
        };
        let pop = run_ensemble(&model, &x0, &pop_cfg, &opts)?;
        let fmt = |s: Summary| format!("{:.3} ± {:.3}", s.mean, s.spread);
        println!(
            "{mu:>6} {:>16} {:>16} {:>16} {:>16}",
            fmt(income.r_gm),
            fmt(pop.r_gm),
            fmt(pop.r_gmu.expect("population mode")),
            fmt(pop.r_mmu.expect("population mode")),
        );
    }
    Ok(())
}
