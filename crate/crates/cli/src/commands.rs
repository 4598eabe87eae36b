use std::time::Instant;

use mfopt::forward::solve_forward;
use mfopt::models::{histogram, l1_distance, simulate_particles, ParticleConfig};
use mfopt::optimizer::optimize;
use mfopt::problem::{Problem, TrajectoryField};
use mfopt::study::{convergence_study_with_observer, StudyConfig};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{
    ensure_dir, sci, write_convergence, write_field, write_functional, write_profile, write_summary,
};

fn problem(cfg: &RunConfig) -> Result<Problem, CliError> {
    Ok(Problem::new(cfg.model(), cfg.n)?)
}

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let p = problem(cfg)?;
    let tg = p.time_grid(cfg.m)?;
    let start = Instant::now();
    let result = optimize(&p, &cfg.descent(), TrajectoryField::zeros(p.grid(), &tg))?;
    let wall = start.elapsed().as_secs_f64();

    ensure_dir(&cfg.out)?;
    write_field(&cfg.out.join("density.csv"), &result.rho)?;
    write_field(&cfg.out.join("control.csv"), &result.u)?;
    write_field(&cfg.out.join("adjoint.csv"), &result.psi)?;
    write_functional(&cfg.out.join("functional.csv"), &result.j_trace)?;
    write_summary(
        &cfg.out.join("run_summary.txt"),
        &[
            ("preset", cfg.preset.to_string()),
            ("n", cfg.n.to_string()),
            ("m", cfg.m.to_string()),
            ("T", cfg.horizon.to_string()),
            ("iterations", result.iterations.to_string()),
            ("final_J", sci(result.final_cost())),
            ("converged", result.converged.to_string()),
            ("termination", format!("{:?}", result.termination)),
            ("wall_time_s", format!("{wall:.3}")),
        ],
    )?;
    println!(
        "{}: J = {:.6} after {} iterations ({:?}, {wall:.1} s)",
        cfg.preset,
        result.final_cost(),
        result.iterations,
        result.termination
    );
    Ok(())
}

pub fn converge(cfg: &RunConfig) -> Result<(), CliError> {
    let p = problem(cfg)?;
    let study = StudyConfig {
        steps: cfg.m_list.clone(),
        reference_factor: cfg.ref_factor,
        descent: cfg.descent(),
    };
    let report = convergence_study_with_observer(&p, &study, |m, r| {
        eprintln!(
            "m = {m}: J = {:.6}, {} iterations",
            r.final_cost(),
            r.iterations
        );
    })?;

    ensure_dir(&cfg.out)?;
    write_convergence(&cfg.out.join("convergence.csv"), &report)?;
    let order = |o: Option<f64>| o.map_or_else(|| "none".to_string(), |v| format!("{v:.4}"));
    write_summary(
        &cfg.out.join("convergence_summary.txt"),
        &[
            ("preset", cfg.preset.to_string()),
            ("n", cfg.n.to_string()),
            ("T", cfg.horizon.to_string()),
            ("reference_m", report.reference_steps.to_string()),
            ("order_rho_T", order(report.order_rho)),
            ("order_psi_0", order(report.order_psi)),
        ],
    )?;
    for r in &report.rows {
        println!(
            "m = {:4}  err rho(T) = {:.4e}  err psi(0) = {:.4e}",
            r.steps, r.err_rho, r.err_psi
        );
    }
    println!(
        "observed order: rho {}, psi {}",
        order(report.order_rho),
        order(report.order_psi)
    );
    Ok(())
}

pub fn particles(cfg: &RunConfig) -> Result<(), CliError> {
    let model = cfg.model();
    if !model.zero_flux() {
        return Err(CliError::Config(format!(
            "particle validation needs a zero-flux preset; {} has exits",
            cfg.preset
        )));
    }
    let p = problem(cfg)?;
    let tg = p.time_grid(cfg.m)?;
    let pde = solve_forward(
        &p,
        &cfg.phi(),
        &TrajectoryField::zeros(p.grid(), &tg),
        p.rho0().view(),
    )?;
    let ensemble = simulate_particles(
        &model,
        &ParticleConfig {
            count: cfg.agents,
            steps: cfg.m,
            horizon: cfg.horizon,
            seed: cfg.seed,
        },
    )?;
    let empirical = histogram(p.grid(), &ensemble.positions);
    let l1 = l1_distance(p.grid(), empirical.view(), pde.last());

    ensure_dir(&cfg.out)?;
    write_profile(
        &cfg.out.join("particles.csv"),
        p.grid().nodes().view(),
        empirical.view(),
    )?;
    write_summary(
        &cfg.out.join("particles_summary.txt"),
        &[
            ("preset", cfg.preset.to_string()),
            ("agents", cfg.agents.to_string()),
            ("seed", cfg.seed.to_string()),
            ("n", cfg.n.to_string()),
            ("m", cfg.m.to_string()),
            ("T", cfg.horizon.to_string()),
            ("l1_distance", sci(l1)),
        ],
    )?;
    println!(
        "L1 distance to the PDE density at T = {}: {l1:.4e}",
        cfg.horizon
    );
    Ok(())
}
