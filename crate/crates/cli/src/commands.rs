use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use guild_core::bench::{
    optimal_cost_reference, run_trial_observed, run_trials, sample_grid, summarize, write_results,
    write_summary, write_timings, HeatmapGrid,
};
use guild_core::environments::{make_environment, EnvKind, Environment};
use guild_core::planner::Planner;

use crate::config::RunConfig;

/// First graph vertex that is a drawn sample: after start, target and the
/// beacons other than the start.
fn first_sample_vertex(beacons: usize) -> u32 {
    (2 + beacons.saturating_sub(1)) as u32
}

fn snapshot(planner: &Planner<'_>, env: &Environment, first: u32, resolution: usize, path: &Path) -> Result<()> {
    let lower = env.space.lower_bounds();
    let upper = env.space.upper_bounds();
    let mut grid = HeatmapGrid::new(resolution, [lower[0], lower[1]], [upper[0], upper[1]])?;
    for id in first..planner.graph().len() as u32 {
        let p = planner.graph().vertex(id);
        grid.add(p[0], p[1]);
    }
    guild_core::bench::render_heatmap(&grid, path)?;
    Ok(())
}

/// One trial; `force_heatmap` turns snapshots on regardless of the config.
pub fn run(config: &RunConfig, force_heatmap: bool) -> Result<ExitCode> {
    config.validate()?;
    let env = config.load_environment()?;
    let selector = config.selector_kind()?;
    let spec = config.trial_spec(selector);
    let heatmap = force_heatmap || config.output.heatmap;
    if heatmap && env.space.translational_dimension() != 2 {
        bail!(
            "heatmaps need a planar environment, `{}` has {} translational dimensions",
            env.name,
            env.space.translational_dimension()
        );
    }
    let dir = &config.output.directory;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;

    let stdout = io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "iteration,samples,cost")?;
    let mut last_cost = f64::INFINITY;
    let mut next_snapshot = config.output.snapshot_every;
    let mut failure: Option<anyhow::Error> = None;
    let record = run_trial_observed(&env, &spec, config.planner.seed, None, |planner, sampler, report| {
        if report.best_cost < last_cost {
            last_cost = report.best_cost;
            let _ = writeln!(out, "{},{},{}", report.iteration, report.samples_drawn, report.best_cost);
        }
        if heatmap && failure.is_none() {
            let first = first_sample_vertex(sampler.beacons().len());
            while report.samples_drawn >= next_snapshot {
                let path = dir.join(format!("heatmap-{next_snapshot:06}.ppm"));
                if let Err(e) = snapshot(planner, &env, first, config.output.heatmap_resolution, &path) {
                    failure = Some(e);
                    break;
                }
                next_snapshot += config.output.snapshot_every;
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let path = dir.join("results.csv");
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    write_results(BufWriter::new(file), std::slice::from_ref(&record))?;
    if record.final_cost().is_finite() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("no solution within the budget");
        Ok(ExitCode::from(2))
    }
}

pub fn bench(config: &RunConfig) -> Result<ExitCode> {
    config.validate()?;
    let env = config.load_environment()?;
    let selectors = config.selector_kinds()?;
    let dir = &config.output.directory;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let reference = optimal_cost_reference(&env, config.bench.reference_seconds, Some(&dir.join("reference-cache")))
        .context("computing the reference cost")?;
    log::info!("reference cost for {}: {reference}", env.name);

    let grid = sample_grid(config.bench.grid_step, config.planner.sample_budget);
    let mut all = Vec::new();
    let mut summaries = Vec::new();
    for &selector in &selectors {
        let spec = config.trial_spec(selector);
        let trials = run_trials(&env, &spec, config.bench.trials, Some(reference), config.bench.threads)?;
        summaries.push(summarize(&trials, &grid)?);
        all.extend(trials);
    }
    write_results(BufWriter::new(File::create(dir.join("results.csv"))?), &all)?;
    write_timings(BufWriter::new(File::create(dir.join("timings.csv"))?), &all)?;
    write_summary(BufWriter::new(File::create(dir.join("summary.csv"))?), &summaries, &grid)?;

    println!("{} (reference cost {reference})", env.name);
    println!("{:<12} {:>9} {:>14} {:>20}", "selector", "converged", "median samples", "95% CI");
    for s in &summaries {
        let ci = s.ci.map_or_else(|| "-".to_string(), |(lo, hi)| format!("({lo}, {hi})"));
        let converged = format!("{}/{}", s.converged, s.trials);
        println!("{:<12} {:>9} {:>14} {:>20}", s.selector, converged, s.median_efficiency, ci);
    }
    Ok(ExitCode::SUCCESS)
}

pub fn env(name: &str, seed: u64, out: &Path) -> Result<ExitCode> {
    let kind = EnvKind::from_str(name)?;
    let env = make_environment(kind, seed)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    env.save(out).with_context(|| format!("writing {}", out.display()))?;
    Ok(ExitCode::SUCCESS)
}
