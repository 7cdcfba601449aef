use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use orlicz_core::checks;
use orlicz_core::conjugate::{ConjugateError, SobolevConjugate};
use orlicz_core::nfunction::NFunction;
use orlicz_core::solver::{self, AuditConfig, CriticalGrowth, PowerGrowth, SolveReport};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::{Cli, Command};

/// Malformed command line or config.
pub const EXIT_USAGE: u8 = 64;
/// Config parsed but describes an invalid problem.
pub const EXIT_DATA: u8 = 65;
pub const EXIT_IO: u8 = 74;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Config { path: PathBuf, source: ConfigError },
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => EXIT_USAGE,
            CliError::Invalid(_) => EXIT_DATA,
            CliError::Io { .. } => EXIT_IO,
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn load(path: &Path, cli: &Cli) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut config = RunConfig::parse(&text).map_err(|source| CliError::Config {
        path: path.to_path_buf(),
        source,
    })?;
    if let Some(seed) = cli.seed {
        config.solver.seed = seed;
    }
    if let Some(n) = cli.max_iter {
        config.solver.max_iter = n;
    }
    if let Some(tol) = cli.tol {
        if tol.is_nan() || tol <= 0.0 {
            return Err(invalid("--tol must be positive"));
        }
        config.solver.tol = tol;
    }
    Ok(config)
}

fn out_dir(cli: &Cli, config: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = cli
        .out_dir
        .clone()
        .or_else(|| config.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    Ok(dir)
}

fn write_file(dir: &Path, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(io_err(&path))?;
    let mut w = BufWriter::new(file);
    body(&mut w).and_then(|_| w.flush()).map_err(io_err(&path))?;
    Ok(path)
}

fn conjugate(nf: &NFunction, config: &RunConfig) -> Result<Option<SobolevConjugate>, ConjugateError> {
    config.phi.dimension.map(|n| SobolevConjugate::new(nf, n)).transpose()
}

pub fn run(cli: &Cli) -> Result<u8, CliError> {
    match &cli.command {
        Command::Inspect { config } => inspect(cli, &load(config, cli)?),
        Command::Solve { config } => solve(cli, &load(config, cli)?),
        Command::Check { config } => check(cli, &load(config, cli)?),
    }
}

fn csv_value(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

fn inspect(cli: &Cli, config: &RunConfig) -> Result<u8, CliError> {
    let nf = config.nfunction().map_err(invalid)?;
    let sc = conjugate(&nf, config).map_err(invalid)?;
    let dir = out_dir(cli, config)?;
    let path = write_file(&dir, "nfun.csv", |w| {
        writeln!(w, "t,phi,Phi,Phi_tilde,Phi_star")?;
        for &t in nf.probe_grid() {
            let star = sc.as_ref().and_then(|sc| sc.eval(t).ok());
            writeln!(
                w,
                "{t:e},{:e},{},{},{}",
                nf.phi(t),
                csv_value(nf.potential(t).ok()),
                csv_value(nf.complementary(t).ok()),
                csv_value(star)
            )?;
        }
        Ok(())
    })?;
    if !cli.quiet {
        let (qlo, qhi) = nf.quotient_range();
        println!("phi      {}", nf.name());
        println!("ell      {}", nf.ell());
        println!("m        {}", nf.em());
        println!("quotient [{qlo}, {qhi}] on {} probe points", nf.probe_grid().len());
        println!("K        {}", nf.delta2_constant());
        if let Some(sc) = &sc {
            println!("N        {}", sc.dimension());
            println!("ell*     {}", sc.ell_star());
            println!("m*       {}", sc.em_star());
        }
        println!("wrote {}", path.display());
    }
    Ok(0)
}

fn audit(config: &RunConfig, spec: &solver::ProblemSpec, nf: &NFunction) -> Result<Vec<solver::GrowthViolation>, CliError> {
    let r = &spec.reaction;
    if r.potential_bound.is_none() && r.critical_bound.is_none() && config.reaction.a_infinity.is_none() {
        return Ok(Vec::new());
    }
    let centroids = spec.mesh.centroids();
    let stride = (centroids.len() / 16).max(1);
    let points: Vec<[f64; 2]> = centroids.iter().step_by(stride).copied().collect();
    let cfg = AuditConfig {
        seed: config.solver.seed,
        ..AuditConfig::new(points, spec.ell)
    };
    let sc;
    let critical: &dyn CriticalGrowth = if r.critical_bound.is_some() {
        let n = config
            .phi
            .dimension
            .ok_or_else(|| invalid("a critical growth bound needs 'dimension' in [phi]"))?;
        sc = SobolevConjugate::new(nf, n).map_err(invalid)?;
        &sc
    } else {
        &PowerGrowth { exponent: 0.0 }
    };
    Ok(solver::growth_audit(r, &cfg, critical))
}

fn write_solution(dir: &Path, report: &SolveReport) -> Result<Vec<PathBuf>, CliError> {
    let mesh = report.minimizer.mesh().clone();
    Ok(vec![
        write_file(dir, "solution.csv", |w| report.minimizer.write_csv(w))?,
        write_file(dir, "trace.csv", |w| report.write_trace_csv(w))?,
        write_file(dir, "report.json", |w| writeln!(w, "{}", report.to_json()))?,
        write_file(dir, "mesh_vertices.csv", |w| mesh.write_vertices_csv(w))?,
        write_file(dir, "mesh_triangles.csv", |w| mesh.write_triangles_csv(w))?,
    ])
}

fn solve(cli: &Cli, config: &RunConfig) -> Result<u8, CliError> {
    let nf = config.nfunction().map_err(invalid)?;
    let mesh = config.mesh().map_err(invalid)?;
    let spec = config.problem(nf.clone(), mesh);
    let centroids = spec.mesh.centroids();
    let probes: Vec<[f64; 2]> = centroids.iter().step_by((centroids.len() / 8).max(1)).copied().collect();
    spec.reaction.validate(&probes).map_err(invalid)?;
    let violations = audit(config, &spec, &nf)?;
    let mut report = solver::minimize(&spec).map_err(invalid)?;
    report.growth_violations = violations;
    let dir = out_dir(cli, config)?;
    let mut written = write_solution(&dir, &report)?;
    // The effective config, with command-line overrides applied.
    written.push(write_file(&dir, "config.ini", |w| w.write_all(config.to_ini().as_bytes()))?);
    if !cli.quiet {
        println!("status      {:?}", report.status);
        println!("iterations  {}", report.iterations);
        println!("energy      {}", report.final_energy().unwrap_or(f64::NAN));
        println!("residual    {:e}", report.residual_norm);
        if let Some(q) = report.coercivity_estimate {
            println!("coercivity  {q} (upper bound on the discrete infimum)");
        }
        if !report.growth_violations.is_empty() {
            println!("growth      {} declared-bound violations", report.growth_violations.len());
        }
        for p in written {
            println!("wrote {}", p.display());
        }
    }
    Ok(report.status.exit_code())
}

fn check(cli: &Cli, config: &RunConfig) -> Result<u8, CliError> {
    let nf = config.nfunction().map_err(invalid)?;
    let sc = conjugate(&nf, config).map_err(invalid)?;
    let results = checks::run_all(&nf, sc.as_ref(), &config.check_config());
    let all = results.iter().all(|r| r.passed);
    if !cli.quiet || !all {
        for r in &results {
            println!(
                "{} {:<24} samples={:<6} worst={:e} {}",
                if r.passed { "PASS" } else { "FAIL" },
                r.name,
                r.samples,
                r.worst,
                r.detail
            );
        }
    }
    Ok(if all { 0 } else { 1 })
}
