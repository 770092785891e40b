use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use viscous_shock::kernel_quadrature::{run_certificates, CertifyOptions};
use viscous_shock::pipeline::{
    emit_plots, kernel_setup, run_pipeline, run_profile, write_manifest, write_profile, write_run,
    ExperimentConfig,
};
use viscous_shock::{Error, Result};

#[derive(Parser)]
#[command(name = "shock", version, about = "Viscous shock stability experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the traveling-wave profile and report its residual and decay rate.
    Profile(Common),
    /// Run the perturbed evolution and write trajectories.
    Evolve(Common),
    /// Run the evolution and gate on the verification report.
    Verify(Common),
    /// Evaluate the kernel inequality certificates.
    Certify(Common),
    /// Turn a run directory into gnuplot-ready data.
    Plot(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration: burgers or psystem.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory (for `plot`, the run directory to read).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Comma-separated certificate ids (certify only).
    #[arg(long, value_delimiter = ',')]
    ids: Vec<String>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::load(path),
            (None, Some(name)) => ExperimentConfig::preset(name),
            (None, None) => Err(Error::InvalidConfig(
                "one of --config or --preset is required".into(),
            )),
        }
    }

    fn out_dir(&self, cfg: &ExperimentConfig) -> PathBuf {
        cfg.output
            .clone()
            .filter(|_| self.out == Path::new("out"))
            .unwrap_or_else(|| self.out.clone())
    }
}

/// Gate outcome of a successful run.
enum Outcome {
    Pass,
    Fail,
}

fn profile(args: &Common) -> Result<Outcome> {
    let cfg = args.config()?;
    let (profile, summary) = run_profile(&cfg)?;
    let dir = args.out_dir(&cfg);
    write_profile(&profile, &summary, &dir)?;
    println!(
        "{}: decay rate {:.6}, ODE residual {:.3e} -> {}",
        summary.model,
        summary.decay_rate,
        summary.ode_residual,
        dir.display()
    );
    Ok(if summary.pass {
        Outcome::Pass
    } else {
        Outcome::Fail
    })
}

fn evolve(args: &Common, gate: bool) -> Result<Outcome> {
    let cfg = args.config()?;
    let out = run_pipeline(&cfg)?;
    let dir = args.out_dir(&cfg);
    write_run(&out, &dir)?;
    let r = &out.report;
    for c in &r.verification.rates {
        println!(
            "{:?}: slope {:+.4} (prediction {:+.2}) {}",
            c.norm,
            c.fit.slope,
            c.prediction,
            if c.pass { "ok" } else { "FAIL" }
        );
    }
    println!(
        "pointwise ratio {} derivative {} shift {} mass {} -> {}",
        ok(r.verification.pointwise_pass),
        ok(r.verification.derivative_pass),
        ok(r.verification.shift.pass),
        ok(r.mass_pass),
        dir.display()
    );
    Ok(if !gate || r.pass {
        Outcome::Pass
    } else {
        Outcome::Fail
    })
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAIL"
    }
}

fn certify(args: &Common) -> Result<Outcome> {
    let cfg = match (&args.config, &args.preset) {
        (None, None) => ExperimentConfig::preset("psystem")?,
        _ => args.config()?,
    };
    let setup = kernel_setup(&cfg)?;
    let certs = run_certificates(&setup, &args.ids, &CertifyOptions::default())?;
    std::fs::create_dir_all(&args.out)?;
    let mut files = Vec::new();
    for c in &certs {
        c.write(&args.out)?;
        let stem = format!("cert_{}", c.id.replace('.', "_"));
        files.push(format!("{stem}.json"));
        files.push(format!("{stem}.csv"));
        for row in &c.rows {
            println!(
                "{:<14} sup {:>10.4e} refinement {:>6.2}% {}",
                row.label,
                row.sup_ratio,
                100.0 * row.refinement_change,
                ok(row.pass)
            );
        }
    }
    write_manifest(&args.out, &cfg.hash(), files)?;
    Ok(if certs.iter().all(|c| c.pass) {
        Outcome::Pass
    } else {
        Outcome::Fail
    })
}

fn plot(args: &Common) -> Result<Outcome> {
    let set = emit_plots(&args.out, &args.out.join("plots"))?;
    for w in &set.warnings {
        eprintln!("warning: {w}");
    }
    for f in &set.files {
        println!("{}", f.display());
    }
    Ok(Outcome::Pass)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let args = match &cli.command {
        Command::Profile(a)
        | Command::Evolve(a)
        | Command::Verify(a)
        | Command::Certify(a)
        | Command::Plot(a) => a.clone(),
    };
    if let Some(k) = args.threads {
        if k == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Profile(_) => profile(&args),
        Command::Evolve(_) => evolve(&args, false),
        Command::Verify(_) => evolve(&args, true),
        Command::Certify(_) => certify(&args),
        Command::Plot(_) => plot(&args),
    };
    match result {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.class().exit_code() as u8)
        }
    }
}
