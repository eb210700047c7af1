use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use loglip_cli::{resolve_out_dir, run, validate, CliError, Manifest};

#[derive(Parser)]
#[command(name = "loglip", version, about = "Run loglip experiments from JSON manifests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Path to the JSON manifest.
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory. Defaults to $LOGLIP_OUT_DIR, then the manifest's
    /// `output_dir`, then `loglip-out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on this value.
    #[arg(long)]
    threads: Option<usize>,
    /// Validate the manifest and exit without computing.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Euler–Maruyama trajectory.
    Simulate(RunArgs),
    /// Skeleton ODE for a control, optionally with its Euler polygon.
    Skeleton(RunArgs),
    /// Uniform convergence of Euler polygons over sampled controls.
    Converge(RunArgs),
    /// Hitting times of growing radii and explosion verdict.
    Lifetime(RunArgs),
    /// Sensitivity to the initial point for coupled runs.
    Stability(RunArgs),
    /// Rate functional by penalized action minimization.
    Rate(RunArgs),
    /// Monte Carlo ε log P against the rate functional.
    Ldp(RunArgs),
    /// Exceedance probabilities between Euler and a refined reference.
    Closeness(RunArgs),
    /// Integral test for growth profiles.
    Osgood(RunArgs),
    /// Sine-series modulus bound on a θ grid.
    #[command(aliases = ["sine_bound", "lemma24"])]
    SineBound(RunArgs),
}

impl Command {
    fn parts(&self) -> (&'static str, &RunArgs) {
        match self {
            Command::Simulate(a) => ("simulate", a),
            Command::Skeleton(a) => ("skeleton", a),
            Command::Converge(a) => ("converge", a),
            Command::Lifetime(a) => ("lifetime", a),
            Command::Stability(a) => ("stability", a),
            Command::Rate(a) => ("rate", a),
            Command::Ldp(a) => ("ldp", a),
            Command::Closeness(a) => ("closeness", a),
            Command::Osgood(a) => ("osgood", a),
            Command::SineBound(a) => ("sine_bound", a),
        }
    }
}

fn fail(e: &CliError, digest: Option<&str>, out: Option<&std::path::Path>) -> ExitCode {
    let diag = e.diagnostic(digest);
    let text = serde_json::to_string_pretty(&diag).expect("diagnostic serializes");
    eprintln!("{text}");
    if let Some(dir) = out {
        if std::fs::create_dir_all(dir).is_ok() {
            let _ = std::fs::write(dir.join("diagnostic.json"), format!("{text}\n"));
        }
    }
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = cli.command.parts();
    let text = match std::fs::read_to_string(&args.manifest) {
        Ok(t) => t,
        Err(e) => {
            let err = CliError::Validation(format!("cannot read {}: {e}", args.manifest.display()));
            return fail(&err, None, None);
        }
    };
    let manifest = match Manifest::from_json(&text) {
        Ok(m) => m,
        Err(e) => return fail(&e, None, None),
    };
    let digest = manifest.digest();
    if manifest.experiment.kind() != kind {
        let err = CliError::Validation(format!(
            "manifest describes a `{}` experiment, not `{kind}`",
            manifest.experiment.kind()
        ));
        return fail(&err, Some(&digest), None);
    }
    if args.dry_run {
        return match validate(&manifest) {
            Ok(()) => {
                println!("{}", serde_json::json!({"status": "valid", "manifest_sha256": digest}));
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e, Some(&digest), None),
        };
    }
    if let Some(k) = args.threads {
        if k == 0 {
            return fail(&CliError::Validation("--threads must be positive".into()), Some(&digest), None);
        }
        // Only fails if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
    }
    let out = resolve_out_dir(args.out.as_deref(), &manifest);
    match run(&manifest, &out) {
        Ok(files) => {
            let files: Vec<String> = files.iter().map(|p| p.display().to_string()).collect();
            println!(
                "{}",
                serde_json::json!({"status": "ok", "manifest_sha256": digest, "files": files})
            );
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e, Some(&digest), Some(&out)),
    }
}
