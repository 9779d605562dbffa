//! `verify`: runs a verification experiment and writes its reports.
//!
//! Exit status: 0 when every gate passes, 1 when a gate fails, 2 on a
//! configuration or output error, 3 when a quadrature did not converge.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use rellich_lab::runner::{self, ConfigError, Setting};

#[derive(Debug, Parser)]
#[command(name = "verify", version, about = "Numerical checks of Hardy and Rellich inequalities with drift")]
struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// identities, inequalities, sharpness, decomposition, symmetry or all.
    #[arg(long)]
    mode: Option<String>,
    /// `euclidean:<n>` or `heisenberg:<m>`.
    #[arg(long)]
    group: Option<String>,
    /// `all` or comma-separated instance ids.
    #[arg(long)]
    instance: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<String>,
    /// Drift directions: comma-separated components, `;` between vectors.
    #[arg(long, allow_hyphen_values = true)]
    drift_a: Option<String>,
    /// `positive` for `χ = exp(γ⟨a,x′⟩)`, `negative` for `exp(−γ⟨a,x′⟩)`.
    #[arg(long)]
    character_sign: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    p: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Random fields per inequality combination.
    #[arg(long)]
    fields: Option<String>,
    /// Fields or pairs per decomposition and symmetry combination.
    #[arg(long)]
    samples: Option<String>,
    /// Random points per identity.
    #[arg(long)]
    points: Option<String>,
    #[arg(long)]
    k_max: Option<String>,
    #[arg(long)]
    random_fields: Option<String>,
    #[arg(long)]
    quad_order: Option<String>,
    #[arg(long)]
    quad_tol: Option<String>,
    #[arg(long)]
    quad_depth: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
}

impl Cli {
    fn flags(&self) -> Vec<Setting> {
        let pairs = [
            ("mode", &self.mode),
            ("group", &self.group),
            ("instance", &self.instance),
            ("delta", &self.delta),
            ("alpha", &self.alpha),
            ("theta", &self.theta),
            ("beta", &self.beta),
            ("gamma", &self.gamma),
            ("drift_a", &self.drift_a),
            ("character_sign", &self.character_sign),
            ("p", &self.p),
            ("seed", &self.seed),
            ("fields", &self.fields),
            ("samples", &self.samples),
            ("points", &self.points),
            ("k_max", &self.k_max),
            ("random_fields", &self.random_fields),
            ("quad_order", &self.quad_order),
            ("quad_tol", &self.quad_tol),
            ("quad_depth", &self.quad_depth),
            ("out", &self.out),
        ];
        pairs
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| Setting::flag(k, v.clone())))
            .collect()
    }
}

fn config_error(e: ConfigError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match runner::parse_config(cli.config.as_deref(), &cli.flags()) {
        Ok(c) => c,
        Err(e) => return config_error(e),
    };
    match runner::run(&cfg) {
        Ok(outcome) => {
            let s = &outcome.summary;
            eprintln!(
                "{}: mode {}, {} failures ({} quadrature), reports in {}",
                runner::VERSION,
                cfg.mode,
                s.failures,
                s.quadrature_failures,
                cfg.out.display()
            );
            for f in outcome.failures.iter().take(20) {
                eprintln!("  {:?} {}: {} ({} vs {})", f.mode, f.check, f.detail, f.value, f.threshold);
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
