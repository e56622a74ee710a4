use std::fs::{self, File};
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bypass_qkd::bounds;
use bypass_qkd::cli::{self, ExitStatus, FigureName, FigureOptions, RunConfig};

#[derive(Parser)]
#[command(name = "bypass-qkd", version, about = "Certified key-rate bounds for QKD with bypass channels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate every point of a TOML run configuration.
    Run {
        config: PathBuf,
        /// Write the CSV here instead of the configured path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit the data behind a figure (fig3, fig4, fig5, fig6, fig7).
    Figures {
        name: String,
        /// Also write an SVG next to the CSV.
        #[arg(long)]
        svg: bool,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Weight outside the truncated space from a double-click rate.
    Weight {
        #[arg(long)]
        qdc: f64,
        #[arg(long = "N")]
        n: u32,
        #[arg(long)]
        pz: f64,
        /// WCP mean photon number; adds the F-marginal tail.
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        eta_ae: f64,
    },
    /// Run the invariant checks.
    Selftest {
        #[arg(long, default_value_t = 2024)]
        seed: u64,
    },
}

fn run(config: PathBuf, out: Option<PathBuf>) -> cli::Result<ExitStatus> {
    let config = RunConfig::load(&config)?;
    let threads = cli::thread_count(config.threads)?;
    let report = cli::with_threads(threads, || cli::run(&config))??;
    match out.or(config.output.csv.clone()) {
        Some(path) => {
            cli::write_csv(&report.rows, File::create(&path)?)?;
            eprintln!("wrote {} rows to {}", report.rows.len(), path.display());
        }
        None => cli::write_csv(&report.rows, io::stdout().lock())?,
    }
    for s in &report.scans {
        match (s.min_key_rate, s.argmin_eta_t) {
            (Some(r), Some(t)) => eprintln!("eta_AE={:.4}: min key rate {r:.6e} at eta_T={t:.4}", s.eta_ae),
            _ => eprintln!("eta_AE={:.4}: no feasible eta_T", s.eta_ae),
        }
    }
    Ok(report.exit)
}

fn figures(name: &str, svg: bool, out_dir: PathBuf) -> cli::Result<ExitStatus> {
    let name: FigureName = name.parse()?;
    let threads = cli::thread_count(None)?;
    let fig = cli::with_threads(threads, || cli::figure(name, &FigureOptions::default()))??;
    fs::create_dir_all(&out_dir)?;
    let csv_path = out_dir.join(format!("{}.csv", name.name()));
    fig.write_csv(File::create(&csv_path)?)?;
    eprintln!("wrote {}", csv_path.display());
    if svg {
        let svg_path = out_dir.join(format!("{}.svg", name.name()));
        fs::write(&svg_path, cli::render_svg(&fig))?;
        eprintln!("wrote {}", svg_path.display());
    }
    Ok(ExitStatus::Ok)
}

fn weight(qdc: f64, n: u32, pz: f64, mu: Option<f64>, eta_ae: f64) -> cli::Result<ExitStatus> {
    let w_f = mu.map(|mu| bounds::wcp_f_tail(mu, eta_ae, n)).unwrap_or(0.0);
    let r = bounds::weight_bound(qdc, n, pz, w_f).map_err(|e| cli::CliError::Config {
        path: "weight".into(),
        message: e.to_string(),
    })?;
    let mut out = io::stdout().lock();
    writeln!(out, "lambda_min^{} = {:.12}", n + 1, r.lambda)?;
    writeln!(out, "W_B = {:.6e}", r.w_b)?;
    writeln!(out, "W_F = {:.6e}", r.w_f)?;
    writeln!(out, "W   = {:.6e}", r.w)?;
    Ok(ExitStatus::Ok)
}

fn selftest(seed: u64) -> cli::Result<ExitStatus> {
    let threads = cli::thread_count(None)?;
    let checks = cli::with_threads(threads, || cli::selftest(seed))?;
    let mut ok = true;
    for c in &checks {
        println!("{} {:<34} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        ok &= c.passed;
    }
    Ok(if ok { ExitStatus::Ok } else { ExitStatus::NumericalFailure })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out } => run(config, out),
        Command::Figures { name, svg, out_dir } => figures(&name, svg, out_dir),
        Command::Weight { qdc, n, pz, mu, eta_ae } => weight(qdc, n, pz, mu, eta_ae),
        Command::Selftest { seed } => selftest(seed),
    };
    let status = result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        e.exit_status()
    });
    ExitCode::from(status.code() as u8)
}
