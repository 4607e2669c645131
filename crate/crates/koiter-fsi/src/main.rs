//! `fsi` command line: run a configured simulation, execute the validation
//! suites, recompute regularity diagnostics from stored snapshots, or print
//! the closed-form geometry tables.
//!
//! Exit codes: 0 success, 2 configuration/argument error, 3 solver failure,
//! 4 collar breach (self-intersection guard), 5 γ coercivity degeneration.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use koiter_fsi::geometry::{gamma, sphere_jet, ReferenceSurface};
use koiter_fsi::io::{self, IoError, RunOutcome};
use koiter_fsi::validation::{run_suites, FaultHooks};

#[derive(Parser)]
#[command(name = "fsi", about = "Fluid–Koiter-shell interaction simulator and verifier")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a simulation from a JSON config; writes ledger and snapshots
    Run {
        config: PathBuf,
        /// output directory (overrides the config; FSI_OUTPUT_DIR overrides both)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Execute the verification suites and print a pass/fail matrix
    Validate {
        /// corrupt the Simpson weights (the telescoping suite must fail)
        #[arg(long)]
        fault_simpson: bool,
        /// corrupt the skew convection pairing (the conservation suite must fail)
        #[arg(long)]
        fault_skew: bool,
    },
    /// Recompute regularity/Korn diagnostics from stored snapshots
    Diagnose {
        dir: PathBuf,
        /// fractional shift order, in (0, 1/2)
        #[arg(long)]
        s: f64,
    },
    /// Print closed-form γ/G/R tables for the reference geometries
    Geometry {
        #[arg(value_enum)]
        kind: GeometryKind,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GeometryKind {
    Cylinder,
    Flat,
    SphereTable,
}

fn io_exit(e: &IoError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    match Cli::parse().cmd {
        Cmd::Run { config, out } => {
            let cfg = match io::load_config(&config) {
                Ok(c) => c,
                Err(e) => return io_exit(&e),
            };
            let out_dir = std::env::var_os("FSI_OUTPUT_DIR")
                .map(PathBuf::from)
                .or(out)
                .unwrap_or_else(|| PathBuf::from(&cfg.output.directory));
            match io::cmd_run(&cfg, &out_dir) {
                Ok(outcome) => {
                    match &outcome {
                        RunOutcome::Completed { final_time } => {
                            println!("completed: reached t = {final_time}");
                        }
                        RunOutcome::CollarBreach { detail, reached_time } => {
                            println!("collar breach at t = {reached_time}: {detail}");
                        }
                        RunOutcome::CoercivityLoss { gamma_min, reached_time } => {
                            println!(
                                "coercivity degenerated at t = {reached_time}: min γ̃ = \
                                 {gamma_min:.3e}"
                            );
                        }
                        RunOutcome::SolverFailure { detail, reached_time } => {
                            println!("solver failure at t = {reached_time}: {detail}");
                        }
                    }
                    println!("outputs in {}", out_dir.display());
                    ExitCode::from(outcome.exit_code() as u8)
                }
                Err(e) => io_exit(&e),
            }
        }
        Cmd::Validate { fault_simpson, fault_skew } => {
            let hooks = FaultHooks { simpson: fault_simpson, skew: fault_skew };
            let results = run_suites(&hooks);
            let mut failed = 0;
            for r in &results {
                let tag = if r.passed { "PASS" } else { "FAIL" };
                println!("{tag} {:<22} {}", r.name, r.detail);
                failed += usize::from(!r.passed);
            }
            if failed == 0 {
                println!("all {} suites passed", results.len());
                ExitCode::SUCCESS
            } else {
                println!("{failed} of {} suites failed", results.len());
                ExitCode::from(1)
            }
        }
        Cmd::Diagnose { dir, s } => match io::cmd_diagnose(&dir, s) {
            Ok(path) => {
                println!("wrote {}", path.display());
                ExitCode::SUCCESS
            }
            Err(e) => io_exit(&e),
        },
        Cmd::Geometry { kind } => {
            print_geometry(kind);
            ExitCode::SUCCESS
        }
    }
}

fn print_geometry(kind: GeometryKind) {
    match kind {
        GeometryKind::Flat => {
            println!("flat channel: γ(η) ≡ 1, G(η) = ∇η⊗∇η, R(η) = ∇²η");
            let s = ReferenceSurface::<f64>::flat_channel(1.0);
            for eta in [-0.5, 0.0, 0.5] {
                println!(
                    "  y=(0.3,0.7) η={eta:+.2}  γ computed {:.12}  closed form 1.0",
                    gamma(&s, (0.3, 0.7), eta)
                );
            }
        }
        GeometryKind::Cylinder => {
            let r = 2.0;
            let s = ReferenceSurface::<f64>::cylinder(r, 1.0);
            println!("cylinder R = {r}: closed form γ(η) = 1 + η/R");
            println!("{:>8} {:>8} {:>18} {:>18}", "θ", "η", "computed", "closed form");
            for (theta, eta) in [(0.0, -0.5), (1.0, 0.0), (2.0, 0.7), (4.5, 1.3)] {
                println!(
                    "{theta:>8.3} {eta:>8.3} {:>18.12} {:>18.12}",
                    gamma(&s, (theta, 0.4), eta),
                    1.0 + eta / r
                );
            }
            println!(
                "tensor closed forms (see `fsi validate`, geometry-closed-forms suite):\n\
                   G₁₁ = (R+η)² + η_θ² − R²,  G₁₂ = η_θη_z,  G₂₂ = η_z²\n\
                   R₁₁ = (1+η/R)η_θθ − (R+η)²/R − 2η_θ²/R + R\n\
                   R₁₂ = (1+η/R)η_θz − η_θη_z/R,  R₂₂ = (1+η/R)η_zz"
            );
        }
        GeometryKind::SphereTable => {
            let r = 1.5;
            println!("sphere R = {r}: closed form γ(η) = (η−R)²/R²");
            println!("{:>8} {:>8} {:>8} {:>18} {:>18}", "θ", "φ", "η", "computed", "closed form");
            for (theta, phi, eta) in
                [(0.0, 1.0, -0.3), (1.2, 0.7, 0.0), (3.0, 1.5, 0.4), (5.0, 2.2, 1.0)]
            {
                println!(
                    "{theta:>8.3} {phi:>8.3} {eta:>8.3} {:>18.12} {:>18.12}",
                    sphere_jet(r, theta, phi).gamma(eta),
                    (eta - r) * (eta - r) / (r * r)
                );
            }
        }
    }
}
