//! Argument parsing and subcommand dispatch.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rectiforge_core::analysis::{designated_output, fractional_bandwidth, operating_point, Axis, FbwCenter, SweepSpec};
use rectiforge_core::hb::{HbEngine, HbOptions, DEFAULT_HARMONICS};
use rectiforge_core::linear::duplexer_report;
use rectiforge_core::media::StubMode;
use rectiforge_core::netlist::{parse, render, Circuit};
use rectiforge_core::transient::{simulate, TransientOptions};
use rectiforge_core::units::parse_value;
use rectiforge_core::Error;

use crate::format::{self, num};
use crate::spec::parse_spec;
use crate::{par, CliError};

fn si(s: &str) -> Result<f64, String> {
    parse_value(s.trim()).ok_or_else(|| format!("`{s}` is not a number"))
}

#[derive(Debug, Parser)]
#[command(name = "rectiforge", version, about = "RF rectifier simulator")]
pub struct Cli {
    /// Worker threads for sweeps, S-parameters and optimization [default: all cores]
    #[arg(long, global = true, env = "RECTIFORGE_JOBS")]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StubArg {
    Bessel,
    Cap,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// Harmonic order K [default: netlist `.options k`, else 8]
    #[arg(short = 'k', long = "harmonics")]
    pub harmonics: Option<usize>,
    /// Radial stub model [default: netlist `.options stub`, else bessel]
    #[arg(long, value_enum)]
    pub stub_mode: Option<StubArg>,
}

impl SolverArgs {
    /// Applies flag overrides to the circuit; returns the harmonic order.
    fn apply(&self, circuit: &mut Circuit) -> usize {
        if let Some(m) = self.stub_mode {
            circuit.options.stub_mode = Some(match m {
                StubArg::Bessel => StubMode::Bessel,
                StubArg::Cap => StubMode::Capacitor,
            });
        }
        self.harmonics
            .or(circuit.options.harmonics)
            .unwrap_or(DEFAULT_HARMONICS)
    }
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// First grid value
    #[arg(long, value_parser = si, allow_hyphen_values = true)]
    pub from: Option<f64>,
    /// Last grid value (included when on the step)
    #[arg(long, value_parser = si, allow_hyphen_values = true)]
    pub to: Option<f64>,
    /// Grid step
    #[arg(long, value_parser = si)]
    pub step: Option<f64>,
    /// Explicit comma-separated grid, instead of --from/--to/--step
    #[arg(long, value_parser = si, value_delimiter = ',', allow_hyphen_values = true)]
    pub values: Option<Vec<f64>>,
}

impl GridArgs {
    fn given(&self) -> bool {
        self.values.is_some() || self.from.is_some() || self.to.is_some() || self.step.is_some()
    }

    fn grid(&self) -> Result<Vec<f64>, CliError> {
        let usage = |m: &str| Err(CliError::Usage(m.into()));
        let g = match (&self.values, self.from, self.to, self.step) {
            (Some(v), None, None, None) => v.clone(),
            (None, Some(a), Some(b), Some(s)) => {
                if !(s > 0.0) {
                    return usage("--step must be > 0");
                }
                if b < a {
                    return usage("--to must not be below --from");
                }
                let n = ((b - a) / s + 1e-9).floor() as usize + 1;
                (0..n).map(|i| a + i as f64 * s).collect()
            }
            _ => return usage("give either --values or all of --from, --to, --step"),
        };
        check_grid(&g)?;
        Ok(g)
    }
}

fn check_grid(g: &[f64]) -> Result<(), CliError> {
    if g.is_empty() {
        return Err(CliError::Usage("grid is empty".into()));
    }
    let up = g.windows(2).all(|w| w[1] > w[0]);
    let down = g.windows(2).all(|w| w[1] < w[0]);
    if !(up || down) {
        return Err(CliError::Usage("grid must be strictly monotone".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AxisArg {
    Freq,
    Pin,
    Rl,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SparamFormat {
    /// Three-port networks: S11/S21/S31/S23 per frequency; CSV otherwise
    Table,
    Csv,
    Touchstone,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CenterArg {
    Midpoint,
    Dip,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one harmonic-balance operating point and print its record
    Sim {
        netlist: PathBuf,
        /// Drive frequency (Hz)
        #[arg(long, value_parser = si)]
        f0: f64,
        /// Available input power (dBm)
        #[arg(long, value_parser = si, allow_hyphen_values = true)]
        pin: f64,
        /// Load resistance override (Ω)
        #[arg(long, value_parser = si)]
        rl: Option<f64>,
        /// Load element of the `.output` to report [default: the first]
        #[arg(long)]
        output: Option<String>,
        #[command(flatten)]
        solver: SolverArgs,
        /// Write per-iteration residuals and junction spectra (CSV) here
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Sweep frequency, input power or load and write sweep CSV
    Sweep {
        netlist: PathBuf,
        #[arg(long, value_enum)]
        axis: AxisArg,
        #[command(flatten)]
        grid: GridArgs,
        /// Fixed frequency (Hz) for pin and rl sweeps
        #[arg(long, value_parser = si)]
        f0: Option<f64>,
        /// Fixed input power (dBm) for freq and rl sweeps
        #[arg(long, value_parser = si, allow_hyphen_values = true)]
        pin: Option<f64>,
        /// Load override (Ω) for freq and pin sweeps
        #[arg(long, value_parser = si)]
        rl: Option<f64>,
        #[arg(long)]
        output: Option<String>,
        #[command(flatten)]
        solver: SolverArgs,
        /// Output file [default: stdout]
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Small-signal S-parameters as a table, CSV or Touchstone
    Sparams {
        netlist: PathBuf,
        /// Comma-separated frequencies (Hz)
        #[arg(long = "f", value_parser = si, value_delimiter = ',')]
        freqs: Option<Vec<f64>>,
        #[command(flatten)]
        grid: GridArgs,
        /// Required port count
        #[arg(long)]
        ports: Option<usize>,
        #[arg(long, value_enum, default_value = "table")]
        format: SparamFormat,
        /// Linearize diodes about the operating point at this power (dBm)
        #[arg(long, value_parser = si, allow_hyphen_values = true, requires = "f0")]
        pin: Option<f64>,
        /// Frequency (Hz) of the operating point used with --pin
        #[arg(long, value_parser = si)]
        f0: Option<f64>,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Fractional bandwidth of an |S11| curve, from a file or a live sweep
    Fbw {
        /// Netlist to sweep (with --from/--to/--step or --values)
        netlist: Option<PathBuf>,
        /// Curve file: CSV with freq_hz and s11_db columns, or one-port Touchstone
        #[arg(long, conflicts_with = "netlist")]
        curve: Option<PathBuf>,
        #[command(flatten)]
        grid: GridArgs,
        /// Large-signal drive (dBm) for the live sweep [default: small-signal]
        #[arg(long, value_parser = si, allow_hyphen_values = true)]
        pin: Option<f64>,
        /// Frequency inside the band (Hz)
        #[arg(long, value_parser = si)]
        center: f64,
        /// Threshold (dB)
        #[arg(long, value_parser = si, allow_hyphen_values = true, default_value = "-10")]
        threshold: f64,
        #[arg(long, value_enum, default_value = "midpoint")]
        center_mode: CenterArg,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Tune netlist parameters against an optimization spec (TOML)
    Optimize {
        netlist: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        /// Write the tuned netlist here
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Write the evaluation history CSV here
        #[arg(long)]
        history: Option<PathBuf>,
        /// Override the spec's evaluation budget
        #[arg(long)]
        max_evals: Option<usize>,
        /// Override the spec's seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Time-domain reference run of a lumped circuit
    Oracle {
        netlist: PathBuf,
        #[arg(long, value_parser = si)]
        f0: f64,
        #[arg(long, value_parser = si, allow_hyphen_values = true)]
        pin: f64,
        /// Time steps per period
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        max_periods: Option<usize>,
        /// Node to average [default: the `.output` node]
        #[arg(long)]
        node: Option<String>,
    },
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn load(path: &Path) -> Result<Circuit, CliError> {
    parse(&read(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        }),
        None => {
            let mut o = std::io::stdout().lock();
            o.write_all(text.as_bytes())
                .and_then(|_| o.flush())
                .map_err(|source| CliError::Io {
                    path: "<stdout>".into(),
                    source,
                })
        }
    }
}

fn need(v: Option<f64>, flag: &str, axis: &str) -> Result<f64, CliError> {
    v.ok_or_else(|| CliError::Usage(format!("--{flag} is required for a {axis} sweep")))
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let jobs = par::jobs(cli.jobs);
    match cli.command {
        Command::Sim {
            netlist,
            f0,
            pin,
            rl,
            output,
            solver,
            trace,
        } => {
            let mut c = load(&netlist)?;
            let k = solver.apply(&mut c);
            let (rec, sol) = operating_point(&c, f0, pin, rl, output.as_deref(), k, None)?;
            for w in &sol.warnings {
                eprintln!("warning: {w}");
            }
            if let Some(path) = trace {
                if let Some(r) = rl {
                    let (_, load, _) = designated_output(&c, output.as_deref())?;
                    let reference = format!("{load}.r");
                    c.set_param(&reference, r)?;
                }
                let opts = HbOptions {
                    harmonics: k,
                    trace: true,
                    ..HbOptions::default()
                };
                let traced = HbEngine::new(&c, f0, k)?.solve(pin, &opts)?;
                emit(Some(&path), &format::trace_csv(&traced.trace))?;
            }
            emit(None, &format::sweep_csv(std::slice::from_ref(&rec)))?;
            if !rec.converged {
                return Err(CliError::NoConvergence("operating point did not converge".into()));
            }
        }
        Command::Sweep {
            netlist,
            axis,
            grid,
            f0,
            pin,
            rl,
            output,
            solver,
            out,
        } => {
            let mut c = load(&netlist)?;
            let k = solver.apply(&mut c);
            let grid = grid.grid()?;
            let (axis, freq, pin) = match axis {
                AxisArg::Freq => (Axis::Freq, 0.0, need(pin, "pin", "freq")?),
                AxisArg::Pin => (Axis::Pin, need(f0, "f0", "pin")?, 0.0),
                AxisArg::Rl => (Axis::RLoad, need(f0, "f0", "rl")?, need(pin, "pin", "rl")?),
            };
            let spec = SweepSpec {
                axis,
                grid,
                freq,
                pin,
                r_load: rl,
                output,
                harmonics: k,
            };
            let records = par::sweep(&par::pool(jobs), &c, &spec)?;
            emit(out.as_deref(), &format::sweep_csv(&records))?;
            let failed: Vec<_> = records.iter().filter(|r| !r.converged).collect();
            for r in &failed {
                eprintln!(
                    "point f={} pin={}: {}",
                    num(r.freq),
                    num(r.pin),
                    r.error.as_deref().unwrap_or("not converged")
                );
            }
            if !failed.is_empty() {
                return Err(CliError::NoConvergence(format!("{} sweep points did not converge", failed.len())));
            }
        }
        Command::Sparams {
            netlist,
            freqs,
            grid,
            ports,
            format: fmt,
            pin,
            f0,
            solver,
            out,
        } => {
            let mut c = load(&netlist)?;
            let k = solver.apply(&mut c);
            if let Some(n) = ports {
                if c.ports.len() != n {
                    return Err(Error::PortCount {
                        expected: n,
                        found: c.ports.len(),
                    }
                    .into());
                }
            }
            let freqs = match (freqs, grid.given()) {
                (Some(f), false) => {
                    check_grid(&f)?;
                    f
                }
                (None, true) => grid.grid()?,
                _ => return Err(CliError::Usage("give either --f or a frequency grid".into())),
            };
            let bias = match (pin, f0) {
                (Some(p), Some(f)) => {
                    let opts = HbOptions {
                        harmonics: k,
                        ..HbOptions::default()
                    };
                    let sol = HbEngine::new(&c, f, k)?.solve(p, &opts)?;
                    if !sol.converged {
                        return Err(CliError::NoConvergence("bias point did not converge".into()));
                    }
                    Some(sol.junction_bias())
                }
                _ => None,
            };
            let mats = par::s_parameters(&par::pool(jobs), &c, &freqs, bias.as_deref())?;
            let text = match fmt {
                SparamFormat::Table if c.ports.len() == 3 => {
                    let mut t = format!("{}\n", format::DUPLEXER_HEADER);
                    for m in &mats {
                        let row = rectiforge_core::linear::DuplexerRow {
                            freq: m.freq,
                            s11_db: m.db(1, 1),
                            s21_db: m.db(2, 1),
                            s31_db: m.db(3, 1),
                            s23_db: m.db(2, 3),
                        };
                        t.push_str(&format::duplexer_row(&row));
                        t.push('\n');
                    }
                    if let [fm, gsm] = freqs[..] {
                        let r = duplexer_report(&c, fm, gsm)?;
                        t.push_str(&format!("# branch selectivity: {}\n", r.selective));
                    }
                    t
                }
                SparamFormat::Table | SparamFormat::Csv => format::sparams_csv(&mats),
                SparamFormat::Touchstone => format::touchstone(&mats)?,
            };
            emit(out.as_deref(), &text)?;
        }
        Command::Fbw {
            netlist,
            curve,
            grid,
            pin,
            center,
            threshold,
            center_mode,
            solver,
        } => {
            let curve = match (curve, netlist) {
                (Some(path), None) => format::read_curve(&read(&path)?)?,
                (None, Some(path)) => {
                    let mut c = load(&path)?;
                    let k = solver.apply(&mut c);
                    par::s11_curve(&par::pool(jobs), &c, &grid.grid()?, pin, k)?
                }
                _ => return Err(CliError::Usage("give a netlist or --curve".into())),
            };
            let mode = match center_mode {
                CenterArg::Midpoint => FbwCenter::Midpoint,
                CenterArg::Dip => FbwCenter::Dip,
            };
            let b = fractional_bandwidth(&curve, threshold, center, mode)?;
            emit(
                None,
                &format!(
                    "f_lo_hz,f_hi_hz,f_center_hz,fbw_pct\n{},{},{},{}\n",
                    num(b.f_lo),
                    num(b.f_hi),
                    num(b.f_center),
                    num(b.fbw)
                ),
            )?;
        }
        Command::Optimize {
            netlist,
            spec,
            out,
            history,
            max_evals,
            seed,
        } => {
            let c = load(&netlist)?;
            let k = c.options.harmonics.unwrap_or(DEFAULT_HARMONICS);
            let mut spec = parse_spec(&read(&spec)?, k)?;
            if let Some(n) = max_evals {
                spec.max_evals = n;
            }
            if let Some(s) = seed {
                spec.seed = s;
            }
            let report = par::optimize(&par::pool(jobs), &c, &spec)?;
            if let Some(path) = history {
                emit(Some(&path), &format::history_csv(&spec, &report.history))?;
            }
            if let Some(path) = out {
                emit(Some(&path), &render(&report.circuit))?;
            }
            let mut text = format::metric_table(&spec, &report);
            text.push_str(&format!("# evaluations: {}, cost: {}\n", report.history.len(), num(report.cost)));
            for (name, v) in &report.params {
                text.push_str(&format!("# {name} = {}\n", num(*v)));
            }
            emit(None, &text)?;
        }
        Command::Oracle {
            netlist,
            f0,
            pin,
            steps,
            max_periods,
            node,
        } => {
            let c = load(&netlist)?;
            let mut opts = TransientOptions::default();
            if let Some(n) = steps {
                opts.dt = Some(1.0 / (f0 * n as f64));
            }
            if let Some(n) = max_periods {
                opts.max_periods = n;
            }
            let r = simulate(&c, f0, pin, &opts)?;
            let v = match &node {
                Some(name) => {
                    let id = r
                        .node_names
                        .iter()
                        .position(|n| n == name)
                        .ok_or_else(|| CliError::Usage(format!("no node `{name}`")))?;
                    r.averages[id]
                }
                None => r
                    .v_odc
                    .ok_or_else(|| CliError::Usage("no .output directive; pass --node".into()))?,
            };
            emit(
                None,
                &format!(
                    "f0_hz,pin_dbm,vdc_v,periods,settled,energy_imbalance\n{},{},{},{},{},{}\n",
                    num(f0),
                    num(pin),
                    num(v),
                    r.periods,
                    r.settled,
                    num(r.energy.imbalance())
                ),
            )?;
            if !r.settled {
                return Err(CliError::NoConvergence("transient did not settle".into()));
            }
        }
    }
    Ok(())
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("rectiforge: {e}");
            e.exit_code()
        }
    }
}
