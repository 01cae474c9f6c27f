//! `hamreduce`: reductions, spectra, clock paths, gate counts and partition
//! function estimates from the command line.
//!
//! Every artifact is JSON (CSV only for eigenvalue tables) and carries the
//! schema version, the full run configuration and a SHA-256 digest of the
//! input, so identical reruns are byte-identical.
//!
//! Exit codes: 0 ok, 2 input error, 3 cap exceeded, 4 promise violated.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hamreduce::circuit::{
    build_sat_verifier, cz_sandwich_normalize, recompile_to_cz, to_elementary, CircuitError,
};
use hamreduce::clock::{johnson_path_d2, johnson_path_generic, min_clock_qubits, validate_schedule, ClockError};
use hamreduce::cnf::{parse_dimacs, CnfError, CnfFormula};
use hamreduce::config::{ConfigError, RunConfig};
use hamreduce::hamiltonian::{
    build_hu_3local, build_hu_5local, build_trivial_sat_hamiltonian, locality_of, HamiltonianError,
    HamiltonianSpec, ThreeLocalConfig,
};
use hamreduce::qpf::{qpf_algorithm, Backend, QpfError};
use hamreduce::spectra::{eigenvalues, ground_energy_with, partition_function_exact, SpectraError};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

const SCHEMA_VERSION: u32 = 1;
/// Widest register whose basis index fits the solvers' bit arithmetic.
const MAX_SPEC_QUBITS: usize = 63;

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Cap(String),
    #[error("{0}")]
    Promise(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Cap(_) => 3,
            CliError::Promise(_) => 4,
        }
    }
}

impl From<CnfError> for CliError {
    fn from(e: CnfError) -> Self {
        match e {
            CnfError::OracleCapExceeded { .. } => CliError::Cap(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<CircuitError> for CliError {
    fn from(e: CircuitError) -> Self {
        match e {
            CircuitError::CapExceeded { .. } => CliError::Cap(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<ClockError> for CliError {
    fn from(e: ClockError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<HamiltonianError> for CliError {
    fn from(e: HamiltonianError) -> Self {
        match e {
            HamiltonianError::Circuit(c) => c.into(),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<SpectraError> for CliError {
    fn from(e: SpectraError) -> Self {
        match e {
            SpectraError::DimensionCapExceeded { .. } => CliError::Cap(e.to_string()),
            SpectraError::PromiseViolated { .. } => CliError::Promise(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<QpfError> for CliError {
    fn from(e: QpfError) -> Self {
        match e {
            QpfError::CapExceeded { .. } => CliError::Cap(e.to_string()),
            QpfError::Spectra(s) => s.into(),
            QpfError::NormalizationViolated { .. }
            | QpfError::DeltaTooSmall { .. }
            | QpfError::ThresholdsOverlap { .. }
            | QpfError::Inconclusive { .. } => CliError::Promise(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Input(format!("config: {e}"))
    }
}

#[derive(Parser)]
#[command(name = "hamreduce", version, about = "SAT-to-Hamiltonian reductions and partition-function estimation")]
struct Cli {
    /// Run configuration (JSON); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Flavor {
    Trivial,
    FiveLocal,
    ThreeLocal,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Ideal,
    Simulated,
}

#[derive(Subcommand)]
enum Command {
    /// Reduce a DIMACS CNF to a Hamiltonian spec.
    Reduce {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        flavor: Flavor,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ground energy (and Z(β)) of a spec; `--csv` lists all eigenvalues.
    Spectrum {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        csv: bool,
    },
    /// Estimate Z(β)/2 with the binned counting algorithm.
    Qpf {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long, value_enum, default_value = "ideal")]
        backend: BackendArg,
        /// Overrides the configured seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Hamiltonian path through the d-subsets of [n].
    ClockPath {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        d: usize,
        /// Also require |S_t ∩ S_{t+2}| = d − 1.
        #[arg(long)]
        two_step: bool,
    },
    /// Elementary-gate count of the verifier circuit against its certificate.
    Gatecount {
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    command: &'static str,
    config: &'a RunConfig,
    input_sha256: String,
    result: T,
}

fn envelope<T: Serialize>(command: &'static str, config: &RunConfig, digest: String, result: T) -> String {
    let env = Envelope {
        schema_version: SCHEMA_VERSION,
        command,
        config,
        input_sha256: digest,
        result,
    };
    let mut s = serde_json::to_string_pretty(&env).expect("artifacts serialize");
    s.push('\n');
    s
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn read_input(path: &Path) -> Result<(Vec<u8>, String), CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let digest = sha256_hex(&bytes);
    Ok((bytes, digest))
}

fn read_formula(path: &Path) -> Result<(CnfFormula, String), CliError> {
    let (bytes, digest) = read_input(path)?;
    let text = String::from_utf8(bytes).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let phi = parse_dimacs(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok((phi, digest))
}

/// Accepts a bare spec or a `reduce` artifact wrapping one.
fn read_spec(path: &Path) -> Result<(HamiltonianSpec, String), CliError> {
    let (bytes, digest) = read_input(path)?;
    let v: Value =
        serde_json::from_slice(&bytes).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let inner = match v.get("schema_version").and(v.get("result")).and_then(|r| r.get("spec")) {
        Some(s) => s.clone(),
        None => v,
    };
    let spec = HamiltonianSpec::from_json(&inner.to_string())
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok((spec, digest))
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    let cfg = match path {
        None => RunConfig::default(),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?
        }
    };
    cfg.validate()?;
    Ok(cfg)
}

fn write_out(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct GateCounts {
    num_vars: usize,
    num_clauses: usize,
    arity_bound: usize,
    qubits: usize,
    /// Multi-control gates kept whole.
    gates: usize,
    /// Elementary operations, one per H, T, T† or CNOT.
    elementary: u64,
    /// Length after expanding every gate into H, T and CNOT.
    compiled: usize,
    certificate: u64,
    within_certificate: bool,
}

fn gate_counts(phi: &CnfFormula) -> Result<GateCounts, CliError> {
    let circ = build_sat_verifier(phi)?;
    let compiled = to_elementary(&circ)?.len();
    let elementary = circ.elementary_count();
    let certificate = circ.gate_count_certificate.unwrap_or(u64::MAX);
    Ok(GateCounts {
        num_vars: phi.num_vars(),
        num_clauses: phi.num_clauses(),
        arity_bound: phi.arity_bound(),
        qubits: circ.num_qubits(),
        gates: circ.len(),
        elementary,
        compiled,
        certificate,
        within_certificate: elementary <= certificate,
    })
}

#[derive(Serialize)]
struct ReduceResult {
    flavor: &'static str,
    qubits: usize,
    locality: usize,
    terms: usize,
    thresholds: Option<hamreduce::hamiltonian::Thresholds>,
    #[serde(skip_serializing_if = "Option::is_none")]
    clock_qubits: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    circuit_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gate_counts: Option<GateCounts>,
}

fn cmd_reduce(cfg: &RunConfig, input: &Path, flavor: Flavor, out: &Path) -> Result<String, CliError> {
    let (phi, digest) = read_formula(input)?;
    let (name, spec, counts) = match flavor {
        Flavor::Trivial => ("trivial", build_trivial_sat_hamiltonian(&phi), None),
        Flavor::FiveLocal => {
            let counts = gate_counts(&phi)?;
            let circ = to_elementary(&build_sat_verifier(&phi)?)?;
            let n_cl = min_clock_qubits(circ.len(), 2, 3);
            let sched = johnson_path_d2(n_cl)?;
            let spec = build_hu_5local(&circ, &sched, &cfg.five_local(None))?;
            ("five_local", spec, Some(counts))
        }
        Flavor::ThreeLocal => {
            let counts = gate_counts(&phi)?;
            let circ = recompile_to_cz(&to_elementary(&build_sat_verifier(&phi)?)?)?;
            let czc = cz_sandwich_normalize(&circ)?;
            let n_cl = min_clock_qubits(czc.total_steps(), 2, 3);
            let sched = johnson_path_d2(n_cl)?;
            let spec = build_hu_3local(&czc, &sched, &ThreeLocalConfig::default())?;
            ("three_local", spec, Some(counts))
        }
    };
    if spec.total_qubits > MAX_SPEC_QUBITS {
        return Err(CliError::Cap(format!(
            "spec needs {} qubits, more than the {MAX_SPEC_QUBITS} a basis index can address",
            spec.total_qubits
        )));
    }
    let spec_value: Value = serde_json::from_str(&spec.to_json()).expect("spec JSON is valid");
    #[derive(Serialize)]
    struct SpecArtifact {
        flavor: &'static str,
        spec: Value,
    }
    write_out(
        out,
        &envelope("reduce", cfg, digest.clone(), SpecArtifact { flavor: name, spec: spec_value }),
    )?;
    let layout = spec.layout.as_ref();
    let summary = ReduceResult {
        flavor: name,
        qubits: spec.total_qubits,
        locality: locality_of(&spec),
        terms: spec.terms.len(),
        thresholds: spec.thresholds,
        clock_qubits: layout.map(|l| l.n_cl),
        circuit_steps: layout.map(|l| l.circuit_steps),
        gate_counts: counts,
    };
    Ok(envelope("reduce", cfg, digest, summary))
}

fn check_caps(cfg: &RunConfig, spec: &HamiltonianSpec) -> Result<(), CliError> {
    if spec.total_qubits > cfg.iterative_cap {
        return Err(CliError::Cap(format!(
            "{} qubits exceeds iterative_cap {}",
            spec.total_qubits, cfg.iterative_cap
        )));
    }
    Ok(())
}

fn dense_ok(cfg: &RunConfig, spec: &HamiltonianSpec) -> bool {
    spec.total_qubits <= cfg.dense_cap
}

fn cmd_spectrum(cfg: &RunConfig, path: &Path, beta: Option<f64>, csv: bool) -> Result<String, CliError> {
    let (spec, digest) = read_spec(path)?;
    check_caps(cfg, &spec)?;
    if csv {
        if !dense_ok(cfg, &spec) {
            return Err(CliError::Cap(format!(
                "{} qubits exceeds dense_cap {}",
                spec.total_qubits, cfg.dense_cap
            )));
        }
        let eigs = eigenvalues(&spec)?;
        let config = serde_json::to_string(cfg).expect("config serializes");
        let mut s = format!("# schema_version={SCHEMA_VERSION}\n# config={config}\n# input_sha256={digest}\nindex,eigenvalue\n");
        for (i, e) in eigs.iter().enumerate() {
            let _ = writeln!(s, "{i},{e:?}");
        }
        return Ok(s);
    }
    #[derive(Serialize)]
    struct SpectrumSummary {
        qubits: usize,
        lambda: f64,
        method: hamreduce::spectra::Method,
        residual: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        beta: Option<f64>,
        #[serde(rename = "Z", skip_serializing_if = "Option::is_none")]
        z: Option<f64>,
    }
    let res = ground_energy_with(&spec, &cfg.solver_options())?;
    let z = match beta {
        Some(b) if dense_ok(cfg, &spec) => Some(partition_function_exact(&spec, b)?),
        Some(_) => {
            return Err(CliError::Cap(format!(
                "Z(β) needs the full spectrum; {} qubits exceeds dense_cap {}",
                spec.total_qubits, cfg.dense_cap
            )))
        }
        None => None,
    };
    Ok(envelope(
        "spectrum",
        cfg,
        digest,
        SpectrumSummary {
            qubits: spec.total_qubits,
            lambda: res.ground_energy,
            method: res.method,
            residual: res.residual,
            beta,
            z,
        },
    ))
}

fn cmd_qpf(
    cfg: &RunConfig,
    path: &Path,
    beta: f64,
    delta: f64,
    backend: BackendArg,
) -> Result<String, CliError> {
    let (spec, digest) = read_spec(path)?;
    if !dense_ok(cfg, &spec) {
        return Err(CliError::Cap(format!(
            "{} qubits exceeds dense_cap {}",
            spec.total_qubits, cfg.dense_cap
        )));
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(CliError::Input(format!("beta must be positive, got {beta}")));
    }
    let backend = match backend {
        BackendArg::Ideal => Backend::Ideal,
        BackendArg::Simulated => Backend::Simulated,
    };
    let est = qpf_algorithm(&spec, beta, delta, backend, &cfg.qpf, cfg.seed)?;
    let exact_z = partition_function_exact(&spec, beta).ok();
    #[derive(Serialize)]
    struct QpfResult {
        backend: Backend,
        beta: f64,
        delta: f64,
        z_half: f64,
        bins: Vec<hamreduce::qpf::CountEstimate>,
        energy_bins: hamreduce::qpf::EnergyBins,
        relative_error_target: f64,
        #[serde(rename = "exact_Z")]
        exact_z: Option<f64>,
        /// `z_half / Z`.
        ratio: Option<f64>,
    }
    Ok(envelope(
        "qpf",
        cfg,
        digest,
        QpfResult {
            backend,
            beta,
            delta,
            z_half: est.z_tilde_half,
            ratio: exact_z.map(|z| est.z_tilde_half / z),
            bins: est.bins,
            energy_bins: est.energy_bins,
            relative_error_target: est.relative_error_target,
            exact_z,
        },
    ))
}

fn cmd_clock_path(cfg: &RunConfig, n: usize, d: usize, two_step: bool) -> Result<String, CliError> {
    let sched = if d == 2 { johnson_path_d2(n)? } else { johnson_path_generic(n, d)? };
    let report = validate_schedule(&sched, two_step);
    #[derive(Serialize)]
    struct ClockPath {
        n_cl: usize,
        d: usize,
        steps: usize,
        two_step_checked: bool,
        valid: bool,
        report: hamreduce::clock::ScheduleReport,
        path: Vec<Vec<usize>>,
    }
    let digest = sha256_hex(format!("clock-path n={n} d={d} two_step={two_step}").as_bytes());
    let valid = report.ok();
    let out = envelope(
        "clock-path",
        cfg,
        digest,
        ClockPath {
            n_cl: n,
            d,
            steps: sched.total_steps(),
            two_step_checked: two_step,
            valid,
            report,
            path: sched.path.clone(),
        },
    );
    if valid {
        Ok(out)
    } else {
        Err(CliError::Promise(format!("schedule failed validation:\n{out}")))
    }
}

fn cmd_gatecount(cfg: &RunConfig, input: &Path) -> Result<String, CliError> {
    let (phi, digest) = read_formula(input)?;
    Ok(envelope("gatecount", cfg, digest, gate_counts(&phi)?))
}

fn run(cli: Cli) -> Result<String, CliError> {
    let mut cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Reduce { input, flavor, out } => cmd_reduce(&cfg, &input, flavor, &out),
        Command::Spectrum { spec, beta, csv } => cmd_spectrum(&cfg, &spec, beta, csv),
        Command::Qpf {
            spec,
            beta,
            delta,
            backend,
            seed,
        } => {
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cmd_qpf(&cfg, &spec, beta, delta, backend)
        }
        Command::ClockPath { n, d, two_step } => cmd_clock_path(&cfg, n, d, two_step),
        Command::Gatecount { input } => cmd_gatecount(&cfg, &input),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
