use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use enet_core::energy::{build_frame, EnergySpace, EnergyVector};
use enet_core::graph::{generate_chain, ChainProfile, Network, VertexId};
use enet_core::harmonics::solve_harmonic_truncation;
use enet_core::io::{format_network, load_network, load_pair, NetworkFormat};
use enet_core::laplacian::build_l2_laplacian;
use enet_core::spectral::{
    compare_spectra, defect_probe_chain, eig_energy, eig_l2, spectral_measure_of, InnerKind,
};
use enet_core::variation::{dyadic_intervals, make_pair, random_unit_vector, ConductancePair};
use enet_core::Error;

#[derive(Parser, Debug)]
#[command(name = "enet", version, about = "Energy-space computations on electrical networks")]
struct Cli {
    /// Numerical tolerance for checks.
    #[arg(long, global = true, default_value_t = 1e-9)]
    tol: f64,
    /// Truncation size for generated networks.
    #[arg(long, global = true, default_value_t = 30)]
    n: usize,
    /// Seed for randomized test vectors.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Which {
    L2,
    Energy,
    Compare,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Suite {
    Dipole,
    Intertwine,
    Trace,
    Domination,
    Harmonic,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a network file against the conductance axioms.
    Validate { path: PathBuf },
    /// Generate a chain network (unit, linear, geometric:A, two_sided_geometric:A).
    Gen { profile: String, size: Option<usize> },
    /// Dipole v_xy as gauge-fixed vertex values.
    Dipole { path: PathBuf, x: i64, y: i64 },
    /// Effective resistance between two vertices.
    Distance { path: PathBuf, x: i64, y: i64 },
    /// Gramian G(x, y) = <v_x, v_y> on all non-base vertices.
    Gramian { path: PathBuf },
    /// Eigenvalues of a Laplacian realization, or their comparison.
    Spectrum {
        path: PathBuf,
        #[arg(long, value_enum, default_value_t = Which::Compare)]
        which: Which,
    },
    /// Spectral measure of a point mass or of a seeded random vector.
    Measure {
        path: PathBuf,
        #[arg(long, value_enum, default_value_t = Which::Energy)]
        which: Which,
        /// Use the point mass at this vertex label.
        #[arg(long)]
        vertex: Option<i64>,
    },
    /// Compare two conductances on the same graph.
    Compare {
        /// Base network (or a pair JSON file when `upper` is omitted).
        base: PathBuf,
        upper: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Suite::Trace)]
        suite: Suite,
    },
    /// Frame coefficients of a seeded random vector, with Parseval checks.
    Frame { path: PathBuf },
    /// Defect recursion on a half-line chain profile (horizon from --n).
    Defect { profile: String },
    /// Export the grounded Laplacian (Matrix Market, or dense CSV with --dense).
    Laplacian {
        path: PathBuf,
        #[arg(long)]
        dense: bool,
    },
    /// Harmonic extension of boundary data given as a JSON map {label: value}.
    Harmonic { path: PathBuf, boundary: PathBuf },
}

#[derive(Debug)]
enum CliError {
    Core(Error),
    Usage(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Core(Error::Io(_)) => 1,
            CliError::Core(
                Error::Parse { .. } | Error::Invalid(_) | Error::InvalidVertex(_) | Error::Dimension { .. },
            ) => 2,
            CliError::Core(Error::NonConvergence { .. } | Error::Numerical(_)) => 3,
            CliError::Core(Error::Precondition(_)) => 4,
            CliError::Usage(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Usage(m) => f.write_str(m),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn emit(cli: &Cli, text: &str) -> CliResult<()> {
    match &cli.out {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Core(Error::Io(e))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_json(cli: &Cli, v: &Value) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    emit(cli, &s)
}

fn load(path: &Path) -> CliResult<Network> {
    Ok(load_network(path, NetworkFormat::from_path(path))?)
}

fn vertex(net: &Network, label: i64) -> CliResult<VertexId> {
    net.vertex_by_label(label).ok_or_else(|| CliError::Usage(format!("unknown vertex label {label}")))
}

fn labeled_values(net: &Network, v: &EnergyVector) -> Value {
    let mut doc = v.to_json(net);
    doc["vertices"] = json!(net.labels());
    doc
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Validate { path } => validate(cli, path),
        Command::Gen { profile, size } => {
            let profile: ChainProfile = profile.parse()?;
            let net = generate_chain(size.unwrap_or(cli.n), profile)?;
            let fmt = match (&cli.out, cli.format) {
                (Some(p), _) => NetworkFormat::from_path(p),
                (None, Format::Json) => NetworkFormat::Json,
                (None, Format::Csv) => NetworkFormat::EdgeList,
            };
            emit(cli, &format_network(&net, fmt))
        }
        Command::Dipole { path, x, y } => {
            let net = load(path)?;
            let space = EnergySpace::new(&net)?;
            let (vx, vy) = (vertex(&net, *x)?, vertex(&net, *y)?);
            let v = space.dipole(vx, vy)?;
            let residual = space.dipole_residual(&v, vx, vy);
            match cli.format {
                Format::Json => {
                    let mut doc = labeled_values(&net, &v);
                    doc["x"] = json!(x);
                    doc["y"] = json!(y);
                    doc["residual"] = json!(residual);
                    emit_json(cli, &doc)
                }
                Format::Csv => {
                    let mut out = String::from("vertex,value\n");
                    for (l, val) in net.labels().iter().zip(v.values()) {
                        let _ = writeln!(out, "{l},{val:?}");
                    }
                    emit(cli, &out)
                }
            }
        }
        Command::Distance { path, x, y } => {
            let net = load(path)?;
            let d = EnergySpace::new(&net)?.resistance(vertex(&net, *x)?, vertex(&net, *y)?)?;
            match cli.format {
                Format::Json => emit_json(cli, &json!({ "x": x, "y": y, "distance": d })),
                Format::Csv => emit(cli, &format!("x,y,distance\n{x},{y},{d:?}\n")),
            }
        }
        Command::Gramian { path } => {
            let net = load(path)?;
            let g = EnergySpace::new(&net)?.gramian_matrix()?;
            let labels: Vec<i64> = net.reduced_vertices().iter().map(|&v| net.label(v)).collect();
            match cli.format {
                Format::Json => {
                    let rows: Vec<Vec<f64>> =
                        (0..g.nrows()).map(|i| g.row(i).iter().copied().collect()).collect();
                    emit_json(cli, &json!({ "vertices": labels, "matrix": rows }))
                }
                Format::Csv => {
                    let mut out = String::from("x,y,gramian\n");
                    for (i, a) in labels.iter().enumerate() {
                        for (j, b) in labels.iter().enumerate() {
                            let _ = writeln!(out, "{a},{b},{:?}", g[(i, j)]);
                        }
                    }
                    emit(cli, &out)
                }
            }
        }
        Command::Spectrum { path, which } => spectrum(cli, &load(path)?, *which),
        Command::Measure { path, which, vertex: label } => measure(cli, &load(path)?, *which, *label),
        Command::Compare { base, upper, suite } => {
            let (b, u) = match upper {
                Some(up) => (load(base)?, load(up)?),
                None => load_pair(base)?,
            };
            compare(cli, &make_pair(&b, &u)?, *suite)
        }
        Command::Frame { path } => frame(cli, &load(path)?),
        Command::Defect { profile } => {
            let probe = defect_probe_chain(profile.parse()?, cli.n)?;
            match cli.format {
                Format::Json => emit_json(cli, &serde_json::to_value(&probe).expect("serializes")),
                Format::Csv => emit(cli, &probe.to_csv()),
            }
        }
        Command::Laplacian { path, dense } => {
            let net = load(path)?;
            let m = build_l2_laplacian(&net);
            if *dense {
                emit(cli, &m.to_dense_csv(&net)?)
            } else {
                emit(cli, &m.to_matrix_market())
            }
        }
        Command::Harmonic { path, boundary } => harmonic(cli, &load(path)?, boundary),
    }
}

fn validate(cli: &Cli, path: &Path) -> CliResult<()> {
    match load(path) {
        Ok(net) => {
            emit_json(cli, &json!({ "ok": true, "vertices": net.n_vertices(), "edges": net.edges().len() }))
        }
        Err(CliError::Core(Error::Invalid(v))) => {
            let list: Vec<String> = v.0.iter().map(|x| x.to_string()).collect();
            emit_json(cli, &json!({ "ok": false, "violations": list }))?;
            Err(CliError::Core(Error::Invalid(v)))
        }
        Err(e) => Err(e),
    }
}

fn spectrum(cli: &Cli, net: &Network, which: Which) -> CliResult<()> {
    if which == Which::Compare {
        let report = compare_spectra(net, cli.tol.max(1e-8))?;
        return match cli.format {
            Format::Json => emit_json(cli, &report.to_json()),
            Format::Csv => {
                let mut out = String::from("lambda_l2,lambda_energy\n");
                for (a, b) in &report.pairs {
                    let _ = writeln!(out, "{a:?},{b:?}");
                }
                emit(cli, &out)
            }
        };
    }
    let sys = if which == Which::L2 { eig_l2(net)? } else { eig_energy(net)? };
    match cli.format {
        Format::Json => emit_json(cli, &sys.to_json()),
        Format::Csv => emit(cli, &sys.to_csv()),
    }
}

fn measure(cli: &Cli, net: &Network, which: Which, label: Option<i64>) -> CliResult<()> {
    let (sys, kind) = match which {
        Which::L2 => (eig_l2(net)?, InnerKind::L2),
        Which::Energy => (eig_energy(net)?, InnerKind::Energy),
        Which::Compare => return Err(CliError::Usage("measure needs --which l2 or energy".into())),
    };
    let coords = match label {
        Some(l) => {
            let v = vertex(net, l)?;
            let mut c = vec![0.0; net.reduced_dim()];
            let i = net.reduced_index(v).ok_or_else(|| {
                CliError::Core(Error::Precondition("point mass at the base point is not in V'".into()))
            })?;
            c[i] = 1.0;
            c
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
            random_unit_vector(&mut rng, &EnergySpace::new(net)?)?.reduced()
        }
    };
    let m = spectral_measure_of(net, &sys, &coords)?;
    match cli.format {
        Format::Json => {
            let mut doc = m.to_json();
            doc["inner"] = json!(kind);
            doc["moment_defect"] = json!(m.moment_defect());
            emit_json(cli, &doc)
        }
        Format::Csv => emit(cli, &m.to_csv()),
    }
}

fn frame(cli: &Cli, net: &Network) -> CliResult<()> {
    let fs = build_frame(net, 1e-12)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    let u = random_unit_vector(&mut rng, fs.space())?;
    let coeffs = fs.analyze(&u)?;
    let back = fs.synthesize(&coeffs)?;
    let norm_defect = (coeffs.iter().map(|c| c * c).sum::<f64>() - fs.space().norm_sq(&u)).abs();
    let reconstruction = fs.space().norm_sq(&back.sub(&u)).max(0.0).sqrt();
    match cli.format {
        Format::Json => emit_json(
            cli,
            &json!({
                "frame_size": fs.len(),
                "coefficients": coeffs,
                "norm_defect": norm_defect,
                "reconstruction_defect": reconstruction,
                "tol": cli.tol,
            }),
        ),
        Format::Csv => emit(cli, &fs.coefficients_csv(&coeffs)?),
    }
}

fn compare(cli: &Cli, pair: &ConductancePair, suite: Suite) -> CliResult<()> {
    let tol = cli.tol;
    let (bn, un) = (pair.base().network(), pair.upper().network());
    let report = match suite {
        Suite::Dipole => {
            let mut dipole = 0.0_f64;
            for e in bn.edges() {
                let pulled = pair.pullback(&pair.base().dipole(e.x, e.y)?)?;
                let direct = pair.upper().dipole(e.x, e.y)?;
                dipole = dipole.max(pair.upper().norm_sq(&pulled.sub(&direct)).max(0.0).sqrt());
            }
            let (mut sum, mut diff, mut variant) = (0.0_f64, 0.0_f64, 0.0_f64);
            for x in 0..bn.n_vertices() {
                let r = pair.pullback_delta(VertexId(x))?;
                sum = sum.max(r.dipole_sum_residual / r.scale);
                diff = diff.max(r.difference_residual / r.scale.max(r.term_scale));
                variant = variant.max(r.variant_residual / r.scale.max(r.term_scale));
            }
            json!({
                "suite": "dipole",
                "tol": tol,
                "dipole_pullback_residual": dipole,
                "delta_dipole_sum_residual": sum,
                "delta_difference_residual": diff,
                "delta_variant_residual": variant,
                "ok": dipole <= tol && sum <= tol && diff <= tol,
            })
        }
        Suite::Intertwine => {
            let r = pair.intertwine_check(bn.edges().len())?;
            let w = pair.isometric_factor()?;
            json!({
                "suite": "intertwine",
                "tol": tol,
                "samples": r.samples,
                "max_residual": r.max_residual,
                "max_relative": r.max_relative,
                "isometry_defect": w.isometry_defect,
                "factorization_defect": w.factorization_defect,
                "condition": w.condition,
                "ill_conditioned": w.ill_conditioned,
                "conjugation_residual": w.intertwining_residual,
                "ok": r.max_relative <= tol.max(1e-8) && w.isometry_defect <= tol,
            })
        }
        Suite::Trace => {
            let t = pair.trace_gram()?;
            json!({
                "suite": "trace",
                "tol": tol,
                "trace": t.trace,
                "trace_dipole_basis": t.trace_dipole_basis,
                "basis_gap": (t.trace - t.trace_dipole_basis).abs(),
                "dim": t.dim,
                "closed_form": t.closed_form,
                "limit": t.limit,
            })
        }
        Suite::Domination => {
            let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
            let u = random_unit_vector(&mut rng, pair.base())?;
            let sys_c = eig_energy(bn)?;
            let sys_a = eig_energy(un)?;
            let top = sys_c.eigenvalues().iter().chain(sys_a.eigenvalues()).fold(0.0_f64, |m, v| m.max(*v));
            let rep = pair.spectral_domination_with(&sys_c, &sys_a, &u, &dyadic_intervals(top, 3))?;
            if cli.format == Format::Csv {
                return emit(cli, &rep.to_csv());
            }
            let mut doc = serde_json::to_value(&rep).expect("serializes");
            doc["suite"] = json!("domination");
            doc["flags_failed"] = json!(rep.flags_failed());
            doc["moments_hold"] = json!(rep.moments_hold());
            doc
        }
        Suite::Harmonic => {
            let n = bn.n_vertices();
            if n < 3 {
                return Err(CliError::Core(Error::Precondition(
                    "harmonic suite needs at least 3 vertices".into(),
                )));
            }
            let boundary = BTreeMap::from([(VertexId(0), 0.0), (VertexId(n - 1), 1.0)]);
            let ext = solve_harmonic_truncation(bn, &boundary)?;
            let h = ext.energy_vector(bn)?;
            let interior: Vec<VertexId> = (1..n - 1).map(VertexId).collect();
            let out = pair.harmonic_pullback_check(&h, &interior)?;
            json!({
                "suite": "harmonic",
                "tol": tol,
                "input_residual": ext.interior_residual,
                "pullback_residual": out,
                "ok": out <= tol.max(1e-8),
            })
        }
    };
    emit_json(cli, &report)
}

fn harmonic(cli: &Cli, net: &Network, boundary: &Path) -> CliResult<()> {
    let text = fs::read_to_string(boundary).map_err(|e| CliError::Core(Error::Io(e)))?;
    let raw: BTreeMap<String, f64> = serde_json::from_str(&text)
        .map_err(|e| CliError::Core(Error::Parse { line: e.line(), message: e.to_string() }))?;
    let mut data = BTreeMap::new();
    for (k, v) in raw {
        let label: i64 = k.parse().map_err(|_| CliError::Usage(format!("bad vertex label {k:?}")))?;
        data.insert(vertex(net, label)?, v);
    }
    let ext = solve_harmonic_truncation(net, &data)?;
    let energy = enet_core::energy::energy_inner(net, &ext.values, &ext.values)?;
    match cli.format {
        Format::Json => emit_json(
            cli,
            &json!({
                "vertices": net.labels(),
                "values": ext.values,
                "interior_residual": ext.interior_residual,
                "energy": energy,
            }),
        ),
        Format::Csv => {
            let mut out = String::from("vertex,value\n");
            for (l, v) in net.labels().iter().zip(&ext.values) {
                let _ = writeln!(out, "{l},{v:?}");
            }
            emit(cli, &out)
        }
    }
}
