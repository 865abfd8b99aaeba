//! `prbm`: command-line front end.
//!
//! Every run writes a JSON manifest echoing the resolved configuration. With
//! `--out FILE` the CSV goes to `FILE` and the manifest to `FILE.manifest.json`
//! (or `--manifest`); otherwise CSV goes to stdout and the manifest to stderr.
//! `--config FILE` supplies flags as JSON (`{"simulate": {"walkers": 1000}}` or flat);
//! flags given on the command line win. Halfspace tables open with a `# {json}`
//! metadata line. Exit codes: 0 success, 1 domain error, 2 usage error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use prbm::dtn::{
    absorption_distribution, build_m, build_q, dirichlet_density, hitting_distribution, impedance_curve,
    spectrum as dtn_spectrum, spreading_operator,
};
use prbm::geometry::{rasterize, DomainSpec, LatticeDomain, Polyline};
use prbm::halfspace::{absorption_probability_disk, spread_kernel_t, stopping_time_cdf, stopping_time_density};
use prbm::lsa::{compare_flux, koch_island, LsaCell};
use prbm::quadrature::QuadratureConfig;
use prbm::rng::RngStream;
use prbm::spectral::{
    annulus_cell_impedance, annulus_spectrum, ball_spectrum, disk_spectrum, impedance_from_spectrum,
    uniform_circle_weights, AnalyticSpectrum, BallSide,
};
use prbm::walkers::{
    estimate_lattice_measure, estimate_spread_measure, estimate_stopping_time, Binning, Caps, Emission,
    EnsembleConfig, JumpParams, MeasureHistogram, StoppingTimeConfig,
};
use prbm::{fixtures, validation, PrbmError};

#[derive(Parser, Debug)]
#[command(name = "prbm", version, about = "Partially reflected Brownian motion experiments", args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
struct Output {
    /// CSV destination (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Manifest destination (default `<out>.manifest.json`, or stderr without --out).
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
enum Command {
    /// Half-space closed forms: absorption probability, stopping-time and spread-kernel tables.
    Halfspace(HalfspaceArgs),
    /// Monte Carlo ensembles: jump walker, lattice walker, stopping time.
    Simulate(SimulateArgs),
    /// Analytic or lattice Dirichlet-to-Neumann spectrum.
    Spectrum(SpectrumArgs),
    /// Impedance over a log-spaced Lambda grid.
    Impedance(ImpedanceArgs),
    /// Lattice operators Q, M, T and the hitting/absorption distributions.
    Dtn(DtnArgs),
    /// Land Surveyor Approximation flux comparison.
    Lsa(LsaArgs),
    /// Bundled cross-check suite.
    Validate(ValidateArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum HalfspaceTable {
    /// (t, rho_Lambda(t))
    Density,
    /// (s, t_Lambda(s))
    Kernel,
    /// (r / Lambda, P_Lambda)
    Prob,
}

#[derive(Args, Debug, Serialize)]
struct HalfspaceArgs {
    /// Print only the absorption probability for a disk of radius `ratio * Lambda`.
    #[arg(long)]
    prob: bool,
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// Disk radius over Lambda.
    #[arg(long, default_value_t = 0.5)]
    ratio: f64,
    #[arg(long, value_enum, default_value_t = HalfspaceTable::Prob)]
    table: HalfspaceTable,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Upper end of the table abscissa (in units of Lambda, or Lambda^2 for times).
    #[arg(long, default_value_t = 10.0)]
    max: f64,
    #[arg(long, default_value_t = 101)]
    points: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Walker {
    /// Half-plane (d = 2) or half-space (d = 3) jump walker.
    #[value(alias = "halfplane", alias = "half-plane")]
    Halfspace,
    Disk,
    DiskExterior,
    Ball,
    BallExterior,
    Annulus,
    /// Lattice walker on a fixture or lattice file.
    Lattice,
    /// Stopping time of the reflected walk on the hyperplane.
    StoppingTime,
}

#[derive(Args, Debug, Clone, Serialize)]
struct LatticeArgs {
    /// Bundled fixture (box16, closed-box, cube, disk, annulus, koch, strip).
    #[arg(long)]
    fixture: Option<String>,
    /// Lattice domain JSON file.
    #[arg(long, alias = "domain-file")]
    lattice: Option<PathBuf>,
    /// Working polyline JSON (list of [x, y]) to rasterize at --mesh.
    #[arg(long)]
    working: Option<PathBuf>,
    /// Source polyline JSON.
    #[arg(long)]
    source: Option<PathBuf>,
    /// Mesh for rasterization, or for the disk/annulus/koch fixtures.
    #[arg(long)]
    mesh: Option<f64>,
    /// Annulus outer radius (walker, analytic spectrum, or fixture; default 2).
    #[arg(long)]
    outer_radius: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[arg(long, alias = "domain", value_enum, default_value_t = Walker::Halfspace)]
    walker: Walker,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Jump walker reflection distance or stopping-time lattice step.
    #[arg(long, alias = "jump", default_value_t = 0.01)]
    a: f64,
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// Start point, comma separated (defaults to distance `a` above the boundary).
    #[arg(long, value_delimiter = ',')]
    start: Option<Vec<f64>>,
    #[arg(long, default_value_t = 100_000)]
    walkers: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10_000_000)]
    max_steps: u64,
    /// Escape radius for unbounded domains (default 1e4 Lambda).
    #[arg(long)]
    escape_radius: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    censor_ceiling: f64,
    #[arg(long, default_value_t = 1)]
    bins: usize,
    /// Lateral window for half-space binning (default [-Lambda/2, Lambda/2)).
    #[arg(long)]
    lo: Option<f64>,
    #[arg(long)]
    hi: Option<f64>,
    /// Lattice emission: `source` or a bulk site index.
    #[arg(long, default_value = "source")]
    emit: String,
    #[command(flatten)]
    lattice: LatticeArgs,
    #[command(flatten)]
    output: Output,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum SpectrumDomain {
    Disk,
    Ball,
    Annulus,
    Lattice,
}

#[derive(Args, Debug, Serialize)]
struct SpectrumArgs {
    #[arg(long, value_enum, default_value_t = SpectrumDomain::Disk)]
    domain: SpectrumDomain,
    #[arg(long)]
    exterior: bool,
    /// Highest angular index.
    #[arg(long, default_value_t = 10)]
    max_index: u64,
    #[arg(long, default_value_t = 3)]
    d: u64,
    /// Number of lattice modes to report (all when absent).
    #[arg(long)]
    modes: Option<usize>,
    #[command(flatten)]
    lattice: LatticeArgs,
    #[command(flatten)]
    output: Output,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ImpedanceDomain {
    /// Closed-form annulus spectrum.
    Annulus,
    Lattice,
}

#[derive(Args, Debug, Serialize)]
struct ImpedanceArgs {
    #[arg(long, value_enum, default_value_t = ImpedanceDomain::Annulus)]
    domain: ImpedanceDomain,
    #[arg(long, default_value_t = 1e-2)]
    lambda_min: f64,
    #[arg(long, default_value_t = 1e2)]
    lambda_max: f64,
    #[arg(long, default_value_t = 9)]
    points: usize,
    #[arg(long, default_value_t = 1.0)]
    diffusion: f64,
    /// Analytic annulus outer radius.
    #[arg(long, default_value_t = 1.5)]
    radius: f64,
    #[arg(long, default_value_t = 200)]
    max_index: u64,
    #[command(flatten)]
    lattice: LatticeArgs,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug, Serialize)]
struct DtnArgs {
    /// Lambda for the per-link table and the T dump.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Comma-separated Lambda values for the impedance table.
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1.0)]
    diffusion: f64,
    /// Impedance CSV destination (default `<out>.impedance.csv`).
    #[arg(long)]
    impedance_out: Option<PathBuf>,
    /// Per-link table (weight, P0, P_Lambda) destination.
    #[arg(long)]
    links_out: Option<PathBuf>,
    /// Directory for the binary Q, M, T dumps and their JSON sidecar.
    #[arg(long)]
    dump_dir: Option<PathBuf>,
    #[command(flatten)]
    lattice: LatticeArgs,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug, Serialize)]
struct LsaArgs {
    /// Working curve JSON (list of [x, y]).
    #[arg(long)]
    curve: Option<PathBuf>,
    /// Use the quadratic Koch island of this generation instead of --curve.
    #[arg(long)]
    koch: Option<usize>,
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    mesh: f64,
    /// Square source of this half-width around a closed curve.
    #[arg(long, default_value_t = 3.0)]
    half_width: f64,
    /// Treat the curve as flat with a parallel source at this height (periodic cell).
    #[arg(long)]
    strip_height: Option<f64>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args, Debug, Serialize)]
struct ValidateArgs {
    #[command(flatten)]
    output: Output,
}

/// Shortest round-trip decimal; exponent form outside [1e-4, 1e15).
struct F(f64);

impl std::fmt::Display for F {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let a = self.0.abs();
        if self.0 == 0.0 || !self.0.is_finite() || (1e-4..1e15).contains(&a) {
            write!(f, "{}", self.0)
        } else {
            write!(f, "{:e}", self.0)
        }
    }
}

/// Result of a subcommand: a CSV (or JSON) payload plus manifest extras.
struct Outcome {
    payload: String,
    extra: Value,
}

impl Outcome {
    fn new(payload: String) -> Self {
        Self { payload, extra: json!({}) }
    }
}

#[derive(Debug)]
enum Failure {
    Domain(PrbmError),
    Usage(String),
}

impl From<PrbmError> for Failure {
    fn from(e: PrbmError) -> Self {
        Failure::Domain(e)
    }
}

type Run<T> = std::result::Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Run<Vec<f64>> {
    if !(lo > 0.0) || !(hi >= lo) || n == 0 {
        return Err(usage(format!("need 0 < lambda-min <= lambda-max and points >= 1, got {lo}, {hi}, {n}")));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    // powers of ten keep decade points exact
    let (l0, l1) = (lo.log10(), hi.log10());
    Ok((0..n).map(|i| 10f64.powf(l0 + (l1 - l0) * i as f64 / (n - 1) as f64)).collect())
}

fn read_polyline(path: &Path) -> Run<Polyline> {
    let text = fs::read_to_string(path).map_err(PrbmError::from)?;
    Ok(Polyline::from_json(&text)?)
}

fn load_lattice(l: &LatticeArgs) -> Run<LatticeDomain> {
    let chosen = [l.fixture.is_some(), l.lattice.is_some(), l.working.is_some()].iter().filter(|&&b| b).count();
    if chosen != 1 {
        return Err(usage("give exactly one of --fixture, --lattice, --working"));
    }
    if let Some(path) = &l.lattice {
        let text = fs::read_to_string(path).map_err(PrbmError::from)?;
        return Ok(LatticeDomain::from_json(&text)?);
    }
    if let Some(path) = &l.working {
        let mesh = l.mesh.ok_or_else(|| usage("--working needs --mesh"))?;
        let w = read_polyline(path)?;
        let s = l.source.as_deref().map(read_polyline).transpose()?;
        return Ok(rasterize(&w, s.as_ref(), mesh)?);
    }
    let name = l.fixture.as_deref().unwrap_or_default();
    let dom = match (name, l.mesh) {
        ("disk", Some(a)) => fixtures::unit_disk(a)?,
        ("annulus", a) if a.is_some() || l.outer_radius.is_some() => {
            fixtures::annulus(l.outer_radius.unwrap_or(2.0), a.unwrap_or(1.0 / 16.0))?
        }
        ("koch", Some(a)) => fixtures::koch_cell(a)?,
        _ => fixtures::by_name(name)?,
    };
    Ok(dom)
}

fn histogram_extra(h: &MeasureHistogram) -> Value {
    json!({
        "total": h.total,
        "working_absorbed": h.working_absorbed(),
        "overflow": h.overflow,
        "source": h.source,
        "censored": h.censored,
        "mean_reflections": h.mean_reflections(),
        "partition_holds": h.partition_holds(),
    })
}

fn halfspace(args: &HalfspaceArgs) -> Run<Outcome> {
    let cfg = QuadratureConfig::default();
    if args.prob {
        let p = absorption_probability_disk(args.ratio, 1.0, args.d, &cfg)?;
        return Ok(Outcome::new(format!("{p}\n")));
    }
    if args.points < 2 || !(args.max > 0.0) {
        return Err(usage("--points must be >= 2 and --max > 0"));
    }
    let l = args.lambda;
    let meta = json!({"table": args.table, "lambda": l, "d": args.d, "points": args.points, "max": args.max});
    let mut csv = format!("# {meta}\n");
    let xs = (0..args.points).map(|i| args.max * i as f64 / (args.points - 1) as f64);
    match args.table {
        HalfspaceTable::Density => {
            csv.push_str("t,rho,cdf\n");
            // t = 0 is excluded: the density vanishes there faster than any power
            for x in xs.skip(1) {
                let t = x * l * l;
                csv.push_str(&format!("{},{},{}\n", F(t), F(stopping_time_density(t, l)?), F(stopping_time_cdf(t, l)?)));
            }
        }
        HalfspaceTable::Kernel => {
            csv.push_str("s,t_lambda\n");
            for x in xs {
                let s = x * l;
                let sv = if args.d == 2 { vec![s] } else { vec![s, 0.0] };
                csv.push_str(&format!("{},{}\n", F(s), F(spread_kernel_t(&sv, l, args.d, &cfg)?)));
            }
        }
        HalfspaceTable::Prob => {
            csv.push_str("ratio,probability\n");
            for x in xs {
                csv.push_str(&format!("{},{}\n", F(x), F(absorption_probability_disk(x, 1.0, args.d, &cfg)?)));
            }
        }
    }
    Ok(Outcome::new(csv))
}

fn simulate(args: &SimulateArgs) -> Run<Outcome> {
    let base = RngStream::new(args.seed, 0);
    let mut ens = EnsembleConfig::new(args.walkers, base);
    ens.censor_ceiling = args.censor_ceiling;
    let mut caps = Caps { max_steps: args.max_steps, ..Caps::for_lambda(args.lambda) };
    if let Some(r) = args.escape_radius {
        caps.escape_radius = r;
    }
    if args.walker == Walker::StoppingTime {
        let s = estimate_stopping_time(args.lambda, args.a, args.walkers, base, &StoppingTimeConfig::default())?;
        let ks = s.ks_distance(|t| stopping_time_cdf(t, args.lambda).unwrap_or(f64::NAN));
        let mut csv = String::from("quantile,t,cdf\n");
        for k in 1..100 {
            let q = k as f64 / 100.0;
            // quantiles of the full sample; censored draws sit beyond every observed time
            let i = (q * s.total as f64) as usize;
            let t = s.times.get(i).copied().unwrap_or(f64::INFINITY);
            csv.push_str(&format!("{},{},{}\n", F(q), F(t), F(stopping_time_cdf(t, args.lambda).unwrap_or(1.0))));
        }
        let extra = json!({"total": s.total, "censored": s.censored, "ks_distance": ks, "median": s.median()});
        return Ok(Outcome { payload: csv, extra });
    }
    if args.walker == Walker::Lattice {
        let dom = load_lattice(&args.lattice)?;
        let emission = if args.emit == "source" {
            Emission::Source
        } else {
            Emission::Site(args.emit.parse().map_err(|_| usage(format!("--emit: expected `source` or a site index, got {}", args.emit)))?)
        };
        let h = estimate_lattice_measure(&dom, emission, args.lambda, &ens, &caps)?;
        let mut csv = String::from("link,x,y,z,count,fraction,stderr\n");
        for k in dom.working_links() {
            let m = dom.link_midpoint(k);
            csv.push_str(&format!("{k},{},{},{},{},{},{}\n", F(m[0]), F(m[1]), F(m[2]), h.counts[k], F(h.estimate(k)), F(h.stderr(k))));
        }
        return Ok(Outcome { payload: csv, extra: histogram_extra(&h) });
    }
    let (dom, binning, default_start) = match args.walker {
        Walker::Halfspace => {
            let lo = args.lo.unwrap_or(-args.lambda / 2.0);
            let hi = args.hi.unwrap_or(args.lambda / 2.0);
            let mut x = vec![0.0; args.d];
            x[args.d.max(1) - 1] = args.a;
            (DomainSpec::half_space(args.d)?, Binning::Lateral { lo, hi, bins: args.bins }, x)
        }
        Walker::Disk => (disk_like(prbm::geometry::CanonicalKind::DiskInterior, 2)?, Binning::Angle { bins: args.bins }, vec![0.0, 0.0]),
        Walker::DiskExterior => (disk_like(prbm::geometry::CanonicalKind::DiskExterior, 2)?, Binning::Angle { bins: args.bins }, vec![2.0, 0.0]),
        Walker::Ball => (disk_like(prbm::geometry::CanonicalKind::BallInterior, 3)?, Binning::Angle { bins: args.bins }, vec![0.0; 3]),
        Walker::BallExterior => (disk_like(prbm::geometry::CanonicalKind::BallExterior, 3)?, Binning::Angle { bins: args.bins }, vec![2.0, 0.0, 0.0]),
        Walker::Annulus => {
            let r = args.lattice.outer_radius.unwrap_or(2.0);
            (DomainSpec::annulus(r)?, Binning::Angle { bins: args.bins }, vec![(1.0 + r) / 2.0, 0.0])
        }
        Walker::Lattice | Walker::StoppingTime => unreachable!("handled above"),
    };
    let start = args.start.clone().unwrap_or(default_start);
    let p = JumpParams::new(args.a, args.lambda)?;
    let h = estimate_spread_measure(&dom, &start, &p, binning, &ens, &caps)?;
    let mut csv = String::from("bin_lo,bin_hi,count,fraction,stderr\n");
    for (i, (lo, hi)) in h.binning.edges().into_iter().enumerate() {
        csv.push_str(&format!("{},{},{},{},{}\n", F(lo), F(hi), h.counts[i], F(h.estimate(i)), F(h.stderr(i))));
    }
    Ok(Outcome { payload: csv, extra: histogram_extra(&h) })
}

fn disk_like(kind: prbm::geometry::CanonicalKind, d: usize) -> Run<DomainSpec> {
    Ok(prbm::geometry::make_canonical(kind, &prbm::geometry::DomainParams { dimension: Some(d), outer_radius: None })?)
}

fn analytic_csv(sp: &AnalyticSpectrum) -> String {
    let mut csv = String::from("index,mu,degeneracy\n");
    for e in &sp.eigenvalues {
        csv.push_str(&format!("{},{},{}\n", e.index, F(e.mu), e.degeneracy));
    }
    csv
}

fn spectrum(args: &SpectrumArgs) -> Run<Outcome> {
    match args.domain {
        SpectrumDomain::Disk => Ok(Outcome::new(analytic_csv(&disk_spectrum(args.exterior, args.max_index)))),
        SpectrumDomain::Ball => {
            let side = if args.exterior { BallSide::Exterior } else { BallSide::Interior };
            Ok(Outcome::new(analytic_csv(&ball_spectrum(side, args.max_index, args.d)?)))
        }
        SpectrumDomain::Annulus => Ok(Outcome::new(analytic_csv(&annulus_spectrum(args.lattice.outer_radius.unwrap_or(2.0), args.max_index)?))),
        SpectrumDomain::Lattice => {
            let dom = load_lattice(&args.lattice)?;
            let op = build_m(&build_q(&dom)?);
            let g = if op.has_source { Some(dirichlet_density(&op)?) } else { None };
            let sp = dtn_spectrum(&op, g.as_deref())?;
            let n = args.modes.unwrap_or(sp.mu.len()).min(sp.mu.len());
            let mut csv = String::from("index,mu,weight\n");
            for i in 0..n {
                csv.push_str(&format!("{i},{},{}\n", F(sp.mu[i]), F(sp.f[i])));
            }
            let extra = json!({"modes": sp.mu.len(), "orthonormality_error": sp.max_orthonormality_error(), "weighted_by": if g.is_some() { "dirichlet-density" } else { "uniform" }});
            Ok(Outcome { payload: csv, extra })
        }
    }
}

fn impedance(args: &ImpedanceArgs) -> Run<Outcome> {
    if !(args.diffusion > 0.0) {
        return Err(usage("--diffusion must be > 0"));
    }
    let grid = log_grid(args.lambda_min, args.lambda_max, args.points)?;
    match args.domain {
        ImpedanceDomain::Annulus => {
            let sp = annulus_spectrum(args.radius, args.max_index)?;
            let f = uniform_circle_weights(&sp);
            let zc0 = annulus_cell_impedance(args.radius, 0.0, args.diffusion);
            let mut csv = String::from("lambda,z,z_cell,z_sp,z_sp_closed_form\n");
            for &l in &grid {
                let imp = impedance_from_spectrum(&sp.mu(), &f, l, args.diffusion, Some(zc0))?;
                let closed = l / (2.0 * std::f64::consts::PI * args.diffusion);
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    F(l),
                    F(imp.z),
                    F(annulus_cell_impedance(args.radius, l, args.diffusion)),
                    F(imp.z_sp()?),
                    F(closed)
                ));
            }
            Ok(Outcome { payload: csv, extra: json!({"z_cell0": zc0}) })
        }
        ImpedanceDomain::Lattice => {
            let dom = load_lattice(&args.lattice)?;
            let op = build_m(&build_q(&dom)?);
            let g = dirichlet_density(&op)?;
            let sp = dtn_spectrum(&op, Some(&g))?;
            let rows = impedance_curve(&sp, &op, &grid, args.diffusion)?;
            let mut csv = String::from("lambda,z,z_cell,z_cell0,z_sp,z_sp_difference,route_mismatch\n");
            for r in &rows {
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    F(r.lambda),
                    F(r.z),
                    F(r.z_cell),
                    F(r.z_cell0),
                    F(r.z_sp),
                    F(r.z_sp_difference),
                    F(r.route_mismatch())
                ));
            }
            Ok(Outcome { payload: csv, extra: json!({"working_links": op.len(), "bulk_sites": dom.n_bulk()}) })
        }
    }
}

/// Row-major little-endian f64 dump.
fn dump_matrix(dir: &Path, name: &str, n: usize, at: impl Fn(usize, usize) -> f64) -> Run<Value> {
    let file = format!("{name}.f64");
    let mut bytes = Vec::with_capacity(n * n * 8);
    for i in 0..n {
        for j in 0..n {
            bytes.extend_from_slice(&at(i, j).to_le_bytes());
        }
    }
    fs::write(dir.join(&file), bytes).map_err(PrbmError::from)?;
    Ok(json!({"name": name, "file": file, "rows": n, "cols": n, "dtype": "float64", "byte_order": "little", "layout": "row-major"}))
}

fn sibling(out: &Option<PathBuf>, given: &Option<PathBuf>, suffix: &str) -> Option<PathBuf> {
    given.clone().or_else(|| {
        out.as_ref().map(|p| {
            let mut s = p.clone().into_os_string();
            s.push(suffix);
            PathBuf::from(s)
        })
    })
}

fn write_file(path: &Path, text: &str) -> Run<()> {
    fs::write(path, text).map_err(|e| Failure::Domain(PrbmError::from(e)))
}

/// Spectrum table as payload; impedance, per-link and matrix outputs to side files.
fn dtn(args: &DtnArgs) -> Run<Outcome> {
    let impedance_path = sibling(&args.output.out, &args.impedance_out, ".impedance.csv");
    if args.lambda_grid.is_some() && impedance_path.is_none() {
        return Err(usage("--lambda-grid needs --out or --impedance-out"));
    }
    let dom = load_lattice(&args.lattice)?;
    let q = build_q(&dom)?;
    let op = build_m(&q);
    let n = op.len();
    let g = if op.has_source { Some(dirichlet_density(&op)?) } else { None };
    let sp = dtn_spectrum(&op, g.as_deref())?;
    let mut csv = String::from("index,mu,weight\n");
    for (i, (m, f)) in sp.mu.iter().zip(&sp.f).enumerate() {
        csv.push_str(&format!("{i},{},{}\n", F(*m), F(*f)));
    }
    let mut extra = json!({
        "working_links": n,
        "q_asymmetry": q.max_asymmetry(),
        "has_source": q.has_source,
        "orthonormality_error": sp.max_orthonormality_error(),
    });
    if let (Some(grid), Some(path)) = (&args.lambda_grid, &impedance_path) {
        if g.is_none() {
            return Err(Failure::Domain(PrbmError::InvalidParam("impedance needs a source boundary".into())));
        }
        let rows = impedance_curve(&sp, &op, grid, args.diffusion)?;
        let mut t = String::from("lambda,z,z_cell,z_cell0,z_sp,z_sp_difference,route_mismatch\n");
        for r in &rows {
            t.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                F(r.lambda),
                F(r.z),
                F(r.z_cell),
                F(r.z_cell0),
                F(r.z_sp),
                F(r.z_sp_difference),
                F(r.route_mismatch())
            ));
        }
        write_file(path, &t)?;
        extra["impedance_out"] = json!(path);
    }
    let needs_t = args.links_out.is_some() || args.dump_dir.is_some();
    let t = if needs_t { Some(spreading_operator(&op, args.lambda)?) } else { None };
    if let (Some(path), Some(t)) = (&args.links_out, &t) {
        let probs = if dom.has_source() {
            let hit = hitting_distribution(&dom)?;
            let p = absorption_distribution(&hit.p0, t, &op.weights)?;
            Some((hit.p0, p))
        } else {
            None
        };
        let mut table = String::from("link,x,y,z,weight,p0,p_lambda\n");
        for (i, &k) in q.links.iter().enumerate() {
            let m = dom.link_midpoint(k);
            let (p0, pl) = match &probs {
                Some((a, b)) => (F(a[i]).to_string(), F(b[i]).to_string()),
                None => (String::new(), String::new()),
            };
            table.push_str(&format!("{k},{},{},{},{},{p0},{pl}\n", F(m[0]), F(m[1]), F(m[2]), F(op.weights[i])));
        }
        write_file(path, &table)?;
        extra["links_out"] = json!(path);
    }
    if let (Some(dir), Some(t)) = (&args.dump_dir, &t) {
        fs::create_dir_all(dir).map_err(PrbmError::from)?;
        let mats = vec![
            dump_matrix(dir, "q", n, |i, j| q.q[(i, j)])?,
            dump_matrix(dir, "m", n, |i, j| op.m[(i, j)])?,
            dump_matrix(dir, "t", n, |i, j| t[(i, j)])?,
        ];
        let sidecar = json!({"lambda": args.lambda, "links": q.links, "weights": op.weights, "mesh": op.mesh, "dim": op.dim, "matrices": mats});
        let text = serde_json::to_string_pretty(&sidecar).map_err(PrbmError::from)?;
        write_file(&dir.join("matrices.json"), &text)?;
        extra["dump_dir"] = json!(dir);
    }
    Ok(Outcome { payload: csv, extra })
}

fn lsa(args: &LsaArgs) -> Run<Outcome> {
    let curve = match (&args.curve, args.koch) {
        (Some(p), None) => read_polyline(p)?,
        (None, Some(g)) => koch_island(g),
        _ => return Err(usage("give exactly one of --curve, --koch")),
    };
    let cell = match args.strip_height {
        Some(h) => LsaCell::PeriodicStrip { height: h },
        None => LsaCell::Box { half_width: args.half_width },
    };
    let report = compare_flux(&curve, cell, args.lambda, args.mesh)?;
    let text = serde_json::to_string_pretty(&report).map_err(PrbmError::from)?;
    Ok(Outcome::new(text + "\n"))
}

fn validate() -> Run<Outcome> {
    let checks = validation::run_all();
    let mut text = String::new();
    for c in &checks {
        text.push_str(&format!("{} {}: {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail));
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    let extra = json!({"checks": checks.len(), "failed": failed});
    if failed > 0 {
        // the table is still printed before the failure exit
        print!("{text}");
        return Err(Failure::Domain(PrbmError::InvalidParam(format!("{failed} validation check(s) failed"))));
    }
    Ok(Outcome { payload: text, extra })
}

/// Config file keys become `--key value` flags placed before the command-line
/// flags, so explicit flags win.
fn expand_config(argv: Vec<String>) -> std::result::Result<Vec<String>, String> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut config: Option<String> = None;
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            config = Some(it.next().ok_or("--config needs a file path")?);
        } else if let Some(p) = a.strip_prefix("--config=") {
            config = Some(p.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = config else { return Ok(rest) };
    let text = fs::read_to_string(&path).map_err(|e| format!("--config {path}: {e}"))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| format!("--config {path}: {e}"))?;
    let Some(sub_at) = rest.iter().skip(1).position(|a| !a.starts_with('-')).map(|i| i + 1) else {
        return Ok(rest);
    };
    let sub = rest[sub_at].clone();
    let obj = match value.get(&sub) {
        Some(Value::Object(o)) => o.clone(),
        _ => value.as_object().cloned().ok_or(format!("--config {path}: expected a JSON object"))?,
    };
    let mut flags = Vec::new();
    for (k, v) in obj {
        if v.is_object() {
            continue;
        }
        let flag = format!("--{}", k.replace('_', "-"));
        match v {
            Value::Bool(true) => flags.push(flag),
            Value::Bool(false) | Value::Null => {}
            Value::Array(items) => {
                let joined: Vec<String> = items.iter().map(|x| x.as_str().map(str::to_string).unwrap_or_else(|| x.to_string())).collect();
                flags.extend([flag, joined.join(",")]);
            }
            Value::String(s) => flags.extend([flag, s]),
            other => flags.extend([flag, other.to_string()]),
        }
    }
    rest.splice(sub_at + 1..sub_at + 1, flags);
    Ok(rest)
}

fn output_of(cmd: &Command) -> &Output {
    match cmd {
        Command::Halfspace(a) => &a.output,
        Command::Simulate(a) => &a.output,
        Command::Spectrum(a) => &a.output,
        Command::Impedance(a) => &a.output,
        Command::Dtn(a) => &a.output,
        Command::Lsa(a) => &a.output,
        Command::Validate(a) => &a.output,
    }
}

fn main() -> ExitCode {
    let argv = match expand_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let threads = match std::env::var("PRBM_THREADS") {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Some(n),
            _ => {
                eprintln!("error: PRBM_THREADS must be a positive integer, got {s:?}");
                return ExitCode::from(2);
            }
        },
        Err(_) => None,
    };
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: could not size the worker pool: {e}");
            return ExitCode::from(1);
        }
    }

    let started = Instant::now();
    let result = match &cli.command {
        Command::Halfspace(a) => halfspace(a),
        Command::Simulate(a) => simulate(a),
        Command::Spectrum(a) => spectrum(a),
        Command::Impedance(a) => impedance(a),
        Command::Dtn(a) => dtn(a),
        Command::Lsa(a) => lsa(a),
        Command::Validate(_) => validate(),
    };
    let out = output_of(&cli.command);
    let mut manifest = json!({
        "config": &cli.command,
        "version": env!("CARGO_PKG_VERSION"),
        "threads": threads.unwrap_or_else(rayon::current_num_threads),
        "started_unix": SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        "wall_time_s": started.elapsed().as_secs_f64(),
    });
    let code = match &result {
        Ok(o) => {
            manifest["status"] = json!("ok");
            manifest["result"] = o.extra.clone();
            0
        }
        Err(Failure::Domain(e)) => {
            manifest["status"] = json!("error");
            manifest["error"] = json!(e.to_string());
            1
        }
        Err(Failure::Usage(m)) => {
            manifest["status"] = json!("usage-error");
            manifest["error"] = json!(m);
            2
        }
    };
    if let Ok(o) = &result {
        match &out.out {
            Some(path) => {
                if let Err(e) = fs::write(path, &o.payload) {
                    eprintln!("error: writing {}: {e}", path.display());
                    return ExitCode::from(1);
                }
            }
            None => print!("{}", o.payload),
        }
    }
    let manifest_path = sibling(&out.out, &out.manifest, ".manifest.json");
    let text = serde_json::to_string(&manifest).unwrap_or_else(|_| "{}".into());
    match manifest_path {
        Some(p) => {
            if let Err(e) = fs::write(&p, text + "\n") {
                eprintln!("error: writing manifest {}: {e}", p.display());
            }
        }
        None => eprintln!("{text}"),
    }
    match &result {
        Err(Failure::Domain(e)) => eprintln!("error: {e}"),
        Err(Failure::Usage(m)) => eprintln!("usage error: {m}\n\nrun `prbm --help` for usage"),
        Ok(_) => {}
    }
    ExitCode::from(code)
}
