//! The reproducible experiment runner behind the `fkmix` binary.
//!
//! Subcommands: `estimate | exact | enumerate | verify`. Configuration is a
//! flat key=value file overridable by flags; every emitted number is a pure
//! function of (config, seed), independent of worker count. Exit codes:
//! 0 ok, 1 usage error, 2 tolerance breach, 3 resource limit.

use crate::error::{FkError, Result};
use crate::estimators::{
    estimate_delta_r_with, estimate_delta_rr_with, estimate_nested_sign_with,
    estimate_ratio_a_with, fit_exponent, EstimateResult, ExponentFit, McConfig, PairSums,
    ResumeHooks,
};
use crate::events::{dual_crossing_exists, event_a, event_a_via_loops, has_noncontractible_circuit, CircuitKind};
use crate::exact::{
    modulus_density, predicted_amplitude, predicted_iota, rn_ratio, rn_ratio_asymptotic,
    verify_laplace, CleParams, ModulusPoint, Parity, SeriesAccuracy,
};
use crate::lattice::{AnnulusSpec, BoxLattice, EdgeConfig};
use crate::rcm::{
    critical_p, enumerate_measure, kappa_of_q, q_of_kappa, BoundaryCondition, RcmParams,
};
use crate::rng;
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Instant;

pub const CSV_SCHEMA: &str =
    "run_id,observable,q,kappa,R,r,delta,n_raw,n_eff,mean,stderr,tau_int,seed";

/// Entry point used by the binary; returns the process exit code.
pub fn run<I: IntoIterator<Item = String>>(args: I) -> i32 {
    let argv: Vec<String> = args.into_iter().collect();
    match dispatch(&argv) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("fkmix: {e}");
            match e {
                FkError::Usage(_) | FkError::Domain(_) => 1,
                FkError::ResourceLimit(_) => 3,
                _ => 2,
            }
        }
    }
}

fn dispatch(argv: &[String]) -> Result<i32> {
    let Some(cmd) = argv.first() else {
        print_usage();
        return Ok(1);
    };
    let rest = &argv[1..];
    match cmd.as_str() {
        "estimate" => cmd_estimate(rest).map(|record| {
            println!("run {} finished in {:.1}s", record.run_id, record.wall_time_s);
            0
        }),
        "exact" => cmd_exact(rest),
        "enumerate" => cmd_enumerate(rest),
        "verify" => cmd_verify(rest),
        "help" | "--help" | "-h" => {
            print_usage();
            Ok(0)
        }
        other => Err(FkError::Usage(format!("unknown subcommand `{other}`"))),
    }
}

fn print_usage() {
    println!(
        "usage: fkmix <subcommand> [flags]\n\
         \n\
         subcommands:\n\
        \x20 estimate   Monte Carlo mixing-rate estimation (see flags below)\n\
        \x20 exact      closed-form tables and verification\n\
        \x20 enumerate  exact small-box measure and golden fixtures\n\
        \x20 verify     fast self-check battery\n\
         \n\
         estimate flags: --q X | --kappa X, --observable delta-R|delta-rR|ratio-A|nested-sign,\n\
        \x20 --sizes 8,16,32, --r N, --delta X, --a X, --seed N (required), --workers N,\n\
        \x20 --chains N, --samples-per-chain N, --max-rounds N, --rel-err X, --burn-in N,\n\
        \x20 --stride N, --fit, --out-dir DIR (or FKMIX_OUT), --config FILE\n\
         exact forms: exact predict --q X | exact ratio --kappa X --r LIST |\n\
        \x20 exact verify-channels [--tol X] | exact verify-laplace [--tol X]\n\
         enumerate flags: --size N, --q X, [--p X], [--out FILE]"
    );
}

// ---- flag / config-file parsing ----------------------------------------------

#[derive(Debug, Default, Clone)]
struct Flags {
    values: BTreeMap<String, String>,
}

impl Flags {
    /// Flags override config-file keys; `--key value`, `--key=value` and
    /// bare `--switch` forms are accepted.
    fn parse(args: &[String]) -> Result<Flags> {
        let mut values = BTreeMap::new();
        let mut i = 0;
        while i < args.len() {
            let arg = &args[i];
            let Some(stripped) = arg.strip_prefix("--") else {
                return Err(FkError::Usage(format!("unexpected positional argument `{arg}`")));
            };
            if let Some((k, v)) = stripped.split_once('=') {
                values.insert(k.to_string(), v.to_string());
            } else if i + 1 < args.len() && !args[i + 1].starts_with("--") {
                values.insert(stripped.to_string(), args[i + 1].clone());
                i += 1;
            } else {
                values.insert(stripped.to_string(), "true".to_string());
            }
            i += 1;
        }
        if let Some(path) = values.get("config").cloned() {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| FkError::Usage(format!("cannot read config {path}: {e}")))?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let Some((k, v)) = line.split_once('=') else {
                    return Err(FkError::Usage(format!(
                        "{path}:{}: expected key=value",
                        lineno + 1
                    )));
                };
                // flags win over file entries
                values
                    .entry(k.trim().to_string())
                    .or_insert_with(|| v.trim().to_string());
            }
        }
        Ok(Flags { values })
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| FkError::Usage(format!("flag --{key}: expected a number, got `{v}`")))
            })
            .transpose()
    }

    fn u64(&self, key: &str) -> Result<Option<u64>> {
        self.get(key)
            .map(|v| {
                v.parse::<u64>()
                    .map_err(|_| FkError::Usage(format!("flag --{key}: expected an integer, got `{v}`")))
            })
            .transpose()
    }

    fn i32_list(&self, key: &str) -> Result<Option<Vec<i32>>> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|s| {
                        s.trim().parse::<i32>().map_err(|_| {
                            FkError::Usage(format!("flag --{key}: bad list entry `{s}`"))
                        })
                    })
                    .collect()
            })
            .transpose()
    }

    fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|s| {
                        s.trim().parse::<f64>().map_err(|_| {
                            FkError::Usage(format!("flag --{key}: bad list entry `{s}`"))
                        })
                    })
                    .collect()
            })
            .transpose()
    }

    fn switch(&self, key: &str) -> bool {
        matches!(self.get(key), Some("true") | Some("1") | Some("yes"))
    }
}

/// Everything a run needs; `canonical` is the hashed configuration echo.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub observable: String,
    pub q: f64,
    pub kappa: f64,
    pub sizes: Vec<i32>,
    pub r: Option<i32>,
    pub delta: f64,
    pub a: f64,
    pub seed: u64,
    pub mc: McConfig,
    pub fit: bool,
    pub out_dir: PathBuf,
}

impl RunConfig {
    fn from_flags(flags: &Flags) -> Result<RunConfig> {
        let q_flag = flags.f64("q")?;
        let kappa_flag = flags.f64("kappa")?;
        let (q, kappa) = match (q_flag, kappa_flag) {
            (Some(q), None) => (q, kappa_of_q(q)?),
            (None, Some(k)) => (q_of_kappa(k)?, k),
            (Some(_), Some(_)) => {
                return Err(FkError::Usage("give exactly one of --q and --kappa".into()))
            }
            (None, None) => {
                return Err(FkError::Usage("one of --q or --kappa is required".into()))
            }
        };
        let seed = flags
            .u64("seed")?
            .ok_or_else(|| FkError::Usage("--seed is required for experiment runs".into()))?;
        let sizes = flags.i32_list("sizes")?.unwrap_or_else(|| vec![8, 16, 32, 64]);
        if sizes.is_empty() {
            return Err(FkError::Usage("--sizes must name at least one box".into()));
        }
        let mut mc = McConfig::new(seed);
        if let Some(w) = flags.u64("workers")? {
            mc.workers = w as usize;
        }
        if let Some(c) = flags.u64("chains")? {
            mc.chains = c.max(1) as u32;
        }
        if let Some(s) = flags.u64("samples-per-chain")? {
            mc.samples_per_chain = s.max(1);
        }
        if let Some(m) = flags.u64("max-rounds")? {
            mc.max_rounds = m.max(1) as u32;
        }
        mc.rel_err_target = flags.f64("rel-err")?;
        mc.burn_in = flags.u64("burn-in")?;
        mc.stride = flags.u64("stride")?;
        let out_dir = flags
            .get("out-dir")
            .map(PathBuf::from)
            .or_else(|| std::env::var_os("FKMIX_OUT").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(RunConfig {
            observable: flags.get("observable").unwrap_or("delta-R").to_string(),
            q,
            kappa,
            sizes,
            r: flags.i32_list("r")?.map(|v| v[0]),
            delta: flags.f64("delta")?.unwrap_or(0.5),
            a: flags.f64("a")?.unwrap_or(-1.0),
            seed,
            mc,
            fit: flags.switch("fit"),
            out_dir,
        })
    }

    /// Canonical key=value echo; its hash names the run and keys checkpoints.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "observable={}", self.observable);
        let _ = writeln!(s, "q={}", self.q);
        let _ = writeln!(s, "sizes={:?}", self.sizes);
        let _ = writeln!(s, "r={:?}", self.r);
        let _ = writeln!(s, "delta={}", self.delta);
        let _ = writeln!(s, "a={}", self.a);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "chains={}", self.mc.chains);
        let _ = writeln!(s, "samples_per_chain={}", self.mc.samples_per_chain);
        let _ = writeln!(s, "max_rounds={}", self.mc.max_rounds);
        let _ = writeln!(s, "rel_err={:?}", self.mc.rel_err_target);
        let _ = writeln!(s, "burn_in={:?}", self.mc.burn_in);
        let _ = writeln!(s, "stride={:?}", self.mc.stride);
        let _ = writeln!(s, "fit={}", self.fit);
        s
    }
}

// ---- run records and outputs --------------------------------------------------

#[derive(Debug, Clone)]
pub struct PointRecord {
    pub observable: String,
    pub size: i32,
    pub r: Option<i32>,
    pub delta: Option<f64>,
    pub estimate: EstimateResult,
}

#[derive(Debug)]
pub struct RunRecord {
    pub run_id: String,
    pub content_hash: String,
    pub config_echo: String,
    pub points: Vec<PointRecord>,
    pub fit: Option<ExponentFit>,
    pub wall_time_s: f64,
    pub csv_path: PathBuf,
    pub json_path: PathBuf,
}

fn fmt_opt_i32(v: Option<i32>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn csv_text(run_id: &str, q: f64, kappa: f64, points: &[PointRecord], fit: &Option<ExponentFit>) -> String {
    let mut out = String::new();
    out.push_str("# fkmix csv schema v1\n");
    out.push_str(CSV_SCHEMA);
    out.push('\n');
    for p in points {
        let e = &p.estimate;
        let _ = writeln!(
            out,
            "{run_id},{},{q},{kappa},{},{},{},{},{},{},{},{},{}",
            p.observable,
            p.size,
            fmt_opt_i32(p.r),
            fmt_opt_f64(p.delta),
            e.n_raw,
            e.n_effective,
            e.mean,
            e.stderr,
            e.tau_int,
            e.seed
        );
    }
    if let Some(f) = fit {
        let _ = writeln!(
            out,
            "{run_id},fit-iota,{q},{kappa},,,,{},{},{},{},,{}",
            f.points.len(),
            f.points.len(),
            f.exponent,
            f.stderr,
            points.first().map_or(0, |p| p.estimate.seed)
        );
    }
    out
}

fn json_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n")
}

fn json_text(record: &RunRecord, q: f64, kappa: f64) -> String {
    let mut out = String::new();
    out.push_str("{\n");
    let _ = writeln!(out, "  \"schema\": \"fkmix-summary-v1\",");
    let _ = writeln!(out, "  \"run_id\": \"{}\",", record.run_id);
    let _ = writeln!(out, "  \"content_hash\": \"{}\",", record.content_hash);
    let _ = writeln!(out, "  \"config\": \"{}\",", json_escape(&record.config_echo));
    let _ = writeln!(out, "  \"q\": {q},");
    let _ = writeln!(out, "  \"kappa\": {kappa},");
    out.push_str("  \"points\": [\n");
    for (i, p) in record.points.iter().enumerate() {
        let e = &p.estimate;
        let _ = write!(
            out,
            "    {{\"observable\": \"{}\", \"R\": {}, \"r\": {}, \"delta\": {}, \
             \"n_raw\": {}, \"n_eff\": {}, \"mean\": {}, \"stderr\": {}, \"tau_int\": {}, \"seed\": {}}}",
            p.observable,
            p.size,
            p.r.map_or("null".to_string(), |v| v.to_string()),
            p.delta.map_or("null".to_string(), |v| v.to_string()),
            e.n_raw,
            e.n_effective,
            e.mean,
            e.stderr,
            e.tau_int,
            e.seed
        );
        out.push_str(if i + 1 < record.points.len() { ",\n" } else { "\n" });
    }
    out.push_str("  ],\n");
    match &record.fit {
        Some(f) => {
            let _ = writeln!(
                out,
                "  \"fit\": {{\"exponent\": {}, \"stderr\": {}, \"intercept\": {}, \"ci95\": [{}, {}]}},",
                f.exponent, f.stderr, f.intercept, f.ci95.0, f.ci95.1
            );
        }
        None => {
            let _ = writeln!(out, "  \"fit\": null,");
        }
    }
    let _ = writeln!(out, "  \"wall_time_s\": {}", record.wall_time_s);
    out.push_str("}\n");
    out
}

// ---- checkpoints ---------------------------------------------------------------

struct Checkpoint {
    path: PathBuf,
    /// completed unit sums per point index
    points: Vec<HashMap<u64, PairSums>>,
}

impl Checkpoint {
    fn load(path: PathBuf, hash: &str, n_points: usize) -> Checkpoint {
        let mut points = vec![HashMap::new(); n_points];
        if let Ok(text) = std::fs::read_to_string(&path) {
            let mut lines = text.lines();
            let header_ok = lines
                .next()
                .is_some_and(|h| h == format!("fkmix-ckpt v1 {hash}"));
            if header_ok {
                for line in lines {
                    let mut parts = line.split_whitespace();
                    if parts.next() != Some("unit") {
                        continue;
                    }
                    let Some(point) = parts.next().and_then(|s| s.parse::<usize>().ok()) else {
                        continue;
                    };
                    let Some(unit) = parts.next().and_then(|s| s.parse::<u64>().ok()) else {
                        continue;
                    };
                    let words: Option<Vec<u64>> =
                        parts.map(|s| u64::from_str_radix(s, 16).ok()).collect();
                    if let (Some(words), true) = (words, point < n_points) {
                        if let Some(sums) = PairSums::from_words(&words) {
                            points[point].insert(unit, sums);
                        }
                    }
                }
            }
        }
        Checkpoint { path, points }
    }

    fn open_sink(&self, hash: &str) -> std::io::Result<Mutex<std::fs::File>> {
        let fresh = !self.path.exists()
            || std::fs::read_to_string(&self.path)
                .map(|t| t.lines().next() != Some(&format!("fkmix-ckpt v1 {hash}")))
                .unwrap_or(true);
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)?;
        if fresh {
            file.set_len(0)?;
            writeln!(file, "fkmix-ckpt v1 {hash}")?;
        }
        Ok(Mutex::new(file))
    }
}

fn append_unit(file: &Mutex<std::fs::File>, point: usize, unit: u64, sums: &PairSums) {
    let mut line = format!("unit {point} {unit}");
    for w in sums.to_words() {
        let _ = write!(line, " {w:x}");
    }
    if let Ok(mut f) = file.lock() {
        let _ = writeln!(f, "{line}");
        let _ = f.flush();
    }
}

// ---- estimate ------------------------------------------------------------------

pub fn cmd_estimate(args: &[String]) -> Result<RunRecord> {
    let flags = Flags::parse(args)?;
    let config = RunConfig::from_flags(&flags)?;
    run_estimate(&config)
}

pub fn run_estimate(config: &RunConfig) -> Result<RunRecord> {
    let start = Instant::now();
    let echo = config.canonical();
    let hash = sha1::hex(echo.as_bytes());
    let run_id = hash[..12].to_string();
    std::fs::create_dir_all(&config.out_dir)
        .map_err(|e| FkError::Usage(format!("cannot create output dir: {e}")))?;
    let csv_path = config.out_dir.join(format!("fkmix-{run_id}.csv"));
    let json_path = config.out_dir.join(format!("fkmix-{run_id}.json"));
    let ckpt_path = config.out_dir.join(format!("fkmix-{run_id}.ckpt"));

    let params = RcmParams::critical(config.q)?;
    let checkpoint = Checkpoint::load(ckpt_path.clone(), &hash, config.sizes.len());
    let sink = checkpoint
        .open_sink(&hash)
        .map_err(|e| FkError::Usage(format!("cannot open checkpoint: {e}")))?;

    let mut points = Vec::new();
    for (idx, &size) in config.sizes.iter().enumerate() {
        let lat = BoxLattice::build(size)?;
        let on_unit = |unit: u64, sums: &PairSums| append_unit(&sink, idx, unit, sums);
        let hooks = ResumeHooks {
            completed: checkpoint.points[idx].clone(),
            on_unit: Some(&on_unit),
        };
        let (label, r, delta, est) = match config.observable.as_str() {
            "delta-R" => {
                let est = estimate_delta_r_with(&lat, params, &config.mc, &hooks)?;
                ("delta-R", None, None, est)
            }
            "delta-rR" => {
                let r = config.r.unwrap_or(size / 4).max(1);
                let est = estimate_delta_rr_with(&lat, params, r, &config.mc, &hooks)?;
                ("delta-rR", Some(r), None, est)
            }
            "ratio-A" => {
                let r = config.r.unwrap_or(size / 4).max(1);
                let ann = AnnulusSpec::from_delta(r, config.delta)?;
                let est = estimate_ratio_a_with(&lat, params, ann, &config.mc, &hooks)?;
                ("ratio-A", Some(r), Some(config.delta), est)
            }
            "nested-sign" => {
                let est =
                    estimate_nested_sign_with(&lat, params, config.a, &config.mc, &hooks)?;
                ("nested-sign", None, None, est)
            }
            other => {
                return Err(FkError::Usage(format!(
                    "unknown observable `{other}` (expected delta-R, delta-rR, ratio-A or nested-sign)"
                )))
            }
        };
        points.push(PointRecord {
            observable: label.to_string(),
            size,
            r,
            delta,
            estimate: est,
        });
    }

    let fit = if config.fit {
        let pts: Vec<(f64, EstimateResult)> = points
            .iter()
            .map(|p| {
                let mut e = p.estimate.clone();
                e.mean = e.mean.abs();
                (p.size as f64, e)
            })
            .collect();
        Some(fit_exponent(&pts)?)
    } else {
        None
    };

    let mut record = RunRecord {
        run_id,
        content_hash: hash,
        config_echo: echo,
        points,
        fit,
        wall_time_s: start.elapsed().as_secs_f64(),
        csv_path: csv_path.clone(),
        json_path: json_path.clone(),
    };
    // round the wall time out of byte-compare scope for the CSV
    let csv = csv_text(&record.run_id, config.q, config.kappa, &record.points, &record.fit);
    std::fs::write(&csv_path, csv).map_err(|e| FkError::Usage(format!("write csv: {e}")))?;
    let json = json_text(&record, config.q, config.kappa);
    std::fs::write(&json_path, json).map_err(|e| FkError::Usage(format!("write json: {e}")))?;
    let _ = std::fs::remove_file(&ckpt_path);
    record.wall_time_s = start.elapsed().as_secs_f64();
    Ok(record)
}

// ---- exact ---------------------------------------------------------------------

fn resolve_kappa(flags: &Flags) -> Result<Option<f64>> {
    match (flags.f64("kappa")?, flags.f64("q")?) {
        (Some(_), Some(_)) => Err(FkError::Usage("give exactly one of --q and --kappa".into())),
        (Some(k), None) => Ok(Some(k)),
        (None, Some(q)) => Ok(Some(kappa_of_q(q)?)),
        (None, None) => Ok(None),
    }
}

pub fn cmd_exact(args: &[String]) -> Result<i32> {
    let Some(form) = args.first() else {
        return Err(FkError::Usage(
            "exact needs a form: predict | ratio | verify-channels | verify-laplace".into(),
        ));
    };
    let flags = Flags::parse(&args[1..])?;
    match form.as_str() {
        "predict" => {
            let kappa = resolve_kappa(&flags)?
                .ok_or_else(|| FkError::Usage("predict needs --q or --kappa".into()))?;
            let p = CleParams::new(kappa)?;
            println!("kappa            {:.12}", p.kappa);
            if p.kappa >= 4.0 {
                println!("q                {:.12}", q_of_kappa(p.kappa)?);
                println!("p_c              {:.12}", critical_p(q_of_kappa(p.kappa)?)?);
            }
            println!("g = 4/kappa      {:.12}", p.g);
            println!("chi              {:.12}", p.chi);
            println!("central charge   {:.12}", p.central_charge);
            println!("gamma            {:.12}", p.gamma_lqg);
            println!("iota = 3k/8-1    {:.12}", p.predicted_iota);
            println!("amplitude        {:.12}", p.amplitude);
            if (p.kappa - 6.0).abs() < 1e-12 {
                println!("note: at kappa=6 the mixing rate vanishes identically; the exponent is vacuous");
            }
            Ok(0)
        }
        "ratio" => {
            let kappa = resolve_kappa(&flags)?
                .ok_or_else(|| FkError::Usage("ratio needs --q or --kappa".into()))?;
            let rs = flags
                .f64_list("r")?
                .ok_or_else(|| FkError::Usage("ratio needs --r (comma list allowed)".into()))?;
            let acc = SeriesAccuracy::default();
            println!("{:>12} {:>18} {:>18} {:>12}", "r", "ratio", "asymptotic", "difference");
            for &r in &rs {
                let exact = rn_ratio(kappa, r, acc)?;
                let asym = rn_ratio_asymptotic(kappa, r)?;
                println!("{r:>12.6} {exact:>18.12} {asym:>18.12} {:>12.3e}", exact - asym);
            }
            Ok(0)
        }
        "verify-channels" => {
            let tol = flags.f64("tol")?.unwrap_or(1e-9);
            let kappas = match resolve_kappa(&flags)? {
                Some(k) => vec![k],
                None => vec![3.0, 16.0 / 3.0, 5.0, 7.0],
            };
            let taus = flags.f64_list("tau")?.unwrap_or_else(|| vec![0.05, 0.1, 0.5, 1.0, 2.0, 5.0]);
            let acc = SeriesAccuracy::new(1e-15, 200_000)?;
            let mut worst: (f64, String) = (0.0, String::new());
            for &kappa in &kappas {
                let p = CleParams::new(kappa)?;
                for &tau in &taus {
                    let pt = ModulusPoint::from_tau(tau)?;
                    for parity in [Parity::Odd, Parity::Even] {
                        let open = crate::exact::z_open(parity, pt, &p, acc)?;
                        let closed = crate::exact::z_closed(parity, pt, &p, acc)?;
                        let rel = (open - closed).abs() / open.abs().max(1e-300);
                        println!(
                            "kappa={kappa:<18.12} tau={tau:<6} {parity:?}: residual {rel:.3e}"
                        );
                        if rel > worst.0 {
                            worst = (rel, format!("kappa={kappa}, tau={tau}, {parity:?}"));
                        }
                    }
                }
            }
            if worst.0 > tol {
                eprintln!("tolerance breach at {} (residual {:.3e} > {tol:.1e})", worst.1, worst.0);
                return Ok(2);
            }
            println!("all channel residuals within {tol:.1e}");
            Ok(0)
        }
        "verify-laplace" => {
            let tol = flags.f64("tol")?.unwrap_or(1e-6);
            let kappas = match resolve_kappa(&flags)? {
                Some(k) => vec![k],
                None => vec![5.0, 16.0 / 3.0, 7.0],
            };
            let xs = flags.f64_list("x")?.unwrap_or_else(|| vec![0.25, 0.5, 1.0, 2.0]);
            let mut breach = None;
            for &kappa in &kappas {
                let p = CleParams::new(kappa)?;
                for &x in &xs {
                    for parity in [Parity::Odd, Parity::Even] {
                        let res = verify_laplace(parity, x, &p, 1e-8)?;
                        println!("kappa={kappa:<18.12} x={x:<5} {parity:?}: residual {res:.3e}");
                        if res > tol && breach.is_none() {
                            breach = Some(format!("kappa={kappa}, x={x}, {parity:?}: {res:.3e}"));
                        }
                    }
                }
            }
            if let Some(b) = breach {
                eprintln!("tolerance breach at {b} (> {tol:.1e})");
                return Ok(2);
            }
            println!("all Laplace residuals within {tol:.1e}");
            Ok(0)
        }
        other => Err(FkError::Usage(format!("unknown exact form `{other}`"))),
    }
}

// ---- enumerate -----------------------------------------------------------------

pub fn cmd_enumerate(args: &[String]) -> Result<i32> {
    let flags = Flags::parse(args)?;
    let size = flags.u64("size")?.unwrap_or(1) as i32;
    let q = flags
        .f64("q")?
        .ok_or_else(|| FkError::Usage("enumerate needs --q".into()))?;
    let p = match flags.f64("p")? {
        Some(p) => p,
        None => critical_p(q)?,
    };
    let lat = BoxLattice::build(size)?;
    let params = RcmParams::new(p, q)?;
    let text = enumerate_fixture(&lat, &params)?;
    match flags.get("out") {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| FkError::Usage(format!("write fixture: {e}")))?,
        None => print!("{text}"),
    }
    Ok(0)
}

/// Deterministic fixture text: partition functions and every edge marginal
/// under both boundary conditions, plus the wired-minus-free gap at the
/// origin edge.
pub fn enumerate_fixture(lat: &BoxLattice, params: &RcmParams) -> Result<String> {
    let free = enumerate_measure(lat, &BoundaryCondition::Free, params)?;
    let wired = enumerate_measure(lat, &BoundaryCondition::Wired, params)?;
    let mut out = String::new();
    let _ = writeln!(out, "# fkmix enumerate fixture v1");
    let _ = writeln!(out, "R={} q={} p={:.17}", lat.half_side(), params.q, params.p);
    let _ = writeln!(out, "Z_free={:.17e}", free.z);
    let _ = writeln!(out, "Z_wired={:.17e}", wired.z);
    for e in 0..lat.edge_count() as u32 {
        let _ = writeln!(
            out,
            "edge {e} marginal_free={:.17} marginal_wired={:.17}",
            free.edge_marginal(e),
            wired.edge_marginal(e)
        );
    }
    let e0 = lat.h_edge(0, 0);
    let _ = writeln!(
        out,
        "delta_e0={:.17}",
        wired.edge_marginal(e0) - free.edge_marginal(e0)
    );
    Ok(out)
}

// ---- verify --------------------------------------------------------------------

pub fn cmd_verify(args: &[String]) -> Result<i32> {
    let flags = Flags::parse(args)?;
    let _ = flags;
    let mut failures = 0;
    let mut check = |name: &str, ok: bool| {
        println!("{} {name}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failures += 1;
        }
    };

    // lattice counts and duality
    {
        let mut ok = true;
        for r in 1..=8 {
            let lat = BoxLattice::build(r).unwrap();
            let side = (2 * r + 1) as usize;
            ok &= lat.vertex_count() == side * side && lat.edge_count() == 2 * side * (side - 1);
        }
        let lat = BoxLattice::build(3).unwrap();
        for e in 0..lat.edge_count() as u32 {
            ok &= lat.dual_edge(lat.dual_edge(e).unwrap()).unwrap() == e;
        }
        check("lattice counts and dual involution", ok);
    }

    // enumeration oracle and the frozen fixture
    {
        let lat = BoxLattice::build(1).unwrap();
        let params = RcmParams::critical(2.0).unwrap();
        let free = enumerate_measure(&lat, &BoundaryCondition::Free, &params).unwrap();
        let wired = enumerate_measure(&lat, &BoundaryCondition::Wired, &params).unwrap();
        let e = lat.h_edge(0, 0);
        let delta = wired.edge_marginal(e) - free.edge_marginal(e);
        check(
            "enumeration fixture delta(1) at q=2",
            (delta - 0.117728602505528).abs() < 1e-12,
        );
    }

    // q=1 null via coupled chains
    {
        let lat = BoxLattice::build(4).unwrap();
        let params = RcmParams::new(0.5, 1.0).unwrap();
        let mut mc = McConfig::new(7);
        mc.chains = 2;
        mc.samples_per_chain = 20;
        mc.max_rounds = 1;
        mc.burn_in = Some(5);
        mc.stride = Some(1);
        let est = crate::estimators::estimate_delta_r(&lat, params, &mc).unwrap();
        check("q=1 coupled null", est.mean == 0.0 && est.stderr == 0.0);
    }

    // circuit detector duality and the A-event equivalence on random configs
    {
        let lat = BoxLattice::build(4).unwrap();
        let ann = AnnulusSpec::new(1, 3).unwrap();
        let mut rng = rng::stream(2718, 100, 0);
        let mut ok = true;
        for _ in 0..200 {
            let density = rng::uniform(&mut rng);
            let mut c = EdgeConfig::all_closed(lat.edge_count());
            for e in 0..lat.edge_count() as u32 {
                c.set(e, rng::uniform(&mut rng) < density);
            }
            let primal = has_noncontractible_circuit(&lat, &c, ann, CircuitKind::Primal).unwrap();
            ok &= primal == !dual_crossing_exists(&lat, &c, ann).unwrap();
            let a = event_a(&lat, &c, ann).unwrap();
            for bc in [BoundaryCondition::Free, BoundaryCondition::Wired] {
                ok &= a == event_a_via_loops(&lat, &c, &bc, ann).unwrap();
            }
        }
        check("circuit duality and A-event detector equivalence", ok);
    }

    // channel duality grid
    {
        let acc = SeriesAccuracy::new(1e-15, 200_000).unwrap();
        let mut worst = 0.0f64;
        for &kappa in &[3.0, 16.0 / 3.0, 5.0, 7.0] {
            let p = CleParams::new(kappa).unwrap();
            for &tau in &[0.05, 0.1, 0.5, 1.0, 2.0, 5.0] {
                let pt = ModulusPoint::from_tau(tau).unwrap();
                for parity in [Parity::Odd, Parity::Even] {
                    let open = crate::exact::z_open(parity, pt, &p, acc).unwrap();
                    let closed = crate::exact::z_closed(parity, pt, &p, acc).unwrap();
                    worst = worst.max((open - closed).abs() / open.abs());
                }
            }
        }
        check("channel duality grid within 1e-9", worst <= 1e-9);
    }

    // kappa=6 degeneracy and the asymptotic law
    {
        let acc = SeriesAccuracy::default();
        let mut ok = true;
        for &r in &[0.01, 0.1, 0.5, 0.9] {
            ok &= (rn_ratio(6.0, r, acc).unwrap() - 1.0).abs() < 1e-12;
        }
        for &kappa in &[16.0 / 3.0, 5.0, 7.0] {
            let p = CleParams::new(kappa).unwrap();
            for &r in &[1e-2, 1e-3] {
                let exact = rn_ratio(kappa, r, acc).unwrap();
                let asym = rn_ratio_asymptotic(kappa, r).unwrap();
                ok &= (exact - asym).abs() <= 10.0 * r.powf(2.0 * p.predicted_iota);
            }
        }
        check("ratio degeneracy and asymptotics", ok);
    }

    // a quick Laplace identity point and the density sign
    {
        let p = CleParams::new(16.0 / 3.0).unwrap();
        let res = verify_laplace(Parity::Odd, 1.0, &p, 1e-8).unwrap();
        let dens = modulus_density(Parity::Even, 0.7, &p, SeriesAccuracy::default()).unwrap();
        check("Laplace identity spot and density sign", res <= 1e-6 && dens > 0.0);
    }

    // predictions table sanity
    {
        let ok = (predicted_iota(16.0 / 3.0).unwrap() - 1.0).abs() < 1e-12
            && (predicted_amplitude(16.0 / 3.0).unwrap() - 2.0).abs() < 1e-12
            && predicted_amplitude(6.0).unwrap().abs() < 1e-12;
        check("prediction formulas", ok);
    }

    if failures == 0 {
        println!("all checks passed");
        Ok(0)
    } else {
        eprintln!("{failures} check(s) failed");
        Ok(2)
    }
}

// ---- sha1 (for content hashes) ---------------------------------------------------

mod sha1 {
    pub fn hex(data: &[u8]) -> String {
        let digest = digest(data);
        let mut s = String::with_capacity(40);
        for b in digest {
            s.push_str(&format!("{b:02x}"));
        }
        s
    }

    pub fn digest(data: &[u8]) -> [u8; 20] {
        let mut h: [u32; 5] = [0x67452301, 0xEFCDAB89, 0x98BADCFE, 0x10325476, 0xC3D2E1F0];
        let ml = (data.len() as u64).wrapping_mul(8);
        let mut msg = data.to_vec();
        msg.push(0x80);
        while msg.len() % 64 != 56 {
            msg.push(0);
        }
        msg.extend_from_slice(&ml.to_be_bytes());
        let mut w = [0u32; 80];
        for chunk in msg.chunks_exact(64) {
            for (i, word) in chunk.chunks_exact(4).enumerate() {
                w[i] = u32::from_be_bytes([word[0], word[1], word[2], word[3]]);
            }
            for i in 16..80 {
                w[i] = (w[i - 3] ^ w[i - 8] ^ w[i - 14] ^ w[i - 16]).rotate_left(1);
            }
            let (mut a, mut b, mut c, mut d, mut e) = (h[0], h[1], h[2], h[3], h[4]);
            for (i, &wi) in w.iter().enumerate() {
                let (f, k) = match i {
                    0..=19 => ((b & c) | (!b & d), 0x5A827999),
                    20..=39 => (b ^ c ^ d, 0x6ED9EBA1),
                    40..=59 => ((b & c) | (b & d) | (c & d), 0x8F1BBCDC),
                    _ => (b ^ c ^ d, 0xCA62C1D6),
                };
                let tmp = a
                    .rotate_left(5)
                    .wrapping_add(f)
                    .wrapping_add(e)
                    .wrapping_add(k)
                    .wrapping_add(wi);
                e = d;
                d = c;
                c = b.rotate_left(30);
                b = a;
                a = tmp;
            }
            h[0] = h[0].wrapping_add(a);
            h[1] = h[1].wrapping_add(b);
            h[2] = h[2].wrapping_add(c);
            h[3] = h[3].wrapping_add(d);
            h[4] = h[4].wrapping_add(e);
        }
        let mut out = [0u8; 20];
        for (i, word) in h.iter().enumerate() {
            out[i * 4..i * 4 + 4].copy_from_slice(&word.to_be_bytes());
        }
        out
    }
}
