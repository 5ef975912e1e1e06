//! Command-line driver: workload generation, calibration, model training,
//! single simulations and guarantee sweeps.
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 runtime failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use sim_core::engine::{run_simulation, MatchObjective, SimConfig, SimReport};
use sim_core::gpr::{fit, FitOptions, GprModel};
use sim_core::guarantee::{GuaranteeMode, GuaranteePolicy};
use sim_core::metrics::{compute_metrics, MetricsReport};
use sim_core::workload::{generate, load_workload_dir, save_workload_dir, Workload, WorkloadConfig};

#[derive(Parser)]
#[command(name = "dispatchsim", version, about = "Food-delivery dispatch simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic workload directory (nodes/edges/orders/agents).
    Gen {
        /// Workload config JSON; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override config fields, e.g. --set seed=7 --set agent_count=150
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        /// Overwrite an existing output directory.
        #[arg(long)]
        force: bool,
    },
    /// Baseline run (delivery-time objective, g = 0) producing omega.json
    /// and GPR training rows alongside the usual outputs.
    Calibrate {
        /// Workload directory from `gen`.
        #[arg(long)]
        workload: PathBuf,
        /// Simulation config JSON; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Fit and serialize a work-prediction model from calibration rows.
    TrainGpr {
        /// One or more gpr_rows.csv files; rows are concatenated.
        #[arg(long, required = true)]
        rows: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        max_iters: usize,
        #[arg(long)]
        force: bool,
    },
    /// Run one configured simulation.
    Sim {
        #[arg(long)]
        workload: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Fitted model JSON (required for dynamic guarantees or rejection).
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
        /// Also write the full event log (events.json).
        #[arg(long)]
        emit_events: bool,
    },
    /// Run the simulation across a grid of guarantee ratios and emit the
    /// cost/handout/Gini curve table.
    Sweep {
        #[arg(long)]
        workload: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Explicit comma-separated g values, e.g. 0.1,0.2,0.3
        #[arg(long)]
        g: Option<String>,
        /// omega.json from `calibrate`; combined with --multipliers.
        #[arg(long)]
        omega: Option<PathBuf>,
        /// Comma-separated multipliers applied to omega (default
        /// 0.25,0.5,0.75,1.0,1.25,1.5).
        #[arg(long)]
        multipliers: Option<String>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

/// Error category, mapped to the process exit code.
enum Failure {
    Config(anyhow::Error),
    Data(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Data(_) => 3,
            Failure::Runtime(_) => 4,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Data(e) | Failure::Runtime(e) => e,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> std::result::Result<(), Failure> {
    match cli.command {
        Command::Gen { config, sets, out, force } => cmd_gen(config, sets, out, force),
        Command::Calibrate { workload, config, sets, out, force } => {
            cmd_calibrate(workload, config, sets, out, force)
        }
        Command::TrainGpr { rows, out, max_iters, force } => {
            cmd_train_gpr(rows, out, max_iters, force)
        }
        Command::Sim { workload, config, model, sets, out, force, emit_events } => {
            cmd_sim(workload, config, model, sets, out, force, emit_events)
        }
        Command::Sweep { workload, config, g, omega, multipliers, sets, out, force } => {
            cmd_sweep(workload, config, g, omega, multipliers, sets, out, force)
        }
    }
}

// --- config loading with flag > file > default precedence ------------------

fn load_json_config<T: serde::de::DeserializeOwned + serde::Serialize + Default>(
    path: Option<&Path>,
    sets: &[String],
) -> Result<(T, serde_json::Value)> {
    let mut value = match path {
        Some(p) => {
            let raw = fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&raw).with_context(|| format!("parsing {}", p.display()))?
        }
        None => serde_json::to_value(T::default())?,
    };
    for kv in sets {
        let (key, raw) = kv
            .split_once('=')
            .ok_or_else(|| anyhow!("override '{kv}' is not KEY=VALUE"))?;
        let parsed: serde_json::Value =
            serde_json::from_str(raw).unwrap_or(serde_json::Value::String(raw.to_string()));
        set_path(&mut value, key, parsed)?;
    }
    let typed: T = serde_json::from_value(value.clone())
        .with_context(|| "config did not validate after overrides")?;
    // Round-trip through the type so defaults are materialized in the echo.
    let echo = serde_json::to_value(&typed)?;
    Ok((typed, echo))
}

fn set_path(root: &mut serde_json::Value, key: &str, val: serde_json::Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if !cur.is_object() {
            bail!("override path '{key}' walks through a non-object");
        }
        let map = cur.as_object_mut().unwrap();
        if i + 1 == parts.len() {
            map.insert(part.to_string(), val);
            return Ok(());
        }
        cur = map
            .entry(part.to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    Ok(())
}

fn prepare_out_dir(out: &Path, force: bool) -> Result<()> {
    if out.exists() {
        if !force {
            bail!(
                "output directory {} exists; pass --force to overwrite",
                out.display()
            );
        }
        fs::remove_dir_all(out)
            .with_context(|| format!("clearing {}", out.display()))?;
    }
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::create_dir(out).with_context(|| format!("creating {}", out.display()))?;
    Ok(())
}

fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

fn file_sha256(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

fn write_manifest(
    out: &Path,
    command: &str,
    config_echo: &serde_json::Value,
    inputs: &[(&str, &Path)],
    outputs: &[&str],
) -> Result<()> {
    let mut input_hashes = serde_json::Map::new();
    for (name, path) in inputs {
        input_hashes.insert(
            name.to_string(),
            serde_json::json!({
                "path": path.display().to_string(),
                "sha256": file_sha256(path)?,
            }),
        );
    }
    let manifest = serde_json::json!({
        "tool": "dispatchsim",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": config_echo,
        "config_sha256": sha256_hex(serde_json::to_string(config_echo)?.as_bytes()),
        "inputs": input_hashes,
        "outputs": outputs,
    });
    fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn workload_input_files(dir: &Path) -> Vec<(&'static str, PathBuf)> {
    vec![
        ("nodes", dir.join("nodes.csv")),
        ("edges", dir.join("edges.csv")),
        ("orders", dir.join("orders.csv")),
        ("agents", dir.join("agents.csv")),
    ]
}

// --- subcommands ------------------------------------------------------------

fn cmd_gen(
    config: Option<PathBuf>,
    sets: Vec<String>,
    out: PathBuf,
    force: bool,
) -> std::result::Result<(), Failure> {
    let (cfg, echo) = load_json_config::<WorkloadConfig>(config.as_deref(), &sets)
        .map_err(Failure::Config)?;
    prepare_out_dir(&out, force).map_err(Failure::Config)?;
    let w = generate(&cfg).map_err(|e| Failure::Data(e.into()))?;
    save_workload_dir(&w, &out).map_err(|e| Failure::Runtime(e.into()))?;
    write_manifest(&out, "gen", &echo, &[], &["nodes.csv", "edges.csv", "orders.csv", "agents.csv"])
        .map_err(Failure::Runtime)?;
    println!(
        "workload: {} nodes, {} orders, {} agents -> {}",
        w.net.node_count(),
        w.orders.len(),
        w.agents.len(),
        out.display()
    );
    Ok(())
}

fn load_workload(dir: &Path) -> std::result::Result<Workload, Failure> {
    load_workload_dir(dir).map_err(|e| Failure::Data(anyhow!(e).context(format!(
        "loading workload from {}",
        dir.display()
    ))))
}

fn run_and_write(
    workload: &Workload,
    cfg: &SimConfig,
    model: Option<&GprModel>,
    out: &Path,
    emit_events: bool,
) -> std::result::Result<(SimReport, MetricsReport), Failure> {
    let report = run_simulation(workload, cfg, model).map_err(|e| match e {
        sim_core::engine::EngineError::Config(_) => Failure::Config(e.into()),
        sim_core::engine::EngineError::Workload(_) => Failure::Data(e.into()),
        other => Failure::Runtime(other.into()),
    })?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let cm = cfg.resolved_cost();
    let metrics = compute_metrics(&report, &cm, cfg.sla_seconds);
    let io = || -> Result<()> {
        fs::write(out.join("orders.csv"), report.orders_csv())?;
        fs::write(out.join("agents.csv"), report.agents_csv())?;
        fs::write(out.join("windows.csv"), report.windows_csv())?;
        fs::write(out.join("summary.json"), report.summary_json())?;
        fs::write(out.join("metrics.json"), serde_json::to_string_pretty(&metrics)?)?;
        if emit_events {
            fs::write(out.join("events.json"), report.events_json())?;
        }
        Ok(())
    };
    io().map_err(Failure::Runtime)?;
    Ok((report, metrics))
}

fn print_metrics(m: &MetricsReport) {
    println!("Avg. delivery time     : {:.1} min", m.avg_delivery_time_s / 60.0);
    println!("SLA violations         : {:.2} %", m.sla_violation_pct);
    println!("Gini income/active     : {:.3}", m.gini_income_per_active);
    println!("Gini work for min wage : {:.3}", m.gini_work_for_min_wage);
    println!("Avg. work per agent    : {:.2} h", m.avg_work_per_agent_h);
    println!("CO2                    : {:.1} kg", m.co2_kg);
    println!("Window runtime avg/max : {:.3} / {:.3} s", m.avg_window_runtime_s, m.max_window_runtime_s);
    println!("Window overflows       : {:.2} %", m.overflow_pct);
    println!(
        "Delivered / undelivered: {} / {}",
        m.orders_delivered, m.orders_undelivered
    );
}

fn cmd_sim(
    workload_dir: PathBuf,
    config: Option<PathBuf>,
    model_path: Option<PathBuf>,
    sets: Vec<String>,
    out: PathBuf,
    force: bool,
    emit_events: bool,
) -> std::result::Result<(), Failure> {
    let (cfg, echo) =
        load_json_config::<SimConfig>(config.as_deref(), &sets).map_err(Failure::Config)?;
    let model = match &model_path {
        Some(p) => Some(GprModel::load(p).map_err(|e| Failure::Data(e.into()))?),
        None => None,
    };
    let workload = load_workload(&workload_dir)?;
    prepare_out_dir(&out, force).map_err(Failure::Config)?;
    let (report, metrics) = run_and_write(&workload, &cfg, model.as_ref(), &out, emit_events)?;
    let mut inputs = workload_input_files(&workload_dir);
    if let Some(p) = &model_path {
        inputs.push(("model", p.clone()));
    }
    let input_refs: Vec<(&str, &Path)> =
        inputs.iter().map(|(n, p)| (*n, p.as_path())).collect();
    write_manifest(
        &out,
        "sim",
        &echo,
        &input_refs,
        &["orders.csv", "agents.csv", "windows.csv", "summary.json", "metrics.json"],
    )
    .map_err(Failure::Runtime)?;
    println!(
        "platform cost {:.1} (work pay {:.1} + handouts {:.1}), omega {:.3}",
        report.summary.platform_cost,
        report.summary.total_work_pay,
        report.summary.total_handouts,
        report.summary.omega_realized
    );
    print_metrics(&metrics);
    Ok(())
}

const GPR_ROWS_HEADER: &str =
    "login_sod,logoff_sod,login_lat,login_lon,active_agents,orders_per_window,work_h";

fn cmd_calibrate(
    workload_dir: PathBuf,
    config: Option<PathBuf>,
    sets: Vec<String>,
    out: PathBuf,
    force: bool,
) -> std::result::Result<(), Failure> {
    let (mut cfg, _) =
        load_json_config::<SimConfig>(config.as_deref(), &sets).map_err(Failure::Config)?;
    // Calibration is a baseline run: pure delivery-time matching, no
    // guarantees, no rejection.
    cfg.objective = MatchObjective::DeliveryTimeOnly;
    cfg.policy = GuaranteePolicy::fixed(0.0);
    cfg.couple_pay_to_guarantee = false;
    let echo = serde_json::to_value(&cfg).map_err(|e| Failure::Runtime(e.into()))?;
    let workload = load_workload(&workload_dir)?;
    prepare_out_dir(&out, force).map_err(Failure::Config)?;
    let (report, _) = run_and_write(&workload, &cfg, None, &out, false)?;

    let omega = if report.summary.total_active_h > 0.0 {
        report.summary.total_work_h / report.summary.total_active_h
    } else {
        0.0
    };
    let omega_doc = serde_json::json!({
        "omega": omega,
        "total_work_h": report.summary.total_work_h,
        "total_active_h": report.summary.total_active_h,
    });
    let mut rows = String::from(GPR_ROWS_HEADER);
    rows.push('\n');
    for a in &report.agents {
        if !a.ledger.accepted {
            continue;
        }
        rows.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            a.features.login_sod,
            a.features.logoff_sod,
            a.features.login_lat,
            a.features.login_lon,
            a.features.active_agents,
            a.features.orders_per_window,
            a.ledger.work_hours(),
        ));
    }
    let io = || -> Result<()> {
        fs::write(out.join("omega.json"), serde_json::to_string_pretty(&omega_doc)?)?;
        fs::write(out.join("gpr_rows.csv"), rows)?;
        Ok(())
    };
    io().map_err(Failure::Runtime)?;
    let input_files = workload_input_files(&workload_dir);
    let input_refs: Vec<(&str, &Path)> =
        input_files.iter().map(|(n, p)| (*n, p.as_path())).collect();
    write_manifest(
        &out,
        "calibrate",
        &echo,
        &input_refs,
        &["omega.json", "gpr_rows.csv", "orders.csv", "agents.csv", "windows.csv", "summary.json", "metrics.json"],
    )
    .map_err(Failure::Runtime)?;
    println!(
        "omega = {omega:.4} (work {:.1} h / active {:.1} h) -> {}",
        report.summary.total_work_h,
        report.summary.total_active_h,
        out.display()
    );
    Ok(())
}

fn cmd_train_gpr(
    rows: Vec<PathBuf>,
    out: PathBuf,
    max_iters: usize,
    force: bool,
) -> std::result::Result<(), Failure> {
    if out.exists() && !force {
        return Err(Failure::Config(anyhow!(
            "{} exists; pass --force to overwrite",
            out.display()
        )));
    }
    let mut x: Vec<Vec<f64>> = Vec::new();
    let mut y: Vec<f64> = Vec::new();
    for path in &rows {
        let raw = fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(Failure::Data)?;
        let mut lines = raw.lines();
        match lines.next() {
            Some(h) if h.trim() == GPR_ROWS_HEADER => {}
            _ => {
                return Err(Failure::Data(anyhow!(
                    "{}: expected header '{GPR_ROWS_HEADER}'",
                    path.display()
                )))
            }
        }
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| {
                    Failure::Data(anyhow!("{} line {}: {e}", path.display(), i + 2))
                })?;
            if fields.len() != 7 {
                return Err(Failure::Data(anyhow!(
                    "{} line {}: expected 7 fields, got {}",
                    path.display(),
                    i + 2,
                    fields.len()
                )));
            }
            x.push(fields[..6].to_vec());
            y.push(fields[6]);
        }
    }
    let opts = FitOptions {
        max_iters,
        ..FitOptions::default()
    };
    let model = fit(&x, &y, &opts).map_err(|e| Failure::Runtime(e.into()))?;
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Failure::Runtime(e.into()))?;
        }
    }
    model.save(&out).map_err(|e| Failure::Runtime(e.into()))?;
    println!(
        "fitted on {} rows: sigma {:.4}, eta {:.4}, lengths {:?} -> {}",
        model.train_len(),
        model.sigma,
        model.eta,
        model
            .lengths
            .iter()
            .map(|l| (l * 1000.0).round() / 1000.0)
            .collect::<Vec<_>>(),
        out.display()
    );
    Ok(())
}

fn parse_f64_list(raw: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| anyhow!("bad number '{s}': {e}"))
        })
        .collect()
}

fn cmd_sweep(
    workload_dir: PathBuf,
    config: Option<PathBuf>,
    g: Option<String>,
    omega: Option<PathBuf>,
    multipliers: Option<String>,
    sets: Vec<String>,
    out: PathBuf,
    force: bool,
) -> std::result::Result<(), Failure> {
    let (base_cfg, echo) =
        load_json_config::<SimConfig>(config.as_deref(), &sets).map_err(Failure::Config)?;
    let g_values: Vec<f64> = match (&g, &omega) {
        (Some(list), None) => parse_f64_list(list).map_err(Failure::Config)?,
        (None, Some(path)) => {
            let doc: serde_json::Value = serde_json::from_str(
                &fs::read_to_string(path).map_err(|e| Failure::Data(e.into()))?,
            )
            .map_err(|e| Failure::Data(e.into()))?;
            let om = doc
                .get("omega")
                .and_then(|v| v.as_f64())
                .ok_or_else(|| Failure::Data(anyhow!("{}: no 'omega' field", path.display())))?;
            let mults = match &multipliers {
                Some(m) => parse_f64_list(m).map_err(Failure::Config)?,
                None => vec![0.25, 0.5, 0.75, 1.0, 1.25, 1.5],
            };
            mults.iter().map(|m| m * om).collect()
        }
        _ => {
            return Err(Failure::Config(anyhow!(
                "sweep needs exactly one of --g or --omega"
            )))
        }
    };
    if g_values.iter().any(|g| !(0.0..=1.0).contains(g)) {
        return Err(Failure::Config(anyhow!(
            "sweep g values must lie in [0, 1], got {g_values:?}"
        )));
    }
    let workload = load_workload(&workload_dir)?;
    prepare_out_dir(&out, force).map_err(Failure::Config)?;

    let mut curve = String::from(
        "g,pay_rate,platform_cost,work_pay,handouts,gini_income_per_active,gini_work_pay_per_active,gini_work_for_min_wage,avg_delivery_s,avg_work_h,co2_kg,sla_violation_pct\n",
    );
    for gv in &g_values {
        let mut cfg = base_cfg.clone();
        cfg.objective = MatchObjective::GuaranteeAware;
        cfg.policy = GuaranteePolicy {
            mode: GuaranteeMode::Fixed { g: *gv },
            rejection_enabled: base_cfg.policy.rejection_enabled,
            baseline_g: base_cfg.policy.baseline_g,
        };
        cfg.couple_pay_to_guarantee = *gv > 0.0;
        let sub = out.join(format!("g_{gv:.4}"));
        fs::create_dir(&sub).map_err(|e| Failure::Runtime(e.into()))?;
        let (report, metrics) = run_and_write(&workload, &cfg, None, &sub, false)?;
        let cm = cfg.resolved_cost();
        curve.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            gv,
            cm.pay_rate,
            report.summary.platform_cost,
            report.summary.total_work_pay,
            report.summary.total_handouts,
            metrics.gini_income_per_active,
            metrics.gini_work_pay_per_active,
            metrics.gini_work_for_min_wage,
            metrics.avg_delivery_time_s,
            metrics.avg_work_per_agent_h,
            metrics.co2_kg,
            metrics.sla_violation_pct,
        ));
        println!(
            "g = {gv:.4}: cost {:.1} (handouts {:.1})",
            report.summary.platform_cost, report.summary.total_handouts
        );
    }
    fs::write(out.join("curve.csv"), curve).map_err(|e| Failure::Runtime(e.into()))?;
    let input_files = workload_input_files(&workload_dir);
    let input_refs: Vec<(&str, &Path)> =
        input_files.iter().map(|(n, p)| (*n, p.as_path())).collect();
    write_manifest(&out, "sweep", &echo, &input_refs, &["curve.csv"])
        .map_err(Failure::Runtime)?;
    Ok(())
}
