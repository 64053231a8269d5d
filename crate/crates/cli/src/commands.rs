use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use acir_core::conformal::{acir_interval, calibrate, sc_interval, CalibrationState};
use acir_core::datagen::{generate_sem, load_csv, parse_csv, write_csv, SemConfig, Setting};
use acir_core::experiment::{emit_outputs, read_metrics, run_replications, summarize, DataSource, ExperimentConfig, Method};
use acir_core::invariance::{fit_density, inv_statistic};
use acir_core::models::{fit_with_report, FitConfig, Optimizer};
use acir_core::seeding::derive_seed;
use acir_core::{EnvId, Error, LinearIRMModel, PredictionInterval};
use ndarray::Array2;

use crate::{
    AssessCmd, BenchCommand, CalibrateCmd, Command, DatagenCommand, FitArgs, FitCmd, IntervalMethod, OptimizerArg,
    PredictCmd, RunCmd, SemCmd, SummarizeCmd,
};

pub enum Failure {
    /// Bad flag values: exit code 1.
    Usage(String),
    /// Anything that went wrong while doing the work: exit code 2.
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

type Outcome = Result<(), Failure>;

fn usage(msg: impl std::fmt::Display) -> Failure {
    Failure::Usage(msg.to_string())
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> Failure + '_ {
    move |e| Failure::Runtime(Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn dispatch(command: Command) -> Outcome {
    match command {
        Command::Bench(BenchCommand::Run(c)) => bench_run(*c),
        Command::Bench(BenchCommand::Summarize(c)) => bench_summarize(c),
        Command::Datagen(DatagenCommand::Sem(c)) => datagen_sem(c),
        Command::Fit(c) => fit(c),
        Command::Calibrate(c) => calibrate_cmd(c),
        Command::Assess(c) => assess(c),
        Command::Predict(c) => predict(c),
    }
}

fn fit_config(args: &FitArgs, seed: u64) -> FitConfig {
    FitConfig {
        learning_rate: args.lr,
        max_iters: args.max_iters,
        tolerance: args.tolerance,
        f_tolerance: args.f_tolerance,
        lambda: args.lambda,
        warmup_iters: args.warmup_iters,
        seed,
        init_std: args.init_std,
        repr_dim: args.repr_dim,
        optimizer: match args.optimizer {
            OptimizerArg::Lbfgs => Optimizer::Lbfgs {
                memory: args.lbfgs_memory,
            },
            OptimizerArg::Gd => Optimizer::GradientDescent,
        },
    }
}

fn parse_sources(settings: &str, test_envs: &[EnvId]) -> Result<Vec<DataSource>, Failure> {
    if settings.trim().starts_with("csv:") {
        return match settings.trim().parse().map_err(usage)? {
            DataSource::Csv { path, .. } => Ok(vec![DataSource::Csv {
                path,
                test_envs: test_envs.to_vec(),
            }]),
            sem => Ok(vec![sem]),
        };
    }
    if !test_envs.is_empty() {
        return Err(usage("--test-envs only applies to csv: settings"));
    }
    if settings.trim().eq_ignore_ascii_case("all") {
        return Ok(Setting::ALL.into_iter().map(DataSource::Sem).collect());
    }
    settings.split(',').map(|s| s.parse().map_err(usage)).collect()
}

fn bench_run(c: RunCmd) -> Outcome {
    let config = ExperimentConfig {
        sources: parse_sources(&c.setting, &c.test_envs)?,
        alpha: c.alpha,
        n_train_total: c.n_train,
        n_cal_total: c.n_cal,
        n_test_total: c.n_test,
        env_params: c.env_params,
        replications: c.reps,
        seed: c.seed,
        methods: Method::parse_list(&c.methods).map_err(usage)?,
        fit: fit_config(&c.fit, 0),
        resplit_only: c.resplit_only,
        assess_invariance: c.invariance,
    };
    config.validate().map_err(usage)?;

    let outcomes = run_replications(&config)?;
    let mut rows: Vec<_> = outcomes.iter().flat_map(|o| o.rows.iter().cloned()).collect();
    rows.sort_by(|a, b| {
        (a.method, &a.setting, a.replication, a.scope).cmp(&(b.method, &b.setting, b.replication, b.scope))
    });
    let summary = emit_outputs(&c.out, &rows)?;
    log::info!("{} metric rows, {} summary rows in {}", rows.len(), summary.len(), c.out.display());

    if c.invariance {
        let path = c.out.join("invariance.csv");
        let mut out = io::BufWriter::new(File::create(&path).map_err(io_err(&path))?);
        writeln!(out, "setting,replication,model,inv").map_err(io_err(&path))?;
        for o in &outcomes {
            for (kind, report) in &o.invariance {
                writeln!(out, "{},{},{},{}", o.setting, o.replication, kind.label(), report.inv).map_err(io_err(&path))?;
            }
        }
        out.flush().map_err(io_err(&path))?;
    }
    Ok(())
}

fn bench_summarize(c: SummarizeCmd) -> Outcome {
    let rows = read_metrics(&c.input)?;
    let summary = summarize(&rows)?;
    let mut text = String::from("method,setting,scope,replications,coverage_mean,coverage_sd,length_mean,length_sd\n");
    for s in &summary {
        text += &format!(
            "{},{},{},{},{},{},{},{}\n",
            s.method,
            s.setting,
            s.scope,
            s.replications,
            s.coverage_mean,
            s.coverage_sd,
            s.length_mean,
            s.length_sd
        );
    }
    match &c.out {
        Some(path) => std::fs::write(path, text).map_err(io_err(path)),
        None => io::stdout().write_all(text.as_bytes()).map_err(io_err(Path::new("<stdout>"))),
    }
}

fn datagen_sem(c: SemCmd) -> Outcome {
    let setting: Setting = c.setting.parse().map_err(usage)?;
    let m = c.env_params.len();
    if m == 0 || c.n < m {
        return Err(usage(format!("--n {} is smaller than the {m} environments", c.n)));
    }
    let sem = SemConfig::with_shape(setting, c.env_params.clone(), 5, 5, derive_seed(c.seed, &[0])).map_err(usage)?;
    let envs = c
        .env_params
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            let n = c.n / m + usize::from(i < c.n % m);
            generate_sem(&sem, e, n, derive_seed(c.seed, &[1, i as u64]))
        })
        .collect::<Result<Vec<_>, _>>()?;
    write_csv(&c.out, &envs)?;
    Ok(())
}

fn fit(c: FitCmd) -> Outcome {
    let train = load_csv(&c.data)?;
    let mut config = fit_config(&c.fit, c.seed);
    if c.erm {
        config.lambda = 0.0;
        config.warmup_iters = 0;
    }
    let report = fit_with_report(&train, &config)?;
    log::info!(
        "objective {} -> {} after {} iterations ({:?})",
        report.initial_objective,
        report.final_objective,
        report.iterations,
        report.stop
    );
    report.model.save(&c.out)?;
    Ok(())
}

fn calibrate_cmd(c: CalibrateCmd) -> Outcome {
    let model = LinearIRMModel::load(&c.model)?;
    let cal = load_csv(&c.data)?;
    calibrate(&model, &cal)?.save(&c.out)?;
    Ok(())
}

fn assess(c: AssessCmd) -> Outcome {
    let model = LinearIRMModel::load(&c.model)?;
    let envs = load_csv(&c.data)?;
    let density = fit_density(&envs)?;
    let report = inv_statistic(&model, &density, &envs)?;
    report.write_csv(&c.out)?;
    println!("inv = {}", report.inv);
    if let Some((lo, hi)) = report.ratio_bounds {
        println!("density ratios clamped to [{lo:e}, {hi:e}]");
    }
    println!("variance taken over all {} sources, baseline included", report.env_ids.len());
    Ok(())
}

/// Feature rows plus, for the dataset layout, the environment and target of each.
struct Points {
    x: Array2<f64>,
    labels: Option<Vec<(EnvId, f64)>>,
}

fn read_points(path: &Path) -> Result<Points, Failure> {
    let name = path.display().to_string();
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = BufReader::new(file);
    let mut header = String::new();
    reader.read_line(&mut header).map_err(io_err(path))?;
    if header.trim_start().starts_with("env,") {
        let text = header + &io::read_to_string(reader).map_err(io_err(path))?;
        // Rows come back grouped by environment, in ascending id order.
        let envs = parse_csv(text.as_bytes(), &name)?;
        let p = envs[0].dim();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for env in &envs {
            for (x, y) in env.features().rows().into_iter().zip(env.targets()) {
                rows.extend(x.iter().copied());
                labels.push((env.env_id(), *y));
            }
        }
        let x = Array2::from_shape_vec((labels.len(), p), rows).expect("row-major shape");
        return Ok(Points { x, labels: Some(labels) });
    }

    let cols: Vec<&str> = header.trim().split(',').map(str::trim).collect();
    for (j, c) in cols.iter().enumerate() {
        if *c != format!("x{}", j + 1) {
            return Err(Error::Parse {
                source_name: name,
                line: 1,
                message: format!("expected header `x1,..,xp` or `env,y,x1,..,xp`, found column `{c}`"),
            }
            .into());
        }
    }
    let mut csv = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
    let mut values = Vec::new();
    let mut n = 0;
    for (i, rec) in csv.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| Error::Parse {
            source_name: name.clone(),
            line,
            message: e.to_string(),
        })?;
        if rec.len() != cols.len() {
            return Err(Error::Parse {
                source_name: name,
                line,
                message: format!("{} fields, expected {}", rec.len(), cols.len()),
            }
            .into());
        }
        for field in &rec {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                source_name: name.clone(),
                line,
                message: format!("`{field}` is not a number"),
            })?;
            values.push(v);
        }
        n += 1;
    }
    let x = Array2::from_shape_vec((n, cols.len()), values).expect("row-major shape");
    Ok(Points { x, labels: None })
}

/// `δ` per calibration environment from the `delta,<env>,<value>` lines of an
/// invariance report.
fn read_delta(path: &Path, state: &CalibrationState) -> Result<Vec<f64>, Failure> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let name = path.display().to_string();
    let mut found = std::collections::BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let Some(rest) = line.strip_prefix("delta,") else { continue };
        let parsed = rest
            .split_once(',')
            .and_then(|(e, v)| Some((e.trim().parse::<EnvId>().ok()?, v.trim().parse::<f64>().ok()?)));
        let (env, value) = parsed.ok_or_else(|| Error::Parse {
            source_name: name.clone(),
            line: i as u64 + 1,
            message: "expected `delta,<env>,<value>`".into(),
        })?;
        found.insert(env, value);
    }
    state
        .envs()
        .iter()
        .map(|e| {
            found.get(&e.env_id()).copied().ok_or_else(|| {
                Failure::Runtime(Error::InvalidInput(format!("{name}: no δ for environment {}", e.env_id())))
            })
        })
        .collect()
}

fn predict(c: PredictCmd) -> Outcome {
    acir_core::quantile::check_alpha(c.alpha).map_err(usage)?;
    if c.inflate.is_some() && matches!(c.method, IntervalMethod::Sc) {
        return Err(usage("--inflate only applies to --method acir"));
    }
    let model = LinearIRMModel::load(&c.model)?;
    let state = CalibrationState::load(&c.calibration, model)?;
    let delta = c.inflate.as_deref().map(|p| read_delta(p, &state)).transpose()?;
    let points = read_points(&c.input)?;

    let intervals = points
        .x
        .rows()
        .into_iter()
        .map(|x| match c.method {
            IntervalMethod::Sc => sc_interval(&state, x, c.alpha),
            IntervalMethod::Acir => acir_interval(&state, x, c.alpha, delta.as_deref()),
        })
        .collect::<Result<Vec<PredictionInterval>, _>>()?;

    let mut text = String::new();
    match &points.labels {
        None => {
            text += "row,lower,center,upper\n";
            for (i, iv) in intervals.iter().enumerate() {
                text += &format!("{i},{},{},{}\n", iv.lower(), iv.center(), iv.upper());
            }
        }
        Some(labels) => {
            text += "row,env,y,lower,center,upper,covered\n";
            let mut covered = 0;
            for (i, (iv, (env, y))) in intervals.iter().zip(labels).enumerate() {
                let hit = iv.contains(*y);
                covered += usize::from(hit);
                text += &format!("{i},{env},{y},{},{},{},{}\n", iv.lower(), iv.center(), iv.upper(), u8::from(hit));
            }
            log::info!("coverage {covered}/{}", labels.len());
        }
    }
    match &c.out {
        Some(path) => std::fs::write(path, text).map_err(io_err(path)),
        None => io::stdout().write_all(text.as_bytes()).map_err(io_err(Path::new("<stdout>"))),
    }
}
