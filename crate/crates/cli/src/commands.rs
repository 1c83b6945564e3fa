//! Implementations of the five subcommands.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ghicast::data::{year_of_hour, year_start_hour, IrradianceTable, YearRange};
use ghicast::eval::{
    emit_plot_data, evaluate, improvement, parse_plot_data, render_table, sweep_leads,
    LeadEntry, LeadTimeReport, Metrics,
};
use ghicast::features::{
    build_multi, build_single, Dataset, FeatureSpec, Mode, Scaler, SkipReport,
    DEFAULT_MULTI_P, DEFAULT_MULTI_P_PRIME, DEFAULT_NEIGHBORS, DEFAULT_SINGLE_P, MAX_LEAD,
};
use ghicast::gbrt::{self, GbrtConfig};
use ghicast::neural::{train as train_neural, Model, ModelConfig, ModelKind, TrainConfig};
use ghicast::numerics::AdamParams;
use ghicast::persist::{load_model, save_model, ModelBundle, ModelPayload};
use ghicast::synth::{generate, SynthConfig};
use ghicast::{Error, Result};

use crate::config::FileConfig;
use crate::{EvalArgs, ReportArgs, SweepArgs, SynthArgs, TrainArgs};

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

pub fn synth(a: SynthArgs) -> Result<()> {
    let file = FileConfig::load_opt(&a.config)?;
    let grid = file.resolve(a.grid, "grid", "5x5".to_string())?;
    let (rows, cols) = parse_grid(&grid)?;
    let hours = file.resolve(a.hours, "hours", 8760)?;
    if hours == 0 {
        return Err(Error::Config("--hours must be >= 1".into()));
    }
    let cloud_speed = file.resolve(a.cloud_speed, "cloud-speed", 1.0)?;
    if !cloud_speed.is_finite() || cloud_speed < 0.0 {
        return Err(Error::Config(format!(
            "--cloud-speed must be finite and >= 0, got {cloud_speed}"
        )));
    }
    let cloud_cover = file.resolve(a.cloud_cover, "cloud-cover", 1.0)?;
    if !(0.0..=1.0).contains(&cloud_cover) {
        return Err(Error::Config(format!(
            "--cloud-cover must be in [0, 1], got {cloud_cover}"
        )));
    }
    let start_year = file.resolve(a.start_year, "start-year", 2000)?;
    let out = file.resolve(a.out, "out", PathBuf::from("synthetic.csv"))?;
    let cfg = SynthConfig {
        grid_rows: rows,
        grid_cols: cols,
        hours,
        seed: file.resolve(a.seed, "seed", 0)?,
        cloud_speed,
        cloud_cover,
        start_hour: year_start_hour(start_year),
        ..SynthConfig::default()
    };
    let table = generate(&cfg)?;
    let mut w = BufWriter::new(create(&out)?);
    table.emit_csv(&mut w)?;
    w.flush()?;
    println!(
        "wrote {} records ({} locations x {hours} hours) to {}",
        table.record_count(),
        rows * cols,
        out.display()
    );
    Ok(())
}

fn parse_grid(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Config(format!("--grid expects RxC with positive sizes, got `{s}`"));
    let (r, c) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let rows: usize = r.trim().parse().map_err(|_| bad())?;
    let cols: usize = c.trim().parse().map_err(|_| bad())?;
    if rows == 0 || cols == 0 {
        return Err(bad());
    }
    Ok((rows, cols))
}

// ---------------------------------------------------------------------------
// shared plumbing
// ---------------------------------------------------------------------------

fn open(path: &Path) -> Result<File> {
    File::open(path)
        .map_err(|e| Error::Validation(format!("cannot open {}: {e}", path.display())))
}

fn create(path: &Path) -> Result<File> {
    File::create(path)
        .map_err(|e| Error::Validation(format!("cannot write {}: {e}", path.display())))
}

fn load_table(path: &Path) -> Result<IrradianceTable> {
    IrradianceTable::parse_csv(BufReader::new(open(path)?))
}

fn parse_years(s: &str) -> Result<YearRange> {
    YearRange::parse(s).map_err(|e| Error::Config(e.to_string()))
}

fn parse_mode(s: &str) -> Result<Mode> {
    match s.to_ascii_lowercase().as_str() {
        "single" => Ok(Mode::Single),
        "multi" => Ok(Mode::Multi),
        other => Err(Error::Config(format!("unknown mode `{other}`; expected single or multi"))),
    }
}

#[derive(Clone, Copy)]
enum CliModel {
    Neural(ModelKind),
    Gbrt,
}

impl CliModel {
    fn label(&self) -> &'static str {
        match self {
            CliModel::Neural(k) => k.label(),
            CliModel::Gbrt => "GBRT",
        }
    }
}

fn parse_model(s: &str) -> Result<CliModel> {
    if s.eq_ignore_ascii_case("gbrt") {
        Ok(CliModel::Gbrt)
    } else {
        ModelKind::parse(s).map(CliModel::Neural)
    }
}

fn resolve_lead(file: &FileConfig, flag: Option<u32>) -> Result<usize> {
    let lead = file.resolve(flag.map(|v| v as usize), "lead", 1)?;
    if !(1..=MAX_LEAD).contains(&lead) {
        return Err(Error::Config(format!("lead time must be in 1..={MAX_LEAD}, got {lead}")));
    }
    Ok(lead)
}

fn parse_leads(s: &str) -> Result<Vec<usize>> {
    let bad = |part: &str| {
        Error::Config(format!("--leads expects values like `1-24` or `1,6,12`, got `{part}`"))
    };
    let mut out = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        if let Some((a, b)) = part.split_once('-') {
            let lo: usize = a.trim().parse().map_err(|_| bad(part))?;
            let hi: usize = b.trim().parse().map_err(|_| bad(part))?;
            if lo > hi {
                return Err(bad(part));
            }
            out.extend(lo..=hi);
        } else {
            out.push(part.parse().map_err(|_| bad(part))?);
        }
    }
    for &t in &out {
        if !(1..=MAX_LEAD).contains(&t) {
            return Err(Error::Config(format!("lead time must be in 1..={MAX_LEAD}, got {t}")));
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

struct FeatureGeometry {
    mode: Mode,
    p: usize,
    p_prime: usize,
    n_neighbors: usize,
}

impl FeatureGeometry {
    fn resolve(file: &FileConfig, opts: &crate::ModelOpts) -> Result<FeatureGeometry> {
        let mode = parse_mode(&file.resolve(opts.mode.clone(), "mode", "single".into())?)?;
        let (default_p, default_pp, default_n) = match mode {
            Mode::Single => (DEFAULT_SINGLE_P, 0, 0),
            Mode::Multi => (DEFAULT_MULTI_P, DEFAULT_MULTI_P_PRIME, DEFAULT_NEIGHBORS),
        };
        let g = FeatureGeometry {
            mode,
            p: file.resolve(opts.p, "p", default_p)?,
            p_prime: file.resolve(opts.p_prime, "p-prime", default_pp)?,
            n_neighbors: file.resolve(opts.neighbors, "neighbors", default_n)?,
        };
        g.spec(1).validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(g)
    }

    fn spec(&self, lead: usize) -> FeatureSpec {
        FeatureSpec {
            mode: self.mode,
            p: self.p,
            p_prime: self.p_prime,
            n_neighbors: self.n_neighbors,
            lead,
        }
    }

    /// Location-count row label: "1" for single, "N+1" for multi.
    fn mode_label(&self) -> String {
        match self.mode {
            Mode::Single => "1".to_string(),
            Mode::Multi => (self.n_neighbors + 1).to_string(),
        }
    }
}

fn resolve_locations(
    table: &IrradianceTable,
    target: Option<u32>,
    geometry: &FeatureGeometry,
) -> Result<(u32, Vec<u32>)> {
    let target = target.unwrap_or_else(|| table.center_location());
    if table.series(target).is_none() {
        return Err(Error::Validation(format!("target location {target} is not in the data")));
    }
    let neighbors = match geometry.mode {
        Mode::Single => Vec::new(),
        Mode::Multi => table.nearest_neighbors(target, geometry.n_neighbors)?,
    };
    Ok((target, neighbors))
}

fn build_dataset(
    table: &IrradianceTable,
    spec: &FeatureSpec,
    target: u32,
    neighbors: &[u32],
) -> Result<(Dataset, SkipReport)> {
    match spec.mode {
        Mode::Single => build_single(table, spec, target),
        Mode::Multi => build_multi(table, spec, target, neighbors),
    }
}

fn resolve_neural_config(
    file: &FileConfig,
    opts: &crate::NeuralOpts,
    seed: u64,
) -> Result<(usize, usize, TrainConfig)> {
    let d = TrainConfig::default();
    let tc = TrainConfig {
        max_epochs: file.resolve(opts.epochs, "epochs", d.max_epochs)?,
        batch_size: file.resolve(opts.batch, "batch", d.batch_size)?,
        adam: AdamParams {
            lr: file.resolve(opts.lr, "lr", AdamParams::default().lr)?,
            ..AdamParams::default()
        },
        patience: file.resolve(opts.patience, "patience", d.patience)?,
        val_fraction: file.resolve(opts.val_fraction, "val-fraction", d.val_fraction)?,
        seed,
        clip_norm: file.resolve(opts.clip_norm, "clip-norm", d.clip_norm)?,
    };
    tc.validate()?;
    let hidden = file.resolve(opts.hidden, "hidden", ghicast::neural::DEFAULT_HIDDEN)?;
    let decoder_steps = file.resolve(opts.decoder_steps, "decoder-steps", 1)?;
    if hidden == 0 || decoder_steps == 0 {
        return Err(Error::Config("hidden and decoder-steps must be >= 1".into()));
    }
    Ok((hidden, decoder_steps, tc))
}

fn resolve_gbrt_config(
    file: &FileConfig,
    opts: &crate::GbrtOpts,
    mode: Mode,
    seed: u64,
) -> Result<GbrtConfig> {
    let base = match mode {
        Mode::Single => GbrtConfig::default(),
        Mode::Multi => GbrtConfig::multi_default(),
    };
    let cfg = GbrtConfig {
        rounds: file.resolve(opts.rounds, "rounds", base.rounds)?,
        shrinkage: file.resolve(opts.shrinkage, "shrinkage", base.shrinkage)?,
        max_depth: file.resolve(opts.depth, "depth", base.max_depth)?,
        min_leaf: file.resolve(opts.min_leaf, "min-leaf", base.min_leaf)?,
        delta_quantile: file.resolve(opts.delta_quantile, "delta-quantile", base.delta_quantile)?,
        seed,
    };
    if cfg.rounds == 0 {
        return Err(Error::Config("--rounds must be >= 1".into()));
    }
    cfg.validate()?;
    Ok(cfg)
}

struct ModelRecipe {
    kind: CliModel,
    hidden: usize,
    decoder_steps: usize,
    train: TrainConfig,
    gbrt: GbrtConfig,
}

impl ModelRecipe {
    /// Trains on an already-scaled dataset; `seed` overrides the recipe's
    /// base seed (sweeps derive one per lead).
    fn fit(&self, ds: &Dataset, seed: u64) -> Result<(ModelPayload, String)> {
        match self.kind {
            CliModel::Neural(kind) => {
                let cfg = ModelConfig {
                    kind,
                    input_dim: ds.dim(),
                    hidden: self.hidden,
                    decoder_steps: self.decoder_steps,
                };
                let mut model = Model::new(cfg, seed)?;
                let tc = TrainConfig { seed, ..self.train };
                let hist = train_neural(&mut model, ds, &tc)?;
                let log = format!(
                    "epochs {} (best {}), best val MAE (scaled) {:.6}",
                    hist.epochs_run(),
                    hist.best_epoch + 1,
                    hist.best_val_mae
                );
                Ok((ModelPayload::Neural(model), log))
            }
            CliModel::Gbrt => {
                let fit = gbrt::fit(&ds.x, &ds.y, &self.gbrt)?;
                let log = format!(
                    "rounds {}, depth {}, final train huber loss (scaled) {:.6e}",
                    self.gbrt.rounds,
                    self.gbrt.max_depth,
                    fit.round_losses.last().copied().unwrap_or(f64::NAN)
                );
                Ok((ModelPayload::Gbrt(fit.ensemble), log))
            }
        }
    }
}

fn derive_seed(base: u64, lead: usize) -> u64 {
    base ^ (lead as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

pub fn train(a: TrainArgs) -> Result<()> {
    let file = FileConfig::load_opt(&a.config)?;
    let kind = parse_model(&file.resolve(a.model.model.clone(), "model", "lstm".into())?)?;
    let geometry = FeatureGeometry::resolve(&file, &a.model)?;
    let lead = resolve_lead(&file, a.lead)?;
    let seed = file.resolve(a.model.seed, "seed", 0)?;
    let (hidden, decoder_steps, tc) = resolve_neural_config(&file, &a.neural, seed)?;
    let gc = resolve_gbrt_config(&file, &a.gbrt, geometry.mode, seed)?;
    let recipe = ModelRecipe { kind, hidden, decoder_steps, train: tc, gbrt: gc };
    let data_path = file.resolve(a.data, "data", PathBuf::from("data.csv"))?;
    let out = file.resolve(a.out, "out", PathBuf::from("model.ghim"))?;

    let table = load_table(&data_path)?;
    let train_table = match file.resolve_opt(a.train_years, "train-years")? {
        Some(s) => table.filter_years(parse_years(&s)?)?,
        None => table,
    };
    let target_flag = file.resolve_opt(a.model.target, "target")?;
    let (target, neighbors) = resolve_locations(&train_table, target_flag, &geometry)?;
    let spec = geometry.spec(lead);
    let (raw, skip) = build_dataset(&train_table, &spec, target, &neighbors)?;
    if let Some(dump) = &a.dump_features {
        let mut w = BufWriter::new(create(dump)?);
        raw.emit_csv(&mut w)?;
        w.flush()?;
        println!("dumped {} raw feature rows to {}", raw.len(), dump.display());
    }
    let scaler = Scaler::fit(&raw, &spec)?;
    let ds = scaler.apply(&spec, &raw)?;
    println!(
        "training {}-{} lead {lead}h on location {target}: {} rows ({} skipped), {} features",
        recipe.kind.label(),
        geometry.mode_label(),
        ds.len(),
        skip.skipped,
        ds.dim()
    );
    let (payload, log) = recipe.fit(&ds, seed)?;
    println!("{log}");
    save_model(&out, &ModelBundle { spec, scaler, payload })?;
    println!("saved {}", out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

pub fn eval(a: EvalArgs) -> Result<()> {
    let file = FileConfig::load_opt(&a.config)?;
    let bundle = load_model(&a.model_file)?;
    let spec = bundle.spec;
    let raw = if let Some(features) = &a.features {
        let ds = Dataset::parse_csv(BufReader::new(open(features)?))?;
        if ds.dim() != spec.input_dim() {
            return Err(Error::Dimension { expected: spec.input_dim(), got: ds.dim() });
        }
        ds
    } else {
        let data_path = file.resolve(a.data, "data", PathBuf::from("data.csv"))?;
        let table = load_table(&data_path)?;
        let years = match file.resolve_opt(a.test_years, "test-years")? {
            Some(s) => parse_years(&s)?,
            None => {
                let last = year_of_hour(table.hour_span().1);
                YearRange::new(last, last)?
            }
        };
        let test_table = table.filter_years(years)?;
        let geometry = FeatureGeometry {
            mode: spec.mode,
            p: spec.p,
            p_prime: spec.p_prime,
            n_neighbors: spec.n_neighbors,
        };
        let target_flag = file.resolve_opt(a.target, "target")?;
        let (target, neighbors) = resolve_locations(&test_table, target_flag, &geometry)?;
        build_dataset(&test_table, &spec, target, &neighbors)?.0
    };
    let ds = bundle.scaler.apply(&spec, &raw)?;
    let metrics = evaluate(&bundle.payload, &ds, &bundle.scaler)?;
    let mode_label = match spec.mode {
        Mode::Single => "1".to_string(),
        Mode::Multi => (spec.n_neighbors + 1).to_string(),
    };
    println!(
        "{}-{} lead {}h: MAE {:.3} W/m^2, RMSE {:.3} W/m^2 over {} rows",
        bundle.payload.label(),
        mode_label,
        spec.lead,
        metrics.mae,
        metrics.rmse,
        ds.len()
    );
    if let Some(out) = &a.out {
        let mut report = LeadTimeReport::new(bundle.payload.label(), &mode_label);
        report.entries.push(LeadEntry { lead: spec.lead, mae: metrics.mae, rmse: metrics.rmse });
        let mut w = BufWriter::new(create(out)?);
        emit_plot_data(std::slice::from_ref(&report), &mut w)?;
        w.flush()?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

pub fn sweep(a: SweepArgs) -> Result<()> {
    let file = FileConfig::load_opt(&a.config)?;
    let kind = parse_model(&file.resolve(a.model.model.clone(), "model", "lstm".into())?)?;
    let geometry = FeatureGeometry::resolve(&file, &a.model)?;
    let leads = parse_leads(&file.resolve(a.leads, "leads", "1-24".into())?)?;
    let jobs = file.resolve(a.jobs, "jobs", 1)?;
    if jobs == 0 {
        return Err(Error::Config("--jobs must be >= 1".into()));
    }
    let seed = file.resolve(a.model.seed, "seed", 0)?;
    let (hidden, decoder_steps, tc) = resolve_neural_config(&file, &a.neural, seed)?;
    let gc = resolve_gbrt_config(&file, &a.gbrt, geometry.mode, seed)?;
    let recipe = ModelRecipe { kind, hidden, decoder_steps, train: tc, gbrt: gc };
    let data_path = file.resolve(a.data, "data", PathBuf::from("data.csv"))?;
    let out = file.resolve(a.out, "out", PathBuf::from("report.csv"))?;

    let table = load_table(&data_path)?;
    let train_years = file.resolve_opt(a.train_years, "train-years")?;
    let test_years = file.resolve_opt(a.test_years, "test-years")?;
    let (train_table, test_table) = match (train_years, test_years) {
        (Some(tr), Some(te)) => table.split_by_year(parse_years(&tr)?, parse_years(&te)?)?,
        (None, None) => {
            let (first, last) = table.hour_span();
            let (fy, ly) = (year_of_hour(first), year_of_hour(last));
            if ly <= fy {
                return Err(Error::Config(
                    "data spans a single calendar year; pass --train-years and --test-years"
                        .into(),
                ));
            }
            table.split_by_year(YearRange::new(fy, ly - 1)?, YearRange::new(ly, ly)?)?
        }
        _ => {
            return Err(Error::Config(
                "pass both --train-years and --test-years, or neither".into(),
            ))
        }
    };
    let target_flag = file.resolve_opt(a.model.target, "target")?;
    let (target, neighbors) = resolve_locations(&train_table, target_flag, &geometry)?;

    let label = recipe.kind.label();
    let mode_label = geometry.mode_label();
    println!(
        "sweeping {label}-{mode_label} over {} lead times on location {target} ({jobs} jobs)",
        leads.len()
    );
    let report = sweep_leads(label, &mode_label, &leads, jobs, |lead| -> Result<Metrics> {
        let spec = geometry.spec(lead);
        let (raw_train, _) = build_dataset(&train_table, &spec, target, &neighbors)?;
        let scaler = Scaler::fit(&raw_train, &spec)?;
        let train_ds = scaler.apply(&spec, &raw_train)?;
        let (raw_test, _) = build_dataset(&test_table, &spec, target, &neighbors)?;
        let test_ds = scaler.apply(&spec, &raw_test)?;
        let (payload, _) = recipe.fit(&train_ds, derive_seed(seed, lead))?;
        evaluate(&payload, &test_ds, &scaler)
    })?;
    for f in &report.failures {
        eprintln!("warning: lead {} failed: {}", f.lead, f.message);
    }
    if report.entries.is_empty() {
        return Err(Error::Validation(format!(
            "all {} lead times failed; first error: {}",
            leads.len(),
            report.failures[0].message
        )));
    }
    print!("{}", render_table(std::slice::from_ref(&report)));
    let mut w = BufWriter::new(create(&out)?);
    emit_plot_data(std::slice::from_ref(&report), &mut w)?;
    w.flush()?;
    println!("wrote {}", out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

pub fn report(a: ReportArgs) -> Result<()> {
    let singles = parse_plot_data(BufReader::new(open(&a.single)?))?;
    let multis = parse_plot_data(BufReader::new(open(&a.multi)?))?;
    let mut all: Vec<LeadTimeReport> = singles.clone();
    all.extend(multis.iter().cloned());
    print!("{}", render_table(&all));
    let mut paired = 0;
    for s in &singles {
        let Some(m) = multis.iter().find(|m| m.model == s.model) else {
            continue;
        };
        paired += 1;
        let mut imps = Vec::new();
        for e in &s.entries {
            if m.entry(e.lead).is_none() {
                continue;
            }
            match improvement(s, m, e.lead) {
                Ok(imp) => {
                    println!(
                        "{}: T={} improvement {:.1}% (MAE {:.1} -> {:.1})",
                        s.model,
                        e.lead,
                        imp,
                        e.mae,
                        m.entry(e.lead).unwrap().mae
                    );
                    imps.push(imp);
                }
                Err(err) => println!("{}: T={}: {}", s.model, e.lead, err),
            }
        }
        if !imps.is_empty() {
            let mean = imps.iter().sum::<f64>() / imps.len() as f64;
            println!(
                "{}: mean improvement over {} lead times: {:.1}%",
                s.model,
                imps.len(),
                mean
            );
        }
    }
    if paired == 0 {
        eprintln!("warning: no model family appears in both reports");
    }
    if let Some(out) = &a.out {
        let mut w = BufWriter::new(create(out)?);
        emit_plot_data(&all, &mut w)?;
        w.flush()?;
        println!("wrote {}", out.display());
    }
    Ok(())
}
