use std::fs;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use panel_trend::bandwidth::{default_grid, select_bandwidth};
use panel_trend::ingest::{
    load_densities, load_feed, panel_from_records, panel_records, prepare_region, write_canonical,
    Measure, PrepareOptions,
};
use panel_trend::kernel::KernelSpec;
use panel_trend::panel::{build_panel, eval_set, EvalRule, Panel, Transform};
use panel_trend::pipeline::{estimate as run_pipeline, BandwidthChoice, EstimateOptions, EstimationReport};
use panel_trend::synthetic::{generate, GroundTruth, Model, SyntheticSpec};
use panel_trend::trend::{peak_transform, rolling_windows, select_reference, RollingRow, WindowBandwidth};
use serde::Serialize;

use crate::output::Staged;
use crate::{CaseArg, EstimateArgs, HArg, ModelArg, SimulateArgs, WindowBandwidthArg};

#[derive(Serialize)]
struct Exclusions {
    no_density: Vec<String>,
    below_death_threshold: Vec<String>,
    not_started: Vec<String>,
    duplicate_rows: usize,
}

#[derive(Serialize)]
struct Source {
    feed: Option<String>,
    density: Option<String>,
    synthetic: Option<String>,
    seed: Option<u64>,
    measure: Measure,
    case: &'static str,
    trim_days: Option<usize>,
    death_threshold: Option<f64>,
    cutoff: Option<NaiveDate>,
    exclusions: Option<Exclusions>,
}

#[derive(Serialize)]
struct EstimateFile<'a> {
    source: &'a Source,
    report: &'a EstimationReport,
}

#[derive(Serialize)]
struct RollingFile<'a> {
    source: &'a Source,
    window: usize,
    window_c_rule: EvalRule,
    bandwidth_policy: &'static str,
    h: Option<f64>,
    n_units: usize,
    n_periods: usize,
    windows: &'a [RollingRow],
}

struct Loaded {
    panel: Panel,
    /// Raw final-day counts, aligned with the panel's units.
    final_counts: Option<Vec<f64>>,
    source: Source,
}

fn case_label(case: CaseArg) -> &'static str {
    match case {
        CaseArg::One => "case1",
        CaseArg::Two => "case2",
        CaseArg::Raw => "raw",
    }
}

fn read_spec(path: &std::path::Path, seed: Option<u64>) -> Result<SyntheticSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut spec: SyntheticSpec =
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    spec.validate()?;
    Ok(spec)
}

fn load(args: &EstimateArgs) -> Result<Loaded> {
    if let Some(path) = &args.synthetic {
        let spec = read_spec(path, args.seed)?;
        let (panel, _) = generate(&spec)?;
        return Ok(Loaded {
            panel,
            final_counts: None,
            source: Source {
                feed: None,
                density: None,
                synthetic: Some(path.display().to_string()),
                seed: Some(spec.seed),
                measure: args.measure,
                case: "synthetic",
                trim_days: None,
                death_threshold: None,
                cutoff: None,
                exclusions: None,
            },
        });
    }

    let feed_path = args.feed.as_ref().expect("clap requires --feed or --synthetic");
    let feed = load_feed(feed_path, args.schema)
        .with_context(|| format!("reading feed {}", feed_path.display()))?;
    let mut source = Source {
        feed: Some(feed_path.display().to_string()),
        density: args.density.as_ref().map(|p| p.display().to_string()),
        synthetic: None,
        seed: None,
        measure: args.measure,
        case: case_label(args.case),
        trim_days: None,
        death_threshold: None,
        cutoff: args.cutoff,
        exclusions: None,
    };

    let transform = match args.case {
        CaseArg::Raw => {
            let panel = panel_from_records(&feed.records, args.region, args.measure)?;
            return Ok(Loaded {
                panel,
                final_counts: None,
                source,
            });
        }
        CaseArg::One => Transform::Case1,
        CaseArg::Two => Transform::Case2,
    };
    if matches!(args.case, CaseArg::Two) && args.density.is_none() {
        bail!("case 2 divides by population density and needs --density");
    }
    let densities = match &args.density {
        Some(p) => Some(load_densities(p).with_context(|| format!("reading densities {}", p.display()))?),
        None => None,
    };
    let trim_days = args.trim.unwrap_or(if args.rolling { 40 } else { 30 });
    let opts = PrepareOptions {
        trim_days,
        death_threshold: args.death_threshold,
        cutoff: args.cutoff,
        ..PrepareOptions::new(args.region, args.measure)
    };
    let prepared = prepare_region(&feed.records, densities.as_deref(), &opts)?;
    let panel = build_panel(&prepared.series, &prepared.time_labels, args.region, transform)?;
    source.trim_days = Some(trim_days);
    source.death_threshold = (args.measure == Measure::Death).then_some(args.death_threshold);
    source.cutoff = prepared.time_labels.last().copied();
    source.exclusions = Some(Exclusions {
        no_density: prepared.excluded_no_density,
        below_death_threshold: prepared.excluded_deaths,
        not_started: prepared.excluded_not_started,
        duplicate_rows: prepared.duplicates,
    });
    Ok(Loaded {
        panel,
        final_counts: Some(prepared.final_counts),
        source,
    })
}

fn model(m: ModelArg) -> Model {
    match m {
        ModelArg::One => Model::Model1,
        ModelArg::Two => Model::Model2,
    }
}

pub fn estimate(args: &EstimateArgs) -> Result<()> {
    let loaded = load(args)?;
    let panel = &loaded.panel;
    log::info!("panel: N = {}, T = {}", panel.n_units(), panel.n_periods());

    let reference = match &args.reference {
        Some(code) => Some(
            panel
                .unit_ids()
                .iter()
                .position(|id| id == code)
                .with_context(|| format!("reference unit `{code}` is not in the panel"))?,
        ),
        None => loaded
            .final_counts
            .as_ref()
            .and_then(|c| select_reference(panel.unit_ids(), c)),
    };

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut staged = Staged::new(&args.out)?;
    if args.rolling {
        rolling(args, &loaded, &mut staged)?;
    } else {
        let opts = EstimateOptions {
            model: model(args.model),
            bandwidth: match args.h {
                HArg::Auto => BandwidthChoice::Auto(None),
                HArg::Fixed(h) => BandwidthChoice::Fixed(h),
            },
            c_rule: args.c_rule,
            reference,
        };
        let report = run_pipeline(panel, &opts)?;
        let case = loaded.source.case;
        staged.write("a_hat.csv", |w| crate::output::a_hat_csv(w, &report, case, args.measure))?;
        staged.write("r_series.csv", |w| crate::output::r_series_csv(w, &report, panel))?;
        staged.write("q_series.csv", |w| crate::output::q_series_csv(w, &report, panel))?;
        staged.write("report.json", |w| {
            crate::output::json(w, &EstimateFile { source: &loaded.source, report: &report })
        })?;
    }
    staged.commit()
}

fn rolling(args: &EstimateArgs, loaded: &Loaded, staged: &mut Staged) -> Result<()> {
    let panel = &loaded.panel;
    let full_h = match args.h {
        HArg::Fixed(h) => Some(h),
        HArg::Auto if args.window_bandwidth == WindowBandwidthArg::Fixed || args.model == ModelArg::Two => {
            let c = eval_set(panel, args.c_rule)?;
            Some(select_bandwidth(panel, &default_grid(panel.n_periods()), &c)?.h_hat)
        }
        HArg::Auto => None,
    };
    let work = match (args.model, full_h) {
        (ModelArg::Two, Some(h)) => peak_transform(panel, &KernelSpec::epanechnikov(h)?)?.0,
        _ => panel.clone(),
    };
    let policy = match (args.window_bandwidth, full_h) {
        (WindowBandwidthArg::Fixed, Some(h)) => WindowBandwidth::Fixed(KernelSpec::epanechnikov(h)?),
        _ => WindowBandwidth::PerWindowCv,
    };
    let rows = rolling_windows(&work, args.window, policy, args.window_c_rule)?;
    staged.write("rolling.csv", |w| crate::output::rolling_csv(w, &rows))?;
    staged.write("report.json", |w| {
        crate::output::json(
            w,
            &RollingFile {
                source: &loaded.source,
                window: args.window,
                window_c_rule: args.window_c_rule,
                bandwidth_policy: match policy {
                    WindowBandwidth::Fixed(_) => "fixed_h",
                    WindowBandwidth::PerWindowCv => "per_window_cv",
                },
                h: full_h,
                n_units: panel.n_units(),
                n_periods: panel.n_periods(),
                windows: &rows,
            },
        )
    })
}

#[derive(Serialize)]
struct TruthFile<'a> {
    spec: &'a SyntheticSpec,
    truth: &'a GroundTruth,
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let spec = read_spec(&args.spec, args.seed)?;
    let (panel, truth) = generate(&spec)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut staged = Staged::new(&args.out)?;
    staged.write("panel.csv", |w| Ok(write_canonical(w, &panel_records(&panel))?))?;
    staged.write("truth.json", |w| crate::output::json(w, &TruthFile { spec: &spec, truth: &truth }))?;
    staged.commit()
}
