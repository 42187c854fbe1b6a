use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Args;
use histoprog::config::RunConfig;
use histoprog::index::{Lineage, SimilarityIndex};
use histoprog::ingest::{load_features, load_lineage, load_records, FactorSchema};
use histoprog::personalize::{personalize, simulate_cohort, write_report_dir, PersonalizeOptions, SimulationSpec};

use crate::Outcome;

#[derive(Args)]
pub struct PersonalizeArgs {
    #[arg(long)]
    patient_id: String,
    /// Run configuration in `key = value` form.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Lasso penalty or `cv`.
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    /// Comma-separated factors to fit; all record factors by default.
    #[arg(long, value_delimiter = ',')]
    factors: Option<Vec<String>>,
    /// Any other config key, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Simulation spec in `key = value` form.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the spec seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn build_config(args: &PersonalizeArgs) -> anyhow::Result<RunConfig> {
    let mut config = RunConfig::load(&args.config)?;
    for o in &args.overrides {
        let Some((key, value)) = o.split_once('=') else {
            bail!("override `{o}` is not KEY=VALUE");
        };
        config.set(key.trim(), value.trim())?;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(l) = &args.lambda {
        config.set("lambda", l)?;
    }
    if let Some(k) = args.k {
        config.k = k;
    }
    if let Some(out) = &args.out {
        config.out_dir = Some(out.clone());
    }
    config.validate()?;
    Ok(config)
}

pub fn run(args: PersonalizeArgs) -> anyhow::Result<Outcome> {
    let config = build_config(&args)?;
    let Some(out_dir) = config.out_dir.clone() else {
        bail!("no output directory: set `out_dir` or pass --out");
    };
    let features = config.features.as_deref().map(load_features).transpose()?;
    let index = match (&config.index, &features) {
        (Some(p), _) => SimilarityIndex::load(p).with_context(|| format!("loading {}", p.display()))?,
        (None, Some(f)) => SimilarityIndex::build(f)?,
        (None, None) => bail!("config needs `index` or `features`"),
    };
    let lineage: Lineage = match (&config.lineage, &features) {
        (Some(p), _) => load_lineage(p)?,
        (None, Some(f)) => f
            .iter()
            .map(|v| (v.patch_id.clone(), (v.wsi_id.clone(), v.patient_id.clone())))
            .collect(),
        (None, None) => bail!("config needs `lineage` when only an index is given"),
    };
    let Some(records_path) = &config.records else {
        bail!("config needs `records`");
    };
    let schema = config.schema.as_deref().map(FactorSchema::load).transpose()?;
    let records = load_records(records_path, schema.as_ref())?;

    let mut options = PersonalizeOptions::from(&config);
    options.factors = args.factors.clone();
    log::info!("personalizing {} against {} indexed patches", args.patient_id, index.len());
    let report = personalize(&args.patient_id, &index, &lineage, &records, &options)?;
    write_report_dir(&report, &out_dir)?;
    log::info!(
        "cohort of {} patients, {} risk; report in {}",
        report.cohort_size,
        report.risk_group,
        out_dir.display()
    );
    if report.fit.status != "ok" {
        log::warn!("cox fit status: {}", report.fit.status);
    }
    Ok(Outcome::Done)
}

pub fn run_simulate(args: SimulateArgs) -> anyhow::Result<Outcome> {
    let mut spec = SimulationSpec::load(&args.spec)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let cohort = simulate_cohort(&spec)?;
    cohort.write_bundle(&args.out)?;
    let run_cfg = format!(
        "features = features.csv\nlineage = lineage.csv\nrecords = records.csv\nseed = {}\nout_dir = report\n",
        spec.seed
    );
    std::fs::write(args.out.join("run.cfg"), run_cfg)?;
    log::info!(
        "simulated {} patients, {:.1}% censored, bundle in {}",
        spec.n,
        100.0 * cohort.realized_censor_fraction,
        args.out.display()
    );
    Ok(Outcome::Done)
}
