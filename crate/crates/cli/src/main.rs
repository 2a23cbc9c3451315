//! `tracelink` command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tracelink::pipeline::{self, Mode, PipelineConfig, Services};
use tracelink::translation::{TranslationCache, TranslatorId};
use tracelink::{Error, Result};

#[derive(Parser)]
#[command(
    name = "tracelink",
    version,
    about = "Recover issue-commit trace links in bilingual projects"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fill the translation cache for every non-English sentence.
    Translate {
        #[command(flatten)]
        common: CommonArgs,
        /// Merge these JSON-lines cache files into the cache first.
        #[arg(long = "import", value_name = "FILE")]
        imports: Vec<PathBuf>,
        /// Write the whole cache, sorted, to this file afterwards.
        #[arg(long, value_name = "FILE")]
        export: Option<PathBuf>,
    },
    /// Fill the parse cache for every translation variant.
    Parse {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the pipeline in one mode and write ranked.csv, metrics.json and manifest.json.
    Trace {
        #[command(flatten)]
        common: CommonArgs,
        /// basic, single:<translator>, multicob or aviate.
        #[arg(long)]
        mode: Option<Mode>,
    },
    /// Compute metrics for an existing ranked CSV.
    Eval {
        #[arg(long, value_name = "CSV")]
        ranked: PathBuf,
        #[arg(long, value_name = "JSON")]
        dataset: PathBuf,
        /// Label stored in the metrics.
        #[arg(long, default_value = "eval")]
        mode: String,
        /// Write metrics.json into this directory instead of stdout.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Run several modes into <out>/<mode>/ and print a comparison table.
    Ablate {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated modes; defaults to basic, single:<first translator>, multicob, aviate.
        #[arg(long, value_delimiter = ',')]
        modes: Vec<Mode>,
    },
}

/// Flags shared by the pipeline commands. Each one overrides the config file.
#[derive(Args)]
struct CommonArgs {
    /// TOML config file.
    #[arg(long, value_name = "TOML")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "JSON")]
    dataset: Option<PathBuf>,
    /// Comma-separated translator roster, in tie-breaking order.
    #[arg(long, value_delimiter = ',')]
    translators: Vec<String>,
    /// Translator whose text is the document body in multicob/aviate.
    #[arg(long)]
    base_translator: Option<String>,
    #[arg(long)]
    scale_factor: Option<f64>,
    #[arg(long)]
    itvf_threshold: Option<f64>,
    #[arg(long, value_name = "JSONL")]
    translation_cache: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    parse_cache: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    stopwords: Option<PathBuf>,
    /// Never contact translator or parser endpoints.
    #[arg(long)]
    offline: bool,
    /// Also write consensus.tsv and emphasis.json.
    #[arg(long)]
    debug_exports: bool,
}

impl CommonArgs {
    fn config(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::from_toml_file(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(p) = &self.dataset {
            cfg.dataset = Some(p.clone());
        }
        if !self.translators.is_empty() {
            cfg.translators = self
                .translators
                .iter()
                .map(|t| TranslatorId::new(t.trim()))
                .collect::<Result<_>>()?;
        }
        if let Some(t) = &self.base_translator {
            cfg.base_translator = Some(TranslatorId::new(t.as_str())?);
        }
        if let Some(x) = self.scale_factor {
            cfg.scale_factor = x;
        }
        if let Some(x) = self.itvf_threshold {
            cfg.itvf_threshold = x;
        }
        if let Some(p) = &self.translation_cache {
            cfg.translation_cache = Some(p.clone());
        }
        if let Some(p) = &self.parse_cache {
            cfg.parse_cache = Some(p.clone());
        }
        if let Some(p) = &self.out {
            cfg.out = p.clone();
        }
        if let Some(p) = &self.stopwords {
            cfg.stopwords = Some(p.clone());
        }
        cfg.offline |= self.offline;
        cfg.debug_exports |= self.debug_exports;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Translate {
            common,
            imports,
            export,
        } => {
            let cfg = common.config()?;
            let cache_path = cfg
                .translation_cache
                .clone()
                .ok_or_else(|| Error::Config("--translation-cache is required".into()))?;
            if !imports.is_empty() {
                let mut cache = TranslationCache::open(&cache_path)?;
                for path in &imports {
                    let added = cache.merge(&TranslationCache::open(path)?);
                    println!("imported {added} entries from {}", path.display());
                }
                cache.flush()?;
            }
            if cfg.dataset.is_some() {
                let n = pipeline::populate_translations(&cfg, &Services::from_config(&cfg)?)?;
                println!("{n} translation variants available");
            }
            if let Some(path) = export {
                let cache = TranslationCache::open(&cache_path)?;
                cache.export(&path)?;
                println!("exported {} entries to {}", cache.len(), path.display());
            }
            Ok(())
        }
        Command::Parse { common } => {
            let cfg = common.config()?;
            let n = pipeline::populate_parses(&cfg, &Services::from_config(&cfg)?)?;
            println!("{n} variant texts parsed");
            Ok(())
        }
        Command::Trace { common, mode } => {
            let mut cfg = common.config()?;
            if let Some(m) = mode {
                cfg.mode = m;
            }
            let manifest = pipeline::run(&cfg, &Services::from_config(&cfg)?)?;
            println!(
                "{} [{}]: AP {:.2}, MAP {:.2} -> {}",
                manifest.project,
                manifest.mode,
                manifest.ap,
                manifest.map,
                cfg.out.display()
            );
            Ok(())
        }
        Command::Eval {
            ranked,
            dataset,
            mode,
            out,
        } => {
            let report = pipeline::evaluate_ranked(&ranked, &dataset, &mode)?;
            match out {
                Some(dir) => write_metrics(&dir, &report.to_json()),
                None => {
                    print!("{}", report.to_json());
                    Ok(())
                }
            }
        }
        Command::Ablate { common, modes } => {
            let cfg = common.config()?;
            let modes = if modes.is_empty() { default_modes(&cfg)? } else { modes };
            let (_, report) = pipeline::ablate(&cfg, &modes, &Services::from_config(&cfg)?)?;
            print!("{}", report.to_text());
            Ok(())
        }
    }
}

fn default_modes(cfg: &PipelineConfig) -> Result<Vec<Mode>> {
    let first = cfg
        .translators
        .first()
        .ok_or_else(|| Error::Config("ablation needs --translators or --modes".into()))?;
    Ok(vec![
        Mode::Basic,
        Mode::Single(first.clone()),
        Mode::MultiCob,
        Mode::Aviate,
    ])
}

fn write_metrics(dir: &Path, json: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        context: format!("creating {}", dir.display()),
        source: e,
    })?;
    tracelink::hashing::write_atomic(&dir.join(pipeline::METRICS_FILE), json.as_bytes())
}
