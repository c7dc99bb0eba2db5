use std::collections::HashSet;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use jselide_core::report::{full_report, new_id_rate, write_reports, ReportError, ReportOptions};
use jselide_core::runtime::RuntimeTemplates;
use jselide_core::{analyze, elide, instrument, CoverageStore, ElisionPolicy, FunctionId, PhasePolicy, ResourceKey};
use jselide_core::cache::DiskCache;
use jselide_core::party::PartyConfig;
use jselide_proxy::{CertificateAuthority, Proxy, ProxyConfig, ServeMode, Server, BEACON_PATH};

#[derive(Parser)]
#[command(name = "jselide", version, about = "Learn which JS functions run and serve scripts without the rest")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the intercepting proxy.
    Serve(ServeArgs),
    /// Print the function units of a script as JSON.
    Analyze { file: PathBuf },
    /// Print the instrumented script.
    Instrument {
        file: PathBuf,
        #[arg(long, default_value = BEACON_PATH)]
        beacon_url: String,
    },
    /// Print the script with every function not listed in the coverage file elided.
    Elide {
        file: PathBuf,
        /// JSON array of function ids, or one id per line.
        #[arg(long)]
        coverage: PathBuf,
        #[arg(long, default_value = "/__jscov__/body")]
        sidecar_base: String,
        /// Write each sidecar as `<dir>/<id>.js`.
        #[arg(long)]
        sidecars: Option<PathBuf>,
        /// Elide every unit kind and allow output growth.
        #[arg(long)]
        permissive: bool,
    },
    /// Write per-resource and per-page statistics as CSV, plus a CDF table.
    Report(ReportArgs),
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    #[arg(long, default_value = "auto")]
    mode: ServeMode,
    #[arg(long, default_value = "jselide-store.log")]
    store: PathBuf,
    #[arg(long, default_value = "jselide-cache")]
    cache: PathBuf,
    /// Generated together with `--ca-key` if missing. Without both, HTTPS is
    /// tunnelled without interception.
    #[arg(long, requires = "ca_key")]
    ca_cert: Option<PathBuf>,
    #[arg(long, requires = "ca_cert")]
    ca_key: Option<PathBuf>,
    /// Host pattern treated as first party (`*.example.com` or an exact host).
    #[arg(long = "first-party")]
    first_party: Vec<String>,
    #[arg(long, default_value_t = 5)]
    min_beacons: u64,
    #[arg(long)]
    elide_third_party: bool,
    /// Extra PEM file of certificates to trust when connecting to origins.
    #[arg(long)]
    origin_ca: Vec<PathBuf>,
    /// Keep every resource in the learning phase regardless of beacon count.
    #[arg(long)]
    freeze: bool,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    cache: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long = "first-party")]
    first_party: Vec<String>,
    /// Skip the gzip columns, which require re-eliding every resource.
    #[arg(long)]
    no_compressed: bool,
}

type BoxError = Box<dyn std::error::Error + Send + Sync>;

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Serve(args) => serve(args),
        Command::Analyze { file } => cmd_analyze(&file),
        Command::Instrument { file, beacon_url } => cmd_instrument(&file, &beacon_url),
        Command::Elide { file, coverage, sidecar_base, sidecars, permissive } => {
            cmd_elide(&file, &coverage, &sidecar_base, sidecars.as_deref(), permissive)
        }
        Command::Report(args) => return report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn read_script(file: &Path) -> Result<(String, ResourceKey), BoxError> {
    let source = std::fs::read_to_string(file)?;
    let key = ResourceKey::new(&format!("file://{}", file.display()), source.as_bytes());
    Ok((source, key))
}

fn cmd_analyze(file: &Path) -> Result<(), BoxError> {
    let (source, key) = read_script(file)?;
    let analysis = analyze(&source, &key)?;
    println!("{}", serde_json::to_string_pretty(&analysis)?);
    Ok(())
}

fn cmd_instrument(file: &Path, beacon_url: &str) -> Result<(), BoxError> {
    let (source, key) = read_script(file)?;
    let analysis = analyze(&source, &key)?;
    let out = instrument(&source, &analysis, &RuntimeTemplates::default(), beacon_url)?;
    print!("{}", out.body);
    Ok(())
}

fn read_ids(path: &Path) -> Result<HashSet<FunctionId>, BoxError> {
    let text = std::fs::read_to_string(path)?;
    let raw: Vec<String> = if text.trim_start().starts_with('[') {
        serde_json::from_str(&text)?
    } else {
        text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect()
    };
    raw.iter()
        .map(|s| FunctionId::parse(s).ok_or_else(|| format!("not a function id: {s:?}").into()))
        .collect()
}

fn cmd_elide(file: &Path, coverage: &Path, base: &str, sidecar_dir: Option<&Path>, permissive: bool) -> Result<(), BoxError> {
    let (source, key) = read_script(file)?;
    let analysis = analyze(&source, &key)?;
    let executed = read_ids(coverage)?;
    let policy = if permissive { ElisionPolicy::permissive() } else { ElisionPolicy::default() };
    let base = format!("{}/{}", base.trim_end_matches('/'), key.content_hash);
    let out = elide(&source, &analysis, &executed, &policy, &RuntimeTemplates::default(), &base)?;
    if let Some(dir) = sidecar_dir {
        std::fs::create_dir_all(dir)?;
        for (id, body) in &out.sidecars {
            std::fs::write(dir.join(format!("{id}.js")), body)?;
        }
    }
    eprintln!(
        "elided {}/{} functions, {} of {} bytes",
        out.stats.elided_functions, out.stats.total_functions, out.stats.elided_bytes, out.stats.total_bytes
    );
    print!("{}", out.body);
    Ok(())
}

fn serve(args: ServeArgs) -> Result<(), BoxError> {
    let store = Arc::new(CoverageStore::open(&args.store)?);
    let origin_roots = args.origin_ca.iter().map(std::fs::read_to_string).collect::<Result<Vec<_>, _>>()?;
    let config = ProxyConfig {
        mode: args.mode,
        origin_roots,
        phase: PhasePolicy::new(args.min_beacons, args.freeze),
        party: PartyConfig::new(args.first_party),
        elide_third_party: args.elide_third_party,
        ..ProxyConfig::default()
    };
    let ca = match (&args.ca_cert, &args.ca_key) {
        (Some(c), Some(k)) => Some(Arc::new(CertificateAuthority::load_or_generate(c, k)?)),
        _ => None,
    };
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let proxy = Arc::new(Proxy::open(config, store, &args.cache)?);
        let server = Server::new(proxy, ca)?;
        let listener = tokio::net::TcpListener::bind(args.listen).await?;
        tracing::info!(addr = %listener.local_addr()?, mode = %args.mode, "proxy listening");
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down");
        };
        server.run(listener, shutdown).await?;
        Ok(())
    })
}

fn report(args: ReportArgs) -> ExitCode {
    let run = || -> Result<usize, BoxError> {
        let store = CoverageStore::open(&args.store)?;
        let cache = DiskCache::open(&args.cache)?;
        let options = ReportOptions {
            party: PartyConfig::new(args.first_party.clone()),
            compressed: (!args.no_compressed).then(ElisionPolicy::default),
        };
        let pages = full_report(&store, &cache, &options)?;
        if pages.is_empty() {
            return Err(Box::new(ReportError::EmptyInput(args.store.display().to_string())));
        }
        let cdf = write_reports(&args.out, &pages, &new_id_rate(&store))?;
        eprintln!("wrote {} pages to {} and {}", pages.len(), args.out.display(), cdf.display());
        Ok(pages.len())
    };
    match run() {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            if let Some(ReportError::EmptyInput(what)) = e.downcast_ref::<ReportError>() {
                eprintln!("no resources to report in {what}");
                return ExitCode::from(2);
            }
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
