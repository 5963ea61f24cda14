use std::fmt::Write as _;
use std::fs;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Child, Command};
use std::time::Duration;

use fedtopic::corpus::BowCorpus;
use fedtopic::fedcore::{
    run_centralized, train_local, ClientConfig, ClientState, LocalConfig, ServerConfig, ServerState, TrainConfig,
};
use fedtopic::model::{save_checkpoint, ModelConfig};
use fedtopic::transport::{self, BIND_ENV, SERVER_ENV};

use crate::config::{is_synth_key, Config};
use crate::data::{run_index, sources, Source};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Role {
    Server,
    Client,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scenario {
    Noncollab,
    Centralized,
    Federated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Transport {
    Inproc,
    Tcp,
}

pub struct TrainArgs<'a> {
    pub config_path: &'a Path,
    pub overrides: &'a [String],
    pub role: Option<Role>,
    pub client_id: Option<u32>,
    pub bind: Option<String>,
    pub server: Option<String>,
}

struct Job<'a> {
    cfg: &'a Config,
    source: Source,
    out: PathBuf,
    model: ModelConfig,
    train: TrainConfig,
    local: LocalConfig,
    min_count: usize,
}

fn scenarios(cfg: &Config) -> Result<Vec<Scenario>> {
    let names = cfg.get_list("train.scenarios")?.unwrap_or_else(|| vec!["federated".into()]);
    names
        .iter()
        .map(|n| match n.as_str() {
            "noncollab" => Ok(Scenario::Noncollab),
            "centralized" => Ok(Scenario::Centralized),
            "federated" => Ok(Scenario::Federated),
            other => Err(CliError::Config(format!("unknown scenario {other:?}"))),
        })
        .collect()
}

fn transport_of(cfg: &Config) -> Result<Transport> {
    match cfg.get_str("train.transport")?.unwrap_or("inproc") {
        "inproc" => Ok(Transport::Inproc),
        "tcp" => Ok(Transport::Tcp),
        other => Err(CliError::Config(format!("unknown transport {other:?}"))),
    }
}

pub fn train(args: &TrainArgs<'_>) -> Result<()> {
    let mut cfg = Config::load(args.config_path)?;
    cfg.apply_overrides(args.overrides)?;
    let mut points = cfg.expand();
    for (_, point) in &mut points {
        let data_name = cfg.point_name(point, is_synth_key);
        if let (false, Some(root)) = (data_name.is_empty(), point.get_path("data.dataset")?) {
            point.set("data.dataset", &root.join(&data_name).to_string_lossy())?;
        }
    }
    let mut jobs = Vec::new();
    for (name, point) in &points {
        let scen = scenarios(point)?;
        transport_of(point)?;
        let root = point
            .get_path("output.dir")?
            .ok_or_else(|| CliError::Config("output.dir is required".into()))?;
        let root = if name.is_empty() { root } else { root.join(name) };
        for (rel, source) in sources(point)? {
            let run = run_index(&rel) as u64;
            let mut model = point.model()?;
            model.seed = model.seed.wrapping_add(run);
            let mut train = point.train()?;
            train.seed = train.seed.wrapping_add(run);
            let mut local = point.local()?;
            local.seed = train.seed;
            jobs.push((
                scen.clone(),
                Job {
                    cfg: point,
                    source,
                    out: root.join(rel),
                    model,
                    train,
                    local,
                    min_count: point.get_or("data.min_count", 1)?,
                },
            ));
        }
    }
    if args.role.is_some() && jobs.len() != 1 {
        return Err(CliError::Config(format!(
            "a server or client role needs exactly one dataset, the config yields {}",
            jobs.len()
        )));
    }
    for (scen, job) in &jobs {
        match args.role {
            Some(Role::Client) => return run_client(job, args),
            Some(Role::Server) => return run_server_role(job, args),
            None => {}
        }
        let corpora = job.source.load(job.min_count)?;
        fs::create_dir_all(&job.out)?;
        for s in scen {
            match s {
                Scenario::Noncollab => noncollab(job, &corpora)?,
                Scenario::Centralized => centralized(job, &corpora)?,
                Scenario::Federated => federated(job, &corpora, args)?,
            }
        }
    }
    Ok(())
}

fn write_log(path: &Path, header: &str, rows: &str) -> Result<()> {
    fs::write(path, format!("{header}\n{rows}"))?;
    Ok(())
}

fn noncollab(job: &Job<'_>, corpora: &[BowCorpus]) -> Result<()> {
    for (l, corpus) in corpora.iter().enumerate() {
        let mut local = job.local.clone();
        local.seed = local.seed.wrapping_add(l as u64);
        let run = train_local(corpus, &job.model, &local)?;
        save_checkpoint(job.out.join(format!("node{l}.ckpt")), &run.config, &run.weights, &run.vocab)?;
        let mut rows = String::new();
        for (e, t) in run.train_losses.iter().enumerate() {
            let v = run.valid_losses.get(e).map(|v| v.to_string()).unwrap_or_default();
            writeln!(rows, "{},{t},{v}", e + 1).unwrap();
        }
        write_log(&job.out.join(format!("node{l}.log.csv")), "epoch,train_loss,valid_loss", &rows)?;
        log::info!("node {l}: {} epochs, best {}", run.epochs, run.best_epoch);
    }
    Ok(())
}

fn centralized(job: &Job<'_>, corpora: &[BowCorpus]) -> Result<()> {
    let run = run_centralized(corpora, &job.model, &job.train)?;
    save_checkpoint(job.out.join("centralized.ckpt"), &run.config, &run.weights, &run.vocab)?;
    let mut rows = String::new();
    for (e, (loss, change)) in run.losses.iter().zip(&run.history).enumerate() {
        writeln!(rows, "{},{loss},{change}", e + 1).unwrap();
    }
    write_log(&job.out.join("centralized.log.csv"), "round,loss,relative_change", &rows)?;
    log::info!("centralized: {} rounds", run.rounds);
    Ok(())
}

fn server_state(job: &Job<'_>, clients: usize) -> Result<ServerState> {
    Ok(ServerState::new(ServerConfig {
        clients: clients as u32,
        model: job.model.clone(),
        learning_rate: job.train.learning_rate,
        stop: job.train.stop,
    })?)
}

fn client_state(job: &Job<'_>, id: u32, corpus: BowCorpus) -> Result<ClientState> {
    Ok(ClientState::new(
        ClientConfig {
            client_id: id,
            batch_size: job.train.batch_size,
            seed: job.train.seed,
        },
        corpus,
    )?)
}

fn save_federated(job: &Job<'_>, server: &ServerState, losses: Option<Vec<f64>>) -> Result<()> {
    let weights = server.weights().ok_or_else(|| CliError::Other("the server holds no weights".into()))?;
    let (config, vocab) = (server.model_config().expect("model"), server.vocab().expect("vocab"));
    save_checkpoint(job.out.join("federated.ckpt"), config, weights, vocab)?;
    let mut rows = String::new();
    for (e, change) in server.history().iter().enumerate() {
        let loss = losses.as_ref().map(|l| l[e].to_string()).unwrap_or_default();
        writeln!(rows, "{},{loss},{change}", e + 1).unwrap();
    }
    write_log(&job.out.join("federated.log.csv"), "round,loss,relative_change", &rows)?;
    log::info!("federated: {} rounds", server.round());
    Ok(())
}

fn federated(job: &Job<'_>, corpora: &[BowCorpus], args: &TrainArgs<'_>) -> Result<()> {
    let server = server_state(job, corpora.len())?;
    match transport_of(job.cfg)? {
        Transport::Inproc => {
            let clients = corpora
                .iter()
                .enumerate()
                .map(|(l, c)| client_state(job, l as u32, c.clone()))
                .collect::<Result<Vec<_>>>()?;
            let fed = transport::run_threaded(server, clients)?;
            let rounds = fed.server.round() as usize;
            let losses = (0..rounds)
                .map(|e| fed.clients.iter().map(|c| c.losses()[e]).sum::<f64>() / fed.clients.len() as f64)
                .collect();
            save_federated(job, &fed.server, Some(losses))
        }
        Transport::Tcp => {
            let listener = bind(job, args, "127.0.0.1:0")?;
            let addr = listener.local_addr()?;
            let children = spawn_clients(job, args, corpora.len(), &addr.to_string())?;
            let result = transport::serve(listener, server);
            let statuses = wait_all(children);
            let server = result?;
            statuses?;
            save_federated(job, &server, None)
        }
    }
}

fn bind(job: &Job<'_>, args: &TrainArgs<'_>, fallback: &str) -> Result<TcpListener> {
    let addr = match &args.bind {
        Some(a) => a.clone(),
        None => job.cfg.get_str("train.bind")?.unwrap_or(fallback).to_string(),
    };
    TcpListener::bind(&addr).map_err(|e| CliError::Transport(format!("cannot bind {addr}: {e}")))
}

fn spawn_clients(job: &Job<'_>, args: &TrainArgs<'_>, n: usize, addr: &str) -> Result<Vec<Child>> {
    let exe = std::env::current_exe()?;
    let mut children = Vec::new();
    for l in 0..n {
        let mut cmd = Command::new(&exe);
        cmd.arg("train").arg(args.config_path);
        for (k, v) in job.cfg.entries() {
            if !k.starts_with("data.") && k != "output.dir" {
                cmd.arg("--set").arg(format!("{k}={v}"));
            }
        }
        cmd.arg("--set").arg(job.source.as_override());
        cmd.arg("--set").arg(format!("model.seed={}", job.model.seed));
        cmd.arg("--set").arg(format!("train.seed={}", job.train.seed));
        cmd.args(["--role", "client", "--client-id", &l.to_string()]);
        cmd.env(SERVER_ENV, addr);
        children.push(cmd.spawn()?);
    }
    Ok(children)
}

fn wait_all(children: Vec<Child>) -> Result<()> {
    let mut failed = None;
    for (l, mut c) in children.into_iter().enumerate() {
        let status = c.wait()?;
        if !status.success() && failed.is_none() {
            failed = Some(CliError::Transport(format!("client process {l} exited with {status}")));
        }
    }
    failed.map_or(Ok(()), Err)
}

fn run_client(job: &Job<'_>, args: &TrainArgs<'_>) -> Result<()> {
    let id = args
        .client_id
        .ok_or_else(|| CliError::Config("--role client needs --client-id".into()))?;
    let mut corpora = job.source.load(job.min_count)?;
    if id as usize >= corpora.len() {
        return Err(CliError::Config(format!("client id {id} but only {} corpora", corpora.len())));
    }
    let corpus = corpora.swap_remove(id as usize);
    let addr = match &args.server {
        Some(a) => a.clone(),
        None => job
            .cfg
            .get_str("train.server")?
            .map(str::to_string)
            .or_else(|| std::env::var(SERVER_ENV).ok())
            .ok_or_else(|| CliError::Config(format!("no server address: pass --server or set {SERVER_ENV}")))?,
    };
    let client = client_state(job, id, corpus)?;
    let done = transport::connect(addr.as_str(), client, Duration::from_secs(30))?;
    log::info!("client {id} finished after {} rounds", done.round());
    Ok(())
}

fn run_server_role(job: &Job<'_>, args: &TrainArgs<'_>) -> Result<()> {
    let clients = match &job.source {
        Source::Synthetic(_) => job.source.load(job.min_count)?.len(),
        Source::Corpora(p) => p.len(),
    };
    let fallback = std::env::var(BIND_ENV).unwrap_or_else(|_| "127.0.0.1:7878".into());
    let listener = bind(job, args, &fallback)?;
    log::info!("listening on {}", listener.local_addr()?);
    let server = transport::serve(listener, server_state(job, clients)?)?;
    fs::create_dir_all(&job.out)?;
    save_federated(job, &server, None)
}
