//! Train/gen entry points: flag surfaces, data loading, cluster setup for
//! both transports, and output writing.

use crate::corpus::{self, CorpusError, LabelVocab};
use crate::gen::{gen_chain_corpus, ChainGenConfig};
use crate::metrics::{write_csv, MetricsRow};
use crate::modelio::{save_model, ModelIoError};
use bqstruct_core::baselines::{
    train_distributed_perceptron, train_simple_average, MixingWeights, PerceptronConfig,
};
use bqstruct_core::comm::inproc::InProcCluster;
use bqstruct_core::comm::tcp::{TcpComm, TcpCoordinator};
use bqstruct_core::comm::{CommError, Communicator};
use bqstruct_core::config::TrainConfig;
use bqstruct_core::driver::{train_observed, DriverError};
use bqstruct_core::model::ModelVector;
use bqstruct_core::tasks::{accuracy, AnyTask, ChainTask, MulticlassTask, TaskInstance};
use clap::{Args, ValueEnum};
use std::path::PathBuf;
use std::thread;
use std::time::{Duration, Instant};

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum TaskKind {
    Multiclass,
    Chain,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Bqo,
    Perceptron,
    Average,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Transport {
    Inproc,
    Tcp,
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub task: TaskKind,
    #[arg(long, value_enum, default_value = "bqo")]
    pub method: Method,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, value_enum, default_value = "inproc")]
    pub transport: Transport,
    /// coordinator address (host:port), tcp only
    #[arg(long)]
    pub coordinator: Option<String>,
    /// this process's rank, tcp only
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    pub c: f64,
    /// surrogate curvature multiplier; defaults to the worker count
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long, default_value_t = 1e-4)]
    pub lambda_scale: f64,
    #[arg(long, default_value_t = 18)]
    pub hash_bits: u32,
    #[arg(long, default_value_t = 10)]
    pub inner_epochs: usize,
    #[arg(long, default_value_t = 100)]
    pub outer_iters: usize,
    #[arg(long, default_value_t = 1)]
    pub inference_interval: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub metrics_out: Option<PathBuf>,
    #[arg(long)]
    pub model_out: Option<PathBuf>,
    /// seconds before a stalled collective aborts the run
    #[arg(long, default_value_t = 120.0)]
    pub cluster_timeout: f64,
    /// perceptron: mixing rounds
    #[arg(long, default_value_t = 10)]
    pub rounds: usize,
    /// perceptron: local passes per round
    #[arg(long, default_value_t = 1)]
    pub epochs_per_round: usize,
    /// perceptron: mix each pass's running average instead of its final weights
    #[arg(long, default_value_t = false)]
    pub averaged: bool,
    /// perceptron: weight the mixing by shard size instead of uniformly
    #[arg(long, default_value_t = false)]
    pub shard_size_mixing: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum GenTask {
    Chain,
}

#[derive(Args, Debug, Clone)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub task: GenTask,
    #[arg(long)]
    pub sequences: usize,
    #[arg(long)]
    pub length: usize,
    #[arg(long)]
    pub labels: u32,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] ModelIoError),
    #[error("cluster: {0}")]
    Cluster(String),
    #[error("{0}")]
    Usage(String),
    #[error("training: {0}")]
    Data(String),
}

impl RunError {
    /// 1 = I/O or data, 2 = bad flags, 3 = cluster fault (0 and the clap
    /// usage exit are produced elsewhere)
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Usage(_) => 2,
            RunError::Cluster(_) => 3,
            _ => 1,
        }
    }
}

impl From<DriverError> for RunError {
    fn from(e: DriverError) -> Self {
        match e {
            DriverError::Config(c) => RunError::Usage(c.to_string()),
            DriverError::Comm(c) => RunError::Cluster(c.to_string()),
            DriverError::Task(t) => RunError::Data(t.to_string()),
        }
    }
}

impl From<CommError> for RunError {
    fn from(e: CommError) -> Self {
        RunError::Cluster(e.to_string())
    }
}

pub fn run_gen(args: &GenArgs) -> Result<(), RunError> {
    let GenTask::Chain = args.task;
    let text = gen_chain_corpus(&ChainGenConfig {
        sequences: args.sequences,
        length: args.length,
        labels: args.labels,
        seed: args.seed,
    });
    std::fs::write(&args.out, text)?;
    log::info!(
        "wrote {} sequences of length {} to {}",
        args.sequences,
        args.length,
        args.out.display()
    );
    Ok(())
}

fn load_task_and_data(
    args: &TrainArgs,
) -> Result<(AnyTask, Vec<String>, Vec<TaskInstance>, Option<Vec<TaskInstance>>), RunError> {
    match args.task {
        TaskKind::Chain => {
            let mut vocab = LabelVocab::new();
            let train = corpus::load_sequence_corpus(&args.train, &mut vocab)?;
            let test = args
                .test
                .as_ref()
                .map(|p| corpus::load_sequence_corpus(p, &mut vocab))
                .transpose()?;
            let labels = vocab.names().to_vec();
            let n = (vocab.len() as u32).max(1);
            Ok((AnyTask::Chain(ChainTask::new(n, args.hash_bits)), labels, train, test))
        }
        TaskKind::Multiclass => {
            let train = corpus::load_multiclass(&args.train)?;
            let test = args.test.as_ref().map(|p| corpus::load_multiclass(p)).transpose()?;
            let classes = corpus::multiclass_count(&train)
                .max(test.as_deref().map(corpus::multiclass_count).unwrap_or(1));
            let labels = (0..classes).map(|c| c.to_string()).collect();
            Ok((
                AnyTask::Multiclass(MulticlassTask::new(classes, args.hash_bits)),
                labels,
                train,
                test,
            ))
        }
    }
}

fn train_config(args: &TrainArgs) -> TrainConfig {
    let mut cfg = TrainConfig::for_workers(args.workers);
    cfg.c = args.c;
    cfg.theta = args.theta.unwrap_or(args.workers.max(1) as f64);
    cfg.lambda_scale = args.lambda_scale;
    cfg.hash_bits = args.hash_bits;
    cfg.inner_epochs = args.inner_epochs;
    cfg.outer_iters = args.outer_iters;
    cfg.inference_interval = args.inference_interval;
    cfg.rng_seed = args.seed;
    cfg
}

/// Runs the selected method on this rank. Metrics rows are produced only on
/// rank 0 (which also owns the test set when one was given).
fn run_method<C>(
    task: &AnyTask,
    shard: &[TaskInstance],
    test: Option<&[TaskInstance]>,
    args: &TrainArgs,
    cfg: &TrainConfig,
    comm: &C,
) -> Result<(ModelVector, Vec<MetricsRow>), RunError>
where
    C: Communicator + ?Sized,
{
    let emit = comm.rank() == 0;
    let mut rows = Vec::new();
    let clock = Instant::now();
    let test_acc = |w: &ModelVector| match test {
        Some(t) => accuracy(task, w, t),
        None => f64::NAN,
    };

    let model = match args.method {
        Method::Bqo => {
            let out = train_observed(task, shard, cfg, comm, |stats, w| {
                if emit {
                    rows.push(MetricsRow {
                        method: "bqo",
                        outer_iter: stats.outer_iter,
                        wall_time_s: clock.elapsed().as_secs_f64(),
                        dual_obj: stats.dual_obj,
                        test_accuracy: test_acc(w),
                        ws_size: stats.ws_size,
                        time_inference_s: stats.time_inference_s,
                        time_learning_s: stats.time_learning_s,
                        time_comm_s: stats.time_comm_s,
                    });
                    log::debug!(
                        "iter {}: dual {:.6} ws {} eta {:.3e}",
                        stats.outer_iter,
                        stats.dual_obj,
                        stats.ws_size,
                        stats.step_size
                    );
                }
            })?;
            out.model
        }
        Method::Perceptron => {
            let pcfg = PerceptronConfig {
                rounds: args.rounds,
                epochs_per_round: args.epochs_per_round,
                averaged: args.averaged,
                mixing: if args.shard_size_mixing {
                    MixingWeights::ShardSize
                } else {
                    MixingWeights::Uniform
                },
                hash_bits: args.hash_bits,
                rng_seed: args.seed,
            };
            train_distributed_perceptron(task, shard, &pcfg, comm, |round, mistakes, w| {
                if emit {
                    rows.push(MetricsRow {
                        method: "perceptron",
                        outer_iter: round,
                        wall_time_s: clock.elapsed().as_secs_f64(),
                        dual_obj: f64::NAN,
                        test_accuracy: test_acc(w),
                        ws_size: 0,
                        time_inference_s: 0.0,
                        time_learning_s: 0.0,
                        time_comm_s: 0.0,
                    });
                    log::debug!("round {round}: {mistakes} mistakes");
                }
            })?
        }
        Method::Average => {
            let w = train_simple_average(task, shard, cfg, comm)?;
            if emit {
                rows.push(MetricsRow {
                    method: "average",
                    outer_iter: 0,
                    wall_time_s: clock.elapsed().as_secs_f64(),
                    dual_obj: f64::NAN,
                    test_accuracy: test_acc(&w),
                    ws_size: 0,
                    time_inference_s: 0.0,
                    time_learning_s: 0.0,
                    time_comm_s: 0.0,
                });
            }
            w
        }
    };
    Ok((model, rows))
}

fn round_robin(data: &[TaskInstance], k: usize) -> Vec<Vec<TaskInstance>> {
    let mut shards = vec![Vec::new(); k];
    for (i, inst) in data.iter().enumerate() {
        shards[i % k].push(inst.clone());
    }
    shards
}

pub fn run_train(args: &TrainArgs) -> Result<(), RunError> {
    let cfg = train_config(args);
    cfg.validate().map_err(|e| RunError::Usage(e.to_string()))?;
    if args.transport == Transport::Tcp {
        if args.coordinator.is_none() {
            return Err(RunError::Usage("--coordinator is required with --transport tcp".into()));
        }
        match args.rank {
            None => return Err(RunError::Usage("--rank is required with --transport tcp".into())),
            Some(r) if r >= args.workers => {
                return Err(RunError::Usage(format!(
                    "--rank {r} out of range for {} workers",
                    args.workers
                )))
            }
            Some(_) => {}
        }
    }

    let (task, labels, train_data, test_data) = load_task_and_data(args)?;
    log::info!(
        "loaded {} training instances{}",
        train_data.len(),
        test_data
            .as_ref()
            .map(|t| format!(", {} test instances", t.len()))
            .unwrap_or_default()
    );
    let timeout = Duration::from_secs_f64(args.cluster_timeout.max(0.001));

    let (model, rows) = match args.transport {
        Transport::Inproc => {
            let k = args.workers;
            let shards = round_robin(&train_data, k);
            let comms = InProcCluster::handles_with_timeout(k, timeout);
            let mut results: Vec<Option<Result<_, RunError>>> = thread::scope(|s| {
                let handles: Vec<_> = comms
                    .iter()
                    .zip(&shards)
                    .enumerate()
                    .map(|(r, (comm, shard))| {
                        let test = if r == 0 { test_data.as_deref() } else { None };
                        let (task, cfg) = (&task, &cfg);
                        s.spawn(move || run_method(task, shard, test, args, cfg, comm))
                    })
                    .collect();
                handles.into_iter().map(|h| Some(h.join().unwrap())).collect()
            });
            // rank 0 carries the metrics; report its error first
            results[0].take().unwrap()?
        }
        Transport::Tcp => {
            let rank = args.rank.unwrap();
            let addr = args.coordinator.as_deref().unwrap();
            let comm = if rank == 0 {
                TcpCoordinator::bind(addr, args.workers, timeout)?.accept()?
            } else {
                TcpComm::connect(addr, rank, args.workers, timeout)?
            };
            let shard: Vec<TaskInstance> = train_data
                .iter()
                .enumerate()
                .filter(|(i, _)| i % args.workers == rank)
                .map(|(_, inst)| inst.clone())
                .collect();
            let test = if rank == 0 { test_data.as_deref() } else { None };
            run_method(&task, &shard, test, args, &cfg, &comm)?
        }
    };

    let is_writer = args.transport == Transport::Inproc || args.rank == Some(0);
    if is_writer {
        if let Some(path) = &args.metrics_out {
            write_csv(path, &rows)?;
        }
        if let Some(path) = &args.model_out {
            save_model(path, &model, &labels)?;
        }
        if let Some(last) = rows.last() {
            log::info!(
                "done: {} iterations, test accuracy {}",
                rows.len(),
                last.test_accuracy
            );
        }
    }
    Ok(())
}
