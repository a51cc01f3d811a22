//! Stage driver. Each stage writes one directory `{stage}-{key}` under the
//! output root, where the key hashes the upstream keys and the configuration
//! the stage reads. `stage.json` is written last and marks the directory
//! complete; a complete directory is reused, never rewritten.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use ndarray::{concatenate, s, Axis};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::config::{hash_json, PipelineConfig};
use crate::dataset::{read_corpus, split_corpus, Blob, SplitSpec};
use crate::env::{ActionLimits, EnvConfig, EnvMode, ObsNormalizer, TaskEnv, TestDynamics};
use crate::error::{Error, Result};
use crate::eval::{by_session, emit_report, evaluate_policy, simulated_experiment, AlgorithmRow, EvalReport, Pattern, SimExperimentResult};
use crate::export::{emit_c_source, flatten_policy, parity_cases, parity_check, write_cases, ExportBundle, ParityReport};
use crate::pca::{explained_variance, StateCodec};
use crate::rl::{build_offline, gcil_train, ppo_train, td3bc_train, Controller, Deterministic, Policy, RandomController};
use crate::rpnn::{epistemic_probe, one_step_report, train_ensemble, DynamicsEnsemble};
use crate::schema::{Profile, OBS_DIM};
use crate::seeding::derive;
use crate::synth::{generate_corpus, Shot};

pub const STAGE_FILE: &str = "stage.json";

/// Completion record of one stage directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub key: String,
    pub config_hash: String,
    pub seed: u64,
    /// Upstream stage name to directory name.
    pub inputs: BTreeMap<String, String>,
    pub files: Vec<String>,
    pub summary: serde_json::Value,
}

pub struct Corpus {
    pub shots: Vec<Shot>,
    pub split: SplitSpec,
}

impl Corpus {
    pub fn train(&self) -> Vec<&Shot> {
        SplitSpec::select(&self.split.train, &self.shots)
    }

    pub fn val(&self) -> Vec<&Shot> {
        SplitSpec::select(&self.split.val, &self.shots)
    }

    pub fn test(&self) -> Vec<&Shot> {
        SplitSpec::select(&self.split.test, &self.shots)
    }
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<D: DeserializeOwned>(path: &Path) -> Result<D> {
    if !path.exists() {
        return Err(Error::Missing(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

fn key_of<S: Serialize>(parts: &S) -> String {
    hash_json(parts)[..16].to_string()
}

pub struct Pipeline {
    pub cfg: PipelineConfig,
    pub root: PathBuf,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, root: impl Into<PathBuf>) -> Self {
        Pipeline { cfg, root: root.into() }
    }

    fn seed(&self, tag: &str) -> u64 {
        derive(self.cfg.seed, tag, 0)
    }

    pub fn corpus_key(&self) -> String {
        key_of(&("corpus", self.cfg.seed, &self.cfg.corpus))
    }

    pub fn pca_key(&self) -> String {
        key_of(&("pca", self.corpus_key(), &self.cfg.pca))
    }

    pub fn dynamics_key(&self) -> String {
        key_of(&("dynamics", self.pca_key(), self.cfg.seed, &self.cfg.dynamics))
    }

    pub fn policy_key(&self, algo: &str) -> String {
        let p = &self.cfg.policy;
        let section = match algo {
            "ppo" => serde_json::to_value(&p.ppo),
            "gcil" => serde_json::to_value(&p.gcil),
            "td3bc" => serde_json::to_value(&p.td3bc),
            _ => serde_json::to_value(()),
        }
        .expect("config serializes");
        key_of(&(
            "policy",
            algo,
            self.dynamics_key(),
            self.cfg.seed,
            &self.cfg.env,
            &p.actor,
            section,
            self.cfg.eval.val_seeds,
        ))
    }

    /// Key of whatever a controller name refers to.
    fn controller_key(&self, name: &str) -> String {
        match name {
            "random" | "untrained" => key_of(&(name, self.dynamics_key(), &self.cfg.policy.actor)),
            algo => self.policy_key(algo),
        }
    }

    pub fn benchmark_key(&self) -> String {
        let ctl: Vec<String> = self.cfg.eval.algorithms.iter().map(|a| self.controller_key(a)).collect();
        key_of(&(
            "benchmark",
            ctl,
            &self.cfg.eval.algorithms,
            &self.cfg.env,
            self.cfg.eval.n_seeds,
            self.cfg.seed,
        ))
    }

    pub fn experiment_key(&self) -> String {
        let ctl: Vec<String> = self
            .cfg
            .eval
            .experiment_controllers
            .iter()
            .map(|a| self.controller_key(a))
            .collect();
        key_of(&(
            "experiment",
            ctl,
            &self.cfg.eval.experiment_controllers,
            &self.cfg.env,
            &self.cfg.eval.experiment,
            self.cfg.seed,
        ))
    }

    pub fn export_key(&self) -> String {
        key_of(&("export", self.policy_key(&self.cfg.export.algorithm), &self.cfg.export))
    }

    /// `YYYYMMDD` from the config, or today's local date.
    pub fn report_date(&self) -> String {
        if self.cfg.eval.date.is_empty() {
            chrono::Local::now().format("%Y%m%d").to_string()
        } else {
            self.cfg.eval.date.clone()
        }
    }

    pub fn report_key(&self) -> String {
        key_of(&(
            "report",
            self.benchmark_key(),
            self.experiment_key(),
            &self.cfg.eval.shotset,
            self.report_date(),
        ))
    }

    pub fn dir(&self, stage: &str, key: &str) -> PathBuf {
        self.root.join(format!("{stage}-{key}"))
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.dir("corpus", &self.corpus_key())
    }

    pub fn pca_dir(&self) -> PathBuf {
        self.dir("pca", &self.pca_key())
    }

    pub fn dynamics_dir(&self) -> PathBuf {
        self.dir("dynamics", &self.dynamics_key())
    }

    pub fn policy_dir(&self, algo: &str) -> PathBuf {
        self.dir(&format!("policy-{algo}"), &self.policy_key(algo))
    }

    pub fn benchmark_dir(&self) -> PathBuf {
        self.dir("benchmark", &self.benchmark_key())
    }

    pub fn experiment_dir(&self) -> PathBuf {
        self.dir("experiment", &self.experiment_key())
    }

    pub fn export_dir(&self) -> PathBuf {
        self.dir("export", &self.export_key())
    }

    pub fn report_dir(&self) -> PathBuf {
        self.dir("report", &self.report_key())
    }

    /// Stage manifest of a complete directory, or `Missing`.
    pub fn require(dir: &Path) -> Result<StageManifest> {
        read_json(&dir.join(STAGE_FILE))
    }

    /// `Some(manifest)` when the stage already ran; otherwise prepares an empty directory.
    fn begin(&self, dir: &Path) -> Result<Option<StageManifest>> {
        if dir.join(STAGE_FILE).exists() {
            info!("reusing {}", dir.display());
            return Self::require(dir).map(Some);
        }
        if dir.exists() {
            warn!("removing incomplete stage directory {}", dir.display());
            std::fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(None)
    }

    fn finish(
        &self,
        dir: &Path,
        stage: &str,
        inputs: &[&Path],
        files: Vec<String>,
        summary: serde_json::Value,
    ) -> Result<StageManifest> {
        let name = |p: &Path| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let m = StageManifest {
            stage: stage.into(),
            key: name(dir).rsplit('-').next().unwrap_or_default().to_string(),
            config_hash: self.cfg.hash(),
            seed: self.cfg.seed,
            inputs: inputs
                .iter()
                .map(|p| {
                    let n = name(p);
                    (n.rsplit_once('-').map(|(a, _)| a.to_string()).unwrap_or_default(), n)
                })
                .collect(),
            files,
            summary,
        };
        write_json(&dir.join(STAGE_FILE), &m)?;
        Ok(m)
    }

    pub fn gen_data(&self) -> Result<StageManifest> {
        let dir = self.corpus_dir();
        if let Some(m) = self.begin(&dir)? {
            return Ok(m);
        }
        let c = &self.cfg.corpus;
        let manifest = generate_corpus(&dir, c.n_sessions, c.shots_per_session, self.cfg.seed)?;
        let (_, shots) = read_corpus(&dir)?;
        let split = split_corpus(&shots, c.val_fraction, c.test_fraction, self.seed("split"))?;
        write_json(&dir.join("split.json"), &split)?;
        let mut files: Vec<String> = manifest.files.iter().map(|f| f.file.clone()).collect();
        files.extend(["manifest.json".into(), "split.json".into()]);
        let summary = serde_json::json!({
            "n_shots": manifest.n_shots,
            "train": split.train.len(),
            "val": split.val.len(),
            "test": split.test.len(),
        });
        self.finish(&dir, "corpus", &[], files, summary)
    }

    pub fn load_corpus(&self) -> Result<Corpus> {
        let dir = self.corpus_dir();
        Self::require(&dir)?;
        let (_, shots) = read_corpus(&dir)?;
        let split = read_json(&dir.join("split.json"))?;
        Ok(Corpus { shots, split })
    }

    pub fn fit_pca(&self) -> Result<StageManifest> {
        let dir = self.pca_dir();
        if let Some(m) = self.begin(&dir)? {
            return Ok(m);
        }
        let corpus = self.load_corpus()?;
        let rows: Vec<_> = corpus
            .train()
            .iter()
            .map(|s| {
                let (a, b) = if self.cfg.pca.flat_top_only { s.flat_top } else { (0, s.len()) };
                s.states.slice(s![a..b, ..])
            })
            .collect();
        let data = concatenate(Axis(0), &rows).map_err(|e| Error::Data(e.to_string()))?;
        let codec = StateCodec::fit(data.view())?;
        codec.to_blob().write(&dir.join("pca.blob"))?;
        let ev = explained_variance(codec.rotation(), data.slice(s![.., Profile::Rotation.raw_range()]))?;
        let summary = serde_json::json!({ "rows": data.nrows(), "rotation_explained_variance": ev });
        self.finish(&dir, "pca", &[&self.corpus_dir()], vec!["pca.blob".into()], summary)
    }

    pub fn load_codec(&self) -> Result<StateCodec> {
        let dir = self.pca_dir();
        Self::require(&dir)?;
        let path = dir.join("pca.blob");
        StateCodec::from_blob(&Blob::read_kind(&path, "pca")?, &path)
    }

    pub fn train_dynamics(&self) -> Result<StageManifest> {
        let dir = self.dynamics_dir();
        if let Some(m) = self.begin(&dir)? {
            return Ok(m);
        }
        let corpus = self.load_corpus()?;
        let codec = self.load_codec()?;
        let d = &self.cfg.dynamics;
        let ens = train_ensemble::<f32>(
            &corpus.shots,
            &corpus.split,
            codec,
            &d.model()?,
            &d.train,
            d.members,
            self.seed("dynamics"),
        )?;
        ens.save(&dir)?;
        let test = corpus.test();
        let one_step = one_step_report(&ens, &test)?;
        let probe = if ens.len() >= 2 {
            Some(epistemic_probe(&ens, &test, &corpus.train(), 3.0)?)
        } else {
            None
        };
        let summary = serde_json::json!({
            "one_step": one_step,
            "epistemic_probe": probe,
            "ood_ratio": probe.as_ref().map(|p| p.ratio()),
        });
        let mut files = vec![crate::rpnn::DYNAMICS_MANIFEST.to_string(), "pca.blob".into()];
        files.extend((0..ens.len()).map(|i| format!("member_{i:02}.blob")));
        self.finish(&dir, "dynamics", &[&self.corpus_dir(), &self.pca_dir()], files, summary)
    }

    pub fn load_dynamics(&self) -> Result<DynamicsEnsemble<f32>> {
        let dir = self.dynamics_dir();
        Self::require(&dir)?;
        DynamicsEnsemble::load(&dir)
    }

    pub fn limits(&self, corpus: &Corpus) -> Result<ActionLimits> {
        ActionLimits::from_shots(&corpus.train())
    }

    pub fn env_config(&self, mode: EnvMode, dynamics: TestDynamics, limits: &ActionLimits) -> EnvConfig {
        let e = &self.cfg.env;
        EnvConfig {
            mode,
            test_dynamics: dynamics,
            horizon: (e.horizon > 0).then_some(e.horizon),
            obs_noise: e.obs_noise,
            lookahead: e.lookahead,
            warmup: e.warmup,
            limits: limits.clone(),
        }
    }

    /// Freshly initialized actor; every algorithm starts from it.
    pub fn initial_policy(&self, ens: &DynamicsEnsemble<f32>, limits: &ActionLimits) -> Result<Policy> {
        let norm = ObsNormalizer::from_scaling(&ens.scaling);
        Policy::new(&self.cfg.policy.actor, OBS_DIM, &limits.low, &limits.high, self.seed("policy-init"))?
            .with_obs_normalizer(&norm.mean, &norm.std)
    }

    pub fn train_policy(&self, algo: &str) -> Result<StageManifest> {
        if !crate::config::ALGORITHMS[..3].contains(&algo) {
            return Err(Error::Config(format!("`{algo}` is not a trainable algorithm")));
        }
        let dir = self.policy_dir(algo);
        if let Some(m) = self.begin(&dir)? {
            return Ok(m);
        }
        let ens = self.load_dynamics()?;
        let corpus = self.load_corpus()?;
        let limits = self.limits(&corpus)?;
        let train = corpus.train();
        let p0 = self.initial_policy(&ens, &limits)?;
        let norm = ObsNormalizer::from_scaling(&ens.scaling);
        let seed = self.seed(&format!("policy-{algo}"));
        let pc = &self.cfg.policy;
        let (policy, log_file, summary) = match algo {
            "ppo" => {
                let train_cfg = self.env_config(EnvMode::Train, TestDynamics::Mean, &limits);
                let val_cfg = self.env_config(EnvMode::Test, self.cfg.env.benchmark_dynamics, &limits);
                let val = corpus.val();
                let val_seed = self.seed("ppo-val");
                let n_val = self.cfg.eval.val_seeds;
                let mut evaluate = |p: &Policy| -> Result<f64> {
                    let ctl = Deterministic { name: "ppo".into(), policy: p };
                    Ok(-evaluate_policy(&ctl, &ens, &val, &val_cfg, n_val, val_seed)?.rmse)
                };
                let (best, log) = ppo_train(|_| TaskEnv::new(&ens, train_cfg.clone(), &train), p0, &pc.ppo, seed, &mut evaluate)?;
                std::fs::write(dir.join("train_log.csv"), log.to_csv()).map_err(|e| Error::io(&dir, e))?;
                let summary = serde_json::json!({
                    "iterations": log.iterations.len(),
                    "best_iteration": log.best_iteration,
                    "best_val_rmse": log.best_eval.map(|v| -v),
                });
                (best, "train_log.csv", summary)
            }
            "gcil" => {
                let batch = build_offline(&train, &ens.codec, &norm, &limits, &pc.gcil.relabel, seed)?;
                let mut p = p0;
                let curve = gcil_train(&mut p, &batch, &pc.gcil, seed)?;
                write_json(&dir.join("train_log.json"), &curve)?;
                let summary = serde_json::json!({ "transitions": batch.len(), "final_loss": curve.last() });
                (p, "train_log.json", summary)
            }
            _ => {
                let batch = build_offline(&train, &ens.codec, &norm, &limits, &pc.td3bc.relabel, seed)?;
                let mut p = p0;
                let (_, log) = td3bc_train(&mut p, &batch, &pc.td3bc, seed)?;
                write_json(&dir.join("train_log.json"), &log)?;
                let summary = serde_json::json!({
                    "transitions": batch.len(),
                    "final_critic_loss": log.critic_loss.last(),
                });
                (p, "train_log.json", summary)
            }
        };
        write_json(&dir.join("policy.json"), &policy)?;
        self.finish(
            &dir,
            &format!("policy-{algo}"),
            &[&self.dynamics_dir()],
            vec!["policy.json".into(), log_file.into()],
            summary,
        )
    }

    pub fn load_policy(&self, algo: &str) -> Result<Policy> {
        let dir = self.policy_dir(algo);
        Self::require(&dir)?;
        read_json(&dir.join("policy.json"))
    }

    /// Input directories a controller name depends on.
    fn controller_dirs(&self, names: &[String]) -> Vec<PathBuf> {
        let mut dirs = vec![self.dynamics_dir()];
        for n in names {
            if n != "random" && n != "untrained" {
                dirs.push(self.policy_dir(n));
            }
        }
        dirs
    }

    fn with_controllers<R>(
        &self,
        names: &[String],
        ens: &DynamicsEnsemble<f32>,
        limits: &ActionLimits,
        f: impl FnOnce(Vec<&dyn Controller>) -> Result<R>,
    ) -> Result<R> {
        let mut policies = Vec::new();
        for n in names {
            match n.as_str() {
                "random" => {}
                "untrained" => policies.push((n.clone(), self.initial_policy(ens, limits)?)),
                algo => policies.push((n.clone(), self.load_policy(algo)?)),
            }
        }
        let random = RandomController {
            low: limits.low.to_vec(),
            high: limits.high.to_vec(),
        };
        let det: Vec<Deterministic> = policies
            .iter()
            .map(|(n, p)| Deterministic { name: n.clone(), policy: p })
            .collect();
        let mut out: Vec<&dyn Controller> = Vec::new();
        let mut it = det.iter();
        for n in names {
            if n == "random" {
                out.push(&random);
            } else {
                out.push(it.next().expect("one policy per non-random name"));
            }
        }
        f(out)
    }

    pub fn benchmark(&self) -> Result<StageManifest> {
        let dir = self.benchmark_dir();
        if let Some(m) = self.begin(&dir)? {
            return Ok(m);
        }
        let ens = self.load_dynamics()?;
        let corpus = self.load_corpus()?;
        let limits = self.limits(&corpus)?;
        let test = corpus.test();
        let env_cfg = self.env_config(EnvMode::Test, self.cfg.env.benchmark_dynamics, &limits);
        let names = &self.cfg.eval.algorithms;
        let rows = self.with_controllers(names, &ens, &limits, |ctls| {
            ctls.iter()
                .map(|c| {
                    info!("benchmarking {}", c.name());
                    evaluate_policy(*c, &ens, &test, &env_cfg, self.cfg.eval.n_seeds, self.seed("benchmark"))
                })
                .collect::<Result<Vec<_>>>()
        })?;
        write_json(&dir.join("rows.json"), &rows)?;
        let summary: serde_json::Map<String, serde_json::Value> = rows
            .iter()
            .map(|r| (r.algorithm.clone(), serde_json::json!({ "rmse": r.rmse, "se": r.se })))
            .collect();
        let mut inputs = vec![self.corpus_dir()];
        inputs.extend(self.controller_dirs(names));
        let refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
        self.finish(&dir, "benchmark", &refs, vec!["rows.json".into()], summary.into())
    }

    pub fn load_benchmark(&self) -> Result<Vec<AlgorithmRow>> {
        let dir = self.benchmark_dir();
        Self::require(&dir)?;
        read_json(&dir.join("rows.json"))
    }

    /// Two-switch experiments on the first shot of every held-out session.
    pub fn sim_experiment(&self) -> Result<StageManifest> {
        let dir = self.experiment_dir();
        if let Some(m) = self.begin(&dir)? {
            return Ok(m);
        }
        let ens = self.load_dynamics()?;
        let corpus = self.load_corpus()?;
        let limits = self.limits(&corpus)?;
        let test = corpus.test();
        let sessions = by_session(&test);
        let env_cfg = self.env_config(EnvMode::Test, self.cfg.env.experiment_dynamics, &limits);
        let names = &self.cfg.eval.experiment_controllers;
        let ecfg = &self.cfg.eval.experiment;
        let results = self.with_controllers(names, &ens, &limits, |ctls| {
            let mut out = Vec::new();
            for c in &ctls {
                for session in &sessions {
                    for pattern in [Pattern::HighLowHigh, Pattern::LowHighLow] {
                        let seed = derive(self.seed("experiment"), pattern.label(), session[0].shot_id as u64);
                        out.push(simulated_experiment(*c, &ens, session[0], session, pattern, ecfg, &env_cfg, seed)?);
                    }
                }
            }
            Ok(out)
        })?;
        write_json(&dir.join("experiments.json"), &results)?;
        let mut summary = serde_json::Map::new();
        for n in names {
            let v: Vec<f64> = results
                .iter()
                .filter(|r| &r.controller == n)
                .flat_map(|r| r.post_switch_rmse.iter().copied())
                .collect();
            let mean = v.iter().sum::<f64>() / v.len().max(1) as f64;
            summary.insert(n.clone(), serde_json::json!({ "post_switch_rmse": mean }));
        }
        let mut inputs = vec![self.corpus_dir()];
        inputs.extend(self.controller_dirs(names));
        let refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
        self.finish(&dir, "experiment", &refs, vec!["experiments.json".into()], summary.into())
    }

    pub fn load_experiments(&self) -> Result<Vec<SimExperimentResult>> {
        let dir = self.experiment_dir();
        Self::require(&dir)?;
        read_json(&dir.join("experiments.json"))
    }

    pub fn export(&self) -> Result<StageManifest> {
        let dir = self.export_dir();
        if let Some(m) = self.begin(&dir)? {
            return Ok(m);
        }
        let x = &self.cfg.export;
        let policy = self.load_policy(&x.algorithm)?;
        let bundle = flatten_policy(&policy)?;
        bundle.write(&dir.join("policy.bundle"))?;
        let source = emit_c_source(&bundle)?;
        let c_path = dir.join("policy.c");
        std::fs::write(&c_path, source).map_err(|e| Error::io(&c_path, e))?;
        let cases = parity_cases(&bundle, x.cases, derive(x.parity_seed, "cases", 0))?;
        write_cases(&dir.join("cases.csv"), &cases)?;
        let parity = parity_check(&policy, &bundle, x.parity_observations, x.parity_seed)?;
        write_json(&dir.join("parity.json"), &parity)?;
        let summary = serde_json::to_value(&parity).expect("report serializes");
        self.finish(
            &dir,
            "export",
            &[&self.policy_dir(&x.algorithm)],
            vec!["policy.bundle".into(), "policy.c".into(), "cases.csv".into(), "parity.json".into()],
            summary,
        )
    }

    pub fn load_bundle(&self) -> Result<(ExportBundle, ParityReport)> {
        let dir = self.export_dir();
        Self::require(&dir)?;
        Ok((ExportBundle::read(&dir.join("policy.bundle"))?, read_json(&dir.join("parity.json"))?))
    }

    pub fn report(&self) -> Result<StageManifest> {
        let dir = self.report_dir();
        if let Some(m) = self.begin(&dir)? {
            return Ok(m);
        }
        let report = EvalReport {
            shotset: self.cfg.eval.shotset.clone(),
            date: self.report_date(),
            config_hash: self.cfg.hash(),
            rows: self.load_benchmark()?,
            experiments: self.load_experiments()?,
        };
        let written = emit_report(&report, &dir)?;
        let files = written
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect();
        self.finish(
            &dir,
            "report",
            &[&self.benchmark_dir(), &self.experiment_dir()],
            files,
            serde_json::Value::Null,
        )
    }

    /// Every stage in order; returns the report manifest.
    pub fn run_all(&self) -> Result<StageManifest> {
        self.gen_data()?;
        self.fit_pca()?;
        self.train_dynamics()?;
        let mut algos: Vec<String> = self
            .cfg
            .eval
            .algorithms
            .iter()
            .chain(&self.cfg.eval.experiment_controllers)
            .chain(std::iter::once(&self.cfg.export.algorithm))
            .filter(|a| crate::config::ALGORITHMS[..3].contains(&a.as_str()))
            .cloned()
            .collect();
        algos.sort();
        algos.dedup();
        for a in &algos {
            self.train_policy(a)?;
        }
        self.benchmark()?;
        self.sim_experiment()?;
        self.export()?;
        self.report()
    }
}
