//! The five subcommands: the self-check suite, the two supervised
//! experiments (multi-label classification, image completion), Q-learning
//! on the toy environments, and LP export. Every run writes `metrics.csv`,
//! `config.resolved`, and `checkpoint.json` into the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use icnn::data::{
    arff_parse, encode_pgm, load_image_pairs, macro_f1, split, synth_multilabel, threshold,
    Dataset,
};
use icnn::learn::{energy_oracle, fit, AdamCfg, FitCfg, Loss, TrainInference};
use icnn::net::{
    embed_feedforward, init_params, load_checkpoint, project_params, save_checkpoint, Activation,
    Feedforward, NetworkSpec, Params,
};
use icnn::rl::{
    env_bandit, env_pointmass, run_q_learning, Env, QAgentConfig, SolverChoice,
};
use icnn::solver::{bundle_entropy, projected_gradient, BundleOptions, PgOptions};
use ndarray::{Array1, Array2};

use crate::config::{CliError, RunConfig};

const SPLIT_SALT: u64 = 0x53504c49;
const INIT_SALT: u64 = 0x494e4954;
const SYNTH_SALT: u64 = 0x53594e54;

/// Inference used for reported predictions; training always differentiates
/// through the bundle entropy solve.
enum InferMode {
    Bundle(BundleOptions),
    Gradient(PgOptions),
}

fn infer(params: &Params, x: Option<&Array1<f64>>, mode: &InferMode) -> Array1<f64> {
    let n = params.spec().input_dim_y;
    let start = Array1::from_elem(n, 0.5);
    let oracle = energy_oracle(params, x);
    match mode {
        InferMode::Bundle(opts) => {
            bundle_entropy(oracle, &start, opts)
                .expect("bundle inference on validated model")
                .y
        }
        InferMode::Gradient(opts) => projected_gradient(oracle, &start, opts),
    }
}

fn read_solver_keys(cfg: &RunConfig) -> Result<(String, usize, PgOptions), CliError> {
    let solver = cfg.get_str("solver", "bundle");
    if solver != "bundle" && solver != "gradient" {
        return Err(CliError::Config(format!(
            "solver must be 'bundle' or 'gradient', got '{solver}'"
        )));
    }
    let k = cfg.get_usize("k", 5)?;
    if k == 0 {
        return Err(CliError::Config("k must be >= 1".into()));
    }
    let pg = PgOptions {
        steps: cfg.get_usize("pg_steps", 30)?,
        step_size: cfg.get_f64("pg_lr", 0.01)?,
        momentum: cfg.get_f64("pg_momentum", 0.9)?,
    };
    Ok((solver, k, pg))
}

fn infer_mode(solver: &str, k: usize, pg: PgOptions) -> InferMode {
    if solver == "gradient" {
        InferMode::Gradient(pg)
    } else {
        InferMode::Bundle(BundleOptions {
            iterations: k,
            epsilon: 1.0,
        })
    }
}

/// Training differentiates through whichever solver also produces the
/// reported predictions: argmin differentiation for the bundle, unrolled
/// backpropagation for projected gradient descent.
fn train_inference(solver: &str, k: usize, pg: PgOptions) -> TrainInference {
    if solver == "gradient" {
        TrainInference::ProjectedGradient(pg)
    } else {
        TrainInference::Bundle { iterations: k }
    }
}

fn ensure_out_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let out = PathBuf::from(cfg.require_str("out")?);
    fs::create_dir_all(&out)
        .map_err(|e| CliError::Config(format!("cannot create out dir: {e}")))?;
    Ok(out)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes)
        .map_err(|e| CliError::Run(format!("cannot write {}: {e}", path.display())))
}

fn write_checkpoint(path: &Path, params: &Params) -> Result<(), CliError> {
    let mut buf = Vec::new();
    save_checkpoint(params, &mut buf)
        .map_err(|e| CliError::Run(format!("checkpoint serialization failed: {e}")))?;
    write_file(path, &buf)
}

fn loss_from(cfg: &RunConfig) -> Result<Loss, CliError> {
    match cfg.get_str("loss", "squared").as_str() {
        "squared" => Ok(Loss::SquaredError),
        "bce" => Ok(Loss::BinaryCrossEntropy),
        other => Err(CliError::Config(format!(
            "loss must be 'squared' or 'bce', got '{other}'"
        ))),
    }
}

/// Runs the seeded property suite, printing one PASS/FAIL line per check.
pub fn cmd_check(filter: &str, seed: u64) -> Result<(), CliError> {
    let reports = icnn::check::run_all(filter, seed);
    if reports.is_empty() {
        return Err(CliError::Config(format!(
            "filter '{filter}' matches no checks (available: {})",
            icnn::check::check_names().join(", ")
        )));
    }
    let mut failures = 0;
    for r in &reports {
        let tag = if r.passed { "PASS" } else { "FAIL" };
        println!("[{tag}] {:<22} {}", r.name, r.detail);
        if !r.passed {
            failures += 1;
        }
    }
    if failures > 0 {
        Err(CliError::Run(format!("{failures} check(s) failed")))
    } else {
        Ok(())
    }
}

struct EvalRow {
    model: &'static str,
    epoch: usize,
    split: &'static str,
    loss: f64,
    metric: f64,
}

fn eval_multilabel(
    params: &Params,
    data: &Dataset,
    loss: Loss,
    tau: f64,
    mode: &InferMode,
) -> (f64, f64) {
    let n = data.len();
    let mut preds = Array2::zeros((n, data.y.ncols()));
    let mut total_loss = 0.0;
    for i in 0..n {
        let x = data.x_row(i);
        let y_hat = infer(params, Some(&x), mode);
        total_loss += loss.value(&y_hat, &data.y_row(i));
        preds.row_mut(i).assign(&y_hat);
    }
    let f1 = macro_f1(&threshold(&preds, tau), &data.y).expect("congruent shapes");
    (total_loss / n as f64, f1)
}

const MULTILABEL_KEYS: &[&str] = &[
    "seed", "out", "data", "label_count", "synthetic", "synth_n", "synth_features",
    "synth_labels", "split_fraction", "epochs", "batch", "k", "lr", "hidden", "u_hidden",
    "loss", "threshold", "init_scale", "solver", "pg_steps", "pg_lr", "pg_momentum",
];

/// Trains the feedforward baseline (x-path only, through the trivial PICNN
/// embedding with K = 1 inference, i.e. sigmoid outputs) and a full PICNN
/// with argmin differentiation; logs train/test macro-F1 per epoch.
pub fn cmd_multilabel(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.restrict_keys(MULTILABEL_KEYS)?;
    let seed = cfg.require_u64("seed")?;
    let out = ensure_out_dir(cfg)?;
    let synthetic = cfg.get_bool("synthetic", false)?;
    let epochs = cfg.get_usize("epochs", 50)?;
    let batch = cfg.get_usize("batch", 64)?;
    let lr = cfg.get_f64("lr", 5e-3)?;
    let hidden = cfg.get_widths("hidden", "32")?;
    let u_hidden = cfg.get_widths("u_hidden", "32")?;
    let loss = loss_from(cfg)?;
    let tau = cfg.get_f64("threshold", 0.5)?;
    let fraction = cfg.get_f64("split_fraction", 0.7)?;
    let init_scale = cfg.get_f64("init_scale", 0.2)?;
    let (solver, k, pg) = read_solver_keys(cfg)?;

    let ml = if synthetic {
        synth_multilabel(
            cfg.get_usize("synth_n", 2000)?,
            cfg.get_usize("synth_features", 50)?,
            cfg.get_usize("synth_labels", 10)?,
            seed ^ SYNTH_SALT,
        )?
    } else {
        let path = cfg.get_path("data")?;
        let label_count = cfg.require_u64("label_count")? as usize;
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
        arff_parse(&text, label_count)?
    };
    let (train, test) = split(&ml.to_dataset(), fraction, seed ^ SPLIT_SALT)?;
    let (features, labels) = (train.x.ncols(), train.y.ncols());

    let mut rows: Vec<EvalRow> = Vec::new();
    let mode = infer_mode(&solver, k, pg);

    // Baseline: trivial PICNN around a plain feedforward net; only the
    // x-path trains and inference is the K = 1 sigmoid closed form.
    let mut ff_dims = vec![features];
    ff_dims.extend(&hidden);
    ff_dims.push(labels);
    let ff = Feedforward::init(&ff_dims, Activation::Relu, seed ^ INIT_SALT, init_scale)?;
    let baseline0 = embed_feedforward(&ff, labels)?;
    let baseline_mode = InferMode::Bundle(BundleOptions {
        iterations: 1,
        epsilon: 1.0,
    });
    let base_cfg = FitCfg {
        epochs,
        batch,
        inference: TrainInference::bundle(1),
        loss,
        seed: seed.wrapping_add(1),
        adam: AdamCfg {
            lr,
            ..AdamCfg::default()
        },
        x_path_only: true,
    };
    let log_eval = |rows: &mut Vec<EvalRow>,
                        model: &'static str,
                        epoch: usize,
                        params: &Params,
                        mode: &InferMode| {
        let (l, f1) = eval_multilabel(params, &train, loss, tau, mode);
        rows.push(EvalRow {
            model,
            epoch,
            split: "train",
            loss: l,
            metric: f1,
        });
        let (l, f1) = eval_multilabel(params, &test, loss, tau, mode);
        rows.push(EvalRow {
            model,
            epoch,
            split: "test",
            loss: l,
            metric: f1,
        });
    };
    log_eval(&mut rows, "feedforward", 0, &baseline0, &baseline_mode);
    let (baseline, _) = {
        let mut pending = Vec::new();
        let (p, log) = fit(&baseline0, &train, &base_cfg, |epoch, params, _| {
            pending.push((epoch + 1, params.clone()));
        })?;
        for (epoch, params) in pending {
            log_eval(&mut rows, "feedforward", epoch, &params, &baseline_mode);
        }
        (p, log)
    };

    // Full PICNN trained by argmin differentiation.
    let spec = NetworkSpec::picnn(features, labels, hidden.clone(), u_hidden, Activation::Relu);
    let mut picnn0 = init_params(&spec, seed ^ INIT_SALT, init_scale)?;
    project_params(&mut picnn0);
    let picnn_cfg = FitCfg {
        epochs,
        batch,
        inference: train_inference(&solver, k, pg),
        loss,
        seed: seed.wrapping_add(2),
        adam: AdamCfg {
            lr,
            ..AdamCfg::default()
        },
        x_path_only: false,
    };
    log_eval(&mut rows, "picnn", 0, &picnn0, &mode);
    let (picnn, _) = {
        let mut pending = Vec::new();
        let (p, log) = fit(&picnn0, &train, &picnn_cfg, |epoch, params, _| {
            pending.push((epoch + 1, params.clone()));
        })?;
        for (epoch, params) in pending {
            log_eval(&mut rows, "picnn", epoch, &params, &mode);
        }
        (p, log)
    };

    let mut csv = String::from("model,epoch,split,loss,macro_f1\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.model, r.epoch, r.split, r.loss, r.metric
        ));
    }
    write_file(&out.join("metrics.csv"), csv.as_bytes())?;
    write_checkpoint(&out.join("checkpoint.json"), &picnn)?;
    write_checkpoint(&out.join("checkpoint_baseline.json"), &baseline)?;
    write_file(&out.join("config.resolved"), cfg.resolved_text().as_bytes())?;
    Ok(())
}

const COMPLETE_KEYS: &[&str] = &[
    "seed", "out", "data", "target_h", "target_w", "split_fraction", "epochs", "batch", "k",
    "lr", "hidden", "u_hidden", "init_scale", "solver", "pg_steps", "pg_lr", "pg_momentum",
    "recon_count",
];

fn eval_mse(params: &Params, data: &Dataset, mode: &InferMode) -> f64 {
    let n = data.len();
    let pixels = data.y.ncols();
    let mut total = 0.0;
    for i in 0..n {
        let x = data.x_row(i);
        let y_hat = infer(params, Some(&x), mode);
        let truth = data.y_row(i);
        total += y_hat
            .iter()
            .zip(truth.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / pixels as f64;
    }
    total / n as f64
}

/// Trains a PICNN mapping left image halves to right halves by argmin
/// differentiation; reported inference uses the selected solver (bundle
/// entropy or projected gradient). Writes per-epoch train/test MSE and a
/// few PGM reconstructions.
pub fn cmd_complete(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.restrict_keys(COMPLETE_KEYS)?;
    let seed = cfg.require_u64("seed")?;
    let out = ensure_out_dir(cfg)?;
    let data_path = cfg.get_path("data")?;
    let target_h = cfg.get_usize("target_h", 16)?;
    let target_w = cfg.get_usize("target_w", 16)?;
    let fraction = cfg.get_f64("split_fraction", 0.75)?;
    let epochs = cfg.get_usize("epochs", 30)?;
    let batch = cfg.get_usize("batch", 16)?;
    let lr = cfg.get_f64("lr", 5e-3)?;
    let hidden = cfg.get_widths("hidden", "48")?;
    let u_hidden = cfg.get_widths("u_hidden", "48")?;
    let init_scale = cfg.get_f64("init_scale", 0.1)?;
    let recon_count = cfg.get_usize("recon_count", 8)?;
    let (solver, k, pg) = read_solver_keys(cfg)?;
    let mode = infer_mode(&solver, k, pg);

    let pairs = load_image_pairs(&data_path, Some((target_h, target_w)))?;
    if pairs.is_empty() {
        return Err(CliError::Data("no images in the dataset".into()));
    }
    let (train, test) = split(&pairs.to_dataset(), fraction, seed ^ SPLIT_SALT)?;
    let dim = pairs.height * pairs.width / 2;

    let spec = NetworkSpec::picnn(dim, dim, hidden.clone(), u_hidden, Activation::Relu);
    let mut params0 = init_params(&spec, seed ^ INIT_SALT, init_scale)?;
    project_params(&mut params0);

    let mut rows: Vec<(usize, &'static str, f64)> = Vec::new();
    rows.push((0, "train", eval_mse(&params0, &train, &mode)));
    rows.push((0, "test", eval_mse(&params0, &test, &mode)));

    let fit_cfg = FitCfg {
        epochs,
        batch,
        inference: train_inference(&solver, k, pg),
        loss: Loss::SquaredError,
        seed: seed.wrapping_add(3),
        adam: AdamCfg {
            lr,
            ..AdamCfg::default()
        },
        x_path_only: false,
    };
    let mut pending = Vec::new();
    let (trained, _) = fit(&params0, &train, &fit_cfg, |epoch, params, _| {
        pending.push((epoch + 1, params.clone()));
    })?;
    for (epoch, params) in pending {
        rows.push((epoch, "train", eval_mse(&params, &train, &mode)));
        rows.push((epoch, "test", eval_mse(&params, &test, &mode)));
    }

    // loss: per-pixel MSE on the [0,1] scale; metric: the same on the
    // 0..255 grayscale scale.
    let mut csv = String::from("epoch,split,loss,mse_255\n");
    for (epoch, split_name, mse) in &rows {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            epoch,
            split_name,
            mse,
            mse * 255.0 * 255.0
        ));
    }
    write_file(&out.join("metrics.csv"), csv.as_bytes())?;
    write_checkpoint(&out.join("checkpoint.json"), &trained)?;

    let img_dir = out.join("images");
    fs::create_dir_all(&img_dir)
        .map_err(|e| CliError::Run(format!("cannot create images dir: {e}")))?;
    for i in 0..recon_count.min(test.len()) {
        let x = test.x_row(i);
        let y_hat = infer(&trained, Some(&x), &mode);
        let full = pairs.reassemble(x.as_slice().unwrap(), y_hat.as_slice().unwrap());
        let bytes = encode_pgm(pairs.height, pairs.width, &full);
        write_file(&img_dir.join(format!("recon_{i:03}.pgm")), &bytes)?;
    }
    write_file(&out.join("config.resolved"), cfg.resolved_text().as_bytes())?;
    Ok(())
}

const RL_KEYS: &[&str] = &[
    "seed", "out", "env", "episodes", "gamma", "tau", "sigma", "minibatch", "capacity", "k",
    "lr", "hidden", "u_hidden", "init_scale", "solver", "pg_steps", "pg_lr", "pg_momentum",
];

/// Q-learning on a built-in toy environment; logs one episode per row and
/// saves the trained Q checkpoint.
pub fn cmd_rl(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.restrict_keys(RL_KEYS)?;
    let seed = cfg.require_u64("seed")?;
    let out = ensure_out_dir(cfg)?;
    let env_name = cfg.get_str("env", "pointmass");
    let episodes = cfg.get_usize("episodes", 60)?;
    let gamma = cfg.get_f64("gamma", 0.9)?;
    let tau = cfg.get_f64("tau", 0.05)?;
    let sigma = cfg.get_f64("sigma", 0.1)?;
    let minibatch = cfg.get_usize("minibatch", 32)?;
    let capacity = cfg.get_usize("capacity", 20000)?;
    let lr = cfg.get_f64("lr", 1e-3)?;
    let hidden = cfg.get_widths("hidden", "16,16")?;
    let u_hidden = cfg.get_widths("u_hidden", "16,16")?;
    let init_scale = cfg.get_f64("init_scale", 0.1)?;
    let (solver, k, pg) = read_solver_keys(cfg)?;
    let solver_choice = if solver == "gradient" {
        SolverChoice::Gradient {
            steps: pg.steps,
            step_size: pg.step_size,
            momentum: pg.momentum,
        }
    } else {
        SolverChoice::Bundle { iterations: k }
    };

    let agent_cfg = QAgentConfig {
        gamma,
        tau,
        noise_sigma: sigma,
        solver: solver_choice,
        episodes,
        minibatch,
        capacity,
        seed,
        adam: AdamCfg {
            lr,
            ..AdamCfg::default()
        },
    };

    let init_q_net = |state_dim: usize, action_dim: usize| -> Result<Params, CliError> {
        let spec = NetworkSpec::picnn(
            state_dim,
            action_dim,
            hidden.clone(),
            u_hidden.clone(),
            Activation::Relu,
        );
        let mut params = init_params(&spec, seed ^ INIT_SALT, init_scale)?;
        project_params(&mut params);
        Ok(params)
    };
    let outcome = match env_name.as_str() {
        "pointmass" => {
            let mut env = env_pointmass();
            let params = init_q_net(env.state_dim(), env.action_dim())?;
            run_q_learning(&mut env, &params, &agent_cfg)?
        }
        "bandit" => {
            let mut env = env_bandit();
            let params = init_q_net(env.state_dim(), env.action_dim())?;
            run_q_learning(&mut env, &params, &agent_cfg)?
        }
        other => {
            return Err(CliError::Config(format!(
                "env must be 'pointmass' or 'bandit', got '{other}'"
            )))
        }
    };

    let mut csv = String::from("episode,steps,return,mean_td_loss\n");
    for l in &outcome.log {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            l.episode, l.steps, l.ret, l.mean_td_loss
        ));
    }
    write_file(&out.join("metrics.csv"), csv.as_bytes())?;
    write_checkpoint(&out.join("checkpoint.json"), &outcome.params)?;
    write_file(&out.join("config.resolved"), cfg.resolved_text().as_bytes())?;
    Ok(())
}

const EXPORT_KEYS: &[&str] = &["checkpoint", "out"];

/// Exports the exact-inference LP of a relu FICNN checkpoint.
pub fn cmd_export_lp(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.restrict_keys(EXPORT_KEYS)?;
    let ckpt_path = cfg.get_path("checkpoint")?;
    let out = ensure_out_dir(cfg)?;
    let file = fs::File::open(&ckpt_path)
        .map_err(|e| CliError::Data(format!("cannot open checkpoint: {e}")))?;
    let params =
        load_checkpoint(file).map_err(|e| CliError::Data(format!("bad checkpoint: {e}")))?;
    let ficnn = params
        .as_ficnn()
        .ok_or_else(|| CliError::Config("LP export needs a FICNN checkpoint".into()))?;
    let text = icnn::net::export_lp(ficnn).map_err(|e| CliError::Config(e.to_string()))?;
    write_file(&out.join("model.lp"), text.as_bytes())?;
    write_file(&out.join("config.resolved"), cfg.resolved_text().as_bytes())?;
    Ok(())
}
