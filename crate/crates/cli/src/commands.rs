use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nsql_core::assign::{bench_assign, BenchMethod};
use nsql_core::dataio::{read_tensor, write_csv, write_tensor};
use nsql_core::metrics::{loss, proxy_fid, ssim, FeatureExtractor, LossSpec};
use nsql_core::prior::build_lattice;
use nsql_core::tensorcore::{load_decoder, save_decoder, Tensor};
use nsql_core::train::{
    export_latents, fit, history_to_csv, sample, SampleMode, SampleRequest,
};
use nsql_core::{Error, Result};

use crate::config::RunConfig;
use crate::pgm::write_pgm_grid;

pub const DECODER_FILE: &str = "decoder.nsql";
pub const LATENTS_FILE: &str = "latents.nsqt";
pub const LABELS_FILE: &str = "labels.nsqt";
pub const HISTORY_FILE: &str = "history.csv";
pub const SNAPSHOT_FILE: &str = "resolved_config.toml";

pub fn cmd_train(config_path: &Path, data: Option<&Path>, out: &Path) -> Result<()> {
    let mut config = RunConfig::from_file(config_path)?;
    let dataset = config.load_dataset(data)?;
    let prior = config.prior_spec()?;
    let source = config.lattice_source()?;
    let train_config = config.train_config(dataset.image_shape)?;
    let lattice = build_lattice(prior, dataset.n(), source, config.lattice.seed)?;

    log::info!(
        "training on {} samples of dimension {} (lattice {} x {})",
        dataset.n(),
        dataset.p(),
        lattice.n(),
        lattice.dim()
    );
    let result = fit(&dataset.samples, &lattice, &train_config)?;

    fs::create_dir_all(out)?;
    save_decoder(&out.join(DECODER_FILE), &result.params)?;
    write_tensor(&out.join(LATENTS_FILE), &result.latents)?;
    fs::write(out.join(HISTORY_FILE), history_to_csv(&result.history))?;
    if let Some(labels) = &dataset.labels {
        let as_f64: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
        write_tensor(
            &out.join(LABELS_FILE),
            &Tensor::matrix(labels.len(), 1, as_f64)?,
        )?;
    }
    fs::write(out.join(SNAPSHOT_FILE), config.to_toml()?)?;
    Ok(())
}

fn model_snapshot(model: &Path) -> Result<RunConfig> {
    RunConfig::from_file(&model.join(SNAPSHOT_FILE))
        .map_err(|e| Error::Format(format!("model snapshot: {e}")))
}

pub fn cmd_sample(
    model: &Path,
    count: usize,
    mode: SampleMode,
    seed: u64,
    out: Option<&Path>,
) -> Result<()> {
    let params = load_decoder(&model.join(DECODER_FILE))?;
    let snapshot = model_snapshot(model)?;
    let prior = snapshot.prior_spec()?;
    let codes = match mode {
        SampleMode::LatticeRows => Some(read_tensor(&model.join(LATENTS_FILE))?),
        SampleMode::PriorDraws => None,
    };
    let request = SampleRequest { count, mode, seed };
    let samples = sample(&params, &request, &prior, codes.as_ref())?;

    let out_dir = out.unwrap_or(model);
    fs::create_dir_all(out_dir)?;
    write_tensor(&out_dir.join("samples.nsqt"), &samples)?;
    if let Some([h, w, c]) = snapshot.resolved_image_shape {
        if c == 1 {
            write_pgm_grid(&out_dir.join("samples.pgm"), &samples, h, w)?;
        }
    }
    Ok(())
}

pub struct EvalArgs {
    pub real: PathBuf,
    pub fake: PathBuf,
    pub seed: u64,
    pub shape: Option<(usize, usize, usize)>,
    pub window: usize,
    pub feature_dim: usize,
    pub pairs: usize,
}

pub fn cmd_eval(args: &EvalArgs, sink: &mut dyn Write) -> Result<()> {
    let real = read_tensor(&args.real)?;
    let fake = read_tensor(&args.fake)?;
    if real.cols() != fake.cols() {
        return Err(Error::shape(
            "eval",
            format!("{} columns", real.cols()),
            format!("{} columns", fake.cols()),
        ));
    }
    let p = real.cols();
    let fe = FeatureExtractor::new(args.seed, p, args.feature_dim)?;
    let fid = proxy_fid(&real, &fake, &fe)?;

    // paired statistics over the first pairs (50 by default, fewer when the
    // tensors are smaller)
    let n_pairs = args.pairs.min(real.rows()).min(fake.rows());
    let shape = match args.shape {
        Some(s) => s,
        None => {
            let side = (p as f64).sqrt() as usize;
            if side * side == p {
                (side, side, 1)
            } else {
                return Err(Error::Config(format!(
                    "column count {p} is not a perfect square; pass --shape HxWxC"
                )));
            }
        }
    };
    if shape.0 * shape.1 * shape.2 != p {
        return Err(Error::shape(
            "eval",
            format!("{p} pixels"),
            format!("shape {:?}", shape),
        ));
    }
    let mut ssim_values = Vec::with_capacity(n_pairs);
    let mut l1_sum = 0.0;
    let l1_spec = LossSpec::l1();
    for i in 0..n_pairs {
        ssim_values.push(ssim(real.row(i), fake.row(i), shape, args.window, 1.0)?);
        l1_sum += loss(&l1_spec, real.row(i), fake.row(i))?;
    }
    let ssim_mean = ssim_values.iter().sum::<f64>() / n_pairs as f64;
    let ssim_var = ssim_values
        .iter()
        .map(|s| (s - ssim_mean) * (s - ssim_mean))
        .sum::<f64>()
        / n_pairs as f64;

    let report = serde_json::json!({
        "proxy_fid": fid,
        "ssim_mean": ssim_mean,
        "ssim_std": ssim_var.sqrt(),
        "l1_mean": l1_sum / n_pairs as f64,
        "n_pairs": n_pairs,
        "lpips": null,
    });
    writeln!(sink, "{}", serde_json::to_string_pretty(&report).unwrap())?;
    Ok(())
}

pub struct LatticeArgs {
    pub prior: String,
    pub dim: usize,
    pub n: usize,
    pub source: String,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub binary_out: Option<PathBuf>,
}

pub fn cmd_lattice(args: &LatticeArgs, sink: &mut dyn Write) -> Result<()> {
    let config_text = format!(
        "schema_version = 1\n[prior]\nkind = \"{}\"\ndim = {}\n[lattice]\nsource = \"{}\"\nseed = {}\n[data]\nkind = \"synthetic\"\n",
        args.prior, args.dim, args.source, args.seed
    );
    let config: RunConfig = toml::from_str(&config_text)
        .map_err(|e| Error::Config(format!("lattice flags: {e}")))?;
    let lattice = build_lattice(
        config.prior_spec()?,
        args.n,
        config.lattice_source()?,
        args.seed,
    )?;
    let header: Vec<String> = (0..lattice.dim()).map(|j| format!("dim{j}")).collect();
    match &args.out {
        Some(path) => write_csv(path, &lattice.points, &header)?,
        None => {
            writeln!(sink, "{}", header.join(","))?;
            for i in 0..lattice.n() {
                let row: Vec<String> =
                    lattice.points.row(i).iter().map(|v| format!("{v}")).collect();
                writeln!(sink, "{}", row.join(","))?;
            }
        }
    }
    if let Some(path) = &args.binary_out {
        write_tensor(path, &lattice.points)?;
    }
    Ok(())
}

pub fn cmd_bench_assign(
    n: usize,
    method: BenchMethod,
    repeats: usize,
    seed: u64,
    sink: &mut dyn Write,
) -> Result<()> {
    let entries = bench_assign(n, method, repeats, seed)?;
    writeln!(sink, "method,n,mean_ms,std_ms")?;
    for e in entries {
        writeln!(sink, "{},{},{},{}", e.method.name(), e.n, e.mean_ms, e.std_ms)?;
    }
    Ok(())
}

pub fn cmd_export_latents(model: &Path, out: Option<&Path>, sink: &mut dyn Write) -> Result<()> {
    let latents = read_tensor(&model.join(LATENTS_FILE))?;
    let labels_path = model.join(LABELS_FILE);
    let labels: Option<Vec<i64>> = if labels_path.exists() {
        Some(
            read_tensor(&labels_path)?
                .data()
                .iter()
                .map(|&v| v as i64)
                .collect(),
        )
    } else {
        None
    };
    let rows = export_latents(&latents, labels.as_deref())?;

    let mut header: Vec<String> = vec!["index".into()];
    header.extend((0..latents.cols()).map(|j| format!("z{j}")));
    if labels.is_some() {
        header.push("label".into());
    }
    let mut text = format!("{}\n", header.join(","));
    for row in rows {
        let mut fields = vec![row.index.to_string()];
        fields.extend(row.coords.iter().map(|v| format!("{v}")));
        if let Some(label) = row.label {
            fields.push(label.to_string());
        }
        text.push_str(&fields.join(","));
        text.push('\n');
    }
    match out {
        Some(path) => fs::write(path, text)?,
        None => sink.write_all(text.as_bytes())?,
    }
    Ok(())
}
