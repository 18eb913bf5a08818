//! Command-line front end. [`run`] returns the process exit code:
//! 0 on success, 1 on usage errors, 2 on runtime errors.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::checks::{self, CheckModule};
use crate::error::{Error, Result};
use crate::io::{read_image, to_channels, write_image, DatasetManifest, Record};
use crate::net::presets::preset;
use crate::net::{ablation_presets, build, count_params_and_flops, NetworkConfig, TrainState};
use crate::noise::{apply_noise, NoiseSpec};
use crate::numerics::container::TensorContainer;
use crate::numerics::{Tape, Tensor};
use crate::pipeline::presets::DESK_PRESETS;
use crate::pipeline::{denoise, desk_preset, evaluate, train, EvalImage, TrainConfig, TrainData};
use crate::random::str_hash;

#[derive(Parser, Debug)]
#[command(name = "nbnet", version, about = "Subspace-projection image denoiser")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a network on a manifest or a built-in desk preset.
    Train(TrainArgs),
    /// Denoise one image.
    Denoise {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Report PSNR/SSIM over a manifest.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Synthetic noise, e.g. awgn:25 or noniid:test1. Omit for paired manifests.
        #[arg(long)]
        noise: Option<NoiseSpec>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        root: Option<PathBuf>,
        /// Also write one JSON record per image to this file.
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Write noisy copies of a manifest's clean images plus a paired manifest.
    SynthNoise {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        noise: NoiseSpec,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        root: Option<PathBuf>,
    },
    /// Dump the SSA basis maps of one decoder stage for an input image.
    ExportBasis {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        /// Decoder stage; 0 is full resolution.
        #[arg(long)]
        layer: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Compare analytic and finite-difference gradients.
    Gradcheck {
        #[arg(long, default_value = "all")]
        module: CheckModule,
    },
    /// List network and training presets.
    Presets {
        /// Print the per-module cost table of one network preset.
        #[arg(long)]
        breakdown: Option<String>,
        /// Input size for the cost table.
        #[arg(long, default_value_t = 256)]
        size: usize,
    },
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Network: an ablation preset name, `tiny`, or a JSON file.
    #[arg(long)]
    net: Option<String>,
    /// Training settings: a desk preset name or a JSON file.
    #[arg(long)]
    train: Option<String>,
    /// Manifest of training images. Desk presets generate their own data when omitted.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Noise model for unpaired data, e.g. awgn:25 or noniid:train.
    #[arg(long)]
    noise: Option<NoiseSpec>,
    /// Held-out manifest for periodic validation.
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long)]
    root: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iters: Option<u64>,
    /// Continue from this checkpoint instead of a fresh initialization.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long, default_value = "checkpoint.nbt")]
    out: PathBuf,
    /// Metrics log; defaults to the checkpoint path with a `.log` extension.
    #[arg(long)]
    log: Option<PathBuf>,
}

pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn print_config(label: &str, value: serde_json::Value) {
    println!("{label}: {value}");
}

fn load_net(spec: &str) -> Result<NetworkConfig> {
    if spec == "tiny" {
        return Ok(NetworkConfig::tiny());
    }
    if spec == "default" {
        return Ok(NetworkConfig::default());
    }
    if let Some(c) = preset(spec) {
        return Ok(c);
    }
    let path = Path::new(spec);
    if path.is_file() {
        let c: NetworkConfig = serde_json::from_str(&fs::read_to_string(path)?)?;
        c.validate()?;
        return Ok(c);
    }
    Err(Error::Config(format!("{spec:?} is neither a network preset nor a file")))
}

fn load_network(ckpt: &Path) -> Result<TrainState<f32>> {
    let state = TrainState::<f32>::load(ckpt)?;
    print_config("checkpoint", json!({ "path": ckpt, "step": state.step, "seed": state.seed, "net": state.config }));
    Ok(state)
}

fn eval_images(m: &DatasetManifest) -> Result<Vec<EvalImage<f32>>> {
    let c = m.color.channels();
    m.records
        .iter()
        .map(|r| {
            Ok(EvalImage {
                name: r.clean.display().to_string(),
                clean: to_channels(&read_image(&r.clean)?, c)?,
                noisy: match &r.noisy {
                    Some(n) => Some(to_channels(&read_image(n)?, c)?),
                    None => None,
                },
            })
        })
        .collect()
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train(a) => cmd_train(a),
        Command::Denoise { ckpt, input, out } => {
            print_config("denoise", json!({ "ckpt": ckpt, "in": input, "out": out }));
            let state = load_network(&ckpt)?;
            let img = to_channels(&read_image::<f32>(&input)?, state.config.image_channels)?;
            let [_, _, h, w] = img.dims4()?;
            state.config.check_input(h, w)?;
            let y = denoise(&state.net()?, &state.params, &img)?;
            write_image(&y, &out, true)
        }
        Command::Eval { ckpt, data, noise, seed, root, records } => {
            let noise = noise.map(|n| n.with_seed(seed));
            print_config(
                "eval",
                json!({ "ckpt": ckpt, "data": data, "noise": noise.map(|n| n.to_string()), "seed": seed, "root": root }),
            );
            let state = load_network(&ckpt)?;
            let m = DatasetManifest::load(&data, root.as_deref())?;
            if noise.is_none() {
                m.require_paired()?;
            }
            let report = evaluate(&state, &eval_images(&m)?, noise.as_ref())?;
            println!("{report}");
            if let Some(path) = records {
                let mut f = fs::File::create(path)?;
                for r in &report.images {
                    writeln!(f, "{}", json!({ "path": r.name, "psnr_db": r.psnr_db, "ssim": r.ssim }))?;
                }
            }
            Ok(())
        }
        Command::SynthNoise { data, noise, out_dir, seed, root } => {
            let noise = noise.with_seed(seed);
            print_config("synth-noise", json!({ "data": data, "noise": noise.to_string(), "out_dir": out_dir, "root": root }));
            let m = DatasetManifest::load(&data, root.as_deref())?;
            fs::create_dir_all(&out_dir)?;
            let mut out = DatasetManifest { root: out_dir.clone(), color: m.color, records: Vec::new() };
            for (i, (path, clean)) in m.load_clean::<f32>()?.into_iter().enumerate() {
                let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| format!("img{i}"));
                let ext = if clean.shape()[1] == 1 { "pgm" } else { "ppm" };
                let clean_out = out_dir.join(format!("{i:04}_{stem}_clean.{ext}"));
                let noisy_out = out_dir.join(format!("{i:04}_{stem}_noisy.{ext}"));
                let noisy = apply_noise(&clean, &noise, str_hash(&path.display().to_string()))?;
                write_image(&clean, &clean_out, false)?;
                write_image(&noisy, &noisy_out, true)?;
                out.records.push(Record { clean: clean_out, noisy: Some(noisy_out) });
            }
            fs::write(out_dir.join("manifest.txt"), out.to_text())?;
            println!("wrote {} pairs to {}", out.records.len(), out_dir.display());
            Ok(())
        }
        Command::ExportBasis { ckpt, input, layer, out_dir } => {
            print_config("export-basis", json!({ "ckpt": ckpt, "in": input, "layer": layer, "out_dir": out_dir }));
            let state = load_network(&ckpt)?;
            if state.config.ssa.is_none() {
                return Err(Error::Config("checkpoint has no SSA modules".into()));
            }
            if layer >= state.config.stages {
                return Err(Error::Config(format!("layer {layer} out of range; the network has {} stages", state.config.stages)));
            }
            let img = to_channels(&read_image::<f32>(&input)?, state.config.image_channels)?;
            let net = state.net()?;
            let tape = Tape::new();
            let (_, trace) = net.forward_traced(&state.params.bind(&tape), tape.constant(img))?;
            let t = &trace[layer];
            fs::create_dir_all(&out_dir)?;
            let mut c = TensorContainer::new();
            c.insert("basis", &t.vectors);
            c.set_meta("layer", layer.to_string());
            c.set_meta("height", t.height.to_string());
            c.set_meta("width", t.width.to_string());
            c.save(out_dir.join("basis.nbt"))?;
            let [_, n, k] = t.vectors.dims3()?;
            let v = t.vectors.data();
            for j in 0..k {
                let col: Vec<f32> = (0..n).map(|i| v[i * k + j]).collect();
                let (lo, hi) = col.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
                let span = if hi > lo { hi - lo } else { 1.0 };
                let map = Tensor::new(&[1, 1, t.height, t.width], col.iter().map(|x| (x - lo) / span).collect())?;
                write_image(&map, out_dir.join(format!("basis_{j:02}.pgm")), true)?;
            }
            println!("wrote {k} basis maps ({}x{}) to {}", t.height, t.width, out_dir.display());
            Ok(())
        }
        Command::Gradcheck { module } => {
            print_config("gradcheck", json!({ "module": format!("{module:?}").to_lowercase(), "dtype": "f64" }));
            let reports = checks::run(module)?;
            let mut ok = true;
            for r in &reports {
                print!("{r}");
                ok &= r.passed();
            }
            let worst = reports.iter().map(|r| r.max_rel_error()).fold(0.0, f64::max);
            println!("worst relative error {worst:.3e} over {} checks", reports.len());
            if ok {
                Ok(())
            } else {
                Err(Error::Config(format!("gradient check failed (worst {worst:.3e})")))
            }
        }
        Command::Presets { breakdown, size } => {
            print_config("presets", json!({ "breakdown": breakdown, "size": size }));
            match breakdown {
                Some(name) => {
                    let cfg = load_net(&name)?;
                    println!("{}", count_params_and_flops(&cfg, size, size)?);
                }
                None => {
                    println!("network presets:");
                    for (name, cfg) in ablation_presets() {
                        let cost = count_params_and_flops(&cfg, size, size)?;
                        println!("  {name:<20} {:>10} params  {:>7.2} GMAC@{size}", cost.params(), cost.macs() as f64 / 1e9);
                    }
                    println!("training presets:");
                    for name in DESK_PRESETS {
                        println!("  {name}");
                    }
                }
            }
            Ok(())
        }
    }
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let desk = match a.train.as_deref() {
        Some(t) if DESK_PRESETS.contains(&t) => Some(desk_preset(t)?),
        _ => None,
    };
    let mut tcfg = match (&desk, a.train.as_deref()) {
        (Some(d), _) => d.train.clone(),
        (None, Some(path)) => serde_json::from_str(&fs::read_to_string(path)?)?,
        (None, None) => TrainConfig::default(),
    };
    if let Some(s) = a.seed {
        tcfg.seed = s;
    }
    if let Some(n) = a.iters {
        tcfg.total_iters = n;
    }
    let state = match &a.resume {
        Some(p) => TrainState::<f32>::load(p)?,
        None => {
            let net = match (&a.net, &desk) {
                (Some(n), _) => load_net(n)?,
                (None, Some(d)) => d.net.clone(),
                (None, None) => NetworkConfig::default(),
            };
            build(&net, tcfg.seed)?
        }
    };
    let noise = a.noise.map(|n| n.with_seed(tcfg.seed)).or(desk.as_ref().map(|d| d.noise));
    let log_path = a.log.clone().unwrap_or_else(|| a.out.with_extension("log"));
    print_config(
        "train",
        json!({
            "net": state.config,
            "train": tcfg,
            "data": a.data.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| format!("synthetic ({})", a.train.as_deref().unwrap_or(""))),
            "noise": noise.map(|n| n.to_string()),
            "val": a.val,
            "resume": a.resume,
            "out": a.out,
            "log": log_path,
        }),
    );
    let channels = state.config.image_channels;
    let (data, mut val) = match (&a.data, &desk) {
        (Some(path), _) => {
            let m = DatasetManifest::load(path, a.root.as_deref())?;
            let data = match noise {
                Some(n) => TrainData::synthetic(
                    m.load_clean::<f32>()?.into_iter().map(|(_, t)| to_channels(&t, channels)).collect::<Result<_>>()?,
                    n,
                    tcfg.patch,
                )?,
                None => TrainData::paired(
                    m.load_pairs::<f32>()?
                        .into_iter()
                        .map(|(_, c, n)| Ok((to_channels(&c, channels)?, to_channels(&n, channels)?)))
                        .collect::<Result<_>>()?,
                    tcfg.patch,
                )?,
            };
            (data, Vec::new())
        }
        (None, Some(d)) => (d.train_data()?, d.val_images()),
        (None, None) => return Err(Error::Config("train needs --data or a desk preset in --train".into())),
    };
    if let Some(v) = &a.val {
        val = eval_images(&DatasetManifest::load(v, a.root.as_deref())?)?;
    }
    let mut log = fs::File::create(&log_path)?;
    let outcome = train(state, &tcfg, &data, &val, Some(&a.out), |e| {
        println!("{e}");
        let _ = writeln!(log, "{e}");
    })?;
    println!("saved step {} to {}", outcome.state.step, a.out.display());
    Ok(())
}
