use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use vadfuse::audio::{read_raw_pcm, read_wav, read_wav_from, write_wav, AudioError, SampleStream};
use vadfuse::config::{ConfigError, DetectorMode, Settings};
use vadfuse::dnn::{load_weights, save_weights, DnnError, DnnWeights};
use vadfuse::features::{write_feature_dump, DumpError};
use vadfuse::fusion::write_decision_log;
use vadfuse::harness::{
    calibrate_thresholds, evaluate, prepare, read_corpus, read_item, simulate_corpus_with, train_network, write_corpus,
    CalibrationItem, CorpusItem, EvalReport, EvalRow, HarnessError, NoiseKind, Prepared, SimulateConfig, ThresholdGrid,
};
use vadfuse::pipeline::{detect, extract_features, posteriors, Pipeline, PipelineError, PipelineOutput};
use vadfuse::segmenter::write_segment_report;

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dnn(#[from] DnnError),
    #[error(transparent)]
    Dump(#[from] DumpError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("{0}")]
    Usage(String),
}

#[derive(Parser)]
#[command(name = "vadfuse", version, about = "Streaming voice activity detection and speech segmentation")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Key = value settings file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Network weight file.
    #[arg(long)]
    weights: Option<PathBuf>,
}

impl Common {
    fn settings(&self) -> Result<Settings, CliError> {
        Ok(match &self.config {
            Some(p) => Settings::load(p)?,
            None => Settings::default(),
        })
    }

    fn weights(&self) -> Result<Option<DnnWeights>, CliError> {
        Ok(self.weights.as_ref().map(load_weights).transpose()?)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Detect speech in one recording and cut it into segments.
    Run {
        /// WAV file, or `-` for stdin.
        input: PathBuf,
        /// Input is headerless 16-bit little-endian PCM.
        #[arg(long)]
        raw: bool,
        #[command(flatten)]
        common: Common,
        /// Directory for `segment_NNN.wav` files.
        #[arg(long)]
        segments_out: Option<PathBuf>,
        /// One JSON decision record per frame.
        #[arg(long)]
        decisions_out: Option<PathBuf>,
        /// Segment report TSV; printed to stdout when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Spliced network inputs, one row per frame.
        #[arg(long)]
        features_out: Option<PathBuf>,
        /// GMM parameters after the last frame.
        #[arg(long)]
        gmm_snapshot: Option<PathBuf>,
    },
    /// Train the network on labelled recordings.
    Train {
        /// Directory of WAV files, or a text file listing one WAV path per line.
        list: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a synthetic noisy corpus with frame labels and utterance annotations.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [5.0, 10.0, 15.0])]
        snr: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = NoiseKind::ALL)]
        noise: Vec<NoiseKind>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        utterances: usize,
        /// Use a recording instead of the generator, as `kind=path.wav`.
        #[arg(long = "noise-file", value_parser = parse_noise_file)]
        noise_files: Vec<(NoiseKind, PathBuf)>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Score the detectors on a labelled directory.
    Eval {
        dir: PathBuf,
        /// Report TSV, or `-` for stdout.
        #[arg(long)]
        report: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Grid-search the decision thresholds on a labelled directory.
    Calibrate {
        dir: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Write the tuned settings here; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_noise_file(s: &str) -> Result<(NoiseKind, PathBuf), String> {
    let (k, p) = s.split_once('=').ok_or_else(|| format!("expected kind=path, got {s:?}"))?;
    Ok((k.parse()?, PathBuf::from(p)))
}

fn create(path: &Path) -> Result<Box<dyn Write>, CliError> {
    if path == Path::new("-") {
        Ok(Box::new(BufWriter::new(io::stdout().lock())))
    } else {
        Ok(Box::new(BufWriter::new(File::create(path)?)))
    }
}

const BLOCK: usize = 1600;

/// Feeds the pipeline block by block; stdin is consumed as it arrives.
fn stream_input(input: &Path, raw: bool, pipe: &mut Pipeline, out: &mut PipelineOutput, keep: bool) -> Result<Vec<f32>, CliError> {
    let mut kept = Vec::new();
    let mut feed = |block: &[f32], pipe: &mut Pipeline, out: &mut PipelineOutput| -> Result<(), CliError> {
        if keep {
            kept.extend_from_slice(block);
        }
        pipe.push(block, out)?;
        Ok(())
    };
    if input == Path::new("-") {
        let stdin = io::stdin().lock();
        if raw {
            let mut r = BufReader::new(stdin);
            let mut bytes = vec![0u8; BLOCK * 2];
            let mut carry: Option<u8> = None;
            loop {
                let n = r.read(&mut bytes)?;
                if n == 0 {
                    break;
                }
                let mut buf: Vec<u8> = carry.take().into_iter().collect();
                buf.extend_from_slice(&bytes[..n]);
                if buf.len() % 2 == 1 {
                    carry = buf.pop();
                }
                let pcm: Vec<i16> = buf.chunks_exact(2).map(|c| i16::from_le_bytes([c[0], c[1]])).collect();
                feed(&SampleStream::from_pcm16(&pcm).samples, pipe, out)?;
            }
        } else {
            let s = read_wav_from(stdin)?;
            for b in s.samples.chunks(BLOCK) {
                feed(b, pipe, out)?;
            }
        }
    } else {
        let s = if raw { read_raw_pcm(BufReader::new(File::open(input)?))? } else { read_wav(input)? };
        for b in s.samples.chunks(BLOCK) {
            feed(b, pipe, out)?;
        }
    }
    pipe.finish(out)?;
    Ok(kept)
}

#[allow(clippy::too_many_arguments)]
fn run(
    input: &Path,
    raw: bool,
    common: &Common,
    segments_out: Option<&Path>,
    decisions_out: Option<&Path>,
    report: Option<&Path>,
    features_out: Option<&Path>,
    gmm_snapshot: Option<&Path>,
) -> Result<(), CliError> {
    let settings = common.settings()?;
    let mut pipe = Pipeline::new(&settings, common.weights()?)?;
    let mut out = PipelineOutput::default();
    let samples = stream_input(input, raw, &mut pipe, &mut out, features_out.is_some())?;

    if let Some(p) = decisions_out {
        let mut w = create(p)?;
        for r in &out.decisions {
            write_decision_log(&mut w, r)?;
        }
        w.flush()?;
    }
    if let Some(dir) = segments_out {
        std::fs::create_dir_all(dir)?;
        for (i, s) in out.segments.iter().enumerate() {
            write_wav(dir.join(format!("segment_{i:03}.wav")), &s.samples)?;
        }
    }
    let mut w = create(report.unwrap_or(Path::new("-")))?;
    write_segment_report(&mut w, &out.segments)?;
    w.flush()?;
    if let Some(p) = features_out {
        let f = extract_features(&SampleStream::new(samples), &settings)?;
        let dims = f.spliced.first().map_or(0, |x| x.dim());
        let mut w = create(p)?;
        write_feature_dump(&mut w, dims, f.spliced.iter().map(|x| x.0.as_slice()))?;
        w.flush()?;
    }
    if let Some(p) = gmm_snapshot {
        let text = pipe.gmm_state().map(|s| s.snapshot()).unwrap_or_default();
        create(p)?.write_all(text.as_bytes())?;
    }
    Ok(())
}

fn read_list(list: &Path, settings: &Settings) -> Result<Vec<CorpusItem>, CliError> {
    if list.is_dir() {
        return Ok(read_corpus(list, settings)?);
    }
    let base = list.parent().unwrap_or(Path::new("."));
    let mut items = Vec::new();
    for line in BufReader::new(File::open(list)?).lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        items.push(read_item(&base.join(line), settings)?);
    }
    Ok(items)
}

fn train(list: &Path, out: &Path, config: Option<&Path>, seed: u64) -> Result<(), CliError> {
    let settings = match config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    let items = read_list(list, &settings)?;
    if items.is_empty() {
        return Err(CliError::Usage(format!("no recordings found in {}", list.display())));
    }
    let data = prepare(items, &settings)?;
    let (w, losses) = train_network(&data, &settings, seed)?;
    for (i, l) in losses.iter().enumerate() {
        eprintln!("epoch {}\tloss {l:.5}", i + 1);
    }
    save_weights(&w, out)?;
    Ok(())
}

fn simulate(cfg: SimulateConfig, noise_files: &[(NoiseKind, PathBuf)], config: Option<&Path>, out: &Path) -> Result<(), CliError> {
    let settings = match config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    let recorded = noise_files.iter().map(|(k, p)| Ok((*k, read_wav(p)?))).collect::<Result<Vec<_>, CliError>>()?;
    let items = simulate_corpus_with(&cfg, &settings, &recorded)?;
    write_corpus(out, &items)?;
    eprintln!("wrote {} recordings to {}", items.len(), out.display());
    Ok(())
}

fn load_prepared(dir: &Path, settings: &Settings, weights: Option<&DnnWeights>) -> Result<Vec<Prepared>, CliError> {
    let mut data = prepare(read_corpus(dir, settings)?, settings)?;
    if data.is_empty() {
        return Err(CliError::Usage(format!("no recordings found in {}", dir.display())));
    }
    if let Some(w) = weights {
        for p in &mut data {
            p.posteriors = posteriors(w, &p.features.spliced)?;
        }
    }
    Ok(data)
}

fn eval(dir: &Path, report: &Path, common: &Common) -> Result<(), CliError> {
    let settings = common.settings()?;
    let weights = common.weights()?;
    let data = load_prepared(dir, &settings, weights.as_ref())?;
    let modes: &[(DetectorMode, &str)] = if weights.is_some() {
        &[(DetectorMode::Fused, "fused"), (DetectorMode::Gmm, "gmm"), (DetectorMode::Dnn, "dnn")]
    } else {
        &[(DetectorMode::Gmm, "gmm")]
    };
    let mut rows: Vec<EvalRow> = Vec::new();
    for p in &data {
        let (noise, snr_db) = match p.item.condition {
            Some(c) => (c.noise.to_string(), Some(c.snr_db)),
            None => (p.item.name.clone(), None),
        };
        for &(mode, alg) in modes {
            let flags: Vec<bool> = detect(mode, &p.features.subbands, &p.posteriors, &settings).iter().map(|r| r.flag == 1).collect();
            let e = evaluate(&flags, &p.item.labels, &p.utterance_frames(), &settings.endpoint(), settings.utterance_tolerance as u64)?;
            match rows.iter_mut().find(|r| r.noise == noise && r.snr_db == snr_db && r.algorithm == alg) {
                Some(r) => r.eval.add(&e),
                None => rows.push(EvalRow { snr_db, noise: noise.clone(), algorithm: alg.into(), eval: e }),
            }
        }
    }
    let mut w = create(report)?;
    EvalReport { tolerance_frames: settings.utterance_tolerance as u64, rows }.write_tsv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn calibrate(dir: &Path, common: &Common, out: Option<&Path>) -> Result<(), CliError> {
    let settings = common.settings()?;
    let weights = common.weights()?;
    let data = load_prepared(dir, &settings, weights.as_ref())?;
    let items: Vec<CalibrationItem<'_>> =
        data.iter().map(|p| CalibrationItem { subbands: &p.features.subbands, posteriors: &p.posteriors, labels: &p.item.labels }).collect();
    let c = calibrate_thresholds(&items, &ThresholdGrid::default(), &settings)?;
    eprintln!("t_tau {}\tt_a {}\tgmm frame accuracy {:.4}", c.t_tau, c.t_a, c.gmm_accuracy);
    if let (Some(d), Some(f)) = (c.dnn_accuracy, c.fused_accuracy) {
        eprintln!("dnn_threshold {}\tdnn frame accuracy {d:.4}", c.dnn_threshold);
        eprintln!("fused t_tau {}\tt_a {}\tfused frame accuracy {f:.4}", c.fused_t_tau, c.fused_t_a);
    }
    let tuned = c.apply(settings.mode, &settings);
    let mut w = create(out.unwrap_or(Path::new("-")))?;
    w.write_all(tuned.to_toml_string().as_bytes())?;
    w.flush()?;
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Run { input, raw, common, segments_out, decisions_out, report, features_out, gmm_snapshot } => run(
            &input,
            raw,
            &common,
            segments_out.as_deref(),
            decisions_out.as_deref(),
            report.as_deref(),
            features_out.as_deref(),
            gmm_snapshot.as_deref(),
        ),
        Cmd::Train { list, out, config, seed } => train(&list, &out, config.as_deref(), seed),
        Cmd::Simulate { out, snr, noise, seed, utterances, noise_files, config } => {
            simulate(SimulateConfig { snrs: snr, noises: noise, seed, utterances }, &noise_files, config.as_deref(), &out)
        }
        Cmd::Eval { dir, report, common } => eval(&dir, &report, &common),
        Cmd::Calibrate { dir, common, out } => calibrate(&dir, &common, out.as_deref()),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vadfuse: {e}");
            ExitCode::FAILURE
        }
    }
}
