use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use fdif_core::detect::{self, BinaryMap, LogisticModel, PatchSet};
use fdif_core::direction::build_filter_bank;
use fdif_core::fracnn::conv_max_layer;
use fdif_core::{eval, fdif, fracnn, io, synth, Image};

use crate::args::{Engine, RunConfig};
use crate::UsageError;

const IMAGE_EXTENSIONS: &[&str] = &["png", "pgm", "pnm", "ppm", "pbm"];

/// Suffixes our own commands append, stripped when pairing files by stem.
const OUTPUT_SUFFIXES: &[&str] = &["_detect_prob", "_prob", "_detect", "_fdif"];

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

fn images_in(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading directory {}", dir.display()))? {
        let path = entry?.path();
        if path.is_file() && is_image(&path) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Expands directories into their image files, keeping explicit files as given.
fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            out.extend(images_in(p)?);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        bail!("no input images found");
    }
    Ok(out)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn pairing_key(path: &Path) -> String {
    let s = stem(path);
    for suffix in OUTPUT_SUFFIXES {
        if let Some(base) = s.strip_suffix(suffix) {
            if !base.is_empty() {
                return base.to_string();
            }
        }
    }
    s
}

fn is_prob(path: &Path) -> bool {
    stem(path).ends_with("_prob")
}

/// Keeps the input container for PNG/PGM inputs; everything else becomes PNG.
fn output_extension(input: &Path) -> &'static str {
    match io::OutputFormat::from_path(input) {
        io::OutputFormat::Pgm => "pgm",
        io::OutputFormat::Png => "png",
    }
}

/// One output path per input: the given file for a single non-directory
/// target, otherwise `<dir>/<stem><suffix>.<ext>`.
fn output_paths(inputs: &[PathBuf], output: &Path, suffix: &str, many: bool) -> Result<Vec<PathBuf>> {
    if !many && !output.is_dir() {
        if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        return Ok(vec![output.to_path_buf()]);
    }
    fs::create_dir_all(output).with_context(|| format!("creating {}", output.display()))?;
    Ok(inputs
        .iter()
        .map(|p| output.join(format!("{}{suffix}.{}", stem(p), output_extension(p))))
        .collect())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let ext = path.extension().map(|e| e.to_string_lossy().into_owned()).unwrap_or_else(|| "png".into());
    path.with_file_name(format!("{}{suffix}.{ext}", stem(path)))
}

fn read(path: &Path) -> Result<Image> {
    io::read_image(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, img: &Image) -> Result<()> {
    io::write_image(path, img).with_context(|| format!("writing {}", path.display()))
}

fn feature(img: &Image, cfg: &RunConfig) -> Result<Image> {
    Ok(match cfg.engine {
        Engine::Fdif => fdif::fdif_iterate(img, &cfg.fdif)?,
        Engine::Fracnn => fracnn::fracnn_forward(img, &cfg.fracnn)?,
    })
}

pub fn filter(inputs: &[PathBuf], output: &Path, cfg: &RunConfig) -> Result<()> {
    let many = inputs.len() > 1 || inputs.iter().any(|p| p.is_dir());
    let files = expand_inputs(inputs)?;
    let outs = output_paths(&files, output, "_fdif", many)?;
    for (src, dst) in files.iter().zip(&outs) {
        let out = feature(&read(src)?, cfg).with_context(|| format!("filtering {}", src.display()))?;
        write(dst, &out)?;
        println!("{} -> {}", src.display(), dst.display());
    }
    Ok(())
}

pub fn detect(inputs: &[PathBuf], output: &Path, model: Option<&Path>, cfg: &RunConfig) -> Result<()> {
    let model = match model {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Some(LogisticModel::parse(&text).with_context(|| format!("parsing model {}", p.display()))?)
        }
        None => None,
    };
    let many = inputs.len() > 1 || inputs.iter().any(|p| p.is_dir());
    let files = expand_inputs(inputs)?;
    let outs = output_paths(&files, output, "_detect", many)?;
    for (src, dst) in files.iter().zip(&outs) {
        let feat = feature(&read(src)?, cfg).with_context(|| format!("filtering {}", src.display()))?;
        let binary = match &model {
            Some(m) => {
                let prob = detect::predict_map(m, &feat)?;
                write(&with_suffix(dst, "_prob"), &prob)?;
                BinaryMap::from_image(&prob, 0.5)
            }
            None if cfg.otsu => detect::otsu_threshold(&feat),
            None => detect::fixed_threshold(&feat, cfg.threshold)?,
        };
        write(dst, &binary.to_image())?;
        println!("{} -> {} ({} curve pixels)", src.display(), dst.display(), binary.count_ones());
    }
    Ok(())
}

/// Pairs files of two directories by stem, ignoring our own output suffixes.
/// A probability map wins over a binary map of the same stem. Unpaired files
/// on either side are an error listing every orphan.
fn pair_dirs(left: &Path, right: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    let index = |dir: &Path| -> Result<BTreeMap<String, PathBuf>> {
        let mut map: BTreeMap<String, PathBuf> = BTreeMap::new();
        for p in images_in(dir)? {
            let key = pairing_key(&p);
            match map.get(&key) {
                None => {}
                // Supervised detect writes both maps; the probability map scores better.
                Some(prev) if is_prob(prev) != is_prob(&p) => {
                    if is_prob(prev) {
                        continue;
                    }
                }
                Some(prev) => bail!("{} and {} share the stem {key:?}", prev.display(), p.display()),
            }
            map.insert(key, p);
        }
        Ok(map)
    };
    let (a, mut b) = (index(left)?, index(right)?);
    let mut orphans: Vec<String> = Vec::new();
    let mut pairs = Vec::new();
    for (key, pa) in a {
        match b.remove(&key) {
            Some(pb) => pairs.push((key, pa, pb)),
            None => orphans.push(format!("{} (no match in {})", pa.display(), right.display())),
        }
    }
    orphans.extend(b.values().map(|p| format!("{} (no match in {})", p.display(), left.display())));
    if !orphans.is_empty() {
        bail!("unpaired files:\n  {}", orphans.join("\n  "));
    }
    if pairs.is_empty() {
        bail!("no images found in {} and {}", left.display(), right.display());
    }
    Ok(pairs)
}

/// Splits `total` as evenly as possible, earlier items taking the remainder.
fn shares(total: usize, parts: usize) -> Vec<usize> {
    (0..parts).map(|i| total / parts + usize::from(i < total % parts)).collect()
}

pub fn train(images: &Path, truth: &Path, output: &Path, cfg: &RunConfig) -> Result<()> {
    let pairs = pair_dirs(images, truth)?;
    let mut data = PatchSet::new(cfg.patch_side);
    for ((name, img_path, gt_path), n) in pairs.iter().zip(shares(cfg.patches, pairs.len())) {
        if n == 0 {
            continue;
        }
        let gt = io::read_binary_map(gt_path).with_context(|| format!("reading {}", gt_path.display()))?;
        let feat = feature(&read(img_path)?, cfg)?;
        let seed = cfg.seed.wrapping_add(data.len() as u64);
        let set = detect::sample_patches(&feat, &gt, cfg.patch_side, n, seed)
            .with_context(|| format!("sampling patches from {name}"))?;
        data.extend(&set)?;
    }
    let outcome = detect::train_logistic(&data, cfg.epochs, cfg.learning_rate)?;
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(output, outcome.model.to_text()).with_context(|| format!("writing {}", output.display()))?;
    let loss = outcome.losses.last().copied().unwrap_or(f64::NAN);
    println!(
        "trained on {} patches from {} images: loss {loss:.6}, accuracy {:.4}",
        data.len(),
        pairs.len(),
        outcome.model.accuracy(&data)
    );
    println!("model written to {}", output.display());
    Ok(())
}

pub fn evaluate(pred: &Path, truth: &Path, json: Option<&Path>, cfg: &RunConfig) -> Result<()> {
    let pairs = pair_dirs(pred, truth)?;
    let thresholds = eval::default_thresholds();
    let mut names = Vec::new();
    let mut curves = Vec::new();
    let mut mismatched = Vec::new();
    for (name, p, g) in &pairs {
        let prob = read(p)?;
        let gt = io::read_binary_map(g).with_context(|| format!("reading {}", g.display()))?;
        if prob.shape() != gt.shape() {
            mismatched.push(format!(
                "{name}: prediction {}x{} vs truth {}x{}",
                prob.width(),
                prob.height(),
                gt.width(),
                gt.height()
            ));
            continue;
        }
        curves.push(eval::pr_curve(&prob, &gt, &thresholds, cfg.dmax)?);
        names.push(name.clone());
    }
    if !mismatched.is_empty() {
        bail!("shape mismatch:\n  {}", mismatched.join("\n  "));
    }
    let metrics = eval::dataset_metrics(&curves)?;
    print!("{}", eval::metrics_table(&metrics, &names));
    if let Some(path) = json {
        let text = serde_json::to_string_pretty(&eval::metrics_json(&metrics, &names, cfg.dmax))?;
        fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

pub fn stylize(input: &Path, output: &Path, cfg: &RunConfig) -> Result<()> {
    let img = read(input)?;
    let out = fdif::stylize(&img, &cfg.fdif)?;
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    write(output, &out)?;
    println!(
        "{} -> {} (mean {:.4} -> {:.4})",
        input.display(),
        output.display(),
        img.mean(),
        io::quantized(&out).mean()
    );
    Ok(())
}

pub fn bench(size: usize, repeats: usize, cfg: &RunConfig) -> Result<()> {
    if size == 0 || repeats == 0 {
        return Err(UsageError("size and repeats must be positive".into()).into());
    }
    let side = cfg.fracnn.bank.side();
    let img = synth::texture(size, size, 0.5, 0.8, cfg.seed);
    let time = |n: usize| -> Result<f64> {
        let bank = build_filter_bank(n, side)?;
        Ok((0..repeats)
            .map(|_| {
                let t = Instant::now();
                std::hint::black_box(conv_max_layer(&img, &bank));
                t.elapsed().as_secs_f64()
            })
            .fold(f64::INFINITY, f64::min))
    };
    let (t15, t30) = (time(15)?, time(30)?);
    println!("max-response layer, {size}x{size}, kernel side {side}, best of {repeats}");
    println!("N=15  {t15:.4} s");
    println!("N=30  {t30:.4} s");
    println!("ratio {:.3}", t30 / t15);
    Ok(())
}
