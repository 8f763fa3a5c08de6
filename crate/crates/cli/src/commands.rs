use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use sidu_core::demo::{demo_corpus, planted_patch_model, DemoLabel, CLASS_NAMES};
use sidu_core::maskgen::generate_masked_set;
use sidu_core::metrics::{compare_methods, InsertionBase, Substrate};
use sidu_core::model::adapter::{serve, ExternalModel};
use sidu_core::model::{load_model, model_hash, save_model};
use sidu_core::render::{colorize, overlay, Colormap};
use sidu_core::saliency::{export_map, MapSidecar};
use sidu_core::{imageio, Classifier, Explainer, MaskConfig, PerturbConfig, RiseConfig, SiduConfig, Tensor};
use sidu_study::{create_study, Study};

use crate::args::*;
use crate::manifest::{Run, RunManifest};

pub fn absolute(path: &Path) -> Result<PathBuf> {
    std::path::absolute(path).with_context(|| format!("resolving {}", path.display()))
}

struct LoadedModel {
    classifier: Box<dyn Classifier>,
    hash: Option<String>,
}

fn load_classifier(args: &ModelArgs) -> Result<LoadedModel> {
    match (&args.model, &args.adapter) {
        (Some(path), _) => {
            let spec = load_model(path)?;
            let hash = model_hash(&spec);
            Ok(LoadedModel {
                classifier: Box::new(spec),
                hash: Some(hash),
            })
        }
        (None, Some(cmd)) => {
            let mut parts = cmd.split_whitespace().map(str::to_string);
            let program = parts.next().ok_or_else(|| anyhow!("empty adapter command"))?;
            let rest: Vec<String> = parts.collect();
            Ok(LoadedModel {
                classifier: Box::new(ExternalModel::spawn(&program, &rest)?),
                hash: None,
            })
        }
        (None, None) => bail!("either --model or --adapter is required"),
    }
}

fn absolute_model(args: &ModelArgs) -> Result<ModelArgs> {
    Ok(ModelArgs {
        model: args.model.as_deref().map(absolute).transpose()?,
        adapter: args.adapter.clone(),
    })
}

fn absolute_input(args: &InputArgs) -> Result<InputArgs> {
    Ok(InputArgs {
        image: args.image.as_deref().map(absolute).transpose()?,
        images_dir: args.images_dir.as_deref().map(absolute).transpose()?,
    })
}

/// Image ids (file stems) paired with tensors shaped for `model`.
fn load_inputs(args: &InputArgs, model: &dyn Classifier) -> Result<Vec<(String, Tensor)>> {
    let paths: Vec<PathBuf> = match (&args.image, &args.images_dir) {
        (Some(p), _) => vec![p.clone()],
        (None, Some(dir)) => {
            let mut v: Vec<PathBuf> = fs::read_dir(dir)
                .with_context(|| format!("listing {}", dir.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    p.extension().is_some_and(|e| e == "png")
                        && p.file_stem().and_then(|s| s.to_str()).is_some_and(|s| !s.contains('.'))
                })
                .collect();
            v.sort();
            ensure!(!v.is_empty(), "no <id>.png images in {}", dir.display());
            v
        }
        (None, None) => bail!("either --image or --images-dir is required"),
    };
    let [c, h, w] = model.input_shape();
    paths
        .iter()
        .map(|p| {
            let id = p
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| anyhow!("unusable file name {}", p.display()))?
                .to_string();
            let img = imageio::load_image(p, c)?;
            ensure!(
                img.shape() == [c, h, w],
                "{} is {:?}, model expects [{c}, {h}, {w}]",
                p.display(),
                img.shape()
            );
            Ok((id, img))
        })
        .collect()
}

fn explainer(method: Method, p: &MethodArgs) -> Box<dyn Explainer> {
    match method {
        Method::Sidu => Box::new(SiduConfig {
            sigma: p.sigma,
            mask: MaskConfig { tau: p.tau },
        }),
        Method::Rise => Box::new(RiseConfig {
            mask_count: p.rise_masks,
            cell_grid: p.rise_grid,
            keep_prob: p.rise_keep,
            seed: p.seed,
        }),
    }
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn explain(args: &ExplainArgs) -> Result<RunManifest> {
    let args = ExplainArgs {
        model: absolute_model(&args.model)?,
        input: absolute_input(&args.input)?,
        out: absolute(&args.out)?,
        ..args.clone()
    };
    let loaded = load_classifier(&args.model)?;
    let model = loaded.classifier.as_ref();
    let images = load_inputs(&args.input, model)?;
    let method = explainer(args.method, &args.params);
    create_out(&args.out)?;
    let mut manifest = RunManifest::new(Run::Explain(args.clone()));
    let tag = args.method.tag();
    let cmap = Colormap::viridis();
    for (id, image) in &images {
        let map = method.explain_map(model, image)?;
        let mut extra = serde_json::Map::new();
        extra.insert("image_id".into(), id.clone().into());
        extra.insert("provider".into(), model.provider().into());
        extra.insert("params".into(), method.params());
        let sidu = args.method == Method::Sidu;
        let sidecar = MapSidecar {
            width: map.width(),
            height: map.height(),
            class_id: map.class_id,
            method_tag: tag.to_string(),
            sigma: sidu.then_some(args.params.sigma),
            tau: sidu.then_some(args.params.tau),
            extra,
        };
        let stem = format!("{id}.{tag}");
        export_map(&map, &sidecar, &args.out, &stem)?;
        let blended = overlay(image, &colorize(&map, &cmap), args.alpha)?;
        imageio::save_image(&blended, args.out.join(format!("{stem}.png")))?;
        manifest.outputs.extend(["f32", "json", "png"].map(|ext| format!("{stem}.{ext}")));
        manifest.image_ids.push(id.clone());
        log::info!("explained {id} with {tag}, class {}", map.class_id);
    }
    manifest.model_hash = loaded.hash;
    manifest.provider = Some(model.provider());
    let name = format!("manifest.{tag}.json");
    manifest.outputs.push(name.clone());
    manifest.write(&args.out.join(name))?;
    Ok(manifest)
}

pub fn eval(args: &EvalArgs) -> Result<RunManifest> {
    let args = EvalArgs {
        model: absolute_model(&args.model)?,
        input: absolute_input(&args.input)?,
        out: absolute(&args.out)?,
        ..args.clone()
    };
    ensure!(!args.methods.is_empty(), "--methods is empty");
    let loaded = load_classifier(&args.model)?;
    let model = loaded.classifier.as_ref();
    let images = load_inputs(&args.input, model)?;
    let explainers: Vec<Box<dyn Explainer>> = args.methods.iter().map(|&m| explainer(m, &args.params)).collect();
    let refs: Vec<&dyn Explainer> = explainers.iter().map(|e| e.as_ref()).collect();
    let cfg = PerturbConfig {
        step_fraction: args.step,
        deletion_substrate: match args.substrate {
            SubstrateArg::Mean => Substrate::ChannelMean,
            SubstrateArg::Zero => Substrate::Zero,
        },
        insertion_base: match args.insertion_base {
            BaseArg::Blur => InsertionBase::GaussianBlur { radius: args.blur_radius },
            BaseArg::Mean => InsertionBase::ChannelMean,
        },
    };
    let report = compare_methods(model, &images, &refs, &cfg)?;
    create_out(&args.out)?;
    let csv_path = args.out.join("report.csv");
    fs::write(&csv_path, report.to_csv()).with_context(|| format!("writing {}", csv_path.display()))?;
    let json_path = args.out.join("report.json");
    let body = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    fs::write(&json_path, body).with_context(|| format!("writing {}", json_path.display()))?;
    for s in &report.methods {
        println!(
            "{:<6} images {:>4}  insertion {:.5}  deletion {:.5}",
            s.method, s.image_count, s.mean_insertion_auc, s.mean_deletion_auc
        );
    }
    let mut manifest = RunManifest::new(Run::Eval(args.clone()));
    manifest.model_hash = loaded.hash;
    manifest.provider = Some(report.provider.clone());
    manifest.image_ids = images.into_iter().map(|(id, _)| id).collect();
    manifest.outputs = vec!["report.csv".into(), "report.json".into(), "manifest.json".into()];
    manifest.write(&args.out.join("manifest.json"))?;
    Ok(manifest)
}

#[derive(serde::Serialize)]
struct DemoLabels<'a> {
    seed: u64,
    class_names: [&'a str; 3],
    model_hash: &'a str,
    images: Vec<DemoLabel>,
}

pub fn make_demo(args: &MakeDemoArgs) -> Result<RunManifest> {
    let args = MakeDemoArgs {
        out: absolute(&args.out)?,
        ..args.clone()
    };
    let images_dir = args.out.join("images");
    create_out(&images_dir)?;
    let model = planted_patch_model(args.seed);
    save_model(&model, args.out.join("model.bin"))?;
    let hash = model_hash(&model);
    let corpus = demo_corpus(args.seed, args.count);
    let mut manifest = RunManifest::new(Run::MakeDemo(args.clone()));
    manifest.outputs.push("model.bin".into());
    for item in &corpus {
        let name = format!("images/{}.png", item.meta.id);
        imageio::save_image(&item.image, args.out.join(&name))?;
        manifest.outputs.push(name);
        manifest.image_ids.push(item.meta.id.clone());
    }
    let labels = DemoLabels {
        seed: args.seed,
        class_names: CLASS_NAMES,
        model_hash: &hash,
        images: corpus.into_iter().map(|d| d.meta).collect(),
    };
    let path = args.out.join("labels.json");
    fs::write(&path, serde_json::to_string_pretty(&labels).expect("labels serialize") + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    manifest.outputs.extend(["labels.json".into(), "manifest.json".into()]);
    manifest.provider = Some(model.provider());
    manifest.model_hash = Some(hash.clone());
    manifest.write(&args.out.join("manifest.json"))?;
    println!("{hash}");
    Ok(manifest)
}

pub fn masks(args: &MasksArgs) -> Result<RunManifest> {
    let args = MasksArgs {
        model: absolute_model(&args.model)?,
        image: absolute(&args.image)?,
        out: absolute(&args.out)?,
        ..args.clone()
    };
    let loaded = load_classifier(&args.model)?;
    let model = loaded.classifier.as_ref();
    let input = InputArgs {
        image: Some(args.image.clone()),
        images_dir: None,
    };
    let (id, image) = load_inputs(&input, model)?.remove(0);
    let set = generate_masked_set(model, &image, &MaskConfig { tau: args.tau })?;
    create_out(&args.out)?;
    let mut manifest = RunManifest::new(Run::Masks(args.clone()));
    for (i, mask) in set.masks.iter().enumerate() {
        let name = format!("{id}.mask_{i:03}.png");
        imageio::save_gray(mask.values(), mask.width(), mask.height(), args.out.join(&name))?;
        manifest.outputs.push(name);
    }
    manifest.model_hash = loaded.hash;
    manifest.provider = Some(model.provider());
    manifest.image_ids.push(id);
    manifest.outputs.push("manifest.json".into());
    manifest.write(&args.out.join("manifest.json"))?;
    Ok(manifest)
}

pub fn rerun(args: &RerunArgs) -> Result<RunManifest> {
    let recorded = RunManifest::read(&args.manifest)?;
    if recorded.tool_version != env!("CARGO_PKG_VERSION") {
        log::warn!(
            "manifest written by version {}, running {}",
            recorded.tool_version,
            env!("CARGO_PKG_VERSION")
        );
    }
    let fresh = match recorded.run {
        Run::Explain(mut a) => {
            a.out = args.out.clone().unwrap_or(a.out);
            explain(&a)?
        }
        Run::Eval(mut a) => {
            a.out = args.out.clone().unwrap_or(a.out);
            eval(&a)?
        }
        Run::MakeDemo(mut a) => {
            a.out = args.out.clone().unwrap_or(a.out);
            make_demo(&a)?
        }
        Run::Masks(mut a) => {
            a.out = args.out.clone().unwrap_or(a.out);
            masks(&a)?
        }
    };
    if recorded.model_hash.is_some() && fresh.model_hash != recorded.model_hash {
        bail!(
            "model changed since the recorded run: {} != {}",
            fresh.model_hash.unwrap_or_default(),
            recorded.model_hash.unwrap_or_default()
        );
    }
    Ok(fresh)
}

pub fn adapter(args: &AdapterArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let stdin = std::io::stdin().lock();
    let stdout = std::io::stdout().lock();
    serve(&model, stdin, stdout)?;
    Ok(())
}

pub fn study(cmd: &StudyCommand) -> Result<()> {
    match cmd {
        StudyCommand::Create(a) => {
            let maps = a.maps_dir.as_deref().unwrap_or(&a.images_dir);
            let manifest = create_study(&a.id, &a.images_dir, maps, &a.methods, a.seed, a.fixed_labels)?;
            manifest.save(&a.out)?;
            println!("study {} with {} items written to {}", a.id, manifest.items.len(), a.out.display());
        }
        StudyCommand::Tally(a) => {
            let t = Study::open(&a.study)?.tally()?;
            println!("{}", serde_json::to_string_pretty(&t).expect("tally serializes"));
        }
        StudyCommand::Serve(a) => {
            let studies = a.studies.iter().map(|d| Study::open(d)).collect::<Result<Vec<_>, _>>()?;
            let rt = tokio::runtime::Runtime::new().context("starting async runtime")?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(&a.addr)
                    .await
                    .with_context(|| format!("binding {}", a.addr))?;
                eprintln!("serving {} studies on http://{}", studies.len(), listener.local_addr()?);
                sidu_study::serve(listener, studies, a.admin_token.clone()).await?;
                anyhow::Ok(())
            })?;
        }
    }
    Ok(())
}
