//! One PASS/FAIL line per acceptance criterion. Runs as a plain binary so
//! the lines are always visible; exits non-zero if any criterion fails.

#[path = "../../core/tests/common/oracle.rs"]
mod oracle;

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sidu_core::demo::{demo_corpus, planted_patch_model, DEFAULT_IMAGE_COUNT, DEFAULT_SEED, IMAGE_SIZE, PATCH_SIZE};
use sidu_core::maskgen::{resize_bilinear, SoftMask};
use sidu_core::metrics::{auc, compare_methods, deletion_curve, insertion_curve};
use sidu_core::sidu::{combine_weights, compose_saliency, similarity_differences, uniqueness};
use sidu_core::{sidu, Classifier, Explainer, PerturbConfig, RiseConfig, ScoreVector, SiduConfig};

const SIGMAS: [f64; 3] = [0.1, 0.25, 0.5];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed < Duration::from_secs(limit_secs)
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SEED);
    let (mut worst, mut instances, mut max_maps) = (0.0f64, 0, 0);
    for _ in 0..60 {
        let model = oracle::random_model(&mut rng, 8);
        let image = oracle::random_image(&mut rng, model.input_shape());
        let ours = sidu::explain(&model, &image, &SiduConfig::default()).unwrap();
        let naive = oracle::sidu(&model, &image, 0.25, 0.5);
        max_maps = max_maps.max(ours.diagnostics.feature_count);
        for (a, b) in ours.saliency.values().iter().zip(&naive) {
            worst = worst.max((a - b).abs());
        }
        instances += 1;
    }
    let t = start.elapsed();
    outcome(
        instances >= 50 && max_maps <= 8 && worst <= 1e-9 && within(t, 60),
        format!("{instances} instances, N<=8 (max {max_maps}), max |diff| {worst:.2e} <= 1e-9, {:.1}s < 60s", t.as_secs_f64()),
    )
}

fn random_scores(rng: &mut ChaCha8Rng, k: usize) -> ScoreVector {
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.001..1.0)).collect();
    let z: f64 = raw.iter().sum();
    ScoreVector::new(raw.iter().map(|v| v / z).collect(), 1e-9).unwrap()
}

fn equation_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut failures = Vec::new();
    let mut cases = 0;
    for _ in 0..300 {
        let k = rng.gen_range(2..6);
        let n = rng.gen_range(1..9);
        let org = random_scores(&mut rng, k);
        let mut masked: Vec<ScoreVector> = (0..n).map(|_| random_scores(&mut rng, k)).collect();
        if rng.gen_bool(0.3) {
            masked[0] = org.clone();
        }
        let masks: Vec<SoftMask> = (0..n)
            .map(|_| SoftMask::new(5, 4, (0..20).map(|_| rng.gen::<f64>()).collect()).unwrap())
            .collect();
        for sigma in SIGMAS {
            cases += 1;
            let sd = similarity_differences(&org, &masked, sigma).unwrap();
            for (s, p) in sd.iter().zip(&masked) {
                if !(*s > 0.0 && *s <= 1.0) || ((*s == 1.0) != (p.probs() == org.probs())) {
                    failures.push(format!("SD {s} at sigma {sigma}"));
                }
            }
            let same = vec![org.clone(); n];
            if similarity_differences(&org, &same, sigma).unwrap().iter().any(|&s| s != 1.0) {
                failures.push("SD != 1 for identical scores".into());
            }
            if uniqueness(&same).iter().any(|&u| u != 0.0) || uniqueness(&masked[..1]) != vec![0.0] {
                failures.push("U != 0 for identical set or N = 1".into());
            }
            let u = uniqueness(&masked);
            let w = combine_weights(&sd, &u).unwrap();
            if w.iter().zip(sd.iter().zip(&u)).any(|(w, (s, u))| *w != s * u) {
                failures.push("W != SD*U".into());
            }
            let s = compose_saliency(&w, &masks, 0).unwrap();
            if s.values().iter().any(|&v| v < 0.0) {
                failures.push("negative saliency".into());
            }
            let perm: Vec<usize> = (0..n).rev().collect();
            let masked_p: Vec<ScoreVector> = perm.iter().map(|&i| masked[i].clone()).collect();
            let masks_p: Vec<SoftMask> = perm.iter().map(|&i| masks[i].clone()).collect();
            let w_p = combine_weights(&similarity_differences(&org, &masked_p, sigma).unwrap(), &uniqueness(&masked_p)).unwrap();
            let s_p = compose_saliency(&w_p, &masks_p, 0).unwrap();
            if s.values().iter().zip(s_p.values()).any(|(a, b)| (a - b).abs() > 1e-12 * a.abs().max(1.0)) {
                failures.push("saliency depends on mask order".into());
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{cases} cases over sigma {{0.1, 0.25, 0.5}}: SD in (0,1] and =1 iff identical, U=0, W=SD*U, S>=0, order-free; {} violations{}",
            failures.len(),
            failures.first().map(|f| format!(" (first: {f})")).unwrap_or_default()
        ),
    )
}

fn localization() -> Outcome {
    let start = Instant::now();
    let model = planted_patch_model(DEFAULT_SEED);
    let corpus = demo_corpus(DEFAULT_SEED, DEFAULT_IMAGE_COUNT);
    let area = (PATCH_SIZE * PATCH_SIZE) as f64 / (IMAGE_SIZE * IMAGE_SIZE) as f64;
    let threshold = 2.0 * area;
    let mut hits = 0;
    let mut lowest = f64::INFINITY;
    for item in &corpus {
        let s = sidu::explain(&model, &item.image, &SiduConfig::default()).unwrap().saliency;
        let frac = s.mass_fraction(|x, y| item.meta.patch.contains(x, y));
        lowest = lowest.min(frac);
        hits += usize::from(frac > threshold);
    }
    let t = start.elapsed();
    outcome(
        hits >= 18 && within(t, 120),
        format!(
            "{hits}/{} images with patch mass > {threshold:.4} (2x area {area:.4}), lowest {lowest:.3}, {:.1}s < 120s",
            corpus.len(),
            t.as_secs_f64()
        ),
    )
}

fn directional() -> Outcome {
    let start = Instant::now();
    let model = planted_patch_model(DEFAULT_SEED);
    let images: Vec<_> = demo_corpus(DEFAULT_SEED, DEFAULT_IMAGE_COUNT)
        .into_iter()
        .map(|d| (d.meta.id, d.image))
        .collect();
    let sidu_cfg = SiduConfig::default();
    let rise_cfg = RiseConfig {
        seed: DEFAULT_SEED,
        ..Default::default()
    };
    let methods: [&dyn Explainer; 2] = [&sidu_cfg, &rise_cfg];
    let cfg = PerturbConfig::default();
    let report = compare_methods(&model, &images, &methods, &cfg).unwrap();
    let s = report.summary("sidu").unwrap();
    let r = report.summary("rise").unwrap();
    let t = start.elapsed();
    let steps = (1.0 / cfg.step_fraction).round();
    outcome(
        s.mean_insertion_auc > r.mean_insertion_auc && s.mean_deletion_auc < r.mean_deletion_auc && within(t, 600),
        format!(
            "insertion {:.5} vs {:.5}, deletion {:.5} vs {:.5} (sidu vs rise, {} images, {steps} steps), {:.1}s < 600s",
            s.mean_insertion_auc,
            r.mean_insertion_auc,
            s.mean_deletion_auc,
            r.mean_deletion_auc,
            images.len(),
            t.as_secs_f64()
        ),
    )
}

fn metric_correctness() -> Outcome {
    let f: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
    let ones = auc(&f, &vec![1.0; f.len()]).unwrap();
    let ramp = auc(&f, &f).unwrap();
    let model = planted_patch_model(DEFAULT_SEED);
    let cfg = PerturbConfig::default();
    let rise = RiseConfig {
        mask_count: 500,
        seed: DEFAULT_SEED,
        ..Default::default()
    };
    let mut endpoint_runs = 0;
    let mut endpoints_ok = true;
    for item in demo_corpus(DEFAULT_SEED, 5) {
        let intact = model.infer(&item.image).unwrap().scores;
        let intact = intact.get(intact.argmax());
        let maps = [
            sidu::explain(&model, &item.image, &SiduConfig::default()).unwrap().saliency,
            sidu_core::rise::rise_explain(&model, &item.image, &rise).unwrap(),
        ];
        for map in &maps {
            let d = deletion_curve(&model, &item.image, map, &cfg).unwrap();
            let i = insertion_curve(&model, &item.image, map, &cfg).unwrap();
            endpoints_ok &= d.probs[0] == intact && *i.probs.last().unwrap() == intact;
            endpoint_runs += 1;
        }
    }
    outcome(
        ones == 1.0 && (ramp - 0.5).abs() <= 1e-9 && endpoints_ok,
        format!(
            "all-ones AUC {ones:?} == 1, ramp AUC |{ramp:?} - 0.5| <= 1e-9, deletion probs[0] and insertion probs[last] == intact on {endpoint_runs}/{endpoint_runs} runs: {endpoints_ok}"
        ),
    )
}

fn sidu_bin(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_sidu"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("sidu {args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

/// Byte-compares every file of `a` against `b`.
fn same_files(a: &Path, b: &Path, names: &[String]) -> Result<usize, String> {
    for name in names {
        if name.starts_with("manifest") {
            continue;
        }
        let x = fs::read(a.join(name)).map_err(|e| format!("{name}: {e}"))?;
        let y = fs::read(b.join(name)).map_err(|e| format!("{name}: {e}"))?;
        if x != y {
            return Err(format!("{name} differs"));
        }
    }
    Ok(names.len())
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let p = |s: &str| root.join(s).to_string_lossy().into_owned();
    let run = || -> Result<String, String> {
        sidu_bin(&["make-demo", "--out", &p("demo"), "--count", "4"])?;
        let sub = root.join("subset");
        fs::create_dir(&sub).map_err(|e| e.to_string())?;
        for id in ["demo_000", "demo_001"] {
            fs::copy(root.join(format!("demo/images/{id}.png")), sub.join(format!("{id}.png"))).map_err(|e| e.to_string())?;
        }
        let model = p("demo/model.bin");
        let commands: Vec<(Vec<String>, String)> = vec![
            (vec!["explain".into(), "--model".into(), model.clone(), "--images-dir".into(), p("subset"), "--out".into(), p("ex")], p("ex/manifest.sidu.json")),
            (vec!["explain".into(), "--model".into(), model.clone(), "--image".into(), p("subset/demo_000.png"), "--method".into(), "rise".into(), "--seed".into(), "3".into(), "--out".into(), p("exr")], p("exr/manifest.rise.json")),
            (vec!["eval".into(), "--model".into(), model.clone(), "--images-dir".into(), p("subset"), "--methods".into(), "sidu,rise".into(), "--rise-masks".into(), "400".into(), "--out".into(), p("ev")], p("ev/manifest.json")),
            (vec!["masks".into(), "--model".into(), model, "--image".into(), p("subset/demo_001.png"), "--out".into(), p("mk")], p("mk/manifest.json")),
        ];
        let mut compared = 0;
        let mut manifests = vec![p("demo/manifest.json")];
        for (args, manifest) in &commands {
            let args: Vec<&str> = args.iter().map(String::as_str).collect();
            sidu_bin(&args)?;
            manifests.push(manifest.clone());
        }
        for (i, manifest) in manifests.iter().enumerate() {
            let original = Path::new(manifest).parent().unwrap().to_path_buf();
            let recorded: serde_json::Value = serde_json::from_str(&fs::read_to_string(manifest).unwrap()).unwrap();
            let outputs: Vec<String> = recorded["outputs"]
                .as_array()
                .unwrap()
                .iter()
                .map(|v| v.as_str().unwrap().to_string())
                .collect();
            for jobs in ["1", "4"] {
                let again = root.join(format!("rerun_{i}_{jobs}"));
                sidu_bin(&["rerun", "--jobs", jobs, "--manifest", manifest, "--out", &again.to_string_lossy()])?;
                compared += same_files(&original, &again, &outputs)?;
            }
        }
        Ok(format!("{} manifests rerun with --jobs 1 and 4, {compared} output files bitwise identical", manifests.len()))
    };
    match run() {
        Ok(detail) => outcome(true, detail),
        Err(e) => outcome(false, e),
    }
}

fn bilinear_closed_form() -> Outcome {
    let (a, b, c, d) = (0.1, 0.7, 0.4, 0.9);
    let out = resize_bilinear(&[a, b, c, d], 2, 2, 4, 4).unwrap();
    // Half-pixel centers map outputs 0..4 to source coordinates -0.25, 0.25, 0.75, 1.25, clamped.
    let t = [0.0, 0.25, 0.75, 1.0];
    let mut worst = 0.0f64;
    for y in 0..4 {
        for x in 0..4 {
            let (fx, fy) = (t[x], t[y]);
            let expected = a * (1.0 - fx) * (1.0 - fy) + b * fx * (1.0 - fy) + c * (1.0 - fx) * fy + d * fx * fy;
            worst = worst.max((out[y * 4 + x] - expected).abs());
        }
    }
    outcome(worst <= 1e-6, format!("16/16 positions, max |diff| {worst:.2e} <= 1e-6"))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 7] = [
        ("oracle equivalence", oracle_equivalence),
        ("equation unit properties", equation_properties),
        ("planted-patch localization", localization),
        ("directional insertion/deletion ordering", directional),
        ("metric correctness", metric_correctness),
        ("rerun determinism across --jobs", determinism),
        ("bilinear 2x2 to 4x4 closed form", bilinear_closed_form),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        failed += usize::from(!o.pass);
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
