//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line
//! with the measured quantity, then asserts.

#[path = "../../core/tests/common/mod.rs"]
mod core_common;
mod common;

use std::io::{Cursor, Write};
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use core_common::fixtures::{model_fd_max_rel_err, random_image, random_mask, random_params, tiny_config};
use core_common::rng;
use core_common::vit_ref::vit_logits;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::Rng;
use sgt_cli::{
    cmd_ablate, cmd_eval, cmd_gen, cmd_train, AblateOptions, EvalOptions, EvalReport, ExperimentConfig, GenOptions,
    TrainOptions, CHECKPOINT_FILE,
};
use sgt_core::datagen::image_io::{decode_f64, decode_pnm, encode_f64, encode_pnm, Image};
use sgt_core::datagen::{read_manifest, write_manifest, ManifestRow, Split};
use sgt_core::model::{train, MaskMode, SgtConfig, SgtModel, SgtParams, TrainConfig, TrainItem};
use sgt_core::numerics::{checkpoint, Tensor};
use sgt_core::saliency::{cc, kld, nss, top_m_mask, FixationRecord, SaliencyGrid, SaliencyMap};

/// Writes through the raw stdout handle so the line survives the test
/// harness's output capture.
fn report(n: u32, name: &str, ok: bool, detail: String) {
    let line = format!("criterion {n} [{}] {name}: {detail}\n", if ok { "PASS" } else { "FAIL" });
    std::io::stdout().lock().write_all(line.as_bytes()).unwrap();
    assert!(ok, "criterion {n} failed: {detail}");
}

#[test]
fn criterion_1_gradient_soundness() {
    let start = Instant::now();
    let mut cfg = tiny_config(16, 4, 8, 3, 2, 6);
    cfg.mask_mode = MaskMode::Distill;
    cfg.reinjection = true;
    assert_eq!(cfg.num_patches(), 16);
    let mut worst: f64 = 0.0;
    for seed in 0..3 {
        let params = random_params(&cfg, 100 + seed, 0.3);
        let image = random_image(&mut rng(200 + seed), &cfg);
        let mask = random_mask(&mut rng(300 + seed), 16, 6);
        let label = seed as usize % cfg.num_classes;
        worst = worst.max(model_fd_max_rel_err(&cfg, &params, &image, label, Some(&mask), 1e-5));
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        1,
        "gradient soundness",
        worst < 1e-4 && secs < 60.0,
        format!("max relative error {worst:.2e} over 3 seeds (< 1e-4), {secs:.1} s (< 60 s)"),
    );
}

#[test]
fn criterion_2_baseline_degeneration() {
    let cfg = SgtConfig::default().baseline();
    let params = random_params(&cfg, 7, 0.2);
    let mut r = rng(8);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let image = random_image(&mut r, &cfg);
        let ours = SgtModel {
            config: cfg.clone(),
            params: params.clone(),
        }
        .logits(&image)
        .unwrap();
        let reference = vit_logits(&cfg, &params, &image);
        for (a, b) in ours.iter().zip(&reference) {
            worst = worst.max((a - b).abs());
        }
    }
    report(
        2,
        "baseline degeneration",
        worst < 1e-10,
        format!("max |logit diff| {worst:.2e} on 20 inputs (< 1e-10)"),
    );
}

/// Values from a small alphabet so that ties are common.
fn grid_values() -> impl Strategy<Value = (Vec<f64>, usize)> {
    (1usize..=64).prop_flat_map(|n| {
        (
            prop::collection::vec(prop_oneof![(0u8..6).prop_map(|k| f64::from(k) / 5.0), 0.0f64..1.0], n),
            1..=n,
        )
    })
}

#[test]
fn criterion_3_mask_algebra() {
    let cases = 10_000;
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    let result = runner.run(&(grid_values(), any::<u64>(), 0.0f64..1.0), |((v, m), seed, bump)| {
        let n = v.len();
        let mask = top_m_mask(&SaliencyGrid::new(1, n, v.clone()).unwrap(), m).unwrap();
        // exact count
        prop_assert_eq!(mask.keep_count(), m);
        prop_assert_eq!(mask.bits().iter().filter(|&&b| b).count(), m);
        // tie rule: every kept cell outranks every dropped cell, ties by lower index
        for &i in mask.kept_indices() {
            for j in (0..n).filter(|&j| !mask.is_kept(j)) {
                prop_assert!(v[i] > v[j] || (v[i] == v[j] && i < j));
            }
        }
        // permutation: distinct values travel with their cells
        let distinct: Vec<f64> = v.iter().enumerate().map(|(i, x)| x + i as f64 * 1e-9).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let a = top_m_mask(&SaliencyGrid::new(1, n, distinct.clone()).unwrap(), m).unwrap();
        let permuted: Vec<f64> = perm.iter().map(|&p| distinct[p]).collect();
        let b = top_m_mask(&SaliencyGrid::new(1, n, permuted).unwrap(), m).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            prop_assert_eq!(b.is_kept(i), a.is_kept(p));
        }
        // monotonicity: raising a kept cell keeps it, lowering a dropped cell drops it
        let i = mask.kept_indices()[(seed as usize) % m];
        let mut up = v.clone();
        up[i] += bump;
        prop_assert!(top_m_mask(&SaliencyGrid::new(1, n, up).unwrap(), m).unwrap().is_kept(i));
        if let Some(j) = (0..n).find(|&j| !mask.is_kept(j)) {
            let mut down = v.clone();
            down[j] *= 1.0 - bump;
            prop_assert!(!top_m_mask(&SaliencyGrid::new(1, n, down).unwrap(), m).unwrap().is_kept(j));
        }
        Ok(())
    });
    report(
        3,
        "mask algebra",
        result.is_ok(),
        match result {
            Ok(()) => format!("{cases} random cases: count, tie rule, permutation, monotonicity"),
            Err(e) => format!("{e}"),
        },
    );
}

/// Fraction of masked batches over `epochs * 8` batches at threshold `t`.
fn masked_fraction(t: f64, epochs: usize) -> (f64, usize) {
    let mut cfg = tiny_config(8, 4, 4, 1, 1, 2);
    cfg.guidance_threshold = t;
    let mut model = SgtModel::new(cfg.clone()).unwrap();
    let mut r = rng(5);
    let items: Vec<TrainItem> = (0..16)
        .map(|i| TrainItem {
            image: random_image(&mut r, &cfg),
            label: i % cfg.num_classes,
            mask: Some(random_mask(&mut r, cfg.num_patches(), cfg.keep_count)),
        })
        .collect();
    let tc = TrainConfig {
        epochs,
        batch_size: 2,
        warmup_epochs: 1,
        base_lr: 1e-4,
        seed: 11,
        ..TrainConfig::default()
    };
    let out = train(&mut model, &items, &tc, |_| {}).unwrap();
    (out.masked_batches as f64 / out.total_batches as f64, out.total_batches)
}

#[test]
fn criterion_6_random_guidance() {
    let (f0, n) = masked_fraction(0.0, 64);
    let (f5, _) = masked_fraction(0.5, 64);
    let (f1, _) = masked_fraction(1.0, 64);
    let ok = n >= 500 && f0 == 1.0 && (f5 - 0.5).abs() <= 0.1 && f1 == 0.0;
    report(
        6,
        "random guidance",
        ok,
        format!("masked fraction over {n} batches: T=0 -> {f0}, T=0.5 -> {f5:.3}, T=1 -> {f1}"),
    );
}

fn brute_kld(p: &[f64], q: &[f64]) -> f64 {
    let (sp, sq): (f64, f64) = (p.iter().sum(), q.iter().sum());
    let mut total = 0.0;
    for i in 0..p.len() {
        let (pi, qi) = (p[i] / sp, q[i] / sq);
        total += qi * (1e-7 + qi / (pi + 1e-7)).ln();
    }
    total
}

fn brute_cc(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for i in 0..a.len() {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    sab / (saa * sbb).sqrt()
}

fn brute_nss(map: &[f64], w: usize, pts: &[(usize, usize)]) -> f64 {
    let n = map.len() as f64;
    let mean = map.iter().sum::<f64>() / n;
    let sd = (map.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    pts.iter().map(|&(r, c)| (map[r * w + c] - mean) / sd).sum::<f64>() / pts.len() as f64
}

#[test]
fn criterion_7_saliency_metrics() {
    let mut r = rng(77);
    let mut worst_self: f64 = f64::NEG_INFINITY;
    let mut worst_affine: f64 = 0.0;
    let mut worst_shift: f64 = 0.0;
    let mut worst_brute: f64 = 0.0;
    for _ in 0..100 {
        let a: Vec<f64> = (0..64).map(|_| r.random_range(0.0..1.0)).collect();
        let b: Vec<f64> = (0..64).map(|_| r.random_range(0.0..1.0)).collect();
        let pa = SaliencyMap::new(8, 8, a.clone()).unwrap();
        let pb = SaliencyMap::new(8, 8, b.clone()).unwrap();
        worst_self = worst_self.max(kld(&pa, &pa).unwrap());

        let (s, t) = (r.random_range(0.1..10.0), r.random_range(0.0..5.0));
        let moved = SaliencyMap::new(8, 8, a.iter().map(|v| s * v + t).collect()).unwrap();
        worst_affine = worst_affine.max((cc(&moved, &pb).unwrap() - cc(&pa, &pb).unwrap()).abs());

        let pts: Vec<(usize, usize)> = (0..5).map(|_| (r.random_range(0..8), r.random_range(0..8))).collect();
        let fixes: Vec<FixationRecord> =
            pts.iter().map(|&(row, col)| FixationRecord::new("x", col as f64 + 0.5, row as f64 + 0.5, 100.0)).collect();
        let shifted = SaliencyMap::new(8, 8, a.iter().map(|v| v + t).collect()).unwrap();
        worst_shift = worst_shift.max((nss(&shifted, &fixes).unwrap() - nss(&pa, &fixes).unwrap()).abs());

        worst_brute = worst_brute
            .max((kld(&pa, &pb).unwrap() - brute_kld(&a, &b)).abs())
            .max((cc(&pa, &pb).unwrap() - brute_cc(&a, &b)).abs())
            .max((nss(&pa, &fixes).unwrap() - brute_nss(&a, 8, &pts)).abs());
    }
    let ok = worst_self <= 1e-6 && worst_affine <= 1e-12 && worst_shift <= 1e-9 && worst_brute <= 1e-9;
    report(
        7,
        "saliency metrics",
        ok,
        format!(
            "max kld(P,P) {worst_self:.2e}, cc affine drift {worst_affine:.2e}, nss shift drift {worst_shift:.2e}, brute-force gap {worst_brute:.2e} (100 pairs)"
        ),
    );
}

#[test]
fn criterion_8_ablation_parity() {
    let tmp = tempfile::tempdir().unwrap();
    let data = common::gen_dataset(&tmp.path().join("data"), &common::tiny_spec(24, 12));
    let cfg = common::tiny_experiment(&data, 3);
    let run = tmp.path().join("run");
    cmd_train(
        &TrainOptions {
            config: cfg.clone(),
            out: run.clone(),
            force: false,
        },
        |_| {},
    )
    .unwrap();
    let direct = cmd_eval(&EvalOptions {
        checkpoint: run.join(CHECKPOINT_FILE),
        ..EvalOptions::default()
    })
    .unwrap();
    let rows = cmd_ablate(
        &AblateOptions {
            config: cfg,
            out: tmp.path().join("sweep"),
            force: false,
            jobs: Some(1),
            kappa: None,
        },
        |_, _| {},
    )
    .unwrap();
    let back = sgt_cli::read_summary(&tmp.path().join("sweep").join(sgt_cli::SUMMARY_FILE)).unwrap();
    let row = &back[0];
    let same = |a: f64, b: f64| a.to_bits() == b.to_bits();
    let ok = rows.len() == 1
        && same(row.accuracy, direct.accuracy)
        && row.auc.map(f64::to_bits) == direct.auc.map(f64::to_bits)
        && same(row.macro_f1, direct.macro_f1)
        && same(row.psl_gradcam, direct.psl_gradcam)
        && same(row.psl_rollout, direct.psl_rollout);
    report(
        8,
        "ablation harness parity",
        ok,
        format!(
            "csv acc/auc/f1/psl {}/{:?}/{}/{} vs eval {}/{:?}/{}/{}",
            row.accuracy, row.auc, row.macro_f1, row.psl_gradcam, direct.accuracy, direct.auc, direct.macro_f1, direct.psl_gradcam
        ),
    );
}

#[test]
fn criterion_9_format_round_trips() {
    let cases = 1000;
    let mut r = rng(99);
    let mut failures = Vec::new();
    for case in 0..cases {
        let (h, w) = (r.random_range(1..20), r.random_range(1..20));
        let channels = if r.random_bool(0.5) { 1 } else { 3 };
        let pixels: Vec<f64> = (0..h * w * channels).map(|_| f64::from(r.random::<u8>()) / 255.0).collect();
        let img = Image::new(h, w, channels, pixels).unwrap();
        if decode_pnm(&encode_pnm(&img).unwrap()).unwrap() != img {
            failures.push(format!("pnm case {case}"));
        }

        let raw: Vec<f64> = (0..h * w).map(|_| f64::from_bits(r.random::<u64>() >> 2)).collect();
        let (h2, w2, back) = decode_f64(&encode_f64(h, w, &raw).unwrap()).unwrap();
        if (h2, w2) != (h, w) || back.iter().zip(&raw).any(|(a, b)| a.to_bits() != b.to_bits()) {
            failures.push(format!("f64 case {case}"));
        }

        let tensors: Vec<(String, Tensor)> = (0..r.random_range(1..5))
            .map(|k| {
                let shape: Vec<usize> = (0..r.random_range(1..4)).map(|_| r.random_range(1..5)).collect();
                let n = shape.iter().product();
                (format!("t{k}.weight"), Tensor::new(shape, (0..n).map(|_| r.random_range(-3.0..3.0)).collect()).unwrap())
            })
            .collect();
        let mut buf = Vec::new();
        checkpoint::write_to(&mut buf, &tensors).unwrap();
        if checkpoint::read_from(Cursor::new(&buf)).unwrap() != tensors {
            failures.push(format!("checkpoint case {case}"));
        }

        let rows: Vec<ManifestRow> = (0..r.random_range(1..6))
            .map(|id| {
                let rel: Vec<String> = (0..r.random_range(1..6)).map(|_| r.random_range(0..64usize).to_string()).collect();
                ManifestRow {
                    sample_id: id,
                    label: r.random_range(0..4),
                    background_id: r.random_range(0..4),
                    image_path: format!("images/{id:05}.pgm"),
                    saliency_path: format!("saliency/{id:05}.f64"),
                    relevant_patches: rel.join(";"),
                }
            })
            .collect();
        let mut buf = Vec::new();
        write_manifest(&mut buf, &rows, 4.0).unwrap();
        if read_manifest(Cursor::new(&buf)).unwrap() != rows {
            failures.push(format!("manifest case {case}"));
        }
    }
    // model checkpoints carry names and shapes through the parameter table
    let cfg = tiny_config(8, 4, 8, 2, 2, 2);
    let params = random_params(&cfg, 3, 0.5);
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("m.ckpt");
    params.save(&path).unwrap();
    if SgtParams::load(&path, &cfg).unwrap() != params {
        failures.push("model checkpoint".into());
    }
    report(
        9,
        "format round-trips",
        failures.is_empty(),
        format!("{cases} random PGM/PPM, .f64, SGTCKPT1 and manifest cases; failures: {failures:?}"),
    );
}

// ---- desk-scale SpurShapes protocol shared by criteria 4 and 5 ----------------------

const SEEDS: [u64; 3] = [0, 1, 2];

struct Run {
    iid: EvalReport,
    ood: EvalReport,
}

struct Protocol {
    sgt: Vec<Run>,
    base: Vec<Run>,
}

fn run_model(root: &Path, data: &Path, seed: u64, baseline: bool) -> Run {
    let cfg = ExperimentConfig {
        dataset: data.to_path_buf(),
        ..ExperimentConfig::default()
    }
    .resolve(Some(seed), baseline)
    .unwrap();
    let name = if baseline { "base" } else { "sgt" };
    let out = root.join(format!("{name}_{seed}"));
    let start = Instant::now();
    cmd_train(
        &TrainOptions {
            config: cfg,
            out: out.clone(),
            force: true,
        },
        |r| eprintln!("{name} seed {seed} epoch {} loss {:.4} acc {:.3}", r.epoch, r.train_loss, r.train_acc),
    )
    .unwrap();
    let eval = |split| {
        cmd_eval(&EvalOptions {
            checkpoint: out.join(CHECKPOINT_FILE),
            split: Some(split),
            ..EvalOptions::default()
        })
        .unwrap()
    };
    let run = Run {
        iid: eval(Split::IidTest),
        ood: eval(Split::OodTest),
    };
    let line = format!(
        "  {name} seed {seed}: iid acc {:.3}, ood acc {:.3}, ood psl gradcam {:.3} rollout {:.3} ({:.0} s)\n",
        run.iid.accuracy,
        run.ood.accuracy,
        run.ood.psl_gradcam,
        run.ood.psl_rollout,
        start.elapsed().as_secs_f64()
    );
    std::io::stdout().lock().write_all(line.as_bytes()).unwrap();
    run
}

fn protocol() -> &'static Protocol {
    static P: OnceLock<Protocol> = OnceLock::new();
    P.get_or_init(|| {
        let tmp = tempfile::tempdir().unwrap();
        let mut sgt = Vec::new();
        let mut base = Vec::new();
        for seed in SEEDS {
            let data = tmp.path().join(format!("data_{seed}"));
            cmd_gen(&GenOptions {
                spec: None,
                out: data.clone(),
                seed: Some(seed),
                force: true,
            })
            .unwrap();
            sgt.push(run_model(tmp.path(), &data, seed, false));
            base.push(run_model(tmp.path(), &data, seed, true));
        }
        Protocol { sgt, base }
    })
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn criterion_4_shortcut_rectification() {
    let p = protocol();
    let sgt_ood = mean(p.sgt.iter().map(|r| r.ood.accuracy));
    let base_ood = mean(p.base.iter().map(|r| r.ood.accuracy));
    let min_iid = p.sgt.iter().chain(&p.base).map(|r| r.iid.accuracy).fold(f64::INFINITY, f64::min);
    let ok = sgt_ood >= base_ood + 0.15 && min_iid >= 0.95;
    report(
        4,
        "shortcut rectification",
        ok,
        format!(
            "mean ood acc SGT {sgt_ood:.3} vs ViT {base_ood:.3} (gap {:+.3}, need >= +0.15); min iid acc {min_iid:.3} (need >= 0.95)",
            sgt_ood - base_ood
        ),
    );
}

#[test]
fn criterion_5_psl_reduction() {
    let p = protocol();
    let sg = mean(p.sgt.iter().map(|r| r.ood.psl_gradcam));
    let bg = mean(p.base.iter().map(|r| r.ood.psl_gradcam));
    let sr = mean(p.sgt.iter().map(|r| r.ood.psl_rollout));
    let br = mean(p.base.iter().map(|r| r.ood.psl_rollout));
    let kappa_ok = p.sgt.iter().chain(&p.base).all(|r| r.ood.kappa == 1.0);
    let ok = kappa_ok && sg <= bg - 0.10 && sr <= br - 0.10;
    report(
        5,
        "PSL reduction",
        ok,
        format!("mean ood PSL Grad-CAM SGT {sg:.3} vs ViT {bg:.3}; rollout SGT {sr:.3} vs ViT {br:.3} (need SGT <= ViT - 0.10 for both)"),
    );
}

