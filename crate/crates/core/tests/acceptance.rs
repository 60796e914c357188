//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any gating criterion fails. Criterion 8 is advisory and runs
//! only when `DRC_CIFAR_DIR` points at the CIFAR-10 binary batches.

mod common;

use std::process::Command;
use std::time::{Duration, Instant};

use common::{brute_force_acc, gradcheck, lloyd_restarts, random_matrix, random_simplex, rng};
use drc::config::{DataSource, Generator, RunConfig};
use drc::data::load_cifar10_binary;
use drc::losses::{af_loss, ap_loss, cr_loss, info_nce, total_loss, Ablation, LossParams};
use drc::metrics::{acc, ari, nmi};
use drc::mioracle::{check_system, contrastive_bound, make_kernel, random_system};
use drc::runner::{run_trials, RunReport};
use drc::{Graph, Tensor};
use rand::Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn scalar(f: impl FnOnce(&mut Graph) -> drc::Var) -> f64 {
    let mut g = Graph::new();
    let v = f(&mut g);
    g.value(v).item()
}

fn c1_gradients() -> Verdict {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let mut r = rng(seed);
        let n = r.random_range(2..=8);
        let k = r.random_range(2..=5);
        let z = random_matrix(&mut r, n, k, 2.0);
        let za = random_matrix(&mut r, n, k, 2.0);
        let both = [z.clone(), za.clone()];
        worst = worst.max(gradcheck(&both, 1e-5, |g, v| {
            af_loss(g, v[0], v[1], 0.5, true)
        }));
        worst = worst.max(gradcheck(&both, 1e-5, |g, v| {
            let (p, pa) = (g.softmax_rows(v[0])?, g.softmax_rows(v[1])?);
            ap_loss(g, p, pa, 0.95)
        }));
        worst = worst.max(gradcheck(&[z], 1e-5, |g, v| {
            let p = g.softmax_rows(v[0])?;
            cr_loss(g, p)
        }));
        worst = worst.max(gradcheck(&both, 1e-5, |g, v| {
            let (p, pa) = (g.softmax_rows(v[0])?, g.softmax_rows(v[1])?);
            Ok(total_loss(g, v[0], v[1], p, pa, &LossParams::default())?.total)
        }));
    }
    let t = start.elapsed();
    verdict(
        worst <= 1e-4 && t < Duration::from_secs(10),
        format!("worst relative error {worst:.2e} over 20 seeds, {t:.2?}"),
    )
}

fn c2_contrastive_bound() -> Verdict {
    let start = Instant::now();
    let mut r = rng(2024);
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    let mut scale_err: f64 = 0.0;
    let systems = 1000;
    for _ in 0..systems {
        let sys = random_system(&mut r, 6);
        let c = check_system(&sys).expect("valid system");
        if c.gap < -1e-9 {
            violations += 1;
        }
        worst = worst.min(c.gap);
        let scales: Vec<f64> = (0..sys.n()).map(|_| r.random_range(0.1..10.0)).collect();
        let scaled = make_kernel(&sys, &scales).unwrap();
        let b = contrastive_bound(&sys, &scaled, sys.min_diagonal()).unwrap();
        scale_err = scale_err.max((b - c.bound).abs());
    }
    let t = start.elapsed();
    verdict(
        violations == 0 && scale_err <= 1e-10 && t < Duration::from_secs(10),
        format!(
            "{violations}/{systems} systems with MI below the bound (worst gap {worst:.4}); \
             rescaling error {scale_err:.1e}; {t:.2?}"
        ),
    )
}

fn c3_loss_extremes() -> Verdict {
    let cr = |p: Tensor| {
        scalar(|g| {
            let v = g.constant(p);
            cr_loss(g, v).unwrap()
        })
    };
    let balanced =
        cr(Tensor::from_rows(&[[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]]).unwrap());
    let collapsed = cr(Tensor::from_rows(&[[1.0, 0.0]; 4]).unwrap());
    let mut r = rng(3);
    let mut min = f64::INFINITY;
    for _ in 0..10_000 {
        min = min.min(cr(random_simplex(&mut r, 50, 5)));
    }
    let mut nce_err: f64 = 0.0;
    for n in 1..=8 {
        for c in [-3.0, 0.0, 2.5] {
            let l = scalar(|g| {
                let v = g.constant(Tensor::full(n, n, c));
                info_nce(g, v, 0.5).unwrap()
            });
            nce_err = nce_err.max((l - (n as f64).ln()).abs());
        }
    }
    verdict(
        balanced == 2.0 && collapsed == 4.0 && min >= 10.0 - 1e-9 && nce_err <= 1e-12,
        format!(
            "cr balanced {balanced}, collapsed {collapsed}, random min {min:.6} (N/K = 10); \
             info_nce vs log N error {nce_err:.1e}"
        ),
    )
}

fn c4_metric_oracles() -> Verdict {
    let mut r = rng(4);
    let mut mismatches = 0;
    for _ in 0..100 {
        let k = r.random_range(1..=6);
        let n = r.random_range(1..80);
        let truth: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        let pred: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        if acc(&pred, &truth, k).unwrap() != brute_force_acc(&pred, &truth, k) {
            mismatches += 1;
        }
    }
    let (p, t) = ([0, 0, 1, 1], [0, 1, 0, 1]);
    let m = nmi(&p, &t).unwrap();
    let a = ari(&p, &t).unwrap();
    verdict(
        mismatches == 0 && m.abs() <= 1e-12 && (a + 0.5).abs() <= 1e-12,
        format!("{mismatches}/100 ACC mismatches vs enumeration; fixture NMI {m:.3e}, ARI {a}"),
    )
}

fn blobs_config(ablation: Ablation) -> RunConfig {
    let mut cfg = RunConfig {
        data: Some(DataSource::Generated(Generator::Blobs)),
        standardize: true,
        hidden: vec![64],
        noise_sigma: Some(0.5),
        trials: 5,
        ..Default::default()
    };
    cfg.train.k = 4;
    cfg.train.epochs = 200;
    cfg.train.ablation = ablation;
    cfg
}

fn run(cfg: &RunConfig) -> (RunReport, Duration) {
    let start = Instant::now();
    let data = cfg.load_dataset().expect("blobs");
    let report = run_trials(cfg, &data, |_| {}).expect("training").report;
    (report, start.elapsed())
}

fn accs(r: &RunReport) -> Vec<f64> {
    r.trials
        .iter()
        .map(|t| t.scores.expect("labeled").acc)
        .collect()
}

fn fmt_accs(v: &[f64]) -> String {
    v.iter()
        .map(|a| format!("{a:.3}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn c5_end_to_end(full: &RunReport, t: Duration) -> Verdict {
    let (mean, best) = (full.mean.unwrap().acc, full.best.unwrap().acc);
    verdict(
        mean >= 0.95 && best >= 0.98 && t < Duration::from_secs(300),
        format!(
            "ACC per seed [{}], mean {mean:.4}, best {best:.4}, {t:.1?}",
            fmt_accs(&accs(full))
        ),
    )
}

fn c6_ablation(full: &RunReport) -> Verdict {
    let (no_ap, _) = run(&blobs_config(Ablation {
        disable_ap: true,
        ..Default::default()
    }));
    let (no_cr, _) = run(&blobs_config(Ablation {
        disable_cr: true,
        ..Default::default()
    }));
    let (f, a) = (accs(full), accs(&no_ap));
    let wins = f.iter().zip(&a).filter(|(x, y)| x >= y).count();
    let max_share = no_cr
        .trials
        .iter()
        .map(|t| t.max_cluster_share)
        .fold(0.0, f64::max);
    let (mf, mc) = (full.mean.unwrap().acc, no_cr.mean.unwrap().acc);
    let ap_ok = wins >= 4;
    let cr_ok = max_share >= 0.5 || mc < mf;
    verdict(
        ap_ok && cr_ok,
        format!(
            "full >= w/o AP in {wins}/5 seeds (w/o AP [{}]); w/o CR max share {max_share:.3}, \
             mean ACC {mc:.4} vs full {mf:.4}",
            fmt_accs(&a)
        ) + if cr_ok { "" } else { " (no collapse symptom)" },
    )
}

fn c7_determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "\
data.generator = blobs
data.standardize = true
model.hidden = 64
train.k = 4
train.epochs = 200
augment.noise_sigma = 0.5
run.trials = 5
";
    std::fs::write(dir.path().join("run.cfg"), cfg).unwrap();
    let start = Instant::now();
    let spawn = |out: &str| {
        Command::new(env!("CARGO_BIN_EXE_drc"))
            .args(["train", "--config", "run.cfg", "--out", out])
            .current_dir(dir.path())
            .stdout(std::process::Stdio::null())
            .spawn()
            .expect("spawn drc")
    };
    let (mut a, mut b) = (spawn("a"), spawn("b"));
    let ok = a.wait().unwrap().success() && b.wait().unwrap().success();
    let t = start.elapsed();
    if !ok {
        return verdict(false, "train exited with an error");
    }
    let read = |d: &str| std::fs::read(dir.path().join(d).join("metrics.json")).unwrap();
    let (ma, mb) = (read("a"), read("b"));
    verdict(
        ma == mb,
        format!(
            "metrics.json {} bytes, identical: {}, {t:.1?} for both runs",
            ma.len(),
            ma == mb
        ),
    )
}

fn c8_cifar() -> Option<Verdict> {
    let dir = std::env::var_os("DRC_CIFAR_DIR")?;
    let start = Instant::now();
    let full = match load_cifar10_binary(std::path::Path::new(&dir)) {
        Ok(d) => d,
        Err(e) => return Some(verdict(false, format!("could not load CIFAR-10: {e}"))),
    };
    let subset = full.class_subset(&[0, 1, 2, 3, 4], 400).unwrap();
    let y = subset.y.clone().unwrap();
    let mut cfg = RunConfig {
        data: Some(DataSource::Generated(Generator::Blobs)),
        standardize: true,
        hidden: vec![64],
        trials: 3,
        noise_sigma: Some(0.5),
        ..Default::default()
    };
    cfg.train.k = 5;
    cfg.train.epochs = 50;
    let data = subset.standardized();
    let drc_acc = run_trials(&cfg, &data, |_| {})
        .unwrap()
        .report
        .mean
        .unwrap()
        .acc;
    let km_acc = (0..3)
        .map(|s| acc(&lloyd_restarts(&subset.x, 5, 30, 10, s), &y, 5).unwrap())
        .sum::<f64>()
        / 3.0;
    Some(verdict(
        drc_acc > km_acc,
        format!(
            "DRC mean ACC {drc_acc:.4} vs k-means {km_acc:.4}, {:.1?}",
            start.elapsed()
        ),
    ))
}

fn report(id: u32, name: &str, v: &Verdict) {
    let tag = if v.pass { "PASS" } else { "FAIL" };
    println!("criterion {id} {tag} {name}: {}", v.detail);
}

fn main() {
    let mut failed = Vec::new();
    let mut record = |id: u32, name: &str, v: Verdict| {
        report(id, name, &v);
        if !v.pass {
            failed.push(id);
        }
    };
    record(1, "gradient correctness", c1_gradients());
    record(2, "contrastive MI lower bound", c2_contrastive_bound());
    record(3, "loss extremes", c3_loss_extremes());
    record(4, "metric oracles", c4_metric_oracles());
    let (full, t) = run(&blobs_config(Ablation::default()));
    record(5, "end-to-end blobs clustering", c5_end_to_end(&full, t));
    record(6, "ablation direction", c6_ablation(&full));
    record(7, "train determinism", c7_determinism());
    match c8_cifar() {
        Some(v) => {
            let tag = if v.pass { "PASS" } else { "FAIL" };
            println!(
                "criterion 8 {tag} (advisory) reduced CIFAR-10 vs k-means: {}",
                v.detail
            );
        }
        None => println!(
            "criterion 8 SKIP (advisory) reduced CIFAR-10 vs k-means: DRC_CIFAR_DIR not set"
        ),
    }
    if failed.is_empty() {
        println!("acceptance: all gating criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
