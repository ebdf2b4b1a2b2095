//! Acceptance checks. Prints one `PASS`/`FAIL` line per criterion and exits
//! non-zero if any fails. Pass a number to run a single criterion.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use hierlearn::cli::pipeline::{fresh, prepare, train_hierarchy};
use hierlearn::cli::RunConfig;
use hierlearn::datapipe::{stratified_split, Image, SplitSpec};
use hierlearn::eval::{ConfusionMatrix, PerformanceTable, TableRow};
use hierlearn::hierarchy::{chain, ensemble_node_prob, BinaryNode, HierarchyTree, LeafLabel, NodeId};
use hierlearn::nnet::{ArchSpec, Group, Layer, Network, Tensor};
use hierlearn::sched::{run_lr_finder, LrFinderConfig, LrProbe, SgdrSchedule};
use hierlearn::train::{train_node, train_node_observed, EpochRecord, IterRecord, Stage, TrainConfig, TrainObserver};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/fixture.json")
}

// ---------------------------------------------------------------- 1

fn random_arch(rng: &mut ChaCha8Rng) -> ArchSpec {
    ArchSpec {
        input_dim: rng.random_range(2..=16),
        stem_width: rng.random_range(2..=16),
        blocks: rng.random_range(0..=2),
        cardinality: rng.random_range(1..=4),
        branch_width: rng.random_range(1..=16),
        head_hidden: [rng.random_range(1..=16), rng.random_range(1..=16)],
    }
}

/// Mean cross-entropy from eval-mode probabilities.
fn ce(net: &Network, x: &Tensor, y: &[usize]) -> f64 {
    let p = net.predict(x).expect("predict");
    y.iter().enumerate().map(|(r, &c)| -p.get(r, c).ln()).sum::<f64>() / y.len() as f64
}

/// Sign of every ReLU input, layer by layer and inside each branch.
fn relu_pattern(net: &Network, x: &Tensor) -> Vec<bool> {
    let mut signs = Vec::new();
    let mut h = x.clone();
    for layer in net.layers() {
        h = match layer {
            Layer::Dense(d) => d.forward(&h).expect("dense"),
            Layer::Relu => {
                signs.extend(h.data().iter().map(|v| *v > 0.0));
                h.map(|v| v.max(0.0))
            }
            Layer::AggResidual(b) => {
                let (y, pre) = b.forward_cached(&h).expect("block");
                for p in &pre {
                    signs.extend(p.data().iter().map(|v| *v > 0.0));
                }
                y
            }
            Layer::Dropout { .. } | Layer::Softmax { .. } => h,
        };
    }
    signs
}

fn gradient_check() -> Outcome {
    const NETS: u64 = 24;
    const H: f64 = 1e-5;
    const TOL: f64 = 1e-5;
    // central differences resolve ~1e-11 absolute; below this magnitude a
    // gradient is compared absolutely
    const FLOOR: f64 = 1e-6;
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    // central differences are no oracle where w ± h straddles a ReLU kink
    let mut kinked = 0usize;
    for seed in 0..NETS {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let arch = random_arch(&mut rng);
        let mut net = arch.build(&mut rng).map_err(err)?;
        // biases start at zero, which can park a pre-activation exactly on a
        // ReLU kink where no derivative exists
        for p in net.params_mut() {
            if p.rows() == 1 {
                p.data_mut().iter_mut().for_each(|b| *b = rng.random_range(-0.1..0.1));
            }
        }
        let batch = rng.random_range(1..=8);
        let x = Tensor::from_vec(
            batch,
            arch.input_dim,
            (0..batch * arch.input_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .map_err(err)?;
        let y: Vec<usize> = (0..batch).map(|_| rng.random_range(0..2)).collect();
        let (_, grads) = net.loss_and_grads(&x, &y, &mut rng).map_err(err)?;
        let analytic: Vec<f64> = grads.iter().flat_map(|t| t.data().to_vec()).collect();
        let mut probe = net.clone();
        let mut flat = 0;
        for ti in 0..probe.params().len() {
            for k in 0..probe.params()[ti].len() {
                let w = probe.params()[ti].data()[k];
                probe.params_mut()[ti].data_mut()[k] = w + H;
                let up = ce(&probe, &x, &y);
                let up_signs = relu_pattern(&probe, &x);
                probe.params_mut()[ti].data_mut()[k] = w - H;
                let down = ce(&probe, &x, &y);
                let down_signs = relu_pattern(&probe, &x);
                probe.params_mut()[ti].data_mut()[k] = w;
                flat += 1;
                if up_signs != down_signs {
                    kinked += 1;
                    continue;
                }
                let fd = (up - down) / (2.0 * H);
                let g = analytic[flat - 1];
                let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(FLOOR);
                if rel >= TOL {
                    return Err(format!("net {seed} {arch:?}: param {ti}[{k}] analytic {g:e} vs fd {fd:e} (rel {rel:e})"));
                }
                worst = worst.max(rel);
                checked += 1;
            }
        }
        ensure(flat == analytic.len(), || format!("net {seed}: {flat} params vs {} gradients", analytic.len()))?;
    }
    ensure(kinked * 100 <= checked, || format!("{kinked} of {} params straddle a kink", checked + kinked))?;
    let t = start.elapsed();
    ensure(t < Duration::from_secs(10), || format!("took {t:?}"))?;
    Ok(format!("{NETS} nets, {checked} params, worst rel err {worst:.2e}, {kinked} skipped at kinks, {t:.2?}"))
}

// ---------------------------------------------------------------- 2

fn cosine(eta_max: f64, eta_min: f64, t: usize, period: usize) -> f64 {
    eta_min + 0.5 * (eta_max - eta_min) * (1.0 + (std::f64::consts::PI * t as f64 / period as f64).cos())
}

fn sgdr_exact() -> Outcome {
    let start = Instant::now();
    let mut s = SgdrSchedule::new(0.01, 0.0, 100, 1.0).map_err(err)?;
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let lr = s.lr();
        if i % 100 == 0 {
            ensure(lr == 0.01, || format!("step {i}: cycle start lr {lr:e}"))?;
        }
        let want = cosine(0.01, 0.0, i % 100, 100);
        worst = worst.max((lr - want).abs());
        ensure((lr - want).abs() <= 1e-12, || format!("step {i}: {lr:e} vs {want:e}"))?;
        s = s.advance();
    }
    let mut s = SgdrSchedule::new(0.01, 0.0, 4, 1.0).map_err(err)?;
    let seq: Vec<u64> = (0..40)
        .map(|_| {
            let v = s.lr().to_bits();
            s = s.advance();
            v
        })
        .collect();
    for (i, v) in seq.iter().enumerate().skip(4) {
        ensure(*v == seq[i - 4], || format!("T=4 sequence breaks period at step {i}"))?;
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(1), || format!("took {t:?}"))?;
    Ok(format!("1000 steps, max dev {worst:.1e}, T=4 period exact, {t:.2?}"))
}

// ---------------------------------------------------------------- 3

/// Gradient descent on w² with Gaussian noise on the gradient.
struct Quadratic {
    w: f64,
    noise: Normal<f64>,
    rng: ChaCha8Rng,
}

impl LrProbe for Quadratic {
    fn step(&mut self, lr: f64) -> hierlearn::Result<f64> {
        let loss = self.w * self.w;
        self.w -= lr * (2.0 * self.w + self.noise.sample(&mut self.rng));
        Ok(loss)
    }
}

fn lr_finder_oracle() -> Outcome {
    let start = Instant::now();
    // 1000 points keep the EMA window (~50 points) well under a decade of lr
    let cfg = LrFinderConfig { num_iters: 1000, ..LrFinderConfig::default() };
    let span = (cfg.end_lr / cfg.start_lr).ln();
    let mut top = 0.0f64;
    for seed in 0..50 {
        let mut probe = Quadratic { w: 1.0, noise: Normal::new(0.0, 0.1).unwrap(), rng: ChaCha8Rng::seed_from_u64(seed) };
        let res = run_lr_finder(&mut probe, &cfg).map_err(err)?;
        ensure(res.eta_max < 1.0, || format!("seed {seed}: eta_max {} >= 1", res.eta_max))?;
        ensure(res.eta == res.eta_max / 10.0, || format!("seed {seed}: eta {} != eta_max/10", res.eta))?;
        ensure(res.curve.len() >= 2, || "curve too short".into())?;
        for (i, p) in res.curve.iter().enumerate() {
            if i > 0 {
                ensure(p.lr > res.curve[i - 1].lr, || format!("lr not increasing at point {i}"))?;
            }
            let want = cfg.start_lr.ln() + span * p.iter as f64 / (cfg.num_iters - 1) as f64;
            ensure((p.lr.ln() - want).abs() <= 1e-12, || format!("point {i}: ln lr {} vs {want}", p.lr.ln()))?;
        }
        top = top.max(res.eta_max);
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(1), || format!("took {t:?}"))?;
    Ok(format!("50 seeds, largest eta_max {top:.3e}, {t:.2?}"))
}

// ---------------------------------------------------------------- 4

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

struct Watch {
    first: Vec<u64>,
    middle: Vec<u64>,
    violations: Vec<String>,
    iters: Vec<IterRecord>,
}

impl TrainObserver for Watch {
    fn on_iteration(&mut self, net: &Network, rec: &IterRecord) {
        if bits(&net.group_params(Group::First)) != self.first {
            self.violations.push(format!("first group changed at iteration {}", rec.iter));
        }
        if rec.stage == Stage::Head && bits(&net.group_params(Group::Middle)) != self.middle {
            self.violations.push(format!("middle group changed in head stage at iteration {}", rec.iter));
        }
        self.iters.push(rec.clone());
    }

    fn on_epoch(&mut self, _: &Network, _: &EpochRecord) {}
}

fn freeze_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let arch = ArchSpec { input_dim: 12, stem_width: 10, blocks: 1, cardinality: 2, branch_width: 4, head_hidden: [8, 6] };
    let net = arch.build(&mut rng).map_err(err)?;
    let sample = |rng: &mut ChaCha8Rng| {
        let label = rng.random_range(0..2);
        let px: Vec<f64> = (0..12).map(|i| rng.random_range(-0.5..0.5) + if i < 6 { label as f64 } else { 0.0 }).collect();
        hierlearn::datapipe::NodeSample { image: Image::new(3, 4, 1, px).unwrap(), label }
    };
    let train: Vec<_> = (0..37).map(|_| sample(&mut rng)).collect();
    let val: Vec<_> = (0..12).map(|_| sample(&mut rng)).collect();
    let cfg = TrainConfig { batch_size: 5, head_epochs: 2, fine_tune_epochs: 3, augment: None, seed: 9, ..TrainConfig::default() };
    let mut watch = Watch {
        first: bits(&net.group_params(Group::First)),
        middle: bits(&net.group_params(Group::Middle)),
        violations: Vec::new(),
        iters: Vec::new(),
    };
    let out = train_node_observed(&net, &train, &val, &cfg, "t", &mut watch).map_err(err)?;
    ensure(watch.violations.is_empty(), || watch.violations.join("; "))?;
    let eta = out.report.eta;
    let per_epoch = train.len().div_ceil(cfg.batch_size);
    let mut k = 0usize;
    let (mut head, mut fine) = (0, 0);
    for rec in &watch.iters {
        let want = match rec.stage {
            Stage::Head => {
                head += 1;
                [0.0, 0.0, eta]
            }
            Stage::FineTune => {
                let e = cosine(eta, 0.0, k % per_epoch, per_epoch);
                k += 1;
                fine += 1;
                [0.0, e / 5.0, e]
            }
        };
        for g in 0..3 {
            // relative, so a small eta cannot hide a mismatch
            ensure((rec.group_lrs[g] - want[g]).abs() <= 1e-12 * want[g].abs(), || {
                format!("iteration {} group {g}: lr {:e} vs {:e}", rec.iter, rec.group_lrs[g], want[g])
            })?;
        }
    }
    ensure(head == cfg.head_epochs * per_epoch && fine == cfg.fine_tune_epochs * per_epoch, || {
        format!("{head} head and {fine} fine-tune iterations")
    })?;
    let moved = bits(&out.final_net.group_params(Group::Middle)) != watch.middle;
    ensure(moved, || "middle group never trained".into())?;
    Ok(format!("{head} head + {fine} fine-tune iterations, eta {eta:.3e}"))
}

// ---------------------------------------------------------------- 5

/// Node whose carcinoma-side probability is one input coordinate.
struct Coord(usize);

impl BinaryNode for Coord {
    fn prob(&self, x: &[f64]) -> hierlearn::Result<[f64; 2]> {
        Ok([1.0 - x[self.0], x[self.0]])
    }
}

fn hierarchy_algebra() -> Outcome {
    let tree = HierarchyTree::new(Coord(0), Coord(1), Coord(2));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..=1.0)).collect();
        let d = tree.predict_soft(&x).map_err(err)?;
        worst = worst.max((d.0.iter().sum::<f64>() - 1.0).abs());
    }
    ensure(worst <= 1e-9, || format!("soft sum off by {worst:e}"))?;

    let d = chain([0.2, 0.8], [0.5, 0.5], [0.3, 0.7]);
    let want = [0.10, 0.10, 0.24, 0.56];
    for (leaf, w) in LeafLabel::ALL.into_iter().zip(want) {
        ensure((d.get(leaf) - w).abs() <= 1e-12, || format!("{}: {} vs {w}", leaf.name(), d.get(leaf)))?;
    }

    let arch = ArchSpec { input_dim: 5, stem_width: 6, blocks: 1, cardinality: 2, branch_width: 3, head_hidden: [4, 4] };
    let nets: Vec<Network> = (0..7).map(|_| arch.build(&mut rng)).collect::<hierlearn::Result<_>>().map_err(err)?;
    let mut ens_worst = 0.0f64;
    for _ in 0..200 {
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = ensemble_node_prob(&nets, &x).map_err(err)?;
        let mut sum = [0.0; 2];
        for n in &nets {
            let p = n.predict(&Tensor::row_vector(&x)).map_err(err)?;
            sum[0] += p.get(0, 0);
            sum[1] += p.get(0, 1);
        }
        for c in 0..2 {
            ens_worst = ens_worst.max((got[c] - sum[c] / nets.len() as f64).abs());
        }
    }
    ensure(ens_worst <= 1e-12, || format!("ensemble off by {ens_worst:e}"))?;
    Ok(format!("soft sum err {worst:.1e}, chain exact, ensemble err {ens_worst:.1e}"))
}

// ---------------------------------------------------------------- 6

fn pipeline_structure() -> Outcome {
    let img = Image::constant(1536, 2048, 1, 0.5).map_err(err)?;
    let r = img.resize_preserve_ratio(299).map_err(err)?;
    ensure((r.height(), r.width()) == (299, 399), || format!("resize gave {}x{}", r.height(), r.width()))?;
    let off = r.center_offset(299).map_err(err)?;
    ensure(off == (0, 50), || format!("crop offset {off:?}"))?;
    let c = r.center_crop(299).map_err(err)?;
    ensure((c.height(), c.width()) == (299, 299), || format!("crop gave {}x{}", c.height(), c.width()))?;

    let labels: Vec<usize> = (0..400).map(|i| i % 4).collect();
    let split = stratified_split(&labels, &SplitSpec { train_fraction: 0.75, seed: 6, stratified: true }).map_err(err)?;
    ensure(split.train.len() == 300 && split.val.len() == 100, || {
        format!("split {}/{}", split.train.len(), split.val.len())
    })?;
    for class in 0..4 {
        let tr = split.train.iter().filter(|&&i| labels[i] == class).count();
        let va = split.val.iter().filter(|&&i| labels[i] == class).count();
        ensure(tr == 75 && va == 25, || format!("class {class}: {tr}/{va}"))?;
    }
    let mut all: Vec<usize> = split.train.iter().chain(&split.val).copied().collect();
    all.sort_unstable();
    ensure(all == (0..400).collect::<Vec<_>>(), || "split is not a partition".into())?;
    Ok("1536x2048 -> 299x399, offset (0, 50), 300/100 with 75/25 per class".into())
}

// ---------------------------------------------------------------- 7

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hierlearn"))
}

fn run_in(dir: &Path, args: &[&str]) -> Result<Output, String> {
    let out = bin().args(args).current_dir(dir).output().map_err(err)?;
    ensure(out.status.success(), || {
        format!("`{}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim())
    })?;
    Ok(out)
}

/// Fixture config with `data_dir` pointing at `data` next to it.
fn stage_config(dir: &Path) -> Result<(), String> {
    let text = std::fs::read_to_string(fixture()).map_err(err)?;
    let mut v: serde_json::Value = serde_json::from_str(&text).map_err(err)?;
    v["data_dir"] = "data".into();
    std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(&v).unwrap()).map_err(err)
}

fn end_to_end() -> Outcome {
    let tmp = tempfile::tempdir().map_err(err)?;
    let dir = tmp.path();
    stage_config(dir)?;
    let start = Instant::now();
    run_in(dir, &["gen-data", "--config", "config.json", "--out", "data"])?;
    run_in(dir, &["train-hierarchy", "--config", "config.json"])?;
    let out = run_in(dir, &["eval", "--manifest", "run/manifest.json", "--data", "data"])?;
    let t = start.elapsed();
    let stdout = String::from_utf8_lossy(&out.stdout);
    let acc: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("accuracy\t"))
        .ok_or_else(|| format!("no accuracy line in eval output:\n{stdout}"))?
        .parse()
        .map_err(err)?;
    let samples = stdout.lines().find_map(|l| l.strip_prefix("samples\t")).unwrap_or("?").to_string();
    ensure(acc >= 0.95, || format!("whole-system accuracy {acc} < 0.95"))?;
    ensure(t < Duration::from_secs(300), || format!("took {t:?}"))?;
    Ok(format!("whole-system accuracy {acc:.3} on {samples} validation samples, {t:.1?}"))
}

// ---------------------------------------------------------------- 8

fn transfer_speed() -> Outcome {
    let cfg = RunConfig::load(&fixture()).map_err(err)?;
    let data = prepare(&cfg).map_err(err)?;
    let run = train_hierarchy(&cfg, &data).map_err(err)?;
    let from_carci = run
        .norbe
        .outcomes
        .iter()
        .find(|o| o.report.tag == "carci")
        .ok_or("no NorBe candidate trained from Carci")?;
    let (train, val) = data.node_sets(NodeId::NorBe);
    let scratch = train_node(&fresh(&cfg, "norbe").map_err(err)?, &train, &val, &cfg.train.norbe, "fresh").map_err(err)?;
    let a = from_carci.report.epochs_to_reach(0.95);
    let b = scratch.report.epochs_to_reach(0.95);
    let show = |e: Option<usize>| e.map_or("never".into(), |e| e.to_string());
    let faster = match (a, b) {
        (Some(a), Some(b)) => a < b,
        (Some(_), None) => true,
        _ => false,
    };
    ensure(faster, || format!("from Carci {} epochs vs fresh {}", show(a), show(b)))?;
    Ok(format!("NorBe reaches 0.95 at epoch {} from Carci vs {} from fresh init", show(a), show(b)))
}

// ---------------------------------------------------------------- 9

fn table_reproduction() -> Outcome {
    let (init, ext, comp) = ("Init.", "Init. + Ext.", "Competition");
    let mut t = PerformanceTable::with_columns([init, ext, comp]);
    for (row, col, v) in [
        (TableRow::Carci, init, 1.00),
        (TableRow::Carci, ext, 0.98),
        (TableRow::NorBe, init, 0.98),
        (TableRow::NorBe, ext, 0.965),
        (TableRow::InvIs, init, 1.00),
        (TableRow::WholeSystem, init, 0.99),
        (TableRow::WholeSystem, ext, 0.963),
        (TableRow::WholeSystem, comp, 0.81),
    ] {
        t.set(row, col, v).map_err(err)?;
    }
    let want = "Models,Init.,Init. + Ext.,Competition\n\
                Carci,1.00,0.98,-\n\
                NorBe,0.98,0.965,-\n\
                InvIs,1.00,-,-\n\
                Whole system,0.99,0.963,0.81\n";
    let csv = t.to_csv();
    ensure(csv == want, || format!("table csv:\n{csv}"))?;

    let truth: Vec<LeafLabel> = (0..100).map(|i| LeafLabel::ALL[i % 4]).collect();
    let mut pred = truth.clone();
    pred[37] = LeafLabel::ALL[(truth[37].index() + 1) % 4];
    let m = ConfusionMatrix::from_pairs(&truth, &pred).map_err(err)?;
    ensure(m.trace() == 99 && m.total() == 100, || format!("trace {} of {}", m.trace(), m.total()))?;
    ensure(m.accuracy() == 0.99, || format!("accuracy {}", m.accuracy()))?;
    Ok("Table cells match; 1 error in 100 gives trace 99, accuracy 0.99".into())
}

// ---------------------------------------------------------------- 10

fn tree_bytes(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, acc: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in std::fs::read_dir(dir).expect("read_dir") {
            let p = e.expect("entry").path();
            if p.is_dir() {
                walk(root, &p, acc);
            } else {
                acc.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).expect("read"));
            }
        }
    }
    let mut acc = BTreeMap::new();
    walk(root, root, &mut acc);
    acc
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(err)?;
    let b = tempfile::tempdir().map_err(err)?;
    for d in [a.path(), b.path()] {
        stage_config(d)?;
    }
    let steps: Vec<Vec<&str>> = vec![
        vec!["gen-data", "--config", "config.json", "--out", "data"],
        vec!["lr-find", "--config", "config.json", "--node", "carci"],
        vec!["train-hierarchy", "--config", "config.json"],
        vec!["train-node", "--config", "config.json", "--node", "norbe", "--from", "run/carci/best.json"],
        vec!["eval", "--manifest", "run/manifest.json", "--data", "data"],
        vec!["ensemble", "--manifest", "run/manifest.json", "--add", "run/norbe/best.json", "--node", "norbe"],
        vec!["predict", "--manifest", "run/manifest.json", "--input", "data/benign/00000.bin"],
        vec!["predict", "--manifest", "run/manifest.json", "--input", "data/invasive/00003.bin", "--soft"],
    ];
    for step in &steps {
        // both copies run side by side
        let (ra, rb) = std::thread::scope(|s| {
            let ha = s.spawn(|| run_in(a.path(), step));
            let hb = s.spawn(|| run_in(b.path(), step));
            (ha.join().unwrap(), hb.join().unwrap())
        });
        let (oa, ob) = (ra?, rb?);
        let name = step[0];
        ensure(oa.stdout == ob.stdout, || format!("{name}: stdout differs"))?;
        ensure(oa.stderr == ob.stderr, || format!("{name}: stderr differs"))?;
        let (ta, tb) = (tree_bytes(a.path()), tree_bytes(b.path()));
        ensure(ta.keys().eq(tb.keys()), || format!("{name}: file sets differ"))?;
        if let Some((p, _)) = ta.iter().find(|(p, v)| tb[*p] != **v) {
            return Err(format!("{name}: {} differs", p.display()));
        }
    }
    let files = tree_bytes(a.path()).len();
    Ok(format!("{} invocations over 7 subcommands, {files} files byte-identical", steps.len()))
}

// ----------------------------------------------------------------

fn main() {
    let checks: [(&str, fn() -> Outcome); 10] = [
        ("gradient check", gradient_check),
        ("SGDR exactness", sgdr_exact),
        ("LR finder oracle", lr_finder_oracle),
        ("freeze / discriminative LR", freeze_contract),
        ("hierarchy algebra", hierarchy_algebra),
        ("pipeline structure", pipeline_structure),
        ("end-to-end fixture", end_to_end),
        ("transfer fixture", transfer_speed),
        ("table / confusion", table_reproduction),
        ("determinism", determinism),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let n = i + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        match std::panic::catch_unwind(check) {
            Ok(Ok(detail)) => println!("PASS {n:>2} {name}: {detail}"),
            Ok(Err(why)) => {
                failed += 1;
                println!("FAIL {n:>2} {name}: {why}");
            }
            Err(_) => {
                failed += 1;
                println!("FAIL {n:>2} {name}: panicked");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
