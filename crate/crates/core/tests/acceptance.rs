//! Acceptance criteria, one line each.
//!
//! Runs as a plain binary (no libtest harness) so the per-criterion lines are
//! always visible. Exits nonzero if any criterion fails, unless the failure
//! is a documented, narrowly checked impossibility (see criterion 3).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use asca::attack::{attack_channel, mean_accuracy, read_transcripts};
use asca::classifier::{estimate_channel, simulate_channel};
use asca::correction::{build_fewshot_prompt, FewShotExample};
use asca::dataset::{synth_recording, DatasetProfile, KeyLabel, ALPHABET};
use asca::lora::{
    lora_forward, loss, loss_and_gradients, merge, train_lora, CurriculumSpec, Example, FrozenLinear,
    LoraAdapter, StaticTask,
};
use asca::metrics::{char_accuracy, meteor_lite, MetricName, MetricReport};
use asca::pipeline::{load_config_or_manifest, Pipeline, RunConfig};
use asca::signal::wav::write_wav;
use asca::signal::{segment_keystrokes, NoiseLevel, SegmentationConfig, Waveform};
use asca::spectrogram::{MelConfig, MelExtractor};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
    /// Set when the only shortfall is one the criterion cannot meet as
    /// stated; the reason is printed with the failure.
    known: Option<&'static str>,
}

fn outcome(id: u32, name: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { id, name, pass, detail, known: None }
}

const METEOR_CEILING: &str = "METEOR of a sentence with itself is F·(1 - 0.5/m³) < 1 because of the \
     metric's fragmentation penalty, so the oracle cannot reach 1.0 on METEOR; every other part holds \
     and oracle METEOR equals that per-sentence ceiling exactly";

// 1 ─────────────────────────────────────────────────────────────────────

fn brute_lcs(a: &[char], b: &[char]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let mut best = 0;
    for mask in 0u32..(1 << short.len()) {
        let n = mask.count_ones() as usize;
        if n <= best {
            continue;
        }
        let mut it = long.iter();
        let ok = (0..short.len())
            .filter(|i| mask & (1 << i) != 0)
            .all(|i| it.any(|&d| d == short[i]));
        if ok {
            best = n;
        }
    }
    best
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = asca::rng::rng(2024);
    let abc = ['a', 'b', 'c'];
    let mut mismatches = 0;
    for _ in 0..10_000 {
        let a: Vec<char> = (0..rng.random_range(0..=10)).map(|_| abc[rng.random_range(0..3)]).collect();
        let b: Vec<char> = (0..rng.random_range(0..=10)).map(|_| abc[rng.random_range(0..3)]).collect();
        let expected = if a.is_empty() && b.is_empty() {
            1.0
        } else {
            2.0 * brute_lcs(&a, &b) as f64 / (a.len() + b.len()) as f64
        };
        let s1: String = a.iter().collect();
        let s2: String = b.iter().collect();
        if char_accuracy(&s1, &s2) != expected {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        1,
        "char accuracy equals brute-force LCS oracle",
        mismatches == 0 && secs < 10.0,
        format!("10000 pairs, {mismatches} mismatches, {secs:.2} s (limit 10 s)"),
    )
}

// Shared synthetic run for 2, 3, 7 and 9 ─────────────────────────────────

fn acceptance_config() -> RunConfig {
    let mut c = RunConfig::new(DatasetProfile::Synthetic);
    c.seed = 7;
    c.attack.sentences = 200;
    c.correction.pool_sentences = 50;
    c.noise.calibration.probe_sentences = 100;
    c.noise.calibration.tolerance = 0.01;
    c
}

struct SharedRun {
    pipeline: Pipeline,
    calibrate_secs: f64,
    setup_error: Option<String>,
}

fn shared_run(out: &Path) -> SharedRun {
    let pipeline = Pipeline::new(acceptance_config(), out).expect("acceptance config is valid");
    let mut calibrate_secs = f64::NAN;
    let result = (|| -> asca::Result<()> {
        pipeline.segment()?;
        pipeline.featurize()?;
        pipeline.train()?;
        let t = Instant::now();
        pipeline.calibrate()?;
        pipeline.attack()?;
        calibrate_secs = t.elapsed().as_secs_f64();
        pipeline.evaluate()?;
        pipeline.correct()?;
        pipeline.score()?;
        pipeline.report()?;
        Ok(())
    })();
    SharedRun {
        pipeline,
        calibrate_secs,
        setup_error: result.err().map(|e| e.to_string()),
    }
}

fn report(run: &SharedRun, col: &str, level: NoiseLevel) -> MetricReport {
    let path = run.pipeline.root().join(format!("reports/{col}/{level}.json"));
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn criterion_2(run: &SharedRun) -> Outcome {
    let name = "calibrated eta hits 0.95/0.85/0.70 within 0.02 on 200 fresh sentences";
    if let Some(e) = &run.setup_error {
        return outcome(2, name, false, format!("run failed: {e}"));
    }
    let noise = run.pipeline.noise().unwrap();
    let mut pass = run.calibrate_secs < 300.0;
    let mut parts = Vec::new();
    for level in NoiseLevel::ALL {
        let ts = read_transcripts(run.pipeline.root().join(format!("transcripts/{level}.jsonl"))).unwrap();
        let acc = mean_accuracy(&ts);
        let target = level.target_accuracy();
        pass &= ts.len() == 200 && (acc - target).abs() <= 0.02;
        parts.push(format!("{level}: eta {:.5} -> {acc:.4} (target {target})", noise[&level].eta));
    }
    parts.push(format!("calibrate+attack {:.0} s (limit 300 s)", run.calibrate_secs));
    outcome(2, name, pass, parts.join("; "))
}

fn criterion_3(run: &SharedRun) -> Outcome {
    let name = "uncorrected scores fall with noise, oracle reaches 1.0, dictionary beats uncorrected BLEU at Low";
    if let Some(e) = &run.setup_error {
        return outcome(3, name, false, format!("run failed: {e}"));
    }
    let mut parts = Vec::new();
    let mut pass = true;
    for m in [MetricName::Bleu, MetricName::Meteor, MetricName::Rouge1, MetricName::Rouge2, MetricName::RougeL] {
        let means: Vec<f64> = NoiseLevel::ALL.iter().map(|&l| report(run, "uncorrected", l).mean(m)).collect();
        let falling = means[0] > means[1] && means[1] > means[2];
        pass &= falling;
        parts.push(format!(
            "{} {:.3}>{:.3}>{:.3} {}",
            m.label(),
            means[0],
            means[1],
            means[2],
            if falling { "ok" } else { "NOT decreasing" }
        ));
    }
    let mut short_of_one = Vec::new();
    let mut only_meteor_at_ceiling = true;
    for level in NoiseLevel::ALL {
        let r = report(run, "oracle", level);
        let truths = read_transcripts(run.pipeline.root().join(format!("transcripts/{level}.jsonl"))).unwrap();
        let ceiling = truths.iter().map(|t| meteor_lite(&t.truth, &t.truth)).sum::<f64>() / truths.len() as f64;
        for m in MetricName::ALL {
            if r.mean(m) != 1.0 {
                short_of_one.push(format!("{} {level} = {:.4}", m.label(), r.mean(m)));
                only_meteor_at_ceiling &= m == MetricName::Meteor && (r.mean(m) - ceiling).abs() < 1e-12;
            }
        }
    }
    let oracle_ok = short_of_one.is_empty();
    if oracle_ok {
        parts.push("oracle 1.0 everywhere".into());
    } else {
        parts.push(format!("oracle below 1.0: {}", short_of_one.join(", ")));
    }
    let dict = report(run, "dictionary", NoiseLevel::Low).mean(MetricName::Bleu);
    let raw = report(run, "uncorrected", NoiseLevel::Low).mean(MetricName::Bleu);
    pass &= dict > raw;
    parts.push(format!("dictionary BLEU at Low {dict:.3} vs uncorrected {raw:.3}"));
    let mut o = outcome(3, name, pass && oracle_ok, parts.join("; "));
    if pass && !oracle_ok && only_meteor_at_ceiling {
        o.known = Some(METEOR_CEILING);
    }
    o
}

// 4 ─────────────────────────────────────────────────────────────────────

fn criterion_4(run: &SharedRun) -> Outcome {
    let sr = 44_100usize;
    let spacing = sr / 2;
    let clicks: Vec<usize> = (0..25).map(|i| spacing / 2 + i * spacing).collect();
    let mut s = vec![0.0; spacing * 25 + spacing / 2];
    // Click i starts with a unique amplitude so each clip can be matched to it.
    let amplitude = |i: usize| 0.5 + 0.02 * i as f64;
    for (i, &c) in clicks.iter().enumerate() {
        for k in 0..200 {
            s[c + k] += amplitude(i) * (-(k as f64) / 40.0).exp() * if k % 2 == 0 { 1.0 } else { -1.0 };
        }
    }
    let w = Waveform::new(s, sr as u32).unwrap();
    let cfg = SegmentationConfig::default();
    let (count, contained) = match segment_keystrokes(&w, &cfg) {
        Ok(clips) => {
            let ok = clips
                .iter()
                .enumerate()
                .all(|(i, clip)| clip.samples().contains(&amplitude(i)));
            (clips.len(), ok)
        }
        Err(_) => (0, false),
    };

    let dir = tempfile::tempdir().unwrap();
    for key in KeyLabel::keys() {
        write_wav(dir.path().join(format!("{}.wav", key.file_stem())), &synth_recording(key, 25, key.index() as u64))
            .unwrap();
    }
    let items = asca::dataset::load_recordings(dir.path(), DatasetProfile::Synthetic, &cfg)
        .map(|d| d.len())
        .unwrap_or(0);
    let pipeline_items = run.pipeline.dataset().map(|d| d.len()).unwrap_or(0);
    outcome(
        4,
        "25 clicks give 25 clips holding their clicks; 36 keys give 900 items",
        count == 25 && contained && items == 900 && pipeline_items == 900,
        format!(
            "{count} clips, clicks contained: {contained}; directory {items} items; pipeline dataset {pipeline_items} items"
        ),
    )
}

// 5 ─────────────────────────────────────────────────────────────────────

fn criterion_5() -> Outcome {
    let mut rng = asca::rng::rng(5);
    let mut bad = Vec::new();
    for (cfg, expect) in [(MelConfig::phone(), 64), (MelConfig::phone_direct(), 224)] {
        let ex = MelExtractor::new(cfg.clone()).unwrap();
        let nominal = cfg.nominal_clip_length();
        for _ in 0..100 {
            let len = rng.random_range(nominal * 4 / 5..=nominal * 6 / 5);
            let s: Vec<f64> = (0..len).map(|_| rng.random_range(-0.5..0.5)).collect();
            let spec = ex.extract(&Waveform::new(s, cfg.sample_rate_hz).unwrap()).unwrap();
            let in_range = spec.values().iter().all(|v| (0.0..=1.0).contains(v));
            if spec.rows() != expect || spec.cols() != expect || !in_range {
                bad.push(format!("{expect}-profile length {len}: {}x{}", spec.rows(), spec.cols()));
            }
        }
    }
    outcome(
        5,
        "64x64 and 224x224 images with values in [0,1] for 100 clip lengths each",
        bad.is_empty(),
        if bad.is_empty() { "200 clips checked".into() } else { bad.join(", ") },
    )
}

// 6 ─────────────────────────────────────────────────────────────────────

fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn criterion_6() -> Outcome {
    let mut rng = asca::rng::rng(6);
    let mut parts = Vec::new();

    // (a) frozen weights survive training untouched.
    let centres: Vec<DVector<f64>> = (0..4).map(|_| random_matrix(6, 1, &mut rng).column(0) * 3.0).collect();
    let examples: Vec<Example> = (0..40)
        .map(|i| (&centres[i % 4] + random_matrix(6, 1, &mut rng).column(0) * 0.1, i % 4))
        .collect();
    let base = FrozenLinear::new(random_matrix(4, 6, &mut rng) * 0.1, DVector::zeros(4)).unwrap();
    let before = base.to_bytes();
    let task = StaticTask { examples, d_out: 4 };
    let trained = train_lora(&base, 2, &task, &CurriculumSpec::standard(1));
    let a = trained.is_ok() && base.to_bytes() == before;
    parts.push(format!("(a) W0 identical: {a}"));

    // (b) analytic vs central finite differences.
    let base = FrozenLinear::new(random_matrix(6, 8, &mut rng), random_matrix(6, 1, &mut rng).column(0).into()).unwrap();
    let (am, bm) = (random_matrix(6, 2, &mut rng), random_matrix(2, 8, &mut rng));
    let batch: Vec<Example> = (0..5).map(|i| (random_matrix(8, 1, &mut rng).column(0).into(), i % 6)).collect();
    let ad = LoraAdapter::new(am.clone(), bm.clone()).unwrap();
    let (_, g) = loss_and_gradients(&base, &ad, &batch).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for which in 0..2 {
        let n = if which == 0 { am.len() } else { bm.len() };
        for i in 0..n {
            let eval = |delta: f64| {
                let (mut a2, mut b2) = (am.clone(), bm.clone());
                if which == 0 {
                    a2[i] += delta;
                } else {
                    b2[i] += delta;
                }
                loss(&base, &LoraAdapter::new(a2, b2).unwrap(), &batch).unwrap()
            };
            let numeric = (eval(h) - eval(-h)) / (2.0 * h);
            let analytic = if which == 0 { g.a[i] } else { g.b[i] };
            worst = worst.max((numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-8));
        }
    }
    let b = worst < 1e-4;
    parts.push(format!("(b) worst relative gradient error {worst:.2e}"));

    // (c) zero adapter reproduces the base.
    let zero = LoraAdapter::new(DMatrix::zeros(6, 2), random_matrix(2, 8, &mut rng)).unwrap();
    let x: DVector<f64> = random_matrix(8, 1, &mut rng).column(0).into();
    let diff = (lora_forward(&base, &zero, &x).unwrap() - base.forward(&x)).amax();
    let c = diff <= 1e-9;
    parts.push(format!("(c) zero-adapter deviation {diff:.1e}"));

    // (d) rank(AB) <= c.
    let mut violations = 0;
    for _ in 0..100 {
        let rank = rng.random_range(1..5);
        let ad = LoraAdapter::new(random_matrix(8, rank, &mut rng), random_matrix(rank, 9, &mut rng)).unwrap();
        let w = merge(&FrozenLinear::new(DMatrix::zeros(8, 9), DVector::zeros(8)).unwrap(), &ad).unwrap();
        let numeric_rank = w.singular_values().iter().filter(|&&s| s > 1e-8).count();
        if numeric_rank > rank {
            violations += 1;
        }
    }
    let d = violations == 0;
    parts.push(format!("(d) rank violations {violations}/100"));
    outcome(6, "LoRA math", a && b && c && d, parts.join("; "))
}

// 7 ─────────────────────────────────────────────────────────────────────

fn criterion_7(run: &SharedRun) -> Outcome {
    let name = "channel sampling matches its diagonal; audio and channel paths agree";
    if let Some(e) = &run.setup_error {
        return outcome(7, name, false, format!("run failed: {e}"));
    }
    let ds = run.pipeline.dataset().unwrap();
    let model = run.pipeline.model().unwrap();
    let level = NoiseLevel::Medium;
    let eta = run.pipeline.noise().unwrap()[&level].eta;
    let cm = estimate_channel(&model, &ds, eta, 1, 77).unwrap();

    let symbols: Vec<char> = ALPHABET.chars().collect();
    let mut rng = asca::rng::rng(70);
    let text: String = (0..100_000).map(|_| symbols[rng.random_range(0..symbols.len())]).collect();
    let out = simulate_channel(&cm, &text, 71).unwrap();
    let observed = text.chars().zip(out.chars()).filter(|(a, b)| a == b).count() as f64 / 1e5;
    let expected = cm.expected_accuracy(&text).unwrap();

    let audio = read_transcripts(run.pipeline.root().join(format!("transcripts/{level}.jsonl"))).unwrap();
    let sentences: Vec<String> = audio.iter().map(|t| t.truth.clone()).collect();
    let channel = attack_channel(&sentences, &cm, level, eta, 72).unwrap();
    let (a, c) = (mean_accuracy(&audio), mean_accuracy(&channel));
    outcome(
        7,
        name,
        (observed - expected).abs() <= 0.01 && (a - c).abs() <= 0.03 && sentences.len() == 200,
        format!(
            "1e5 chars: observed {observed:.4} vs diagonal {expected:.4}; 200 sentences at {level}: audio {a:.4} vs channel {c:.4}"
        ),
    )
}

// 8 ─────────────────────────────────────────────────────────────────────

fn criterion_8() -> Outcome {
    let system = include_str!("fixtures/prompt_k2_system.txt");
    let user = include_str!("fixtures/prompt_k2_user.txt");
    let examples = [
        FewShotExample { noisy: "thw cat sat on tge mat".into(), clean: "the cat sat on the mat".into() },
        FewShotExample { noisy: "she has 3 dpgs".into(), clean: "she has 3 dogs".into() },
    ];
    let m = build_fewshot_prompt(&examples, "a quivk brown fox").unwrap();
    let pass = m.len() == 2 && m[0].content == system && m[1].content == user;
    outcome(8, "k=2 prompt matches the golden fixture byte for byte", pass, format!("{} messages", m.len()))
}

// 9 ─────────────────────────────────────────────────────────────────────

fn collect(dir: &Path, base: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
    for entry in fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            collect(&p, base, out);
        } else {
            out.insert(p.strip_prefix(base).unwrap().display().to_string(), fs::read(&p).unwrap());
        }
    }
}

fn criterion_9(run: &SharedRun) -> Outcome {
    let name = "rerun from the manifest gives byte-identical metric reports";
    if let Some(e) = &run.setup_error {
        return outcome(9, name, false, format!("run failed: {e}"));
    }
    let other = tempfile::tempdir().unwrap();
    let rerun = load_config_or_manifest(run.pipeline.manifest_path())
        .and_then(|cfg| Pipeline::new(cfg, other.path()))
        .and_then(|p| p.run_all().map(|_| p));
    let p = match rerun {
        Ok(p) => p,
        Err(e) => return outcome(9, name, false, format!("rerun failed: {e}")),
    };
    let (mut first, mut second) = (BTreeMap::new(), BTreeMap::new());
    collect(&run.pipeline.root().join("reports"), run.pipeline.root(), &mut first);
    collect(&p.root().join("reports"), p.root(), &mut second);
    let differing = first.iter().filter(|(k, v)| second.get(*k) != Some(v)).count();
    outcome(
        9,
        name,
        !first.is_empty() && first.len() == second.len() && differing == 0,
        format!("{} report files compared, {differing} differ", first.len()),
    )
}

fn main() -> ExitCode {
    // Accept and ignore libtest arguments such as `--nocapture`.
    let started = Instant::now();
    let out = tempfile::tempdir().unwrap();
    let mut results = vec![criterion_1(), criterion_5(), criterion_6(), criterion_8()];
    let run = shared_run(out.path());
    results.extend([criterion_2(&run), criterion_3(&run), criterion_4(&run), criterion_7(&run), criterion_9(&run)]);
    results.sort_by_key(|o| o.id);

    let mut unexpected = 0;
    for o in &results {
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {} {status}: {} | {}", o.id, o.name, o.detail);
        if !o.pass {
            match o.known {
                Some(why) => println!("    known: {why}"),
                None => unexpected += 1,
            }
        }
    }
    let passed = results.iter().filter(|o| o.pass).count();
    println!(
        "acceptance: {passed}/{} passed, {unexpected} unexpected failures, {:.0} s",
        results.len(),
        started.elapsed().as_secs_f64()
    );
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
