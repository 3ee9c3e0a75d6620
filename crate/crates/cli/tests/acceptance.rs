//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use graphusion::corpus::{ingest_corpus, tokenize, CorpusFormat, MalformedPolicy};
use graphusion::embed::{Embedder, HashEmbedder};
use graphusion::graphusion::{normalize_fused, DEFAULT_PRIORITY};
use graphusion::kgraph::{KnowledgeGraph, RelationType, Stage, Triplet};
use graphusion::linkpred::{
    evaluate_linkpred, lp_request, run_linkpred, LinkPredItem, LinkPredRun, LpResources, LpVariant,
};
use graphusion::llm::{
    format_triplets, parse_triplet_list, DecisionMode, Matcher, MissPolicy, RawTriplet, ScriptRule,
    ScriptedBackend,
};
use graphusion::metrics::{binary_accuracy_f1, cohen_kappa, similarity_score};
use graphusion::seeds::{cluster_corpus, generate_seed_concepts, SeedParams, Stoplist};
use graphusion::tutorqa::{load_items, run_task, Task};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_graphusion"))
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn within(elapsed: Duration, budget_secs: u64) -> Result<(), String> {
    ensure!(
        elapsed <= Duration::from_secs(budget_secs),
        "took {:.2}s, budget {budget_secs}s",
        elapsed.as_secs_f64()
    );
    Ok(())
}

fn c1_statement() -> Outcome {
    Ok("live-model and human-rated table values are out of desk scope; \
        oracle and property checks below stand in; live smoke test is `cargo test -- --ignored live_smoke`"
        .into())
}

// ---- 2. metric oracles ----

fn confusion_oracle(labels: &[bool], preds: &[bool]) -> (f64, f64) {
    let (mut tp, mut fp, mut fn_, mut tn) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..labels.len() {
        match (labels[i], preds[i]) {
            (true, true) => tp += 1.0,
            (false, true) => fp += 1.0,
            (true, false) => fn_ += 1.0,
            (false, false) => tn += 1.0,
        }
    }
    let acc = (tp + tn) / labels.len() as f64;
    let f1 = if tp == 0.0 {
        0.0
    } else {
        2.0 * tp / (2.0 * tp + fp + fn_)
    };
    (acc, f1)
}

fn cosine_oracle(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for i in 0..a.len() {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    dot / (na.sqrt() * nb.sqrt())
}

fn similarity_oracle(pred: &[String], gold: &[String], e: &dyn Embedder) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for p in pred {
        let pv = e.embed(p).unwrap();
        for g in gold {
            let gv = e.embed(g).unwrap();
            total += cosine_oracle(pv.as_slice(), gv.as_slice());
        }
    }
    total / (pred.len() * gold.len()) as f64
}

fn kappa_oracle(a: &[u8], b: &[u8]) -> f64 {
    let n = a.len() as f64;
    let cats: BTreeSet<u8> = a.iter().chain(b).copied().collect();
    let po = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let pe: f64 = cats
        .iter()
        .map(|c| {
            let ca = a.iter().filter(|x| *x == c).count() as f64;
            let cb = b.iter().filter(|x| *x == c).count() as f64;
            ca * cb / (n * n)
        })
        .sum();
    if (1.0 - pe).abs() < 1e-12 {
        1.0
    } else {
        (po - pe) / (1.0 - pe)
    }
}

const WORDS: [&str; 16] = [
    "neural",
    "graph",
    "parsing",
    "topic",
    "model",
    "translation",
    "embedding",
    "speech",
    "tagging",
    "attention",
    "summarization",
    "entity",
    "retrieval",
    "semantic",
    "vector",
    "language",
];

fn random_concept(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(1..=3);
    (0..n)
        .map(|_| *WORDS.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ")
}

fn c2_metrics() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..200 {
        let n = rng.gen_range(1..=60);
        let labels: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
        let preds: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
        let got = binary_accuracy_f1(&labels, &preds).map_err(|e| e.to_string())?;
        let (acc, f1) = confusion_oracle(&labels, &preds);
        ensure!(
            got.accuracy == acc && got.f1 == f1,
            "confusion case {case}: {got:?} vs ({acc}, {f1})"
        );
    }
    let e = HashEmbedder::new(256).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let p: Vec<String> = (0..rng.gen_range(1..=20))
            .map(|_| random_concept(&mut rng))
            .collect();
        let g: Vec<String> = (0..rng.gen_range(1..=20))
            .map(|_| random_concept(&mut rng))
            .collect();
        let got = similarity_score(&p, &g, &e).map_err(|e| e.to_string())?;
        worst = worst.max((got - similarity_oracle(&p, &g, &e)).abs());
    }
    ensure!(worst <= 1e-9, "similarity deviates by {worst:e}");
    let mut kworst = 0.0f64;
    for case in 0..50 {
        let n = rng.gen_range(2..=40);
        let a: Vec<u8> = (0..n).map(|_| rng.gen_range(1..=3)).collect();
        let b: Vec<u8> = match case {
            0 => a.clone(),
            _ => (0..n).map(|_| rng.gen_range(1..=3)).collect(),
        };
        let got = cohen_kappa(&a, &b).map_err(|e| e.to_string())?;
        kworst = kworst.max((got - kappa_oracle(&a, &b)).abs());
        if case == 0 {
            ensure!((got - 1.0).abs() < 1e-12, "identical ratings give {got}");
        }
    }
    // p_o = p_e = 0.5
    let zero = cohen_kappa(&[1u8, 1, 0, 0], &[1u8, 0, 1, 0]).map_err(|e| e.to_string())?;
    ensure!(zero.abs() < 1e-12, "p_o = p_e case gives {zero}");
    ensure!(kworst <= 1e-9, "kappa deviates by {kworst:e}");
    within(start.elapsed(), 5)?;
    Ok(format!(
        "200 confusion fixtures exact; similarity max err {worst:.1e}; kappa max err {kworst:.1e}; {:.2}s",
        start.elapsed().as_secs_f64()
    ))
}

// ---- 3. parser round-trip ----

const FIELD_CHARS: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789-";

fn random_field(rng: &mut ChaCha8Rng) -> String {
    let words = rng.gen_range(1..=3);
    (0..words)
        .map(|_| {
            let len = rng.gen_range(1..=8);
            (0..len)
                .map(|_| *FIELD_CHARS.choose(rng).unwrap() as char)
                .collect::<String>()
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn random_triplets(rng: &mut ChaCha8Rng) -> Vec<RawTriplet> {
    (0..rng.gen_range(0..=8))
        .map(|_| RawTriplet {
            head: random_field(rng),
            relation: *RelationType::ALL.choose(rng).unwrap(),
            tail: random_field(rng),
        })
        .collect()
}

fn c3_parser() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..1000 {
        let t = random_triplets(&mut rng);
        let parsed = parse_triplet_list(&format_triplets(&t));
        ensure!(
            parsed.triplets == t && parsed.malformed == 0,
            "round-trip case {case} failed"
        );
    }
    let junk = [
        "(a, relates-to, b)",
        "(only, two)",
        "(a, Used-for, b, c)",
        "(, Used-for, b)",
        "(a, Compare, )",
        "()",
    ];
    for case in 0..200 {
        let good = random_triplets(&mut rng);
        let mut text = String::new();
        let mut injected = 0;
        for t in &good {
            if rng.gen_bool(0.5) {
                text.push_str(junk.choose(&mut rng).unwrap());
                injected += 1;
            }
            text.push_str(&format_triplets(std::slice::from_ref(t)));
        }
        text.push_str(junk.choose(&mut rng).unwrap());
        injected += 1;
        let parsed = parse_triplet_list(&text);
        ensure!(
            parsed.triplets == good && parsed.malformed == injected,
            "injection case {case}: {} of {} kept, malformed {} vs {injected}",
            parsed.triplets.len(),
            good.len(),
            parsed.malformed
        );
    }
    within(start.elapsed(), 5)?;
    Ok(format!(
        "1000 round-trips, 200 injection fixtures; {:.2}s",
        start.elapsed().as_secs_f64()
    ))
}

// ---- 4. graph laws ----

fn random_graph(rng: &mut ChaCha8Rng) -> KnowledgeGraph {
    let names: Vec<String> = (0..rng.gen_range(5..=40))
        .map(|i| format!("concept {i}"))
        .collect();
    let mut kg = KnowledgeGraph::new();
    for _ in 0..rng.gen_range(1..=500) {
        let h = names.choose(rng).unwrap();
        let t = names.choose(rng).unwrap();
        if h == t {
            continue;
        }
        let h = if rng.gen_bool(0.3) {
            h.to_uppercase()
        } else {
            h.clone()
        };
        let r = *RelationType::ALL.choose(rng).unwrap();
        let stage = if rng.gen() {
            Stage::Extraction
        } else {
            Stage::Fusion
        };
        let trip = Triplet::from_surface(&h, r, t)
            .unwrap()
            .with_provenance(graphusion::kgraph::Provenance::new(stage, "m").with_query(t));
        kg.insert(trip).unwrap();
    }
    kg
}

fn c4_graph_laws() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for case in 0..100 {
        let kg = random_graph(&mut rng);
        let concepts: Vec<String> = kg.concepts().map(str::to_string).collect();
        let mut union = KnowledgeGraph::new();
        for c in &concepts {
            let sub = kg.subgraph(c);
            ensure!(
                sub.subgraph(c) == sub,
                "case {case}: subgraph({c}) not idempotent"
            );
            for t in sub.triplets() {
                union.insert(t).unwrap();
            }
        }
        // Provenance is appended per insert, so compare keys for the union law.
        let keys: Vec<_> = kg.keys().cloned().collect();
        let ukeys: Vec<_> = union.keys().cloned().collect();
        ensure!(
            keys == ukeys,
            "case {case}: union of subgraphs differs from graph"
        );
        for key in kg.keys() {
            if !key.relation.is_directional() {
                let a = Triplet::from_surface(&key.head, key.relation, &key.tail)
                    .unwrap()
                    .key();
                let b = Triplet::from_surface(&key.tail, key.relation, &key.head)
                    .unwrap()
                    .key();
                ensure!(
                    a == b && a == *key,
                    "case {case}: symmetric key not canonical"
                );
            }
        }
        let path = dir.path().join(format!("g{case}.jsonl"));
        kg.save(&path).map_err(|e| e.to_string())?;
        let back = KnowledgeGraph::load(&path).map_err(|e| e.to_string())?;
        ensure!(
            back == kg && back.to_jsonl() == kg.to_jsonl(),
            "case {case}: persist round-trip differs"
        );
        let fused = normalize_fused(&kg, &DEFAULT_PRIORITY);
        ensure!(
            fused.find_conflicts().is_empty(),
            "case {case}: conflicts remain after normalize_fused"
        );
    }
    Ok(format!(
        "100/100 random graphs; {:.2}s",
        start.elapsed().as_secs_f64()
    ))
}

// ---- 5. end-to-end determinism ----

fn build_into(out: &Path, parallelism: usize) -> Result<(), String> {
    let status = bin()
        .args(["build", "--config"])
        .arg(fixtures().join("build.toml"))
        .arg("--out-dir")
        .arg(out)
        .args(["--parallelism", &parallelism.to_string()])
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(
        status.status.success(),
        "build failed: {}",
        String::from_utf8_lossy(&status.stderr)
    );
    Ok(())
}

fn c5_determinism() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let golden = fs::read(fixtures().join("golden/kg.jsonl")).map_err(|e| e.to_string())?;
    for p in [1, 4] {
        let out = dir.path().join(format!("p{p}"));
        build_into(&out, p)?;
        let got = fs::read(out.join("kg.jsonl")).map_err(|e| e.to_string())?;
        ensure!(
            got == golden,
            "parallelism {p}: kg.jsonl differs from golden"
        );
    }
    let kg =
        KnowledgeGraph::load(&fixtures().join("golden/kg.jsonl")).map_err(|e| e.to_string())?;
    ensure!(kg.find_conflicts().is_empty(), "golden graph has conflicts");
    // The loader already rejects unknown relations; recount to be explicit.
    let counted: usize = kg.relation_counts().values().sum();
    ensure!(counted == kg.len(), "relations outside the 7-type set");
    within(start.elapsed(), 30)?;
    Ok(format!(
        "{} triplets byte-identical at parallelism 1 and 4, 0 conflicts; {:.2}s",
        kg.len(),
        start.elapsed().as_secs_f64()
    ))
}

// ---- 6. seed oracle ----

fn oracle_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for w in text.split_whitespace() {
        let t: String = w
            .trim_matches(|c: char| c.is_ascii_punctuation())
            .to_lowercase();
        if !t.is_empty() {
            out.push(t);
        }
    }
    out
}

fn c6_seeds() -> Outcome {
    let start = Instant::now();
    let corpus = ingest_corpus(
        &fixtures().join("toy_corpus.jsonl"),
        CorpusFormat::Jsonl,
        MalformedPolicy::Abort,
    )
    .map_err(|e| e.to_string())?
    .0;
    let e = HashEmbedder::new(256).unwrap();
    let params = SeedParams {
        k: 3,
        terms_per_cluster: 2,
        stoplist: Stoplist::english(),
        seed: 6,
    };
    let got: Vec<String> = generate_seed_concepts(&corpus, &e, &params)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|c| c.canonical)
        .collect();

    let clusters = cluster_corpus(&corpus, &e, params.k, params.seed).map_err(|e| e.to_string())?;
    let docs: Vec<Vec<Vec<String>>> = clusters
        .iter()
        .map(|c| {
            c.member_doc_ids
                .iter()
                .map(|id| oracle_tokens(&corpus.get(id).unwrap().text))
                .collect()
        })
        .collect();
    let count = |tokens: &[String], term: &[&str]| -> f64 {
        let mut n = 0.0;
        for i in 0..tokens.len() {
            if i + term.len() <= tokens.len() && (0..term.len()).all(|j| tokens[i + j] == term[j]) {
                n += 1.0;
            }
        }
        n
    };
    let words: f64 = docs.iter().flatten().map(|d| d.len() as f64).sum();
    let a = words / clusters.len() as f64;
    let stop = Stoplist::english();
    let mut expected: Vec<String> = Vec::new();
    for cluster_docs in &docs {
        let mut candidates: BTreeSet<String> = BTreeSet::new();
        for d in cluster_docs {
            for i in 0..d.len() {
                candidates.insert(d[i].clone());
                if i + 1 < d.len() {
                    candidates.insert(format!("{} {}", d[i], d[i + 1]));
                }
            }
        }
        let mut scored: Vec<(f64, String)> = Vec::new();
        for term in candidates {
            let parts: Vec<&str> = term.split(' ').collect();
            if stop.contains_word(parts[0])
                || stop.contains_word(parts[parts.len() - 1])
                || !term.chars().any(char::is_alphabetic)
            {
                continue;
            }
            let tf: f64 = cluster_docs.iter().map(|d| count(d, &parts)).sum();
            let f: f64 = docs.iter().flatten().map(|d| count(d, &parts)).sum();
            let w = tf * (1.0 + a / f).ln();
            if w > 0.0 {
                scored.push((w, term));
            }
        }
        scored.sort_by(|x, y| y.0.total_cmp(&x.0).then_with(|| x.1.cmp(&y.1)));
        for (_, t) in scored.into_iter().take(2) {
            if !expected.contains(&t) {
                expected.push(t);
            }
        }
    }
    // The library tokenizer must agree with the oracle one on this corpus.
    for d in corpus.documents() {
        ensure!(
            tokenize(&d.text) == oracle_tokens(&d.text),
            "tokenizers disagree on {}",
            d.id
        );
    }
    ensure!(got == expected, "seeds {got:?} vs oracle {expected:?}");
    within(start.elapsed(), 2)?;
    Ok(format!("{got:?}; {:.2}s", start.elapsed().as_secs_f64()))
}

// ---- 7. fusion behaviors ----

fn c7_fusion() -> Outcome {
    let kg =
        KnowledgeGraph::load(&fixtures().join("golden/kg.jsonl")).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = bin()
        .args(["extract", "--config"])
        .arg(fixtures().join("build.toml"))
        .arg("--out-dir")
        .arg(dir.path())
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(
        out.status.success(),
        "extract failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let zskg = KnowledgeGraph::load(&dir.path().join("zskg.jsonl")).map_err(|e| e.to_string())?;

    let (a, b) = ("neural summarization methods", "abstractive summarization");
    let before = zskg.between(a, b);
    let after = kg.between(a, b);
    ensure!(
        before.len() == 2,
        "fixture should carry a conflict, found {} triplets",
        before.len()
    );
    ensure!(
        after.len() == 1 && after[0].relation == RelationType::HyponymOf,
        "conflict pair fused to {after:?}"
    );

    ensure!(
        zskg.has_concept("nmt"),
        "fixture should extract the short form"
    );
    ensure!(!kg.has_concept("nmt"), "short form survives fusion");
    ensure!(
        kg.has_concept("neural machine translation"),
        "long form missing"
    );

    let novel = Triplet::from_surface("skip-gram", RelationType::IsAPrerequisiteOf, "doc2vec")
        .unwrap()
        .key();
    ensure!(
        !zskg.contains(&novel),
        "novel triplet already in the zero-shot graph"
    );
    let prov = kg.provenance(&novel).ok_or("novel triplet missing")?;
    ensure!(
        !prov.is_empty() && prov.iter().all(|p| p.stage == Stage::Fusion),
        "novel triplet provenance {prov:?}"
    );
    Ok("conflict pair -> 1 Hyponym-Of triplet; `nmt` merged away; novel prerequisite has fusion-only provenance".into())
}

// ---- 8. link prediction ----

fn c8_linkpred() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut items = Vec::new();
    let mut rules = Vec::new();
    // 0 = answers YES, 1 = answers NO, 2 = unparseable
    let mut script = Vec::new();
    for i in 0..40 {
        let a = format!("concept a{i}");
        let b = format!("concept b{i}");
        let label = rng.gen_bool(0.5);
        let kind = match i % 10 {
            9 => 2,
            _ => {
                if rng.gen_bool(0.75) == label {
                    0
                } else {
                    1
                }
            }
        };
        let response = [
            "After thinking: YES.",
            "NO, it is not.",
            "It depends on the curriculum.",
        ][kind];
        rules.push(ScriptRule {
            matcher: Matcher::Literal(format!("A: {a} and B: {b}")),
            response: response.to_string(),
        });
        items.push(LinkPredItem::new(&a, &b, label).map_err(|e| e.to_string())?);
        script.push(kind);
    }
    let backend = ScriptedBackend::new(rules, MissPolicy::Error);
    let run = LinkPredRun {
        variant: LpVariant::None,
        mode: DecisionMode::Plain,
        domain: "natural language processing",
        resources: LpResources::default(),
        parallelism: 4,
    };
    let (report, preds) = run_linkpred(&items, &backend, &run).map_err(|e| e.to_string())?;
    let labels: Vec<bool> = items.iter().map(|i| i.label).collect();
    let oracle_preds: Vec<bool> = script.iter().map(|k| *k == 0).collect();
    let (acc, f1) = confusion_oracle(&labels, &oracle_preds);
    ensure!(
        report.get("accuracy") == Some(acc) && report.get("f1") == Some(f1),
        "reported {:?} vs oracle ({acc}, {f1})",
        report.metrics
    );
    let unparseable = script.iter().filter(|k| **k == 2).count();
    ensure!(
        report.unparseable == unparseable,
        "unparseable {} vs {unparseable}",
        report.unparseable
    );
    ensure!(
        preds
            .iter()
            .zip(&script)
            .all(|(p, k)| *k != 2 || (!p.predicted && !p.parsed)),
        "unparseable answers not scored negative"
    );
    let direct = evaluate_linkpred(&items, &oracle_preds).map_err(|e| e.to_string())?;
    ensure!(
        direct.metrics == report.metrics,
        "evaluate_linkpred disagrees with the run"
    );

    let fwd = LinkPredItem::new("tokenization", "parsing", true).unwrap();
    let rev = LinkPredItem::new("parsing", "tokenization", false).unwrap();
    for mode in [DecisionMode::Plain, DecisionMode::Cot] {
        let x = lp_request(&fwd, LpVariant::None, mode, "", "nlp").map_err(|e| e.to_string())?;
        let y = lp_request(&rev, LpVariant::None, mode, "", "nlp").map_err(|e| e.to_string())?;
        ensure!(
            x.text != y.text,
            "(A,B) and (B,A) prompts are identical in {mode:?} mode"
        );
    }
    within(start.elapsed(), 5)?;
    Ok(format!(
        "40 pairs: accuracy {acc:.4}, F1 {f1:.4} match oracle; {unparseable} unparseable scored negative; {:.2}s",
        start.elapsed().as_secs_f64()
    ))
}

// ---- 9. TutorQA ----

fn c9_tutorqa() -> Outcome {
    let start = Instant::now();
    let qa = fixtures().join("tutorqa");
    let kg =
        KnowledgeGraph::load(&fixtures().join("golden/kg.jsonl")).map_err(|e| e.to_string())?;
    let e = HashEmbedder::new(256).unwrap();
    let oracle: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(qa.join("oracle.json")).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let mut summary = Vec::new();
    for task in [
        Task::RelationJudgment,
        Task::PrerequisitePrediction,
        Task::PathSearching,
        Task::SubgraphCompletion,
        Task::SimilarConcepts,
    ] {
        let n = task.number();
        let items = load_items(&qa.join(format!("t{n}.jsonl"))).map_err(|e| e.to_string())?;
        ensure!(items.len() == 10, "T{n} fixture has {} items", items.len());
        let backend = ScriptedBackend::load(
            &qa.join(format!("t{n}_transcript.jsonl")),
            MissPolicy::Error,
        )
        .map_err(|e| e.to_string())?;
        let run = run_task(
            task,
            &items,
            &kg,
            &backend,
            &e,
            "natural language processing",
            2,
        )
        .map_err(|e| e.to_string())?;
        let (name, want) = match task {
            Task::RelationJudgment => ("accuracy", oracle["t1_accuracy"].as_f64().unwrap()),
            Task::SubgraphCompletion => ("accuracy", oracle["t4_accuracy"].as_f64().unwrap()),
            Task::SimilarConcepts => ("hit_rate", oracle["t5_hit_rate"].as_f64().unwrap()),
            _ => {
                let predicted = oracle[format!("t{n}_predicted")].as_array().unwrap();
                let mut total = 0.0;
                for (item, pred) in items.iter().zip(predicted) {
                    let pred: Vec<String> = pred
                        .as_array()
                        .unwrap()
                        .iter()
                        .map(|v| v.as_str().unwrap().to_string())
                        .collect();
                    let Some(graphusion::tutorqa::Answer::Concepts(gold)) = &item.answer else {
                        return Err(format!("T{n} gold is not a concept list"));
                    };
                    total += similarity_oracle(&pred, gold, &e);
                }
                ("similarity", 100.0 * total / items.len() as f64)
            }
        };
        let got = run.report.get(name).ok_or(format!("T{n} has no {name}"))?;
        ensure!(
            (got - want).abs() <= 1e-6,
            "T{n} {name} {got} vs oracle {want}"
        );
        summary.push(format!("T{n} {name} {got:.4}"));
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = bin()
        .args(["qa", "--task", "6", "--data"])
        .arg(qa.join("t6.jsonl"))
        .arg("--kg")
        .arg(fixtures().join("golden/kg.jsonl"))
        .arg("--transcript")
        .arg(qa.join("t6_transcript.jsonl"))
        .arg("--out")
        .arg(dir.path().join("answers.jsonl"))
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(
        out.status.success(),
        "qa T6 failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let answers =
        fs::read_to_string(dir.path().join("answers.jsonl")).map_err(|e| e.to_string())?;
    ensure!(
        answers.lines().count() == 10,
        "T6 wrote {} answers",
        answers.lines().count()
    );
    ensure!(
        dir.path().join("task6_rubric.md").exists(),
        "T6 rubric not written"
    );
    summary.push("T6 10 answers + rubric".into());
    within(start.elapsed(), 10)?;
    Ok(format!(
        "{}; {:.2}s",
        summary.join(", "),
        start.elapsed().as_secs_f64()
    ))
}

// ---- 10. kg inspect ----

fn c10_inspect() -> Outcome {
    let out = bin()
        .args(["kg", "inspect", "--json"])
        .arg(fixtures().join("golden/kg.jsonl"))
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(
        out.status.success(),
        "inspect failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    let rows = v["relations"].as_array().ok_or("no relations array")?;
    ensure!(rows.len() == 7, "{} relation rows", rows.len());
    let total = v["triplets"].as_f64().ok_or("no triplet count")?;
    let mut sum = 0.0;
    let mut counted = 0.0;
    let mut names = BTreeMap::new();
    for r in rows {
        let count = r["count"].as_f64().unwrap();
        let pct = r["percent"].as_f64().unwrap();
        ensure!(
            (pct - 100.0 * count / total).abs() < 1e-9,
            "row {r} percent inconsistent"
        );
        sum += pct;
        counted += count;
        names.insert(r["relation"].as_str().unwrap().to_string(), count);
    }
    ensure!(
        counted == total,
        "row counts sum to {counted}, graph has {total}"
    );
    ensure!((sum - 100.0).abs() <= 0.1, "percentages sum to {sum}");
    Ok(format!(
        "7 relation rows over {total} triplets, percentages sum to {sum:.4}"
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("1 reproducibility statement", c1_statement),
        ("2 metric oracles", c2_metrics),
        ("3 parser round-trip", c3_parser),
        ("4 graph laws", c4_graph_laws),
        ("5 end-to-end determinism", c5_determinism),
        ("6 seed oracle", c6_seeds),
        ("7 fusion behaviors", c7_fusion),
        ("8 link-prediction harness", c8_linkpred),
        ("9 TutorQA harness", c9_tutorqa),
        ("10 kg inspect accounting", c10_inspect),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {name}: {why}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
