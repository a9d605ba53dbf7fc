mod common;

use cgvm_core::dataset::{load_dataset, Dataset};
use cgvm_core::imaging::{decode_bytes, encode_png, RgbImage};
use cgvm_core::metrics::semantic::FileStore;
use cgvm_core::net::HttpError;
use cgvm_core::pipeline::clients::*;
use cgvm_core::pipeline::stages::{run_detect, run_generate, run_summarize};
use cgvm_core::pipeline::eval::{merge_reports, read_report, EvalInputs};
use cgvm_core::pipeline::run::{ClientSpec, Stage, StageStatus};
use cgvm_core::pipeline::*;
use serde_json::Value;

fn corpus() -> Dataset {
    load_dataset(common::fixtures().join("corpus")).unwrap()
}

fn fixture_run() -> RunLayout {
    RunLayout::new(common::fixtures().join("corpus/runs/fixture"))
}

fn total_hops(d: &Dataset) -> usize {
    d.samples.iter().map(|s| s.hop_count()).sum()
}

fn png(w: u32, h: u32, seed: u8) -> Vec<u8> {
    encode_png(&RgbImage::from_fn(w, h, |x, y| [x as u8 ^ seed, y as u8, seed])).unwrap()
}

fn remote_config(summarizer: ClientSpec, generator: ClientSpec, detector: ClientSpec) -> RunConfig {
    RunConfig { summarizer, generator, detector, detection_side: 64, ..RunConfig::default() }
}

#[test]
fn stored_summaries_replay_the_manifest() {
    let d = corpus();
    let tmp = tempfile::tempdir().unwrap();
    let layout = RunLayout::new(tmp.path().join("r"));
    let mut rec = RunRecord::open_or_create(&layout, &d, &RunConfig::default()).unwrap();
    let first = run_summarize(&d, &layout, &mut rec, &StoredSummaries, 2).unwrap();
    assert_eq!((first.produced, first.reused, first.failures.len()), (total_hops(&d), 0, 0));
    for s in &d.samples {
        for k in 1..=s.hop_count() {
            assert_eq!(std::fs::read_to_string(layout.summary(&s.id, k)).unwrap(), s.summaries[k - 1]);
        }
    }
    let again = run_summarize(&d, &layout, &mut rec, &StoredSummaries, 2).unwrap();
    assert_eq!((again.produced, again.reused), (0, total_hops(&d)));
    let saved = RunRecord::load(&layout).unwrap();
    assert!(saved.samples.values().all(|s| s.stages[&Stage::Summarize] == StageStatus::Complete));
}

#[test]
fn stored_clients_fail_on_missing_artifacts() {
    let d = corpus();
    let tmp = tempfile::tempdir().unwrap();
    let layout = RunLayout::new(tmp.path().join("r"));
    let mut rec = RunRecord::open_or_create(&layout, &d, &RunConfig::default()).unwrap();
    let r = run_generate(&d, &layout, &mut rec, &StoredImages::new(layout.clone()), 1).unwrap();
    assert_eq!(r.failures.len(), total_hops(&d));
    let saved = RunRecord::load(&layout).unwrap();
    assert!(matches!(saved.samples["animal-1"].stages[&Stage::Generate], StageStatus::Failed { .. }));
}

#[test]
fn remote_summarizer_sends_the_transcript() {
    let server = common::MockServer::start(|n, _| (200, format!(r#"{{"choices":[{{"message":{{"content":" summary {n} "}}}}]}}"#).into_bytes()));
    let d = corpus();
    let sample = d.sample("cartoon-2").unwrap();
    let client = RemoteTextService::new(format!("{}/v1/chat/completions", server.base), Some("k".into()), "gpt-3.5-turbo", common::quick_http());
    assert_eq!(client.summarize(sample, 2).unwrap(), "summary 0");

    let req = &server.requests()[0];
    assert_eq!(req.url, "/v1/chat/completions");
    let body: Value = serde_json::from_slice(&req.body).unwrap();
    assert_eq!(body["model"], "gpt-3.5-turbo");
    assert_eq!(body["messages"][0]["role"], "user");
    let want = "Below is a conversation between Joe and Jill, about an image. Use this conversation to generate a \
                description of the image, such that it can be given as input to a text-to-image model as a prompt.\n\
                \nJoe: What does the picture show?\nJill: It is a cartoon picture with a rabbit on the left.\
                \nJoe: Is there anything else?\nJill: Yes, a balloon in the middle.";
    assert_eq!(body["messages"][0]["content"], want);
    assert!(matches!(client.summarize(sample, 3), Err(PipelineError::HopOutOfRange { .. })));
}

#[test]
fn remote_generator_persists_the_returned_bytes() {
    let server = common::MockServer::start(|n, _| (200, png(24, 24, n as u8)));
    let d = corpus();
    let tmp = tempfile::tempdir().unwrap();
    let layout = RunLayout::new(tmp.path().join("r"));
    let url = format!("{}/generate", server.base);
    let config = remote_config(ClientSpec::Stored, ClientSpec::Remote { url: url.clone(), model: None }, ClientSpec::Stored);
    let mut rec = RunRecord::open_or_create(&layout, &d, &config).unwrap();
    run_summarize(&d, &layout, &mut rec, &StoredSummaries, 1).unwrap();
    let client = RemoteImageService::new(url, None, common::quick_http(), layout.clone());
    let r = run_generate(&d, &layout, &mut rec, &client, 1).unwrap();
    assert_eq!((r.produced, r.failures.len()), (total_hops(&d), 0));

    let reqs = server.requests();
    assert_eq!(reqs.len(), total_hops(&d));
    let bodies: Vec<Value> = reqs.iter().map(|q| serde_json::from_slice(&q.body).unwrap()).collect();
    for s in &d.samples {
        for k in 1..=s.hop_count() {
            let (n, body) = bodies.iter().enumerate().find(|(_, b)| b["seed"] == derive_seed(0, &s.id, k)).unwrap();
            assert_eq!(body["prompt"], s.summaries[k - 1].as_str());
            assert_eq!((body["width"].as_u64(), body["height"].as_u64()), (Some(512), Some(512)));
            assert_eq!(std::fs::read(layout.image(&s.id, k)).unwrap(), png(24, 24, n as u8));
        }
    }
}

#[test]
fn remote_generator_reencodes_other_formats() {
    let jpeg = {
        let img = image::RgbImage::from_fn(16, 16, |x, _| image::Rgb([x as u8 * 10, 0, 0]));
        let mut out = std::io::Cursor::new(Vec::new());
        img.write_to(&mut out, image::ImageFormat::Jpeg).unwrap();
        out.into_inner()
    };
    let server = common::MockServer::start(move |_, _| (200, jpeg.clone()));
    let tmp = tempfile::tempdir().unwrap();
    let layout = RunLayout::new(tmp.path());
    let client = RemoteImageService::new(&server.base, None, common::quick_http(), layout.clone());
    let req = GenerationRequest { sample_id: "s", hop: 1, prompt: "a red gradient", width: 16, height: 16, seed: 1 };
    let img = generate_image(&client, &req).unwrap();
    let stored = std::fs::read(layout.image("s", 1)).unwrap();
    assert!(stored.starts_with(b"\x89PNG"));
    assert_eq!(decode_bytes(&stored).unwrap(), img);
    let empty = GenerationRequest { prompt: "  ", ..req };
    assert!(matches!(generate_image(&client, &empty), Err(PipelineError::EmptySummary { .. })));
}

#[test]
fn remote_detector_standardizes_and_records() {
    let server = common::MockServer::start(|_, seen| {
        let img = decode_bytes(&seen.body).unwrap();
        let body = format!(
            r#"{{"image_id":"x","origin":"detector:mock","instances":[{{"label":"Dogs","score":0.95,"bbox":[1,2,{},{}]}}]}}"#,
            img.width() - 2,
            img.height() - 3
        );
        (200, body.into_bytes())
    });
    let d = corpus();
    let tmp = tempfile::tempdir().unwrap();
    let layout = RunLayout::new(tmp.path().join("r"));
    common::copy_tree(fixture_run().dir(), layout.dir());
    std::fs::remove_file(layout.record()).unwrap();
    for s in &d.samples {
        for k in 1..=s.hop_count() {
            std::fs::remove_file(layout.detections(&s.id, k)).unwrap();
        }
    }
    let url = server.base.clone();
    let config = remote_config(ClientSpec::Stored, ClientSpec::Stored, ClientSpec::Remote { url: url.clone(), model: None });
    let mut rec = RunRecord::open_or_create(&layout, &d, &config).unwrap();
    let r = run_detect(&d, &layout, &mut rec, &RemoteDetector::new(url, common::quick_http(), layout.clone(), 64), 2).unwrap();
    assert!(r.failures.is_empty());
    let file = read_detection_file(&layout.detections("human-2", 3)).unwrap();
    assert_eq!((file.side, file.image_id.as_str()), (Some(64), "human-2/hop_3"));
    assert_eq!(<[f64; 4]>::from(file.instances[0].bbox), [1.0, 2.0, 62.0, 61.0]);
    assert!(server.requests().iter().all(|q| q.headers.iter().any(|(k, v)| k.eq_ignore_ascii_case("content-type") && v == "image/png")));
}

#[test]
fn interrupted_stage_resumes() {
    // The first request fails for good; everything else succeeds.
    let server = common::MockServer::start(|n, _| if n == 0 { (400, b"no".to_vec()) } else { (200, png(8, 8, 1)) });
    let d = corpus();
    let tmp = tempfile::tempdir().unwrap();
    let layout = RunLayout::new(tmp.path().join("r"));
    let url = server.base.clone();
    let config = remote_config(ClientSpec::Stored, ClientSpec::Remote { url: url.clone(), model: None }, ClientSpec::Stored);
    let mut rec = RunRecord::open_or_create(&layout, &d, &config).unwrap();
    run_summarize(&d, &layout, &mut rec, &StoredSummaries, 1).unwrap();
    let client = RemoteImageService::new(url, None, common::quick_http(), layout.clone());

    let first = run_generate(&d, &layout, &mut rec, &client, 1).unwrap();
    assert_eq!((first.produced, first.failures.len()), (total_hops(&d) - 1, 1));
    let failed = &first.failures[0].sample_id;
    let saved = RunRecord::load(&layout).unwrap();
    assert!(matches!(saved.samples[failed].stages[&Stage::Generate], StageStatus::Failed { .. }));

    let mut reopened = RunRecord::open_or_create(&layout, &d, &config).unwrap();
    let second = run_generate(&d, &layout, &mut reopened, &client, 1).unwrap();
    assert_eq!((second.produced, second.reused, second.failures.len()), (1, total_hops(&d) - 1, 0));
    assert_eq!(server.requests().len(), total_hops(&d) + 1);
    let saved = RunRecord::load(&layout).unwrap();
    assert!(saved.samples.values().all(|s| s.stages[&Stage::Generate] == StageStatus::Complete));
}

#[test]
fn run_is_bound_to_its_configuration() {
    let d = corpus();
    let tmp = tempfile::tempdir().unwrap();
    let layout = RunLayout::new(tmp.path().join("r"));
    RunRecord::open_or_create(&layout, &d, &RunConfig::default()).unwrap();
    let other = RunConfig { seed: 5, ..RunConfig::default() };
    assert!(matches!(RunRecord::open_or_create(&layout, &d, &other), Err(PipelineError::Config(_))));
}

#[test]
fn retries_server_errors_only() {
    let flaky = common::MockServer::start(|n, _| if n == 0 { (503, b"busy".to_vec()) } else { (200, b"ok".to_vec()) });
    assert_eq!(common::quick_http().post(&flaky.base, "text/plain", None, b"x").unwrap(), b"ok");
    assert_eq!(flaky.requests().len(), 2);

    let bad = common::MockServer::start(|_, _| (400, b"bad request".to_vec()));
    match common::quick_http().post(&bad.base, "text/plain", None, b"x") {
        Err(HttpError::Status { status: 400, .. }) => {}
        other => panic!("{other:?}"),
    }
    assert_eq!(bad.requests().len(), 1);

    let down = common::MockServer::start(|_, _| (500, Vec::new()));
    assert!(common::quick_http().post(&down.base, "text/plain", None, b"x").is_err());
    assert_eq!(down.requests().len(), 4);
}

#[test]
fn derived_seeds_are_stable_and_32_bit() {
    assert_eq!(derive_seed(3, "a", 1), derive_seed(3, "a", 1));
    assert_ne!(derive_seed(3, "a", 1), derive_seed(3, "a", 2));
    assert_ne!(derive_seed(3, "a", 1), derive_seed(4, "a", 1));
    assert!((0..200).all(|i| derive_seed(i, "sample", 3) < 1 << 32));
}

fn missing_paths(err: PipelineError) -> Vec<String> {
    match err {
        PipelineError::IncompleteRun(list) => list,
        other => panic!("{other:?}"),
    }
}

#[test]
fn evaluation_requires_every_artifact() {
    let d = corpus();
    let tmp = tempfile::tempdir().unwrap();
    let layout = RunLayout::new(tmp.path().join("r"));
    common::copy_tree(fixture_run().dir(), layout.dir());
    std::fs::remove_file(layout.image("nature-2", 2)).unwrap();
    let config = EvalConfig { metrics: [MetricFamily::Psnr].into(), ..EvalConfig::default() };
    let err = evaluate_run(&d, &layout, &config, EvalInputs::default()).unwrap_err();
    let missing = missing_paths(err);
    assert_eq!(missing.len(), 1);
    assert!(missing[0].contains("nature-2") && missing[0].contains("hop_2.png"));
}

#[test]
fn report_cardinality_and_order() {
    let d = corpus();
    let store = FileStore::open(common::fixtures().join("corpus/embeddings.txt"), None).unwrap();
    let config = EvalConfig { side: 128, ..EvalConfig::default() };
    let inputs = EvalInputs { brisque_model: None, embeddings: Some(&store) };
    let report = evaluate_run(&d, &fixture_run(), &config, inputs).unwrap();
    let outputs: usize = config.metrics.iter().map(|m| m.outputs().len()).sum();
    assert_eq!(outputs, 15);
    assert_eq!(report.rows.len(), total_hops(&d) * outputs);
    assert!(report.errors.is_empty());
    for (i, s) in d.samples.iter().enumerate() {
        assert_eq!(report.rows.iter().filter(|r| r.sample_id == s.id).count(), s.hop_count() * outputs);
        let first = report.rows.iter().position(|r| r.sample_id == s.id).unwrap();
        let before: usize = d.samples[..i].iter().map(|p| p.hop_count() * outputs).sum();
        assert_eq!(first, before);
    }

    let out = tempfile::tempdir().unwrap();
    write_report(&report, out.path()).unwrap();
    for f in ["report.csv", "aggregate.json", "plotdata.csv", "errors.json"] {
        assert!(out.path().join(f).is_file(), "{f}");
    }
    let back = read_report(out.path()).unwrap();
    assert_eq!(back.rows.len(), report.rows.len());
    let agg: Value = serde_json::from_str(&std::fs::read_to_string(out.path().join("aggregate.json")).unwrap()).unwrap();
    let table = agg["table"].as_array().unwrap();
    for variant in ["Common-IoU", "Precision-IoU", "Recall-IoU"] {
        let row = table.iter().find(|r| r["title"] == variant).unwrap();
        assert!(row["mean"].is_number() && row["std"].is_number() && row["maximum"].is_number(), "{agg:#}");
    }
}

#[test]
fn merging_refuses_mismatched_snapshots() {
    let d = corpus();
    let run = fixture_run();
    let base = EvalConfig { metrics: [MetricFamily::Psnr].into(), side: 64, ..EvalConfig::default() };
    let a = evaluate_run(&d, &run, &base, EvalInputs::default()).unwrap();
    let b = evaluate_run(&d, &run, &EvalConfig { side: 32, ..base.clone() }, EvalInputs::default()).unwrap();
    assert!(matches!(merge_reports(vec![a.clone(), b]), Err(PipelineError::Config(_))));
    assert!(matches!(merge_reports(vec![a.clone(), a]), Err(PipelineError::Config(_))));
}
