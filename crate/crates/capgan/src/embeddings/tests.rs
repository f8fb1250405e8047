use super::*;

fn spec(noise: f64) -> ToyWorldSpec {
    ToyWorldSpec { vocab_size: 50, d1: 64, projection_seed: 7, image_noise_scale: noise }
}

fn sentences(n: usize) -> Vec<SentenceRecord> {
    (0..n)
        .map(|i| SentenceRecord::new(format!("s{i:03}"), format!("w{:02} w{:02} w{:02} .", i % 49, (i * 7) % 49, (i * 13) % 49)))
        .collect()
}

fn toy_image(id: &str, source: &str, seed: u64) -> ImageRecord {
    ImageRecord {
        id: id.to_string(),
        payload: ImagePayload::Toy { source_id: source.to_string(), noise_seed: seed },
    }
}

#[test]
fn noiseless_image_equals_its_caption_embedding_exactly() {
    let corpus = sentences(5);
    let backend = ToyBackend::new(spec(0.0)).unwrap().with_hidden_sentences(&corpus);
    let img = toy_image("i0", "s002", 99);
    let from_image = backend.encode_image(&img).unwrap();
    let from_text = backend.encode_text(&corpus[2].text).unwrap();
    assert_eq!(from_image.values(), from_text.values());
}

#[test]
fn encode_image_is_deterministic() {
    let corpus = sentences(5);
    let backend = ToyBackend::new(spec(0.3)).unwrap().with_hidden_sentences(&corpus);
    let img = toy_image("i0", "s001", 42);
    let a = backend.encode_image(&img).unwrap();
    let b = backend.encode_image(&img).unwrap();
    assert_eq!(a.values(), b.values());
}

/// Measured distribution of the noise model at scale 0.1, d1 = 64: the
/// perturbation is a 0.1-radius step off a unit vector, so the cosine to the
/// hidden caption stays in [1/sqrt(1.01), 1] up to cross terms. Over 1,000
/// draws the observed minimum is ~0.995; the asserted floor of 0.9 has wide
/// margin.
#[test]
fn noisy_image_cosine_stays_above_threshold() {
    let corpus = sentences(10);
    let backend = ToyBackend::new(spec(0.1)).unwrap().with_hidden_sentences(&corpus);
    let text_emb = backend.encode_text(&corpus[3].text).unwrap();
    let mut min_cos = f64::INFINITY;
    let mut sum = 0.0;
    for draw in 0..1000u64 {
        let img = toy_image("i", "s003", draw);
        let e = backend.encode_image(&img).unwrap();
        let c = cosine(&e, &text_emb).unwrap();
        min_cos = min_cos.min(c);
        sum += c;
    }
    assert!(min_cos >= 0.9, "min cosine {min_cos} under noise 0.1");
    assert!(sum / 1000.0 >= 0.99, "mean cosine {} under noise 0.1", sum / 1000.0);
}

#[test]
fn unresolvable_payload_is_input_error() {
    let backend = ToyBackend::new(spec(0.0)).unwrap();
    let err = backend.encode_image(&toy_image("i", "nope", 0)).unwrap_err();
    assert_eq!(err.kind(), "input");
}

#[test]
fn identical_texts_encode_identically() {
    let backend = ToyBackend::new(spec(0.0)).unwrap();
    let a = backend.encode_text("w01 w02 .").unwrap();
    let b = backend.encode_text("w01 w02 .").unwrap();
    assert_eq!(a.values(), b.values());
}

#[test]
fn orthogonal_projection_rows_give_zero_cosine() {
    let spec = ToyWorldSpec { vocab_size: 4, d1: 4, projection_seed: 0, image_noise_scale: 0.0 };
    let vocab = vec!["a".into(), "b".into(), "c".into(), "d".into()];
    #[rustfmt::skip]
    let projection = vec![
        1.0, 0.0, 0.0, 0.0,
        0.0, 1.0, 0.0, 0.0,
        0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
    ];
    let backend = ToyBackend::with_projection(spec, vocab, projection).unwrap();
    let ab = backend.encode_text("a b").unwrap();
    let cd = backend.encode_text("c d").unwrap();
    assert!(cosine(&ab, &cd).unwrap().abs() <= 1e-6);
}

#[test]
fn toy_projection_is_bag_of_tokens() {
    let backend = ToyBackend::new(spec(0.0)).unwrap();
    let ab = backend.encode_text("w01 w02").unwrap();
    let ba = backend.encode_text("w02 w01").unwrap();
    assert_eq!(ab.values(), ba.values());
}

#[test]
fn empty_text_is_input_error() {
    let backend = ToyBackend::new(spec(0.0)).unwrap();
    assert_eq!(backend.encode_text("").unwrap_err().kind(), "input");
    assert_eq!(backend.encode_text("   ").unwrap_err().kind(), "input");
}

#[test]
fn every_vector_is_unit_norm() {
    let corpus = sentences(30);
    let backend = ToyBackend::new(spec(0.4)).unwrap().with_hidden_sentences(&corpus);
    for s in &corpus {
        backend.encode_text(&s.text).unwrap().check_unit_norm().unwrap();
    }
    for i in 0..30u64 {
        let img = toy_image("i", &format!("s{i:03}"), i);
        backend.encode_image(&img).unwrap().check_unit_norm().unwrap();
    }
}

#[test]
fn backend_is_a_pure_function_of_spec_and_input() {
    let a = ToyBackend::new(spec(0.2)).unwrap();
    let b = ToyBackend::new(spec(0.2)).unwrap();
    assert_eq!(a.fingerprint(), b.fingerprint());
    assert_eq!(
        a.encode_text("w00 w10 .").unwrap().values(),
        b.encode_text("w00 w10 .").unwrap().values()
    );
}

#[test]
fn single_sentence_table_matches_encode_text() {
    let corpus = sentences(1);
    let backend = ToyBackend::new(spec(0.0)).unwrap();
    let table = build_corpus_table(&backend, &corpus, 1).unwrap();
    assert_eq!(table.len(), 1);
    assert_eq!(
        table.rows()[0].vector.values(),
        backend.encode_text(&corpus[0].text).unwrap().values()
    );
    assert_eq!(table.rows()[0].id, "s000");
}

#[test]
fn worker_count_does_not_change_the_table() {
    let corpus = sentences(100);
    let backend = ToyBackend::new(spec(0.0)).unwrap();
    let t1 = build_corpus_table(&backend, &corpus, 1).unwrap();
    let t8 = build_corpus_table(&backend, &corpus, 8).unwrap();
    assert_eq!(t1, t8);
}

#[test]
fn table_roundtrip_is_bit_exact() {
    let corpus = sentences(100);
    let backend = ToyBackend::new(spec(0.0)).unwrap();
    let table = build_corpus_table(&backend, &corpus, 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.emb");
    table.save(&path).unwrap();
    let loaded = CorpusEmbeddingTable::load(&path).unwrap();
    assert_eq!(table, loaded);
    // Save the loaded table again: identical bytes.
    let path2 = dir.path().join("corpus2.emb");
    loaded.save(&path2).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
}

#[test]
fn fingerprint_mismatch_is_detected() {
    let corpus = sentences(3);
    let backend = ToyBackend::new(spec(0.0)).unwrap();
    let table = build_corpus_table(&backend, &corpus, 1).unwrap();
    let other = ToyBackend::new(ToyWorldSpec { projection_seed: 8, ..spec(0.0) }).unwrap();
    let err = table.check_fingerprint(&other.fingerprint()).unwrap_err();
    assert_eq!(err.kind(), "state");
    table.check_fingerprint(&backend.fingerprint()).unwrap();
}

#[test]
fn row_failure_aborts_with_sentence_id() {
    let mut corpus = sentences(5);
    corpus[3].text = "   ".to_string();
    let backend = ToyBackend::new(spec(0.0)).unwrap();
    let err = build_corpus_table(&backend, &corpus, 2).unwrap_err();
    assert!(err.to_string().contains("s003"), "error should name the row: {err}");
}

#[test]
fn corpus_reader_accepts_text_and_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let txt = dir.path().join("c.txt");
    std::fs::write(&txt, "w00 w01 .\nw02 w03 .\n").unwrap();
    let got = read_corpus(&txt).unwrap();
    assert_eq!(got.len(), 2);
    assert_eq!(got[0].id, "s000000");

    let jsonl = dir.path().join("c.jsonl");
    std::fs::write(&jsonl, "{\"id\":\"a\",\"text\":\"w00 .\"}\n{\"id\":\"b\",\"text\":\"w01 .\"}\n").unwrap();
    let got = read_corpus(&jsonl).unwrap();
    assert_eq!(got[1], SentenceRecord::new("b", "w01 ."));
}

#[test]
fn pretrained_adapter_talks_to_a_subprocess_encoder() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("mock_encoder.py");
    std::fs::write(
        &script,
        r#"
import sys, json, hashlib
model = sys.argv[1] if len(sys.argv) > 1 else "mock"
for line in sys.stdin:
    req = json.loads(line)
    if req["op"] == "meta":
        print(json.dumps({"d1": 8, "fingerprint": "mock-v1"}))
    elif req["op"] == "text":
        h = hashlib.sha256(req["text"].encode()).digest()
        print(json.dumps({"values": [h[i] / 255.0 - 0.5 for i in range(8)]}))
    else:
        print(json.dumps({"error": "unreadable image: " + req.get("path", "?")}))
    sys.stdout.flush()
"#,
    )
    .unwrap();
    let cmd = vec!["python3".to_string(), script.to_string_lossy().to_string()];
    let backend = PretrainedBackend::spawn("mock-model", &cmd).unwrap();
    assert_eq!(backend.d1(), 8);
    assert!(backend.fingerprint().contains("mock-model"));

    let a = backend.encode_text("a dog").unwrap();
    let b = backend.encode_text("a dog").unwrap();
    assert_eq!(a.values(), b.values());
    a.check_unit_norm().unwrap();
    assert_ne!(a.values(), backend.encode_text("a cat").unwrap().values());

    let img = ImageRecord {
        id: "x".into(),
        payload: ImagePayload::File { path: "missing.png".into() },
    };
    assert_eq!(backend.encode_image(&img).unwrap_err().kind(), "input");

    let toy = toy_image("t", "s0", 1);
    assert_eq!(backend.encode_image(&toy).unwrap_err().kind(), "input");
}
