use rtnet::corpus::{generate_synthetic_corpus, read_corpus, segment_conversation, write_corpus, SynthConfig};
use rtnet::dataset::{build_dataset, DatasetConfig};

fn small() -> SynthConfig {
    SynthConfig {
        pairs: 60,
        ..SynthConfig::default()
    }
}

#[test]
fn write_then_read_is_lossless() {
    let corpus = generate_synthetic_corpus(&small()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    write_corpus(&corpus, &path).unwrap();
    assert_eq!(read_corpus(&path).unwrap(), corpus);
}

#[test]
fn generation_is_seeded() {
    let a = generate_synthetic_corpus(&small()).unwrap();
    assert_eq!(a, generate_synthetic_corpus(&small()).unwrap());
    let mut other = small();
    other.seed = 2;
    assert_ne!(a, generate_synthetic_corpus(&other).unwrap());
}

#[test]
fn offsets_follow_the_configured_acts() {
    let cfg = SynthConfig::default();
    let corpus = generate_synthetic_corpus(&cfg).unwrap();
    let mut by_act: std::collections::BTreeMap<String, Vec<f64>> = Default::default();
    for conv in &corpus.conversations {
        let (_, pairs, _) = segment_conversation(conv).unwrap();
        for p in pairs {
            if let Some(a) = p.da_label.clone() {
                by_act.entry(a).or_default().push(p.offset_ms());
            }
        }
    }
    assert_eq!(by_act.values().map(Vec::len).sum::<usize>(), cfg.pairs);
    for spec in &cfg.acts {
        let v = &by_act[&spec.name];
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
        // 50 ms rounding adds about 14 ms of spread
        assert!((mean - spec.mean_ms).abs() < 20.0, "{} mean {mean}", spec.name);
        assert!((sd - spec.std_ms).abs() < 20.0, "{} sd {sd}", spec.name);
    }
}

#[test]
fn dataset_split_and_spans() {
    let corpus = generate_synthetic_corpus(&small()).unwrap();
    let d = build_dataset(&corpus, &DatasetConfig::default()).unwrap();
    assert_eq!(d.train.len() + d.test.len(), 60);
    assert_eq!(d.test.len(), 12);
    for ex in d.train.iter().chain(&d.test) {
        assert!(ex.r_start_bound <= ex.r_end);
        assert_eq!(ex.labels[ex.r_end], 1);
        assert_eq!(ex.labels.iter().filter(|&&l| l == 1).count(), 1);
        assert!(ex.act.is_some());
    }
}
