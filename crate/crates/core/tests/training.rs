use nornet::budget::solve_hidden_size;
use nornet::data::{EmbeddingTable, Sample, Vocabulary};
use nornet::model::{HeadConfig, LayerFamily, Model, ModelConfig};
use nornet::synthetic::{entity_task, keyword_task};
use nornet::train::{evaluate, train, Metric, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Setup {
    emb: EmbeddingTable,
    samples: Vec<Sample>,
}

fn keyword_setup(n: usize, dim: usize) -> Setup {
    let corpus = keyword_task(n, 4, 3);
    let vocab = Vocabulary::build(corpus.tokens());
    let emb = EmbeddingTable::random(&vocab, dim, 1.0, &mut ChaCha8Rng::seed_from_u64(11));
    Setup {
        samples: corpus.samples(&vocab),
        emb,
    }
}

fn classifier(family: LayerFamily, dim: usize, hidden: usize) -> ModelConfig {
    ModelConfig {
        input_dim: dim,
        hidden,
        layers: 1,
        bidirectional: false,
        family,
        head: HeadConfig::Softmax { classes: 4 },
        irnn_std: 0.001,
    }
}

fn quick(seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.01,
        batch_size: 8,
        max_epochs: 4,
        dropout: 0.3,
        patience: 10,
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_patience_runs_one_epoch() {
    let s = keyword_setup(32, 8);
    let mut model = Model::new(classifier(LayerFamily::MA, 8, 4), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let cfg = TrainConfig { patience: 0, ..quick(1) };
    let out = train(&mut model, &s.emb, &s.samples, &s.samples, &Metric::Accuracy, &cfg).unwrap();
    assert_eq!(out.log.len(), 1);
}

#[test]
fn fixed_seed_reproduces_trace_bit_for_bit() {
    let s = keyword_setup(40, 8);
    let run = |threads: usize| {
        let mut model = Model::new(classifier(LayerFamily::GATE, 8, 4), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let cfg = TrainConfig { threads, ..quick(9) };
        let out = train(&mut model, &s.emb, &s.samples, &s.samples, &Metric::Accuracy, &cfg).unwrap();
        let params: Vec<u64> = model.store.iter().flat_map(|(_, _, t)| t.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>()).collect();
        (out.metric_csv(), params)
    };
    let a = run(1);
    assert_eq!(a, run(1));
    assert_eq!(a, run(3));
}

#[test]
fn best_checkpoint_is_never_worse_than_earlier_epochs() {
    let s = keyword_setup(48, 8);
    let (tr, dev) = s.samples.split_at(32);
    let mut model = Model::new(classifier(LayerFamily::Irnn, 8, 6), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let cfg = TrainConfig { max_epochs: 8, learning_rate: 0.05, ..quick(4) };
    let out = train(&mut model, &s.emb, tr, dev, &Metric::Accuracy, &cfg).unwrap();
    for r in &out.log {
        assert!(out.best_metric >= r.dev_metric);
    }
    assert_eq!(out.log[out.best_epoch - 1].dev_metric, out.best_metric);
    let restored = evaluate(&model, &s.emb, dev, &Metric::Accuracy, out.pad_len).unwrap();
    assert_eq!(restored, out.best_metric);
}

#[test]
fn embeddings_are_untouched_by_training() {
    let s = keyword_setup(24, 8);
    let before = s.emb.checksum();
    let mut model = Model::new(classifier(LayerFamily::Lstm, 8, 4), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    train(&mut model, &s.emb, &s.samples, &s.samples, &Metric::Accuracy, &quick(0)).unwrap();
    assert_eq!(s.emb.checksum(), before);
}

#[test]
fn ma_overfits_synthetic_task() {
    let dim = 32;
    let s = keyword_setup(64, dim);
    let mut cfg = classifier(LayerFamily::MA, dim, 1);
    let sizing = solve_hidden_size(&cfg, 20_000).unwrap();
    cfg.hidden = sizing.hidden;
    let mut model = Model::new(cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let tc = TrainConfig {
        learning_rate: 0.005,
        batch_size: 8,
        max_epochs: 200,
        dropout: 0.0,
        patience: 200,
        target_metric: Some(1.0),
        seed: 1,
        ..TrainConfig::default()
    };
    let out = train(&mut model, &s.emb, &s.samples, &s.samples, &Metric::Accuracy, &tc).unwrap();
    assert_eq!(out.best_metric, 1.0, "{}", out.metric_csv());
}

#[test]
fn crf_tagger_learns_entity_task() {
    let corpus = entity_task(60, 2);
    let vocab = Vocabulary::build(corpus.tokens());
    let emb = EmbeddingTable::random(&vocab, 8, 1.0, &mut ChaCha8Rng::seed_from_u64(3));
    let samples = corpus.samples(&vocab);
    let cfg = ModelConfig {
        input_dim: 8,
        hidden: 6,
        layers: 1,
        bidirectional: true,
        family: LayerFamily::MA,
        head: HeadConfig::Crf { tags: corpus.num_tags() },
        irnn_std: 0.001,
    };
    let mut model = Model::new(cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let tc = TrainConfig {
        learning_rate: 0.01,
        batch_size: 10,
        max_epochs: 30,
        dropout: 0.0,
        patience: 30,
        lr_decay: 0.95,
        target_metric: Some(0.9),
        ..TrainConfig::default()
    };
    let metric = Metric::EntityF1(corpus.tag_names.clone());
    let out = train(&mut model, &emb, &samples, &samples, &metric, &tc).unwrap();
    assert!(out.best_metric >= 0.9, "{}", out.metric_csv());
    assert!(out.log.windows(2).all(|w| w[1].lr < w[0].lr));
}

#[test]
fn empty_training_set_is_an_error() {
    let s = keyword_setup(4, 4);
    let mut model = Model::new(classifier(LayerFamily::Irnn, 4, 2), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert!(train(&mut model, &s.emb, &[], &s.samples, &Metric::Accuracy, &quick(0)).is_err());
}
