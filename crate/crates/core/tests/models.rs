use genformer_core::neural::checkpoint::{export, import};
use genformer_core::neural::embed::VALUE_KERNEL;
use genformer_core::neural::train::TrainConfig;
use genformer_core::neural::{AdamConfig, LrSchedule};
use genformer_core::rng::{seeded, standard_normal};
use genformer_core::seq2seq::{GenFormerConfig, GenFormerModel};
use genformer_core::series::{build_dataset, MarkovStateSequence, Realization, Space, TimeSeriesMatrix, TimeStampVector};
use genformer_core::stategen::{StateGenConfig, StateGenModel};
use genformer_core::Tensor;

fn realization(len: usize, seed: u64) -> Realization {
    let mut rng = seeded(seed);
    let data = Tensor::from_fn(2, len, |i, j| (0.3 * j as f64 + i as f64).sin() + 0.2 * standard_normal(&mut rng));
    let states = (0..len).map(|j| (j / 3) % 4).collect();
    Realization::new(
        TimeSeriesMatrix::regular(data, Space::Gaussian, 0.01).unwrap(),
        MarkovStateSequence::new(states, 4).unwrap(),
    )
    .unwrap()
}

fn train_cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        schedule: LrSchedule::constant(3e-3),
        max_epochs: epochs,
        batch_size: 8,
        patience: epochs,
        seed: 1,
        max_steps: None,
        adam: AdamConfig::default(),
    }
}

#[test]
fn trained_seq2seq_survives_a_checkpoint_round_trip() {
    let cfg = GenFormerConfig {
        m: 2,
        n_states: 4,
        q_enc_in: 8,
        q_dec_in: 4,
        q_out: 4,
        d_model: 8,
        d_ff: 16,
        n_head: 2,
        n_enc: 1,
        n_dec: 1,
        dropout: 0.1,
        kernel: VALUE_KERNEL,
        calendar: None,
    };
    let train = build_dataset(&[realization(60, 1)], 8, 4).unwrap();
    let val = build_dataset(&[realization(30, 2)], 8, 4).unwrap();
    let mut m = GenFormerModel::new(cfg.clone(), 3).unwrap();
    let first = m.predict(&val[0]).unwrap();
    let report = m.fit(&train, &val, &train_cfg(3)).unwrap();
    assert_eq!(report.epochs.len(), 3);
    assert_ne!(m.predict(&val[0]).unwrap(), first);

    let (layout, blobs) = export(&m.store);
    let mut fresh = GenFormerModel::new(cfg, 99).unwrap();
    import(&mut fresh.store, &layout, &blobs).unwrap();
    let r = realization(40, 4);
    let init = r.slice(0..8);
    let rest = r.slice(8..40);
    let a = m.infer_autoregressive(init.series.data(), init.states.states(), init.series.stamps(), rest.states.states(), rest.series.stamps());
    let b = fresh.infer_autoregressive(init.series.data(), init.states.states(), init.series.stamps(), rest.states.states(), rest.series.stamps());
    assert_eq!(a.unwrap(), b.unwrap());
}

#[test]
fn trained_state_generator_survives_a_checkpoint_round_trip() {
    let cfg = StateGenConfig {
        n_states: 4,
        order: 3,
        d_model: 8,
        d_ff: 16,
        n_head: 2,
        n_blocks: 1,
        dropout: 0.0,
        focal_gamma: 2.0,
        tail_class_weight: 1.3,
        n_tail: 1,
        calendar: None,
    };
    let mut m = StateGenModel::new(cfg.clone(), 5).unwrap();
    m.fit(&[realization(80, 6)], &[realization(30, 7)], &train_cfg(2)).unwrap();
    let (layout, blobs) = export(&m.store);
    let mut fresh = StateGenModel::new(cfg, 50).unwrap();
    import(&mut fresh.store, &layout, &blobs).unwrap();
    let stamps = TimeStampVector::regular(0.0, 0.01, 3);
    let a = m.generate(&[0, 1, 1], &stamps, 50, 8).unwrap();
    assert_eq!(a, fresh.generate(&[0, 1, 1], &stamps, 50, 8).unwrap());
    let p = m.probabilities(&[2, 3, 3], &TimeStampVector::regular(0.0, 0.01, 4)).unwrap();
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}
