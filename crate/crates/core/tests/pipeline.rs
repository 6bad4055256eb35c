use std::collections::BTreeMap;

use ugmcs::dataio::{load_manifest, save_manifest, synth_generate};
use ugmcs::evalharness::{crossval, score_samples, CrossvalSpec, EvalConfig};
use ugmcs::losses::LossConfig;
use ugmcs::model::{net_forward, NetConfig, NetState};
use ugmcs::trainer::{fit, FitSpec, TrainConfig, TrainSet};
use ugmcs::Error;

fn tiny_train(epochs: usize) -> TrainConfig {
    TrainConfig {
        lr_max: 0.02,
        batch_size: 4,
        epochs,
        restart_period: epochs,
        seed: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn checkpoint_round_trip_restores_scores() {
    let samples = synth_generate(6, 3, 5).unwrap();
    let net = NetConfig::reduced(16, 2, 4);
    let train = tiny_train(2);
    let eval = EvalConfig::default();
    let tmp = tempfile::tempdir().unwrap();
    let spec = FitSpec {
        net: &net,
        train: &train,
        loss: &LossConfig::default(),
        eval: &eval,
        out_dir: Some(tmp.path()),
        tag: "all",
    };
    let out = fit(&samples, TrainSet::All, &spec).unwrap();
    let path = out.final_path.unwrap();
    let loaded = NetState::load(&path, Some(&net)).unwrap();
    let refs: Vec<_> = samples.iter().collect();
    assert_eq!(
        score_samples(&out.final_state, &refs, &eval).unwrap(),
        score_samples(&loaded, &refs, &eval).unwrap()
    );
    let other = NetConfig::reduced(16, 2, 8);
    assert!(matches!(NetState::load(&path, Some(&other)), Err(Error::Data(_) | Error::Config(_))));
}

#[test]
fn training_is_reproducible() {
    let samples = synth_generate(5, 2, 8).unwrap();
    let net = NetConfig::reduced(16, 2, 4);
    let train = tiny_train(3);
    let eval = EvalConfig::default();
    let spec = FitSpec {
        net: &net,
        train: &train,
        loss: &LossConfig::default(),
        eval: &eval,
        out_dir: None,
        tag: "all",
    };
    let a = fit(&samples, TrainSet::All, &spec).unwrap();
    let b = fit(&samples, TrainSet::All, &spec).unwrap();
    assert_eq!(a.epochs, b.epochs);
    assert_eq!(a.final_state.params(), b.final_state.params());
    assert!(a.epochs.last().unwrap().mean_loss < a.epochs[0].mean_loss * 1.5);
}

#[test]
fn crossval_covers_each_sample_once() {
    let samples = synth_generate(20, 3, 4).unwrap();
    let spec = CrossvalSpec {
        k: 2,
        seed: 6,
        net: NetConfig::reduced(16, 2, 4),
        train: tiny_train(1),
        loss: LossConfig::default(),
        eval: EvalConfig::default(),
    };
    let out = crossval(&samples, &spec, None).unwrap();
    let mut seen = BTreeMap::new();
    for r in &out.report.per_sample {
        *seen.entry(r.metrics.sample_id.clone()).or_insert(0) += 1;
        assert_eq!(out.split.fold_of(&r.metrics.sample_id), Some(r.fold));
    }
    assert_eq!(seen.len(), 20);
    assert!(seen.values().all(|&c| c == 1));
    assert_eq!(out.report.per_fold.len(), 2);
    assert_eq!(out.report.per_fold.iter().map(|s| s.n).sum::<usize>(), 20);
    assert_eq!(out.fold_models.len(), 2);
}

#[test]
fn manifest_round_trip_preserves_predictions() {
    let samples = synth_generate(3, 4, 12).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let path = save_manifest(&samples, tmp.path()).unwrap();
    let back = load_manifest(&path).unwrap();
    assert_eq!(samples, back);

    let state = NetState::init(&NetConfig::reduced(16, 2, 4), 1).unwrap();
    let eval = EvalConfig { annotation: 3, nsd_tolerance: 2.0 };
    let a = score_samples(&state, &samples.iter().collect::<Vec<_>>(), &eval).unwrap();
    let b = score_samples(&state, &back.iter().collect::<Vec<_>>(), &eval).unwrap();
    assert_eq!(a, b);
}

#[test]
fn default_network_matches_documented_shapes() {
    let cfg = NetConfig::default();
    let state = NetState::init(&cfg, 0).unwrap();
    let image = ugmcs::model::Tensor::zeros(3, 64, 64);
    let out = net_forward(&state, &image).unwrap();
    assert_eq!(out.r.shape(), (32, 64, 64));
    let uam = out.uam.unwrap();
    for t in [&uam.union_pred, &uam.inter_pred, &uam.x_uni, &out.x_s] {
        assert_eq!(t.shape(), (1, 64, 64));
    }
    assert_eq!(out.iucm.unwrap().r_final_channels, 128);
    assert_eq!(out.mcm.unwrap().grid.shape(), (64, 64));
}
