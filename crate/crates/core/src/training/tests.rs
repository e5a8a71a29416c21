use super::*;
use crate::data::synth_two_domain;
use crate::model::{init_model, ModelSpec};

fn setup(n_per_class: usize, seed: u64) -> (LspModel, Dataset) {
    let ds = synth_two_domain(n_per_class, seed).unwrap();
    let spec = ModelSpec::new(ds.n_features(), 2, 8, 2);
    (init_model(&spec, seed).unwrap(), ds)
}

fn config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        seed: 3,
        ..TrainConfig::default()
    }
}

fn mean_ce(probs: &Tensor, s: &[usize]) -> f64 {
    s.iter().enumerate().map(|(i, &c)| -probs.get(i, c).ln()).sum::<f64>() / s.len() as f64
}

fn mse_oracle(a: &Tensor, b: &Tensor) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64
}

#[test]
fn degenerate_weights_leave_the_autoencoder_loss() {
    let (model, ds) = setup(20, 1);
    let cfg = TrainConfig {
        lambda_priv: 0.0,
        alpha_sens: 0.0,
        ..config(1)
    };
    let s = ds.sensitive().unwrap();
    let l = loss_total(&model, &ds.x, s, &cfg).unwrap();
    let recon = model.decode(&model.encode(&ds.x).unwrap()).unwrap();
    assert!((l.recon - mse_oracle(&recon, &ds.x)).abs() < 1e-12);
    assert_eq!(l.total, l.recon + l.adv);
}

#[test]
fn loss_matches_independent_forward_passes() {
    let (model, ds) = setup(20, 4);
    let s = ds.sensitive().unwrap();
    let cfg = TrainConfig {
        alpha_sens: 0.7,
        ..config(1)
    };
    let code = model.encode(&ds.x).unwrap();
    let recon = mse_oracle(&model.decode(&code).unwrap(), &ds.x);
    let sens = mean_ce(&model.predict_sensitive(code.z_s.as_ref().unwrap()).unwrap(), s);
    let adv = mean_ce(&model.discriminate(&code.z_ns, None).unwrap(), s);
    let l = loss_total(&model, &ds.x, s, &cfg).unwrap();
    assert!((l.recon - recon).abs() < 1e-10);
    assert!((l.sens - sens).abs() < 1e-10);
    assert!((l.adv - adv).abs() < 1e-10);
    assert!((l.total - (recon + 0.7 * sens + adv)).abs() < 1e-10);
}

#[test]
fn components_are_non_negative() {
    let (model, ds) = setup(20, 2);
    let l = loss_total(&model, &ds.x, ds.sensitive().unwrap(), &config(1)).unwrap();
    assert!(l.recon >= 0.0 && l.sens >= 0.0 && l.adv >= 0.0);
}

#[test]
fn label_out_of_range_names_the_row() {
    let (model, mut ds) = setup(20, 1);
    ds.s.as_mut().unwrap()[13] = 5;
    match train(model, &ds, &config(1), None) {
        Err(TrainError::Label { row, label, classes }) => assert_eq!((row, label, classes), (13, 5, 2)),
        other => panic!("expected a label error, got {other:?}"),
    }
}

#[test]
fn nan_input_aborts_with_coordinates() {
    let (model, mut ds) = setup(20, 1);
    let cols = ds.x.cols();
    ds.x.data_mut()[7 * cols] = f64::NAN;
    let cfg = config(2);
    let batch = epoch_order(ds.len(), cfg.seed, 0).iter().position(|&r| r == 7).unwrap() / cfg.batch_size;
    match train(model, &ds, &cfg, None) {
        Err(TrainError::NonFinite { epoch, batch: b }) => assert_eq!((epoch, b), (0, batch)),
        other => panic!("expected a non-finite error, got {other:?}"),
    }
}

#[test]
fn one_step_per_batch() {
    let (mut model, ds) = setup(50, 1);
    assert_eq!(ds.len(), 100);
    let cfg = config(1);
    let mut opt = AdamState::new(cfg.adam());
    train_epoch(&mut model, &ds, &cfg, &mut opt, 0).unwrap();
    assert_eq!(opt.steps(), 4);
}

#[test]
fn epoch_order_is_a_permutation_reproducible_per_epoch() {
    let a = epoch_order(50, 9, 3);
    let mut sorted = a.clone();
    sorted.sort_unstable();
    assert_eq!(sorted, (0..50).collect::<Vec<_>>());
    assert_eq!(a, epoch_order(50, 9, 3));
    assert_ne!(a, epoch_order(50, 9, 4));
}

#[test]
fn same_seed_same_history_and_weights() {
    let (m1, ds) = setup(25, 6);
    let (m2, _) = setup(25, 6);
    let (a, ha) = train(m1, &ds, &config(3), None).unwrap();
    let (b, hb) = train(m2, &ds, &config(3), None).unwrap();
    assert_eq!(ha.len(), 3);
    assert!(ha.iter().zip(&hb).all(|(x, y)| x.same_outcome(y)));
    assert_eq!(a.params(), b.params());
}

#[test]
fn history_has_one_entry_per_epoch() {
    let (m, ds) = setup(10, 2);
    let (_, h) = train(m, &ds, &config(1), None).unwrap();
    assert_eq!(h.len(), 1);
    assert_eq!(h[0].epoch, 0);
}

#[test]
fn parameters_stay_representable_in_f32() {
    let (m, ds) = setup(10, 2);
    let (m, _) = train(m, &ds, &config(2), None).unwrap();
    for p in m.params() {
        assert!(p.value.data().iter().all(|&v| v as f32 as f64 == v), "{}", p.name);
    }
}

#[test]
fn latent_split_must_match_config() {
    let (m, ds) = setup(10, 2);
    let cfg = TrainConfig {
        z_ns_dim: 4,
        ..config(1)
    };
    assert!(matches!(train(m, &ds, &cfg, None), Err(TrainError::Config(_))));
}

#[test]
fn invalid_configs_rejected() {
    for cfg in [
        TrainConfig {
            lambda_priv: -0.1,
            ..config(1)
        },
        TrainConfig {
            alpha_sens: f64::NAN,
            ..config(1)
        },
        TrainConfig { epochs: 0, ..config(1) },
        TrainConfig {
            batch_size: 0,
            ..config(1)
        },
        TrainConfig {
            learning_rate: 0.0,
            ..config(1)
        },
        TrainConfig {
            disc_lr_scale: 0.0,
            ..config(1)
        },
    ] {
        assert!(cfg.validate().is_err(), "{cfg:?}");
    }
}

#[test]
fn checkpoints_follow_the_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let (m, ds) = setup(10, 2);
    let cfg = TrainConfig {
        checkpoint_every: 2,
        ..config(5)
    };
    let (trained, _) = train(m, &ds, &cfg, Some(dir.path())).unwrap();
    let mut names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["checkpoint_epoch_2.lspm", "checkpoint_epoch_4.lspm"]);
    let loaded = crate::data::load_model(&dir.path().join("checkpoint_epoch_4.lspm")).unwrap();
    assert_eq!(loaded.spec, trained.spec);
}

/// With λ = 0 the encoder's gradient must equal that of the graph without
/// the discriminator branch, while the discriminator still receives its own.
#[test]
fn zero_lambda_partitions_gradients() {
    let (model, ds) = setup(20, 8);
    let s = ds.sensitive().unwrap().to_vec();
    let alpha = 0.9;

    let mut tape = Tape::new();
    let vars = model.bind(&mut tape);
    let l = record_loss(&model, &mut tape, &vars, &ds.x, &s, 0.0, alpha, None).unwrap();
    let full = tape.backward(l.total).unwrap();

    let mut ref_tape = Tape::new();
    let ref_vars = model.bind(&mut ref_tape);
    let xv = ref_tape.constant(ds.x.clone());
    let z = model.encode_var(&mut ref_tape, &ref_vars.encoder, xv).unwrap();
    let out = model
        .decoder
        .forward(&mut ref_tape, &ref_vars.decoder, z, None)
        .unwrap();
    let recon = ref_tape.mse(out, xv).unwrap();
    let z_s = ref_tape.slice_cols(z, 0, 2).unwrap();
    let head = model.sens_head.as_ref().unwrap();
    let logits = head
        .forward(&mut ref_tape, ref_vars.sens_head.as_ref().unwrap(), z_s, None)
        .unwrap();
    let ce = ref_tape.softmax_cross_entropy(logits, &s).unwrap();
    let weighted = ref_tape.scale(ce, alpha);
    let total = ref_tape.add(recon, weighted).unwrap();
    let reference = ref_tape.backward(total).unwrap();

    for (a, b) in vars.encoder.vars().zip(ref_vars.encoder.vars()) {
        let (ga, gb) = (full.get(a).unwrap(), reference.get(b).unwrap());
        for (x, y) in ga.data().iter().zip(gb.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
    let disc_grad_norm: f64 = vars
        .discriminator
        .vars()
        .map(|v| full.get(v).unwrap().data().iter().map(|g| g * g).sum::<f64>())
        .sum();
    assert!(disc_grad_norm > 0.0);
}

#[test]
fn reconstruction_loss_decays() {
    let (m, ds) = setup(100, 7);
    let (_, h) = train(m, &ds, &config(50), None).unwrap();
    let first = h[0].recon_loss;
    let last = h[49].recon_loss;
    assert!(last < 0.25 * first, "{first} -> {last}");
}

#[test]
fn privacy_weight_lowers_discriminator_accuracy() {
    let (m0, ds) = setup(100, 5);
    let (m1, _) = setup(100, 5);
    let run = |m, lambda| {
        let cfg = TrainConfig {
            lambda_priv: lambda,
            ..config(30)
        };
        train(m, &ds, &cfg, None).unwrap().1.last().unwrap().disc_train_accuracy
    };
    let free = run(m0, 0.0);
    let adversarial = run(m1, 1.0);
    assert!(adversarial < free, "λ=1: {adversarial}, λ=0: {free}");
}

#[test]
fn first_epoch_golden() {
    let (mut m, ds) = setup(50, 11);
    let cfg = config(1);
    let mut opt = AdamState::new(cfg.adam());
    let stats = train_epoch(&mut m, &ds, &cfg, &mut opt, 0).unwrap();
    let golden = GOLDEN_FIRST_EPOCH_RECON;
    assert!(
        (stats.recon_loss - golden).abs() < 1e-9 * golden,
        "recon_loss {:.17e} differs from golden {golden:.17e}",
        stats.recon_loss
    );
}

const GOLDEN_FIRST_EPOCH_RECON: f64 = 4.909_081_706_558_471e-1;
