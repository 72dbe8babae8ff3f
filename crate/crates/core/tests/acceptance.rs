//! Acceptance suite. Each test prints one `PASS`/`FAIL` line; run with
//! `cargo test -p puflock --test acceptance -- --nocapture` to see them.

mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use puflock::binding::{decrypt_model, encrypt_model, save_helper, HelperData, HelperEntry};
use puflock::harness::{
    clone_eval, clone_label, degradation_sweep, CloneConfig, DeskScale, SweepConfig, NO_DECRYPT, TARGET_DECRYPT,
};
use puflock::model::{read_idx, read_model, write_model, Activation, Dataset, DenseLayer, Model};
use puflock::puf::{bit_balance, uniqueness, Challenge, PufConfig, XorArbiterPuf};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Runs `body`, prints the verdict line and fails the test on any problem.
fn criterion(id: u8, title: &str, limit: Option<Duration>, body: impl FnOnce() -> Result<String, String>) {
    let start = Instant::now();
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(body))
        .unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        })
        .and_then(|detail| match limit {
            Some(l) if start.elapsed() > l => Err(format!("{detail}; took {:.1?}, limit {l:?}", start.elapsed())),
            _ => Ok(detail),
        });
    let secs = start.elapsed().as_secs_f64();
    match outcome {
        Ok(detail) => println!("PASS criterion {id} ({title}): {detail} [{secs:.1}s]"),
        Err(why) => {
            println!("FAIL criterion {id} ({title}): {why} [{secs:.1}s]");
            panic!("criterion {id} failed: {why}");
        }
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

#[test]
fn criterion_1_round_trip_exactness() {
    criterion(1, "round-trip exactness", Some(Duration::from_secs(60)), || {
        let cases = AtomicUsize::new(0);
        let target = XorArbiterPuf::new(42, PufConfig::default()).unwrap();
        let strategy = (common::arb_model(3, 12), 0.0f64..=100.0, any::<u64>(), any::<u64>());
        let mut runner = TestRunner::new(Config {
            cases: 256,
            failure_persistence: None,
            ..Config::default()
        });
        runner
            .run(&strategy, |(model, pct, seed, data_seed)| {
                let layer = (seed % model.layers().len() as u64) as usize;
                let data = common::dataset_for(&model, data_seed, 16);
                let (enc, helper) = encrypt_model(&model, layer, pct, &target, seed).unwrap();
                let dec = decrypt_model(&enc, &helper, &target).unwrap();
                prop_assert!(dec.bit_eq(&model));
                prop_assert_eq!(dec.evaluate(&data).unwrap(), model.evaluate(&data).unwrap());
                cases.fetch_add(1, Ordering::Relaxed);
                Ok(())
            })
            .map_err(|e| e.to_string())?;
        let n = cases.into_inner();
        ensure(n >= 200, || format!("only {n} cases ran"))?;
        Ok(format!("{n} generated cases bit-identical after decrypt"))
    });
}

#[test]
fn criterion_2_degradation() {
    criterion(2, "degradation sweep", Some(Duration::from_secs(300)), || {
        let (model, test) = DeskScale::default().build().map_err(|e| e.to_string())?;
        let puf = XorArbiterPuf::new(42, PufConfig::default()).unwrap();
        let cfg = SweepConfig {
            machine_seed: 42,
            ..SweepConfig::default()
        };
        let report = degradation_sweep(&model, &test, &cfg, &puf).map_err(|e| e.to_string())?;
        let original = report.original.value();
        let mean = |p| report.mean_at(p).unwrap();
        ensure(original >= 0.95, || format!("trained accuracy {original:.4} < 0.95"))?;
        ensure(mean(0.0) == original, || "pct 0 differs from the original".into())?;
        ensure(mean(5.0) <= original - 0.15, || {
            format!("mean at 5% is {:.4}, needs <= {:.4}", mean(5.0), original - 0.15)
        })?;
        ensure((mean(40.0) - 0.10).abs() <= 0.15, || {
            format!("mean at 40% is {:.4}", mean(40.0))
        })?;
        for w in report.summary.windows(2) {
            ensure(w[1].mean <= w[0].mean + 0.03, || {
                format!(
                    "mean rises from {:.4} at {}% to {:.4} at {}%",
                    w[0].mean, w[0].pct, w[1].mean, w[1].pct
                )
            })?;
        }
        let curve: Vec<String> = report
            .summary
            .iter()
            .map(|s| format!("{}%={:.4}", s.pct, s.mean))
            .collect();
        Ok(format!("original {original:.4}; {}", curve.join(" ")))
    });
}

#[test]
fn criterion_3_clone_experiment() {
    criterion(3, "clone experiment", Some(Duration::from_secs(300)), || {
        let (model, test) = DeskScale::default().build().map_err(|e| e.to_string())?;
        let cfg = CloneConfig::default();
        ensure(cfg.target_seed == 42 && cfg.clone_seeds == [43, 44], || {
            "unexpected default seeds".into()
        })?;
        let report = clone_eval(&model, &test, &cfg).map_err(|e| e.to_string())?;
        let original = report.original;
        for row in report.rows.iter().filter(|r| r.condition == TARGET_DECRYPT) {
            ensure(row.accuracy == original, || {
                format!(
                    "target decrypt at {}% trial {} gave {}",
                    row.pct, row.trial, row.accuracy
                )
            })?;
        }
        let mut worst = 0.0f64;
        for &pct in cfg.percentages.iter().filter(|&&p| p >= 20.0) {
            let none = report.mean_at(NO_DECRYPT, pct).unwrap();
            for i in 0..cfg.clone_seeds.len() {
                let label = clone_label(i);
                let clone = report.mean_at(&label, pct).unwrap();
                worst = worst.max(clone);
                ensure(clone <= none + 0.10, || {
                    format!("{label} at {pct}%: {clone:.4} vs no-decrypt {none:.4}")
                })?;
                ensure(clone <= original.value() - 0.25, || {
                    format!("{label} at {pct}%: {clone:.4} not 25 pp below {:.4}", original.value())
                })?;
            }
        }
        Ok(format!(
            "target decrypt exact at every pct; worst clone mean at >=20% is {worst:.4} (original {})",
            original
        ))
    });
}

#[test]
fn criterion_4_helper_size() {
    criterion(4, "helper-data size", None, || {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let puf = XorArbiterPuf::new(42, PufConfig::default()).unwrap();
        // (in, out, pct) chosen so that floor(pct * in * out / 100) = N.
        let cases = [
            (0usize, 1, 1, 0.0),
            (1, 1, 1, 100.0),
            (1000, 40, 25, 100.0),
            (20_070, 784, 128, 20.0),
        ];
        let mut sizes = Vec::new();
        for (n, i, o, pct) in cases {
            let layer = DenseLayer::zeros(i, o, Activation::None).unwrap();
            let model = Model::new(vec![layer]).unwrap();
            let (_, helper) = encrypt_model(&model, 0, pct, &puf, 7).map_err(|e| e.to_string())?;
            ensure(helper.len() == n, || {
                format!("expected {n} entries, got {}", helper.len())
            })?;
            let path = dir.path().join(format!("h{n}.nnhd"));
            save_helper(&helper, &path).map_err(|e| e.to_string())?;
            let size = std::fs::metadata(&path).map_err(|e| e.to_string())?.len();
            ensure(size == 16 + 12 * n as u64, || format!("N={n}: file is {size} bytes"))?;
            sizes.push(format!("N={n}:{size}B"));
        }
        Ok(sizes.join(" "))
    });
}

#[test]
fn criterion_5_puf_quality() {
    criterion(5, "PUF quality", Some(Duration::from_secs(60)), || {
        let cfg = PufConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut total = 0.0;
        for i in 0..100u64 {
            let a: u64 = rng.gen();
            let b = loop {
                let b: u64 = rng.gen();
                if b != a {
                    break b;
                }
            };
            total += uniqueness(a, b, cfg, 1000, i).map_err(|e| e.to_string())?;
        }
        let disagreement = total / 100.0;
        ensure((0.45..=0.55).contains(&disagreement), || {
            format!("disagreement {disagreement:.4}")
        })?;

        let puf = XorArbiterPuf::new(42, cfg).unwrap();
        let balance = bit_balance(&puf, 100_000, 5).map_err(|e| e.to_string())?;
        ensure((0.45..=0.55).contains(&balance), || format!("balance {balance:.4}"))?;

        let challenges: Vec<Challenge> = (0..100).map(|_| Challenge(rng.gen())).collect();
        let reference: Vec<Vec<bool>> = challenges.iter().map(|&c| puf.response(c, 64).unwrap()).collect();
        for _ in 0..100 {
            let again = XorArbiterPuf::new(42, cfg).unwrap();
            for (c, r) in challenges.iter().zip(&reference) {
                ensure(puf.response(*c, 64).unwrap() == *r, || {
                    "response changed between calls".into()
                })?;
                ensure(again.response(*c, 64).unwrap() == *r, || {
                    "rebuilt PUF answered differently".into()
                })?;
            }
        }
        Ok(format!(
            "disagreement {disagreement:.4} over 100 pairs x 1000 challenges; balance {balance:.4}; 100 repeats identical"
        ))
    });
}

fn idx_images(data: &Dataset) -> Vec<u8> {
    let mut v = Vec::new();
    v.extend_from_slice(&0x0000_0D02u32.to_be_bytes());
    v.extend_from_slice(&(data.len() as u32).to_be_bytes());
    v.extend_from_slice(&(data.dim() as u32).to_be_bytes());
    for x in data.features() {
        v.extend_from_slice(&x.to_bits().to_be_bytes());
    }
    v
}

fn idx_labels(labels: &[u32]) -> Vec<u8> {
    let mut v = Vec::new();
    v.extend_from_slice(&0x0000_0801u32.to_be_bytes());
    v.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    v.extend(labels.iter().map(|&l| l as u8));
    v
}

#[test]
fn criterion_6_numerical_core() {
    criterion(6, "numerical core", None, || {
        let mut worst = 0.0f64;
        for seed in 0..5 {
            let e = common::max_relative_error(seed);
            ensure(e <= 1e-4, || format!("instance {seed}: gradient relative error {e:e}"))?;
            worst = worst.max(e);
        }

        let config = Config {
            cases: 256,
            failure_persistence: None,
            ..Config::default()
        };
        TestRunner::new(config.clone())
            .run(&common::arb_model(4, 10), |model| {
                let bytes = write_model(&model).unwrap();
                let back = read_model(&bytes).unwrap();
                prop_assert!(back.bit_eq(&model));
                prop_assert_eq!(write_model(&back).unwrap(), bytes);
                Ok(())
            })
            .map_err(|e| format!("NNBM: {e}"))?;

        let entries = proptest::collection::btree_map(any::<u32>(), any::<u64>(), 0..200);
        TestRunner::new(config.clone())
            .run(&(any::<u16>(), entries), |(layer, map)| {
                let entries = map
                    .into_iter()
                    .map(|(flat_index, seed)| HelperEntry {
                        flat_index,
                        challenge: Challenge(seed),
                    })
                    .collect();
                let helper = HelperData::new(layer, entries).unwrap();
                let bytes = helper.to_bytes().unwrap();
                prop_assert_eq!(bytes.len(), 16 + 12 * helper.len());
                let back = HelperData::from_bytes(&bytes).unwrap();
                prop_assert_eq!(&back, &helper);
                prop_assert_eq!(back.to_bytes().unwrap(), bytes);
                Ok(())
            })
            .map_err(|e| format!("NNHD: {e}"))?;

        let rows = (1usize..6, 1usize..8).prop_flat_map(|(n, d)| {
            (
                proptest::collection::vec(common::any_f32_bits(), n * d),
                proptest::collection::vec(0u32..10, n),
                Just(d),
            )
        });
        TestRunner::new(config)
            .run(&rows, |(features, labels, d)| {
                let data = Dataset::new(features, labels.clone(), d, 10).unwrap();
                let images = idx_images(&data);
                let back = read_idx(&images, &idx_labels(&labels)).unwrap();
                prop_assert_eq!(idx_images(&back), images);
                prop_assert_eq!(back.labels(), &labels[..]);
                Ok(())
            })
            .map_err(|e| format!("IDX: {e}"))?;

        Ok(format!(
            "worst gradient relative error {worst:.2e}; NNBM, NNHD and IDX round-trip byte-exactly (256 cases each)"
        ))
    });
}
