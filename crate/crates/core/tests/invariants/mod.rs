//! Invariants shared by the property suite and the acceptance run.

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use watchdog_core::field::{FieldElement, GaloisField};
use watchdog_core::hashing::{sample_hash, HashFamily};
use watchdog_core::inference::{build_and_run_trellis, consistency_probability, transition_row, Pruning};
use watchdog_core::packet::Codebook;
use watchdog_core::sim::{draw_instance, run_experiment, run_trial, RunOptions, TwoHopConfig};
use watchdog_core::Bsc;

pub type Check = fn() -> Result<(), String>;

pub const SUITE: [(&str, Check); 6] = [
    ("layer mass conservation", layer_mass_conservation),
    ("transition row normalization", transition_row_normalization),
    ("hash partition", hash_partition),
    ("field axioms (exhaustive n <= 6)", field_axioms_exhaustive),
    ("seed determinism", seed_determinism),
    ("null adversary equivalence", null_adversary_equivalence),
];

pub fn family() -> impl Strategy<Value = HashFamily> {
    prop_oneof![Just(HashFamily::Affine), Just(HashFamily::Polynomial)]
}

pub fn small_config() -> impl Strategy<Value = TwoHopConfig> {
    (2usize..=4, 3u8..=6, family(), 0.01f64..0.4, 0.01f64..0.4, 0.0f64..0.6, any::<u64>()).prop_flat_map(
        |(m, n, family, p_s, p_relay, p_adv, seed)| {
            (0u8..=n.min(3)).prop_map(move |delta| TwoHopConfig {
                m,
                n,
                delta,
                p_s,
                p_relay,
                p_adv,
                iterations: 8,
                seed,
                pruning: Pruning::Off,
                family,
            })
        },
    )
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    })
}

fn check<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    runner(cases).run(&strategy, test).map_err(|e| e.to_string())
}

pub fn layer_mass_conservation() -> Result<(), String> {
    check(128, (small_config(), 0u64..1000), |(cfg, trial)| {
        let field = cfg.field().unwrap();
        let inst = draw_instance(&cfg, &field, trial).unwrap();
        for obs in [&inst.honest, &inst.adversarial] {
            let t = build_and_run_trellis(&field, obs).unwrap();
            for i in 1..=t.depth() {
                let mass: f64 = t.layer(i).iter().map(|s| s.1).sum();
                prop_assert!((mass - 1.0).abs() < 1e-9, "layer {} mass {}", i, mass);
            }
            let p = consistency_probability(&t, obs).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
        }
        Ok(())
    })
}

pub fn transition_row_normalization() -> Result<(), String> {
    let strategy = (any::<u64>(), family(), 2u8..=10, 0u8..=4, 0.001f64..0.499, any::<u32>());
    check(256, strategy, |(seed, fam, n, d, p, x)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = sample_hash(&mut rng, fam, n, d.min(n)).unwrap();
        let mask = (1u32 << n) - 1;
        let observed = FieldElement::new(x & mask, n).unwrap();
        let target = spec.eval_raw(x.rotate_left(7) & mask);
        let book = Codebook::full(n).unwrap();
        let row = transition_row(observed, target, &Bsc::new(p).unwrap(), &spec, &book).unwrap();
        let total: f64 = row.candidates().iter().map(|c| c.1).sum();
        prop_assert!((total - 1.0).abs() < 1e-12, "row sums to {}", total);
        for &(y, w) in row.candidates() {
            prop_assert!(w > 0.0);
            prop_assert_eq!(spec.eval(y).unwrap(), target);
        }
        Ok(())
    })
}

pub fn hash_partition() -> Result<(), String> {
    check(128, (any::<u64>(), family(), 1u8..=10, 0u8..=10), |(seed, fam, n, d)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = sample_hash(&mut rng, fam, n, d.min(n)).unwrap();
        let book = Codebook::full(n).unwrap();
        let mut seen = vec![false; 1 << n];
        for target in 0..spec.range() {
            for x in spec.collision_list(target, &book) {
                prop_assert_eq!(spec.eval(x).unwrap(), target);
                prop_assert!(!seen[x.value() as usize], "{} in two classes", x);
                seen[x.value() as usize] = true;
            }
        }
        prop_assert!(seen.iter().all(|&s| s));
        Ok(())
    })
}

pub fn field_axioms_exhaustive() -> Result<(), String> {
    for n in 1..=6u8 {
        let f = GaloisField::new(n).map_err(|e| e.to_string())?;
        let els: Vec<_> = f.elements().collect();
        let one = FieldElement::one(n);
        let mul = |a, b| f.mul(a, b).unwrap();
        let add = |a, b| f.add(a, b).unwrap();
        for &a in &els {
            if !a.is_zero() && mul(a, f.inverse(a).unwrap()) != one {
                return Err(format!("GF(2^{n}): {a} has no inverse"));
            }
            if mul(a, one) != a || add(a, a) != FieldElement::zero(n) {
                return Err(format!("GF(2^{n}): identity laws fail at {a}"));
            }
            for &b in &els {
                if mul(a, b) != mul(b, a) {
                    return Err(format!("GF(2^{n}): {a}*{b} not commutative"));
                }
                for &c in &els {
                    if mul(mul(a, b), c) != mul(a, mul(b, c)) || mul(a, add(b, c)) != add(mul(a, b), mul(a, c)) {
                        return Err(format!("GF(2^{n}): associativity or distributivity fails at {a},{b},{c}"));
                    }
                }
            }
        }
    }
    Ok(())
}

pub fn seed_determinism() -> Result<(), String> {
    check(32, small_config(), |cfg| {
        let serial = RunOptions {
            workers: Some(1),
            keep_samples: true,
        };
        let parallel = RunOptions {
            workers: Some(3),
            keep_samples: true,
        };
        let a = run_experiment(&cfg, serial).unwrap();
        prop_assert_eq!(&a, &run_experiment(&cfg, serial).unwrap());
        prop_assert_eq!(&a, &run_experiment(&cfg, parallel).unwrap());
        Ok(())
    })
}

pub fn null_adversary_equivalence() -> Result<(), String> {
    check(128, (small_config(), 0u64..1000), |(cfg, trial)| {
        let cfg = TwoHopConfig { p_adv: 0.0, ..cfg };
        let field = cfg.field().unwrap();
        let inst = draw_instance(&cfg, &field, trial).unwrap();
        prop_assert_eq!(inst.corrupted, inst.combination);
        prop_assert_eq!(
            run_trial(&cfg, &field, trial, true).unwrap(),
            run_trial(&cfg, &field, trial, false).unwrap()
        );
        Ok(())
    })
}
