//! Metric-level properties over random response logs, shared by the property
//! suite and the acceptance harness.

use num_traits::{Signed, Zero};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use super::*;
use persona_bias::metrics::{persona_bias, response_proportions, target_bias_profile};
use persona_bias::PerceptionAccumulator;

pub type Outcome = Result<(), TestCaseError>;

/// (seed, questions, targets, personas), at most 4 × 120 = 480 responses.
pub fn log_params() -> impl Strategy<Value = (u64, usize, usize, usize)> {
    (any::<u64>(), 1usize..=120, 2usize..=6, 1usize..=4)
}

pub fn weights() -> impl Strategy<Value = Weights> {
    (1i64..=6, 1i64..=6).prop_flat_map(|(reward, penalty)| {
        (1i64..=reward.min(penalty)).prop_map(move |counter| Weights {
            reward,
            penalty,
            counter,
        })
    })
}

pub fn ranges_and_dominance((seed, nq, nt, np): (u64, usize, usize, usize), w: Weights) -> Outcome {
    let log = random_log(seed, nq, nt, np);
    let run = lib_run(&log, &w.config());
    let (reward, penalty) = (q(w.reward), q(w.penalty));
    let max_w = q(w.reward.max(w.penalty));
    for m in run.metrics.values() {
        for (t, tb) in &m.tb {
            let bamt = &m.bamt[t];
            prop_assert!(
                tb <= &reward && tb >= &-penalty.clone(),
                "TB {} outside [-{}, {}]",
                tb,
                penalty,
                reward
            );
            prop_assert!(!bamt.is_negative() && bamt <= &max_w, "BAmt {}", bamt);
            prop_assert!(&tb.abs() <= bamt);
        }
        prop_assert!(m.tb_overall <= m.bamt_overall);
        prop_assert!(m.bias_score.abs() <= q(1));
        prop_assert!(!m.accuracy.is_negative() && m.accuracy <= q(1));
    }
    prop_assert!(run.acc.check_invariants().is_ok());
    Ok(())
}

pub fn polarity_flip((seed, nq, nt, np): (u64, usize, usize, usize)) -> Outcome {
    let log = random_log(seed, nq, nt, np);
    let mut flipped = log.clone();
    for r in &mut flipped.records {
        r.polarity = r.polarity.flipped();
    }
    let cfg = Weights::DEFAULT.config();
    let a = lib_run(&log, &cfg);
    let b = lib_run(&flipped, &cfg);
    for (p, ma) in &a.metrics {
        let mb = &b.metrics[p];
        for (t, tb) in &ma.tb {
            prop_assert_eq!(&-tb.clone(), &mb.tb[t]);
            prop_assert_eq!(&ma.bamt[t], &mb.bamt[t]);
        }
        prop_assert_eq!(&ma.tb_overall, &mb.tb_overall);
        prop_assert_eq!(&ma.bamt_overall, &mb.bamt_overall);
        prop_assert_eq!(&ma.pb, &mb.pb);
    }
    Ok(())
}

pub fn weight_scaling((seed, nq, nt, np): (u64, usize, usize, usize), lambda: (i64, i64)) -> Outcome {
    let log = random_log(seed, nq, nt, np);
    let lambda = qr(lambda.0, lambda.1);
    let base = Weights::DEFAULT.config();
    let a = lib_run(&log, &base);
    let b = lib_run(&log, &base.scaled(&lambda));
    for (p, ma) in &a.metrics {
        let mb = &b.metrics[p];
        for (t, tb) in &ma.tb {
            prop_assert_eq!(tb * &lambda, mb.tb[t].clone());
            prop_assert_eq!(&ma.bamt[t] * &lambda, mb.bamt[t].clone());
            prop_assert_eq!(
                response_proportions(&a.acc, p, t).unwrap(),
                response_proportions(&b.acc, p, t).unwrap()
            );
        }
        prop_assert_eq!(&ma.accuracy, &mb.accuracy);
        prop_assert_eq!(&ma.bias_score, &mb.bias_score);
    }
    Ok(())
}

pub fn shard_merge((seed, nq, nt, np): (u64, usize, usize, usize), cuts: (f64, f64)) -> Outcome {
    let log = random_log(seed, nq, nt, np);
    let cfg = Weights::DEFAULT.config();
    let (whole, _) = lib_accumulate(&log, &cfg);
    let (lo, hi) = {
        let a = (cuts.0 * nq as f64) as usize;
        let b = (cuts.1 * nq as f64) as usize;
        (a.min(b), a.max(b))
    };
    let shard = |range: std::ops::Range<usize>| {
        let mut part = log.clone();
        part.records = log.records[range.clone()].to_vec();
        part.responses = log
            .responses
            .iter()
            .filter(|r| range.contains(&r.question))
            .map(|r| Response {
                question: r.question - range.start,
                ..r.clone()
            })
            .collect();
        lib_accumulate(&part, &cfg).0
    };
    let (a, b, c) = (shard(0..lo), shard(lo..hi), shard(hi..nq));
    let left = a.clone().merged(&b).merged(&c);
    let right = a.clone().merged(&b.clone().merged(&c));
    let swapped = c.clone().merged(&a).merged(&b);
    // Empty shards contribute no appearance keys; compare on the union's keys.
    let normalize = |mut acc: PerceptionAccumulator| {
        for t in whole.appearances.keys() {
            acc.appearances.entry(t.clone()).or_insert(0);
        }
        acc
    };
    prop_assert_eq!(normalize(left), whole.clone());
    prop_assert_eq!(normalize(right), whole.clone());
    prop_assert_eq!(normalize(swapped), whole);
    Ok(())
}

pub fn oracle_equivalence((seed, nq, nt, np): (u64, usize, usize, usize), w: Weights) -> Outcome {
    let log = random_log(seed, nq, nt, np);
    prop_assert!(log.responses.len() <= 500);
    let run = lib_run(&log, &w.config());
    let expected = oracle(&log, w);
    matches_oracle(&run.metrics, &expected).map_err(TestCaseError::fail)
}

pub fn pb_zero_iff_profiles_match(seed: u64, nq: usize, nt: usize) -> Outcome {
    let mut log = random_log(seed, nq, nt, 2);
    // Half the time, make p1 answer exactly like default.
    if seed % 2 == 0 {
        let copies: Vec<Response> = log
            .responses
            .iter()
            .filter(|r| r.persona == "default")
            .map(|r| Response {
                persona: "p1".into(),
                ..r.clone()
            })
            .collect();
        log.responses.retain(|r| r.persona == "default");
        log.responses.extend(copies);
    }
    let run = lib_run(&log, &Weights::DEFAULT.config());
    let d = target_bias_profile(&run.acc, "default").unwrap();
    let p = target_bias_profile(&run.acc, "p1").unwrap();
    let pb = persona_bias(&p, &d).unwrap();
    prop_assert_eq!(pb.is_zero(), p == d);
    prop_assert!(run.metrics["default"].pb.is_none());
    Ok(())
}
