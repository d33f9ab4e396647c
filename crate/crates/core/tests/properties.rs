//! Property-based checks of the algebraic invariants.

mod common;

use costsight_core::anova::{f_statistic, GroupedAnswers, Split};
use costsight_core::consequence::{
    consequences, ConsequenceConfig, InstanceMap, InstanceRecord, SceneEval, ZoneConfig,
};
use costsight_core::costmatrix::{
    aggregate_answers, diff_matrix, robot_matrix, AnswerRecord, CostMatrix, Perspective, HUMAN,
};
use costsight_core::decision::{
    bayes_decide, decide, decide_map, LabelMap, ProbabilityMap, ProbabilityVector, IGNORE,
};
use costsight_core::ingest::answers::{encode_answers, parse_answers};
use costsight_core::ingest::formats::{
    decode_imap, decode_lmap, decode_pmap, encode_imap, encode_lmap, encode_pmap,
};
use costsight_core::ingest::matrix_json::{parse_matrix, MatrixFile};
use costsight_core::metrics::{compute_metrics, confusion_counts};
use costsight_core::taxonomy::ClassTaxonomy;
use proptest::prelude::*;

fn prob_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.001f64..1.0, n).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

fn cost_matrix(n: usize) -> impl Strategy<Value = CostMatrix> {
    prop::collection::vec(0.0f64..6.0, n * n).prop_map(move |e| {
        let entries = e
            .iter()
            .enumerate()
            .map(|(i, x)| if i / n == i % n { 0.0 } else { 10f64.powf(*x) })
            .collect();
        CostMatrix::new(n, entries).unwrap()
    })
}

fn answers(max: usize) -> impl Strategy<Value = Vec<AnswerRecord>> {
    prop::collection::vec(
        (any::<bool>(), 0usize..6, prop::collection::vec(0u8..=6, 6)),
        1..max,
    )
    .prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (ext, t, l))| {
                let p = if ext {
                    Perspective::External
                } else {
                    Perspective::Passenger
                };
                AnswerRecord::new(format!("p{i}"), p, "img", t, l).unwrap()
            })
            .collect()
    })
}

fn label_map(h: usize, w: usize, n: u8) -> impl Strategy<Value = LabelMap> {
    prop::collection::vec(prop_oneof![9 => 0..n, 1 => Just(IGNORE)], h * w)
        .prop_map(move |l| LabelMap::new(h, w, l).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn aggregation_ignores_answer_order(mut a in answers(60), seed in any::<u64>()) {
        let before = aggregate_answers(&a, |_| true).unwrap();
        let k = (seed as usize) % a.len();
        a.rotate_left(k);
        a.reverse();
        prop_assert_eq!(aggregate_answers(&a, |_| true).unwrap(), before);
    }

    #[test]
    fn union_mean_is_count_weighted(a in answers(40), b in answers(40)) {
        let ma = aggregate_answers(&a, |_| true).unwrap();
        let mb = aggregate_answers(&b, |_| true).unwrap();
        let all: Vec<_> = a.iter().chain(&b).cloned().collect();
        let mu = aggregate_answers(&all, |_| true).unwrap();
        for i in 0..36 {
            let (ca, cb) = (ma.counts()[i] as f64, mb.counts()[i] as f64);
            if ca + cb == 0.0 {
                prop_assert!(mu.entries()[i].is_none());
                continue;
            }
            let expected = (ma.entries()[i].unwrap_or(0.0) * ca + mb.entries()[i].unwrap_or(0.0) * cb) / (ca + cb);
            prop_assert!((mu.entries()[i].unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn diff_is_a_metric(x in cost_matrix(6), y in cost_matrix(6), z in cost_matrix(6)) {
        let (x, y, z) = (x.to_log10(), y.to_log10(), z.to_log10());
        let xy = diff_matrix(&x, &y).unwrap();
        let yx = diff_matrix(&y, &x).unwrap();
        prop_assert_eq!(xy.entries(), yx.entries());
        prop_assert_eq!(diff_matrix(&x, &x).unwrap().total(), 0.0);
        let bound = xy.total() - diff_matrix(&x, &z).unwrap().total() - diff_matrix(&z, &y).unwrap().total();
        prop_assert!(bound <= 1e-9);
    }

    #[test]
    fn robot_rule_is_argmax(p in (2usize..20).prop_flat_map(prob_vec)) {
        let n = p.len();
        let p = ProbabilityVector::new(p).unwrap();
        prop_assert_eq!(decide(&p, &robot_matrix(n).unwrap()).unwrap(), bayes_decide(&p));
    }

    #[test]
    fn positive_scaling_keeps_decision(p in prob_vec(6), c in cost_matrix(6), l in prop_oneof![Just(1e-3), Just(0.5), Just(7.0), Just(1e3)]) {
        let p = ProbabilityVector::new(p).unwrap();
        prop_assert_eq!(decide(&p, &c).unwrap(), decide(&p, &c.scale(l).unwrap()).unwrap());
    }

    #[test]
    fn raising_other_rows_keeps_decision(p in prob_vec(6), c in cost_matrix(6), row in 0usize..6, col in 0usize..6, bump in 0.0f64..1e4) {
        let pv = ProbabilityVector::new(p).unwrap();
        let k = decide(&pv, &c).unwrap();
        prop_assume!(row != k && row != col);
        let mut e = c.as_slice().to_vec();
        e[row * 6 + col] += bump;
        prop_assert_eq!(decide(&pv, &CostMatrix::new(6, e).unwrap()).unwrap(), k);
    }

    #[test]
    fn decide_map_commutes_with_pixel_permutation(
        px in prop::collection::vec(prob_vec(6), 1..40),
        c in cost_matrix(6),
        rot in any::<usize>(),
    ) {
        let n = px.len();
        let flat = |v: &[Vec<f64>]| v.iter().flatten().map(|&x| x as f32).collect::<Vec<_>>();
        let a = decide_map(&ProbabilityMap::new(1, n, 6, flat(&px)).unwrap(), &c).unwrap();
        let mut rotated = px.clone();
        rotated.rotate_left(rot % n);
        let b = decide_map(&ProbabilityMap::new(1, n, 6, flat(&rotated)).unwrap(), &c).unwrap();
        let mut expected = a.labels().to_vec();
        expected.rotate_left(rot % n);
        prop_assert_eq!(b.labels(), &expected[..]);
    }

    #[test]
    fn taxonomy_conserves_mass(px in prop::collection::vec(prob_vec(19), 1..20)) {
        let n = px.len();
        let data: Vec<f32> = px.iter().flatten().map(|&x| x as f32).collect();
        let pm = ProbabilityMap::new(1, n, 19, data).unwrap();
        let t = ClassTaxonomy::default();
        let coarse = t.aggregate_probability_map(&pm).unwrap();
        for (i, p) in px.iter().enumerate() {
            let s: f64 = coarse.pixel(i).iter().map(|&v| f64::from(v)).sum();
            prop_assert!((s - 1.0).abs() < 1e-5);
            // relative shares of kept classes are preserved
            let sky = p[10];
            let person_rider = p[11] + p[12];
            let expected = person_rider / (1.0 - sky);
            prop_assert!((f64::from(coarse.pixel(i)[HUMAN]) - expected).abs() < 1e-5);
        }
    }

    #[test]
    fn f_is_symmetric_in_group_labels(a in answers(200)) {
        let fwd = GroupedAnswers::by_split(&a, Split::Perspective);
        let swapped: Vec<_> = a.iter().cloned().map(|mut x| {
            x.perspective = match x.perspective {
                Perspective::Passenger => Perspective::External,
                Perspective::External => Perspective::Passenger,
            };
            x
        }).collect();
        let bwd = GroupedAnswers::by_split(&swapped, Split::Perspective);
        match (fwd, bwd) {
            (Ok(f), Ok(b)) => match (f_statistic(&f), f_statistic(&b)) {
                (Ok(x), Ok(y)) => prop_assert!(common::rel_close(x.f, y.f, 1e-12)),
                (x, y) => prop_assert_eq!(x.is_err(), y.is_err()),
            },
            (f, b) => prop_assert_eq!(f.is_err(), b.is_err()),
        }
    }

    #[test]
    fn f_is_shift_invariant(a in answers(200)) {
        // levels in 0..=5 shifted by one stay in range
        let clipped: Vec<_> = a.iter().map(|x| {
            let levels = x.levels().iter().map(|&l| l.min(5)).collect();
            AnswerRecord::new(&x.participant_id, x.perspective, "img", x.target(), levels).unwrap()
        }).collect();
        let shifted: Vec<_> = clipped.iter().map(|x| {
            let levels = x.levels().iter().map(|&l| l + 1).collect();
            AnswerRecord::new(&x.participant_id, x.perspective, "img", x.target(), levels).unwrap()
        }).collect();
        if let Ok(g) = GroupedAnswers::by_split(&clipped, Split::Perspective) {
            let h = GroupedAnswers::by_split(&shifted, Split::Perspective).unwrap();
            match (f_statistic(&g), f_statistic(&h)) {
                (Ok(x), Ok(y)) => prop_assert!(common::rel_close(x.f, y.f, 1e-9) || (x.f - y.f).abs() < 1e-12),
                (x, y) => prop_assert_eq!(x.is_err(), y.is_err()),
            }
        }
    }

    #[test]
    fn metric_identities(pred in label_map(6, 7, 4), gt in label_map(6, 7, 4)) {
        let c = confusion_counts(&pred, &gt, 4).unwrap();
        for k in 0..4u8 {
            let labelled = |lm: &LabelMap, v: u8| pred.labels().iter().zip(gt.labels())
                .filter(|&(_, &g)| g != IGNORE)
                .filter(|&(p, g)| if std::ptr::eq(lm, &gt) { *g == v } else { *p == v })
                .count() as u64;
            prop_assert_eq!(c.tp[k as usize] + c.fn_[k as usize], labelled(&gt, k));
            prop_assert_eq!(c.tp[k as usize] + c.fp[k as usize], labelled(&pred, k));
        }
        let r = compute_metrics(&c);
        for m in &r.per_class {
            if let (Some(i), Some(rc), Some(pr)) = (m.iou, m.recall, m.precision) {
                prop_assert!(i <= rc.min(pr) + 1e-15);
            }
        }
        // tiling the image leaves every ratio unchanged
        let tile = |lm: &LabelMap| LabelMap::new(12, 7, [lm.labels(), lm.labels()].concat()).unwrap();
        prop_assert_eq!(compute_metrics(&confusion_counts(&tile(&pred), &tile(&gt), 4).unwrap()), r);
    }

    #[test]
    fn binary_round_trips(h in 1usize..12, w in 1usize..12, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f32> = (0..h * w).flat_map(|_| common::simplex(&mut rng, 5)).map(|v| v as f32).collect();
        let pm = ProbabilityMap::new(h, w, 5, data).unwrap();
        prop_assert_eq!(&decode_pmap(&encode_pmap(&pm), "p").unwrap(), &pm);
        let lm = LabelMap::new(h, w, (0..h * w).map(|_| rng.random()).collect()).unwrap();
        prop_assert_eq!(&decode_lmap(&encode_lmap(&lm), "l").unwrap(), &lm);
        let im = InstanceMap::new(h, w, (0..h * w).map(|_| rng.random()).collect()).unwrap();
        prop_assert_eq!(&decode_imap(&encode_imap(&im), "i").unwrap(), &im);
    }

    #[test]
    fn json_round_trips(a in answers(30), c in cost_matrix(6)) {
        prop_assert_eq!(parse_answers(&encode_answers(&a), "a").unwrap(), a);
        let log = c.to_log10();
        let file = MatrixFile::from_log(&log, None);
        let back = parse_matrix(&serde_json::to_string(&file).unwrap(), "m").unwrap();
        prop_assert_eq!(back.to_log_matrix("m").unwrap(), log);
        let lin = MatrixFile::from_linear(&c, None);
        let back = parse_matrix(&serde_json::to_string(&lin).unwrap(), "m").unwrap();
        prop_assert_eq!(back.to_cost_matrix("m").unwrap(), c);
    }
}

/// Random single-row scenes: each instance is a run of pixels with chosen
/// hit counts for both rules.
fn scene_strategy() -> impl Strategy<Value = Vec<(f64, usize, usize, usize)>> {
    prop::collection::vec((0.5f64..80.0, 1usize..12), 1..10).prop_flat_map(|inst| {
        let hits: Vec<_> = inst.iter().map(|&(_, n)| (0..=n, 0..=n)).collect();
        (Just(inst), hits).prop_map(|(inst, hits)| {
            inst.into_iter()
                .zip(hits)
                .map(|((d, n), (a, b))| (d, n, a, b))
                .collect()
        })
    })
}

struct Built {
    gt: LabelMap,
    a: LabelMap,
    b: LabelMap,
    inst: InstanceMap,
    records: Vec<InstanceRecord>,
}

fn build(spec: &[(f64, usize, usize, usize)]) -> Built {
    let h = HUMAN as u8;
    let (mut gt, mut a, mut b, mut ids, mut records) = (vec![], vec![], vec![], vec![], vec![]);
    for (k, &(d, n, ha, hb)) in spec.iter().enumerate() {
        let id = (k + 1) as u16;
        for i in 0..n {
            gt.push(h);
            ids.push(id);
            a.push(if i < ha { h } else { 0 });
            b.push(if i < hb { h } else { 0 });
        }
        records.push(InstanceRecord {
            image_id: "s".into(),
            instance_id: id,
            class: "human".into(),
            distance_m: d,
            bearing_deg: Some(0.0),
            pixel_count: n as u32,
            provenance: None,
        });
    }
    let w = gt.len();
    Built {
        gt: LabelMap::new(1, w, gt).unwrap(),
        a: LabelMap::new(1, w, a).unwrap(),
        b: LabelMap::new(1, w, b).unwrap(),
        inst: InstanceMap::new(1, w, ids).unwrap(),
        records,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn consequence_invariants(spec in scene_strategy(), t1 in 0.0f64..1.0, dt in 0.0f64..0.5) {
        let s = build(&spec);
        let scene = |swap: bool| SceneEval {
            image_id: "s",
            pred_a: if swap { &s.b } else { &s.a },
            pred_b: if swap { &s.a } else { &s.b },
            gt: &s.gt,
            instances: &s.inst,
            records: &s.records,
        };
        let zones = ZoneConfig::from_distances(&[10.0, 20.6, 46.5]).unwrap();
        let cfg = |t: f64| ConsequenceConfig { zones: zones.clone(), threshold: t, ..ConsequenceConfig::default() };
        let low = consequences(&[scene(false)], &cfg(t1)).unwrap();
        let high = consequences(&[scene(false)], &cfg((t1 + dt).min(1.0))).unwrap();
        let swapped = consequences(&[scene(true)], &cfg(t1)).unwrap();
        prop_assert_eq!(&swapped, &low.swapped());
        for w in low.zones.windows(2) {
            prop_assert!(w[0].overlooked_a <= w[1].overlooked_a);
            prop_assert!(w[0].overlooked_b <= w[1].overlooked_b);
        }
        for (l, h) in low.zones.iter().zip(&high.zones) {
            prop_assert_eq!(l.total, l.detected_both + l.only_a + l.only_b + l.overlooked_both);
            prop_assert!(l.overlooked_a <= h.overlooked_a && l.overlooked_b <= h.overlooked_b);
            prop_assert!(l.overlooked_both <= h.overlooked_both);
        }
        // enumeration oracle
        let truth: Vec<_> = spec.iter().map(|&(d, n, a, b)| (d, a as f64 / n as f64 > t1, b as f64 / n as f64 > t1)).collect();
        let expected = common::zone_oracle(&truth, &[10.0, 20.6, 46.5]);
        for (z, e) in low.zones.iter().zip(expected) {
            prop_assert_eq!([z.total, z.overlooked_a, z.overlooked_b, z.overlooked_both, z.only_a, z.only_b, z.detected_both], e);
        }
    }
}
