use std::collections::BTreeMap;

use proptest::prelude::*;

use mvtrack_core::codec_features::BoundingBox;
use mvtrack_core::eval::{ap_at_50, load_mot, write_mot, MotFrames, MotRow, ScoredBox, PEDESTRIAN};

fn unit_box() -> impl Strategy<Value = BoundingBox> {
    (0.1..0.9f64, 0.1..0.9f64, 0.05..0.2f64, 0.05..0.2f64).prop_map(|(cx, cy, w, h)| BoundingBox::new(cx, cy, w, h).unwrap())
}

type Instance = (BTreeMap<u32, Vec<ScoredBox>>, BTreeMap<u32, Vec<BoundingBox>>);

fn instance() -> impl Strategy<Value = Instance> {
    let frame = (
        proptest::collection::vec(unit_box(), 0..4),
        proptest::collection::vec((unit_box(), 0.0..1.0f64, any::<bool>()), 0..5),
    );
    proptest::collection::vec(frame, 1..4).prop_map(|frames| {
        let (mut preds, mut gt) = (BTreeMap::new(), BTreeMap::new());
        for (f, (g, p)) in frames.into_iter().enumerate() {
            let f = f as u32 + 1;
            // some predictions are copies of a ground-truth box
            let scored = p
                .into_iter()
                .enumerate()
                .map(|(k, (b, conf, copy))| ScoredBox {
                    bbox: if copy && !g.is_empty() { g[k % g.len()] } else { b },
                    conf,
                })
                .collect();
            preds.insert(f, scored);
            gt.insert(f, g);
        }
        (preds, gt)
    })
}

proptest! {
    #[test]
    fn ap_is_a_fraction(inst in instance()) {
        let s = ap_at_50(&inst.0, &inst.1);
        prop_assert!(s.true_positives <= s.gt_count.min(s.pred_count));
        match s.ap {
            None => prop_assert_eq!(s.gt_count, 0),
            Some(ap) => prop_assert!((0.0..=1.0).contains(&ap)),
        }
    }

    #[test]
    fn a_confident_hit_never_lowers_ap(inst in instance(), extra in unit_box()) {
        let (mut preds, mut gt) = inst;
        let before = ap_at_50(&preds, &gt).ap.unwrap_or(0.0);
        let f = gt.keys().max().unwrap() + 1;
        gt.insert(f, vec![extra]);
        preds.insert(f, vec![ScoredBox { bbox: extra, conf: 2.0 }]);
        let after = ap_at_50(&preds, &gt).ap.unwrap();
        prop_assert!(after >= before - 1e-12, "{} -> {}", before, after);
    }

    #[test]
    fn mot_text_round_trips(rows in proptest::collection::vec((1u32..50, 1i64..100, unit_box(), 0.01..1.0f64), 0..20)) {
        let (w, h) = (640.0, 480.0);
        let mut frames = MotFrames::new();
        for (f, id, bbox, conf) in rows {
            frames.entry(f).or_default().push(MotRow { id, bbox, conf, class: Some(PEDESTRIAN), visibility: Some(1.0) });
        }
        let back = load_mot(&write_mot(&frames, w, h), w, h, true).unwrap();
        prop_assert_eq!(back.len(), frames.len());
        for (f, rows) in &frames {
            let got = &back[f];
            prop_assert_eq!(got.len(), rows.len());
            for (a, b) in rows.iter().zip(got) {
                prop_assert_eq!((a.id, a.conf, a.class, a.visibility), (b.id, b.conf, b.class, b.visibility));
                for (x, y) in [(a.bbox.cx, b.bbox.cx), (a.bbox.cy, b.bbox.cy), (a.bbox.w, b.bbox.w), (a.bbox.h, b.bbox.h)] {
                    prop_assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn ground_truth_rules() {
    let text = "1,1,10,10,20,20,1,1,1\n1,2,10,10,20,20,0,1,1\n1,3,10,10,20,20,1,7,1\n1,4,10,10,20,20,1,-1,1\n";
    let gt = load_mot(text, 100.0, 100.0, true).unwrap();
    let ids: Vec<i64> = gt[&1].iter().map(|r| r.id).collect();
    assert_eq!(ids, vec![1, 4]);
    let preds = load_mot(text, 100.0, 100.0, false).unwrap();
    assert_eq!(preds[&1].len(), 3);
    let e = load_mot("1,1,2,3\n", 100.0, 100.0, false).unwrap_err();
    assert!(e.to_string().contains("line 1"), "{e}");
}
