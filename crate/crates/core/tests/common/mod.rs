//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use cadeval::froc::{FrocImage, LesionAnnotation};
use cadeval::geometry::{BoundingBox, Detection, LesionClass};
use cadeval::roc::ScoredCase;
use rand::Rng;

/// Pairwise Mann-Whitney estimate of P(score+ > score-) + P(tie) / 2.
pub fn mann_whitney(cases: &[ScoredCase]) -> f64 {
    let pos: Vec<f64> = cases
        .iter()
        .filter(|c| c.positive)
        .map(|c| c.score)
        .collect();
    let neg: Vec<f64> = cases
        .iter()
        .filter(|c| !c.positive)
        .map(|c| c.score)
        .collect();
    // twice the U statistic keeps everything integral
    let mut twice_u: u64 = 0;
    for &p in &pos {
        for &n in &neg {
            twice_u += match p.partial_cmp(&n).unwrap() {
                std::cmp::Ordering::Greater => 2,
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Less => 0,
            };
        }
    }
    twice_u as f64 / (2 * pos.len() * neg.len()) as f64
}

/// Random case set with scores on a coarse grid so that ties are common.
/// Both classes are always present.
pub fn random_cases<R: Rng>(rng: &mut R, max_n: usize) -> Vec<ScoredCase> {
    let n = rng.random_range(2..=max_n);
    let levels = rng.random_range(2..=50u32);
    let shift = rng.random_range(0.0..0.3);
    let mut cases: Vec<ScoredCase> = (0..n)
        .map(|_| {
            let positive = rng.random_bool(0.4);
            let mut l = rng.random_range(0..=levels);
            if positive && rng.random_bool(shift) {
                l = (l + levels / 3).min(levels);
            }
            ScoredCase::new(f64::from(l) / f64::from(levels), positive)
        })
        .collect();
    cases[0].positive = true;
    cases[1].positive = false;
    cases
}

/// Integer-cornered box; `corners` are `(x0, y0, x1, y1)` with x0 < x1, y0 < y1.
pub fn int_box(c: (i64, i64, i64, i64)) -> BoundingBox {
    BoundingBox::new(c.0 as f64, c.1 as f64, c.2 as f64, c.3 as f64).unwrap()
}

fn corners(b: &BoundingBox) -> (i64, i64, i64, i64) {
    (
        b.x_min() as i64,
        b.y_min() as i64,
        b.x_max() as i64,
        b.y_max() as i64,
    )
}

/// Exact IoU comparison `iou(a, b) > num / den` on integer boxes.
pub fn iou_exceeds(a: &BoundingBox, b: &BoundingBox, num: i64, den: i64) -> bool {
    let (a0, a1, a2, a3) = corners(a);
    let (b0, b1, b2, b3) = corners(b);
    let iw = (a2.min(b2) - a0.max(b0)).max(0);
    let ih = (a3.min(b3) - a1.max(b1)).max(0);
    let inter = iw * ih;
    let union = (a2 - a0) * (a3 - a1) + (b2 - b0) * (b3 - b1) - inter;
    inter * den > num * union
}

fn priority(a: &Detection, b: &Detection) -> std::cmp::Ordering {
    let key = |d: &Detection| {
        let (x0, y0, x1, y1) = corners(d.bbox());
        (x0, y0, x1, y1)
    };
    b.score()
        .partial_cmp(&a.score())
        .unwrap()
        .then_with(|| key(a).cmp(&key(b)))
}

/// Quadratic NMS reference: repeatedly take the best remaining detection and
/// strike out every remaining detection of its class overlapping it by more
/// than `num / den`.
pub fn nms_reference(dets: &[Detection], num: i64, den: i64) -> Vec<Detection> {
    let mut alive = vec![true; dets.len()];
    let mut kept = Vec::new();
    loop {
        let mut best: Option<usize> = None;
        for i in 0..dets.len() {
            if alive[i] && best.is_none_or(|b| priority(&dets[i], &dets[b]).is_lt()) {
                best = Some(i);
            }
        }
        let Some(b) = best else { break };
        alive[b] = false;
        for j in 0..dets.len() {
            if alive[j]
                && dets[j].class() == dets[b].class()
                && iou_exceeds(dets[b].bbox(), dets[j].bbox(), num, den)
            {
                alive[j] = false;
            }
        }
        kept.push(dets[b].clone());
    }
    kept
}

pub type DetectionKey = (u64, (i64, i64, i64, i64), bool);

/// Canonical, order-free form of a detection set.
pub fn detection_keys(dets: &[Detection]) -> Vec<DetectionKey> {
    let mut keys: Vec<_> = dets
        .iter()
        .map(|d| (d.score().to_bits(), corners(d.bbox()), d.is_malignant()))
        .collect();
    keys.sort();
    keys
}

/// Random integer-grid detections on one image, with repeated scores.
pub fn random_detections<R: Rng>(rng: &mut R, image_id: &str, max_n: usize) -> Vec<Detection> {
    let n = rng.random_range(0..=max_n);
    let extent = rng.random_range(20..=200i64);
    (0..n)
        .map(|_| {
            let x0 = rng.random_range(0..extent);
            let y0 = rng.random_range(0..extent);
            let w = rng.random_range(1..=extent / 2 + 1);
            let h = rng.random_range(1..=extent / 2 + 1);
            let score = f64::from(rng.random_range(0..=20u32)) / 20.0;
            let class = if rng.random_bool(0.8) {
                LesionClass::Malignant
            } else {
                LesionClass::Benign
            };
            Detection::new(image_id, int_box((x0, y0, x0 + w, y0 + h)), score, class).unwrap()
        })
        .collect()
}

/// Random FROC image: integer-grid lesions and detections, some detections
/// placed on lesions.
pub fn random_froc_image<R: Rng>(rng: &mut R, image_id: &str, max_dets: usize) -> FrocImage {
    let n_lesions = rng.random_range(0..=3);
    let lesions: Vec<LesionAnnotation> = (0..n_lesions)
        .map(|k| {
            let x0 = rng.random_range(0..80i64);
            let y0 = rng.random_range(0..80i64);
            LesionAnnotation {
                lesion_id: format!("{image_id}/l{k}"),
                image_id: image_id.to_owned(),
                bbox: int_box((
                    x0,
                    y0,
                    x0 + rng.random_range(2..30),
                    y0 + rng.random_range(2..30),
                )),
            }
        })
        .collect();
    let n = rng.random_range(0..=max_dets);
    let detections = (0..n)
        .map(|_| {
            let (cx, cy) = match lesions.get(rng.random_range(0..=lesions.len())) {
                Some(l) if rng.random_bool(0.7) => (
                    rng.random_range(l.bbox.x_min() as i64..=l.bbox.x_max() as i64),
                    rng.random_range(l.bbox.y_min() as i64..=l.bbox.y_max() as i64),
                ),
                _ => (rng.random_range(0..110), rng.random_range(0..110)),
            };
            let r = rng.random_range(1..6);
            let score = f64::from(rng.random_range(1..=25u32)) / 25.0;
            let class = if rng.random_bool(0.85) {
                LesionClass::Malignant
            } else {
                LesionClass::Benign
            };
            Detection::new(
                image_id,
                int_box((cx - r, cy - r, cx + r, cy + r)),
                score,
                class,
            )
            .unwrap()
        })
        .collect();
    FrocImage {
        image_id: image_id.to_owned(),
        detections,
        lesions,
    }
}

/// Brute-force FROC counts at threshold `t`: `(false positives, lesions hit)`.
pub fn froc_counts(images: &[FrocImage], t: f64) -> (u64, u64) {
    let mut fp = 0;
    let mut hit = 0;
    for img in images {
        let marks: Vec<&Detection> = img
            .detections
            .iter()
            .filter(|d| d.is_malignant() && d.score() >= t)
            .collect();
        let inside = |d: &Detection, l: &LesionAnnotation| {
            let (x0, y0, x1, y1) = corners(d.bbox());
            let (l0, l1, l2, l3) = corners(&l.bbox);
            // doubled coordinates keep half-pixel centers exact
            (2 * l0..=2 * l2).contains(&(x0 + x1)) && (2 * l1..=2 * l3).contains(&(y0 + y1))
        };
        fp += marks
            .iter()
            .filter(|d| !img.lesions.iter().any(|l| inside(d, l)))
            .count() as u64;
        hit += img
            .lesions
            .iter()
            .filter(|l| marks.iter().any(|d| inside(d, l)))
            .count() as u64;
    }
    (fp, hit)
}

/// Distinct malignant detection scores, descending.
pub fn froc_thresholds(images: &[FrocImage]) -> Vec<f64> {
    let mut t: Vec<f64> = images
        .iter()
        .flat_map(|i| i.detections.iter())
        .filter(|d| d.is_malignant())
        .map(Detection::score)
        .collect();
    t.sort_by(|a, b| b.partial_cmp(a).unwrap());
    t.dedup();
    t
}

/// Smallest value whose cumulative probability reaches `p`, for a discrete
/// distribution given as `(value, weight)` pairs.
pub fn discrete_quantile(dist: &[(f64, f64)], p: f64) -> f64 {
    let total: f64 = dist.iter().map(|d| d.1).sum();
    let mut sorted = dist.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut acc = 0.0;
    for (v, w) in &sorted {
        acc += w / total;
        if acc >= p - 1e-12 {
            return *v;
        }
    }
    sorted.last().unwrap().0
}
