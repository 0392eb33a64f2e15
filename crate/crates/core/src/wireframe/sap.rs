//! Structural average precision for detected line segments.

use std::collections::HashMap;

use crate::error::{Error, Result};

use super::{LineSegment, Wireframe};

/// Sum of squared endpoint distances under the better of the two endpoint pairings.
pub fn segment_distance2(p: &LineSegment, g: &LineSegment) -> f64 {
    let straight = p.a().dist2(&g.a()) + p.b().dist2(&g.b());
    let swapped = p.a().dist2(&g.b()) + p.b().dist2(&g.a());
    straight.min(swapped)
}

/// Cumulative (recall, precision) after each prediction, ranked by score.
///
/// A prediction is a true positive when its nearest ground-truth line in the same image
/// lies within `threshold` and has not been claimed by a higher-scoring prediction.
pub fn pr_curve(
    preds: &[(String, Wireframe)],
    gts: &[(String, Wireframe)],
    threshold: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut gt_by_id: HashMap<&str, &[LineSegment]> = HashMap::new();
    let mut n_gt = 0usize;
    for (id, wf) in gts {
        if gt_by_id.insert(id.as_str(), wf.lines()).is_some() {
            return Err(Error::InvalidInput(format!("duplicate ground-truth id {id}")));
        }
        n_gt += wf.len();
    }
    if n_gt == 0 {
        return Err(Error::EmptyGroundTruth);
    }

    let mut ranked: Vec<(&str, &LineSegment)> = preds
        .iter()
        .flat_map(|(id, wf)| wf.lines().iter().map(move |l| (id.as_str(), l)))
        .collect();
    // Stable sort keeps input order among equal scores.
    ranked.sort_by(|x, y| y.1.score().total_cmp(&x.1.score()));

    let mut claimed: HashMap<&str, Vec<bool>> = gt_by_id
        .iter()
        .map(|(id, lines)| (*id, vec![false; lines.len()]))
        .collect();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut recall = Vec::with_capacity(ranked.len());
    let mut precision = Vec::with_capacity(ranked.len());
    for (id, pred) in ranked {
        let hit = match gt_by_id.get(id) {
            Some(lines) if !lines.is_empty() => {
                let (best, dist) = lines
                    .iter()
                    .enumerate()
                    .map(|(i, g)| (i, segment_distance2(pred, g)))
                    .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
                let flags = claimed.get_mut(id).expect("claim table covers every id");
                if dist <= threshold && !flags[best] {
                    flags[best] = true;
                    true
                } else {
                    false
                }
            }
            _ => false,
        };
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / n_gt as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    Ok((recall, precision))
}

/// Area under the interpolated precision-recall curve (precision made monotone from the right).
pub fn average_precision(recall: &[f64], precision: &[f64]) -> f64 {
    let mut r = Vec::with_capacity(recall.len() + 2);
    let mut p = Vec::with_capacity(precision.len() + 2);
    r.push(0.0);
    r.extend_from_slice(recall);
    r.push(1.0);
    p.push(0.0);
    p.extend_from_slice(precision);
    p.push(0.0);
    for i in (1..p.len()).rev() {
        p[i - 1] = p[i - 1].max(p[i]);
    }
    let mut ap = 0.0;
    for i in 0..r.len() - 1 {
        if r[i + 1] != r[i] {
            ap += (r[i + 1] - r[i]) * p[i + 1];
        }
    }
    ap
}

/// sAP in percent for predictions pooled over all images.
pub fn sap_score(
    preds: &[(String, Wireframe)],
    gts: &[(String, Wireframe)],
    threshold: f64,
) -> Result<f64> {
    let (recall, precision) = pr_curve(preds, gts, threshold)?;
    Ok(100.0 * average_precision(&recall, &precision))
}
