//! Segmentation metrics: Average IoU, AP at IoU 0.5, semantic mIoU and
//! label accuracy. Unannotated points never count toward any IoU, and part
//! labels index the ground truth's class table.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use crate::backends::GroundTruth;
use crate::geometry::{set_iou, PointIndexSet};
use crate::merging::Part3D;

const AP_IOU: f64 = 0.5;

fn annotated_parts(parts: &[Part3D], gt: &GroundTruth) -> Vec<PointIndexSet> {
    let annotated = gt.annotated();
    parts.iter().map(|p| p.points.intersection(&annotated)).collect()
}

/// Mean over ground-truth instances of the best IoU any part achieves;
/// `None` for an object without instances.
pub fn average_iou(parts: &[Part3D], gt: &GroundTruth) -> Option<f64> {
    let preds = annotated_parts(parts, gt);
    let instances = gt.instances();
    if instances.is_empty() {
        return None;
    }
    let total: f64 =
        instances.iter().map(|(_, _, inst)| preds.iter().map(|p| set_iou(p, inst)).fold(0.0, f64::max)).sum();
    Some(total / instances.len() as f64)
}

/// Fraction of ground-truth instances whose best-IoU part (first on ties)
/// carries the instance's class.
pub fn label_accuracy(parts: &[Part3D], gt: &GroundTruth) -> Option<f64> {
    let preds = annotated_parts(parts, gt);
    let instances = gt.instances();
    if instances.is_empty() {
        return None;
    }
    let correct = instances
        .iter()
        .filter(|(_, class, inst)| {
            let mut best: Option<(usize, f64)> = None;
            for (i, p) in preds.iter().enumerate() {
                let iou = set_iou(p, inst);
                if iou > 0.0 && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((i, iou));
                }
            }
            best.is_some_and(|(i, _)| parts[i].label == Some(*class))
        })
        .count();
    Some(correct as f64 / instances.len() as f64)
}

/// Mean over classes present in the ground truth of the IoU between the
/// union of parts labeled with the class and the class's points.
pub fn semantic_miou(parts: &[Part3D], gt: &GroundTruth) -> Option<f64> {
    let preds = annotated_parts(parts, gt);
    let present: BTreeSet<usize> = gt.instances().into_iter().map(|(_, c, _)| c).collect();
    if present.is_empty() {
        return None;
    }
    let total: f64 = present
        .iter()
        .map(|&c| {
            let pred = preds
                .iter()
                .zip(parts)
                .filter(|(_, p)| p.label == Some(c))
                .fold(PointIndexSet::new(), |acc, (pts, _)| acc.union(pts));
            let truth = gt.class_points(c).intersection(&gt.annotated());
            set_iou(&pred, &truth)
        })
        .sum();
    Some(total / present.len() as f64)
}

/// Area under the precision envelope of a ranked hit list.
pub fn all_point_ap(hits: &[bool], num_truth: usize) -> f64 {
    if num_truth == 0 {
        return 0.0;
    }
    let mut recall = vec![0.0];
    let mut precision = vec![0.0];
    let mut tp = 0usize;
    for (rank, &hit) in hits.iter().enumerate() {
        tp += usize::from(hit);
        recall.push(tp as f64 / num_truth as f64);
        precision.push(tp as f64 / (rank + 1) as f64);
    }
    for i in (0..precision.len() - 1).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    (1..recall.len()).map(|i| (recall[i] - recall[i - 1]) * precision[i]).sum()
}

/// AP50 per class name, pooling predictions and instances over `objects`.
/// Predictions are labeled parts ranked by confidence (then object order,
/// then part id); each takes the unmatched same-class instance of its own
/// object with the highest IoU, counting as a hit when that IoU is at least
/// 0.5. Classes with neither instances nor predictions are omitted.
pub fn ap50_by_class(objects: &[(&[Part3D], &GroundTruth)]) -> BTreeMap<String, f64> {
    struct Pred<'a> {
        confidence: f64,
        object: usize,
        part_id: usize,
        points: &'a PointIndexSet,
    }
    let mut preds: BTreeMap<&str, Vec<Pred>> = BTreeMap::new();
    let mut truths: BTreeMap<&str, Vec<(usize, PointIndexSet)>> = BTreeMap::new();
    let annotated: Vec<Vec<PointIndexSet>> = objects.iter().map(|(p, gt)| annotated_parts(p, gt)).collect();
    for (o, (parts, gt)) in objects.iter().enumerate() {
        for (_, class, pts) in gt.instances() {
            truths.entry(gt.classes[class].as_str()).or_default().push((o, pts));
        }
        for (part, pts) in parts.iter().zip(&annotated[o]) {
            if let Some(l) = part.label {
                preds.entry(gt.classes[l].as_str()).or_default().push(Pred {
                    confidence: part.confidence,
                    object: o,
                    part_id: part.part_id,
                    points: pts,
                });
            }
        }
    }
    let names: BTreeSet<&str> = preds.keys().chain(truths.keys()).copied().collect();
    names
        .into_iter()
        .map(|name| {
            let truth = truths.remove(name).unwrap_or_default();
            let mut ranked = preds.remove(name).unwrap_or_default();
            ranked.sort_by(|a, b| {
                b.confidence.total_cmp(&a.confidence).then(a.object.cmp(&b.object)).then(a.part_id.cmp(&b.part_id))
            });
            let mut matched = vec![false; truth.len()];
            let hits: Vec<bool> = ranked
                .iter()
                .map(|p| {
                    let mut best: Option<(usize, f64)> = None;
                    for (t, (o, pts)) in truth.iter().enumerate() {
                        if *o != p.object || matched[t] {
                            continue;
                        }
                        let iou = set_iou(p.points, pts);
                        if best.is_none_or(|(_, b)| iou > b) {
                            best = Some((t, iou));
                        }
                    }
                    match best {
                        Some((t, iou)) if iou >= AP_IOU => {
                            matched[t] = true;
                            true
                        }
                        _ => false,
                    }
                })
                .collect();
            (name.to_string(), all_point_ap(&hits, truth.len()))
        })
        .collect()
}

/// Mean of [`ap50_by_class`], `None` when no class qualifies.
pub fn map50(objects: &[(&[Part3D], &GroundTruth)]) -> Option<f64> {
    let per_class = ap50_by_class(objects);
    (!per_class.is_empty()).then(|| per_class.values().sum::<f64>() / per_class.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectReport {
    pub name: String,
    pub category: String,
    pub parts: usize,
    pub average_iou: Option<f64>,
    pub map50: Option<f64>,
    pub miou: Option<f64>,
    pub label_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryReport {
    pub category: String,
    pub objects: usize,
    pub average_iou: Option<f64>,
    pub ap50: BTreeMap<String, f64>,
    pub map50: Option<f64>,
    pub miou: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub objects: Vec<ObjectReport>,
    pub categories: Vec<CategoryReport>,
}

pub struct EvalInput<'a> {
    pub name: String,
    pub parts: &'a [Part3D],
    pub gt: &'a GroundTruth,
    /// Whether labeling ran; instance and semantic metrics are reported
    /// only for labeled predictions.
    pub labeled: bool,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn evaluate(inputs: &[EvalInput]) -> EvaluationReport {
    let objects: Vec<ObjectReport> = inputs
        .iter()
        .map(|i| {
            let labeled = i.labeled;
            let avg = average_iou(i.parts, i.gt);
            if avg.is_none() {
                log::warn!("{}: no annotated instances, left out of averages", i.name);
            }
            ObjectReport {
                name: i.name.clone(),
                category: i.gt.category.clone().unwrap_or_else(|| "-".into()),
                parts: i.parts.len(),
                average_iou: avg,
                map50: labeled.then(|| map50(&[(i.parts, i.gt)])).flatten(),
                miou: labeled.then(|| semantic_miou(i.parts, i.gt)).flatten(),
                label_accuracy: labeled.then(|| label_accuracy(i.parts, i.gt)).flatten(),
            }
        })
        .collect();
    let names: BTreeSet<&str> = objects.iter().map(|o| o.category.as_str()).collect();
    let categories = names
        .into_iter()
        .map(|cat| {
            let members: Vec<usize> = (0..objects.len()).filter(|&k| objects[k].category == cat).collect();
            let labeled: Vec<(&[Part3D], &GroundTruth)> =
                members.iter().filter(|&&k| inputs[k].labeled).map(|&k| (inputs[k].parts, inputs[k].gt)).collect();
            let ap50 = if labeled.is_empty() { BTreeMap::new() } else { ap50_by_class(&labeled) };
            CategoryReport {
                category: cat.to_string(),
                objects: members.len(),
                average_iou: mean(members.iter().map(|&k| objects[k].average_iou)),
                map50: (!ap50.is_empty()).then(|| ap50.values().sum::<f64>() / ap50.len() as f64),
                ap50,
                miou: mean(members.iter().map(|&k| objects[k].miou)),
            }
        })
        .collect();
    EvaluationReport { objects, categories }
}

impl EvaluationReport {
    /// Aligned plain-text tables, percentages with one decimal.
    pub fn to_table(&self) -> String {
        let pct = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{:.1}", 100.0 * v));
        let mut out = String::new();
        let w = self.objects.iter().map(|o| o.name.len()).chain([6]).max().unwrap_or(6);
        let _ = writeln!(
            out,
            "{:<w$}  {:<10} {:>5} {:>8} {:>7} {:>7} {:>8}",
            "object", "category", "parts", "avg_iou", "map50", "miou", "label_ok"
        );
        for o in &self.objects {
            let _ = writeln!(
                out,
                "{:<w$}  {:<10} {:>5} {:>8} {:>7} {:>7} {:>8}",
                o.name,
                o.category,
                o.parts,
                pct(o.average_iou),
                pct(o.map50),
                pct(o.miou),
                pct(o.label_accuracy)
            );
        }
        out.push('\n');
        let _ = writeln!(out, "{:<10} {:>7} {:>8} {:>7} {:>7}", "category", "objects", "avg_iou", "map50", "miou");
        for c in &self.categories {
            let _ = writeln!(
                out,
                "{:<10} {:>7} {:>8} {:>7} {:>7}",
                c.category,
                c.objects,
                pct(c.average_iou),
                pct(c.map50),
                pct(c.miou)
            );
        }
        out
    }
}
