//! CLEAR-MOT evaluation in 2D (bounding-box IoU) and 3D (Euclidean distance).
//!
//! Per frame, carried-over correspondences are kept while still within the
//! match threshold, the remaining pairs are matched optimally, and the usual
//! tallies (TP/FP/FN, identity switches, fragmentations, trajectory coverage)
//! are accumulated.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::assignment::{solve_lap, CostMatrix};
use crate::models::{project_to_measurement, CameraModel, ObjectState};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("frame counts differ: {gt} ground-truth vs {est} estimate frames")]
    FrameCountMismatch { gt: usize, est: usize },
    #[error("degenerate box")]
    DegenerateBox,
}

/// Intersection-over-union of two axis-aligned boxes `(x_min, y_min, x_max, y_max)`.
pub fn iou<T: Real>(a: &[T; 4], b: &[T; 4]) -> Result<T, EvalError> {
    for bx in [a, b] {
        if !(bx[0] < bx[2]) || !(bx[1] < bx[3]) {
            return Err(EvalError::DegenerateBox);
        }
    }
    let ix = (a[2].min(b[2]) - a[0].max(b[0])).max(T::zero());
    let iy = (a[3].min(b[3]) - a[1].max(b[1])).max(T::zero());
    let inter = ix * iy;
    let area = |r: &[T; 4]| (r[2] - r[0]) * (r[3] - r[1]);
    Ok(inter / (area(a) + area(b) - inter))
}

/// What counts as a valid ground-truth/estimate correspondence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MatchCriterion<T: Real> {
    /// Image-plane IoU of at least `threshold`.
    Iou2d { threshold: T },
    /// 3D Euclidean distance of at most `threshold` meters.
    Euclidean3d { threshold: T },
}

impl<T: Real> MatchCriterion<T> {
    pub fn iou_2d() -> Self {
        Self::Iou2d { threshold: T::of(0.5) }
    }

    pub fn euclidean_3d() -> Self {
        Self::Euclidean3d { threshold: T::of(3.0) }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let t = match self {
            Self::Iou2d { threshold } | Self::Euclidean3d { threshold } => *threshold,
        };
        if t > T::zero() {
            Ok(())
        } else {
            Err(EvalError::DegenerateBox)
        }
    }
}

/// One object in one frame, as the evaluator sees it.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalObject<T: Real> {
    pub id: u64,
    /// Image box; `None` when the object does not project into the image.
    pub bbox: Option<[T; 4]>,
    /// 3D position in meters.
    pub position: [T; 3],
}

/// Per-frame true-positive / false-positive / false-negative counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FrameCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

/// CLEAR-MOT outputs plus the trajectory-level and detection-level measures.
#[derive(Debug, Clone, PartialEq)]
pub struct MotMetrics<T: Real> {
    /// `1 - (FN + FP + IDS) / GT`.
    pub mota: T,
    /// Mean match score over true positives: IoU for the 2D criterion,
    /// centimeters of position error for the 3D criterion.
    pub motp: T,
    /// Fraction of trajectories covered at least 80% of their lifetime.
    pub mt: T,
    /// Fraction of trajectories covered at most 20% of their lifetime.
    pub ml: T,
    pub f1: T,
    pub precision: T,
    pub recall: T,
    /// False positives per frame.
    pub far: T,
    /// Identity switches.
    pub ids: usize,
    /// Trajectory fragmentations: interruptions of continuous same-id coverage.
    pub frag: usize,
    pub per_frame: Vec<FrameCounts>,
    // Pooled tallies, kept so sequences can be aggregated by summed counts.
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub gt_total: usize,
    pub n_frames: usize,
    pub motp_sum: T,
    pub n_trajectories: usize,
    pub mostly_tracked: usize,
    pub mostly_lost: usize,
}

impl<T: Real> MotMetrics<T> {
    fn from_tallies(
        per_frame: Vec<FrameCounts>,
        ids: usize,
        frag: usize,
        motp_sum: T,
        motp_in_cm: bool,
        n_trajectories: usize,
        mostly_tracked: usize,
        mostly_lost: usize,
    ) -> Self {
        let tp: usize = per_frame.iter().map(|c| c.tp).sum();
        let fp: usize = per_frame.iter().map(|c| c.fp).sum();
        let fn_: usize = per_frame.iter().map(|c| c.fn_).sum();
        let gt_total = tp + fn_;
        let n_frames = per_frame.len();

        let ratio = |num: usize, den: usize| {
            if den == 0 {
                T::one()
            } else {
                T::from_usize(num).unwrap() / T::from_usize(den).unwrap()
            }
        };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > T::zero() {
            T::of(2.0) * precision * recall / (precision + recall)
        } else {
            T::zero()
        };
        let mota = T::one()
            - T::from_usize(fn_ + fp + ids).unwrap() / T::from_usize(gt_total.max(1)).unwrap();
        let scale = if motp_in_cm { T::of(100.0) } else { T::one() };
        let motp =
            if tp == 0 { T::zero() } else { scale * motp_sum / T::from_usize(tp).unwrap() };
        let traj_ratio = |num: usize| {
            if n_trajectories == 0 {
                T::zero()
            } else {
                T::from_usize(num).unwrap() / T::from_usize(n_trajectories).unwrap()
            }
        };
        Self {
            mota,
            motp,
            mt: traj_ratio(mostly_tracked),
            ml: traj_ratio(mostly_lost),
            f1,
            precision,
            recall,
            far: T::from_usize(fp).unwrap() / T::from_usize(n_frames.max(1)).unwrap(),
            ids,
            frag,
            per_frame,
            tp,
            fp,
            fn_,
            gt_total,
            n_frames,
            motp_sum,
            n_trajectories,
            mostly_tracked,
            mostly_lost,
        }
    }

    /// Pools several sequences by summed counts (not averaged ratios) and
    /// re-derives every measure. `motp_in_cm` must match how the inputs were
    /// produced (3D criterion).
    pub fn pooled(sequences: &[Self], motp_in_cm: bool) -> Option<Self> {
        if sequences.is_empty() {
            return None;
        }
        let mut per_frame = Vec::new();
        let mut ids = 0;
        let mut frag = 0;
        let mut motp_sum = T::zero();
        let mut n_traj = 0;
        let mut mt = 0;
        let mut ml = 0;
        for s in sequences {
            per_frame.extend_from_slice(&s.per_frame);
            ids += s.ids;
            frag += s.frag;
            motp_sum += s.motp_sum;
            n_traj += s.n_trajectories;
            mt += s.mostly_tracked;
            ml += s.mostly_lost;
        }
        Some(Self::from_tallies(per_frame, ids, frag, motp_sum, motp_in_cm, n_traj, mt, ml))
    }

    pub fn csv_header() -> &'static str {
        "sequence,criterion,mota,motp,mt,ml,ids,frag,f1,precision,recall,far,tp,fp,fn"
    }

    pub fn csv_row(&self, sequence: &str, criterion: &str) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            sequence,
            criterion,
            self.mota.as_f64(),
            self.motp.as_f64(),
            self.mt.as_f64(),
            self.ml.as_f64(),
            self.ids,
            self.frag,
            self.f1.as_f64(),
            self.precision.as_f64(),
            self.recall.as_f64(),
            self.far.as_f64(),
            self.tp,
            self.fp,
            self.fn_,
        )
    }
}

/// Match score of a pair under the criterion; `None` when invalid.
/// The returned pair is `(assignment_cost, motp_score)`.
fn pair_score<T: Real>(
    g: &EvalObject<T>,
    e: &EvalObject<T>,
    criterion: &MatchCriterion<T>,
) -> Option<(T, T)> {
    match criterion {
        MatchCriterion::Iou2d { threshold } => {
            let (gb, eb) = (g.bbox.as_ref()?, e.bbox.as_ref()?);
            let v = iou(gb, eb).ok()?;
            (v >= *threshold).then_some((T::one() - v, v))
        }
        MatchCriterion::Euclidean3d { threshold } => {
            let dx = g.position[0] - e.position[0];
            let dy = g.position[1] - e.position[1];
            let dz = g.position[2] - e.position[2];
            let dist = (dx * dx + dy * dy + dz * dz).sqrt();
            (dist <= *threshold).then_some((dist, dist))
        }
    }
}

/// Runs the CLEAR-MOT protocol over frame-aligned ground truth and estimates.
pub fn clear_mot<T: Real>(
    gt_frames: &[Vec<EvalObject<T>>],
    est_frames: &[Vec<EvalObject<T>>],
    criterion: &MatchCriterion<T>,
) -> Result<MotMetrics<T>, EvalError> {
    if gt_frames.len() != est_frames.len() {
        return Err(EvalError::FrameCountMismatch { gt: gt_frames.len(), est: est_frames.len() });
    }
    criterion.validate()?;

    // Costs above any valid score but far below the forbidden sentinel, so the
    // solver prefers real matches, then leaves rows unmatched, never crossing
    // the threshold.
    let dummy = T::of(1e4);
    let forbidden = T::of(1e8);

    let mut last_match: BTreeMap<u64, u64> = BTreeMap::new();
    let mut prev_frame_match: BTreeMap<u64, u64> = BTreeMap::new();
    let mut run_state: BTreeMap<u64, (u64, usize)> = BTreeMap::new();
    let mut alive: BTreeMap<u64, usize> = BTreeMap::new();
    let mut covered: BTreeMap<u64, usize> = BTreeMap::new();

    let mut per_frame = Vec::with_capacity(gt_frames.len());
    let mut ids_count = 0usize;
    let mut frag_count = 0usize;
    let mut motp_sum = T::zero();

    for (frame, (gts, ests)) in gt_frames.iter().zip(est_frames).enumerate() {
        for g in gts {
            *alive.entry(g.id).or_insert(0) += 1;
        }

        let mut gt_to_est: Vec<Option<usize>> = vec![None; gts.len()];
        let mut est_used = vec![false; ests.len()];

        // Keep the previous frame's correspondence wherever it is still valid.
        for (gi, g) in gts.iter().enumerate() {
            let Some(&eid) = prev_frame_match.get(&g.id) else { continue };
            let Some(ei) = ests.iter().position(|e| e.id == eid) else { continue };
            if !est_used[ei] && pair_score(g, &ests[ei], criterion).is_some() {
                gt_to_est[gi] = Some(ei);
                est_used[ei] = true;
            }
        }

        // Optimal matching over the remainder, one dummy column per row so
        // unmatched rows stay feasible.
        let free_gt: Vec<usize> =
            (0..gts.len()).filter(|&gi| gt_to_est[gi].is_none()).collect();
        let free_est: Vec<usize> = (0..ests.len()).filter(|&ei| !est_used[ei]).collect();
        if !free_gt.is_empty() {
            let rows = free_gt.len();
            let cols = free_est.len();
            let mut costs = DMatrix::from_element(rows, cols + rows, forbidden);
            for (r, &gi) in free_gt.iter().enumerate() {
                for (c, &ei) in free_est.iter().enumerate() {
                    if let Some((cost, _)) = pair_score(&gts[gi], &ests[ei], criterion) {
                        costs[(r, c)] = cost;
                    }
                }
                costs[(r, cols + r)] = dummy;
            }
            let solution = solve_lap(&CostMatrix::new(costs).expect("finite costs"))
                .expect("dummy columns keep the matching feasible");
            for (r, &col) in solution.row_to_col.iter().enumerate() {
                if col < cols {
                    let (gi, ei) = (free_gt[r], free_est[col]);
                    if pair_score(&gts[gi], &ests[ei], criterion).is_some() {
                        gt_to_est[gi] = Some(ei);
                        est_used[ei] = true;
                    }
                }
            }
        }

        let mut counts = FrameCounts::default();
        let mut current: BTreeMap<u64, u64> = BTreeMap::new();
        for (gi, g) in gts.iter().enumerate() {
            let Some(ei) = gt_to_est[gi] else { continue };
            let e = &ests[ei];
            let (_, score) = pair_score(g, e, criterion).expect("matched pairs are valid");
            counts.tp += 1;
            motp_sum += score;
            *covered.entry(g.id).or_insert(0) += 1;
            if let Some(&prev) = last_match.get(&g.id) {
                if prev != e.id {
                    ids_count += 1;
                }
            }
            last_match.insert(g.id, e.id);
            if let Some(&(prev_eid, prev_frame)) = run_state.get(&g.id) {
                if prev_eid != e.id || prev_frame + 1 != frame {
                    frag_count += 1;
                }
            }
            run_state.insert(g.id, (e.id, frame));
            current.insert(g.id, e.id);
        }
        counts.fn_ = gts.len() - counts.tp;
        counts.fp = ests.len() - counts.tp;
        per_frame.push(counts);
        prev_frame_match = current;
    }

    let mut mostly_tracked = 0;
    let mut mostly_lost = 0;
    for (id, &alive_frames) in &alive {
        let cov = *covered.get(id).unwrap_or(&0);
        let ratio = cov as f64 / alive_frames as f64;
        if ratio >= 0.8 {
            mostly_tracked += 1;
        }
        if ratio <= 0.2 {
            mostly_lost += 1;
        }
    }

    Ok(MotMetrics::from_tallies(
        per_frame,
        ids_count,
        frag_count,
        motp_sum,
        matches!(criterion, MatchCriterion::Euclidean3d { .. }),
        alive.len(),
        mostly_tracked,
        mostly_lost,
    ))
}

/// Projects per-frame `(id, state)` lists into evaluator objects; states that
/// do not project keep their 3D position but carry no box.
pub fn eval_objects_from_states<T: Real>(
    frames: &[Vec<(u64, ObjectState<T>)>],
    camera: &CameraModel<T>,
) -> Vec<Vec<EvalObject<T>>> {
    frames
        .iter()
        .map(|frame| {
            frame
                .iter()
                .map(|(id, s)| EvalObject {
                    id: *id,
                    bbox: project_to_measurement(s, camera).ok().map(|m| {
                        let (x0, y0, x1, y1) = m.corners();
                        [x0, y0, x1, y1]
                    }),
                    position: [s.x, s.y, s.z],
                })
                .collect()
        })
        .collect()
}
