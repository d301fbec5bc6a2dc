//! Native NMS kernel over rotated-quad candidates.
//!
//! Implements the flat candidate-buffer contract shared with the Python
//! reference: records of 9 f64 values (x1,y1,...,x4,y4,score), an IoU
//! threshold, and a mode flag (0 = standard greedy NMS, 1 = locality-aware
//! merge followed by standard NMS). Results must be interchangeable with the
//! reference: identical survivor sets and ordering, coordinates within 1e-4.
//!
//! The geometry pipeline (Sutherland-Hodgman clipping + shoelace areas) is
//! re-implemented here so a host call crosses the FFI boundary exactly once
//! per image.

use std::slice;

pub const RECORD_SIZE: usize = 9;
pub const LAYOUT_VERSION: u32 = 1;

pub const MODE_STANDARD: u32 = 0;
pub const MODE_LOCALITY_AWARE: u32 = 1;

pub const STATUS_OK: i32 = 0;
pub const STATUS_NULL_POINTER: i32 = 1;
pub const STATUS_NOT_FINITE: i32 = 2;
pub const STATUS_BAD_MODE: i32 = 3;
pub const STATUS_CAPACITY: i32 = 4;
pub const STATUS_BAD_SCORE: i32 = 5;

type Quad = [[f64; 2]; 4];

#[derive(Clone, Copy, Debug)]
pub struct Candidate {
    pub quad: Quad,
    pub score: f64,
}

fn signed_area(pts: &[[f64; 2]]) -> f64 {
    let n = pts.len();
    let mut acc = 0.0;
    for i in 0..n {
        let j = (i + 1) % n;
        acc += pts[i][0] * pts[j][1] - pts[j][0] * pts[i][1];
    }
    0.5 * acc
}

/// Sutherland-Hodgman clip of `subject` by a convex clockwise `clip` quad.
fn clip_polygon(subject: &Quad, clip: &Quad) -> Vec<[f64; 2]> {
    let mut output: Vec<[f64; 2]> = subject.to_vec();
    for i in 0..4 {
        if output.is_empty() {
            return output;
        }
        let o = clip[i];
        let e = [clip[(i + 1) % 4][0] - o[0], clip[(i + 1) % 4][1] - o[1]];
        let input = std::mem::take(&mut output);
        let mut prev = *input.last().unwrap();
        let mut prev_in = e[0] * (prev[1] - o[1]) - e[1] * (prev[0] - o[0]) >= 0.0;
        for cur in input {
            let cur_in = e[0] * (cur[1] - o[1]) - e[1] * (cur[0] - o[0]) >= 0.0;
            if cur_in != prev_in {
                let d = [cur[0] - prev[0], cur[1] - prev[1]];
                let denom = e[0] * d[1] - e[1] * d[0];
                if denom != 0.0 {
                    let t = (e[1] * (prev[0] - o[0]) - e[0] * (prev[1] - o[1])) / denom;
                    output.push([prev[0] + t * d[0], prev[1] + t * d[1]]);
                }
            }
            if cur_in {
                output.push(cur);
            }
            prev = cur;
            prev_in = cur_in;
        }
    }
    output
}

pub fn quad_iou(a: &Quad, b: &Quad) -> f64 {
    let inter_poly = clip_polygon(a, b);
    if inter_poly.len() < 3 {
        return 0.0;
    }
    let inter = signed_area(&inter_poly).abs();
    if inter == 0.0 {
        return 0.0;
    }
    let union = signed_area(a).abs() + signed_area(b).abs() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Greedy descending-score suppression; score ties keep the earlier index.
pub fn standard_nms(dets: &[Candidate], iou_threshold: f64) -> Vec<Candidate> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&i, &j| {
        dets[j]
            .score
            .partial_cmp(&dets[i].score)
            .unwrap()
            .then(i.cmp(&j))
    });
    let mut alive = vec![true; dets.len()];
    let mut keep = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        if !alive[i] {
            continue;
        }
        keep.push(dets[i]);
        for &j in &order[pos + 1..] {
            if alive[j] && quad_iou(&dets[i].quad, &dets[j].quad) > iou_threshold {
                alive[j] = false;
            }
        }
    }
    keep
}

/// Single-pass merge of consecutive overlapping candidates (score-weighted
/// vertex average, summed scores clamped to [0,1]), then standard NMS.
pub fn locality_aware_nms(dets: &[Candidate], iou_threshold: f64) -> Vec<Candidate> {
    let mut groups: Vec<(Quad, f64)> = Vec::new(); // (weighted accum, weight)
    for det in dets {
        if let Some((acc, weight)) = groups.last_mut() {
            let mut current = *acc;
            for v in current.iter_mut() {
                v[0] /= *weight;
                v[1] /= *weight;
            }
            if quad_iou(&current, &det.quad) > iou_threshold {
                for (a, p) in acc.iter_mut().zip(det.quad.iter()) {
                    a[0] += det.score * p[0];
                    a[1] += det.score * p[1];
                }
                *weight += det.score;
                continue;
            }
        }
        let mut acc = det.quad;
        for v in acc.iter_mut() {
            v[0] *= det.score;
            v[1] *= det.score;
        }
        groups.push((acc, det.score));
    }
    let merged: Vec<Candidate> = groups
        .into_iter()
        .map(|(acc, weight)| {
            let mut quad = acc;
            for v in quad.iter_mut() {
                v[0] /= weight;
                v[1] /= weight;
            }
            Candidate {
                quad,
                score: weight.min(1.0),
            }
        })
        .collect();
    standard_nms(&merged, iou_threshold)
}

fn parse_records(data: &[f64]) -> Result<Vec<Candidate>, i32> {
    let mut dets = Vec::with_capacity(data.len() / RECORD_SIZE);
    for rec in data.chunks_exact(RECORD_SIZE) {
        if rec.iter().any(|v| !v.is_finite()) {
            return Err(STATUS_NOT_FINITE);
        }
        let score = rec[8];
        if !(0.0..=1.0).contains(&score) {
            return Err(STATUS_BAD_SCORE);
        }
        dets.push(Candidate {
            quad: [
                [rec[0], rec[1]],
                [rec[2], rec[3]],
                [rec[4], rec[5]],
                [rec[6], rec[7]],
            ],
            score,
        });
    }
    Ok(dets)
}

/// Buffer layout / contract version.
#[no_mangle]
pub extern "C" fn nms_kernel_version() -> u32 {
    LAYOUT_VERSION
}

/// Run NMS over a packed candidate buffer.
///
/// `input` holds `n_in` records; survivors are written to `output` (capacity
/// `cap_out` records, `n_in` always suffices) and their count to `n_out`.
/// Returns STATUS_OK or an error code; on error nothing is written.
///
/// # Safety
/// `input` must point to `n_in * 9` readable f64 values, `output` to
/// `cap_out * 9` writable ones, and `n_out` to a writable usize. Buffers are
/// owned by the caller for the duration of the call.
#[no_mangle]
pub unsafe extern "C" fn nms_kernel_run(
    input: *const f64,
    n_in: usize,
    iou_threshold: f64,
    mode: u32,
    output: *mut f64,
    cap_out: usize,
    n_out: *mut usize,
) -> i32 {
    if n_out.is_null() || (n_in > 0 && input.is_null()) || (cap_out > 0 && output.is_null()) {
        return STATUS_NULL_POINTER;
    }
    if mode != MODE_STANDARD && mode != MODE_LOCALITY_AWARE {
        return STATUS_BAD_MODE;
    }
    if !iou_threshold.is_finite() {
        return STATUS_NOT_FINITE;
    }
    let data = if n_in == 0 {
        &[][..]
    } else {
        slice::from_raw_parts(input, n_in * RECORD_SIZE)
    };
    let dets = match parse_records(data) {
        Ok(d) => d,
        Err(status) => return status,
    };
    let survivors = match mode {
        MODE_LOCALITY_AWARE => locality_aware_nms(&dets, iou_threshold),
        _ => standard_nms(&dets, iou_threshold),
    };
    if survivors.len() > cap_out {
        return STATUS_CAPACITY;
    }
    let out = slice::from_raw_parts_mut(output, cap_out * RECORD_SIZE);
    for (i, det) in survivors.iter().enumerate() {
        let base = i * RECORD_SIZE;
        for (k, v) in det.quad.iter().enumerate() {
            out[base + 2 * k] = v[0];
            out[base + 2 * k + 1] = v[1];
        }
        out[base + 8] = det.score;
    }
    *n_out = survivors.len();
    STATUS_OK
}
