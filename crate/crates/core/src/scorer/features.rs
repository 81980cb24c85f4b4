//! Fixed (non-learned) input features: hashed token ids, Fourier features of
//! layout boxes, and 1D rank indices.

use ndarray::Array2;

use super::config::{Position1d, Position2d, MAX_SEQUENCE};
use crate::document::{BoundingBox, Document, InputOrder};

const FREQUENCIES: usize = 10;

/// Width of the 2D feature vector: sine and cosine per frequency for each of
/// the four box coordinates, plus the raw normalized coordinates.
pub const FEATURE_DIM_2D: usize = 4 * 2 * FREQUENCIES + 4;

/// FNV-1a, reduced to a bucket.
pub fn token_bucket(text: &str, buckets: usize) -> usize {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    (h % buckets as u64) as usize
}

/// `π·2^(0.8 f)` for `f` in `0..FREQUENCIES`. Written out so that the values
/// do not depend on whether the compiler folds `powf`.
const OMEGAS: [f64; FREQUENCIES] = [
    std::f64::consts::PI,
    5.469830508459119,
    9.523528060546823,
    16.58142543535097,
    28.869938505994927,
    50.26548245743669,
    87.51728813534595,
    152.37644896874923,
    265.3028069656155,
    461.91901609591883,
];

fn box_features(b: &BoundingBox, width: f64, height: f64, out: &mut [f64]) {
    let coords = [b.x0 / width, b.y0 / height, b.x1 / width, b.y1 / height];
    let mut k = 0;
    for c in coords {
        for omega in OMEGAS {
            let a = omega * c;
            out[k] = a.sin();
            // Optimised builds would fuse the pair into `sincos`, whose cosine
            // can differ from `cos` in the last bit.
            out[k + 1] = std::hint::black_box(a).cos();
            k += 2;
        }
    }
    out[k..k + 4].copy_from_slice(&coords);
}

const OFFSET_STEPS: [f64; 13] = [
    2.0, 6.0, 12.0, 20.0, 30.0, 45.0, 70.0, 100.0, 150.0, 220.0, 320.0, 450.0, 650.0,
];

/// Number of signed buckets for one relative offset.
pub const OFFSET_BUCKETS: usize = 2 * OFFSET_STEPS.len() + 1;

/// Signed log-like bucket of an offset in thousandths of the page.
fn offset_bucket(delta: f64) -> usize {
    let m = OFFSET_STEPS
        .iter()
        .take_while(|&&t| delta.abs() >= t)
        .count();
    if delta < 0.0 {
        OFFSET_STEPS.len() - m
    } else {
        OFFSET_STEPS.len() + m
    }
}

fn feature_boxes(doc: &Document, mode: Position2d) -> Vec<BoundingBox> {
    let seg_of = doc.segment_of_words();
    (0..doc.len())
        .map(|w| match (mode, seg_of[w]) {
            (Position2d::Segment, Some(s)) => doc.segments[s].bbox,
            _ => doc.words[w].bbox,
        })
        .collect()
}

/// Flat indices into two `OFFSET_BUCKETS²` tables for every word pair
/// `(i, j)`, row-major: (vertical centre offset, gap from the right edge of
/// `i` to the left edge of `j`) and (vertical centre offset, left-edge
/// offset).
pub fn relative_buckets(doc: &Document, mode: Position2d) -> (Vec<usize>, Vec<usize>) {
    let boxes = feature_boxes(doc, mode);
    let (sx, sy) = (1000.0 / doc.page_width, 1000.0 / doc.page_height);
    let n = boxes.len();
    let mut gap = Vec::with_capacity(n * n);
    let mut align = Vec::with_capacity(n * n);
    for a in &boxes {
        for b in &boxes {
            let dy = offset_bucket(((b.y0 + b.y1) - (a.y0 + a.y1)) * 0.5 * sy);
            gap.push(dy * OFFSET_BUCKETS + offset_bucket((b.x0 - a.x1) * sx));
            align.push(dy * OFFSET_BUCKETS + offset_bucket((b.x0 - a.x0) * sx));
        }
    }
    (gap, align)
}

/// One row of 2D features per word, in word-index order.
pub fn layout_features(doc: &Document, mode: Position2d) -> Array2<f64> {
    let mut out = Array2::zeros((doc.len(), FEATURE_DIM_2D));
    for (w, b) in feature_boxes(doc, mode).iter().enumerate() {
        let mut row = out.row_mut(w);
        box_features(
            b,
            doc.page_width,
            doc.page_height,
            row.as_slice_mut().expect("contiguous row"),
        );
    }
    out
}

/// Position-table rows for each word (word-index order). `Local` yields the
/// segment rank in `.0` and the within-segment rank in `.1`.
pub fn position_rows(
    doc: &Document,
    order: &InputOrder,
    mode: Position1d,
) -> Option<(Vec<usize>, Option<Vec<usize>>)> {
    let clamp = |r: usize| r.min(MAX_SEQUENCE);
    match mode {
        Position1d::None => None,
        Position1d::Global => Some((order.ranks().into_iter().map(clamp).collect(), None)),
        Position1d::Local => {
            let seg_of = doc.segment_of_words();
            let mut seg_rank = vec![None::<usize>; doc.segments.len()];
            let mut seen_in_seg = vec![0usize; doc.segments.len()];
            let mut next_seg = 0;
            let mut outer = vec![0; doc.len()];
            let mut inner = vec![0; doc.len()];
            for &w in order.as_slice() {
                match seg_of[w] {
                    Some(s) => {
                        let r = *seg_rank[s].get_or_insert_with(|| {
                            next_seg += 1;
                            next_seg - 1
                        });
                        outer[w] = clamp(r);
                        inner[w] = clamp(seen_in_seg[s]);
                        seen_in_seg[s] += 1;
                    }
                    None => {
                        outer[w] = clamp(next_seg);
                        next_seg += 1;
                    }
                }
            }
            Some((outer, Some(inner)))
        }
    }
}
