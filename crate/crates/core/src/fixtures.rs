//! Small hand-built scenes with known metric values.

use crate::model::{MaskTube, RelationTriplet, SceneGraph, VideoMeta, Vocabulary};
use crate::rle::{encode, BinaryMask};
use crate::span::TimeSpan;

const H: u32 = 4;
const W: u32 = 10;

fn columns(x0: u32, x1: u32) -> BinaryMask {
    let mut g = vec![false; (H * W) as usize];
    for y in 0..H {
        for x in x0..x1 {
            g[(y * W + x) as usize] = true;
        }
    }
    encode(&g, H, W).expect("fixture geometry")
}

/// One relation over five frames. The predicted subject covers the ground
/// truth exactly on frames 1 and 4 and only two fifths of it elsewhere, so
/// two of five frames pass the 0.5 mask gate: volume IOU 0.4.
pub fn two_hit_scene() -> (Vocabulary, SceneGraph, SceneGraph) {
    let vocab = Vocabulary::placeholder(2, 0, 1);
    let meta = VideoMeta::new("two_hit", 5, H, W).expect("fixture geometry");
    let tube = |id, class, f: &dyn Fn(u32) -> BinaryMask| {
        let mut t = MaskTube::new(id, class);
        t.frames.extend((0..5).map(|k| (k, f(k))));
        t
    };
    let span = TimeSpan::range(0, 5).expect("fixture span");

    let mut gt = SceneGraph::new(meta.clone());
    gt.tubes = vec![tube(0, 0, &|_| columns(0, 5)), tube(1, 1, &|_| columns(5, 10))];
    gt.relations = vec![RelationTriplet::new(0, 1, 0, span.clone(), 1.0).expect("fixture relation")];

    let mut pred = SceneGraph::new(meta);
    pred.tubes = vec![
        tube(0, 0, &|k| if k == 1 || k == 4 { columns(0, 5) } else { columns(0, 2) }),
        tube(1, 1, &|_| columns(5, 10)),
    ];
    pred.relations = vec![RelationTriplet::new(0, 1, 0, span, 0.9).expect("fixture relation")];
    (vocab, gt, pred)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{evaluate, EvalConfig};
    use crate::model::validate_scene_graph;

    #[test]
    fn fixture_scores() {
        let (vocab, gt, pred) = two_hit_scene();
        assert!(validate_scene_graph(&gt, &vocab).is_empty());
        assert!(validate_scene_graph(&pred, &vocab).is_empty());
        let r = evaluate(&[gt], &[pred], &EvalConfig::default(), &vocab).unwrap();
        assert_eq!(r.cell(20, 0.5).unwrap().recall, 0.0);
        assert_eq!(r.cell(20, 0.1).unwrap().recall, 1.0);
        assert_eq!(r.videos[0].matches.iter().map(|m| m.volume_iou).collect::<Vec<_>>(), vec![0.4; 3]);
    }
}
