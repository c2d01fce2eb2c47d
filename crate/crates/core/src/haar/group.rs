use super::{detection_order, FaceBox};

const EPS: f64 = 0.2;

fn similar(a: &FaceBox, b: &FaceBox) -> bool {
    let delta = EPS * a.w.min(b.w) as f64;
    let close = |p: usize, q: usize| (p as f64 - q as f64).abs() <= delta;
    close(a.x, b.x) && close(a.y, b.y) && close(a.w, b.w) && close(a.h, b.h)
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Merges overlapping raw detections.
///
/// Boxes are linked when x, y, width and height each differ by at most
/// `0.2 * min(width)` of the pair; linked components (transitive closure)
/// with fewer than `max(1, min_neighbors)` members are dropped, and each
/// survivor becomes its component-wise mean box rounded half-up.
pub fn group_rects(raw: &[FaceBox], min_neighbors: usize) -> Vec<FaceBox> {
    let n = raw.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if similar(&raw[i], &raw[j]) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }

    // (count, Σx, Σy, Σw, Σh) per root
    let mut acc = vec![(0usize, 0usize, 0usize, 0usize, 0usize); n];
    for (i, b) in raw.iter().enumerate() {
        let r = find(&mut parent, i);
        let a = &mut acc[r];
        a.0 += 1;
        a.1 += b.x;
        a.2 += b.y;
        a.3 += b.w;
        a.4 += b.h;
    }
    let mean = |sum: usize, count: usize| (2 * sum + count) / (2 * count);
    let threshold = min_neighbors.max(1);
    let mut out: Vec<FaceBox> = acc
        .into_iter()
        .filter(|a| a.0 >= threshold)
        .map(|(c, sx, sy, sw, sh)| FaceBox {
            x: mean(sx, c),
            y: mean(sy, c),
            w: mean(sw, c),
            h: mean(sh, c),
            neighbors: c,
        })
        .collect();
    out.sort_by(detection_order);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_boxes_merge() {
        let b = FaceBox::new(5, 6, 30, 30);
        let out = group_rects(&[b, b, b], 3);
        assert_eq!(out, vec![FaceBox { neighbors: 3, ..b }]);
    }

    #[test]
    fn far_singletons_dropped() {
        let out = group_rects(
            &[FaceBox::new(0, 0, 20, 20), FaceBox::new(200, 200, 20, 20)],
            3,
        );
        assert!(out.is_empty());
    }

    #[test]
    fn hand_averaged_cluster() {
        // x: (10+12+11)/3 = 11, y: 11, w: 61/3 = 20.33 -> 20, h: 20
        let raw = [
            FaceBox::new(10, 10, 20, 20),
            FaceBox::new(12, 11, 20, 20),
            FaceBox::new(11, 12, 21, 21),
        ];
        assert_eq!(
            group_rects(&raw, 3),
            vec![FaceBox {
                x: 11,
                y: 11,
                w: 20,
                h: 20,
                neighbors: 3
            }]
        );
    }

    #[test]
    fn mean_rounds_half_up() {
        let raw = [FaceBox::new(10, 0, 20, 20), FaceBox::new(11, 0, 20, 20)];
        assert_eq!(group_rects(&raw, 2)[0].x, 11);
    }

    #[test]
    fn chains_are_transitive() {
        // a~b and b~c but a and c are 6 apart (> 0.2 * 20)
        let raw = [
            FaceBox::new(0, 0, 20, 20),
            FaceBox::new(3, 0, 20, 20),
            FaceBox::new(6, 0, 20, 20),
        ];
        let out = group_rects(&raw, 1);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].neighbors, 3);
    }

    proptest! {
        #[test]
        fn permutation_invariant(
            boxes in proptest::collection::vec((0usize..60, 0usize..60, 10usize..30), 0..25),
            seed in any::<u64>(),
            min_neighbors in 0usize..4,
        ) {
            let raw: Vec<FaceBox> = boxes.iter().map(|&(x, y, s)| FaceBox::new(x, y, s, s)).collect();
            let mut shuffled = raw.clone();
            let mut s = seed | 1;
            for i in (1..shuffled.len()).rev() {
                s ^= s << 13; s ^= s >> 7; s ^= s << 17;
                shuffled.swap(i, (s % (i as u64 + 1)) as usize);
            }
            prop_assert_eq!(group_rects(&raw, min_neighbors), group_rects(&shuffled, min_neighbors));
        }
    }
}
