use proptest::prelude::*;
use sgt_core::saliency::{
    cc, fixations_to_heatmap, kld, nss, pool_to_grid, top_m_mask, FixationRecord, SaliencyGrid, SaliencyMap,
};

fn positive_map(side: usize) -> impl Strategy<Value = SaliencyMap> {
    prop::collection::vec(0.0f64..1.0, side * side)
        .prop_filter("needs mass", |v| v.iter().sum::<f64>() > 1e-3)
        .prop_map(move |v| SaliencyMap::new(side, side, v).unwrap())
}

fn varying_map(side: usize) -> impl Strategy<Value = SaliencyMap> {
    positive_map(side).prop_filter("needs spread", |m| {
        let v = m.values();
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(0.0, f64::max);
        hi - lo > 1e-3
    })
}

proptest! {
    #[test]
    fn top_m_keeps_exactly_m(values in prop::collection::vec(0.0f64..1.0, 16), m in 1usize..=16) {
        let mask = top_m_mask(&SaliencyGrid::new(4, 4, values).unwrap(), m).unwrap();
        prop_assert_eq!(mask.keep_count(), m);
        prop_assert_eq!(mask.bits().iter().filter(|&&b| b).count(), m);
    }

    #[test]
    fn top_m_follows_a_permutation_of_the_grid(
        values in prop::collection::vec(0.0f64..1.0, 16),
        seed in 0u64..1000,
        m in 1usize..=16,
    ) {
        // distinct values so the tie rule plays no part
        let distinct: Vec<f64> = values.iter().enumerate().map(|(i, v)| v + i as f64 * 1e-9).collect();
        let mut perm: Vec<usize> = (0..16).collect();
        let mut s = seed;
        for i in (1..16).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let permuted: Vec<f64> = perm.iter().map(|&p| distinct[p]).collect();
        let a = top_m_mask(&SaliencyGrid::new(4, 4, distinct).unwrap(), m).unwrap();
        let b = top_m_mask(&SaliencyGrid::new(4, 4, permuted).unwrap(), m).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            prop_assert_eq!(b.is_kept(i), a.is_kept(p));
        }
    }

    #[test]
    fn raising_a_kept_cell_keeps_it(values in prop::collection::vec(0.0f64..1.0, 16), m in 1usize..=16, bump in 0.0f64..2.0) {
        let grid = SaliencyGrid::new(4, 4, values.clone()).unwrap();
        let mask = top_m_mask(&grid, m).unwrap();
        let i = mask.kept_indices()[0];
        let mut raised = values;
        raised[i] += bump;
        let again = top_m_mask(&SaliencyGrid::new(4, 4, raised).unwrap(), m).unwrap();
        prop_assert!(again.is_kept(i));
    }

    #[test]
    fn kept_cells_dominate_dropped_cells(values in prop::collection::vec(0.0f64..1.0, 16), m in 1usize..16) {
        let mask = top_m_mask(&SaliencyGrid::new(4, 4, values.clone()).unwrap(), m).unwrap();
        let min_kept = mask.kept_indices().iter().map(|&i| values[i]).fold(f64::INFINITY, f64::min);
        for i in (0..16).filter(|&i| !mask.is_kept(i)) {
            prop_assert!(values[i] <= min_kept);
        }
    }

    #[test]
    fn pooling_preserves_mean(map in positive_map(8)) {
        let grid = pool_to_grid(&map, 2, 4).unwrap();
        let a: f64 = map.values().iter().sum::<f64>() / 64.0;
        let b: f64 = grid.values().iter().sum::<f64>() / 8.0;
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn kld_is_bounded_below_and_vanishes_on_identity(p in positive_map(5), q in positive_map(5)) {
        prop_assert!(kld(&p, &q).unwrap() >= -1e-5);
        prop_assert!(kld(&q, &q).unwrap().abs() < 1e-4);
    }

    #[test]
    fn cc_is_symmetric_and_bounded(a in varying_map(4), b in varying_map(4)) {
        let x = cc(&a, &b).unwrap();
        prop_assert!((x - cc(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&x));
        prop_assert!((cc(&a, &a).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn nss_invariant_under_positive_affine_maps(
        map in varying_map(6),
        scale in 0.1f64..10.0,
        shift in 0.0f64..5.0,
        pts in prop::collection::vec((0.0f64..6.0, 0.0f64..6.0), 1..6),
    ) {
        let fixes: Vec<_> = pts.iter().map(|&(x, y)| FixationRecord::new("a", x, y, 100.0)).collect();
        let moved = SaliencyMap::new(6, 6, map.values().iter().map(|v| scale * v + shift).collect()).unwrap();
        let a = nss(&map, &fixes).unwrap();
        let b = nss(&moved, &fixes).unwrap();
        prop_assert!((a - b).abs() < 1e-8 * a.abs().max(1.0));
    }

    #[test]
    fn heatmap_peaks_at_one(x in 0.0f64..10.0, y in 0.0f64..10.0, sigma in 0.5f64..4.0) {
        let m = fixations_to_heatmap(&[FixationRecord::new("a", x, y, 200.0)], 10, 10, sigma, false).unwrap();
        let max = m.values().iter().copied().fold(0.0, f64::max);
        prop_assert!((max - 1.0).abs() < 1e-12);
        let (r, c) = FixationRecord::new("a", x, y, 0.0).pixel(10, 10).unwrap();
        prop_assert!((m.get(r, c) - 1.0).abs() < 1e-12);
    }
}
