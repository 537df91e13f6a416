use fxq::fixtures::{self, ChainConfig};
use fxq::parallel;

#[test]
fn threaded_statistics_match_sequential() {
    let model = fixtures::gaussian_chain(2, &ChainConfig { relu: true, ..ChainConfig::default() }).unwrap();
    let batches: Vec<_> = (0..5).map(|i| fixtures::gaussian_batch(model.input_shape(), 3, i)).collect();
    let sequential = fxq_core::engine::collect_stats(&model, &batches).unwrap();
    for threads in [1, 2, 4] {
        let threaded = parallel::collect_stats(&model, &batches, threads).unwrap();
        assert_eq!(threaded.keys().collect::<Vec<_>>(), sequential.keys().collect::<Vec<_>>());
        for (k, s) in &sequential {
            let t = &threaded[k];
            assert_eq!(t.count, s.count, "{k}");
            assert_eq!(t.max_abs, s.max_abs, "{k}");
            assert!((t.mean - s.mean).abs() <= 1e-12 * (1.0 + s.mean.abs()), "{k}");
            assert!((t.std_dev - s.std_dev).abs() <= 1e-12 * s.std_dev.max(1.0), "{k}");
        }
    }
}

#[test]
fn ordered_map_keeps_input_order() {
    let items: Vec<u32> = (0..37).collect();
    assert_eq!(parallel::map_ordered(&items, 4, |x| x * 2), items.iter().map(|x| x * 2).collect::<Vec<_>>());
    assert!(parallel::map_ordered(&[] as &[u32], 3, |x| *x).is_empty());
}
