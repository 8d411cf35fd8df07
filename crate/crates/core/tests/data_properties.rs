use std::path::PathBuf;

use fedslop::data::{
    dirichlet_partition, encode_idx_images, encode_idx_labels, load_idx, parse_idx_images, parse_idx_labels,
    partition_stats, PartitionSpec,
};
use proptest::prelude::*;

fn mnist_dir() -> PathBuf {
    std::env::var_os("FEDSLOP_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

fn skewed_labels(n: usize) -> Vec<u8> {
    (0..n).map(|i| ((i * 13 + i / 7) % 10) as u8).collect()
}

fn mean_tv(labels: &[u8], clients: usize, alpha: f64, seeds: &[u64]) -> f64 {
    seeds
        .iter()
        .map(|&seed| {
            let part = dirichlet_partition(labels, &PartitionSpec { clients, alpha, seed }).unwrap();
            partition_stats(&part, labels).mean_tv
        })
        .sum::<f64>()
        / seeds.len() as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dirichlet_split_is_a_partition(clients in 1usize..60, alpha in 0.02f64..5.0, seed in 0u64..1000, n in 1usize..800) {
        let labels = skewed_labels(n);
        let part = dirichlet_partition(&labels, &PartitionSpec { clients, alpha, seed }).unwrap();
        prop_assert_eq!(part.clients(), clients);
        let mut seen = vec![false; n];
        for list in &part.assignment {
            for &i in list {
                prop_assert!(!seen[i], "sample {} assigned twice", i);
                seen[i] = true;
            }
        }
        prop_assert!(seen.iter().all(|&s| s));
        let stats = partition_stats(&part, &labels);
        prop_assert_eq!(stats.sizes.iter().sum::<usize>(), n);
        for (i, tv) in stats.tv_distance.iter().enumerate() {
            prop_assert_eq!(tv.is_none(), stats.sizes[i] == 0);
        }
    }
}

#[test]
fn heterogeneity_falls_as_alpha_grows() {
    let labels = skewed_labels(20_000);
    let seeds = [1, 2, 3];
    let tvs: Vec<f64> = [0.05, 0.1, 0.5, 1.0]
        .iter()
        .map(|&a| mean_tv(&labels, 50, a, &seeds))
        .collect();
    for w in tvs.windows(2) {
        assert!(w[1] < w[0], "{tvs:?}");
    }
    assert!(mean_tv(&labels, 10, 1e4, &seeds) < 0.05);
}

#[test]
fn idx_round_trip_is_byte_exact() {
    let pixels: Vec<u8> = (0..3 * 4 * 5).map(|i| (i * 37 % 256) as u8).collect();
    let labels = vec![3u8, 0, 9];
    let img = encode_idx_images(3, 4, 5, &pixels);
    let lbl = encode_idx_labels(&labels);
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("imgs"), &img).unwrap();
    std::fs::write(dir.path().join("lbls"), &lbl).unwrap();
    let data = load_idx(dir.path().join("imgs"), dir.path().join("lbls")).unwrap();
    let back: Vec<u8> = data.features.iter().map(|x| (x * 255.0).round() as u8).collect();
    assert_eq!(encode_idx_images(3, 4, 5, &back), img);
    assert_eq!(encode_idx_labels(&data.labels), lbl);
}

#[test]
fn mnist_files_round_trip_and_spread_out_at_large_alpha() {
    let dir = mnist_dir();
    let images = dir.join("t10k-images-idx3-ubyte");
    let labels = dir.join("t10k-labels-idx1-ubyte");
    if !images.is_file() || !labels.is_file() {
        eprintln!("skipping: no MNIST files under {}", dir.display());
        return;
    }
    let raw_images = std::fs::read(&images).unwrap();
    let raw_labels = std::fs::read(&labels).unwrap();
    let data = load_idx(&images, &labels).unwrap();
    assert_eq!((data.len(), data.width(), data.classes), (10_000, 784, 10));
    let back: Vec<u8> = data.features.iter().map(|x| (x * 255.0).round() as u8).collect();
    let (n, rows, cols, _) = parse_idx_images(&raw_images).unwrap();
    assert_eq!(encode_idx_images(n, rows, cols, &back), raw_images);
    assert_eq!(encode_idx_labels(parse_idx_labels(&raw_labels).unwrap()), raw_labels);

    let tv = mean_tv(&data.labels, 10, 1e4, &[1, 2, 3]);
    assert!(tv < 0.05, "{tv}");
}
