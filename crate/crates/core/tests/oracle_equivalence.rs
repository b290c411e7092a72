mod common;

use common::{random_cloud, single_linkage_heights};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use topoprune::homology::{build_vr_filtration, compute_persistence, DistanceMatrix};
use topoprune::zero_ph::{zero_persistence, zero_persistence_scalars, PointCloud};

#[test]
fn zero_ph_matches_full_reduction() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..100 {
        let n = rng.gen_range(1..=12);
        let d = rng.gen_range(1..=3);
        let coords = random_cloud(&mut rng, n, d);
        let fast = zero_persistence(&PointCloud::new(coords.clone(), d).unwrap());
        let dm = DistanceMatrix::euclidean(&coords, d).unwrap();
        let slow = compute_persistence(&build_vr_filtration(&dm, 1, f64::INFINITY).unwrap());
        let expected = slow.finite_deaths(0);
        assert_eq!(fast.deaths.len(), expected.len());
        for (a, b) in fast.deaths.iter().zip(&expected) {
            assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
        }
        assert_eq!(slow.in_dimension(0).filter(|p| p.is_essential()).count(), 1);
    }
}

#[test]
fn r_f_is_half_the_largest_single_linkage_merge() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let n = rng.gen_range(1..=50);
        let d = rng.gen_range(1..=4);
        let coords = random_cloud(&mut rng, n, d);
        let heights = single_linkage_heights(&coords, d);
        let r = zero_persistence(&PointCloud::new(coords, d).unwrap());
        let expected = heights.iter().copied().fold(0.0, f64::max) / 2.0;
        assert!((r.r_f - expected).abs() <= 1e-9);
        for (a, b) in r.deaths.iter().zip(&heights) {
            assert!((a - b / 2.0).abs() <= 1e-9);
        }
    }
}

#[test]
fn scalar_path_agrees_with_general_path() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..50 {
        let n = rng.gen_range(1..=40);
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let one_d = zero_persistence_scalars(&values).unwrap();
        let dm = DistanceMatrix::euclidean(&values, 1).unwrap();
        let general = topoprune::zero_ph::zero_persistence_from_distances(&dm).unwrap();
        assert_eq!(one_d.deaths.len(), general.deaths.len());
        for (a, b) in one_d.deaths.iter().zip(&general.deaths) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn birth_death_points_sit_on_the_vertical_axis() {
    let r = zero_persistence_scalars(&[0.0, 1.0, 3.0, 3.5]).unwrap();
    let points = r.birth_death_points();
    assert_eq!(
        points,
        vec![(0.0, 0.25), (0.0, 0.5), (0.0, 1.0), (0.0, f64::INFINITY)]
    );
    assert_eq!(r.r_f, 1.0);
}
