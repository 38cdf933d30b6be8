//! Manual probe of the covariance-deviation comparison across datasets/seeds.
use mpsntk_core::dataset;
use mpsntk_core::features::FeatureMap;
use mpsntk_core::stats::gp_limit_check;

fn fraction(points: &[Vec<f64>], seed: u64) -> f64 {
    let maps: Vec<FeatureMap> = (0..4).map(|_| FeatureMap::trig()).collect();
    let reports = gp_limit_check(&[2, 128], &maps, &[1.0; 4], true, points, 2000, seed).unwrap();
    let (lo, hi) = (&reports[0], &reports[1]);
    let m = points.len();
    let mut smaller = 0;
    for i in 0..m {
        for j in 0..m {
            let dev_lo = (lo.empirical_cov[i][j] - lo.analytic_cov[i][j]).abs();
            let dev_hi = (hi.empirical_cov[i][j] - hi.analytic_cov[i][j]).abs();
            if dev_hi < dev_lo { smaller += 1; }
        }
    }
    smaller as f64 / (m * m) as f64
}

#[test]
#[ignore]
fn probe_fraction_distribution() {
    let sets: Vec<(&str, Vec<Vec<f64>>)> = vec![
        ("equi6 [0,1]", dataset::equispaced(6, 4, 0.0, 1.0).unwrap()),
        ("equi8 [0,1]", dataset::equispaced(8, 4, 0.0, 1.0).unwrap()),
        ("equi6 [0,0.5]", dataset::equispaced(6, 4, 0.0, 0.5).unwrap()),
        ("random6", dataset::random_points(6, 4, 0.0, 1.0, 7).unwrap()),
    ];
    for (name, points) in &sets {
        let fr: Vec<f64> = (0..6).map(|s| fraction(points, 1000 + s)).collect();
        println!("{name}: fractions {:?}", fr.iter().map(|f| (f * 100.0).round() / 100.0).collect::<Vec<_>>());
    }
}
