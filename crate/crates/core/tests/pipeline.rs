use spa_core::agreement::{pa_curve, pa_test, psi_spatiotemporal, Alternative, TrendCoefficients};
use spa_core::covariance::{SpatioTemporalModel, StFamily};
use spa_core::estimation::{
    detrend_field, empirical_variogram, fit, FitResult, LikelihoodKind, PairwiseConfig, VariogramBins,
};
use spa_core::imagery::{downscale_block_mean, gcc, read_ppm, to_field, write_ppm, RgbRaster};
use spa_core::randomfield::{FieldSample, GridSpec, StSimulator};

fn simulated(seed: u64) -> (FieldSample, SpatioTemporalModel, TrendCoefficients) {
    let model = SpatioTemporalModel::exponential(0.1, 4.0, 1.0);
    let trend = TrendCoefficients::new(0.5, -0.1);
    let sim = StSimulator::new(GridSpec::new(10, 1.0, 6).unwrap(), model).unwrap();
    (sim.sample(&trend, seed, 0), model, trend)
}

#[test]
fn simulate_fit_and_test_round_trip() {
    let (sample, truth, trend) = simulated(11);
    let mut text = Vec::new();
    sample.write_table(&mut text).unwrap();
    let back = FieldSample::read_table(text.as_slice()).unwrap();
    let cfg = PairwiseConfig { likelihood: LikelihoodKind::Full, ..Default::default() };
    let f = fit(back.st_observations().unwrap(), StFamily::ExponentialSeparable, &cfg).unwrap();
    assert!(f.valid && f.converged);
    assert!((f.trend.a1 - trend.a1).abs() < 0.1);

    let mut table = Vec::new();
    f.write_table(&mut table).unwrap();
    let f = FitResult::read_table(table.as_slice()).unwrap();
    let unc = f.uncertainty().expect("covariance of the full-likelihood fit");
    let est = f.pa_model().estimate(0.3, 1.0, 0.0, &unc).unwrap();
    let psi = psi_spatiotemporal(&truth, &trend, 0.3, 1.0, 0.0).unwrap();
    assert!((est.psi - psi).abs() < 4.0 * est.sd() + 0.05, "{} vs {psi}", est.psi);
    let same = pa_test(&est, est.psi, Alternative::TwoSided).unwrap();
    assert!((same.p_value - 1.0).abs() < 1e-12);

    let rows = pa_curve(&f.pa_model(), &[0.3], &[0.0, 1.0, 2.0, 4.0], &[0.0, 1.0], Some(&unc)).unwrap();
    assert_eq!(rows.len(), 8);
    for w in rows.windows(2).filter(|w| w[0].u == w[1].u) {
        assert!(w[1].psi <= w[0].psi + 1e-12);
    }
}

#[test]
fn detrended_variogram_rises_toward_the_sill() {
    let (sample, truth, _) = simulated(5);
    let (trend, residuals) = detrend_field(sample.st_observations().unwrap()).unwrap();
    assert!((trend.a1 + 0.1).abs() < 0.1);
    let bins = VariogramBins { h_width: 1.0, h_max: 6.0, u_max: 2.0 };
    let v = empirical_variogram(&residuals, &bins).unwrap();
    let spatial = v.spatial_marginal();
    let first = spatial.iter().find(|b| b.h > 0.0).unwrap();
    let last = spatial.last().unwrap();
    assert!(first.semivariance < last.semivariance);
    assert!(last.semivariance < 2.0 * truth.sigma2());
}

#[test]
fn image_stack_becomes_a_field() {
    let frames: Vec<RgbRaster> = (0..3)
        .map(|k| {
            RgbRaster::from_fn(30, 15, |x, y| [(x * 4) as u8, 100 + 20 * k as u8, (y * 8) as u8])
                .unwrap()
                .with_timestamp(2010 + 2 * k)
        })
        .collect();
    let rasters: Vec<_> = frames
        .iter()
        .map(|r| {
            let mut ppm = Vec::new();
            write_ppm(r, &mut ppm).unwrap();
            let back = read_ppm(ppm.as_slice()).unwrap().with_timestamp(r.timestamp.unwrap());
            gcc(&downscale_block_mean(&back, 15).unwrap())
        })
        .collect();
    let field = to_field(&rasters).unwrap();
    assert_eq!((field.width, field.height), (2, 1));
    let obs = field.sample.st_observations().unwrap();
    assert_eq!(obs.len(), 6);
    let times: Vec<f64> = obs.iter().map(|o| o.t).collect();
    assert_eq!(times, [1.0, 1.0, 3.0, 3.0, 5.0, 5.0]);
}
