use prilo::math::standard_normal;
use prilo::Seed;
use prilo_harness::experiment::ColumnSummary;

fn mean_width(n: usize, batches: u64) -> f64 {
    (0..batches)
        .map(|b| {
            let values: Vec<f64> = standard_normal(n, Seed(b).derive(n as u64)).iter().map(|v| 25.0 + 2.0 * v).collect();
            let s = ColumnSummary::of(&values);
            s.ci95_high - s.ci95_low
        })
        .sum::<f64>()
        / batches as f64
}

#[test]
fn interval_width_shrinks_with_sqrt_n() {
    for n in [16, 64, 256] {
        let ratio = mean_width(2 * n, 400) / mean_width(n, 400);
        assert!((ratio - 0.5f64.sqrt()).abs() < 0.05, "n {n}: ratio {ratio}");
    }
}

#[test]
fn interval_covers_the_true_mean() {
    let hits = (0..1000u64)
        .filter(|&b| {
            let values: Vec<f64> = standard_normal(64, Seed(b)).iter().map(|v| 3.0 + v).collect();
            let s = ColumnSummary::of(&values);
            s.ci95_low <= 3.0 && 3.0 <= s.ci95_high
        })
        .count();
    assert!((930..=970).contains(&hits), "{hits} of 1000");
}
