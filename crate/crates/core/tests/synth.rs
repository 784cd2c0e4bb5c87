use virality::synth::{self, SynthSpec};

#[test]
fn default_spec_has_the_expected_zero_mass() {
    let s = synth::generate(&SynthSpec {
        n_rows: 100_000,
        ..SynthSpec::default()
    })
    .unwrap();
    let zeros = s.records.iter().filter(|r| r.retweet_total == 0).count() as f64 / 1e5;
    assert!((0.82..=0.88).contains(&zeros), "zero share {zeros}");
    // Poisson zero mass mean(exp(-λ)) is what the intercept was solved for.
    assert!((zeros - s.expected_zero_fraction).abs() < 0.01);
}
