use mudec_core::synthgen::*;
use ndarray::Array2;
use proptest::prelude::*;

fn short_spec(level: f64, seed: u64) -> TrialSpec {
    TrialSpec {
        duration_s: 4.0,
        target_profile: Trapezoid {
            ramp_s: 1.0,
            plateau_s: 1.5,
            plateau_level_frac_mvf: level,
        },
        seed,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn spike_counts_monotone_in_level(lo in 0.05f64..0.9, bump in 0.0f64..0.1, seed in 0u64..1000) {
        let sc = default_scenario(ScenarioName::Easy, 3).unwrap();
        let hi = (lo + bump).min(1.0);
        let a = discharge_times(&sc.pool, &short_spec(lo, seed).drive(), seed).unwrap();
        let b = discharge_times(&sc.pool, &short_spec(hi, seed).drive(), seed).unwrap();
        for (ta, tb) in a.iter().zip(&b) {
            prop_assert!(tb.len() >= ta.len(), "{} < {}", tb.len(), ta.len());
        }
    }

    #[test]
    fn force_nonnegative_and_silent_before_first_spike(level in 0.1f64..1.0, seed in 0u64..1000) {
        let sc = default_scenario(ScenarioName::Easy, 5).unwrap();
        let trial = generate_trial(&sc.pool, &sc.mix, &short_spec(level, seed)).unwrap();
        let force = trial.force.channel(0);
        prop_assert!(force.iter().all(|&f| f >= 0.0));
        let first = trial.truth_spikes.units.iter().filter_map(|u| u.indices.first()).min().copied();
        let first = first.unwrap_or(force.len());
        prop_assert!(force.iter().take(first).all(|&f| f == 0.0));
    }
}

#[test]
fn noise_free_emg_is_superposition_of_units() {
    let mut sc = default_scenario(ScenarioName::Easy, 9).unwrap();
    sc.mix.noise_std = 0.0;
    let spec = short_spec(0.6, 17);
    let trial = generate_trial(&sc.pool, &sc.mix, &spec).unwrap();
    let trains: Vec<Vec<usize>> = trial.truth_spikes.units.iter().map(|u| u.indices.clone()).collect();
    let n = trial.emg.n_samples();
    let mut sum = Array2::<f64>::zeros((sc.mix.n_channels(), n));
    for u in 0..trains.len() {
        let mut only = vec![Vec::new(); trains.len()];
        only[u] = trains[u].clone();
        sum += &render_emg(&sc.mix, &only, n);
    }
    let err = (&sum - trial.emg.data()).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(err <= 1e-9, "{err}");
}
