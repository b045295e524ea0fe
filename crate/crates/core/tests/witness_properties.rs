use proptest::prelude::*;
use steerlab::phase_space::{quadrature_axis, ModePartition};
use steerlab::states::StateSpec;
use steerlab::witness::{evaluate_witness, Direction, WitnessKind};

fn value(spec: StateSpec, kind: WitnessKind, dir: Direction) -> (f64, f64) {
    let r = evaluate_witness(&spec.build().unwrap(), &ModePartition::two_mode(0), kind, dir).unwrap();
    (r.value, r.raw)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn witnesses_are_clamped_and_ordered(s in 0.3f64..6.0, eta in 0.0f64..0.6, theta in 0.0f64..1.6, ba in any::<bool>()) {
        let dir = if ba { Direction::BobToAlice } else { Direction::AliceToBob };
        let spec = StateSpec::photon_subtracted(s, s, theta, eta);
        let (reid, reid_raw) = value(spec, WitnessKind::Reid, dir);
        let (metro, metro_raw) = value(spec, WitnessKind::Metrological, dir);
        prop_assert_eq!(reid, reid_raw.max(0.0));
        prop_assert_eq!(metro, metro_raw.max(0.0));
        prop_assert!(reid_raw <= metro_raw + 1e-6, "Reid {} above metrological {}", reid_raw, metro_raw);
    }

    #[test]
    fn loss_never_helps_a_gaussian_witness(s in 0.2f64..6.0, eta in 0.0f64..0.8, extra in 0.01f64..0.2) {
        let (w0, _) = value(StateSpec::gaussian(s, eta), WitnessKind::Metrological, Direction::AliceToBob);
        let (w1, _) = value(StateSpec::gaussian(s, (eta + extra).min(1.0)), WitnessKind::Metrological, Direction::AliceToBob);
        prop_assert!(w1 <= w0 + 1e-9);
    }

    #[test]
    fn homodyne_marginals_are_densities(s1 in 0.5f64..6.0, s2 in 0.5f64..6.0, theta in -1.6f64..1.6, eta in 0.0f64..0.9, phi in 0.0f64..3.2, mode in 0usize..2) {
        let state = StateSpec::photon_subtracted(s1, s2, theta, eta).build().unwrap();
        let m = state.marginal_1d(quadrature_axis(mode, phi, 2).unwrap().as_slice()).unwrap();
        prop_assert!(m.is_nonnegative());
        prop_assert!(m.is_normalized());
    }
}

#[test]
fn vacuum_shows_no_steering() {
    for kind in [WitnessKind::Metrological, WitnessKind::Reid, WitnessKind::Entropic] {
        for dir in [Direction::AliceToBob, Direction::BobToAlice] {
            let (v, raw) = value(StateSpec::gaussian(0.0, 0.0), kind, dir);
            assert!(v < 1e-9 && raw.abs() < 1e-9, "{kind:?} {dir:?}: {raw}");
        }
    }
}
