mod common;

use proptest::prelude::*;
use twu_core::filterbank::{
    highpass_from_lowpass, lattice_to_filters, pr_loss, BankMode, FilterBank, LatticeFilterBank,
};

fn taps_strategy() -> impl Strategy<Value = Vec<f64>> {
    (1usize..=4).prop_flat_map(|half| prop::collection::vec(-2.0f64..2.0, 2 * half))
}

fn angles_strategy() -> impl Strategy<Value = Vec<f64>> {
    use std::f64::consts::PI;
    prop::collection::vec(-PI..PI, 1..=4)
}

proptest! {
    #[test]
    fn pr_loss_ignores_reversal_and_sign(h in taps_strategy()) {
        let base = pr_loss(&h).unwrap();
        let reversed: Vec<f64> = h.iter().rev().copied().collect();
        let negated: Vec<f64> = h.iter().map(|v| -v).collect();
        let tol = 1e-12 * (1.0 + base);
        prop_assert!((pr_loss(&reversed).unwrap() - base).abs() < tol);
        prop_assert!((pr_loss(&negated).unwrap() - base).abs() < tol);
        prop_assert!(base >= 0.0);
    }

    #[test]
    fn lattice_banks_are_orthogonal(angles in angles_strategy()) {
        let f = lattice_to_filters(&LatticeFilterBank::new(angles.clone()).unwrap());
        prop_assert_eq!(f.tap_count(), 2 * angles.len());
        prop_assert!(pr_loss(f.lowpass()).unwrap() < 1e-12);
        prop_assert_eq!(highpass_from_lowpass(f.lowpass()).unwrap(), f.highpass().to_vec());
    }

    #[test]
    fn text_format_round_trips(angles in angles_strategy(), h in taps_strategy()) {
        for bank in [
            FilterBank::Lattice(LatticeFilterBank::new(angles.clone()).unwrap()),
            FilterBank::Free(twu_core::filterbank::CoefficientFilterBank::from_lowpass(h.clone()).unwrap()),
        ] {
            prop_assert_eq!(FilterBank::from_text(&bank.to_text()).unwrap(), bank);
        }
    }
}

#[test]
fn thousand_lattice_banks_keep_double_shift_orthogonality() {
    let mut r = common::rng(5);
    for _ in 0..1000 {
        let stages = rand::Rng::random_range(&mut r, 0..=3);
        let f = LatticeFilterBank::new(common::random_angles(&mut r, stages)).unwrap().filters();
        assert!(pr_loss(f.lowpass()).unwrap() < 1e-12);
        // alias cancellation holds bit for bit
        let n = f.tap_count();
        for (i, &v) in f.highpass().iter().enumerate() {
            let expect = if i % 2 == 0 { f.lowpass()[n - 1 - i] } else { -f.lowpass()[n - 1 - i] };
            assert_eq!(v.to_bits(), expect.to_bits());
        }
    }
}

#[test]
fn mode_names_parse() {
    assert_eq!("orthlatt".parse::<BankMode>().unwrap(), BankMode::Lattice);
    assert_eq!("pr-relax".parse::<BankMode>().unwrap(), BankMode::Free);
    assert!("wavelet".parse::<BankMode>().is_err());
}
