use proptest::prelude::*;

use super::*;
use crate::correlators::Plane;
use crate::model::{dressed_splitting, SystemParams};

const WP: f64 = 300.0;

fn families(conditions: &[LeapfrogCondition]) -> Vec<Vec<usize>> {
    let mut f: Vec<Vec<usize>> = conditions.iter().map(|c| c.coefficients.clone()).collect();
    f.dedup();
    f
}

#[test]
fn two_photons_give_three_antidiagonals() {
    let c = enumerate_conditions(&[1, 1], WP).unwrap();
    assert_eq!(c.len(), 3);
    assert!(c.iter().all(|c| c.coefficients == [1, 1]));
    let deltas: Vec<f64> = c.iter().map(|c| c.delta).collect();
    assert_eq!(deltas, [-WP, 0.0, WP]);
}

#[test]
fn three_photons_give_four_families() {
    let c = enumerate_conditions(&[1, 1, 1], WP).unwrap();
    assert_eq!(c.len(), 12);
    assert_eq!(families(&c), [vec![1, 1, 1], vec![1, 1, 0], vec![1, 0, 1], vec![0, 1, 1]]);
}

#[test]
fn heralded_bundle_families() {
    let c = enumerate_conditions(&[2, 1], WP).unwrap();
    assert_eq!(families(&c), [vec![2, 1], vec![1, 1]]);
}

#[test]
fn single_group_sees_every_degenerate_order() {
    let c = enumerate_conditions(&[4], WP).unwrap();
    assert_eq!(families(&c), [vec![4], vec![3], vec![2]]);
    assert!(enumerate_conditions(&[1], WP).unwrap().is_empty());
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(enumerate_conditions(&[], WP).is_err());
    assert!(enumerate_conditions(&[1, 0], WP).is_err());
    assert!(enumerate_conditions(&[1, 1], 0.0).is_err());
    assert!(LeapfrogCondition::new(vec![1, 0], Branch::Upper, WP).is_err());
    assert!(recommend_filters(&[1, 1], Branch::Upper, WP, 0.0, 2.0).is_err());
}

#[test]
fn labels_read_as_equations() {
    let c = LeapfrogCondition::new(vec![2, 1], Branch::Lower, WP).unwrap();
    assert_eq!(c.label(), "2w1 + w2 = -W+");
    assert_eq!(Branch::from_sign(1), Some(Branch::Upper));
    assert_eq!(Branch::from_sign(2), None);
}

#[test]
fn degenerate_bundles_sit_at_fractions_of_the_splitting() {
    for n in 2..=4 {
        for branch in [Branch::Lower, Branch::Upper] {
            let r = recommend_filters(&[n], branch, WP, 3.0, 2.0).unwrap();
            assert_eq!(r.rationale, Rationale::DegenerateBundle);
            assert!((r.frequencies[0] - branch.sign() * WP / n as f64).abs() < 1e-12);
            assert!((r.clearance - WP / n as f64).abs() < 1e-9);
            assert!(r.verify(&[n]));
        }
    }
    // The central leapfrog of a degenerate bundle sits on the central peak.
    assert!(matches!(recommend_filters(&[2], Branch::Central, WP, 1.0, 2.0), Err(Error::Feasibility { .. })));
}

#[test]
fn heralder_at_a_sideband_is_rejected() {
    // Sideband heralder followed by a two-photon bundle on the same
    // condition: the heralder itself is a real transition.
    let sideband = [WP / 2.0, -WP];
    let c = LeapfrogCondition::new(vec![2, 1], Branch::Central, WP).unwrap();
    assert!(c.contains(&sideband, 1e-12));
    assert_eq!(real_state_clearance(&[2, 1], &sideband, WP), 0.0);
    let r = recommend_filters(&[2, 1], Branch::Central, WP, 3.0, 5.0).unwrap();
    assert_eq!(r.rationale, Rationale::AvoidsRealStates);
    assert!(r.verify(&[2, 1]));
    assert!(r.clearance > 15.0);
    assert!((r.frequencies[1] - sideband[1]).abs() > 15.0);
}

#[test]
fn symmetric_pair_is_preferred() {
    let r = recommend_filters(&[1, 1], Branch::Central, WP, 3.0, 2.0).unwrap();
    assert!((r.frequencies[0] - WP / 2.0).abs() < 1e-9, "{:?}", r.frequencies);
    assert!((r.frequencies[1] + WP / 2.0).abs() < 1e-9);
    assert!((r.clearance - WP / 2.0).abs() < 1e-9);
}

#[test]
fn excessive_margin_reports_the_best_achievable() {
    let gamma = 2.0;
    match recommend_filters(&[1, 1], Branch::Central, WP, WP / (2.0 * gamma) + 1.0, gamma) {
        Err(Error::Feasibility { requested, best }) => {
            assert_eq!(requested, WP / (2.0 * gamma) + 1.0);
            assert!((best - WP / (2.0 * gamma)).abs() < 1e-9, "{best}");
        }
        other => panic!("expected a feasibility error, got {other:?}"),
    }
}

#[test]
fn three_group_recommendation_is_self_consistent() {
    let r = recommend_filters(&[1, 1, 1], Branch::Upper, WP, 3.0, 2.0).unwrap();
    assert!(r.verify(&[1, 1, 1]));
    assert!(r.frequencies.iter().all(|w| w.abs() <= WP));
}

fn resonant_splitting() -> f64 {
    dressed_splitting(&SystemParams::new(5.0, 0.0).unwrap()).unwrap().omega_plus
}

#[test]
fn antidiagonals_cross_a_two_photon_map() {
    let wp = resonant_splitting();
    let axes = [Axis::linear("w1", -2.0 * wp, 2.0 * wp, 41).unwrap(), Axis::linear("w2", -2.0 * wp, 2.0 * wp, 41).unwrap()];
    let template = GridTemplate::free(vec![0.0, 0.0], &[0, 1]);
    let conditions = enumerate_conditions(&[1, 1], wp).unwrap();
    let overlay = annotate_template(&template, &axes, &conditions).unwrap();
    assert_eq!(overlay.lines.len(), 3);
    assert!(overlay.skipped.is_empty());
    for line in &overlay.lines {
        assert_eq!(line.points.len(), 2);
        for p in &line.points {
            assert!(line.condition.residual(&template.frequencies(p)).abs() < 1e-9);
            assert!(p.iter().all(|v| v.abs() <= 2.0 * wp + 1e-9));
        }
        assert!(line.points[0] != line.points[1]);
    }
}

#[test]
fn volume_cut_shows_intersections() {
    // Vertical plane pinned on the central two-photon leapfrog of groups 1, 2.
    let plane = Plane { coefficients: vec![1.0, 1.0, 0.0], offset: 0.0 };
    let (template, _) = plane.template().unwrap();
    let axes = [Axis::linear("w1", -600.0, 600.0, 5).unwrap(), Axis::linear("w3", -600.0, 600.0, 5).unwrap()];
    let conditions = enumerate_conditions(&[1, 1, 1], WP).unwrap();
    let overlay = annotate_template(&template, &axes, &conditions).unwrap();
    assert_eq!(overlay.lines.len() + overlay.skipped.len(), 12);
    // The pinned family itself: met everywhere for Δ = 0, nowhere otherwise.
    let pinned: Vec<&SkippedCondition> = overlay.skipped.iter().filter(|s| s.condition.coefficients == [1, 1, 0]).collect();
    assert_eq!(pinned.len(), 3);
    assert!(pinned.iter().any(|s| s.reason.contains("whole grid")));
    for line in &overlay.lines {
        for p in &line.points {
            assert!(line.condition.residual(&template.frequencies(p)).abs() < 1e-9);
        }
    }
    // ω̃₁+ω̃₂+ω̃₃ = Δ reduces to ω̃₃ = Δ on this plane: horizontal lines.
    let full: Vec<&OverlayLine> = overlay.lines.iter().filter(|l| l.condition.coefficients == [1, 1, 1]).collect();
    assert_eq!(full.len(), 3);
    for l in full {
        assert_eq!(l.points[0][1], l.condition.delta);
        assert_eq!(l.points[1][1], l.condition.delta);
    }
}

#[test]
fn condition_off_the_fixed_frequency_is_skipped() {
    let template = GridTemplate::free(vec![0.0, 0.0, 7.0], &[0, 1]);
    let axes = [Axis::linear("w1", -1.0, 1.0, 3).unwrap(), Axis::linear("w2", -1.0, 1.0, 3).unwrap()];
    let c = LeapfrogCondition::new(vec![0, 0, 2], Branch::Upper, WP).unwrap();
    let overlay = annotate_template(&template, &axes, &[c]).unwrap();
    assert!(overlay.lines.is_empty());
    assert_eq!(overlay.skipped.len(), 1);
    assert!(overlay.skipped[0].reason.contains("not met"));
}

#[test]
fn single_axis_overlays_are_points() {
    let axis = Axis::linear("w", -WP, WP, 11).unwrap();
    let template = GridTemplate::free(vec![0.0], &[0]);
    let overlay = annotate_template(&template, std::slice::from_ref(&axis), &enumerate_conditions(&[3], WP).unwrap()).unwrap();
    let mut xs: Vec<f64> = overlay.lines.iter().map(|l| l.points[0][0]).collect();
    xs.sort_by(f64::total_cmp);
    let expected = [-WP / 2.0, -WP / 3.0, 0.0, 0.0, WP / 3.0, WP / 2.0];
    assert_eq!(xs.len(), expected.len());
    for (x, e) in xs.iter().zip(expected) {
        assert!((x - e).abs() < 1e-9);
    }
    // With a trailing delay axis the points become vertical segments.
    let tau = Axis::linear("tau", -1.0, 1.0, 3).unwrap();
    let overlay = annotate_template(&template, &[axis, tau], &enumerate_conditions(&[2], WP).unwrap()).unwrap();
    assert!(overlay.lines.iter().all(|l| l.points == [vec![l.points[0][0], -1.0], vec![l.points[0][0], 1.0]]));
}

#[test]
fn out_of_range_lines_are_skipped() {
    let axes = [Axis::linear("w1", 0.0, 1.0, 2).unwrap(), Axis::linear("w2", 0.0, 1.0, 2).unwrap()];
    let template = GridTemplate::free(vec![0.0, 0.0], &[0, 1]);
    let overlay = annotate_template(&template, &axes, &enumerate_conditions(&[1, 1], WP).unwrap()).unwrap();
    // Only the corner (0, 0) of the central antidiagonal is inside.
    assert_eq!(overlay.lines.len(), 1);
    assert_eq!(overlay.lines[0].points, [vec![0.0, 0.0], vec![0.0, 0.0]]);
    assert_eq!(overlay.skipped.len(), 2);
}

#[test]
fn overlays_need_frequency_axes() {
    let axes = [Axis::linear("w1", 0.0, 1.0, 2).unwrap()];
    assert!(annotate_template(&GridTemplate::fixed(vec![0.0, 0.0]), &axes, &[]).is_err());
}

#[test]
fn overlay_round_trips_through_json() {
    let axes = [Axis::linear("w1", -WP, WP, 3).unwrap(), Axis::linear("w2", -WP, WP, 3).unwrap()];
    let overlay = annotate_template(&GridTemplate::free(vec![0.0, 0.0], &[0, 1]), &axes, &enumerate_conditions(&[2, 1], WP).unwrap()).unwrap();
    let text = serde_json::to_string(&overlay).unwrap();
    assert_eq!(serde_json::from_str::<Overlay>(&text).unwrap(), overlay);
}

proptest! {
    #[test]
    fn points_built_on_a_condition_satisfy_it(
        partition in prop::collection::vec(1usize..=3, 1..=3),
        pick in 0usize..64,
        branch in 0usize..3,
        free in prop::collection::vec(-2.0f64..2.0, 3),
    ) {
        let conditions = enumerate_conditions(&partition, WP).unwrap();
        prop_assume!(!conditions.is_empty());
        let c = &conditions[pick % conditions.len()];
        let c = LeapfrogCondition::new(c.coefficients.clone(), Branch::ALL[branch], WP).unwrap();
        let k = c.coefficients.iter().rposition(|&v| v > 0).unwrap();
        let mut w: Vec<f64> = free.iter().take(partition.len()).map(|x| x * WP).collect();
        let rest: f64 = c.coefficients.iter().zip(&w).enumerate().filter(|(i, _)| *i != k).map(|(_, (&ci, wi))| ci as f64 * wi).sum();
        w[k] = (c.delta - rest) / c.coefficients[k] as f64;
        prop_assert!(c.contains(&w, 1e-9 * WP));
        prop_assert!(c.order() >= 2);
    }

    #[test]
    fn recommendations_pass_their_own_tests(
        partition in prop::collection::vec(1usize..=3, 1..=2),
        branch in 0usize..3,
        margin in 0.5f64..5.0,
    ) {
        let order: usize = partition.iter().sum();
        prop_assume!(order >= 2);
        match recommend_filters(&partition, Branch::ALL[branch], WP, margin, 2.0) {
            Ok(r) => {
                prop_assert!(r.verify(&partition));
                prop_assert!(r.frequencies.iter().all(|w| w.abs() <= WP * (1.0 + 1e-12)));
            }
            Err(Error::Feasibility { best, .. }) => prop_assert!(best < margin),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }
}
