use proptest::prelude::*;

use dreamkit::excitation::{
    apply_deadzone, enforce_min_norm, generate_trajectory, step_ou, ExcitationConfig, OuParams,
    OuState,
};
use dreamkit::gate::parse_verdict;
use dreamkit::splat::{render_splats, CameraModel, ContactRecord, SplatConfig};
use dreamkit::tokens::{confidence, cosine_keep_masked, FactorizedVocab, FsqSpec};

fn camera() -> CameraModel {
    CameraModel {
        c: [0.0; 3],
        rotation_cw: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        fx: 80.0,
        fy: 80.0,
        cx: 32.0,
        cy: 24.0,
        width: 64,
        height: 48,
        x_min: 0.05,
    }
}

fn contact() -> impl Strategy<Value = ContactRecord> {
    (
        0.2f64..3.0,
        -0.5f64..0.5,
        -0.4f64..0.4,
        prop::array::uniform3(-30.0f64..30.0),
    )
        .prop_map(|(x, y, z, f)| ContactRecord { p: [x, y, z], f })
}

proptest! {
    #[test]
    fn splat_channels_in_unit_range_and_deterministic(
        contacts in prop::collection::vec(contact(), 0..6)
    ) {
        let cam = camera();
        let cfg = SplatConfig::default();
        let a = render_splats(&contacts, &cam, &cfg).unwrap();
        let b = render_splats(&contacts, &cam, &cfg).unwrap();
        prop_assert_eq!(&a, &b);
        for px in &a.pixels {
            prop_assert!(px.iter().all(|c| (0.0..=1.0).contains(c)));
        }
    }

    #[test]
    fn single_contact_color_is_uniform(c in contact()) {
        let cam = camera();
        let img = render_splats(&[c], &cam, &SplatConfig::default()).unwrap();
        let lit: Vec<_> = img.pixels.iter().filter(|p| **p != [0.0; 3]).collect();
        if let Some(first) = lit.first() {
            for p in &lit {
                prop_assert_eq!(*p, *first);
            }
        }
    }

    #[test]
    fn red_channel_monotone_in_magnitude(m1 in 0.0f64..40.0, m2 in 0.0f64..40.0) {
        let cam = camera();
        let cfg = SplatConfig::default();
        let red = |m: f64| {
            let c = ContactRecord { p: [1.0, 0.0, 0.0], f: [0.0, 0.0, m] };
            render_splats(&[c], &cam, &cfg).unwrap().get(32, 24)[0]
        };
        let (lo, hi) = if m1 <= m2 { (m1, m2) } else { (m2, m1) };
        prop_assert!(red(lo) <= red(hi));
        if lo >= cfg.m_max {
            prop_assert_eq!(red(lo), red(hi));
        }
    }

    #[test]
    fn vocab_roundtrip(v_f in 2u32..40, k in 1u32..4, seed in any::<u64>()) {
        let v = FactorizedVocab::from_factors(v_f, k).unwrap();
        let z = (seed % v.size()) as u32;
        let d = v.decompose(z).unwrap();
        prop_assert_eq!(d.len(), k as usize);
        prop_assert!(d.iter().all(|x| *x < v_f));
        prop_assert_eq!(v.compose(&d).unwrap(), z);
        prop_assert!(v.decompose(v.size() as u32).is_err());
    }

    #[test]
    fn fsq_quantize_snaps_to_nearest_level(
        levels in prop::collection::vec(2u32..9, 1..5),
        raw in prop::collection::vec(-1.5f64..1.5, 5),
    ) {
        let spec = FsqSpec::new(levels.clone()).unwrap();
        let x = &raw[..levels.len()];
        let q = spec.quantize(x).unwrap();
        prop_assert!(q < spec.codebook_size());
        let g = spec.dequantize(q).unwrap();
        for (i, &l) in levels.iter().enumerate() {
            let step = 2.0 / (l - 1) as f64;
            let clamped = x[i].clamp(-1.0, 1.0);
            prop_assert!((g[i] - clamped).abs() <= step / 2.0 + 1e-12);
        }
    }

    #[test]
    fn keep_masked_schedule_is_nonincreasing(n in 1usize..20, s in 1usize..300) {
        let trace: Vec<usize> = (0..n).map(|i| cosine_keep_masked(i, n, s)).collect();
        prop_assert!(trace.windows(2).all(|w| w[0] >= w[1]));
        prop_assert_eq!(*trace.last().unwrap(), 0);
        prop_assert!(trace.iter().all(|&m| m <= s));
    }

    #[test]
    fn confidence_is_shift_invariant(
        a in prop::collection::vec(-8.0f64..8.0, 4),
        b in prop::collection::vec(-8.0f64..8.0, 4),
        shift in -50.0f64..50.0,
    ) {
        let c0 = confidence(&[&a, &b]);
        let a2: Vec<f64> = a.iter().map(|x| x + shift).collect();
        let c1 = confidence(&[&a2, &b]);
        prop_assert!(c0 > 0.0 && c0 <= 1.0);
        prop_assert!((c0 - c1).abs() < 1e-9);
    }

    #[test]
    fn min_norm_then_deadzone(x in prop::array::uniform3(-2.0f64..2.0), m in 0.05f64..1.0, eps in 0.0f64..0.5) {
        let y = enforce_min_norm(x, m, [0.0, 0.0, 1.0]);
        let n = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(n >= m * (1.0 - 1e-12));
        let z = apply_deadzone(y, eps);
        for i in 0..3 {
            prop_assert!(z[i] == 0.0 && y[i].abs() < eps || z[i] == y[i]);
        }
    }

    #[test]
    fn zero_noise_ou_converges_monotonically(x0 in prop::array::uniform3(-3.0f64..3.0)) {
        let params = OuParams { sigma: 0.0, ..OuParams::default() };
        let mut s = OuState::at(x0);
        for _ in 0..200 {
            let next = step_ou(&s, &params, [0.0; 3]);
            for i in 0..3 {
                prop_assert!(next.x[i].abs() <= s.x[i].abs());
            }
            s = next;
        }
    }

    #[test]
    fn trajectory_stays_in_workspace(seed in any::<u64>()) {
        let params = OuParams { seed, ..OuParams::default() };
        let cfg = ExcitationConfig { horizon: 300, ..ExcitationConfig::default() };
        let traj = generate_trajectory(&params, &cfg, cfg.workspace.center()).unwrap();
        prop_assert_eq!(traj.len(), 300);
        prop_assert!(traj.iter().all(|s| cfg.workspace.contains(s.p)));
    }

    #[test]
    fn verdict_parse_never_panics(s in ".{0,200}") {
        let _ = parse_verdict(&s);
    }

    #[test]
    fn verdict_confidence_range_enforced(c in -2.0f64..3.0, frame in 0u32..12) {
        let raw = format!(
            r#"{{"collision_likely":true,"confidence":{c},"first_collision_frame":{frame},"explanation":""}}"#
        );
        let ok = (0.0..=1.0).contains(&c) && frame <= 7;
        prop_assert_eq!(parse_verdict(&raw).is_ok(), ok);
    }
}
