use std::ffi::{CStr, CString};
use std::ptr;

use dreamkit_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = dk_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

const CAMERA: &str = r#"{"c":[0,0,0],"rotation_cw":[1,0,0,0,1,0,0,0,1],"fx":100,"fy":100,"cx":8,"cy":6,"width":16,"height":12,"x_min":0.01}"#;

#[test]
fn vocab_roundtrip_all_tokens() {
    let mut d = [0u32; 2];
    let mut z = 0u32;
    for token in 0..256 {
        unsafe {
            assert_eq!(
                dk_vocab_decompose(16, 2, token, d.as_mut_ptr(), 2),
                DkStatus::Ok
            );
            assert_eq!(dk_vocab_compose(16, 2, d.as_ptr(), 2, &mut z), DkStatus::Ok);
        }
        assert_eq!(d, [token % 16, token / 16]);
        assert_eq!(z, token);
    }
}

#[test]
fn errors_set_message_and_success_clears_it() {
    let mut d = [0u32; 1];
    let s = unsafe { dk_vocab_decompose(16, 2, 3, d.as_mut_ptr(), 1) };
    assert_eq!(s, DkStatus::BufferTooSmall);
    assert!(last_error().contains("required"));
    let mut z = 0;
    let s = unsafe { dk_vocab_compose(16, 2, ptr::null(), 2, &mut z) };
    assert_eq!(s, DkStatus::NullPointer);
    let mut d = [0u32; 2];
    assert_eq!(
        unsafe { dk_vocab_decompose(16, 2, 3, d.as_mut_ptr(), 2) },
        DkStatus::Ok
    );
    assert!(dk_last_error().is_null());
}

#[test]
fn fsq_roundtrip() {
    let levels = [8u32, 5, 5, 5];
    let mut x = [0.0f64; 4];
    let mut back = 0u32;
    for i in 0..1000 {
        unsafe {
            assert_eq!(
                dk_fsq_dequantize(levels.as_ptr(), 4, i, x.as_mut_ptr()),
                DkStatus::Ok
            );
            assert_eq!(
                dk_fsq_quantize(levels.as_ptr(), 4, x.as_ptr(), &mut back),
                DkStatus::Ok
            );
        }
        assert_eq!(back, i);
    }
    let s = unsafe { dk_fsq_dequantize(levels.as_ptr(), 4, 1000, x.as_mut_ptr()) };
    assert_eq!(s, DkStatus::InvalidArgument);
}

#[test]
fn render_queries_size_then_fills() {
    let (cam, scene) = (c(CAMERA), c(r#"[{"p":[1,0,0],"f":[0,0,5]}]"#));
    let (mut w, mut h) = (0usize, 0usize);
    let s = unsafe {
        dk_render_splats(
            scene.as_ptr(),
            cam.as_ptr(),
            ptr::null(),
            ptr::null_mut(),
            0,
            &mut w,
            &mut h,
        )
    };
    assert_eq!(s, DkStatus::BufferTooSmall);
    assert_eq!((w, h), (16, 12));
    let mut img = vec![0.0; 3 * w * h];
    let s = unsafe {
        dk_render_splats(
            scene.as_ptr(),
            cam.as_ptr(),
            ptr::null(),
            img.as_mut_ptr(),
            img.len(),
            &mut w,
            &mut h,
        )
    };
    assert_eq!(s, DkStatus::Ok);
    let center = &img[(6 * 16 + 8) * 3..(6 * 16 + 8) * 3 + 3];
    assert!((center[0] - 0.25).abs() < 1e-12, "{center:?}");
    assert!(img.iter().all(|v| (0.0..=1.0).contains(v)));

    let bad = c("[{\"p\":[1,0,0]}]");
    let s = unsafe {
        dk_render_splats(
            bad.as_ptr(),
            cam.as_ptr(),
            ptr::null(),
            img.as_mut_ptr(),
            img.len(),
            &mut w,
            &mut h,
        )
    };
    assert_eq!(s, DkStatus::Parse);
    assert!(last_error().starts_with("scene"));
}

#[test]
fn trajectory_handle_lifecycle() {
    let (ou, exc) = (c(r#"{"seed":9}"#), c(r#"{"horizon":320}"#));
    let mut t = ptr::null_mut();
    let s = unsafe { dk_trajectory_generate(ou.as_ptr(), exc.as_ptr(), ptr::null(), &mut t) };
    assert_eq!(s, DkStatus::Ok);
    assert_eq!(unsafe { dk_trajectory_len(t) }, 320);
    let (mut x, mut p) = ([0.0; 3], [0.0; 3]);
    let expected = dreamkit::excitation::generate_trajectory(
        &serde_json::from_str(r#"{"seed":9}"#).unwrap(),
        &serde_json::from_str(r#"{"horizon":320}"#).unwrap(),
        dreamkit::excitation::ExcitationConfig::default()
            .workspace
            .center(),
    )
    .unwrap();
    for (k, step) in expected.iter().enumerate() {
        assert_eq!(
            unsafe { dk_trajectory_step(t, k, x.as_mut_ptr(), p.as_mut_ptr()) },
            DkStatus::Ok
        );
        assert_eq!((x, p), (step.x, step.p));
    }
    assert_eq!(
        unsafe { dk_trajectory_step(t, 320, x.as_mut_ptr(), p.as_mut_ptr()) },
        DkStatus::InvalidArgument
    );
    unsafe { dk_trajectory_free(t) };
    unsafe { dk_trajectory_free(ptr::null_mut()) };
    assert_eq!(unsafe { dk_trajectory_len(ptr::null()) }, 0);

    let bad = c(r#"{"sigma":-1}"#);
    let s = unsafe { dk_trajectory_generate(bad.as_ptr(), ptr::null(), ptr::null(), &mut t) };
    assert_eq!(s, DkStatus::InvalidArgument);
}

#[test]
fn model_forward_matches_core() {
    use dreamkit::dynamics::{forward, save_checkpoint, ModelConfig, ModelState};
    use dreamkit::tokens::{Conditioning, TokenGrid};

    let cfg = ModelConfig::toy();
    let state = ModelState::init(&cfg, 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&path, &cfg, &state).unwrap();

    let mut m = ptr::null_mut();
    let p = c(path.to_str().unwrap());
    assert_eq!(unsafe { dk_model_load(p.as_ptr(), &mut m) }, DkStatus::Ok);
    let mut dims = DkModelDims::default();
    assert_eq!(unsafe { dk_model_dims(m, &mut dims) }, DkStatus::Ok);
    assert_eq!((dims.frames, dims.spatial, dims.vocab_size), (4, 16, 256));

    let cells = dims.frames * dims.spatial;
    let tokens: Vec<u32> = (0..cells as u32).map(|i| (i * 37) % 256).collect();
    let actions: Vec<f64> = (0..dims.frames * 3).map(|i| i as f64 * 0.1 - 0.5).collect();
    let joints: Vec<f64> = (0..dims.frames * dims.n_joints)
        .map(|i| (i as f64).sin())
        .collect();
    let n_logits = cells * dims.factors * dims.factor_size;
    let (mut video, mut contact, mut jp) = (
        vec![0.0; n_logits],
        vec![0.0; n_logits],
        vec![0.0; dims.frames * dims.n_joints],
    );
    let s = unsafe {
        dk_model_forward(
            m,
            tokens.as_ptr(),
            tokens.len(),
            actions.as_ptr(),
            actions.len(),
            joints.as_ptr(),
            joints.len(),
            video.as_mut_ptr(),
            video.len(),
            contact.as_mut_ptr(),
            contact.len(),
            jp.as_mut_ptr(),
            jp.len(),
        )
    };
    assert_eq!(s, DkStatus::Ok);

    let grid = TokenGrid::new(
        cfg.frames,
        cfg.grid_h,
        cfg.grid_w,
        cfg.t_hist,
        cfg.vocab,
        tokens.clone(),
    )
    .unwrap();
    let cond = Conditioning {
        actions: actions.chunks(3).map(|a| [a[0], a[1], a[2]]).collect(),
        joints: joints.chunks(dims.n_joints).map(<[f64]>::to_vec).collect(),
    };
    let y = forward(&grid, &cond, &state, &cfg).unwrap();
    assert_eq!(video, y.video_logits);
    assert_eq!(contact, y.contact_logits);
    assert_eq!(jp, y.joint_pred);

    let s = unsafe {
        dk_model_forward(
            m,
            tokens.as_ptr(),
            tokens.len() - 1,
            actions.as_ptr(),
            actions.len(),
            joints.as_ptr(),
            joints.len(),
            video.as_mut_ptr(),
            video.len(),
            ptr::null_mut(),
            0,
            ptr::null_mut(),
            0,
        )
    };
    assert_eq!(s, DkStatus::InvalidArgument);
    unsafe { dk_model_free(m) };

    let missing = c(dir.path().join("absent").to_str().unwrap());
    let mut m2 = ptr::null_mut();
    assert_eq!(
        unsafe { dk_model_load(missing.as_ptr(), &mut m2) },
        DkStatus::Io
    );
    assert!(m2.is_null());
}

#[test]
fn toy_model_is_deterministic() {
    let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(dk_model_new_toy(7, &mut a), DkStatus::Ok);
        assert_eq!(dk_model_new_toy(7, &mut b), DkStatus::Ok);
    }
    let mut dims = DkModelDims::default();
    unsafe { dk_model_dims(a, &mut dims) };
    let cells = dims.frames * dims.spatial;
    let n = cells * dims.factors * dims.factor_size;
    let tokens = vec![3u32; cells];
    let actions = vec![0.2; dims.frames * 3];
    let joints = vec![0.0; dims.frames * dims.n_joints];
    let run = |m| {
        let mut v = vec![0.0; n];
        let s = unsafe {
            dk_model_forward(
                m,
                tokens.as_ptr(),
                cells,
                actions.as_ptr(),
                actions.len(),
                joints.as_ptr(),
                joints.len(),
                v.as_mut_ptr(),
                n,
                ptr::null_mut(),
                0,
                ptr::null_mut(),
                0,
            )
        };
        assert_eq!(s, DkStatus::Ok);
        v
    };
    assert_eq!(run(a), run(b));
    unsafe {
        dk_model_free(a);
        dk_model_free(b);
    }
}

#[test]
fn verdict_and_prompt() {
    let raw = c("```json\n{\"collision_likely\":false,\"confidence\":0.3,\"first_collision_frame\":0,\"explanation\":\"clear\"}\n```");
    let mut v = DkVerdict {
        collision_likely: true,
        confidence: -1.0,
        first_collision_frame: 9,
        explanation: ptr::null_mut(),
    };
    assert_eq!(
        unsafe { dk_verdict_parse(raw.as_ptr(), &mut v) },
        DkStatus::Ok
    );
    assert!(!v.collision_likely);
    assert_eq!((v.confidence, v.first_collision_frame), (0.3, 0));
    assert_eq!(
        unsafe { CStr::from_ptr(v.explanation) }.to_str().unwrap(),
        "clear"
    );
    unsafe { dk_string_free(v.explanation) };

    let bad =
        c(r#"{"collision_likely":true,"confidence":2,"first_collision_frame":0,"explanation":""}"#);
    assert_eq!(
        unsafe { dk_verdict_parse(bad.as_ptr(), &mut v) },
        DkStatus::Parse
    );
    assert!(last_error().contains("confidence"));

    let t = unsafe { CStr::from_ptr(dk_prompt_template()) }
        .to_str()
        .unwrap();
    assert_eq!(t, dreamkit::gate::PROMPT_TEMPLATE);
    let ver = unsafe { CStr::from_ptr(dk_version()) }.to_str().unwrap();
    assert_eq!(ver, env!("CARGO_PKG_VERSION"));
}
