use std::ffi::{CStr, CString};
use std::ptr;

use rtnet::config::{train_from_corpus, RunConfig};
use rtnet::corpus::{generate_synthetic_corpus, SynthConfig};
use rtnet::model::Variant;
use rtnet::vae::fit_latent_spec;
use rtnet_ffi::*;

struct Fixture {
    _dir: tempfile::TempDir,
    ckpt: CString,
    spec: CString,
    acoustic: Vec<f32>,
    ids: Vec<u32>,
    user_end: usize,
    r_start: usize,
}

fn fixture() -> Fixture {
    let mut run = RunConfig::default();
    run.synth = SynthConfig {
        pairs: 20,
        ..SynthConfig::default()
    };
    run.model.variant = Variant::RtnetVae;
    run.model.emb_dim = 4;
    run.model.acoustic_hidden = 4;
    run.model.linguistic_hidden = 4;
    run.model.master_hidden = 4;
    run.model.hz_dim = 5;
    run.model.reduce_dim = 6;
    run.model.latent_dim = 2;
    run.model.inference_hidden = 6;
    run.train.iterations = 3;
    run.train.batch_size = 4;
    let corpus = generate_synthetic_corpus(&run.synth).unwrap();
    let out = train_from_corpus(&corpus, &run).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("m.ckpt");
    out.model.save(&ckpt).unwrap();
    let z: Vec<(String, Vec<f64>)> = out
        .dataset
        .train
        .iter()
        .map(|ex| {
            let mu = out.model.model.latent_mean(&ex.response).unwrap().unwrap();
            (ex.act.clone().unwrap(), mu.iter().map(|&v| v as f64).collect())
        })
        .collect();
    let spec = dir.path().join("latent.tsv");
    std::fs::write(&spec, fit_latent_spec(&z).unwrap().to_text(&[])).unwrap();
    let ex = &out.dataset.test[0];
    Fixture {
        ckpt: CString::new(ckpt.to_str().unwrap()).unwrap(),
        spec: CString::new(spec.to_str().unwrap()).unwrap(),
        acoustic: ex.sample_user.acoustic.data().to_vec(),
        ids: ex.sample_user.ids.clone(),
        user_end: ex.user_end,
        r_start: ex.r_start_bound,
        _dir: dir,
    }
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(rtnet_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

#[test]
fn end_to_end_through_the_c_api() {
    let f = fixture();
    unsafe {
        let mut model = ptr::null_mut();
        assert_eq!(rtnet_model_load(f.ckpt.as_ptr(), &mut model), RtnetStatus::Ok);
        let mut info = RtnetModelInfo::default();
        assert_eq!(rtnet_model_info(model, &mut info), RtnetStatus::Ok);
        assert_eq!(info.acoustic_dim, 6);
        assert_eq!(info.hz_dim, 5);
        assert_eq!(info.latent_dim, 2);
        assert!(info.is_vae);
        assert_eq!(info.frame_ms, 50.0);

        let mut id = 0u32;
        let tok = CString::new("<SIL>").unwrap();
        assert_eq!(rtnet_model_token_id(model, tok.as_ptr(), &mut id), RtnetStatus::Ok);
        assert_eq!(id, 0);

        let mut spec = ptr::null_mut();
        assert_eq!(rtnet_latent_spec_load(f.spec.as_ptr(), &mut spec), RtnetStatus::Ok);
        assert_eq!(rtnet_latent_spec_act_count(spec), 2);
        let mut name = ptr::null();
        assert_eq!(rtnet_latent_spec_act_name(spec, 0, &mut name), RtnetStatus::Ok);
        assert_eq!(CStr::from_ptr(name).to_str().unwrap(), "early");
        assert_eq!(rtnet_latent_spec_act_name(spec, 2, &mut name), RtnetStatus::InvalidArgument);

        let (early, late) = (CString::new("early").unwrap(), CString::new("late").unwrap());
        let mut hz = vec![0f32; 5];
        assert_eq!(
            rtnet_latent_hz(model, spec, early.as_ptr(), late.as_ptr(), 0.5, hz.as_mut_ptr(), hz.len()),
            RtnetStatus::Ok
        );

        let n = f.ids.len();
        let mut probs = vec![-1f64; n];
        assert_eq!(
            rtnet_trigger_probabilities(
                model,
                f.acoustic.as_ptr(),
                f.ids.as_ptr(),
                n,
                hz.as_ptr(),
                hz.len(),
                f.r_start,
                probs.as_mut_ptr()
            ),
            RtnetStatus::Ok
        );
        assert!(probs[..f.r_start].iter().all(|&p| p == 0.0));
        assert!(probs[f.r_start..].iter().all(|&p| p > 0.0 && p < 1.0));

        let sample = |seed| {
            let mut o = RtnetOffset::default();
            let st = rtnet_sample_offset(
                model,
                f.acoustic.as_ptr(),
                f.ids.as_ptr(),
                n,
                f.user_end,
                hz.as_ptr(),
                hz.len(),
                f.r_start,
                seed,
                0,
                &mut o,
            );
            assert_eq!(st, RtnetStatus::Ok);
            o
        };
        let (a, b) = (sample(4), sample(4));
        assert_eq!(a.trigger_frame, b.trigger_frame);
        assert!(a.trigger_frame >= f.r_start && a.trigger_frame < n);
        assert_eq!(a.offset_ms, (a.trigger_frame as f64 - f.user_end as f64) * 50.0);

        rtnet_latent_spec_free(spec);
        rtnet_model_free(model);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let f = fixture();
    unsafe {
        let mut model = ptr::null_mut();
        let missing = CString::new("/nonexistent/model.ckpt").unwrap();
        assert_eq!(rtnet_model_load(missing.as_ptr(), &mut model), RtnetStatus::Io);
        assert!(!last_error().is_empty());
        assert!(model.is_null());
        assert_eq!(rtnet_model_load(ptr::null(), &mut model), RtnetStatus::NullPointer);
        // a latent spec is not a checkpoint
        assert_eq!(rtnet_model_load(f.spec.as_ptr(), &mut model), RtnetStatus::Format);

        assert_eq!(rtnet_model_load(f.ckpt.as_ptr(), &mut model), RtnetStatus::Ok);
        assert_eq!(last_error(), "");
        let mut spec = ptr::null_mut();
        assert_eq!(rtnet_latent_spec_load(f.spec.as_ptr(), &mut spec), RtnetStatus::Ok);
        let unknown = CString::new("nope").unwrap();
        let mut hz = vec![0f32; 5];
        assert_eq!(
            rtnet_latent_hz(model, spec, unknown.as_ptr(), unknown.as_ptr(), 0.0, hz.as_mut_ptr(), 5),
            RtnetStatus::UnknownAct
        );
        let early = CString::new("early").unwrap();
        assert_eq!(
            rtnet_latent_hz(model, spec, early.as_ptr(), early.as_ptr(), 0.0, hz.as_mut_ptr(), 2),
            RtnetStatus::BufferTooSmall
        );
        let n = f.ids.len();
        let mut probs = vec![0f64; n];
        assert_eq!(
            rtnet_trigger_probabilities(model, f.acoustic.as_ptr(), f.ids.as_ptr(), n, hz.as_ptr(), 3, 0, probs.as_mut_ptr()),
            RtnetStatus::InvalidArgument
        );
        let bad_ids = vec![10_000u32; n];
        assert_eq!(
            rtnet_trigger_probabilities(model, f.acoustic.as_ptr(), bad_ids.as_ptr(), n, hz.as_ptr(), 5, 0, probs.as_mut_ptr()),
            RtnetStatus::InvalidArgument
        );
        assert!(last_error().contains("token id"));
        assert_eq!(rtnet_latent_spec_act_count(ptr::null()), 0);
        rtnet_model_free(ptr::null_mut());
        rtnet_latent_spec_free(spec);
        rtnet_model_free(model);
    }
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/rtnet.h")).unwrap();
    for sym in [
        "rtnet_last_error_message",
        "rtnet_model_load",
        "rtnet_model_free",
        "rtnet_model_info",
        "rtnet_latent_spec_load",
        "rtnet_latent_hz",
        "rtnet_trigger_probabilities",
        "rtnet_sample_offset",
        "RTNET_STATUS_OK",
        "typedef struct RtnetModel RtnetModel",
    ] {
        assert!(h.contains(sym), "header lacks {sym}");
    }
}
