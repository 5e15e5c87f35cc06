use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use flowlag::interpolant::PathKind;
use flowlag::solver::{integrate, Method, ScaleSchedule, SolverSpec};
use flowlag::training::{train, DatasetSpec, TrainConfig};
use flowlag::VelocityField;
use flowlag_ffi::*;

fn last_error() -> String {
    let p = flowlag_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn tiny_checkpoint(dir: &Path, path: PathKind) -> PathBuf {
    let mut cfg = TrainConfig::new(DatasetSpec::Gaussian { dim: 4, std: 2.0 });
    cfg.path = path;
    cfg.steps = 50;
    cfg.batch_size = 32;
    cfg.network.hidden = vec![8];
    cfg.profile.samples = 1000;
    cfg.profile.points = 3;
    let out = train(&cfg).unwrap();
    let file = dir.join("net.flck");
    std::fs::write(&file, out.checkpoint.to_bytes().unwrap()).unwrap();
    file
}

#[test]
fn oracle_matches_the_library() {
    let x: Vec<f64> = (0..12).map(|i| i as f64 * 0.3 - 1.0).collect();
    let mut out = vec![0.0; 12];
    let st = unsafe {
        flowlag_oracle_velocity(
            FLOWLAG_PATH_GVP,
            4,
            1.5,
            x.as_ptr(),
            3,
            0.3,
            out.as_mut_ptr(),
        )
    };
    assert_eq!(st, FlowlagStatus::Ok);
    assert!(flowlag_last_error().is_null());
    let field = flowlag::oracle::OracleField::new(
        flowlag::oracle::GaussianFlowSpec::new(4, 1.5).unwrap(),
        flowlag::Interpolant::new(PathKind::Gvp),
    );
    assert_eq!(out, field.eval(&x, 0.3).unwrap());
}

#[test]
fn errors_carry_status_and_message() {
    let mut out = 0.0;
    let st = unsafe { flowlag_schedule_calibrate(FLOWLAG_SHAPE_CONSTANT_ONE, 1.0, 1.05, &mut out) };
    assert_eq!(st, FlowlagStatus::Config);
    assert!(last_error().contains("constant-one"));

    let st = unsafe { flowlag_schedule_gamma(FLOWLAG_SHAPE_LINEAR, 1.1, 1.0, 1.5, &mut out) };
    assert_eq!(st, FlowlagStatus::InvalidArgument, "{}", last_error());

    let st = unsafe {
        flowlag_oracle_velocity(FLOWLAG_PATH_LINEAR, 4, 1.0, ptr::null(), 1, 0.5, &mut out)
    };
    assert_eq!(st, FlowlagStatus::NullPointer);
    assert!(last_error().contains("x"));

    // success clears the previous message
    let st = unsafe { flowlag_schedule_gamma(FLOWLAG_SHAPE_LINEAR, 1.1, 1.0, 0.0, &mut out) };
    assert_eq!(st, FlowlagStatus::Ok);
    assert_eq!(out, 1.1);
    assert!(flowlag_last_error().is_null());
}

#[test]
fn net_handle_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tiny_checkpoint(tmp.path(), PathKind::Vp);
    let c_path = CString::new(file.to_str().unwrap()).unwrap();
    let mut net: *mut FlowlagNet = ptr::null_mut();
    assert_eq!(
        unsafe { flowlag_net_load(c_path.as_ptr(), &mut net) },
        FlowlagStatus::Ok
    );
    assert_eq!(unsafe { flowlag_net_dim(net) }, 4);

    let (ckpt, _) = flowlag::experiment::load_checkpoint(&file).unwrap();
    let x: Vec<f64> = (0..8).map(|i| (i as f64).sin()).collect();
    let mut v = vec![0.0; 8];
    assert_eq!(
        unsafe { flowlag_net_forward(net, x.as_ptr(), 2, 0.4, v.as_mut_ptr()) },
        FlowlagStatus::Ok
    );
    assert_eq!(v, ckpt.net.eval(&x, 0.4).unwrap());

    for (code, method) in [
        (FLOWLAG_METHOD_HEUN, Method::Heun),
        (FLOWLAG_METHOD_EULER_MARUYAMA, Method::EulerMaruyama),
    ] {
        let mut got = vec![0.0; 300 * 4];
        let st = unsafe {
            flowlag_sample(
                net,
                code,
                8,
                FLOWLAG_SHAPE_COSINE,
                1.1,
                1.0,
                300,
                5,
                got.as_mut_ptr(),
            )
        };
        assert_eq!(st, FlowlagStatus::Ok, "{}", last_error());
        let spec = SolverSpec::new(method, 8)
            .with_schedule(
                ScaleSchedule::new(flowlag::solver::ScheduleShape::Cosine, 1.1, 1.0).unwrap(),
            )
            .with_checkpoints(vec![1.0])
            .with_path(PathKind::Vp);
        assert_eq!(got, integrate(&ckpt.net, &spec, 300, 5).unwrap().terminal());
    }
    unsafe { flowlag_net_free(net) };
}

#[test]
fn frechet_from_samples_matches_moments() {
    let x: Vec<f64> = (0..400).map(|i| ((i * 37) % 101) as f64 / 50.0).collect();
    let y: Vec<f64> = (0..600)
        .map(|i| ((i * 53) % 97) as f64 / 40.0 - 0.3)
        .collect();
    let mut d = 0.0;
    assert_eq!(
        unsafe { flowlag_frechet_samples(4, x.as_ptr(), 100, y.as_ptr(), 150, &mut d) },
        FlowlagStatus::Ok
    );
    let a = flowlag::diagnostics::MomentStats::from_samples(&x, 4).unwrap();
    let b = flowlag::diagnostics::MomentStats::from_samples(&y, 4).unwrap();
    assert_eq!(d, flowlag::diagnostics::frechet_gaussian(&a, &b).unwrap());
}

/// Compiles a C program against the generated header and the static library.
#[test]
fn c_program_links_and_runs() {
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = crate_dir.join("include/flowlag.h");
    assert!(header.exists(), "header not generated");
    // target/<profile>/deps/<this test> -> target/<profile>
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libflowlag_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());

    let tmp = tempfile::tempdir().unwrap();
    let bin = tmp.path().join("smoke");
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(crate_dir.join("include"))
        .arg(crate_dir.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("a C compiler is available");
    assert!(status.success(), "C build failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok 0.1.0"));
}
