use std::path::Path;

use rotctl::export::codegen::count_array_values;
use rotctl::export::parity::{cases_csv, random_observations};
use rotctl::export::*;
use rotctl::rl::{Policy, PolicyConfig};
use rotctl::schema::{ACTION_DIM, OBS_DIM};
use rotctl::Error;

fn policy() -> Policy {
    let cfg = PolicyConfig {
        hidden: vec![16, 12],
        output_init_scale: 1.0,
        ..Default::default()
    };
    let low = [2.0, 1.0, 0.0, 0.0];
    let high = [11.0, 8.0, 3.5, 3.0];
    let mean: Vec<f64> = (0..OBS_DIM).map(|i| 0.5 * i as f64 - 3.0).collect();
    let std: Vec<f64> = (0..OBS_DIM).map(|i| 0.5 + 0.1 * i as f64).collect();
    Policy::new(&cfg, OBS_DIM, &low, &high, 5)
        .unwrap()
        .with_obs_normalizer(&mean, &std)
        .unwrap()
}

#[test]
fn encode_decode_round_trip() {
    let b = flatten_policy(&policy()).unwrap();
    let back = ExportBundle::decode(&b.encode(), Path::new("mem")).unwrap();
    assert_eq!(back, b);
    assert_eq!(b.param_count(), policy().actor.param_count());
}

#[test]
fn payload_corruption_fails_the_checksum() {
    let b = flatten_policy(&policy()).unwrap();
    let mut bytes = b.encode();
    let n = bytes.len();
    bytes[n - 20] ^= 0x40;
    assert!(matches!(ExportBundle::decode(&bytes, Path::new("x")), Err(Error::Checksum { .. })));
}

#[test]
fn truncated_payload_is_reported() {
    let bytes = flatten_policy(&policy()).unwrap().encode();
    let cut = &bytes[..bytes.len() - 12];
    assert!(matches!(ExportBundle::decode(cut, Path::new("x")), Err(Error::Truncated { .. })));
}

#[test]
fn corrupted_output_dim_is_a_schema_error() {
    let bytes = flatten_policy(&policy()).unwrap().encode();
    let text = String::from_utf8_lossy(&bytes).into_owned();
    let pos = text.find("output_dim 4").unwrap();
    let mut bad = bytes.clone();
    bad[pos + "output_dim ".len()] = b'5';
    match ExportBundle::decode(&bad, Path::new("x")) {
        Err(Error::Schema { reason, .. }) => assert!(reason.contains("output"), "{reason}"),
        other => panic!("expected a schema error, got {other:?}"),
    }
}

#[test]
fn wrong_magic_is_rejected() {
    let mut bytes = flatten_policy(&policy()).unwrap().encode();
    bytes[0] = b'X';
    assert!(matches!(ExportBundle::decode(&bytes, Path::new("x")), Err(Error::Schema { .. })));
}

#[test]
fn missing_bundle_is_missing() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(ExportBundle::read(&dir.path().join("none.bundle")), Err(Error::Missing(_))));
}

#[test]
fn interpreter_matches_the_policy() {
    let p = policy();
    let b = flatten_policy(&p).unwrap();
    let r = parity_check(&p, &b, 1000, 3).unwrap();
    assert_eq!(r.n, 1000);
    assert!(r.max_abs_diff <= 1e-5, "{}", r.max_abs_diff);
    assert!(r.max_latency_us <= 20_000.0);
}

#[test]
fn perturbed_weight_breaks_parity() {
    let p = policy();
    let mut b = flatten_policy(&p).unwrap();
    let n = b.weights.len();
    // A bias of the output layer moves every action.
    b.weights[n - 1] += 0.5;
    let r = parity_check(&p, &b, 200, 3).unwrap();
    assert!(r.max_abs_diff > 1e-3, "{}", r.max_abs_diff);
}

#[test]
fn interpreter_rejects_bad_observations() {
    let interp = Interpreter::new(flatten_policy(&policy()).unwrap()).unwrap();
    assert!(interp.interpret(&[0.0; OBS_DIM - 1]).is_err());
}

#[test]
fn c_source_is_deterministic_and_complete() {
    let b = flatten_policy(&policy()).unwrap();
    let a = emit_c_source(&b).unwrap();
    assert_eq!(a, emit_c_source(&b).unwrap());
    assert_eq!(count_array_values(&a), b.param_count() + 2 * OBS_DIM + 2 * ACTION_DIM);
    assert!(a.contains(&format!("void {C_ENTRY}(const float input[ROTCTL_POLICY_INPUT_DIM]")));
    assert!(a.contains(&format!("#define ROTCTL_POLICY_PARAM_COUNT {}", b.param_count())));
    assert!(!a.contains("malloc"));
}

#[test]
fn unsupported_activation_is_refused() {
    let mut b = flatten_policy(&policy()).unwrap();
    b.layers[0].activation = "gelu".into();
    assert!(emit_c_source(&b).is_err());
    assert!(Interpreter::new(b).is_err());
}

#[test]
fn cases_have_twenty_four_values_and_round_trip() {
    let b = flatten_policy(&policy()).unwrap();
    let cases = parity_cases(&b, 50, 9).unwrap();
    let text = cases_csv(&cases);
    for line in text.lines() {
        assert_eq!(line.split(',').count(), 24);
    }
    let back = read_cases(&text, OBS_DIM, ACTION_DIM).unwrap();
    assert_eq!(back, cases);
    let interp = Interpreter::new(b.clone()).unwrap();
    for c in &back {
        let raw: Vec<f64> = c.obs.iter().map(|&v| v as f64).collect();
        assert_eq!(interp.interpret(&raw).unwrap(), c.expected);
    }
}

#[test]
fn malformed_case_line_is_numbered() {
    let b = flatten_policy(&policy()).unwrap();
    let mut text = cases_csv(&parity_cases(&b, 3, 1).unwrap());
    text.push_str("1,2,3\n");
    let e = read_cases(&text, OBS_DIM, ACTION_DIM).unwrap_err().to_string();
    assert!(e.contains("line 4"), "{e}");
}

#[test]
fn observations_stay_within_three_sigma() {
    let b = flatten_policy(&policy()).unwrap();
    for o in random_observations(&b, 100, 2) {
        for (k, v) in o.iter().enumerate() {
            assert!((v - b.obs_mean[k]).abs() <= 3.0 * b.obs_std[k] * 1.0001);
        }
    }
}
