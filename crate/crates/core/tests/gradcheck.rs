use std::collections::BTreeSet;

use tabattn::gradcheck::{check, run, suite, Case, CheckKind, GradcheckOptions, MODEL_TOLERANCE, OP_TOLERANCE};
use tabattn::ndtensor::{Fault, Tensor};
use tabattn::nn::ParamStore;
use tabattn::Error;

const OPS: [&str; 26] = [
    "add",
    "sub",
    "mul",
    "scale",
    "shift",
    "matmul",
    "linear",
    "sum",
    "mean",
    "max",
    "sum_all",
    "mean_all",
    "relu",
    "sigmoid",
    "softmax",
    "reshape",
    "permute",
    "transpose_last",
    "concat",
    "slice",
    "broadcast_to",
    "conv3d",
    "conv2d",
    "batchnorm_train",
    "batchnorm_eval",
    "mse_loss",
];

#[test]
fn default_suite_passes_within_tolerances() {
    let report = run(&GradcheckOptions::default()).unwrap();
    assert!(report.passed(), "{}", report.render());
    assert!(report.worst_error() <= MODEL_TOLERANCE);
    for r in &report.results {
        let expected = if r.kind == CheckKind::Op {
            OP_TOLERANCE
        } else {
            r.tolerance
        };
        assert!(r.worst_error <= expected, "{}: {:.3e}", r.name, r.worst_error);
        assert!(r.coordinates > 0);
    }
    let model: Vec<_> = report.results.iter().filter(|r| r.kind == CheckKind::Model).collect();
    assert_eq!(model.len(), 1);
    assert_eq!(model[0].tolerance, MODEL_TOLERANCE);
}

#[test]
fn every_op_is_listed_exactly_once() {
    let cases = suite(1).unwrap();
    let ops: Vec<&str> = cases
        .iter()
        .filter(|c| c.kind == CheckKind::Op)
        .map(|c| c.name.as_str())
        .collect();
    let unique: BTreeSet<&str> = ops.iter().copied().collect();
    assert_eq!(unique.len(), ops.len());
    assert_eq!(unique, OPS.iter().copied().collect());
    let all: BTreeSet<&str> = cases.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(all.len(), cases.len());
    for layer in ["InteractiveFuse", "DaftFuse", "TabAttention", "Mhsa"] {
        assert!(all.iter().any(|n| n.contains(layer)), "{layer} missing");
    }
}

#[test]
fn op_inputs_are_small_and_bounded() {
    for case in suite(1).unwrap().iter().filter(|c| c.kind == CheckKind::Op) {
        for x in &case.inputs {
            assert!(x.numel() <= 64, "{}", case.name);
            assert!(x.data().iter().all(|v| v.abs() <= 2.0), "{}", case.name);
        }
    }
}

#[test]
fn op_checks_hold_for_other_seeds() {
    for seed in 2..5 {
        let opts = GradcheckOptions {
            seed,
            ..GradcheckOptions::default()
        };
        for case in suite(seed).unwrap().iter().filter(|c| c.kind == CheckKind::Op) {
            let r = check(case, &opts).unwrap();
            assert!(r.passed(), "seed {seed}: {} {:.3e}", r.name, r.worst_error);
        }
    }
}

#[test]
fn injected_sigmoid_fault_is_caught() {
    let opts = GradcheckOptions {
        fault: Some(Fault::SigmoidBackwardSignFlip),
        ..GradcheckOptions::default()
    };
    let report = run(&opts).unwrap();
    assert!(!report.passed());
    let failed: Vec<&str> = report
        .results
        .iter()
        .filter(|r| !r.passed())
        .map(|r| r.name.as_str())
        .collect();
    assert!(failed.contains(&"sigmoid"));
    assert!(report.render().contains("FAIL"));
    assert!(matches!(report.into_result(), Err(Error::GradcheckFailure(_))));
}

#[test]
fn composite_graph_matches_central_differences() {
    let mut x = Tensor::from_fn(&[3, 4], |i| (i as f64 * 0.37).sin() * 1.5).unwrap();
    x.data_mut()[5] = 0.9;
    let w = Tensor::from_fn(&[4, 2], |i| (i as f64 * 0.71).cos()).unwrap();
    let case = Case {
        name: "composite".into(),
        kind: CheckKind::Op,
        tolerance: OP_TOLERANCE,
        inputs: vec![x, w],
        store: ParamStore::new(),
        train: false,
        graph: Box::new(|s, v| {
            let h = s.tape.matmul(v[0], v[1])?;
            let a = s.tape.sigmoid(h);
            let b = s.tape.softmax_lastaxis(h);
            let c = s.tape.mul(a, b)?;
            let m = s.tape.mean(c, &[0], true)?;
            s.tape.sub(c, m)
        }),
    };
    let r = check(&case, &GradcheckOptions::default()).unwrap();
    assert!(r.passed(), "{:.3e}", r.worst_error);
    assert_eq!(r.coordinates, 12 + 8);
}
