use dyadkit_nn::gradcheck::check_model;
use dyadkit_nn::{grad_check, Fault, GradCheckConfig, ModelKind, ModelSpec, OpKind};

#[test]
fn corrupted_backward_rule_fails_naming_blocks() {
    let cases = [
        (ModelKind::BiLstm, OpKind::Sigmoid, "bilstm.fwd.wx"),
        (ModelKind::StGcn, OpKind::BatchMatMul, "stgcn.b0.gcn.w"),
        (ModelKind::Cnn, OpKind::MaxPool2d, "cnn.conv1.w"),
        (ModelKind::Transformer, OpKind::LayerNorm, "tf.proj.w"),
        (ModelKind::ConvLstm, OpKind::Conv2d, "convlstm.x.w"),
    ];
    for (kind, op, block) in cases {
        let cfg = GradCheckConfig { fault: Some(Fault { op, scale: 1.5 }), ..GradCheckConfig::default() };
        let report = grad_check(&[ModelSpec::new(kind)], 1e-4, &cfg).unwrap();
        assert!(!report.passed(), "{kind} with faulty {op:?}");
        let failures = report.failures();
        assert!(failures.iter().any(|(k, b)| *k == kind && b == block), "{kind}: {failures:?}");
        // Blocks downstream of every faulty op still pass.
        assert!(!failures.iter().any(|(_, b)| b == "head.fc2.b"), "{failures:?}");
    }
}

#[test]
fn loss_fault_fails_every_block_with_a_gradient() {
    let cfg = GradCheckConfig { fault: Some(Fault { op: OpKind::CrossEntropy, scale: 2.0 }), ..GradCheckConfig::default() };
    let check = check_model(&ModelSpec::new(ModelKind::Transformer), 1e-4, &cfg).unwrap();
    // Key biases shift every attention score in a row equally, so their true
    // gradient is zero and scaling it changes nothing.
    for b in &check.blocks {
        assert_eq!(b.max_rel_error > 0.1, !b.name.ends_with(".k.b"), "{b:?}");
    }
}
