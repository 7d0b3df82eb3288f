use pmrl::harness::{gradcheck, GradcheckConfig};

#[test]
fn every_suite_passes_on_random_inputs() {
    let report = gradcheck(&GradcheckConfig {
        seed: 17,
        cases: 40,
        ..GradcheckConfig::default()
    });
    for s in &report.suites {
        assert!(s.passed, "{} max rel err {:.3e}", s.name, s.max_rel_error);
        assert_eq!(s.cases, 40, "{}", s.name);
    }
}

#[test]
fn aligned_init_skips_degenerate_cases() {
    let report = gradcheck(&GradcheckConfig {
        seed: 2,
        cases: 5,
        aligned_init: true,
        ..GradcheckConfig::default()
    });
    let e2e = report
        .suites
        .iter()
        .find(|s| s.name == "encoder-end-to-end")
        .unwrap();
    assert!(e2e.skipped > 0);
    assert!(report.passed());
}
