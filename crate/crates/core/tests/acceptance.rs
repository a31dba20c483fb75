//! Acceptance suite: one test per criterion, each running the corresponding
//! experiment at its stated parameters and tolerances and printing a
//! pass/fail line (run with `cargo test --test acceptance -- --nocapture`
//! to see every line).

use a2lab::experiment::{run, Delta0Rule, Evaluator, ExperimentSpec, NmaxRule};

fn report(criterion: &str, spec: &ExperimentSpec) {
    let result = run(spec).unwrap_or_else(|e| panic!("{criterion}: experiment error: {e}"));
    let passed = result.all_passed();
    println!("{criterion}: {}", if passed { "PASS" } else { "FAIL" });
    for c in &result.checks {
        println!("    [{}] {} {}", if c.passed { "ok" } else { "FAIL" }, c.name, c.detail);
    }
    if let Some(fit) = &result.fit {
        println!("    fit: slope {:.4} +/- {:.4}", fit.slope, fit.ci95);
    }
    assert!(
        passed,
        "{criterion} failed: {:?}",
        result
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{} ({})", c.name, c.detail))
            .collect::<Vec<_>>()
    );
}

#[test]
fn criterion_01_construction_integrity() {
    let mut spec = ExperimentSpec::named("construct-verify");
    spec.q_grid = vec![4.0, 16.0, 64.0];
    spec.delta0 = Delta0Rule::Fixed(1e-3);
    spec.n_max = NmaxRule::Fixed(64);
    report("criterion 01 (construction integrity)", &spec);
}

#[test]
fn criterion_02_terminal_completion_oracle() {
    let mut spec = ExperimentSpec::named("terminal-oracle");
    spec.seed = 2024;
    report("criterion 02 (terminal completion oracle)", &spec);
}

#[test]
fn criterion_03_evaluator_equivalence() {
    let mut spec = ExperimentSpec::named("evaluator-equivalence");
    spec.q_grid = vec![4.0, 16.0];
    spec.n_max = NmaxRule::Fixed(8);
    report("criterion 03 (evaluator equivalence)", &spec);
}

/// Exponent reproduction. The window [1.40, 1.60] is asserted exactly as
/// specified for the ratio ||Pi f|| / ||f||. On this construction the
/// diagonal part of the quadratic form is sharply of order Q^2 ||f||^2 and
/// still dominates at Q <= 64, so the measured slope of the *total* ratio
/// sits near 1.25 on this grid; the Q^{3/2} law lives in the off-diagonal
/// part, whose slope (reported as a diagnostic check) is ~1.53. See the
/// repository notes for the full analysis.
#[test]
fn criterion_04_exponent_reproduction() {
    let mut spec = ExperimentSpec::named("pi-exponent");
    spec.q_grid = vec![8.0, 16.0, 32.0, 64.0];
    spec.n_max = NmaxRule::Auto; // ceil(16 Q)
    spec.evaluator = Evaluator::Fast;
    report("criterion 04 (exponent reproduction)", &spec);
}

#[test]
fn criterion_05_sign_structure() {
    let mut spec = ExperimentSpec::named("pi-pistar");
    spec.q_grid = vec![16.0, 64.0];
    spec.n_max = NmaxRule::Fixed(8);
    spec.delta0 = Delta0Rule::Fixed(1e-3);
    report("criterion 05 (sign structure)", &spec);
}

#[test]
fn criterion_06_controlled_parts() {
    let mut spec = ExperimentSpec::named("controlled-parts");
    spec.q_grid = vec![8.0, 16.0, 32.0, 64.0];
    report("criterion 06 (controlled parts)", &spec);
}

#[test]
fn criterion_07_kernel_identity() {
    let mut spec = ExperimentSpec::named("kernel-identities");
    spec.tol = 1e-6;
    spec.seed = 7;
    report("criterion 07 (kernel identity)", &spec);
}

#[test]
fn criterion_08_transference_trend() {
    let mut spec = ExperimentSpec::named("transference");
    spec.n_family = vec![3, 5, 7];
    spec.seed = 7;
    report("criterion 08 (transference trend)", &spec);
}

#[test]
fn criterion_09_remodeling_a2_tracking() {
    let mut spec = ExperimentSpec::named("remodel-a2");
    spec.q_grid = vec![16.0];
    spec.n_family = vec![4];
    spec.depth = 14;
    spec.iterations = 8;
    report("criterion 09 (remodeling A2 tracking)", &spec);
}

#[test]
fn criterion_10_degenerate_controls() {
    let mut spec = ExperimentSpec::named("degenerate-q0");
    spec.q_grid = vec![8.0, 16.0, 32.0, 64.0];
    spec.delta0 = Delta0Rule::Fixed(1e-3);
    report("criterion 10 (degenerate controls)", &spec);
}
