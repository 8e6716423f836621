use enpart_core::bench::{corpus_program, generate_synthetic, SyntheticSpec, Workload};
use enpart_core::dsl::{parse_program, print_program, validate, Rule};
use enpart_core::partitioner::compute_images;
use proptest::prelude::*;

const FIXTURES: [&str; 4] = [
    include_str!("fixtures/listing1.ep"),
    include_str!("fixtures/ocall.ep"),
    include_str!("fixtures/trusted_io.ep"),
    include_str!("fixtures/all_neutral.ep"),
];

fn assert_round_trip(src: &str) {
    let first = parse_program(src).unwrap();
    let printed = print_program(&first);
    let second = parse_program(&printed).unwrap_or_else(|e| panic!("{e}\n{printed}"));
    assert_eq!(first, second);
    assert_eq!(printed, print_program(&second));
}

/// Integer expressions over `a` and `b`, fully parenthesized at random.
fn int_expr() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![(0u32..1000).prop_map(|n| n.to_string()), Just("a".to_string()), Just("b".to_string())];
    leaf.prop_recursive(5, 48, 2, |inner| {
        prop_oneof![
            (inner.clone(), prop::sample::select(vec!["+", "-", "*"]), inner.clone())
                .prop_map(|(l, op, r)| format!("{l} {op} {r}")),
            inner.clone().prop_map(|e| format!("({e})")),
            inner.prop_map(|e| format!("-({e})")),
        ]
    })
}

fn bool_expr() -> impl Strategy<Value = String> {
    (int_expr(), prop::sample::select(vec!["<", "<=", "==", "!=", ">", ">="]), int_expr(), any::<bool>())
        .prop_map(|(l, op, r, negate)| if negate { format!("!({l} {op} {r})") } else { format!("{l} {op} {r}") })
}

fn wrap(stmts: &str) -> String {
    format!("public class Main {{\n    public static void main(String[] args) {{\n        int a = 3;\n        int b = 4;\n{stmts}\n    }}\n}}\n")
}

#[test]
fn fixtures_round_trip() {
    for src in FIXTURES {
        assert_round_trip(src);
    }
}

#[test]
fn explicit_neutral_annotation_is_accepted() {
    let src = "@Neutral\npublic class Box {\n    public int v;\n    public Box() {}\n}\n\
               public class Main {\n    public static void main(String[] args) {\n        Box b = new Box();\n    }\n}\n";
    let program = parse_program(src).unwrap();
    assert!(validate(&program).is_ok());
    assert!(compute_images(&program).unwrap().neutral_classes.contains(&"Box".to_string()));
}

#[test]
fn every_violation_names_its_rule() {
    let src = "@Trusted\npublic class S {\n    public int x;\n    public static int f() { return 1; }\n}\n\
               @Trusted\npublic class Main {\n    public static void main(String[] args) {}\n}\n";
    let report = validate(&parse_program(src).unwrap());
    for rule in [Rule::Encapsulation, Rule::StaticPlacement, Rule::MainPlacement] {
        assert!(report.has(rule), "{rule}: {report:?}");
    }
    for v in &report.violations {
        assert!(v.to_string().starts_with(v.rule.id()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn corpus_round_trips(seed in any::<u64>()) {
        let program = corpus_program(seed);
        let printed = print_program(&program);
        prop_assert_eq!(parse_program(&printed).unwrap(), program);
    }

    #[test]
    fn expressions_round_trip(e in int_expr(), c in bool_expr()) {
        assert_round_trip(&wrap(&format!("        int r = {e};\n        if ({c}) {{ print(r); }}")));
    }

    #[test]
    fn validate_is_pure(seed in any::<u64>()) {
        let program = corpus_program(seed);
        prop_assert_eq!(validate(&program), validate(&program.clone()));
    }

    #[test]
    fn valid_programs_partition(seed in any::<u64>()) {
        let program = corpus_program(seed);
        prop_assert!(validate(&program).is_ok());
        prop_assert!(compute_images(&program).is_ok());
    }

    #[test]
    fn synthetic_programs_validate_and_partition(
        n in 1usize..40,
        pct in 0u32..=100,
        cpu in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let workload = if cpu { Workload::Cpu } else { Workload::Io };
        let spec = SyntheticSpec { n_classes: n, pct_untrusted: pct, workload, io_bytes: 16, seed, ..SyntheticSpec::default() };
        let program = generate_synthetic(&spec);
        prop_assert!(validate(&program).is_ok());
        prop_assert!(compute_images(&program).is_ok());
    }
}
